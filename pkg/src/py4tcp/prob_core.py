"""
    Exact finite-alphabet probability primitives.

    Everything works in nats. ``0 log 0`` is 0 and ``D(Q||P)`` is ``inf`` whenever Q puts mass
    outside the support of P. Distributions and types are immutable; all functions are pure.
"""
from __future__ import annotations
from itertools import combinations
from typing import Iterator, Sequence
from scipy.optimize import brentq
from scipy.special import entr, erfc, gammaln, rel_entr
from py4tcp.custom_types import CategoricalDist, ChannelModel, EmpiricalType, LogCondStats, TypeBounds
from py4tcp.exceptions import DimensionError, DomainError, InfiniteEntropyError, PreconditionError
from py4tcp.rng import RngLike, make_rng
import logging
import numpy as np


logger = logging.getLogger(__name__)

Q_INV_BRACKET: tuple[float, float] = (-10.0, 10.0)
Q_INV_XTOL: float = 1e-13


def _check_same_alphabet(first: int, second: int) -> None:
    if first != second:
        raise DimensionError(f"Alphabet mismatch: {first} vs {second} symbols.")


def entropy(p: CategoricalDist) -> float:
    """
        Shannon entropy H(P) in nats, clipped to [0, log |X|].
    """
    value = float(np.sum(entr(p.probs)))
    return min(max(value, 0.0), float(np.log(p.alphabet_size)))


def binary_entropy(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"Binary entropy needs p in [0, 1], got {p!r}.")
    return float(entr(p) + entr(1.0 - p))


def _kl_arrays(q: np.ndarray, p: np.ndarray) -> np.ndarray:
    # summed over the last axis; rel_entr(x > 0, 0) is inf
    return np.maximum(np.sum(rel_entr(q, p), axis=-1), 0.0)


def kl_divergence(q: CategoricalDist, p: CategoricalDist) -> float:
    """
        Kullback-Leibler divergence D(Q||P) in nats.

        Parameters
        ----------
        q : CategoricalDist
            First argument.
        p : CategoricalDist
            Reference distribution.

        Returns
        -------
        float
            Non-negative divergence, ``inf`` when supp(Q) is not contained in supp(P).
    """
    _check_same_alphabet(q.alphabet_size, p.alphabet_size)
    return float(_kl_arrays(q.probs, p.probs))


def _gjs_arrays(p1: np.ndarray, p2: np.ndarray, alpha: np.ndarray | float) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    a = alpha[..., None] if alpha.ndim else alpha
    mix = (a * p1 + p2) / (1.0 + a)
    return alpha * _kl_arrays(p1, mix) + _kl_arrays(p2, mix)


def gjs(p1: CategoricalDist, p2: CategoricalDist, alpha: float) -> float:
    """
        Generalized Jensen-Shannon divergence alpha D(P1||mix) + D(P2||mix) with
        mix = (alpha P1 + P2) / (1 + alpha). Always finite.

        Parameters
        ----------
        p1 : CategoricalDist
            Distribution weighted by alpha (the training side).
        p2 : CategoricalDist
            Distribution of the test side.
        alpha : float
            Positive ratio N / n.

        Returns
        -------
        float
            GJS in nats.
    """
    _check_same_alphabet(p1.alphabet_size, p2.alphabet_size)
    if not alpha > 0.0:
        raise DomainError(f"GJS needs alpha > 0, got {alpha!r}.")
    return float(_gjs_arrays(p1.probs, p2.probs, alpha))


def training_length(alpha: float, n: int) -> int:
    """
        N = round(alpha * n) with banker's rounding (Python's round()).
    """
    if not alpha > 0.0:
        raise DomainError(f"alpha has to be positive, got {alpha!r}.")
    big_n = round(alpha * n)
    if big_n < 1:
        raise PreconditionError(f"round({alpha} * {n}) = {big_n}, training sequences would be empty.")
    return int(big_n)


def gjs_counts(c1: np.ndarray, c_test: np.ndarray) -> np.ndarray:
    """
        GJS of types given raw count arrays (last axis = alphabet), with the realized ratio
        N / n of the count totals. Vectorized over leading axes.

        Parameters
        ----------
        c1 : np.ndarray
            Training counts, summing to N along the last axis.
        c_test : np.ndarray
            Test counts, summing to n along the last axis.

        Returns
        -------
        np.ndarray
            D(T_test||T_merged) + (N/n) D(T_1||T_merged).
    """
    c1 = np.asarray(c1, dtype=float)
    c_test = np.asarray(c_test, dtype=float)
    big_n = c1.sum(axis=-1, keepdims=True)
    n = c_test.sum(axis=-1, keepdims=True)
    merged = (c1 + c_test) / (big_n + n)
    ratio = (big_n / n)[..., 0]
    return _kl_arrays(c_test / n, merged) + ratio * _kl_arrays(c1 / big_n, merged)


def _check_type_pair(t1: EmpiricalType, t_test: EmpiricalType, alpha: float) -> None:
    _check_same_alphabet(t1.alphabet_size, t_test.alphabet_size)
    expected = training_length(alpha, t_test.n)
    if t1.n != expected:
        raise PreconditionError(f"Training type has length {t1.n}, round({alpha} * {t_test.n}) = {expected} needed.")


def gjs_types(t1: EmpiricalType, t_test: EmpiricalType, alpha: float) -> float:
    """
        GJS of two types in the merged-type form D(T_test||T_merged) + a D(T_1||T_merged),
        where a = N / n is the realized ratio of the lengths.
    """
    _check_type_pair(t1, t_test, alpha)
    return float(gjs_counts(t1.counts, t_test.counts))


def gjs_entropy_form(t1: EmpiricalType, t_test: EmpiricalType, alpha: float) -> float:
    """
        Same quantity through (1 + a) H(T_merged) - a H(T_1) - H(T_test).
    """
    _check_type_pair(t1, t_test, alpha)
    ratio = t1.n / t_test.n
    merged = t1.merge(t_test)
    value = ((1.0 + ratio) * float(np.sum(entr(merged.pmf)))
             - ratio * float(np.sum(entr(t1.pmf))) - float(np.sum(entr(t_test.pmf))))
    return max(value, 0.0)


def cond_stats(channel: ChannelModel) -> LogCondStats:
    """
        Moments (H(Y|X), sigma, rho) of log P(Y|X) under prior_x x P(Y|X).

        Parameters
        ----------
        channel : ChannelModel
            Source channel.

        Returns
        -------
        LogCondStats
            Conditional entropy, dispersion and third absolute central moment.
    """
    joint = channel.joint()
    reachable = joint > 0.0
    with np.errstate(divide="ignore"):
        log_p = np.log(channel.matrix)
    if not np.all(np.isfinite(log_p[reachable])):
        raise InfiniteEntropyError("A reachable (x, y) pair has zero conditional probability.")

    weights = joint[reachable]
    values = log_p[reachable]
    h = -float(np.sum(weights * values))
    centered = values + h
    # exactly degenerate when log P(Y|X) is constant on the support
    if np.all(np.abs(centered) <= 1e-12 * max(1.0, abs(h))):
        return LogCondStats(h=max(h, 0.0), sigma=0.0, rho=0.0)
    sigma = float(np.sqrt(np.sum(weights * centered ** 2)))
    rho = float(np.sum(weights * np.abs(centered) ** 3))
    logger.debug(f"PROB_CORE -- cond_stats(h={h:.6g}, sigma={sigma:.6g}, rho={rho:.6g}) -- OK")
    return LogCondStats(h=max(h, 0.0), sigma=sigma, rho=rho)


def gaussian_q(t: float | np.ndarray) -> float | np.ndarray:
    """
        Standard normal tail Q(t) = P(Z > t) through the complementary error function.
    """
    value = 0.5 * erfc(np.asarray(t, dtype=float) / np.sqrt(2.0))
    return float(value) if np.ndim(value) == 0 else value


def gaussian_q_inv(p: float) -> float:
    """
        Inverse of the Gaussian tail by bracketed root finding.

        The bracket starts at [-10, 10] and is widened for tails beyond it. Resolution is limited by
        the floating-point spacing of Q(t) itself: the identity q_inv(q(t)) = t holds to 1e-9 wherever
        the normal density at t is above ~1e-6, and to ~1e-8 at t = -6.

        Parameters
        ----------
        p : float
            Tail probability in (0, 1).

        Returns
        -------
        float
            t with Q(t) = p.
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"Q^-1 is defined on (0, 1), got {p!r}.")
    if p == 0.5:
        return 0.0

    low, high = Q_INV_BRACKET
    while gaussian_q(high) > p and high < 40.0:
        high *= 2.0
    while gaussian_q(low) < p and low > -40.0:
        low *= 2.0
    return float(brentq(lambda t: gaussian_q(t) - p, low, high, xtol=Q_INV_XTOL, rtol=4 * np.finfo(float).eps,
                        maxiter=500))


def empirical_type(seq: Sequence[int] | np.ndarray, alphabet_size: int) -> EmpiricalType:
    """
        Type of a sequence over {0, ..., alphabet_size - 1}.
    """
    seq = np.asarray(seq)
    if seq.size == 0:
        raise PreconditionError("The type of an empty sequence is undefined.")
    if not np.issubdtype(seq.dtype, np.integer):
        if not np.all(np.equal(np.mod(seq, 1), 0)):
            raise DomainError("Sequence symbols have to be integers.")
        seq = seq.astype(np.int64)
    if seq.min() < 0 or seq.max() >= alphabet_size:
        raise DomainError(f"Symbols have to lie in [0, {alphabet_size}), got range [{seq.min()}, {seq.max()}].")
    return EmpiricalType(np.bincount(seq.reshape(-1), minlength=alphabet_size))


def log_num_types(n: int, alphabet_size: int) -> float:
    """
        Exact log of the number of types of length n, log C(n + |X| - 1, |X| - 1).
    """
    return float(gammaln(n + alphabet_size) - gammaln(n + 1) - gammaln(alphabet_size))


def log_type_class_size(counts: np.ndarray) -> float:
    """
        log |T(P)|, the log multinomial coefficient n! / prod counts!.
    """
    counts = np.asarray(counts, dtype=float)
    return float(gammaln(counts.sum() + 1) - np.sum(gammaln(counts + 1)))


def log_type_class_prob(counts: np.ndarray, q: CategoricalDist) -> float:
    """
        log Q^n(T(P)): probability under iid Q that a sequence has the given type.
    """
    counts = np.asarray(counts, dtype=float)
    _check_same_alphabet(counts.size, q.alphabet_size)
    used = counts > 0
    if np.any(q.probs[used] == 0.0):
        return -np.inf
    return log_type_class_size(counts) + float(np.sum(counts[used] * np.log(q.probs[used])))


def enumerate_types(n: int, alphabet_size: int) -> Iterator[np.ndarray]:
    """
        Yields the count vectors of all types of length n (stars and bars).
    """
    for bars in combinations(range(n + alphabet_size - 1), alphabet_size - 1):
        edges = np.array((-1,) + bars + (n + alphabet_size - 1,))
        yield np.diff(edges) - 1


def type_bounds(n: int, alphabet_size: int, p: EmpiricalType, q: CategoricalDist) -> TypeBounds:
    """
        Exact method-of-types quantities of the class T(P) next to their standard bounds.

        Parameters
        ----------
        n : int
            Sequence length; has to equal p.n.
        alphabet_size : int
            |X|.
        p : EmpiricalType
            The type P.
        q : CategoricalDist
            Source law Q of the iid sequence.

        Returns
        -------
        TypeBounds
            Number-of-types, class-size and class-probability values with their bounds, log domain.
    """
    if p.n != n:
        raise PreconditionError(f"The type has length {p.n}, not {n}.")
    _check_same_alphabet(p.alphabet_size, alphabet_size)
    _check_same_alphabet(q.alphabet_size, alphabet_size)

    correction = alphabet_size * float(np.log(n + 1))
    n_h = n * float(np.sum(entr(p.pmf)))
    n_d = n * float(_kl_arrays(p.pmf, q.probs))
    return TypeBounds(n=n,
                      alphabet_size=alphabet_size,
                      log_num_types=log_num_types(n, alphabet_size),
                      log_num_types_upper=correction,
                      log_class_size=log_type_class_size(p.counts),
                      log_class_size_lower=n_h - correction,
                      log_class_size_upper=n_h,
                      log_class_prob=log_type_class_prob(p.counts, q),
                      log_class_prob_lower=-n_d - correction,
                      log_class_prob_upper=-n_d)


def sample_iid(dist: CategoricalDist, n: int, seed: RngLike) -> np.ndarray:
    """
        Draws n iid symbols from dist by inverse-CDF lookup of PCG64 uniforms.

        Parameters
        ----------
        dist : CategoricalDist
            Source law.
        n : int
            Sequence length, n >= 0.
        seed : int | np.random.Generator
            Seed of a fresh PCG64 stream, or an existing generator to draw from.

        Returns
        -------
        np.ndarray
            Integer sequence of length n.
    """
    if n < 0:
        raise PreconditionError(f"Sequence length has to be >= 0, got {n}.")
    rng = make_rng(seed)
    cdf = np.cumsum(dist.probs)
    draws = np.searchsorted(cdf, rng.random(n), side="right")
    # guards a cdf that ends a few ulps below 1
    last = int(np.flatnonzero(dist.probs > 0.0)[-1])
    return np.minimum(draws, last).astype(np.int64)
