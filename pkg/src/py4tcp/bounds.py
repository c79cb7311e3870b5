"""
    Finite-n converse and achievability bounds on n * gamma, the log expected size of a
    transductive prediction set with confidence 1 - alpha over n iid test samples.
"""
from __future__ import annotations
from typing import Optional
from py4tcp.custom_types import BoundKind, BoundReport, ChannelModel, LogCondStats, QRefStats
from py4tcp.exceptions import (DegenerateChannelError, DomainError, InfiniteEntropyError, PreconditionError)
from py4tcp.prob_core import binary_entropy, gaussian_q_inv
import logging
import numpy as np


logger = logging.getLogger(__name__)

ENUMERATION_LIMIT: int = 10 ** 6
COVERAGE_TOLERANCE: float = 1e-12


def _check_n(n: int) -> None:
    if int(n) != n or n < 1:
        raise PreconditionError(f"Test-set size has to be an integer >= 1, got {n!r}.")


def _check_alpha(alpha: float, allow_zero: bool = False) -> None:
    low_ok = alpha >= 0.0 if allow_zero else alpha > 0.0
    if not (low_ok and alpha < 1.0):
        raise DomainError(f"Significance level has to lie in {'[0, 1)' if allow_zero else '(0, 1)'}, got {alpha!r}.")


def _check_dispersion(sigma: float, caller: str) -> None:
    if sigma == 0.0:
        raise DegenerateChannelError(f"{caller} needs sigma > 0; the channel is noiseless, "
                                     f"use trivial_bound() (n * gamma >= 0).")


def _full_set_reached(per_sample: float, m_classes: Optional[int]) -> bool:
    return m_classes is not None and per_sample >= float(np.log(m_classes))


def _meta_converse(center: float,
                   sigma: float,
                   rho: float,
                   n: int,
                   alpha: float,
                   delta: Optional[float],
                   kind: BoundKind,
                   m_classes: Optional[int]) -> BoundReport:
    _check_n(n)
    _check_alpha(alpha, allow_zero=True)
    if delta is None:
        delta = 1.0 / np.sqrt(n)
    if not delta > 0.0:
        raise DomainError(f"delta has to be positive, got {delta!r}.")
    _check_dispersion(sigma, kind)

    sqrt_n = float(np.sqrt(n))
    berry_esseen = rho / (sqrt_n * sigma ** 3)
    argument = alpha + berry_esseen + delta
    terms: dict[str, float] = {"n_center": n * center,
                               "sqrt_n_sigma": sqrt_n * sigma,
                               "berry_esseen": berry_esseen,
                               "log_delta": float(np.log(delta)),
                               "q_inv_argument": argument,
                               "q_inv": np.nan}

    if not 0.0 < argument < 1.0:
        logger.debug(f"BOUNDS -- {kind}(n={n}, alpha={alpha}) -- VACUOUS (argument {argument:.6g})")
        return BoundReport(kind=kind, value_nats=-np.inf, per_sample_nats=-np.inf, n=n, alpha=alpha,
                           vacuous=True, terms=terms)

    q_inv = gaussian_q_inv(argument)
    terms["q_inv"] = q_inv
    value = float(np.log(delta)) + n * center + sqrt_n * sigma * q_inv
    logger.debug(f"BOUNDS -- {kind}(n={n}, alpha={alpha}) -- OK")
    return BoundReport(kind=kind, value_nats=value, per_sample_nats=value / n, n=n, alpha=alpha,
                       vacuous=_full_set_reached(value / n, m_classes), terms=terms)


def converse_exact(stats: LogCondStats,
                   n: int,
                   alpha: float,
                   delta: Optional[float] = None,
                   m_classes: Optional[int] = None) -> BoundReport:
    """
        Finite-n converse: every predictor with confidence 1 - alpha has
        log E|Gamma| >= log delta + nH + sqrt(n) sigma Q^-1(alpha + rho / (sqrt(n) sigma^3) + delta).

        Parameters
        ----------
        stats : LogCondStats
            (H, sigma, rho) of the channel; sigma > 0.
        n : int
            Test-set size.
        alpha : float
            Significance level.
        delta : float, optional
            Slack of the converse, 1/sqrt(n) when None.
        m_classes : int, optional
            If given, per-sample values at or above log M are flagged vacuous.

        Returns
        -------
        BoundReport
            value_nats is -inf and vacuous is True when the Q^-1 argument leaves (0, 1).
    """
    return _meta_converse(stats.h, stats.sigma, stats.rho, n, alpha, delta, BoundKind.CONVERSE_EXACT, m_classes)


def converse_approx(stats: LogCondStats, n: int, alpha: float, m_classes: Optional[int] = None) -> BoundReport:
    """
        Normal approximation nH + sqrt(n) sigma Q^-1(alpha) - (1/2) log n of the converse.
        The O(1) constant is reported as 0 and the report carries constant_dropped=True.
    """
    _check_n(n)
    _check_alpha(alpha)
    _check_dispersion(stats.sigma, BoundKind.CONVERSE_APPROX)

    sqrt_n = float(np.sqrt(n))
    terms = {"n_h": n * stats.h,
             "sqrt_n_sigma_q_inv": sqrt_n * stats.sigma * gaussian_q_inv(alpha),
             "half_log_n": 0.5 * float(np.log(n)),
             "constant": 0.0}
    value = terms["n_h"] + terms["sqrt_n_sigma_q_inv"] - terms["half_log_n"]
    return BoundReport(kind=BoundKind.CONVERSE_APPROX, value_nats=value, per_sample_nats=value / n, n=n,
                       alpha=alpha, vacuous=_full_set_reached(value / n, m_classes), terms=terms,
                       constant_dropped=True)


def achievability_min_n(stats: LogCondStats, alpha: float) -> int:
    """
        Smallest n with n > (rho / (alpha sigma^3))^2.
    """
    _check_alpha(alpha)
    _check_dispersion(stats.sigma, BoundKind.ACHIEVABILITY)
    return int(np.floor((stats.berry_esseen_ratio / alpha) ** 2)) + 1


def achievability(stats: LogCondStats, n: int, alpha: float, m_classes: Optional[int] = None) -> BoundReport:
    """
        Threshold predictor {y^n : P(y^n|x^n) >= beta} with
        log beta = -nH - Q^-1(alpha - rho / (sqrt(n) sigma^3)) sigma sqrt(n).
        It has confidence 1 - alpha and E|Gamma| <= 1 / beta, so -log beta bounds n * gamma from above.

        Parameters
        ----------
        stats : LogCondStats
            (H, sigma, rho) of the channel; sigma > 0.
        n : int
            Test-set size, n > (rho / (alpha sigma^3))^2.
        alpha : float
            Significance level.
        m_classes : int, optional
            If given, per-sample values at or above log M are flagged vacuous.

        Returns
        -------
        BoundReport
            value_nats = -log beta, with log_beta set.
    """
    _check_n(n)
    _check_alpha(alpha)
    _check_dispersion(stats.sigma, BoundKind.ACHIEVABILITY)

    sqrt_n = float(np.sqrt(n))
    berry_esseen = stats.rho / (sqrt_n * stats.sigma ** 3)
    argument = alpha - berry_esseen
    if not 0.0 < argument < 1.0:
        n_min = achievability_min_n(stats, alpha)
        raise PreconditionError(f"Achievability needs n > (rho / (alpha sigma^3))^2 = "
                                f"{(stats.berry_esseen_ratio / alpha) ** 2:.6g}, i.e. n >= {n_min}; got n={n}.")

    terms = {"n_h": n * stats.h,
             "sqrt_n_sigma_q_inv": sqrt_n * stats.sigma * gaussian_q_inv(argument),
             "berry_esseen": berry_esseen,
             "q_inv_argument": argument}
    value = terms["n_h"] + terms["sqrt_n_sigma_q_inv"]
    logger.debug(f"BOUNDS -- achievability(n={n}, alpha={alpha}) -- OK")
    return BoundReport(kind=BoundKind.ACHIEVABILITY, value_nats=value, per_sample_nats=value / n, n=n,
                       alpha=alpha, vacuous=_full_set_reached(value / n, m_classes), terms=terms, log_beta=-value)


def asymptotic_rate(stats: LogCondStats) -> float:
    """
        H(Y|X): efficiency rates below it make the confidence vanish as n grows.
    """
    return stats.h


def trivial_bound(n: int, alpha: float) -> BoundReport:
    """
        n * gamma >= 0, the only statement left for noiseless channels.
    """
    _check_n(n)
    return BoundReport(kind=BoundKind.TRIVIAL, value_nats=0.0, per_sample_nats=0.0, n=n, alpha=alpha,
                       vacuous=False, terms={})


def fano_bound(stats: LogCondStats, n: int, alpha: float, m_classes: int) -> BoundReport:
    """
        Weak converse from Fano's inequality, n * gamma >= nH - h_b(alpha) - n alpha log M.
        Valid for alpha <= 1/2; larger alpha uses h_b(1/2) = log 2.
    """
    _check_n(n)
    _check_alpha(alpha)
    log_m = float(np.log(m_classes))
    terms = {"n_h": n * stats.h,
             "binary_entropy": binary_entropy(min(alpha, 0.5)),
             "n_alpha_log_m": n * alpha * log_m}
    value = terms["n_h"] - terms["binary_entropy"] - terms["n_alpha_log_m"]
    return BoundReport(kind=BoundKind.FANO, value_nats=value, per_sample_nats=value / n, n=n, alpha=alpha,
                       vacuous=value / n >= log_m, terms=terms)


def counting_q_stats(stats: LogCondStats) -> QRefStats:
    """
        Reference measure Q = 1 on every label: log P/Q = log P, mu = -H.
    """
    return QRefStats(mu=-stats.h, sigma=stats.sigma, rho=stats.rho, description="counting")


def q_ref_stats(channel: ChannelModel, q_matrix: np.ndarray, description: str = "custom") -> QRefStats:
    """
        (mu, sigma, rho) of log P(Y|X)/Q(Y|X) under prior_x x P(Y|X).

        Parameters
        ----------
        channel : ChannelModel
            Source channel.
        q_matrix : np.ndarray
            Non-negative |X| x M reference measure; does not need to be normalized.
        description : str, optional
            Label stored in the result.

        Returns
        -------
        QRefStats
    """
    q_matrix = np.asarray(q_matrix, dtype=float)
    if q_matrix.shape != channel.matrix.shape:
        raise DomainError(f"Reference measure has shape {q_matrix.shape}, {channel.matrix.shape} expected.")
    joint = channel.joint()
    reachable = joint > 0.0
    if np.any(q_matrix[reachable] <= 0.0):
        raise InfiniteEntropyError("The reference measure vanishes on a reachable (x, y) pair.")

    weights = joint[reachable]
    log_ratio = np.log(channel.matrix[reachable]) - np.log(q_matrix[reachable])
    mu = float(np.sum(weights * log_ratio))
    centered = log_ratio - mu
    sigma = float(np.sqrt(np.sum(weights * centered ** 2)))
    rho = float(np.sum(weights * np.abs(centered) ** 3))
    return QRefStats(mu=mu, sigma=sigma, rho=rho, description=description)


def general_q_bound(qstats: QRefStats,
                    n: int,
                    alpha: float,
                    delta: Optional[float] = None) -> BoundReport:
    """
        Converse on n * gamma^(Q) = log E[Q(Gamma|X^n)] for an arbitrary reference measure Q:
        log delta - n mu + sqrt(n) sigma Q^-1(alpha + rho / (sqrt(n) sigma^3) + delta), mu = E log P/Q.
        With the counting measure (mu = -H) this is converse_exact.
    """
    return _meta_converse(-qstats.mu, qstats.sigma, qstats.rho, n, alpha, delta, BoundKind.GENERAL_Q, None)


def general_q_asymptotic_rate(qstats: QRefStats) -> float:
    """
        Limit -mu of the per-sample general-Q bound; -E[D(P(.|X)||Q(.|X))] for a probability Q.
    """
    return -qstats.mu


def iid_joint(channel: ChannelModel, n: int) -> np.ndarray:
    """
        Joint PMF of (X^n, Y^n) as an |X|^n x M^n matrix, sequences in lexicographic order.
    """
    _check_n(n)
    cells = (channel.x_size * channel.m_classes) ** n
    if cells > ENUMERATION_LIMIT:
        raise PreconditionError(f"Enumerating {cells} (x^n, y^n) pairs exceeds the limit of {ENUMERATION_LIMIT}.")
    single = channel.joint()
    joint = single
    for _ in range(n - 1):
        joint = np.kron(joint, single)
    return joint


def _conditional(joint: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p_x = joint.sum(axis=1)
    cond = np.divide(joint, p_x[:, None], out=np.zeros_like(joint), where=p_x[:, None] > 0.0)
    return p_x, cond


def threshold_predictor(joint: np.ndarray, threshold: float) -> np.ndarray:
    """
        Membership matrix of {y : P(y|x) >= threshold} for every x with positive probability.
    """
    p_x, cond = _conditional(np.asarray(joint, dtype=float))
    return (cond >= threshold) & (p_x[:, None] > 0.0)


def predictor_error(joint: np.ndarray, predictor: np.ndarray) -> float:
    return float(np.sum(np.asarray(joint)[~np.asarray(predictor, dtype=bool)]))


def verdu_han_slack(joint: np.ndarray, predictor: np.ndarray, alpha: float, beta: float) -> float:
    """
        alpha + beta E|Gamma| - P(P(Y^n|X^n) <= beta) by full enumeration. Non-negative for every
        predictor with error <= alpha.

        Parameters
        ----------
        joint : np.ndarray
            Joint PMF over (x-sequence, y-sequence) pairs, at most 1e6 cells.
        predictor : np.ndarray
            Boolean membership matrix of the same shape: predictor[a, b] means label sequence b is
            in the set predicted for input sequence a.
        alpha : float
            Significance level; the predictor error is checked against it.
        beta : float
            Threshold in (0, 1].

        Returns
        -------
        float
            The slack.
    """
    joint = np.asarray(joint, dtype=float)
    predictor = np.asarray(predictor, dtype=bool)
    if joint.ndim != 2 or joint.size > ENUMERATION_LIMIT:
        raise PreconditionError(f"Joint has to be a matrix with at most {ENUMERATION_LIMIT} cells, got {joint.shape}.")
    if predictor.shape != joint.shape:
        raise PreconditionError(f"Predictor shape {predictor.shape} does not match the joint {joint.shape}.")
    if np.any(joint < 0.0) or abs(float(joint.sum()) - 1.0) > 1e-9:
        raise PreconditionError("Joint has to be a probability matrix.")
    if not 0.0 < beta <= 1.0:
        raise DomainError(f"beta has to lie in (0, 1], got {beta!r}.")

    error = predictor_error(joint, predictor)
    if error > alpha + COVERAGE_TOLERANCE:
        raise PreconditionError(f"Predictor error {error:.6g} exceeds alpha = {alpha:.6g}.")

    p_x, cond = _conditional(joint)
    expected_size = float(np.sum(p_x * predictor.sum(axis=1)))
    tail = float(np.sum(joint[(joint > 0.0) & (cond <= beta)]))
    return alpha + beta * expected_size - tail
