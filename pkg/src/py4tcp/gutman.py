"""
    Type-based tests with empirically observed statistics: the classical binary Gutman test, Gutman's
    test with confidence for M classes and Monte Carlo estimates of its error and set-size exponents.
"""
from __future__ import annotations
from typing import Optional, Sequence
from scipy.stats import linregress
from py4tcp.custom_types import (CategoricalDist, EmpiricalType, ExponentEstimate, GutmanConfig, GutmanOutcome,
                                 GutmanRecord, Hypothesis)
from py4tcp.exceptions import DomainError, PreconditionError
from py4tcp.prob_core import gjs_counts, gjs_types, sample_iid, training_length
from py4tcp.rng import replicate_rng
from py4tcp.utils import parallel_map
import logging
import numpy as np


logger = logging.getLogger(__name__)

# trials per random stream; fixed so results do not depend on the worker count
SIMULATION_BLOCK: int = 1000


def gutman_binary(t1: EmpiricalType, t_test: EmpiricalType, alpha_ratio: float, lam: float) -> Hypothesis:
    """
        Classical test: H1 iff GJS(T_1, T_test, alpha) <= lambda.
    """
    if not lam > 0.0:
        raise DomainError(f"lambda has to be positive, got {lam!r}.")
    return Hypothesis.H1 if gjs_types(t1, t_test, alpha_ratio) <= lam else Hypothesis.H2


def gutman_confidence(types: Sequence[EmpiricalType],
                      t_test: EmpiricalType,
                      cfg: GutmanConfig,
                      true_class: int) -> GutmanOutcome:
    """
        Gutman's test with confidence: the set of classes i with GJS(T_i, T_test, alpha) < lambda.

        Parameters
        ----------
        types : Sequence[EmpiricalType]
            One training type per class, each of length round(alpha * n).
        t_test : EmpiricalType
            Type of the test sequence.
        cfg : GutmanConfig
            Ratio, threshold and number of classes.
        true_class : int
            Index of the class that generated the test sequence.

        Returns
        -------
        GutmanOutcome
            Included classes (possibly none or all) and the GJS statistics.
    """
    if len(types) != cfg.m_classes:
        raise PreconditionError(f"{cfg.m_classes} training types expected, got {len(types)}.")
    if not 0 <= true_class < cfg.m_classes:
        raise PreconditionError(f"true_class {true_class} is outside [0, {cfg.m_classes}).")
    values = np.array([gjs_types(t, t_test, cfg.alpha_ratio) for t in types])
    included = tuple(int(i) for i in np.flatnonzero(values < cfg.lam))
    return GutmanOutcome(included=included, gjs_values=values, true_class=true_class)


def log_finite_miscoverage_bound(n: int, training_len: int, alphabet_size: int, lam: float) -> float:
    """
        log of e^{-n lambda} (n + 1)^|X| (N + 1)^|X|, the finite-n bound on the miscoverage probability.
    """
    return -n * lam + alphabet_size * (float(np.log(n + 1)) + float(np.log(training_len + 1)))


def finite_miscoverage_bound(n: int, training_len: int, alphabet_size: int, lam: float) -> float:
    return float(min(1.0, np.exp(log_finite_miscoverage_bound(n, training_len, alphabet_size, lam))))


def _simulate_block(dists: np.ndarray,
                    priors: CategoricalDist,
                    cfg: GutmanConfig,
                    n: int,
                    training_len: int,
                    size: int,
                    rng: np.random.Generator) -> tuple[int, np.ndarray, np.ndarray, Optional[np.ndarray]]:
    m = cfg.m_classes
    truth = sample_iid(priors, size, rng)
    train = np.stack([rng.multinomial(training_len, dists[i], size=size) for i in range(m)], axis=1)
    test = np.zeros((size, dists.shape[1]), dtype=np.int64)
    for i in range(m):
        rows = np.flatnonzero(truth == i)
        test[rows] = rng.multinomial(n, dists[i], size=rows.size)

    values = gjs_counts(train, test[:, None, :])
    included = values < cfg.lam
    covered = included[np.arange(size), truth]
    sizes = np.bincount(included.sum(axis=1), minlength=m + 1)
    class_counts = np.bincount(truth, minlength=m)

    classical = None
    if m == 2:
        decide_first = values[:, 0] <= cfg.lam
        classical = np.array([np.sum((truth == 0) & ~decide_first), np.sum((truth == 1) & decide_first)])
    return int(size - covered.sum()), sizes, class_counts, classical


def simulate_gutman(dists: Sequence[CategoricalDist],
                    priors: CategoricalDist,
                    cfg: GutmanConfig,
                    n_grid: Sequence[int],
                    trials: int,
                    seed: int,
                    workers: int = 1) -> list[GutmanRecord]:
    """
        Monte Carlo of Gutman's test with confidence.

        Every trial draws the true class from the priors, one training sequence of length round(alpha n)
        per class and a test sequence of length n. Only the types of these sequences enter the test, so
        their counts are drawn directly from the multinomial law. Trials are grouped in blocks of
        SIMULATION_BLOCK, each with its own stream derived from (seed, grid index, block index).

        Parameters
        ----------
        dists : Sequence[CategoricalDist]
            Class-conditional source laws on a shared alphabet.
        priors : CategoricalDist
            Class priors.
        cfg : GutmanConfig
            Ratio, threshold and number of classes.
        n_grid : Sequence[int]
            Test lengths.
        trials : int
            Trials per test length.
        seed : int
            Master seed.
        workers : int, optional
            Worker threads.

        Returns
        -------
        list[GutmanRecord]
            One record per n.
    """
    if trials < 1:
        raise PreconditionError(f"trials has to be >= 1, got {trials}.")
    if len(dists) != cfg.m_classes or priors.alphabet_size != cfg.m_classes:
        raise PreconditionError(f"{cfg.m_classes} class laws and priors expected.")
    if len({d.alphabet_size for d in dists}) != 1:
        raise PreconditionError("Class laws have to share an alphabet.")

    table = np.vstack([d.probs for d in dists])
    blocks = -(-trials // SIMULATION_BLOCK)
    tasks = []
    for g, n in enumerate(n_grid):
        big_n = training_length(cfg.alpha_ratio, n)
        for b in range(blocks):
            size = min(SIMULATION_BLOCK, trials - b * SIMULATION_BLOCK)
            tasks.append((g, n, big_n, b, size))

    outcomes = parallel_map(lambda t: _simulate_block(table, priors, cfg, t[1], t[2], t[4],
                                                      replicate_rng(seed, t[0], t[3])),
                            tasks, workers)

    records: list[GutmanRecord] = []
    for g, n in enumerate(n_grid):
        chunk = outcomes[g * blocks:(g + 1) * blocks]
        big_n = training_length(cfg.alpha_ratio, n)
        classical = None
        if cfg.m_classes == 2:
            classical = np.sum([c[3] for c in chunk], axis=0)
        records.append(GutmanRecord(n=n,
                                    training_length=big_n,
                                    trials=trials,
                                    miscoverage=int(sum(c[0] for c in chunk)),
                                    set_size_counts=np.sum([c[1] for c in chunk], axis=0),
                                    class_counts=np.sum([c[2] for c in chunk], axis=0),
                                    log_finite_bound=log_finite_miscoverage_bound(n, big_n, table.shape[1], cfg.lam),
                                    classical_errors=classical))
        logger.info(f"GUTMAN -- simulate(n={n}, N={big_n}, trials={trials}) -- OK")
    return records


def fit_exponent(n_grid: Sequence[int],
                 counts: Sequence[float],
                 trials: int | Sequence[int]) -> ExponentEstimate:
    """
        Fits -(1/n) log frequency by least squares of log(count / trials) on n.

        Zero-count grid points are not dropped: each one says the exponent is at least
        log(trials) / n, and the largest of these is reported as lower_bound.

        Parameters
        ----------
        n_grid : Sequence[int]
            Test lengths.
        counts : Sequence[float]
            Event counts (or expected counts) per grid point.
        trials : int | Sequence[int]
            Trials per grid point.

        Returns
        -------
        ExponentEstimate
            slope and stderr are nan and one_sided is True when fewer than three points carry events.
    """
    n = np.asarray(n_grid, dtype=float)
    counts_arr = np.asarray(counts, dtype=float)
    trials_arr = np.broadcast_to(np.asarray(trials, dtype=float), n.shape)
    if n.shape != counts_arr.shape:
        raise PreconditionError("One count per grid point is needed.")
    if np.any(counts_arr < 0.0) or np.any(trials_arr < 1.0):
        raise PreconditionError("Counts have to be >= 0 and trials >= 1.")

    events = counts_arr > 0.0
    zero_bounds = np.log(trials_arr[~events]) / n[~events]
    lower_bound = float(zero_bounds.max()) if zero_bounds.size else np.nan

    if events.sum() < 3:
        if zero_bounds.size == 0:
            raise PreconditionError("Fewer than three grid points with events and no zero-count points.")
        logger.debug("GUTMAN -- fit_exponent -- ONE-SIDED")
        slope, stderr, intercept, one_sided = np.nan, np.nan, np.nan, True
    else:
        fit = linregress(n[events], np.log(counts_arr[events] / trials_arr[events]))
        slope, stderr, intercept, one_sided = -float(fit.slope), float(fit.stderr), float(fit.intercept), False

    return ExponentEstimate(slope=slope, stderr=stderr, intercept=intercept,
                            n_grid=tuple(int(v) for v in n), counts=tuple(float(c) for c in counts_arr),
                            trials=tuple(int(t) for t in trials_arr), one_sided=one_sided, lower_bound=lower_bound)


def fit_set_size_exponent(records: Sequence[GutmanRecord], size: int) -> ExponentEstimate:
    return fit_exponent([r.n for r in records], [r.set_size_counts[size] for r in records],
                        [r.trials for r in records])


def fit_miscoverage_exponent(records: Sequence[GutmanRecord]) -> ExponentEstimate:
    return fit_exponent([r.n for r in records], [r.miscoverage for r in records], [r.trials for r in records])
