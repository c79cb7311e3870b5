"""
    Confidence predictors: the idealized product-threshold predictor (exact counting on symmetric
    channels, exact multiset enumeration or a quantized counter on general channels), split-conformal
    p-values, and the Bonferroni transductive predictor built from them.
"""
from __future__ import annotations
from typing import Optional
from scipy.special import gammaln, logsumexp
from scipy.stats import binom
from py4tcp.custom_types import (BonferroniResult, CalibrationScores, ChannelModel, IdealizedEval, LogCondStats,
                                 ScoreDataset, SymmetricChannelSpec)
from py4tcp.exceptions import DomainError, MemoryBudgetError, PreconditionError
from py4tcp.prob_core import enumerate_types, log_num_types, sample_iid
from py4tcp.rng import replicate_rng
from py4tcp.utils import parallel_map
import logging
import numpy as np


logger = logging.getLogger(__name__)

DEFAULT_GRID_STEP: float = 1e-3
DEFAULT_CELL_BUDGET: int = 50_000_000
DEFAULT_MULTISET_BUDGET: int = 200_000

ChannelSource = SymmetricChannelSpec | ChannelModel | ScoreDataset


def symmetric_cond_stats(sym: SymmetricChannelSpec) -> LogCondStats:
    """
        Closed-form (H, sigma, rho) of the symmetric channel: log P(Y|X) takes the value
        log(1 - eps) with probability 1 - eps and log(eps / (M - 1)) otherwise.
    """
    if sym.epsilon == 0.0:
        return LogCondStats(h=0.0, sigma=0.0, rho=0.0)
    p, q = sym.p_correct, sym.epsilon
    a, b = sym.log_correct, sym.log_wrong
    gap = abs(a - b)
    if gap == 0.0:
        return LogCondStats(h=-a, sigma=0.0, rho=0.0)
    return LogCondStats(h=-(p * a + q * b),
                        sigma=float(np.sqrt(p * q) * gap),
                        rho=float(p * q * (p ** 2 + q ** 2) * gap ** 3))


def _resolve_log_beta(beta: Optional[float], log_beta: Optional[float]) -> float:
    if (beta is None) == (log_beta is None):
        raise PreconditionError("Give exactly one of beta and log_beta.")
    if beta is not None:
        if not 0.0 < beta <= 1.0:
            raise DomainError(f"beta has to lie in (0, 1], got {beta!r}.")
        return float(np.log(beta))
    if not log_beta <= 0.0:
        raise DomainError(f"log_beta has to be <= 0, got {log_beta!r}.")
    return float(log_beta)


def _symmetric_tables(sym: SymmetricChannelSpec, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
        Per number k of correct labels: log-probability of one such label vector, log of the number
        of such vectors, and log-probability that the true vector has k correct labels.
    """
    if int(n) != n or n < 1:
        raise PreconditionError(f"n has to be an integer >= 1, got {n!r}.")
    k = np.arange(n + 1)
    wrong = n - k
    if sym.epsilon == 0.0:
        log_prob = np.where(wrong == 0, 0.0, -np.inf)
    else:
        log_prob = k * sym.log_correct + wrong * sym.log_wrong
    log_count = gammaln(n + 1) - gammaln(k + 1) - gammaln(wrong + 1) + wrong * np.log(sym.m_classes - 1)
    log_cover = binom.logpmf(k, n, sym.p_correct)
    return log_prob, log_count, log_cover


def _masked_logsumexp(values: np.ndarray, mask: np.ndarray) -> float:
    if not np.any(mask):
        return -np.inf
    return float(logsumexp(values[mask]))


def idealized_eval_symmetric(sym: SymmetricChannelSpec,
                             n: int,
                             beta: Optional[float] = None,
                             *,
                             log_beta: Optional[float] = None) -> IdealizedEval:
    """
        Exact size and coverage of {y^n : prod P(y_i|x_i) >= beta} on the symmetric channel.

        The set does not depend on x^n: a label vector with k correct entries has log-probability
        k log(1 - eps) + (n - k) log(eps / (M - 1)), so everything reduces to sums over k.

        Parameters
        ----------
        sym : SymmetricChannelSpec
            The channel.
        n : int
            Test-set size.
        beta : float, optional
            Threshold in (0, 1].
        log_beta : float, optional
            Log of the threshold, for thresholds below the float range (give exactly one of the two).

        Returns
        -------
        IdealizedEval
            Exact log set size and coverage; -inf and 0 for the empty set.
    """
    threshold = _resolve_log_beta(beta, log_beta)
    log_prob, log_count, log_cover = _symmetric_tables(sym, n)
    admissible = log_prob >= threshold
    coverage = float(np.exp(_masked_logsumexp(log_cover, admissible)))
    return IdealizedEval(n=n, log_beta=threshold, log_set_size=_masked_logsumexp(log_count, admissible),
                         coverage=coverage)


def idealized_min_beta_symmetric(sym: SymmetricChannelSpec, n: int, alpha: float) -> IdealizedEval:
    """
        Smallest idealized set with exact coverage >= 1 - alpha: label vectors are added in order of
        decreasing probability until the coverage target is met.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha has to lie in (0, 1), got {alpha!r}.")
    log_prob, _, log_cover = _symmetric_tables(sym, n)
    order = np.argsort(-log_prob, kind="stable")
    reached = np.cumsum(np.exp(log_cover[order])) >= 1.0 - alpha
    # rounding can leave the full cumulative sum a few ulps below 1
    last = int(np.argmax(reached)) if np.any(reached) else n
    return idealized_eval_symmetric(sym, n, log_beta=min(float(log_prob[order[last]]), 0.0))


def expected_set_size_slack(channel: ChannelModel, beta: float) -> float:
    """
        1/beta - E_X|A_X| for A_x = {y : P(y|x) >= beta}; never negative.
    """
    if not 0.0 < beta <= 1.0:
        raise DomainError(f"beta has to lie in (0, 1], got {beta!r}.")
    sizes = (channel.matrix >= beta).sum(axis=1)
    return 1.0 / beta - float(np.sum(channel.prior_x.probs * sizes))


def _channel_atoms(channel: ChannelModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
        Distinct per-sample log-probabilities with their counting weight sum P(x) and
        coverage weight sum P(x) P(y|x) over the pairs carrying them.
    """
    prior = np.broadcast_to(channel.prior_x.probs[:, None], channel.matrix.shape)
    usable = (prior > 0.0) & (channel.matrix > 0.0)
    values, inverse = np.unique(np.log(channel.matrix[usable]), return_inverse=True)
    count_weight = np.bincount(inverse, weights=prior[usable], minlength=values.size)
    cover_weight = np.bincount(inverse, weights=(prior * channel.matrix)[usable], minlength=values.size)
    return values, count_weight, cover_weight


def _exact_multisets(values: np.ndarray,
                     count_weight: np.ndarray,
                     cover_weight: np.ndarray,
                     n: int,
                     log_beta: float) -> tuple[float, float]:
    compositions = np.array(list(enumerate_types(n, values.size)), dtype=float)
    log_multinomial = gammaln(n + 1) - np.sum(gammaln(compositions + 1), axis=1)
    admissible = compositions @ values >= log_beta
    log_size = _masked_logsumexp(log_multinomial + compositions @ np.log(count_weight), admissible)
    log_cover = _masked_logsumexp(log_multinomial + compositions @ np.log(cover_weight), admissible)
    return log_size, float(np.exp(log_cover))


def _quantized_tails(units: np.ndarray,
                     weights: np.ndarray,
                     n: int,
                     grid_step: float,
                     log_beta: float) -> np.ndarray:
    """
        Log of the mass of {sum of n quantized values >= log_beta} for every weight row,
        by n rounds of sparse convolution with per-round rescaling.
    """
    low = int(units.min())
    offsets = units - low
    span = int(offsets.max())
    kernel = np.zeros((weights.shape[0], span + 1))
    for j, offset in enumerate(offsets):
        kernel[:, offset] += weights[:, j]
    used = np.flatnonzero(np.any(kernel > 0.0, axis=0))

    mass = np.ones((weights.shape[0], 1))
    log_scale = np.zeros(weights.shape[0])
    for _ in range(n):
        grown = np.zeros((mass.shape[0], mass.shape[1] + span))
        for offset in used:
            grown[:, offset:offset + mass.shape[1]] += kernel[:, offset:offset + 1] * mass
        scale = grown.max(axis=1)
        mass = grown / scale[:, None]
        log_scale += np.log(scale)

    totals = (np.arange(mass.shape[1]) + n * low) * grid_step
    tail = mass[:, totals >= log_beta].sum(axis=1)
    with np.errstate(divide="ignore"):
        return np.log(tail) + log_scale


def idealized_eval_dp(channel: ChannelModel,
                      n: int,
                      beta: Optional[float] = None,
                      *,
                      log_beta: Optional[float] = None,
                      grid_step: float = DEFAULT_GRID_STEP,
                      cell_budget: int = DEFAULT_CELL_BUDGET,
                      multiset_budget: int = DEFAULT_MULTISET_BUDGET) -> IdealizedEval:
    """
        Expected size E|Gamma(X^n)| and coverage of the idealized predictor on a general channel.

        Only the multiset of per-sample log-probabilities matters. When the number of multisets
        of the K distinct values, C(n + K - 1, K - 1), fits multiset_budget they are enumerated
        exactly. Otherwise log-probabilities are quantized to multiples of grid_step and counted
        by convolution: rounding every value down gives a lower bracket, rounding up an upper
        bracket and rounding to nearest the reported point value.

        Parameters
        ----------
        channel : ChannelModel
            The channel; X^n is drawn iid from its prior.
        n : int
            Test-set size.
        beta, log_beta : float, optional
            Threshold or its log (exactly one).
        grid_step : float, optional
            Quantization step in nats. By default: 1e-3.
        cell_budget : int, optional
            Limit on (value range / grid_step) * n for the quantized counter.
        multiset_budget : int, optional
            Limit on the number of enumerated multisets.

        Returns
        -------
        IdealizedEval
            exact=True for the enumeration path; brackets contain the exact values.
    """
    threshold = _resolve_log_beta(beta, log_beta)
    if not grid_step > 0.0:
        raise DomainError(f"grid_step has to be positive, got {grid_step!r}.")
    if int(n) != n or n < 1:
        raise PreconditionError(f"n has to be an integer >= 1, got {n!r}.")

    values, count_weight, cover_weight = _channel_atoms(channel)
    if log_num_types(n, values.size) <= np.log(multiset_budget):
        log_size, coverage = _exact_multisets(values, count_weight, cover_weight, n, threshold)
        return IdealizedEval(n=n, log_beta=threshold, log_set_size=log_size, coverage=coverage)

    value_range = float(values.max() - values.min())
    if value_range / grid_step * n > cell_budget:
        raise MemoryBudgetError(f"Quantized counter needs {value_range / grid_step * n:.3g} cells, "
                                f"budget is {cell_budget}; raise grid_step or the budget.")
    logger.debug(f"PREDICTORS -- idealized_eval_dp(n={n}, atoms={values.size}) -- QUANTIZED")

    weights = np.vstack([count_weight, cover_weight])
    scaled = values / grid_step
    low = _quantized_tails(np.floor(scaled).astype(np.int64), weights, n, grid_step, threshold)
    high = _quantized_tails(np.ceil(scaled).astype(np.int64), weights, n, grid_step, threshold)
    point = _quantized_tails(np.rint(scaled).astype(np.int64), weights, n, grid_step, threshold)
    return IdealizedEval(n=n, log_beta=threshold, log_set_size=float(point[0]), coverage=float(np.exp(point[1])),
                         exact=False,
                         log_set_size_bracket=(float(low[0]), float(high[0])),
                         coverage_bracket=(float(np.exp(low[1])), min(1.0, float(np.exp(high[1])))))


def scp_pvalues(cal: CalibrationScores, test_scores: np.ndarray) -> np.ndarray:
    """
        Vectorized split-conformal p-values (#{S_i >= s} + 1) / (m + 1).
    """
    test_scores = np.asarray(test_scores, dtype=float)
    at_least = cal.count - np.searchsorted(cal.scores, test_scores, side="left")
    return (at_least + 1) / (cal.count + 1)


def scp_pvalue(cal: CalibrationScores, test_score: float) -> float:
    """
        Split-conformal p-value of one test score.

        Parameters
        ----------
        cal : CalibrationScores
            Calibration scores.
        test_score : float
            Nonconformity score of the candidate.

        Returns
        -------
        float
            p-value in [1/(m+1), 1].
    """
    return float(scp_pvalues(cal, np.asarray(test_score)))


def quantile_threshold(cal: CalibrationScores, level: float, strict: bool = False) -> float:
    """
        Empirical (1 - level)-quantile of {S_1, ..., S_m, +inf}, the k-th smallest element.

        With strict=True, k = ceil((1 - level)(m + 1)), the textbook quantile: s <= q exactly when
        scp_pvalue(s) > level. The default keeps boundary scores, k = floor((1 - level)(m + 1)) + 1,
        so s <= q exactly when scp_pvalue(s) >= level, the rule bonferroni_predict applies. The two
        thresholds differ only when level * (m + 1) is an integer.

        Parameters
        ----------
        cal : CalibrationScores
            Calibration scores.
        level : float
            Significance level in (0, 1].
        strict : bool, optional
            Quantile of the strict p-value rule. By default: False

        Returns
        -------
        float
            The threshold; +inf when k = m + 1 and -inf when no score passes (strict, level = 1).
    """
    if not 0.0 < level <= 1.0:
        raise DomainError(f"level has to lie in (0, 1], got {level!r}.")
    m = cal.count
    position = (1.0 - level) * (m + 1)
    k = int(np.ceil(position)) if strict else int(np.floor(position)) + 1
    if k == 0:
        return -np.inf
    return np.inf if k == m + 1 else float(cal.scores[k - 1])


def quantile_member(cal: CalibrationScores, test_score: float, level: float, strict: bool = False) -> bool:
    return bool(test_score <= quantile_threshold(cal, level, strict))


def bonferroni_predict(cal: CalibrationScores,
                       test_label_scores: np.ndarray,
                       alpha: float,
                       true_labels: Optional[np.ndarray] = None) -> BonferroniResult:
    """
        Per-sample split-conformal sets at level alpha / n; their product has confidence 1 - alpha.

        Parameters
        ----------
        cal : CalibrationScores
            Shared calibration scores.
        test_label_scores : np.ndarray
            n x M nonconformity scores of every candidate label of every test sample.
        alpha : float
            Joint significance level in (0, 1).
        true_labels : np.ndarray, optional
            If given, the coverage event is evaluated.

        Returns
        -------
        BonferroniResult
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha has to lie in (0, 1), got {alpha!r}.")
    scores = np.asarray(test_label_scores, dtype=float)
    if scores.ndim != 2 or scores.shape[0] < 1:
        raise PreconditionError(f"Test scores have to form an n x M matrix with n >= 1, got {scores.shape}.")

    level = alpha / scores.shape[0]
    label_sets = scp_pvalues(cal, scores) >= level
    with np.errstate(divide="ignore"):
        log_joint_size = float(np.sum(np.log(label_sets.sum(axis=1))))

    covered = None
    if true_labels is not None:
        true_labels = np.asarray(true_labels, dtype=np.int64)
        covered = bool(np.all(label_sets[np.arange(scores.shape[0]), true_labels]))
    return BonferroniResult(level=level, label_sets=label_sets, log_joint_size=log_joint_size, covered=covered)


def draw_labels(matrix: np.ndarray, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
        Draws one label per input symbol from the rows of a channel matrix by inverse CDF.
    """
    cdf = np.cumsum(matrix, axis=1)[x]
    labels = (rng.random(x.size)[:, None] >= cdf).sum(axis=1)
    return np.minimum(labels, matrix.shape[1] - 1)


def _bonferroni_trial(source: ChannelSource,
                      m_cal: int,
                      n: int,
                      alpha: float,
                      rng: np.random.Generator) -> tuple[float, bool]:
    if isinstance(source, ScoreDataset):
        rows = rng.permutation(source.n_rows)
        cal_rows, test_rows = rows[:m_cal], rows[m_cal:m_cal + n]
        cal_scores = 1.0 - source.probs[cal_rows, source.labels[cal_rows]]
        test_scores = 1.0 - source.probs[test_rows]
        true_labels = source.labels[test_rows]
    else:
        channel = source.to_channel() if isinstance(source, SymmetricChannelSpec) else source
        x_cal = sample_iid(channel.prior_x, m_cal, rng)
        y_cal = draw_labels(channel.matrix, x_cal, rng)
        x_test = sample_iid(channel.prior_x, n, rng)
        true_labels = draw_labels(channel.matrix, x_test, rng)
        cal_scores = 1.0 - channel.matrix[x_cal, y_cal]
        test_scores = 1.0 - channel.matrix[x_test]

    result = bonferroni_predict(CalibrationScores.from_scores(cal_scores), test_scores, alpha, true_labels)
    return result.log_joint_size, bool(result.covered)


def bonferroni_rate_experiment(source: ChannelSource,
                               m_cal: int,
                               n_grid: tuple[int, ...],
                               alpha: float,
                               trials: int,
                               seed: int,
                               workers: int = 1) -> list[dict[str, float]]:
    """
        Monte Carlo efficiency rate and coverage of the Bonferroni predictor with the
        probability-complement score s(x, y) = 1 - P(y|x).

        Every (grid index, trial) pair has its own random stream, so the rows do not depend on workers.

        Parameters
        ----------
        source : SymmetricChannelSpec | ChannelModel | ScoreDataset
            Synthetic channel, or precomputed model outputs sampled without replacement.
        m_cal : int
            Calibration-set size.
        n_grid : tuple[int, ...]
            Test-set sizes.
        alpha : float
            Joint significance level.
        trials : int
            Replicates per grid point.
        seed : int
            Master seed.
        workers : int, optional
            Worker threads.

        Returns
        -------
        list[dict[str, float]]
            One row per n: gamma_nats = (1/n) log of the mean set size, coverage and its standard error.
    """
    if trials < 1:
        raise PreconditionError(f"trials has to be >= 1, got {trials}.")
    if isinstance(source, ScoreDataset) and m_cal + max(n_grid) > source.n_rows:
        raise PreconditionError(f"The dataset has {source.n_rows} rows, m_cal + max(n) = {m_cal + max(n_grid)} needed.")

    tasks = [(g, n, t) for g, n in enumerate(n_grid) for t in range(trials)]
    outcomes = parallel_map(lambda task: _bonferroni_trial(source, m_cal, task[1], alpha,
                                                           replicate_rng(seed, task[0], task[2])),
                            tasks, workers)

    rows: list[dict[str, float]] = []
    for g, n in enumerate(n_grid):
        chunk = outcomes[g * trials:(g + 1) * trials]
        log_sizes = np.array([o[0] for o in chunk])
        covered = np.array([o[1] for o in chunk], dtype=float)
        coverage = float(covered.mean())
        rows.append({"n": n,
                     "per_sample_level": alpha / n,
                     "gamma_nats": float(logsumexp(log_sizes) - np.log(trials)) / n,
                     "mean_log_size_nats": float(np.mean(log_sizes)) / n,
                     "empty_rate": float(np.mean(np.isneginf(log_sizes))),
                     "coverage": coverage,
                     "coverage_se": float(np.sqrt(coverage * (1.0 - coverage) / trials))})
        logger.info(f"PREDICTORS -- bonferroni(n={n}, trials={trials}) -- OK")
    return rows
