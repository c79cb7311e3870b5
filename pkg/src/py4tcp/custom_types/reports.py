from __future__ import annotations
from dataclasses import dataclass, field
from typing import Mapping, Optional
from py4tcp.custom_types.distributions import CategoricalDist, ChannelModel, _frozen_array
from py4tcp.custom_types.enums import BoundKind, ConstraintDirection
from py4tcp.exceptions import DomainError, PreconditionError
import numpy as np


@dataclass(frozen=True)
class TypeBounds:
    """
        Method-of-types quantities of one type class, all in the natural-log domain.

        Attributes
        ----------
        n, alphabet_size : int
            Sequence length and alphabet size.
        log_num_types, log_num_types_upper : float
            Exact log of the number of types of length n and the (n+1)^|X| bound.
        log_class_size, log_class_size_lower, log_class_size_upper : float
            Exact log|T(P)| and the e^{nH(P)}/(n+1)^|X| and e^{nH(P)} bounds.
        log_class_prob, log_class_prob_lower, log_class_prob_upper : float
            Exact log Q^n(T(P)) and the e^{-nD(P||Q)}/(n+1)^|X| and e^{-nD(P||Q)} bounds.
    """
    n: int
    alphabet_size: int
    log_num_types: float
    log_num_types_upper: float
    log_class_size: float
    log_class_size_lower: float
    log_class_size_upper: float
    log_class_prob: float
    log_class_prob_lower: float
    log_class_prob_upper: float


@dataclass(frozen=True)
class BoundReport:
    """
        Evaluated bound on n*gamma (log expected set size) with its validity flags.

        Attributes
        ----------
        kind : BoundKind
            Which bound produced the value.
        value_nats : float
            Bound on n*gamma. -inf when the bound is vacuous by its own validity condition.
        per_sample_nats : float
            value_nats / n.
        n : int
            Test-set size.
        alpha : float
            Significance level.
        vacuous : bool
            Validity condition failed, or per-sample value reached the full-set rate log M.
        terms : Mapping[str, float]
            Intermediate terms of the evaluation.
        constant_dropped : bool
            The O(1) constant of the bound is reported as 0.
        log_beta : float | None
            Log of the threshold chosen by the achievability construction.
    """
    kind: BoundKind
    value_nats: float
    per_sample_nats: float
    n: int
    alpha: float
    vacuous: bool
    terms: Mapping[str, float] = field(default_factory=dict)
    constant_dropped: bool = False
    log_beta: Optional[float] = None

    @property
    def beta(self) -> Optional[float]:
        return None if self.log_beta is None else float(np.exp(self.log_beta))


@dataclass(frozen=True)
class QRefStats:
    """
        Moments of log(P/Q) for a reference measure Q.

        Attributes
        ----------
        mu : float
            E[log P(Y|X)/Q(Y|X)] in nats.
        sigma : float
            Standard deviation of the log ratio.
        rho : float
            Third absolute central moment of the log ratio.
        description : str
            Label of the reference measure.
    """
    mu: float
    sigma: float
    rho: float
    description: str = "counting"

    def __post_init__(self) -> None:
        if self.sigma < 0.0 or self.rho < 0.0:
            raise DomainError(f"sigma and rho have to be non-negative, got {self.sigma!r}, {self.rho!r}.")


@dataclass(frozen=True)
class SymmetricChannelSpec:
    """
        Noisy-label channel: the clean label is kept with probability 1 - epsilon and replaced by
        each of the M - 1 other labels with probability epsilon / (M - 1).

        Attributes
        ----------
        epsilon : float
            Flip probability in [0, 1).
        m_classes : int
            Number of labels M >= 2.

        Methods
        -------
        to_channel() -> ChannelModel
            Channel with X the clean label, uniform over the M classes.
    """
    epsilon: float
    m_classes: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.epsilon < 1.0:
            raise DomainError(f"epsilon has to lie in [0, 1), got {self.epsilon!r}.")
        if int(self.m_classes) != self.m_classes or self.m_classes < 2:
            raise DomainError(f"m_classes has to be an integer >= 2, got {self.m_classes!r}.")

    @property
    def p_correct(self) -> float:
        return 1.0 - self.epsilon

    @property
    def p_wrong(self) -> float:
        return self.epsilon / (self.m_classes - 1)

    @property
    def log_correct(self) -> float:
        return float(np.log(self.p_correct))

    @property
    def log_wrong(self) -> float:
        return float(np.log(self.p_wrong)) if self.epsilon > 0.0 else -np.inf

    def to_channel(self) -> ChannelModel:
        m = self.m_classes
        matrix = np.full((m, m), self.p_wrong)
        np.fill_diagonal(matrix, self.p_correct)
        return ChannelModel.from_matrix(CategoricalDist.uniform(m), matrix)


@dataclass(frozen=True)
class IdealizedEval:
    """
        Evaluation of the product-threshold predictor {y^n : prod P(y_i|x_i) >= beta}.

        Attributes
        ----------
        n : int
            Test-set size.
        log_beta : float
            Log of the threshold.
        log_set_size : float
            Log of the (expected) set size; -inf for the empty set.
        coverage : float
            Probability that the true label vector is in the set.
        exact : bool
            False when the value comes from the quantized counter.
        log_set_size_bracket, coverage_bracket : tuple[float, float]
            Intervals guaranteed to contain the exact values.
    """
    n: int
    log_beta: float
    log_set_size: float
    coverage: float
    exact: bool = True
    log_set_size_bracket: tuple[float, float] = (np.nan, np.nan)
    coverage_bracket: tuple[float, float] = (np.nan, np.nan)

    def __post_init__(self) -> None:
        # clamp rounding noise of tail sums
        object.__setattr__(self, "coverage", float(min(1.0, max(0.0, self.coverage))))
        if np.isnan(self.log_set_size_bracket[0]):
            object.__setattr__(self, "log_set_size_bracket", (self.log_set_size, self.log_set_size))
        if np.isnan(self.coverage_bracket[0]):
            object.__setattr__(self, "coverage_bracket", (self.coverage, self.coverage))

    @property
    def beta(self) -> float:
        return float(np.exp(self.log_beta))


@dataclass(frozen=True, eq=False)
class CalibrationScores:
    """
        Sorted nonconformity scores of the calibration set.

        Methods
        -------
        from_scores(scores) -> CalibrationScores
            Sorts and validates raw scores.
    """
    scores: np.ndarray

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=float)
        if scores.ndim != 1 or scores.size < 1:
            raise PreconditionError("Calibration needs at least one score.")
        if not np.all(np.isfinite(scores)):
            raise PreconditionError("Calibration scores have to be finite.")
        if np.any(np.diff(scores) < 0):
            raise PreconditionError("Calibration scores have to be sorted ascending, use from_scores().")
        object.__setattr__(self, "scores", _frozen_array(scores))

    @classmethod
    def from_scores(cls, scores) -> CalibrationScores:
        return cls(np.sort(np.asarray(scores, dtype=float).reshape(-1)))

    @property
    def count(self) -> int:
        return int(self.scores.size)


@dataclass(frozen=True, eq=False)
class BonferroniResult:
    """
        Per-sample conformal sets at level alpha / n and their product.

        Attributes
        ----------
        level : float
            Per-sample significance alpha / n.
        label_sets : np.ndarray
            Boolean n x M membership matrix.
        log_joint_size : float
            Sum of log per-sample set sizes; -inf when a set is empty.
        covered : bool | None
            All true labels contained, when true labels were given.
    """
    level: float
    label_sets: np.ndarray
    log_joint_size: float
    covered: Optional[bool] = None

    @property
    def set_sizes(self) -> np.ndarray:
        return self.label_sets.sum(axis=1)

    @property
    def has_empty_set(self) -> bool:
        return bool(np.any(self.set_sizes == 0))


@dataclass(frozen=True)
class GutmanConfig:
    """
        Attributes
        ----------
        alpha_ratio : float
            N / n, training length per class over test length.
        lam : float
            GJS threshold lambda.
        m_classes : int
            Number of hypotheses M.
    """
    alpha_ratio: float
    lam: float
    m_classes: int

    def __post_init__(self) -> None:
        if not self.alpha_ratio > 0.0:
            raise DomainError(f"alpha_ratio has to be positive, got {self.alpha_ratio!r}.")
        if not self.lam > 0.0:
            raise DomainError(f"lambda has to be positive, got {self.lam!r}.")
        if self.m_classes < 2:
            raise DomainError(f"m_classes has to be >= 2, got {self.m_classes!r}.")


@dataclass(frozen=True, eq=False)
class GutmanOutcome:
    included: tuple[int, ...]
    gjs_values: np.ndarray
    true_class: int

    @property
    def covered(self) -> bool:
        return self.true_class in self.included

    @property
    def set_size(self) -> int:
        return len(self.included)


@dataclass(frozen=True, eq=False)
class GutmanRecord:
    """
        Monte Carlo aggregate of Gutman's test with confidence at one test length.

        Attributes
        ----------
        n, training_length : int
            Test length n and per-class training length N.
        trials : int
            Number of simulated tests.
        miscoverage : int
            Number of trials with the true class outside the set.
        set_size_counts : np.ndarray
            Histogram of set sizes 0..M.
        classical_errors : np.ndarray | None
            For M = 2, misdecisions of the classical test per true class.
        class_counts : np.ndarray
            Number of trials per true class.
        log_finite_bound : float
            Log of the finite-n miscoverage bound e^{-n lam}(n+1)^|X|(N+1)^|X|.
    """
    n: int
    training_length: int
    trials: int
    miscoverage: int
    set_size_counts: np.ndarray
    class_counts: np.ndarray
    log_finite_bound: float
    classical_errors: Optional[np.ndarray] = None

    @property
    def p_e(self) -> float:
        return self.miscoverage / self.trials

    @property
    def p_e_se(self) -> float:
        return float(np.sqrt(self.p_e * (1.0 - self.p_e) / self.trials))

    def set_size_frequency(self, size: int) -> float:
        return float(self.set_size_counts[size]) / self.trials


@dataclass(frozen=True)
class ExponentEstimate:
    """
        Decay exponent -(1/n) log frequency fitted over an n-grid.

        Attributes
        ----------
        slope : float
            OLS slope estimate; nan when fewer than three grid points carry events.
        stderr : float
            Standard error of the slope.
        intercept : float
            Fitted log-frequency at n = 0.
        n_grid, counts, trials : tuple
            Raw fit inputs.
        one_sided : bool
            Only zero-count evidence was usable.
        lower_bound : float
            Largest log(trials)/n over zero-count grid points (nan when there are none).
    """
    slope: float
    stderr: float
    intercept: float
    n_grid: tuple[int, ...]
    counts: tuple[float, ...]
    trials: tuple[int, ...]
    one_sided: bool
    lower_bound: float


@dataclass(frozen=True)
class GjsConstraint:
    """
        GJS(Q_first, Q_second, alpha) < lambda or >= lambda on two solver slots.
    """
    first: int
    second: int
    direction: ConstraintDirection = ConstraintDirection.BELOW


@dataclass(frozen=True)
class ExponentProblem:
    """
        Weighted KL minimization with GJS constraints over a product of simplices.

        The program is: minimize sum_j w_j D(Q_j || P_j) subject to every constraint, where
        P_j are the targets (one solver slot per target) and w_j the objective weights.

        Attributes
        ----------
        targets : tuple[CategoricalDist, ...]
            Fixed distributions, one per slot.
        alpha_ratio : float
            Ratio used inside every GJS constraint.
        lam : float
            Threshold lambda of every constraint.
        constraint_spec : tuple[GjsConstraint, ...]
            Constraints on pairs of slots.
        objective_weights : tuple[float, ...]
            KL weight of every slot.
    """
    targets: tuple[CategoricalDist, ...]
    alpha_ratio: float
    lam: float
    constraint_spec: tuple[GjsConstraint, ...]
    objective_weights: tuple[float, ...]

    def __post_init__(self) -> None:
        targets = tuple(self.targets)
        if len(targets) == 0:
            raise PreconditionError("An exponent problem needs at least one target.")
        if len({t.alphabet_size for t in targets}) != 1:
            raise PreconditionError("All targets have to share an alphabet.")
        if not self.lam > 0.0 or not self.alpha_ratio > 0.0:
            raise DomainError(f"lambda and alpha_ratio have to be positive, got {self.lam!r}, {self.alpha_ratio!r}.")
        weights = tuple(float(w) for w in self.objective_weights)
        if len(weights) != len(targets) or any(w < 0.0 for w in weights):
            raise PreconditionError("Every target needs one non-negative objective weight.")
        for c in self.constraint_spec:
            if not (0 <= c.first < len(targets) and 0 <= c.second < len(targets)) or c.first == c.second:
                raise PreconditionError(f"Constraint {c} does not reference two distinct slots.")
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "objective_weights", weights)
        object.__setattr__(self, "constraint_spec", tuple(self.constraint_spec))

    @property
    def alphabet_size(self) -> int:
        return self.targets[0].alphabet_size

    @property
    def convex(self) -> bool:
        return all(c.direction == ConstraintDirection.BELOW for c in self.constraint_spec)


@dataclass(frozen=True)
class ExponentSolution:
    """
        Attributes
        ----------
        value : float
            Minimal objective in nats; inf when no finite objective is feasible.
        argmin : tuple[CategoricalDist, ...]
            Minimizer, one distribution per slot (empty when infeasible).
        iterations : int
            Total solver iterations over all starts.
        certified_gap : float | None
            max(0, value - grid oracle value) when an oracle was run.
        heuristic : bool
            Global optimality is not certified.
        feasible : bool
            A finite-objective feasible point was found.
    """
    value: float
    argmin: tuple[CategoricalDist, ...]
    iterations: int
    certified_gap: Optional[float] = None
    heuristic: bool = False
    feasible: bool = True
