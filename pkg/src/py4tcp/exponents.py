"""
    Large-deviation exponents of Gutman's test with confidence.

    Every exponent is a program of the form

        minimize   sum_j w_j D(Q_j || P_j)
        subject to GJS(Q_a, Q_b, alpha) < lambda   or   GJS(Q_a, Q_b, alpha) >= lambda

    over a product of simplices. Strict constraints are optimized over their closure, which has the
    same infimum for this continuous objective. Programs are solved with SLSQP over softmax logits,
    restricted to the support of each target, from several starts; binary-alphabet programs are
    cross-checked against an exhaustive grid.
"""
from __future__ import annotations
from typing import Optional, Sequence
from scipy.optimize import brentq, minimize
from scipy.special import rel_entr
from py4tcp.custom_types import (CategoricalDist, ConstraintDirection, ExponentProblem, ExponentSolution,
                                 GjsConstraint)
from py4tcp.exceptions import DomainError, MemoryBudgetError, PreconditionError
from py4tcp.prob_core import gaussian_q_inv, gjs
from py4tcp.rng import replicate_rng
import logging
import numpy as np


logger = logging.getLogger(__name__)

FEASIBILITY_TOLERANCE: float = 1e-9
SOLVER_MARGIN: float = 1e-11
LOGIT_BOUND: float = 40.0
GRID_CELL_BUDGET: int = 50_000_000
GRID_CHUNK: int = 1 << 18
CERTIFY_CELLS: int = 2_000_000


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = np.exp(logits - logits.max())
    return shifted / shifted.sum()


def _gjs_value(qa: np.ndarray, qb: np.ndarray, alpha: float) -> float:
    mix = (alpha * qa + qb) / (1.0 + alpha)
    return float(alpha * np.sum(rel_entr(qa, mix)) + np.sum(rel_entr(qb, mix)))


def _gjs_gradients(qa: np.ndarray, qb: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    mix = (alpha * qa + qb) / (1.0 + alpha)
    with np.errstate(divide="ignore", invalid="ignore"):
        grad_a = np.where(qa > 0.0, alpha * np.log(qa / mix), 0.0)
        grad_b = np.where(qb > 0.0, np.log(qb / mix), 0.0)
    return grad_a, grad_b


class _Program(object):
    """
        Logit parametrization of an ExponentProblem: slot j lives on the support of its target,
        with the logit of the last support symbol pinned at 0.
    """

    def __init__(self, problem: ExponentProblem) -> None:
        self.problem: ExponentProblem = problem
        self.alpha: float = problem.alpha_ratio
        self.k: int = problem.alphabet_size
        self.supports: list[np.ndarray] = [np.flatnonzero(t.probs > 0.0) for t in problem.targets]
        self.log_targets: list[np.ndarray] = [np.log(t.probs[s]) for t, s in zip(problem.targets, self.supports)]
        free = [s.size - 1 for s in self.supports]
        self.slices: list[slice] = []
        start = 0
        for size in free:
            self.slices.append(slice(start, start + size))
            start += size
        self.n_vars: int = start

    def distributions(self, theta: np.ndarray) -> list[np.ndarray]:
        out = []
        for support, part in zip(self.supports, self.slices):
            q = np.zeros(self.k)
            q[support] = _softmax(np.append(theta[part], 0.0))
            out.append(q)
        return out

    def logits(self, dists: Sequence[np.ndarray]) -> np.ndarray:
        theta = np.zeros(self.n_vars)
        for q, support, part in zip(dists, self.supports, self.slices):
            restricted = np.maximum(np.asarray(q)[support], 1e-300)
            theta[part] = np.clip(np.log(restricted[:-1]) - np.log(restricted[-1]), -LOGIT_BOUND, LOGIT_BOUND)
        return theta

    def _chain(self, j: int, q: np.ndarray, grad_q: np.ndarray) -> np.ndarray:
        restricted = q[self.supports[j]]
        g = grad_q[self.supports[j]]
        return (restricted * (g - np.dot(restricted, g)))[:-1]

    def objective_value(self, dists: Sequence[np.ndarray]) -> float:
        total = 0.0
        for w, q, t in zip(self.problem.objective_weights, dists, self.problem.targets):
            if w > 0.0:
                total += w * float(np.sum(rel_entr(q, t.probs)))
        return total

    def objective(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        dists = self.distributions(theta)
        grad = np.zeros(self.n_vars)
        for j, (w, q) in enumerate(zip(self.problem.objective_weights, dists)):
            support = self.supports[j]
            g = np.zeros(self.k)
            g[support] = w * (np.log(q[support]) - self.log_targets[j])
            grad[self.slices[j]] = self._chain(j, q, g)
        return self.objective_value(dists), grad

    def constraint_values(self, theta: np.ndarray, margin: float = 0.0) -> np.ndarray:
        dists = self.distributions(theta)
        return np.array([self._signed(c, _gjs_value(dists[c.first], dists[c.second], self.alpha), margin)
                         for c in self.problem.constraint_spec])

    def constraint_jacobian(self, theta: np.ndarray) -> np.ndarray:
        dists = self.distributions(theta)
        jac = np.zeros((len(self.problem.constraint_spec), self.n_vars))
        for row, c in enumerate(self.problem.constraint_spec):
            grad_a, grad_b = _gjs_gradients(dists[c.first], dists[c.second], self.alpha)
            sign = -1.0 if c.direction == ConstraintDirection.BELOW else 1.0
            jac[row, self.slices[c.first]] += sign * self._chain(c.first, dists[c.first], grad_a)
            jac[row, self.slices[c.second]] += sign * self._chain(c.second, dists[c.second], grad_b)
        return jac

    def _signed(self, c: GjsConstraint, value: float, margin: float) -> float:
        # >= 0 means satisfied
        if c.direction == ConstraintDirection.BELOW:
            return self.problem.lam - margin - value
        return value - self.problem.lam - margin

    def feasible(self, dists: Sequence[np.ndarray], tol: float = FEASIBILITY_TOLERANCE) -> bool:
        return all(self._signed(c, _gjs_value(dists[c.first], dists[c.second], self.alpha), 0.0) >= -tol
                   for c in self.problem.constraint_spec)

    def polish(self, dists: list[np.ndarray]) -> list[np.ndarray]:
        """
            Moves the first slot of each violated constraint along a segment until the constraint holds.
        """
        for c in self.problem.constraint_spec:
            qa, qb = dists[c.first], dists[c.second]
            value = _gjs_value(qa, qb, self.alpha)
            if c.direction == ConstraintDirection.BELOW and value > self.problem.lam:
                moved = self._pull_towards(c.first, qa, qb)
            elif c.direction == ConstraintDirection.AT_LEAST and value < self.problem.lam:
                moved = self._push_away(qa, qb)
            else:
                continue
            if moved is not None:
                dists[c.first] = moved
        return dists

    def _pull_towards(self, slot: int, qa: np.ndarray, qb: np.ndarray) -> Optional[np.ndarray]:
        lam, alpha = self.problem.lam, self.alpha
        anchor = np.zeros(self.k)
        anchor[self.supports[slot]] = qb[self.supports[slot]]
        if anchor.sum() <= 0.0:
            return None
        anchor /= anchor.sum()
        if _gjs_value(anchor, qb, alpha) >= lam:
            return None

        def excess(s: float) -> float:
            return _gjs_value((1.0 - s) * qa + s * anchor, qb, alpha) - lam

        s = brentq(excess, 0.0, 1.0, xtol=1e-15)
        while excess(s) > 0.0 and s < 1.0:
            s = min(1.0, s + 1e-12)
        return (1.0 - s) * qa + s * anchor

    def _push_away(self, qa: np.ndarray, qb: np.ndarray) -> Optional[np.ndarray]:
        lam, alpha = self.problem.lam, self.alpha
        step = qa - qb
        shrinking = step < 0.0
        if not np.any(shrinking):
            return None
        s_max = float(np.min(qa[shrinking] / -step[shrinking]))

        def shortfall(s: float) -> float:
            return lam - _gjs_value(np.maximum(qa + s * step, 0.0), qb, alpha)

        if s_max <= 0.0 or shortfall(s_max) > 0.0:
            return None
        s = brentq(shortfall, 0.0, s_max, xtol=1e-15)
        while shortfall(s) > 0.0 and s < s_max:
            s = min(s_max, s + 1e-12)
        moved = np.maximum(qa + s * step, 0.0)
        return moved / moved.sum()


def _random_start(program: _Program, rng: np.random.Generator) -> list[np.ndarray]:
    starts = []
    for support in program.supports:
        q = np.zeros(program.k)
        q[support] = rng.dirichlet(np.ones(support.size))
        starts.append(q)
    return starts


def _solve_from(program: _Program, start: Sequence[np.ndarray], restarts: int = 3) -> tuple[list[np.ndarray], int]:
    theta = program.logits(start)
    iterations = 0
    if program.n_vars == 0:
        return program.distributions(theta), iterations

    constraints = []
    if program.problem.constraint_spec:
        constraints = [{"type": "ineq",
                        "fun": lambda t: program.constraint_values(t, SOLVER_MARGIN),
                        "jac": program.constraint_jacobian}]
    bounds = [(-LOGIT_BOUND, LOGIT_BOUND)] * program.n_vars
    previous = np.inf
    for _ in range(restarts):
        result = minimize(program.objective, theta, jac=True, method="SLSQP", bounds=bounds,
                          constraints=constraints, options={"ftol": 1e-15, "maxiter": 1000})
        iterations += int(result.nit)
        theta = result.x
        value = float(result.fun)
        if abs(previous - value) < 1e-13:
            break
        previous = value
    return program.distributions(theta), iterations


def solve_exponent_problem(problem: ExponentProblem,
                           starts: int = 10,
                           seed: int = 0,
                           include_targets: bool = True,
                           certify: bool = True,
                           certify_grid: int = 201) -> ExponentSolution:
    """
        Solves a weighted-KL program with GJS constraints.

        Parameters
        ----------
        problem : ExponentProblem
            The program.
        starts : int, optional
            Number of starting points. By default: 10.
        seed : int, optional
            Seed of the random starting points.
        include_targets : bool, optional
            Use the targets as the first starting point. By default: True.
        certify : bool, optional
            Run the grid oracle on binary alphabets and report certified_gap. By default: True.
        certify_grid : int, optional
            Grid points per coordinate of the certification grid (reduced to fit the cell budget).

        Returns
        -------
        ExponentSolution
            Best feasible value over all starts; value inf and feasible False when none is feasible.
    """
    program = _Program(problem)
    targets = [t.probs.copy() for t in problem.targets]
    heuristic = not problem.convex and problem.alphabet_size > 2

    if program.feasible(targets, tol=0.0):
        logger.debug("EXPONENTS -- solve -- FEASIBLE AT TARGETS")
        return ExponentSolution(value=0.0, argmin=tuple(problem.targets), iterations=0,
                                certified_gap=0.0, heuristic=False)

    candidates: list[list[np.ndarray]] = [targets] if include_targets else []
    rng = replicate_rng(seed, len(problem.targets), problem.alphabet_size)
    while len(candidates) < max(starts, 1):
        candidates.append(_random_start(program, rng))

    best_value, best_dists, iterations = np.inf, None, 0
    for start in candidates:
        dists, used = _solve_from(program, start)
        iterations += used
        dists = program.polish(dists)
        if not program.feasible(dists):
            continue
        value = program.objective_value(dists)
        if value < best_value:
            best_value, best_dists = value, dists

    if best_dists is None:
        logger.warning("EXPONENTS -- solve -- INFEASIBLE")
        return ExponentSolution(value=np.inf, argmin=(), iterations=iterations, heuristic=heuristic, feasible=False)

    certified_gap = None
    if certify and problem.alphabet_size == 2:
        points = int(min(certify_grid, np.floor(CERTIFY_CELLS ** (1.0 / len(problem.targets)))))
        if points >= 2:
            grid_value, _ = problem_grid(problem, points)
            certified_gap = max(0.0, best_value - grid_value)

    argmin = tuple(CategoricalDist(np.maximum(q, 0.0) / np.maximum(q, 0.0).sum()) for q in best_dists)
    logger.debug(f"EXPONENTS -- solve(value={best_value:.6g}, iterations={iterations}) -- OK")
    return ExponentSolution(value=max(best_value, 0.0), argmin=argmin, iterations=iterations,
                            certified_gap=certified_gap, heuristic=heuristic)


def _binary_kl(q: np.ndarray, p: float) -> np.ndarray:
    return rel_entr(q, p) + rel_entr(1.0 - q, 1.0 - p)


def _binary_gjs(qa: np.ndarray, qb: np.ndarray, alpha: float) -> np.ndarray:
    mix = (alpha * qa + qb) / (1.0 + alpha)
    return alpha * _binary_kl(qa, mix) + _binary_kl(qb, mix)


def problem_grid(problem: ExponentProblem, grid_points: int) -> tuple[float, tuple[float, ...]]:
    """
        Exhaustive minimum of a binary-alphabet program over the grid {0, 1/(g-1), ..., 1} of Q(0) per slot.
        The result upper-bounds the true minimum; nested grids give non-increasing values.

        Returns
        -------
        float
            Grid minimum (inf when no grid point is feasible).
        tuple[float, ...]
            Q_j(0) of the minimizing grid point per slot.
    """
    if problem.alphabet_size != 2:
        raise DomainError("The grid oracle supports binary alphabets only.")
    dims = len(problem.targets)
    cells = grid_points ** dims
    if cells > GRID_CELL_BUDGET:
        raise MemoryBudgetError(f"Grid of {cells} cells exceeds the budget of {GRID_CELL_BUDGET}.")

    axis = np.linspace(0.0, 1.0, grid_points)
    shape = (grid_points,) * dims
    best_value, best_index = np.inf, -1
    for begin in range(0, cells, GRID_CHUNK):
        flat = np.arange(begin, min(cells, begin + GRID_CHUNK))
        coords = [axis[i] for i in np.unravel_index(flat, shape)]
        value = np.zeros(flat.size)
        for w, q, t in zip(problem.objective_weights, coords, problem.targets):
            if w > 0.0:
                value += w * _binary_kl(q, t.probs[0])
        feasible = np.ones(flat.size, dtype=bool)
        for c in problem.constraint_spec:
            g = _binary_gjs(coords[c.first], coords[c.second], problem.alpha_ratio)
            feasible &= (g <= problem.lam) if c.direction == ConstraintDirection.BELOW else (g >= problem.lam)
        value = np.where(feasible, value, np.inf)
        j = int(np.argmin(value))
        if value[j] < best_value:
            best_value, best_index = float(value[j]), int(flat[j])

    if best_index < 0:
        return np.inf, ()
    return best_value, tuple(float(axis[i]) for i in np.unravel_index(best_index, shape))


def _pair_problem(p1: CategoricalDist, p2: CategoricalDist, alpha_ratio: float, lam: float) -> ExponentProblem:
    if p1.alphabet_size != p2.alphabet_size:
        raise PreconditionError("Both laws have to share an alphabet.")
    return ExponentProblem(targets=(p1, p2), alpha_ratio=alpha_ratio, lam=lam,
                           constraint_spec=(GjsConstraint(0, 1, ConstraintDirection.BELOW),),
                           objective_weights=(alpha_ratio, 1.0))


def f_exponent(p1: CategoricalDist,
               p2: CategoricalDist,
               alpha_ratio: float,
               lam: float,
               starts: int = 4,
               seed: int = 0,
               certify: bool = True) -> ExponentSolution:
    """
        F(P1, P2, alpha, lambda) = min D(Q2||P2) + alpha D(Q1||P1) over GJS(Q1, Q2, alpha) <= lambda.

        Parameters
        ----------
        p1, p2 : CategoricalDist
            Training-side and test-side laws.
        alpha_ratio : float
            N / n.
        lam : float
            Threshold lambda.
        starts, seed, certify
            Passed to solve_exponent_problem.

        Returns
        -------
        ExponentSolution
            argmin is (Q1, Q2).
    """
    return solve_exponent_problem(_pair_problem(p1, p2, alpha_ratio, lam), starts=starts, seed=seed,
                                  certify=certify)


def f_exponent_grid(p1: CategoricalDist,
                    p2: CategoricalDist,
                    alpha_ratio: float,
                    lam: float,
                    grid_points: int = 2001) -> float:
    """
        Grid oracle of f_exponent for binary alphabets, grid_points values of Q(0) per distribution.
    """
    if grid_points < 100:
        raise PreconditionError(f"The oracle needs at least 100 grid points, got {grid_points}.")
    value, _ = problem_grid(_pair_problem(p1, p2, alpha_ratio, lam), grid_points)
    return value


def multiclass_problem(targets: Sequence[CategoricalDist],
                       alpha_ratio: float,
                       lam: float,
                       subset: Sequence[int],
                       true_class: int) -> ExponentProblem:
    """
        Program of the exponent of the event that all classes of `subset` are in the prediction set
        while the test sequence comes from `true_class` (l).

        For l in S the slots are the training laws of S without l (weight alpha) and the test law P_l
        (weight 1), with GJS(Q_i, Q_t) < lambda. For l outside S the training law of l joins with
        GJS(Q_l, Q_t) >= lambda. Classes without a constraint stay at their targets and are left out.
    """
    m = len(targets)
    members = sorted(set(int(i) for i in subset))
    if not members or members[0] < 0 or members[-1] >= m:
        raise PreconditionError(f"subset has to be a non-empty subset of [0, {m}), got {subset}.")
    if not 0 <= true_class < m:
        raise PreconditionError(f"true_class has to lie in [0, {m}), got {true_class}.")

    slots: list[CategoricalDist] = [targets[i] for i in members if i != true_class]
    weights: list[float] = [alpha_ratio] * len(slots)
    constraints: list[tuple[int, ConstraintDirection]] = [(j, ConstraintDirection.BELOW) for j in range(len(slots))]
    if true_class not in members:
        constraints.append((len(slots), ConstraintDirection.AT_LEAST))
        slots.append(targets[true_class])
        weights.append(alpha_ratio)
    test_slot = len(slots)
    slots.append(targets[true_class])
    weights.append(1.0)
    return ExponentProblem(targets=tuple(slots), alpha_ratio=alpha_ratio, lam=lam,
                           constraint_spec=tuple(GjsConstraint(j, test_slot, d) for j, d in constraints),
                           objective_weights=tuple(weights))


def multiclass_f(problem: ExponentProblem,
                 starts: int = 10,
                 seed: int = 0,
                 certify: bool = True) -> ExponentSolution:
    return solve_exponent_problem(problem, starts=starts, seed=seed, certify=certify)


def set_size_exponent_binary(p1: CategoricalDist, p2: CategoricalDist, alpha_ratio: float, lam: float) -> float:
    """
        Decay exponent of P(|Gamma| = 2) in the binary case, min(F(P1, P2), F(P2, P1)).
    """
    return min(f_exponent(p1, p2, alpha_ratio, lam).value, f_exponent(p2, p1, alpha_ratio, lam).value)


def empty_set_exponent(lam: float) -> float:
    """
        Decay exponent of P(|Gamma| = 0): lambda.
    """
    if not lam > 0.0:
        raise DomainError(f"lambda has to be positive, got {lam!r}.")
    return lam


def _log_ratio_variance(p: np.ndarray, ratio: np.ndarray) -> float:
    support = p > 0.0
    values = np.log(ratio[support])
    mean = float(np.sum(p[support] * values))
    return float(np.sum(p[support] * (values - mean) ** 2))


def dispersion_v(p1: CategoricalDist, p2: CategoricalDist, alpha_ratio: float) -> float:
    """
        V = alpha Var_P1[log((1+alpha)P1 / (alpha P1 + P2))] + Var_P2[log((1+alpha)P2 / (alpha P1 + P2))].
    """
    if p1.alphabet_size != p2.alphabet_size:
        raise PreconditionError("Both laws have to share an alphabet.")
    if not alpha_ratio > 0.0:
        raise DomainError(f"alpha_ratio has to be positive, got {alpha_ratio!r}.")
    mix = alpha_ratio * p1.probs + p2.probs
    with np.errstate(divide="ignore", invalid="ignore"):
        var1 = _log_ratio_variance(p1.probs, (1.0 + alpha_ratio) * p1.probs / mix)
        var2 = _log_ratio_variance(p2.probs, (1.0 + alpha_ratio) * p2.probs / mix)
    return max(alpha_ratio * var1 + var2, 0.0)


def second_order_lambda(p1: CategoricalDist,
                        p2: CategoricalDist,
                        alpha_ratio: float,
                        n: int,
                        epsilon: float) -> float:
    """
        GJS(P1, P2, alpha) + sqrt(V / n) Phi^-1(epsilon), the O(log n / n) term dropped.
    """
    if not 0.0 < epsilon < 1.0:
        raise DomainError(f"epsilon has to lie in (0, 1), got {epsilon!r}.")
    if n < 1:
        raise PreconditionError(f"n has to be >= 1, got {n}.")
    return gjs(p1, p2, alpha_ratio) + float(np.sqrt(dispersion_v(p1, p2, alpha_ratio) / n)) * -gaussian_q_inv(epsilon)
