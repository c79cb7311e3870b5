from py4tcp.custom_types import CategoricalDist, ConstraintDirection, ExponentProblem, GjsConstraint
from py4tcp.exceptions import DomainError, MemoryBudgetError, PreconditionError
from py4tcp.exponents import (dispersion_v, empty_set_exponent, f_exponent, f_exponent_grid, multiclass_f,
                              multiclass_problem, problem_grid, second_order_lambda, set_size_exponent_binary,
                              solve_exponent_problem)
from py4tcp.prob_core import gjs
import numpy as np
import pytest


LAM = 0.05


@pytest.fixture
def three_classes() -> list[CategoricalDist]:
    return [CategoricalDist([0.6, 0.4]), CategoricalDist([0.4, 0.6]), CategoricalDist([0.5, 0.5])]


class TestPairExponent:

    def test_zero_when_targets_are_feasible(self, binary_pair):
        p1, p2 = binary_pair
        solution = f_exponent(p1, p2, 1.0, gjs(p1, p2, 1.0) + 1e-3)
        assert solution.value == 0.0
        assert solution.feasible
        assert solution.argmin[0].same_as(p1) and solution.argmin[1].same_as(p2)

    def test_worked_instance_against_grid(self, binary_pair):
        p1, p2 = binary_pair
        solution = f_exponent(p1, p2, 1.0, LAM)
        grid = f_exponent_grid(p1, p2, 1.0, LAM, grid_points=2001)
        assert solution.feasible and not solution.heuristic
        assert solution.value > 0.0
        assert abs(solution.value - grid) <= 1e-3
        assert solution.value <= grid + 1e-7
        assert solution.certified_gap is not None and solution.certified_gap <= 1e-6
        q1, q2 = solution.argmin
        assert gjs(q1, q2, 1.0) <= LAM + 1e-8

    def test_nested_grids(self, binary_pair):
        p1, p2 = binary_pair
        coarse = f_exponent_grid(p1, p2, 1.0, LAM, grid_points=1001)
        fine = f_exponent_grid(p1, p2, 1.0, LAM, grid_points=2001)
        assert fine <= coarse + 1e-12
        with pytest.raises(PreconditionError):
            f_exponent_grid(p1, p2, 1.0, LAM, grid_points=50)

    def test_random_starts_agree(self, binary_pair):
        p1, p2 = binary_pair
        reference = f_exponent(p1, p2, 1.0, LAM, certify=False).value
        problem = ExponentProblem(targets=binary_pair, alpha_ratio=1.0, lam=LAM,
                                  constraint_spec=(GjsConstraint(0, 1),), objective_weights=(1.0, 1.0))
        for seed in range(10):
            solution = solve_exponent_problem(problem, starts=1, seed=seed, include_targets=False, certify=False)
            assert solution.value == pytest.approx(reference, abs=1e-6)

    def test_unequal_lengths(self, binary_pair):
        p1, p2 = binary_pair
        solution = f_exponent(p1, p2, 0.5, 0.03)
        grid = f_exponent_grid(p1, p2, 0.5, 0.03, grid_points=2001)
        assert solution.value == pytest.approx(grid, abs=1e-3)

    def test_set_size_exponent(self, binary_pair):
        p1, p2 = binary_pair
        expected = min(f_exponent(p1, p2, 1.0, LAM).value, f_exponent(p2, p1, 1.0, LAM).value)
        assert set_size_exponent_binary(p1, p2, 1.0, LAM) == expected


class TestMulticlass:

    def test_two_classes_reduce_to_pair(self, binary_pair):
        p1, p2 = binary_pair
        values = []
        for true_class in (0, 1):
            problem = multiclass_problem(binary_pair, 1.0, LAM, subset=(0, 1), true_class=true_class)
            assert len(problem.targets) == 2 and problem.convex
            values.append(multiclass_f(problem, starts=4).value)
        assert values[0] == pytest.approx(f_exponent(p2, p1, 1.0, LAM).value, abs=1e-9)
        assert values[1] == pytest.approx(f_exponent(p1, p2, 1.0, LAM).value, abs=1e-9)
        assert min(values) == pytest.approx(set_size_exponent_binary(p1, p2, 1.0, LAM), abs=1e-9)

    def test_true_class_in_subset(self, three_classes):
        problem = multiclass_problem(three_classes, 1.0, 0.005, subset=(0, 2), true_class=2)
        assert len(problem.targets) == 2
        assert problem.objective_weights == (1.0, 1.0)
        solution = multiclass_f(problem)
        grid, _ = problem_grid(problem, 1001)
        assert solution.value > 0.0
        assert abs(solution.value - grid) <= 1e-3

    def test_true_class_outside_subset(self, three_classes):
        problem = multiclass_problem(three_classes, 1.0, 0.005, subset=(0,), true_class=2)
        assert len(problem.targets) == 3
        assert [c.direction for c in problem.constraint_spec] == [ConstraintDirection.BELOW,
                                                                  ConstraintDirection.AT_LEAST]
        assert not problem.convex
        solution = multiclass_f(problem)
        assert not solution.heuristic
        grid, _ = problem_grid(problem, 201)
        assert solution.value == pytest.approx(grid, abs=1e-2)
        assert solution.value <= grid + 1e-7
        q0, q_train, q_test = solution.argmin
        assert gjs(q0, q_test, 1.0) <= 0.005 + 1e-8
        assert gjs(q_train, q_test, 1.0) >= 0.005 - 1e-8

    def test_larger_alphabet_is_heuristic(self):
        targets = [CategoricalDist([0.5, 0.3, 0.2]), CategoricalDist([0.2, 0.3, 0.5]), CategoricalDist([0.3, 0.4, 0.3])]
        solution = multiclass_f(multiclass_problem(targets, 1.0, 0.01, subset=(0,), true_class=2), starts=3)
        assert solution.heuristic
        assert solution.certified_gap is None
        assert solution.feasible and np.isfinite(solution.value)

    def test_invalid_subset(self, three_classes):
        with pytest.raises(PreconditionError):
            multiclass_problem(three_classes, 1.0, LAM, subset=(), true_class=0)
        with pytest.raises(PreconditionError):
            multiclass_problem(three_classes, 1.0, LAM, subset=(0, 3), true_class=0)
        with pytest.raises(PreconditionError):
            multiclass_problem(three_classes, 1.0, LAM, subset=(0,), true_class=5)


class TestFeasibility:

    def test_disjoint_point_masses_are_infeasible(self):
        p1, p2 = CategoricalDist.point_mass(2, 0), CategoricalDist.point_mass(2, 1)
        solution = f_exponent(p1, p2, 1.0, LAM)
        assert not solution.feasible
        assert solution.value == np.inf
        assert solution.argmin == ()

    def test_point_masses_below_maximal_divergence(self):
        p1, p2 = CategoricalDist.point_mass(2, 0), CategoricalDist.point_mass(2, 1)
        assert f_exponent(p1, p2, 1.0, 2 * np.log(2) + 1e-6).value == 0.0

    def test_grid_limits(self):
        targets = tuple(CategoricalDist([0.5, 0.5]) for _ in range(4))
        problem = ExponentProblem(targets=targets, alpha_ratio=1.0, lam=LAM, constraint_spec=(),
                                  objective_weights=(1.0,) * 4)
        with pytest.raises(MemoryBudgetError):
            problem_grid(problem, 201)
        ternary = ExponentProblem(targets=(CategoricalDist.uniform(3),), alpha_ratio=1.0, lam=LAM,
                                  constraint_spec=(), objective_weights=(1.0,))
        with pytest.raises(DomainError):
            problem_grid(ternary, 101)

    def test_problem_validation(self, binary_pair):
        with pytest.raises(PreconditionError):
            ExponentProblem(targets=binary_pair, alpha_ratio=1.0, lam=LAM,
                            constraint_spec=(GjsConstraint(0, 0),), objective_weights=(1.0, 1.0))
        with pytest.raises(DomainError):
            ExponentProblem(targets=binary_pair, alpha_ratio=1.0, lam=0.0,
                            constraint_spec=(), objective_weights=(1.0, 1.0))


class TestSecondOrder:

    def test_dispersion(self, binary_pair):
        p1, p2 = binary_pair
        assert dispersion_v(p1, p1, 1.0) == pytest.approx(0.0, abs=1e-15)
        assert dispersion_v(p1, p2, 1.0) == pytest.approx(0.32 * np.log(4) ** 2, rel=1e-12)

    def test_lambda(self, binary_pair):
        p1, p2 = binary_pair
        center = gjs(p1, p2, 1.0)
        assert second_order_lambda(p1, p2, 1.0, 100, 0.5) == pytest.approx(center, abs=1e-12)
        values = [second_order_lambda(p1, p2, 1.0, n, 0.1) for n in (100, 400, 1600)]
        assert values[0] < values[1] < values[2] < center
        with pytest.raises(DomainError):
            second_order_lambda(p1, p2, 1.0, 100, 1.0)

    def test_empty_set_exponent(self):
        assert empty_set_exponent(0.05) == 0.05
        with pytest.raises(DomainError):
            empty_set_exponent(0.0)


@pytest.mark.slow
def test_solver_matches_fine_grid_on_random_instances():
    rng = np.random.default_rng(4)
    for _ in range(100):
        a, b = rng.uniform(0.1, 0.9, size=2)
        p1, p2 = CategoricalDist([a, 1.0 - a]), CategoricalDist([b, 1.0 - b])
        lam = float(rng.uniform(0.2, 0.8)) * gjs(p1, p2, 1.0)
        solution = f_exponent(p1, p2, 1.0, lam, certify=False)
        assert abs(solution.value - f_exponent_grid(p1, p2, 1.0, lam, grid_points=2001)) <= 1e-3
