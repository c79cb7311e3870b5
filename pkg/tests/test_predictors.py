from py4tcp.bounds import iid_joint
from py4tcp.custom_types import CalibrationScores, ChannelModel, ScoreDataset, SymmetricChannelSpec
from py4tcp.exceptions import DomainError, MemoryBudgetError, PreconditionError
from py4tcp.predictors import (bonferroni_predict, bonferroni_rate_experiment, expected_set_size_slack,
                               idealized_eval_dp, idealized_eval_symmetric, idealized_min_beta_symmetric,
                               quantile_member, quantile_threshold, scp_pvalue, scp_pvalues, symmetric_cond_stats)
from py4tcp.prob_core import cond_stats
import numpy as np
import pytest


def enumerated_predictor(channel: ChannelModel, n: int, log_beta: float) -> tuple[float, float]:
    """
        log E|Gamma| and coverage of {y^n : P(y^n|x^n) >= beta} by listing every (x^n, y^n).
    """
    joint = iid_joint(channel, n)
    p_x = joint.sum(axis=1)
    with np.errstate(divide="ignore"):
        members = np.log(joint / p_x[:, None]) >= log_beta
        log_size = float(np.log(np.sum(p_x * members.sum(axis=1))))
    return log_size, float(joint[members].sum())


def midpoint_thresholds(channel: ChannelModel, n: int) -> np.ndarray:
    """
        Log thresholds between consecutive distinct values of log P(y^n|x^n), plus one on either side.
    """
    joint = iid_joint(channel, n)
    cond = joint / joint.sum(axis=1, keepdims=True)
    atoms = np.unique(np.round(np.log(cond[cond > 0.0]), 9))
    gaps = np.diff(atoms) > 1e-6
    middles = 0.5 * (atoms[:-1] + atoms[1:])[gaps]
    return np.concatenate([[atoms[0] - 1.0], middles, [min(atoms[-1] + 1.0, 0.0)]])


class TestSymmetricStats:

    def test_matches_generic_moments(self, noisy_labels):
        closed = symmetric_cond_stats(noisy_labels)
        generic = cond_stats(noisy_labels.to_channel())
        assert closed.h == pytest.approx(generic.h, abs=1e-12)
        assert closed.sigma == pytest.approx(generic.sigma, abs=1e-12)
        assert closed.rho == pytest.approx(generic.rho, abs=1e-12)

    def test_noiseless_channel(self):
        stats = symmetric_cond_stats(SymmetricChannelSpec(0.0, 4))
        assert stats.degenerate and stats.h == 0.0


class TestIdealizedSymmetric:

    def test_extreme_thresholds(self, noisy_labels):
        empty = idealized_eval_symmetric(noisy_labels, 30, beta=1.0)
        assert empty.log_set_size == -np.inf
        assert empty.coverage == 0.0
        full = idealized_eval_symmetric(noisy_labels, 30, log_beta=-1e6)
        assert full.log_set_size == pytest.approx(30 * np.log(10), rel=1e-12)
        assert full.coverage == pytest.approx(1.0, abs=1e-12)

    def test_threshold_arguments(self, noisy_labels):
        with pytest.raises(PreconditionError):
            idealized_eval_symmetric(noisy_labels, 5)
        with pytest.raises(PreconditionError):
            idealized_eval_symmetric(noisy_labels, 5, 0.5, log_beta=-1.0)
        with pytest.raises(DomainError):
            idealized_eval_symmetric(noisy_labels, 5, beta=1.5)

    def test_smallest_set_reaches_coverage(self, noisy_labels):
        for n in (1, 10, 50, 400):
            smallest = idealized_min_beta_symmetric(noisy_labels, n, 0.1)
            assert smallest.coverage >= 0.9
            # one level higher and the coverage target is missed
            tighter = idealized_eval_symmetric(noisy_labels, n, log_beta=min(smallest.log_beta + 1e-9, 0.0))
            if tighter.log_set_size < smallest.log_set_size:
                assert tighter.coverage < 0.9

    def test_noiseless_channel(self):
        sym = SymmetricChannelSpec(0.0, 5)
        result = idealized_eval_symmetric(sym, 20, log_beta=-1.0)
        assert result.log_set_size == 0.0
        assert result.coverage == 1.0

    @pytest.mark.parametrize("epsilon, m_classes, n", [(0.1, 2, 8), (0.35, 2, 5), (0.2, 3, 4), (0.25, 3, 6)])
    def test_matches_enumeration(self, epsilon, m_classes, n):
        sym = SymmetricChannelSpec(epsilon, m_classes)
        channel = sym.to_channel()
        for log_beta in midpoint_thresholds(channel, n):
            log_size, coverage = enumerated_predictor(channel, n, log_beta)
            result = idealized_eval_symmetric(sym, n, log_beta=log_beta)
            if log_size == -np.inf:
                assert result.log_set_size == -np.inf
            else:
                assert result.log_set_size == pytest.approx(log_size, abs=1e-9)
            assert result.coverage == pytest.approx(coverage, abs=1e-12)

    def test_monotone_in_threshold(self, noisy_labels):
        n = 30
        sweep = [idealized_eval_symmetric(noisy_labels, n, log_beta=b)
                 for b in np.linspace(n * noisy_labels.log_wrong - 1.0, 0.0, 500)]
        for looser, tighter in zip(sweep, sweep[1:]):
            assert tighter.log_set_size <= looser.log_set_size + 1e-12
            assert tighter.coverage <= looser.coverage + 1e-12
        assert sweep[0].coverage == pytest.approx(1.0, abs=1e-12) and sweep[-1].coverage == 0.0

    @pytest.mark.parametrize("n", [1, 5, 20, 100])
    def test_expected_size_below_inverse_threshold(self, noisy_labels, n):
        for log_beta in np.linspace(n * noisy_labels.log_wrong, 0.0, 200):
            result = idealized_eval_symmetric(noisy_labels, n, log_beta=log_beta)
            assert result.log_set_size + log_beta <= 1e-12

    def test_enumerated_size_below_inverse_threshold(self):
        sym = SymmetricChannelSpec(0.3, 3)
        for n in (2, 4, 6):
            for log_beta in midpoint_thresholds(sym.to_channel(), n):
                log_size, _ = enumerated_predictor(sym.to_channel(), n, log_beta)
                assert log_size + log_beta <= 1e-12


class TestIdealizedDp:

    def test_equals_symmetric_counter(self):
        sym = SymmetricChannelSpec(0.2, 3)
        n = 12
        for k in range(n):
            upper = (k + 1) * sym.log_correct + (n - k - 1) * sym.log_wrong
            lower = k * sym.log_correct + (n - k) * sym.log_wrong
            log_beta = 0.5 * (upper + lower)
            dp = idealized_eval_dp(sym.to_channel(), n, log_beta=log_beta)
            direct = idealized_eval_symmetric(sym, n, log_beta=log_beta)
            assert dp.exact
            assert dp.log_set_size == pytest.approx(direct.log_set_size, abs=1e-9)
            assert dp.coverage == pytest.approx(direct.coverage, abs=1e-12)

    def test_single_sample_by_hand(self, small_channel):
        result = idealized_eval_dp(small_channel, 1, beta=0.25)
        assert np.exp(result.log_set_size) == pytest.approx(0.5 * 1 + 0.3 * 2 + 0.2 * 3, abs=1e-12)
        assert result.coverage == pytest.approx(0.5 * 0.7 + 0.3 * 0.9 + 0.2 * 1.0, abs=1e-12)

    def test_quantized_brackets_contain_exact(self, small_channel):
        n = 8
        for log_beta in (-12.0, -8.0, -6.5):
            exact = idealized_eval_dp(small_channel, n, log_beta=log_beta)
            quantized = idealized_eval_dp(small_channel, n, log_beta=log_beta, multiset_budget=1)
            assert not quantized.exact
            low, high = quantized.log_set_size_bracket
            assert low - 1e-9 <= exact.log_set_size <= high + 1e-9
            c_low, c_high = quantized.coverage_bracket
            assert c_low - 1e-12 <= exact.coverage <= c_high + 1e-12
            assert high - low < 1.0

    def test_asymmetric_two_class_enumeration(self):
        channel = ChannelModel.from_matrix([0.35, 0.65], np.array([[0.9, 0.1], [0.3, 0.7]]))
        n = 8
        for log_beta in midpoint_thresholds(channel, n):
            log_size, coverage = enumerated_predictor(channel, n, log_beta)
            exact = idealized_eval_dp(channel, n, log_beta=log_beta)
            quantized = idealized_eval_dp(channel, n, log_beta=log_beta, multiset_budget=1)
            assert exact.exact and not quantized.exact
            assert exact.coverage == pytest.approx(coverage, abs=1e-12)
            if log_size == -np.inf:
                assert exact.log_set_size == -np.inf
                assert quantized.log_set_size_bracket[0] == -np.inf
                continue
            assert exact.log_set_size == pytest.approx(log_size, abs=1e-9)
            low, high = quantized.log_set_size_bracket
            assert low - 1e-9 <= log_size <= high + 1e-9
            assert low - 1e-9 <= quantized.log_set_size <= high + 1e-9
            c_low, c_high = quantized.coverage_bracket
            assert c_low - 1e-12 <= coverage <= c_high + 1e-12
            assert c_low - 1e-12 <= quantized.coverage <= c_high + 1e-12

    def test_memory_budget(self, small_channel):
        with pytest.raises(MemoryBudgetError):
            idealized_eval_dp(small_channel, 50, log_beta=-30.0, multiset_budget=1, cell_budget=10)

    def test_expected_set_size_slack(self, rng):
        for _ in range(200):
            channel = ChannelModel.from_matrix(rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(4), size=3))
            assert expected_set_size_slack(channel, float(rng.uniform(1e-3, 1.0))) >= 0.0


class TestConformal:

    def test_pvalue_examples(self):
        cal = CalibrationScores.from_scores([4.0, 2.0, 3.0, 1.0])
        assert scp_pvalue(cal, 2.5) == pytest.approx(0.6)
        assert scp_pvalue(cal, 2.0) == pytest.approx(0.8)
        assert scp_pvalue(cal, 10.0) == pytest.approx(0.2)
        assert scp_pvalue(cal, 0.0) == pytest.approx(1.0)
        np.testing.assert_allclose(scp_pvalues(cal, np.array([0.0, 2.5, 10.0])), [1.0, 0.6, 0.2])

    def test_calibration_validation(self):
        with pytest.raises(PreconditionError):
            CalibrationScores.from_scores([])
        with pytest.raises(PreconditionError):
            CalibrationScores(np.array([2.0, 1.0]))
        with pytest.raises(PreconditionError):
            CalibrationScores.from_scores([1.0, np.nan])

    # levels b / 64 are exact in binary floating point, so level * (m + 1) is an exact integer whenever
    # 64 divides b * (m + 1), and p-values never round across the level
    @pytest.mark.parametrize("strict", [False, True])
    def test_quantile_agrees_with_pvalue(self, rng, strict):
        landed = 0
        for m in range(1, 51):
            cal = CalibrationScores.from_scores(rng.integers(0, 8, size=m).astype(float))
            levels = np.concatenate([np.arange(1, 65) / 64, rng.uniform(1e-6, 1.0, size=5)])
            tests = np.concatenate([np.arange(-1.0, 9.5, 0.5), rng.uniform(-1.0, 9.0, size=5)])
            for level in levels:
                landed += float(level * (m + 1)).is_integer()
                threshold = quantile_threshold(cal, level, strict=strict)
                for s in tests:
                    p = scp_pvalue(cal, s)
                    expected = p > level if strict else p >= level
                    assert quantile_member(cal, s, level, strict=strict) == expected, (m, level, s)
                    assert (s <= threshold) == expected
        assert landed > 50

    def test_quantile_by_hand(self):
        cal = CalibrationScores.from_scores([7.0, 2.0, 5.0, 1.0, 3.0, 6.0, 4.0])
        # level 0.25: (1 - 0.25) * 8 = 6 lands on an integer, p(7.0) = 0.25
        assert quantile_threshold(cal, 0.25) == 7.0
        assert quantile_threshold(cal, 0.25, strict=True) == 6.0
        assert quantile_threshold(cal, 0.3) == quantile_threshold(cal, 0.3, strict=True) == 6.0
        assert quantile_threshold(cal, 0.1) == np.inf
        assert quantile_threshold(cal, 1.0) == 1.0
        assert quantile_threshold(cal, 1.0, strict=True) == -np.inf

    def test_quantile_level_domain(self):
        with pytest.raises(DomainError):
            quantile_threshold(CalibrationScores.from_scores([1.0]), 0.0)


class TestBonferroni:

    def test_full_set_below_pvalue_floor(self, rng):
        cal = CalibrationScores.from_scores(rng.uniform(size=9))
        scores = rng.uniform(0.0, 5.0, size=(10, 4))
        result = bonferroni_predict(cal, scores, 0.5, true_labels=np.zeros(10, dtype=int))
        assert result.level == pytest.approx(0.05)
        assert np.all(result.label_sets)
        assert result.log_joint_size == pytest.approx(10 * np.log(4))
        assert result.covered

    def test_empty_set(self):
        cal = CalibrationScores.from_scores(np.zeros(99))
        result = bonferroni_predict(cal, np.array([[1.0, 1.0], [0.0, 1.0]]), 0.1)
        assert result.has_empty_set
        assert result.log_joint_size == -np.inf
        assert result.covered is None

    def test_invalid_inputs(self):
        cal = CalibrationScores.from_scores([1.0])
        with pytest.raises(DomainError):
            bonferroni_predict(cal, np.ones((2, 2)), 1.0)
        with pytest.raises(PreconditionError):
            bonferroni_predict(cal, np.ones(3), 0.1)

    def test_rate_reaches_log_m(self, noisy_labels):
        rows = bonferroni_rate_experiment(noisy_labels, 180, (1, 2, 5, 10, 20, 40), 0.1, 500, seed=3)
        gamma = {row["n"]: row["gamma_nats"] for row in rows}
        np.testing.assert_allclose([gamma[20], gamma[40]], np.log(10), rtol=1e-12)
        assert gamma[1] < gamma[40]
        assert np.all(np.diff([row["gamma_nats"] for row in rows]) >= -1e-12)
        assert all(g <= np.log(10) + 1e-12 for g in gamma.values())
        for row in rows:
            assert row["per_sample_level"] == pytest.approx(0.1 / row["n"])
            assert row["coverage"] >= 0.9 - 3 * row["coverage_se"] - 1e-12

    def test_workers_do_not_change_rows(self, small_channel):
        serial = bonferroni_rate_experiment(small_channel, 50, (1, 3), 0.2, 40, seed=11, workers=1)
        threaded = bonferroni_rate_experiment(small_channel, 50, (1, 3), 0.2, 40, seed=11, workers=4)
        assert serial == threaded

    def test_score_dataset_source(self, rng):
        probs = rng.dirichlet(np.ones(3), size=400)
        labels = np.array([rng.choice(3, p=row) for row in probs])
        dataset = ScoreDataset(probs, labels)
        rows = bonferroni_rate_experiment(dataset, 100, (1, 5), 0.1, 50, seed=0)
        assert [row["n"] for row in rows] == [1, 5]
        assert all(0.0 <= row["coverage"] <= 1.0 for row in rows)
        with pytest.raises(PreconditionError):
            bonferroni_rate_experiment(dataset, 399, (1, 5), 0.1, 5, seed=0)
