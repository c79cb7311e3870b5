from __future__ import annotations
from typing import Any, Callable, Optional
from pandas import DataFrame
from py4tcp.bounds import (achievability, achievability_min_n, converse_approx, converse_exact, fano_bound,
                           iid_joint, predictor_error, threshold_predictor, trivial_bound, verdu_han_slack)
from py4tcp.custom_types import (BoundReport, CategoricalDist, ChannelModel, ExperimentConfig, ExperimentKind,
                                 GutmanConfig, LogCondStats)
from py4tcp.exceptions import Py4TcpException
from py4tcp.exponents import (dispersion_v, f_exponent, f_exponent_grid, second_order_lambda,
                              set_size_exponent_binary)
from py4tcp.gutman import fit_miscoverage_exponent, fit_set_size_exponent, simulate_gutman
from py4tcp.harness.datasets import load_scores_csv, plugin_cond_stats
from py4tcp.predictors import (bonferroni_rate_experiment, idealized_eval_symmetric, idealized_min_beta_symmetric,
                               symmetric_cond_stats)
from py4tcp.prob_core import gjs
from py4tcp.rng import replicate_rng
from py4tcp.session import TcpSession
from py4tcp.utils import convert_meta_units, convert_rows_to_pandas
import numpy as np


ProgressCallback = Callable[[int, int], None]

BOUNDS_COLUMNS: list[str] = ["n", "h_nats", "log_m_nats",
                             "converse_exact_nats", "converse_exact_vacuous",
                             "converse_approx_nats", "converse_approx_vacuous",
                             "achievability_nats", "achievability_vacuous",
                             "fano_nats",
                             "exact_oracle_log_size_nats", "exact_oracle_coverage",
                             "min_oracle_log_size_nats", "min_oracle_coverage"]
ALPHA_SWEEP_COLUMNS: list[str] = ["alpha", "n", "h_nats",
                                  "converse_exact_nats", "converse_exact_vacuous",
                                  "converse_approx_nats", "fano_nats"]
BONFERRONI_COLUMNS: list[str] = ["n", "per_sample_level", "gamma_nats", "mean_log_size_nats", "empty_rate",
                                 "coverage", "coverage_se", "converse_exact_nats", "converse_approx_nats",
                                 "log_m_nats"]
EXPONENT_COLUMNS: list[str] = ["instance", "p1_0", "p2_0", "alpha_ratio", "lam_nats", "gjs_nats",
                               "f_solver_nats", "f_grid_nats", "abs_gap_nats", "certified_gap_nats", "iterations",
                               "set_size_exponent_nats", "dispersion_nats2", "second_order_lambda_nats"]
AUDIT_COLUMNS: list[str] = ["instance", "n", "x_size", "m_classes", "alpha", "beta", "predictor_error",
                            "expected_set_size", "slack"]


def _per_sample(report: BoundReport) -> float:
    return report.per_sample_nats


class Experiments(object):
    def __init__(self,
                 session: TcpSession,
                 print_content: Optional[bool] = False,
                 suppress_print: Optional[bool] = True,
                 progress: Optional[ProgressCallback] = None) -> None:
        """
            A class holds the experiments that turn the bounds, predictors and Gutman's test into result tables.

            Attributes
            ----------
            session : TcpSession
                Class that holds the tlab session.
            print_content : bool, optional
                If True then the result tables will be printed.
            suppress_print : bool, optional
                If True then all prints are suppressed. By default: suppress_print=True
            progress : Callable[[int, int], None], optional
                Called with (done, total) while an experiment advances over its grid.

            Methods
            -------
            run(cfg: ExperimentConfig) -> tuple[DataFrame, dict] | tuple[None, None]
                Runs the experiment named by cfg.kind.

            run_bounds_curve(cfg: ExperimentConfig) -> tuple[DataFrame, dict] | tuple[None, None]
                Per-sample converse, normal approximation, achievability, Fano baseline and exact oracles over n.

            run_alpha_sweep(cfg: ExperimentConfig) -> tuple[DataFrame, dict] | tuple[None, None]
                Per-sample converse curves for every level of cfg.alphas.

            run_bonferroni_compare(cfg: ExperimentConfig) -> tuple[DataFrame, dict] | tuple[None, None]
                Monte Carlo efficiency rate and coverage of the Bonferroni predictor next to the converse.

            run_gutman_sim(cfg: ExperimentConfig) -> tuple[DataFrame, dict] | tuple[None, None]
                Monte Carlo of Gutman's test with confidence, finite-n bound and fitted exponents.

            run_exponent_table(cfg: ExperimentConfig) -> tuple[DataFrame, dict] | tuple[None, None]
                Solver against grid oracle on the configured pair and random binary instances.

            run_theorem1_audit(cfg: ExperimentConfig) -> tuple[DataFrame, dict] | tuple[None, None]
                Slack of the set-size inequality on random small instances by exhaustive enumeration.
        """
        self.session: TcpSession = session
        self.print_content: bool = print_content
        self.suppress_print: bool = suppress_print
        self.progress: Optional[ProgressCallback] = progress

    def _tick(self, done: int, total: int) -> None:
        if self.progress is not None:
            self.progress(done, total)

    def _finish(self,
                cfg: ExperimentConfig,
                rows: list[dict[str, Any]],
                columns: list[str],
                extra_meta: Optional[dict[str, Any]] = None) -> tuple[DataFrame, dict[str, Any]]:
        df = convert_rows_to_pandas(rows, cfg.log_base, columns)
        meta = cfg.to_meta()
        meta.update(convert_meta_units(extra_meta or {}, cfg.log_base))
        if not self.suppress_print:
            print(f"Experiment {cfg.kind} finished with {len(df)} rows -- OK")
        if self.print_content:
            print(f"content: {df}")
        return df, meta

    def _guarded(self,
                 cfg: ExperimentConfig,
                 body: Callable[[ExperimentConfig], tuple[DataFrame, dict[str, Any]]]) \
            -> tuple[DataFrame, dict[str, Any]] | tuple[None, None]:
        if not self.suppress_print:
            print(f"Running experiment {cfg.kind}...")
        self.session.logging.debug(f"EXPERIMENTS -- {cfg.kind} -- PROGRESS")
        try:
            df, meta = body(cfg)
        except (Py4TcpException, ValueError, MemoryError) as exc:
            self.session.logging.error(f"EXPERIMENTS -- {cfg.kind} -- {type(exc).__name__}: {exc}")
            self.session.report_error(f"EXPERIMENTS -- {cfg.kind}",
                                      f"Some errors occurred while running experiment {cfg.kind}: {exc}.")
            return None, None
        self.session.logging.debug(f"EXPERIMENTS -- {cfg.kind} -- OK")
        return df, meta

    def run(self, cfg: ExperimentConfig) -> tuple[DataFrame, dict[str, Any]] | tuple[None, None]:
        """
            Runs the experiment named by cfg.kind.

            Parameters
            ----------
            cfg : ExperimentConfig
                Experiment configuration.

            Returns
            -------
            DataFrame | None
                Result rows, quantities in cfg.log_base. None is returned if some errors have occurred.
            dict | None
                Metadata echoing the config. None is returned if some errors have occurred.
        """
        runners = {ExperimentKind.BOUNDS_CURVE: self.run_bounds_curve,
                   ExperimentKind.ALPHA_SWEEP: self.run_alpha_sweep,
                   ExperimentKind.BONFERRONI_COMPARE: self.run_bonferroni_compare,
                   ExperimentKind.GUTMAN_SIM: self.run_gutman_sim,
                   ExperimentKind.EXPONENT_TABLE: self.run_exponent_table,
                   ExperimentKind.THEOREM1_AUDIT: self.run_theorem1_audit}
        return runners[cfg.kind](cfg)

    # bounds

    @staticmethod
    def _converse_pair(stats: LogCondStats,
                       n: int,
                       alpha: float,
                       delta: Optional[float],
                       m_classes: int) -> tuple[BoundReport, BoundReport]:
        if stats.degenerate:
            return trivial_bound(n, alpha), trivial_bound(n, alpha)
        return converse_exact(stats, n, alpha, delta, m_classes), converse_approx(stats, n, alpha, m_classes)

    def run_bounds_curve(self, cfg: ExperimentConfig) -> tuple[DataFrame, dict[str, Any]] | tuple[None, None]:
        """
            Per-sample bounds on the efficiency rate of the symmetric channel over cfg.n_grid.

            The exact oracle evaluates the idealized predictor at the achievability threshold (nan below
            the achievability range); the min oracle is the smallest idealized set with coverage >= 1 - alpha.

            Returns
            -------
            DataFrame | None
                One row per n. None is returned if some errors have occurred.
            dict | None
                Config echo plus the achievability range. None is returned if some errors have occurred.
        """
        def body(cfg: ExperimentConfig) -> tuple[DataFrame, dict[str, Any]]:
            sym = cfg.channel
            stats = symmetric_cond_stats(sym)
            log_m = float(np.log(sym.m_classes))
            n_min = None if stats.degenerate else achievability_min_n(stats, cfg.alpha)

            rows: list[dict[str, Any]] = []
            for i, n in enumerate(cfg.n_grid):
                exact, approx = self._converse_pair(stats, n, cfg.alpha, cfg.delta_override, sym.m_classes)
                row: dict[str, Any] = {"n": n, "h_nats": stats.h, "log_m_nats": log_m,
                                       "converse_exact_nats": _per_sample(exact),
                                       "converse_exact_vacuous": exact.vacuous,
                                       "converse_approx_nats": _per_sample(approx),
                                       "converse_approx_vacuous": approx.vacuous,
                                       "achievability_nats": np.nan, "achievability_vacuous": True,
                                       "fano_nats": _per_sample(fano_bound(stats, n, cfg.alpha, sym.m_classes)),
                                       "exact_oracle_log_size_nats": np.nan, "exact_oracle_coverage": np.nan}
                if stats.degenerate:
                    row["achievability_nats"], row["achievability_vacuous"] = 0.0, False
                elif n >= n_min:
                    ach = achievability(stats, n, cfg.alpha, sym.m_classes)
                    oracle = idealized_eval_symmetric(sym, n, log_beta=ach.log_beta)
                    row.update({"achievability_nats": _per_sample(ach), "achievability_vacuous": ach.vacuous,
                                "exact_oracle_log_size_nats": oracle.log_set_size / n,
                                "exact_oracle_coverage": oracle.coverage})
                smallest = idealized_min_beta_symmetric(sym, n, cfg.alpha)
                row.update({"min_oracle_log_size_nats": smallest.log_set_size / n,
                            "min_oracle_coverage": smallest.coverage})
                rows.append(row)
                self._tick(i + 1, len(cfg.n_grid))
            return self._finish(cfg, rows, BOUNDS_COLUMNS, {"achievability_min_n": n_min,
                                                            "sigma_nats": stats.sigma, "rho_nats3": stats.rho})

        return self._guarded(cfg, body)

    def run_alpha_sweep(self, cfg: ExperimentConfig) -> tuple[DataFrame, dict[str, Any]] | tuple[None, None]:
        """
            Per-sample converse curves of the symmetric channel for every level in cfg.alphas.
        """
        def body(cfg: ExperimentConfig) -> tuple[DataFrame, dict[str, Any]]:
            sym = cfg.channel
            stats = symmetric_cond_stats(sym)
            rows: list[dict[str, Any]] = []
            total = len(cfg.alphas) * len(cfg.n_grid)
            for a, alpha in enumerate(cfg.alphas):
                for i, n in enumerate(cfg.n_grid):
                    exact, approx = self._converse_pair(stats, n, alpha, cfg.delta_override, sym.m_classes)
                    rows.append({"alpha": alpha, "n": n, "h_nats": stats.h,
                                 "converse_exact_nats": _per_sample(exact),
                                 "converse_exact_vacuous": exact.vacuous,
                                 "converse_approx_nats": _per_sample(approx),
                                 "fano_nats": _per_sample(fano_bound(stats, n, alpha, sym.m_classes))})
                    self._tick(a * len(cfg.n_grid) + i + 1, total)
            return self._finish(cfg, rows, ALPHA_SWEEP_COLUMNS)

        return self._guarded(cfg, body)

    # predictors

    def run_bonferroni_compare(self, cfg: ExperimentConfig) -> tuple[DataFrame, dict[str, Any]] | tuple[None, None]:
        """
            Bonferroni predictor with probability-complement scores on the symmetric channel, or on the
            score CSV of cfg.scores_path, next to the converse of the same channel (plug-in for a CSV).

            Returns
            -------
            DataFrame | None
                One row per n. None is returned if some errors have occurred.
            dict | None
                Config echo plus the per-sample levels and the first n at which the p-value floor forces
                the full label set. None is returned if some errors have occurred.
        """
        def body(cfg: ExperimentConfig) -> tuple[DataFrame, dict[str, Any]]:
            extra: dict[str, Any] = {}
            if cfg.scores_path is not None:
                source = load_scores_csv(cfg.scores_path)
                stats, h_se, sigma_se = plugin_cond_stats(source)
                m_classes = source.m_classes
                extra.update({"plugin_h_nats": stats.h, "plugin_h_se_nats": h_se,
                              "plugin_sigma_nats": stats.sigma, "plugin_sigma_se_nats": sigma_se})
            else:
                source = cfg.channel
                stats = symmetric_cond_stats(source)
                m_classes = source.m_classes

            rows = bonferroni_rate_experiment(source, cfg.m_cal, cfg.n_grid, cfg.alpha, cfg.trials, cfg.seed,
                                              workers=cfg.workers)
            log_m = float(np.log(m_classes))
            for row in rows:
                exact, approx = self._converse_pair(stats, row["n"], cfg.alpha, cfg.delta_override, m_classes)
                row.update({"converse_exact_nats": _per_sample(exact), "converse_approx_nats": _per_sample(approx),
                            "log_m_nats": log_m})

            floor = 1.0 / (cfg.m_cal + 1)
            full_from = [n for n in cfg.n_grid if cfg.alpha / n < floor]
            extra.update({"per_sample_levels": {str(n): cfg.alpha / n for n in cfg.n_grid},
                          "p_value_floor": floor,
                          "full_set_from_n": full_from[0] if full_from else None})
            self._tick(1, 1)
            return self._finish(cfg, rows, BONFERRONI_COLUMNS, extra)

        return self._guarded(cfg, body)

    # gutman

    def run_gutman_sim(self, cfg: ExperimentConfig) -> tuple[DataFrame, dict[str, Any]] | tuple[None, None]:
        """
            Monte Carlo of Gutman's test with confidence for the class laws cfg.dists.

            Returns
            -------
            DataFrame | None
                One row per n with the miscoverage frequency, the finite-n bound and the set-size
                frequencies (plus classical-test errors for two classes). None is returned if some
                errors have occurred.
            dict | None
                Config echo plus fitted decay exponents and, for two classes, the predicted set-size exponent.
        """
        def body(cfg: ExperimentConfig) -> tuple[DataFrame, dict[str, Any]]:
            dists = [CategoricalDist(d) for d in cfg.dists]
            m = len(dists)
            priors = CategoricalDist(cfg.priors) if cfg.priors is not None else CategoricalDist.uniform(m)
            gcfg = GutmanConfig(alpha_ratio=cfg.alpha_ratio, lam=cfg.lam, m_classes=m)
            records = simulate_gutman(dists, priors, gcfg, cfg.n_grid, cfg.trials, cfg.seed, workers=cfg.workers)

            columns = ["n", "training_length", "trials", "p_e", "p_e_se", "finite_bound", "log_finite_bound_nats"]
            columns += [f"set_size_{k}_freq" for k in range(m + 1)]
            if m == 2:
                columns += ["classical_error_h1", "classical_error_h2"]
            rows: list[dict[str, Any]] = []
            for record in records:
                row: dict[str, Any] = {"n": record.n, "training_length": record.training_length,
                                       "trials": record.trials, "p_e": record.p_e, "p_e_se": record.p_e_se,
                                       "finite_bound": float(np.exp(min(record.log_finite_bound, 0.0))),
                                       "log_finite_bound_nats": record.log_finite_bound}
                for k in range(m + 1):
                    row[f"set_size_{k}_freq"] = record.set_size_frequency(k)
                if m == 2:
                    errors = record.classical_errors / np.maximum(record.class_counts, 1)
                    row["classical_error_h1"], row["classical_error_h2"] = float(errors[0]), float(errors[1])
                rows.append(row)

            extra: dict[str, Any] = {"empty_set_exponent_nats": cfg.lam}
            for name, fit in (("empty_set", lambda: fit_set_size_exponent(records, 0)),
                              (f"set_size_{m}", lambda: fit_set_size_exponent(records, m)),
                              ("miscoverage", lambda: fit_miscoverage_exponent(records))):
                try:
                    estimate = fit()
                    extra[f"{name}_slope_nats"] = estimate.slope
                    extra[f"{name}_slope_lower_bound_nats"] = estimate.lower_bound
                except Py4TcpException as exc:
                    self.session.logging.warning(f"EXPERIMENTS -- fit {name} -- SKIPPED: {exc}")
                    extra[f"{name}_slope_nats"] = None
            if m == 2 and dists[0].alphabet_size == 2:
                extra["set_size_2_exponent_nats"] = set_size_exponent_binary(dists[0], dists[1], cfg.alpha_ratio,
                                                                             cfg.lam)
            self._tick(1, 1)
            return self._finish(cfg, rows, columns, extra)

        return self._guarded(cfg, body)

    # exponents

    def _exponent_row(self,
                      cfg: ExperimentConfig,
                      instance: int,
                      p1: CategoricalDist,
                      p2: CategoricalDist,
                      lam: float) -> dict[str, Any]:
        solution = f_exponent(p1, p2, cfg.alpha_ratio, lam)
        binary = p1.alphabet_size == 2
        grid = f_exponent_grid(p1, p2, cfg.alpha_ratio, lam, cfg.grid_points) if binary else np.nan
        return {"instance": instance,
                "p1_0": float(p1.probs[0]), "p2_0": float(p2.probs[0]),
                "alpha_ratio": cfg.alpha_ratio, "lam_nats": lam,
                "gjs_nats": gjs(p1, p2, cfg.alpha_ratio),
                "f_solver_nats": solution.value,
                "f_grid_nats": grid,
                "abs_gap_nats": abs(solution.value - grid) if binary else np.nan,
                "certified_gap_nats": np.nan if solution.certified_gap is None else solution.certified_gap,
                "iterations": solution.iterations,
                "set_size_exponent_nats": set_size_exponent_binary(p1, p2, cfg.alpha_ratio, lam),
                "dispersion_nats2": dispersion_v(p1, p2, cfg.alpha_ratio),
                "second_order_lambda_nats": second_order_lambda(p1, p2, cfg.alpha_ratio, cfg.n_grid[0], cfg.alpha)}

    def run_exponent_table(self, cfg: ExperimentConfig) -> tuple[DataFrame, dict[str, Any]] | tuple[None, None]:
        """
            F(P1, P2, alpha, lambda) by the solver and by the grid oracle. Instance 0 is the first two
            laws of cfg.dists with cfg.lam; the others draw P1(0), P2(0) uniformly from [0.1, 0.9] and
            lambda uniformly from [0.2, 0.8] GJS(P1, P2). The second-order lambda uses n = cfg.n_grid[0]
            and epsilon = cfg.alpha.
        """
        def body(cfg: ExperimentConfig) -> tuple[DataFrame, dict[str, Any]]:
            total = cfg.instances + 1
            rows = [self._exponent_row(cfg, 0, CategoricalDist(cfg.dists[0]), CategoricalDist(cfg.dists[1]),
                                       cfg.lam)]
            self._tick(1, total)
            for i in range(1, total):
                rng = replicate_rng(cfg.seed, i)
                a, b = rng.uniform(0.1, 0.9, size=2)
                p1, p2 = CategoricalDist([a, 1.0 - a]), CategoricalDist([b, 1.0 - b])
                lam = float(rng.uniform(0.2, 0.8)) * gjs(p1, p2, cfg.alpha_ratio)
                rows.append(self._exponent_row(cfg, i, p1, p2, lam))
                self._tick(i + 1, total)

            gaps = [r["abs_gap_nats"] for r in rows if np.isfinite(r["abs_gap_nats"])]
            return self._finish(cfg, rows, EXPONENT_COLUMNS, {"max_abs_gap_nats": max(gaps) if gaps else None})

        return self._guarded(cfg, body)

    # audit

    @staticmethod
    def _audit_instance(cfg: ExperimentConfig, instance: int) -> dict[str, Any]:
        rng = replicate_rng(cfg.seed, instance)
        n = int(rng.choice(cfg.n_grid))
        x_size, m_classes = int(rng.integers(1, 4)), int(rng.integers(2, 4))
        channel = ChannelModel.from_matrix(rng.dirichlet(np.ones(x_size)),
                                           rng.dirichlet(np.ones(m_classes), size=x_size))
        joint = iid_joint(channel, n)

        # threshold predictor at a random atom, widened by random extra members
        cond = joint / np.maximum(joint.sum(axis=1, keepdims=True), 1e-300)
        atoms = np.unique(cond[cond > 0.0])
        predictor = threshold_predictor(joint, float(rng.choice(atoms)))
        predictor |= rng.random(joint.shape) < 0.1
        error = predictor_error(joint, predictor)
        alpha = float(error + (1.0 - error) * rng.uniform(0.0, 0.2))
        beta = float(rng.choice(atoms)) if rng.random() < 0.5 else float(np.exp(-rng.uniform(0.0, 3.0 * n)))
        beta = min(max(beta, 1e-300), 1.0)

        p_x = joint.sum(axis=1)
        return {"instance": instance, "n": n, "x_size": x_size, "m_classes": m_classes,
                "alpha": alpha, "beta": beta, "predictor_error": error,
                "expected_set_size": float(np.sum(p_x * predictor.sum(axis=1))),
                "slack": verdu_han_slack(joint, predictor, alpha, beta)}

    def run_theorem1_audit(self, cfg: ExperimentConfig) -> tuple[DataFrame, dict[str, Any]] | tuple[None, None]:
        """
            Slack alpha + beta E|Gamma| - P(P(Y^n|X^n) <= beta) on cfg.trials random instances with
            n drawn from cfg.n_grid, |X| <= 3 and M <= 3, computed by exhaustive enumeration.
        """
        def body(cfg: ExperimentConfig) -> tuple[DataFrame, dict[str, Any]]:
            rows = []
            for i in range(cfg.trials):
                rows.append(self._audit_instance(cfg, i))
                if (i + 1) % 50 == 0 or i + 1 == cfg.trials:
                    self._tick(i + 1, cfg.trials)
            slacks = [r["slack"] for r in rows]
            return self._finish(cfg, rows, AUDIT_COLUMNS, {"min_slack": float(min(slacks))})

        return self._guarded(cfg, body)
