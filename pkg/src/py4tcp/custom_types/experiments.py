from __future__ import annotations
from dataclasses import dataclass, fields, replace
from typing import Any, Mapping, Optional
from py4tcp.custom_types.distributions import _frozen_array
from py4tcp.custom_types.enums import ExperimentKind, LogBase, OutputFormat
from py4tcp.custom_types.reports import SymmetricChannelSpec
from py4tcp.exceptions import ConfigError, DatasetFormatError, DomainError
import numpy as np


DEFAULT_ALPHAS: tuple[float, ...] = (0.01, 0.05, 0.1, 0.3)
RUN_ONLY_FIELDS: frozenset[str] = frozenset({"workers", "output"})

KIND_DEFAULTS: dict[ExperimentKind, dict[str, Any]] = {
    ExperimentKind.BOUNDS_CURVE: {"n_grid": (100, 200, 400, 800, 1600)},
    ExperimentKind.ALPHA_SWEEP: {"n_grid": (100, 200, 400, 800, 1600)},
    ExperimentKind.BONFERRONI_COMPARE: {"n_grid": (1, 2, 5, 10, 20, 40), "trials": 500},
    ExperimentKind.GUTMAN_SIM: {"n_grid": (100, 200, 300, 400, 500, 600, 700, 800), "trials": 10000},
    ExperimentKind.EXPONENT_TABLE: {"n_grid": (400,), "trials": 1},
    ExperimentKind.THEOREM1_AUDIT: {"n_grid": (1, 2, 3), "trials": 1000},
}


@dataclass(frozen=True)
class ExperimentConfig:
    """
        Full description of one experiment run. Every field that affects results is echoed into the output metadata.

        Attributes
        ----------
        kind : ExperimentKind
            Experiment to run.
        epsilon, m_classes : float, int
            Symmetric noisy-label channel.
        scores_path : str | None
            Score CSV used in place of the synthetic channel (bonferroni_compare).
        alpha : float
            Significance level (also the epsilon of the second-order lambda in exponent_table).
        alphas : tuple[float, ...]
            Level grid of alpha_sweep.
        n_grid : tuple[int, ...]
            Strictly increasing test sizes (audit: the sequence lengths to draw from).
        trials : int
            Monte Carlo trials per grid point (audit: number of random instances).
        seed : int
            Master seed.
        delta_override : float | None
            Delta of the exact converse; 1/sqrt(n) when None.
        log_base : LogBase
            Unit of emitted quantities.
        output : str | None
            Output path.
        fmt : OutputFormat
            Output format.
        m_cal : int
            Calibration size of the Bonferroni predictor.
        workers : int
            Worker threads for Monte Carlo replicates.
        dists, priors : tuple
            Class-conditional source distributions and class priors of gutman_sim / exponent_table.
        alpha_ratio, lam : float
            N/n ratio and threshold of Gutman's test.
        instances : int
            Random instances of exponent_table besides the configured pair.
        grid_points : int
            Grid oracle resolution per coordinate.
    """
    kind: ExperimentKind
    epsilon: float = 0.1
    m_classes: int = 10
    scores_path: Optional[str] = None
    alpha: float = 0.1
    alphas: tuple[float, ...] = DEFAULT_ALPHAS
    n_grid: tuple[int, ...] = (100, 200, 400, 800, 1600)
    trials: int = 500
    seed: int = 0
    delta_override: Optional[float] = None
    log_base: LogBase = LogBase.NATS
    output: Optional[str] = None
    fmt: OutputFormat = OutputFormat.CSV
    m_cal: int = 180
    workers: int = 1
    dists: tuple[tuple[float, ...], ...] = ((0.8, 0.2), (0.2, 0.8))
    priors: Optional[tuple[float, ...]] = None
    alpha_ratio: float = 1.0
    lam: float = 0.05
    instances: int = 100
    grid_points: int = 2001

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "kind", ExperimentKind(self.kind))
            object.__setattr__(self, "log_base", LogBase(self.log_base))
            object.__setattr__(self, "fmt", OutputFormat(self.fmt))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        object.__setattr__(self, "dists", tuple(tuple(float(p) for p in d) for d in self.dists))
        if self.priors is not None:
            object.__setattr__(self, "priors", tuple(float(p) for p in self.priors))

        grid = np.asarray(self.n_grid)
        if grid.size == 0 or np.any(grid < 1) or np.any(np.diff(grid) <= 0):
            raise ConfigError(f"n_grid has to hold strictly increasing positive integers, got {self.n_grid}.")
        if self.trials < 1:
            raise ConfigError(f"trials has to be >= 1, got {self.trials}.")
        if not 0.0 < self.alpha < 1.0 or any(not 0.0 < a < 1.0 for a in self.alphas):
            raise ConfigError("Significance levels have to lie in (0, 1).")
        if self.seed < 0:
            raise ConfigError(f"seed has to be a non-negative integer, got {self.seed}.")
        if self.workers < 1 or self.m_cal < 1 or self.instances < 0:
            raise ConfigError("workers and m_cal have to be >= 1, instances >= 0.")
        if self.delta_override is not None and not self.delta_override > 0.0:
            raise ConfigError(f"delta has to be positive, got {self.delta_override}.")
        if self.scores_path is not None and self.kind != ExperimentKind.BONFERRONI_COMPARE:
            raise ConfigError(f"scores_path is only read by bonferroni_compare, not by {self.kind}.")
        if self.grid_points < 100:
            raise ConfigError(f"grid_points has to be >= 100, got {self.grid_points}.")
        if len(self.dists) < 2:
            raise ConfigError("At least two class distributions are needed.")
        try:
            self.channel
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def for_kind(cls, kind: ExperimentKind | str, **overrides: Any) -> ExperimentConfig:
        """
            Config with the kind-specific defaults, then the given overrides (None values are skipped).
        """
        kind = ExperimentKind(kind)
        values: dict[str, Any] = dict(KIND_DEFAULTS[kind])
        values.update({k: v for k, v in overrides.items() if v is not None})
        unknown = sorted(set(values) - {f.name for f in fields(cls)})
        if unknown:
            raise ConfigError(f"Unknown config fields: {', '.join(unknown)}.")
        return cls(kind=kind, **values)

    @classmethod
    def from_file(cls, path: str) -> ExperimentConfig:
        """
            Config from a .json or .toml file that names its kind.
        """
        # imported here, the harness depends on the custom types
        from py4tcp.harness.config import read_config_values

        values = read_config_values(path)
        if "kind" not in values:
            raise ConfigError(f"{path}: the config file has to name its kind.")
        try:
            kind = ExperimentKind(values.pop("kind"))
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.for_kind(kind, **values)

    def override(self, values: Mapping[str, Any]) -> ExperimentConfig:
        known = {f.name for f in fields(self)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"Unknown config fields: {', '.join(unknown)}.")
        return replace(self, **dict(values))

    @property
    def channel(self) -> SymmetricChannelSpec:
        return SymmetricChannelSpec(self.epsilon, self.m_classes)

    def to_meta(self) -> dict[str, Any]:
        """
            Echo of every field that affects the emitted rows (workers and the output path do not).
        """
        meta: dict[str, Any] = {}
        for f in fields(self):
            if f.name in RUN_ONLY_FIELDS:
                continue
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = [list(v) if isinstance(v, tuple) else v for v in value]
            elif hasattr(value, "value"):
                value = str(value)
            meta[f.name] = value
        return meta


@dataclass(frozen=True, eq=False)
class ScoreDataset:
    """
        Precomputed model outputs: one probability row over the M labels per sample and the true label.

        Attributes
        ----------
        probs : np.ndarray
            n_rows x M matrix, rows sum to one within 1e-6.
        labels : np.ndarray
            True label indices in [0, M).
    """
    probs: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=float)
        labels = np.asarray(self.labels)
        if probs.ndim != 2 or probs.shape[1] < 2:
            raise DatasetFormatError(f"Probabilities have to form an n_rows x M matrix with M >= 2, got {probs.shape}.")
        if labels.shape != (probs.shape[0],):
            raise DatasetFormatError("Exactly one label per row is needed.")
        if np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-6) or np.any(probs < 0.0):
            raise DatasetFormatError("Every row has to be a probability vector within 1e-6.")
        if np.any(labels < 0) or np.any(labels >= probs.shape[1]):
            raise DatasetFormatError(f"Labels have to lie in [0, {probs.shape[1]}).")
        object.__setattr__(self, "probs", _frozen_array(probs))
        object.__setattr__(self, "labels", _frozen_array(labels.astype(np.int64)))

    @property
    def n_rows(self) -> int:
        return int(self.probs.shape[0])

    @property
    def m_classes(self) -> int:
        return int(self.probs.shape[1])
