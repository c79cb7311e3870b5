from __future__ import annotations
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence
from py4tcp.exceptions import DimensionError, DistributionError, PreconditionError
import numpy as np


NORMALIZATION_TOLERANCE: float = 1e-9


def _frozen_array(values: np.ndarray) -> np.ndarray:
    values = np.array(values, copy=True)
    values.setflags(write=False)
    return values


@dataclass(frozen=True, eq=False)
class CategoricalDist:
    """
        Probability vector on a finite alphabet {0, ..., alphabet_size - 1}.

        Attributes
        ----------
        probs : np.ndarray
            Non-negative entries. Inputs whose sum is within 1e-9 of one are normalized,
            anything further off is rejected.

        Methods
        -------
        uniform(alphabet_size: int) -> CategoricalDist
            Uniform distribution.
        point_mass(alphabet_size: int, symbol: int) -> CategoricalDist
            Deterministic distribution.
        same_as(other: CategoricalDist, atol: float = 0.0) -> bool
            Componentwise comparison.
    """
    probs: np.ndarray

    def __post_init__(self) -> None:
        try:
            probs = np.asarray(self.probs, dtype=float)
        except (TypeError, ValueError) as exc:
            raise DistributionError(f"Probabilities are not numeric: {exc}") from exc

        if probs.ndim != 1 or probs.size == 0:
            raise DistributionError(f"Probabilities have to form a non-empty vector, got shape {probs.shape}.")
        if not np.all(np.isfinite(probs)):
            raise DistributionError("Probabilities have to be finite.")
        if np.any(probs < 0.0):
            raise DistributionError(f"Probabilities have to be non-negative, got min {probs.min()}.")

        total: float = float(probs.sum())
        if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
            raise DistributionError(f"Probabilities sum to {total!r}, not to 1 within {NORMALIZATION_TOLERANCE}.")
        object.__setattr__(self, "probs", _frozen_array(probs / total))

    @property
    def alphabet_size(self) -> int:
        return int(self.probs.size)

    @property
    def support(self) -> np.ndarray:
        return self.probs > 0.0

    @classmethod
    def uniform(cls, alphabet_size: int) -> CategoricalDist:
        if alphabet_size < 1:
            raise DistributionError(f"Alphabet size has to be positive, got {alphabet_size}.")
        return cls(np.full(alphabet_size, 1.0 / alphabet_size))

    @classmethod
    def point_mass(cls, alphabet_size: int, symbol: int) -> CategoricalDist:
        if not 0 <= symbol < alphabet_size:
            raise DistributionError(f"Symbol {symbol} is outside the alphabet of size {alphabet_size}.")
        probs = np.zeros(alphabet_size)
        probs[symbol] = 1.0
        return cls(probs)

    def same_as(self, other: CategoricalDist, atol: float = 0.0) -> bool:
        if self.alphabet_size != other.alphabet_size:
            return False
        return bool(np.all(np.abs(self.probs - other.probs) <= atol))

    def __repr__(self) -> str:
        return f"CategoricalDist({np.array2string(self.probs, precision=6, separator=', ')})"


@dataclass(frozen=True, eq=False)
class ChannelModel:
    """
        Conditional label law P(Y|X) together with the marginal of X.

        Attributes
        ----------
        prior_x : CategoricalDist
            Marginal of X over |X| symbols.
        rows : tuple[CategoricalDist, ...]
            One conditional distribution over the M labels per value of X.

        Methods
        -------
        from_matrix(prior_x: CategoricalDist | Sequence[float], matrix: np.ndarray) -> ChannelModel
            Builds the channel from a row-stochastic |X| x M matrix.
        joint() -> np.ndarray
            Joint PMF of (X, Y) as an |X| x M matrix.
    """
    prior_x: CategoricalDist
    rows: tuple[CategoricalDist, ...]

    def __post_init__(self) -> None:
        rows = tuple(self.rows)
        if len(rows) != self.prior_x.alphabet_size:
            raise DimensionError(f"Channel has {len(rows)} rows, the prior has {self.prior_x.alphabet_size} symbols.")
        sizes = {row.alphabet_size for row in rows}
        if len(sizes) != 1:
            raise DimensionError(f"Channel rows live on different label alphabets: {sorted(sizes)}.")
        object.__setattr__(self, "rows", rows)

    @classmethod
    def from_matrix(cls, prior_x: CategoricalDist | Sequence[float], matrix: np.ndarray) -> ChannelModel:
        if not isinstance(prior_x, CategoricalDist):
            prior_x = CategoricalDist(np.asarray(prior_x, dtype=float))
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2:
            raise DimensionError(f"Channel matrix has to be two-dimensional, got shape {matrix.shape}.")
        return cls(prior_x, tuple(CategoricalDist(row) for row in matrix))

    @property
    def x_size(self) -> int:
        return self.prior_x.alphabet_size

    @property
    def m_classes(self) -> int:
        return self.rows[0].alphabet_size

    @cached_property
    def matrix(self) -> np.ndarray:
        return _frozen_array(np.vstack([row.probs for row in self.rows]))

    def joint(self) -> np.ndarray:
        return self.prior_x.probs[:, None] * self.matrix


@dataclass(frozen=True, eq=False)
class EmpiricalType:
    """
        Empirical PMF (type) of a finite-alphabet sequence.

        Attributes
        ----------
        counts : np.ndarray
            Occurrence count of every symbol; the sequence length is their sum.

        Methods
        -------
        merge(other: EmpiricalType) -> EmpiricalType
            Type of the concatenated sequence.
    """
    counts: np.ndarray

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts)
        if counts.ndim != 1 or counts.size == 0:
            raise PreconditionError(f"Counts have to form a non-empty vector, got shape {counts.shape}.")
        if not np.all(np.equal(np.mod(counts, 1), 0)) or np.any(counts < 0):
            raise PreconditionError("Counts have to be non-negative integers.")
        counts = counts.astype(np.int64)
        if counts.sum() < 1:
            raise PreconditionError("A type needs a sequence of length n >= 1.")
        object.__setattr__(self, "counts", _frozen_array(counts))

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def alphabet_size(self) -> int:
        return int(self.counts.size)

    @property
    def pmf(self) -> np.ndarray:
        return self.counts / self.n

    def to_dist(self) -> CategoricalDist:
        return CategoricalDist(self.pmf)

    def merge(self, other: EmpiricalType) -> EmpiricalType:
        if self.alphabet_size != other.alphabet_size:
            raise DimensionError(f"Cannot merge types over {self.alphabet_size} and {other.alphabet_size} symbols.")
        return EmpiricalType(self.counts + other.counts)

    def __repr__(self) -> str:
        return f"EmpiricalType(counts={self.counts.tolist()}, n={self.n})"


@dataclass(frozen=True)
class LogCondStats:
    """
        Moments of the log-likelihood log P(Y|X) consumed by the finite-n bounds.

        Attributes
        ----------
        h : float
            Conditional entropy H(Y|X) in nats.
        sigma : float
            Dispersion, the standard deviation of log P(Y|X), in nats.
        rho : float
            Third absolute central moment E|log P(Y|X) + H(Y|X)|^3 in nats^3.
    """
    h: float
    sigma: float
    rho: float

    def __post_init__(self) -> None:
        for name in ("h", "sigma", "rho"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value < 0.0:
                raise DistributionError(f"LogCondStats.{name} has to be finite and non-negative, got {value!r}.")
            object.__setattr__(self, name, value)
        if (self.sigma == 0.0) != (self.rho == 0.0):
            raise DistributionError(f"sigma and rho vanish together, got sigma={self.sigma!r}, rho={self.rho!r}.")

    @property
    def degenerate(self) -> bool:
        return self.sigma == 0.0

    @property
    def berry_esseen_ratio(self) -> float:
        """
            rho / sigma^3, the scale of the Berry-Esseen correction (times 1/sqrt(n)).
        """
        return self.rho / self.sigma ** 3
