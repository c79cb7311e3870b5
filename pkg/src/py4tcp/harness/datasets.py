from __future__ import annotations
from pandas import DataFrame
from pandas.errors import EmptyDataError, ParserError
from py4tcp.custom_types import LogCondStats, ScoreDataset, SymmetricChannelSpec
from py4tcp.exceptions import DatasetFormatError, InfiniteEntropyError, PreconditionError
from py4tcp.predictors import draw_labels
from py4tcp.prob_core import sample_iid
from py4tcp.rng import RngLike, make_rng
import logging
import numpy as np
import pandas as pd
import re


logger = logging.getLogger(__name__)

LABEL_COLUMN: str = "label"
ROW_SUM_TOLERANCE: float = 1e-6
# data row i (0-based) sits on line i + 2, after the header
FIRST_DATA_LINE: int = 2


def _expected_header(m_classes: int) -> list[str]:
    return [f"p_{i}" for i in range(m_classes)] + [LABEL_COLUMN]


def _first_bad_line(mask: np.ndarray) -> int:
    return int(np.flatnonzero(mask)[0]) + FIRST_DATA_LINE


def load_scores_csv(path: str) -> ScoreDataset:
    """
        Reads precomputed model outputs.

        Parameters
        ----------
        path : str
            UTF-8, comma-separated file with the header `p_0,...,p_{M-1},label` and one row per sample.

        Returns
        -------
        ScoreDataset

        Raises
        ------
        DatasetFormatError
            Malformed header or row, non-numeric entry, label outside [0, M) or a row sum off by
            more than 1e-6. Row errors carry the 1-based line number.
    """
    logger.debug(f"DATASETS -- load_scores_csv({path}) -- PROGRESS")
    try:
        raw: DataFrame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except EmptyDataError as exc:
        raise DatasetFormatError("The file is empty, a header is expected.", line=1) from exc
    except ParserError as exc:
        found = re.search(r"line (\d+)", str(exc))
        raise DatasetFormatError(f"Malformed row: {exc}", line=int(found.group(1)) if found else None) from exc
    except UnicodeDecodeError as exc:
        raise DatasetFormatError(f"The file is not valid UTF-8: {exc}") from exc

    columns = [str(c).strip() for c in raw.columns]
    m_classes = len(columns) - 1
    if m_classes < 2 or columns != _expected_header(m_classes):
        raise DatasetFormatError(f"Header has to be p_0,...,p_{{M-1}},label with M >= 2, got {','.join(columns)}.",
                                 line=1)
    if raw.shape[0] == 0:
        raise DatasetFormatError("The file holds no data rows.")

    numeric = raw.apply(lambda column: pd.to_numeric(column.str.strip(), errors="coerce"))
    values = numeric.to_numpy(dtype=float)
    bad = ~np.isfinite(values).all(axis=1)
    if bad.any():
        raise DatasetFormatError("Non-numeric or missing entry.", line=_first_bad_line(bad))

    probs, labels = values[:, :-1], values[:, -1]
    bad = (labels != np.round(labels)) | (labels < 0) | (labels >= m_classes)
    if bad.any():
        raise DatasetFormatError(f"Label has to be an integer in [0, {m_classes}).", line=_first_bad_line(bad))
    bad = (probs < 0.0).any(axis=1)
    if bad.any():
        raise DatasetFormatError("Negative probability.", line=_first_bad_line(bad))
    bad = np.abs(probs.sum(axis=1) - 1.0) > ROW_SUM_TOLERANCE
    if bad.any():
        line = _first_bad_line(bad)
        raise DatasetFormatError(f"Row sums to {probs[line - FIRST_DATA_LINE].sum()!r}, not to 1 within "
                                 f"{ROW_SUM_TOLERANCE}.", line=line)

    dataset = ScoreDataset(probs=probs, labels=labels.astype(np.int64))
    logger.debug(f"DATASETS -- load_scores_csv({path}, rows={dataset.n_rows}) -- OK")
    return dataset


def write_scores_csv(dataset: ScoreDataset, path: str) -> None:
    df = DataFrame(dataset.probs, columns=_expected_header(dataset.m_classes)[:-1])
    df[LABEL_COLUMN] = dataset.labels
    df.to_csv(path, index=False, float_format="%.17g", encoding="utf-8")


def plugin_cond_stats(dataset: ScoreDataset) -> tuple[LogCondStats, float, float]:
    """
        Plug-in estimates of H(Y|X), sigma and rho from the model probability of the true label,
        treating the rows as draws of (X, Y).

        Returns
        -------
        LogCondStats
            Plug-in (h, sigma, rho).
        float
            Standard error of h.
        float
            Standard error of sigma (delta method, 0 for a degenerate sample).
    """
    p_true = dataset.probs[np.arange(dataset.n_rows), dataset.labels]
    if np.any(p_true <= 0.0):
        raise InfiniteEntropyError("A true label has model probability 0, the log-loss is infinite.")
    n = dataset.n_rows
    losses = -np.log(p_true)
    h = float(losses.mean())
    centered = losses - h
    squares = centered ** 2
    sigma = float(np.sqrt(squares.mean()))
    rho = float(np.mean(np.abs(centered) ** 3))
    if sigma <= 1e-12 * max(1.0, h):
        sigma, rho = 0.0, 0.0

    h_se = float(losses.std(ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
    sigma_se = 0.0
    if sigma > 0.0:
        sigma_se = float(squares.std(ddof=1) / np.sqrt(n) / (2.0 * sigma)) if n > 1 else float("inf")
    return LogCondStats(h=h, sigma=sigma, rho=rho), h_se, sigma_se


def synthesize_scores(sym: SymmetricChannelSpec, n_rows: int, seed: RngLike) -> ScoreDataset:
    """
        Draws a score dataset from the symmetric noisy-label channel: the clean label X is uniform,
        the observed label Y is drawn from row X and the model reports the exact row P(.|X).
    """
    if n_rows < 1:
        raise PreconditionError(f"n_rows has to be >= 1, got {n_rows}.")
    rng = make_rng(seed)
    channel = sym.to_channel()
    x = sample_iid(channel.prior_x, n_rows, rng)
    labels = draw_labels(channel.matrix, x, rng)
    return ScoreDataset(probs=channel.matrix[x], labels=labels)
