from __future__ import annotations
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Iterable, Optional, TypeVar
from pandas import DataFrame
from py4tcp.custom_types import LogBase
import numpy as np


T = TypeVar("T")
R = TypeVar("R")

# suffix -> power of nats carried by the quantity, longest first
NATS_SUFFIXES: tuple[tuple[str, int], ...] = (("_nats3", 3), ("_nats2", 2), ("_nats", 1))


def print_progress(done: int, total: int, label: str = "Progress", width: int = 40) -> None:
    """
        Redraws a one-line `label [####....] done/total (pct%)` status for a grid of `total` points.
        The line is closed once done reaches total.
    """
    total = max(total, 1)
    done = min(max(done, 0), total)
    filled = width * done // total
    print(f"\r{label} [{'#' * filled}{'.' * (width - filled)}] {done}/{total} ({100.0 * done / total:.0f}%)",
          end="", flush=True)
    if done == total:
        print()


def unit_key(key: str, log_base: LogBase) -> tuple[str, int]:
    """
        Returns (renamed key, power) for a `*_nats`, `*_nats2` or `*_nats3` key, and (key, 0) for any other.
    """
    unit = LogBase(log_base).value
    for suffix, power in NATS_SUFFIXES:
        if key.endswith(suffix):
            return key[:-len(suffix)] + f"_{unit}" + (str(power) if power > 1 else ""), power
    return key, 0


def parallel_map(func: Callable[[T], R], items: Iterable[T], workers: int = 1) -> list[R]:
    """
        Applies func to every item and returns the results in item order, on a thread pool when workers > 1.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def in_unit(value_nats: float | np.ndarray, log_base: LogBase, power: int = 1) -> float | np.ndarray:
    """
        Converts a quantity measured in nats^power to the requested log base.
    """
    if LogBase(log_base) == LogBase.BITS:
        return value_nats / np.log(2.0) ** power
    return value_nats


def convert_rows_to_pandas(rows: list[dict[str, Any]],
                           log_base: LogBase,
                           columns: Optional[list[str]] = None) -> DataFrame:
    """
        Builds a DataFrame from result rows with columns in a stable order, converting every
        `*_nats` column (`*_nats2`, `*_nats3` for powers) to the requested unit and renaming it.

        Parameters
        ----------
        rows : list[dict[str, Any]]
            Result rows; all rows share the keys of the first.
        log_base : LogBase
            Unit of the emitted quantities.
        columns : list[str], optional
            Column order for an empty row list.

        Returns
        -------
        DataFrame
    """
    if columns is None:
        columns = list(rows[0].keys()) if len(rows) > 0 else []
    df = DataFrame(rows, columns=columns)

    renamed: dict[str, str] = {}
    for column in df.columns:
        new_name, power = unit_key(column, log_base)
        if power > 0:
            df[column] = in_unit(df[column].astype(float), log_base, power=power)
            renamed[column] = new_name
    return df.rename(columns=renamed)


def convert_meta_units(meta: dict[str, Any], log_base: LogBase) -> dict[str, Any]:
    """
        Same renaming as convert_rows_to_pandas for scalar metadata entries. None values keep their key renamed.
    """
    converted: dict[str, Any] = {}
    for key, value in meta.items():
        new_name, power = unit_key(key, log_base)
        if power > 0 and value is not None:
            value = float(in_unit(float(value), log_base, power=power))
        converted[new_name] = value
    return converted
