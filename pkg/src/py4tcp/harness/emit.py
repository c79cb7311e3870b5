"""
    Result files for plotting: CSV with `#`-prefixed metadata lines, or JSON {meta, rows}.
    Floats are written with 17 significant digits so that re-reading recovers them bit for bit.
"""
from __future__ import annotations
from typing import Any, Mapping, Optional
from pandas import DataFrame
from py4tcp.custom_types import OutputFormat
from py4tcp.exceptions import EmitError
import json
import logging
import numpy as np
import pandas as pd


logger = logging.getLogger(__name__)

META_PREFIX: str = "# "
FLOAT_FORMAT: str = "%.17g"
GIT_DESCRIBE_PLACEHOLDER: str = "unknown"


def _to_native(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


def _with_version(meta: Optional[Mapping[str, Any]]) -> dict[str, Any]:
    out: dict[str, Any] = dict(meta or {})
    out.setdefault("git_describe", GIT_DESCRIBE_PLACEHOLDER)
    return out


def render(df: DataFrame, fmt: OutputFormat | str, meta: Optional[Mapping[str, Any]] = None) -> str:
    """
        Serializes a result table and its metadata into the text of an output file.
    """
    meta = _with_version(meta)
    if OutputFormat(fmt) == OutputFormat.JSON:
        document = {"meta": meta, "rows": df.to_dict(orient="records")}
        return json.dumps(document, indent=2, default=_to_native) + "\n"

    lines = [f"{META_PREFIX}{key}: {json.dumps(value, default=_to_native)}" for key, value in meta.items()]
    body = df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return "\n".join(lines) + "\n" + body


def emit(df: DataFrame,
         fmt: OutputFormat | str,
         path: str,
         meta: Optional[Mapping[str, Any]] = None) -> str:
    """
        Writes a result table.

        Parameters
        ----------
        df : DataFrame
            Rows in their final column order and units.
        fmt : OutputFormat | str
            "csv" or "json".
        path : str
            Output path.
        meta : Mapping[str, Any], optional
            Config echo and run metadata. A git-describe placeholder is added when missing.

        Returns
        -------
        str
            The path written.

        Raises
        ------
        EmitError
            The file could not be written.
    """
    text = render(df, fmt, meta)
    try:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
    except OSError as exc:
        logger.error(f"EMIT -- write({path}) -- FAILED")
        raise EmitError(exc.strerror or str(exc), path) from exc
    logger.debug(f"EMIT -- write({path}, rows={len(df)}) -- OK")
    return path


def read_emitted(path: str) -> tuple[DataFrame, dict[str, Any]]:
    """
        Reads a file written by emit back into its table and metadata.
    """
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise EmitError(exc.strerror or str(exc), path) from exc

    if text.lstrip().startswith("{"):
        document = json.loads(text)
        return DataFrame(document["rows"]), document["meta"]

    meta: dict[str, Any] = {}
    lines = text.splitlines()
    skip = 0
    while skip < len(lines) and lines[skip].startswith(META_PREFIX):
        key, _, value = lines[skip][len(META_PREFIX):].partition(": ")
        meta[key] = json.loads(value)
        skip += 1
    df = pd.read_csv(path, skiprows=skip, float_precision="round_trip", encoding="utf-8")
    return df, meta
