from __future__ import annotations
from typing import Any, Optional
from pandas import DataFrame
from py4tcp.custom_types import ExperimentConfig
from py4tcp.exceptions import EmitError
from py4tcp.harness.emit import emit
from py4tcp.harness.experiments import Experiments
from py4tcp.session import TcpSession
from py4tcp.utils import print_progress
from tabulate import tabulate


MAX_TABLE_ROWS: int = 40
FLOAT_DIGITS: str = ".6g"


class ExperimentsCLI(object):
    """
        A class holds methods to run experiments using INTERACTIVE mode.

        Attributes
        ----------
        session : TcpSession
            Class that holds the tlab session.
        print_content : bool, optional
            If True then the full result tables will be printed.

        Methods
        -------
        run(cfg: ExperimentConfig) -> bool
            Runs an experiment, prints its table and writes cfg.output.

        print_table(df: DataFrame, meta: dict) -> None
            Prints a result table in the grid format.
    """

    def __init__(self,
                 session: TcpSession,
                 print_content: Optional[bool] = False) -> None:
        self.session: TcpSession = session
        self.print_content: bool = print_content
        self._label: str = "Progress"
        progress = self._progress if session.show_prints else None
        self.experiments: Experiments = Experiments(session,
                                                    print_content=False,
                                                    suppress_print=not session.show_prints,
                                                    progress=progress)

    def _progress(self, done: int, total: int) -> None:
        print_progress(done, total, label=self._label)

    def print_table(self, df: DataFrame, meta: dict[str, Any]) -> None:
        """
            Prints the result table with tabulate's grid format, truncated unless print_content is set.

            Parameters
            ----------
            df : DataFrame
                Result rows.
            meta : dict
                Metadata; entries that are not config fields are listed under the table.

            Returns
            -------
            None
        """
        shown = df if self.print_content or len(df) <= MAX_TABLE_ROWS else df.head(MAX_TABLE_ROWS)
        print(tabulate(shown.values.tolist(), list(df.columns), tablefmt="grid", floatfmt=FLOAT_DIGITS))
        if len(shown) < len(df):
            print(f"... {len(df) - len(shown)} more rows")

        config_fields = set(ExperimentConfig.__dataclass_fields__)
        summary = [[key, value] for key, value in meta.items()
                   if key not in config_fields and not isinstance(value, dict)]
        if summary:
            print(tabulate(summary, ["Summary", "Value"], tablefmt="grid", floatfmt=FLOAT_DIGITS))

    def run(self, cfg: ExperimentConfig) -> bool:
        """
            Runs an experiment, prints its table and writes cfg.output in cfg.fmt.

            Parameters
            ----------
            cfg : ExperimentConfig
                Experiment configuration.

            Returns
            -------
            bool
                True on success.
        """
        self._label = str(cfg.kind)
        df, meta = self.experiments.run(cfg)
        if df is None:
            return False

        if self.session.show_prints:
            self.print_table(df, meta)

        if cfg.output is not None:
            try:
                emit(df, cfg.fmt, cfg.output, meta)
            except EmitError as exc:
                self.session.report_error(f"EMIT -- {cfg.output}", f"Writing results failed: {exc}.")
                return False
            if self.session.show_prints:
                print(f"Results written to {cfg.output} -- OK")
        return True
