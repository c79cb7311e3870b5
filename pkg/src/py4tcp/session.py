from __future__ import annotations
from typing import Optional
import logging


class TcpSession(object):

    def __init__(self,
                 show_prints: Optional[bool] = True,
                 exception_on_error: Optional[bool] = False,
                 log_file: Optional[str] = "./tlab_logs.log",
                 log_level: Optional[int] = logging.DEBUG) -> None:
        """
            A class holds a TLAB SESSION, i.e. the run-wide switches shared by the experiment classes.

            Attributes
            ----------
            show_prints: bool, optional
                If True, messages will be printed.
            exception_on_error : bool, optional
                If True, the exception will be raised on error. By default is set to False.
            log_file : str, optional
                Path to a log file. DEFAULT: "./tlab_logs.log"
            log_level : int, optional
                Level of the root logger. DEFAULT: logging.DEBUG

            Methods
            -------
            report_error(log_msg: str, user_msg: str) -> None
                Logs a FAILED message and either raises or prints, depending on exception_on_error.
        """
        self.exception_on_error: bool = exception_on_error
        self.show_prints: bool = show_prints

        # Initialise logging
        self.log_path: str = log_file
        self.logging = logging
        self.logging.basicConfig(filename=log_file,
                                 filemode="w",
                                 level=log_level,
                                 format='%(asctime)s - %(levelname)s - %(name)s - %(message)s')
        self.logging.debug("Initialise tlab session -- OK")

    def report_error(self, log_msg: str, user_msg: str) -> None:
        """
            Handles an error of an experiment step.

            Parameters
            ----------
            log_msg : str
                Message prefix written to the log file with the FAILED suffix.
            user_msg : str
                Message raised or printed to the user.

            Returns
            -------
            None
        """
        # imported here, exceptions has no dependency on the session
        from py4tcp.exceptions import Py4TcpException

        self.logging.error(f"{log_msg} -- FAILED")
        if self.exception_on_error:
            raise Py4TcpException(f"{user_msg} See log file, please.")
        if self.show_prints:
            print(f"{user_msg} See log file, please.")
