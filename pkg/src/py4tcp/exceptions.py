class Py4TcpException(Exception):
    pass


class DistributionError(Py4TcpException, ValueError):
    pass


class DimensionError(Py4TcpException, ValueError):
    pass


class DomainError(Py4TcpException, ValueError):
    pass


class PreconditionError(Py4TcpException, ValueError):
    pass


class DegenerateChannelError(Py4TcpException, ValueError):
    pass


class InfiniteEntropyError(Py4TcpException, ValueError):
    pass


class MemoryBudgetError(Py4TcpException, MemoryError):
    pass


class ConfigError(Py4TcpException, ValueError):
    pass


class DatasetFormatError(Py4TcpException, ValueError):

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line: int | None = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmitError(Py4TcpException, OSError):

    def __init__(self, message: str, path: str) -> None:
        self.path: str = path
        super().__init__(f"{path}: {message}")
