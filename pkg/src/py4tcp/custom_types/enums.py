from strenum import StrEnum


class BoundKind(StrEnum):
    CONVERSE_EXACT = "converse_exact"
    CONVERSE_APPROX = "converse_approx"
    ACHIEVABILITY = "achievability"
    GENERAL_Q = "general_q"
    FANO = "fano"
    TRIVIAL = "trivial"


class Hypothesis(StrEnum):
    H1 = "H1"
    H2 = "H2"


class ConstraintDirection(StrEnum):
    BELOW = "<"
    AT_LEAST = ">="


class LogBase(StrEnum):
    NATS = "nats"
    BITS = "bits"


class OutputFormat(StrEnum):
    CSV = "csv"
    JSON = "json"


class ExperimentKind(StrEnum):
    BOUNDS_CURVE = "bounds_curve"
    ALPHA_SWEEP = "alpha_sweep"
    BONFERRONI_COMPARE = "bonferroni_compare"
    GUTMAN_SIM = "gutman_sim"
    EXPONENT_TABLE = "exponent_table"
    THEOREM1_AUDIT = "theorem1_audit"
