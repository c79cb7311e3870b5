# __init__.py
from py4tcp.custom_types.enums import (BoundKind, ConstraintDirection, ExperimentKind, Hypothesis,
                                       LogBase, OutputFormat)
from py4tcp.custom_types.distributions import CategoricalDist, ChannelModel, EmpiricalType, LogCondStats
from py4tcp.custom_types.reports import (BonferroniResult, BoundReport, CalibrationScores, ExponentEstimate,
                                         ExponentProblem, ExponentSolution, GjsConstraint, GutmanConfig,
                                         GutmanOutcome, GutmanRecord, IdealizedEval, QRefStats,
                                         SymmetricChannelSpec, TypeBounds)
from py4tcp.custom_types.experiments import ExperimentConfig, ScoreDataset
