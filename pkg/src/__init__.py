"""
Neighbor-Graph Tracker - Asociación online en cascada con grafos de vecinos
"""

from .core_model import (
    BoundingBox,
    Detection,
    Track,
    TrackState,
    TrackerConfig,
    AssociationResult,
    TrackingError,
    InvalidInputError,
    NumericalError,
    ParseError,
    SchemaError,
    ConfigError,
)
from .motion import KalmanBoxFilter, KalmanState
from .neighbor_graph import GcnModel, NeighborGraph
from .cascade_tracker import CascadeTracker, CascadeStats, TrackerState
from .clearmot_metrics import ClearMotEvaluator, EvalReport
from .synth_harness import ScenarioSpec

__all__ = [
    'BoundingBox',
    'Detection',
    'Track',
    'TrackState',
    'TrackerConfig',
    'AssociationResult',
    'TrackingError',
    'InvalidInputError',
    'NumericalError',
    'ParseError',
    'SchemaError',
    'ConfigError',
    'KalmanBoxFilter',
    'KalmanState',
    'GcnModel',
    'NeighborGraph',
    'CascadeTracker',
    'CascadeStats',
    'TrackerState',
    'ClearMotEvaluator',
    'EvalReport',
    'ScenarioSpec',
]
