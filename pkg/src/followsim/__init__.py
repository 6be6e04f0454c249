"""Leader-following robot pipeline at desk scale: beacon bearing estimation,
multimodal leader tracking, and reactive metric-weighted navigation inside
a deterministic simulator."""

from .config import PipelineConfig
from .metrics import RunMetrics, compute_metrics
from .rf import (
    AoAEstimate,
    AoaEstimator,
    ArrayGeometry,
    IQSnapshot,
    align_tdm,
    median_filter3,
    music_estimate,
    smoothed_covariance,
    steering_vector,
)
from .runner import RunResult, run_simulation
from .scenario import Scenario, ScenarioError, load_scenario
from .tracker import LeaderTracker, TrackerStatus

__all__ = [
    "AoAEstimate",
    "AoaEstimator",
    "ArrayGeometry",
    "IQSnapshot",
    "LeaderTracker",
    "PipelineConfig",
    "RunMetrics",
    "RunResult",
    "Scenario",
    "ScenarioError",
    "TrackerStatus",
    "align_tdm",
    "compute_metrics",
    "load_scenario",
    "median_filter3",
    "music_estimate",
    "run_simulation",
    "smoothed_covariance",
    "steering_vector",
]

__version__ = "0.1.0"
