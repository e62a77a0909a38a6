"""Cross-year bike-share demand transfer with generator-aligned robust optimal transport."""

from .config import ExperimentConfig
from .pipeline import MethodId, PipelineConfig, run_method

__version__ = "0.1.0"

__all__ = ["ExperimentConfig", "MethodId", "PipelineConfig", "run_method", "__version__"]
