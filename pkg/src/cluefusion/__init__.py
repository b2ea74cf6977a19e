"""Time and location inference for images by fusing visual clues, reasoning and web evidence."""

from .config import PipelineConfig
from .core import Candidate, Clue, ImageTask, LocationValue, Prediction, TaskTrace
from .pipeline import run_dataset, run_task, sweep

__version__ = "0.1.0"

__all__ = [
    "Candidate", "Clue", "ImageTask", "LocationValue", "PipelineConfig", "Prediction",
    "TaskTrace", "run_dataset", "run_task", "sweep",
]
