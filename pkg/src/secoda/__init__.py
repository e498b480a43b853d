"""SECODA: iterative discretization anomaly detection for mixed tabular data."""

__version__ = "0.1.0"

from .data_model import MISSING, Dataset, Kind, LabeledDataset, Schema, load_csv
from .detector import DetectionConfig, DetectionResult, detect
from .discretizer import RangePolicy, discretize
from .synth import GeneratorSpec, generate

__all__ = [
    "MISSING",
    "Dataset",
    "DetectionConfig",
    "DetectionResult",
    "GeneratorSpec",
    "Kind",
    "LabeledDataset",
    "RangePolicy",
    "Schema",
    "detect",
    "discretize",
    "generate",
    "load_csv",
]
