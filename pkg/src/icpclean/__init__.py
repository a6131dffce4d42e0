"""Conformal-prediction cleaning of noisy training labels."""

from .cpsc import CpscConfig, CpscModel
from .dataset import Dataset, FourWaySplit, LabelSpace, NoiseSpec, SplitSpec, load_csv, permute_labels, split
from .icp import CalibrationScores, CleaningPolicy, CleaningReport, PValueMatrix, calibrate, clean, p_values

__version__ = "0.1.0"

__all__ = [
    "CalibrationScores", "CleaningPolicy", "CleaningReport", "CpscConfig", "CpscModel",
    "Dataset", "FourWaySplit", "LabelSpace", "NoiseSpec", "PValueMatrix", "SplitSpec",
    "calibrate", "clean", "load_csv", "p_values", "permute_labels", "split",
]
