from .hyperclean import HyperCleanDataset, HyperCleanProblem, corrupt_labels, make_hyperclean_synthetic
from .idx import IDXFormatError, load_idx, read_idx_images, read_idx_labels
from .synthetic import (
    ExactSolution,
    SyntheticDataset,
    SyntheticProblem,
    make_synthetic,
    synthetic_exact,
)

__all__ = [
    "ExactSolution",
    "HyperCleanDataset",
    "HyperCleanProblem",
    "IDXFormatError",
    "SyntheticDataset",
    "SyntheticProblem",
    "corrupt_labels",
    "load_idx",
    "make_hyperclean_synthetic",
    "make_synthetic",
    "read_idx_images",
    "read_idx_labels",
    "synthetic_exact",
]
