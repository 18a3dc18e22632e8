"""Learned and geometric self-collision checking for serial robot arms."""

from .errors import (
    ClassStarvation,
    DegenerateTriangle,
    DimensionMismatch,
    EmptyDataset,
    EmptyMesh,
    FormatError,
    MismatchedBvh,
    NonFiniteLoss,
    SelfCollideError,
    SingleClassData,
    SingularCovariance,
    UnknownPreset,
)

__version__ = "0.1.0"

__all__ = [
    "ClassStarvation",
    "DegenerateTriangle",
    "DimensionMismatch",
    "EmptyDataset",
    "EmptyMesh",
    "FormatError",
    "MismatchedBvh",
    "NonFiniteLoss",
    "SelfCollideError",
    "SingleClassData",
    "SingularCovariance",
    "UnknownPreset",
    "__version__",
]
