from .engine import (
    OFF,
    AlignmentConfig,
    AlignmentState,
    AlignmentUpdate,
    Interval,
    StepSegmentation,
    init_alignment,
)
from .kernels import KERNEL_BACKEND, viterbi_step
from .oracle import brute_force_align

__all__ = [
    "OFF",
    "AlignmentConfig",
    "AlignmentState",
    "AlignmentUpdate",
    "Interval",
    "StepSegmentation",
    "init_alignment",
    "KERNEL_BACKEND",
    "viterbi_step",
    "brute_force_align",
]
