"""Synthetic preference functions and the label-agreement metric.

Each preference function returns 1 when its first trajectory argument is
preferred (ties resolve to the first argument) and 0 otherwise, standing
in for a human labeler in experiments.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .trajectory import Trajectory, max_input_inf_norm, quad_cost, settling_time


def _check_compatible(ti: Trajectory, tj: Trajectory):
    if ti.N != tj.N:
        raise ValueError(f"trajectories have different horizons: {ti.N} vs {tj.N}")
    if ti.X.shape != tj.X.shape or ti.U.shape != tj.U.shape or ti.Y.shape != tj.Y.shape:
        raise ValueError("trajectories have mismatched dimensions")


def pref_quadratic(ti: Trajectory, tj: Trajectory, Q: np.ndarray, R: np.ndarray) -> int:
    """Prefer the trajectory with the smaller stage-wise quadratic cost."""
    _check_compatible(ti, tj)
    return 1 if quad_cost(ti, Q, R) <= quad_cost(tj, Q, R) else 0


def pref_input(ti: Trajectory, tj: Trajectory) -> int:
    """Prefer the trajectory with the smaller peak input magnitude."""
    _check_compatible(ti, tj)
    return 1 if max_input_inf_norm(ti) <= max_input_inf_norm(tj) else 0


def pref_settling(ti: Trajectory, tj: Trajectory, eps: float) -> int:
    """Prefer the trajectory with the smaller output settling time.

    Equal settling times (including two never-settling trajectories,
    which share the sentinel index) fall back to the peak-input rule.
    """
    _check_compatible(ti, tj)
    ki = settling_time(ti, eps).index
    kj = settling_time(tj, eps).index
    if ki < kj:
        return 1
    if ki > kj:
        return 0
    return pref_input(ti, tj)


def accuracy(surrogate_labels: Sequence[int], oracle_labels: Sequence[int]) -> float:
    """Fraction of positions where the two label sequences agree."""
    a = np.asarray(surrogate_labels)
    b = np.asarray(oracle_labels)
    if a.ndim != 1 or b.ndim != 1:
        raise ValueError("label sequences must be one-dimensional")
    if len(a) != len(b):
        raise ValueError(f"label sequences differ in length: {len(a)} vs {len(b)}")
    if len(a) == 0:
        raise ValueError("label sequences are empty")
    return float(np.mean(a == b))
