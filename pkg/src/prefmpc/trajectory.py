"""Finite trajectories and the scalar metrics evaluated on them.

A trajectory of horizon N holds N+1 states, N inputs and N outputs.  The
three metrics below (stage-wise quadratic cost, output settling time and
peak input magnitude) are the quantities preference oracles and closed-loop
evaluations are built from.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _frozen_array(x, name: str, ndim: int = 2) -> np.ndarray:
    arr = np.array(x, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Trajectory:
    """State/input/output sequences (X, U, Y) over a horizon of N steps.

    X has shape (N+1, n_x) with rows x_0..x_N, U has shape (N, n_u) with
    rows u_0..u_{N-1}, Y has shape (N, n_y) with rows y_0..y_{N-1}.
    """

    X: np.ndarray
    U: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = _frozen_array(self.X, "X")
        U = _frozen_array(self.U, "U")
        Y = _frozen_array(self.Y, "Y")
        if len(U) < 1:
            raise ValueError("trajectory horizon must be positive")
        if len(X) != len(U) + 1:
            raise ValueError(f"X must have N+1={len(U) + 1} rows, got {len(X)}")
        if len(Y) != len(U):
            raise ValueError(f"Y must have N={len(U)} rows, got {len(Y)}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "Y", Y)

    @property
    def N(self) -> int:
        return len(self.U)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.X.shape == other.X.shape
            and self.U.shape == other.U.shape
            and self.Y.shape == other.Y.shape
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.U, other.U)
            and np.array_equal(self.Y, other.Y)
        )

    def to_dict(self) -> dict:
        """Wire format: {"N", "X", "U", "Y"} with one row per timestep."""
        return {
            "N": self.N,
            "X": self.X.tolist(),
            "U": self.U.tolist(),
            "Y": self.Y.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Trajectory":
        traj = cls(X=np.asarray(d["X"]), U=np.asarray(d["U"]), Y=np.asarray(d["Y"]))
        if "N" in d and int(d["N"]) != traj.N:
            raise ValueError(f"declared N={d['N']} does not match {traj.N} inputs")
        return traj


@dataclass(frozen=True)
class SettlingResult:
    """Outcome of a settling-time scan.

    ``index`` is the first step after which the output norm stays at or
    below the threshold.  When the trajectory never settles, ``settled``
    is False and ``index`` holds the sentinel value N.
    """

    settled: bool
    index: int


def quad_cost(traj: Trajectory, Q: np.ndarray, R: np.ndarray) -> float:
    """Stage-wise quadratic cost sum_{k=0}^{N-1} x_k'Q x_k + u_k'R u_k.

    The terminal state x_N is not penalized.
    """
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    n_x = traj.X.shape[1]
    n_u = traj.U.shape[1]
    if Q.shape != (n_x, n_x):
        raise ValueError(f"Q must be {n_x}x{n_x}, got {Q.shape}")
    if R.shape != (n_u, n_u):
        raise ValueError(f"R must be {n_u}x{n_u}, got {R.shape}")
    total = 0.0
    for k in range(traj.N):
        x = traj.X[k]
        u = traj.U[k]
        total += float(x @ Q @ x + u @ R @ u)
    return total


def settling_time(traj: Trajectory, eps: float) -> SettlingResult:
    """Smallest k such that ||y_l||_2 <= eps for every l in [k, N-1].

    Returns the sentinel ``SettlingResult(False, N)`` when even the final
    output exceeds the threshold.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    norms = np.linalg.norm(traj.Y, axis=1)
    above = np.nonzero(norms > eps)[0]
    if len(above) == 0:
        return SettlingResult(settled=True, index=0)
    k = int(above[-1]) + 1
    if k >= traj.N:
        return SettlingResult(settled=False, index=traj.N)
    return SettlingResult(settled=True, index=k)


def max_input_inf_norm(traj: Trajectory) -> float:
    """Largest per-step infinity norm of the input sequence."""
    if traj.U.size == 0:
        raise ValueError("trajectory has no inputs")
    return float(np.max(np.abs(traj.U)))


def stage_grams(traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """Gram matrices (sum_k x_k x_k', sum_k u_k u_k') over k = 0..N-1.

    The quadratic cost equals <Q, S_x> + <R, S_u> for these sums, which
    lets cost evaluation over many weight matrices reuse one pass over
    the trajectory.
    """
    Xs = traj.X[: traj.N]
    Sx = Xs.T @ Xs
    Su = traj.U.T @ traj.U
    return Sx, Su
