"""Discrete-time linear plant model, simulation, and LQR synthesis.

Includes the benchmark plant used throughout: a chain of three masses
coupled by springs to each other and to two walls, actuated by forces on
the outer masses, discretized exactly under a zero-order hold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import ConvergenceError
from .trajectory import Trajectory


@dataclass(frozen=True)
class LinearSystem:
    """Discrete-time model x(t+1) = A x(t) + B u(t), y(t) = C x(t)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        B = np.array(self.B, dtype=float)
        C = np.array(self.C, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got shape {A.shape}")
        if B.ndim != 2 or B.shape[0] != A.shape[0]:
            raise ValueError(f"B must have {A.shape[0]} rows, got shape {B.shape}")
        if C.ndim != 2 or C.shape[1] != A.shape[0]:
            raise ValueError(f"C must have {A.shape[0]} columns, got shape {C.shape}")
        for name, M in (("A", A), ("B", B), ("C", C)):
            if not np.all(np.isfinite(M)):
                raise ValueError(f"{name} contains non-finite entries")
            M.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "n_x": self.n_x,
            "n_u": self.n_u,
            "n_y": self.n_y,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearSystem":
        sys = cls(A=np.asarray(d["A"]), B=np.asarray(d["B"]), C=np.asarray(d["C"]))
        for key in ("n_x", "n_u", "n_y"):
            if key in d and int(d[key]) != getattr(sys, key):
                raise ValueError(f"declared {key}={d[key]} inconsistent with matrices")
        return sys


def continuous_oscillating_masses(mass: float, spring: float) -> tuple[np.ndarray, np.ndarray]:
    """Continuous-time (A, B) of the three-mass spring chain.

    State ordering is (p1, p2, p3, v1, v2, v3); forces act on masses 1
    and 3 only, so the input matrix touches only velocity rows.
    """
    if mass <= 0 or spring <= 0:
        raise ValueError("mass and spring must be positive")
    stiffness = spring * np.array(
        [[-2.0, 1.0, 0.0], [1.0, -2.0, 1.0], [0.0, 1.0, -2.0]]
    )
    A_c = np.zeros((6, 6))
    A_c[:3, 3:] = np.eye(3)
    A_c[3:, :3] = stiffness / mass
    B_c = np.zeros((6, 2))
    B_c[3, 0] = 1.0 / mass
    B_c[5, 1] = 1.0 / mass
    return A_c, B_c


def make_oscillating_masses(
    mass: float = 1.0, spring: float = 2.0, sample_time: float = 0.2
) -> LinearSystem:
    """Zero-order-hold discretization of the three-mass spring chain.

    The output selects the three positions.  Discretization is exact:
    the matrix exponential of the augmented [[A, B], [0, 0]] system.
    """
    if sample_time <= 0:
        raise ValueError("sample_time must be positive")
    A_c, B_c = continuous_oscillating_masses(mass, spring)
    n_x, n_u = B_c.shape
    aug = np.zeros((n_x + n_u, n_x + n_u))
    aug[:n_x, :n_x] = A_c
    aug[:n_x, n_x:] = B_c
    aug_d = expm(aug * sample_time)
    A = aug_d[:n_x, :n_x]
    B = aug_d[:n_x, n_x:]
    C = np.hstack([np.eye(3), np.zeros((3, 3))])
    return LinearSystem(A=A, B=B, C=C)


def simulate(sys: LinearSystem, x0: np.ndarray, U: np.ndarray) -> Trajectory:
    """Roll the open-loop recursion x_{k+1} = A x_k + B u_k for the given inputs."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if x0.shape != (sys.n_x,):
        raise ValueError(f"x0 must have length {sys.n_x}, got {x0.shape}")
    if U.shape[1] != sys.n_u:
        raise ValueError(f"inputs must have {sys.n_u} columns, got {U.shape}")
    N = U.shape[0]
    X = np.empty((N + 1, sys.n_x))
    Y = np.empty((N, sys.n_y))
    X[0] = x0
    for k in range(N):
        Y[k] = sys.C @ X[k]
        X[k + 1] = sys.A @ X[k] + sys.B @ U[k]
    return Trajectory(X=X, U=U, Y=Y)


def _riccati_map(P, A, B, Q, R):
    BtPA = B.T @ P @ A
    P_next = Q + A.T @ P @ A - BtPA.T @ np.linalg.solve(R + B.T @ P @ B, BtPA)
    return 0.5 * (P_next + P_next.T)


def _check_pd(M: np.ndarray, name: str):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    if not np.allclose(M, M.T, rtol=0, atol=1e-10):
        raise ValueError(f"{name} must be symmetric")
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise ValueError(f"{name} must be positive definite") from None
    return M


def solve_dare(
    A: np.ndarray,
    B: np.ndarray,
    Q: np.ndarray,
    R: np.ndarray,
    max_iters: int = 100_000,
) -> np.ndarray:
    """Fixed-point Riccati iteration for the discrete algebraic Riccati equation.

    Iterates P <- Q + A'PA - A'PB (R + B'PB)^{-1} B'PA from P = Q until
    successive iterates agree to 1e-12 relative Frobenius norm, then
    certifies that the returned P satisfies the equation to 1e-9.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Q = _check_pd(Q, "Q")
    R = _check_pd(R, "R")
    P = Q.copy()
    diff = np.inf
    for _ in range(max_iters):
        P_next = _riccati_map(P, A, B, Q, R)
        diff = np.linalg.norm(P_next - P, "fro") / max(np.linalg.norm(P_next, "fro"), 1e-300)
        P = P_next
        if diff <= 1e-12:
            residual = np.linalg.norm(P - _riccati_map(P, A, B, Q, R), "fro")
            residual /= max(np.linalg.norm(P, "fro"), 1e-300)
            if residual <= 1e-9:
                return P
            break
    raise ConvergenceError(
        f"Riccati iteration did not converge within {max_iters} iterations "
        f"(last relative update {diff:.3e})",
        residual=float(diff),
    )


def lqr_gain(A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Infinite-horizon LQR gain K = (R + B'PB)^{-1} B'PA for u = -K x."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    P = solve_dare(A, B, Q, R)
    return np.linalg.solve(np.asarray(R, dtype=float) + B.T @ P @ B, B.T @ P @ A)


def rollout_lqr(sys: LinearSystem, K: np.ndarray, x0: np.ndarray, N: int) -> Trajectory:
    """Closed-loop rollout under u_k = -K x_k for N steps.

    Inputs are applied as computed; no saturation is imposed.
    """
    K = np.asarray(K, dtype=float)
    if K.shape != (sys.n_u, sys.n_x):
        raise ValueError(f"K must be {sys.n_u}x{sys.n_x}, got {K.shape}")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (sys.n_x,):
        raise ValueError(f"x0 must have length {sys.n_x}, got {x0.shape}")
    if N < 1:
        raise ValueError("N must be positive")
    X = np.empty((N + 1, sys.n_x))
    U = np.empty((N, sys.n_u))
    Y = np.empty((N, sys.n_y))
    X[0] = x0
    for k in range(N):
        U[k] = -K @ X[k]
        Y[k] = sys.C @ X[k]
        X[k + 1] = sys.A @ X[k] + sys.B @ U[k]
    return Trajectory(X=X, U=U, Y=Y)
