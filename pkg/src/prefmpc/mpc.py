"""Receding-horizon controller with a quadratic cost and input box bounds.

The finite-horizon problem is condensed: predicted states are eliminated
through the dynamics, leaving a dense strictly convex QP in the stacked
input sequence.  Stage costs run over x_0..x_{N-1} and u_0..u_{N-1}; the
terminal state carries no penalty and there is no terminal set.

The box-constrained QP is solved by accelerated projected gradient descent
with a fixed step of 1/lambda_max(H); the unconstrained minimizer is used
directly whenever it is feasible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .linsys import LinearSystem
from .trajectory import Trajectory, max_input_inf_norm, quad_cost, settling_time

PG_TOL = 1e-8
MAX_QP_ITERS = 5000


@dataclass(frozen=True)
class MpcSpec:
    """System, horizon, cost weights, and optional symmetric-feasible input box."""

    system: LinearSystem
    horizon: int
    Q: np.ndarray
    R: np.ndarray
    u_lo: np.ndarray | None = None
    u_hi: np.ndarray | None = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        Q = np.array(self.Q, dtype=float)
        R = np.array(self.R, dtype=float)
        n_x, n_u = self.system.n_x, self.system.n_u
        if Q.shape != (n_x, n_x):
            raise ValueError(f"Q must be {n_x}x{n_x}, got {Q.shape}")
        if R.shape != (n_u, n_u):
            raise ValueError(f"R must be {n_u}x{n_u}, got {R.shape}")
        for name, M in (("Q", Q), ("R", R)):
            if not np.allclose(M, M.T, rtol=0, atol=1e-10):
                raise ValueError(f"{name} must be symmetric")
            M.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        if (self.u_lo is None) != (self.u_hi is None):
            raise ValueError("u_lo and u_hi must be given together")
        if self.u_lo is not None:
            lo = np.array(self.u_lo, dtype=float).reshape(-1)
            hi = np.array(self.u_hi, dtype=float).reshape(-1)
            if lo.shape != (n_u,) or hi.shape != (n_u,):
                raise ValueError(f"input bounds must have length {n_u}")
            if np.any(lo > 0) or np.any(hi < 0):
                raise ValueError("input box must contain the origin (u_lo <= 0 <= u_hi)")
            lo.setflags(write=False)
            hi.setflags(write=False)
            object.__setattr__(self, "u_lo", lo)
            object.__setattr__(self, "u_hi", hi)

    @property
    def bounded(self) -> bool:
        return self.u_lo is not None


@dataclass(frozen=True)
class QpProblem:
    """min 0.5 U'HU + f'U subject to lb <= U <= ub (bounds optional)."""

    H: np.ndarray
    f: np.ndarray
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        H = np.array(self.H, dtype=float)
        f = np.array(self.f, dtype=float).reshape(-1)
        if H.ndim != 2 or H.shape[0] != H.shape[1] or H.shape[0] != len(f):
            raise ValueError(f"inconsistent QP shapes: H {H.shape}, f {f.shape}")
        if np.max(np.abs(H - H.T)) > 1e-10:
            raise ValueError("H must be symmetric to 1e-10")
        H = 0.5 * (H + H.T)
        H.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "f", f)
        if (self.lb is None) != (self.ub is None):
            raise ValueError("lb and ub must be given together")
        if self.lb is not None:
            lb = np.array(self.lb, dtype=float).reshape(-1)
            ub = np.array(self.ub, dtype=float).reshape(-1)
            if lb.shape != f.shape or ub.shape != f.shape:
                raise ValueError("bound vectors must match f in length")
            lb.setflags(write=False)
            ub.setflags(write=False)
            object.__setattr__(self, "lb", lb)
            object.__setattr__(self, "ub", ub)


def estimate_max_eigenvalue(H: np.ndarray, iters: int = 100, tol: float = 1e-6) -> float:
    """Power-iteration estimate of the largest eigenvalue of symmetric PD H."""
    rng = np.random.default_rng(0)
    v = rng.standard_normal(H.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = H @ v
        lam_new = float(v @ w)
        v = w / np.linalg.norm(w)
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1e-300):
            lam = lam_new
            break
        lam = lam_new
    return lam * (1.0 + 1e-6)


def _project(x, lb, ub):
    return np.minimum(np.maximum(x, lb), ub)


def _apgd_box(H, f, lb, ub, x0, lam_max, tol, max_iters):
    """Accelerated projected gradient with restart on momentum reversal."""
    step = 1.0 / lam_max
    x = _project(x0, lb, ub)
    y = x.copy()
    t = 1.0
    best_x = x
    best_obj = 0.5 * x @ (H @ x) + f @ x
    for it in range(1, max_iters + 1):
        g_y = H @ y + f
        x_new = _project(y - step * g_y, lb, ub)
        g_x = H @ x_new + f
        pg = (x_new - _project(x_new - step * g_x, lb, ub)) / step
        obj = 0.5 * x_new @ (g_x + f)
        if obj < best_obj:
            best_obj = obj
            best_x = x_new
        if np.linalg.norm(pg) <= tol:
            return x_new, it, "optimal"
        if (y - x_new) @ (x_new - x) > 0:
            # momentum points uphill: restart acceleration
            t = 1.0
            y = x_new.copy()
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = x_new + ((t - 1.0) / t_new) * (x_new - x)
            y = _project(y, lb, ub)
            t = t_new
        x = x_new
    return best_x, max_iters, "max-iterations"


def _solve_box_qp_core(H, f, lb, ub, cho=None, lam_max=None, warm_start=None,
                       tol=PG_TOL, max_iters=MAX_QP_ITERS):
    if cho is None:
        cho = scipy.linalg.cho_factor(H)
    u_free = scipy.linalg.cho_solve(cho, -f)
    if lb is None:
        return u_free, 0, "optimal"
    if np.all(u_free >= lb) and np.all(u_free <= ub):
        return u_free, 0, "optimal"
    if lam_max is None:
        lam_max = estimate_max_eigenvalue(H)
    x0 = warm_start if warm_start is not None else u_free
    return _apgd_box(H, f, lb, ub, x0, lam_max, tol, max_iters)


def solve_box_qp(
    qp: QpProblem,
    warm_start: np.ndarray | None = None,
    tol: float = PG_TOL,
    max_iters: int = MAX_QP_ITERS,
) -> tuple[np.ndarray, int, str]:
    """Minimize the QP; returns (solution, iterations, status).

    Unbounded problems take a direct Cholesky solve (0 iterations).  The
    returned point is always feasible; status is "max-iterations" when
    the projected-gradient tolerance was not reached, in which case the
    best iterate seen is returned.
    """
    return _solve_box_qp_core(
        qp.H, qp.f, qp.lb, qp.ub, warm_start=warm_start, tol=tol, max_iters=max_iters
    )


class Condenser:
    """Per-spec condensed matrices, reused across time steps.

    With stacked inputs U and prediction matrices F, G over x_0..x_{N-1},
    the stage cost equals 0.5 U'HU + f'U + x'P0 x with H = 2(G'QbarG + Rbar)
    and f = 2 G'Qbar F x.  Only f depends on the measured state.
    """

    def __init__(self, spec: MpcSpec):
        self.spec = spec
        sys = spec.system
        N, n_x, n_u = spec.horizon, sys.n_x, sys.n_u
        F = np.zeros((N * n_x, n_x))
        G = np.zeros((N * n_x, N * n_u))
        Ak = np.eye(n_x)
        F[0:n_x] = Ak
        for k in range(1, N):
            # row block k: x_k = A^k x + sum_{j<k} A^{k-1-j} B u_j
            G[k * n_x:(k + 1) * n_x, (k - 1) * n_u: k * n_u] = sys.B
            for j in range(k - 1):
                block = sys.A @ G[(k - 1) * n_x: k * n_x, j * n_u:(j + 1) * n_u]
                G[k * n_x:(k + 1) * n_x, j * n_u:(j + 1) * n_u] = block
            Ak = sys.A @ Ak
            F[k * n_x:(k + 1) * n_x] = Ak
        Q_bar = np.kron(np.eye(N), spec.Q)
        R_bar = np.kron(np.eye(N), spec.R)
        H = 2.0 * (G.T @ Q_bar @ G + R_bar)
        self.H = 0.5 * (H + H.T)
        self.f_map = 2.0 * G.T @ Q_bar @ F
        self.const_map = F.T @ Q_bar @ F
        self.F = F
        self.G = G
        self._cho = scipy.linalg.cho_factor(self.H)
        self._lam_max: float | None = None
        if spec.bounded:
            self.lb = np.tile(spec.u_lo, N)
            self.ub = np.tile(spec.u_hi, N)
        else:
            self.lb = None
            self.ub = None

    def qp(self, x_t: np.ndarray) -> QpProblem:
        x_t = np.asarray(x_t, dtype=float).reshape(-1)
        if x_t.shape != (self.spec.system.n_x,):
            raise ValueError(f"state must have length {self.spec.system.n_x}")
        return QpProblem(H=self.H, f=self.f_map @ x_t, lb=self.lb, ub=self.ub)

    def solve(self, x_t: np.ndarray, warm_start: np.ndarray | None = None):
        x_t = np.asarray(x_t, dtype=float).reshape(-1)
        if self.lb is not None and self._lam_max is None:
            self._lam_max = estimate_max_eigenvalue(self.H)
        return _solve_box_qp_core(
            self.H, self.f_map @ x_t, self.lb, self.ub,
            cho=self._cho, lam_max=self._lam_max, warm_start=warm_start,
        )


def condense(spec: MpcSpec, x_t: np.ndarray) -> QpProblem:
    """Condensed QP over the stacked input sequence for the measured state."""
    return Condenser(spec).qp(x_t)


def mpc_step(spec: MpcSpec, x_t: np.ndarray) -> np.ndarray:
    """First input block of the optimal stacked sequence."""
    U, _, _ = solve_box_qp(condense(spec, x_t))
    return U[: spec.system.n_u]


@dataclass(frozen=True)
class ClosedLoopResult:
    """Closed-loop trajectory plus per-step solver diagnostics."""

    trajectory: Trajectory
    iterations: tuple[int, ...]
    statuses: tuple[str, ...]


def closed_loop(spec: MpcSpec, x0: np.ndarray, t_sim: int) -> ClosedLoopResult:
    """Simulate the controlled plant for t_sim steps from x0.

    The QP solve at each step is warm-started from the previous optimal
    sequence shifted by one block.
    """
    if t_sim < 1:
        raise ValueError("t_sim must be positive")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (spec.system.n_x,):
        raise ValueError(f"x0 must have length {spec.system.n_x}")
    return _closed_loop_with(Condenser(spec), x0, t_sim)


@dataclass(frozen=True)
class CampaignRow:
    """Per-simulation metrics for one named controller."""

    name: str
    costs: np.ndarray | None
    settle_idx: np.ndarray
    settled: np.ndarray
    max_inputs: np.ndarray
    trajectories: tuple[Trajectory, ...]


@dataclass(frozen=True)
class CampaignResult:
    rows: tuple[CampaignRow, ...]
    ref_name: str | None
    t_sim: int

    def row(self, name: str) -> CampaignRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(f"no campaign row named {name!r}")

    def ref_avg_cost(self) -> float:
        ref = self.row(self.ref_name if self.ref_name is not None else self.rows[0].name)
        if ref.costs is None:
            raise ValueError("campaign has no cost metric to normalize by")
        return float(np.mean(ref.costs))

    def cost_stats(self, name: str) -> dict[str, float | None]:
        """Average/extreme closed-loop cost, normalized by the reference average."""
        r = self.row(name)
        if r.costs is None:
            return {"avg": None, "max": None, "min": None}
        ref = self.ref_avg_cost()
        return {
            "avg": float(np.mean(r.costs)) / ref,
            "max": float(np.max(r.costs)) / ref,
            "min": float(np.min(r.costs)) / ref,
        }

    def settle_stats(self, name: str) -> dict[str, float]:
        r = self.row(name)
        return {"median": float(np.median(r.settle_idx)), "max": float(np.max(r.settle_idx))}

    def input_stats(self, name: str) -> dict[str, float]:
        r = self.row(name)
        return {"avg": float(np.mean(r.max_inputs)), "max": float(np.max(r.max_inputs))}


def evaluate_campaign(
    entries: list[tuple[str, MpcSpec | tuple[MpcSpec, ...] | list[MpcSpec]]],
    x0_set,
    perf_q: np.ndarray | None = None,
    perf_r: np.ndarray | None = None,
    settle_eps: float = 0.1,
    t_sim: int = 30,
    ref_name: str | None = None,
) -> CampaignResult:
    """Run every controller from every initial state and collect metrics.

    An entry maps a name to either one spec (reused for all initial
    states) or a per-simulation sequence of specs.  Closed-loop cost is
    evaluated with ``(perf_q, perf_r)`` when given; cost statistics are
    normalized by the average of the ``ref_name`` row (default: the
    first entry).
    """
    x0_set = [np.asarray(x, dtype=float) for x in x0_set]
    with_cost = perf_q is not None and perf_r is not None
    rows = []
    for name, spec_or_list in entries:
        if isinstance(spec_or_list, MpcSpec):
            specs = [spec_or_list] * len(x0_set)
            shared = Condenser(spec_or_list) if x0_set else None
        else:
            specs = list(spec_or_list)
            if len(specs) != len(x0_set):
                raise ValueError(
                    f"entry {name!r} provides {len(specs)} specs for {len(x0_set)} states"
                )
            shared = None
        costs = [] if with_cost else None
        settle_idx = []
        settled = []
        max_inputs = []
        trajectories = []
        for k, x0 in enumerate(x0_set):
            if shared is not None:
                cond = shared
            else:
                cond = Condenser(specs[k])
            traj = _closed_loop_with(cond, x0, t_sim).trajectory
            trajectories.append(traj)
            if with_cost:
                costs.append(quad_cost(traj, perf_q, perf_r))
            s = settling_time(traj, settle_eps)
            settle_idx.append(s.index)
            settled.append(s.settled)
            max_inputs.append(max_input_inf_norm(traj))
        rows.append(
            CampaignRow(
                name=name,
                costs=np.asarray(costs) if with_cost else None,
                settle_idx=np.asarray(settle_idx),
                settled=np.asarray(settled),
                max_inputs=np.asarray(max_inputs),
                trajectories=tuple(trajectories),
            )
        )
    return CampaignResult(rows=tuple(rows), ref_name=ref_name, t_sim=t_sim)


def _closed_loop_with(cond: Condenser, x0: np.ndarray, t_sim: int) -> ClosedLoopResult:
    sys = cond.spec.system
    n_u = sys.n_u
    X = np.empty((t_sim + 1, sys.n_x))
    U = np.empty((t_sim, n_u))
    Y = np.empty((t_sim, sys.n_y))
    X[0] = np.asarray(x0, dtype=float).reshape(-1)
    warm = None
    iterations = []
    statuses = []
    for k in range(t_sim):
        U_full, iters, status = cond.solve(X[k], warm_start=warm)
        if not np.all(np.isfinite(U_full)):
            raise FloatingPointError(f"QP solver returned non-finite input at step {k}")
        iterations.append(iters)
        statuses.append(status)
        U[k] = U_full[:n_u]
        Y[k] = sys.C @ X[k]
        X[k + 1] = sys.A @ X[k] + sys.B @ U[k]
        warm = np.concatenate([U_full[n_u:], U_full[-n_u:]])
    if cond.lb is not None and (
        np.any(U < cond.spec.u_lo - 1e-9) or np.any(U > cond.spec.u_hi + 1e-9)
    ):
        raise RuntimeError("QP solver returned an input outside its bounds")
    return ClosedLoopResult(
        trajectory=Trajectory(X=X, U=U, Y=Y),
        iterations=tuple(iterations),
        statuses=tuple(statuses),
    )
