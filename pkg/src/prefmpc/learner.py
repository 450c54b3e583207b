"""Preference-surrogate model: parameterization, loss, and training.

The surrogate scores a trajectory with a stage-wise quadratic cost whose
weight matrices are parameterized through their Cholesky factors, packed
row-major into a flat vector.  Lower bounds on the factor diagonals keep
both matrices positive definite during optimization; the leading diagonal
entry of the state-weight factor is additionally bounded by 1 to pin the
overall scale.

A pairwise label is modeled as a sigmoid of the score difference and fit
by cross-entropy with an l2 penalty on the raw parameter vector.  Training
runs a projected Adam phase followed by bound-constrained L-BFGS-B.
"""

from __future__ import annotations

import time
from collections.abc import Callable
from dataclasses import dataclass, replace

import numpy as np
import scipy.optimize

from .dataset import PreferenceDataset
from .errors import TrainingError
from .trajectory import Trajectory, quad_cost, stage_grams

DIAG_LOWER_BOUND = 0.01
Q11_LOWER_BOUND = 1.0


def _packed_size(n: int) -> int:
    return n * (n + 1) // 2


def theta_dim(n_x: int, n_u: int) -> int:
    """Number of parameters: packed lower triangles of both factors."""
    if n_x < 1 or n_u < 1:
        raise ValueError("dimensions must be positive")
    return _packed_size(n_x) + _packed_size(n_u)


def pack_lower(L: np.ndarray) -> np.ndarray:
    """Row-major vector of the lower-triangular entries of L."""
    n = L.shape[0]
    return L[np.tril_indices(n)].copy()


def unpack_lower(v: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`pack_lower`."""
    if len(v) != _packed_size(n):
        raise ValueError(f"expected {_packed_size(n)} packed entries for n={n}, got {len(v)}")
    L = np.zeros((n, n))
    L[np.tril_indices(n)] = v
    return L


def _packed_diag_positions(n: int) -> np.ndarray:
    rows, cols = np.tril_indices(n)
    return np.nonzero(rows == cols)[0]


def theta_lower_bounds(n_x: int, n_u: int) -> np.ndarray:
    """Per-entry lower bounds; off-diagonal factor entries are unbounded."""
    n_q = _packed_size(n_x)
    lb = np.full(theta_dim(n_x, n_u), -np.inf)
    q_diag = _packed_diag_positions(n_x)
    lb[q_diag] = DIAG_LOWER_BOUND
    lb[q_diag[0]] = Q11_LOWER_BOUND
    lb[n_q + _packed_diag_positions(n_u)] = DIAG_LOWER_BOUND
    return lb


@dataclass(frozen=True)
class Theta:
    """Packed Cholesky-factor parameter vector for one (Q, R) pair."""

    values: np.ndarray
    n_x: int
    n_u: int

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if len(values) != theta_dim(self.n_x, self.n_u):
            raise ValueError(
                f"theta for dims ({self.n_x}, {self.n_u}) needs "
                f"{theta_dim(self.n_x, self.n_u)} entries, got {len(values)}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def q_factor(self) -> np.ndarray:
        return self.values[: _packed_size(self.n_x)]

    @property
    def r_factor(self) -> np.ndarray:
        return self.values[_packed_size(self.n_x):]

    def satisfies_bounds(self) -> bool:
        return bool(np.all(self.values >= theta_lower_bounds(self.n_x, self.n_u)))

    def projected(self) -> "Theta":
        """Clip onto the lower bounds."""
        return Theta(
            np.maximum(self.values, theta_lower_bounds(self.n_x, self.n_u)), self.n_x, self.n_u
        )

    def scaled(self, c: float) -> "Theta":
        """Multiply both factors by c > 0; scores scale by c^2."""
        if c <= 0:
            raise ValueError("scale must be positive")
        return Theta(self.values * c, self.n_x, self.n_u)


def theta_to_matrices(theta: Theta) -> tuple[np.ndarray, np.ndarray]:
    """Assemble (Q, R) = (L_Q L_Q', L_R L_R') from the packed factors."""
    L_q = unpack_lower(theta.q_factor, theta.n_x)
    L_r = unpack_lower(theta.r_factor, theta.n_u)
    return L_q @ L_q.T, L_r @ L_r.T


def theta_from_matrices(Q: np.ndarray, R: np.ndarray) -> Theta:
    """Pack the Cholesky factors of symmetric PD (Q, R)."""
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    L_q = np.linalg.cholesky(Q)
    L_r = np.linalg.cholesky(R)
    return Theta(np.concatenate([pack_lower(L_q), pack_lower(L_r)]), Q.shape[0], R.shape[0])


def score(traj: Trajectory, theta: Theta) -> float:
    """Quadratic trajectory cost under the weights encoded by theta."""
    Q, R = theta_to_matrices(theta)
    return quad_cost(traj, Q, R)


def _stable_sigmoid_neg(d: np.ndarray) -> np.ndarray:
    """sigmoid(-d) evaluated without overflow for any d."""
    d = np.asarray(d, dtype=float)
    out = np.empty_like(d)
    pos = d >= 0
    ed = np.exp(-d[pos])
    out[pos] = ed / (1.0 + ed)
    out[~pos] = 1.0 / (1.0 + np.exp(d[~pos]))
    return out


def pref_prob(ti: Trajectory, tj: Trajectory, theta: Theta, clamp: float = 1e-12) -> float:
    """Modeled probability that ti is preferred: sigmoid of -(score gap).

    Saturates to [clamp, 1 - clamp] so downstream logs stay finite.
    """
    d = score(ti, theta) - score(tj, theta)
    p = float(_stable_sigmoid_neg(np.array([d]))[0])
    return min(max(p, clamp), 1.0 - clamp)


def surrogate_pref(ti: Trajectory, tj: Trajectory, theta: Theta) -> int:
    """1 when ti scores no worse than tj (probability at least one half)."""
    return 1 if score(ti, theta) <= score(tj, theta) else 0


@dataclass(frozen=True)
class TrainConfig:
    adam_iters: int = 200
    adam_lr: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    lbfgs_max_iters: int = 1000
    lbfgs_history: int = 10
    rho: float = 1e-6
    restarts: int = 20
    prob_clamp: float = 1e-12
    pg_tol: float = 1e-8

    def __post_init__(self):
        positive = (
            "adam_iters", "adam_lr", "adam_beta1", "adam_beta2", "adam_eps",
            "lbfgs_max_iters", "lbfgs_history", "restarts", "prob_clamp", "pg_tol",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")

    def with_overrides(self, **kwargs) -> "TrainConfig":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class TrainedModel:
    theta: Theta
    train_accuracy: float
    test_accuracy: float | None
    final_loss: float
    wall_time: float
    restart_index: int
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.train_accuracy <= 1.0:
            raise ValueError("train_accuracy must lie in [0, 1]")
        if self.test_accuracy is not None and not 0.0 <= self.test_accuracy <= 1.0:
            raise ValueError("test_accuracy must lie in [0, 1]")
        if not self.theta.satisfies_bounds():
            raise ValueError("trained theta violates its lower bounds")

    def to_dict(self) -> dict:
        Q, R = theta_to_matrices(self.theta)
        return {
            "theta": self.theta.values.tolist(),
            "n_x": self.theta.n_x,
            "n_u": self.theta.n_u,
            "Q": Q.tolist(),
            "R": R.tolist(),
            "train_accuracy": self.train_accuracy,
            "test_accuracy": self.test_accuracy,
            "final_loss": self.final_loss,
            "wall_time": self.wall_time,
            "restart_index": self.restart_index,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        return cls(
            theta=Theta(np.asarray(d["theta"]), int(d["n_x"]), int(d["n_u"])),
            train_accuracy=d["train_accuracy"],
            test_accuracy=d["test_accuracy"],
            final_loss=d["final_loss"],
            wall_time=d["wall_time"],
            restart_index=d["restart_index"],
            seed=d["seed"],
        )


class _PairTerms:
    """Precomputed per-trajectory Gram matrices and pair indexing.

    Score differences and their gradients reduce to contractions against
    these sums, so each loss/gradient evaluation is independent of the
    trajectory horizon.
    """

    def __init__(self, dataset: PreferenceDataset):
        if dataset.n_pairs == 0:
            raise ValueError("dataset contains no labeled pairs")
        pool = dataset.pool
        self.n_x = pool.trajectories[0].X.shape[1]
        self.n_u = pool.trajectories[0].U.shape[1]
        grams = [stage_grams(t) for t in pool.trajectories]
        self.Sx = np.stack([g[0] for g in grams])
        self.Su = np.stack([g[1] for g in grams])
        self.i_idx = dataset.i_idx
        self.j_idx = dataset.j_idx
        self.labels = dataset.labels.astype(float)
        self.n_pairs = dataset.n_pairs
        self.n_t = pool.n_t

    def _factors(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n_q = _packed_size(self.n_x)
        return unpack_lower(values[:n_q], self.n_x), unpack_lower(values[n_q:], self.n_u)

    def score_diffs(self, values: np.ndarray) -> np.ndarray:
        L_q, L_r = self._factors(values)
        Q = L_q @ L_q.T
        R = L_r @ L_r.T
        s = np.einsum("tij,ij->t", self.Sx, Q) + np.einsum("tij,ij->t", self.Su, R)
        return s[self.i_idx] - s[self.j_idx]

    def predicted_labels(self, values: np.ndarray) -> np.ndarray:
        return (self.score_diffs(values) <= 0).astype(int)

    def accuracy(self, values: np.ndarray) -> float:
        return float(np.mean(self.predicted_labels(values) == self.labels.astype(int)))

    def loss(self, values: np.ndarray, rho: float, clamp: float) -> float:
        p_hat = np.clip(_stable_sigmoid_neg(self.score_diffs(values)), clamp, 1.0 - clamp)
        ce = -self.labels * np.log(p_hat) - (1.0 - self.labels) * np.log(1.0 - p_hat)
        return float(rho * values @ values + np.mean(ce))

    def loss_and_grad(self, values: np.ndarray, rho: float, clamp: float) -> tuple[float, np.ndarray]:
        L_q, L_r = self._factors(values)
        Q = L_q @ L_q.T
        R = L_r @ L_r.T
        s = np.einsum("tij,ij->t", self.Sx, Q) + np.einsum("tij,ij->t", self.Su, R)
        d = s[self.i_idx] - s[self.j_idx]
        p_raw = _stable_sigmoid_neg(d)
        p_hat = np.clip(p_raw, clamp, 1.0 - clamp)
        ce = -self.labels * np.log(p_hat) - (1.0 - self.labels) * np.log(1.0 - p_hat)
        loss = float(rho * values @ values + np.mean(ce))
        # Pairs pinned at the clamp have zero data-term derivative.
        active = (p_raw > clamp) & (p_raw < 1.0 - clamp)
        w = np.where(active, self.labels - p_raw, 0.0) / self.n_pairs
        coef = np.bincount(self.i_idx, weights=w, minlength=self.n_t)
        coef -= np.bincount(self.j_idx, weights=w, minlength=self.n_t)
        Wx = np.einsum("t,tij->ij", coef, self.Sx)
        Wu = np.einsum("t,tij->ij", coef, self.Su)
        grad = 2.0 * rho * values + np.concatenate(
            [pack_lower(2.0 * Wx @ L_q), pack_lower(2.0 * Wu @ L_r)]
        )
        return loss, grad


def _check_theta_dims(theta: Theta, terms: _PairTerms):
    if theta.n_x != terms.n_x or theta.n_u != terms.n_u:
        raise ValueError(
            f"theta dims ({theta.n_x}, {theta.n_u}) do not match pool "
            f"dims ({terms.n_x}, {terms.n_u})"
        )


def loss(theta: Theta, dataset: PreferenceDataset, rho: float, prob_clamp: float = 1e-12) -> float:
    """Regularized mean cross-entropy of the dataset under theta."""
    terms = _PairTerms(dataset)
    _check_theta_dims(theta, terms)
    return terms.loss(theta.values, rho, prob_clamp)


def loss_gradient(
    theta: Theta, dataset: PreferenceDataset, rho: float, prob_clamp: float = 1e-12
) -> np.ndarray:
    """Exact gradient of :func:`loss` with respect to the packed factors."""
    terms = _PairTerms(dataset)
    _check_theta_dims(theta, terms)
    return terms.loss_and_grad(theta.values, rho, prob_clamp)[1]


def model_accuracy(theta: Theta, dataset: PreferenceDataset) -> float:
    """Fraction of dataset labels the surrogate reproduces."""
    terms = _PairTerms(dataset)
    _check_theta_dims(theta, terms)
    return terms.accuracy(theta.values)


def train(
    dataset: PreferenceDataset,
    config: TrainConfig,
    theta_init: Theta,
    test_set: PreferenceDataset | None = None,
    restart_index: int = 0,
    seed: int = 0,
) -> TrainedModel:
    """Fit theta to the dataset: projected Adam, then bound-constrained L-BFGS-B.

    Every iterate is kept feasible (Adam steps are clipped onto the
    bounds; L-BFGS-B receives them natively).  The final loss never
    exceeds the loss of the projected initialization or of the Adam
    phase: the best of the three candidates is returned.
    """
    t_start = time.perf_counter()
    terms = _PairTerms(dataset)
    _check_theta_dims(theta_init, terms)
    lb = theta_lower_bounds(terms.n_x, terms.n_u)
    rho, clamp = config.rho, config.prob_clamp

    x = np.maximum(theta_init.values, lb)
    x_init = x.copy()
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    for it in range(1, config.adam_iters + 1):
        f, g = terms.loss_and_grad(x, rho, clamp)
        if not (np.isfinite(f) and np.all(np.isfinite(g))):
            raise TrainingError(f"non-finite loss or gradient at Adam iteration {it}", iteration=it)
        m = config.adam_beta1 * m + (1.0 - config.adam_beta1) * g
        v = config.adam_beta2 * v + (1.0 - config.adam_beta2) * g * g
        m_hat = m / (1.0 - config.adam_beta1**it)
        v_hat = v / (1.0 - config.adam_beta2**it)
        x = np.maximum(x - config.adam_lr * m_hat / (np.sqrt(v_hat) + config.adam_eps), lb)
    x_adam = x.copy()

    result = scipy.optimize.minimize(
        lambda vals: terms.loss_and_grad(vals, rho, clamp),
        x_adam,
        jac=True,
        method="L-BFGS-B",
        bounds=[(b if np.isfinite(b) else None, None) for b in lb],
        options={
            "maxcor": config.lbfgs_history,
            "maxiter": config.lbfgs_max_iters,
            "gtol": config.pg_tol,
            "ftol": 1e-16,
        },
    )
    candidates = [x_init, x_adam]
    if np.all(np.isfinite(result.x)):
        candidates.append(np.maximum(result.x, lb))
    losses = [terms.loss(c, rho, clamp) for c in candidates]
    best = candidates[int(np.argmin(losses))]

    theta = Theta(best, terms.n_x, terms.n_u)
    test_acc = model_accuracy(theta, test_set) if test_set is not None else None
    return TrainedModel(
        theta=theta,
        train_accuracy=terms.accuracy(best),
        test_accuracy=test_acc,
        final_loss=float(min(losses)),
        wall_time=time.perf_counter() - t_start,
        restart_index=restart_index,
        seed=seed,
    )


def make_matrix_init_sampler(
    draw_matrices: Callable[[np.random.Generator], tuple[np.ndarray, np.ndarray]],
) -> Callable[[np.random.Generator], Theta]:
    """Initialization sampler wrapping a (Q, R) generator.

    The drawn matrices are factored, packed, and projected onto the
    parameter bounds.
    """

    def sampler(rng: np.random.Generator) -> Theta:
        Q, R = draw_matrices(rng)
        return theta_from_matrices(Q, R).projected()

    return sampler


def train_multistart(
    train_set: PreferenceDataset,
    test_set: PreferenceDataset,
    config: TrainConfig,
    init_sampler: Callable[[np.random.Generator], Theta],
    seed: int = 0,
) -> TrainedModel:
    """Best of ``config.restarts`` independent trainings.

    Selection is by highest test accuracy, then lower final loss, then
    lower restart index, which makes the outcome independent of the
    order restarts complete in.
    """
    streams = np.random.SeedSequence(seed).spawn(config.restarts)
    best: TrainedModel | None = None
    failures: list[str] = []
    for idx, stream in enumerate(streams):
        rng = np.random.default_rng(stream)
        theta0 = init_sampler(rng)
        try:
            model = train(
                train_set, config, theta0, test_set=test_set, restart_index=idx, seed=seed
            )
        except TrainingError as e:
            failures.append(f"restart {idx}: {e}")
            continue
        if best is None or (
            (-model.test_accuracy, model.final_loss, model.restart_index)
            < (-best.test_accuracy, best.final_loss, best.restart_index)
        ):
            best = model
    if best is None:
        raise TrainingError(f"all {config.restarts} restarts failed: {'; '.join(failures)}")
    return best


def train_holdout(
    dataset: PreferenceDataset,
    config: TrainConfig,
    init_sampler: Callable[[np.random.Generator], Theta],
    seed: int = 0,
    holdout_frac: float = 0.2,
) -> TrainedModel:
    """Multistart training with a deterministic holdout split for selection.

    Used when no dedicated test pairing exists (live labeling sessions):
    the labeled pairs are shuffled with the given seed and split, keeping
    at least one pair on each side.
    """
    n = dataset.n_pairs
    if n < 2:
        raise ValueError("holdout training needs at least 2 labeled pairs")
    order = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED])).permutation(n)
    n_train = min(n - 1, max(1, int(round((1.0 - holdout_frac) * n))))
    train_rows = order[:n_train]
    hold_rows = order[n_train:]
    pool = dataset.pool
    train_set = PreferenceDataset(
        pool, dataset.i_idx[train_rows], dataset.j_idx[train_rows], dataset.labels[train_rows]
    )
    hold_set = PreferenceDataset(
        pool, dataset.i_idx[hold_rows], dataset.j_idx[hold_rows], dataset.labels[hold_rows]
    )
    return train_multistart(train_set, hold_set, config, init_sampler, seed=seed)
