"""Trajectory pool generation, pair labeling, and dataset persistence.

Pools are built by rolling out randomly weighted LQR controllers from
random initial states.  Labeled pair datasets are sampled from a pool
without replacement over ordered index pairs and written to a versioned
JSON file that round-trips losslessly.
"""

from __future__ import annotations

import json
from collections.abc import Callable, Iterable
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConvergenceError, DatasetFormatError, GenerationError, UnsupportedVersionError
from .linsys import LinearSystem, lqr_gain, rollout_lqr
from .trajectory import Trajectory, settling_time

FILE_VERSION = 1

PreferenceFn = Callable[[Trajectory, Trajectory], int]


@dataclass(frozen=True)
class GenConfig:
    """Sampling plan for one pool-generation campaign.

    ``diag_only`` switches weight sampling from predominantly-diagonal
    full matrices to purely diagonal ones with per-block entry ranges
    (positions vs everything else).
    """

    n_t: int = 50
    horizon: int = 10
    pos_range: tuple[float, float] = (-0.3, 0.3)
    vel_range: tuple[float, float] = (-0.05, 0.05)
    diag_range: tuple[float, float] = (0.1, 10.0)
    offdiag_scale: float = 0.05
    diag_only: bool = False
    pos_diag_range: tuple[float, float] = (5.0, 20.0)
    other_diag_range: tuple[float, float] = (0.1, 1.0)
    seed: int = 0
    oracle: str = "quadratic"

    def __post_init__(self):
        if self.n_t < 1:
            raise ValueError("n_t must be at least 1")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        for name in ("pos_range", "vel_range", "diag_range", "pos_diag_range", "other_diag_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} has lo > hi: ({lo}, {hi})")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if self.offdiag_scale < 0:
            raise ValueError("offdiag_scale must be nonnegative")

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        kwargs = dict(d)
        for name in ("pos_range", "vel_range", "diag_range", "pos_diag_range", "other_diag_range"):
            if name in kwargs:
                kwargs[name] = tuple(kwargs[name])
        return cls(**kwargs)


@dataclass(frozen=True, eq=False)
class TrajectoryPool:
    """A collection of trajectories sharing one horizon and one system."""

    trajectories: tuple[Trajectory, ...]
    system_id: str = ""

    def __post_init__(self):
        trajs = tuple(self.trajectories)
        if not trajs:
            raise ValueError("pool must contain at least one trajectory")
        N = trajs[0].N
        shape = (trajs[0].X.shape[1], trajs[0].U.shape[1], trajs[0].Y.shape[1])
        for t in trajs:
            if t.N != N or (t.X.shape[1], t.U.shape[1], t.Y.shape[1]) != shape:
                raise ValueError("pool trajectories must share horizon and dimensions")
        object.__setattr__(self, "trajectories", trajs)

    @property
    def n_t(self) -> int:
        return len(self.trajectories)

    @property
    def horizon(self) -> int:
        return self.trajectories[0].N

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrajectoryPool):
            return NotImplemented
        return (
            self.system_id == other.system_id
            and len(self.trajectories) == len(other.trajectories)
            and all(a == b for a, b in zip(self.trajectories, other.trajectories))
        )


@dataclass(frozen=True, eq=False)
class PreferenceDataset:
    """Labeled ordered index pairs over a trajectory pool."""

    pool: TrajectoryPool
    i_idx: np.ndarray
    j_idx: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        i_idx = np.asarray(self.i_idx, dtype=int).copy()
        j_idx = np.asarray(self.j_idx, dtype=int).copy()
        labels = np.asarray(self.labels, dtype=int).copy()
        if not (len(i_idx) == len(j_idx) == len(labels)):
            raise ValueError("pair index and label arrays must have equal length")
        n = self.pool.n_t
        if len(i_idx) and (i_idx.min() < 0 or i_idx.max() >= n or j_idx.min() < 0 or j_idx.max() >= n):
            raise ValueError("pair indices out of pool range")
        if np.any(i_idx == j_idx):
            raise ValueError("pairs must reference two distinct trajectories")
        if len(labels) and not np.all((labels == 0) | (labels == 1)):
            raise ValueError("labels must be 0 or 1")
        for arr in (i_idx, j_idx, labels):
            arr.setflags(write=False)
        object.__setattr__(self, "i_idx", i_idx)
        object.__setattr__(self, "j_idx", j_idx)
        object.__setattr__(self, "labels", labels)

    @property
    def n_pairs(self) -> int:
        return len(self.labels)

    def pairs(self) -> list[tuple[int, int, int]]:
        return [(int(i), int(j), int(p)) for i, j, p in zip(self.i_idx, self.j_idx, self.labels)]

    def subset(self, n: int) -> "PreferenceDataset":
        """First n pairs, sharing the same pool."""
        if not 0 <= n <= self.n_pairs:
            raise ValueError(f"subset size {n} out of range [0, {self.n_pairs}]")
        return PreferenceDataset(self.pool, self.i_idx[:n], self.j_idx[:n], self.labels[:n])

    def __eq__(self, other) -> bool:
        if not isinstance(other, PreferenceDataset):
            return NotImplemented
        return (
            self.pool == other.pool
            and np.array_equal(self.i_idx, other.i_idx)
            and np.array_equal(self.j_idx, other.j_idx)
            and np.array_equal(self.labels, other.labels)
        )


def sample_initial_state(
    rng: np.random.Generator,
    pos_range: tuple[float, float],
    vel_range: tuple[float, float],
    n_pos: int = 3,
    n_vel: int = 3,
) -> np.ndarray:
    """Initial state with uniform positions and velocities, positions first."""
    pos = rng.uniform(pos_range[0], pos_range[1], n_pos)
    vel = rng.uniform(vel_range[0], vel_range[1], n_vel)
    return np.concatenate([pos, vel])


def random_pd_matrix(
    rng: np.random.Generator,
    n: int,
    diag_range: tuple[float, float] = (0.1, 10.0),
    offdiag_scale: float = 0.05,
    max_attempts: int = 100,
) -> np.ndarray:
    """Predominantly-diagonal symmetric positive definite matrix.

    Diagonal entries are uniform in ``diag_range``; each off-diagonal pair
    is uniform within +/- ``offdiag_scale`` times the smaller of the two
    diagonals it couples.  Draws are repeated until a Cholesky
    factorization certifies positive definiteness.
    """
    if diag_range[0] <= 0:
        raise ValueError("diag_range must be strictly positive")
    for _ in range(max_attempts):
        d = rng.uniform(diag_range[0], diag_range[1], n)
        M = np.diag(d)
        if offdiag_scale > 0 and n > 1:
            rows, cols = np.triu_indices(n, k=1)
            bound = offdiag_scale * np.minimum(d[rows], d[cols])
            vals = rng.uniform(-1.0, 1.0, len(rows)) * bound
            M[rows, cols] = vals
            M[cols, rows] = vals
        try:
            np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            continue
        return M
    raise GenerationError(
        f"no positive definite draw in {max_attempts} attempts; offdiag_scale={offdiag_scale} "
        "is likely too large"
    )


def random_pd_diag(
    rng: np.random.Generator, per_index_ranges: Iterable[tuple[float, float]]
) -> np.ndarray:
    """Diagonal PD matrix with each entry uniform in its own range."""
    ranges = [(float(lo), float(hi)) for lo, hi in per_index_ranges]
    for lo, hi in ranges:
        if lo <= 0:
            raise ValueError("diagonal ranges must be strictly positive")
        if lo > hi:
            raise ValueError(f"range has lo > hi: ({lo}, {hi})")
    d = np.array([rng.uniform(lo, hi) for lo, hi in ranges])
    return np.diag(d)


def sample_weights(
    rng: np.random.Generator, config: GenConfig, n_x: int, n_u: int
) -> tuple[np.ndarray, np.ndarray]:
    """State/input weight pair drawn per the campaign's sampling mode."""
    if config.diag_only:
        n_pos = n_x // 2
        q_ranges = [config.pos_diag_range] * n_pos + [config.other_diag_range] * (n_x - n_pos)
        Q = random_pd_diag(rng, q_ranges)
        R = random_pd_diag(rng, [config.other_diag_range] * n_u)
    else:
        Q = random_pd_matrix(rng, n_x, config.diag_range, config.offdiag_scale)
        R = random_pd_matrix(rng, n_u, config.diag_range, config.offdiag_scale)
    return Q, R


def generate_pool(sys: LinearSystem, config: GenConfig) -> TrajectoryPool:
    """Pool of closed-loop LQR rollouts under randomly drawn weights.

    Each slot draws from its own seed-derived stream, so results do not
    depend on evaluation order.  A slot whose Riccati solve fails is
    redrawn up to 10 times before the campaign is abandoned.
    """
    streams = np.random.SeedSequence(config.seed).spawn(config.n_t)
    trajectories = []
    for slot, stream in enumerate(streams):
        rng = np.random.default_rng(stream)
        for attempt in range(10):
            x0 = sample_initial_state(rng, config.pos_range, config.vel_range)
            Q_hat, R_hat = sample_weights(rng, config, sys.n_x, sys.n_u)
            try:
                K = lqr_gain(sys.A, sys.B, Q_hat, R_hat)
            except ConvergenceError:
                continue
            trajectories.append(rollout_lqr(sys, K, x0, config.horizon))
            break
        else:
            raise GenerationError(f"pool slot {slot} failed 10 consecutive LQR syntheses")
    return TrajectoryPool(trajectories=tuple(trajectories), system_id="oscillating_masses")


def build_pairs(
    pool: TrajectoryPool,
    n_pairs: int,
    oracle: PreferenceFn,
    rng: np.random.Generator,
    drop_kappa_ties: bool = False,
    settle_eps: float = 0.1,
    exclude: Iterable[tuple[int, int]] = (),
) -> PreferenceDataset:
    """Sample labeled ordered pairs uniformly without replacement.

    ``drop_kappa_ties`` removes pairs whose settling times coincide before
    sampling.  ``exclude`` removes specific ordered pairs from the universe
    (used to keep train and test pairings disjoint).
    """
    n = pool.n_t
    excluded = set((int(i), int(j)) for i, j in exclude)
    candidates = [(i, j) for i in range(n) for j in range(n) if i != j and (i, j) not in excluded]
    if drop_kappa_ties:
        kappas = [settling_time(t, settle_eps).index for t in pool.trajectories]
        candidates = [(i, j) for i, j in candidates if kappas[i] != kappas[j]]
    if n_pairs > len(candidates):
        raise ValueError(
            f"requested {n_pairs} pairs but only {len(candidates)} are available after filtering"
        )
    chosen = rng.choice(len(candidates), size=n_pairs, replace=False) if n_pairs else []
    i_idx = np.empty(n_pairs, dtype=int)
    j_idx = np.empty(n_pairs, dtype=int)
    labels = np.empty(n_pairs, dtype=int)
    for k, c in enumerate(chosen):
        i, j = candidates[int(c)]
        i_idx[k] = i
        j_idx[k] = j
        labels[k] = oracle(pool.trajectories[i], pool.trajectories[j])
    return PreferenceDataset(pool=pool, i_idx=i_idx, j_idx=j_idx, labels=labels)


def save_dataset(
    path,
    dataset: PreferenceDataset,
    system: LinearSystem | None = None,
    config: GenConfig | None = None,
    seed: int | None = None,
):
    """Write a dataset with provenance to a versioned JSON file."""
    doc = {
        "version": FILE_VERSION,
        "system": system.to_dict() if system is not None else None,
        "config": asdict(config) if config is not None else None,
        "seed": seed,
        "system_id": dataset.pool.system_id,
        "trajectories": [t.to_dict() for t in dataset.pool.trajectories],
        "pairs": [{"i": i, "j": j, "p": p} for i, j, p in dataset.pairs()],
    }
    with open(path, "w") as f:
        json.dump(doc, f)


@dataclass(frozen=True)
class LoadedDataset:
    dataset: PreferenceDataset
    system: LinearSystem | None
    config: GenConfig | None
    seed: int | None


def load_dataset(path) -> LoadedDataset:
    """Read a dataset file written by :func:`save_dataset`."""
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise DatasetFormatError("top-level document must be an object")
    version = doc.get("version")
    if version != FILE_VERSION:
        raise UnsupportedVersionError(
            f"file declares version {version!r}; this reader supports {FILE_VERSION}",
            field="version",
        )
    for key in ("trajectories", "pairs"):
        if key not in doc:
            raise DatasetFormatError("missing required field", field=key)
    try:
        trajectories = tuple(Trajectory.from_dict(t) for t in doc["trajectories"])
    except (KeyError, ValueError, TypeError) as e:
        raise DatasetFormatError(f"bad trajectory entry: {e}", field="trajectories") from e
    pool = TrajectoryPool(trajectories=trajectories, system_id=doc.get("system_id", ""))
    try:
        i_idx = [p["i"] for p in doc["pairs"]]
        j_idx = [p["j"] for p in doc["pairs"]]
        labels = [p["p"] for p in doc["pairs"]]
    except (KeyError, TypeError) as e:
        raise DatasetFormatError(f"bad pair entry: {e}", field="pairs") from e
    dataset = PreferenceDataset(pool=pool, i_idx=i_idx, j_idx=j_idx, labels=labels)
    system = LinearSystem.from_dict(doc["system"]) if doc.get("system") else None
    config = GenConfig.from_dict(doc["config"]) if doc.get("config") else None
    return LoadedDataset(dataset=dataset, system=system, config=config, seed=doc.get("seed"))
