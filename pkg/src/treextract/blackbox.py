"""Blackbox models to be explained: a from-scratch random forest, a tabular
cart-pole control policy learned by value iteration, and synthetic
piecewise-constant functions over axis-aligned boxes.

A blackbox is anything with integer attributes d and m, a boolean
thread_safe flag, and a pure predict((n, d) array) -> (n,) int labels.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from .core import BoxConstraint, Dataset, DecisionTree, Internal, Leaf, AxisConstraint, LE
from .errors import ConfigError, InputError
from .extract import best_split_from_samples


class BlackboxModel(Protocol):
    d: int
    m: int
    thread_safe: bool

    def predict(self, X) -> np.ndarray: ...


@dataclass(frozen=True)
class FunctionBlackbox:
    """Wrap a plain vectorized function as a blackbox."""

    fn: Callable[[np.ndarray], np.ndarray]
    d: int
    m: int
    thread_safe: bool = True

    def predict(self, X) -> np.ndarray:
        return np.asarray(self.fn(np.atleast_2d(np.asarray(X, dtype=np.float64))),
                          dtype=np.int64)


@dataclass(frozen=True)
class BoxBlackbox:
    """Piecewise-constant labels over disjoint axis-aligned boxes.

    Points outside every box get default_label. Used as the target for
    convergence tests because its exact region probabilities under a
    diagonal Gaussian mixture have closed form.
    """

    boxes: tuple[BoxConstraint, ...]
    labels: tuple[int, ...]
    d: int
    m: int
    default_label: int = 0
    thread_safe: bool = True

    def __post_init__(self):
        if len(self.boxes) != len(self.labels):
            raise InputError("boxes and labels must have equal length")
        for b in self.boxes:
            if b.d != self.d:
                raise InputError("box dimension mismatch")
        for i, a in enumerate(self.boxes):
            for b in self.boxes[i + 1:]:
                if a.intersect(b) is not None:
                    raise InputError("boxes must be pairwise disjoint")
        labels = tuple(int(v) for v in self.labels)
        if any(not 0 <= v < self.m for v in labels + (self.default_label,)):
            raise InputError("labels out of range")
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "labels", labels)

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.full(X.shape[0], self.default_label, dtype=np.int64)
        for box, label in zip(self.boxes, self.labels):
            out[box.contains_batch(X)] = label
        return out


def synthetic_box_blackbox(boxes: Sequence[BoxConstraint], labels: Sequence[int],
                           d: int, m: int, default_label: int = 0) -> BoxBlackbox:
    return BoxBlackbox(tuple(boxes), tuple(labels), d, m, default_label)


# ---------------------------------------------------------------------------
# Random forest


@dataclass(frozen=True)
class RandomForestConfig:
    n_trees: int = 25
    max_depth: int = 8
    features_per_split: Optional[int] = None  # None -> ceil(sqrt(d))
    balance: bool = False
    seed: int = 0


@dataclass(frozen=True)
class RandomForest:
    """Bootstrap-bagged Gini trees with per-split feature subsetting.

    predict is the majority vote over trees; vote ties resolve to the
    lower class index.
    """

    trees: tuple[DecisionTree, ...]
    d: int
    m: int
    thread_safe: bool = True

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        votes = np.zeros((X.shape[0], self.m), dtype=np.int64)
        for tree in self.trees:
            preds = tree.predict_batch(X)
            votes[np.arange(X.shape[0]), preds] += 1
        return np.argmax(votes, axis=1)


def _grow_cart_node(X, y, rows, m, depth, cfg, rng, nodes):
    """Recursive Gini tree on the given rows; feature subset per split."""
    counts = np.bincount(y[rows], minlength=m).astype(np.float64)
    label = int(np.argmax(counts))
    hist = counts / counts.sum()
    node_id = len(nodes)
    nodes.append(None)
    pure = counts.max() == counts.sum()
    if depth >= cfg.max_depth or rows.size < 2 or pure:
        nodes[node_id] = Leaf(label, hist, mass=1.0, cached_gain=0.0)
        return node_id
    k = cfg.features_per_split or max(1, math.isqrt(X.shape[1]))
    dims = np.sort(rng.choice(X.shape[1], size=min(k, X.shape[1]), replace=False))
    cand = best_split_from_samples(X[rows][:, dims], y[rows], m, 1.0)
    if cand is None:
        nodes[node_id] = Leaf(label, hist, mass=1.0, cached_gain=0.0)
        return node_id
    dim = int(dims[cand.dim])
    mask = X[rows, dim] <= cand.threshold
    left = _grow_cart_node(X, y, rows[mask], m, depth + 1, cfg, rng, nodes)
    right = _grow_cart_node(X, y, rows[~mask], m, depth + 1, cfg, rng, nodes)
    nodes[node_id] = Internal(AxisConstraint(dim, cand.threshold, LE), left, right)
    return node_id


def balance_rows(X, y, m: int):
    """Duplicate minority-class rows up to the majority-class count."""
    counts = np.bincount(y, minlength=m)
    target = counts.max()
    keep = [np.arange(y.shape[0])]
    for c in range(m):
        rows = np.flatnonzero(y == c)
        if rows.size == 0 or rows.size == target:
            continue
        deficit = target - rows.size
        reps = np.concatenate([np.tile(rows, deficit // rows.size),
                               rows[: deficit % rows.size]])
        keep.append(reps)
    idx = np.concatenate(keep)
    return X[idx], y[idx]


def train_random_forest(data: Dataset, cfg: RandomForestConfig = RandomForestConfig()) -> RandomForest:
    """Train a forest of Gini trees on bootstrap resamples.

    balance=True duplicates minority-class rows to parity before bagging.
    Deterministic given cfg.seed.
    """
    if data.labels is None:
        raise InputError("training data must be labeled")
    X, y, m = data.features, data.labels, data.m
    if np.unique(y).size == 1:
        warnings.warn("single-class training data: forest is a constant predictor")
    if cfg.balance:
        X, y = balance_rows(X, y, m)
    trees = []
    for t in range(cfg.n_trees):
        rng = np.random.default_rng([cfg.seed, t])
        rows = rng.integers(X.shape[0], size=X.shape[0])
        nodes: list = []
        _grow_cart_node(X, y, rows, m, 0, cfg, rng, nodes)
        trees.append(DecisionTree(tuple(nodes), 0, X.shape[1], m))
    return RandomForest(tuple(trees), X.shape[1], m)


# ---------------------------------------------------------------------------
# Cart-pole system, value-iteration policy


TWELVE_DEGREES = 12.0 * math.pi / 180.0


@dataclass(frozen=True)
class CartPoleSystem:
    """Classic cart-pole dynamics, Euler-integrated.

    State is (cart position, cart velocity, pole angle, pole angular
    velocity); actions are 0 (push left) and 1 (push right). An episode
    terminates when |angle| > 12 degrees or |position| > 2.4.
    """

    gravity: float = 9.8
    cart_mass: float = 1.0
    pole_mass: float = 0.1
    half_length: float = 0.5
    force_mag: float = 10.0
    timestep: float = 0.02
    x_limit: float = 2.4
    theta_limit: float = TWELVE_DEGREES
    episode_cap: int = 200

    def step_batch(self, states: np.ndarray, actions: np.ndarray):
        """Vectorized transition; returns (next_states, terminal_mask)."""
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        x, x_dot, theta, theta_dot = states.T
        force = np.where(np.asarray(actions) == 1, self.force_mag, -self.force_mag)
        total_mass = self.cart_mass + self.pole_mass
        pml = self.pole_mass * self.half_length
        cos_t, sin_t = np.cos(theta), np.sin(theta)
        temp = (force + pml * theta_dot ** 2 * sin_t) / total_mass
        theta_acc = (self.gravity * sin_t - cos_t * temp) / (
            self.half_length * (4.0 / 3.0 - self.pole_mass * cos_t ** 2 / total_mass))
        x_acc = temp - pml * theta_acc * cos_t / total_mass
        nxt = np.stack([
            x + self.timestep * x_dot,
            x_dot + self.timestep * x_acc,
            theta + self.timestep * theta_dot,
            theta_dot + self.timestep * theta_acc,
        ], axis=1)
        terminal = (np.abs(nxt[:, 0]) > self.x_limit) | (np.abs(nxt[:, 2]) > self.theta_limit)
        return nxt, terminal


def cartpole_step(sys: CartPoleSystem, state, action: int):
    """Single deterministic Euler step; returns (next_state, terminal)."""
    nxt, term = sys.step_batch(np.asarray(state, dtype=np.float64)[None, :],
                               np.array([action]))
    return nxt[0], bool(term[0])


@dataclass(frozen=True)
class PolicyConfig:
    # Defaults reach the full episode-cap reward at desk scale while keeping
    # the action surface coarse enough for small trees to track.
    grid_sizes: tuple[int, ...] = (7, 7, 7, 7)
    state_ranges: tuple[tuple[float, float], ...] = (
        (-2.4, 2.4), (-3.0, 3.0), (-TWELVE_DEGREES, TWELVE_DEGREES), (-3.5, 3.5))
    n_transition_samples: int = 30  # per (cell, action) pair
    discount: float = 0.99
    vi_tol: float = 1e-8
    max_sweeps: int = 5000
    seed: int = 0


@dataclass(frozen=True)
class TabularPolicy:
    """Greedy action table over a uniform discretization of the state space."""

    edges: tuple[np.ndarray, ...]  # interior cell edges per dimension
    actions: np.ndarray            # flat action per cell
    grid_sizes: tuple[int, ...]
    d: int = 4
    m: int = 2
    thread_safe: bool = True
    unvisited_pairs: int = 0

    def cell_index(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        idx = np.zeros(X.shape[0], dtype=np.int64)
        for i in range(self.d):
            cells = np.digitize(X[:, i], self.edges[i])
            idx = idx * self.grid_sizes[i] + cells
        return idx

    def predict(self, X) -> np.ndarray:
        return self.actions[self.cell_index(X)]


def learn_policy(sys: CartPoleSystem, cfg: PolicyConfig = PolicyConfig(),
                 residuals_out: Optional[list] = None) -> TabularPolicy:
    """Estimate cell-to-cell transitions by sampling and run value iteration.

    Each (cell, action) pair is simulated cfg.n_transition_samples times from
    states drawn uniformly inside the cell; rewards are +1 per non-terminal
    transition. Greedy action ties resolve to left (action 0). residuals_out,
    when given, receives the per-sweep sup-norm value changes.
    """
    d = len(cfg.grid_sizes)
    for (lo, hi), limit in zip(cfg.state_ranges[:1] + cfg.state_ranges[2:3],
                               (sys.x_limit, sys.theta_limit)):
        if hi < limit:
            raise ConfigError("state grid must cover the termination bounds")
    rng = np.random.default_rng(cfg.seed)
    edges = []
    lows, highs = [], []
    for (lo, hi), size in zip(cfg.state_ranges, cfg.grid_sizes):
        grid = np.linspace(lo, hi, size + 1)
        edges.append(grid[1:-1])
        lows.append(grid[:-1])
        highs.append(grid[1:])
    n_cells = int(np.prod(cfg.grid_sizes))
    ns = cfg.n_transition_samples

    # Uniform states inside every cell, for both actions.
    cell_ids = np.arange(n_cells)
    multi = np.array(np.unravel_index(cell_ids, cfg.grid_sizes)).T  # (n_cells, d)
    lo_mat = np.stack([lows[i][multi[:, i]] for i in range(d)], axis=1)
    hi_mat = np.stack([highs[i][multi[:, i]] for i in range(d)], axis=1)
    states = lo_mat[:, None, :] + rng.random((n_cells, ns, d)) * (hi_mat - lo_mat)[:, None, :]
    states = np.repeat(states[:, None, :, :], 2, axis=1)  # (n_cells, 2, ns, d)
    actions = np.broadcast_to(np.array([0, 1])[None, :, None], (n_cells, 2, ns))

    flat_states = states.reshape(-1, d)
    flat_actions = actions.reshape(-1)
    nxt, terminal = sys.step_batch(flat_states, flat_actions)

    policy_stub = TabularPolicy(tuple(edges), np.zeros(n_cells, dtype=np.int64),
                                tuple(cfg.grid_sizes), d=d)
    next_cells = policy_stub.cell_index(nxt)
    next_cells = np.where(terminal, -1, next_cells).reshape(n_cells, 2, ns)
    rewards = (~terminal).astype(np.float64).reshape(n_cells, 2, ns)

    values = np.zeros(n_cells + 1)  # trailing slot is the absorbing terminal
    gather = np.where(next_cells < 0, n_cells, next_cells)
    sweeps = 0
    while sweeps < cfg.max_sweeps:
        q = np.mean(rewards + cfg.discount * values[gather], axis=2)
        new_values = q.max(axis=1)
        residual = float(np.max(np.abs(new_values - values[:n_cells])))
        values = np.concatenate([new_values, [0.0]])
        sweeps += 1
        if residuals_out is not None:
            residuals_out.append(residual)
        if residual < cfg.vi_tol:
            break
    q = np.mean(rewards + cfg.discount * values[gather], axis=2)
    greedy = np.where(q[:, 0] >= q[:, 1], 0, 1).astype(np.int64)
    return TabularPolicy(tuple(edges), greedy, tuple(cfg.grid_sizes), d=d,
                         unvisited_pairs=0)


def rollout(policy: TabularPolicy, sys: CartPoleSystem, rng: np.random.Generator,
            collect: bool = False):
    """One episode from a randomized near-upright start; returns the reward
    (steps survived, capped) and optionally the visited states."""
    state = rng.uniform(-0.05, 0.05, size=4)
    visited = []
    reward = 0
    for _ in range(sys.episode_cap):
        if collect:
            visited.append(state.copy())
        action = int(policy.predict(state[None, :])[0])
        state, terminal = cartpole_step(sys, state, action)
        reward += 1
        if terminal:
            break
    return reward, visited


def mean_rollout_reward(policy: TabularPolicy, sys: CartPoleSystem,
                        n_episodes: int = 100, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    return float(np.mean([rollout(policy, sys, rng)[0] for _ in range(n_episodes)]))


def collect_states(policy: TabularPolicy, sys: CartPoleSystem, n_points: int,
                   seed: int = 0) -> Dataset:
    """Roll out the policy and subsample visited states uniformly.

    Episodes run until the visited pool holds at least 5x the requested
    points (at least 3 episodes), then n_points states are drawn uniformly
    without replacement. Labels are the policy's action at each state.
    """
    rng = np.random.default_rng(seed)
    pool: list = []
    episodes = 0
    while len(pool) < max(5 * n_points, 1) or episodes < 3:
        _, visited = rollout(policy, sys, rng, collect=True)
        pool.extend(visited)
        episodes += 1
        if episodes > 50 * max(1, n_points):
            raise InputError("policy terminates too quickly to collect states")
    pool_arr = np.asarray(pool)
    rows = rng.choice(pool_arr.shape[0], size=n_points, replace=False)
    X = pool_arr[rows]
    y = policy.predict(X)
    names = ("cart_position", "cart_velocity", "pole_angle", "pole_velocity")
    return Dataset(X, y, names, 2)


# ---------------------------------------------------------------------------
# Synthetic classification data


def make_imbalanced_classification(n: int, d: int = 50, positive_rate: float = 0.118,
                                   n_clusters: int = 3, dims_per_cluster: int = 2,
                                   shift: float = 2.2, spread: float = 0.7,
                                   seed: int = 0) -> Dataset:
    """Rare-positive Gaussian classification data.

    Negatives are standard normal in every dimension. Positives fall into
    n_clusters blobs, each shifted along its own pair of feature dimensions
    with tighter spread, so the positive class is fragmented: localizing all
    blobs from few labeled rows is hard, while a mixture model fit to the
    inputs recovers them.
    """
    rng = np.random.default_rng(seed)
    y = (rng.random(n) < positive_rate).astype(np.int64)
    X = rng.standard_normal((n, d))
    pos = np.flatnonzero(y == 1)
    blob = rng.integers(n_clusters, size=pos.size)
    for c in range(n_clusters):
        rows = pos[blob == c]
        dims = np.arange(c * dims_per_cluster, (c + 1) * dims_per_cluster)
        sign = 1.0 if c % 2 == 0 else -1.0
        X[np.ix_(rows, dims)] *= spread
        X[np.ix_(rows, dims)] += sign * shift
    return Dataset(X, y, tuple(f"f{i}" for i in range(d)), 2)
