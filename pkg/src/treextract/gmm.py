"""Axis-aligned Gaussian mixture input model.

Covers EM fitting with restarts, density evaluation, unconditional sampling,
and exact sampling conditioned on a box constraint. Conditioning reweights
the mixture components by their probability mass inside the box,

    w'_j = w_j * prod_i ( Phi((hi_i - mu_ji)/sd_ji) - Phi((lo_i - mu_ji)/sd_ji) ),

normalizes by Z = sum_j w'_j, and then draws each coordinate from an
independent truncated normal. All randomness flows through an explicit
numpy Generator; parallel callers should use independently seeded streams
(e.g. children of a numpy SeedSequence).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp, ndtr, ndtri

from .core import BoxConstraint, Dataset
from .errors import ConfigError, EmptyRegionError, InputError

Z_FLOOR = 1e-300
LOG_Z_FLOOR = math.log(Z_FLOOR)

# Standardized bound beyond which inverse-CDF sampling loses precision and
# we switch to tail rejection sampling.
TAIL_CUTOFF = 6.0


@dataclass(frozen=True)
class GaussianMixture:
    """Diagonal-covariance Gaussian mixture over R^d.

    stddevs stores per-dimension standard deviations (not variances).
    x_max, when set, truncates the model to the box ||x||_inf <= x_max;
    every conditional is intersected with that outer box.
    """

    weights: np.ndarray
    means: np.ndarray
    stddevs: np.ndarray
    x_max: Optional[float] = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        mu = np.array(self.means, dtype=np.float64)
        sd = np.array(self.stddevs, dtype=np.float64)
        if mu.ndim != 2 or sd.shape != mu.shape or w.shape != (mu.shape[0],):
            raise InputError("inconsistent mixture parameter shapes")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise InputError("weights must be nonnegative and sum to 1")
        if np.any(sd <= 0):
            raise InputError("stddevs must be strictly positive")
        for arr in (w, mu, sd):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "stddevs", sd)

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.means.shape[1]

    def domain_box(self) -> BoxConstraint:
        if self.x_max is None:
            return BoxConstraint.unbounded(self.d)
        return BoxConstraint(np.full(self.d, -self.x_max), np.full(self.d, self.x_max))


def log_pdf(gmm: GaussianMixture, X) -> np.ndarray:
    """Log density of the mixture at each row of X."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    z = (X[:, None, :] - gmm.means[None, :, :]) / gmm.stddevs[None, :, :]
    comp = -0.5 * np.sum(z * z, axis=2) - np.sum(np.log(gmm.stddevs), axis=1) \
        - 0.5 * gmm.d * math.log(2 * math.pi)
    with np.errstate(divide="ignore"):
        logw = np.log(gmm.weights)
    out = logsumexp(comp + logw[None, :], axis=1)
    if gmm.x_max is not None:
        outside = ~gmm.domain_box().contains_batch(X)
        out = np.where(outside, -np.inf, out - _log_domain_mass(gmm))
    return out


def _log_domain_mass(gmm: GaussianMixture) -> float:
    if gmm.x_max is None:
        return 0.0
    box = gmm.domain_box()
    logdphi = _log_interval_mass(gmm, box)
    return float(logsumexp(np.log(gmm.weights) + logdphi.sum(axis=1)))


def pdf(gmm: GaussianMixture, X) -> np.ndarray:
    return np.exp(log_pdf(gmm, X))


def _log_interval_mass(gmm: GaussianMixture, box: BoxConstraint) -> np.ndarray:
    """(K, d) array of log( Phi(beta_ji) - Phi(alpha_ji) ) for the box."""
    alpha = (box.lower[None, :] - gmm.means) / gmm.stddevs
    beta = (box.upper[None, :] - gmm.means) / gmm.stddevs
    with np.errstate(divide="ignore"):
        return np.log(_phi_interval(alpha, beta))


def _phi_interval(alpha, beta) -> np.ndarray:
    """Phi(beta) - Phi(alpha), computed stably in either tail.

    When the interval sits in the upper tail the complementary CDF form
    Phi(-alpha) - Phi(-beta) avoids catastrophic cancellation near 1.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    upper_tail = alpha > 0
    direct = ndtr(beta) - ndtr(alpha)
    flipped = ndtr(-alpha) - ndtr(-beta)
    return np.maximum(np.where(upper_tail, flipped, direct), 0.0)


@dataclass(frozen=True)
class ConditionalMixture:
    """A GaussianMixture restricted to a satisfiable box.

    tilde_phi holds the renormalized component weights and Z the total
    probability mass of the box under the base mixture.
    """

    base: GaussianMixture
    box: BoxConstraint
    tilde_phi: np.ndarray
    Z: float
    # Standardized bounds per component and dimension, cached for sampling.
    alpha: np.ndarray = field(repr=False, default=None)
    beta: np.ndarray = field(repr=False, default=None)


def condition(gmm: GaussianMixture, box: BoxConstraint) -> ConditionalMixture:
    """Exact conditional of the mixture on a box constraint.

    Raises EmptyRegionError when the box mass falls below Z_FLOOR, which
    callers treat as an unsatisfiable (zero-gain) region.
    """
    if box.d != gmm.d:
        raise InputError(f"box dimension {box.d} does not match d={gmm.d}")
    if gmm.x_max is not None:
        clipped = box.intersect(gmm.domain_box())
        if clipped is None:
            raise EmptyRegionError("box lies outside the truncated domain")
        box = clipped
    if not box.is_satisfiable():
        raise EmptyRegionError("box is unsatisfiable")
    logdphi = _log_interval_mass(gmm, box)
    with np.errstate(divide="ignore"):
        logw = np.log(gmm.weights) + logdphi.sum(axis=1)
    log_z = float(logsumexp(logw))
    if not np.isfinite(log_z) or log_z < LOG_Z_FLOOR:
        raise EmptyRegionError(f"box mass below floor (log mass {log_z:.1f})")
    tilde = np.exp(logw - log_z)
    tilde = tilde / tilde.sum()
    z = float(math.exp(log_z)) if gmm.x_max is None else float(
        math.exp(log_z - _log_domain_mass(gmm)))
    alpha = (box.lower[None, :] - gmm.means) / gmm.stddevs
    beta = (box.upper[None, :] - gmm.means) / gmm.stddevs
    return ConditionalMixture(gmm, box, tilde, z, alpha=alpha, beta=beta)


def box_mass(gmm: GaussianMixture, box: Optional[BoxConstraint]) -> float:
    """Probability of the box under the mixture; 0 for empty regions."""
    if box is None or not box.is_satisfiable():
        return 0.0
    logdphi = _log_interval_mass(gmm, box)
    with np.errstate(divide="ignore"):
        logw = np.log(gmm.weights) + logdphi.sum(axis=1)
    mass = float(np.exp(logsumexp(logw)))
    if gmm.x_max is not None:
        inner = box.intersect(gmm.domain_box())
        if inner is None:
            return 0.0
        return box_mass(GaussianMixture(gmm.weights, gmm.means, gmm.stddevs), inner) \
            / math.exp(_log_domain_mass(gmm))
    return mass


def _categorical(rng: np.random.Generator, p: np.ndarray, size: int) -> np.ndarray:
    u = rng.random(size)
    edges = np.cumsum(p)
    edges[-1] = 1.0
    return np.searchsorted(edges, u, side="right").clip(0, p.shape[0] - 1)


def _robert_tail(a: float, b: float, rng: np.random.Generator) -> float:
    """Standard-normal draw from the far upper-tail interval (a, b].

    Exponential-proposal rejection: propose z = a + Exp(rate) with the
    optimal rate (a + sqrt(a^2+4))/2 and accept with exp(-(z-rate)^2/2).
    """
    rate = 0.5 * (a + math.sqrt(a * a + 4.0))
    while True:
        z = a + rng.exponential(1.0 / rate)
        if z <= b and rng.random() <= math.exp(-0.5 * (z - rate) ** 2):
            return z


def _trunc_std_normal(a: float, b: float, rng: np.random.Generator) -> float:
    """One standard-normal draw restricted to (a, b]."""
    if a >= TAIL_CUTOFF:
        return _robert_tail(a, b, rng)
    if b <= -TAIL_CUTOFF:
        return -_robert_tail(-b, -a, rng)
    u = rng.random()
    if a >= 0.0:
        # Work with the complementary CDF to keep tail precision.
        ca, cb = ndtr(-a), ndtr(-b)
        return -float(ndtri(cb + u * (ca - cb)))
    if b <= 0.0:
        ca, cb = ndtr(a), ndtr(b)
        return float(ndtri(ca + u * (cb - ca)))
    ca, cb = ndtr(a), ndtr(b)
    return float(ndtri(ca + u * (cb - ca)))


def sample_truncated_normal(mu: float, sigma: float, lo: float, hi: float,
                            rng: np.random.Generator) -> float:
    """One draw from N(mu, sigma^2) restricted to (lo, hi].

    Inverse-CDF on the truncated uniform for standardized bounds within
    +-TAIL_CUTOFF; exponential-proposal rejection beyond, which stays
    numerically valid out to standardized bounds of 30 and more.
    """
    if not (lo < hi):
        raise InputError(f"empty interval ({lo}, {hi}]")
    if sigma <= 0:
        raise InputError("sigma must be positive")
    if lo == -np.inf and hi == np.inf:
        return float(mu + sigma * rng.standard_normal())
    a = (lo - mu) / sigma
    b = (hi - mu) / sigma
    z = _trunc_std_normal(a, b, rng)
    x = mu + sigma * z
    # Enforce the half-open interval exactly despite rounding.
    if x <= lo:
        x = np.nextafter(lo, np.inf)
    if x > hi:
        x = hi
    return float(x)


def sample_conditional(cm: ConditionalMixture, rng: np.random.Generator,
                       size: Optional[int] = None) -> np.ndarray:
    """Draw points from the conditional mixture.

    Returns a (d,) point when size is None, else a (size, d) matrix. Every
    returned point satisfies the box exactly. Dimensions the box leaves
    unbounded are drawn as plain normals, so conditioning on the unbounded
    box reproduces the unconditional sampler draw for draw.
    """
    single = size is None
    n = 1 if single else int(size)
    gmm = cm.base
    comps = _categorical(rng, cm.tilde_phi, n)
    X = np.empty((n, gmm.d))
    for i in range(gmm.d):
        lo, hi = cm.box.lower[i], cm.box.upper[i]
        mu = gmm.means[comps, i]
        sd = gmm.stddevs[comps, i]
        if lo == -np.inf and hi == np.inf:
            X[:, i] = mu + sd * rng.standard_normal(n)
            continue
        a = cm.alpha[comps, i]
        b = cm.beta[comps, i]
        u = rng.random(n)
        z = np.empty(n)
        upper = a >= 0.0
        lower = ~upper & (b <= 0.0)
        mid = ~upper & ~lower
        if np.any(upper):
            ca, cb = ndtr(-a[upper]), ndtr(-b[upper])
            z[upper] = -ndtri(cb + u[upper] * (ca - cb))
        if np.any(lower):
            ca, cb = ndtr(a[lower]), ndtr(b[lower])
            z[lower] = ndtri(ca + u[lower] * (cb - ca))
        if np.any(mid):
            ca, cb = ndtr(a[mid]), ndtr(b[mid])
            z[mid] = ndtri(ca + u[mid] * (cb - ca))
        # Far-tail points fall back to rejection sampling one at a time.
        tails = np.flatnonzero((a >= TAIL_CUTOFF) | (b <= -TAIL_CUTOFF) | ~np.isfinite(z))
        for j in tails:
            z[j] = _trunc_std_normal(float(a[j]), float(b[j]), rng)
        x = mu + sd * z
        np.clip(x, np.nextafter(lo, np.inf), hi, out=x)
        X[:, i] = x
    return X[0] if single else X


def sample(gmm: GaussianMixture, rng: np.random.Generator,
           size: Optional[int] = None) -> np.ndarray:
    """Unconditional draw: component from Categorical(weights), then the
    component's axis-aligned normal. Implemented as conditioning on the
    unbounded box (identical code path, Z = 1)."""
    return sample_conditional(condition(gmm, BoxConstraint.unbounded(gmm.d)), rng, size)


@dataclass(frozen=True)
class EMConfig:
    max_iters: int = 200
    loglik_tol: float = 1e-7
    variance_floor: Optional[float] = None  # None -> 1e-6 * (per-dim data range)^2
    n_init: int = 4
    seed: int = 0


def _kmeanspp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j] = X[rng.integers(n)]
            continue
        probs = d2 / total
        centers[j] = X[_categorical(rng, probs, 1)[0]]
        d2 = np.minimum(d2, np.sum((X - centers[j]) ** 2, axis=1))
    return centers


def _em_run(X: np.ndarray, k: int, floor: np.ndarray, cfg: EMConfig,
            rng: np.random.Generator, history: Optional[list] = None):
    n, d = X.shape
    centers = _kmeanspp_init(X, k, rng)
    # Hard-assign to the seeded centers for the initial M step.
    assign = np.argmin(
        ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2), axis=1)
    resp = np.zeros((n, k))
    resp[np.arange(n), assign] = 1.0
    resp += 1e-6
    resp /= resp.sum(axis=1, keepdims=True)

    loglik = -np.inf
    w = mu = sd = None
    for _ in range(cfg.max_iters):
        # M step
        nk = np.maximum(resp.sum(axis=0), 1e-10)
        w = nk / n
        mu = (resp.T @ X) / nk[:, None]
        var = (resp.T @ (X * X)) / nk[:, None] - mu * mu
        var = np.maximum(var, floor[None, :])
        sd = np.sqrt(var)
        # E step
        z = (X[:, None, :] - mu[None, :, :]) / sd[None, :, :]
        logp = -0.5 * np.sum(z * z, axis=2) - np.sum(np.log(sd), axis=1) \
            - 0.5 * d * math.log(2 * math.pi)
        with np.errstate(divide="ignore"):
            logp = logp + np.log(np.maximum(w, 1e-300))[None, :]
        norm = logsumexp(logp, axis=1)
        new_loglik = float(norm.sum())
        resp = np.exp(logp - norm[:, None])
        if history is not None:
            history.append(new_loglik)
        if new_loglik - loglik <= cfg.loglik_tol * (1.0 + abs(new_loglik)) and np.isfinite(loglik):
            loglik = new_loglik
            break
        loglik = new_loglik
    return loglik, w, mu, sd


def fit_em(data, k: int, cfg: EMConfig = EMConfig(),
           history_out: Optional[list] = None) -> GaussianMixture:
    """Fit a diagonal-covariance mixture by EM with k-means++ seeding.

    Runs cfg.n_init restarts and keeps the best final log-likelihood.
    Deterministic given cfg.seed. Components whose weight collapses below
    1e-8 are dropped with a warning. history_out, when given, receives the
    winning restart's log-likelihood sequence (one entry per iteration).
    """
    X = data.features if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    if X.ndim != 2:
        raise InputError("expected a 2-d feature matrix")
    n, d = X.shape
    if k < 1:
        raise ConfigError("k must be >= 1")
    if k > n:
        raise ConfigError(f"k={k} exceeds the number of points n={n}")
    ranges = X.max(axis=0) - X.min(axis=0)
    if cfg.variance_floor is None:
        floor = 1e-6 * np.maximum(ranges, 1e-3) ** 2
    else:
        floor = np.full(d, float(cfg.variance_floor))

    best = None
    for r in range(cfg.n_init):
        rng = np.random.default_rng([cfg.seed, r])
        hist: list = []
        loglik, w, mu, sd = _em_run(X, k, floor, cfg, rng, hist)
        if best is None or loglik > best[0]:
            best = (loglik, w, mu, sd, hist)
    _, w, mu, sd, hist = best
    if history_out is not None:
        history_out.extend(hist)

    keep = w >= 1e-8
    if not np.all(keep):
        warnings.warn(f"dropping {int((~keep).sum())} degenerate mixture component(s)")
        w, mu, sd = w[keep], mu[keep], sd[keep]
    w = w / w.sum()
    return GaussianMixture(w, mu, sd)


def select_k_bic(data, k_grid=None, cfg: EMConfig = EMConfig()) -> GaussianMixture:
    """Pick K by BIC over a small grid (default {1,2,5,10,20} capped at n/10)."""
    X = data.features if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    n, d = X.shape
    if k_grid is None:
        k_grid = [k for k in (1, 2, 5, 10, 20) if k <= max(1, n // 10)]
        if not k_grid:
            k_grid = [1]
    best = None
    for k in k_grid:
        hist: list = []
        gmm = fit_em(X, k, cfg, history_out=hist)
        loglik = hist[-1] if hist else float(log_pdf(gmm, X).sum())
        n_params = (gmm.k - 1) + 2 * gmm.k * d
        bic = -2.0 * loglik + n_params * math.log(n)
        if best is None or bic < best[0]:
            best = (bic, gmm)
    return best[1]
