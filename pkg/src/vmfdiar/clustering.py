"""Spherical k-Means++ and the vMF mixture model fitted with EM.

Three initialization strategies are supported: random directions, random
with one extra component that is fused away mid-training (overinit), and
k-Means cluster centers. Concentrations are clamped at ``kappa_max`` in
every M-step; the E-step runs entirely in log space because kappa * mu'd
differences overflow exp() well below the clamp values used here.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import DataError, NumericalError
from .vmf import VmfComponent, estimate_kappa, log_norm_const, sample_uniform_sphere

DEAD_COMPONENT_EPS = 1e-8


@dataclass
class VmfMixtureParams:
    """Weights, mean directions, and concentrations of a vMF mixture.

    ``reseeded`` lists components that were re-seeded as dead in the
    M-step that produced these parameters; ``fused_pair`` is set on the
    final parameters of an overinit fit.
    """

    means: np.ndarray  # (K, E), unit rows
    kappas: np.ndarray  # (K,)
    weights: np.ndarray  # (K,)
    reseeded: tuple[int, ...] = ()
    fused_pair: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        self.means = np.asarray(self.means, dtype=np.float64)
        self.kappas = np.asarray(self.kappas, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        k = self.means.shape[0]
        if self.kappas.shape != (k,) or self.weights.shape != (k,):
            raise DataError("means, kappas, and weights disagree on K")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise DataError("weights must be nonnegative and sum to 1")
        norms = np.linalg.norm(self.means, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise DataError("all mean directions must be unit norm")
        if np.any(~np.isfinite(self.kappas)) or np.any(self.kappas < 0):
            raise DataError("kappas must be finite and >= 0")

    @property
    def num_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def component(self, k: int) -> VmfComponent:
        return VmfComponent(self.means[k], float(self.kappas[k]))


@dataclass
class PosteriorMatrix:
    """Per-frame class affiliations; unvoiced rows are all-zero."""

    gamma: np.ndarray  # (T, K)
    voiced: np.ndarray  # (T,) bool

    def __post_init__(self) -> None:
        self.gamma = np.asarray(self.gamma, dtype=np.float64)
        self.voiced = np.asarray(self.voiced, dtype=bool)
        if self.gamma.ndim != 2 or self.voiced.shape != (self.gamma.shape[0],):
            raise DataError("gamma must be (T, K) with a length-T voiced mask")
        if np.any(self.gamma < -1e-12) or np.any(self.gamma > 1.0 + 1e-12):
            raise DataError("gamma entries must lie in [0, 1]")
        sums = self.gamma[self.voiced].sum(axis=1)
        if sums.size and np.any(np.abs(sums - 1.0) > 1e-9):
            raise DataError("voiced gamma rows must sum to 1")
        if np.any(self.gamma[~self.voiced] != 0.0):
            raise DataError("unvoiced gamma rows must be zero")

    @property
    def num_components(self) -> int:
        return self.gamma.shape[1]


@dataclass
class KMeansResult:
    labels: np.ndarray  # (N,) int
    centers: np.ndarray  # (K, E) unit rows
    inertia: float
    inertia_trace: np.ndarray = field(default_factory=lambda: np.empty(0))


# ---------------------------------------------------------------------------
# k-Means
# ---------------------------------------------------------------------------

def kmeans_pp_init(data: np.ndarray, k: int, seed: int) -> np.ndarray:
    """k-Means++ seeding: next center drawn with probability proportional
    to the squared Euclidean distance to the nearest chosen center."""
    data = np.asarray(data, dtype=np.float64)
    n = data.shape[0]
    if not 1 <= k <= n:
        raise DataError(f"need 1 <= K <= N, got K={k}, N={n}")
    rng = np.random.default_rng(seed)
    centers = np.empty((k, data.shape[1]))
    centers[0] = data[rng.integers(n)]
    d2 = np.sum((data - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # all remaining mass collapsed (duplicate rows): uniform fallback
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers[i] = data[idx]
        d2 = np.minimum(d2, np.sum((data - centers[i]) ** 2, axis=1))
    return centers


def spherical_kmeans(
    data: np.ndarray, k: int, max_iters: int = 100, seed: int = 0, n_init: int = 10
) -> KMeansResult:
    """Lloyd iterations on unit vectors with k-Means++ seeding.

    Centers are the renormalized means of their assigned points, so the
    Euclidean assignment is equivalent to cosine similarity. Empty
    clusters are re-seeded from the point farthest from its own center.
    The seeding is restarted ``n_init`` times (sub-seeds derived from
    ``seed``) and the run with the lowest inertia wins; a single
    k-Means++ draw misplaces seeds too often on broad clusters.
    """
    data = np.asarray(data, dtype=np.float64)
    n = data.shape[0]
    if k > n:
        raise DataError(f"K={k} exceeds N={n}")
    if n_init < 1:
        raise DataError(f"n_init must be >= 1, got {n_init}")
    rng = np.random.default_rng(seed)
    best: KMeansResult | None = None
    for _ in range(n_init):
        result = _lloyd(data, k, max_iters, int(rng.integers(2**31)))
        if best is None or result.inertia < best.inertia:
            best = result
    return best


def _lloyd(data: np.ndarray, k: int, max_iters: int, seed: int) -> KMeansResult:
    n = data.shape[0]
    centers = kmeans_pp_init(data, k, seed)
    labels = np.full(n, -1)
    trace = []
    for _ in range(max_iters):
        d2 = _pairwise_sq_dist(data, centers)
        new_labels = np.argmin(d2, axis=1)
        trace.append(float(d2[np.arange(n), new_labels].sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        centers = _update_centers(data, labels, centers, k)
    return KMeansResult(labels, centers, trace[-1], np.asarray(trace))


def _pairwise_sq_dist(data: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # ||x - c||^2 = ||x||^2 + ||c||^2 - 2 x'c; both unit here, but stay general
    xx = np.sum(data**2, axis=1)[:, None]
    cc = np.sum(centers**2, axis=1)[None, :]
    return np.maximum(0.0, xx + cc - 2.0 * data @ centers.T)


def _update_centers(
    data: np.ndarray, labels: np.ndarray, centers: np.ndarray, k: int
) -> np.ndarray:
    new = centers.copy()
    empty = []
    for j in range(k):
        sel = labels == j
        if not np.any(sel):
            empty.append(j)
            continue
        mean = data[sel].mean(axis=0)
        norm = np.linalg.norm(mean)
        if norm > 1e-12:
            new[j] = mean / norm
    if empty:
        dist = np.linalg.norm(data - new[labels], axis=1)
        order = np.argsort(dist)[::-1]
        for rank, j in enumerate(empty):
            new[j] = data[order[rank]]
    return new


# ---------------------------------------------------------------------------
# EM for the vMF mixture
# ---------------------------------------------------------------------------

def _log_densities(data: np.ndarray, params: VmfMixtureParams) -> np.ndarray:
    """(N, K) matrix of log p(d_t; mu_k, kappa_k)."""
    log_c = np.array(
        [log_norm_const(params.dim, float(kap)) for kap in params.kappas]
    )
    return data @ (params.means * params.kappas[:, None]).T + log_c[None, :]


def e_step(data: np.ndarray, params: VmfMixtureParams) -> tuple[PosteriorMatrix, float]:
    """Class affiliations and total log-likelihood, computed in log space."""
    data = np.asarray(data, dtype=np.float64)
    with np.errstate(divide="ignore"):
        log_joint = _log_densities(data, params) + np.log(params.weights)[None, :]
    log_marginal = logsumexp(log_joint, axis=1)
    if not np.all(np.isfinite(log_marginal)):
        raise NumericalError("mixture density vanished on some frames")
    gamma = np.exp(log_joint - log_marginal[:, None])
    post = PosteriorMatrix(gamma, np.ones(data.shape[0], dtype=bool))
    return post, float(log_marginal.sum())


def m_step(
    data: np.ndarray, gamma: PosteriorMatrix | np.ndarray, kappa_max: float
) -> VmfMixtureParams:
    """Re-estimate weights, mean directions, and clamped concentrations.

    Dead components (negligible responsibility mass) are re-seeded at the
    data point least explained by the surviving components, with kappa 1
    and weight 1/N, and flagged in ``reseeded``.
    """
    data = np.asarray(data, dtype=np.float64)
    g = gamma.gamma if isinstance(gamma, PosteriorMatrix) else np.asarray(gamma)
    n, dim = data.shape
    n_k = g.sum(axis=0)
    dead = np.flatnonzero(n_k < DEAD_COMPONENT_EPS)
    alive = np.flatnonzero(n_k >= DEAD_COMPONENT_EPS)
    if alive.size == 0:
        raise NumericalError("all mixture components are dead")

    weights = n_k / n
    resultant = g.T @ data  # (K, E)
    means = np.empty_like(resultant)
    kappas = np.empty(g.shape[1])
    for k in alive:
        norm = float(np.linalg.norm(resultant[k]))
        if norm < 1e-300:
            # perfectly isotropic responsibilities: keep an arbitrary direction
            means[k] = np.eye(dim)[0]
            kappas[k] = 0.0
            continue
        means[k] = resultant[k] / norm
        kappas[k] = estimate_kappa(norm / n_k[k], dim, kappa_max)

    if dead.size:
        interim = VmfMixtureParams(
            means[alive],
            kappas[alive],
            weights[alive] / weights[alive].sum(),
        )
        worst = np.argsort(logsumexp(
            _log_densities(data, interim) + np.log(interim.weights)[None, :], axis=1
        ))
        for rank, k in enumerate(dead):
            means[k] = data[worst[rank % n]]
            kappas[k] = 1.0
            weights[k] = 1.0 / n
        weights = weights / weights.sum()

    return VmfMixtureParams(means, kappas, weights, reseeded=tuple(int(k) for k in dead))


def fuse_components(
    data: np.ndarray,
    params: VmfMixtureParams,
    gamma: PosteriorMatrix | np.ndarray,
    kappa_max: float,
    threshold: float = 0.3,
) -> tuple[VmfMixtureParams, tuple[int, int]]:
    """Merge the two components with the highest activity-set IoU.

    Activity sets are the frames whose affiliation reaches ``threshold``
    (the same threshold used for diarization decisions). If no pair of
    activity sets intersects, the pair with the smallest angular distance
    between mean directions is fused instead. The merged parameters are
    recomputed by an M-step on the summed responsibilities.
    """
    g = gamma.gamma if isinstance(gamma, PosteriorMatrix) else np.asarray(gamma)
    k = params.num_components
    if k < 2:
        raise DataError("need at least 2 components to fuse")
    active = g >= threshold
    best, best_iou = None, 0.0
    for i in range(k):
        for j in range(i + 1, k):
            union = np.count_nonzero(active[:, i] | active[:, j])
            if union == 0:
                continue
            iou = np.count_nonzero(active[:, i] & active[:, j]) / union
            if iou > best_iou:
                best, best_iou = (i, j), iou
    if best is None or best_iou == 0.0:
        # disjoint (or empty) activity everywhere: fall back to closest means
        cos = params.means @ params.means.T
        iu = np.triu_indices(k, 1)
        best = tuple(int(v) for v in np.transpose(iu)[np.argmax(cos[iu])])

    i, j = best
    merged = np.delete(g, j, axis=1)
    merged[:, i] = g[:, i] + g[:, j]
    fused = m_step(data, merged, kappa_max)
    fused.fused_pair = (i, j)
    return fused, (i, j)


def init_mixture(
    data: np.ndarray,
    k: int,
    init: str,
    kappa_init: float = 10.0,
    seed: int = 0,
    kmeans_iters: int = 100,
) -> VmfMixtureParams:
    """Initial mixture parameters for one of the three strategies.

    ``overinit`` starts with one component more than requested; the extra
    component is fused away during fitting.
    """
    data = np.asarray(data, dtype=np.float64)
    rng = np.random.default_rng(seed)
    if init in ("random", "overinit"):
        n_comp = k + 1 if init == "overinit" else k
        means = sample_uniform_sphere(n_comp, data.shape[1], rng)
        return VmfMixtureParams(
            means, np.full(n_comp, kappa_init), np.full(n_comp, 1.0 / n_comp)
        )
    if init == "kmeans":
        result = spherical_kmeans(data, k, max_iters=kmeans_iters, seed=seed)
        counts = np.bincount(result.labels, minlength=k).astype(np.float64)
        return VmfMixtureParams(
            result.centers, np.full(k, kappa_init), counts / counts.sum()
        )
    raise DataError(f"unknown init strategy {init!r}")


def fit_vmfmm(
    data: np.ndarray,
    k: int,
    init: str = "kmeans",
    em_iters: int = 50,
    kappa_max: float = 25.0,
    kappa_init: float = 10.0,
    fuse_at: int = 20,
    fuse_threshold: float = 0.3,
    seed: int = 0,
    history: list | None = None,
) -> tuple[VmfMixtureParams, PosteriorMatrix, np.ndarray]:
    """Fit a K-component vMF mixture with ``em_iters`` EM alternations.

    Under ``overinit`` the fit runs with K+1 components until ``fuse_at``
    iterations have completed, fuses the most redundant pair, and then
    continues to the total iteration budget. Returns the final
    parameters, the posteriors under them, and the per-iteration
    log-likelihood trace (length ``em_iters``). If ``history`` is given,
    (iteration, component count) pairs are appended to it.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise DataError("data must be a nonempty (N, E) matrix")
    if k < 1:
        raise DataError(f"K must be >= 1, got {k}")
    if init == "overinit" and not 1 <= fuse_at < em_iters:
        raise DataError(
            f"overinit needs 1 <= fuse_at < em_iters, got fuse_at={fuse_at}, em_iters={em_iters}"
        )

    params = init_mixture(data, k, init, kappa_init=kappa_init, seed=seed)
    trace = np.empty(em_iters)
    gamma_prev: PosteriorMatrix | None = None
    fused_pair: tuple[int, int] | None = None
    for it in range(em_iters):
        if init == "overinit" and it == fuse_at and params.num_components > k:
            params, fused_pair = fuse_components(
                data, params, gamma_prev, kappa_max, threshold=fuse_threshold
            )
        if history is not None:
            history.append((it, params.num_components))
        gamma_prev, trace[it] = e_step(data, params)
        params = m_step(data, gamma_prev, kappa_max)
    posterior, _ = e_step(data, params)
    params.fused_pair = fused_pair
    return params, posterior, trace
