"""von-Mises-Fisher density, concentration estimation, and sampling.

The log normalization constant is evaluated through the exponentially
scaled modified Bessel function of the first kind (order E/2 - 1), with a
log-space power-series fallback where the scaled routine underflows
(small kappa at large order). This keeps log densities finite for
kappa <= 1e4 and E <= 1024.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, ive, logsumexp

from .errors import DataError, NumericalError

UNIT_NORM_TOL = 1e-6


@dataclass
class VmfComponent:
    """Mean direction (unit vector) and concentration of one component."""

    mu: np.ndarray
    kappa: float

    def __post_init__(self) -> None:
        self.mu = np.asarray(self.mu, dtype=np.float64)
        if self.mu.ndim != 1 or self.mu.shape[0] < 2:
            raise DataError(f"mu must be a vector of dimension >= 2, got {self.mu.shape}")
        norm = float(np.linalg.norm(self.mu))
        if abs(norm - 1.0) > 1e-9:
            raise DataError(f"mu must be unit norm (got {norm!r})")
        if not np.isfinite(self.kappa) or self.kappa < 0:
            raise DataError(f"kappa must be finite and >= 0, got {self.kappa}")

    @property
    def dim(self) -> int:
        return self.mu.shape[0]


def _log_bessel_i_series(nu: float, kappa: float, terms: int = 200) -> float:
    """log I_nu(kappa) via the ascending series, summed in log space.

    Accurate where the scaled Bessel routine underflows, i.e. kappa small
    relative to nu; 200 terms cover the whole switch-over region for
    nu <= 512, kappa <= 1e4.
    """
    m = np.arange(terms)
    log_terms = (2 * m + nu) * np.log(kappa / 2.0) - gammaln(m + 1) - gammaln(m + nu + 1)
    return float(logsumexp(log_terms))


def log_bessel_i(nu: float, kappa: float) -> float:
    """log of the modified Bessel function of the first kind I_nu(kappa)."""
    if kappa < 0:
        raise DataError(f"kappa must be >= 0, got {kappa}")
    if kappa == 0.0:
        return 0.0 if nu == 0 else -np.inf
    scaled = float(ive(nu, kappa))
    # ive loses precision once it approaches the denormal range.
    if scaled > 1e-280:
        return float(np.log(scaled)) + kappa
    return _log_bessel_i_series(nu, kappa)


def log_sphere_area(dim: int) -> float:
    """log surface area of the unit sphere embedded in R^dim."""
    return float(np.log(2.0) + (dim / 2.0) * np.log(np.pi) - gammaln(dim / 2.0))


def log_norm_const(dim: int, kappa: float) -> float:
    """log c_E(kappa) of the vMF density on the sphere in R^dim.

    At kappa = 0 this is the uniform density, i.e. the negative log
    surface area. A non-finite result signals Bessel overflow and raises.
    """
    if dim < 2:
        raise DataError(f"dim must be >= 2, got {dim}")
    if not np.isfinite(kappa) or kappa < 0:
        raise DataError(f"kappa must be finite and >= 0, got {kappa}")
    if kappa == 0.0:
        return -log_sphere_area(dim)
    nu = dim / 2.0 - 1.0
    out = nu * np.log(kappa) - (dim / 2.0) * np.log(2.0 * np.pi) - log_bessel_i(nu, kappa)
    if not np.isfinite(out):
        raise NumericalError(f"log_norm_const overflow at dim={dim}, kappa={kappa}")
    return float(out)


def log_pdf(d: np.ndarray, comp: VmfComponent) -> float:
    """log vMF density of a unit vector under one component."""
    d = np.asarray(d, dtype=np.float64)
    norm = float(np.linalg.norm(d))
    if abs(norm - 1.0) > UNIT_NORM_TOL:
        raise DataError(f"input must be unit norm within {UNIT_NORM_TOL}, got {norm!r}")
    return log_norm_const(comp.dim, comp.kappa) + comp.kappa * float(np.dot(comp.mu, d))


def estimate_kappa(r_bar: float, dim: int, kappa_max: float) -> float:
    """Concentration from the mean resultant length.

    Uses the closed-form approximation r*(E - r^2)/(1 - r^2), clamped at
    ``kappa_max``. A resultant length >= 1 (fully concentrated) clamps to
    ``kappa_max`` directly.
    """
    if r_bar < 0:
        raise DataError(f"r_bar must be >= 0, got {r_bar}")
    if r_bar >= 1.0:
        return float(kappa_max)
    kappa = r_bar * (dim - r_bar**2) / (1.0 - r_bar**2)
    return float(min(kappa, kappa_max))


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def sample_uniform_sphere(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. points uniform on the unit sphere in R^dim."""
    x = rng.standard_normal((n, dim))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _sample_pole_cosines(kappa: float, n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Cosines to the mean direction via rejection on the tangent-normal
    decomposition (works for kappa = 0 as well, where b = 1)."""
    p = dim - 1
    b = p / (np.sqrt(4.0 * kappa**2 + p**2) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + p * np.log(1.0 - x0**2)
    out = np.empty(n)
    got = 0
    while got < n:
        batch = max(n - got, 1024)
        z = rng.beta(p / 2.0, p / 2.0, size=batch)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.uniform(size=batch)
        ok = kappa * w + p * np.log(1.0 - x0 * w) - c >= np.log(u)
        take = min(int(ok.sum()), n - got)
        out[got : got + take] = w[ok][:take]
        got += take
    return out


def sample_vmf_about(
    means: np.ndarray, kappa: float, rng: np.random.Generator
) -> np.ndarray:
    """One vMF draw per row of ``means`` (all at the same kappa).

    Samples are drawn around the first basis vector and mapped onto each
    mean direction by a Householder reflection, which preserves the
    distribution on the sphere.
    """
    means = np.atleast_2d(np.asarray(means, dtype=np.float64))
    n, dim = means.shape
    w = _sample_pole_cosines(kappa, n, dim, rng)
    tangent = rng.standard_normal((n, dim - 1))
    tangent /= np.linalg.norm(tangent, axis=1, keepdims=True)
    samples = np.empty((n, dim))
    samples[:, 0] = w
    samples[:, 1:] = np.sqrt(np.maximum(0.0, 1.0 - w**2))[:, None] * tangent

    # Householder reflection taking e0 to each mean.
    u = -means.copy()
    u[:, 0] += 1.0
    uu = np.einsum("ij,ij->i", u, u)
    degenerate = uu < 1e-24  # mean is e0 itself: reflection is the identity
    uu[degenerate] = 1.0
    coef = 2.0 * np.einsum("ij,ij->i", u, samples) / uu
    coef[degenerate] = 0.0
    samples -= coef[:, None] * u
    return samples / np.linalg.norm(samples, axis=1, keepdims=True)


def sample_vmf(comp: VmfComponent, n: int, seed: int) -> np.ndarray:
    """n i.i.d. unit vectors from one vMF component, deterministic per seed."""
    if n < 1:
        raise DataError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    means = np.broadcast_to(comp.mu, (n, comp.dim))
    return sample_vmf_about(means, comp.kappa, rng)
