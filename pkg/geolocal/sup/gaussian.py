"""
Geolocal - gaussian
The N(0, I/l) ensemble: sampling, the plane through g_worst and the exact
radial and angular marginals
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np
from scipy import stats
from scipy.special import gammaln
from loguru import logger

from .util import DomainException, PreconditionException
from .lattice import TermTable, conjugation_signs
from .hamiltonian import CoeffVector

# ==============================================================================
# === GLOBAL ===
# ==============================================================================

# Gram-Schmidt residual below which the plane direction is redrawn
PLANE_RETRY_TOL = 1e-9
PLANE_RETRY_MAX = 64

# ==============================================================================
# === TYPE ===
# ==============================================================================

@dataclass(frozen=True)
class EnsembleParams:
    l: int
    sigma2: Optional[float] = None
    table: Optional[TermTable] = None

    def __post_init__(self) -> None:
        if self.l < 1:
            raise DomainException(f"term count must be positive, got {self.l}")
        if self.table is not None and self.table.l != self.l:
            raise DomainException(f"table has l={self.table.l}, params say {self.l}")
        if self.sigma2 is None:
            object.__setattr__(self, 'sigma2', 1. / self.l)
        elif self.sigma2 != 1. / self.l:
            raise DomainException(f"variance is fixed to 1/l = {1. / self.l}, got {self.sigma2}")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    @classmethod
    def from_table(cls, table: TermTable) -> "EnsembleParams":
        return cls(table.l, table=table)

@dataclass(frozen=True, eq=False)
class PlaneFrame:
    e_z: np.ndarray
    e_x: np.ndarray
    table: TermTable

    def to_json(self) -> Dict[str, Any]:
        return {"e_z": self.e_z.tolist(), "e_x": self.e_x.tolist()}

# ==============================================================================
# === SAMPLING ===
# ==============================================================================

def sample_coeffs(params: EnsembleParams, rng: np.random.Generator) -> CoeffVector:
    if params.table is None:
        raise PreconditionException("coefficient sampling needs a term table")
    return CoeffVector(params.table, params.sigma * rng.standard_normal(params.l))

def sample_coeff_matrix(params: EnsembleParams, rng: np.random.Generator, size: int) -> np.ndarray:
    """(size, l) block of ensemble draws."""
    return params.sigma * rng.standard_normal((size, params.l))

def sample_plane(g_worst: CoeffVector, rng: np.random.Generator) -> PlaneFrame:
    norm = g_worst.norm
    if norm == 0:
        raise DomainException("plane needs a nonzero g_worst")
    e_z = g_worst.values / norm
    for attempt in range(PLANE_RETRY_MAX):
        q = rng.standard_normal(g_worst.l)
        q /= np.linalg.norm(q)
        q = q - np.dot(q, e_z) * e_z
        residual = np.linalg.norm(q)
        if residual >= PLANE_RETRY_TOL:
            q /= residual
            # second pass keeps the inner product at machine precision
            q -= np.dot(q, e_z) * e_z
            return PlaneFrame(e_z, q / np.linalg.norm(q), g_worst.table)
        logger.debug(f"plane retry {attempt}: residual {residual:.2e}")
    raise DomainException("could not draw a direction off the g_worst axis")

def wrap_angle(theta: float) -> float:
    """theta reduced to (-pi, pi]; -pi and pi are the same point."""
    t = math.remainder(theta, 2. * math.pi)
    return math.pi if t == -math.pi else t

def embed(frame: PlaneFrame, r: float, theta: float) -> CoeffVector:
    if r < 0:
        raise DomainException(f"radius must be non-negative, got {r}")
    theta = wrap_angle(theta)
    values = r * math.cos(theta) * frame.e_z + r * math.sin(theta) * frame.e_x
    return CoeffVector(frame.table, values)

def circle_norm_bound(frame: PlaneFrame, r: float) -> float:
    """Bound on |H| over the whole circle of radius r in the plane, without spectra.

    Coordinate i peaks at r |(e_z,i, e_x,i)| on the circle while |g| = r
    throughout it; trace-orthogonal terms give |H| <= 2^(n/2) |g|.
    """
    if r < 0:
        raise DomainException(f"radius must be non-negative, got {r}")
    l1 = float(np.sum(np.hypot(frame.e_z, frame.e_x)))
    return r * min(l1, math.sqrt(frame.table.l), 2. ** (frame.table.n / 2.))

def sample_radius(params: EnsembleParams, rng: np.random.Generator,
                  size: Optional[int]=None) -> float | np.ndarray:
    """sigma * sqrt(sum of l squared standard normals)."""
    shape = (params.l,) if size is None else (size, params.l)
    u = rng.standard_normal(shape)
    r = params.sigma * np.sqrt(np.sum(u * u, axis=-1))
    return float(r) if size is None else r

def sample_angle_x(l: int, rng: np.random.Generator,
                   size: Optional[int]=None) -> float | np.ndarray:
    """X = u_1 / |u| for a standard normal u in R^l."""
    if l < 2:
        raise DomainException(f"angle sampling needs l >= 2, got {l}")
    shape = (l,) if size is None else (size, l)
    u = rng.standard_normal(shape)
    x = u[..., 0] / np.linalg.norm(u, axis=-1)
    return float(x) if size is None else x

def sample_plane_points(frame: PlaneFrame, rng: np.random.Generator, size: int,
                        r: Optional[float]=None) -> np.ndarray:
    """(size, l) points of the plane: radius from the chi law (or fixed at r),
    cos(theta) from the angle law and a fair sign on theta."""
    l = frame.table.l
    if r is None:
        radius = sample_radius(EnsembleParams(l), rng, size)
    elif r < 0:
        raise DomainException(f"radius must be non-negative, got {r}")
    else:
        radius = np.full(size, float(r))
    theta = np.arccos(sample_angle_x(l, rng, size)) * rng.choice([-1., 1.], size)
    return radius[:, None] * (np.cos(theta)[:, None] * frame.e_z + np.sin(theta)[:, None] * frame.e_x)

# ==============================================================================
# === DENSITY ===
# ==============================================================================

def angular_prefactor(l: int) -> float:
    """C_l = Gamma(l/2) / (sqrt(pi) Gamma((l-1)/2)), bracketed by Gautschi's inequality."""
    if l <= 3:
        raise DomainException(f"angular density needs l > 3, got {l}")
    c = math.exp(gammaln(l / 2.) - gammaln((l - 1) / 2.) - 0.5 * math.log(math.pi))
    lo, hi = math.sqrt((l - 2) / (2 * math.pi)), math.sqrt(l / (2 * math.pi))
    assert lo < c < hi, f"C_{l}={c} outside ({lo}, {hi})"
    return c

def angular_density(x: float | np.ndarray, l: int) -> float | np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1):
        raise DomainException("angular density is supported on [-1, 1]")
    val = angular_prefactor(l) * np.power(1. - x * x, (l - 3) / 2.)
    return float(val) if val.ndim == 0 else val

def radial_density(r: float | np.ndarray, params: EnsembleParams) -> float | np.ndarray:
    """Scaled chi(l) density evaluated in log space."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainException("radial density needs r >= 0")
    l, sigma = params.l, params.sigma
    with np.errstate(divide='ignore'):
        log_r = np.log(r)
    log_norm = (l / 2. - 1.) * math.log(2.) + gammaln(l / 2.) + l * math.log(sigma)
    val = np.exp((l - 1) * log_r - r * r / (2. * params.sigma2) - log_norm)
    return float(val) if val.ndim == 0 else val

def angle_distribution(l: int) -> stats.rv_continuous:
    """X = cos(theta) as 2 Beta((l-1)/2, (l-1)/2) - 1."""
    a = (l - 1) / 2.
    return stats.beta(a, a, loc=-1., scale=2.)

def radius_distribution(params: EnsembleParams) -> stats.rv_continuous:
    return stats.chi(params.l, scale=params.sigma)

def radial_moments(l: int) -> Dict[str, float]:
    sigma = 1. / math.sqrt(l)
    mean_r = sigma * math.sqrt(2.) * math.exp(gammaln((l + 1) / 2.) - gammaln(l / 2.))
    mean_r2 = l * sigma * sigma
    return {
        "mean_r": mean_r,
        "mean_r2": mean_r2,
        "var_r": mean_r2 - mean_r * mean_r,
        "var_r_expansion": 1. / (2 * l) - 1. / (8 * l * l),
        "mode_r": sigma * math.sqrt(l - 1)
    }

def conjugate_coeffs(coeffs: CoeffVector, mask) -> CoeffVector:
    """Z^x H Z^x as a sign flip of the coefficients."""
    return coeffs.with_values(coeffs.values * conjugation_signs(coeffs.table, mask))

# ==============================================================================
# === REPORT ===
# ==============================================================================

def _chi2_against(samples: np.ndarray, dist: stats.rv_continuous, bins: int) -> tuple:
    # equal-probability cells under the reference law
    edges = dist.ppf(np.linspace(0., 1., bins + 1))
    edges[0], edges[-1] = -np.inf, np.inf
    observed, _ = np.histogram(samples, bins=edges)
    expected = np.full(bins, samples.shape[0] / bins)
    result = stats.chisquare(observed, expected)
    return float(result.statistic), float(result.pvalue)

def stats_report(params: EnsembleParams, rng: np.random.Generator, samples: int,
                 bins: int=50) -> Dict[str, Any]:
    """Monte-Carlo moments and goodness-of-fit of the radial and angular samplers."""
    radius = sample_radius(params, rng, samples)
    angle = sample_angle_x(params.l, rng, samples)
    chi2_angle, p_angle = _chi2_against(angle, angle_distribution(params.l), bins)
    chi2_radius, p_radius = _chi2_against(radius, radius_distribution(params), bins)
    exact = radial_moments(params.l)
    report = {
        "l": params.l,
        "samples": samples,
        "mean_r": float(radius.mean()),
        "mean_r2": float(np.mean(radius * radius)),
        "var_r": float(radius.var(ddof=1)),
        "mean_x": float(angle.mean()),
        "mean_x2": float(np.mean(angle * angle)),
        "chi2_angle": chi2_angle,
        "chi2_pvalue": p_angle,
        "chi2_radius": chi2_radius,
        "chi2_radius_pvalue": p_radius,
        "expected": {
            "mean_r": exact["mean_r"],
            "mean_r2": exact["mean_r2"],
            "var_r": exact["var_r_expansion"],
            "mean_x2": 1. / params.l,
            "formula": {
                "mean_r": "sigma sqrt(2) Gamma((l+1)/2) / Gamma(l/2)",
                "mean_r2": "l sigma^2",
                "var_r": "1/(2l) - 1/(8l^2)",
                "angle": "C_l (1-x^2)^((l-3)/2)",
            }
        }
    }
    logger.info(f"stats l={params.l}: mean_r2={report['mean_r2']:.4f} chi2 p={p_angle:.3f}")
    return report
