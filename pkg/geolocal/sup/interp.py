"""
Geolocal - interp
Separated sampling, bin families, Remez bounds and Berlekamp-Welch decoding
"""

import csv
import math
from enum import Enum
from pathlib import Path
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Chebyshev
from numpy.polynomial import Polynomial as NumpyPolynomial
from numpy.polynomial import polynomial as P
from numpy.polynomial.chebyshev import chebval, chebvander
from scipy import stats
from scipy.interpolate import BarycentricInterpolator
from scipy.special import gammaln
from loguru import logger

from .util import GeoException, DomainException, PreconditionException
from .gaussian import EnsembleParams, angle_distribution, radius_distribution
from .program import LinearProgram, FEASIBILITY_TOL, solve_linear_feasibility

# ==============================================================================
# === EXCEPTION ===
# ==============================================================================

class AssumptionViolatedException(GeoException):
    """A decoding residual exceeds what epsilon allows: epsilon or k is understated."""
    def __init__(self, message: str, stage: str="") -> None:
        super().__init__(message)
        self.stage = stage

class UnrecoverableException(GeoException):
    """The classic decoder could not explain the data."""

# ==============================================================================
# === ENUMERATION ===
# ==============================================================================

class EnumProvenance(Enum):
    CLEAN = 0
    CORRUPTED = 1
    UNKNOWN = 2

class EnumPick(Enum):
    FIRST = 0
    OUTER = 1

class EnumLayout(Enum):
    WIDTH = 0
    MASS = 1

# ==============================================================================
# === GLOBAL ===
# ==============================================================================

# right-hand side ceiling for the second program; beyond it the guarantee is vacuous
LP_RHS_CAP = 1e15

# relative slack when checking node separation against delta
SEPARATION_RTOL = 1e-9

# Theta(1/l) window for the extreme circumference bin mass, times l
CIRC_PMIN_WINDOW = (0.05, 1.)

# ==============================================================================
# === TYPE ===
# ==============================================================================

@dataclass(frozen=True, eq=False)
class Polynomial:
    """Real polynomial, ascending monomial coefficients.

    `series` optionally carries the Chebyshev form the polynomial was fitted in;
    evaluation goes through it when present.
    """
    coeffs: np.ndarray
    series: Optional[Chebyshev] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        coeffs = np.array(self.coeffs, dtype=float).reshape(-1)
        nz = np.flatnonzero(coeffs)
        coeffs = coeffs[:nz[-1] + 1] if len(nz) else np.zeros(1)
        coeffs.setflags(write=False)
        object.__setattr__(self, 'coeffs', coeffs)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, x: float | np.ndarray) -> float | np.ndarray:
        if self.series is not None:
            val = self.series(np.asarray(x, dtype=float))
        else:
            val = P.polyval(np.asarray(x, dtype=float), self.coeffs)
        return float(val) if np.ndim(val) == 0 else val

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(P.polysub(self.coeffs, other.coeffs))

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(P.polymul(self.coeffs, other.coeffs))

    def compose_affine(self, a: float, b: float) -> "Polynomial":
        """x -> p(a x + b)."""
        if a == 0:
            return Polynomial([self(b)])
        acc = np.zeros(1)
        for c in self.coeffs[::-1]:
            acc = P.polyadd(P.polymul(acc, [b, a]), [c])
        series = None
        if self.series is not None:
            lo, hi = self.series.domain
            series = Chebyshev(self.series.coef, domain=[(lo - b) / a, (hi - b) / a])
        return Polynomial(acc, series)

    @classmethod
    def from_chebyshev(cls, series: Chebyshev) -> "Polynomial":
        mono = series.convert(kind=NumpyPolynomial)
        return cls(mono.coef, series)

    def to_json(self) -> Dict[str, Any]:
        return {"coeffs": self.coeffs.tolist(), "degree": self.degree}

@dataclass(frozen=True)
class BinFamily:
    """Ordered disjoint closed intervals, consecutive ones at least delta apart.

    WIDTH families have every width equal to delta; MASS families have equal
    probability per bin instead.
    """
    intervals: Tuple[Tuple[float, float], ...]
    delta: float
    p_min: float
    masses: Tuple[float, ...] = ()
    layout: EnumLayout = EnumLayout.WIDTH

    def __post_init__(self) -> None:
        if not self.intervals:
            raise DomainException("bin family needs at least one interval")
        if not self.delta > 0:
            raise DomainException(f"bin separation must be positive, got {self.delta}")
        slack = SEPARATION_RTOL * max(1., self.delta)
        for (a0, b0), (a1, b1) in zip(self.intervals, self.intervals[1:]):
            if a1 - b0 < self.delta - slack:
                raise DomainException(f"bins [{a0}, {b0}] and [{a1}, {b1}] closer than {self.delta}")
        for a, b in self.intervals:
            if not a <= b:
                raise DomainException(f"bin [{a}, {b}] is reversed")

    @property
    def count(self) -> int:
        return len(self.intervals)

    @property
    def center(self) -> float:
        return 0.5 * (self.intervals[0][0] + self.intervals[-1][1])

    @property
    def lefts(self) -> np.ndarray:
        return np.array([a for a, _ in self.intervals])

    def locate(self, x: float) -> Optional[int]:
        idx = int(np.searchsorted(self.lefts, x, side='right')) - 1
        if idx < 0:
            return None
        a, b = self.intervals[idx]
        return idx if a <= x <= b else None

    def to_json(self) -> Dict[str, Any]:
        return {
            "layout": self.layout.name,
            "count": self.count,
            "delta": self.delta,
            "p_min": self.p_min,
            "intervals": [list(i) for i in self.intervals],
        }

class NoisySample(NamedTuple):
    x: float
    y: float
    provenance: EnumProvenance = EnumProvenance.UNKNOWN

class SeparatedSample(NamedTuple):
    bin: int
    index: int
    value: float

@dataclass(frozen=True, eq=False)
class RobustFit:
    """Decoded polynomial, the locator's Chebyshev coefficients on the node hull
    and the optimal residual of each program."""
    poly: Polynomial
    locator: np.ndarray
    first_slack: float
    second_slack: float
    refined: bool
    k: int = 0
    n: int = 0
    delta: float = 1.

    def rejects(self, epsilon: float) -> Optional[str]:
        """Program whose residual noise of size epsilon cannot explain, else None."""
        if self.first_slack > locator_bound(self.k, epsilon):
            return "locator"
        if self.second_slack > second_bound(self.delta, self.n, epsilon):
            return "fit"
        return None

    def to_json(self) -> Dict[str, Any]:
        return {
            "poly": self.poly.to_json(),
            "locator": self.locator.tolist(),
            "first_slack": self.first_slack,
            "second_slack": self.second_slack,
            "refined": self.refined
        }

# ==============================================================================
# === SEPARATED SAMPLING ===
# ==============================================================================

def delta_separated_subset(samples: Sequence[float], bins: BinFamily,
                           pick: EnumPick=EnumPick.FIRST) -> List[SeparatedSample]:
    """At most one representative per occupied bin, ordered by bin.

    FIRST keeps the earliest sample in a bin; OUTER keeps the one farthest from
    the family midpoint.
    """
    chosen: Dict[int, SeparatedSample] = {}
    center = bins.center
    for index, value in enumerate(samples):
        value = float(value)
        if (b := bins.locate(value)) is None:
            continue
        if (old := chosen.get(b)) is None:
            chosen[b] = SeparatedSample(b, index, value)
        elif pick == EnumPick.OUTER and abs(value - center) > abs(old.value - center):
            chosen[b] = SeparatedSample(b, index, value)
    return [chosen[b] for b in sorted(chosen)]

def occupancy_sample_count(p_min: float, c: float=0.9, delta_fail: float=0.1) -> int:
    """Draws needed so that a c fraction of bins is hit with probability 1 - delta_fail."""
    if not p_min > 0:
        raise DomainException(f"p_min must be positive, got {p_min}")
    if not (0 < c < 1 and 0 < delta_fail < 1):
        raise DomainException(f"need 0 < c, delta_fail < 1, got {c}, {delta_fail}")
    return int(math.ceil(math.log(1. / ((1. - c) * delta_fail)) / p_min))

def _masses(dist: stats.rv_continuous, intervals: Sequence[Tuple[float, float]]) -> Tuple[float, ...]:
    return tuple(float(dist.cdf(b) - dist.cdf(a)) for a, b in intervals)

def make_bins_circumference(l: int, B: int) -> BinFamily:
    """B width-l^{-3/2} bins with equal gaps, centred in [-1/sqrt(l), 1/sqrt(l)]."""
    if l <= 3:
        raise DomainException(f"circumference bins need l > 3, got {l}")
    delta = l ** -1.5
    radius = 1. / math.sqrt(l)
    b_max = int(math.floor(radius / delta + 0.5))
    if not 1 <= B <= b_max:
        raise DomainException(f"l={l} fits 1..{b_max} circumference bins, asked for {B}")

    start = -(2 * B - 1) * delta / 2.
    intervals = tuple((start + 2 * j * delta, start + (2 * j + 1) * delta) for j in range(B))
    masses = _masses(angle_distribution(l), intervals)
    p_min = min(masses)
    lo, hi = CIRC_PMIN_WINDOW
    if not lo <= p_min * l <= hi:
        logger.warning(f"circumference p_min={p_min:.3e} is not Theta(1/l) for l={l}")
    return BinFamily(intervals, delta, p_min, masses, EnumLayout.WIDTH)

def radial_pmin_formula(B: int) -> float:
    return 1. / (2. * B * math.sqrt(math.pi * math.e ** 2))

def make_bins_radial(l: int, B: int) -> BinFamily:
    """Width 1/(2 l^{3/2}) bins in [1 - 1/sqrt(l), 1], the first one ending at 1."""
    if l <= 3:
        raise DomainException(f"radial bins need l > 3, got {l}")
    delta = 1. / (2. * l ** 1.5)
    b_max = int(math.floor((1. / math.sqrt(l)) / (2. * delta) + 0.5))
    if B > b_max:
        logger.warning(f"radial window of l={l} holds {b_max} bins; clipping {B}")
        B = b_max
    if B < 1:
        raise DomainException(f"radial bin count must be positive, got {B}")

    intervals = tuple(sorted((1. - (2 * j + 1) * delta, 1. - 2 * j * delta) for j in range(B)))
    masses = _masses(radius_distribution(EnsembleParams(l)), intervals)
    p_min = min(masses)
    if B == b_max:
        expect = radial_pmin_formula(B)
        if abs(p_min - expect) > 0.1 * expect:
            logger.warning(f"radial p_min={p_min:.4e} vs 1/(2B sqrt(pi e^2))={expect:.4e}")
    return BinFamily(intervals, delta, p_min, masses, EnumLayout.WIDTH)

def make_bins_mass(dist: stats.rv_continuous, lo: float, hi: float, B: int) -> BinFamily:
    """B equal-mass bins over [lo, hi] alternating with equal-mass gaps."""
    if B < 1:
        raise DomainException(f"bin count must be positive, got {B}")
    if not lo < hi:
        raise DomainException(f"empty window [{lo}, {hi}]")
    f_lo, f_hi = float(dist.cdf(lo)), float(dist.cdf(hi))
    if not f_hi > f_lo:
        raise DomainException(f"window [{lo}, {hi}] carries no mass")
    edges = dist.ppf(np.linspace(f_lo, f_hi, 2 * B))
    edges[0], edges[-1] = lo, hi
    edges = np.maximum.accumulate(np.clip(edges, lo, hi))
    intervals = tuple((float(edges[2 * j]), float(edges[2 * j + 1])) for j in range(B))
    gaps = [a1 - b0 for (_, b0), (a1, _) in zip(intervals, intervals[1:])]
    delta = min(gaps) if gaps else hi - lo
    if not delta > 0:
        raise DomainException(f"{B} bins over [{lo}, {hi}] collapse a gap to zero")
    masses = _masses(dist, intervals)
    return BinFamily(intervals, delta, min(masses), masses, EnumLayout.MASS)

def random_separated_nodes(n: int, delta: float, rng: np.random.Generator,
                           lo: float=-1., hi: float=1.) -> np.ndarray:
    """n sorted nodes in [lo, hi], consecutive ones at least delta apart."""
    slack = (hi - lo) - (n - 1) * delta
    if n < 1 or slack < 0:
        raise DomainException(f"{n} nodes {delta}-apart do not fit in [{lo}, {hi}]")
    w = rng.dirichlet(np.ones(n + 1))[:n] * slack
    return lo + np.cumsum(w) + delta * np.arange(n)

def rescale_to_unit(nodes: Sequence[float], lo: float, hi: float) -> Tuple[np.ndarray, float]:
    """Affine map [lo, hi] -> [-1, 1] and the factor applied to distances."""
    if not lo < hi:
        raise DomainException(f"empty window [{lo}, {hi}]")
    scale = 2. / (hi - lo)
    return scale * (np.asarray(nodes, dtype=float) - lo) - 1., scale

def unit_affine(lo: float, hi: float) -> Tuple[float, float]:
    """(a, b) with a x + b the [lo, hi] -> [-1, 1] map, for Polynomial.compose_affine."""
    scale = 2. / (hi - lo)
    return scale, -scale * lo - 1.

# ==============================================================================
# === INTERPOLATION AND BOUNDS ===
# ==============================================================================

def lagrange_eval(nodes: Sequence[float], values: Sequence[float], x: float | np.ndarray) -> float | np.ndarray:
    nodes = np.asarray(nodes, dtype=float).reshape(-1)
    values = np.asarray(values, dtype=float).reshape(-1)
    if nodes.shape != values.shape or nodes.size == 0:
        raise DomainException("need as many values as nodes, and at least one")
    if np.unique(nodes).size != nodes.size:
        raise DomainException("interpolation nodes must be distinct")
    if nodes.size == 1:
        val = np.full(np.shape(x), values[0])
    else:
        val = BarycentricInterpolator(nodes, values)(x)
    return float(val) if np.ndim(val) == 0 else val

def log10_remez_extrapolation(delta: float, d: int, L: float) -> float:
    if not (delta > 0 and L > 0) or d < 1:
        raise DomainException(f"need delta, L > 0 and d >= 1, got {delta}, {d}, {L}")
    return d * (2. / math.log(10.) + math.log10(L / (delta * d)))

def remez_extrapolation_bound(delta: float, d: int, L: float) -> float:
    """(e^2 L / (delta d))^d."""
    exp10 = log10_remez_extrapolation(delta, d, L)
    return math.inf if exp10 > 308 else 10. ** exp10

def log10_remez_interior(delta: float, d: int) -> float:
    if not delta > 0 or d < 0:
        raise DomainException(f"need delta > 0 and d >= 0, got {delta}, {d}")
    return (d * math.log(2.) - d * math.log(delta) - gammaln(d + 1)) / math.log(10.)

def remez_interior_bound(delta: float, d: int) -> float:
    """2^d / (delta^d d!)."""
    exp10 = log10_remez_interior(delta, d)
    return math.inf if exp10 > 308 else 10. ** exp10

def leading_coeff_floor(delta: float, d: int) -> float:
    """delta^d / (d + 1)."""
    if not delta > 0 or d < 0:
        raise DomainException(f"need delta > 0 and d >= 0, got {delta}, {d}")
    return delta ** d / (d + 1)

def log10_rebw_factor(delta: float, n: int) -> float:
    """log10 of (10/delta)^(2n)."""
    if not delta > 0:
        raise DomainException(f"delta must be positive, got {delta}")
    return 2 * n * math.log10(10. / delta)

def rebw_bound(delta: float, n: int, epsilon: float) -> float:
    if epsilon == 0:
        return 0.
    exp10 = log10_rebw_factor(delta, n) + math.log10(epsilon)
    return math.inf if exp10 > 308 else 10. ** exp10

# ==============================================================================
# === BERLEKAMP-WELCH ===
# ==============================================================================

def _split(samples: Sequence[Any]) -> Tuple[np.ndarray, np.ndarray]:
    # solvers see (x, y) only; provenance never leaves the sample
    x = np.array([float(s[0]) for s in samples])
    y = np.array([float(s[1]) for s in samples])
    return x, y

def classic_berlekamp_welch(samples: Sequence[Any], k: int, deg_bound: int,
                            tol: float=1e-8) -> Polynomial:
    """Error locator E (monic, degree k) and Q = E p from one linear system."""
    x, y = _split(samples)
    n = x.size
    if k < 0 or deg_bound < 0 or deg_bound > n - 2 * k - 1:
        raise PreconditionException(f"need 0 <= deg <= n - 2k - 1, got n={n} k={k} deg={deg_bound}")

    # Q_0..Q_{deg+k}, E_0..E_{k-1}
    VQ = np.vander(x, deg_bound + k + 1, increasing=True)
    VE = np.vander(x, k, increasing=True) * y[:, None] if k else np.zeros((n, 0))
    A = np.hstack([VQ, -VE])
    rhs = y * x ** k
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    scale = max(1., float(np.max(np.abs(y))))
    if (res := float(np.max(np.abs(A @ sol - rhs)))) > tol * scale:
        raise UnrecoverableException(f"locator system inconsistent, residual {res:.3e}")

    Q = sol[:deg_bound + k + 1]
    E = np.append(sol[deg_bound + k + 1:], 1.)
    quot, rem = P.polydiv(Q, E)
    if (r := float(np.max(np.abs(rem), initial=0.))) > tol * scale:
        raise UnrecoverableException(f"E does not divide Q, remainder {r:.3e}")

    poly = Polynomial(quot)
    fits = int(np.sum(np.abs(poly(x) - y) <= tol * scale))
    if fits < n - k:
        raise UnrecoverableException(f"decoded polynomial fits {fits} of {n} points, need {n - k}")
    return poly

def _hull(x: np.ndarray) -> Tuple[float, float]:
    lo, hi = float(np.min(x)), float(np.max(x))
    return (lo - 1., hi + 1.) if lo == hi else (lo, hi)

def _unit(x: np.ndarray, hull: Tuple[float, float]) -> np.ndarray:
    lo, hi = hull
    return (2. * x - lo - hi) / (hi - lo)

def _chebvander(x: np.ndarray, degree: int, hull: Tuple[float, float]) -> np.ndarray:
    return chebvander(_unit(x, hull), degree)

def to_chebyshev(coeffs: Sequence[float], hull: Tuple[float, float]) -> np.ndarray:
    """Monomial coefficients -> Chebyshev coefficients on the hull."""
    return NumpyPolynomial(coeffs).convert(kind=Chebyshev, domain=list(hull)).coef

def locator_lead(k: int) -> float:
    """Leading Chebyshev coefficient of a degree-k polynomial monic on [-1, 1]."""
    return 1. if k == 0 else 2. ** (1 - k)

def locator_bound(k: int, epsilon: float) -> float:
    return 2. ** k * (epsilon + FEASIBILITY_TOL)

def first_program(x: np.ndarray, y: np.ndarray, k: int, degree: int,
                  hull: Tuple[float, float]) -> LinearProgram:
    """Variables r (degree+k), s (degree k, monic in the hull variable), t.

    Both polynomials are Chebyshev series on the hull. |r(x_i) - y_i s(x_i)| <= t,
    minimise t. A monic s with its roots in the hull has sup norm at most 2^k
    there, so its Chebyshev coefficients stay within 2^(k+1).
    """
    nr = degree + k + 1
    Vr = _chebvander(x, degree + k, hull)
    Vs = _chebvander(x, k, hull) * y[:, None]
    ones = np.ones((x.size, 1))
    A_ub = np.vstack([np.hstack([Vr, -Vs, -ones]), np.hstack([-Vr, Vs, -ones])])
    b_ub = np.zeros(2 * x.size)

    size = nr + k + 2
    A_eq = np.zeros((1, size))
    A_eq[0, nr + k] = 1.
    cap = 2. ** (k + 1)
    bounds = [(None, None)] * nr + [(-cap, cap)] * (k + 1) + [(0., None)]
    c = np.zeros(size)
    c[-1] = 1.
    names = [f"r{j}" for j in range(nr)] + [f"s{j}" for j in range(k + 1)] + ["t"]
    return LinearProgram(A_ub, b_ub, A_eq, np.array([locator_lead(k)]), bounds, c, names, "locator")

def pack_first(r_cheb: Sequence[float], s_cheb: Sequence[float], t: float) -> np.ndarray:
    return np.concatenate([np.asarray(r_cheb, dtype=float), np.asarray(s_cheb, dtype=float), [t]])

def unpack_first(v: np.ndarray, degree: int, k: int) -> Tuple[np.ndarray, np.ndarray, float]:
    nr = degree + k + 1
    return v[:nr], v[nr:nr + k + 1], float(v[-1])

def second_bound(delta: float, n: int, epsilon: float) -> float:
    """min((10/delta)^n (eps + tol), cap)."""
    exp10 = n * math.log10(10. / delta) + math.log10(epsilon + FEASIBILITY_TOL)
    return min(10. ** min(exp10, 308.), LP_RHS_CAP)

def second_program(x: np.ndarray, y: np.ndarray, s_vals: np.ndarray, degree: int,
                   hull: Tuple[float, float]) -> LinearProgram:
    """Variables q (Chebyshev, degree), t; |(q(x_i) - y_i) s(x_i)| <= t, minimise t."""
    Vq = _chebvander(x, degree, hull) * s_vals[:, None]
    ones = np.ones((x.size, 1))
    A_ub = np.vstack([np.hstack([Vq, -ones]), np.hstack([-Vq, -ones])])
    b_ub = np.concatenate([y * s_vals, -y * s_vals])
    bounds = [(None, None)] * (degree + 1) + [(0., None)]
    c = np.zeros(degree + 2)
    c[-1] = 1.
    names = [f"q{j}" for j in range(degree + 1)] + ["t"]
    return LinearProgram(A_ub, b_ub, None, None, bounds, c, names, "fit")

def _check_nodes(x: np.ndarray, delta: float) -> None:
    if np.any(np.abs(x) > 1. + 1e-12):
        raise DomainException("decoder nodes must lie in [-1, 1]; rescale first")
    if not delta > 0:
        raise DomainException(f"delta must be positive, got {delta}")
    if x.size > 1:
        gap = float(np.min(np.diff(np.sort(x))))
        if gap < delta * (1. - SEPARATION_RTOL):
            raise PreconditionException(f"nodes are {gap:.3e} apart, less than delta={delta:.3e}")

def _least_squares(x: np.ndarray, y: np.ndarray, degree: int, hull: Tuple[float, float]) -> Chebyshev:
    coef, *_ = np.linalg.lstsq(_chebvander(x, degree, hull), y, rcond=None)
    return Chebyshev(coef, domain=list(hull))

def fit_robust(x: Sequence[float], y: Sequence[float], k: int, delta: float,
               degree: Optional[int]=None) -> RobustFit:
    """Both decoding programs at their optimum, before any epsilon is checked.

    The locator program finds the smallest weighted residual any (r, s) reaches;
    the fit program then the smallest s-weighted residual of a degree-d q. A
    least-squares refit on the n - k best nodes replaces q when its weighted
    residual is no larger.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    n = x.size
    if x.shape != y.shape:
        raise DomainException("need as many values as nodes")
    _check_nodes(x, delta)
    if not 0 <= k < n:
        raise PreconditionException(f"need 0 <= k < n, got k={k} n={n}")
    top = n - 2 * k - 1
    degree = top if degree is None or degree < 0 else degree
    if not 0 <= degree <= top:
        raise PreconditionException(f"degree {degree} outside 0..n-2k-1={top}")

    hull = _hull(x)
    if k == 0:
        series = _least_squares(x, y, degree, hull)
        t2 = float(np.max(np.abs(series(x) - y)))
        return RobustFit(Polynomial.from_chebyshev(series), np.ones(1), 0., t2, False, k, n, delta)

    v = solve_linear_feasibility(first_program(x, y, k, degree, hull))
    _, s, t1 = unpack_first(v, degree, k)
    s_vals = chebval(_unit(x, hull), s)

    w = solve_linear_feasibility(second_program(x, y, s_vals, degree, hull))
    series = Chebyshev(w[:-1], domain=list(hull))
    t2 = float(w[-1])

    refined = False
    keep = np.argsort(np.abs(series(x) - y), kind='stable')[:n - k]
    candidate = _least_squares(x[keep], y[keep], degree, hull)
    weighted = float(np.max(np.abs((candidate(x) - y) * s_vals)))
    if weighted <= max(t2, locator_bound(k, 0.)):
        series, refined = candidate, True
        t2 = max(t2, weighted)

    logger.debug(f"rebw n={n} k={k} deg={degree} t1={t1:.2e} t2={t2:.2e} refined={refined}")
    return RobustFit(Polynomial.from_chebyshev(series), s, t1, t2, refined, k, n, delta)

def decode_robust(x: Sequence[float], y: Sequence[float], k: int, delta: float, epsilon: float,
                  degree: Optional[int]=None) -> RobustFit:
    """Two linear programs: an approximate error locator, then the fit it weights.

    Raises AssumptionViolatedException when either optimum exceeds what noise
    of size epsilon allows.
    """
    if epsilon < 0:
        raise DomainException(f"epsilon must be non-negative, got {epsilon}")
    fit = fit_robust(x, y, k, delta, degree)
    if (stage := fit.rejects(epsilon)) is not None:
        raise AssumptionViolatedException(f"{stage} residual too large at eps={epsilon:.3e}, k={k}", stage)
    return fit

def robust_berlekamp_welch(samples: Sequence[Any], k: int, delta: float, epsilon: float,
                           degree: Optional[int]=None) -> Polynomial:
    x, y = _split(samples)
    return decode_robust(x, y, k, delta, epsilon, degree).poly

# ==============================================================================
# === DATASET ===
# ==============================================================================

def write_samples_csv(samples: Sequence[NoisySample], fname: Path) -> Path:
    fname = Path(fname)
    fname.parent.mkdir(parents=True, exist_ok=True)
    with open(fname, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(["x", "y", "provenance"])
        for s in samples:
            writer.writerow([repr(float(s.x)), repr(float(s.y)), s.provenance.name.lower()])
    return fname

def read_samples_csv(fname: Path) -> List[NoisySample]:
    with open(fname, 'r', newline='', encoding='utf-8') as f:
        reader = csv.DictReader(f)
        return [NoisySample(float(row["x"]), float(row["y"]),
                            EnumProvenance[row.get("provenance", "unknown").upper()])
                for row in reader]
