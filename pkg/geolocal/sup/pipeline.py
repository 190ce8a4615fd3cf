"""
Geolocal - pipeline
Two-level reduction: circumference interpolation with symmetrization nested
inside the radial interpolation towards g_worst, and the certified error ledger
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np
from loguru import logger

from .. import SCHEMA_VERSION
from .util import GeoException, DomainException, PreconditionException, derive_stream
from .hamiltonian import CoeffVector, taylor_error_bound, spectral_norm_bound, \
    trace_norm_bound, transition_probability
from .gaussian import EnsembleParams, PlaneFrame, angle_distribution, radius_distribution, \
    circle_norm_bound, embed, sample_angle_x, sample_plane, sample_radius, wrap_angle
from .interp import AssumptionViolatedException, BinFamily, EnumLayout, EnumPick, \
    RobustFit, fit_robust, delta_separated_subset, log10_rebw_factor, \
    log10_remez_extrapolation, log10_remez_interior, make_bins_circumference, \
    make_bins_mass, make_bins_radial, rescale_to_unit
from .oracle import AverageCaseOracle

# ==============================================================================
# === EXCEPTION ===
# ==============================================================================

class InsufficientNodesException(GeoException):
    """Fewer occupied bins than m + 2k + 1 after every retry."""
    def __init__(self, message: str, stage: str="") -> None:
        super().__init__(message)
        self.stage = stage

class StageFailureException(GeoException):
    """A reduction stage failed; `report` holds the diagnostics gathered so far."""
    def __init__(self, message: str, stage: str, report: Optional["ReductionReport"]=None) -> None:
        super().__init__(message)
        self.stage = stage
        self.report = report

# ==============================================================================
# === GLOBAL ===
# ==============================================================================

RADIAL = "radial"

def circ_stage(index: int) -> str:
    return f"circ:{index}"

# ==============================================================================
# === TYPE ===
# ==============================================================================

@dataclass(frozen=True)
class ReductionParams:
    """Zero for m or a bin count means derive it (see `resolve`)."""
    m: int = 0
    M_r: int = 1000
    M_C: int = 400
    B_radial: int = 0
    B_circ: int = 0
    k_radial: float = 0.11
    k_circ: float = 0.25
    layout: EnumLayout = EnumLayout.MASS
    tau: float = 1.
    retries: int = 3
    fit_floor: float = 1e-12
    eps_steps: int = 10
    jobs: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.m < 0 or self.M_r < 1 or self.M_C < 1:
            raise DomainException("m must be >= 0 and sample counts positive")
        if not (0 <= self.k_radial < 0.5 and 0 <= self.k_circ < 0.5):
            raise DomainException("corruption fractions must lie in [0, 0.5)")
        if not self.tau > 0:
            raise DomainException(f"tau must be positive, got {self.tau}")
        if not self.fit_floor > 0 or self.eps_steps < 0 or self.retries < 0:
            raise DomainException("fit_floor must be positive, eps_steps and retries non-negative")

    def resolve(self, l: int, epsilon_a: float=0.) -> "ReductionParams":
        """m = ceil(e sqrt(l) tau) + ceil(log2(1/eps)), B_radial = 2m, B_circ = ceil(m/0.4) + 1."""
        m = self.m
        if m == 0:
            eps = epsilon_a if epsilon_a > 0 else self.fit_floor
            m = math.ceil(math.e * math.sqrt(l) * self.tau) + math.ceil(math.log2(1. / eps))
        return replace(self, m=m,
                       B_radial=self.B_radial or 2 * m,
                       B_circ=self.B_circ or math.ceil(m / 0.4) + 1)

    @property
    def kr(self) -> int:
        return int(math.floor(self.k_radial * self.B_radial))

    @property
    def kc(self) -> int:
        return int(math.floor(self.k_circ * self.B_circ))

    @property
    def taylor_order(self) -> int:
        return self.m // 2

    def to_json(self) -> Dict[str, Any]:
        return {
            "m": self.m, "M_r": self.M_r, "M_C": self.M_C,
            "B_radial": self.B_radial, "B_circ": self.B_circ,
            "k_radial": self.k_radial, "k_circ": self.k_circ,
            "kr": self.kr, "kc": self.kc,
            "layout": self.layout.name, "tau": self.tau, "retries": self.retries,
            "fit_floor": self.fit_floor, "eps_steps": self.eps_steps,
            "jobs": self.jobs, "seed": self.seed
        }

@dataclass(frozen=True)
class CircumferenceResult:
    index: int
    radius: float
    estimate: float
    nodes: int
    bins: int
    delta: float
    k: int
    epsilon: float
    taylor: float
    log10_bound: float
    certified: bool
    draws: int
    thetas: Tuple[float, ...] = field(repr=False)

    @property
    def bound(self) -> float:
        return math.inf if self.log10_bound > 308 else 10. ** self.log10_bound

    def to_json(self) -> Dict[str, Any]:
        return {
            "stage": circ_stage(self.index),
            "radius": self.radius,
            "estimate": self.estimate,
            "nodes": self.nodes,
            "bins": self.bins,
            "delta": self.delta,
            "k": self.k,
            "epsilon": self.epsilon,
            "taylor": self.taylor,
            "bound": self.bound,
            "log10_bound": self.log10_bound,
            "certified": self.certified,
            "draws": self.draws,
            "thetas": list(self.thetas)
        }

@dataclass(frozen=True)
class LedgerEntry:
    name: str
    formula: str
    value: float
    log10: float

    def to_json(self) -> Dict[str, Any]:
        return {"name": self.name, "formula": self.formula, "value": self.value, "log10": self.log10}

@dataclass(frozen=True)
class BoundLedger:
    entries: Tuple[LedgerEntry, ...]
    total: float
    log10_total: float

    def __getitem__(self, name: str) -> LedgerEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def to_json(self) -> Dict[str, Any]:
        return {"entries": [e.to_json() for e in self.entries],
                "total": self.total, "log10_total": self.log10_total}

@dataclass
class ReductionReport:
    params: ReductionParams
    norm: float
    estimate: Optional[float] = None
    truth: Optional[float] = None
    ledger: Optional[BoundLedger] = None
    circumference: List[CircumferenceResult] = field(default_factory=list)
    dropped: List[Dict[str, Any]] = field(default_factory=list)
    radial: Dict[str, Any] = field(default_factory=dict)
    failure: Optional[Dict[str, str]] = None

    @property
    def certified_bound(self) -> Optional[float]:
        return None if self.ledger is None else self.ledger.total

    @property
    def error(self) -> Optional[float]:
        if self.estimate is None or self.truth is None:
            return None
        return abs(self.estimate - self.truth)

    def to_json(self) -> Dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "status": "failed" if self.failure else "ok",
            "failure": self.failure,
            "estimate": self.estimate,
            "truth": self.truth,
            "error": self.error,
            "certified_bound": self.certified_bound,
            "norm": self.norm,
            "params": self.params.to_json(),
            "radial": self.radial,
            "stages": [c.to_json() for c in self.circumference],
            "dropped": self.dropped,
            "ledger": None if self.ledger is None else self.ledger.to_json()
        }

# ==============================================================================
# === STAGES ===
# ==============================================================================

def _log10(x: float) -> float:
    if x == 0:
        return -math.inf
    return math.log10(x) if math.isfinite(x) else math.inf

def _from_log10(x: float) -> float:
    if x == -math.inf:
        return 0.
    return math.inf if x > 308 else 10. ** x

def _log10_sum(a: float, b: float) -> float:
    """log10(10^a + 10^b) without leaving log space."""
    return float(np.logaddexp(a * math.log(10.), b * math.log(10.)) / math.log(10.))

def _taylor(norm_bound: float, tau: float, order: int) -> Tuple[float, bool]:
    try:
        return taylor_error_bound(norm_bound, tau, order), True
    except PreconditionException as e:
        logger.debug(f"taylor bound uncertified: {e}")
        return math.inf, False

def symmetrized_sample(oracle: AverageCaseOracle, frame: PlaneFrame, R: float, theta: float,
                       stage: str="") -> Tuple[float, float]:
    """(cos theta, mean of the oracle at +theta and -theta)."""
    if not R > 0:
        raise DomainException(f"radius must be positive, got {R}")
    theta, mirror = wrap_angle(theta), wrap_angle(-theta)
    up = oracle(embed(frame, R, theta), stage, (R, theta))
    down = up if mirror == theta else oracle(embed(frame, R, mirror), stage, (R, mirror))
    return math.cos(theta), 0.5 * (up + down)

def _separated(draw, bins: BinFamily, need: int, draws: int, retries: int,
               stage: str) -> Tuple[list, np.ndarray, int]:
    """Draw, separate and double the draw count until `need` bins are hit."""
    for attempt in range(retries + 1):
        samples = draw(draws)
        chosen = delta_separated_subset(samples, bins, EnumPick.OUTER)
        if len(chosen) >= need:
            return chosen, samples, draws
        logger.warning(f"{stage}: {len(chosen)} of {need} bins hit with {draws} draws (attempt {attempt})")
        draws *= 2
    raise InsufficientNodesException(f"{stage}: fewer than {need} occupied bins after {retries} retries", stage)

def _decode_ladder(x: np.ndarray, y: np.ndarray, k: int, delta: float, eps: float,
                   degree: int, steps: int, stage: str) -> Tuple[RobustFit, float]:
    """Smallest eps on the x10 ladder whose bounds admit the fit.

    Both programs are solved once; only their optima are compared per step.
    """
    fit = fit_robust(x, y, k, delta, degree)
    for step in range(steps + 1):
        if (rejected := fit.rejects(eps)) is None:
            return fit, eps
        logger.debug(f"{stage}: eps={eps:.1e} rejected ({rejected}), step {step}")
        eps *= 10.
    raise AssumptionViolatedException(f"{stage}: no fit up to eps={eps / 10.:.1e}", stage)

def circumference_bins(l: int, params: ReductionParams) -> BinFamily:
    if params.layout == EnumLayout.WIDTH:
        return make_bins_circumference(l, params.B_circ)
    return make_bins_mass(angle_distribution(l), -1., 1., params.B_circ)

def radial_window(l: int) -> Tuple[float, float]:
    return 1. - 1. / math.sqrt(l), 1.

def radial_bins(l: int, params: ReductionParams) -> BinFamily:
    if params.layout == EnumLayout.WIDTH:
        return make_bins_radial(l, params.B_radial)
    lo, hi = radial_window(l)
    return make_bins_mass(radius_distribution(EnsembleParams(l)), lo, hi, params.B_radial)

def interpolate_circumference(oracle: AverageCaseOracle, frame: PlaneFrame, R: float,
                              params: ReductionParams, index: int=0) -> CircumferenceResult:
    """Recover F_C(1), the North-pole value on the circle of radius R."""
    if not 0 < R <= 1:
        raise DomainException(f"circumference radius must lie in (0, 1], got {R}")
    stage = circ_stage(index)
    l = frame.table.l
    bins = circumference_bins(l, params)
    k, m = params.kc, params.m
    rng = derive_stream(params.seed, "circ", index)

    chosen, _, draws = _separated(lambda size: sample_angle_x(l, rng, size), bins,
                                  m + 2 * k + 1, params.M_C, params.retries, stage)
    thetas = tuple(math.acos(min(1., max(-1., s.value))) for s in chosen)
    pairs = [symmetrized_sample(oracle, frame, R, t, stage) for t in thetas]
    x = np.array([p[0] for p in pairs])
    y = np.array([p[1] for p in pairs])

    eps0 = oracle.config.epsilon_a + params.fit_floor
    fit, eps = _decode_ladder(x, y, k, bins.delta, eps0, m, params.eps_steps, stage)
    estimate = fit.poly(1.)

    taylor, certified = _taylor(circle_norm_bound(frame, R), params.tau, params.taylor_order)
    log_rebw = log10_remez_interior(bins.delta, m) + log10_rebw_factor(bins.delta, len(x)) + math.log10(eps)
    log_bound = _log10_sum(log_rebw, _log10(taylor)) if certified else math.inf
    logger.debug(f"{stage}: R={R:.4f} nodes={len(x)} eps={eps:.1e} estimate={estimate:.6f}")
    return CircumferenceResult(index, float(R), float(estimate), len(x), bins.count, bins.delta,
                               k, eps, taylor, log_bound, certified, draws, thetas)

# ==============================================================================
# === LEDGER ===
# ==============================================================================

LEDGER_STAGES = ("taylor", "remez", "rebw", "circumference")

def assemble_bound_ledger(stages: Mapping[str, Any]) -> BoundLedger:
    """Taylor(g_worst) + Remez extrapolation x (10/delta)^(2n) x circumference bound.

    stages: taylor -> float, remez -> {delta, m, norm}, rebw -> {delta, n},
    circumference -> float (largest certified circumference bound), and
    optionally log10_circumference when that bound overflows a float.
    """
    if missing := [s for s in LEDGER_STAGES if s not in stages]:
        raise PreconditionException(f"ledger is missing stage(s) {missing}")

    taylor = float(stages["taylor"])
    remez, rebw = stages["remez"], stages["rebw"]
    circ = float(stages["circumference"])
    log_remez = log10_remez_extrapolation(2. * remez["delta"], remez["m"] + 1, remez["norm"])
    log_rebw = log10_rebw_factor(rebw["delta"], rebw["n"])
    log_circ = float(stages.get("log10_circumference", _log10(circ)))
    log_product = log_remez + log_rebw + log_circ
    product = _from_log10(log_product)
    total = taylor + product
    log_total = _log10(total) if math.isfinite(total) else _log10_sum(_log10(taylor), log_product)

    entries = (
        LedgerEntry("taylor", "2 exp(|H| t) (e |H| t / m)^(m+1)", taylor, _log10(taylor)),
        LedgerEntry("remez", "(e^2 |g_worst| / (2 Delta (m+1)))^(m+1)", _from_log10(log_remez), log_remez),
        LedgerEntry("rebw", "(10/delta)^(2n)", _from_log10(log_rebw), log_rebw),
        LedgerEntry("circumference", "max stage bound", circ, log_circ),
        LedgerEntry("product", "remez * rebw * circumference", product, log_product),
        LedgerEntry("total", "taylor + product", total, log_total),
    )
    for e in entries:
        logger.debug(f"ledger {e.name}: {e.value:.6e} [{e.formula}]")
    return BoundLedger(entries, total, log_total)

# ==============================================================================
# === REDUCTION ===
# ==============================================================================

def worst_to_average_reduce(oracle: AverageCaseOracle, g_worst: CoeffVector,
                            params: ReductionParams, truth: bool=False) -> ReductionReport:
    """Estimate D(g_worst) from oracle calls on average-case points.

    Raises StageFailureException with the partial report attached when a
    stage cannot complete.
    """
    norm = g_worst.norm
    if norm == 0:
        raise DomainException("g_worst must be nonzero")
    table = g_worst.table
    l = table.l
    params = params.resolve(l, oracle.config.epsilon_a)
    report = ReductionReport(params, norm)
    if truth:
        cfg = oracle.config
        report.truth = transition_probability(g_worst, cfg.tau, cfg.input_mask or (0,) * table.n)

    frame = sample_plane(g_worst, derive_stream(params.seed, "plane"))
    ensemble = EnsembleParams(l, table=table)
    bins = radial_bins(l, params)
    k, m = params.kr, params.m
    need = m + 2 * k + 1
    rng = derive_stream(params.seed, RADIAL)

    try:
        chosen, _, draws = _separated(lambda size: sample_radius(ensemble, rng, size), bins,
                                      need, params.M_r, params.retries, RADIAL)
    except InsufficientNodesException as e:
        report.failure = {"stage": e.stage, "reason": str(e)}
        raise StageFailureException(str(e), e.stage, report) from e

    def run(s) -> CircumferenceResult | GeoException:
        try:
            return interpolate_circumference(oracle, frame, s.value, params, s.bin)
        except GeoException as e:
            return e

    if params.jobs > 1:
        with ThreadPoolExecutor(max_workers=params.jobs) as pool:
            results = list(pool.map(run, chosen))
    else:
        results = [run(s) for s in chosen]

    for s, res in zip(chosen, results):
        if isinstance(res, GeoException):
            logger.warning(f"{circ_stage(s.bin)} dropped at R={s.value:.5f}: {res}")
            report.dropped.append({"stage": circ_stage(s.bin), "radius": s.value, "reason": str(res)})
        else:
            report.circumference.append(res)

    kept = report.circumference
    lo, hi = radial_window(l)
    report.radial = {"bins": bins.count, "delta": bins.delta, "k": k, "need": need,
                     "occupied": len(chosen), "kept": len(kept), "draws": draws,
                     "window": [lo, hi], "layout": bins.layout.name}
    if len(kept) < need:
        msg = f"{len(kept)} circumference stages survived, need {need}"
        report.failure = {"stage": RADIAL, "reason": msg}
        raise StageFailureException(msg, RADIAL, report)

    u, scale = rescale_to_unit([c.radius for c in kept], lo, hi)
    y = np.array([c.estimate for c in kept])
    eps0 = oracle.config.epsilon_a + params.fit_floor
    try:
        fit, eps = _decode_ladder(u, y, k, bins.delta * scale, eps0, m, params.eps_steps, RADIAL)
    except GeoException as e:
        report.failure = {"stage": RADIAL, "reason": str(e)}
        raise StageFailureException(str(e), RADIAL, report) from e

    report.estimate = float(fit.poly(scale * (norm - lo) - 1.))
    report.radial.update({"epsilon": eps, "target": scale * (norm - lo) - 1.,
                          "poly": fit.poly.to_json()})

    h = min(spectral_norm_bound(g_worst), trace_norm_bound(g_worst))
    taylor, _ = _taylor(h, params.tau, params.taylor_order)
    report.ledger = assemble_bound_ledger({
        "taylor": taylor,
        "remez": {"delta": bins.delta, "m": m, "norm": norm},
        "rebw": {"delta": bins.delta * scale, "n": len(kept)},
        "circumference": max(c.bound for c in kept),
        "log10_circumference": max(c.log10_bound for c in kept),
    })
    logger.info(f"reduce: estimate={report.estimate:.6f} bound={report.ledger.total:.3e} "
                f"kept={len(kept)}/{len(chosen)}")
    return report

def audit_corruptions(report: ReductionReport, oracle: AverageCaseOracle) -> Dict[str, Any]:
    """Corrupted nodes that survived separation, per stage; harness use only.

    A circumference node is bad when either of its two queries was corrupted;
    a radial node is bad when its circumference stage exceeded its budget.
    """
    params = report.params
    circ = {}
    for c in report.circumference:
        stage = circ_stage(c.index)
        bad = 0
        for t in c.thetas:
            recs = (oracle.lookup(stage, (c.radius, t)), oracle.lookup(stage, (c.radius, -t)))
            bad += any(r is not None and r.corrupted for r in recs)
        circ[stage] = bad
    radial = sum(1 for v in circ.values() if v > params.kc)
    return {
        "circumference": circ,
        "radial": radial,
        "kc": params.kc,
        "kr": params.kr,
        "within_budget": radial <= params.kr and all(v <= params.kc for v in circ.values())
    }
