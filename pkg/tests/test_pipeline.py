import json
import math
from decimal import Decimal, getcontext
from pathlib import Path

import numpy as np
import pytest

from geolocal.sup.util import DomainException, PreconditionException, canonical_json, \
    derive_stream
from geolocal.sup.lattice import Lattice, build_term_table, parse_lattice
from geolocal.sup.hamiltonian import CoeffVector, EvolutionSpec, WorstCaseSpec, \
    taylor_probability, transition_probability, worst_case_coeffs
from geolocal.sup.gaussian import EnsembleParams, embed, sample_angle_x, sample_coeffs, \
    sample_plane
from geolocal.sup.interp import AssumptionViolatedException, Polynomial, delta_separated_subset, \
    log10_remez_extrapolation
from geolocal.sup.oracle import AverageCaseOracle, EnumCorruption, OracleConfig, \
    write_trace_csv
from geolocal.sup.pipeline import RADIAL, ReductionParams, StageFailureException, \
    _decode_ladder, assemble_bound_ledger, audit_corruptions, circ_stage, circumference_bins, \
    interpolate_circumference, symmetrized_sample, worst_to_average_reduce
from geolocal.core.decode import coeff_diff

# ==============================================================================

GOLDEN = Path(__file__).parent / "data" / "ledger_golden.json"

TABLE_1X2 = build_term_table(Lattice(1, 2))

def unit_worst_case() -> CoeffVector:
    g = worst_case_coeffs(WorstCaseSpec.uniform(TABLE_1X2, "10", 1., 1., 1.), TABLE_1X2)
    return g.scaled(1. / g.norm)

def frame_for(seed: int):
    rng = derive_stream(seed, "test-frame")
    g = sample_coeffs(EnsembleParams.from_table(TABLE_1X2), rng)
    return sample_plane(g, rng)

# ==============================================================================
# === ORACLE ===
# ==============================================================================

def test_exact_oracle(rng):
    oracle = AverageCaseOracle(OracleConfig())
    g = sample_coeffs(EnsembleParams.from_table(TABLE_1X2), rng)
    assert oracle(g) == transition_probability(g, 1., (0, 0))

def test_oracle_is_deterministic(rng):
    cfg = OracleConfig(epsilon_a=1e-3, delta_corrupt=0.3, seed=9)
    a, b = AverageCaseOracle(cfg), AverageCaseOracle(cfg)
    params = EnsembleParams.from_table(TABLE_1X2)
    for _ in range(50):
        g = sample_coeffs(params, rng)
        assert a(g) == b(g) == a(g)

def test_oracle_noise_is_bounded(rng):
    oracle = AverageCaseOracle(OracleConfig(epsilon_a=1e-4, seed=2))
    params = EnsembleParams.from_table(TABLE_1X2)
    for _ in range(200):
        g = sample_coeffs(params, rng)
        assert abs(oracle(g) - transition_probability(g, 1., (0, 0))) <= 1e-4

def test_corruption_frequency():
    oracle = AverageCaseOracle(OracleConfig(delta_corrupt=0.05, seed=4))
    params = EnsembleParams.from_table(TABLE_1X2)
    rng = derive_stream(4, "frequency")
    calls = 10_000
    for _ in range(calls):
        oracle(sample_coeffs(params, rng))
    hits = sum(r.corrupted for r in oracle.records())
    sigma = math.sqrt(calls * 0.05 * 0.95)
    assert abs(hits - calls * 0.05) <= 3 * sigma
    assert all(r.value == pytest.approx(r.truth + 1.) for r in oracle.records() if r.corrupted)

def test_callback_corruption(rng):
    cfg = OracleConfig(delta_corrupt=0.999, corruption=EnumCorruption.CALLBACK,
                       callback=lambda g, truth, stream: -truth)
    oracle = AverageCaseOracle(cfg)
    g = sample_coeffs(EnsembleParams.from_table(TABLE_1X2), rng)
    value = oracle(g)
    record = oracle.records()[-1]
    assert value == (-record.truth if record.corrupted else record.truth)

def test_oracle_config_validation():
    with pytest.raises(DomainException):
        OracleConfig(delta_corrupt=1.)
    with pytest.raises(DomainException):
        OracleConfig(epsilon_a=-1.)
    with pytest.raises(DomainException):
        OracleConfig(corruption=EnumCorruption.CALLBACK)

def test_trace_csv(tmp_path):
    oracle = AverageCaseOracle(OracleConfig())
    frame = frame_for(1)
    symmetrized_sample(oracle, frame, 0.5, 0.3, "circ:0")
    oracle.reset()
    symmetrized_sample(oracle, frame, 0.5, 0.7, "circ:1")
    lines = write_trace_csv(oracle, tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == "stage,r,theta,norm,value,truth,corrupted"
    assert len(lines) == 3
    assert oracle.lookup("circ:1", (0.5, -0.7)) is not None
    assert oracle.lookup("circ:0", (0.5, 0.3)) is None

# ==============================================================================
# === SYMMETRIZATION ===
# ==============================================================================

def test_symmetrized_pole():
    oracle = AverageCaseOracle(OracleConfig())
    frame = frame_for(2)
    x, y = symmetrized_sample(oracle, frame, 0.4, 0.)
    assert x == 1.
    assert y == transition_probability(embed(frame, 0.4, 0.), 1., (0, 0))
    assert len(oracle.records()) == 1

def test_symmetrized_is_even():
    oracle = AverageCaseOracle(OracleConfig())
    frame = frame_for(3)
    for theta in (0.2, 1.1, 2.9):
        xp, yp = symmetrized_sample(oracle, frame, 0.6, theta)
        xm, ym = symmetrized_sample(oracle, frame, 0.6, -theta)
        assert xp == pytest.approx(xm)
        assert yp == pytest.approx(ym, abs=1e-15)

def test_symmetrized_matches_series():
    oracle = AverageCaseOracle(OracleConfig())
    frame = frame_for(4)
    for theta in (0.3, 1.4, 2.5):
        _, y = symmetrized_sample(oracle, frame, 0.5, theta)
        series = [taylor_probability(EvolutionSpec(embed(frame, 0.5, s * theta), 1.), 30)
                  for s in (1., -1.)]
        assert y == pytest.approx(0.5 * sum(series), abs=1e-10)

# ==============================================================================
# === PARAMETERS ===
# ==============================================================================

def test_params_resolve():
    params = ReductionParams(m=16).resolve(15)
    assert (params.B_radial, params.B_circ) == (32, 41)
    assert (params.kr, params.kc) == (3, 10)
    assert params.taylor_order == 8

def test_params_derive_degree():
    params = ReductionParams().resolve(189, 1e-6)
    assert params.m == math.ceil(math.e * math.sqrt(189)) + math.ceil(math.log2(1e6))
    assert params.B_radial == 2 * params.m

def test_params_validation():
    with pytest.raises(DomainException):
        ReductionParams(k_circ=0.5)
    with pytest.raises(DomainException):
        ReductionParams(fit_floor=0.)

# ==============================================================================
# === LEDGER ===
# ==============================================================================

def test_ledger_golden():
    golden = json.loads(GOLDEN.read_text())
    ledger = assemble_bound_ledger(golden["stages"])
    expected = golden["expected"]
    assert ledger["remez"].log10 == pytest.approx(expected["log10_remez"], abs=1e-6)
    assert ledger["rebw"].log10 == pytest.approx(expected["log10_rebw"], abs=1e-12)
    assert ledger["product"].value == pytest.approx(expected["product"], rel=1e-4)
    assert ledger.total == pytest.approx(expected["total"], rel=1e-4)

def test_ledger_high_precision():
    getcontext().prec = 60
    stages = json.loads(GOLDEN.read_text())["stages"]
    e2 = Decimal(2).exp()
    remez = (e2 * Decimal(2) / (Decimal(2) * Decimal("1e-3") * 9)) ** 9
    rebw = (Decimal(10) / Decimal("0.1")) ** 20
    total = Decimal("1e-6") + remez * rebw * Decimal("1e-70")
    assert assemble_bound_ledger(stages).total == pytest.approx(float(total), rel=1e-12)

def test_ledger_zero_errors():
    ledger = assemble_bound_ledger({"taylor": 2e-5, "remez": {"delta": 1e-3, "m": 8, "norm": 1.},
                                    "rebw": {"delta": 0.1, "n": 10}, "circumference": 0.})
    assert ledger.total == 2e-5
    assert ledger["product"].value == 0.

def test_ledger_is_linear_in_circumference():
    stages = {"taylor": 0., "remez": {"delta": 1e-3, "m": 8, "norm": 1.},
              "rebw": {"delta": 0.1, "n": 10}, "circumference": 1e-70}
    once = assemble_bound_ledger(stages).total
    twice = assemble_bound_ledger(dict(stages, circumference=2e-70)).total
    assert twice == pytest.approx(2. * once, rel=1e-12)

def test_ledger_missing_stage():
    with pytest.raises(PreconditionException):
        assemble_bound_ledger({"taylor": 0., "remez": {"delta": 1e-3, "m": 8, "norm": 1.}})

def test_ledger_overflow():
    ledger = assemble_bound_ledger({"taylor": 1e-6, "remez": {"delta": 1e-6, "m": 40, "norm": 1.},
                                    "rebw": {"delta": 1e-3, "n": 200}, "circumference": 1e-3})
    assert ledger.total == math.inf
    assert math.isfinite(ledger["product"].log10)
    assert ledger.log10_total == pytest.approx(ledger["product"].log10)

def test_ledger_amplification_is_superlinear():
    """log10(bound / eps_A) grows faster than l once m and the node count scale with l."""
    eps = 1e-12
    amp = []
    for text in ("1x2", "1x3", "2x3", "3x3p"):
        lattice = parse_lattice(text)
        l = build_term_table(lattice).l
        delta = l ** -1.5
        ledger = assemble_bound_ledger({"taylor": 0., "remez": {"delta": delta, "m": l, "norm": math.sqrt(lattice.n)},
                                        "rebw": {"delta": delta, "n": 2 * l}, "circumference": eps})
        assert math.isfinite(ledger.log10_total)
        amp.append((l, ledger.log10_total - math.log10(eps)))
    for (l0, a0), (l1, a1) in zip(amp, amp[1:]):
        assert a1 / a0 > l1 / l0

def test_ledger_log10_circumference():
    ledger = assemble_bound_ledger({"taylor": 1e-6, "remez": {"delta": 1e-3, "m": 8, "norm": 1.},
                                    "rebw": {"delta": 0.1, "n": 10}, "circumference": math.inf,
                                    "log10_circumference": 400.})
    assert ledger.total == math.inf
    assert ledger.log10_total == pytest.approx(ledger["remez"].log10 + 40. + 400.)

# ==============================================================================
# === CIRCUMFERENCE ===
# ==============================================================================

def circumference_params(**kw) -> ReductionParams:
    return ReductionParams(**dict({"m": 20, "M_C": 400, "seed": 5}, **kw)).resolve(TABLE_1X2.l)

def test_circumference_exact():
    oracle = AverageCaseOracle(OracleConfig())
    frame = frame_for(6)
    result = interpolate_circumference(oracle, frame, 0.5, circumference_params())
    truth = transition_probability(embed(frame, 0.5, 0.), 1., (0, 0))
    assert abs(result.estimate - truth) <= 1e-6
    assert result.nodes >= 20 + 2 * result.k + 1
    assert result.certified

@pytest.mark.parametrize("seed", range(10))
def test_circumference_near_unit_radius(seed):
    oracle = AverageCaseOracle(OracleConfig())
    frame = frame_for(seed)
    params = ReductionParams(m=16, seed=seed).resolve(TABLE_1X2.l)
    result = interpolate_circumference(oracle, frame, 0.95, params, seed)
    truth = transition_probability(embed(frame, 0.95, 0.), 1., (0, 0))
    assert abs(result.estimate - truth) <= 1e-6
    assert result.certified
    assert math.isfinite(result.log10_bound)

def test_circumference_certified_at_unit_radius():
    oracle = AverageCaseOracle(OracleConfig())
    params = ReductionParams(m=16, seed=1).resolve(TABLE_1X2.l)
    result = interpolate_circumference(oracle, frame_for(1), 1., params)
    assert result.certified
    assert result.taylor < 1.
    assert math.isfinite(result.log10_bound)

def test_circumference_small_radius():
    oracle = AverageCaseOracle(OracleConfig())
    result = interpolate_circumference(oracle, frame_for(7), 1e-3, circumference_params())
    assert result.estimate == pytest.approx(1., abs=1e-3)

def test_circumference_radius_domain():
    oracle = AverageCaseOracle(OracleConfig())
    with pytest.raises(DomainException):
        interpolate_circumference(oracle, frame_for(8), 1.5, circumference_params())
    with pytest.raises(DomainException):
        interpolate_circumference(oracle, frame_for(8), 0., circumference_params())

@pytest.mark.slow
def test_circumference_corrupted():
    frame = frame_for(9)
    truth = transition_probability(embed(frame, 0.5, 0.), 1., (0, 0))
    within = 0
    for trial in range(100):
        oracle = AverageCaseOracle(OracleConfig(epsilon_a=1e-10, delta_corrupt=0.05, seed=trial))
        result = interpolate_circumference(oracle, frame, 0.5, circumference_params(seed=trial), trial)
        within += abs(result.estimate - truth) <= result.bound
    assert within >= 95

# ==============================================================================
# === REDUCTION ===
# ==============================================================================

def test_reduce_rejects_zero():
    oracle = AverageCaseOracle(OracleConfig())
    with pytest.raises(DomainException):
        worst_to_average_reduce(oracle, CoeffVector.zeros(TABLE_1X2), ReductionParams(m=16))

def test_reduce_insufficient_nodes():
    oracle = AverageCaseOracle(OracleConfig())
    params = ReductionParams(m=16, M_r=1, retries=0)
    with pytest.raises(StageFailureException) as info:
        worst_to_average_reduce(oracle, unit_worst_case(), params)
    assert info.value.stage == RADIAL
    assert info.value.report is not None
    assert info.value.report.to_json()["status"] == "failed"

@pytest.mark.slow
def test_reduce_without_extrapolation():
    oracle = AverageCaseOracle(OracleConfig())
    report = worst_to_average_reduce(oracle, unit_worst_case(), ReductionParams(m=16, seed=1), truth=True)
    assert report.error <= 1e-4
    assert report.radial["target"] == pytest.approx(1.)
    assert report.ledger is not None
    assert math.isfinite(report.ledger.log10_total)
    assert all(c.certified for c in report.circumference)
    audit = audit_corruptions(report, oracle)
    assert audit["radial"] == 0 and audit["within_budget"]
    body = report.to_json()
    assert body["status"] == "ok"
    assert len(body["stages"]) == report.radial["kept"]

@pytest.mark.slow
def test_reduce_is_reproducible():
    def once(jobs: int) -> str:
        oracle = AverageCaseOracle(OracleConfig(epsilon_a=1e-10, seed=3))
        report = worst_to_average_reduce(oracle, unit_worst_case(),
                                         ReductionParams(m=12, seed=3, jobs=jobs), truth=True)
        return canonical_json(report.to_json())
    assert once(1) == once(1) == once(3)

@pytest.mark.slow
def test_reduce_corrupted():
    within, over = 0, 0
    stages = 0
    for seed in range(100):
        oracle = AverageCaseOracle(OracleConfig(epsilon_a=1e-10, delta_corrupt=0.05, seed=seed))
        try:
            report = worst_to_average_reduce(oracle, unit_worst_case(),
                                             ReductionParams(m=16, seed=seed), truth=True)
        except StageFailureException:
            continue
        within += report.error <= report.certified_bound
        audit = audit_corruptions(report, oracle)
        assert audit["radial"] <= audit["kr"]
        over += sum(v > audit["kc"] for v in audit["circumference"].values())
        stages += len(audit["circumference"])
    assert within >= 95
    assert over <= 0.05 * stages

def test_stage_names():
    assert circ_stage(4) == "circ:4"

def test_occupancy_monotone_in_draws():
    params = ReductionParams(m=16).resolve(TABLE_1X2.l)
    bins = circumference_bins(TABLE_1X2.l, params)
    need = params.m + 2 * params.kc + 1
    failures = {100: 0, 200: 0, 400: 0}
    for seed in range(200):
        draws = sample_angle_x(TABLE_1X2.l, derive_stream(seed, "monotone"), 400)
        for size in failures:
            failures[size] += len(delta_separated_subset(draws[:size], bins)) < need
    assert failures[100] >= failures[200] >= failures[400]

@pytest.mark.slow
def test_reduce_with_extrapolation():
    g = worst_case_coeffs(WorstCaseSpec.uniform(TABLE_1X2, "10", 1., 1., 1.), TABLE_1X2)
    oracle = AverageCaseOracle(OracleConfig())
    report = worst_to_average_reduce(oracle, g, ReductionParams(m=16, seed=2), truth=True)
    ledger = report.ledger
    for name in ("taylor", "remez", "rebw", "circumference", "product", "total"):
        assert ledger[name].formula
    assert ledger["remez"].log10 == pytest.approx(
        log10_remez_extrapolation(2. * report.radial["delta"], 17, g.norm))
    assert report.error <= report.certified_bound

# ==============================================================================
# === LADDER ===
# ==============================================================================

LADDER_X = np.linspace(-1., 1., 14)
LADDER_DELTA = float(LADDER_X[1] - LADDER_X[0])

def test_decode_ladder_stops_at_first_admissible(rng):
    p = Polynomial([0.3, -0.5, 0.2, 0.1])
    y = p(LADDER_X) + rng.uniform(-1e-5, 1e-5, LADDER_X.size)
    y[[3, 9]] += [0.7, -1.1]
    fit, eps = _decode_ladder(LADDER_X, y, 2, LADDER_DELTA, 1e-12, 3, 10, "ladder")
    assert fit.rejects(eps) is None
    assert fit.rejects(eps / 10.) is not None
    assert coeff_diff(fit.poly, p) < 1e-2

def test_decode_ladder_exhausted(rng):
    y = rng.uniform(-1., 1., LADDER_X.size)
    with pytest.raises(AssumptionViolatedException) as info:
        _decode_ladder(LADDER_X, y, 2, LADDER_DELTA, 1e-12, 3, 0, "ladder")
    assert info.value.stage == "ladder"

# ==============================================================================
# === ANGLES ===
# ==============================================================================

def test_opposite_pi_is_one_query():
    frame = frame_for(3)
    oracle = AverageCaseOracle(OracleConfig(epsilon_a=1e-3, delta_corrupt=0.3, seed=4))
    up, down = embed(frame, 0.7, math.pi), embed(frame, 0.7, -math.pi)
    np.testing.assert_array_equal(up.values, down.values)
    assert oracle(up) == oracle(down)

    oracle.reset()
    x, value = symmetrized_sample(oracle, frame, 0.7, math.pi, circ_stage(0))
    assert x == -1.
    assert len(oracle.records()) == 1
    assert value == oracle.records()[0].value
    assert oracle.lookup(circ_stage(0), (0.7, -math.pi)) is oracle.lookup(circ_stage(0), (0.7, math.pi))
