import math
from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import Chebyshev
from scipy import integrate
from scipy.optimize import OptimizeResult, linprog

from geolocal.sup.util import DomainException, PreconditionException, derive_stream
from geolocal.sup.gaussian import angle_distribution, angular_density, sample_angle_x
import geolocal.sup.program as program_module
from geolocal.sup.program import LP_METHODS, LinearProgram, InfeasibleException, \
    SolverFailureException, equilibrate, solve_linear_feasibility, write_lp
from geolocal.sup.interp import AssumptionViolatedException, BinFamily, EnumPick, \
    EnumProvenance, NoisySample, Polynomial, UnrecoverableException, \
    classic_berlekamp_welch, decode_robust, delta_separated_subset, first_program, fit_robust, \
    lagrange_eval, leading_coeff_floor, make_bins_circumference, make_bins_mass, \
    make_bins_radial, occupancy_sample_count, pack_first, radial_pmin_formula, \
    random_separated_nodes, read_samples_csv, remez_extrapolation_bound, \
    remez_interior_bound, rescale_to_unit, robust_berlekamp_welch, to_chebyshev, \
    unit_affine, write_samples_csv
from geolocal.core.decode import coeff_diff, rbw_trial

# ==============================================================================

getcontext().prec = 50

# ==============================================================================
# === POLYNOMIAL ===
# ==============================================================================

def test_polynomial_trims():
    p = Polynomial([1., 2., 0., 0.])
    assert p.degree == 1
    assert Polynomial([0., 0.]).degree == 0
    assert p(2.) == 5.
    np.testing.assert_array_equal(p(np.array([0., 1.])), [1., 3.])

def test_polynomial_arithmetic():
    p, q = Polynomial([1., 1.]), Polynomial([-1., 1.])
    assert (p * q).coeffs.tolist() == [-1., 0., 1.]
    assert (p - q).coeffs.tolist() == [2.]

def test_compose_affine():
    p = Polynomial([1., -2., 0.5, 3.])
    a, b = unit_affine(0.2, 0.9)
    q = p.compose_affine(a, b)
    x = np.linspace(0.2, 0.9, 7)
    np.testing.assert_allclose(q(x), p(a * x + b), rtol=1e-12)

def test_compose_affine_keeps_series():
    series = Chebyshev([0.3, -1., 0.25], domain=[-1., 1.])
    p = Polynomial.from_chebyshev(series)
    a, b = unit_affine(0.5, 1.)
    q = p.compose_affine(a, b)
    assert q.series is not None
    x = np.linspace(0.5, 1., 5)
    np.testing.assert_allclose(q(x), series(a * x + b), rtol=1e-12)
    np.testing.assert_allclose(Polynomial(q.coeffs)(x), q(x), rtol=1e-10)

# ==============================================================================
# === BINS ===
# ==============================================================================

def test_bin_family_validation():
    BinFamily(((0., 0.1), (0.2, 0.3)), 0.1, 0.1)
    with pytest.raises(DomainException):
        BinFamily(((0., 0.1), (0.15, 0.3)), 0.1, 0.1)
    with pytest.raises(DomainException):
        BinFamily((), 0.1, 0.1)
    with pytest.raises(DomainException):
        BinFamily(((0.3, 0.2),), 0.1, 0.1)

def test_separated_subset():
    bins = BinFamily(((-1., -0.8), (-0.5, -0.3), (0., 0.2), (0.6, 0.8)), 0.2, 0.1)
    samples = [0.1, -0.9, 0.15, 0.5, 0.7, -0.95, 0.05]
    first = delta_separated_subset(samples, bins)
    assert [s.bin for s in first] == [0, 2, 3]
    assert [s.value for s in first] == [-0.9, 0.1, 0.7]
    outer = delta_separated_subset(samples, bins, EnumPick.OUTER)
    assert [s.value for s in outer] == [-0.95, 0.15, 0.7]
    assert delta_separated_subset([], bins) == []
    assert delta_separated_subset([0.5, 0.55], bins) == []

def test_subset_all_bins(rng):
    bins = make_bins_mass(angle_distribution(20), -1., 1., 12)
    mids = [0.5 * (a + b) for a, b in bins.intervals]
    chosen = delta_separated_subset(mids, bins)
    assert len(chosen) == bins.count
    values = np.array([c.value for c in chosen])
    assert np.all(np.diff(values) >= bins.delta)

def test_circumference_bins():
    bins = make_bins_circumference(100, 100)
    assert bins.count == 100
    assert bins.delta == pytest.approx(1e-3)
    assert bins.intervals[0][0] >= -0.1 - 1e-12 and bins.intervals[-1][1] <= 0.1 + 1e-12
    assert int(np.argmin(bins.masses)) in (0, bins.count - 1)
    a, b = bins.intervals[0]
    mass, _ = integrate.quad(angular_density, a, b, args=(100,))
    assert bins.p_min == pytest.approx(mass, rel=1e-6)
    with pytest.raises(DomainException):
        make_bins_circumference(100, 101)

def test_radial_bins():
    bins = make_bins_radial(100, 100)
    assert bins.count == 100
    assert bins.intervals[-1][1] == pytest.approx(1.)
    assert bins.intervals[0][0] >= 0.9 - 1e-12
    expect = radial_pmin_formula(100)
    assert abs(bins.p_min - expect) / expect < 0.1
    # clipped, not rejected
    assert make_bins_radial(100, 500).count == 100

def test_mass_bins():
    bins = make_bins_mass(angle_distribution(15), -1., 1., 41)
    masses = np.array(bins.masses)
    np.testing.assert_allclose(masses, masses[0], rtol=1e-8)
    assert masses.sum() == pytest.approx((41. / 81.), rel=1e-8)
    gaps = [a1 - b0 for (_, b0), (a1, _) in zip(bins.intervals, bins.intervals[1:])]
    assert min(gaps) == pytest.approx(bins.delta)
    with pytest.raises(DomainException):
        make_bins_mass(angle_distribution(15), 1., -1., 4)

def test_occupancy():
    l = 100
    bins = make_bins_circumference(l, 100)
    draws = occupancy_sample_count(bins.p_min, 0.9, 0.1)
    rng = derive_stream(3, "occupancy")
    good = 0
    for _ in range(1000):
        hits = delta_separated_subset(sample_angle_x(l, rng, draws), bins)
        good += len(hits) >= 0.9 * bins.count
    assert good >= 880

def test_occupancy_count():
    assert occupancy_sample_count(0.01) == math.ceil(math.log(100.) / 0.01)
    with pytest.raises(DomainException):
        occupancy_sample_count(0.)

def test_random_nodes(rng):
    for _ in range(50):
        x = random_separated_nodes(12, 0.12, rng)
        assert x[0] >= -1. and x[-1] <= 1.
        assert np.min(np.diff(x)) >= 0.12 - 1e-12
    with pytest.raises(DomainException):
        random_separated_nodes(30, 0.12, rng)

def test_rescale_to_unit():
    u, scale = rescale_to_unit([0.9, 0.95, 1.], 0.9, 1.)
    np.testing.assert_allclose(u, [-1., 0., 1.], atol=1e-12)
    assert scale == pytest.approx(20.)

# ==============================================================================
# === INTERPOLATION AND BOUNDS ===
# ==============================================================================

def test_lagrange():
    x = np.array([-1., 0., 0.5, 1.])
    assert lagrange_eval(x, x ** 2, 0.3) == pytest.approx(0.09, abs=1e-14)
    assert lagrange_eval([0.2], [7.], 0.9) == 7.
    with pytest.raises(DomainException):
        lagrange_eval([0., 0.], [1., 2.], 0.5)

def test_remez_examples():
    assert remez_extrapolation_bound(0.1, 10, 1.) == pytest.approx(math.exp(20.), rel=1e-12)
    assert remez_extrapolation_bound(0.1, 10, 1.) == pytest.approx(4.85e8, rel=1e-3)
    assert remez_interior_bound(0.5, 0) == pytest.approx(1.)
    assert remez_interior_bound(0.5, 4) == pytest.approx(10.6667, rel=1e-4)
    assert leading_coeff_floor(0.1, 0) == 1.
    assert leading_coeff_floor(0.1, 2) == pytest.approx(3.3333e-3, rel=1e-4)

@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 0.5), st.integers(1, 20), st.floats(1., 3.))
def test_remez_extrapolation_precision(delta, d, L):
    e2 = Decimal(2).exp()
    exact = (e2 * Decimal(L) / (Decimal(delta) * d)) ** d
    assert remez_extrapolation_bound(delta, d, L) == pytest.approx(float(exact), rel=1e-12)

@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 0.5), st.integers(0, 20))
def test_remez_interior_precision(delta, d):
    exact = Decimal(2) ** d / (Decimal(delta) ** d * math.factorial(d))
    assert remez_interior_bound(delta, d) == pytest.approx(float(exact), rel=1e-12)

def test_remez_extrapolation_holds():
    rng = derive_stream(7, "remez", "extrapolation")
    for _ in range(1000):
        d = int(rng.integers(1, 9))
        delta = float(rng.uniform(0.02, 0.2))
        b = d * delta * float(rng.uniform(1., 2.))
        nodes = random_separated_nodes(d + 1, delta, rng, 0., b)
        L = b * float(rng.uniform(1., 3.))
        p = Polynomial(rng.standard_normal(d + 1))
        peak = float(np.max(np.abs(p(nodes))))
        assert abs(p(L)) <= remez_extrapolation_bound(delta, d, L) * peak * (1. + 1e-9)

def test_remez_interior_holds():
    rng = derive_stream(7, "remez", "interior")
    for _ in range(1000):
        d = int(rng.integers(0, 9))
        delta = float(rng.uniform(0.02, 1. / max(d, 1)))
        nodes = random_separated_nodes(d + 1, delta, rng, 0., 1.)
        L = float(rng.uniform(0., 1.))
        p = Polynomial(rng.standard_normal(d + 1))
        peak = float(np.max(np.abs(p(nodes))))
        assert abs(p(L)) <= remez_interior_bound(delta, d) * peak * (1. + 1e-9)

def test_leading_coeff_holds():
    rng = derive_stream(7, "remez", "leading")
    for _ in range(1000):
        d = int(rng.integers(0, 9))
        delta = float(rng.uniform(0.02, 2. / max(d, 1)))
        nodes = random_separated_nodes(d + 1, delta, rng)
        p = Polynomial(np.append(rng.standard_normal(d), 1.))
        peak = float(np.max(np.abs(p(nodes))))
        assert peak >= leading_coeff_floor(delta, d) * (1. - 1e-9)

# ==============================================================================
# === LINEAR PROGRAMS ===
# ==============================================================================

def test_feasibility_trivial():
    v = solve_linear_feasibility(LinearProgram([[-1.], [1.]], [0., 1.]))
    assert -1e-9 <= v[0] <= 1. + 1e-9
    with pytest.raises(InfeasibleException):
        solve_linear_feasibility(LinearProgram([[-1.], [1.]], [-1., 0.]))

def test_program_rejects_nan():
    with pytest.raises(ValueError):
        LinearProgram([[np.nan]], [0.])

def test_equilibrated_rows():
    program = LinearProgram([[1e9, 0.], [0., -1e-7]], [2e9, -3e-7], c=np.array([-1., 1.]))
    scaled = equilibrate(program)
    np.testing.assert_allclose(np.max(np.abs(scaled.A_ub), axis=1), 1.)
    np.testing.assert_allclose(scaled.b_ub, [2., -3.])
    np.testing.assert_allclose(solve_linear_feasibility(program), [2., 3.], rtol=1e-9)

def test_solver_method_fallback(monkeypatch):
    calls = []
    def flaky(*args, method, **kw):
        calls.append(method)
        if method == LP_METHODS[0]:
            return OptimizeResult(status=4, x=None, message="HiGHS Status 0: Not Set")
        return linprog(*args, method=method, **kw)

    monkeypatch.setattr(program_module, "linprog", flaky)
    v = solve_linear_feasibility(LinearProgram([[-1.], [1.]], [0., 1.]))
    assert calls == list(LP_METHODS[:2])
    assert -1e-9 <= v[0] <= 1. + 1e-9

def test_solver_failure_after_every_method(monkeypatch):
    stalled = lambda *args, method, **kw: OptimizeResult(status=4, x=None, message="stalled")
    monkeypatch.setattr(program_module, "linprog", stalled)
    with pytest.raises(SolverFailureException):
        solve_linear_feasibility(LinearProgram([[-1.], [1.]], [0., 1.]))

def test_first_program_witness(rng):
    n, k, degree = 10, 2, 5
    x = random_separated_nodes(n, 0.15, rng)
    p = Polynomial([0.4, -1., 0.7])
    y = p(x) + rng.uniform(-1e-6, 1e-6, n)
    bad = [2, 7]
    y[bad] += 1.
    hull = (float(x.min()), float(x.max()))
    u, _ = rescale_to_unit(x, *hull)
    s = Chebyshev.fromroots(u[bad])
    r = Chebyshev(to_chebyshev(p.coeffs, hull)) * s
    r_cheb = np.zeros(degree + k + 1)
    r_cheb[:r.coef.size] = r.coef
    t = float(np.max(np.abs(r(u) - y * s(u))))
    assert s.coef[-1] == pytest.approx(2. ** (1 - k))
    assert t <= 2. ** k * (1e-6 + 1e-9)

    program = first_program(x, y, k, degree, hull)
    assert program.violation(pack_first(r_cheb, s.coef, t)) <= 1e-9
    fit = fit_robust(x, y, k, 0.15, degree)
    assert fit.first_slack <= t + 1e-9
    assert fit.rejects(1e-6) is None

def test_write_lp(tmp_path, rng):
    x = random_separated_nodes(6, 0.2, rng)
    program = first_program(x, x ** 2, 1, 2, (float(x.min()), float(x.max())))
    fname = write_lp(program, tmp_path / "locator.lp")
    text = fname.read_text()
    for head in ("Minimize", "Subject To", "Bounds", "End"):
        assert head in text
    assert "s1" in text and "r0" in text

# ==============================================================================
# === BERLEKAMP-WELCH ===
# ==============================================================================

def test_classic_exact():
    x = np.linspace(-1., 1., 8)
    p = Polynomial([0., 0., 0., 1.])
    y = p(x)
    q = classic_berlekamp_welch(list(zip(x, y)), 2, 3)
    assert coeff_diff(p, q) < 1e-10
    y[[1, 5]] += [0.8, -1.3]
    q = classic_berlekamp_welch(list(zip(x, y)), 2, 3)
    assert coeff_diff(p, q) < 1e-10

def test_classic_beyond_radius():
    x = np.linspace(-1., 1., 8)
    p = Polynomial([0., 0., 0., 1.])
    y = p(x)
    y[[0, 3, 6]] += [0.8, -1.3, 0.6]
    try:
        q = classic_berlekamp_welch(list(zip(x, y)), 2, 3)
    except UnrecoverableException:
        return
    assert coeff_diff(p, q) > 1e-6

def test_robust_example():
    x = np.linspace(-1., 1., 10)
    p = Polynomial([1., 1., 0., -1.])
    y = p(x)
    y[[2, 6]] += [0.9, -0.4]
    q = robust_berlekamp_welch(list(zip(x, y)), 2, float(x[1] - x[0]), 0.)
    assert coeff_diff(p, q) < 1e-8

def test_robust_exact_trials():
    results = [rbw_trial(0, t, 12, 2, 0.12, 0., 7, False) for t in range(200)]
    assert all(r["passed"] for r in results)
    assert max(r["coeff_error"] for r in results) < 1e-8
    agree = [r["classic_error"] for r in results if r["classic_error"] is not None]
    assert agree and max(agree) < 1e-8

def test_robust_noisy_trials():
    results = [rbw_trial(1, t, 12, 2, 0.12, 1e-12, 7, False) for t in range(200)]
    assert all(r["passed"] for r in results)
    assert max(r["max_residual"] for r in results) < 1e-3

def test_robust_without_budget(rng):
    x = random_separated_nodes(6, 0.2, rng)
    y = np.sin(3. * x)
    fit = decode_robust(x, y, 0, 0.2, 0.)
    t = np.linspace(-1., 1., 9)
    np.testing.assert_allclose(fit.poly(t), lagrange_eval(x, y, t), atol=1e-9)

def test_robust_assumption_violated(rng):
    x = random_separated_nodes(10, 0.15, rng)
    y = rng.uniform(-1., 1., 10)
    with pytest.raises(AssumptionViolatedException):
        decode_robust(x, y, 1, 0.15, 0., degree=1)

def test_robust_preconditions():
    x = np.linspace(-1., 1., 8)
    with pytest.raises(DomainException):
        decode_robust(2. * x, x, 1, 0.1, 0.)
    with pytest.raises(PreconditionException):
        decode_robust(x, x, 1, 0.5, 0.)
    with pytest.raises(PreconditionException):
        decode_robust(x, x, 4, 0.1, 0.)

def test_samples_csv(tmp_path):
    samples = [NoisySample(0.1, 0.2, EnumProvenance.CLEAN),
               NoisySample(-0.3, 1. / 3., EnumProvenance.CORRUPTED),
               NoisySample(0.5, -2.)]
    fname = write_samples_csv(samples, tmp_path / "nodes.csv")
    assert fname.read_text().splitlines()[0] == "x,y,provenance"
    assert read_samples_csv(fname) == samples
