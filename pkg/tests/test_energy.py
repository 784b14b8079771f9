import numpy as np
import pytest

from surfdiff import calibration as cb
from surfdiff import energy as en
from surfdiff import extension as ex
from surfdiff import geometry as geo
from surfdiff.errors import DegenerateInitialData, NonStationaryReference

from conftest import vertex_angles


# ---------------------------------------------------------------------------
# relative energy
# ---------------------------------------------------------------------------

def test_energy_zero_on_reference(unit_circle_256, circle_calibration):
    _, caches = unit_circle_256
    assert en.relative_energy(caches, circle_calibration) <= 1e-10


def test_energy_order_h2_for_matching_polygon(circle_calibration):
    # polygon vertices on the reference circle: the only excess comes from
    # the normal mismatch of the discrete curve, O(h^2) per vertex
    vals = []
    for n in (128, 256, 512):
        caches = geo.build_geometry(geo.PolyCurve([geo.make_circle((0, 0), 1.0, n)]))
        vals.append(en.relative_energy(caches, circle_calibration))
    assert all(abs(v) <= 1e-3 for v in vals)


def test_energy_translated_circle_vs_dense_oracle(circle_calibration):
    eps = 0.05
    caches = geo.build_geometry(geo.PolyCurve([geo.make_circle((eps, 0), 1.0, 256)]))
    value = en.relative_energy(caches, circle_calibration)
    # dense quadrature oracle with 10^4 points on the analytic shifted circle
    t = 2 * np.pi * np.arange(10**4) / 10**4
    pts = np.column_stack([eps + np.cos(t), np.sin(t)])
    nu = np.column_stack([np.cos(t), np.sin(t)])
    s = np.linalg.norm(pts, axis=1) - 1.0
    grad = pts / np.linalg.norm(pts, axis=1)[:, None]
    zeta = circle_calibration.profile.zeta(s)
    oracle = np.mean(1.0 - np.sum(nu * (zeta[:, None] * grad), axis=1)) * 2 * np.pi
    assert value == pytest.approx(oracle, rel=2e-3)
    assert value > 0
    assert value <= 10.0 * eps**2  # O(eps^2) tilt excess


def test_energy_far_bubble_adds_exact_length(circle_calibration):
    base = geo.build_geometry(geo.PolyCurve([geo.make_circle((0, 0), 1.0, 256)]))
    withb = geo.build_geometry(geo.PolyCurve([geo.make_circle((0, 0), 1.0, 256),
                                              geo.make_circle((3, 0), 0.1, 64)]))
    e_base = en.relative_energy(base, circle_calibration)
    e_with = en.relative_energy(withb, circle_calibration)
    assert e_with - e_base == pytest.approx(withb[1].length, abs=1e-14)


def test_energy_nonnegative_random_curves(circle_calibration):
    rng = np.random.default_rng(6)
    for _ in range(10):
        amp = rng.uniform(0, 0.1)
        mode = rng.integers(2, 6)
        caches = geo.build_geometry(
            geo.PolyCurve([geo.make_wavy_circle(1.0, amp, int(mode), 128)]))
        assert en.relative_energy(caches, circle_calibration) >= -1e-12


def test_energy_vanishes_iff_on_reference(circle_calibration):
    # forward: the reference polygon itself sits at the floor
    on_ref = geo.build_geometry(geo.PolyCurve([geo.make_circle((0, 0), 1.0, 256)]))
    assert en.relative_energy(on_ref, circle_calibration) <= 1e-10
    # converse at discretization tolerance: any displaced or tilted curve
    # carries an excess well above the floor
    for curve in (geo.PolyCurve([geo.make_circle((0.02, 0), 1.0, 256)]),
                  geo.PolyCurve([geo.make_wavy_circle(1.0, 0.02, 3, 256)]),
                  geo.PolyCurve([geo.make_circle((0, 0), 1.03, 256)])):
        caches = geo.build_geometry(curve)
        assert en.relative_energy(caches, circle_calibration) >= 1e-5


# ---------------------------------------------------------------------------
# bulk error
# ---------------------------------------------------------------------------

def test_bulk_error_identical_regions(circle_calibration):
    curve = geo.PolyCurve([geo.make_circle((0, 0), 1.0, 1024)])
    f = en.bulk_error(curve, circle_calibration, reference_resolution=1024)
    assert abs(f) <= 1e-10


def test_bulk_error_annulus_formula(circle_calibration):
    eps = 0.05
    curve = geo.PolyCurve([geo.make_circle((0, 0), 1.0 + eps, 2048)])
    f = en.bulk_error(curve, circle_calibration)
    exact = 2 * np.pi * (eps**2 / 2 + eps**3 / 3)
    assert abs(f - exact) / exact <= 1e-4


def test_bulk_error_shrunk_disk_sign(circle_calibration):
    eps = 0.04
    curve = geo.PolyCurve([geo.make_circle((0, 0), 1.0 - eps, 1024)])
    f = en.bulk_error(curve, circle_calibration, reference_resolution=1024)
    # region difference lies inside the reference where vartheta < 0 and
    # chi - chi* = -1: the product integrates to a positive value
    exact = 2 * np.pi * (eps**2 / 2 - eps**3 / 3)
    assert f == pytest.approx(exact, rel=1e-3)


def test_bulk_error_far_bubble_saturates(circle_calibration):
    base = geo.PolyCurve([geo.make_circle((0, 0), 1.0, 1024)])
    withb = geo.PolyCurve([geo.make_circle((0, 0), 1.0, 1024),
                           geo.make_circle((3, 0), 0.1, 128)])
    f0 = en.bulk_error(base, circle_calibration, reference_resolution=1024)
    f1 = en.bulk_error(withb, circle_calibration, reference_resolution=1024)
    area = withb.components[1].signed_area()
    assert f1 - f0 == pytest.approx(area * 0.25, rel=1e-10)


def test_bulk_error_montecarlo_agreement(circle_calibration):
    eps = 0.05
    curve = geo.PolyCurve([geo.make_circle((0, 0), 1.0 + eps, 512)])
    f = en.bulk_error(curve, circle_calibration, reference_resolution=1024)
    f_mc, se = en.bulk_error_montecarlo(curve, circle_calibration,
                                        n_samples=2 * 10**5)
    assert abs(f_mc - f) <= 3.0 * se


def test_bulk_error_polygon_reference():
    pref = cb.PolygonReference(curve=geo.PolyCurve([geo.make_circle((0, 0), 1.0, 512)]))
    calib = cb.Calibration(pref)
    curve = geo.PolyCurve([geo.make_circle((0.05, 0), 1.0, 256)])
    f = en.bulk_error(curve, calib)
    f_mc, se = en.bulk_error_montecarlo(curve, calib, n_samples=2 * 10**5)
    assert abs(f_mc - f) <= 3.0 * se
    assert f > 0


# ---------------------------------------------------------------------------
# dissipation report
# ---------------------------------------------------------------------------

def test_dissipation_report_stationary(unit_circle_256, circle_calibration):
    curve, caches = unit_circle_256
    v = [geo.VertexField(0, np.zeros(caches[0].n))]
    rep = en.dissipation_report(curve, caches, circle_calibration, None, 0.0, v)
    assert rep.E <= 1e-6
    assert rep.F <= 1e-6
    assert rep.D_H <= 1e-6
    assert rep.D_V <= 1e-6
    assert rep.cross_v_xi <= 1e-6
    assert rep.cross_xi <= 1e-6
    assert rep.cross_h_b <= 1e-6


def test_dissipation_dh_matches_bruteforce(circle_calibration):
    curve = geo.PolyCurve([geo.make_wavy_circle(1.0, 0.05, 3, 256)])
    caches = geo.build_geometry(curve)
    rep = en.dissipation_report(curve, caches, circle_calibration, None, 0.0,
                                None, compute_bulk=False)
    # independent quadrature loop
    cache = caches[0]
    total = 0.0
    for i in range(cache.n):
        ip, im = (i + 1) % cache.n, (i - 1) % cache.n
        grad = (cache.kappa[ip] - cache.kappa[im]) / (2 * cache.weights[i])
        total += cache.weights[i] * grad**2
    assert rep.D_H == pytest.approx(total, rel=1e-6)
    assert rep.D_H > 0


def test_dissipation_velocity_scaling(unit_circle_256, circle_calibration):
    curve, caches = unit_circle_256
    theta = vertex_angles(caches[0])
    v1 = [geo.VertexField(0, np.cos(2 * theta))]
    v2 = [geo.VertexField(0, 2 * np.cos(2 * theta))]
    r1 = en.dissipation_report(curve, caches, circle_calibration, None, 0.0, v1,
                               compute_bulk=False)
    r2 = en.dissipation_report(curve, caches, circle_calibration, None, 0.0, v2,
                               compute_bulk=False)
    assert r2.D_V == pytest.approx(4.0 * r1.D_V, rel=1e-12)


# ---------------------------------------------------------------------------
# Gronwall verdicts
# ---------------------------------------------------------------------------

def _series(ts, es, fs):
    return [en.EnergyReport(t=t, E=e, F=f, L=1, A=1, D_H=0, D_V=0,
                            cross_v_xi=0, cross_xi=0, cross_h_b=0)
            for t, e, f in zip(ts, es, fs)]


def test_gronwall_decaying_series():
    ts = 0.05 * np.arange(15)
    reports = _series(ts, 0.01 * np.exp(-3 * ts), 0.002 * np.exp(-3 * ts))
    res = en.gronwall_verdict(reports)
    assert res.verdict == "PASS"
    assert res.c_fit <= 1.0 + 1e-9
    assert res.c_integral == 0.0


def test_gronwall_trivial_floor():
    ts = 0.05 * np.arange(12)
    reports = _series(ts, np.full(12, 1e-9), np.full(12, 1e-9))
    res = en.gronwall_verdict(reports)
    assert res.verdict == "PASS-TRIVIAL"


def test_gronwall_degenerate_growth():
    ts = 0.05 * np.arange(12)
    es = np.full(12, 1e-3)
    es[0] = 1e-9
    with pytest.raises(DegenerateInitialData):
        en.gronwall_verdict(_series(ts, es, np.zeros(12)))


def test_gronwall_exponential_growth_fits_rate():
    ts = 0.1 * np.arange(15)
    reports = _series(ts, 0.01 * np.exp(2.0 * ts), np.zeros(15))
    res = en.gronwall_verdict(reports)
    assert res.verdict == "PASS"
    assert 1.0 <= res.c_fit <= 2.5
    assert res.c_integral == pytest.approx(2.0, rel=0.1)


def test_gronwall_needs_ten_samples():
    ts = 0.1 * np.arange(5)
    with pytest.raises(ValueError):
        en.gronwall_verdict(_series(ts, np.ones(5), np.zeros(5)))


# ---------------------------------------------------------------------------
# component flux sums
# ---------------------------------------------------------------------------

def test_edge_flux_constant_field_exact(unit_circle_256):
    _, caches = unit_circle_256
    flux = en.edge_flux(lambda p: np.tile([1.0, 0.0], (len(p), 1)), caches[0])
    assert abs(flux) <= 1e-14


def test_edge_flux_identity_field(unit_circle_256):
    # B(x) = x has divergence 2: flux = 2 * enclosed area exactly for polygons
    _, caches = unit_circle_256
    flux = en.edge_flux(lambda p: p, caches[0])
    assert flux == pytest.approx(2.0 * caches[0].area, rel=1e-12)


def test_nu_dot_b_sums_zero_field(unit_circle_256, circle_calibration):
    curve, caches = unit_circle_256

    class ZeroField:
        support_radius = 10.0
        div_sup = 0.0
        sup_norm = 0.0

        def at(self, pts):
            return np.zeros_like(np.atleast_2d(pts))

    rep = en.nu_dot_B_sums(caches, ZeroField(), circle_calibration, 0.0,
                           f_value=0.0, e_value=0.0, curve=curve)
    assert rep.sum_abs == 0.0
    assert rep.sum_scaled == 0.0


def test_nu_dot_b_sums_with_disk_field(circle_calibration):
    field, curve, caches = _build_disk_bundle()
    shifted = geo.PolyCurve([geo.make_circle((0.03, 0), 1.0, 256),
                             geo.make_circle((2.6, 0), 0.015, 24)])
    scaches = geo.build_geometry(shifted)
    rep = en.nu_dot_B_sums(scaches, field, circle_calibration, 0.0,
                           curve=shifted)
    assert rep.slack_abs >= 0.0
    assert rep.slack_scaled >= 0.0
    assert rep.hypothesis_failures == 0


def _build_disk_bundle():
    curve = geo.PolyCurve([geo.make_circle((0, 0), 1.0, 128)])
    caches = geo.build_geometry(curve)
    theta = vertex_angles(caches[0])
    field = ex.build_B(curve, caches, [geo.VertexField(0, np.cos(theta))], 0.25)
    return field, curve, caches


# ---------------------------------------------------------------------------
# small-component area bound
# ---------------------------------------------------------------------------

def test_bubble_lemma_constant_direction(unit_circle_256):
    _, caches = unit_circle_256
    verdicts = en.small_component_area_check(
        caches, lambda p: np.tile([0.3, -0.5], (len(p), 1)), 0.0)
    assert verdicts[0].applicable
    assert verdicts[0].slack >= 0.0
    # constant field: the tilt integral equals the length exactly at the
    # quadrature level, so the slack is 33x the length
    assert verdicts[0].slack == pytest.approx(33 * caches[0].length, rel=1e-10)


def test_bubble_lemma_far_tiny_circle(circle_calibration):
    caches = geo.build_geometry(geo.PolyCurve([geo.make_circle((3, 0), 0.01, 24)]))
    verdicts = en.small_component_area_check(
        caches, lambda p: circle_calibration.xi_at(p),
        circle_calibration.xi_grad_bound())
    assert verdicts[0].applicable
    assert verdicts[0].slack >= 0.0


def test_bubble_lemma_randomized_in_tube(circle_calibration):
    rng = np.random.default_rng(9)
    bound = circle_calibration.xi_grad_bound()
    assert 1.0 / (2.0 * bound) > 0.03   # the radii below satisfy the hypothesis
    worst = np.inf
    for _ in range(100):
        ang = rng.uniform(0, 2 * np.pi)
        rad = 1.0 + rng.uniform(-0.2, 0.2)
        r_b = rng.uniform(0.004, 0.015)
        c = (rad * np.cos(ang), rad * np.sin(ang))
        caches = geo.build_geometry(geo.PolyCurve([geo.make_circle(c, r_b, 24)]))
        verdicts = en.small_component_area_check(
            caches, lambda p: circle_calibration.xi_at(p), bound)
        assert verdicts[0].applicable
        worst = min(worst, verdicts[0].slack)
    assert worst >= 0.0


# ---------------------------------------------------------------------------
# stationary gradient bound
# ---------------------------------------------------------------------------

def test_lemma32_on_reference(unit_circle_256, circle_calibration):
    _, caches = unit_circle_256
    lhs, _ = en.stationary_gradient_ratio(caches, circle_calibration)
    assert lhs <= 1e-6


def test_lemma32_ratio_bounded_over_sweep(circle_calibration):
    ratios = []
    for amp in (0.01, 0.02, 0.04):
        caches = geo.build_geometry(
            geo.PolyCurve([geo.make_wavy_circle(1.0, amp, 3, 256)]))
        _, ratio = en.stationary_gradient_ratio(caches, circle_calibration)
        ratios.append(ratio)
    assert max(ratios) / min(ratios) <= 4.0


def test_lemma32_far_bubble_lowers_ratio(circle_calibration):
    base = geo.build_geometry(geo.PolyCurve([geo.make_wavy_circle(1.0, 0.02, 3, 256)]))
    lhs0, ratio0 = en.stationary_gradient_ratio(base, circle_calibration)
    withb = geo.build_geometry(geo.PolyCurve([
        geo.make_wavy_circle(1.0, 0.02, 3, 256),
        geo.make_circle((3, 0), 0.1, 64)]))
    lhs1, ratio1 = en.stationary_gradient_ratio(withb, circle_calibration)
    assert lhs1 == pytest.approx(lhs0, rel=1e-10)   # xi vanishes on the bubble
    assert ratio1 < ratio0


def test_lemma32_rejects_moving_reference():
    from surfdiff import flow as fl

    curve = geo.PolyCurve([geo.make_ellipse(2.0, 1.0, 128)])
    cfg = fl.FlowConfig(dt=1e-4, end_time=0.005)
    traj = fl.make_reference(cfg, curve, sample_stride=10)
    ref = cb.PolygonReference(trajectory=traj)
    calib = cb.Calibration(ref)
    caches = geo.build_geometry(geo.PolyCurve([geo.make_ellipse(2.0, 1.0, 64)]))
    with pytest.raises(NonStationaryReference):
        en.stationary_gradient_ratio(caches, calib)


# ---------------------------------------------------------------------------
# CSV round trip
# ---------------------------------------------------------------------------

def test_reports_csv_roundtrip(tmp_path):
    ts = 0.05 * np.arange(12)
    reports = _series(ts, 0.01 * np.exp(-ts), 0.001 * np.exp(-ts))
    reports[0].verdicts["pointwise"] = "PASS"
    path = tmp_path / "reports.csv"
    en.reports_to_csv(reports, path)
    import csv as csvmod

    with open(path) as fh:
        rows = list(csvmod.reader(fh))
    assert rows[0] == en.CSV_COLUMNS
    assert len(rows) == 13
    assert float(rows[1][1]) == pytest.approx(0.01)
    assert "pointwise=PASS" in rows[1][-1]
