"""Relative energy, bulk error, dissipation functionals and inequality verdicts.

The relative energy is the tilt excess int (1 - nu . xi) over the evolving
curve; the bulk error weighs the symmetric difference between the evolving
and reference regions by the truncated signed distance.  The bulk integral
runs on one shared quadtree for both regions so cells away from either
boundary cancel exactly; boundary cells are clipped to exact polygons once
they are small enough and integrated with a degree-5 triangle rule.

All inequality checkers report slack and never clamp: a negative slack is a
finding, not an error.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInitialData, NonStationaryReference
from .calibration import AnalyticCircles, Calibration
from .geometry import (
    GeometryCache,
    PolyCurve,
    VertexField,
    dds,
    field_mean,
    integrate,
    points_in_component,
)
from .poisson import nu_dot_B_potential, velocity_potential

# 4-point Gauss-Legendre on [0, 1]
_G4X = 0.5 + 0.5 * np.array([-0.8611363115940526, -0.3399810435848563,
                             0.3399810435848563, 0.8611363115940526])
_G4W = 0.5 * np.array([0.3478548451374538, 0.6521451548625461,
                       0.6521451548625461, 0.3478548451374538])

# 3x3 tensor Gauss on [0, 1]^2
_g3 = np.array([0.5 - 0.5 * np.sqrt(0.6), 0.5, 0.5 + 0.5 * np.sqrt(0.6)])
_w3 = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])
_G9X, _G9Y = np.meshgrid(_g3, _g3)
_G9X, _G9Y = _G9X.ravel(), _G9Y.ravel()
_G9W = np.outer(_w3, _w3).ravel()

# Dunavant degree-5 7-point rule on the reference triangle
_T7_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [0.0597158717897698, 0.4701420641051151, 0.4701420641051151],
    [0.4701420641051151, 0.0597158717897698, 0.4701420641051151],
    [0.4701420641051151, 0.4701420641051151, 0.0597158717897698],
    [0.7974269853530873, 0.1012865073234563, 0.1012865073234563],
    [0.1012865073234563, 0.7974269853530873, 0.1012865073234563],
    [0.1012865073234563, 0.1012865073234563, 0.7974269853530873],
])
_T7_W = np.array([0.225,
                  0.1323941527885062, 0.1323941527885062, 0.1323941527885062,
                  0.1259391805448271, 0.1259391805448271, 0.1259391805448271])


# ---------------------------------------------------------------------------
# relative energy
# ---------------------------------------------------------------------------

def relative_energy(caches: list[GeometryCache], calib: Calibration,
                    t: float = 0.0) -> float:
    """int over the curve of 1 - nu . xi; vertices beyond the tube add 1."""
    total = 0.0
    for cache in caches:
        xi = calib.xi_at(cache.vertices, t)
        total += integrate(cache, 1.0 - np.sum(cache.nu * xi, axis=1))
    return float(total)


# ---------------------------------------------------------------------------
# polygon forest region adapter for the shared quadtree
# ---------------------------------------------------------------------------

class _Forest:
    def __init__(self, curve: PolyCurve):
        self.components = [(c.vertices, c.orientation) for c in curve.components]
        starts, ends = [], []
        for v, _ in self.components:
            starts.append(v)
            ends.append(np.roll(v, -1, axis=0))
        self.seg_lo = np.minimum(np.vstack(starts), np.vstack(ends))
        self.seg_hi = np.maximum(np.vstack(starts), np.vstack(ends))
        self.curve = curve

    def candidates(self, idx, lo, hi):
        sel = ~((self.seg_hi[idx, 0] < lo[0]) | (self.seg_lo[idx, 0] > hi[0]) |
                (self.seg_hi[idx, 1] < lo[1]) | (self.seg_lo[idx, 1] > hi[1]))
        return idx[sel]

    def contains(self, point) -> bool:
        inside = 0
        p = np.asarray(point, dtype=float)[None, :]
        for v, _ in self.components:
            inside += int(points_in_component(p, v)[0])
        return inside % 2 == 1

    def clip_to_cell(self, lo, hi):
        """Clip every component to the cell; returns (vertices, sign) loops."""
        out = []
        for v, orient in self.components:
            clipped = _clip_rect(v, lo, hi)
            if len(clipped) >= 3:
                out.append((clipped, orient))
        return out


def _clip_rect(poly: np.ndarray, lo, hi) -> np.ndarray:
    """Sutherland-Hodgman clip of a closed polygon by an axis-aligned box."""
    pts = poly
    for axis, bound, keep_less in ((0, lo[0], False), (0, hi[0], True),
                                   (1, lo[1], False), (1, hi[1], True)):
        if len(pts) == 0:
            return pts
        prev = np.roll(pts, 1, axis=0)
        if keep_less:
            cur_in = pts[:, axis] <= bound
            prev_in = prev[:, axis] <= bound
        else:
            cur_in = pts[:, axis] >= bound
            prev_in = prev[:, axis] >= bound
        crossing = cur_in != prev_in
        denom = pts[:, axis] - prev[:, axis]
        with np.errstate(divide="ignore", invalid="ignore"):
            tpar = np.where(crossing, (bound - prev[:, axis]) / denom, 0.0)
        inter = prev + tpar[:, None] * (pts - prev)
        counts = crossing.astype(int) + cur_in.astype(int)
        total = int(counts.sum())
        if total == 0:
            return np.empty((0, 2))
        out = np.empty((total, 2))
        offs = np.concatenate([[0], np.cumsum(counts)[:-1]])
        out[offs[crossing]] = inter[crossing]
        pos_cur = offs + crossing.astype(int)
        out[pos_cur[cur_in]] = pts[cur_in]
        pts = out
    return pts


def _triangle_fan(poly: np.ndarray):
    """Fan decomposition around the centroid with signed areas.

    Exact for any simple polygon: signed triangle contributions cancel
    outside and add up inside.
    """
    origin = poly.mean(axis=0)
    a = poly
    b = np.roll(poly, -1, axis=0)
    cross = ((a[:, 0] - origin[0]) * (b[:, 1] - origin[1])
             - (a[:, 1] - origin[1]) * (b[:, 0] - origin[0]))
    return origin, a, b, 0.5 * cross


def bulk_error(curve: PolyCurve, calib: Calibration, t: float = 0.0,
               max_depth: int = 12, reference_resolution: int = 4096) -> float:
    """int (chi_curve - chi_reference) * vartheta over the plane.

    Shared quadtree over both regions: cells interior to both or exterior to
    both cancel exactly; mixed cells integrate vartheta with tensor Gauss
    after refinement against the tube width; boundary cells are clipped to
    exact polygons and integrated with a degree-5 triangle rule.  Geometry
    is resolved first, the weight is evaluated afterwards in large batches.
    """
    if isinstance(calib.reference, AnalyticCircles):
        ref_curve = calib.reference.boundary_curve(t, reference_resolution)
    else:
        ref_curve = calib.reference.curve_at(t)
    fa = _Forest(curve)
    fb = _Forest(ref_curve)

    vert_all = np.vstack([v for v, _ in fa.components]
                         + [v for v, _ in fb.components])
    lo = vert_all.min(axis=0) - 0.1 * calib.delta
    hi = vert_all.max(axis=0) + 0.1 * calib.delta
    span = float(np.max(hi - lo))
    center = 0.5 * (lo + hi)
    lo = center - 0.5 * span
    hi = center + 0.5 * span

    clip_size = 0.25 * calib.delta
    smooth_size = 0.5 * calib.delta

    quad_cells = []      # (x0, y0, size, sign)
    tri_parts = []       # (origin, a, b, signed_area * overall_sign)

    def emit_smooth(clo, size, sign):
        if size > smooth_size:
            half = 0.5 * size
            for dx in (0.0, half):
                for dy in (0.0, half):
                    emit_smooth(clo + np.array([dx, dy]), half, sign)
        else:
            quad_cells.append((clo[0], clo[1], size, sign))

    def emit_clip(clo, chi_):
        for forest, overall in ((fa, 1.0), (fb, -1.0)):
            for poly, orient in forest.clip_to_cell(clo, chi_):
                origin, a, b, areas = _triangle_fan(poly)
                tri_parts.append((origin, a, b, areas * orient * overall))

    def recurse(clo, chi_, cand_a, cand_b, depth):
        cand_a = fa.candidates(cand_a, clo, chi_)
        cand_b = fb.candidates(cand_b, clo, chi_)
        size = chi_[0] - clo[0]
        if len(cand_a) == 0 and len(cand_b) == 0:
            center_pt = 0.5 * (clo + chi_)
            in_a = fa.contains(center_pt)
            in_b = fb.contains(center_pt)
            if in_a != in_b:
                emit_smooth(clo, size, 1.0 if in_a else -1.0)
            return
        if size <= clip_size or depth >= max_depth:
            emit_clip(clo, chi_)
            return
        mid = 0.5 * (clo + chi_)
        for (x0, y0, x1, y1) in ((clo[0], clo[1], mid[0], mid[1]),
                                 (mid[0], clo[1], chi_[0], mid[1]),
                                 (clo[0], mid[1], mid[0], chi_[1]),
                                 (mid[0], mid[1], chi_[0], chi_[1])):
            recurse(np.array([x0, y0]), np.array([x1, y1]),
                    cand_a, cand_b, depth + 1)

    recurse(lo, hi, np.arange(len(fa.seg_lo)), np.arange(len(fb.seg_lo)), 0)

    total = 0.0
    if quad_cells:
        qc = np.array([(x, y, s) for x, y, s, _ in quad_cells])
        signs = np.array([sgn for _, _, _, sgn in quad_cells])
        pts = np.empty((len(qc), len(_G9W), 2))
        pts[:, :, 0] = qc[:, 0][:, None] + np.outer(qc[:, 2], _G9X)
        pts[:, :, 1] = qc[:, 1][:, None] + np.outer(qc[:, 2], _G9Y)
        vals = calib.vartheta_at(pts.reshape(-1, 2), t).reshape(len(qc), -1)
        total += float(np.sum(signs * qc[:, 2]**2 * (vals @ _G9W)))
    if tri_parts:
        origins = np.concatenate([np.repeat(o[None, :], len(a), axis=0)
                                  for o, a, b, w in tri_parts])
        aa = np.concatenate([a for _, a, _, _ in tri_parts])
        bb = np.concatenate([b for _, _, b, _ in tri_parts])
        ww = np.concatenate([w for _, _, _, w in tri_parts])
        pts = (origins[None, :, :] * _T7_BARY[:, 0, None, None]
               + aa[None, :, :] * _T7_BARY[:, 1, None, None]
               + bb[None, :, :] * _T7_BARY[:, 2, None, None])
        vals = calib.vartheta_at(pts.reshape(-1, 2), t).reshape(len(_T7_W), -1)
        total += float(np.sum((_T7_W @ vals) * ww))
    return total


def bulk_error_montecarlo(curve: PolyCurve, calib: Calibration, t: float = 0.0,
                          n_samples: int = 10**6, seed: int = 7):
    """Monte Carlo estimate of the bulk error and its standard error."""
    if isinstance(calib.reference, AnalyticCircles):
        ref_curve = calib.reference.boundary_curve(t, 1024)
    else:
        ref_curve = calib.reference.curve_at(t)
    vert_all = np.vstack([c.vertices for c in curve.components]
                         + [c.vertices for c in ref_curve.components])
    lo = vert_all.min(axis=0) - 0.1
    hi = vert_all.max(axis=0) + 0.1
    rng = np.random.default_rng(seed)
    pts = rng.uniform(lo, hi, size=(n_samples, 2))
    area = float(np.prod(hi - lo))
    chi_a = np.zeros(n_samples, dtype=int)
    for c in curve.components:
        chi_a += points_in_component(pts, c.vertices).astype(int)
    chi_b = np.zeros(n_samples, dtype=int)
    for c in ref_curve.components:
        chi_b += points_in_component(pts, c.vertices).astype(int)
    diff = (chi_a % 2).astype(float) - (chi_b % 2).astype(float)
    vals = diff * calib.vartheta_at(pts, t)
    mean = float(np.mean(vals))
    stderr = float(np.std(vals) / np.sqrt(n_samples))
    return mean * area, stderr * area


# ---------------------------------------------------------------------------
# dissipation functionals
# ---------------------------------------------------------------------------

@dataclass
class EnergyReport:
    t: float
    E: float
    F: float
    L: float
    A: float
    D_H: float
    D_V: float
    cross_v_xi: float        # int |d phi_V/ds - d(div xi)/ds|^2
    cross_xi: float          # int |d(div xi)/ds|^2
    cross_h_b: float         # int |d kappa/ds - d phi_(nu.B)/ds|^2
    verdicts: dict = field(default_factory=dict)

    def as_row(self):
        return [self.t, self.E, self.F, self.L, self.A, self.D_H, self.D_V,
                self.cross_v_xi, self.cross_xi, self.cross_h_b]


CSV_COLUMNS = ["t", "E", "F", "L", "A", "D_H", "D_V",
               "cross1", "cross2", "cross3", "verdicts"]


def dissipation_report(curve: PolyCurve, caches: list[GeometryCache],
                       calib: Calibration, b_field, t: float,
                       v_fields: list[VertexField] | None,
                       compute_bulk: bool = True) -> EnergyReport:
    """Assemble the per-sample energy bookkeeping.

    ``b_field`` may be None for a stationary reference (B = 0); ``v_fields``
    may be None when no velocity data exists (the D_V family is zero then).
    """
    e_val = relative_energy(caches, calib, t)
    f_val = bulk_error(curve, calib, t) if compute_bulk else 0.0
    length = sum(c.length for c in caches)
    area = sum(c.area for c in caches)

    d_h = 0.0
    d_v = 0.0
    cross_v_xi = 0.0
    cross_xi = 0.0
    cross_h_b = 0.0
    for k, cache in enumerate(caches):
        dkappa = dds(cache, cache.kappa)
        d_h += integrate(cache, dkappa**2)
        div_xi = calib.div_xi(cache.vertices, t)
        ddiv = dds(cache, div_xi)
        cross_xi += integrate(cache, ddiv**2)
        if v_fields is not None:
            vf = v_fields[k]
            vals = vf.values - field_mean(cache, vf.values)
            phi_v = velocity_potential(cache, VertexField(vf.component_id, vals))
            dphi = dds(cache, phi_v.values)
            d_v += integrate(cache, dphi**2)
            cross_v_xi += integrate(cache, (dphi - ddiv)**2)
        if b_field is not None:
            phi_b = nu_dot_B_potential(cache, b_field.at)
            dphib = dds(cache, phi_b.values)
            cross_h_b += integrate(cache, (dkappa - dphib)**2)
        else:
            # B = 0 for a stationary reference, so phi_(nu.B) = 0
            cross_h_b += integrate(cache, dkappa**2)
    return EnergyReport(t=float(t), E=e_val, F=f_val, L=float(length),
                        A=float(area), D_H=float(d_h), D_V=float(d_v),
                        cross_v_xi=float(cross_v_xi), cross_xi=float(cross_xi),
                        cross_h_b=float(cross_h_b))


# ---------------------------------------------------------------------------
# Gronwall fit
# ---------------------------------------------------------------------------

@dataclass
class GronwallResult:
    c_fit: float
    c_integral: float
    verdict: str
    floor: float
    initial: float
    series: list


def gronwall_verdict(reports: list[EnergyReport], floor: float = 1e-7,
                     c_max: float = 1e3) -> GronwallResult:
    """Smallest C with E+F <= C exp(Ct) (E0+F0) and the integral form.

    Both the exponential and the trapezoidal integral form must hold at
    every sample for the fitted C; the verdict is PASS when such a finite C
    exists below c_max.  The t=0 sample forces the literal exponential form
    to C >= 1, so the integral-form constant (zero for a nonincreasing
    series) is reported separately.  A start at the quadrature floor with
    later growth beyond it falsifies uniqueness and raises
    DegenerateInitialData.
    """
    if len(reports) < 10:
        raise ValueError("need at least 10 samples for a Gronwall fit")
    t = np.array([r.t for r in reports])
    s = np.array([r.E + r.F for r in reports])
    s0 = s[0]
    if s0 <= floor:
        if np.any(s > 10.0 * floor):
            raise DegenerateInitialData(
                f"E+F started at {s0:.2e} but reached {s.max():.2e}"
            )
        return GronwallResult(c_fit=0.0, c_integral=0.0, verdict="PASS-TRIVIAL",
                              floor=floor, initial=float(s0),
                              series=list(map(float, s)))

    cum = np.concatenate([[0.0], np.cumsum(0.5 * (s[1:] + s[:-1]) * np.diff(t))])
    with np.errstate(divide="ignore"):
        c_int = float(np.max((s[1:] - s0) / np.maximum(cum[1:], 1e-300)))
    c_int = max(0.0, c_int)

    def ok(c):
        with np.errstate(over="ignore"):
            if np.any(s > c * np.exp(c * t) * s0 + 1e-30):
                return False
        return not np.any(s - s0 > c * cum + 1e-30)

    lo_c, hi_c = 0.0, c_max
    if not ok(hi_c):
        return GronwallResult(c_fit=np.inf, c_integral=c_int, verdict="FAIL",
                              floor=floor, initial=float(s0),
                              series=list(map(float, s)))
    for _ in range(60):
        mid = 0.5 * (lo_c + hi_c)
        if ok(mid):
            hi_c = mid
        else:
            lo_c = mid
    return GronwallResult(c_fit=float(hi_c), c_integral=c_int, verdict="PASS",
                          floor=floor, initial=float(s0),
                          series=list(map(float, s)))


# ---------------------------------------------------------------------------
# component-wise boundary flux and the two nu . B sum inequalities
# ---------------------------------------------------------------------------

def edge_flux(vector_field, cache: GeometryCache) -> float:
    """int nu . B over one component with 4-point Gauss per edge.

    Per-edge quadrature makes the divergence theorem exact for constant
    fields (the rotated edge vectors telescope), which the checkers rely on.
    """
    v = cache.vertices
    e = np.roll(v, -1, axis=0) - v
    elen = np.linalg.norm(e, axis=1)
    nu_e = np.column_stack([e[:, 1], -e[:, 0]]) / elen[:, None]
    total = 0.0
    for x, w in zip(_G4X, _G4W):
        pts = v + x * e
        vals = np.asarray(vector_field(pts))
        total += w * np.sum(elen * np.sum(nu_e * vals, axis=1))
    return float(total)


@dataclass
class NuDotBReport:
    sum_abs: float
    sum_scaled: float
    bound_abs: float
    bound_scaled: float
    slack_abs: float
    slack_scaled: float
    hypothesis_failures: int
    floor: float


def nu_dot_B_sums(caches: list[GeometryCache], b_field, calib: Calibration,
                  t: float = 0.0, f_value: float | None = None,
                  e_value: float | None = None, curve: PolyCurve | None = None,
                  quadrature_floor: float | None = None) -> NuDotBReport:
    """Check both component-flux inequalities with the constructive constants.

    First: sum_i |int nu . B| <= (2R/delta) ||div B||_inf F.  Second: the
    length-normalized sum is bounded by the same quantity times ||B||_inf
    plus 34 ||div B||_inf E, splitting components at length 1/||B||_inf.
    Components failing the diameter hypothesis of the small-component bound
    are counted, not silently dropped.
    """
    if curve is None:
        raise ValueError("curve required")
    if f_value is None:
        f_value = bulk_error(curve, calib, t)
    if e_value is None:
        e_value = relative_energy(caches, calib, t)

    fluxes = np.array([edge_flux(b_field.at, c) for c in caches])
    lengths = np.array([c.length for c in caches])
    sum_abs = float(np.sum(np.abs(fluxes)))
    sum_scaled = float(np.sum(np.abs(fluxes) / lengths))

    r_supp = b_field.support_radius
    div_sup = b_field.div_sup
    sup_b = b_field.sup_norm
    bound_abs = (2.0 * r_supp / calib.delta) * div_sup * f_value

    xi_lip = calib.xi_grad_bound(t)
    hyp_fail = 0
    for c in caches:
        if sup_b > 0 and c.length <= 1.0 / sup_b:
            if c.diameter > 1.0 / (2.0 * xi_lip):
                hyp_fail += 1
    bound_scaled = sup_b * bound_abs + 34.0 * div_sup * e_value

    if quadrature_floor is None:
        # 4-point Gauss flux error floor for analytic integrands
        quadrature_floor = 1e-9 * max(sup_b, 1.0) * float(np.sum(lengths))
    return NuDotBReport(
        sum_abs=sum_abs, sum_scaled=sum_scaled,
        bound_abs=bound_abs, bound_scaled=bound_scaled,
        slack_abs=bound_abs - sum_abs + quadrature_floor,
        slack_scaled=bound_scaled - sum_scaled + quadrature_floor,
        hypothesis_failures=hyp_fail, floor=quadrature_floor,
    )


# ---------------------------------------------------------------------------
# small-component area bound with the explicit constant 34
# ---------------------------------------------------------------------------

@dataclass
class BubbleVerdict:
    component: int
    applicable: bool
    length: float
    tilt_integral: float
    slack: float


def small_component_area_check(caches: list[GeometryCache], xi_eval,
                       xi_grad_bound: float) -> list[BubbleVerdict]:
    """length <= 34 int (1 - xi . nu) for components small against 1/(2|grad xi|)."""
    out = []
    for cache in caches:
        applicable = (xi_grad_bound <= 0.0
                      or cache.diameter <= 1.0 / (2.0 * xi_grad_bound))
        xi = np.asarray(xi_eval(cache.vertices))
        tilt = integrate(cache, 1.0 - np.sum(xi * cache.nu, axis=1))
        slack = 34.0 * tilt - cache.length
        out.append(BubbleVerdict(component=cache.component_index,
                                 applicable=bool(applicable),
                                 length=cache.length,
                                 tilt_integral=float(tilt),
                                 slack=float(slack)))
    return out


# ---------------------------------------------------------------------------
# stationary-reference gradient bound
# ---------------------------------------------------------------------------

def stationary_gradient_ratio(caches: list[GeometryCache], calib: Calibration,
                          t: float = 0.0):
    """(int |d(div xi)/ds|^2, ratio to E) for a stationary reference.

    The bound with a reference-only constant needs the reference curvature
    gradient to vanish; circles qualify, anything else is rejected.
    """
    ref = calib.reference
    if isinstance(ref, AnalyticCircles):
        pass
    else:
        if not ref.stationary:
            raise NonStationaryReference("reference evolves in time")
        _, ref_caches = ref.geometry_at(t)
        for cache in ref_caches:
            grad = dds(cache, cache.kappa)
            if np.max(np.abs(grad)) > 1e-3 * max(1.0, np.max(np.abs(cache.kappa))):
                raise NonStationaryReference(
                    "reference curvature is not constant per component")
    lhs = 0.0
    for cache in caches:
        div_xi = calib.div_xi(cache.vertices, t)
        lhs += integrate(cache, dds(cache, div_xi)**2)
    e_val = relative_energy(caches, calib, t)
    ratio = lhs / e_val if e_val > 0 else 0.0
    return float(lhs), float(ratio)


# ---------------------------------------------------------------------------
# CSV / JSON export
# ---------------------------------------------------------------------------

def reports_to_csv(reports: list[EnergyReport], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in reports:
            flags = ";".join(f"{k}={v}" for k, v in sorted(r.verdicts.items()))
            writer.writerow([repr(float(x)) for x in r.as_row()] + [flags])


def summary_json(path, scenario_name: str, seed, gronwall: GronwallResult | None,
                 extra: dict) -> None:
    payload = {
        "scenario": scenario_name,
        "seed": seed,
        "gronwall": None if gronwall is None else {
            "C_fit": gronwall.c_fit,
            "C_integral": gronwall.c_integral,
            "verdict": gronwall.verdict,
            "floor": gronwall.floor,
            "initial": gronwall.initial,
            "series": gronwall.series,
        },
    }
    payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
