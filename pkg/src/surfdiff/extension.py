"""Compactly supported velocity extension field for the reference evolution.

Given a reference curve and a zero-mean normal velocity per component, the
harmonic potential with that Neumann data is represented by a single-layer
density solved from the second-kind boundary integral equation (Nystrom
collocation, dense, per-component mean constraints bordered in).  The
extension field B is that gradient on the closed reference region; outside
it continues by a second-order tube Taylor expansion of the interior trace,
damped to zero beyond twice the tube width.  The result is C^1 across the
boundary, has div B = 0 on the closed region and O(dist) outside, is
globally Lipschitz and compactly supported -- the properties the stability
estimates consume.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import NonZeroMean, RankDeficient
from .geometry import (
    CurveIndex,
    GeometryCache,
    PolyCurve,
    VertexField,
    dds,
    field_mean,
    integrate,
)
from .poisson import solve_zero_average


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u**3 * (6.0 * u * u - 15.0 * u + 10.0)


class _PeriodicSpline:
    """Periodic cubic interpolation of per-vertex data in arc length."""

    def __init__(self, cache: GeometryCache, values: np.ndarray):
        s = np.concatenate([cache.arc_positions, [cache.length]])
        v = np.concatenate([values, values[:1]])
        self._spline = CubicSpline(s, v, bc_type="periodic")
        self.length = cache.length

    def __call__(self, s):
        return self._spline(np.mod(s, self.length))


@dataclass
class _BoundaryData:
    """Per-component splines of the boundary traces feeding the tube Taylor."""

    g: _PeriodicSpline        # tangential derivative of the potential
    v: _PeriodicSpline        # normal derivative (the prescribed velocity)
    dg: _PeriodicSpline
    dv: _PeriodicSpline
    ddg: _PeriodicSpline
    ddv: _PeriodicSpline
    kappa: _PeriodicSpline
    dkappa: _PeriodicSpline


@dataclass
class BField:
    """Velocity extension evaluator; immutable after build."""

    curve: PolyCurve
    caches: list[GeometryCache]
    index: CurveIndex
    density: np.ndarray
    mu: np.ndarray                   # per-component solvability constants
    fine_points: np.ndarray
    fine_charge: np.ndarray
    boundary: list[_BoundaryData]
    pos_splines: list[tuple]         # periodic (x(s), y(s)) per component
    delta: float
    support_center: np.ndarray
    support_radius: float            # reported R: the field vanishes beyond it
    near_cut: float                  # interior hand-off to the tube Taylor
    upsample: int
    bc_residual: float = 0.0
    div_sup: float = 0.0
    sup_norm: float = 0.0
    lipschitz: float = 0.0

    # -- low-level evaluators -------------------------------------------------

    def _grad_potential(self, points):
        """Gradient of the single-layer sum over the upsampled quadrature."""
        out = np.zeros_like(points)
        chunk = max(1, int(4e6 / max(len(self.fine_points), 1)))
        for a in range(0, len(points), chunk):
            p = points[a:a + chunk]
            rel = p[:, None, :] - self.fine_points[None, :, :]
            r2 = np.maximum(np.sum(rel * rel, axis=2), 1e-300)
            coef = -(self.fine_charge / (2.0 * np.pi))[None, :] / r2
            out[a:a + chunk] = np.sum(coef[:, :, None] * rel, axis=1)
        return out

    def _foot_arc_raw(self, seg, tpar):
        arc = np.empty(len(seg))
        for k, cache in enumerate(self.caches):
            sel = self.index.seg_comp[seg] == k
            if np.any(sel):
                loc = self.index.seg_local[seg[sel]]
                arc[sel] = cache.arc_positions[loc] + tpar[sel] * cache.edge_lengths[loc]
        return arc

    def smooth_foot(self, points, s_poly, seg, tpar):
        """Newton-refined closest point on the position splines.

        The polygon's closest-point map has flat spots in the vertex normal
        fans; projecting onto the interpolating spline removes them, which
        matters wherever the tube expansion or its arc derivative is used.
        Returns (signed distance, foot arc, component id, tau, nu).
        """
        points = np.atleast_2d(points)
        arc = self._foot_arc_raw(seg, tpar)
        comp = self.index.seg_comp[seg]
        s_out = np.array(s_poly, dtype=float)
        tau = np.empty_like(points)
        nu = np.empty_like(points)
        for k, (sx, sy) in enumerate(self.pos_splines):
            sel = comp == k
            if not np.any(sel):
                continue
            length = self.caches[k].length
            a = arc[sel].copy()
            p = points[sel]
            for _ in range(4):
                am = np.mod(a, length)
                gx, gy = sx(am), sy(am)
                dx, dy = sx(am, 1), sy(am, 1)
                ddx, ddy = sx(am, 2), sy(am, 2)
                rx, ry = gx - p[:, 0], gy - p[:, 1]
                f = rx * dx + ry * dy
                fp = dx * dx + dy * dy + rx * ddx + ry * ddy
                a = a - f / np.where(np.abs(fp) < 1e-300, 1e-300, fp)
            am = np.mod(a, length)
            gx, gy = sx(am), sy(am)
            dx, dy = sx(am, 1), sy(am, 1)
            speed = np.sqrt(dx * dx + dy * dy)
            tt = np.column_stack([dx / speed, dy / speed])
            nn = np.column_stack([tt[:, 1], -tt[:, 0]])
            rel = p - np.column_stack([gx, gy])
            s_out[sel] = np.sum(rel * nn, axis=1)
            arc[sel] = am
            tau[sel] = tt
            nu[sel] = nn
        return s_out, arc, comp, tau, nu

    def _tube_taylor(self, s, arc, comp, tau, nu):
        """Second-order normal Taylor expansion of the interior field.

        The coefficients follow from differentiating the harmonic equation in
        tube coordinates, so the expansion has zero divergence at the
        boundary and O(s) divergence beyond.
        """
        bt = np.empty(len(s))
        bn = np.empty(len(s))
        for k, bd in enumerate(self.boundary):
            sel = comp == k
            if not np.any(sel):
                continue
            a = arc[sel]
            g, v = bd.g(a), bd.v(a)
            dg, dv = bd.dg(a), bd.dv(a)
            ddg, ddv = bd.ddg(a), bd.ddv(a)
            kap, dkap = bd.kappa(a), bd.dkappa(a)
            ss = s[sel]
            bt[sel] = (g + ss * (dv - kap * g)
                       + ss**2 * (kap**2 * g - kap * dv
                                  + 0.5 * (-dkap * v - kap * dv - ddg)))
            bn[sel] = (v + ss * (-kap * v - dg)
                       + 0.5 * ss**2 * (2.0 * kap**2 * v + 3.0 * kap * dg
                                        + dkap * g - ddv))
        return bt[:, None] * tau + bn[:, None] * nu

    def at(self, points) -> np.ndarray:
        """Evaluate B; zero outside the support."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros_like(points)
        r = np.linalg.norm(points - self.support_center, axis=1)
        live = r < self.support_radius
        if not np.any(live):
            return out
        pts = points[live]
        s0, _, _, seg, tpar = self.index.signed(pts)
        vals = np.zeros_like(pts)
        band = np.abs(s0) < 2.5 * self.delta
        s = np.array(s0)
        arc = np.zeros(len(pts))
        comp = np.zeros(len(pts), dtype=int)
        tau = np.zeros_like(pts)
        nu = np.zeros_like(pts)
        if np.any(band):
            s[band], arc[band], comp[band], tau[band], nu[band] = self.smooth_foot(
                pts[band], s0[band], seg[band], tpar[band])

        outside = s >= 0.0
        damp = np.zeros(len(pts))
        osel = outside & band
        if np.any(osel):
            damp[osel] = 1.0 - _smoothstep((s[osel] - self.delta) / self.delta)
            act = osel & (damp > 0.0)
            if np.any(act):
                vals[act] = (damp[act][:, None]
                             * self._tube_taylor(s[act], arc[act], comp[act],
                                                 tau[act], nu[act]))

        inside = ~outside
        if np.any(inside):
            w_far = np.ones(len(pts))
            w_far[inside] = _smoothstep((-s[inside] - self.near_cut) / self.near_cut)
            near = inside & (w_far < 1.0)
            if np.any(near):
                vals[near] += ((1.0 - w_far[near])[:, None]
                               * self._tube_taylor(s[near], arc[near], comp[near],
                                                   tau[near], nu[near]))
            far = inside & (w_far > 0.0)
            if np.any(far):
                vals[far] += w_far[far][:, None] * self._grad_potential(pts[far])
        out[live] = vals
        return out

    def divergence(self, points, h: float | None = None) -> np.ndarray:
        """Richardson-extrapolated central-difference divergence of B."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if h is None:
            h = 2e-4 * max(self.delta / 0.25, 0.05)

        def div_fd(hh):
            ex = np.array([hh, 0.0])
            ey = np.array([0.0, hh])
            bx = self.at(points + ex)[:, 0] - self.at(points - ex)[:, 0]
            by = self.at(points + ey)[:, 1] - self.at(points - ey)[:, 1]
            return (bx + by) / (2.0 * hh)

        return (4.0 * div_fd(0.5 * h) - div_fd(h)) / 3.0

    def grad_along(self, directions, points, h: float) -> np.ndarray:
        """(a . grad) B by centered differences along the vectors a."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        a = np.atleast_2d(directions)
        return (self.at(points + h * a) - self.at(points - h * a)) / (2.0 * h)


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def _neumann_system(caches: list[GeometryCache]):
    nodes = np.vstack([c.vertices for c in caches])
    normals = np.vstack([c.nu for c in caches])
    weights = np.concatenate([c.weights for c in caches])
    kappas = np.concatenate([c.kappa for c in caches])
    rel = nodes[:, None, :] - nodes[None, :, :]
    r2 = np.sum(rel * rel, axis=2)
    np.fill_diagonal(r2, 1.0)
    kern = -np.sum(normals[:, None, :] * rel, axis=2) / (2.0 * np.pi * r2)
    a = kern * weights[None, :]
    np.fill_diagonal(a, 0.5 - weights * kappas / (4.0 * np.pi))
    return a, weights


def _solve_density(caches, v_fields):
    a, weights = _neumann_system(caches)
    m = a.shape[0]
    k = len(caches)
    offsets = np.cumsum([0] + [c.n for c in caches])
    sys = np.zeros((m + k, m + k))
    rhs = np.zeros(m + k)
    sys[:m, :m] = a
    for c in range(k):
        sl = slice(offsets[c], offsets[c + 1])
        sys[sl, m + c] = 1.0
        sys[m + c, sl] = weights[sl]
        rhs[sl] = v_fields[c].values
    try:
        sol = np.linalg.solve(sys, rhs)
    except np.linalg.LinAlgError as exc:
        raise RankDeficient(f"boundary integral system singular: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise RankDeficient("boundary integral solve produced non-finite density")
    return sol[:m], sol[m:]


def _surface_potential(caches, q, offsets, comp: int) -> np.ndarray:
    """Single-layer potential at the nodes of one component.

    The log kernel against same-component nodes is split into a smooth
    chord/arc ratio handled by the trapezoid rule plus the cyclic-arc log
    whose diagonal panel integral is analytic.
    """
    cache = caches[comp]
    qk = q[offsets[comp]:offsets[comp + 1]]
    v = cache.vertices
    rel = v[:, None, :] - v[None, :, :]
    chord = np.sqrt(np.maximum(np.sum(rel * rel, axis=2), 1e-300))
    s = cache.arc_positions
    darc = np.abs(s[:, None] - s[None, :])
    darc = np.minimum(darc, cache.length - darc)
    eye = np.eye(cache.n, dtype=bool)
    chord_safe = np.where(eye, 1.0, chord)
    darc_safe = np.where(eye, 1.0, darc)
    log_kernel = np.where(eye, 0.0, np.log(chord_safe / darc_safe) + np.log(darc_safe))
    phi = (log_kernel * cache.weights[None, :]) @ qk
    half = 0.5 * cache.weights
    phi += 2.0 * half * (np.log(half) - 1.0) * qk
    for j, cj in enumerate(caches):
        if j == comp:
            continue
        qj = q[offsets[j]:offsets[j + 1]]
        relx = v[:, None, :] - cj.vertices[None, :, :]
        r = np.sqrt(np.maximum(np.sum(relx * relx, axis=2), 1e-300))
        phi += (np.log(r) * cj.weights[None, :]) @ qj
    return -phi / (2.0 * np.pi)


def build_B(curve: PolyCurve, caches: list[GeometryCache],
            v_star: list[VertexField], delta: float,
            upsample: int | None = None) -> BField:
    """Construct the extension field; rejects incompatible velocity data.

    Per-component means of V* must vanish to 1e-8 relative to the component
    L1 norm, the discrete Neumann compatibility condition.
    """
    for cache, vf in zip(caches, v_star):
        mean = field_mean(cache, vf.values)
        l1 = integrate(cache, np.abs(vf.values))
        if abs(mean) * cache.length > 1e-8 * max(l1, 1e-30):
            raise NonZeroMean(
                f"component {cache.component_index}: mean(V*) = {mean:.3e} "
                "violates the Neumann compatibility condition"
            )

    q, mu = _solve_density(caches, v_star)
    offsets = np.cumsum([0] + [c.n for c in caches])

    boundary = []
    for k, (cache, vf) in enumerate(zip(caches, v_star)):
        phi = _surface_potential(caches, q, offsets, k)
        g = dds(cache, phi)
        v = vf.values
        boundary.append(_BoundaryData(
            g=_PeriodicSpline(cache, g),
            v=_PeriodicSpline(cache, v),
            dg=_PeriodicSpline(cache, dds(cache, g)),
            dv=_PeriodicSpline(cache, dds(cache, v)),
            ddg=_PeriodicSpline(cache, dds(cache, dds(cache, g))),
            ddv=_PeriodicSpline(cache, dds(cache, dds(cache, v))),
            kappa=_PeriodicSpline(cache, cache.kappa),
            dkappa=_PeriodicSpline(cache, dds(cache, cache.kappa)),
        ))

    if upsample is None:
        total = sum(c.n for c in caches)
        upsample = 2 * max(2, int(np.ceil(2048 / total)))
    fine_pts, fine_charge, pos_splines = [], [], []
    h_fine = 0.0
    for k, cache in enumerate(caches):
        qs = _PeriodicSpline(cache, q[offsets[k]:offsets[k + 1]])
        s_knots = np.concatenate([cache.arc_positions, [cache.length]])
        closed = np.vstack([cache.vertices, cache.vertices[:1]])
        sx = CubicSpline(s_knots, closed[:, 0], bc_type="periodic")
        sy = CubicSpline(s_knots, closed[:, 1], bc_type="periodic")
        pos_splines.append((sx, sy))
        nf = cache.n * upsample
        sf = cache.length * np.arange(nf) / nf
        fine_pts.append(np.column_stack([sx(sf), sy(sf)]))
        fine_charge.append(qs(sf) * (cache.length / nf))
        h_fine = max(h_fine, cache.length / nf)

    all_v = np.vstack([c.vertices for c in caches])
    center = all_v.mean(axis=0)
    sq = np.sum(all_v * all_v, axis=1)
    diam = float(np.sqrt(max((sq[:, None] + sq[None, :] - 2 * all_v @ all_v.T).max(), 0.0)))
    support_radius = diam + 10.0 * delta

    field = BField(
        curve=curve, caches=caches, index=CurveIndex(curve, caches),
        density=q, mu=mu,
        fine_points=np.vstack(fine_pts), fine_charge=np.concatenate(fine_charge),
        boundary=boundary, pos_splines=pos_splines, delta=float(delta),
        support_center=center, support_radius=support_radius,
        near_cut=3.0 * h_fine, upsample=upsample,
    )
    field.bc_residual = _midpoint_bc_residual(field, v_star)
    field.div_sup, field.sup_norm, field.lipschitz = _field_constants(field)
    return field


def _midpoint_bc_residual(field: BField, v_star) -> float:
    """sup over spline midpoints of |nu . B_trace - V*|.

    The collocation identity holds at the solve nodes by construction, so
    the honest consistency measure evaluates the jump-corrected flux between
    them, with the density linearly interpolated (order-2 baseline).
    """
    nodes = np.vstack([c.vertices for c in field.caches])
    normals_nodes = np.vstack([c.nu for c in field.caches])
    weights = np.concatenate([c.weights for c in field.caches])
    q = field.density
    offsets = np.cumsum([0] + [c.n for c in field.caches])
    up = field.upsample
    worst = 0.0
    fine_off = 0
    for k, cache in enumerate(field.caches):
        nf = cache.n * up
        fine = field.fine_points[fine_off:fine_off + nf]
        fine_off += nf
        mids = fine[up // 2::up]
        tang = fine[(up // 2 + 1) % nf::up] - fine[up // 2 - 1::up]
        tang /= np.linalg.norm(tang, axis=1)[:, None]
        nmid = np.column_stack([tang[:, 1], -tang[:, 0]])
        rel = mids[:, None, :] - nodes[None, :, :]
        r2 = np.maximum(np.sum(rel * rel, axis=2), 1e-300)
        kern = -np.sum(nmid[:, None, :] * rel, axis=2) / (2.0 * np.pi * r2)
        qk = q[offsets[k]:offsets[k + 1]]
        q_mid = 0.5 * (qk + np.roll(qk, -1))
        flux = (kern * weights[None, :]) @ q + 0.5 * q_mid + field.mu[k]
        v_mid = 0.5 * (v_star[k].values + np.roll(v_star[k].values, -1))
        worst = max(worst, float(np.max(np.abs(flux - v_mid))))
    return worst


def _field_constants(field: BField):
    """Sampled sup norms: |div B|, |B|, and a difference-quotient Lipschitz bound."""
    rng = np.random.default_rng(1234)
    pts = []
    for cache in field.caches:
        sel = np.linspace(0, cache.n - 1, 24).astype(int)
        for d in (-0.8, -0.4, -0.1, 0.1, 0.4, 0.8, 1.2, 1.6, 1.95):
            pts.append(cache.vertices[sel] + d * field.delta * cache.nu[sel])
    pts = np.vstack(pts)
    sup_b = float(np.max(np.linalg.norm(field.at(pts), axis=1)))
    div = np.abs(field.divergence(pts))
    div_sup = float(np.max(div))
    h = 1e-3 * field.delta
    dirs = rng.normal(size=pts.shape)
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    quot = np.linalg.norm(field.at(pts + h * dirs) - field.at(pts - h * dirs),
                          axis=1) / (2 * h)
    lip = float(np.max(quot)) if len(quot) else 0.0
    return div_sup, sup_b, lip


# ---------------------------------------------------------------------------
# derived checkers and constructions
# ---------------------------------------------------------------------------

def divergence_decay_profile(field: BField, n_rays: int = 32):
    """|div B| sampled on outward normal rays at delta/8, delta/4, delta/2.

    Returns the least-squares slope of |div B| against distance and the
    worst ratio |div B| / dist.  Values land at finite-difference noise for
    this construction; they are measured, not assumed.
    """
    delta = field.delta
    dists = np.array([delta / 8, delta / 4, delta / 2])
    xs, ys = [], []
    for cache in field.caches:
        sel = np.linspace(0, cache.n - 1, n_rays).astype(int)
        for d in dists:
            p = cache.vertices[sel] + d * cache.nu[sel]
            ys.append(np.abs(field.divergence(p)))
            xs.append(np.full(len(p), d))
    xs = np.concatenate(xs)
    ys = np.concatenate(ys)
    slope = float(np.sum(xs * ys) / np.sum(xs * xs))
    ratio = float(np.max(ys / xs))
    return slope, ratio


def trivial_extension_Bbar(calib, field: BField, points, t: float = 0.0):
    """eta(s(x)) * B(closest point): the tube pullback of the boundary values."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    s = calib.sdist(points, t)
    feet = calib.proj(points, t)
    return calib.profile.eta(s)[:, None] * field.at(feet)


@dataclass
class StarPotential:
    """Zero-average reference potentials phi* and their tube extension."""

    phi_fields: list[VertexField]
    splines: list[_PeriodicSpline]
    dphi_splines: list[_PeriodicSpline]
    calib: object
    field: BField

    def extension_at(self, points, t: float = 0.0):
        """phi*(closest point) * zeta(s(x))."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        s0, _, _, seg, tpar = self.field.index.signed(points)
        s, arc, comp, _, _ = self.field.smooth_foot(points, s0, seg, tpar)
        vals = np.empty(len(points))
        for k, spline in enumerate(self.splines):
            sel = comp == k
            if np.any(sel):
                vals[sel] = spline(arc[sel])
        return vals * self.calib.profile.zeta(s)

    def chain_rule_residual(self, points, t: float = 0.0) -> float:
        """Tangential-derivative identity residual for the extension.

        d/ds* of the extension equals zeta(s)/(1 + s kappa_foot) times the
        reference derivative pulled back through the projection; the factor
        is the arc-length contraction of the closest-point map (verified by
        the finite-difference oracle).
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        lhs = self.calib.d_sstar(lambda p: self.extension_at(p, t), points, t)
        s0, _, _, seg, tpar = self.field.index.signed(points)
        s, arc, comp, _, _ = self.field.smooth_foot(points, s0, seg, tpar)
        kf = np.empty(len(points))
        dphi = np.empty(len(points))
        for k in range(len(self.splines)):
            sel = comp == k
            if np.any(sel):
                dphi[sel] = self.dphi_splines[k](arc[sel])
                kf[sel] = self.field.boundary[k].kappa(arc[sel])
        rhs = self.calib.profile.zeta(s) / (1.0 + s * kf) * dphi
        return float(np.max(np.abs(lhs - rhs)))


def star_potentials(caches: list[GeometryCache], calib, field: BField,
                    v_star: list[VertexField]) -> StarPotential:
    """Solve d^2 phi*/ds*^2 = V* per reference component, zero average."""
    phi_fields, splines, dsplines = [], [], []
    for cache, vf in zip(caches, v_star):
        mean = field_mean(cache, vf.values)
        scale = max(1.0, float(np.max(np.abs(vf.values))) if len(vf.values) else 1.0)
        if abs(mean) > 1e-8 * scale:
            raise NonZeroMean(f"component {cache.component_index}: mean V* nonzero")
        sol = solve_zero_average(cache, vf)
        phi_fields.append(sol.solution)
        splines.append(_PeriodicSpline(cache, sol.solution.values))
        dsplines.append(_PeriodicSpline(cache, dds(cache, sol.solution.values)))
    return StarPotential(phi_fields=phi_fields, splines=splines,
                         dphi_splines=dsplines, calib=calib, field=field)


def gauss_wedge_residual(caches: list[GeometryCache], field: BField, calib,
                         t: float = 0.0, fd_step: float | None = None) -> float:
    """|curve integral of nu . (div of the wedge of B and xi)|.

    Exact differential forms are closed, so the continuum value is zero; the
    returned magnitude measures the discretization error.  All derivatives
    of B and xi come from centered differences of the evaluators.
    """
    if fd_step is None:
        fd_step = 1e-4 * calib.delta
    total = 0.0
    for cache in caches:
        pts = cache.vertices
        nu = cache.nu
        xi = calib.xi_at(pts, t)
        bvals = field.at(pts)
        div_xi = calib.div_xi(pts, t)
        div_b = field.divergence(pts)
        xi_grad_b = field.grad_along(xi, pts, fd_step)
        b_grad_xi = (calib.xi_at(pts + fd_step * bvals, t)
                     - calib.xi_at(pts - fd_step * bvals, t)) / (2.0 * fd_step)
        integrand = (div_xi * np.sum(nu * bvals, axis=1)
                     + np.sum(nu * xi_grad_b, axis=1)
                     - div_b * np.sum(nu * xi, axis=1)
                     - np.sum(nu * b_grad_xi, axis=1))
        total += integrate(cache, integrand)
    return float(abs(total))
