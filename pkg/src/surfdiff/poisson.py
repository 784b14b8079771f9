"""Zero-average Poisson solves on closed curve components.

Solves the cyclic second-difference system d^2/ds^2 phi = f - <f> with
<phi> = 0 on each closed component.  The nullspace of constants is removed
by a weighted rank-one shift that acts as a bordered mean constraint, so no
vertex gets pinned and symmetry of the stiffness form is preserved.  The
cyclic wrap and the shift enter a Thomas-type banded solve through a
Woodbury correction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import NonZeroMean, SingularSystem
from .geometry import GeometryCache, VertexField, d2ds2, dds, field_mean, integrate

RESIDUAL_TOL = 1e-9


@dataclass
class PotentialSolve:
    """Result of one zero-average solve on a component."""

    rhs: VertexField
    solution: VertexField
    residual_norm: float
    mean_removed: float


def _solve_banded_woodbury(main, off_lower, off_upper, corrections, rhs_cols):
    """Solve (T + sum_k u_k v_k^T) X = rhs for a tridiagonal core T.

    ``corrections`` is a list of (u, v) vector pairs; ``rhs_cols`` is (n, m).
    """
    n = len(main)
    ab = np.zeros((3, n))
    ab[0, 1:] = off_upper
    ab[1, :] = main
    ab[2, :-1] = off_lower
    us = np.column_stack([u for u, _ in corrections]) if corrections else np.zeros((n, 0))
    vs = np.column_stack([v for _, v in corrections]) if corrections else np.zeros((n, 0))
    stacked = np.column_stack([rhs_cols, us])
    sol = solve_banded((1, 1), ab, stacked)
    m = rhs_cols.shape[1]
    y = sol[:, :m]
    z = sol[:, m:]
    r = us.shape[1]
    if r == 0:
        return y
    cap = np.eye(r) + vs.T @ z
    return y - z @ np.linalg.solve(cap, vs.T @ y)


def _stiffness_shifted_solve(cache: GeometryCache, b: np.ndarray) -> np.ndarray:
    """Solve (K + w w^T) phi = b where K is the cyclic stiffness matrix.

    K has rows (-1/h_{i-1}, 1/h_{i-1} + 1/h_i, -1/h_i) with cyclic wrap; its
    nullspace is the constants.  Because the weights w sum against constants
    to the length, the shifted system returns exactly the solution of
    K phi = b with the weighted mean of phi equal to zero, provided b sums
    to zero.
    """
    h = cache.edge_lengths
    hm = np.roll(h, 1)
    inv_h = 1.0 / h
    inv_hm = 1.0 / hm
    main = inv_h + inv_hm
    off_upper = -inv_h[:-1]       # entry (i, i+1)
    off_lower = -inv_h[:-1]       # entry (i+1, i) shares the same edge
    n = cache.n
    e0 = np.zeros(n)
    e0[0] = 1.0
    en = np.zeros(n)
    en[-1] = 1.0
    wrap = -inv_h[-1]             # corner entries (0, n-1) and (n-1, 0)
    corrections = [
        (e0, wrap * en),
        (en, wrap * e0),
        (cache.weights.copy(), cache.weights.copy()),
    ]
    return _solve_banded_woodbury(main, off_lower, off_upper, corrections,
                                  b[:, None])[:, 0]


def solve_zero_average(cache: GeometryCache, f: VertexField) -> PotentialSolve:
    """Solve d^2 phi/ds^2 = f - <f> with <phi> = 0 on one closed component."""
    if cache.n < 8:
        raise SingularSystem(f"component {cache.component_index} has < 8 vertices")
    vals = np.asarray(f.values, dtype=float)
    if len(vals) != cache.n:
        raise ValueError("field length does not match component")
    mean = field_mean(cache, vals)
    g = vals - mean
    # d2ds2 phi = g  <=>  K phi = -D g with D the weight diagonal
    b = -cache.weights * g
    phi = _stiffness_shifted_solve(cache, b)
    residual = d2ds2(cache, phi) - g
    scale = float(np.sqrt(integrate(cache, vals**2))) or 1.0
    res_norm = float(np.sqrt(integrate(cache, residual**2)))
    if res_norm > RESIDUAL_TOL * max(scale, 1e-30):
        raise SingularSystem(
            f"poisson residual {res_norm:.2e} exceeds {RESIDUAL_TOL:.0e} * |f|"
        )
    return PotentialSolve(
        rhs=f,
        solution=VertexField(f.component_id, phi),
        residual_norm=res_norm,
        mean_removed=mean,
    )


def velocity_potential(cache: GeometryCache, v: VertexField) -> VertexField:
    """Zero-average potential of a normal velocity: d^2 phi_V/ds^2 = V.

    Requires the per-component mean of V to vanish (mass conservation); a
    violation signals broken volume conservation upstream.
    """
    mean = field_mean(cache, v.values)
    scale = max(1.0, float(np.max(np.abs(v.values))) if len(v.values) else 1.0)
    if abs(mean) > 1e-8 * scale:
        raise NonZeroMean(
            f"component {v.component_id}: <V> = {mean:.3e} violates volume conservation"
        )
    return solve_zero_average(cache, v).solution


def h_minus1_norm_sq(caches: list[GeometryCache], v_fields: list[VertexField]) -> float:
    """Sum over components of the squared H^-1 seminorm int |d phi_V/ds|^2 ds."""
    total = 0.0
    for cache, v in zip(caches, v_fields):
        phi = velocity_potential(cache, v)
        grad = dds(cache, phi.values)
        total += integrate(cache, grad**2)
    return float(total)


def nu_dot_B_potential(cache: GeometryCache, b_eval) -> VertexField:
    """Zero-average potential of nu . B on one component.

    ``b_eval`` maps an (n, 2) array of positions to (n, 2) vectors.  The
    component mean of nu . B is subtracted before solving (it need not
    vanish for a general field).
    """
    bvals = np.asarray(b_eval(cache.vertices), dtype=float)
    rhs = np.sum(cache.nu * bvals, axis=1)
    field = VertexField(cache.component_index, rhs)
    return solve_zero_average(cache, field).solution
