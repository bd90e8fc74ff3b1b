"""Triangle quadrature rules and the static potential integrals.

The symmetric Gauss rules are given in barycentric coordinates with weights
that sum to one, so an integral over a physical triangle is
area * sum(w_i * f(x_i)).

`static_potential_integrals` evaluates four closed-form integrals over a
flat triangle T with respect to an observation point r, writing R for
|r - r'|,

    I0  = Int_T 1/R dS'
    Ir  = Int_T r'/R dS'   (3-vector)
    J0  = Int_T R dS'
    Jr  = Int_T r' R dS'   (3-vector)

via the classic edge-by-edge decomposition (per-edge log and arctangent
terms). The impedance assembly extracts both the 1/R pole and the |R| slope
kink of the Helmholtz kernel on self and touching face pairs, which is why
the linear moments J0 and Jr are needed alongside the potentials.
"""

from __future__ import annotations

import numpy as np

__all__ = ["tri_rule", "tri_points", "static_potential_integrals"]

_RULES = {}

# degree-1 (centroid) rule
_RULES[1] = (np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0]))

# degree-2 symmetric 3-point rule
_RULES[3] = (
    np.array(
        [
            [2 / 3, 1 / 6, 1 / 6],
            [1 / 6, 2 / 3, 1 / 6],
            [1 / 6, 1 / 6, 2 / 3],
        ]
    ),
    np.array([1 / 3, 1 / 3, 1 / 3]),
)

# degree-5 symmetric 7-point rule
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
_RULES[7] = (
    np.array(
        [
            [1 / 3, 1 / 3, 1 / 3],
            [_A1, _B1, _B1],
            [_B1, _A1, _B1],
            [_B1, _B1, _A1],
            [_A2, _B2, _B2],
            [_B2, _A2, _B2],
            [_B2, _B2, _A2],
        ]
    ),
    np.array(
        [
            0.225,
            0.132394152788506,
            0.132394152788506,
            0.132394152788506,
            0.125939180544827,
            0.125939180544827,
            0.125939180544827,
        ]
    ),
)


def tri_rule(npoints: int):
    """(barycentric (n,3), weights (n,)) for an n-point symmetric rule."""
    try:
        return _RULES[npoints]
    except KeyError:
        raise ValueError(f"no {npoints}-point triangle rule") from None


def tri_points(tri_vertices: np.ndarray, npoints: int) -> np.ndarray:
    """Physical quadrature points for triangles.

    tri_vertices is (..., 3, 3); returns (..., npoints, 3).
    """
    bary, _ = tri_rule(npoints)
    return np.einsum("qi,...id->...qd", bary, tri_vertices)


def static_potential_integrals(obs: np.ndarray, tri: np.ndarray):
    """Closed-form potential and distance moments of one triangle.

    obs is (M, 3) observation points, tri is (3, 3) vertices. Returns
    (I0 (M,), Ir (M, 3), J0 (M,), Jr (M, 3)) with, writing R = |r - r'|,

        I0 = Int 1/R dS'    Ir = Int r'/R dS'
        J0 = Int R dS'      Jr = Int r' R dS'

    Observation points may lie anywhere, including inside the triangle or
    its plane; points exactly on an edge line are handled by the standard
    limiting values.
    """
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    tri = np.asarray(tri, dtype=float)
    normal = np.cross(tri[1] - tri[0], tri[2] - tri[0])
    two_area = np.linalg.norm(normal)
    nhat = normal / two_area
    diam = np.sqrt(two_area)

    d = (obs - tri[0]) @ nhat  # signed height above the plane, (M,)
    rho = obs - d[:, None] * nhat[None, :]  # in-plane projection

    I0 = np.zeros(len(obs))
    Irho = np.zeros((len(obs), 3))
    beta_sum = np.zeros(len(obs))
    J0 = np.zeros(len(obs))
    Jrho = np.zeros((len(obs), 3))

    for e in range(3):
        a, b = tri[e], tri[(e + 1) % 3]
        ell = b - a
        lhat = ell / np.linalg.norm(ell)
        uhat = np.cross(lhat, nhat)  # outward edge normal for ccw vertices
        sm = (a - rho) @ lhat
        sp = (b - rho) @ lhat
        t0 = (a - rho) @ uhat
        r0sq = t0 ** 2 + d ** 2
        rp = np.sqrt(sp ** 2 + r0sq)
        rm = np.sqrt(sm ** 2 + r0sq)

        on_edge_line = r0sq < (1e-12 * diam) ** 2
        # stable log of (R+ + s+)/(R- + s-); flip both fractions when the
        # segment sits mostly at negative s to avoid cancellation
        with np.errstate(divide="ignore", invalid="ignore"):
            f_pos = np.log((rp + sp) / (rm + sm))
            f_neg = np.log((rm - sm) / (rp - sp))
        f = np.where(sp + sm >= 0, f_pos, f_neg)
        f = np.where(on_edge_line, 0.0, f)

        absd = np.abs(d)
        with np.errstate(divide="ignore", invalid="ignore"):
            bp = np.arctan(t0 * sp / (r0sq + absd * rp))
            bm = np.arctan(t0 * sm / (r0sq + absd * rm))
        beta = np.where(on_edge_line, 0.0, bp - bm)

        I0 += t0 * f
        beta_sum += beta
        Irho += 0.5 * uhat[None, :] * (r0sq * f + sp * rp - sm * rm)[:, None]

        # edge line integrals of R and R^3 feed the distance moments
        line1 = 0.5 * (sp * rp - sm * rm + r0sq * f)
        line3 = 0.25 * (sp * rp ** 3 - sm * rm ** 3) + 0.75 * r0sq * line1
        J0 += t0 * line1
        Jrho += uhat[None, :] * line3[:, None]

    I0 -= np.abs(d) * beta_sum
    Ir = Irho + rho * I0[:, None]
    J0 = (J0 + d ** 2 * I0) / 3.0
    Jr = Jrho / 3.0 + rho * J0[:, None]
    return I0, Ir, J0, Jr
