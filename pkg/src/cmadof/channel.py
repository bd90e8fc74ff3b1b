"""Free-space dyadic Green channel between two triangulated apertures.

The field a transmit surface current induces on the receive aperture is

    e_R(r) = -j w mu0  Int_{A_T}  Gdy(r, r') j_T(r') dS'

with the line-of-sight dyadic kernel

    Gdy(r, r') = -(j eta exp(-j k0 d) / (2 lambda d)) [ (I - dh dh^T)
                 + (j lambda / (2 pi d)) (I - 3 dh dh^T)
                 - (lambda / (2 pi d))^2 (I - 3 dh dh^T) ]

where d = |r - r'|, dh = (r - r')/d, eta is the free-space impedance and
lambda = 2 pi / k0. The three bracket terms are the radiating, induction,
and electrostatic contributions; each is a symmetric 3x3 dyad, and the
whole kernel is even in dh, so Gdy(r, r') = Gdy(r', r).

`assemble_channel` discretizes the integral with one point per source face
(centroid value times area), giving the 3 N_R x 3 N_T matrix that maps
stacked per-face transmit currents to stacked per-face receive fields. Face
sizes of a small fraction of a wavelength keep the midpoint rule adequate;
the DoF outputs downstream are invariant to the overall scalar convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.constants import c as C0, epsilon_0 as EPS0, mu_0 as MU0

from .errors import SingularityError
from .mesh import TriMesh

__all__ = [
    "ETA0",
    "ChannelOperator",
    "green_dyadic",
    "assemble_channel",
    "dof_g",
    "effective_rank",
    "strict_rank",
]

#: free-space wave impedance, ohms
ETA0 = float(np.sqrt(MU0 / EPS0))

#: relative singular-value cutoff for strict numerical rank of G
STRICT_RANK_TOL = 1e-12


def green_dyadic(r, r_prime, k0: float, n_terms: int = 3) -> np.ndarray:
    """The 3x3 dyadic Green kernel between two points.

    n_terms keeps only the first 1, 2, or 3 bracket terms (3 = full kernel);
    the truncated forms support far-field and point-source comparisons.
    """
    r = np.asarray(r, dtype=float)
    r_prime = np.asarray(r_prime, dtype=float)
    d_vec = r - r_prime
    d = float(np.linalg.norm(d_vec))
    if d == 0.0:
        raise SingularityError("dyadic Green kernel evaluated at zero separation")
    if n_terms not in (1, 2, 3):
        raise ValueError("n_terms must be 1, 2, or 3")
    lam = 2.0 * np.pi / k0
    dh = d_vec / d
    outer = np.outer(dh, dh)
    eye = np.eye(3)
    bracket = (eye - outer).astype(complex)
    if n_terms >= 2:
        fac = lam / (2.0 * np.pi * d)
        tail = 1j * fac if n_terms == 2 else 1j * fac - fac * fac
        bracket += tail * (eye - 3.0 * outer)
    pref = -1j * ETA0 * np.exp(-1j * k0 * d) / (2.0 * lam * d)
    return pref * bracket


@dataclass
class ChannelOperator:
    """Discretized dyadic Green channel between two face-sampled apertures.

    matrix is (3 N_R, 3 N_T): row block p is the field at receive centroid
    p, column block q weights the current on transmit face q (already
    multiplied by the -j w mu0 prefactor and the face area).
    """

    matrix: np.ndarray
    k0: float
    tx_centroids: np.ndarray
    rx_centroids: np.ndarray
    tx_areas: np.ndarray
    _singulars: np.ndarray | None = field(default=None, repr=False)

    @property
    def singulars(self) -> np.ndarray:
        """Singular values of the channel matrix, descending."""
        if self._singulars is None:
            self._singulars = np.linalg.svd(self.matrix, compute_uv=False)
        return self._singulars

    @property
    def n_tx_faces(self) -> int:
        return len(self.tx_centroids)

    @property
    def n_rx_faces(self) -> int:
        return len(self.rx_centroids)


def _pairwise_green(rx_pts: np.ndarray, tx_pts: np.ndarray, k0: float) -> np.ndarray:
    """(N_R, N_T, 3, 3) dyadic kernel over all centroid pairs."""
    diff = rx_pts[:, None, :] - tx_pts[None, :, :]
    d = np.linalg.norm(diff, axis=-1)
    if d.min() <= 0.0:
        raise SingularityError(
            "transmit and receive apertures overlap (coincident face centroids)"
        )
    lam = 2.0 * np.pi / k0
    dh = diff / d[..., None]
    outer = np.einsum("pqa,pqb->pqab", dh, dh)
    eye = np.eye(3)
    fac = lam / (2.0 * np.pi * d)
    tail = (1j * fac - fac * fac)[..., None, None]
    bracket = (eye - outer) + tail * (eye - 3.0 * outer)
    pref = -1j * ETA0 * np.exp(-1j * k0 * d) / (2.0 * lam * d)
    return pref[..., None, None] * bracket


def assemble_channel(tx: TriMesh, rx: TriMesh, k0: float) -> ChannelOperator:
    """Midpoint-rule discretization of the transmit-to-receive field map.

    Block (p, q) = (-j w mu0) * green_dyadic(rx centroid p, tx centroid q)
    * tx face area q.
    """
    if not k0 > 0:
        raise ValueError("wavenumber must be positive")
    omega = k0 * C0
    blocks = _pairwise_green(rx.face_centroids, tx.face_centroids, k0)
    blocks *= (-1j * omega * MU0) * tx.face_areas[None, :, None, None]
    n_r, n_t = rx.n_faces, tx.n_faces
    matrix = blocks.transpose(0, 2, 1, 3).reshape(3 * n_r, 3 * n_t)
    return ChannelOperator(
        matrix=matrix,
        k0=k0,
        tx_centroids=tx.face_centroids.copy(),
        rx_centroids=rx.face_centroids.copy(),
        tx_areas=tx.face_areas.copy(),
    )


def effective_rank(singulars: np.ndarray, gamma: float) -> int:
    """Count of singular values with sigma^2 >= gamma * sigma_1^2."""
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie strictly between 0 and 1")
    s = np.asarray(singulars, dtype=float)
    if s.size == 0:
        raise ValueError("empty singular spectrum")
    top = s[0] ** 2
    if top == 0.0:
        return 0
    return int(np.count_nonzero(s ** 2 >= gamma * top))


def strict_rank(singulars: np.ndarray, rel_tol: float = STRICT_RANK_TOL) -> int:
    """Numerical rank: count of singular values >= rel_tol * sigma_1."""
    s = np.asarray(singulars, dtype=float)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s >= rel_tol * s[0]))


def dof_g(op: ChannelOperator, gamma: float = 0.5) -> tuple[int, int]:
    """(effective DoF of the channel alone, strict numerical rank).

    The effective count applies the threshold rule sigma_l^2 >= gamma *
    sigma_1^2 to the channel's singular values; the strict rank uses the
    relative cutoff 1e-12.
    """
    return effective_rank(op.singulars, gamma), strict_rank(op.singulars)
