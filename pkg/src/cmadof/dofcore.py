"""Equivalent channel and degrees-of-freedom accounting.

The port-to-port channel of a mode-modeled link is

    H = U_R G U_T
    U_T = Jbar_T diag(m_T) V_T          (ports -> surface current)
    U_R = V_R^+ diag(m_R)^{-1} Ebar_R^+ (received field -> ports)

where Jbar/Ebar hold unit-norm sampled mode patterns, m the modal
significances, V the modal excitation matrices, and ^+ the SVD
pseudo-inverse with relative cutoff PINV_RCOND. The receive map projects
the incident field onto the receive mode span; whatever lies outside it is
lost, never amplified.

DoF counts come in two flavors throughout: the effective count
#{sigma_l^2 >= gamma sigma_1^2} (the headline metric) and the strict
numerical rank at relative cutoff RANK_TOL (where the rank inequalities
live): the port/mode ceiling min(L_T, L_R, n_T, n_R), the channel ceiling
rank(H) <= rank(G), and the floor
rank(H) >= rank(V_R) + rank(V_T) + rank(Gamma) - n_R - n_T.

`conventional_reduce` specializes the model to an array of identical
single-mode elements, where U_T collapses to a block-diagonal stack of one
element current and the channel to a scalar point-source matrix.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .channel import ChannelOperator, ETA0, effective_rank, strict_rank
from .cma import SIGNIFICANCE_FLOOR
from .errors import RankDeficiencyError, ReductionError

__all__ = [
    "PINV_RCOND",
    "RANK_TOL",
    "EquivalentChannel",
    "GammaMatrix",
    "DofReport",
    "ElementAnalysis",
    "ConventionalModel",
    "transmitter_map",
    "receiver_map",
    "equivalent_channel",
    "achievable_dof",
    "gamma_decomposition",
    "dof_bounds",
    "matrix_rank",
    "build_report",
    "point_source_channel",
    "conventional_reduce",
    "block_leakage",
]

#: relative cutoff for every pseudo-inverse in the receive chain
PINV_RCOND = 1e-10

#: relative singular-value cutoff for strict numerical ranks
RANK_TOL = 1e-10


def matrix_rank(a: np.ndarray, rel_tol: float = RANK_TOL) -> int:
    """Numerical rank with a relative singular-value cutoff."""
    a = np.asarray(a)
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s >= rel_tol * s[0]))


def _as_matrix(g) -> np.ndarray:
    return g.matrix if isinstance(g, ChannelOperator) else np.asarray(g)


def transmitter_map(patterns_t: np.ndarray, m_t: np.ndarray, v_t: np.ndarray) -> np.ndarray:
    """U_T = Jbar_T diag(m_T) V_T, mapping port signals to face currents."""
    patterns_t = np.asarray(patterns_t)
    m_t = np.asarray(m_t)
    v_t = np.asarray(v_t)
    if patterns_t.shape[1] != m_t.shape[0] or v_t.shape[0] != m_t.shape[0]:
        raise ValueError(
            f"inconsistent mode counts: patterns {patterns_t.shape}, "
            f"m {m_t.shape}, V {v_t.shape}"
        )
    if m_t.size and np.abs(m_t).min() < SIGNIFICANCE_FLOOR:
        raise ValueError(
            "transmitter map received modes below the significance floor; "
            "truncate before building maps"
        )
    return patterns_t @ (m_t[:, None] * v_t)


def receiver_map(v_r: np.ndarray, m_r: np.ndarray, patterns_r: np.ndarray) -> np.ndarray:
    """U_R = V_R^+ diag(m_R)^{-1} Ebar_R^+, mapping face fields to ports.

    Requires rank(V_R) >= L_R so the port-recovery step is well posed;
    otherwise raises RankDeficiencyError naming the dependent ports.
    """
    v_r = np.asarray(v_r)
    m_r = np.asarray(m_r)
    patterns_r = np.asarray(patterns_r)
    n_r, l_r = v_r.shape
    if m_r.shape[0] != n_r or patterns_r.shape[1] != n_r:
        raise ValueError(
            f"inconsistent mode counts: V {v_r.shape}, m {m_r.shape}, "
            f"patterns {patterns_r.shape}"
        )
    if m_r.size and np.abs(m_r).min() < SIGNIFICANCE_FLOOR:
        raise ValueError(
            "receiver map received modes below the significance floor; "
            "truncate before building maps"
        )
    rank_v = matrix_rank(v_r)
    if rank_v < l_r:
        _, _, piv = scipy.linalg.qr(v_r, pivoting=True)
        offending = sorted(int(p) for p in piv[rank_v:])
        raise RankDeficiencyError(
            f"modal excitation matrix has rank {rank_v} < {l_r} receive "
            f"ports; dependent ports: {offending}"
        )
    v_pinv = np.linalg.pinv(v_r, rcond=PINV_RCOND)
    e_pinv = np.linalg.pinv(patterns_r, rcond=PINV_RCOND)
    return v_pinv @ ((1.0 / m_r)[:, None] * e_pinv)


@dataclass
class EquivalentChannel:
    """Port-to-port channel H = U_R G U_T with its cached spectrum."""

    matrix: np.ndarray
    parts: dict | None = None
    _singulars: np.ndarray | None = field(default=None, repr=False)

    @property
    def singulars(self) -> np.ndarray:
        if self._singulars is None:
            self._singulars = np.linalg.svd(self.matrix, compute_uv=False)
        return self._singulars

    @property
    def shape(self):
        return self.matrix.shape


def equivalent_channel(u_r: np.ndarray, g, u_t: np.ndarray) -> EquivalentChannel:
    """H = U_R G U_T; g may be a ChannelOperator or a raw matrix."""
    g_mat = _as_matrix(g)
    if u_r.shape[1] != g_mat.shape[0] or g_mat.shape[1] != u_t.shape[0]:
        raise ValueError(
            f"map/channel shapes do not chain: {u_r.shape} x {g_mat.shape} "
            f"x {u_t.shape}"
        )
    h = u_r @ g_mat @ u_t
    return EquivalentChannel(matrix=h, parts={"u_r": u_r, "g": g_mat, "u_t": u_t})


def achievable_dof(ch: EquivalentChannel, gamma: float = 0.5) -> int:
    """#{l : sigma_l(H)^2 >= gamma sigma_1(H)^2}; 0 for an all-zero H."""
    return effective_rank(ch.singulars, gamma)


@dataclass
class GammaMatrix:
    """Modal coupling matrix from factoring G in the mode-pattern bases.

    gamma solves G ~= Ebar_R Gamma Jbar_T^T in the least-squares sense.
    residual compares the factorization against G restricted to the modal
    subspaces (a projector identity, ~0 whenever the pseudo-inverses are
    honest); unmodeled_fraction reports how much of G lies outside those
    subspaces altogether. kept_r/kept_t list the pattern columns used, which
    drop dependent columns when a pattern matrix is rank-deficient.
    """

    gamma: np.ndarray
    residual: float
    unmodeled_fraction: float
    kept_r: np.ndarray
    kept_t: np.ndarray

    @property
    def rank(self) -> int:
        return matrix_rank(self.gamma)


def _independent_columns(a: np.ndarray, label: str) -> np.ndarray:
    """Indices of a maximal independent column set, warning when reduced."""
    r = matrix_rank(a)
    if r == a.shape[1]:
        return np.arange(a.shape[1])
    _, _, piv = scipy.linalg.qr(a, pivoting=True)
    keep = np.sort(piv[:r])
    warnings.warn(
        f"{label} pattern matrix is rank-deficient ({r} of {a.shape[1]} "
        f"columns independent); dropping columns "
        f"{sorted(int(c) for c in piv[r:])}",
        stacklevel=3,
    )
    return keep


def gamma_decomposition(g, patterns_r: np.ndarray, patterns_t: np.ndarray) -> GammaMatrix:
    """Least-squares Gamma with G ~= Ebar_R Gamma Jbar_T^T."""
    g_mat = _as_matrix(g)
    patterns_r = np.asarray(patterns_r)
    patterns_t = np.asarray(patterns_t)
    if patterns_r.shape[0] != g_mat.shape[0] or patterns_t.shape[0] != g_mat.shape[1]:
        raise ValueError(
            f"pattern/channel shapes do not chain: {patterns_r.shape}, "
            f"{g_mat.shape}, {patterns_t.shape}"
        )
    kept_r = _independent_columns(patterns_r, "receive")
    kept_t = _independent_columns(patterns_t, "transmit")
    e_r = patterns_r[:, kept_r]
    j_t = patterns_t[:, kept_t]

    e_pinv = np.linalg.pinv(e_r, rcond=PINV_RCOND)
    jt_pinv = np.linalg.pinv(j_t.T, rcond=PINV_RCOND)
    gamma = e_pinv @ g_mat @ jt_pinv

    g_norm = np.linalg.norm(g_mat)
    if g_norm == 0.0:
        return GammaMatrix(gamma, 0.0, 0.0, kept_r, kept_t)
    projected = (e_r @ e_pinv) @ g_mat @ (jt_pinv @ j_t.T)
    residual = float(np.linalg.norm(projected - e_r @ gamma @ j_t.T) / g_norm)
    unmodeled = float(np.linalg.norm(g_mat - projected) / g_norm)
    return GammaMatrix(gamma, residual, unmodeled, kept_r, kept_t)


def dof_bounds(
    v_r: np.ndarray,
    v_t: np.ndarray,
    gamma_matrix: np.ndarray,
    n_r: int,
    n_t: int,
    l_t: int,
    l_r: int,
    g_singulars: np.ndarray | None = None,
    gamma: float = 0.5,
) -> tuple[int, int | None, int]:
    """(port/mode upper bound, channel upper bound, rank lower bound).

    upper_port_mode = min(L_T, L_R, n_T, n_R); upper_channel is the
    effective DoF of the supplied channel spectrum (None when no spectrum
    is given); lower = rank(V_R) + rank(V_T) + rank(Gamma) - n_R - n_T,
    which may be <= 0. Ranks use the shared RANK_TOL cutoff.
    """
    upper_port_mode = int(min(l_t, l_r, n_t, n_r))
    upper_channel = None
    if g_singulars is not None:
        upper_channel = effective_rank(np.asarray(g_singulars), gamma)
    lower = int(
        matrix_rank(v_r) + matrix_rank(v_t) + matrix_rank(gamma_matrix) - n_r - n_t
    )
    return upper_port_mode, upper_channel, lower


@dataclass
class DofReport:
    """Everything the DoF analysis produced for one link configuration."""

    dof_h: int
    dof_g_effective: int
    port_mode_upper: int
    lower_bound: int
    gamma: float
    h_singulars: np.ndarray
    g_singulars: np.ndarray
    gamma_matrix_rank: int
    h_strict_rank: int
    g_strict_rank: int

    def to_json(self) -> str:
        payload = {
            "dof_h": self.dof_h,
            "dof_g_effective": self.dof_g_effective,
            "port_mode_upper": self.port_mode_upper,
            "lower_bound": self.lower_bound,
            "gamma": self.gamma,
            "h_singulars": [float(s) for s in self.h_singulars],
            "g_singulars": [float(s) for s in self.g_singulars],
            "gamma_matrix_rank": self.gamma_matrix_rank,
            "h_strict_rank": self.h_strict_rank,
            "g_strict_rank": self.g_strict_rank,
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "DofReport":
        d = json.loads(text)
        return cls(
            dof_h=int(d["dof_h"]),
            dof_g_effective=int(d["dof_g_effective"]),
            port_mode_upper=int(d["port_mode_upper"]),
            lower_bound=int(d["lower_bound"]),
            gamma=float(d["gamma"]),
            h_singulars=np.asarray(d["h_singulars"], dtype=float),
            g_singulars=np.asarray(d["g_singulars"], dtype=float),
            gamma_matrix_rank=int(d["gamma_matrix_rank"]),
            h_strict_rank=int(d["h_strict_rank"]),
            g_strict_rank=int(d["g_strict_rank"]),
        )


def build_report(
    ch: EquivalentChannel,
    g_singulars: np.ndarray,
    v_r: np.ndarray,
    v_t: np.ndarray,
    gamma_matrix: np.ndarray,
    gamma: float = 0.5,
) -> DofReport:
    """Assemble the DofReport for one analyzed link."""
    n_r, l_r = v_r.shape
    n_t, l_t = v_t.shape
    upper_pm, upper_ch, lower = dof_bounds(
        v_r, v_t, gamma_matrix, n_r, n_t, l_t, l_r, g_singulars, gamma
    )
    return DofReport(
        dof_h=achievable_dof(ch, gamma),
        dof_g_effective=int(upper_ch),
        port_mode_upper=upper_pm,
        lower_bound=lower,
        gamma=gamma,
        h_singulars=np.asarray(ch.singulars, dtype=float),
        g_singulars=np.asarray(g_singulars, dtype=float),
        gamma_matrix_rank=matrix_rank(gamma_matrix),
        h_strict_rank=strict_rank(ch.singulars, RANK_TOL),
        g_strict_rank=strict_rank(np.asarray(g_singulars), RANK_TOL),
    )


@dataclass
class ElementAnalysis:
    """One array element: its faces in the full mesh, its unit-norm sampled
    current when driven at its own port, and its center point."""

    faces: np.ndarray
    pattern: np.ndarray
    center: np.ndarray


@dataclass
class ConventionalModel:
    """Reduced signal model of an array of identical single-mode elements.

    s_R = rho_T rho_R Gtilde s_T with Gtilde the scalar point-source
    channel between element centers; u_t/u_r are the block maps the full
    analysis should collapse to.
    """

    u_t: np.ndarray
    u_r: np.ndarray
    g_tilde: np.ndarray
    rho_t: complex
    rho_r: complex

    def predict(self, s_t: np.ndarray) -> np.ndarray:
        return self.rho_t * self.rho_r * (self.g_tilde @ np.asarray(s_t))


def point_source_channel(tx_centers: np.ndarray, rx_centers: np.ndarray, k0: float) -> np.ndarray:
    """Scalar far-field channel: leading Green term between point elements.

    Entry (i, j) = -j eta exp(-j k0 d_ij) / (2 lambda d_ij).
    """
    tx_centers = np.atleast_2d(np.asarray(tx_centers, dtype=float))
    rx_centers = np.atleast_2d(np.asarray(rx_centers, dtype=float))
    lam = 2.0 * np.pi / k0
    d = np.linalg.norm(rx_centers[:, None, :] - tx_centers[None, :, :], axis=-1)
    if d.min() <= 0.0:
        raise ValueError("coincident element centers")
    return -1j * ETA0 * np.exp(-1j * k0 * d) / (2.0 * lam * d)


def _check_identical(elements: list[ElementAnalysis], side: str) -> np.ndarray:
    ref = elements[0].pattern
    for i, el in enumerate(elements[1:], start=1):
        if el.pattern.shape != ref.shape:
            raise ReductionError(
                f"{side} element {i} has a different pattern size than element 0"
            )
        dev = np.linalg.norm(el.pattern - ref) / np.linalg.norm(ref)
        if dev > 1e-6:
            raise ReductionError(
                f"{side} element {i} current differs from element 0 by "
                f"{dev:.2e} (> 1e-6); reduction requires identical elements"
            )
    return ref


def conventional_reduce(
    tx_elements: list[ElementAnalysis],
    rx_elements: list[ElementAnalysis],
    k0: float,
    n_tx_faces: int,
    n_rx_faces: int,
    rho_t: complex = 1.0,
    rho_r: complex = 1.0,
) -> ConventionalModel:
    """Block maps and point-source channel for identical-element arrays.

    u_t stacks one copy of the shared element current per transmit port
    (column l supported on element l's faces); u_r is the pseudo-inverse of
    the same construction on the receive side, so it projects the incident
    field onto each element's own pattern.
    """
    if not tx_elements or not rx_elements:
        raise ValueError("need at least one element per side")
    _check_identical(tx_elements, "transmit")
    _check_identical(rx_elements, "receive")

    def block_map(elements, n_faces):
        out = np.zeros((3 * n_faces, len(elements)), dtype=complex)
        for l, el in enumerate(elements):
            rows = (3 * np.asarray(el.faces)[:, None] + np.arange(3)[None, :]).ravel()
            out[rows, l] = el.pattern
        return out

    u_t = block_map(tx_elements, n_tx_faces)
    e_blocks = block_map(rx_elements, n_rx_faces)
    u_r = np.linalg.pinv(e_blocks, rcond=PINV_RCOND)
    g_tilde = point_source_channel(
        np.array([el.center for el in tx_elements]),
        np.array([el.center for el in rx_elements]),
        k0,
    )
    return ConventionalModel(u_t=u_t, u_r=u_r, g_tilde=g_tilde,
                             rho_t=complex(rho_t), rho_r=complex(rho_r))


def block_leakage(u_t: np.ndarray, elements: list[ElementAnalysis]) -> np.ndarray:
    """Per-port fraction of map energy outside the port's own element faces."""
    u_t = np.asarray(u_t)
    out = np.empty(len(elements))
    for l, el in enumerate(elements):
        rows = (3 * np.asarray(el.faces)[:, None] + np.arange(3)[None, :]).ravel()
        col = u_t[:, l]
        total = np.linalg.norm(col) ** 2
        own = np.linalg.norm(col[rows]) ** 2
        out[l] = 0.0 if total == 0.0 else 1.0 - own / total
    return out
