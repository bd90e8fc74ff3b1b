"""Characteristic mode analysis of an assembled impedance operator.

The characteristic modes of a conducting structure are the eigenpairs of

    X j_i = lambda_i R j_i

where Z = R + jX is the impedance matrix. Each mode is a source-free
current pattern; lambda_i = 0 marks resonance and the modal significance

    m_i = 1 / (1 + j lambda_i),   |m_i| = 1/sqrt(1 + lambda_i^2)

weighs how strongly the mode radiates when excited.

R is the radiated-power operator and is severely rank-deficient in floating
point (an N-dimensional current space radiates through far fewer effective
channels), so the raw pencil is ill-posed. `solve_modes` restricts it to the
numerically radiating subspace: eigendecompose the clamped R_psd, keep
eigenvalues >= REL_RANK_CUT times the largest, whiten with
W = Q_k diag(w_k)^{-1/2}, and solve the standard symmetric eigenproblem
W^T X W there. Modes are reported in descending |m_i| order, which is
ascending |lambda_i| order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .efie import ExcitationVector, ImpedanceOperator
from .errors import DegenerateStructureError
from .mesh import SamplingMatrix

__all__ = [
    "ModeBasis",
    "solve_modes",
    "excitation_matrix",
    "mode_patterns",
    "mode_basis_to_csv",
    "mode_basis_from_csv",
    "REL_RANK_CUT",
    "SIGNIFICANCE_FLOOR",
]

#: relative eigenvalue cut defining the radiating subspace of R_psd
REL_RANK_CUT = 1e-10

#: modes with |m_i| below this are dropped before inverting diag(m)
SIGNIFICANCE_FLOOR = 1e-3


def _sign_fix(columns: np.ndarray) -> np.ndarray:
    """Flip column signs so each column's largest-|entry| is positive."""
    if columns.size == 0:
        return columns
    lead = np.abs(columns).argmax(axis=0)
    signs = np.sign(columns[lead, np.arange(columns.shape[1])])
    signs[signs == 0] = 1.0
    return columns * signs


@dataclass
class ModeBasis:
    """Characteristic modes of one antenna at one frequency.

    mode_coeffs columns are RWG coefficient vectors, Euclidean-normalized,
    sorted by descending modal significance. excitation (modal excitation
    matrix, n x L) and patterns (per-face sampled currents, 3*Nf x n) start
    empty and are filled in place by `excitation_matrix` / `mode_patterns`.
    """

    eigenvalues: np.ndarray
    mode_coeffs: np.ndarray
    frequency: float
    subspace_dim: int
    eigen_residuals: np.ndarray
    r_cross_max: float
    excitation: np.ndarray | None = None
    patterns: np.ndarray | None = None
    pattern_gram_dev: float | None = field(default=None)

    @property
    def n_kept(self) -> int:
        return len(self.eigenvalues)

    @property
    def significances(self) -> np.ndarray:
        """m_i = 1/(1 + j lambda_i), complex."""
        return 1.0 / (1.0 + 1j * self.eigenvalues)

    def drop_modes(self, keep: np.ndarray) -> None:
        """Restrict every per-mode array to the boolean mask, in place."""
        keep = np.asarray(keep, dtype=bool)
        self.eigenvalues = self.eigenvalues[keep]
        self.mode_coeffs = self.mode_coeffs[:, keep]
        self.eigen_residuals = self.eigen_residuals[keep]
        if self.excitation is not None:
            self.excitation = self.excitation[keep, :]
        if self.patterns is not None:
            self.patterns = self.patterns[:, keep]

    def significant(self, floor: float = SIGNIFICANCE_FLOOR) -> "ModeBasis":
        """Copy restricted to modes with |m_i| >= floor."""
        out = ModeBasis(
            eigenvalues=self.eigenvalues.copy(),
            mode_coeffs=self.mode_coeffs.copy(),
            frequency=self.frequency,
            subspace_dim=self.subspace_dim,
            eigen_residuals=self.eigen_residuals.copy(),
            r_cross_max=self.r_cross_max,
            excitation=None if self.excitation is None else self.excitation.copy(),
            patterns=None if self.patterns is None else self.patterns.copy(),
            pattern_gram_dev=self.pattern_gram_dev,
        )
        out.drop_modes(np.abs(out.significances) >= floor)
        return out


def solve_modes(op: ImpedanceOperator, n_keep: int = 20) -> ModeBasis:
    """Characteristic modes of the pencil (X, R_psd), most significant first.

    Keeps n = min(n_keep, radiating subspace dimension) modes. Raises
    DegenerateStructureError when R_psd is numerically zero (nothing
    radiates, e.g. a configuration reduced to almost no metal).
    """
    if n_keep < 1:
        raise ValueError("n_keep must be at least 1")
    r_psd = op.r_psd
    x_sym = 0.5 * (op.x + op.x.T)

    w, q = np.linalg.eigh(r_psd)
    w_max = w[-1] if w.size else 0.0
    if not w_max > 0.0:
        raise DegenerateStructureError(
            "radiated-power matrix is numerically zero; structure does not radiate"
        )
    keep = w >= REL_RANK_CUT * w_max
    qk = q[:, keep]
    wk = w[keep]
    white = qk / np.sqrt(wk)[None, :]

    x_red = white.T @ x_sym @ white
    x_red = 0.5 * (x_red + x_red.T)
    lam_all, y_all = np.linalg.eigh(x_red)

    # descending |m| = ascending |lambda|; ties broken by signed value
    order = np.lexsort((lam_all, np.abs(lam_all)))
    n = min(int(n_keep), len(order))
    sel = order[:n]
    lam = lam_all[sel]
    y = y_all[:, sel]
    modes = white @ y

    # The truncated pencil is well posed only in the radiated-power metric,
    # where it becomes the reduced symmetric problem X_red y = lambda y.
    # Report each kept pair's normwise backward error there; the full-space
    # residual is dominated by X's action outside the radiating subspace,
    # which the reduction discards by construction.
    x_norm = float(np.abs(lam_all).max()) if lam_all.size else 0.0
    num = np.linalg.norm(x_red @ y - lam[None, :] * y, axis=0)
    residuals = num / (x_norm + np.abs(lam) + np.finfo(float).tiny)

    modes = _sign_fix(modes / np.linalg.norm(modes, axis=0)[None, :])
    cross = modes.T @ (r_psd @ modes)
    np.fill_diagonal(cross, 0.0)
    r_cross_max = float(np.abs(cross).max()) if cross.size else 0.0

    return ModeBasis(
        eigenvalues=lam,
        mode_coeffs=modes,
        frequency=op.frequency,
        subspace_dim=int(keep.sum()),
        eigen_residuals=residuals,
        r_cross_max=r_cross_max,
    )


def excitation_matrix(modes: ModeBasis, excitation: ExcitationVector) -> np.ndarray:
    """Modal excitation matrix V with V[i, l] = j_i^T b_l.

    Stores the result on `modes.excitation` and returns it.
    """
    b = excitation.matrix if isinstance(excitation, ExcitationVector) else np.asarray(excitation)
    if b.ndim != 2 or b.shape[0] != modes.mode_coeffs.shape[0]:
        raise ValueError(
            f"excitation rows {b.shape} do not match basis size "
            f"{modes.mode_coeffs.shape[0]}"
        )
    v = modes.mode_coeffs.T @ b
    modes.excitation = v
    return v


def mode_patterns(modes: ModeBasis, sampler: SamplingMatrix) -> np.ndarray:
    """Unit-norm per-face current patterns, one column per mode.

    Column i is the sampled mode current S j_i, Euclidean-normalized, with
    the largest-|entry| sign convention. A sign flip applied to a pattern
    is propagated to the mode coefficients and any stored excitation rows,
    so pattern, coefficient, and excitation always describe the same signed
    mode and the transmit map Jbar diag(m) V stays a faithful superposition.
    Modes whose sampled pattern is identically zero cannot couple to the
    channel; they are dropped from `modes` in place with a warning. The
    Gram deviation max|P^T P - I| is recorded on `modes.pattern_gram_dev`
    as the orthonormality diagnostic. Stores the pattern matrix on
    `modes.patterns` and returns it.
    """
    if sampler.matrix.shape[1] != modes.mode_coeffs.shape[0]:
        raise ValueError(
            f"sampler columns {sampler.matrix.shape[1]} do not match basis "
            f"size {modes.mode_coeffs.shape[0]}"
        )
    raw = sampler.matrix @ modes.mode_coeffs
    norms = np.linalg.norm(raw, axis=0)
    scale = np.abs(raw).max() if raw.size else 0.0
    alive = norms > 1e-14 * max(scale, 1.0)
    if not alive.all():
        dropped = np.flatnonzero(~alive)
        warnings.warn(
            f"dropping {dropped.size} mode(s) with zero sampled pattern: "
            f"{dropped.tolist()}",
            stacklevel=2,
        )
        modes.drop_modes(alive)
        raw = raw[:, alive]
        norms = norms[alive]
    patterns = raw / norms[None, :]
    if patterns.size:
        idx = np.abs(patterns).argmax(axis=0)
        lead = patterns[idx, np.arange(patterns.shape[1])]
        flip = np.where(lead.real < 0.0, -1.0, 1.0)
        patterns = patterns * flip[None, :]
        modes.mode_coeffs = modes.mode_coeffs * flip[None, :]
        if modes.excitation is not None:
            modes.excitation = modes.excitation * flip[:, None]
    gram = patterns.T @ patterns
    dev = np.abs(gram - np.eye(gram.shape[0])).max() if gram.size else 0.0
    modes.patterns = patterns
    modes.pattern_gram_dev = float(dev)
    return patterns


def mode_basis_to_csv(modes: ModeBasis, path: str | Path) -> None:
    """Write a ModeBasis to a self-describing CSV file.

    The first line is a comment header carrying the array shapes and
    scalar metadata; each following line is one mode: eigenvalue,
    eigenvector residual, then the real/imaginary pairs of the RWG
    coefficient vector, the excitation row, and the sampled pattern
    column.  Floats are written with repr so a read-back is exact.
    """
    lam = np.asarray(modes.eigenvalues, dtype=float)
    res = np.asarray(modes.eigen_residuals, dtype=float)
    coeffs = np.asarray(modes.mode_coeffs)
    n_modes = lam.shape[0]
    n_coeffs = coeffs.shape[0] if coeffs.size else 0
    exc = modes.excitation
    pat = modes.patterns
    n_ports = exc.shape[1] if exc is not None else 0
    pattern_len = pat.shape[0] if pat is not None else 0
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(
            "# cmadof-modes-v1"
            f" n_modes={n_modes}"
            f" n_coeffs={n_coeffs}"
            f" n_ports={n_ports}"
            f" pattern_len={pattern_len}"
            f" frequency={modes.frequency!r}"
            f" subspace_dim={modes.subspace_dim}"
            f" r_cross_max={modes.r_cross_max!r}\n"
        )
        for i in range(n_modes):
            row = [repr(float(lam[i])), repr(float(res[i]))]
            if n_coeffs:
                for z in coeffs[:, i]:
                    row.append(repr(float(np.real(z))))
                    row.append(repr(float(np.imag(z))))
            if exc is not None:
                for z in exc[i, :]:
                    row.append(repr(float(np.real(z))))
                    row.append(repr(float(np.imag(z))))
            if pat is not None:
                for z in pat[:, i]:
                    row.append(repr(float(np.real(z))))
                    row.append(repr(float(np.imag(z))))
            fh.write(",".join(row) + "\n")


def mode_basis_from_csv(path: str | Path) -> ModeBasis:
    """Read a ModeBasis written by `mode_basis_to_csv`.

    Also accepts externally produced mode data (for example full-wave
    solver exports converted to this layout): a file with n_coeffs=0
    still yields a usable basis for channel work as long as the
    excitation rows and pattern columns are present.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("# cmadof-modes-v1"):
            raise ValueError(f"{path}: not a cmadof modes CSV (bad header)")
        meta: dict[str, str] = {}
        for tok in header.split()[2:]:
            key, _, val = tok.partition("=")
            meta[key] = val
        n_modes = int(meta["n_modes"])
        n_coeffs = int(meta["n_coeffs"])
        n_ports = int(meta["n_ports"])
        pattern_len = int(meta["pattern_len"])
        lam = np.empty(n_modes)
        res = np.empty(n_modes)
        coeffs = np.zeros((n_coeffs, n_modes), dtype=complex)
        exc = np.zeros((n_modes, n_ports), dtype=complex) if n_ports else None
        pat = (
            np.zeros((pattern_len, n_modes), dtype=complex)
            if pattern_len
            else None
        )
        for i in range(n_modes):
            line = fh.readline()
            if not line:
                raise ValueError(f"{path}: expected {n_modes} mode rows")
            vals = [float(tok) for tok in line.strip().split(",")]
            expect = 2 + 2 * (n_coeffs + n_ports + pattern_len)
            if len(vals) != expect:
                raise ValueError(
                    f"{path}: mode row {i} has {len(vals)} fields,"
                    f" expected {expect}"
                )
            lam[i] = vals[0]
            res[i] = vals[1]
            pos = 2
            for j in range(n_coeffs):
                coeffs[j, i] = complex(vals[pos], vals[pos + 1])
                pos += 2
            for j in range(n_ports):
                exc[i, j] = complex(vals[pos], vals[pos + 1])
                pos += 2
            for j in range(pattern_len):
                pat[j, i] = complex(vals[pos], vals[pos + 1])
                pos += 2
    modes = ModeBasis(
        eigenvalues=lam,
        mode_coeffs=coeffs,
        frequency=float(meta["frequency"]),
        subspace_dim=int(meta["subspace_dim"]),
        eigen_residuals=res,
        r_cross_max=float(meta["r_cross_max"]),
        excitation=exc,
        patterns=pat,
    )
    return modes
