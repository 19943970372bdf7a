"""Liouvillian eigenvalues, steady states, and dissipative gaps.

All reported eigenvalues are in units of the collective rate N*Gamma/2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import config
from .errors import ConvergenceError, MultiplicityError, NumericalError, SizeError
from .liouvillian import Superoperator, unvec
from .spin_algebra import DensityMatrix

UNITS = "NGamma/2"


@dataclass(frozen=True)
class GapSummary:
    """Dissipative gaps; ``None`` means no eigenvalue of that class was retained."""

    delta_1: float | None
    delta_2: float | None
    delta_omega: float | None
    im_zero_tolerance: float = config.IM_ZERO_TOLERANCE

    def to_dict(self) -> dict:
        return {
            "delta_1": self.delta_1,
            "delta_2": self.delta_2,
            "delta_omega": self.delta_omega,
            "im_zero_tolerance": self.im_zero_tolerance,
            "units": UNITS,
        }


@dataclass(frozen=True)
class SpectrumResult:
    eigenvalues: np.ndarray
    method: str
    n_requested: int
    gaps: GapSummary
    shift: complex = 0.0
    units_tag: str = UNITS
    eigenvectors: np.ndarray | None = field(default=None, repr=False)
    residuals: np.ndarray | None = field(default=None, repr=False)


def sort_eigenvalues(vals, tie_tol: float = 1e-9, return_order: bool = False):
    """Order by ascending |Re|, breaking near-ties by ascending Im.

    Values whose |Re| agree within ``tie_tol`` (relative to max(1, |Re|))
    form one group, which keeps conjugate pairs adjacent.
    """
    vals = np.asarray(vals, dtype=complex)
    order = np.argsort(np.abs(vals.real), kind="stable")
    a = np.abs(vals.real[order])
    out = []
    start = 0
    for i in range(1, len(order) + 1):
        if i == len(order) or a[i] - a[i - 1] > tie_tol * max(1.0, a[i]):
            grp = order[start:i]
            out.extend(grp[np.argsort(vals.imag[grp], kind="stable")])
            start = i
    out = np.asarray(out, dtype=int)
    return (vals[out], out) if return_order else vals[out]


def classify_gaps(spectrum, im_zero_tolerance: float | None = None,
                  zero_tolerance: float | None = None) -> GapSummary:
    """Extract Delta_1, Delta_2 and delta_omega from a (partial) spectrum.

    Delta_1 is |Re| of the first nonzero eigenvalue (in |Re| order) with
    |Im| above tolerance, Delta_2 the same for |Im| at or below it, and
    delta_omega is |Im| of the eigenvalue defining Delta_1.
    """
    tol_im = config.IM_ZERO_TOLERANCE if im_zero_tolerance is None else im_zero_tolerance
    tol0 = config.ZERO_EIGENVALUE_TOLERANCE if zero_tolerance is None else zero_tolerance
    vals = spectrum.eigenvalues if isinstance(spectrum, SpectrumResult) else np.asarray(spectrum, dtype=complex)
    vals = sort_eigenvalues(vals)
    nonzero = vals[np.abs(vals) > tol0]
    complex_ = nonzero[np.abs(nonzero.imag) > tol_im]
    real_ = nonzero[np.abs(nonzero.imag) <= tol_im]
    d1 = float(abs(complex_[0].real)) if complex_.size else None
    dw = float(abs(complex_[0].imag)) if complex_.size else None
    d2 = float(abs(real_[0].real)) if real_.size else None
    return GapSummary(d1, d2, dw, tol_im)


def hermitian_basis(d: int) -> sp.csc_matrix:
    """Unitary D x D map from real coordinates of a Hermitian matrix to vec(rho).

    Columns are vec(E_aa), vec(E_ab + E_ba)/sqrt2 and vec(i E_ab - i E_ba)/sqrt2
    for a < b.  A hermiticity-preserving generator is real in this basis.
    """
    rows, cols, data = [], [], []
    col = 0
    s = 1 / math.sqrt(2)
    for a in range(d):
        rows.append(a + d * a)
        cols.append(col)
        data.append(1.0)
        col += 1
    for a in range(d):
        for b in range(a + 1, d):
            ab, ba = a + d * b, b + d * a
            rows += [ab, ba]
            cols += [col, col]
            data += [s, s]
            col += 1
            rows += [ab, ba]
            cols += [col, col]
            data += [1j * s, -1j * s]
            col += 1
    return sp.csc_matrix((np.asarray(data, dtype=complex), (rows, cols)), shape=(d * d, d * d))


def real_form(L: Superoperator) -> sp.csr_matrix:
    """The generator as a real matrix on Hermitian-matrix coordinates."""
    t = hermitian_basis(L.hilbert_dim)
    r = (t.conj().T @ L.matrix @ t).tocsr()
    # products can leave duplicate entries; some sparse reductions canonicalize
    # in place through shared index arrays, so fix the format up front
    r.sum_duplicates()
    re = sp.csr_matrix((r.data.real.copy(), r.indices.copy(), r.indptr.copy()), shape=r.shape)
    imag = float(np.abs(r.data.imag).max()) if r.nnz else 0.0
    if imag > 1e-9 * max(1.0, float(np.abs(re.data).max(initial=0.0))):
        raise NumericalError("generator does not preserve hermiticity", {"max_imag": imag})
    return re


def full_spectrum(L: Superoperator, return_vectors: bool = False,
                  dim_cap: int | None = None) -> SpectrumResult:
    """All D eigenvalues by dense diagonalization of the real form of L."""
    cap = config.DENSE_DIM_CAP if dim_cap is None else dim_cap
    if L.dim > cap:
        raise SizeError(
            f"superoperator dimension {L.dim} exceeds the dense cap {cap}; use low_lying_spectrum"
        )
    rate = L.params.collective_rate
    r = real_form(L).toarray()
    if return_vectors:
        w, y = la.eig(r)
        vecs = hermitian_basis(L.hilbert_dim) @ y
    else:
        w = la.eigvals(r)
        vecs = None
    vals, order = sort_eigenvalues(w / rate, return_order=True)
    if vecs is not None:
        vecs = vecs[:, order]
    return SpectrumResult(vals, "dense", L.dim, classify_gaps(vals), 0.0, eigenvectors=vecs)


def _factorize(a: sp.csc_matrix, sigma: complex, scale: float):
    shifted = (a - sigma * sp.identity(a.shape[0], dtype=complex, format="csc")).tocsc()
    try:
        return spla.splu(shifted), sigma
    except RuntimeError:
        sigma = sigma + config.SHIFT_PERTURBATION * scale * (1 + 1j)
        shifted = (a - sigma * sp.identity(a.shape[0], dtype=complex, format="csc")).tocsc()
        try:
            return spla.splu(shifted), sigma
        except RuntimeError as exc:
            raise NumericalError("shift-invert factorization failed twice",
                                 {"sigma": complex(sigma)}) from exc


def _complete_pairs(vals, pool, tol):
    """Add missing conjugate partners of complex values from ``pool``."""
    keep = list(vals)
    for v in vals:
        if abs(v.imag) <= tol:
            continue
        if min(abs(np.conj(v) - x) for x in keep) <= tol:
            continue
        dist = np.abs(pool - np.conj(v))
        i = int(np.argmin(dist))
        if dist[i] <= tol:
            keep.append(pool[i])
    return np.asarray(keep)


def low_lying_spectrum(L: Superoperator, k: int = 8, shift: complex = 0.0,
                       offset: float | None = None, maxiter: int | None = None,
                       residual_tol: float | None = None,
                       return_vectors: bool = False) -> SpectrumResult:
    """The ``k`` eigenvalues nearest ``shift`` (in N*Gamma/2 units).

    Uses ARPACK in shift-invert mode with a sparse LU of (L - sigma I).  The
    working shift sits ``offset`` to the right of ``shift``: a shift on the
    steady-state eigenvalue 0 makes the inverted operator numerically
    singular and ARPACK then accepts spurious Ritz values.
    """
    D = L.dim
    if not 1 <= k < D - 1:
        raise SizeError(f"k={k} must satisfy 1 <= k < D-1 = {D - 1}")
    rate = L.params.collective_rate
    off = 0.05 if offset is None else offset
    tol_res = config.EIG_RESIDUAL_TOL if residual_tol is None else residual_tol
    max_it = config.EIG_MAX_ITER if maxiter is None else maxiter
    k_work = min(D - 2, k + max(4, k // 2))
    ncv = min(D, max(2 * k_work + 1, 20))
    lu, sigma = _factorize(L.matrix, (complex(shift) + off) * rate, rate)
    op = spla.LinearOperator((D, D), matvec=lu.solve, dtype=complex)
    try:
        w, v = spla.eigs(L.matrix, k=k_work, sigma=sigma, OPinv=op, which="LM",
                         ncv=ncv, maxiter=max_it)
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceError(
            "shift-invert Arnoldi did not converge",
            {"k": k, "shift": complex(shift), "converged": len(exc.eigenvalues), "maxiter": max_it},
        ) from exc
    w = w / rate
    near = np.argsort(np.abs(w - shift), kind="stable")[:k]
    chosen = _complete_pairs(w[near], w, 1e-8)
    idx = np.array([int(np.argmin(np.abs(w - c))) for c in chosen])
    vecs = v[:, idx]
    res = np.linalg.norm(L.matrix @ vecs - vecs * (w[idx] * rate), axis=0)
    res = res / (np.linalg.norm(vecs, axis=0) * rate)
    if np.any(res > tol_res):
        raise ConvergenceError(
            "eigenpair residual above tolerance",
            {"max_residual": float(res.max()), "tolerance": tol_res, "k": k, "shift": complex(shift)},
        )
    vals, order = sort_eigenvalues(w[idx], return_order=True)
    return SpectrumResult(
        vals, "shift-invert", k, classify_gaps(vals), complex(shift),
        eigenvectors=vecs[:, order] if return_vectors else None,
        residuals=res[order],
    )


def merge_spectra(*results: SpectrumResult, tol: float = 1e-8) -> SpectrumResult:
    """Union of several windows with duplicates (within ``tol``) removed."""
    pool = []
    for r in results:
        for v in r.eigenvalues:
            if not any(abs(v - u) <= tol * max(1.0, abs(v)) for u in pool):
                pool.append(v)
    vals = sort_eigenvalues(np.asarray(pool))
    return SpectrumResult(vals, "shift-invert", sum(r.n_requested for r in results),
                          classify_gaps(vals), results[0].shift if results else 0.0)


def frequency_hint(drive_ratio: float) -> float | None:
    """Rough oscillation frequency above threshold, used only to place a window."""
    if drive_ratio <= 1:
        return None
    return 2 * math.sqrt(drive_ratio**2 - 1)


def gap_spectrum(L: Superoperator, k: int = 16, k_band: int = 12,
                 band_center: float | None = None) -> SpectrumResult:
    """Low-lying spectrum suited for gap extraction.

    At strong drive many purely real eigenvalues lie closer to the origin
    than the first oscillatory band, so a second window is placed on the
    imaginary axis at ``band_center`` (defaults to a frequency estimate).
    """
    D = L.dim
    if D <= 256:
        return full_spectrum(L)
    win0 = low_lying_spectrum(L, k=min(k, D - 3))
    center = band_center if band_center is not None else frequency_hint(L.params.drive_ratio)
    if center is None or center < 0.5:
        return win0
    band = low_lying_spectrum(L, k=min(k_band, D - 3), shift=1j * center)
    conj = SpectrumResult(np.conj(band.eigenvalues), band.method, band.n_requested, band.gaps)
    return merge_spectra(win0, band, conj)


def steady_state(L: Superoperator, check_unique: bool = True) -> DensityMatrix:
    """Unique steady state from a bordered sparse solve.

    One diagonal row of L is replaced by the trace functional, so the solve
    returns the null vector normalized to unit trace.
    """
    d = L.hilbert_dim
    D = L.dim
    diag_idx = np.arange(d) * (d + 1)
    trace_row = sp.csr_matrix((np.ones(d, dtype=complex), (np.zeros(d, dtype=int), diag_idx)), shape=(1, D))
    a = sp.vstack([trace_row, L.matrix.tocsr()[1:]], format="csc")
    b = np.zeros(D, dtype=complex)
    b[0] = 1.0
    try:
        x = spla.splu(a).solve(b)
    except RuntimeError as exc:
        raise MultiplicityError("steady-state system is singular (degenerate null space)") from exc
    if not np.all(np.isfinite(x)):
        raise MultiplicityError("steady-state solve produced non-finite values")
    rho = unvec(x, d)
    rho = rho / np.trace(rho)
    rho = (rho + rho.conj().T) / 2
    resid = float(np.max(np.abs(L.matrix @ rho.reshape(-1, order="F"))))
    scale = L.norm_inf()
    if resid > 1e-9 * scale:
        raise NumericalError("steady-state residual too large",
                             {"residual": resid, "norm_inf": scale})
    if check_unique:
        _check_unique(L)
    return DensityMatrix(rho)


def _check_unique(L: Superoperator) -> None:
    tol = config.ZERO_EIGENVALUE_TOLERANCE
    if L.dim <= 256:
        r = real_form(L).toarray()
        w = la.eigvals(r) / L.params.collective_rate
    else:
        w = low_lying_spectrum(L, k=3).eigenvalues
    n_zero = int(np.sum(np.abs(w) <= max(tol, 1e-6)))
    if n_zero > 1:
        raise MultiplicityError(f"Liouvillian has {n_zero} zero eigenvalues", {"n_zero": n_zero})
