"""Steady-state diagnostics: Dicke occupations, transverse variances and the
spin Wigner function on the Bloch sphere."""
from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, NumericalError
from .multipoles import multipole_components, normalized_legendre
from .spin_algebra import SpinOperators, as_matrix, variance


@dataclass(frozen=True)
class OccupationDistribution:
    m_values: np.ndarray
    probabilities: np.ndarray

    @property
    def participation_ratio(self) -> float:
        """1 / sum p_m^2: the effective number of occupied Dicke states."""
        return float(1 / np.sum(self.probabilities**2))

    def mean_m(self) -> float:
        return float(np.dot(self.m_values, self.probabilities))

    def local_maxima(self, min_height: float = 0.0, rel_height: float = 0.0) -> list[int]:
        """Indices of strict local maxima (plateaus count once).

        Maxima lower than ``min_height`` or ``rel_height * max(p)`` are dropped.
        """
        p = self.probabilities
        min_height = max(min_height, rel_height * float(p.max()))
        out = []
        i = 0
        n = p.size
        while i < n:
            jdx = i
            while jdx + 1 < n and p[jdx + 1] == p[i]:
                jdx += 1
            left = p[i - 1] if i > 0 else -np.inf
            right = p[jdx + 1] if jdx + 1 < n else -np.inf
            if p[i] > left and p[i] > right and p[i] > min_height:
                out.append(i)
            i = jdx + 1
        return out


def occupation_distribution(rho) -> OccupationDistribution:
    r = as_matrix(rho)
    d = r.shape[0]
    j = (d - 1) / 2
    p = np.real(np.diagonal(r)).copy()
    return OccupationDistribution(j - np.arange(d), p)


def transverse_variances(rho, ops: SpinOperators) -> tuple[float, float]:
    """(Delta S_x^2, Delta S_y^2)."""
    if as_matrix(rho).shape != ops.s_x.shape:
        raise DimensionMismatchError("state and spin operators have different dimensions")
    return variance(ops.s_x, rho), variance(ops.s_y, rho)


@dataclass(frozen=True)
class WignerMap:
    theta_grid: np.ndarray
    phi_grid: np.ndarray
    values: np.ndarray
    max_imag_residue: float = 0.0

    def integral(self) -> float:
        """Sphere integral from the grid values.

        Clenshaw-Curtis weights in theta (nodes equispaced in theta are
        Chebyshev points in cos theta) and the rectangle rule in phi; exact for
        n_theta - 1 >= 2j and n_phi > 2j.
        """
        dphi = 2 * math.pi / self.phi_grid.size
        ring = self.values.sum(axis=1) * dphi
        return float(clenshaw_curtis_weights(self.theta_grid.size - 1) @ ring)

    def negative_regions(self, threshold: float = 0.0) -> list[int]:
        """Sizes (in grid cells) of connected regions with W < -threshold.

        Connectivity is 4-neighbour on the grid, periodic in phi.
        """
        from scipy import ndimage

        mask = self.values < -threshold
        labels, n = ndimage.label(mask)
        if n == 0:
            return []
        # join labels across the phi = 0 / 2 pi seam
        parent = list(range(n + 1))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for a, b in zip(labels[:, 0], labels[:, -1]):
            if a and b:
                parent[find(a)] = find(b)
        sizes: dict[int, int] = {}
        for lab in range(1, n + 1):
            root = find(lab)
            sizes[root] = sizes.get(root, 0) + int(np.sum(labels == lab))
        return sorted(sizes.values(), reverse=True)


def clenshaw_curtis_weights(n: int) -> np.ndarray:
    """Weights for int_{-1}^{1} f(x) dx at x_k = cos(k pi / n), k = 0..n."""
    theta = np.pi * np.arange(n + 1) / n
    w = np.zeros(n + 1)
    v = np.ones(n - 1)
    inner = slice(1, n)
    if n % 2 == 0:
        w[0] = w[n] = 1 / (n * n - 1)
        for k in range(1, n // 2):
            v -= 2 * np.cos(2 * k * theta[inner]) / (4 * k * k - 1)
        v -= np.cos(n * theta[inner]) / (n * n - 1)
    else:
        w[0] = w[n] = 1 / (n * n)
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2 * np.cos(2 * k * theta[inner]) / (4 * k * k - 1)
    w[inner] = 2 * v / n
    return w


def spin_wigner(rho, n_theta: int | None = None, n_phi: int = 360, imag_tol: float = 1e-9) -> WignerMap:
    """Spin Wigner function W(theta, phi), normalized to unit sphere integral.

    W = sqrt((2j+1)/(4 pi)) * sum_kq rho_kq Y_kq(theta, phi).  The default
    theta grid is 1 degree, refined when needed to n_theta = 4j + 1.
    """
    r = np.asarray(as_matrix(rho))
    d = r.shape[0]
    kmax = d - 1
    if n_theta is None:
        n_theta = max(181, 2 * kmax + 1)
    if n_theta < 16 or n_phi < 16:
        raise ValueError("grid sizes must be at least 16")
    if n_theta < 2 * kmax + 1:
        warnings.warn(
            f"n_theta={n_theta} under-resolves degree-{kmax} harmonics; use n_theta >= {2 * kmax + 1}",
            stacklevel=2,
        )
    theta = np.linspace(0.0, math.pi, n_theta)
    phi = np.linspace(0.0, 2 * math.pi, n_phi, endpoint=False)
    rkq = multipole_components(r)
    plm = normalized_legendre(kmax, np.cos(theta))       # (n_theta, k, q)
    qs = np.arange(-kmax, kmax + 1)
    coeff = np.zeros((n_theta, qs.size), dtype=complex)
    for q in range(0, kmax + 1):
        coeff[:, kmax + q] = plm[:, :, q] @ rkq[:, kmax + q]
        if q:
            # Y_k,-q = (-1)^q conj(Y_kq)
            coeff[:, kmax - q] = (-1.0) ** q * (plm[:, :, q] @ rkq[:, kmax - q])
    phase = np.exp(1j * np.outer(qs, phi))
    w = math.sqrt(d / (4 * math.pi)) * (coeff @ phase)
    resid = float(np.max(np.abs(w.imag)))
    if resid > imag_tol * max(1.0, float(np.max(np.abs(w.real)))):
        raise NumericalError("Wigner function has a large imaginary part", {"max_imag": resid})
    return WignerMap(theta, phi, w.real.copy(), resid)


_WIGNER_MAGIC = b"SWGN"
_HEADER = struct.Struct("<4sIII4d")


def write_wigner_binary(path, wmap: WignerMap) -> None:
    """Dense little-endian float64 grid preceded by a fixed 48-byte header.

    Header: magic "SWGN", version, n_theta, n_phi (uint32), then theta_min,
    theta_max, phi_min, phi_step (float64).  Values follow row-major
    (theta outer).
    """
    nt, nph = wmap.values.shape
    header = _HEADER.pack(_WIGNER_MAGIC, 1, nt, nph, float(wmap.theta_grid[0]),
                          float(wmap.theta_grid[-1]), float(wmap.phi_grid[0]),
                          2 * math.pi / nph)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(wmap.values, dtype="<f8").tobytes())


def read_wigner_binary(path) -> WignerMap:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, nt, nph, t0, t1, p0, dp = _HEADER.unpack_from(raw)
    if magic != _WIGNER_MAGIC or version != 1:
        raise ValueError(f"{path}: not a Wigner grid file")
    vals = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(nt, nph)
    return WignerMap(np.linspace(t0, t1, nt), p0 + dp * np.arange(nph), vals.copy())
