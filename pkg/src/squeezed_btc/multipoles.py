"""Irreducible tensor operators, state multipoles and spherical harmonics.

Conventions: <j m'| T_kq |j m> = (-1)^(j-m) <j m'; j -m | k q>, which makes
the T_kq orthonormal, Tr[T_kq^dag T_k'q'] = delta_kk' delta_qq', with
T_kq^dag = (-1)^q T_k,-q.  Multipoles are rho_kq = Tr[rho T_kq^dag].
"""
from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .spin_algebra import as_matrix


@lru_cache(maxsize=None)
def _fact(n: int) -> int:
    return math.factorial(n)


def _twice(x) -> int:
    t = 2 * Fraction(x)
    if t.denominator != 1:
        raise ValueError(f"{x} is not an integer or half-integer")
    return int(t)


def clebsch_gordan_squared(j1, m1, j2, m2, J, M) -> Fraction:
    """Exact signed square sign(C) * C^2 of <j1 m1; j2 m2 | J M> (Racah formula).

    Arguments may be ints, floats or Fractions holding (half-)integers.
    Integer arithmetic avoids the cancellation that ruins the alternating
    sum in floating point at large j.
    """
    a, am, b, bm, c, cm = (_twice(x) for x in (j1, m1, j2, m2, J, M))
    if am + bm != cm:
        return Fraction(0)
    if any(abs(x) > y for x, y in ((am, a), (bm, b), (cm, c))):
        return Fraction(0)
    if (a + am) % 2 or (b + bm) % 2 or (c + cm) % 2:
        return Fraction(0)
    if c < abs(a - b) or c > a + b or (a + b + c) % 2:
        return Fraction(0)
    # work with integers: all of these are (j +/- m) style combinations
    jpj_J = (a + b - c) // 2
    J_jm = (c + a - b) // 2
    J_mj = (c - a + b) // 2
    tot = (a + b + c) // 2 + 1
    j1m, j1p = (a - am) // 2, (a + am) // 2
    j2m, j2p = (b - bm) // 2, (b + bm) // 2
    Jm, Jp = (c - cm) // 2, (c + cm) // 2
    pref = Fraction((c + 1) * _fact(J_jm) * _fact(J_mj) * _fact(jpj_J), _fact(tot))
    pref *= _fact(Jp) * _fact(Jm) * _fact(j1m) * _fact(j1p) * _fact(j2m) * _fact(j2p)
    x1 = (c - b + am) // 2  # J - j2 + m1
    x2 = (c - a - bm) // 2  # J - j1 - m2
    kmin = max(0, -x1, -x2)
    kmax = min(jpj_J, j1m, j2p)
    s = Fraction(0)
    for k in range(kmin, kmax + 1):
        den = _fact(k) * _fact(jpj_J - k) * _fact(j1m - k) * _fact(j2p - k) * _fact(x1 + k) * _fact(x2 + k)
        s += Fraction((-1) ** k, den)
    sq = pref * s * s
    return sq if s >= 0 else -sq


def clebsch_gordan(j1, m1, j2, m2, J, M) -> float:
    """<j1 m1; j2 m2 | J M> in Condon-Shortley convention."""
    sq = clebsch_gordan_squared(j1, m1, j2, m2, J, M)
    return math.copysign(math.sqrt(abs(sq)), sq)


def tensor_operator_exact(j, k: int, q: int) -> np.ndarray:
    """T_kq built entry by entry from exact Clebsch-Gordan coefficients."""
    d = _twice(j) + 1
    t = np.zeros((d, d))
    for i in range(d):          # row: m' = j - i
        for c in range(d):      # column: m = j - c
            mp = Fraction(_twice(j) - 2 * i, 2)
            m = Fraction(_twice(j) - 2 * c, 2)
            if mp - m != q:
                continue
            sign = -1 if (Fraction(j) - m) % 2 else 1
            t[i, c] = sign * clebsch_gordan(j, mp, j, -m, k, q)
    return t


class TensorBasis:
    """Orthonormal tensor operators T_kq for spin ``j``, stored by diagonal.

    ``rows[q]`` (q >= 0) is a (2j+1-q, d-q) array whose row ``k - q`` holds
    the entries of T_kq along ``np.diagonal(., offset=q)``.  Each family is
    the Krylov basis of diag(m) started from the entries of (S+)^q and is
    orthonormalized by Lanczos with full reorthogonalization; signs follow
    from the stretched Clebsch-Gordan coefficient <j j; j m2|k q> > 0, so the
    top entry of T_kq carries (-1)^q.
    """

    def __init__(self, n_atoms: int):
        self.n_atoms = n_atoms
        self.j = n_atoms / 2
        self.dim = n_atoms + 1
        self.rows = [self._family(q) for q in range(self.dim)]

    def _family(self, q: int) -> np.ndarray:
        d, j = self.dim, self.j
        m = j - np.arange(d)             # m' for row i
        n = d - q
        mp = m[:n]                        # m' = j - i on the offset-q diagonal
        lower = mp - q                    # m = m' - q
        # log of <m'|(S+)^q|m> = prod_t sqrt(j(j+1) - (m+t)(m+t+1))
        logw = np.zeros(n)
        for t in range(q):
            mt = lower + t
            logw += 0.5 * np.log(j * (j + 1) - mt * (mt + 1))
        v = np.exp(logw - logw.max())
        v /= np.linalg.norm(v)
        basis = np.empty((n, n))
        basis[0] = v
        x = mp - mp.mean()
        for r in range(1, n):
            w = x * basis[r - 1]
            for _ in range(2):
                w -= basis[:r].T @ (basis[:r] @ w)
            w /= np.linalg.norm(w)
            basis[r] = w
        signs = np.where(basis[:, 0] < 0, -1.0, 1.0) * (-1.0) ** q
        return basis * signs[:, None]

    def operator(self, k: int, q: int) -> np.ndarray:
        """Dense T_kq."""
        if not 0 <= k <= 2 * self.j or abs(q) > k:
            raise ValueError(f"invalid (k, q) = ({k}, {q}) for j = {self.j}")
        aq = abs(q)
        t = np.diag(self.rows[aq][k - aq], aq)
        return t if q >= 0 else (-1.0) ** aq * t.T


@lru_cache(maxsize=8)
def tensor_basis(n_atoms: int) -> TensorBasis:
    return TensorBasis(n_atoms)


def multipole_components(rho) -> np.ndarray:
    """State multipoles rho_kq = Tr[rho T_kq^dag].

    Returns a complex array ``out[k, q + 2j]`` of shape (2j+1, 4j+1); entries
    with |q| > k are zero.
    """
    r = np.asarray(as_matrix(rho))
    d = r.shape[0]
    basis = tensor_basis(d - 1)
    kmax = d - 1
    out = np.zeros((d, 2 * kmax + 1), dtype=complex)
    for q in range(d):
        rows = basis.rows[q]
        out[q:, kmax + q] = rows @ np.diagonal(r, offset=q)
        if q:
            out[q:, kmax - q] = (-1.0) ** q * (rows @ np.diagonal(r, offset=-q))
    return out


def normalized_legendre(kmax: int, x) -> np.ndarray:
    """Orthonormal associated Legendre functions with Condon-Shortley phase.

    Returns ``P[..., k, q]`` for 0 <= q <= k <= kmax such that
    Y_kq(theta, phi) = P[k, q](cos theta) * exp(i q phi).
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.clip(1 - x * x, 0.0, None))
    p = np.zeros(x.shape + (kmax + 1, kmax + 1))
    p[..., 0, 0] = 1 / math.sqrt(4 * math.pi)
    for q in range(1, kmax + 1):
        p[..., q, q] = -math.sqrt((2 * q + 1) / (2 * q)) * s * p[..., q - 1, q - 1]
    for q in range(0, kmax):
        p[..., q + 1, q] = math.sqrt(2 * q + 3) * x * p[..., q, q]
    for q in range(0, kmax + 1):
        for k in range(q + 2, kmax + 1):
            a = math.sqrt((4 * k * k - 1) / (k * k - q * q))
            b = math.sqrt(((k - 1) ** 2 - q * q) / (4 * (k - 1) ** 2 - 1))
            p[..., k, q] = a * (x * p[..., k - 1, q] - b * p[..., k - 2, q])
    return p


def spherical_harmonic(k: int, q: int, theta, phi):
    """Y_kq with Condon-Shortley phase (reference-free, used for checks)."""
    p = normalized_legendre(k, np.cos(theta))[..., k, abs(q)]
    y = p * np.exp(1j * abs(q) * np.asarray(phi))
    return y if q >= 0 else (-1) ** q * np.conj(y)
