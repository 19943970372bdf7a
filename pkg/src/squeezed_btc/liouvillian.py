"""Vectorized Liouvillian for driven atoms in a broadband squeezed vacuum.

The master equation is

    drho/dt = i[|W| e^{i psi} S+ + |W| e^{-i psi} S-, rho]
              - G (1 + n) (S+S- rho - 2 S- rho S+ + rho S+S-)
              - G n       (S-S+ rho - 2 S+ rho S- + rho S-S+)
              - G M+      (S+S+ rho - 2 S+ rho S+ + rho S+S+)
              - G M-      (S-S- rho - 2 S- rho S- + rho S-S-)

with M+ = |m| e^{-i phi} and M- = |m| e^{+i phi}.  Matrices are vectorized by
column stacking, vec(A X B) = (B^T kron A) vec(X).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatchError, ParameterError
from .spin_algebra import SpinOperators, as_matrix, build_spin_operators

VECTORIZATION = "column-stacking"


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of one simulation instance.

    ``rabi`` is |Omega| and ``gamma`` the single-atom rate Gamma, both in the
    same (arbitrary) frequency unit.  Reported spectra and times are
    rescaled by the collective rate N*Gamma/2.
    """

    n_atoms: int
    rabi: float
    gamma: float
    n_bar: float = 0.0
    m_abs: float = 0.0
    drive_phase: float = math.pi / 2
    squeeze_phase: float = 0.0
    perfect_squeezing: bool = False

    def __post_init__(self):
        if int(self.n_atoms) != self.n_atoms or self.n_atoms < 1:
            raise ParameterError(f"n_atoms must be a positive integer, got {self.n_atoms!r}")
        object.__setattr__(self, "n_atoms", int(self.n_atoms))
        for name in ("rabi", "n_bar", "m_abs"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ParameterError(f"{name} must be finite and nonnegative, got {v!r}")
        if not np.isfinite(self.gamma) or self.gamma <= 0:
            raise ParameterError(f"gamma must be positive, got {self.gamma!r}")
        if self.perfect_squeezing:
            object.__setattr__(self, "m_abs", math.sqrt(self.n_bar * (self.n_bar + 1)))
        elif self.m_abs**2 > self.n_bar * (self.n_bar + 1) + 1e-12:
            raise ParameterError(
                f"|m|^2={self.m_abs**2:.6g} exceeds n_bar(n_bar+1)={self.n_bar * (self.n_bar + 1):.6g}"
            )

    @classmethod
    def from_drive_ratio(cls, n_atoms, drive_ratio, n_bar=0.0, perfect_squeezing=True, **kw):
        """Reduced units: N*Gamma/2 = 1, so |Omega| equals 2|Omega|/(N*Gamma)."""
        return cls(
            n_atoms=n_atoms,
            rabi=float(drive_ratio),
            gamma=2.0 / n_atoms,
            n_bar=float(n_bar),
            perfect_squeezing=perfect_squeezing,
            **kw,
        )

    @property
    def collective_rate(self) -> float:
        """N*Gamma/2, the unit used for all reported rates."""
        return self.n_atoms * self.gamma / 2

    @property
    def drive_ratio(self) -> float:
        return 2 * self.rabi / (self.n_atoms * self.gamma)

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "n_atoms": self.n_atoms,
            "rabi": self.rabi,
            "gamma": self.gamma,
            "n_bar": self.n_bar,
            "m_abs": self.m_abs,
            "drive_phase": self.drive_phase,
            "squeeze_phase": self.squeeze_phase,
        }


@dataclass(frozen=True)
class Superoperator:
    """Sparse D x D generator acting on column-stacked density matrices."""

    matrix: sp.csc_matrix = field(repr=False)
    params: ModelParams
    vectorization: str = VECTORIZATION

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def hilbert_dim(self) -> int:
        return self.params.n_atoms + 1

    def __matmul__(self, vec):
        v = np.asarray(vec)
        if v.shape[0] != self.dim:
            raise DimensionMismatchError(f"vector of length {v.shape[0]} for a {self.dim}-dimensional generator")
        return self.matrix @ v

    def norm_inf(self) -> float:
        return float(abs(self.matrix).sum(axis=1).max())


def vec(rho) -> np.ndarray:
    return np.asarray(as_matrix(rho)).reshape(-1, order="F")


def unvec(v, d: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if d is None:
        d = math.isqrt(v.size)
    if d * d != v.size:
        raise DimensionMismatchError(f"vector of length {v.size} is not a vectorized square matrix")
    return v.reshape((d, d), order="F")


def _coefficients(params: ModelParams):
    """Scalar weights of each term of the generator."""
    w = params.rabi
    g = params.gamma
    return {
        "drive_plus": w * np.exp(1j * params.drive_phase),
        "drive_minus": w * np.exp(-1j * params.drive_phase),
        "emission": g * (1 + params.n_bar),
        "absorption": g * params.n_bar,
        "squeeze_pp": g * params.m_abs * np.exp(-1j * params.squeeze_phase),
        "squeeze_mm": g * params.m_abs * np.exp(1j * params.squeeze_phase),
    }


def _sparse_ops(ops: SpinOperators):
    sp_ = sp.csr_matrix(ops.s_plus)
    sm = sp.csr_matrix(ops.s_minus)
    return sp_, sm


def build_liouvillian(params: ModelParams, ops: SpinOperators | None = None) -> Superoperator:
    """Assemble the sparse Liouvillian matrix for ``params``."""
    if ops is None:
        ops = build_spin_operators(params.n_atoms)
    elif ops.n_atoms != params.n_atoms:
        raise DimensionMismatchError("spin operators built for a different atom number")
    c = _coefficients(params)
    d = ops.dim
    eye = sp.identity(d, dtype=complex, format="csr")
    s_p, s_m = _sparse_ops(ops)

    def left(a):
        return sp.kron(eye, a, format="csr")

    def right(a):
        return sp.kron(a.T, eye, format="csr")

    def sandwich(a, b):
        return sp.kron(b.T, a, format="csr")

    def pattern(a, b):
        # (a b rho - 2 b rho a + rho a b)
        ab = a @ b
        return left(ab) - 2 * sandwich(b, a) + right(ab)

    drive = c["drive_plus"] * s_p + c["drive_minus"] * s_m
    lmat = 1j * (left(drive) - right(drive))
    lmat = lmat - c["emission"] * pattern(s_p, s_m)
    if c["absorption"] != 0:
        lmat = lmat - c["absorption"] * pattern(s_m, s_p)
    if params.m_abs != 0:
        # -G M+ (S+S+ rho - 2 S+ rho S+ + rho S+S+) and its S- partner
        lmat = lmat - c["squeeze_pp"] * pattern(s_p, s_p)
        lmat = lmat - c["squeeze_mm"] * pattern(s_m, s_m)
    lmat = sp.csc_matrix(lmat)
    lmat.eliminate_zeros()
    lmat.sort_indices()
    return Superoperator(lmat, params)


def apply_rhs(params: ModelParams, rho, ops: SpinOperators | None = None) -> np.ndarray:
    """Matrix-free evaluation of drho/dt for a d x d matrix ``rho``."""
    r = np.asarray(as_matrix(rho), dtype=complex)
    if ops is None:
        ops = build_spin_operators(params.n_atoms)
    if r.shape != (ops.dim, ops.dim):
        raise DimensionMismatchError(f"state shape {r.shape} does not match dimension {ops.dim}")
    return _rhs(_coefficients(params), ops.s_plus, ops.s_minus, r)


def _rhs(c, s_p, s_m, r):
    drive = c["drive_plus"] * s_p + c["drive_minus"] * s_m
    out = 1j * (drive @ r - r @ drive)

    def pattern(a, b):
        ab = a @ b
        return ab @ r - 2 * (b @ r @ a) + r @ ab

    out -= c["emission"] * pattern(s_p, s_m)
    if c["absorption"] != 0:
        out -= c["absorption"] * pattern(s_m, s_p)
    if c["squeeze_pp"] != 0:
        out -= c["squeeze_pp"] * pattern(s_p, s_p)
        out -= c["squeeze_mm"] * pattern(s_m, s_m)
    return out


class MatrixFreeRHS:
    """Callable ``f(t, y)`` on column-stacked states, reusing sparse operators.

    Cheaper than rebuilding operators on every call inside an integrator.
    """

    def __init__(self, params: ModelParams, ops: SpinOperators | None = None):
        if ops is None:
            ops = build_spin_operators(params.n_atoms)
        self.d = ops.dim
        c = _coefficients(params)
        s_p = sp.csr_matrix(ops.s_plus)
        s_m = sp.csr_matrix(ops.s_minus)
        self._drive = sp.csr_matrix(c["drive_plus"] * s_p + c["drive_minus"] * s_m)
        # (a b rho - 2 b rho a + rho a b) terms as (weight, ab, b, a)
        terms = [(c["emission"], s_p, s_m)]
        if c["absorption"] != 0:
            terms.append((c["absorption"], s_m, s_p))
        if c["squeeze_pp"] != 0:
            terms.append((c["squeeze_pp"], s_p, s_p))
            terms.append((c["squeeze_mm"], s_m, s_m))
        self._terms = [(w, sp.csr_matrix(a @ b), sp.csr_matrix(b), sp.csr_matrix(a)) for w, a, b in terms]
        self.n_calls = 0

    def matrix_rhs(self, r: np.ndarray) -> np.ndarray:
        out = 1j * (self._drive @ r - (self._drive.T @ r.T).T)
        for w, ab, b, a in self._terms:
            rab = (ab.T @ r.T).T
            bra = (a.T @ (b @ r).T).T
            out -= w * (ab @ r - 2 * bra + rab)
        return out

    def __call__(self, t, y):
        self.n_calls += 1
        r = y.reshape((self.d, self.d), order="F")
        return self.matrix_rhs(r).reshape(-1, order="F")
