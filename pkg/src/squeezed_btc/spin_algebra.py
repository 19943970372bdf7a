"""Collective spin operators in the symmetric Dicke basis.

The basis is |j, m> with j = N/2, ordered m = +j, +j-1, ..., -j, so index
``i`` carries ``m = j - i``.  With this ordering S+ lives on the first
superdiagonal.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import config
from .errors import DimensionMismatchError, ParameterError, SizeError


@dataclass(frozen=True)
class SpinOperators:
    """Dense collective operators for ``n_atoms`` two-level atoms."""

    n_atoms: int
    s_plus: np.ndarray = field(repr=False)
    s_minus: np.ndarray = field(repr=False)
    s_x: np.ndarray = field(repr=False)
    s_y: np.ndarray = field(repr=False)
    s_z: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.n_atoms + 1

    @property
    def j(self) -> float:
        return self.n_atoms / 2

    @property
    def m_values(self) -> np.ndarray:
        return self.j - np.arange(self.dim)


def build_spin_operators(n_atoms: int, max_atoms: int | None = None) -> SpinOperators:
    """Build S+, S-, Sx, Sy, Sz for the j = N/2 multiplet.

    Parameters
    ----------
    n_atoms : int
        Number of atoms N (>= 1).
    max_atoms : int, optional
        Size cap; defaults to ``config.MAX_ATOMS``.
    """
    cap = config.MAX_ATOMS if max_atoms is None else max_atoms
    if int(n_atoms) != n_atoms or n_atoms < 1:
        raise SizeError(f"n_atoms must be a positive integer, got {n_atoms!r}")
    if n_atoms > cap:
        raise SizeError(f"n_atoms={n_atoms} exceeds the dimension cap N<={cap}")
    n_atoms = int(n_atoms)
    j = n_atoms / 2
    m = j - np.arange(n_atoms + 1)
    # <m+1|S+|m> for m = m[1:], placed at (i-1, i)
    ladder = np.sqrt(j * (j + 1) - m[1:] * (m[1:] + 1))
    s_plus = np.diag(ladder, 1).astype(complex)
    s_minus = s_plus.conj().T.copy()
    s_x = (s_plus + s_minus) / 2
    s_y = (s_plus - s_minus) / 2j
    s_z = np.diag(m).astype(complex)
    for a in (s_plus, s_minus, s_x, s_y, s_z):
        a.setflags(write=False)
    return SpinOperators(n_atoms, s_plus, s_minus, s_x, s_y, s_z)


@dataclass(frozen=True)
class DensityMatrix:
    """A validated density matrix.

    ``positivity_tol`` is the most negative eigenvalue tolerated; time traces
    use a looser value than steady states.
    """

    data: np.ndarray = field(repr=False)
    positivity_tol: float = 1e-8

    def __post_init__(self):
        data = np.array(self.data, dtype=complex)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise DimensionMismatchError(f"density matrix must be square, got shape {data.shape}")
        herm = np.max(np.abs(data - data.conj().T)) if data.size else 0.0
        if herm > 1e-10:
            raise ParameterError(f"density matrix not Hermitian (deviation {herm:.3e})")
        tr = np.trace(data)
        if abs(tr - 1) > 1e-10:
            raise ParameterError(f"density matrix trace {tr:.12g} != 1")
        lam_min = np.linalg.eigvalsh((data + data.conj().T) / 2)[0]
        if lam_min < -self.positivity_tol:
            raise ParameterError(f"density matrix not positive (min eigenvalue {lam_min:.3e})")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.dim - 1


def as_matrix(rho) -> np.ndarray:
    return rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho)


def dicke_state(n_atoms: int, m: float) -> DensityMatrix:
    """Projector onto |j=N/2, m>."""
    j = n_atoms / 2
    idx = j - m
    if idx != int(idx) or not 0 <= idx <= n_atoms:
        raise ParameterError(f"m={m} is not a valid projection for j={j}")
    rho = np.zeros((n_atoms + 1, n_atoms + 1), dtype=complex)
    rho[int(idx), int(idx)] = 1.0
    return DensityMatrix(rho)


def all_down(n_atoms: int) -> DensityMatrix:
    return dicke_state(n_atoms, -n_atoms / 2)


def maximally_mixed(n_atoms: int) -> DensityMatrix:
    d = n_atoms + 1
    return DensityMatrix(np.eye(d, dtype=complex) / d)


def expectation(op, rho) -> complex:
    """Tr[op rho]."""
    op = np.asarray(op)
    r = as_matrix(rho)
    if op.shape != r.shape:
        raise DimensionMismatchError(f"operator shape {op.shape} does not match state shape {r.shape}")
    # Tr[A B] = sum_ij A_ij B_ji
    return complex(np.sum(op * r.T))


def variance(op, rho) -> float:
    """Tr[op^2 rho] - Tr[op rho]^2 for Hermitian ``op``."""
    op = np.asarray(op)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise DimensionMismatchError(f"operator must be square, got shape {op.shape}")
    scale = max(1.0, float(np.max(np.abs(op)))) if op.size else 1.0
    if np.max(np.abs(op - op.conj().T)) > 1e-12 * scale:
        raise ParameterError("variance requires a Hermitian operator")
    mean = expectation(op, rho).real
    return float(expectation(op @ op, rho).real - mean**2)
