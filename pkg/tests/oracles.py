"""Reference implementations that share no code with the package.

Everything here is written directly from the physics with dense numpy and
explicit loops; it is slow and only meant for small systems.
"""
from __future__ import annotations

import cmath
import math
from functools import reduce

import numpy as np


def collective_ops_from_qubits(n_atoms: int):
    """S+, S-, Sz in the Dicke basis (m = j ... -j), built from N qubits.

    The symmetric states are generated by repeated lowering of the all-up
    state in the 2^N-dimensional product space.
    """
    up = np.array([1.0, 0.0])
    sp1 = np.array([[0.0, 1.0], [0.0, 0.0]])
    sz1 = np.diag([0.5, -0.5])
    eye = np.eye(2)

    def site(op, i):
        return reduce(np.kron, [op if k == i else eye for k in range(n_atoms)])

    s_plus = sum(site(sp1, i) for i in range(n_atoms))
    s_z = sum(site(sz1, i) for i in range(n_atoms))
    s_minus = s_plus.T
    state = reduce(np.kron, [up] * n_atoms)
    basis = [state]
    for _ in range(n_atoms):
        state = s_minus @ state
        state = state / np.linalg.norm(state)
        basis.append(state)
    b = np.array(basis).T
    return b.T @ s_plus @ b, b.T @ s_minus @ b, b.T @ s_z @ b


def collective_ops_formula(n_atoms: int):
    """Same operators from <j,m+1|S+|j,m> = sqrt((j-m)(j+m+1))."""
    j = n_atoms / 2
    d = n_atoms + 1
    sp_ = np.zeros((d, d))
    for row in range(d):
        for col in range(d):
            m_row, m_col = j - row, j - col
            if abs(m_row - m_col - 1) < 1e-12:
                sp_[row, col] = math.sqrt((j - m_col) * (j + m_col + 1))
    sz = np.diag([j - i for i in range(d)])
    return sp_, sp_.T.copy(), sz


def vacuum_rhs(rho, s_plus, s_minus, rabi, gamma):
    """drho/dt = -i W [S+ + S-, rho] + 2 G (S- rho S+ - {S+S-, rho}/2)."""
    h = s_plus + s_minus
    comm = h @ rho - rho @ h
    n = s_plus @ s_minus
    diss = s_minus @ rho @ s_plus - 0.5 * (n @ rho + rho @ n)
    return -1j * rabi * comm + 2 * gamma * diss


def squeezed_rhs(rho, s_plus, s_minus, rabi, gamma, n_bar, m_abs, drive_phase, squeeze_phase):
    """Squeezed-vacuum master equation written term by term."""
    sp_, sm = s_plus, s_minus
    drive = rabi * cmath.exp(1j * drive_phase) * sp_ + rabi * cmath.exp(-1j * drive_phase) * sm
    out = 1j * (drive @ rho - rho @ drive)

    def term(a, b):
        return a @ b @ rho - 2 * b @ rho @ a + rho @ a @ b

    out -= gamma * (1 + n_bar) * term(sp_, sm)
    out -= gamma * n_bar * term(sm, sp_)
    out -= gamma * m_abs * cmath.exp(-1j * squeeze_phase) * term(sp_, sp_)
    out -= gamma * m_abs * cmath.exp(1j * squeeze_phase) * term(sm, sm)
    return out


def superoperator_by_columns(rhs, d):
    """Column-stacked matrix of a linear map, one basis matrix at a time."""
    cols = []
    for c in range(d):
        for r in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[r, c] = 1.0
            cols.append(rhs(e).reshape(-1, order="F"))
    return np.array(cols).T


def single_atom_generator(gamma, n_bar, m_abs, squeeze_phase=0.0):
    """Hand-written 4x4 generator for one undriven atom.

    Coordinates (rho_ee, rho_eg, rho_ge, rho_gg); |e> is m = +1/2.
    """
    g = gamma
    a = g * (2 * n_bar + 1)
    mp = m_abs * cmath.exp(-1j * squeeze_phase)
    mm = m_abs * cmath.exp(1j * squeeze_phase)
    return np.array([
        [-2 * g * (1 + n_bar), 0, 0, 2 * g * n_bar],
        [0, -a, 2 * g * mp, 0],
        [0, 2 * g * mm, -a, 0],
        [2 * g * (1 + n_bar), 0, 0, -2 * g * n_bar],
    ], dtype=complex)


def single_atom_eigenvalues(gamma, n_bar, m_abs):
    a = gamma * (2 * n_bar + 1)
    return np.array([0.0, -a - 2 * gamma * m_abs, -a + 2 * gamma * m_abs, -2 * a])


def random_density_matrix(d, rng):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_hermitian(d, rng):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (a + a.conj().T) / 2
