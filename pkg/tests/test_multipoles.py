import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.special import sph_harm_y

from oracles import random_density_matrix
from squeezed_btc.multipoles import (
    TensorBasis,
    clebsch_gordan,
    clebsch_gordan_squared,
    multipole_components,
    normalized_legendre,
    spherical_harmonic,
    tensor_basis,
    tensor_operator_exact,
)
from squeezed_btc.spin_algebra import build_spin_operators

h = Fraction(1, 2)


@pytest.mark.parametrize("args,expected", [
    ((h, h, h, -h, 1, 0), 1 / math.sqrt(2)),
    ((h, h, h, -h, 0, 0), 1 / math.sqrt(2)),
    ((h, -h, h, h, 0, 0), -1 / math.sqrt(2)),
    ((1, 1, 1, -1, 0, 0), 1 / math.sqrt(3)),
    ((1, 0, 1, 0, 0, 0), -1 / math.sqrt(3)),
    ((1, 1, 1, 0, 2, 1), 1 / math.sqrt(2)),
    ((2, 2, 2, -2, 4, 0), 1 / math.sqrt(70)),
])
def test_tabulated_clebsch_gordan(args, expected):
    assert clebsch_gordan(*args) == pytest.approx(expected, abs=1e-15)


def test_selection_rules():
    assert clebsch_gordan_squared(1, 1, 1, 1, 1, 1) == 0          # m1 + m2 != M
    assert clebsch_gordan_squared(1, 0, 1, 0, 3, 0) == 0          # triangle
    assert clebsch_gordan_squared(1, 0, 1, 0, 1, 0) == 0          # <1 0; 1 0|1 0> = 0
    with pytest.raises(ValueError):
        clebsch_gordan(0.3, 0, 1, 0, 1, 0)


def test_against_sympy():
    sympy_cg = pytest.importorskip("sympy.physics.quantum.cg")
    from sympy import Rational
    rng = np.random.default_rng(5)
    for _ in range(40):
        j1 = Fraction(int(rng.integers(0, 9)), 2)
        j2 = Fraction(int(rng.integers(0, 9)), 2)
        J = abs(j1 - j2) + int(rng.integers(0, int(j1 + j2 - abs(j1 - j2)) + 1))
        m1 = -j1 + int(rng.integers(0, int(2 * j1) + 1))
        M = -J + int(rng.integers(0, int(2 * J) + 1))
        m2 = M - m1
        if abs(m2) > j2:
            continue
        ref = float(sympy_cg.CG(*(Rational(x.numerator, x.denominator) for x in (j1, m1, j2, m2, J, M))).doit())
        assert clebsch_gordan(j1, m1, j2, m2, J, M) == pytest.approx(ref, abs=1e-14)


def test_orthogonality_of_coefficients():
    j1, j2 = Fraction(3, 2), 2
    for J in (Fraction(1, 2), Fraction(5, 2), Fraction(7, 2)):
        for Jp in (Fraction(1, 2), Fraction(5, 2)):
            s = 0.0
            for m1 in np.arange(-1.5, 2):
                for m2 in range(-2, 3):
                    M = Fraction(m1).limit_denominator(2) + m2
                    if abs(M) <= min(J, Jp):
                        s += clebsch_gordan(j1, Fraction(m1).limit_denominator(2), j2, m2, J, M) * \
                            clebsch_gordan(j1, Fraction(m1).limit_denominator(2), j2, m2, Jp, M)
            expected = (2 * J + 1) if J == Jp else 0
            assert s == pytest.approx(float(expected), abs=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3, 6, 9])
def test_lanczos_basis_matches_exact(n):
    basis = TensorBasis(n)
    j = Fraction(n, 2)
    for k in range(n + 1):
        for q in range(-k, k + 1):
            np.testing.assert_allclose(basis.operator(k, q), tensor_operator_exact(j, k, q), atol=2e-15)


def test_large_spin_spot_checks():
    basis = tensor_basis(40)
    for k, q in [(40, 0), (40, 37), (25, -13), (1, 1), (39, 2)]:
        np.testing.assert_allclose(basis.operator(k, q), tensor_operator_exact(20, k, q), atol=1e-13)


def test_orthonormal_at_n100():
    basis = tensor_basis(100)
    for q in (0, 1, 50, 99, 100):
        rows = basis.rows[q]
        np.testing.assert_allclose(rows @ rows.T, np.eye(rows.shape[0]), atol=1e-12)


def test_rank_one_is_spin():
    ops = build_spin_operators(7)
    j = 3.5
    c = math.sqrt(3 / (j * (j + 1) * (2 * j + 1)))
    np.testing.assert_allclose(tensor_basis(7).operator(1, 0), c * ops.s_z.real, atol=1e-14)
    np.testing.assert_allclose(tensor_basis(7).operator(1, 1), -c / math.sqrt(2) * ops.s_plus.real, atol=1e-14)


def test_multipoles_reconstruct_state():
    n = 8
    rho = random_density_matrix(n + 1, np.random.default_rng(2))
    rkq = multipole_components(rho)
    basis = tensor_basis(n)
    back = sum(rkq[k, n + q] * basis.operator(k, q) for k in range(n + 1) for q in range(-k, k + 1))
    np.testing.assert_allclose(back, rho, atol=1e-13)
    # rho_00 = 1/sqrt(2j+1) for any normalized state
    assert rkq[0, n] == pytest.approx(1 / math.sqrt(n + 1))


def test_spherical_harmonics_match_scipy():
    theta = np.linspace(0, np.pi, 13)
    phi = np.linspace(0, 2 * np.pi, 7)
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    for k in (0, 1, 2, 7, 30):
        for q in sorted({0, 1, -1, k, -k, k // 2}):
            if abs(q) <= k:
                np.testing.assert_allclose(spherical_harmonic(k, q, th, ph), sph_harm_y(k, q, th, ph),
                                           atol=1e-12)


def test_legendre_normalization():
    x, w = np.polynomial.legendre.leggauss(80)
    p = normalized_legendre(20, x)
    for q in (0, 3, 20):
        gram = 2 * np.pi * (p[:, q:, q].T * w) @ p[:, q:, q]
        np.testing.assert_allclose(gram, np.eye(21 - q), atol=1e-12)
