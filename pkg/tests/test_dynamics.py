import numpy as np
import pytest
from scipy.linalg import expm

from squeezed_btc.dynamics import (
    TimeTrace,
    envelope_decay_time,
    evolve,
    fourier_spectrum,
    oscillation_envelope,
)
from squeezed_btc.errors import DimensionMismatchError, ParameterError
from squeezed_btc.liouvillian import ModelParams, build_liouvillian, vec
from squeezed_btc.spin_algebra import all_down, build_spin_operators, dicke_state


def test_single_atom_decay():
    # |e> relaxes with <Sz> = -1/2 + exp(-2 Gamma t); reduced time is Gamma t / 2
    p = ModelParams(1, 0.0, 0.6)
    tr = evolve(p, dicke_state(1, 0.5), t_final=2.0, sample_dt=0.05)
    np.testing.assert_allclose(tr["Sz_over_N"], -0.5 + np.exp(-4 * tr.times), atol=1e-8)
    np.testing.assert_allclose(tr["Sx_over_N"], 0, atol=1e-12)


def test_matches_matrix_exponential():
    p = ModelParams.from_drive_ratio(6, 1.4, 0.5)
    L = build_liouvillian(p).matrix.toarray() / p.collective_rate
    ops = build_spin_operators(6)
    tr = evolve(p, t_final=3.0, sample_dt=0.5, store_at=(1.5, 3.0))
    y0 = vec(all_down(6).data)
    for i, t in enumerate(tr.times):
        r = (expm(L * t) @ y0).reshape(7, 7, order="F")
        assert tr["Sz_over_N"][i] == pytest.approx(np.trace(ops.s_z @ r).real / 6, abs=1e-7)
        assert tr["Sx_over_N"][i] == pytest.approx(np.trace(ops.s_x @ r).real / 6, abs=1e-7)
    ref = (expm(L * 3.0) @ y0).reshape(7, 7, order="F")
    np.testing.assert_allclose(tr.states[3.0], ref, atol=1e-7)


def test_integrators_and_rhs_forms_agree():
    p = ModelParams.from_drive_ratio(8, 1.8, 0.2)
    a = evolve(p, t_final=5.0, sample_dt=0.1)
    b = evolve(p, t_final=5.0, sample_dt=0.1, method="RK45")
    c = evolve(p, t_final=5.0, sample_dt=0.1, rhs="matrix-free")
    for key in ("Sz_over_N", "Sx_over_N", "Sy_over_N"):
        np.testing.assert_allclose(a[key], b[key], atol=1e-6)
        np.testing.assert_allclose(a[key], c[key], atol=1e-9)


def test_diagnostics_reported():
    tr = evolve(ModelParams.from_drive_ratio(5, 1.2, 0.8), t_final=4.0, sample_dt=0.1)
    d = tr.diagnostics
    assert d["max_trace_deviation"] < 1e-9
    assert d["max_hermiticity_drift"] < 1e-9
    assert d["steps"] > 0 and d["method"] == "DOP853"
    assert tr.times.size == 41 and tr.times[-1] == pytest.approx(4.0)


def test_argument_checks():
    p = ModelParams(3, 1.0, 1.0)
    with pytest.raises(ParameterError):
        evolve(p, t_final=-1)
    with pytest.raises(ParameterError):
        evolve(p, method="Euler")
    with pytest.raises(ParameterError):
        evolve(p, rhs="magic")
    with pytest.raises(DimensionMismatchError):
        evolve(p, all_down(4))
    with pytest.raises(ParameterError):
        TimeTrace(np.array([0.0, 1.0, 0.5]), {}, p)


def synthetic(freq=2.98, rate=0.045, t_final=150.0, dt=0.01):
    t = np.arange(0, t_final + dt / 2, dt)
    x = (-0.01 - 0.2 * np.exp(-0.1 * t)
         + 0.3 * np.exp(-rate * t) * np.cos(freq * t + 0.4)
         + 0.02 * np.exp(-2 * rate * t) * np.cos(2 * freq * t))
    return t, x


def test_fourier_peak_location():
    t, x = synthetic()
    peaks = fourier_spectrum((t, x), transient_cut=30)
    assert abs(peaks.dominant - 2.98) < 0.1 * peaks.resolution
    assert peaks.resolution == pytest.approx(2 * np.pi / 120.01, rel=1e-6)
    rect = fourier_spectrum((t, x), transient_cut=30, window="rectangular")
    assert abs(rect.dominant - 2.98) < 0.2 * rect.resolution


def test_fourier_input_checks():
    t, x = synthetic(t_final=10)
    with pytest.raises(ParameterError):
        fourier_spectrum((t, x), transient_cut=9.0)
    t2 = np.sort(np.random.default_rng(0).uniform(0, 100, 5000))
    with pytest.raises(ParameterError):
        fourier_spectrum((t2, np.cos(t2)), transient_cut=0)
    t, x = synthetic()
    with pytest.raises(ParameterError):
        fourier_spectrum((t, x), window="kaiser")


def test_envelope_decay_recovers_rate():
    for rate in (0.0377, 0.045, 0.057):
        t, x = synthetic(rate=rate)
        tau = envelope_decay_time((t, x), 2.98, 30, 140)
        assert tau == pytest.approx(1 / rate, rel=1e-3)


def test_envelope_edges_are_masked():
    t, x = synthetic()
    _, env = oscillation_envelope((t, x), 2.98)
    assert np.isnan(env[0]) and np.isnan(env[-1])
    assert np.all(np.isfinite(env[500:-500]))
    with pytest.raises(ParameterError):
        oscillation_envelope((t, x), 0.0)
