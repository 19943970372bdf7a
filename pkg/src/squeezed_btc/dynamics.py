"""Time integration of the master equation and Fourier analysis of traces.

Times are measured in units of 2/(N*Gamma), i.e. the abscissa is
(N*Gamma/2) t, and angular frequencies in units of N*Gamma/2.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import DOP853, RK45
from scipy.ndimage import uniform_filter1d

from . import config
from .errors import DimensionMismatchError, IntegrationError, NumericalError, ParameterError
from .liouvillian import MatrixFreeRHS, ModelParams, build_liouvillian
from .spin_algebra import DensityMatrix, all_down, build_spin_operators

log = logging.getLogger(__name__)

OBSERVABLES = ("Sz_over_N", "Sx_over_N", "Sy_over_N")
_METHODS = {"DOP853": DOP853, "RK45": RK45}


@dataclass
class TimeTrace:
    """Observables sampled on a uniform grid of reduced times."""

    times: np.ndarray
    values: dict
    params: ModelParams
    states: dict = field(default_factory=dict, repr=False)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ParameterError("trace times must be strictly increasing")

    def __getitem__(self, name):
        return self.values[name]


@dataclass(frozen=True)
class FourierPeaks:
    frequencies: np.ndarray
    amplitudes: np.ndarray
    peak_list: list
    resolution: float
    window: str
    transient_cut: float

    @property
    def dominant(self) -> float:
        return self.peak_list[0][0]


def _observable_weights(ops, n_atoms):
    """Row vectors w with <O>/N = w . vec(rho) for column-stacked rho."""
    # Tr[O rho] = sum_ij O_ji rho_ij = vec(O^T) . vec(rho)
    return {
        "Sz_over_N": ops.s_z.T.reshape(-1, order="F") / n_atoms,
        "Sx_over_N": ops.s_x.T.reshape(-1, order="F") / n_atoms,
        "Sy_over_N": ops.s_y.T.reshape(-1, order="F") / n_atoms,
    }


def _hermitize(y, d):
    r = y.reshape((d, d), order="F")
    return ((r + r.conj().T) / 2).reshape(-1, order="F")


def evolve(params: ModelParams, rho0: DensityMatrix | None = None, t_final: float = 150.0,
           sample_dt: float = 0.01, rtol: float | None = None, atol: float | None = None,
           method: str = "DOP853", rhs: str = "assembled", store_at=(),
           hermitize_every: int | None = None, check: bool = True) -> TimeTrace:
    """Integrate drho/dt = L rho from ``rho0`` (default: all atoms down).

    Parameters
    ----------
    t_final, sample_dt : float
        Horizon and sampling step in units of 2/(N*Gamma).
    rhs : {"assembled", "matrix-free"}
        Sparse Liouvillian matvec, or operator products without forming L.
    store_at : sequence of float
        Reduced times at which full states are kept (snapped to the grid).
    """
    rtol = config.RTOL if rtol is None else rtol
    atol = config.ATOL if atol is None else atol
    every = config.HERMITIZE_EVERY if hermitize_every is None else hermitize_every
    if t_final <= 0 or sample_dt <= 0:
        raise ParameterError("t_final and sample_dt must be positive")
    if rtol <= 0 or atol <= 0:
        raise ParameterError("tolerances must be positive")
    if method not in _METHODS:
        raise ParameterError(f"unknown method {method!r}")
    n = params.n_atoms
    d = n + 1
    if rho0 is None:
        rho0 = all_down(n)
    if not isinstance(rho0, DensityMatrix):
        rho0 = DensityMatrix(rho0)
    if rho0.dim != d:
        raise DimensionMismatchError(f"initial state has dimension {rho0.dim}, expected {d}")

    ops = build_spin_operators(n)
    rate = params.collective_rate
    if rhs == "assembled":
        lmat = build_liouvillian(params, ops).matrix.tocsr() / rate
        fun = lambda t, y: lmat @ y  # noqa: E731
    elif rhs == "matrix-free":
        mf = MatrixFreeRHS(params, ops)
        fun = lambda t, y: mf(t, y) / rate  # noqa: E731
    else:
        raise ParameterError(f"unknown rhs {rhs!r}")

    n_samples = int(np.floor(t_final / sample_dt + 1e-9)) + 1
    times = np.arange(n_samples) * sample_dt
    weights = _observable_weights(ops, n)
    wmat = np.vstack([weights[k] for k in OBSERVABLES])
    trace_w = np.zeros(d * d)
    trace_w[np.arange(d) * (d + 1)] = 1.0
    store_idx = {int(round(t / sample_dt)): t for t in store_at}

    samples = np.empty((n_samples, len(OBSERVABLES)))
    traces = np.empty(n_samples)
    states = {}
    y = rho0.data.reshape(-1, order="F").astype(complex)
    cls = _METHODS[method]
    solver = cls(fun, 0.0, y, t_final, rtol=rtol, atol=atol)
    next_i = 0
    n_steps = 0
    max_herm_drift = 0.0

    def record(i, yi):
        samples[i] = (wmat @ yi).real
        traces[i] = (trace_w @ yi).real
        if i in store_idx:
            states[store_idx[i]] = yi.reshape((d, d), order="F").copy()

    record(0, y)
    next_i = 1
    while next_i < n_samples:
        msg = solver.step()
        if solver.status == "failed":
            raise IntegrationError(f"integration failed at t={solver.t:.6g}: {msg}", solver.t,
                                   {"steps": n_steps, "rtol": rtol, "atol": atol})
        n_steps += 1
        t_new = solver.t
        if next_i < n_samples and times[next_i] <= t_new:
            dense = solver.dense_output()
            while next_i < n_samples and times[next_i] <= t_new + 1e-12:
                record(next_i, dense(times[next_i]) if times[next_i] < t_new else solver.y)
                next_i += 1
        if solver.status == "finished":
            break
        if every and n_steps % every == 0:
            y = solver.y
            r = y.reshape((d, d), order="F")
            max_herm_drift = max(max_herm_drift, float(np.max(np.abs(r - r.conj().T))))
            y = _hermitize(y, d)
            solver = cls(fun, solver.t, y, t_final, rtol=rtol, atol=atol,
                         first_step=solver.step_size)
    if next_i < n_samples:
        raise IntegrationError("integrator stopped before the final sample", solver.t)

    trace_dev = float(np.max(np.abs(traces - 1)))
    diagnostics = {
        "steps": n_steps,
        "method": method,
        "rhs": rhs,
        "rtol": rtol,
        "atol": atol,
        "max_trace_deviation": trace_dev,
        "max_hermiticity_drift": max_herm_drift,
        "hermitize_every": every,
    }
    if check and (trace_dev > 1e-7 or max_herm_drift > 1e-8):
        raise NumericalError("trajectory violated trace/hermiticity bounds", diagnostics)
    values = {k: samples[:, i] for i, k in enumerate(OBSERVABLES)}
    return TimeTrace(times, values, params, states, diagnostics)


def fourier_spectrum(trace: TimeTrace | tuple, transient_cut: float = 30.0, window: str = "hann",
                     observable: str = "Sz_over_N", pad_factor: int = 8,
                     min_samples: int = 256, n_peaks: int = 10) -> FourierPeaks:
    """Amplitude spectrum of an observable after ``transient_cut``.

    The mean is removed, a window applied, and peaks are refined by a
    parabola through the three bins around each local maximum.  ``trace``
    may also be a ``(times, values)`` pair.
    """
    if isinstance(trace, TimeTrace):
        t, x = trace.times, np.asarray(trace.values[observable])
    else:
        t, x = (np.asarray(a, dtype=float) for a in trace)
    keep = t >= transient_cut - 1e-12
    t, x = t[keep], x[keep]
    if t.size < min_samples:
        raise ParameterError(f"only {t.size} samples after transient_cut; need {min_samples}")
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-6, atol=1e-12):
        raise ParameterError("fourier_spectrum requires uniform sampling")
    dt = float(dt[0])
    if window == "hann":
        win = np.hanning(t.size)
    elif window == "rectangular":
        win = np.ones(t.size)
    else:
        raise ParameterError(f"unknown window {window!r}")
    n_fft = int(pad_factor) * t.size
    spec = np.fft.rfft((x - x.mean()) * win, n=n_fft)
    amp = 2 * np.abs(spec) / win.sum()
    freqs = 2 * np.pi * np.fft.rfftfreq(n_fft, dt)
    df = freqs[1] - freqs[0]
    peaks = []
    for i in range(1, amp.size - 1):
        if amp[i] > amp[i - 1] and amp[i] >= amp[i + 1]:
            a, b, c = amp[i - 1], amp[i], amp[i + 1]
            denom = a - 2 * b + c
            shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
            peaks.append((float(freqs[i] + shift * df), float(b - 0.25 * (a - c) * shift)))
    peaks.sort(key=lambda p: -p[1])
    return FourierPeaks(freqs, amp, peaks[:n_peaks], 2 * np.pi / (t[-1] - t[0] + dt), window,
                        float(transient_cut))


def oscillation_envelope(trace: TimeTrace | tuple, frequency: float, observable: str = "Sz_over_N"):
    """Amplitude envelope of the component oscillating at ``frequency``.

    Complex demodulation: a one-period moving average removes the slowly
    relaxing baseline, the remainder is shifted by exp(-i w t) and averaged
    over one period again, which also cancels the harmonics.  Samples within
    one period of either end are NaN.
    """
    if isinstance(trace, TimeTrace):
        t, x = trace.times, np.asarray(trace.values[observable], dtype=float)
    else:
        t, x = (np.asarray(a, dtype=float) for a in trace)
    if frequency <= 0:
        raise ParameterError("frequency must be positive")
    dt = t[1] - t[0]
    period = int(round(2 * np.pi / (frequency * dt)))
    if period < 4 or 3 * period > t.size:
        raise ParameterError("trace too short or too coarse for this frequency")
    base = uniform_filter1d(x, period, mode="nearest")
    y = (x - base) * np.exp(-1j * frequency * t)
    z = uniform_filter1d(y.real, period, mode="nearest") + 1j * uniform_filter1d(y.imag, period, mode="nearest")
    env = 2 * np.abs(z)
    env[:period] = np.nan
    env[-period:] = np.nan
    return t, env


def envelope_decay_time(trace: TimeTrace | tuple, frequency: float, t_start: float,
                        t_stop: float | None = None, observable: str = "Sz_over_N") -> float:
    """Exponential decay time of the oscillation envelope by a log-linear fit."""
    t, env = oscillation_envelope(trace, frequency, observable)
    stop = t[-1] if t_stop is None else t_stop
    sel = (t >= t_start) & (t <= stop) & np.isfinite(env) & (env > 0)
    if sel.sum() < 10:
        raise ParameterError("not enough samples in the envelope fit window")
    slope, _ = np.polyfit(t[sel], np.log(env[sel]), 1)
    if slope >= 0:
        return float("inf")
    return float(-1 / slope)
