"""Parameter scans over drive strength, squeezing and atom number."""
from __future__ import annotations

import csv
import datetime as _dt
import json
import logging
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import __version__, config
from .errors import ParameterError
from .liouvillian import ModelParams, build_liouvillian
from .observables import occupation_distribution, transverse_variances
from .spectral import classify_gaps, full_spectrum, gap_spectrum, low_lying_spectrum, merge_spectra, steady_state
from .spin_algebra import build_spin_operators, expectation

log = logging.getLogger(__name__)

AXES = ("drive", "n_bar", "size")
OUTPUTS = ("steady", "gaps", "spectrum")
DEFAULT_SIZE_LADDER = (10, 20, 40, 80)


@dataclass(frozen=True)
class SweepPlan:
    """What to scan and what to compute at each point.

    ``fixed`` supplies every parameter not on the scanned axis.  For the
    ``drive`` axis points are 2|Omega|/(N Gamma); for ``size`` the drive
    ratio and N*Gamma/2 of ``fixed`` are held constant (Gamma ~ 1/N).
    """

    axis: str
    points: tuple
    fixed: ModelParams
    outputs: tuple = ("steady", "gaps")
    workers: int = 1
    k: int = 16
    n_re: int = 6
    n_im: int = 12

    def __post_init__(self):
        if self.axis not in AXES:
            raise ParameterError(f"axis must be one of {AXES}, got {self.axis!r}")
        pts = tuple(self.points)
        if not pts:
            raise ParameterError("sweep needs at least one point")
        if list(pts) != sorted(pts):
            raise ParameterError("sweep points must be sorted")
        if self.axis == "size" and any(int(p) != p or p < 1 for p in pts):
            raise ParameterError("size sweep points must be positive integers")
        bad = set(self.outputs) - set(OUTPUTS)
        if bad:
            raise ParameterError(f"unknown outputs {sorted(bad)}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "outputs", tuple(self.outputs))

    def params_at(self, value) -> ModelParams:
        f = self.fixed
        rate = f.collective_rate
        if self.axis == "drive":
            return f.with_(rabi=float(value) * rate)
        if self.axis == "n_bar":
            return f.with_(n_bar=float(value), perfect_squeezing=True)
        n = int(value)
        return f.with_(n_atoms=n, gamma=2 * rate / n, rabi=f.drive_ratio * rate)

    def to_dict(self) -> dict:
        return {
            "axis": self.axis,
            "points": list(self.points),
            "fixed": self.fixed.to_dict(),
            "perfect_squeezing": self.fixed.perfect_squeezing,
            "outputs": list(self.outputs),
            "workers": self.workers,
            "k": self.k,
        }


@dataclass
class SweepTable:
    rows: list
    metadata: dict = field(default_factory=dict)

    def column(self, name):
        return np.array([r.get(name, np.nan) if r.get(name) is not None else np.nan for r in self.rows],
                        dtype=float)

    @property
    def failed(self):
        return [r for r in self.rows if r.get("error")]

    def columns(self) -> list:
        cols: list = []
        for r in self.rows:
            for key in r:
                if key not in cols and not isinstance(r[key], (list, tuple, np.ndarray)):
                    cols.append(key)
        return cols

    def to_csv(self, path) -> None:
        cols = self.columns()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in self.rows:
                w.writerow([format_value(r.get(c)) for c in cols])

    def write(self, csv_path, meta_path) -> None:
        self.to_csv(csv_path)
        with open(meta_path, "w") as fh:
            json.dump(self.metadata, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")


def format_value(v) -> str:
    """CSV cell text: 17 significant digits for floats, empty for missing."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else f"{float(v):.16e}"
    return str(v)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not JSON serializable: {type(o)}")


def _metadata(plan: SweepPlan, extra=None) -> dict:
    meta = {
        "plan": plan.to_dict(),
        "code_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "tolerances": {
            "im_zero_tolerance": config.IM_ZERO_TOLERANCE,
            "zero_eigenvalue_tolerance": config.ZERO_EIGENVALUE_TOLERANCE,
            "eig_residual_tol": config.EIG_RESIDUAL_TOL,
        },
        "units": {"rates": "NGamma/2", "drive": "2|Omega|/(N Gamma)"},
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    if extra:
        meta.update(extra)
    return meta


def point_record(params: ModelParams, outputs, k: int = 16) -> dict:
    """All requested diagnostics for one parameter point."""
    rec = {f"param_{key}": val for key, val in params.to_dict().items()}
    rec["drive_ratio"] = params.drive_ratio
    L = build_liouvillian(params)
    if "steady" in outputs:
        ops = build_spin_operators(params.n_atoms)
        rho = steady_state(L, check_unique=False)
        n = params.n_atoms
        rec["Sz_over_N"] = expectation(ops.s_z, rho).real / n
        rec["Sx_over_N"] = expectation(ops.s_x, rho).real / n
        rec["Sy_over_N"] = expectation(ops.s_y, rho).real / n
        rec["var_Sx"], rec["var_Sy"] = transverse_variances(rho, ops)
        rec["participation_ratio"] = occupation_distribution(rho).participation_ratio
    if "gaps" in outputs or "spectrum" in outputs:
        spec = gap_spectrum(L, k=k)
        g = classify_gaps(spec)
        rec["delta_1"], rec["delta_2"], rec["delta_omega"] = g.delta_1, g.delta_2, g.delta_omega
        if "spectrum" in outputs:
            rec["eigenvalues"] = [complex(v) for v in spec.eigenvalues]
    return rec


def _task(args):
    value, params, outputs, k = args
    try:
        rec = point_record(params, outputs, k)
        rec["error"] = ""
    except Exception as exc:  # failures are data; a sweep never aborts
        log.warning("sweep point %s failed: %s", value, exc)
        rec = {f"param_{key}": val for key, val in params.to_dict().items()}
        rec["error"] = f"{type(exc).__name__}: {exc}"
    rec["value"] = value
    return rec


def run_plan(plan: SweepPlan) -> SweepTable:
    tasks = [(v, plan.params_at(v), plan.outputs, plan.k) for v in plan.points]
    if plan.workers > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            rows = list(pool.map(_task, tasks))
    else:
        rows = [_task(t) for t in tasks]
    rows.sort(key=lambda r: r["value"])
    rows =[{"value": r["value"], **{k: v for k, v in r.items() if k != "value"}} for r in rows]
    return SweepTable(rows, _metadata(plan))


def sweep_drive(plan: SweepPlan) -> SweepTable:
    if plan.axis != "drive":
        raise ParameterError("sweep_drive needs a plan with axis='drive'")
    return run_plan(plan)


def sweep_squeeze(plan: SweepPlan) -> SweepTable:
    if plan.axis != "n_bar":
        raise ParameterError("sweep_squeeze needs a plan with axis='n_bar'")
    if "gaps" not in plan.outputs:
        plan = SweepPlan(plan.axis, plan.points, plan.fixed, plan.outputs + ("gaps",), plan.workers, plan.k)
    return run_plan(plan)


# ---------------------------------------------------------------------------
# finite-size scaling


def size_spectrum(params: ModelParams, n_needed: int = 18, k: int = 24, max_bands: int = 12):
    """Low-lying eigenvalues for the finite-size scan.

    Dense below the dense cap.  Otherwise shift-invert windows at the origin
    and on the imaginary axis at multiples of the oscillation frequency,
    added until a band's slowest mode lies beyond the ``n_needed``-th
    smallest |Re| collected so far (bands are increasingly damped).
    """
    L = build_liouvillian(params)
    if L.dim <= config.DENSE_DIM_CAP:
        return full_spectrum(L).eigenvalues
    merged = gap_spectrum(L, k=k, k_band=k)
    dw = classify_gaps(merged).delta_omega
    if not dw:
        return merged.eigenvalues
    for n in range(2, max_bands + 1):
        band = low_lying_spectrum(L, k=k, shift=1j * n * dw)
        conj = type(band)(np.conj(band.eigenvalues), band.method, band.n_requested, band.gaps)
        merged = merge_spectra(merged, band, conj)
        nz = np.sort(np.abs(merged.eigenvalues.real[np.abs(merged.eigenvalues) > config.ZERO_EIGENVALUE_TOLERANCE]))
        threshold = nz[n_needed - 1] if nz.size >= n_needed else np.inf
        if np.min(np.abs(band.eigenvalues.real)) > threshold:
            break
    return merged.eigenvalues


def low_lying_parts(eigenvalues, n_re: int = 6, n_im: int = 12, zero_tol: float | None = None,
                    im_tol: float | None = None):
    """|Re| of the first ``n_re`` and |Im| of the first ``n_im`` nonzero eigenvalues.

    Ordering is by ascending |Re|; imaginary parts skip purely real modes.
    """
    zero_tol = config.ZERO_EIGENVALUE_TOLERANCE if zero_tol is None else zero_tol
    im_tol = config.IM_ZERO_TOLERANCE if im_tol is None else im_tol
    from .spectral import sort_eigenvalues

    vals = sort_eigenvalues(eigenvalues)
    vals = vals[np.abs(vals) > zero_tol]
    re = np.abs(vals.real[:n_re])
    im_vals = vals[np.abs(vals.imag) > im_tol]
    im = np.abs(im_vals.imag[:n_im])
    return re, im, vals


@dataclass
class BranchFit:
    """Linear fit |Re lambda| = intercept + slope / N along one tracked branch."""

    branch: int
    n_values: list
    values: list
    imag: list
    slope: float
    intercept: float
    rms_residual: float
    intercept_stderr: float
    oscillatory: bool
    ambiguous: bool

    def extrapolates_to_zero(self, factor: float = 2.0) -> bool:
        return abs(self.intercept) <= factor * self.rms_residual


def track_branches(spectra: dict, n_track: int = 6, radius: float | None = None):
    """Follow the slowest modes across system sizes.

    Branches are seeded from the ``n_track`` smallest |Re| at the largest N
    (one representative per conjugate pair) and continued towards smaller N
    by minimum-cost assignment in the scaled plane (N |Re|, |Im|), where a
    1/N branch is stationary.  A step longer than ``radius`` (default half
    the oscillation frequency) ends the branch; a second candidate inside
    the radius marks it ambiguous.
    """
    sizes = sorted(spectra, reverse=True)
    tol_im = config.IM_ZERO_TOLERANCE

    def reps(n):
        v = np.asarray(spectra[n], dtype=complex)
        v = v[(np.abs(v) > config.ZERO_EIGENVALUE_TOLERANCE) & (v.imag >= -tol_im)]
        v = v[np.argsort(np.abs(v.real), kind="stable")]
        return v, n * np.abs(v.real) + 1j * np.abs(v.imag)

    _, _, ordered = low_lying_parts(spectra[sizes[0]], n_track, 0)
    seeds = ordered[:n_track]
    seeds = seeds[seeds.imag >= -tol_im]
    if radius is None:
        g = classify_gaps(spectra[sizes[0]])
        radius = 0.5 * g.delta_omega if g.delta_omega else 0.5
    n0 = sizes[0]
    branches = [[(n0, complex(x))] for x in seeds]
    ambiguous = [False] * len(branches)
    alive = list(range(len(branches)))
    for n in sizes[1:]:
        vals, z = reps(n)
        pool = slice(0, min(z.size, 3 * n_track + 10))
        vals, z = vals[pool], z[pool]
        if not alive or z.size == 0:
            break
        prev = np.array([n_prev * abs(b[-1][1].real) + 1j * abs(b[-1][1].imag)
                         for b in (branches[i] for i in alive) for n_prev in [b[-1][0]]])
        cost = np.abs(prev[:, None] - z[None, :])
        rows, cols = linear_sum_assignment(cost)
        still = []
        for r, c in zip(rows, cols):
            bi = alive[r]
            if cost[r, c] > radius:
                ambiguous[bi] = True
                continue
            if np.count_nonzero(cost[r] <= radius) > 1:
                ambiguous[bi] = True
            branches[bi].append((n, complex(vals[c])))
            still.append(bi)
        alive = still
    for b in branches:
        b.reverse()
    return branches, ambiguous


def fit_branch(branch, index: int, ambiguous: bool = False) -> BranchFit:
    ns = [n for n, _ in branch]
    vals = [abs(v.real) for _, v in branch]
    x = 1 / np.asarray(ns, dtype=float)
    y = np.asarray(vals)
    a = np.vstack([np.ones_like(x), x]).T
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = y - a @ coef
    rms = float(np.sqrt(np.mean(resid**2)))
    dof = max(len(x) - 2, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(a.T @ a)
    osc = all(abs(v.imag) > config.IM_ZERO_TOLERANCE for _, v in branch)
    return BranchFit(index, ns, vals, [abs(v.imag) for _, v in branch], float(coef[1]), float(coef[0]),
                     rms, float(math.sqrt(max(cov[0, 0], 0.0))), osc, ambiguous)


def finite_size_scan(plan: SweepPlan):
    """Per-N low-lying eigenvalue parts plus 1/N fits along tracked branches.

    Returns ``(table, fits)``; rows hold ``re_1..re_6`` and ``im_1..im_12``.
    """
    if plan.axis != "size":
        raise ParameterError("finite_size_scan needs a plan with axis='size'")
    spectra = {}
    rows = []
    for n in plan.points:
        params = plan.params_at(n)
        row = {"value": int(n)}
        row.update({f"param_{k}": v for k, v in params.to_dict().items()})
        row["drive_ratio"] = params.drive_ratio
        try:
            vals = size_spectrum(params, n_needed=plan.n_re + plan.n_im, k=max(plan.k, 24))
            re, im, _ = low_lying_parts(vals, plan.n_re, plan.n_im)
            for i in range(plan.n_re):
                row[f"re_{i + 1}"] = float(re[i]) if i < re.size else None
            for i in range(plan.n_im):
                row[f"im_{i + 1}"] = float(im[i]) if i < im.size else None
            g = classify_gaps(vals)
            row["delta_1"], row["delta_2"], row["delta_omega"] = g.delta_1, g.delta_2, g.delta_omega
            row["error"] = ""
            spectra[int(n)] = vals
        except Exception as exc:
            log.warning("size %s failed: %s", n, exc)
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    fits = []
    if len(spectra) >= 2:
        branches, amb = track_branches(spectra, n_track=plan.n_re)
        fits = [fit_branch(b, i, a) for i, (b, a) in enumerate(zip(branches, amb))]
    for row in rows:
        row["ambiguous_branch"] = any(f.ambiguous and row["value"] in f.n_values for f in fits)
    extra = {
        "size_ladder": list(plan.points),
        "branch_fits": [
            {
                "branch": f.branch,
                "oscillatory": f.oscillatory,
                "n_values": f.n_values,
                "abs_re": f.values,
                "abs_im": f.imag,
                "slope": f.slope,
                "intercept": f.intercept,
                "rms_residual": f.rms_residual,
                "intercept_stderr": f.intercept_stderr,
                "ambiguous": f.ambiguous,
            }
            for f in fits
        ],
    }
    return SweepTable(rows, _metadata(plan, extra)), fits
