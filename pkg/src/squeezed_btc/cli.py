"""Command-line front end.

Every run is described by one JSON document (``--config``), optionally
amended with ``--set section.key=value``.  Results go to an output directory
together with a ``manifest.json`` listing each file and its SHA-256.

Exit codes: 0 success, 2 configuration error, 3 numerical failure (details
in ``diagnostics.json``), 4 resource cap exceeded.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, config
from .dynamics import OBSERVABLES, evolve, fourier_spectrum
from .errors import NumericalError, ParameterError, SizeError
from .liouvillian import ModelParams, build_liouvillian
from .observables import occupation_distribution, spin_wigner, transverse_variances, write_wigner_binary
from .spectral import classify_gaps, full_spectrum, gap_spectrum, low_lying_spectrum, steady_state
from .spin_algebra import build_spin_operators, expectation
from .sweeps import DEFAULT_SIZE_LADDER, SweepPlan, finite_size_scan, format_value, sweep_drive, sweep_squeeze

log = logging.getLogger("squeezed_btc")

TASKS = ("spectrum", "steady", "evolve", "fourier", "wigner", "sweep-drive", "sweep-squeeze", "scan-size")
OUTPUT_ROOT_ENV = "SQUEEZED_BTC_OUTPUT_ROOT"

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CAP = 0, 2, 3, 4

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}


def _section(props: dict) -> dict:
    return {"type": "object", "additionalProperties": False, "properties": props}


SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["task", "model"],
    "properties": {
        "task": {"enum": list(TASKS)},
        "output": {"type": "string"},
        "workers": {"type": "integer", "minimum": 1},
        "model": {
            **_section({
                "n_atoms": {"type": "integer", "minimum": 1},
                "rabi": _nonneg,
                "gamma": _pos,
                "drive_ratio": _nonneg,
                "n_bar": _nonneg,
                "m_abs": _nonneg,
                "perfect_squeezing": {"type": "boolean"},
                "drive_phase": _num,
                "squeeze_phase": _num,
            }),
            "required": ["n_atoms"],
        },
        "spectrum": _section({
            "method": {"enum": ["auto", "dense", "shift-invert"]},
            "k": {"type": "integer", "minimum": 1},
            "shift_re": _num,
            "shift_im": _num,
        }),
        "evolve": _section({
            "t_final": _pos,
            "sample_dt": _pos,
            "rtol": _pos,
            "atol": _pos,
            "method": {"enum": ["DOP853", "RK45"]},
            "rhs": {"enum": ["assembled", "matrix-free"]},
        }),
        "fourier": _section({
            "transient_cut": _nonneg,
            "window": {"enum": ["hann", "rectangular"]},
            "observable": {"enum": list(OBSERVABLES)},
            "trace": {"type": "string"},
        }),
        "wigner": _section({
            "n_theta": {"type": "integer", "minimum": 16},
            "n_phi": {"type": "integer", "minimum": 16},
            "format": {"enum": ["csv", "bin", "both"]},
        }),
        "sweep": _section({
            "points": {"type": "array", "items": _num, "minItems": 1},
            "outputs": {"type": "array", "items": {"enum": ["steady", "gaps", "spectrum"]}},
            "k": {"type": "integer", "minimum": 1},
        }),
        "tolerances": _section({
            "im_zero": _pos,
            "zero_eigenvalue": _pos,
            "eig_residual": _pos,
            "dense_dim_cap": {"type": "integer", "minimum": 1},
        }),
    },
}


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration


def _parse_override(item: str):
    if "=" not in item:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def load_config(path=None, overrides=(), task=None) -> dict:
    cfg: dict = {}
    if path:
        try:
            with open(path) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    for item in overrides:
        keys, value = _parse_override(item)
        node = cfg
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set {item!r}: {k} is not a section")
        node[keys[-1]] = value
    if task:
        cfg["task"] = task
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from exc
    return cfg


def model_from_config(m: dict) -> ModelParams:
    """Either (rabi, gamma) or drive_ratio with N*Gamma/2 = 1."""
    n = m["n_atoms"]
    extra = {k: m[k] for k in ("drive_phase", "squeeze_phase") if k in m}
    perfect = m.get("perfect_squeezing", "m_abs" not in m)
    if "drive_ratio" in m:
        if "rabi" in m or "gamma" in m:
            raise ConfigError("give either drive_ratio or (rabi, gamma), not both")
        p = ModelParams.from_drive_ratio(n, m["drive_ratio"], m.get("n_bar", 0.0), perfect_squeezing=perfect,
                                         **extra)
    else:
        p = ModelParams(n, m.get("rabi", 0.0), m.get("gamma", 2.0 / n), m.get("n_bar", 0.0),
                        m.get("m_abs", 0.0), perfect_squeezing=perfect, **extra)
    if "m_abs" in m and perfect:
        raise ConfigError("m_abs is set but perfect_squeezing is true")
    return p


def _apply_tolerances(tol: dict) -> None:
    names = {
        "im_zero": "IM_ZERO_TOLERANCE",
        "zero_eigenvalue": "ZERO_EIGENVALUE_TOLERANCE",
        "eig_residual": "EIG_RESIDUAL_TOL",
        "dense_dim_cap": "DENSE_DIM_CAP",
    }
    for key, attr in names.items():
        if key in tol:
            setattr(config, attr, tol[key])


# ---------------------------------------------------------------------------
# writers


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([format_value(v) for v in r])


def write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_to_builtin)
        fh.write("\n")


def _to_builtin(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return {"re": o.real, "im": o.imag}
    raise TypeError(type(o).__name__)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# tasks; each returns (files written, summary dict)


def _task_spectrum(cfg, params, out):
    opts = cfg.get("spectrum", {})
    L = build_liouvillian(params)
    method = opts.get("method", "auto")
    if method == "dense" or (method == "auto" and L.dim <= config.DENSE_DIM_CAP):
        res = full_spectrum(L)
    elif "shift_re" in opts or "shift_im" in opts:
        res = low_lying_spectrum(L, k=opts.get("k", 16),
                                 shift=complex(opts.get("shift_re", 0.0), opts.get("shift_im", 0.0)))
    else:
        res = gap_spectrum(L, k=opts.get("k", 16))
    units = "NGamma/2"
    write_csv(out / "spectrum.csv", ["re", "im", "units"],
              [(v.real, v.imag, units) for v in res.eigenvalues])
    gaps = res.gaps.to_dict()
    gaps.update({"method": res.method, "units": units, "n_eigenvalues": int(res.eigenvalues.size),
                 "zero_eigenvalue_tolerance": config.ZERO_EIGENVALUE_TOLERANCE})
    write_json(out / "gaps.json", gaps)
    return ["spectrum.csv", "gaps.json"], gaps


def _steady_observables(params):
    L = build_liouvillian(params)
    rho = steady_state(L)
    ops = build_spin_operators(params.n_atoms)
    n = params.n_atoms
    vx, vy = transverse_variances(rho, ops)
    occ = occupation_distribution(rho)
    obs = {
        "Sz_over_N": expectation(ops.s_z, rho).real / n,
        "Sx_over_N": expectation(ops.s_x, rho).real / n,
        "Sy_over_N": expectation(ops.s_y, rho).real / n,
        "var_Sx": vx,
        "var_Sy": vy,
        "participation_ratio": occ.participation_ratio,
        "occupation_m": occ.m_values.tolist(),
        "occupation_p": occ.probabilities.tolist(),
        "min_eigenvalue": float(np.linalg.eigvalsh(rho.data).min()),
    }
    return rho, obs


def _task_steady(cfg, params, out):
    _, obs = _steady_observables(params)
    obs["params"] = params.to_dict()
    write_json(out / "steady_obs.json", obs)
    return ["steady_obs.json"], {k: obs[k] for k in ("Sz_over_N", "Sx_over_N", "Sy_over_N")}


def _run_evolve(cfg, params):
    opts = cfg.get("evolve", {})
    return evolve(params, t_final=opts.get("t_final", 150.0), sample_dt=opts.get("sample_dt", 0.01),
                  rtol=opts.get("rtol"), atol=opts.get("atol"), method=opts.get("method", "DOP853"),
                  rhs=opts.get("rhs", "assembled"))


def _write_trace(out, trace):
    cols = [trace.times] + [trace.values[k] for k in OBSERVABLES]
    write_csv(out / "trace.csv", ["t", *OBSERVABLES], zip(*cols))


def _task_evolve(cfg, params, out):
    trace = _run_evolve(cfg, params)
    _write_trace(out, trace)
    return ["trace.csv"], trace.diagnostics


def _read_trace(path):
    data = np.genfromtxt(path, delimiter=",", names=True)
    return data


def _task_fourier(cfg, params, out):
    opts = cfg.get("fourier", {})
    observable = opts.get("observable", "Sz_over_N")
    files = []
    if "trace" in opts:
        data = _read_trace(opts["trace"])
        series = (data["t"], data[observable])
        diag = {"trace": opts["trace"]}
    else:
        trace = _run_evolve(cfg, params)
        _write_trace(out, trace)
        files.append("trace.csv")
        series = (trace.times, trace.values[observable])
        diag = trace.diagnostics
    peaks = fourier_spectrum(series, transient_cut=opts.get("transient_cut", 30.0),
                             window=opts.get("window", "hann"))
    write_csv(out / "fourier.csv", ["rank", "frequency", "amplitude", "resolution"],
              [(i + 1, f, a, peaks.resolution) for i, (f, a) in enumerate(peaks.peak_list)])
    write_csv(out / "fourier_spectrum.csv", ["frequency", "amplitude"], zip(peaks.frequencies, peaks.amplitudes))
    files += ["fourier.csv", "fourier_spectrum.csv"]
    return files, {"dominant_frequency": peaks.dominant, "resolution": peaks.resolution, **diag}


def _task_wigner(cfg, params, out):
    opts = cfg.get("wigner", {})
    rho, _ = _steady_observables(params)
    wmap = spin_wigner(rho, n_theta=opts.get("n_theta"), n_phi=opts.get("n_phi", 360))
    fmt = opts.get("format", "both")
    files = []
    if fmt in ("csv", "both"):
        th, ph = np.meshgrid(wmap.theta_grid, wmap.phi_grid, indexing="ij")
        write_csv(out / "wigner.csv", ["theta", "phi", "W"], zip(th.ravel(), ph.ravel(), wmap.values.ravel()))
        files.append("wigner.csv")
    if fmt in ("bin", "both"):
        write_wigner_binary(out / "wigner.bin", wmap)
        files.append("wigner.bin")
    regions = wmap.negative_regions(1e-4)
    return files, {"integral": wmap.integral(), "min": float(wmap.values.min()),
                   "negative_regions": len(regions), "max_imag_residue": wmap.max_imag_residue}


def _task_sweep(cfg, params, out, axis):
    opts = cfg.get("sweep", {})
    workers = cfg.get("workers", 1)
    if axis == "size":
        points = tuple(int(p) for p in opts.get("points", DEFAULT_SIZE_LADDER))
        plan = SweepPlan("size", points, params, ("spectrum",), workers, opts.get("k", 24))
        table, _ = finite_size_scan(plan)
    else:
        if "points" not in opts:
            raise ConfigError("sweep.points is required for this task")
        default = ("steady", "gaps") if axis == "drive" else ("gaps",)
        plan = SweepPlan(axis, tuple(opts["points"]), params, tuple(opts.get("outputs", default)), workers,
                         opts.get("k", 16))
        table = sweep_drive(plan) if axis == "drive" else sweep_squeeze(plan)
    table.write(out / "sweep.csv", out / "sweep.meta.json")
    return ["sweep.csv", "sweep.meta.json"], {"rows": len(table.rows), "failed": len(table.failed)}


_TASKS = {
    "spectrum": _task_spectrum,
    "steady": _task_steady,
    "evolve": _task_evolve,
    "fourier": _task_fourier,
    "wigner": _task_wigner,
    "sweep-drive": lambda c, p, o: _task_sweep(c, p, o, "drive"),
    "sweep-squeeze": lambda c, p, o: _task_sweep(c, p, o, "n_bar"),
    "scan-size": lambda c, p, o: _task_sweep(c, p, o, "size"),
}


def _write_manifest(out: Path, cfg, files, status, summary):
    entries = [{"name": f, "sha256": _sha256(out / f), "bytes": (out / f).stat().st_size} for f in files]
    write_json(out / "manifest.json", {
        "task": cfg.get("task"),
        "config": cfg,
        "exit_status": status,
        "code_version": __version__,
        "files": entries,
        "summary": summary,
    })


def run(cfg: dict, out: Path) -> int:
    """Execute a validated config, writing results and a manifest to ``out``."""
    cfg = copy.deepcopy(cfg)
    original = {k: getattr(config, k) for k in ("IM_ZERO_TOLERANCE", "ZERO_EIGENVALUE_TOLERANCE",
                                               "EIG_RESIDUAL_TOL", "DENSE_DIM_CAP")}
    out.mkdir(parents=True, exist_ok=True)
    try:
        _apply_tolerances(cfg.get("tolerances", {}))
        try:
            params = model_from_config(cfg["model"])
        except ParameterError as exc:
            raise ConfigError(str(exc)) from exc
        try:
            files, summary = _TASKS[cfg["task"]](cfg, params, out)
        except SizeError as exc:
            write_json(out / "diagnostics.json", {"error": type(exc).__name__, "message": str(exc)})
            _write_manifest(out, cfg, ["diagnostics.json"], EXIT_CAP, {})
            log.error("%s", exc)
            return EXIT_CAP
        except (NumericalError, np.linalg.LinAlgError, ArithmeticError) as exc:
            diag = {"error": type(exc).__name__, "message": str(exc),
                    "diagnostics": getattr(exc, "diagnostics", {})}
            write_json(out / "diagnostics.json", diag)
            _write_manifest(out, cfg, ["diagnostics.json"], EXIT_NUMERICAL, {})
            log.error("numerical failure: %s", exc)
            return EXIT_NUMERICAL
        except ParameterError as exc:
            raise ConfigError(str(exc)) from exc
        _write_manifest(out, cfg, files, EXIT_OK, summary)
        return EXIT_OK
    finally:
        for k, v in original.items():
            setattr(config, k, v)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="squeezed-btc",
        description="Driven collective atoms in a squeezed vacuum: spectra, steady states, dynamics, sweeps.",
    )
    p.add_argument("task", nargs="?", choices=TASKS, help="task to run (overrides the config's task)")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry, e.g. model.n_bar=0.8 (value parsed as JSON)")
    p.add_argument("--workers", type=int, help="parallel workers for sweeps")
    p.add_argument("--out", help=f"output directory (default: ${OUTPUT_ROOT_ENV}/<task> or ./runs/<task>)")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = list(args.overrides)
    if args.workers is not None:
        overrides.append(f"workers={args.workers}")
    try:
        cfg = load_config(args.config, overrides, args.task)
        if args.out:
            out = Path(args.out)
        elif "output" in cfg:
            out = Path(cfg["output"])
        else:
            out = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / cfg["task"]
        return run(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
