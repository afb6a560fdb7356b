"""Experiment harness: ``wickspde <command> --config <path>``.

Configs are INI documents with one section per module. Every key is typed
and unknown keys are rejected, so a typo never silently falls back to a
default. Each command maps onto one verifiable statement and writes a
deterministic set of CSV/JSON artifacts.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import __version__, _rng
from .errors import ConfigError, ConstraintError, EnsembleTooSmallError, UnsupportedSpecError, WickSPDEError
from .linfield import (
    heat_convolution,
    integrated_heat_constant,
    renorm_constants,
    stationary_convolution,
    wave_convolution,
)
from .pathint import make_timegrid, mode_grid, sample_mode_noise
from .solver import (
    SolveConfig,
    WickData,
    check_solver_window,
    mild_residual,
    solve_heat_quadratic,
    solve_wave_polynomial,
)
from .spectral import SpectralField
from .subordinator import SubordinatorPath, SubordinatorSpec, check_log_moment, sample_subordinator, stieltjes_integral
from .wick import (
    MIN_ENSEMBLE,
    NormSpec,
    cauchy_convergence_study,
    check_heat_window,
    check_wave_window,
    covariance_diagnostic,
    hermite,
    wick_power,
)

COMMANDS = ("isometry", "covariance", "wick-convergence", "renorm-divergence", "jump-continuity",
            "solve-heat", "solve-wave", "stationary-check")


# -- configuration ------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentSection:
    command: str = "solve-heat"
    seed: int = 0
    out: str = "results"
    ensemble: int = 100
    horizon: float = 1.0
    steps: int = 100
    workers: int = 1
    tolerance_se: float = 4.0


@dataclass(frozen=True)
class SubordinatorSection:
    kind: str = "poisson"
    drift: float = 0.0
    rate: float = 1.0
    jump_law: str = "unit"
    jump_scale: float = 1.0
    shape: float = 1.0
    gamma_rate: float = 1.0
    alpha: float = 0.5
    tempering: float = 1.0
    intensity: float = 1.0
    epsilon: float = 1e-4

    def spec(self) -> SubordinatorSpec:
        return SubordinatorSpec(**dataclasses.asdict(self))


@dataclass(frozen=True)
class FieldSection:
    kind: str = "heat"
    cutoffs: tuple = (8,)
    order: int = 2
    time: Optional[float] = None  # evaluation time; None ("horizon") means the horizon


@dataclass(frozen=True)
class NormSection:
    alpha: float = -0.5
    gamma: Optional[float] = 1.0  # None means sup in time
    eps: float = 0.1
    p: float = math.inf
    q: float = math.inf


@dataclass(frozen=True)
class SolverSection:
    sign: int = 1
    cutoff: int = 16
    dt: float = 1e-3
    R: float = 10.0
    picard_tol: float = 1e-13
    max_picard: int = 50
    amplitude: float = 0.1
    eps: float = 0.1
    gamma: float = 4.0
    delta: float = 0.2


@dataclass(frozen=True)
class StationarySection:
    past_horizon: float = 8.0
    times: tuple = (0.5, 1.5)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: ExperimentSection = dataclasses.field(default_factory=ExperimentSection)
    subordinator: SubordinatorSection = dataclasses.field(default_factory=SubordinatorSection)
    field: FieldSection = dataclasses.field(default_factory=FieldSection)
    norm: NormSection = dataclasses.field(default_factory=NormSection)
    solver: SolverSection = dataclasses.field(default_factory=SolverSection)
    stationary: StationarySection = dataclasses.field(default_factory=StationarySection)

    @property
    def command(self) -> str:
        return self.experiment.command

    def replace(self, section: str, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **{section: dataclasses.replace(getattr(self, section), **changes)})


_SECTION_TYPES = {"experiment": ExperimentSection, "subordinator": SubordinatorSection, "field": FieldSection,
                  "norm": NormSection, "solver": SolverSection, "stationary": StationarySection}


def _parse_value(section, key, default, raw: str):
    raw = raw.strip()
    try:
        if (section, key) in _NONE_LABELS:
            return None if raw.lower() == _NONE_LABELS[section, key] else float(raw)
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [v for v in raw.replace(",", " ").split() if v]
            kind = int if default and isinstance(default[0], int) else float
            return tuple(kind(v) for v in items)
        return raw
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a valid value: {exc}") from None


_NONE_LABELS = {("norm", "gamma"): "sup", ("field", "time"): "horizon"}


def _format_value(v, none_label="sup") -> str:
    if v is None:
        return none_label
    if isinstance(v, tuple):
        return ", ".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def parse_config(text: str, validate_config: bool = True) -> ExperimentConfig:
    """Parse and validate an INI document; unknown sections or keys are errors."""
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    sections = {}
    for name in cp.sections():
        if name not in _SECTION_TYPES:
            raise ConfigError(f"unknown config section [{name}]; expected one of {sorted(_SECTION_TYPES)}")
        cls = _SECTION_TYPES[name]
        defaults = cls()
        known = {f.name for f in dataclasses.fields(cls)}
        values = {}
        for key, raw in cp.items(name):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{name}]; expected one of {sorted(known)}")
            values[key] = _parse_value(name, key, getattr(defaults, key), raw)
        sections[name] = cls(**values)
    cfg = ExperimentConfig(**sections)
    if validate_config:
        validate(cfg)
    return cfg


def emit_config(cfg: ExperimentConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for name in _SECTION_TYPES:
        sec = getattr(cfg, name)
        cp[name] = {f.name: _format_value(getattr(sec, f.name), _NONE_LABELS.get((name, f.name), ""))
                    for f in dataclasses.fields(sec)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def validate(cfg: ExperimentConfig) -> None:
    """Check every parameter window before any sampling happens."""
    ex, fs, ns, ss = cfg.experiment, cfg.field, cfg.norm, cfg.solver
    if ex.command not in COMMANDS:
        raise ConfigError(f"unknown command {ex.command!r}; expected one of {COMMANDS}")
    if ex.ensemble < 1 or ex.steps < 1 or ex.workers < 1:
        raise ConfigError("ensemble, steps and workers must be >= 1")
    if not ex.horizon > 0:
        raise ConfigError("horizon must be > 0")
    if fs.kind not in ("heat", "wave"):
        raise ConfigError(f"[field] kind must be heat or wave, got {fs.kind!r}")
    if not fs.cutoffs or min(fs.cutoffs) < 1:
        raise ConfigError("[field] cutoffs must be positive integers")
    if fs.order < 1:
        raise ConfigError("[field] order must be >= 1")
    if fs.time is not None and not 0 < fs.time <= ex.horizon:
        raise ConfigError("[field] time must lie in (0, horizon]")
    for name, v in (("p", ns.p), ("q", ns.q)):
        if not v >= 1:
            raise ConfigError(f"[norm] {name} must lie in [1, inf]")
    spec = cfg.subordinator.spec()  # raises on invalid subordinator parameters
    cmd = ex.command
    if cmd == "covariance" and ex.ensemble < MIN_ENSEMBLE:
        raise EnsembleTooSmallError(f"covariance needs an ensemble of at least {MIN_ENSEMBLE}")
    if cmd == "wick-convergence":
        if fs.kind == "heat":
            if ns.gamma is None:
                raise ConstraintError("heat Wick powers need an L^γ time norm; sup in time is not available")
            check_heat_window(fs.order, ns.alpha, ns.gamma, ns.eps)
        else:
            check_wave_window(ns.alpha)
    if cmd == "solve-heat":
        if fs.order != 2:
            raise UnsupportedSpecError(
                f"solve-heat supports only k=2 (got k={fs.order}): for k ≥ 3 the heat Wick power lacks "
                "the time-integrability needed by the fixed-point argument")
        check_solver_window("heat", 2, ss.eps, ss.gamma, ss.delta)
    if cmd == "solve-wave":
        if fs.order < 2:
            raise ConfigError("solve-wave needs order k >= 2")
        check_solver_window("wave", fs.order, ss.eps, ss.gamma, ss.delta)
    if cmd in ("solve-heat", "solve-wave"):
        if ss.sign not in (1, -1):
            raise ConfigError("[solver] sign must be +1 or -1")
        if ss.cutoff < fs.order * fs.cutoffs[0]:
            raise ConfigError(f"solver cutoff M={ss.cutoff} must be ≥ k·N = {fs.order * fs.cutoffs[0]}")
        if not ss.R > 0 or not ss.dt > 0:
            raise ConfigError("[solver] R and dt must be > 0")
    if cmd == "stationary-check":
        if not cfg.stationary.past_horizon > 0:
            raise ConfigError("[stationary] past_horizon must be > 0")
        if len(cfg.stationary.times) != 2 or min(cfg.stationary.times) < 0:
            raise ConfigError("[stationary] times must list two nonnegative times")
        if not check_log_moment(spec).finite:
            raise ConfigError("subordinator fails the log-moment condition; no stationary solution exists")
    if cmd == "renorm-divergence" and cfg.subordinator.kind != "deterministic-linear":
        raise ConfigError("renorm-divergence uses L(t) = b t; set [subordinator] kind = deterministic-linear")
    if cmd == "jump-continuity" and cfg.subordinator.kind not in ("poisson", "compound-poisson"):
        raise ConfigError("jump-continuity needs a (compound) Poisson subordinator")
    if cmd == "jump-continuity" and cfg.subordinator.drift != 0:
        raise ConfigError("jump-continuity compares exact left limits and needs drift 0")


# -- results -------------------------------------------------------------------------

@dataclass
class RunManifest:
    config: ExperimentConfig
    version: str
    wall_clock: float
    metrics: dict
    passed: dict

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    def to_dict(self) -> dict:
        return {"command": self.config.command, "config": emit_config(self.config), "version": self.version,
                "wall_clock_seconds": self.wall_clock, "metrics": self.metrics, "passed": self.passed,
                "ok": self.ok}


def _json(obj, indent=0) -> str:
    """JSON with floats at 17 significant digits (non-finite floats become null)."""
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {_json(v, indent + 1)}" for k, v in sorted(obj.items())]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        obj = list(obj)
        if not obj:
            return "[]"
        return "[" + ", ".join(_json(v, indent + 1) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return f"{float(obj):.17g}" if math.isfinite(obj) else "null"
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([f"{v:.17g}" if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def preflight(out_dir: str) -> None:
    """Fail before any computation if ``out_dir`` cannot be written."""
    try:
        os.makedirs(out_dir, exist_ok=True)
        probe = os.path.join(out_dir, ".write-probe")
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as exc:
        raise OSError(f"output directory {out_dir!r} is not writable: {exc}") from exc


def emit_report(manifest: RunManifest, tables: dict, out_dir: str) -> list:
    """Write ``summary.json``, one CSV per table and ``manifest.json``; returns the paths."""
    preflight(out_dir)
    paths = []
    for name, (header, rows) in sorted(tables.items()):
        p = os.path.join(out_dir, f"{name}.csv")
        with open(p, "w", newline="") as fh:
            fh.write(_csv(header, rows))
        paths.append(p)
    summary = {"command": manifest.config.command, "tables": sorted(tables), "n_tables": len(tables),
               "metrics": manifest.metrics, "passed": manifest.passed, "ok": manifest.ok}
    for name, obj in (("summary.json", summary), ("manifest.json", manifest.to_dict())):
        p = os.path.join(out_dir, name)
        with open(p, "w") as fh:
            fh.write(_json(obj) + "\n")
        paths.append(p)
    return paths


# -- experiments ---------------------------------------------------------------------

def _seed(cfg, *keys) -> int:
    return int(_rng.stream(cfg.experiment.seed, cfg.command, *keys).integers(0, 2 ** 62))


def _eval_time(cfg) -> float:
    t = cfg.field.time
    return cfg.experiment.horizon if t is None else t


def _run_isometry(cfg):
    """Covariance of kernel integrals against ``beta^l(L)`` versus ``delta_{l,-l'} int f g dL``."""
    spec = cfg.subordinator.spec()
    T = _eval_time(cfg)
    path = sample_subordinator(spec, cfg.experiment.horizon, _seed(cfg, "path"))
    grid = make_timegrid(path, 1, extra=[T])
    noise = sample_mode_noise(path, 1, grid, _seed(cfg, "noise"), cfg.experiment.ensemble)
    heat = heat_convolution(noise, [T]).coeffs[:, 0] * 2 * math.pi
    wave = wave_convolution(noise, [T]).coeffs[:, 0] * 2 * math.pi
    kernels = {"heat": (heat, lambda lam, s: math.exp(-(T - s) * lam)),
               "wave": (wave, lambda lam, s: (T - s) * float(np.sinc(math.sqrt(lam) * (T - s) / math.pi)))}
    cases = [("heat", (1, 0), "heat", (-1, 0)), ("heat", (1, 0), "wave", (-1, 0)),
             ("heat", (1, 0), "heat", (0, 1)), ("wave", (0, 1), "wave", (0, -1))]
    rows, passed, tol = [], {}, cfg.experiment.tolerance_se
    for kf, l, kg, m in cases:
        a = kernels[kf][0][:, l[0] + 1, l[1] + 1]
        b = kernels[kg][0][:, m[0] + 1, m[1] + 1]
        prod = (a * b).real
        est, se = prod.mean(), prod.std(ddof=1) / math.sqrt(prod.size)
        if (l[0] + m[0], l[1] + m[1]) == (0, 0):
            lam_f, lam_g = l[0] ** 2 + l[1] ** 2, m[0] ** 2 + m[1] ** 2
            f, g = kernels[kf][1], kernels[kg][1]
            exact = stieltjes_integral(lambda s: f(lam_f, s) * g(lam_g, s), path, 0.0, T)
        else:
            exact = 0.0
        z = (est - exact) / se if se > 0 else 0.0
        name = f"{kf}{l}x{kg}{m}"
        rows.append([name, est, se, exact, z])
        passed[name] = bool(abs(z) <= tol)
    metrics = {"n_jumps": path.n_jumps, "time": T, "max_abs_z": max(abs(r[4]) for r in rows)}
    return metrics, passed, {"isometry": (["case", "estimate", "se", "exact", "z"], rows)}


def _run_covariance(cfg):
    spec = cfg.subordinator.spec()
    kind, N, T = cfg.field.kind, cfg.field.cutoffs[0], _eval_time(cfg)
    path = sample_subordinator(spec, cfg.experiment.horizon, _seed(cfg, "path"))
    grid = make_timegrid(path, 1, extra=[T])
    noise = sample_mode_noise(path, N, grid, _seed(cfg, "noise"), cfg.experiment.ensemble)
    conv = (heat_convolution if kind == "heat" else wave_convolution)(noise, [T])
    c = float(renorm_constants(kind, path, N, [T]).values[0])
    x = conv.values_at((0.0, 0.0))[:, 0]
    rows, passed = [], {}
    top = max(1, cfg.field.order)
    for k in range(1, top + 1):
        for m in range(1, top + 1):
            rec = covariance_diagnostic(x, x, hermite(k, x, c), hermite(m, x, c), k, m)
            rows.append([k, m, rec.estimate, rec.estimate_se, rec.predicted, rec.predicted_se, rec.z_score])
            passed[f"k={k},m={m}"] = rec.within(cfg.experiment.tolerance_se)
    return {"constant": c, "n_jumps": path.n_jumps}, passed, {
        "covariance": (["k", "m", "estimate", "estimate_se", "predicted", "predicted_se", "z"], rows)}


def _run_wick_convergence(cfg):
    ns = cfg.norm
    rep = cauchy_convergence_study(cfg.field.kind, cfg.field.order, cfg.field.cutoffs,
                                   NormSpec(ns.alpha, ns.gamma, ns.p, ns.q, ns.eps),
                                   cfg.experiment.ensemble, cfg.experiment.seed, cfg.subordinator.spec(),
                                   cfg.experiment.horizon, cfg.experiment.steps, cfg.experiment.workers)
    means = rep.means
    rows = [[rep.kind, rep.k, n, j, float(v)] for i, n in enumerate(rep.cutoffs) for j, v in enumerate(rep.diffs[i])]
    passed = {"finite": bool(np.all(np.isfinite(rep.diffs))),
              "decreasing": bool(np.all(np.diff(means) < 0)),
              "negative_slope": bool(rep.slope < 0)}
    metrics = {"means": means.tolist(), "ses": rep.ses.tolist(), "slope": rep.slope}
    return metrics, passed, {"wick_convergence": (["kind", "k", "N", "sample", "norm_value"], rows)}


def divergence_oracle(cutoff: int, horizon: float, drift: float = 1.0, panels: int = 60) -> float:
    """``int_0^T c_N(t) dt`` by Gauss-Legendre quadrature on geometric panels of the constants."""
    x, w = np.polynomial.legendre.leggauss(16)
    edges = np.concatenate([[0.0], horizon * np.geomspace(1e-12, 1.0, panels)])
    total = 0.0
    path = SubordinatorPath(horizon, drift, np.empty(0), np.empty(0), "deterministic-linear")
    for a, b in zip(edges[:-1], edges[1:]):
        t = 0.5 * (b - a) * (x + 1) + a
        total += 0.5 * (b - a) * float(w @ renorm_constants("heat", path, cutoff, t).values)
    return total


def _run_renorm_divergence(cfg):
    T, b = cfg.experiment.horizon, cfg.subordinator.drift
    rows, passed = [], {}
    limit = 0.5 * T * b * math.log(2.0) * 2 * math.pi / (2 * math.pi) ** 2
    for n in cfg.field.cutoffs:
        closed = integrated_heat_constant(2 * n, T, b) - integrated_heat_constant(n, T, b)
        oracle = divergence_oracle(2 * n, T, b) - divergence_oracle(n, T, b)
        rows.append([n, closed, oracle, limit])
        passed[f"N={n}:oracle"] = bool(abs(closed - oracle) <= 0.1 * abs(oracle))
        passed[f"N={n}:limit"] = bool(abs(closed - limit) <= 0.1 * limit)
    diffs = [r[1] for r in rows]
    passed["constant_in_N"] = bool(max(diffs) - min(diffs) <= 0.1 * max(diffs))
    return {"differences": diffs, "limit": limit}, passed, {
        "renorm_divergence": (["N", "closed_form", "oracle", "limit"], rows)}


def jump_continuity(path: SubordinatorPath, cutoff: int, seed: int):
    """Per-jump increments of ``Psi`` and of ``Phi`` minus ``xi/(2 pi)``, maximized over modes.

    Left limits come from propagating the previous grid state with the exact
    noise-free propagator, which is the whole evolution over a jump-free cell
    when ``L`` has no drift.
    """
    grid = make_timegrid(path, 1)
    noise = sample_mode_noise(path, cutoff, grid, seed)
    heat, wave = heat_convolution(noise), wave_convolution(noise)
    l1, l2 = mode_grid(cutoff)
    lam = (l1 * l1 + l2 * l2).astype(float)
    w = np.sqrt(lam)
    rows = []
    for s, size in zip(path.jump_times, path.jump_sizes):
        i = int(np.searchsorted(grid, s))
        d = grid[i] - grid[i - 1]
        xi = noise.jump_increments[0, i - 1] / (2 * math.pi)
        heat_left = np.exp(-lam * d) * heat.coeffs[0, i - 1]
        psi, dpsi = wave.coeffs[0, i - 1], wave.dcoeffs[0, i - 1]
        sinc = d * np.sinc(w * d / math.pi)
        psi_left = np.cos(w * d) * psi + sinc * dpsi
        dpsi_left = -lam * sinc * psi + np.cos(w * d) * dpsi
        rows.append([s, size, float(np.max(np.abs(wave.coeffs[0, i] - psi_left))),
                     float(np.max(np.abs(heat.coeffs[0, i] - heat_left - xi))),
                     float(np.max(np.abs(wave.dcoeffs[0, i] - dpsi_left - xi))),
                     float(np.max(np.abs(xi)))])
    return rows


def _run_jump_continuity(cfg):
    spec = cfg.subordinator.spec()
    path = sample_subordinator(spec, cfg.experiment.horizon, _seed(cfg, "path"))
    rows = jump_continuity(path, cfg.field.cutoffs[0], _seed(cfg, "noise"))
    psi_inc = max((r[2] for r in rows), default=0.0)
    phi_err = max((r[3] for r in rows), default=0.0)
    dpsi_err = max((r[4] for r in rows), default=0.0)
    passed = {"psi_continuous": psi_inc <= 1e-12, "phi_jump_exact": phi_err <= 1e-12,
              "dpsi_jump_exact": dpsi_err <= 1e-12}
    metrics = {"n_jumps": path.n_jumps, "max_psi_increment": psi_inc, "max_phi_jump_error": phi_err}
    header = ["time", "size", "psi_increment", "phi_jump_error", "dpsi_jump_error", "max_xi_over_2pi"]
    return metrics, passed, {"jump_continuity": (header, rows)}


def _initial_field(amplitude, cutoff) -> SpectralField:
    return SpectralField.from_modes({(1, 0): amplitude, (-1, 0): amplitude}, cutoff)


def _run_solve(cfg):
    kind, k, N = cfg.command[len("solve-"):], cfg.field.order, cfg.field.cutoffs[0]
    ss, T = cfg.solver, cfg.experiment.horizon
    spec = cfg.subordinator.spec()
    path = sample_subordinator(spec, T, _seed(cfg, "path"))
    grid = make_timegrid(path, cfg.experiment.steps)
    noise = sample_mode_noise(path, N, grid, _seed(cfg, "noise"))
    conv = (heat_convolution if kind == "heat" else wave_convolution)(noise)
    consts = renorm_constants(kind, path, N, grid)
    orders = (1, 2) if kind == "heat" else range(1, k + 1)
    data = WickData.from_powers(kind, [wick_power(conv, consts, j) for j in orders])
    u0 = _initial_field(ss.amplitude, ss.cutoff)
    scfg = SolveConfig(kind, ss.sign, 2 if kind == "heat" else k, ss.cutoff, ss.dt, T, u0=u0,
                       R=ss.R, picard_tol=ss.picard_tol, max_picard=ss.max_picard,
                       eps=ss.eps, gamma=ss.gamma, delta=ss.delta)
    sol = (solve_heat_quadratic if kind == "heat" else solve_wave_polynomial)(data, scfg)
    residual = math.nan if sol.blowup else mild_residual(sol, data, scfg)
    gate = next(iter(sol.norms))
    rows = [[float(t)] + [float(sol.norms[key][i]) for key in sol.norms if np.ndim(sol.norms[key])]
            for i, t in enumerate(sol.times)]
    header = ["time"] + [key for key in sol.norms if np.ndim(sol.norms[key])]
    metrics = {"blowup": sol.blowup, "exit_time": sol.exit_time, "residual": residual,
               "max_picard": max(sol.picard_counts, default=0),
               "sup_gate_norm": float(np.max(sol.norms[gate])), "n_jumps": path.n_jumps}
    metrics.update({key: float(v) for key, v in sol.norms.items() if not np.ndim(v)})
    passed = {"completed": True, "residual_finite": sol.blowup or bool(np.isfinite(residual))}
    return metrics, passed, {"solution_norms": (header, rows)}


def _stationary_sample(args):
    kind, spec, N, times, past, seed = args
    conv, consts = stationary_convolution(kind, spec, N, times, past, seed)
    return conv.values_at((0.0, 0.0))[0], consts.values


def _run_stationary(cfg):
    kind = "heat-stationary" if cfg.field.kind == "heat" else "damped-wave-stationary"
    spec = cfg.subordinator.spec()
    times = np.asarray(sorted(cfg.stationary.times), dtype=float)
    jobs = [(kind, spec, cfg.field.cutoffs[0], times, cfg.stationary.past_horizon, _seed(cfg, "sample", i))
            for i in range(cfg.experiment.ensemble)]
    results = _map(_stationary_sample, jobs, cfg.experiment.workers)
    x = np.stack([r[0] for r in results])
    c = np.stack([r[1] for r in results])
    sq = x ** 2
    diff = sq[:, 0] - sq[:, 1]
    se = diff.std(ddof=1) / math.sqrt(diff.size)
    z = diff.mean() / se if se > 0 else 0.0
    cdiff = c[:, 0] - c[:, 1]
    cse = cdiff.std(ddof=1) / math.sqrt(cdiff.size)
    rows = [[float(t), float(sq[:, i].mean()), float(sq[:, i].std(ddof=1) / math.sqrt(sq.shape[0])),
             float(c[:, i].mean())] for i, t in enumerate(times)]
    tol = cfg.experiment.tolerance_se
    passed = {"second_moment_stationary": bool(abs(z) <= tol),
              "constant_stationary": bool(abs(cdiff.mean()) <= tol * cse) if cse > 0 else True}
    return {"z": z, "kind": kind}, passed, {"stationary": (["time", "second_moment", "se", "mean_constant"], rows)}


def _map(fn, jobs, workers):
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


_RUNNERS = {"isometry": _run_isometry, "covariance": _run_covariance, "wick-convergence": _run_wick_convergence,
            "renorm-divergence": _run_renorm_divergence, "jump-continuity": _run_jump_continuity,
            "solve-heat": _run_solve, "solve-wave": _run_solve, "stationary-check": _run_stationary}


def run_experiment(cfg: ExperimentConfig):
    """Execute the configured command; returns ``(manifest, tables)``."""
    validate(cfg)
    start = time.perf_counter()
    try:
        metrics, passed, tables = _RUNNERS[cfg.command](cfg)
    except WickSPDEError as exc:
        raise type(exc)(f"{cfg.command}: {exc}") from exc
    manifest = RunManifest(cfg, __version__, time.perf_counter() - start, metrics,
                           {k: bool(v) for k, v in passed.items()})
    return manifest, tables


# -- entry point ----------------------------------------------------------------------

def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="wickspde", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="INI config file")
    ap.add_argument("--seed", type=int, default=None, help="override [experiment] seed")
    ap.add_argument("--out", default=None, help="override [experiment] out directory")
    ap.add_argument("--workers", type=int, default=None, help="override [experiment] workers")
    args = ap.parse_args(argv)
    try:
        with open(args.config) as fh:
            cfg = parse_config(fh.read(), validate_config=False)
        changes = {"command": args.command}
        for key in ("seed", "out", "workers"):
            if getattr(args, key) is not None:
                changes[key] = getattr(args, key)
        cfg = cfg.replace("experiment", **changes)
        validate(cfg)
        preflight(cfg.experiment.out)
        manifest, tables = run_experiment(cfg)
        emit_report(manifest, tables, cfg.experiment.out)
    except (WickSPDEError, OSError) as exc:
        print(f"wickspde: error: {exc}", file=sys.stderr)
        return 2
    for key, ok in manifest.passed.items():
        print(f"{'PASS' if ok else 'FAIL'} {key}")
    return 0 if manifest.ok else 1


if __name__ == "__main__":
    sys.exit(main())
