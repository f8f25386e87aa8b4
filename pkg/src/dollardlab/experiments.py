"""
Experiment configuration, named verification suites and report emission.

A configuration is a TOML document with the sections ``model``, ``flow``,
``phase``, ``grid``, ``detector`` and ``output`` plus a top-level ``seed``.
Missing keys fall back to :data:`DEFAULTS`.  Every suite returns a
:class:`SuiteResult` made of named checks (pass / fail / inconclusive) and
long-format tables; :func:`emit_report` writes the tables as CSV with 17
significant digits and a separate summary file that carries the wall clock.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import math
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

try:  # Python >= 3.11
    import tomllib as _toml
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as _toml

from .errors import ConfigurationError, DollardLabError, OutsideClosedFormError
from .flow import (
    PhasePoint,
    compute_asymptotes,
    effective_hamiltonian_flow,
    high_energy_limit,
    integrate_flow,
    verify_flow_estimates,
)
from .phase import PhaseFunction, homogeneous_decomposition, verify_lemma7
from .propagator import GridState, PropagatorConfig, gaussian_state
from .symbols import SampleBox, SymbolModel, model_from_config, verify_decay
from .wavefront import verify_shift_law, verify_smoothing

__all__ = [
    "DEFAULTS",
    "SUITES",
    "ExperimentConfig",
    "Check",
    "Table",
    "SuiteResult",
    "load_config",
    "run_suite",
    "audit_config",
    "emit_report",
    "read_table",
    "format_value",
]

logger = logging.getLogger(__name__)

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"

DEFAULTS = {
    "seed": 12345,
    "model": {
        "dimension": 2,
        "mu": 0.75,
        "nu": 2.0,
        "gradient_nonvanishing": False,
        "metric": {"family": "bump", "amplitude": 0.2, "exponent": 0.75},
        "long_range": {"family": "zero"},
        "short_range": {"family": "zero"},
    },
    "flow": {
        "seeds": 5,
        "x_scale": 1.0,
        "xi_scale": 1.0,
        "min_speed": 0.5,
        "T_max": 1.0e4,
        "tol": 1.0e-10,
        "rate_slack": 0.15,
        "t_highenergy": 8.0,
        "lam_exponents": [0, 10],
        "highenergy_tolerance": 1.0e-3,
        "phase_tol": 1.0e-12,
        "lemma8_tol": 1.0e-9,
        "lemma8_phase_tol": 1.0e-13,
        "lemma8_times": [4.0, -4.0],
    },
    "phase": {
        "tol": 1.0e-11,
        "t_grid": [-2.0, -0.5, 0.5, 2.0],
        "xi_min": 1.0,
        "xi_max": 1.0e3,
        "n_xi": 13,
        "orders": 1,
        "slope_slack": 0.1,
        "ratio_growth": 2.0,
        "oracle_check": True,
        "oracle_points": 20,
        "oracle_tolerance": 1.0e-10,
        "oracle_t_max": 4.0,
        "oracle_xi_max": 50.0,
    },
    "grid": {
        "n": 4096,
        "L": 64.0,
        "dt": 1.0e-3,
        "absorb_width": 0.1,
        "absorb_strength": 5.0,
        "truncation": 0.8,
        "strict": False,
        "max_loss": 0.1,
    },
    "detector": {
        "lam": 256.0,
        "x0": 5.0,
        "momentum": 12.0,
        "width": 1.0,
        "t": 1.0,
        "tolerance_cells": 3.0,
        "refine": 2,
        "refine_floor_cells": 1.0e-3,
        "n_xi": 21,
        "regular": -3.0,
        "singular": -1.0,
        "lam_ladder": [8.0, 16.0, 32.0, 64.0, 128.0],
        "panel_x": [-2.0, 0.0, 2.0],
        "panel_xi": [-1.0, 0.5, 1.0],
        "translates": [-2.0, 2.0, 10],
        "sigma_ladder": [0.1, 0.4444444444444444, 5],
        "N": [1, 2],
        "ratio_limit": 100.0,
        "boundary_tol": 1.0e-6,
    },
    "output": {"dir": "results"},
}


# -- configuration ----------------------------------------------------------------------


def _deep_merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _locate(text, key):
    """1-based line where ``key`` is assigned in ``text`` (0 if unknown)."""
    if not text:
        return 0
    leaf = key.split(".")[-1]
    pat = re.compile(rf"^\s*{re.escape(leaf)}\s*=")
    for i, line in enumerate(text.splitlines(), 1):
        if pat.match(line):
            return i
    return 0


def _parse_value(raw):
    try:
        return _toml.loads(f"v = {raw}")["v"]
    except _toml.TOMLDecodeError:
        return raw


@dataclass
class ExperimentConfig:
    """Resolved configuration (defaults merged with the file and overrides)."""

    data: dict
    source: str = ""
    text: str = ""

    @classmethod
    def from_text(cls, text, overrides=(), source="<string>"):
        try:
            parsed = _toml.loads(text)
        except _toml.TOMLDecodeError as exc:
            raise ConfigurationError(f"{source}: {exc}") from exc
        cfg = cls(_deep_merge(DEFAULTS, parsed), source, text)
        for item in overrides:
            cfg.set(item)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path, overrides=()):
        try:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text, overrides, source=str(path))

    def set(self, item):
        """Apply a ``dotted.key=value`` override (value parsed as TOML when possible)."""
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        key = key.strip()
        parts = key.split(".")
        node = self.data
        for p in parts[:-1]:
            nxt = node.get(p)
            if nxt is None:
                nxt = node[p] = {}
            if not isinstance(nxt, dict):
                raise ConfigurationError(f"override {key!r}: {p!r} is not a table")
            node = nxt
        if isinstance(node.get(parts[-1]), dict):
            raise ConfigurationError(f"override {key!r} targets a table, not a scalar")
        node[parts[-1]] = _parse_value(raw.strip())

    def get(self, dotted, default=None):
        node = self.data
        for p in dotted.split("."):
            if not isinstance(node, dict) or p not in node:
                return default
            node = node[p]
        return node

    def section(self, name):
        return self.data.get(name, {})

    @property
    def seed(self):
        return int(self.data.get("seed", 0))

    def _error(self, key, msg):
        line = _locate(self.text, key)
        where = f"{self.source}:{line}" if line else self.source
        return ConfigurationError(f"{where}: {key}: {msg}")

    def validate(self):
        for sec in ("model", "flow", "phase", "grid", "detector", "output"):
            if not isinstance(self.data.get(sec), dict):
                raise self._error(sec, "must be a table")
        d = self.get("model.dimension")
        if not isinstance(d, int) or d < 1:
            raise self._error("model.dimension", "must be a positive integer")
        gd = self.get("grid.dimension")
        if gd is not None and gd != d:
            raise self._error("grid.dimension", f"{gd} does not match model.dimension {d}")

        def walk(node, prefix):
            for k, v in node.items():
                key = f"{prefix}.{k}" if prefix else k
                if isinstance(v, dict):
                    walk(v, key)
                elif re.search(r"(^|_)(tol|tolerance)$", k) or k.endswith("_tol"):
                    if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0:
                        raise self._error(key, f"tolerance must be a positive number, got {v!r}")

        walk(self.data, "")
        for key in ("flow.T_max", "grid.L", "grid.dt", "detector.lam"):
            v = self.get(key)
            if not isinstance(v, (int, float)) or not v > 0:
                raise self._error(key, f"must be positive, got {v!r}")
        n = self.get("grid.n")
        if not isinstance(n, int) or n < 2 or n & (n - 1):
            raise self._error("grid.n", f"must be a power of two, got {n!r}")
        if not isinstance(self.get("flow.seeds"), int) or self.get("flow.seeds") < 1:
            raise self._error("flow.seeds", "must be a positive integer")
        try:
            PropagatorConfig(**self._propagator_kwargs())
        except ConfigurationError as exc:
            raise self._error("grid", str(exc)) from exc

    def _propagator_kwargs(self):
        g = self.section("grid")
        return {
            "dt": float(g["dt"]),
            "absorb_width": float(g["absorb_width"]),
            "absorb_strength": float(g["absorb_strength"]),
            "truncation": float(g["truncation"]),
            "strict": bool(g["strict"]),
            "max_loss": float(g["max_loss"]),
        }

    def propagator(self, strict=None):
        kw = self._propagator_kwargs()
        if strict is not None:
            kw["strict"] = kw["strict"] or bool(strict)
        return PropagatorConfig(**kw)

    def model(self) -> SymbolModel:
        try:
            return model_from_config(self.section("model"))
        except (ConfigurationError, KeyError, TypeError, ValueError) as exc:
            raise self._error("model", str(exc)) from exc

    def canonical(self):
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"), default=str)

    def hash(self):
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()


def load_config(path, overrides=()):
    return ExperimentConfig.from_file(path, overrides)


# -- results ----------------------------------------------------------------------------


@dataclass
class Check:
    name: str
    status: str
    value: float = math.nan
    tolerance: float = math.nan
    detail: str = ""


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)

    def add(self, *row):
        if len(row) != len(self.columns):
            raise ValueError(f"row has {len(row)} entries, table has {len(self.columns)} columns")
        self.rows.append(list(row))


@dataclass
class SuiteResult:
    suite: str
    config_hash: str
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    @property
    def passed(self):
        return all(c.status == PASS for c in self.checks)

    @property
    def status(self):
        if any(c.status == FAIL for c in self.checks):
            return FAIL
        if any(c.status != PASS for c in self.checks):
            return INCONCLUSIVE
        return PASS

    def check(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def summary_text(self):
        lines = [
            f"suite: {self.suite}",
            f"status: {self.status}",
            f"config_hash: {self.config_hash}",
            f"wall_clock_s: {self.wall_clock:.3f}",
        ]
        for c in self.checks:
            lines.append(
                f"check {c.name}: {c.status} value={format_value(c.value)} tolerance={format_value(c.tolerance)}"
                + (f" ({c.detail})" if c.detail else "")
            )
        return "\n".join(lines) + "\n"


def _status(ok):
    return PASS if ok else FAIL


def format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


# -- helpers ----------------------------------------------------------------------------------


def _map(fn, items, parallel):
    if parallel and len(items) > 1:
        with ThreadPoolExecutor() as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def _starts(cfg: ExperimentConfig, d):
    """Seeded initial points (``flow.starts`` rows ``[x..., xi...]`` take precedence)."""
    given = cfg.get("flow.starts")
    if given:
        return [PhasePoint(np.asarray(r[:d], float), np.asarray(r[d:], float)) for r in given]
    rng = np.random.default_rng(cfg.seed)
    out = []
    xs, ks, vmin = float(cfg.get("flow.x_scale")), float(cfg.get("flow.xi_scale")), float(cfg.get("flow.min_speed"))
    while len(out) < int(cfg.get("flow.seeds")):
        x = rng.normal(size=d) * xs
        xi = rng.normal(size=d) * ks
        if np.linalg.norm(xi) >= vmin:
            out.append(PhasePoint(x, xi))
    return out


def _guarded(result: SuiteResult, name, fn):
    """Run ``fn``; a library error becomes a failed check instead of aborting the suite."""
    try:
        return fn()
    except DollardLabError as exc:
        logger.error("%s: %s failed: %s", result.suite, name, exc)
        result.checks.append(Check(name, FAIL, detail=f"{type(exc).__name__}: {exc}"))
        return None


def _ladder(spec, count_int=True):
    """``[a, b, n]`` means ``linspace(a, b, n)``; a longer list is taken literally."""
    spec = list(spec)
    if len(spec) == 3 and float(spec[2]).is_integer() and spec[2] >= 2 and count_int:
        return np.linspace(float(spec[0]), float(spec[1]), int(spec[2]))
    return np.asarray(spec, dtype=float)


# -- assumption audit ---------------------------------------------------------------------------

REQUIREMENTS = {
    "prop1_asymptotes": ("mu", "nu"),
    "thm6_highenergy": ("mu", "nu"),
    "lemma7_bounds": ("mu", "nu"),
    "lemma8_consistency": ("mu", "nu"),
    "thm4_shift": ("flat", "beta_one"),
    "thm5_smoothing": ("flat", "beta_smoothing", "gradient"),
    "assumption_audit": ("mu", "nu", "beta"),
}


def _requirement_checks(model: SymbolModel, needs):
    checks = []
    mu, nu = model.potential.mu, model.potential.nu
    h = model.potential.homogeneous
    beta = None if h is None else h.beta
    for need in needs:
        if need == "mu":
            checks.append(Check("assumption_mu", _status(0.5 < mu <= 1.0), mu, math.nan, "mu in (1/2, 1]"))
        elif need == "nu":
            checks.append(Check("assumption_nu", _status(nu > 1.0), nu, math.nan, "nu > 1"))
        elif need == "beta" and beta is not None:
            checks.append(Check("assumption_beta", _status(1.0 <= beta < 1.5), beta, math.nan, "beta in [1, 3/2)"))
        elif need == "beta_one":
            ok = h is None or abs(beta - 1.0) < 1e-12
            checks.append(Check("assumption_beta", _status(ok), math.nan if beta is None else beta, 1.0, "beta = 1"))
        elif need == "beta_smoothing":
            ok = beta is not None and 1.0 < beta < 1.5
            checks.append(
                Check("assumption_beta", _status(ok), math.nan if beta is None else beta, math.nan, "beta in (1, 3/2)")
            )
        elif need == "gradient":
            ok = False
            if h is not None:
                dirs = h.unit_directions(256)
                ok = bool(np.min(np.linalg.norm(h.sphere_gradient(dirs), axis=-1)) > 0)
            checks.append(Check("assumption_gradient", _status(ok), detail="grad V_L nonvanishing on the sphere"))
        elif need == "flat":
            checks.append(Check("assumption_flat_metric", _status(model.is_flat), detail="flat metric"))
    return checks


def audit_config(cfg: ExperimentConfig, suite="assumption_audit"):
    """Requirement checks for ``suite`` plus, for the audit suite, the sampled decay audit."""
    model = cfg.model()
    result = SuiteResult("assumption_audit", cfg.hash())
    result.checks.extend(_requirement_checks(model, REQUIREMENTS[suite]))
    if suite == "assumption_audit":
        if model.potential.homogeneous is None:
            result.checks.append(Check("assumption_beta", PASS, detail="no homogeneous part"))
        rep = verify_decay(model)
        table = Table(["component", "order", "constant", "slope", "expected_slope", "passed"])
        for e in rep.entries:
            table.add(e.component, e.order, e.constant, e.slope, e.expected_slope, e.passed)
        result.tables["decay"] = table
        result.checks.append(Check("decay_bounds", _status(rep.passed), detail="sampled symbol-class slopes"))
        # positive definiteness on the audit sample
        _, pts = SampleBox().points(model.dim)
        lam = model.metric.min_eigenvalue(pts.reshape(-1, model.dim))
        result.checks.append(Check("metric_positive", _status(bool(np.min(lam) > 0)), float(np.min(lam)), 0.0))
    for c in result.checks:
        if c.status == FAIL:
            logger.error("assumption check %s failed: %s (value %s)", c.name, c.detail, format_value(c.value))
    return result


# -- suites ------------------------------------------------------------------------------------


def _suite_prop1(cfg, model, result, parallel, strict):
    T_max = float(cfg.get("flow.T_max"))
    tol = float(cfg.get("flow.tol"))
    slack = float(cfg.get("flow.rate_slack"))
    starts = _starts(cfg, model.dim)
    table = Table(["seed", "t", "z_minus_x_plus", "fitted_exponent"])
    rates = Table(["seed", "quantity", "slope", "expected", "passed"])

    def work(item):
        k, st = item
        try:
            return k, verify_flow_estimates(model, st, T_max=T_max, tol=min(tol, 1e-11), slack=slack), None
        except DollardLabError as exc:
            return k, None, exc

    for k, rep, exc in _map(work, list(enumerate(starts)), parallel):
        if rep is None:
            result.checks.append(Check(f"seed{k}", FAIL, detail=f"{type(exc).__name__}: {exc}"))
            continue
        zs = next(e for e in rep.entries if e.quantity == "z_minus_x_plus")
        for t, v in zip(rep.times, rep.series["z_minus_x_plus"]):
            table.add(k, float(t), float(v), zs.slope)
        for e in rep.entries:
            rates.add(k, e.quantity, e.slope, e.expected, e.passed)
            if e.quantity == "y_minus_t_eta":
                continue
            result.checks.append(
                Check(f"seed{k}_{e.quantity}_slope", _status(e.passed), e.slope, e.expected + slack)
            )
    result.tables["asymptotes"] = table
    result.tables["rates"] = rates


def _suite_thm6(cfg, model, result, parallel, strict):
    T_max = float(cfg.get("flow.T_max"))
    tol = float(cfg.get("flow.tol"))
    t = float(cfg.get("flow.t_highenergy"))
    lo, hi = cfg.get("flow.lam_exponents")
    lams = 2.0 ** np.arange(int(lo), int(hi) + 1)
    limit_tol = float(cfg.get("flow.highenergy_tolerance"))
    d = model.dim
    starts = _starts(cfg, d)
    table = Table(["seed", "lam"] + [f"z{j}" for j in range(d)] + [f"xi{j}" for j in range(d)])
    summary = Table(["seed", "discrepancy", "error_estimate", "rho_x", "rho_xi"])

    def work(item):
        k, st = item
        try:
            sd = compute_asymptotes(model, st, T_max=T_max, tol=tol)
            pf = PhaseFunction(model, "phi", tol=float(cfg.get("flow.phase_tol")), memo=False)
            return k, high_energy_limit(model, pf, st, t, lams, tol=min(tol, 1e-11), reference=sd), None
        except DollardLabError as exc:
            return k, None, exc

    for k, he, exc in _map(work, list(enumerate(starts)), parallel):
        if he is None:
            result.checks.append(Check(f"seed{k}", FAIL, detail=f"{type(exc).__name__}: {exc}"))
            continue
        for lam, z, xi in zip(lams, he.samples_x, he.samples_xi):
            table.add(k, float(lam), *map(float, z), *map(float, xi))
        summary.add(k, he.discrepancy, he.error, he.rho_x, he.rho_xi)
        result.checks.append(Check(f"seed{k}_limit", _status(he.discrepancy <= limit_tol), he.discrepancy, limit_tol))
    result.tables["highenergy"] = table
    result.tables["highenergy_summary"] = summary


def _suite_lemma7(cfg, model, result, parallel, strict):
    ph = cfg.section("phase")
    pf = PhaseFunction(model, "phi", tol=float(ph["tol"]))
    xi_grid = np.geomspace(float(ph["xi_min"]), float(ph["xi_max"]), int(ph["n_xi"]))
    rep = _guarded(
        result,
        "deviation_bounds",
        lambda: verify_lemma7(
            pf, ph["t_grid"], xi_grid, int(ph["orders"]), float(ph["slope_slack"]), float(ph["ratio_growth"])
        ),
    )
    table = Table(["t", "order", "slope", "bound", "ratio_upper", "ratio_lower", "passed"])
    if rep is not None:
        for e in rep.entries:
            table.add(e.t, e.order, e.slope, e.bound, e.ratio_upper, e.ratio_lower, e.passed)
            result.checks.append(
                Check(
                    f"t{format_value(e.t)}_order{e.order}",
                    _status(e.passed),
                    e.slope,
                    e.bound + float(ph["slope_slack"]),
                )
            )
    result.tables["deviation_slopes"] = table
    if ph.get("oracle_check") and model.potential.homogeneous is not None and model.is_flat:
        _oracle_check(cfg, model, result)


def _oracle_check(cfg, model, result):
    """Quadrature phase against the closed-form split on a (t, xi) grid with |t xi| >= rho."""
    ph = cfg.section("phase")
    h = model.potential.homogeneous
    m = int(ph["oracle_points"])
    tol = float(ph["oracle_tolerance"])
    rho = h.homogeneity_radius
    ts = np.concatenate([-np.geomspace(float(ph["oracle_t_max"]), 0.25, m // 2), np.geomspace(0.25, float(ph["oracle_t_max"]), m - m // 2)])
    ks = np.geomspace(rho / 0.25, float(ph["oracle_xi_max"]), m)
    d = model.dim
    e = np.zeros(d)
    e[0] = 1.0
    if d == 2:
        e = np.array([math.cos(0.3), math.sin(0.3)])
    pf = PhaseFunction(model, "phi", tol=1e-13, memo=False)
    T, K = np.meshgrid(ts, ks, indexing="ij")
    mask = np.abs(T * K) >= rho
    tv, kv = T[mask], K[mask]
    quad = pf.value(tv, kv[:, None] * e)
    table = Table(["t", "xi_norm", "quadrature", "closed_form", "abs_error"])
    worst = 0.0
    for t, k, q in zip(tv, kv, quad):
        try:
            dec = homogeneous_decomposition(model.potential, t, k * e)
        except OutsideClosedFormError:
            continue
        cf = 0.5 * t * k * k + dec.leading + dec.R
        err = abs(q - cf)
        worst = max(worst, err)
        table.add(float(t), float(k), float(q), float(cf), float(err))
    result.tables["phase_oracle"] = table
    result.checks.append(Check("closed_form_equivalence", _status(worst <= tol), worst, tol))


def _suite_lemma8(cfg, model, result, parallel, strict):
    tol = float(cfg.get("flow.lemma8_tol"))
    times = [float(t) for t in cfg.get("flow.lemma8_times")]
    starts = _starts(cfg, model.dim)
    pf = PhaseFunction(model, "phi", tol=float(cfg.get("flow.lemma8_phase_tol")), memo=False)
    table = Table(["seed", "t", "z_error", "xi_error", "energy_drift"])
    items = [(k, st, t) for k, st in enumerate(starts) for t in times]

    def work(item):
        k, st, t = item
        try:
            full = integrate_flow(model, st, t, "full", tol, max_step=abs(t) / 64.0)
            eff = effective_hamiltonian_flow(model, pf, st, t, tol)
            z = full.x[-1] - pf.gradient(t, full.xi[-1])
            return item, (float(np.max(np.abs(z - eff.x[-1]))), float(np.max(np.abs(full.xi[-1] - eff.xi[-1]))), full.energy_drift), None
        except DollardLabError as exc:
            return item, None, exc

    for (k, st, t), vals, exc in _map(work, items, parallel):
        name = f"seed{k}_t{format_value(t)}"
        if vals is None:
            result.checks.append(Check(name, FAIL, detail=f"{type(exc).__name__}: {exc}"))
            continue
        ez, ex, drift = vals
        table.add(k, t, ez, ex, drift)
        err = max(ez, ex)
        result.checks.append(Check(f"{name}_reconstruction", _status(err <= 10 * tol), err, 10 * tol))
        result.checks.append(Check(f"{name}_energy", _status(drift <= 10 * tol * abs(t)), drift, 10 * tol * abs(t)))
    result.tables["reconstruction"] = table


def _suite_thm4(cfg, model, result, parallel, strict):
    det = cfg.section("detector")
    g = cfg.section("grid")
    lam = float(det["lam"])
    t = float(det["t"])
    x0, p, w = float(det["x0"]), float(det["momentum"]), float(det["width"])
    n0, L = int(g["n"]), float(g["L"])
    prop = cfg.propagator(strict)
    tol_cells = float(det["tolerance_cells"])
    ns = [n0 * 2**j for j in range(int(det["refine"]))]
    table = Table(
        [
            "n",
            "cell",
            "detected_x",
            "detected_xi",
            "predicted_x",
            "predicted_flow_x",
            "error_cells",
            "error_cells_flow",
            "xi_error",
            "xi_cell",
            "norm_loss",
        ]
    )
    reports = []
    for n in ns:
        u0 = gaussian_state(n, L, [x0], [p], w)
        rep = _guarded(
            result,
            f"shift_n{n}",
            lambda u0=u0: verify_shift_law(
                u0, model, None, t, prop, PhasePoint([x0], [p / lam]), lam, tol_cells, int(det["n_xi"])
            ),
        )
        if rep is None:
            continue
        reports.append((n, rep))
        table.add(
            n,
            rep.cell,
            float(rep.detected.x[0]),
            float(rep.detected.xi[0]),
            float(rep.predicted.x[0]),
            float(rep.predicted_flow.x[0]),
            rep.error_cells,
            rep.error_cells_flow,
            rep.xi_error,
            rep.xi_cell,
            rep.norm_loss,
        )
    result.tables["shift"] = table
    if not reports:
        return
    n, rep = reports[0]
    result.checks.append(
        Check("shift_displayed_prediction", _status(rep.error_cells <= tol_cells), rep.error_cells, tol_cells,
              f"S^+-_(-t^2/2) at n={n}")
    )
    result.checks.append(Check("xi_unchanged", _status(rep.xi_error <= rep.xi_cell), rep.xi_error, rep.xi_cell))
    # transport obtained from the classical flows with D = -i d/dx
    result.checks.append(
        Check("shift_flow_transport", _status(rep.error_cells_flow <= tol_cells), rep.error_cells_flow, tol_cells,
              f"S^+_(t^2/2) for t > 0, S^-_(-t^2/2) for t < 0, at n={n}")
    )
    if len(reports) >= 2:
        floor = float(det["refine_floor_cells"])
        for label, attr in (("displayed", "error_cells"), ("flow", "error_cells_flow")):
            phys = [getattr(r, attr) * r.cell for _, r in reports]
            slack = floor * reports[-1][1].cell
            ok = all(b <= a + slack for a, b in zip(phys, phys[1:]))
            result.checks.append(
                Check(f"refinement_{label}", _status(ok), phys[-1], phys[0] + slack, "physical error non-increasing as n doubles")
            )


def _suite_thm5(cfg, model, result, parallel, strict):
    det = cfg.section("detector")
    g = cfg.section("grid")
    n, L = int(g["n"]), float(g["L"])
    t = float(det["t"])
    u0 = gaussian_state(n, L, [0.0] * model.dim, [0.0] * model.dim, float(det["width"]))
    if model.dim == 1:
        panel = [PhasePoint([x], [xi]) for x in det["panel_x"] for xi in det["panel_xi"]]
    else:
        panel = [PhasePoint([x, 0.0], [xi, 0.0]) for x in det["panel_x"] for xi in det["panel_xi"]]
    translates = _ladder(det["translates"])
    sigmas = _ladder(det["sigma_ladder"])
    Ns = [int(v) for v in det["N"]]
    rep = _guarded(
        result,
        "smoothing",
        lambda: verify_smoothing(
            u0,
            model,
            None,
            t,
            cfg.propagator(strict),
            panel,
            det["lam_ladder"],
            sigmas,
            Ns,
            translates,
            float(det["ratio_limit"]),
            float(det["boundary_tol"]),
            float(det["regular"]),
            float(det["singular"]),
        ),
    )
    if rep is None:
        return
    probes = Table(["x", "xi", "lam", "coefficient", "exponent", "verdict"])
    for s in rep.samples:
        for lam, mag in zip(s.lams, s.magnitudes):
            probes.add(float(s.x0[0]), float(s.xi0[0]), float(lam), float(mag), s.exponent, s.verdict)
    ratios = Table(["N", "s", "translate", "sigma", "ratio"])
    for N in Ns:
        vals = rep.ratios[N].reshape(len(translates), len(sigmas))
        for i, a in enumerate(translates):
            for j, sg in enumerate(sigmas):
                ratios.add(N, rep.s_values[N], float(a), float(sg), float(vals[i, j]))
        result.checks.append(
            Check(f"ratio_spread_N{N}", _status(rep.ratio_spread[N] < rep.ratio_limit), rep.ratio_spread[N], rep.ratio_limit)
        )
    regular = sum(s.verdict == "regular" for s in rep.samples)
    result.checks.append(Check("panel_regular", _status(rep.all_regular), float(regular), float(len(rep.samples))))
    result.tables["probes"] = probes
    result.tables["ratios"] = ratios


def _suite_audit(cfg, model, result, parallel, strict):
    audit = audit_config(cfg, "assumption_audit")
    result.checks.extend(c for c in audit.checks if c.name not in {x.name for x in result.checks})
    result.tables.update(audit.tables)


SUITES: dict = {
    "prop1_asymptotes": (_suite_prop1, "asymptotes and decay rates of the kinetic flow"),
    "thm6_highenergy": (_suite_thm6, "high-energy limit against the classical asymptotes"),
    "lemma7_bounds": (_suite_lemma7, "symbol bounds of the Dollard phase deviation"),
    "lemma8_consistency": (_suite_lemma8, "effective-Hamiltonian flow against the full flow"),
    "thm4_shift": (_suite_thm4, "wave-front shift for degree-one homogeneous potentials"),
    "thm5_smoothing": (_suite_thm5, "smoothing for homogeneity degree in (1, 3/2)"),
    "assumption_audit": (_suite_audit, "configuration contracts on mu, nu, beta and the metric"),
}


def run_suite(name, cfg: ExperimentConfig, parallel=False, strict=False) -> SuiteResult:
    """Run one named suite; returns a result whose checks never abort each other.

    Requirement checks (``mu``, ``nu``, ``beta`` ranges, flat metric, ...) run
    first; if any fails the computation is skipped and the failure is logged at
    error level.  In ``strict`` mode inconclusive checks count as failures and
    the propagator escalates boundary-mass loss to an error.
    """
    if name not in SUITES:
        raise ConfigurationError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    fn, _ = SUITES[name]
    model = cfg.model()
    result = SuiteResult(name, cfg.hash())
    start = time.perf_counter()
    req = _requirement_checks(model, REQUIREMENTS[name])
    result.checks.extend(req)
    if any(c.status == FAIL for c in req):
        for c in req:
            if c.status == FAIL:
                logger.error("%s: requirement %s violated (%s, value %s)", name, c.name, c.detail, format_value(c.value))
    else:
        fn(cfg, model, result, parallel, strict)
    if strict:
        for c in result.checks:
            if c.status == INCONCLUSIVE:
                c.status = FAIL
    result.wall_clock = time.perf_counter() - start
    logger.info("suite %s: %s in %.2f s", name, result.status, result.wall_clock)
    return result


# -- reports ------------------------------------------------------------------------------------


def emit_report(result: SuiteResult, out_dir, formats=("csv", "summary-text")):
    """Write ``<suite>_<table>.csv`` files, ``<suite>_checks.csv`` and ``<suite>_summary.txt``.

    CSV payloads carry no wall-clock data, so reruns of the same configuration
    produce identical files.  Returns the written paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    if "csv" in formats:
        tables = dict(result.tables)
        checks = Table(["check", "status", "value", "tolerance", "detail"])
        for c in result.checks:
            checks.add(c.name, c.status, c.value, c.tolerance, c.detail)
        tables["checks"] = checks
        for tname, table in tables.items():
            path = os.path.join(out_dir, f"{result.suite}_{tname}.csv")
            with open(path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(table.columns)
                for row in table.rows:
                    w.writerow([format_value(v) for v in row])
            paths.append(path)
    if "summary-text" in formats:
        path = os.path.join(out_dir, f"{result.suite}_summary.txt")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(result.summary_text())
        paths.append(path)
    unknown = set(formats) - {"csv", "summary-text"}
    if unknown:
        raise ConfigurationError(f"unknown report format(s): {sorted(unknown)}")
    return paths


def read_table(path):
    """Parse an emitted CSV back into ``(columns, rows)`` with numeric fields as floats."""
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        columns = next(r, [])
        rows = []
        for row in r:
            out = []
            for v in row:
                try:
                    out.append(float(v))
                except ValueError:
                    out.append(v)
            rows.append(out)
    return columns, rows
