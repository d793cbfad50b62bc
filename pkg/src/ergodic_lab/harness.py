"""Experiment registry, configuration, seeding and report emission.

An experiment is a function of validated parameters and a :class:`RunContext`
that returns tables, summary values and tolerance-tagged checks. Replicas get
independent streams keyed by ``(master_seed, replica_index)``, so a report
does not depend on how many workers executed it.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .errors import UsageError, ValidationError

__all__ = [
    "Param",
    "Check",
    "Experiment",
    "ExperimentConfig",
    "ExperimentReport",
    "RunContext",
    "REGISTRY",
    "register",
    "derive_stream",
    "thread_count",
    "list_experiments",
    "parse_config_text",
    "load_config_file",
    "validate",
    "run",
    "format_float",
    "table_to_csv",
    "write_report",
]

THREADS_ENV = "ERGODIC_LAB_THREADS"


@dataclass(frozen=True)
class Param:
    type: type
    default: Any = None
    check: Callable[[Any], bool] | None = None
    help: str = ""

    @property
    def required(self):
        return self.default is None


@dataclass(frozen=True)
class Check:
    name: str
    value: Any
    tolerance: str
    passed: bool

    def as_dict(self):
        return {"name": self.name, "value": _jsonable(self.value),
                "tolerance": self.tolerance, "passed": bool(self.passed)}


@dataclass(frozen=True)
class Experiment:
    name: str
    func: Callable
    params: dict
    operation: str
    claim: str
    default_replicas: int = 1

    def describe(self):
        return {
            "name": self.name,
            "required_keys": sorted(k for k, p in self.params.items() if p.required),
            "optional_keys": sorted(k for k, p in self.params.items() if not p.required),
            "operation": self.operation,
            "claim": self.claim,
        }


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    replicas: int | None = None
    out: str | None = None


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    tables: dict
    summary: dict
    checks: list
    duration: float

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def summary_dict(self):
        return {
            "experiment": self.config.experiment,
            "params": {k: _jsonable(v) for k, v in self.config.params.items()},
            "seed": self.config.seed,
            "replicas": self.config.replicas,
            "summary": {k: _jsonable(v) for k, v in self.summary.items()},
            "checks": [c.as_dict() for c in self.checks],
            "passed": self.passed,
            "duration_s": self.duration,
        }


REGISTRY: dict[str, Experiment] = {}


def register(name, params, operation, claim, default_replicas=1):
    def deco(func):
        if name in REGISTRY:
            raise ValueError(f"duplicate experiment {name}")
        REGISTRY[name] = Experiment(name, func, params, operation, claim, default_replicas)
        return func

    return deco


def _ensure_loaded():
    from . import experiments  # noqa: F401  (populates the registry)


def derive_stream(master_seed, replica_index):
    """Counter-based stream for one replica: Philox keyed by ``(seed, index)``."""
    ss = np.random.SeedSequence([int(master_seed) & (2**64 - 1), int(replica_index)])
    return np.random.Generator(np.random.Philox(ss))


def thread_count(requested=None):
    """Worker count, capped by the ``ERGODIC_LAB_THREADS`` environment variable."""
    cap = os.environ.get(THREADS_ENV)
    n = requested or os.cpu_count() or 1
    if cap:
        try:
            c = int(cap)
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be a positive integer, got {cap!r}")
        if c < 1:
            raise UsageError(f"{THREADS_ENV} must be a positive integer, got {cap!r}")
        n = min(n, c)
    return max(1, int(n))


@dataclass
class RunContext:
    seed: int
    replicas: int
    threads: int

    def stream(self, k):
        return derive_stream(self.seed, k)

    def map_replicas(self, fn, n=None):
        """``[fn(k, stream(k)) for k in range(n)]``, possibly in parallel, in index order."""
        n = self.replicas if n is None else n
        if self.threads <= 1 or n <= 1:
            return [fn(k, self.stream(k)) for k in range(n)]
        with ThreadPoolExecutor(max_workers=min(self.threads, n)) as ex:
            futures = {k: ex.submit(fn, k, self.stream(k)) for k in range(n)}
            return [futures[k].result() for k in range(n)]


def list_experiments():
    _ensure_loaded()
    return [REGISTRY[k].describe() for k in sorted(REGISTRY)]


def parse_config_text(text):
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key=value, got {raw!r}")
        k, v = line.split("=", 1)
        k = k.strip()
        if not k:
            raise UsageError(f"config line {lineno}: empty key")
        out[k] = v.strip()
    return out


def load_config_file(path):
    try:
        return parse_config_text(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc


def _coerce(value, typ):
    if isinstance(value, typ) and not (typ is int and isinstance(value, bool)):
        return value
    if typ is bool:
        s = str(value).strip().lower()
        if s in ("1", "true", "yes", "on"):
            return True
        if s in ("0", "false", "no", "off"):
            return False
        raise ValueError(value)
    if typ is int:
        f = float(value)
        if not f.is_integer():
            raise ValueError(value)
        return int(f)
    return typ(value)


def validate(config: ExperimentConfig) -> ExperimentConfig:
    """Type-coerce and range-check parameters; fills defaults.

    Raises :class:`UsageError` for an unknown experiment and
    :class:`ValidationError` naming every offending key.
    """
    _ensure_loaded()
    exp = REGISTRY.get(config.experiment)
    if exp is None:
        raise UsageError(f"unknown experiment {config.experiment!r}; known: {sorted(REGISTRY)}")
    bad, params, reasons = [], {}, {}
    for key in sorted(set(config.params) - set(exp.params)):
        bad.append(key)
        reasons[key] = "unknown key"
    for key, spec in exp.params.items():
        if key not in config.params:
            if spec.required:
                bad.append(key)
                reasons[key] = "missing"
            else:
                params[key] = spec.default
            continue
        try:
            v = _coerce(config.params[key], spec.type)
        except (TypeError, ValueError):
            bad.append(key)
            continue
        if isinstance(v, float) and not math.isfinite(v):
            bad.append(key)
            continue
        if spec.check is not None and not spec.check(v):
            bad.append(key)
            continue
        params[key] = v
    replicas = exp.default_replicas if config.replicas is None else config.replicas
    if not isinstance(replicas, int) or replicas < 1:
        bad.append("replicas")
    if bad:
        details = ", ".join(
            f"{k} ({reasons.get(k) or (exp.params[k].help if k in exp.params else '') or 'invalid'})"
            for k in bad
        )
        raise ValidationError(f"invalid configuration for {exp.name}: {details}", keys=bad)
    return ExperimentConfig(exp.name, params, int(config.seed), replicas, config.out)


def run(config: ExperimentConfig, threads=None) -> ExperimentReport:
    cfg = validate(config)
    exp = REGISTRY[cfg.experiment]
    ctx = RunContext(cfg.seed, cfg.replicas, thread_count(threads))
    t0 = time.perf_counter()
    tables, summary, checks = exp.func(dict(cfg.params), ctx)
    duration = time.perf_counter() - t0
    return ExperimentReport(cfg, tables, summary, list(checks), duration)


def format_float(x):
    """Shortest decimal that round-trips to the same IEEE-754 double."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def table_to_csv(table):
    cols = list(table)
    arrays = [np.atleast_1d(np.asarray(table[c])) for c in cols]
    n = {a.shape[0] for a in arrays}
    if len(n) != 1:
        raise UsageError("table columns must have equal length")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in zip(*arrays):
        w.writerow([format_float(v) if np.isscalar(v) and not isinstance(v, str) else v for v in row])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else repr(f)
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    return v


def write_report(report: ExperimentReport, out, fmt="csv"):
    """Write tables and summary under directory ``out``; returns written paths."""
    if fmt not in ("csv", "json"):
        raise UsageError(f"unknown format {fmt!r}")
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt == "csv":
        for name, table in report.tables.items():
            p = d / f"{name}.csv"
            p.write_text(table_to_csv(table))
            written.append(p)
        p = d / "summary.json"
        p.write_text(json.dumps(report.summary_dict(), indent=2))
        written.append(p)
    else:
        body = report.summary_dict()
        body["tables"] = {n: {c: _jsonable(np.asarray(v)) for c, v in t.items()}
                          for n, t in report.tables.items()}
        p = d / "report.json"
        p.write_text(json.dumps(body, indent=2))
        written.append(p)
    return written
