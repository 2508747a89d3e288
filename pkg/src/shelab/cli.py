"""Command-line front end: ``shelab {verify,moments,simulate,holder,weaklimit}``.

Each run is described by one JSON document (``--config``). The resolved
configuration, with defaults filled in, is hashed into a run id and written
back into ``metadata.json`` next to the artifacts; reloading that document
gives the same configuration. Artifacts never record timings or thread
counts, so identical configs and seeds give byte-identical files.

Exit codes: 0 success, 1 invalid configuration, 2 numerical failure,
3 acceptance violation (failed lemma check or unmet ``expect`` block).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass
from typing import Any, Callable, Optional

import numpy as np

from . import __version__
from .holder_constants import SupSearch, compute_constants
from .initial_data import InitialMeasure, j0
from .lemmas import CHECKS, FAULT_TARGETS, run_suite
from .moments import RhoSpec, delta_I_second_moment, exact_second_moment, pmoment_upper_bound, power_law_scaling
from .regularity import (fit_exponent, moment_increments, near_zero_exponent, synthetic_ensemble,
                         weak_limit_error)
from .rng import NoiseSeed
from .simulator import (FieldEnsemble, GridSpec, atomic_write, concat_ensembles, ensemble_metadata,
                        simulate, write_ensemble_csv)

__all__ = ["main", "run", "ConfigError", "ExperimentConfig", "load_config", "COMMANDS"]

COMMANDS = ("verify", "moments", "simulate", "holder", "weaklimit")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ACCEPTANCE = 0, 1, 2, 3


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


class _Section:
    """Typed access to one JSON object with dotted field paths in errors."""

    def __init__(self, doc: Any, path: str):
        if not isinstance(doc, dict):
            raise ConfigError(f"{path or '<root>'}: expected an object")
        self.doc, self.path = doc, path
        self.used: set = set()

    def _p(self, name):
        return f"{self.path}.{name}" if self.path else name

    def has(self, name) -> bool:
        return name in self.doc

    def raw(self, name, default=None, required=False):
        self.used.add(name)
        if name not in self.doc:
            if required:
                raise ConfigError(f"{self._p(name)}: required field missing")
            return default
        return self.doc[name]

    def num(self, name, default=None, required=False, positive=False, nonneg=False) -> Optional[float]:
        v = self.raw(name, default, required)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(f"{self._p(name)}: expected a finite number, got {v!r}")
        if positive and v <= 0:
            raise ConfigError(f"{self._p(name)}: must be positive")
        if nonneg and v < 0:
            raise ConfigError(f"{self._p(name)}: must be nonnegative")
        return float(v)

    def int(self, name, default=None, required=False, minimum=None) -> Optional[int]:
        v = self.raw(name, default, required)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{self._p(name)}: expected an integer, got {v!r}")
        if minimum is not None and v < minimum:
            raise ConfigError(f"{self._p(name)}: must be >= {minimum}")
        return int(v)

    def bool(self, name, default=False) -> bool:
        v = self.raw(name, default)
        if not isinstance(v, bool):
            raise ConfigError(f"{self._p(name)}: expected true or false")
        return v

    def choice(self, name, options, default=None) -> str:
        v = self.raw(name, default, required=default is None)
        if v not in options:
            raise ConfigError(f"{self._p(name)}: expected one of {list(options)}, got {v!r}")
        return v

    def sub(self, name, required=True) -> Optional["_Section"]:
        v = self.raw(name, None, required)
        return None if v is None else _Section(v, self._p(name))

    def values(self, name, required=True, default=None) -> Optional[list]:
        """A list of numbers, or ``{"linspace": [a, b, n]}`` / ``{"logspace": [a, b, n]}``
        (base-10 exponents)."""
        v = self.raw(name, default, required)
        if v is None:
            return None
        p = self._p(name)
        if isinstance(v, dict):
            if len(v) != 1 or next(iter(v)) not in ("linspace", "logspace"):
                raise ConfigError(f"{p}: expected a list or a single linspace/logspace entry")
            kind, args = next(iter(v.items()))
            if not (isinstance(args, list) and len(args) == 3 and isinstance(args[2], int) and args[2] >= 1):
                raise ConfigError(f"{p}.{kind}: expected [start, stop, count]")
            arr = (np.linspace if kind == "linspace" else np.logspace)(float(args[0]), float(args[1]), args[2])
            return [float(a) for a in arr]
        if not isinstance(v, list) or not v:
            raise ConfigError(f"{p}: expected a nonempty list")
        for k, a in enumerate(v):
            if isinstance(a, bool) or not isinstance(a, (int, float)) or not math.isfinite(a):
                raise ConfigError(f"{p}[{k}]: expected a finite number")
        return [float(a) for a in v]

    def check_unknown(self):
        extra = sorted(set(self.doc) - self.used)
        if extra:
            raise ConfigError(f"{self._p(extra[0])}: unknown field")


def _wrap(path: str, fn: Callable, *args):
    try:
        return fn(*args)
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    """A validated configuration; ``doc`` is the resolved JSON document."""

    command: str
    doc: dict

    @property
    def run_id(self) -> str:
        text = json.dumps(self.doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def to_json(self) -> dict:
        return self.doc


def load_config(command: str, doc: dict, seed: Optional[int] = None) -> ExperimentConfig:
    """Validate ``doc`` for ``command`` and resolve defaults."""
    if command not in COMMANDS:
        raise ConfigError(f"command: unknown command {command!r}")
    doc = dict(doc or {})
    if "command" in doc and doc["command"] != command:
        raise ConfigError(f"command: config is for {doc['command']!r}, not {command!r}")
    doc["command"] = command
    if seed is not None:
        doc["seed"] = seed
    root = _Section(doc, "")
    root.raw("command")
    out: dict = {"command": command}
    seed_v = root.int("seed", 0, minimum=0)
    if seed_v >= 1 << 64:
        raise ConfigError("seed: must fit in an unsigned 64-bit integer")
    out["seed"] = seed_v
    _RESOLVERS[command](root, out)
    root.check_unknown()
    return ExperimentConfig(command, out)


def _resolve_measure(root: _Section, out: dict):
    m = root.raw("measure", required=True)
    meas = _wrap("measure", InitialMeasure.from_json, m)
    out["measure"] = meas.to_json()
    return meas


def _resolve_rho(root: _Section, out: dict):
    r = root.raw("rho", required=True)
    if not isinstance(r, dict):
        raise ConfigError("rho: expected an object")
    rho = _wrap("rho", RhoSpec.from_json, r)
    out["rho"] = rho.to_json()
    return rho


def _resolve_verify(root, out):
    out["trials"] = root.int("trials", 1000, minimum=1)
    only = root.raw("only", None)
    if only is not None:
        if not isinstance(only, list) or any(o not in CHECKS for o in only):
            raise ConfigError(f"only: expected a list drawn from {list(CHECKS)}")
    out["only"] = only
    fault = root.raw("inject_fault", None)
    if fault is not None and fault not in FAULT_TARGETS:
        raise ConfigError(f"inject_fault: expected one of {list(FAULT_TARGETS)}")
    out["inject_fault"] = fault


def _resolve_moments(root, out):
    _resolve_measure(root, out)
    _resolve_rho(root, out)
    out["nu"] = root.num("nu", 1.0, positive=True)
    out["t"] = root.values("t")
    if any(t <= 0 for t in out["t"]):
        raise ConfigError("t: times must be positive")
    out["x"] = root.values("x", required=False, default=[0.0])
    ps = root.raw("p", [2])
    if not isinstance(ps, list) or not ps or any(isinstance(p, bool) or not isinstance(p, int)
                                                 or p < 2 or p % 2 for p in ps):
        raise ConfigError("p: expected a list of even integers >= 2")
    out["p"] = ps


def _resolve_sim(root, out, need_replicas=True):
    meas = _resolve_measure(root, out)
    _resolve_rho(root, out)
    out["nu"] = root.num("nu", 1.0, positive=True)
    g = root.sub("grid")
    gd = dict(g.doc)
    gd.setdefault("nu", out["nu"])
    if gd["nu"] != out["nu"]:
        raise ConfigError("grid.nu: must equal nu")
    grid = _wrap("grid", GridSpec.from_json, gd)
    out["grid"] = grid.to_json()
    out["replicas"] = root.int("replicas", required=need_replicas, minimum=1)
    out["replica_offset"] = root.int("replica_offset", 0, minimum=0)
    out["batch"] = root.int("batch", out["replicas"], minimum=1)
    out["save_every"] = root.int("save_every", 1, minimum=1)
    st = root.values("save_times", required=False)
    if st is not None:
        _wrap("save_times", lambda: [grid.time_index(t) for t in st])
    out["save_times"] = st
    sw = root.values("save_window", required=False)
    if sw is not None and (len(sw) != 2 or sw[0] >= sw[1]):
        raise ConfigError("save_window: expected [x_lo, x_hi] with x_lo < x_hi")
    out["save_window"] = sw
    out["warm_start"] = root.bool("warm_start", False)
    return meas, grid


def _resolve_simulate(root, out):
    _resolve_sim(root, out)
    out["write_ensemble"] = root.bool("write_ensemble", True)


def _resolve_expect(root, out, keys):
    e = root.sub("expect", required=False)
    if e is None:
        out["expect"] = None
        return
    res = {}
    for k in keys:
        if k in ("time", "space", "slope"):
            v = e.values(k, required=False)
            if v is not None and (len(v) != 2 or v[0] > v[1]):
                raise ConfigError(f"expect.{k}: expected [lo, hi]")
            res[k] = v
        elif k in ("min_r2", "final_ratio"):
            res[k] = e.num(k)
        elif k in ("decreasing", "increasing_as_t_decreases"):
            res[k] = e.bool(k, False)
    e.check_unknown()
    out["expect"] = res


def _resolve_holder(root, out):
    mode = root.choice("mode", ("interior", "near_zero", "power_law", "synthetic"), "interior")
    out["mode"] = mode
    out["p"] = root.int("p", 2, minimum=2)
    if out["p"] % 2:
        raise ConfigError("p: must be even")
    if mode == "power_law":
        out["a"] = root.num("a", required=True)
        if not 0 < out["a"] < 1:
            raise ConfigError("a: must lie in (0, 1)")
        _resolve_rho(root, out)
        out["nu"] = root.num("nu", 1.0, positive=True)
        out["t"] = root.values("t")
        _resolve_expect(root, out, ("slope", "increasing_as_t_decreases"))
        return
    if mode == "synthetic":
        s = root.sub("synthetic")
        out["synthetic"] = {"beta": s.num("beta", required=True), "direction": s.choice("direction", ("time", "space")),
                            "replicas": s.int("replicas", 2000, minimum=2), "n_t": s.int("n_t", 65, minimum=4),
                            "n_x": s.int("n_x", 65, minimum=4), "dt": s.num("dt", 1.0 / 64, positive=True),
                            "dx": s.num("dx", 1.0 / 64, positive=True)}
        s.check_unknown()
        if not 0 < out["synthetic"]["beta"] <= 1:
            raise ConfigError("synthetic.beta: must lie in (0, 1]")
        out["directions"] = [out["synthetic"]["direction"]]
    else:
        _resolve_sim(root, out)
        dirs = root.raw("directions", ["time", "space"])
        if not isinstance(dirs, list) or not dirs or any(d not in ("time", "space") for d in dirs):
            raise ConfigError("directions: expected a list drawn from ['time', 'space']")
        out["directions"] = dirs
    out["field"] = root.choice("field", ("u", "I"), "I" if mode != "near_zero" else "u")
    out["time_lags"] = root.values("time_lags", required="time" in out["directions"])
    out["space_lags"] = root.values("space_lags", required="space" in out["directions"])
    if mode == "near_zero":
        out["anchor_x"] = root.num("anchor_x", 0.0)
        out["anchor_t"] = root.num("anchor_t", 0.0, nonneg=True)
        out["window"] = None
    else:
        w = root.values("window", required=mode != "synthetic")
        if w is not None and len(w) != 4:
            raise ConfigError("window: expected [t_lo, t_hi, x_lo, x_hi]")
        out["window"] = w
    b = root.sub("bound", required=False)
    if b is None:
        out["bound"] = None
    else:
        if mode == "synthetic":
            raise ConfigError("bound: not available for synthetic ensembles")
        out["bound"] = {"n": b.num("n", required=True), "star": b.bool("star", False),
                        "conservative": b.bool("conservative", False), "grid": b.int("grid", 201, minimum=3)}
        b.check_unknown()
        if out["bound"]["n"] <= 1:
            raise ConfigError("bound.n: must exceed 1")
    _resolve_expect(root, out, ("time", "space", "min_r2"))


def _resolve_weaklimit(root, out):
    _resolve_sim(root, out)
    ph = root.sub("phi")
    kind = ph.choice("kind", ("gaussian", "bump"))
    out["phi"] = {"kind": kind, "center": ph.num("center", 0.0), "width": ph.num("width", required=True, positive=True)}
    ph.check_unknown()
    out["t_list"] = root.values("t_list")
    out["max_rel_stderr"] = root.num("max_rel_stderr", 0.5, positive=True)
    _resolve_expect(root, out, ("decreasing", "final_ratio"))


_RESOLVERS = {"verify": _resolve_verify, "moments": _resolve_moments, "simulate": _resolve_simulate,
              "holder": _resolve_holder, "weaklimit": _resolve_weaklimit}


# ---------------------------------------------------------------------------
# execution helpers


def _fmt(v) -> str:
    return "nan" if v is None else f"{float(v):.17g}"


def _csv(header: list, rows: list) -> str:
    lines = [",".join(header)] + [",".join(_fmt(v) if not isinstance(v, str) else v for v in r) for r in rows]
    return "\n".join(lines) + "\n"


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n"


class _Writer:
    def __init__(self, out_dir: str, fmt: str):
        self.dir, self.fmt = out_dir, fmt
        self.artifacts: list = []

    def text(self, name: str, text: str):
        atomic_write(os.path.join(self.dir, name), text)
        self.artifacts.append(name)

    def table(self, stem: str, header: list, rows: list, doc=None):
        if self.fmt in ("csv", "both"):
            self.text(stem + ".csv", _csv(header, rows))
        if self.fmt in ("json", "both"):
            self.text(stem + ".json", _dumps(doc if doc is not None else
                                             [dict(zip(header, r)) for r in rows]))

    def ensemble(self, ens: FieldEnsemble, name="ensemble.csv"):
        write_ensemble_csv(ens, os.path.join(self.dir, name))
        self.artifacts.append(name)


def _simulate(cfg: dict) -> FieldEnsemble:
    meas = InitialMeasure.from_json(cfg["measure"])
    rho = RhoSpec.from_json(cfg["rho"])
    grid = GridSpec.from_json(cfg["grid"])
    if cfg["save_times"] is not None:
        steps = sorted({grid.time_index(t) for t in cfg["save_times"]})
    else:
        steps = list(range(0, grid.nt + 1, cfg["save_every"]))
        if steps[-1] != grid.nt:
            steps.append(grid.nt)
    seed = NoiseSeed(cfg["seed"])
    parts = []
    start, total = cfg["replica_offset"], cfg["replicas"]
    for off in range(0, total, cfg["batch"]):
        n = min(cfg["batch"], total - off)
        parts.append(simulate(meas, rho, grid, seed, n, save_steps=steps,
                              save_window=None if cfg["save_window"] is None else tuple(cfg["save_window"]),
                              warm_start=cfg["warm_start"], replica_offset=start + off))
    return concat_ensembles(parts)


def _phi(phi_cfg: dict) -> Callable:
    c, w = phi_cfg["center"], phi_cfg["width"]
    if phi_cfg["kind"] == "gaussian":
        return lambda x: np.exp(-0.5 * ((np.asarray(x, dtype=float) - c) / w) ** 2)

    def bump(x):
        y = (np.asarray(x, dtype=float) - c) / w
        out = np.zeros_like(y)
        inside = np.abs(y) < 1.0
        out[inside] = np.exp(-1.0 / (1.0 - y[inside] ** 2))
        return out if out.ndim else float(out)
    return bump


# ---------------------------------------------------------------------------
# commands; each returns (summary, acceptance_ok)


def cmd_verify(cfg: dict, w: _Writer):
    results = run_suite(trials=cfg["trials"], seed=cfg["seed"], inject_fault=cfg["inject_fault"],
                        only=cfg["only"])
    rows = [[r.lemma_id, r.kind, r.trials, r.max_violation, r.max_ratio, "pass" if r.passed else "fail"]
            for r in results]
    docs = [r.to_json() for r in results]
    for d in docs:
        d.pop("seconds")
    w.table("verify_report", ["lemma_id", "kind", "trials", "max_violation", "max_ratio", "status"], rows, docs)
    failed = [r.lemma_id for r in results if not r.passed]
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.lemma_id} trials={r.trials} "
              f"max_violation={r.max_violation:.3e}", file=sys.stderr)
    return {"failed": failed, "checks": len(results)}, not failed


def cmd_moments(cfg: dict, w: _Writer):
    meas = InitialMeasure.from_json(cfg["measure"])
    rho = RhoSpec.from_json(cfg["rho"])
    nu = cfg["nu"]
    mk = rho.moment_kernel(nu)
    exact_ok = rho.is_quasi_linear
    dirac = meas.is_dirac_origin
    header = ["t", "x", "J0", "second_moment"] + [f"bound_p{p}" for p in cfg["p"]] + ["delta_I_second_moment"]
    rows = []
    for t in cfg["t"]:
        for x in cfg["x"]:
            row = [t, x, float(j0(meas, nu, t, x))]
            row.append(exact_second_moment(meas, mk, rho.varrho, t, x) if exact_ok else None)
            row += [pmoment_upper_bound(meas, rho, p, t, x, nu) for p in cfg["p"]]
            row.append(float(delta_I_second_moment(mk, t, x)) if dirac and mk.lam != 0 else None)
            rows.append(row)
    w.table("moments", header, rows)
    return {"rows": len(rows)}, True


def _moment_summary(ens: FieldEnsemble):
    rows = []
    u, I = ens.values, ens.I
    n = ens.replicas
    for k, t in enumerate(ens.times):
        u2 = u[:, k, :] ** 2
        se = u2.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(u2.shape[1])
        m1, m2, mi = u[:, k, :].mean(axis=0), u2.mean(axis=0), (I[:, k, :] ** 2).mean(axis=0)
        for i, x in enumerate(ens.xs):
            rows.append([float(t), float(x), m1[i], m2[i], se[i], mi[i]])
    return ["t", "x", "mean_u", "mean_u2", "stderr_u2", "mean_I2"], rows


def cmd_simulate(cfg: dict, w: _Writer):
    ens = _simulate(cfg)
    if cfg["write_ensemble"]:
        w.ensemble(ens)
    header, rows = _moment_summary(ens)
    w.table("moment_summary", header, rows)
    w.text("ensemble_metadata.json", _dumps(ensemble_metadata(ens)))
    return {"replicas": ens.replicas, "saved_times": len(ens.t_index)}, True


def _in(v, rng):
    return rng is None or (rng[0] <= v <= rng[1])


def cmd_holder(cfg: dict, w: _Writer):
    exp = cfg["expect"] or {}
    if cfg["mode"] == "power_law":
        rho = RhoSpec.from_json(cfg["rho"])
        slope, vals = power_law_scaling(cfg["a"], rho.moment_kernel(cfg["nu"]), cfg["t"])
        ts = sorted(cfg["t"])
        w.table("power_law", ["t", "I_norm_sq"], [[t, v] for t, v in zip(ts, vals)])
        rising = bool(np.all(np.diff(vals) < 0))
        summary = {"slope": slope, "increasing_as_t_decreases": rising}
        ok = _in(slope, exp.get("slope")) and (rising or not exp.get("increasing_as_t_decreases"))
        w.text("estimates.json", _dumps(summary))
        return summary, ok

    if cfg["mode"] == "synthetic":
        s = cfg["synthetic"]
        ens = synthetic_ensemble(s["beta"], s["direction"], s["replicas"], s["n_t"], s["n_x"], s["dt"], s["dx"],
                                 seed=cfg["seed"])
        g = ens.grid
        window = tuple(cfg["window"]) if cfg["window"] else (float(ens.times[0]), float(ens.times[-1]),
                                                              float(ens.xs[0]), float(ens.xs[-1]))
        field = "u"
    else:
        ens = _simulate(cfg)
        window = None if cfg["window"] is None else tuple(cfg["window"])
        field = cfg["field"]

    estimates, ok = {}, True
    for d in cfg["directions"]:
        lags = cfg["time_lags"] if d == "time" else cfg["space_lags"]
        if cfg["mode"] == "near_zero":
            est = near_zero_exponent(ens, cfg["p"], d, lags, cfg["anchor_x"], cfg["anchor_t"], field)
        else:
            table = moment_increments(ens, cfg["p"], d, window, lags, field)
            w.text(f"lags_{d}.csv", table.to_csv())
            est = fit_exponent(table)
        estimates[d] = est.to_json()
        ok = ok and _in(est.exponent, exp.get(d))
        if exp.get("min_r2") is not None:
            ok = ok and est.r_squared >= exp["min_r2"]
    w.text("estimates.json", _dumps(estimates))
    if cfg["bound"] is not None:
        b = cfg["bound"]
        consts = compute_constants(InitialMeasure.from_json(cfg["measure"]), RhoSpec.from_json(cfg["rho"]),
                                   cfg["nu"], cfg["p"], b["n"], b["star"], search=SupSearch(grid=b["grid"]),
                                   conservative=b["conservative"])
        w.text("constants.json", _dumps(consts.to_json()))
    return {d: estimates[d]["exponent"] for d in estimates}, ok


def cmd_weaklimit(cfg: dict, w: _Writer):
    ens = _simulate(cfg)
    res = weak_limit_error(ens, _phi(cfg["phi"]), cfg["t_list"], max_rel_stderr=cfg["max_rel_stderr"])
    w.table("weaklimit", ["t", "mean_sq_error", "stderr"], [list(r) for r in res])
    errs = [r[1] for r in res]
    exp = cfg["expect"] or {}
    ok = True
    if exp.get("decreasing"):
        ok = ok and all(b < a for a, b in zip(errs, errs[1:]))
    if exp.get("final_ratio") is not None:
        ok = ok and errs[-1] < exp["final_ratio"] * errs[0]
    return {"errors": errs}, ok


_COMMANDS = {"verify": cmd_verify, "moments": cmd_moments, "simulate": cmd_simulate,
             "holder": cmd_holder, "weaklimit": cmd_weaklimit}


# ---------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shelab", description="Stochastic heat equation experiments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON configuration (required except for verify)")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", help="output directory (default shelab-out/<command>-<run id>)")
    p.add_argument("--format", choices=("csv", "json", "both"), default="both")
    p.add_argument("--threads", type=int, default=0, help="worker threads, 0 = automatic")
    p.add_argument("--inject-fault", nargs="?", const="gaussian_product", default=None,
                   help="verify only: perturb one identity check (default gaussian_product)")
    p.add_argument("--trials", type=int, help="verify only: trials per check")
    return p


def _set_threads(n: int):
    import numba
    if n < 0:
        raise ConfigError("--threads: must be >= 0")
    limit = numba.config.NUMBA_NUM_THREADS
    numba.set_num_threads(limit if n == 0 else min(n, limit))


def run(argv: Optional[list] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command != "verify" and (args.inject_fault is not None or args.trials is not None):
            raise ConfigError("--inject-fault and --trials apply to verify only")
        if args.config is None:
            if args.command != "verify":
                raise ConfigError("--config: required for this command")
            doc = {}
        else:
            try:
                with open(args.config) as fh:
                    doc = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"--config: {exc}") from exc
        if args.command == "verify":
            if args.trials is not None:
                doc["trials"] = args.trials
            if args.inject_fault is not None:
                doc["inject_fault"] = args.inject_fault
        if args.seed is not None and not 0 <= args.seed < 1 << 64:
            raise ConfigError("--seed: must fit in an unsigned 64-bit integer")
        cfg = load_config(args.command, doc, args.seed)
        _set_threads(args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = args.out or os.path.join("shelab-out", f"{cfg.command}-{cfg.run_id[:12]}")
    writer = _Writer(out_dir, args.format)
    try:
        summary, ok = _COMMANDS[cfg.command](cfg.doc, writer)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    meta = {"command": cfg.command, "run_id": cfg.run_id, "version": __version__, "config": cfg.to_json(),
            "artifacts": sorted(writer.artifacts), "summary": summary, "acceptance": bool(ok)}
    atomic_write(os.path.join(out_dir, "metadata.json"), _dumps(meta))
    print(out_dir)
    return EXIT_OK if ok else EXIT_ACCEPTANCE


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
