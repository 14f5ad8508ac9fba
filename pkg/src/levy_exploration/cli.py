"""
Command line runner.

Every check in the package is one subcommand.  Settings come from three
layers, later ones winning: built-in per-command defaults, an INI config
file (``--config``) and command line flags.  The fully resolved config is
embedded in every JSON report, so a report can be reproduced from itself.

Config file schema::

    [run]
    seed = 0
    n_paths = 1000
    eps = 0.01          # truncation level
    horizon = 14        # time horizon (initial horizon for excursion tests)
    horizon_cap = 1e5   # doubling cap for excursion tests
    out = results

    [mechanism]
    kind = stable       # stable | tabulated
    alpha = 1.5
    alpha0 = 0
    # ell_max = 10      (truncated stable)
    # csv = table.csv   (tabulated: rows ell,density)
    # tilt = 1

    [test]
    lambda = 1
    gamma = 1
    theta = 1
    mu = 1:0.5, 3:0.2   # height:mass pairs
    f = 0.2, 0.3        # f(x) = c0 + c1 exp(-x); an optional third value is the rate
    kappa = 0.3         # f(x) = kappa (1 - exp(-x)); overrides f
    ...

Reports go to ``<out>/<command>/``; ``out`` defaults to the
``LEVY_EXPLORATION_OUT`` environment variable, then ``./levy_results``.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import checks
from .exploration import explore
from .generator_lab import (
    EstimatorReport,
    GeneratorFunctional,
    _mean_se,
    duality_test,
    martingale_test,
    resolvent_mc,
)
from .levy_model import mechanism_from_dict, tilt, truncate
from .measure import AtomicMeasure, TestFunction, WeightFunction
from .path_sim import simulate_path
from .poisson_rep import MarkedPoissonConfig, campbell_check, exchangeability_check, representation_test

ENV_OUT = "LEVY_EXPLORATION_OUT"
DEFAULT_OUT = "levy_results"


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists ``(field path, message)``."""

    def __init__(self, errors):
        self.errors = errors
        super().__init__("; ".join(f"{p}: {m}" for p, m in errors))


# ---------------------------------------------------------------------------
# field parsing


def parse_mu(text):
    """``"1:0.5, 3:0.2"`` -> measure; empty string -> zero measure."""
    atoms = []
    for part in str(text).replace(";", ",").split(","):
        part = part.strip()
        if not part:
            continue
        h, m = part.split(":")
        atoms.append((float(h), float(m)))
    for h, m in atoms:
        if not (h >= 0 and m >= 0 and math.isfinite(m)):
            raise ValueError("heights and masses must be non-negative")
    return AtomicMeasure.from_atoms(atoms)


def parse_floats(text):
    return [float(x) for x in str(text).replace(";", ",").split(",") if x.strip()]


def _f_params(test):
    if test.get("kappa") is not None:
        k = float(test["kappa"])
        return (k, -k, 1.0)
    v = parse_floats(test["f"])
    if len(v) not in (2, 3):
        raise ValueError("expected c0,c1 or c0,c1,k")
    return tuple(v) if len(v) == 3 else (v[0], v[1], 1.0)


def _pos_int(x):
    v = int(float(x))
    if v != float(x) or v < 1:
        raise ValueError("must be a positive integer")
    return v


def _nonneg_int(x):
    v = int(float(x))
    if v != float(x) or v < 0:
        raise ValueError("must be a non-negative integer")
    return v


def _pos(x):
    v = float(x)
    if not v > 0:
        raise ValueError("must be > 0")
    return v


def _nonneg(x):
    v = float(x)
    if not v >= 0:
        raise ValueError("must be >= 0")
    return v


def _unit(x):
    v = float(x)
    if not 0 < v < 1:
        raise ValueError("must lie in (0, 1)")
    return v


def _bool(x):
    if isinstance(x, bool):
        return x
    s = str(x).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError("must be a boolean")


RUN_SCHEMA = {
    "seed": _nonneg_int,
    "n_paths": _pos_int,
    "eps": _unit,
    "horizon": _pos,
    "horizon_cap": _pos,
    "out": str,
}


def _kept(check):
    """Validate with ``check`` but keep the original text."""

    def conv(s):
        check(s)
        return str(s)

    return conv


def _f_spec(s):
    if len(parse_floats(s)) not in (2, 3):
        raise ValueError("expected c0,c1 or c0,c1,k")


TEST_SCHEMA = {
    "lambda": _nonneg,
    "gamma": _nonneg,
    "theta": _nonneg,
    "mu": _kept(parse_mu),
    "f": _kept(_f_spec),
    "kappa": float,
    "grid": _kept(lambda s: [_pos(x) for x in parse_floats(s)]),
    "stopped": _bool,
    "r0": _pos,
    "A": _pos,
    "delta": _pos,
    "n_quad": _pos_int,
    "n_per_node": _pos_int,
    "n_samples": _pos_int,
    "n_cases": _pos_int,
    "g_rate": _pos,
    "at": _kept(lambda s: [_nonneg(x) for x in parse_floats(s)]),
    "write_paths": _bool,
}


# ---------------------------------------------------------------------------
# per-command defaults

_STABLE = {"kind": "stable", "alpha": "1.5"}

COMMANDS = {
    "simulate": ({"n_paths": 10, "eps": 1e-4, "horizon": 0.01}, {"write_paths": True}),
    "explore": ({"n_paths": 10, "eps": 1e-4, "horizon": 0.01}, {"mu": "", "at": "0.005", "write_paths": True}),
    "verify-invariants": ({"n_paths": 20, "eps": 1e-4, "horizon": 0.01}, {"n_cases": 200}),
    "martingale": (
        {"n_paths": 1000, "eps": 1e-3, "horizon": 2.0},
        {"lambda": 1.0, "mu": "1:0.5", "f": "0.3,-0.3", "stopped": False, "theta": 0.0},
    ),
    "resolvent": ({"n_paths": 1000, "eps": 1e-2, "horizon": 14.0}, {"lambda": 1.0, "mu": "1:0.5", "f": "0.2,0.3"}),
    "duality": (
        {"n_paths": 300, "eps": 1e-2, "horizon": 64.0, "horizon_cap": 1e5},
        {"gamma": 1.0, "f": "0.2,0.3", "r0": 0.3},
    ),
    "poisson-rep": (
        {"n_paths": 300, "eps": 1e-2, "horizon": 64.0, "horizon_cap": 1e5},
        {"gamma": 1.0, "f": "0.2,0.3", "r0": 0.3, "A": 1.0, "delta": 1e-4, "n_quad": 32, "n_per_node": 500, "n_samples": 20000},
    ),
    "tilt-check": ({}, {"theta": "0.1,0.5,1,2,5", "grid": ""}),
    "metric-check": ({}, {"n_cases": 1000, "g_rate": 1.0}),
}
# theta is a list for tilt-check
_LIST_THETA = {"tilt-check"}

RUN_DEFAULTS = {"seed": 0, "n_paths": 1000, "eps": 1e-2, "horizon": 1.0, "horizon_cap": 1e5, "out": None}


def resolve_config(command, file_cfg=None, flags=None):
    """Merge defaults, config-file sections and flags; validate every field.

    Returns a plain dict ``{"command", "run", "mechanism", "test"}`` with
    typed values.  Raises :class:`ConfigError` listing every bad field.
    """
    run_d, test_d = COMMANDS[command]
    cfg = {
        "run": {**RUN_DEFAULTS, **run_d},
        "mechanism": dict(_STABLE),
        "test": dict(test_d),
    }
    for sec in ("run", "mechanism", "test"):
        cfg[sec].update((file_cfg or {}).get(sec, {}))
    for key, val in (flags or {}).items():
        if val is None:
            continue
        sec, name = key.split(".", 1)
        cfg[sec][name] = val
    if cfg["run"]["out"] is None:
        cfg["run"]["out"] = os.environ.get(ENV_OUT, DEFAULT_OUT)

    errors = []
    for name, val in list(cfg["run"].items()):
        conv = RUN_SCHEMA.get(name)
        if conv is None:
            errors.append((f"run.{name}", "unknown field"))
            continue
        try:
            cfg["run"][name] = conv(val)
        except (TypeError, ValueError) as e:
            errors.append((f"run.{name}", str(e) or "invalid value"))
    for name, val in list(cfg["test"].items()):
        if name == "theta" and command in _LIST_THETA:
            conv = _kept(lambda s: [_nonneg(x) for x in parse_floats(s)])
        else:
            conv = TEST_SCHEMA.get(name)
        if conv is None:
            errors.append((f"test.{name}", "unknown field"))
            continue
        if val is None:
            continue
        try:
            cfg["test"][name] = conv(val)
        except (TypeError, ValueError) as e:
            errors.append((f"test.{name}", str(e) or "invalid value"))
    # cross-field preconditions
    t = cfg["test"]
    if command == "resolvent" and not errors and not t["lambda"] > 0:
        errors.append(("test.lambda", "the resolvent needs lambda > 0"))
    if command == "martingale" and not errors:
        try:
            fp = _f_params(t)
            if not t["stopped"] and fp[0] + fp[1] != 0.0:
                errors.append(("test.f", "the unstopped martingale needs f(0) = 0 (use kappa)"))
        except (KeyError, ValueError) as e:
            errors.append(("test.f", str(e)))
    errors += _mechanism_errors(cfg["mechanism"])
    if not errors:
        cfg["mechanism"] = {k: str(v) for k, v in cfg["mechanism"].items()}
        if "csv" in cfg["mechanism"] and file_cfg and "_base" in file_cfg:
            cfg["mechanism"]["csv"] = str(Path(file_cfg["_base"]) / cfg["mechanism"]["csv"])
        try:
            truncate(_mechanism(cfg), cfg["run"]["eps"])
        except (TypeError, ValueError, OSError) as e:
            errors.append(("mechanism", str(e)))
    if errors:
        raise ConfigError(errors)
    cfg["command"] = command
    return cfg


def _kind(s):
    if s not in ("stable", "truncated_stable", "tabulated"):
        raise ValueError("must be stable or tabulated")


def _alpha(s):
    if not 1 < float(s) < 2:
        raise ValueError("must lie in (1, 2)")


_MECH_FIELDS = {
    "kind": _kind,
    "alpha": _alpha,
    "alpha0": _nonneg,
    "ell_max": _pos,
    "tilt": _nonneg,
    "csv": str,
}


def _mechanism_errors(m):
    errors = []
    for name, val in m.items():
        conv = _MECH_FIELDS.get(name)
        if conv is None:
            errors.append((f"mechanism.{name}", "unknown field"))
            continue
        try:
            conv(str(val).strip())
        except (TypeError, ValueError) as e:
            errors.append((f"mechanism.{name}", str(e) or "invalid value"))
    kind = str(m.get("kind", "stable")).strip()
    need = "csv" if kind == "tabulated" else "alpha"
    if need not in m:
        errors.append((f"mechanism.{need}", "missing field"))
    return errors


def read_config_file(path):
    cp = configparser.ConfigParser()
    cp.optionxform = str
    path = Path(path)
    if not cp.read(path):
        raise ConfigError([("config", f"cannot read {path}")])
    out = {sec: dict(cp[sec]) for sec in cp.sections()}
    bad = [s for s in out if s not in ("run", "mechanism", "test")]
    if bad:
        raise ConfigError([(s, "unknown section") for s in bad])
    out["_base"] = str(path.parent)
    return out


def _mechanism(cfg):
    return mechanism_from_dict({k: str(v) for k, v in cfg["mechanism"].items()})


# ---------------------------------------------------------------------------
# commands; each returns (reports, extra files {relative name: text})


def _cmd_simulate(cfg):
    r, mech = cfg["run"], _mechanism(cfg)
    tm = truncate(mech, r["eps"])
    counts, files = [], {}
    for i in range(r["n_paths"]):
        p = simulate_path(tm, r["horizon"], r["seed"], i)
        counts.append(p.n_jumps)
        if cfg["test"]["write_paths"]:
            files[f"path_{i:04d}.csv"] = p.to_csv()
    m, se = _mean_se(np.asarray(counts, dtype=float))
    target = tm.jump_rate * r["horizon"]
    # Poisson count: se from the known variance when the sample is tiny
    se = max(float(se), math.sqrt(target / len(counts)))
    rep = EstimatorReport("jump_count", float(m), se, target, 0.0, r["n_paths"], r["eps"], r["horizon"], {"drift_rate": tm.drift_rate, "jump_rate": tm.jump_rate})
    return [rep], files


def _cmd_explore(cfg):
    r, t, mech = cfg["run"], cfg["test"], _mechanism(cfg)
    tm = truncate(mech, r["eps"])
    mu = parse_mu(t["mu"])
    files = {}
    if t["write_paths"]:
        times = [x for x in parse_floats(t["at"]) if x <= r["horizon"]]
        for i in range(r["n_paths"]):
            tr = explore(simulate_path(tm, r["horizon"], r["seed"], i), mu)
            files[f"trajectory_{i:04d}.csv"] = tr.summary_csv()
            if times:
                snaps = [json.loads(tr.snapshot_json(x)) for x in times]
                files[f"snapshots_{i:04d}.json"] = json.dumps(snaps, sort_keys=True, indent=1)
    reps = [
        checks.mass_identity(tm, r["n_paths"], r["horizon"], mu, r["seed"]),
        checks.height_consistency(tm, r["n_paths"], r["horizon"], mu, 1000, r["seed"]),
    ]
    return reps, files


def _cmd_verify(cfg):
    r, mech = cfg["run"], _mechanism(cfg)
    n = cfg["test"]["n_cases"]
    tm = truncate(mech, r["eps"])
    mu = AtomicMeasure([0.5, 1.0], [0.002, 0.004])
    reps = [
        checks.psi_roundtrip(mech, seed=r["seed"]),
        checks.psi_convexity(mech, n, seed=r["seed"]),
        checks.tilt_algebra(mech),
        checks.tilt_composition(mech, seed=r["seed"]),
        checks.truncation_bias_monotone(mech),
    ]
    occ = checks.occupation_identities(20, 10, n, seed=r["seed"])
    reps += [occ[0], occ[2]]
    reps.append(checks.erase_algebra(n, seed=r["seed"])[0])
    met = checks.metric_suite(n, seed=r["seed"])
    reps += [met[1], met[4]]
    reps.append(checks.mass_identity(tm, r["n_paths"], r["horizon"], mu, r["seed"]))
    reps.append(checks.height_consistency(tm, r["n_paths"], r["horizon"], mu, 200, r["seed"]))
    return reps, {}


def _gf(cfg, lam=None):
    t = cfg["test"]
    mech = _mechanism(cfg)
    if t.get("theta"):
        mech = tilt(mech, t["theta"])
    c0, c1, k = _f_params(t)
    return GeneratorFunctional(TestFunction.exponential(c0, c1, k), mech, t["lambda"] if lam is None else lam)


def _cmd_martingale(cfg):
    r, t = cfg["run"], cfg["test"]
    grid = parse_floats(t["grid"]) if t.get("grid") else [r["horizon"] * j / 4 for j in (1, 2, 3, 4)]
    gf = _gf(cfg)
    reps = martingale_test(gf, parse_mu(t["mu"]), r["n_paths"], grid, r["seed"], stopped=t["stopped"], eps=r["eps"])
    return reps, {}


def _cmd_resolvent(cfg):
    r, t = cfg["run"], cfg["test"]
    rep = resolvent_mc(_gf(cfg), parse_mu(t["mu"]), r["n_paths"], r["horizon"], r["seed"], eps=r["eps"])
    return [rep], {}


def _cmd_duality(cfg):
    r, t = cfg["run"], cfg["test"]
    c0, c1, k = _f_params(t)
    rep = duality_test(
        _mechanism(cfg), TestFunction.exponential(c0, c1, k), t["gamma"], r["n_paths"], t["r0"], r["seed"],
        eps=r["eps"], T0=r["horizon"], T_max=r["horizon_cap"],
    )
    return [rep], {}


def _cmd_poisson(cfg):
    r, t = cfg["run"], cfg["test"]
    mech = _mechanism(cfg)
    c0, c1, k = _f_params(t)
    f = TestFunction.exponential(c0, c1, k)
    rep = representation_test(
        mech, f, t["gamma"], t["A"], t["r0"], r["n_paths"], r["seed"],
        n_quad=t["n_quad"], n_per_node=t["n_per_node"], delta=t["delta"],
        eps=r["eps"], T0=r["horizon"], T_max=r["horizon_cap"],
    )
    pc = MarkedPoissonConfig(t["A"], mech, t["delta"], r["seed"])
    reps = [rep] + campbell_check(pc, t["n_samples"], f)
    ks = exchangeability_check(pc, t["n_samples"])
    # pass iff p >= level: |p - 1| <= 1 - level
    reps.append(EstimatorReport("exchangeability_ks", ks["pvalue"], 0.0, 1.0, 1.0 - ks["level"], t["n_samples"], None, None, {"statistic": ks["statistic"], "a": t["A"], "delta": t["delta"]}))
    return reps, {}


def _cmd_tilt(cfg):
    t = cfg["test"]
    mech = _mechanism(cfg)
    thetas = parse_floats(t["theta"])
    grid = parse_floats(t["grid"]) if t.get("grid") else None
    reps = [checks.tilt_algebra(mech, None if grid is None else np.array(grid), tuple(thetas))]
    if len(thetas) >= 2:
        reps.append(checks.tilt_composition(mech, thetas[0], thetas[1], seed=cfg["run"]["seed"]))
    return reps, {}


def _cmd_metric(cfg):
    t = cfg["test"]
    rate = t["g_rate"]
    G = WeightFunction(lambda x: -np.expm1(-rate * x), 1.0)
    return checks.metric_suite(t["n_cases"], seed=cfg["run"]["seed"], G=G), {}


RUNNERS = {
    "simulate": _cmd_simulate,
    "explore": _cmd_explore,
    "verify-invariants": _cmd_verify,
    "martingale": _cmd_martingale,
    "resolvent": _cmd_resolvent,
    "duality": _cmd_duality,
    "poisson-rep": _cmd_poisson,
    "tilt-check": _cmd_tilt,
    "metric-check": _cmd_metric,
}


# ---------------------------------------------------------------------------
# output


def _public_config(cfg):
    out = {k: dict(v) if isinstance(v, dict) else v for k, v in cfg.items()}
    out["run"].pop("out", None)  # the output location is not part of the experiment
    return json.loads(json.dumps(out, default=str))


def write_outputs(cfg, reports, files):
    """Write one JSON per report, ``summary.csv`` and extra files; return the output directory."""
    out = Path(cfg["run"]["out"]) / cfg["command"]
    out.mkdir(parents=True, exist_ok=True)
    conf = _public_config(cfg)
    seen = {}
    rows = []
    for rep in reports:
        k = seen.get(rep.test, 0)
        seen[rep.test] = k + 1
        name = rep.test if k == 0 else f"{rep.test}_{k}"
        d = rep.to_dict()
        d["config"] = conf
        (out / f"{name}.json").write_text(json.dumps(d, sort_keys=True, indent=2) + "\n")
        rows.append([name, repr(rep.estimate), repr(rep.se), repr(rep.target), repr(float(rep.z)), repr(rep.bias_budget), int(rep.passed)])
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["report", "estimate", "se", "target", "z", "bias_budget", "pass"])
        w.writerows(rows)
    for name, text in files.items():
        (out / name).write_text(text)
    return out


def run(cfg):
    """Execute a resolved config; returns ``(exit code, reports, output dir)``."""
    reports, files = RUNNERS[cfg["command"]](cfg)
    out = write_outputs(cfg, reports, files)
    code = 0 if all(r.passed for r in reports) else 1
    return code, reports, out


# ---------------------------------------------------------------------------
# argument parsing

_TEST_FLAGS = {
    "simulate": [],
    "explore": ["mu", "at"],
    "verify-invariants": ["n_cases"],
    "martingale": ["lambda", "mu", "f", "kappa", "grid", "theta"],
    "resolvent": ["lambda", "mu", "f", "kappa", "theta"],
    "duality": ["gamma", "f", "kappa", "r0"],
    "poisson-rep": ["gamma", "f", "kappa", "r0", "A", "delta", "n_quad", "n_per_node", "n_samples"],
    "tilt-check": ["theta", "grid"],
    "metric-check": ["n_cases", "g_rate"],
}

_HELP = {
    "simulate": "simulate truncated paths and check the jump count",
    "explore": "run the stack exploration and write trajectory CSVs",
    "verify-invariants": "quick suite of 12 exact invariants",
    "martingale": "martingale checks on a time grid",
    "resolvent": "resolvent identity for exponential functionals",
    "duality": "excursion duality between rho and eta",
    "poisson-rep": "Poisson representation and sampler checks",
    "tilt-check": "exponential tilt algebra on a grid",
    "metric-check": "metric axioms, bounds and contraction",
}


def build_parser():
    p = argparse.ArgumentParser(prog="levy-exploration", description="Exploration process experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=_HELP[name])
        sp.add_argument("--config", help="INI config file")
        sp.add_argument("--seed", type=str)
        sp.add_argument("--n-paths", type=str)
        sp.add_argument("--eps", type=str)
        sp.add_argument("--horizon", type=str)
        sp.add_argument("--horizon-cap", type=str)
        sp.add_argument("--out", type=str, help=f"output directory (default ${ENV_OUT} or ./{DEFAULT_OUT})")
        sp.add_argument("--alpha", type=str, help="stable index of the mechanism")
        for fl in _TEST_FLAGS[name]:
            sp.add_argument("--" + fl.replace("_", "-"), dest="t_" + fl, type=str)
        if name == "martingale":
            sp.add_argument("--stopped", action="store_const", const=True, dest="t_stopped")
        if name in ("simulate", "explore"):
            sp.add_argument("--no-paths", action="store_const", const=False, dest="t_write_paths")
    return p


def _flags(ns):
    d = {
        "run.seed": ns.seed,
        "run.n_paths": ns.n_paths,
        "run.eps": ns.eps,
        "run.horizon": ns.horizon,
        "run.horizon_cap": ns.horizon_cap,
        "run.out": ns.out,
        "mechanism.alpha": ns.alpha,
    }
    for k, v in vars(ns).items():
        if k.startswith("t_"):
            d["test." + k[2:]] = v
    return d


def main(argv=None):
    ns = build_parser().parse_args(argv)
    try:
        file_cfg = read_config_file(ns.config) if ns.config else None
        cfg = resolve_config(ns.command, file_cfg, _flags(ns))
    except ConfigError as e:
        for path, msg in e.errors:
            print(f"config error: {path}: {msg}", file=sys.stderr)
        return 2
    code, reports, out = run(cfg)
    for r in reports:
        print(r.line())
    print(f"reports written to {out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
