"""Command-line entry point.

    adiabatic-piston simulate-1d   --config cfg.json --out runs/a
    adiabatic-piston simulate-soft --config cfg.json --out runs/b --delta 0.05
    adiabatic-piston simulate-2d   --preset sinai --mass 1e4 --out runs/c
    adiabatic-piston average       --config cfg.json --out runs/d
    adiabatic-piston study convergence-1d --out runs/e --threads 4

Configs are JSON objects (see docs/CONFIG.md); command-line overrides win
over config values.  Every successful run writes ``manifest.json`` last.
Exit status: 0 on success, 1 for configuration or usage errors, 2 when a
numerical check fails.  ``ADIABATIC_PISTON_OUT`` and
``ADIABATIC_PISTON_THREADS`` supply defaults for ``--out`` and ``--threads``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import tempfile
import time

import numpy as np

from . import __version__
from .averaged import AveragedSystem, integrate_averaged, integrate_npiston
from .billiard2d import FullState2D, Particle2D, get_domain, sample_state_2d, simulate_2d
from .core import ConfigError, MassProfile, NPistonState, NumericalError, SlowState, write_csv
from .hardcore1d import FullState1D, sample_state, simulate_hard_1d
from .softcore1d import SoftFullState, integrate_soft, sample_soft_state
from .studies import STUDY_KINDS, StudyConfig, run_study

ENV_OUT = "ADIABATIC_PISTON_OUT"
ENV_THREADS = "ADIABATIC_PISTON_THREADS"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", default=os.environ.get(ENV_OUT), help=f"output directory (env {ENV_OUT})")
    p.add_argument("--seed", type=int, help="base random seed")
    p.add_argument("--threads", type=int, default=None, help=f"worker processes (env {ENV_THREADS})")
    p.add_argument("--mass", type=float, help="piston mass M")
    p.add_argument("--tau-end", type=float, help="final slow time")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="adiabatic-piston", description="Adiabatic piston simulations and averaging studies.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    p = sub.add_parser("simulate-1d", help="hard-core 1D gas, exact event-driven dynamics")
    _common(p)
    p = sub.add_parser("simulate-soft", help="soft-core 1D gas, symplectic integration")
    _common(p)
    p.add_argument("--delta", type=float, help="barrier width")
    p = sub.add_parser("simulate-2d", help="2D container with a moving piston")
    _common(p)
    p.add_argument("--preset", help="domain preset name")
    p = sub.add_parser("average", help="integrate an averaged system")
    _common(p)
    p.add_argument("--delta", type=float, help="barrier width for the soft-core system")
    p.add_argument("--preset", help="domain preset supplying d=2 chamber areas")
    p = sub.add_parser("study", help="run a study")
    p.add_argument("kind", choices=STUDY_KINDS)
    _common(p)
    p.add_argument("--delta", type=float, help="single barrier width")
    p.add_argument("--preset", help="domain preset name")
    p.add_argument("--samples", type=int, help="Monte Carlo sample count")
    return parser


# Config handling -------------------------------------------------------------

def load_config(path) -> dict:
    """Read a JSON object; syntax errors are reported with line and column."""
    if path is None:
        return {}
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _num(cfg, key, default, kind=float):
    v = cfg.get(key, default)
    try:
        return kind(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a number, got {v!r}") from None


def _energies(cfg):
    left = cfg.get("E_left", [0.5])
    right = cfg.get("E_right", [0.5])
    if not isinstance(left, list) or not isinstance(right, list):
        raise ConfigError("E_left and E_right must be lists")
    return tuple(float(e) for e in left), tuple(float(e) for e in right)


def _merge(cfg: dict, args, keys) -> dict:
    cfg = dict(cfg)
    for key, attr in keys:
        v = getattr(args, attr, None)
        if v is not None:
            cfg[key] = v
    return cfg


# Output helpers --------------------------------------------------------------

def _atomic_json(path, obj):
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".json")
    with os.fdopen(fd, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")
    os.replace(tmp, path)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(rows, path):
    """Write a list of flat dicts as CSV; the header is the union of keys in first-seen order."""
    keys = []
    for r in rows:
        for k in r:
            if k not in keys:
                keys.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for r in rows:
            w.writerow([_fmt(r[k]) if k in r else "" for k in keys])


def _finite(obj):
    """Replace non-finite floats (not valid JSON) by strings."""
    if isinstance(obj, dict):
        return {str(k): _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, (float, np.floating)) and not math.isfinite(obj):
        return str(float(obj))
    return obj


# Subcommands -----------------------------------------------------------------

def _slow_setup(cfg, dim=1):
    E1, E2 = _energies(cfg)
    Q0 = _num(cfg, "Q0", 0.4)
    W0 = _num(cfg, "W0", 0.0)
    return SlowState(Q0, W0, E1, E2, dim)


def _time_grid(cfg, eps):
    tau_end = _num(cfg, "tau_end", 1.0)
    dtau = _num(cfg, "sample_every", 1e-3)
    if not tau_end > 0 or not dtau > 0:
        raise ConfigError("tau_end and sample_every must be positive")
    scale = eps if eps > 0 else 1.0
    return tau_end / scale, dtau / scale


def cmd_simulate_1d(cfg, rng, out):
    M = _num(cfg, "M", 1e4)
    h0 = _slow_setup(cfg)
    masses = MassProfile(M, (1.0,) * len(h0.left), (1.0,) * len(h0.right))
    if "left" in cfg or "right" in cfg:
        state = FullState1D.single(h0.Q, masses.eps * h0.W, M, cfg.get("left", []), cfg.get("right", []))
    else:
        state = sample_state(h0, masses, rng)
    t_end, dt = _time_grid(cfg, masses.eps)
    max_events = cfg.get("max_events")
    tr = simulate_hard_1d(state, t_end, dt, max_events=max_events)
    write_csv(tr, os.path.join(out, "trajectory.csv"))
    events = {k: tr.meta[k] for k in ("events", "n_events", "energy_initial", "energy_final", "energy_drift", "stop")}
    _atomic_json(os.path.join(out, "events.json"), _finite(events))
    return ["trajectory.csv", "events.json"], events


def cmd_simulate_soft(cfg, rng, out):
    M = _num(cfg, "M", 1e4)
    delta = _num(cfg, "delta", 0.05)
    kernel = cfg.get("kernel", "cubic")
    h0 = _slow_setup(cfg)
    masses = MassProfile(M, (1.0,) * len(h0.left), (1.0,) * len(h0.right))
    if "left" in cfg or "right" in cfg:
        state = SoftFullState(h0.Q, h0.W, cfg.get("left", []), cfg.get("right", []), masses.eps, delta, kernel)
    else:
        state = sample_soft_state(h0, masses, delta, kernel, rng)
    t_end, dt = _time_grid(cfg, masses.eps)
    tr = integrate_soft(state, t_end, dt, step=cfg.get("step"), steps_per_zone=_num(cfg, "steps_per_zone", 50.0),
                        scheme=cfg.get("scheme", "yoshida6"))
    H = tr.extra.pop("H")
    write_csv(tr, os.path.join(out, "trajectory.csv"))
    scale = masses.eps if masses.eps > 0 else 1.0
    rows = [{"tau": a, "t": a / scale, "H": b, "relative_drift": (b - H[0]) / H[0]} for a, b in zip(tr.tau, H)]
    write_rows(rows, os.path.join(out, "energies.csv"))
    summary = {k: tr.meta[k] for k in ("energy_initial", "energy_final", "energy_drift", "energy_peak_drift",
                                       "n_steps", "n_flights", "n_landings")}
    _atomic_json(os.path.join(out, "summary.json"), summary)
    return ["trajectory.csv", "energies.csv", "summary.json"], summary


def cmd_simulate_2d(cfg, rng, out):
    M = _num(cfg, "M", 1e4)
    domain = get_domain(cfg.get("preset", "sinai"))
    h0 = _slow_setup(cfg, dim=2)
    if "particles" in cfg:
        parts = [Particle2D(*p) for p in cfg["particles"]]
        eps = 0.0 if math.isinf(M) else 1.0 / math.sqrt(M)
        state = FullState2D(h0.Q, eps * h0.W, M, parts)
        state.check_inside(domain)
    else:
        state = sample_state_2d(domain, h0.Q, M, h0.left, h0.right, rng, W=h0.W)
    t_end, dt = _time_grid(cfg, state.eps)
    tr = simulate_2d(state, domain, t_end, dt, Emax=cfg.get("Emax", state.total_energy()),
                     max_events=cfg.get("max_events"))
    write_csv(tr, os.path.join(out, "trajectory.csv"))
    events = {k: tr.meta[k] for k in ("events", "n_events", "energy_initial", "energy_final", "energy_drift",
                                      "first_non_clean_t", "stop")}
    events["preset"] = domain.name
    _atomic_json(os.path.join(out, "events.json"), _finite(events))
    return ["trajectory.csv", "events.json"], events


def cmd_average(cfg, rng, out):
    kind = cfg.get("kind", "hard1d")
    if kind not in ("hard1d", "soft1d", "ddim", "npiston"):
        raise ConfigError(f"unknown averaged system kind {kind!r}")
    d = int(cfg.get("d", 1))
    tau_end = _num(cfg, "tau_end", 1.0)
    step = _num(cfg, "step", 1e-4)
    if kind == "npiston":
        try:
            state = NPistonState(tuple(cfg["Q"]), tuple(cfg["W"]), tuple(tuple(e) for e in cfg["energies"]))
        except KeyError as exc:
            raise ConfigError(f"npiston config needs {exc}") from None
        system = AveragedSystem("npiston", piston_masses=tuple(cfg.get("piston_masses", [1.0] * len(state.Q))))
        tr = integrate_npiston(system, state, tau_end, step=step)
    elif kind == "ddim":
        if "preset" in cfg:
            domain = get_domain(cfg["preset"])
            system = AveragedSystem("ddim", d=d, A1=domain.A1, A2=domain.A2, ell=domain.ell)
        else:
            system = AveragedSystem("ddim", d=d, A1=_num(cfg, "A1", 0.0), A2=_num(cfg, "A2", 0.0),
                                    ell=_num(cfg, "ell", 1.0))
    elif kind == "soft1d":
        system = AveragedSystem("soft1d", delta=_num(cfg, "delta", 0.05), kernel=cfg.get("kernel", "cubic"))
    else:
        system = AveragedSystem("hard1d")
    if kind != "npiston":
        h0 = _slow_setup(cfg, dim=d if kind == "ddim" else 1)
        tr = integrate_averaged(system, h0, tau_end, step=step)
    every = max(1, int(round(_num(cfg, "sample_every", step) / step)))
    if every > 1:
        idx = np.unique(np.r_[np.arange(0, len(tr), every), len(tr) - 1])
        tr.tau, tr.data = tr.tau[idx], tr.data[idx]
        tr.extra = {k: v[idx] for k, v in tr.extra.items()}
    write_csv(tr, os.path.join(out, "trajectory.csv"))
    H = tr.extra["Heff"]
    summary = {"kind": kind, "steps": int(round(tau_end / step)), "heff_initial": float(H[0]),
               "heff_drift": float(np.max(np.abs(H - H[0])) / max(abs(H[0]), 1e-300)),
               "stopping_time": tr.meta["stopping_time"]}
    _atomic_json(os.path.join(out, "summary.json"), _finite(summary))
    return ["trajectory.csv", "summary.json"], summary


def cmd_study(cfg, out, kind):
    cfg = dict(cfg)
    cfg["kind"] = kind
    scfg = StudyConfig.from_dict(cfg)
    res = run_study(scfg)
    name = f"{kind}.csv"
    write_rows(res.rows, os.path.join(out, name))
    _atomic_json(os.path.join(out, "summary.json"), _finite(res.summary))
    return [name, "summary.json"], res.summary


COMMANDS = {"simulate-1d": cmd_simulate_1d, "simulate-soft": cmd_simulate_soft,
            "simulate-2d": cmd_simulate_2d, "average": cmd_average}


def _threads(args):
    if args.threads is not None:
        return args.threads
    env = os.environ.get(ENV_THREADS)
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{ENV_THREADS} must be an integer") from None
    return os.cpu_count() or 1


def run(args) -> dict:
    cfg = load_config(args.config)
    cfg = _merge(cfg, args, [("M", "mass"), ("tau_end", "tau_end"), ("delta", "delta"),
                             ("preset", "preset"), ("samples", "samples")])
    if args.command == "study":
        if "M" in cfg:
            cfg["masses"] = [cfg.pop("M")]
        if "delta" in cfg:
            cfg["deltas"] = [cfg.pop("delta")]
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    cfg["seed"] = seed
    out = args.out or "out"
    os.makedirs(out, exist_ok=True)
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    digest = config_hash(cfg)
    if args.command == "study":
        study_cfg = dict(cfg)
        study_cfg["threads"] = _threads(args)
        files, summary = cmd_study(study_cfg, out, args.kind)
    else:
        files, summary = COMMANDS[args.command](cfg, np.random.default_rng(seed), out)
    manifest = {"command": args.command if args.command != "study" else f"study {args.kind}",
                "config": cfg, "config_hash": digest, "seed": seed, "version": __version__,
                "started": started, "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "outputs": files}
    _atomic_json(os.path.join(out, "manifest.json"), _finite(manifest))
    return summary


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        run(args)
    except (ConfigError, ValueError, KeyError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
