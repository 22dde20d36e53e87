"""Command-line front end: ``beamlaser simulate | meanfield | design``.

Exit codes: 0 success, 1 runtime or numerical failure, 2 usage or
configuration error.  Configuration errors are detected before anything is
written.  Progress goes to standard error.
"""

import argparse
import concurrent.futures
import csv
import json
import logging
import math
import os
import sys
from importlib import resources
from pathlib import Path

from . import __version__, estimators, langevin, meanfield
from .config import ConfigError, load_config
from .design import design_report, format_report
from .params import derive_rates, natural_units

log = logging.getLogger("beamlaser")

WORKERS_ENV = "BEAMLASER_WORKERS"
BUNDLED = {"ca40": "ca40.design", "sr88": "sr88.design", "linewidth_sweep": "linewidth_sweep.ini"}


class UsageError(Exception):
    pass


# --- output helpers ------------------------------------------------------

def _fmt(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, int):
        return str(v)
    if v is None:
        return ""
    v = float(v)
    return "nan" if math.isnan(v) else f"{v:.12e}"


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row[k]) for k in header])


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


class Manifest:
    """Run manifest, written before any result and rewritten on completion."""

    def __init__(self, out_dir, **fields):
        self.path = Path(out_dir) / "manifest.json"
        self.data = {"tool": "beamlaser", "version": __version__, "status": "running",
                     "out_dir": str(out_dir), "outputs": [], "error": None, **fields}
        self.flush()

    def add(self, path):
        self.data["outputs"].append(str(Path(path).relative_to(self.path.parent)))

    def finish(self, status, error=None):
        self.data["status"] = status
        self.data["error"] = error
        self.flush()

    def flush(self):
        write_json(self.path, self.data)


# --- resolution of settings ------------------------------------------------

def _env_workers():
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{WORKERS_ENV}={raw!r} is not an integer") from None
    if n < 1:
        raise UsageError(f"{WORKERS_ENV} must be >= 1")
    return n


def resolve_workers(flag, config_value):
    """Flag beats config, config beats the environment, default 1."""
    for v in (flag, config_value, _env_workers()):
        if v is not None:
            if v < 1:
                raise UsageError("workers must be >= 1")
            return int(v)
    return 1


def _config_path(arg):
    if arg in BUNDLED and not Path(arg).exists():
        return resources.files("beamlaser") / "data" / BUNDLED[arg]
    return Path(arg)


def _prepare_out(path):
    out = Path(path)
    if out.exists() and not out.is_dir():
        raise UsageError(f"--out {out} exists and is not a directory")
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- subcommands ---------------------------------------------------------

def _point_summary(p):
    nat = natural_units(p)
    rates = derive_rates(nat, warn=False)
    return {"flux_param": rates.flux_param, "doppler_param": rates.doppler_param,
            "n_atoms": rates.n_atoms, "kappa_tau": rates.kappa_tau,
            "delta_tau": nat.delta, "gamma_tau": nat.gamma}


def cmd_simulate(args):
    cfg = load_config(_config_path(args.config))
    sim = cfg.simulation
    if sim is None:
        raise ConfigError(f"{args.config}: no [simulation] section")
    seed = sim.seed if args.seed is None else args.seed
    n_traj = sim.trajectories if args.trajectories is None else args.trajectories
    if n_traj < 1 or seed < 0:
        raise UsageError("--trajectories must be >= 1 and --seed >= 0")
    workers = resolve_workers(args.workers, sim.workers)
    out = _prepare_out(args.out)
    man = Manifest(out, subcommand="simulate", config=str(args.config), config_sha256=cfg.sha256,
                   config_text=cfg.text, seed=seed, n_traj=n_traj, workers=workers)
    try:
        sweep_rows = []
        multi = len(cfg.points) > 1
        for i, (labels, p) in enumerate(cfg.points):
            pdir = out / f"point_{i:03d}" if multi else out
            pdir.mkdir(exist_ok=True)
            summary = _point_summary(p)
            log.info("point %d/%d: %s", i + 1, len(cfg.points),
                     ", ".join(f"{k}={v:.4g}" for k, v in summary.items()))
            derive_rates(p)  # emits the bad-cavity warning once per point
            records = langevin.run_ensemble(p, sim.opts, n_traj, seed, workers=workers)
            if sim.save_trajectories:
                tdir = pdir / "trajectories"
                tdir.mkdir(exist_ok=True)
                for k, rec in enumerate(records):
                    f = tdir / f"traj_{k:04d}.csv"
                    rec.to_csv(f)
                    man.add(f)
                    man.add(str(f) + ".json")
            delta = summary["delta_tau"] or None
            report = estimators.analyze(records, sim.t0, summary["flux_param"], delta=delta,
                                        max_lag=sim.max_lag)
            report["params"] = summary
            report["sweep"] = labels
            f = pdir / "report.json"
            write_json(f, report)
            man.add(f)
            sweep_rows.append({**labels, **summary, "linewidth": report["linewidth"],
                               "power_norm": report["power_norm"], "pulling": report["pulling"],
                               "g2_zero": report["g2_zero"]})
            man.flush()
        if multi:
            header = list(cfg.swept) + [k for k in sweep_rows[0] if k not in cfg.swept]
            f = out / "sweep.csv"
            write_csv(f, header, sweep_rows)
            man.add(f)
        else:
            print(json.dumps({k: sweep_rows[0][k] for k in
                              ("linewidth", "power_norm", "pulling", "g2_zero")}))
    except Exception as exc:
        man.finish("failed", f"{type(exc).__name__}: {exc}")
        raise
    man.finish("complete")
    return 0


_PHASE_HEADER = ["flux_param", "doppler_param", "re_nu0", "im_nu0", "linewidth_mf",
                 "j_st", "power_norm", "pulling"]


def _phase_rows(flux, doppler, kappa_tau, workers):
    if workers <= 1 or len(doppler) == 1:
        return meanfield.phase_diagram(flux, doppler, kappa_tau)
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        parts = pool.map(meanfield.phase_diagram, [flux] * len(doppler),
                         [[d] for d in doppler], [kappa_tau] * len(doppler))
        return [row for part in parts for row in part]


def cmd_meanfield(args):
    cfg = load_config(_config_path(args.config))
    mf = cfg.meanfield
    if mf is None:
        raise ConfigError(f"{args.config}: no [meanfield] section")
    workers = resolve_workers(args.workers, cfg.simulation.workers if cfg.simulation else None)
    out = _prepare_out(args.out)
    man = Manifest(out, subcommand="meanfield", config=str(args.config), config_sha256=cfg.sha256,
                   config_text=cfg.text, seed=None, n_traj=None, workers=workers)
    try:
        if args.threshold_trace:
            rows = meanfield.threshold_trace(mf.doppler_values)
            f = out / "threshold_trace.csv"
            write_csv(f, ["doppler_param", "threshold_flux"], rows)
        else:
            log.info("mean-field grid %d x %d", len(mf.flux_values), len(mf.doppler_values))
            rows = _phase_rows(list(mf.flux_values), list(mf.doppler_values), mf.kappa_tau, workers)
            f = out / "phase_diagram.csv"
            write_csv(f, _PHASE_HEADER, rows)
        man.add(f)
        n_bad = sum(1 for r in rows if any(isinstance(v, float) and math.isnan(v)
                                           for k, v in r.items() if k in ("j_st", "threshold_flux")))
        man.data["failed_points"] = n_bad
    except Exception as exc:
        man.finish("failed", f"{type(exc).__name__}: {exc}")
        raise
    man.finish("complete")
    return 0


def cmd_design(args):
    cfg = load_config(_config_path(args.config))
    if cfg.design is None:
        raise ConfigError(f"{args.config}: no [design] section")
    if args.pulling is not None and not 0 < args.pulling <= 1:
        raise UsageError("--pulling must lie in (0, 1]")
    rep = design_report(cfg.design, pulling=args.pulling, full_meanfield=args.full_meanfield)
    text = json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n" if args.json \
        else format_report(rep)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


# --- entry point ---------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="beamlaser",
                                 description="Superradiant beam laser simulator and solver.")
    ap.add_argument("--version", action="version", version=f"beamlaser {__version__}")
    ap.add_argument("-q", "--quiet", action="store_true", help="suppress progress output")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run Langevin trajectories and estimators")
    s.add_argument("--config", required=True, help="config file or bundled name (linewidth_sweep)")
    s.add_argument("--seed", type=int, help="base seed (overrides config)")
    s.add_argument("--trajectories", type=int, help="trajectories per point")
    s.add_argument("--workers", type=int, help=f"worker processes (default ${WORKERS_ENV} or 1)")
    s.add_argument("--out", default="run", help="output directory")
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("meanfield", help="mean-field phase diagram or threshold trace")
    m.add_argument("--config", required=True)
    m.add_argument("--workers", type=int)
    m.add_argument("--out", default="meanfield")
    m.add_argument("--threshold-trace", action="store_true",
                   help="emit threshold flux versus Doppler width instead of the grid")
    m.set_defaults(func=cmd_meanfield)

    d = sub.add_parser("design", help="design table from species and cavity inputs")
    d.add_argument("--config", required=True, help="design file or bundled name (ca40, sr88)")
    d.add_argument("--pulling", type=float, help="override the pulling coefficient")
    d.add_argument("--full-meanfield", action="store_true",
                   help="evaluate pulling from the mean-field integral")
    d.add_argument("--json", action="store_true", help="emit JSON instead of a text table")
    d.add_argument("--out", help="write to this file instead of standard output")
    d.set_defaults(func=cmd_design)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.captureWarnings(True)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"beamlaser: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any module failure is a runtime failure
        print(f"beamlaser: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
