"""Command-line front end: ``run``, ``validate`` and ``presets``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time

import numpy as np

from .bath import validate_features
from .config import ConfigError, RunConfig, list_presets, load_config
from .eom import propagate
from .mode_combination import propagate_factored
from .observables import Trajectory, export_density_map

__all__ = ["main", "run", "write_csv"]

log = logging.getLogger("bexcitons")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2
UNITS = {"t": "1/E", "energies": "E", "pop": "1", "purity": "1", "n_bex": "1", "norm": "1"}


def _fmt(x: float) -> str:
    return f"{x:.16e}"


def write_csv(traj: Trajectory, path: str, M: int, K: int) -> None:
    header = ["t"] + [f"pop_{i}" for i in range(M)] + ["purity"] + [f"n_bex_{k + 1}" for k in range(K)] + ["norm"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for s in traj.samples:
            w.writerow([_fmt(s.t)] + [_fmt(p) for p in s.pop] + [_fmt(s.purity)] + [_fmt(n) for n in s.n_bex] + [_fmt(s.norm)])


def _validation_report(cfg: RunConfig) -> dict:
    if cfg.validate_points == 0:
        return {}
    horizon = max(cfg.t_final, 1.0)
    grid = np.linspace(0.0, horizon, cfg.validate_points)
    rep = validate_features(cfg.features, cfg.bath, grid)
    finite = rep.abs_err[np.isfinite(rep.abs_err)]
    return {
        "t_grid": [0.0, horizon, cfg.validate_points],
        "max_rel_err": rep.max_rel_err if np.isfinite(rep.max_rel_err) else None,
        "max_abs_err": float(finite.max()) if finite.size else None,
        "imag_defect": rep.imag_defect,
        "pairing_ok": rep.pairing_ok,
        "c0_finite": rep.c0_finite,
    }


def run(cfg: RunConfig, out_dir: str, seed: int | None = None, threads: int | None = None) -> int:
    """Execute one configuration and write its artifacts; returns an exit code."""
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.perf_counter()
    prop = cfg.propagation()
    maps_written: list[str] = []
    map_steps = {int(round(t / cfg.dt)) for t in cfg.map_times}

    def on_sample(state):
        if "maps" in cfg.outputs and int(round(state.t / cfg.dt)) in map_steps:
            path = os.path.join(out_dir, f"map_t{state.t:.4f}.txt")
            export_density_map(state, path)
            maps_written.append(os.path.basename(path))

    if cfg.compression:
        c = cfg.compression
        s = tuple(c["s"]) if "s" in c else None
        traj = propagate_factored(prop, c.get("r", 10), s)
    else:
        traj = propagate(prop, on_sample=on_sample)
    write_csv(traj, os.path.join(out_dir, "trajectory.csv"), cfg.system.M, cfg.space.K)
    manifest = {
        "config": cfg.raw,
        "status": traj.status,
        "t_diverge": traj.t_last,
        "t_detect": traj.t_detect,
        "features": json.loads(cfg.features.to_json()),
        "validation": _validation_report(cfg),
        "units": UNITS,
        "maps": maps_written,
        "seed": seed,
        "threads": threads,
        "compression": traj.meta or None,
        "wall_time_s": time.perf_counter() - t0,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, default=str)
    return EXIT_DIVERGED if traj.diverged else EXIT_OK


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bexcitons", description="Bexcitonic hierarchy propagation")
    sub = p.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run a config file or preset")
    r.add_argument("config")
    r.add_argument("--out", default="out")
    r.add_argument("--seed", type=int, default=None, help="recorded only; runs are deterministic")
    r.add_argument("--threads", type=int, default=None, help="BLAS thread count")
    v = sub.add_parser("validate", help="check a config file or preset")
    v.add_argument("config")
    sub.add_parser("presets", help="list built-in presets")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    if args.cmd == "presets":
        for name, desc in list_presets():
            print(f"{name:22s} {desc}")
        return EXIT_OK
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if args.cmd == "validate":
        print(f"{args.config}: ok (K={cfg.features.K}, depths={cfg.space.depths}, {cfg.space.representation})")
        return EXIT_OK
    if args.threads:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=args.threads):
            return run(cfg, args.out, args.seed, args.threads)
    return run(cfg, args.out, args.seed, args.threads)


if __name__ == "__main__":
    sys.exit(main())
