"""Command-line entry point: ``vsgrlc {simulate,bode,design,check,sweep}``.

Configs may be given as a path or as the name of a bundled scenario
(``vsgrlc simulate sa_load_step``).  Outputs are CSV and JSON; ``--plot`` adds
an SVG figure next to them.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

from .engine import SimulationError, TimeSeries, simulate
from .equiv import (
    DESIGN_FORMULAS,
    DesignInputs,
    coefficient_ratios,
    design_params,
    proportionality_residual,
    suggest_virtual_reactance,
)
from .metrics import extract_metrics
from .model import GC, ConfigError, load_model_file
from .tf import bode, gc_ref_step_tfs, resonance_peak, sa_load_step_tfs

log = logging.getLogger("vsgrlc")


class CliError(Exception):
    pass


def bundled_scenarios() -> list[str]:
    root = resources.files("vsgrlc") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve_config(name: str) -> Path:
    p = Path(name)
    if p.is_file():
        return p
    stem = name[:-5] if name.endswith(".json") else name
    bundled = resources.files("vsgrlc") / "scenarios" / f"{stem}.json"
    if bundled.is_file():
        return Path(str(bundled))
    raise CliError(f"config not found: {name} (bundled scenarios: {', '.join(bundled_scenarios())})")


def _load(name: str):
    path = resolve_config(name)
    return path, load_model_file(path)


# ---------------------------------------------------------------- simulate


def run_simulation(config: str, out_dir: Path, plot: bool = False) -> dict:
    """Simulate one config and write ``<stem>.csv`` and ``<stem>_metrics.json``.

    Nothing is written unless the config loads and the run completes.  The
    metrics are computed from the CSV as written, so they can be reproduced
    from the file alone.
    """
    path, (model, graph, scenario) = _load(config)
    log.debug("simulating %s (%d units, t_end %.3g s)", path, model.n, scenario.t_end)
    series = simulate(model, graph, scenario)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = path.stem
    csv_path = out_dir / f"{stem}.csv"
    series.to_csv(csv_path)
    saved = TimeSeries.from_csv(csv_path)
    saved.events = tuple(scenario.events)
    report = extract_metrics(saved, model, graph)
    json_path = out_dir / f"{stem}_metrics.json"
    json_path.write_text(report.to_json() + "\n", encoding="utf-8")
    files = [str(csv_path), str(json_path)]
    if plot:
        from .plotting import plot_timeseries

        svg = out_dir / f"{stem}.svg"
        plot_timeseries(saved, svg, title=stem)
        files.append(str(svg))
    p1 = report.signals["unit1_P_W"]
    return {
        "config": stem,
        "files": files,
        "unit1_overshoot_pct": p1.overshoot_pct,
        "unit1_peak_to_peak_W": p1.peak_to_peak,
        "rocof_max_rad_s2": report.rocof_max_rad_s2,
        "sharing_error_pct": report.sharing_error_pct,
        "max_omega_p_dev_rad_s": report.max_omega_p_dev_rad_s,
        "lyapunov_final": report.lyapunov_final,
    }


def cmd_simulate(args) -> int:
    summary = run_simulation(args.config, Path(args.out), args.plot)
    for f in summary["files"]:
        print(f"wrote {f}")
    print(f"unit1 overshoot {summary['unit1_overshoot_pct']:.2f} %, "
          f"peak-to-peak {summary['unit1_peak_to_peak_W']:.3f} W, "
          f"RoCoF max {summary['rocof_max_rad_s2']:.4f} rad/s^2")
    return 0


def cmd_sweep(args) -> int:
    out = Path(args.out)
    for c in args.configs:
        _load(c)  # fail before any run starts
    if args.jobs > 1 and len(args.configs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(run_simulation, args.configs, [out] * len(args.configs),
                                 [args.plot] * len(args.configs)))
    else:
        rows = [run_simulation(c, out, args.plot) for c in args.configs]
    summary = out / "sweep_summary.csv"
    keys = [k for k in rows[0] if k != "files"]
    with open(summary, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        print(f"{r['config']}: overshoot {r['unit1_overshoot_pct']:.2f} %, "
              f"peak-to-peak {r['unit1_peak_to_peak_W']:.3f} W")
    print(f"wrote {summary}")
    return 0


# ---------------------------------------------------------------- bode


def cmd_bode(args) -> int:
    path, (model, _, _) = _load(args.config)
    which = args.which or ("gc" if model.grid.mode == GC else "sa")
    if which == "sa":
        tfs = sa_load_step_tfs(model).dP
        label = "dP{i}/dP_L"
    else:
        if model.grid.mode != GC:
            raise CliError("--which gc needs a grid-connected config (mode GC)")
        source = args.source or model.units[0].id
        tfs = gc_ref_step_tfs(model, source).dP
        label = "dP{i}/dP_r[" + source + "]"
    out = Path(args.out)
    curves = []
    for i, tf in enumerate(tfs):
        if not any(tf.num):
            continue  # unit does not respond (stiff grid)
        curves.append((i + 1, label.format(i=i + 1), bode(tf, args.omega_min, args.omega_max, args.points)))
    out.mkdir(parents=True, exist_ok=True)
    for k, name, fr in curves:
        f = out / f"{path.stem}_bode_{which}_unit{k}.csv"
        with open(f, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["omega_rad_s", "mag_db", "phase_deg"])
            for row in zip(fr.omegas.tolist(), fr.magnitude_db.tolist(), fr.phase_deg.tolist()):
                w.writerow([repr(v) for v in row])
        print(f"wrote {f}")
        peak = resonance_peak(fr)
        if peak is None:
            print(f"{name}: no interior peak (DC {fr.magnitude_db[0]:.4f} dB)")
        else:
            print(f"{name}: resonance peak at {peak.omega:.3f} rad/s, "
                  f"{peak.peak_db_above_dc:.3f} dB above DC")
    if args.plot:
        from .plotting import plot_bode

        svg = out / f"{path.stem}_bode_{which}.svg"
        plot_bode({name: fr for _, name, fr in curves}, svg, title=path.stem)
        print(f"wrote {svg}")
    return 0


# ---------------------------------------------------------------- design & check


def cmd_design(args) -> int:
    missing = [f"--{n.replace('_', '-')}" for n in ("dp_max", "rocof_max", "dw_max") if getattr(args, n) is None]
    if missing:
        raise CliError(f"missing required flag(s): {', '.join(missing)}")
    for n in ("dp_max", "rocof_max", "dw_max", "k_hp"):
        if getattr(args, n) <= 0:
            raise CliError(f"{n.replace('_', '-')} must be positive")
    inputs = DesignInputs(args.dp_max, args.rocof_max, args.dw_max, args.k_hp, args.rho,
                          args.nq, args.lambda2, args.h0, args.nq_l2_h0)
    res = design_params(inputs)
    rows = res.to_dict()
    for key, value in rows.items():
        if value is None:
            continue
        print(f"{key:>8} = {value:<12.6g} {DESIGN_FORMULAS[key]}")
    if args.out_json:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        f = out / "design.json"
        f.write_text(json.dumps({"inputs": vars(inputs), "result": rows}, indent=2) + "\n", encoding="utf-8")
        print(f"wrote {f}")
    return 0


def cmd_check(args) -> int:
    path, (model, _, _) = _load(args.config)
    res = proportionality_residual(model)
    print(f"proportionality residual: {res:.6g}")
    r = coefficient_ratios(model)
    print(f"{'unit':>6} {'J/J1':>10} {'D/D1':>10} {'K/K1':>10}")
    for u, row in zip(model.units, r):
        print(f"{u.id:>6} {row[0]:>10.4f} {row[1]:>10.4f} {row[2]:>10.4f}")
    sug = suggest_virtual_reactance(model)
    report = {"residual": res, "ratios": r.tolist(), "current_X_ohm": sug.current_X,
              "target_X_ohm": sug.target_X, "added_Zv_ohm": sug.added_Zv}
    if model.n < 2 or not sug.needed:
        print("suggestion: none needed")
    else:
        print("suggested added virtual reactance (ohm):")
        for u, x, tgt, z in zip(model.units, sug.current_X, sug.target_X, sug.added_Zv):
            print(f"{u.id:>6} X {x:.4f} -> {tgt:.4f}  (+{z:.4f})")
    if args.out_json:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        f = out / f"{path.stem}_check.json"
        f.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
        print(f"wrote {f}")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    def add_globals(p, suppress: bool):
        d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        p.add_argument("--out", default=d("out"), help="output directory (default: ./out)")
        p.add_argument("--seed", type=int, default=d(0), help="reserved; the engine is deterministic")
        p.add_argument("--jobs", type=int, default=d(1), help="parallel runs for sweep")
        p.add_argument("--plot", action="store_true", default=d(False), help="also write an SVG figure")
        p.add_argument("-v", "--verbose", action="store_true", default=d(False))

    parser = argparse.ArgumentParser(prog="vsgrlc", description=__doc__.splitlines()[0])
    add_globals(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    add_globals(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run one scenario, write CSV + metrics JSON")
    p.add_argument("config")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common], help="run several scenarios, optionally in parallel")
    p.add_argument("configs", nargs="+")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bode", parents=[common], help="frequency responses of the small-signal model")
    p.add_argument("config")
    p.add_argument("--which", choices=("sa", "gc"), help="load step (sa) or reference step (gc); default from mode")
    p.add_argument("--source", help="unit id whose reference steps (gc)")
    p.add_argument("--omega-min", type=float, default=0.01)
    p.add_argument("--omega-max", type=float, default=1000.0)
    p.add_argument("--points", type=int, default=400)
    p.set_defaults(func=cmd_bode)

    p = sub.add_parser("design", parents=[common], help="parameter design calculator")
    p.add_argument("--dp-max", type=float)
    p.add_argument("--rocof-max", type=float)
    p.add_argument("--dw-max", type=float)
    p.add_argument("--k-hp", type=float, default=10.0)
    p.add_argument("--rho", type=float)
    p.add_argument("--nq", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--h0", type=float, help="|H(0)| in var/ohm")
    p.add_argument("--nq-l2-h0", type=float, help="product nq*lambda2*|H(0)|")
    p.add_argument("--json", dest="out_json", action="store_true", help="also write design.json")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("check", parents=[common], help="proportionality report and reactance suggestion")
    p.add_argument("config")
    p.add_argument("--json", dest="out_json", action="store_true", help="also write <config>_check.json")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, ConfigError, SimulationError, ValueError, ZeroDivisionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
