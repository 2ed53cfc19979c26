"""Command-line entry point: ``persist-abm <subcommand> [flags]``.

Exit status: 0 on success, 1 on validation errors (bad flags, bad config),
2 on I/O errors.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .engine import (
    ENGINE_VERSION,
    ConfigError,
    GridSpec,
    SimConfig,
    factor_index,
    run_with_trace,
    run,
    trace_csv,
)
from .experiments import DEFAULT_LEVELS, CalibrationTargets, SweepSpec, calibrate, sensitivity, sweep
from .model import FACTOR_NAMES, FactorSpec, HazardVector
from .reporting import (
    PlotKind,
    PlotSpec,
    TRAJECTORY_SCHEMA,
    csv_text,
    json_text,
    read_table,
    read_trajectory,
    render,
    table_rows,
    TABLE_SCHEMA,
    trajectory_rows,
)
from .search import Objective, SearchSpec, run_searches


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def load_config(path: Optional[str]) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    return cp


def sim_config(cp: configparser.ConfigParser, seed: int = 0) -> SimConfig:
    base = SimConfig()
    try:
        sim = cp["simulation"] if cp.has_section("simulation") else {}
        factors = cp["factors"] if cp.has_section("factors") else {}
        specs = tuple(FactorSpec.parse(factors.get(n, "0.5")) for n in FACTOR_NAMES)
        hazards = base.hazards
        if cp.has_section("hazards"):
            h = cp["hazards"]
            hazards = HazardVector(*(float(h.get(f"h{i}", v)) for i, v in enumerate(base.hazards.as_tuple(), 1)))
        grid = None
        if cp.has_section("grid"):
            g = cp["grid"]
            default = GridSpec()
            x0, y0, w, h = default.college_rect
            grid = GridSpec(
                int(g.get("width", default.width)),
                int(g.get("height", default.height)),
                (int(g.get("college_x", x0)), int(g.get("college_y", y0)),
                 int(g.get("college_width", w)), int(g.get("college_height", h))),
            )
        return SimConfig(
            num_agents=int(sim.get("num_agents", base.num_agents)),
            frac_teachers=float(sim.get("frac_teachers", base.frac_teachers)),
            college_attendance_pct=float(sim.get("college_attendance_pct", base.college_attendance_pct)),
            factor_specs=specs,
            hazards=hazards,
            years=int(sim.get("years", base.years)),
            seed=seed,
            grid=grid,
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc


def _section(cp, name):
    return cp[name] if cp.has_section(name) else {}


def _write(out_dir: Path, name: str, text: str) -> None:
    (out_dir / name).write_bytes(text.encode("utf-8"))


def _manifest(command: str, spec: dict, seed, hazards: HazardVector, **extra) -> str:
    doc = {
        "command": command,
        "spec": spec,
        "master_seed": seed,
        "engine_version": ENGINE_VERSION,
        "package_version": __version__,
        "fitted_hazards": list(hazards.as_tuple()),
    }
    doc.update(extra)
    return json_text(doc)


def _summary(**pairs) -> None:
    print(" ".join(f"{k}={v}" for k, v in pairs.items()))


def cmd_run(args, cp) -> None:
    cfg = sim_config(cp, args.seed)
    if args.trace:
        result, rows = run_with_trace(cfg)
        _write(args.out_dir, "trace.csv", trace_csv(rows))
    else:
        result = run(cfg)
    _write(args.out_dir, "result.json", json_text(result.to_dict()))
    _write(args.out_dir, "manifest.json", _manifest("run", cfg.to_dict(), args.seed, cfg.hazards))
    _summary(command="run", seed=args.seed, attended=result.attended, graduates=result.graduates,
             quitters=result.quitters, never_attended=result.never_attended)


def _canonical_factor(name: str) -> str:
    return FACTOR_NAMES[factor_index(name)]


def cmd_sweep(args, cp) -> None:
    s = _section(cp, "sweep")
    levels = tuple(float(v) for v in s["levels"].split(",")) if "levels" in s else DEFAULT_LEVELS
    spec = SweepSpec(
        varied_factor=_canonical_factor(args.factor),
        levels=levels,
        fixed_level=float(s.get("fixed_level", 0.5)),
        repetitions=args.reps if args.reps is not None else int(s.get("repetitions", 10)),
        base_config=sim_config(cp),
        master_seed=args.seed,
    )
    table = sweep(spec, jobs=args.jobs)
    name = f"sweep_{spec.varied_factor}"
    _write(args.out_dir, f"{name}.csv", csv_text(table_rows(table), TABLE_SCHEMA))
    _write(args.out_dir, f"{name}.manifest.json",
           _manifest("sweep", spec.to_dict(), args.seed, spec.base_config.hazards))
    grads = table.select("graduates")
    _summary(command="sweep", factor=spec.varied_factor, seed=args.seed, levels=len(spec.levels),
             reps=spec.repetitions, rows=len(table.rows),
             graduates_first=format(grads[0].mean, ".6g"), graduates_last=format(grads[-1].mean, ".6g"))


def cmd_sensitivity(args, cp) -> None:
    if args.center is None:
        raise UsageError("sensitivity requires --center")
    s = _section(cp, "sensitivity")
    factor = _canonical_factor(args.factor)
    reps = args.reps if args.reps is not None else int(s.get("repetitions", 10))
    base = sim_config(cp, args.seed)
    table = sensitivity(base, factor, args.center, reps, fixed_level=float(s.get("fixed_level", 0.5)),
                        jobs=args.jobs)
    name = f"sensitivity_{factor}"
    _write(args.out_dir, f"{name}.csv", csv_text(table_rows(table), TABLE_SCHEMA))
    spec = {"factor": factor, "center": args.center, "repetitions": reps, "base_config": base.to_dict()}
    _write(args.out_dir, f"{name}.manifest.json",
           _manifest("sensitivity", spec, args.seed, base.hazards, clamped=table.clamped))
    q = table.select("quitters")
    _summary(command="sensitivity", factor=factor, seed=args.seed, clamped=int(table.clamped),
             **{f"quitters_{format(r.level, '.6g')}": format(r.mean, ".6g") for r in q})


def cmd_calibrate(args, cp) -> None:
    c = _section(cp, "calibration")
    targets = CalibrationTargets(
        graduates=float(c.get("graduates", 88.7)),
        quitters=float(c.get("quitters", 86.3)),
    )
    result = calibrate(targets)
    _write(args.out_dir, "calibration.json", json_text(result.to_dict()))
    spec = {"graduates": targets.graduates, "quitters": targets.quitters,
            "point": list(targets.point.as_tuple())}
    _write(args.out_dir, "calibration.manifest.json", _manifest("calibrate", spec, None, result.hazards))
    _summary(command="calibrate", hazards=",".join(format(h, "g") for h in result.hazards.as_tuple()),
             graduate_rate=format(result.graduate_rate, ".6g"), residual=format(result.residual, ".6g"),
             flagged=int(result.flagged))


def cmd_search(args, cp) -> None:
    s = _section(cp, "search")
    spec = SearchSpec(
        objective=Objective(args.objective),
        grid_step=float(s.get("grid_step", 0.1)),
        fitness_replicates=args.reps if args.reps is not None else int(s.get("fitness_replicates", 10)),
        num_searches=int(s.get("num_searches", 10)),
        max_evaluations=int(s.get("max_evaluations", 200)),
        base_config=sim_config(cp),
        master_seed=args.seed,
    )
    outcome = run_searches(spec, jobs=args.jobs)
    stem = f"search_{spec.objective.value}"
    _write(args.out_dir, f"{stem}_trajectory.csv", csv_text(trajectory_rows(outcome), TRAJECTORY_SCHEMA))
    summary = {
        "objective": spec.objective.value,
        "best_point": dict(zip(FACTOR_NAMES, outcome.best_point.as_tuple())),
        "best_fitness": outcome.best_fitness,
        "per_search": [
            {"point": dict(zip(FACTOR_NAMES, p.as_tuple())), "fitness": f, "evaluations": e}
            for (p, f), e in zip(outcome.per_search_bests, outcome.evaluations)
        ],
    }
    _write(args.out_dir, f"{stem}_summary.json", json_text(summary))
    _write(args.out_dir, f"{stem}.manifest.json",
           _manifest("search", spec.to_dict(), args.seed, spec.base_config.hazards))
    _summary(command="search", objective=spec.objective.value, seed=args.seed,
             best=",".join(format(v, "g") for v in outcome.best_point.as_tuple()),
             fitness=format(outcome.best_fitness, ".6g"))


_TITLES = {
    PlotKind.PER_YEAR_LINES: ("Students persisting by year", "factor level", "students"),
    PlotKind.GRADUATED_DEPARTED_LINES: ("Graduated and departed students", "factor level", "students"),
    PlotKind.SENSITIVITY_BOXPLOT: ("Departed students, +/-10% sensitivity", "factor", "departed students"),
    PlotKind.SEARCH_TRAJECTORY: ("Behavior search progress", "evaluation", "best fitness so far"),
}


def cmd_plot(args, cp) -> None:
    if args.kind is None or args.input is None or args.out is None:
        raise UsageError("plot requires --kind, --in and --out")
    kind = PlotKind(args.kind)
    title, xl, yl = _TITLES[kind]
    spec = PlotSpec(kind=kind, title=title, x_label=xl, y_label=yl, output=Path(args.out))
    data = read_trajectory(args.input) if kind is PlotKind.SEARCH_TRAJECTORY else read_table(args.input)
    render(data, spec)
    _summary(command="plot", kind=kind.value, out=args.out)


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "sensitivity": cmd_sensitivity,
    "calibrate": cmd_calibrate,
    "search": cmd_search,
    "plot": cmd_plot,
}
SEEDED = {"run", "sweep", "sensitivity", "search"}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="persist-abm", description="Deaf-student persistence agent-based model")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI-style config file")
        p.add_argument("--seed", type=int, help="master seed (required for run/sweep/sensitivity/search)")
        p.add_argument("--out-dir", type=Path, default=Path("."), dest="out_dir")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--reps", type=int)
        if name in ("sweep", "sensitivity"):
            p.add_argument("--factor", required=True, help=f"one of {', '.join(FACTOR_NAMES)}")
        if name == "sensitivity":
            p.add_argument("--center", type=float)
        if name == "search":
            p.add_argument("--objective", choices=[o.value for o in Objective], default=Objective.MAXIMIZE_GRADUATES.value)
        if name == "run":
            p.add_argument("--trace", action="store_true", help="also write the per-tick agent trace CSV")
        if name == "plot":
            p.add_argument("--kind", choices=[k.value for k in PlotKind])
            p.add_argument("--in", dest="input")
            p.add_argument("--out")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command in SEEDED and args.seed is None:
            raise UsageError(f"{args.command} requires --seed")
        if args.seed is not None and not (0 <= args.seed < 2**64):
            raise UsageError("--seed must be an unsigned 64-bit integer")
        if args.jobs < 1:
            raise UsageError("--jobs must be at least 1")
        cp = load_config(args.config)
        if args.command != "plot":
            args.out_dir.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, cp)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
