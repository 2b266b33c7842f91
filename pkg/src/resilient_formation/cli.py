"""Command-line entry point: ``formation-sim {run,certify,sweep,plot}``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, load_config
from .errors import ConfigurationError, FormationError, NotSchurError
from .experiment import METRICS, Scenario, ScenarioConfig, monte_carlo
from .mitigation import MitigationConfig
from .plotting import plot_auc_boxes, plot_trajectories
from .report import (
    CsvFormatError,
    format_table,
    read_summary,
    read_trajectories,
    trajectory_header,
    trajectory_rows,
    write_csv,
    write_manifest,
    write_summary,
    fmt,
)
from .stability import certificate_for

log = logging.getLogger("resilient_formation")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2

SWEEP_PARAMETERS = {
    "gamma": float,
    "M": float,
    "kappa": float,
    "huber_c": float,
    "wmsr_F": int,
    "dt": float,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser, outputs: bool = True) -> None:
    p.add_argument("--seed", type=int, default=None, help="override the config's base seed")
    p.add_argument("--json", action="store_true", help="print machine-readable JSON to stdout")
    if outputs:
        p.add_argument("--out", type=Path, default=Path("results"), help="output directory (default: results)")
        p.add_argument("--trials", type=int, default=None, help="override the number of Monte Carlo trials")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="formation-sim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run a Monte Carlo study (or one trial) and write CSVs and figures")
    p.add_argument("config", type=Path)
    _common(p)
    p.add_argument("--trial", type=int, default=None, help="run only this trial index")
    p.add_argument("--method", action="append", default=None, help="restrict to a method (repeatable)")
    p.add_argument("--full-state", action="store_true", help="add agent coordinates to the trajectory CSV")
    p.add_argument("--no-plots", action="store_true", help="skip SVG rendering")

    p = sub.add_parser("certify", help="Lyapunov stability certificate for the configured scenario")
    p.add_argument("config", type=Path)
    p.add_argument("--gamma", type=float, default=None, help="hallucination gain (default: from config)")
    p.add_argument("--dt", type=float, default=None, help="override the step size")
    _common(p, outputs=False)

    p = sub.add_parser("sweep", help="repeat the study over values of one parameter")
    p.add_argument("config", type=Path)
    p.add_argument("--param", required=True, help=f"one of {', '.join(SWEEP_PARAMETERS)}")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--method", action="append", default=None)
    _common(p)

    p = sub.add_parser("plot", help="render SVG figures from a summary CSV")
    p.add_argument("summary", type=Path)
    p.add_argument("--trajectories", type=Path, default=None, help="trajectory CSV (default: alongside summary)")
    p.add_argument("--out", type=Path, default=None, help="output directory (default: summary's directory)")
    return parser


def _emit(args, payload: dict, text: str) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True) if args.json else text)


def _render(out_dir: Path, summary_rows, trajectories) -> list[str]:
    written = []
    if trajectories:
        written.append(str(plot_trajectories(trajectories, out_dir / "v_trajectories.svg")))
    written.append(str(plot_auc_boxes(summary_rows, out_dir / "auc_box.svg")))
    return written


def cmd_run(args) -> int:
    cfg = load_config(args.config, {"seed": args.seed, "trials": args.trials})
    methods = tuple(args.method) if args.method else cfg.methods
    if args.method:
        cfg = replace(cfg, methods=methods)
        cfg.validate()
    trial_indices = None
    if args.trial is not None:
        if not 0 <= args.trial < cfg.trials:
            raise ConfigurationError(f"--trial {args.trial} outside 0..{cfg.trials - 1}", "trial")
        trial_indices = [args.trial]
    report = monte_carlo(cfg, methods, trial_indices, record_positions=args.full_state)

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    summary_path, traj_path = out / "summary.csv", out / "trajectories.csv"
    write_summary(summary_path, report)
    scn = Scenario.from_config(cfg)
    header = trajectory_header(scn.graph.n_nodes, scn.spec.dim) if args.full_state else trajectory_header()
    write_csv(traj_path, header, trajectory_rows(report, report.positions if args.full_state else None))
    outputs = {"summary": str(summary_path), "trajectories": str(traj_path)}
    if not args.no_plots:
        rows = read_summary(summary_path)
        figs = _render(out, rows, read_trajectories(traj_path))
        outputs["figures"] = figs
    write_manifest(out / "manifest.yaml", cfg, outputs, "run")

    payload = {
        "outputs": outputs,
        "methods": {
            name: {
                "diverged_trials": rep.diverged,
                **{m: (None if rep.stats[m] is None else rep.stats[m].__dict__) for m in METRICS},
            }
            for name, rep in report.methods.items()
        },
    }
    text = "\n".join([format_table(report, "mean"), "", format_table(report, "median"), "", f"wrote {out}/"])
    _emit(args, payload, text)
    return EXIT_OK


def _certify_scenario(cfg: ScenarioConfig, gamma: float, dt: float):
    scn = Scenario.from_config(replace(cfg, dt=dt))
    return certificate_for(scn.graph, scn.spec.dim, dt, gamma)


def cmd_certify(args) -> int:
    cfg = load_config(args.config, {"seed": args.seed})
    gamma = cfg.mitigation.sosh.gamma if args.gamma is None else args.gamma
    dt = cfg.dt if args.dt is None else args.dt
    try:
        system, cert = _certify_scenario(cfg, gamma, dt)
    except NotSchurError as exc:
        payload = {"error": "not-schur", "spectral_radius": exc.spectral_radius}
        if args.json:
            print(json.dumps(payload, indent=2, sort_keys=True))
        else:
            print(f"error: nominal error dynamics are not Schur stable; spectral radius = {exc.spectral_radius!r}")
        return EXIT_NUMERIC
    payload = {"spectral_radius": system.spectral_radius, **cert.as_dict(),
               "verdict": "stable" if cert.stable else "unstable", "gamma_limit": cert.gamma_limit}
    text = "\n".join([
        f"spectral radius of Gamma_e : {system.spectral_radius!r}",
        f"alpha                      : {cert.alpha!r}",
        f"lambda_max(Q_e)            : {cert.lambda_max_Qe!r}",
        f"threshold alpha/lambda_max : {cert.threshold!r}",
        f"gamma                      : {cert.gamma!r}",
        f"gamma^2                    : {cert.gamma ** 2!r}",
        f"r_e                        : {cert.r_e!r}",
        f"verdict                    : {payload['verdict']}",
        f"margin                     : {cert.margin!r}",
    ])
    _emit(args, payload, text)
    return EXIT_OK


def _with_parameter(cfg: ScenarioConfig, name: str, value) -> ScenarioConfig:
    m: MitigationConfig = cfg.mitigation
    if name == "gamma":
        return replace(cfg, mitigation=replace(m, sosh=replace(m.sosh, gamma=value)))
    if name == "M":
        return replace(cfg, mitigation=replace(m, sosh=replace(m.sosh, M=value)))
    if name == "kappa":
        return replace(cfg, detection=replace(cfg.detection, kappa=value))
    if name == "huber_c":
        return replace(cfg, mitigation=replace(m, huber_c=value))
    if name == "wmsr_F":
        return replace(cfg, mitigation=replace(m, wmsr_F=value))
    return replace(cfg, dt=value)


def cmd_sweep(args) -> int:
    if args.param not in SWEEP_PARAMETERS:
        raise UsageError(f"unknown sweep parameter {args.param!r}; valid names: {', '.join(SWEEP_PARAMETERS)}")
    kind = SWEEP_PARAMETERS[args.param]
    raw = [v.strip() for v in args.values.split(",") if v.strip()]
    if not raw:
        raise UsageError("--values must list at least one value")
    try:
        values = [kind(float(v)) if kind is int else kind(v) for v in raw]
    except ValueError:
        raise UsageError(f"--values must be numbers, got {args.values!r}") from None
    cfg = load_config(args.config, {"seed": args.seed, "trials": args.trials})
    methods = tuple(args.method) if args.method else cfg.methods

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    header = ["parameter", "value", "certified", "method", "trial", *METRICS, "diverged"]
    rows, blocks, payload = [], [], []
    for value in values:
        try:
            vcfg = _with_parameter(cfg, args.param, value)
            vcfg.validate()
        except FormationError as exc:
            raise ConfigurationError(f"{args.param}={value}: {exc}", args.param) from None
        try:
            _, cert = _certify_scenario(vcfg, vcfg.mitigation.sosh.gamma, vcfg.dt)
            certified = "yes" if cert.stable else "no"
        except NotSchurError:
            certified = "not-schur"
        report = monte_carlo(vcfg, methods)
        for row in report.rows():
            rows.append([args.param, value, certified, row["method"], row["trial"],
                         *(row[m] for m in METRICS), row["diverged"]])
        mark = "" if certified == "yes" else f"  [UNCERTIFIED: {certified}]"
        blocks.append(f"{args.param} = {fmt(value)}{mark}\n{format_table(report, 'mean')}")
        payload.append({
            "value": value,
            "certified": certified,
            "methods": {n: {m: (None if r.stats[m] is None else r.stats[m].mean) for m in METRICS}
                        for n, r in report.methods.items()},
        })
    sweep_path = out / "sweep.csv"
    write_csv(sweep_path, header, rows)
    write_manifest(out / "manifest.yaml", cfg, {"sweep": str(sweep_path), "parameter": args.param,
                                                "values": list(values)}, "sweep")
    _emit(args, {"parameter": args.param, "blocks": payload, "output": str(sweep_path)},
          "\n\n".join(blocks) + f"\n\nwrote {sweep_path}")
    return EXIT_OK


def cmd_plot(args) -> int:
    rows = read_summary(args.summary)
    traj_path = args.trajectories or args.summary.with_name("trajectories.csv")
    if not traj_path.exists():
        raise CsvFormatError(f"trajectory file {traj_path} not found; pass --trajectories")
    trajectories = read_trajectories(traj_path)
    out = args.out or args.summary.parent
    out.mkdir(parents=True, exist_ok=True)
    for path in _render(out, rows, trajectories):
        print(f"wrote {path}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "certify": cmd_certify, "sweep": cmd_sweep, "plot": cmd_plot}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ConfigurationError, CsvFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NotSchurError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FormationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
