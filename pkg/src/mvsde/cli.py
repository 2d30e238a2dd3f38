"""Command-line interface.

    mvsde converge|density|paths|moments|nscaling|check|list-models
          --config FILE [--seed U64] [--threads K] [--out-dir DIR]
          [--paper-scale] [--format csv,svg] [--strict]

Exit codes: 0 success, 2 configuration error, 3 when --strict is set and the
only failures were diverged runs.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import experiments, output, svgplot, verify
from .config import ExperimentConfig, load_config, paper_scale
from .errors import ConfigError
from .models import BUILTIN_MODELS, make_model
from .taming import parse_taming

_EXPERIMENTS = ("converge", "density", "paths", "moments", "nscaling")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvsde",
        description="Particle-method studies of mean-field SDEs with "
        "super-linear coefficients under modified/tamed Euler schemes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, needs_config=True):
        p = sub.add_parser(name, help=help_text)
        if needs_config:
            p.add_argument("--config", required=name != "check", help="experiment config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads for cells")
        p.add_argument("--out-dir", default=None, help="override the output directory")
        p.add_argument(
            "--paper-scale",
            action="store_true",
            help="published convergence protocol (h_ref=2^-17, N=100)",
        )
        p.add_argument("--format", default=None, help="comma list of csv,svg")
        p.add_argument("--strict", action="store_true", help="exit 3 on diverged cells")
        return p

    add("converge", "coupled fine/coarse strong-error study")
    add("density", "kernel density curves per scheme and record time")
    add("paths", "particle path traces with a stability summary")
    add("moments", "empirical moments over time")
    add("nscaling", "terminal-law error against a large-N proxy run")
    add("check", "numerical certification of scheme/model assumptions")
    lm = sub.add_parser("list-models", help="list built-in model names")
    lm.set_defaults(command="list-models")
    return parser


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out_dir is not None:
        cfg.out_dir = args.out_dir
    if args.format is not None:
        cfg.formats = [f.strip().lower() for f in args.format.split(",") if f.strip()]
        bad = [f for f in cfg.formats if f not in ("csv", "svg")]
        if bad:
            raise ConfigError(f"unknown output formats: {bad}")
    if args.paper_scale and cfg.h_ref is not None:
        cfg = paper_scale(cfg)
    return cfg


def _fingerprint(args) -> str:
    text = ""
    if getattr(args, "config", None):
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError:
            text = args.config
    text += f"|seed={args.seed}|paper={args.paper_scale}"
    return svgplot.config_fingerprint(text)


def _check_battery(cfg: ExperimentConfig | None):
    """Default assumption battery for the `check` subcommand."""
    ops = [("identity", None), ("dte(0.5)", None), ("me", None), ("te(1)", None), ("se(1)", None)]
    model_names = [cfg.model_name] if cfg is not None else sorted(BUILTIN_MODELS)
    reports = []
    spec = verify.SampleSpec()
    for text, _ in ops:
        op = parse_taming(text)
        for assumption in ("H1", "H2", "H3"):
            constants = {"L": 1.0}
            if assumption == "H2" and op.kind == "modified":
                constants.update({"r1": 1.0, "r2": 3.0})
            reports.append(verify.check_taming(op, assumption, constants, spec))
    for name in model_names:
        params = cfg.model_params if (cfg is not None and cfg.model_name == name) else {}
        model = make_model(name, **params)
        fte = parse_taming("fte", model_rho=model.rho)
        reports.append(verify.check_taming(fte, "H1", {"L": 1.0}, spec))
        reports.append(verify.check_taming(fte, "EX35_BOUND", None, spec, model=model))
        for assumption in ("A2", "A3", "A5", "A6"):
            reports.append(verify.check_model(model, assumption, None, spec))
    return reports


def _run_command(args) -> int:
    if args.command == "list-models":
        for name in sorted(BUILTIN_MODELS):
            model = make_model(name) if name != "doublewell" else make_model(name, mu0=0, sigma0sq=1)
            params = ", ".join(f"{k}={v:g}" for k, v in model.params.items())
            print(f"{name}: d={model.d}, m={model.m}, rho={model.rho:g}" + (f" ({params})" if params else ""))
        return 0

    if args.command == "check":
        cfg = load_config(args.config) if args.config else None
        cfg = _apply_overrides(cfg, args) if cfg is not None else cfg
        reports = _check_battery(cfg)
        for rep in reports:
            print(rep)
        out_dir = args.out_dir or (cfg.out_dir if cfg is not None else "out")
        output.write_files(out_dir, output.check_files(reports))
        # equilibria oracle of the double-well drift, reported alongside
        roots = verify.doublewell_equilibria_oracle()
        comparison = verify.compare_equilibria(roots)
        print(f"doublewell Dirac-map equilibria: {roots} vs expected (-2, 0, 2): {comparison}")
        return 0

    cfg = _apply_overrides(load_config(args.config), args)
    fp = _fingerprint(args)
    threads = max(1, args.threads)
    files = {}
    diverged = False

    if args.command == "converge":
        reports = experiments.run_convergence(cfg, threads=threads)
        files.update(output.convergence_files(reports))
        if "svg" in cfg.formats:
            for rep in reports:
                try:
                    doc = svgplot.convergence_svg(rep, fp)
                except ValueError:
                    continue
                files[f"converge_{rep.model}_{rep.scheme}.svg"] = doc.encode("utf-8")
        diverged = any(r.diverged for rep in reports for r in rep.rows)
        for rep in reports:
            print(
                f"{rep.model}/{rep.scheme}: slope={rep.slope:.3f} "
                f"intercept={rep.intercept:.3f} r2={rep.r2:.4f} ({rep.n_fit} points)"
            )

    elif args.command == "density":
        bundle = experiments.run_density(cfg, threads=threads)
        files.update(output.density_files(bundle, cfg.h_values))
        if "svg" in cfg.formats:
            for t in bundle.times():
                try:
                    doc = svgplot.density_svg(bundle.entries, t, fp)
                except ValueError:
                    continue
                files[f"density_T{t:g}.svg"] = doc.encode("utf-8")
        diverged = any(e.note == "diverged" for e in bundle.entries)
        print(f"density: {len(bundle.entries)} curves at times {bundle.times()}")

    elif args.command == "paths":
        bundle = experiments.run_paths(cfg, threads=threads)
        files.update(output.path_files(bundle, cfg.h_values))
        if "svg" in cfg.formats:
            for cell_ in bundle.cells:
                suffix = "" if len(cfg.h_values) <= 1 else f"_h{cell_.h:g}"
                try:
                    doc = svgplot.paths_svg(cell_, fp)
                except ValueError:
                    continue
                files[f"paths_{cell_.scheme}{suffix}.svg"] = doc.encode("utf-8")
        diverged = any(c.diverged for c in bundle.cells)
        for c in bundle.cells:
            print(
                f"{c.scheme} h={c.h:g}: max|X| over records = {c.max_abs_recorded:.4g}, "
                f"first non-finite t = {c.first_nonfinite_time}"
            )

    elif args.command == "moments":
        bundle = experiments.run_moments(cfg, threads=threads)
        files.update(output.moment_files(bundle, cfg.h_values))
        if "svg" in cfg.formats:
            for c in bundle.cells:
                suffix = "" if len(cfg.h_values) <= 1 else f"_h{c.h:g}"
                series = [
                    (f"m{k}", list(c.times), list(c.moments[k])) for k in sorted(c.moments)
                ]
                try:
                    doc = svgplot.series_svg(
                        series,
                        title=f"moments: {c.scheme} (h={c.h:g})",
                        xlabel="t",
                        ylabel="moment",
                        fingerprint=fp,
                    )
                except ValueError:
                    continue
                files[f"moments_{c.scheme}{suffix}.svg"] = doc.encode("utf-8")
        diverged = any(c.nonfinite for c in bundle.cells)
        for c in bundle.cells:
            flag = " [non-finite]" if c.nonfinite else (" [ceiling]" if c.exceeded else "")
            print(f"{c.scheme} h={c.h:g}: {len(c.times)} rows{flag}")

    elif args.command == "nscaling":
        report = experiments.run_nscaling(cfg, threads=threads)
        files.update(output.nscaling_files(report))
        if "svg" in cfg.formats:
            try:
                files["nscaling.svg"] = svgplot.nscaling_svg(report, fp).encode("utf-8")
            except ValueError:
                pass
        print(f"nscaling {report.model}/{report.scheme}: slope={report.slope:.3f}")

    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown command {args.command}")

    written = output.write_files(cfg.out_dir, files)
    print(f"wrote {len(written)} files to {cfg.out_dir}")
    if diverged and args.strict:
        return 3
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run_command(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
