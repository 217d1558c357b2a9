"""Command-line interface: ``mlpstruct {generate,train,prune,experiment,report}``.

Settings come from built-in defaults, then an INI config file (``--config``,
a path or the name of a bundled config such as ``fixture``), then
``--set section.key=value`` overrides, then dedicated flags. Every run writes
``manifest.json`` next to its outputs; passing that manifest back as
``--config`` repeats the run.

Exit status: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgfile
from .datagen import generate_csv, save_csv
from .harness import ExperimentConfig, ExperimentSummary, emit_report, load_dataset, run_experiment, select_best
from .mlp_core import load_model, save_model
from .pruning import ALGORITHMS, prune, report_csv, trace_jsonl
from .training import initial_model, levenberg_marquardt

OUT_ENV = "MLPSTRUCT_OUT"
DEFAULT_OUT_ROOT = "mlpstruct-out"

log = logging.getLogger("mlpstruct")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="INI config file, bundled config name, or a manifest.json")
    p.add_argument("--seed", type=int, help="seed (first seed for experiments, generator seed for generate)")
    p.add_argument("--out", metavar="DIR", help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT_ROOT}, plus the subcommand)")
    p.add_argument(
        "--set",
        metavar="SECTION.KEY=VALUE",
        action="append",
        default=[],
        help="override any config key, e.g. train.max_iterations=100 (repeatable)",
    )
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")


def _data_flags(p):
    p.add_argument("--rows", type=int, help="generated dataset size")
    p.add_argument("--noise-std", type=float, help="generator noise standard deviation")
    p.add_argument("--outlier-fraction", type=float, help="share of generated rows with an outlier")


def _training_flags(p):
    p.add_argument("--data", metavar="CSV", help="dataset CSV (default: generate one from the [data] section)")
    p.add_argument("--hidden", type=int, help="initial number of hidden units")
    p.add_argument("--max-iterations", type=int, help="LM iteration budget for the initial fit")
    p.add_argument("--no-robust", action="store_true", default=None, help="plain least squares instead of Huber weights")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mlpstruct", description="Structure selection for one-hidden-layer perceptrons.")
    parser.add_argument("--version", action="version", version=f"mlpstruct {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("generate", help="write a synthetic sawmill dataset as CSV")
    _common(p)
    _data_flags(p)

    p = sub.add_parser("train", help="train one network with robust Levenberg-Marquardt")
    _common(p)
    _training_flags(p)
    _data_flags(p)

    p = sub.add_parser("prune", help="prune a trained network (trains one first without --model)")
    _common(p)
    p.add_argument("--algorithm", choices=ALGORITHMS, help="pruning algorithm")
    p.add_argument("--model", metavar="JSON", help="trained model file from `train`")
    _training_flags(p)
    _data_flags(p)

    p = sub.add_parser("experiment", help="multi-seed comparison with aggregated tables")
    _common(p)
    p.add_argument("--n-seeds", type=int, help="number of initial weight sets")
    p.add_argument("--algorithms", help="comma-separated subset of " + ",".join(ALGORITHMS))
    p.add_argument("--parallelism", type=int, help="worker processes")
    _training_flags(p)
    _data_flags(p)

    p = sub.add_parser("report", help="rebuild tables from a saved summary.json")
    _common(p)
    p.add_argument("--summary", metavar="JSON", help="summary file written by `experiment`")
    return parser


# -- configuration --------------------------------------------------------------------

# flag attribute -> (section, key)
_FLAG_KEYS = {
    "rows": ("data", "n_rows"),
    "noise_std": ("data", "noise_std"),
    "outlier_fraction": ("data", "outlier_fraction"),
    "data": ("experiment", "data_path"),
    "hidden": ("experiment", "initial_hidden"),
    "max_iterations": ("train", "max_iterations"),
    "n_seeds": ("experiment", "n_seeds"),
    "algorithms": ("experiment", "algorithms"),
    "parallelism": ("experiment", "parallelism"),
}
# arguments a manifest restores when they are not given again
_REPLAY_ARGS = ("algorithm", "model", "summary")


def _load_config_file(args) -> dict:
    if not args.config:
        return {}
    path = cfgfile.resolve_config_path(args.config)
    if path.suffix == ".json":
        try:
            manifest = json.loads(path.read_text(encoding="utf-8"))
            sections = manifest["config"]
        except (ValueError, KeyError, TypeError) as exc:
            raise cfgfile.ConfigError(f"{path}: not a manifest ({exc})") from None
        for name in _REPLAY_ARGS:
            if hasattr(args, name) and getattr(args, name) is None and manifest.get("args", {}).get(name):
                setattr(args, name, manifest["args"][name])
        return sections
    return cfgfile.read_sections(path)


def resolve_config(args) -> ExperimentConfig:
    """Defaults < config file < --set overrides < dedicated flags."""
    flags: dict = {}
    for attr, (section, key) in _FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            if attr == "data":
                value = str(Path(value).resolve())
            flags.setdefault(section, {})[key] = cfgfile.format_value(value)
    if getattr(args, "no_robust", None):
        flags.setdefault("train", {})["robust"] = "false"
    if args.seed is not None:
        section, key = ("data", "seed") if args.command == "generate" else ("experiment", "first_seed")
        flags.setdefault(section, {})[key] = str(args.seed)
    sections = cfgfile.merge_sections(_load_config_file(args), cfgfile.parse_overrides(args.set), flags)
    try:
        return ExperimentConfig.from_sections(sections)
    except (TypeError, ValueError) as exc:
        raise cfgfile.ConfigError(str(exc)) from exc


def out_dir(args) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get(OUT_ENV) or DEFAULT_OUT_ROOT) / args.command


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _replay_args(args) -> dict:
    return {name: getattr(args, name) for name in _REPLAY_ARGS if getattr(args, name, None) is not None}


def write_manifest(out: Path, args, config: ExperimentConfig, seeds, outputs, inputs=None) -> Path:
    manifest = {
        "tool": "mlpstruct",
        "version": __version__,
        "command": args.command,
        "args": {name: str(Path(v).resolve()) if name != "algorithm" else v for name, v in _replay_args(args).items()},
        "config": config.to_sections(),
        "seeds": list(seeds),
        "inputs": inputs or {},
        "outputs": sorted(str(Path(p).name) for p in outputs),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    return path


def _data_inputs(config: ExperimentConfig) -> dict:
    if config.data_path:
        return {"data": {"path": str(config.data_path), "sha256": _sha256(config.data_path)}}
    return {}


# -- subcommands ---------------------------------------------------------------------

def cmd_generate(args, config: ExperimentConfig, out: Path):
    path = out / "data.csv"
    path.write_text(generate_csv(config.data), encoding="utf-8")
    print(path)
    return [path], [config.data.seed], {}


def _trained(args, config: ExperimentConfig, dataset):
    seed = config.first_seed
    start = initial_model(dataset, config.initial_hidden, seed)
    log.info("training %d hidden units, seed %d", config.initial_hidden, seed)
    return levenberg_marquardt(start, dataset, config.train)


def cmd_train(args, config: ExperimentConfig, out: Path):
    dataset = load_dataset(config)
    model, rep = _trained(args, config, dataset)
    save_model(model, out / "model.json")
    report = {k: v for k, v in dataclasses.asdict(rep).items()}
    (out / "train_report.json").write_text(json.dumps(report, indent=1) + "\n", encoding="utf-8")
    print(
        f"{rep.stop_reason} after {rep.iterations_used} iterations: "
        f"NSSE_ID={rep.nsse_train:.4g} NSSE_val={rep.nsse_val:.4g}"
    )
    outputs = [out / "model.json", out / "train_report.json"]
    if not config.data_path:
        save_csv(dataset, out / "data.csv", [f"seed={config.data.seed}"])
        outputs.append(out / "data.csv")
    return outputs, [config.first_seed], _data_inputs(config)


def cmd_prune(args, config: ExperimentConfig, out: Path):
    if not args.algorithm:
        raise UsageError("prune: --algorithm is required")
    dataset = load_dataset(config)
    inputs = _data_inputs(config)
    if args.model:
        model = load_model(args.model)
        if model.n_inputs != dataset.n_inputs:
            raise ValueError(f"model has {model.n_inputs} inputs, dataset has {dataset.n_inputs}")
        inputs["model"] = {"path": str(args.model), "sha256": _sha256(args.model)}
    else:
        model, _ = _trained(args, config, dataset)
    pruned, rep = prune(args.algorithm, model, dataset, config.prune_config)
    rep.seed = config.first_seed
    save_model(pruned, out / "model.json")
    (out / "report.csv").write_text(report_csv([rep]), encoding="utf-8")
    (out / "trace.jsonl").write_text(trace_jsonl(rep), encoding="utf-8")
    print(
        f"{args.algorithm}: Nb_I={rep.nb_inputs} Nb_H={rep.nb_hidden} Nb_θ={rep.nb_params} "
        f"NSSE_ID={rep.nsse_train:.4g} NSSE_val={rep.nsse_val:.4g}; inputs kept: {', '.join(rep.kept_inputs)}"
    )
    return [out / "model.json", out / "report.csv", out / "trace.jsonl"], [config.first_seed], inputs


def cmd_experiment(args, config: ExperimentConfig, out: Path):
    def progress(res):
        log.info("seed %d done: %s", res.seed, ", ".join(f"{a} H={r.nb_hidden}" for a, r in res.reports.items()))

    summary = run_experiment(config, progress=progress)
    summary.save(out / "summary.json")
    paths = emit_report(summary, out)
    sys.stdout.write((out / "table.txt").read_text(encoding="utf-8"))
    return [out / "summary.json", *paths], config.seeds, _data_inputs(config)


def cmd_report(args, config: ExperimentConfig, out: Path):
    if not args.summary:
        raise UsageError("report: --summary is required")
    summary = ExperimentSummary.load(args.summary)
    paths = emit_report(summary, out)
    for a in summary.algorithms:
        if summary.reports(a):
            print("best", select_best(summary, a).describe())
    inputs = {"summary": {"path": str(args.summary), "sha256": _sha256(args.summary)}}
    return paths, summary.seeds, inputs, summary.config


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "prune": cmd_prune,
    "experiment": cmd_experiment,
    "report": cmd_report,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
            format="%(levelname)s %(name)s: %(message)s",
        )
        config = resolve_config(args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except cfgfile.ConfigError as exc:
        print(f"mlpstruct: configuration error: {exc}", file=sys.stderr)
        return 1

    out = out_dir(args)
    try:
        out.mkdir(parents=True, exist_ok=True)
        outputs, seeds, inputs, *used = COMMANDS[args.command](args, config, out)
        write_manifest(out, args, used[0] if used else config, seeds, outputs, inputs)
    except UsageError as exc:
        print(f"{parser.format_usage()}mlpstruct: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"mlpstruct {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
