"""Multi-seed comparison of pruning algorithms and its reports.

Each seed draws one Nguyen-Widrow start, trains it once and hands the same
trained network to every algorithm, so all algorithms share their initial
parameters. The summary aggregates per-seed reports into min / mean / max
and the share of seeds strictly below and above the mean.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import traceback
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

from . import config as cfgfile
from .datagen import GeneratorConfig, generate, load_csv
from .mlp_core import MlpModel
from .pruning import ALGORITHMS, PruneConfig, PruneReport, combined_pipeline, prune, report_csv, trace_jsonl
from .training import Dataset, TrainConfig, initial_model, levenberg_marquardt

log = logging.getLogger(__name__)


class ExperimentWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    n_seeds: int = 50
    first_seed: int = 0
    algorithms: tuple = ALGORITHMS
    initial_hidden: int = 25
    # CSV file to load; when empty the generator section is used instead
    data_path: str | None = None
    data: GeneratorConfig = field(default_factory=GeneratorConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    prune: PruneConfig = field(default_factory=PruneConfig)
    parallelism: int = 1

    def __post_init__(self):
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be >= 1")
        if self.initial_hidden < 1:
            raise ValueError("initial_hidden must be >= 1")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        algos = tuple(self.algorithms)
        unknown = [a for a in algos if a not in ALGORITHMS]
        if unknown:
            raise ValueError(f"unknown algorithm(s) {unknown}; expected a subset of {list(ALGORITHMS)}")
        if len(set(algos)) != len(algos):
            raise ValueError("algorithms listed twice")
        object.__setattr__(self, "algorithms", algos)

    @property
    def seeds(self) -> list[int]:
        return list(range(self.first_seed, self.first_seed + self.n_seeds))

    @property
    def prune_config(self) -> PruneConfig:
        """Pruning settings with the experiment's training settings for retrains."""
        return dataclasses.replace(self.prune, train=self.train)

    def to_sections(self) -> dict:
        return {
            "experiment": cfgfile.dataclass_section(self),
            "data": cfgfile.dataclass_section(self.data),
            "train": cfgfile.dataclass_section(self.train),
            "prune": cfgfile.dataclass_section(self.prune),
        }

    @classmethod
    def from_sections(cls, sections: dict, base: "ExperimentConfig | None" = None) -> "ExperimentConfig":
        base = base or cls()
        unknown = set(sections) - {"experiment", "data", "train", "prune"}
        if unknown:
            raise cfgfile.ConfigError(f"unknown config section(s): {sorted(unknown)}")
        return dataclasses.replace(
            cfgfile.update_dataclass(base, sections.get("experiment", {}), "experiment"),
            data=cfgfile.update_dataclass(base.data, sections.get("data", {}), "data"),
            train=cfgfile.update_dataclass(base.train, sections.get("train", {}), "train"),
            prune=cfgfile.update_dataclass(base.prune, sections.get("prune", {}), "prune"),
        )

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls.from_sections(cfgfile.read_sections(path))

    def to_ini(self) -> str:
        return cfgfile.dumps_sections(self.to_sections())


def load_dataset(config: ExperimentConfig) -> Dataset:
    if config.data_path:
        return load_csv(config.data_path, split_seed=config.data.seed)
    return generate(config.data)


def param_digest(model: MlpModel) -> str:
    return hashlib.sha256(model.params().tobytes()).hexdigest()


@dataclass
class SeedResult:
    seed: int
    init_digest: str | None = None
    # digests of the starting model each algorithm received, pre- and post-training
    start_digests: dict = field(default_factory=dict)
    train_summary: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["reports"] = {a: r.to_dict() for a, r in self.reports.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SeedResult":
        d = dict(d)
        d["reports"] = {a: PruneReport.from_dict(r) for a, r in d.get("reports", {}).items()}
        return cls(**d)


def run_seed(config: ExperimentConfig, dataset: Dataset, seed: int) -> SeedResult:
    """Train one start point and run every configured algorithm on it."""
    res = SeedResult(seed)
    try:
        start = initial_model(dataset, config.initial_hidden, seed)
        res.init_digest = param_digest(start)
        trained, rep = levenberg_marquardt(start, dataset, config.train)
    except Exception as exc:  # recorded, reported and excluded from aggregates
        res.failures["training"] = _describe(exc)
        return res
    res.train_summary = {
        "iterations": rep.iterations_used,
        "nsse_train": rep.nsse_train,
        "nsse_val": rep.nsse_val,
        "stop_reason": rep.stop_reason,
        "wall_time": rep.wall_time,
    }
    pcfg = config.prune_config
    engel_mod_result = None
    for algo in config.algorithms:
        res.start_digests[algo] = [param_digest(start), param_digest(trained)]
        try:
            if algo == "combined" and engel_mod_result is not None:
                _, r = combined_pipeline(trained, dataset, pcfg, first_stage=engel_mod_result)
            else:
                out = prune(algo, trained, dataset, pcfg)
                if algo == "engel_mod":
                    engel_mod_result = out
                r = out[1]
        except Exception as exc:
            res.failures[algo] = _describe(exc)
            continue
        r.seed = seed
        res.reports[algo] = r
    return res


def _describe(exc: BaseException) -> str:
    return "".join(traceback.format_exception_only(type(exc), exc)).strip()


def _seed_job(args):
    config, dataset, seed = args
    return run_seed(config, dataset, seed)


class Aggregate(NamedTuple):
    min: float
    mean: float
    max: float
    pct_below: float
    pct_above: float


def aggregate(values: Sequence[float]) -> Aggregate:
    """Min, mean, max and the percentages strictly below / above the mean."""
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("aggregate of an empty sequence")
    mean = math.fsum(vals) / len(vals)
    below = sum(v < mean for v in vals)
    above = sum(v > mean for v in vals)
    n = len(vals)
    return Aggregate(min(vals), mean, max(vals), round(100 * below / n, 1), round(100 * above / n, 1))


# key, table label, PruneReport attribute; Table 1 rows then the error rows
METRICS = (
    ("Nb_I", "Nb_I", "nb_inputs"),
    ("Nb_H", "Nb_H", "nb_hidden"),
    ("Nb_theta", "Nb_θ", "nb_params"),
    ("NSSE_ID", "NSSE_ID", "nsse_train"),
    ("NSSE_val", "NSSE_val", "nsse_val"),
    ("temps", "temps (s)", "wall_time"),
    ("err_mean_ID", "moyenne erreur ID", "error_mean_train"),
    ("err_std_ID", "écart type erreur ID", "error_std_train"),
    ("err_mean_val", "moyenne erreur val", "error_mean_val"),
    ("err_std_val", "écart type erreur val", "error_std_val"),
)
COUNT_METRICS = {"Nb_I", "Nb_H", "Nb_theta"}


@dataclass
class ExperimentSummary:
    config: ExperimentConfig
    results: list

    @property
    def seeds(self) -> list[int]:
        return [r.seed for r in self.results]

    @property
    def algorithms(self) -> tuple:
        return self.config.algorithms

    def reports(self, algorithm: str) -> list[PruneReport]:
        return [r.reports[algorithm] for r in self.results if algorithm in r.reports]

    def failures(self) -> list[tuple[int, str, str]]:
        """(seed, stage, message) for every failed seed/algorithm pair."""
        return [(r.seed, stage, msg) for r in self.results for stage, msg in sorted(r.failures.items())]

    def failed_seeds(self, algorithm: str) -> list[int]:
        return [r.seed for r in self.results if algorithm not in r.reports]

    def aggregates(self, algorithm: str) -> dict:
        reps = self.reports(algorithm)
        if not reps:
            return {}
        return {key: aggregate([getattr(r, attr) for r in reps]) for key, _, attr in METRICS}

    def to_dict(self) -> dict:
        return {
            "format": "mlpstruct-summary",
            "version": 1,
            "config": self.config.to_sections(),
            "results": [r.to_dict() for r in self.results],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSummary":
        if d.get("format") != "mlpstruct-summary" or d.get("version") != 1:
            raise ValueError("not an mlpstruct summary (format/version mismatch)")
        return cls(ExperimentConfig.from_sections(d["config"]), [SeedResult.from_dict(r) for r in d["results"]])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ExperimentSummary":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def run_experiment(config: ExperimentConfig, dataset: Dataset | None = None, progress=None) -> ExperimentSummary:
    """Run every seed of ``config``; failures are kept in the summary, not raised.

    ``progress`` is called with each ``SeedResult`` as it arrives, in seed order.
    """
    if dataset is None:
        dataset = load_dataset(config)
    seeds = config.seeds
    jobs = [(config, dataset, s) for s in seeds]
    results = []

    def collect(res):
        for stage, msg in sorted(res.failures.items()):
            text = f"seed {res.seed}: {stage} failed and is excluded from aggregates: {msg}"
            log.warning(text)
            warnings.warn(text, ExperimentWarning, stacklevel=3)
        if progress is not None:
            progress(res)
        results.append(res)

    if config.parallelism > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(config.parallelism, len(seeds))) as pool:
            # map yields in submission order, i.e. by seed
            for res in pool.map(_seed_job, jobs):
                collect(res)
    else:
        for job in jobs:
            collect(_seed_job(job))
    return ExperimentSummary(config, results)


# -- selection -------------------------------------------------------------------

@dataclass(frozen=True)
class BestStructure:
    algorithm: str
    seed: int
    kept_inputs: tuple
    nb_inputs: int
    nb_hidden: int
    nb_params: int
    nsse_train: float
    nsse_val: float
    error_mean_train: float
    error_mean_val: float

    def describe(self) -> str:
        return (
            f"{self.algorithm}, seed {self.seed}: Nb_I={self.nb_inputs} Nb_H={self.nb_hidden} "
            f"Nb_θ={self.nb_params}; inputs kept: {', '.join(self.kept_inputs)}"
        )


def _rank_key(r: PruneReport):
    return (max(abs(r.error_mean_train), abs(r.error_mean_val)), r.nsse_val, r.nsse_train, r.seed)


def select_best(summary, algorithm: str | None = None) -> BestStructure:
    """Seed with the smallest mean errors, then the smallest NSSE_val, NSSE_ID.

    ``summary`` is an ``ExperimentSummary`` or a plain sequence of reports.
    Without ``algorithm`` the last configured algorithm is used.
    """
    if isinstance(summary, ExperimentSummary):
        if algorithm is None:
            algorithm = summary.algorithms[-1]
        reports = summary.reports(algorithm)
    else:
        reports = [r for r in summary if algorithm is None or r.algorithm == algorithm]
    if not reports:
        raise ValueError("select_best needs at least one successful seed")
    r = min(reports, key=_rank_key)
    return BestStructure(
        r.algorithm,
        r.seed,
        tuple(r.kept_inputs),
        r.nb_inputs,
        r.nb_hidden,
        r.nb_params,
        r.nsse_train,
        r.nsse_val,
        r.error_mean_train,
        r.error_mean_val,
    )


# -- reports -------------------------------------------------------------------------

REPORT_FILES = ("results.csv", "table.txt", "table.md", "traces.jsonl", "failures.csv")


def _fmt(key: str, value: float, stat: str) -> str:
    if key in COUNT_METRICS and stat != "mean":
        return str(int(value))
    return f"{value:.2f}"


def _table_rows(summary: ExperimentSummary):
    """Yield ``(label, kind, cells)``; cells are 3 strings per algorithm."""
    aggs = {a: summary.aggregates(a) for a in summary.algorithms}
    for key, label, _ in METRICS:
        vals, pcts = [], []
        for a in summary.algorithms:
            agg = aggs[a].get(key)
            if agg is None:
                vals += ["-", "-", "-"]
                pcts += ["-", "", "-"]
                continue
            vals += [_fmt(key, agg.min, "min"), _fmt(key, agg.mean, "mean"), _fmt(key, agg.max, "max")]
            pcts += [f"{agg.pct_below:.1f}%", "", f"{agg.pct_above:.1f}%"]
        yield label, "val", vals
        yield "", "%", pcts
    fails = []
    for a in summary.algorithms:
        fails += ["", str(len(summary.failed_seeds(a))), ""]
    yield "échecs", "n", fails


def table_text(summary: ExperimentSummary) -> str:
    algos = summary.algorithms
    lw, kw, cw = 22, 4, 11
    lines = []
    head = " " * (lw + kw)
    for a in algos:
        head += f"{a:^{3 * cw}}"
    lines.append(head.rstrip())
    sub = " " * (lw + kw) + "".join(f"{'min':>{cw}}{'moyenne':>{cw}}{'max':>{cw}}" for _ in algos)
    lines.append(sub)
    lines.append("-" * len(sub))
    for label, kind, cells in _table_rows(summary):
        lines.append((f"{label:<{lw}}{kind:<{kw}}" + "".join(f"{c:>{cw}}" for c in cells)).rstrip())
    n = len(summary.results)
    lines.append("")
    lines.append(f"seeds: {n} ({summary.seeds[0]}..{summary.seeds[-1]})" if n else "seeds: 0")
    lines.append("% rows: share of seeds strictly below (min column) and above (max column) the mean")
    lines += _best_lines(summary)
    lines += _failure_lines(summary)
    return "\n".join(lines) + "\n"


def table_markdown(summary: ExperimentSummary) -> str:
    algos = summary.algorithms
    head = ["", ""] + [f"{a} {s}" for a in algos for s in ("min", "moyenne", "max")]
    lines = ["| " + " | ".join(head) + " |", "|" + "|".join(["---"] * 2 + ["---:"] * (3 * len(algos))) + "|"]
    for label, kind, cells in _table_rows(summary):
        lines.append("| " + " | ".join([label, kind, *cells]) + " |")
    lines.append("")
    lines += _best_lines(summary)
    lines += _failure_lines(summary)
    return "\n".join(lines) + "\n"


def _best_lines(summary: ExperimentSummary) -> list[str]:
    out = []
    for a in summary.algorithms:
        if summary.reports(a):
            out.append(f"best {select_best(summary, a).describe()}")
    return out


def _failure_lines(summary: ExperimentSummary) -> list[str]:
    return [f"failed: seed {s}, {stage}: {msg.splitlines()[-1]}" for s, stage, msg in summary.failures()]


def results_csv(summary: ExperimentSummary) -> str:
    rows = [r.reports[a] for a in summary.algorithms for r in summary.results if a in r.reports]
    return report_csv(rows)


def failures_csv(summary: ExperimentSummary) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed", "stage", "error"])
    for s, stage, msg in summary.failures():
        w.writerow([s, stage, msg])
    return buf.getvalue()


def emit_report(summary: ExperimentSummary, out_dir) -> list[Path]:
    """Write the per-seed CSV, the traces and the text / Markdown tables.

    Output depends only on the summary, so regenerating it is byte-identical.
    """
    if not summary.algorithms:
        raise ValueError("no algorithms in summary; nothing to report")
    contents = {
        "results.csv": results_csv(summary),
        "table.txt": table_text(summary),
        "table.md": table_markdown(summary),
        "traces.jsonl": "".join(
            trace_jsonl(r.reports[a]) for a in summary.algorithms for r in summary.results if a in r.reports
        ),
        "failures.csv": failures_csv(summary),
    }
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in REPORT_FILES:
        p = out / name
        with open(p, "w", encoding="utf-8", newline="") as fh:
            fh.write(contents[name])
        paths.append(p)
    return paths
