"""Structure selection: Engel, Engel_mod, N2PFA and Engel_mod followed by N2PFA.

Engel and Engel_mod test, over the training patterns, whether the variance
of a sensitivity is indistinguishable from a small null variance (chi-square
test, lower tail). Engel removes every null input / hidden unit in a round;
Engel_mod removes one weight per round. Neither retrains between removals;
both finish with one longer retrain. N2PFA removes hidden units and inputs
one at a time, retraining briefly after each trial removal and keeping a
removal only if the validation error stays within a tolerance.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import mlp_core
from .chi2 import chi2_ppf
from .mlp_core import MlpModel, count_params, hidden_outputs, input_sensitivities, jacobian
from .training import TRAIN, VALIDATION, Dataset, EmptySplitError, TrainConfig, evaluate, levenberg_marquardt, nsse

ALGORITHMS = ("engel", "engel_mod", "n2pfa", "combined")

CSV_COLUMNS = (
    "algorithm",
    "seed",
    "Nb_I",
    "Nb_H",
    "Nb_theta",
    "NSSE_ID",
    "NSSE_val",
    "err_mean_ID",
    "err_std_ID",
    "err_mean_val",
    "err_std_val",
    "time_s",
)


@dataclass(frozen=True)
class PruneConfig:
    significance_alpha: float = 0.05
    # null variance as a fraction of the training-target variance
    sigma0_rel: float = 1e-3
    n2pfa_tolerance: float = 0.02
    retrain_iterations: int = 50
    # relative cost decrease ending a short retrain early
    retrain_stop_tolerance: float = 1e-4
    final_retrain_iterations: int = 500
    max_rounds: int = 10000
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        # alpha = 0 and tolerance in [-1, 0) are accepted as "never prune" settings
        if not 0 <= self.significance_alpha < 1:
            raise ValueError("significance_alpha must be in [0, 1)")
        if not self.sigma0_rel > 0:
            raise ValueError("sigma0_rel must be > 0")
        if not self.n2pfa_tolerance >= -1:
            raise ValueError("n2pfa_tolerance must be >= -1")
        if self.retrain_iterations < 0 or self.final_retrain_iterations < 0 or self.max_rounds < 0:
            raise ValueError("iteration and round counts must be >= 0")


@dataclass
class PruneReport:
    algorithm: str
    nb_inputs: int
    nb_hidden: int
    nb_params: int
    nsse_train: float
    nsse_val: float
    error_mean_train: float
    error_std_train: float
    error_mean_val: float
    error_std_val: float
    wall_time: float
    removal_trace: list = field(default_factory=list)
    kept_inputs: list = field(default_factory=list)
    seed: int | None = None
    rounds: int = 0

    def csv_row(self) -> dict:
        return dict(
            zip(
                CSV_COLUMNS,
                (
                    self.algorithm,
                    "" if self.seed is None else self.seed,
                    self.nb_inputs,
                    self.nb_hidden,
                    self.nb_params,
                    repr(self.nsse_train),
                    repr(self.nsse_val),
                    repr(self.error_mean_train),
                    repr(self.error_std_train),
                    repr(self.error_mean_val),
                    repr(self.error_std_val),
                    f"{self.wall_time:.3f}",
                ),
            )
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PruneReport":
        return cls(**d)


def _report(algorithm, model, dataset, wall_time, trace, rounds) -> PruneReport:
    m = evaluate(model, dataset)
    return PruneReport(
        algorithm=algorithm,
        nb_inputs=model.nb_inputs,
        nb_hidden=model.nb_hidden,
        nb_params=count_params(model),
        nsse_train=m["nsse_train"],
        nsse_val=m["nsse_val"],
        error_mean_train=m["error_mean_train"],
        error_std_train=m["error_std_train"],
        error_mean_val=m["error_mean_val"],
        error_std_val=m["error_std_val"],
        wall_time=wall_time,
        removal_trace=trace,
        kept_inputs=model.kept_inputs,
        rounds=rounds,
    )


def report_csv(reports, header: bool = True) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    if header:
        w.writeheader()
    for r in reports:
        w.writerow(r.csv_row())
    return buf.getvalue()


def trace_jsonl(report: PruneReport) -> str:
    lines = []
    for entry in report.removal_trace:
        lines.append(json.dumps({"algorithm": report.algorithm, "seed": report.seed, **entry}))
    return "".join(line + "\n" for line in lines)


# -- variance nullity ------------------------------------------------------------

def variance_nullity(sensitivities, sigma0_sq: float, alpha: float):
    """Chi-square nullity test per column of a P x K sensitivity matrix.

    Returns ``(prunable, gamma)`` with ``gamma_k = (P-1) * var_k / sigma0_sq``
    (sample variance). Column k is prunable when gamma_k is below the lower
    ``alpha`` critical value of chi-square(P-1) and ``|mean_k| < sqrt(sigma0_sq)``.
    """
    S = np.asarray(sensitivities, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    P = S.shape[0]
    if P < 2:
        raise ValueError("variance nullity needs at least 2 patterns")
    if not sigma0_sq > 0:
        raise ValueError("sigma0_sq must be > 0")
    gamma = (P - 1) * S.var(axis=0, ddof=1) / sigma0_sq
    crit = chi2_ppf(alpha, P - 1)
    prunable = (gamma < crit) & (np.abs(S.mean(axis=0)) < np.sqrt(sigma0_sq))
    return prunable, gamma


def null_variance(dataset: Dataset, config: PruneConfig) -> float:
    y = dataset.targets[dataset.is_train]
    var = float(y.var())
    return config.sigma0_rel * (var if var > 0 else 1.0)


def _final_retrain(model, dataset, config):
    if config.final_retrain_iterations == 0:
        return model
    out, _ = levenberg_marquardt(model, dataset, config.train, config.final_retrain_iterations)
    return out


# -- Engel -------------------------------------------------------------------------

def engel_prune(model: MlpModel, dataset: Dataset, config: PruneConfig = PruneConfig()):
    """Batch removal of inputs and hidden units with null sensitivity variance.

    Input sensitivities are d(output)/d(x_h); hidden-unit sensitivities are
    the unit's contribution v_i * a_i to the output. Removed entities are
    replaced by their training mean, absorbed into the downstream bias.
    """
    t0 = time.perf_counter()
    X, _ = dataset.part(TRAIN)
    s0 = null_variance(dataset, config)
    trace = []
    rounds = 0
    current = model
    while rounds < config.max_rounds:
        inputs = np.flatnonzero(current.input_active)
        hidden = np.flatnonzero(current.hidden_active)
        if inputs.size == 0 and hidden.size == 0:
            break
        S_in = input_sensitivities(current, X)[:, inputs]
        A = hidden_outputs(current, X)
        S_hid = A[:, hidden] * current.output_weights[hidden]
        prunable, gamma = variance_nullity(np.hstack([S_in, S_hid]), s0, config.significance_alpha)
        if not prunable.any():
            break
        rounds += 1
        x_mean = X.mean(axis=0)
        a_mean = A.mean(axis=0)
        for k in np.flatnonzero(prunable):
            if k < inputs.size:
                h = int(inputs[k])
                current = mlp_core.prune_input(current, h, fill_value=x_mean[h])
                entity = ["input", h]
            else:
                i = int(hidden[k - inputs.size])
                current = mlp_core.prune_hidden(current, i, fill_value=a_mean[i])
                entity = ["hidden", i]
            trace.append({"stage": "engel", "round": rounds, "entity": entity, "gamma": float(gamma[k])})
    if trace:
        current = _final_retrain(current, dataset, config)
    rep = _report("engel", current, dataset, time.perf_counter() - t0, trace, rounds)
    return current, rep


# -- Engel_mod -----------------------------------------------------------------------

def weight_sensitivities(model: MlpModel, X) -> tuple[np.ndarray, list]:
    """Per-pattern first-order effect of zeroing each active weight.

    Columns cover the active hidden weights then the active output weights,
    in canonical order; the value is ``theta_k * d(output)/d(theta_k)``.
    """
    J = jacobian(model, X)
    theta = model.params()
    labels = model.param_labels()
    keep = [k for k, lab in enumerate(labels) if lab[0] in ("weight", "output_weight")]
    return J[:, keep] * theta[keep], [labels[k] for k in keep]


def engel_mod_prune(model: MlpModel, dataset: Dataset, config: PruneConfig = PruneConfig()):
    """Remove one weight per round: the prunable one with the smallest statistic.

    Ties go to the lowest canonical index. Removing an output weight removes
    its hidden unit; a removed weight's mean effect is absorbed into the
    downstream bias.
    """
    t0 = time.perf_counter()
    X, _ = dataset.part(TRAIN)
    x_mean = X.mean(axis=0)
    s0 = null_variance(dataset, config)
    trace = []
    rounds = 0
    current = model
    while rounds < config.max_rounds:
        S, labels = weight_sensitivities(current, X)
        if not labels:
            break
        prunable, gamma = variance_nullity(S, s0, config.significance_alpha)
        if not prunable.any():
            break
        k = int(np.flatnonzero(prunable)[np.argmin(gamma[prunable])])
        lab = labels[k]
        rounds += 1
        if lab[0] == "weight":
            _, i, h = lab
            current = mlp_core.prune_weight(current, i, h, fill_value=x_mean[h])
        else:
            i = lab[1]
            a_mean = float(hidden_outputs(current, X)[:, i].mean())
            current = mlp_core.prune_hidden(current, i, fill_value=a_mean)
        trace.append({"stage": "engel_mod", "round": rounds, "entity": list(lab), "gamma": float(gamma[k])})
    if trace:
        current = _final_retrain(current, dataset, config)
    rep = _report("engel_mod", current, dataset, time.perf_counter() - t0, trace, rounds)
    return current, rep


# -- N2PFA ---------------------------------------------------------------------------

def _retrain_config(config: PruneConfig) -> TrainConfig:
    return dataclasses.replace(config.train, stop_tolerance=config.retrain_stop_tolerance)


def _trial(current, dataset, config, kind, index, x_mean, a_mean):
    if kind == "hidden":
        trial = mlp_core.prune_hidden(current, index, fill_value=a_mean[index])
    else:
        trial = mlp_core.prune_input(current, index, fill_value=x_mean[index])
    if config.retrain_iterations:
        trial, _ = levenberg_marquardt(trial, dataset, _retrain_config(config), config.retrain_iterations)
    return trial, nsse(trial, dataset, VALIDATION)


def n2pfa_prune(model: MlpModel, dataset: Dataset, config: PruneConfig = PruneConfig()):
    """Hidden-unit then input elimination with short retraining, until fixpoint.

    A phase repeatedly removes every active candidate on trial (replaced by
    its training mean), retrains for ``retrain_iterations`` LM iterations and
    scores it on the validation split. The best trial is kept if its
    validation NSSE is at most ``(1 + tolerance)`` times the reference, which
    then becomes the new reference; the phase ends at the first rejection.
    Hidden and input phases alternate until neither accepts anything.
    Trials are scored in index order and ties go to the lowest index.
    """
    t0 = time.perf_counter()
    if dataset.is_train.all():
        raise EmptySplitError("N2PFA needs a non-empty validation split")
    X, _ = dataset.part(TRAIN)
    x_mean = X.mean(axis=0)
    current = model
    reference = nsse(current, dataset, VALIDATION)
    bound = 1.0 + config.n2pfa_tolerance
    trace = []
    rounds = 0
    idle_phases = 0
    phase = "hidden"
    while idle_phases < 2 and rounds < config.max_rounds:
        accepted = 0
        while rounds < config.max_rounds:
            rounds += 1
            if phase == "hidden":
                candidates = np.flatnonzero(current.hidden_active)
                a_mean = hidden_outputs(current, X).mean(axis=0)
            else:
                candidates = np.flatnonzero(current.input_active)
                a_mean = None
            best = None
            for idx in candidates:
                trial, score = _trial(current, dataset, config, phase, int(idx), x_mean, a_mean)
                if best is None or score < best[2]:
                    best = (int(idx), trial, score)
            if best is None or not best[2] <= bound * reference:
                break
            trace.append(
                {
                    "stage": "n2pfa",
                    "round": rounds,
                    "entity": [phase, best[0]],
                    "nsse_val": best[2],
                    "reference": reference,
                    "tolerance": config.n2pfa_tolerance,
                }
            )
            current, reference = best[1], best[2]
            accepted += 1
        idle_phases = 0 if accepted else idle_phases + 1
        phase = "input" if phase == "hidden" else "hidden"
    rep = _report("n2pfa", current, dataset, time.perf_counter() - t0, trace, rounds)
    return current, rep


def combined_pipeline(model: MlpModel, dataset: Dataset, config: PruneConfig = PruneConfig(), first_stage=None):
    """Engel_mod followed by N2PFA on the structure it leaves.

    ``first_stage`` may carry an already computed ``engel_mod_prune`` result
    for the same model and config, to avoid running it twice.
    """
    if first_stage is None:
        first_stage = engel_mod_prune(model, dataset, config)
    stage1, rep1 = first_stage
    stage2, rep2 = n2pfa_prune(stage1, dataset, config)
    rep = _report(
        "combined",
        stage2,
        dataset,
        rep1.wall_time + rep2.wall_time,
        rep1.removal_trace + rep2.removal_trace,
        rep1.rounds + rep2.rounds,
    )
    return stage2, rep


def prune(algorithm: str, model: MlpModel, dataset: Dataset, config: PruneConfig = PruneConfig()):
    funcs = {
        "engel": engel_prune,
        "engel_mod": engel_mod_prune,
        "n2pfa": n2pfa_prune,
        "combined": combined_pipeline,
    }
    if algorithm not in funcs:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {', '.join(ALGORITHMS)}")
    return funcs[algorithm](model, dataset, config)


def replay_trace(model: MlpModel, trace) -> MlpModel:
    """Apply the masks recorded in a removal trace, without touching values."""
    for entry in trace:
        model = mlp_core.apply_removal(model, tuple(entry["entity"]))
    return model
