"""Datasets, Nguyen-Widrow initialisation and robust Levenberg-Marquardt fitting."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .mlp_core import MlpModel, ShapeError, jacobian

log = logging.getLogger(__name__)

TRAIN = "train"
VALIDATION = "validation"
SPLITS = (TRAIN, VALIDATION)

MAD_TO_SIGMA = 1.4826


class DatasetError(ValueError):
    pass


class EmptySplitError(DatasetError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    """Raw inputs, target and train/validation split.

    Inputs are standardized with the mean and standard deviation of the
    training rows; the target stays in natural units (seconds).
    """

    raw_inputs: np.ndarray
    targets: np.ndarray
    names: tuple
    is_train: np.ndarray
    target_name: str = "delta_T"
    mean: np.ndarray = field(init=False)
    std: np.ndarray = field(init=False)
    inputs: np.ndarray = field(init=False)

    def __post_init__(self):
        X = np.array(self.raw_inputs, dtype=float)
        y = np.array(self.targets, dtype=float).reshape(-1)
        tr = np.array(self.is_train, dtype=bool).reshape(-1)
        if X.ndim != 2:
            raise DatasetError("inputs must be a 2-D array")
        if X.shape[0] != y.size or tr.size != y.size:
            raise DatasetError("inputs, targets and split must have the same number of rows")
        if len(self.names) != X.shape[1]:
            raise DatasetError("one name per input column is required")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise DatasetError("dataset contains missing or non-finite values")
        if not tr.any():
            raise EmptySplitError("training split is empty")
        mean = X[tr].mean(axis=0)
        std = X[tr].std(axis=0)
        const = [n for n, s in zip(self.names, std) if not s > 0]
        if const:
            raise DatasetError(f"constant input column(s) rejected: {', '.join(const)}")
        for name, value in (
            ("raw_inputs", X),
            ("targets", y),
            ("is_train", tr),
            ("mean", mean),
            ("std", std),
            ("inputs", (X - mean) / std),
        ):
            value.flags.writeable = False
            object.__setattr__(self, name, value)
        object.__setattr__(self, "names", tuple(self.names))

    @classmethod
    def from_arrays(cls, X, y, names=None, split=None, split_seed=0, train_fraction=2 / 3, **kw):
        X = np.asarray(X, dtype=float)
        if names is None:
            names = [f"x{h}" for h in range(X.shape[1])]
        if split is None:
            split = random_split(X.shape[0], split_seed, train_fraction)
        else:
            split = np.asarray(split)
            if split.dtype.kind in "US":
                bad = set(split.tolist()) - set(SPLITS)
                if bad:
                    raise DatasetError(f"unknown split label(s): {sorted(bad)}")
                split = split == TRAIN
        return cls(X, y, tuple(names), split, **kw)

    @property
    def n_rows(self) -> int:
        return self.targets.size

    @property
    def n_inputs(self) -> int:
        return self.raw_inputs.shape[1]

    @property
    def split_labels(self) -> np.ndarray:
        return np.where(self.is_train, TRAIN, VALIDATION)

    def rows(self, split: str | None) -> np.ndarray:
        if split is None or split == "all":
            return np.ones(self.n_rows, bool)
        if split == TRAIN:
            return self.is_train
        if split == VALIDATION:
            return ~self.is_train
        raise ValueError(f"unknown split {split!r}")

    def part(self, split: str | None):
        """Standardized inputs and targets for a split."""
        r = self.rows(split)
        if not r.any():
            raise EmptySplitError(f"{split} split is empty")
        return self.inputs[r], self.targets[r]

    def with_targets(self, y) -> "Dataset":
        return Dataset(self.raw_inputs, y, self.names, self.is_train, self.target_name)

    def input_ranges(self) -> np.ndarray:
        """(min, max) of each standardized input over the training rows."""
        Xt = self.inputs[self.is_train]
        return np.stack([Xt.min(axis=0), Xt.max(axis=0)], axis=1)


def random_split(n_rows: int, seed: int = 0, train_fraction: float = 2 / 3) -> np.ndarray:
    """Boolean train mask with round(n_rows * train_fraction) training rows."""
    if not 0 < train_fraction <= 1:
        raise ValueError("train_fraction must be in (0, 1]")
    n_train = int(round(n_rows * train_fraction))
    order = np.random.default_rng(seed).permutation(n_rows)
    mask = np.zeros(n_rows, bool)
    mask[order[:n_train]] = True
    return mask


@dataclass(frozen=True)
class TrainConfig:
    max_iterations: int = 50000
    damping_init: float = 1e-2
    damping_up: float = 10.0
    damping_down: float = 0.1
    damping_max: float = 1e10
    robust: bool = True
    huber_k: float = 2.0
    # relative decrease of the training cost below which fitting stops
    stop_tolerance: float = 1e-9
    retrain_iterations: int = 50

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if not self.damping_up > 1:
            raise ValueError("damping_up must be > 1")
        if not 0 < self.damping_down < 1:
            raise ValueError("damping_down must be in (0, 1)")
        if not self.damping_init > 0:
            raise ValueError("damping_init must be > 0")
        if not self.huber_k > 0:
            raise ValueError("huber_k must be > 0")


@dataclass
class TrainReport:
    iterations_used: int
    final_cost: float
    nsse_train: float
    nsse_val: float
    error_mean_train: float
    error_std_train: float
    error_mean_val: float
    error_std_val: float
    wall_time: float
    stop_reason: str
    cost_trace: list = field(default_factory=list)
    converged: bool = True


# -- initialisation ------------------------------------------------------------

def nguyen_widrow_init(
    n_inputs: int, n_hidden: int, input_ranges=None, seed=0, input_names=None, target_scale=None
) -> MlpModel:
    """Nguyen-Widrow initial weights.

    Hidden rows get norm ``0.7 * n_hidden ** (1 / n_inputs)`` on the [-1, 1]
    input domain and are then mapped onto ``input_ranges`` (one (lo, hi) pair
    per input). Biases are uniform in [-norm, norm]; the output layer is
    uniform in [-0.1, 0.1], on the standardized target scale when
    ``target_scale=(mean, std)`` is given.
    """
    if n_inputs < 1 or n_hidden < 1:
        raise ValueError("n_inputs and n_hidden must be >= 1")
    rng = np.random.default_rng(seed)
    beta = 0.7 * n_hidden ** (1.0 / n_inputs)
    W = rng.uniform(-1.0, 1.0, (n_hidden, n_inputs))
    W *= beta / np.linalg.norm(W, axis=1, keepdims=True)
    c = rng.uniform(-beta, beta, n_hidden)
    v = rng.uniform(-0.1, 0.1, n_hidden)
    b = rng.uniform(-0.1, 0.1)
    if input_ranges is not None:
        r = np.asarray(input_ranges, dtype=float)
        if r.shape != (n_inputs, 2) or not np.isfinite(r).all():
            raise ValueError("input_ranges must be a finite (n_inputs, 2) array")
        span = r[:, 1] - r[:, 0]
        span = np.where(span > 0, span, 2.0)
        scale = 2.0 / span
        offset = -(r[:, 1] + r[:, 0]) / span
        c = c + W @ offset
        W = W * scale
    if target_scale is not None:
        mu, sd = target_scale
        v, b = v * sd, mu + b * sd
    return MlpModel(W, c, v, b, input_names=input_names)


# -- robust weighting -------------------------------------------------------------

def mad_scale(residuals) -> float:
    r = np.asarray(residuals, dtype=float)
    return MAD_TO_SIGMA * float(np.median(np.abs(r - np.median(r))))


def robust_weights(residuals, k: float = 2.0, scale: float | None = None) -> np.ndarray:
    """Huber weights min(1, k*s/|r|) with MAD scale s; all ones when s == 0."""
    r = np.asarray(residuals, dtype=float)
    s = mad_scale(r) if scale is None else scale
    if not s > 0:
        return np.ones_like(r)
    cut = k * s
    a = np.abs(r)
    return np.where(a <= cut, 1.0, cut / np.maximum(a, cut))


def huber_cost(residuals, cut: float) -> float:
    """Sum of Huber losses: r^2 inside the cut, 2*cut*|r| - cut^2 outside."""
    a = np.abs(residuals)
    if not np.isfinite(cut):
        return float(a @ a)
    return float(np.where(a <= cut, a * a, 2.0 * cut * a - cut * cut).sum())


# -- error metrics ----------------------------------------------------------------

def residuals(model: MlpModel, dataset: Dataset, split: str | None) -> np.ndarray:
    X, y = dataset.part(split)
    return y - model.predict(X)


def nsse(model: MlpModel, dataset: Dataset, split: str | None = TRAIN) -> float:
    """Mean squared error per pattern over a split."""
    e = residuals(model, dataset, split)
    return float(e @ e) / e.size


def error_stats(model: MlpModel, dataset: Dataset, split: str | None = TRAIN) -> tuple[float, float]:
    """Mean and population standard deviation of target - prediction."""
    e = residuals(model, dataset, split)
    return float(e.mean()), float(e.std())


def evaluate(model: MlpModel, dataset: Dataset) -> dict:
    out = {"nsse_train": nsse(model, dataset, TRAIN)}
    out["error_mean_train"], out["error_std_train"] = error_stats(model, dataset, TRAIN)
    if (~dataset.is_train).any():
        out["nsse_val"] = nsse(model, dataset, VALIDATION)
        out["error_mean_val"], out["error_std_val"] = error_stats(model, dataset, VALIDATION)
    else:
        out.update(nsse_val=float("nan"), error_mean_val=float("nan"), error_std_val=float("nan"))
    return out


# -- Levenberg-Marquardt ------------------------------------------------------------

def levenberg_marquardt(
    model: MlpModel,
    dataset: Dataset,
    config: TrainConfig = TrainConfig(),
    max_iterations: int | None = None,
    output_layer_only: bool = False,
) -> tuple[MlpModel, TrainReport]:
    """Fit the active parameters on the training split.

    Each iteration solves ``(J'WJ + lam*I) d = J'We`` where W holds Huber
    weights (all ones when ``config.robust`` is false). A step is kept only
    if the training cost drops; otherwise lam grows until it exceeds
    ``config.damping_max``. The Huber scale comes from the MAD of the
    residuals and is only ever allowed to shrink, which keeps the cost of
    accepted steps non-increasing.

    The fit runs on a standardized target (training mean and std) and the
    output layer is mapped back afterwards; costs in the report are in the
    target's natural units. With ``output_layer_only`` the hidden layer is
    frozen and only the output weights and bias move.
    """
    if model.n_inputs != dataset.n_inputs:
        raise ShapeError(f"model has {model.n_inputs} inputs, dataset has {dataset.n_inputs}")
    n_iter = config.max_iterations if max_iterations is None else max_iterations
    X, y = dataset.part(TRAIN)
    t0 = time.perf_counter()
    mu = float(y.mean())
    sd = float(y.std())
    if not sd > 0:
        sd = 1.0
    y = (y - mu) / sd
    start = model
    model = model.replace(output_weights=model.output_weights / sd, output_bias=(model.output_bias - mu) / sd)

    theta = model.params()
    free = np.arange(theta.size)
    if output_layer_only:
        free = free[-(model.nb_hidden + 1):]
    e = y - model.predict(X)
    if not np.isfinite(e).all():
        raise TrainingError("non-finite training cost at initial parameters")
    if config.robust:
        s = mad_scale(e)
        cut = config.huber_k * s if s > 0 else np.inf
    else:
        cut = np.inf
    cost = huber_cost(e, cut)
    if not np.isfinite(cost):
        raise TrainingError("non-finite training cost at initial parameters")

    trace = [cost]
    lam = config.damping_init
    reason = "max_iterations"
    converged = True
    it = 0
    current = model
    while it < n_iter:
        it += 1
        J = jacobian(current, X)
        if output_layer_only:
            J = J[:, free]
        a = np.abs(e)
        w = np.where(a <= cut, 1.0, cut / np.maximum(a, cut)) if np.isfinite(cut) else None
        Js = J if w is None else J * np.sqrt(w)[:, None]
        A = Js.T @ Js
        g = J.T @ (e if w is None else w * e)
        diag = np.arange(A.shape[0])
        accepted = False
        while lam <= config.damping_max:
            A_l = A.copy()
            A_l[diag, diag] += lam
            try:
                step = np.linalg.solve(A_l, g)
            except np.linalg.LinAlgError:
                lam *= config.damping_up
                continue
            new_theta = theta.copy()
            new_theta[free] += step
            cand = current.with_params(new_theta)
            e_new = y - cand.predict(X)
            cost_new = huber_cost(e_new, cut)
            if np.isfinite(cost_new) and cost_new < cost:
                accepted = True
                break
            lam *= config.damping_up
        if not accepted:
            reason = "damping_overflow"
            converged = bool(np.isfinite(cost))
            break
        lam = max(lam * config.damping_down, 1e-20)
        decrease = (cost - cost_new) / cost if cost > 0 else 0.0
        current, theta, e = cand, new_theta, e_new
        if np.isfinite(cut):
            s = mad_scale(e)
            if s > 0:
                cut = min(cut, config.huber_k * s)
        cost = huber_cost(e, cut)
        trace.append(cost)
        if decrease < config.stop_tolerance or cost == 0.0:
            reason = "stop_tolerance"
            break
    if current is model:
        current = start
    else:
        current = current.replace(
            output_weights=current.output_weights * sd, output_bias=current.output_bias * sd + mu
        )

    metrics = evaluate(current, dataset)
    report = TrainReport(
        iterations_used=it,
        final_cost=cost * sd * sd,
        wall_time=time.perf_counter() - t0,
        stop_reason=reason,
        cost_trace=[c * sd * sd for c in trace],
        converged=converged,
        **metrics,
    )
    return current, report


def initial_model(dataset: Dataset, n_hidden: int, seed: int) -> MlpModel:
    """Nguyen-Widrow start point fitted to the dataset's input ranges."""
    return nguyen_widrow_init(dataset.n_inputs, n_hidden, dataset.input_ranges(), seed, input_names=dataset.names)


def train(dataset: Dataset, n_hidden: int, seed: int, config: TrainConfig = TrainConfig()):
    """Nguyen-Widrow initialisation followed by a full LM fit."""
    return levenberg_marquardt(initial_model(dataset, n_hidden, seed), dataset, config)
