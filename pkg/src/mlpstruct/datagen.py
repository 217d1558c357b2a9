"""Synthetic sawmill-like flow data with a planted two-unit tanh mechanism.

Ten input columns mimic the log/line descriptors of a sawing line. The target
``delta_T`` (seconds between log entry and arrival at the trimmer stock) is
produced by a two-hidden-unit tanh network over eight informative columns;
``longueur`` carries no signal and ``produit`` is an affine copy of
``type_piece``. Gaussian noise and optional heavy target outliers are added.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .mlp_core import MlpModel, activation
from .training import SPLITS, TRAIN, Dataset, DatasetError, random_split

COLUMNS = (
    "longueur",
    "diamGrosBout",
    "diamMoyen",
    "diamPetitBout",
    "produit",
    "type_piece",
    "Q_eboueur",
    "taux_eboueur",
    "Q_RQM",
    "RQM",
)
TARGET = "delta_T"
SPLIT = "split"
DECOYS = ("longueur", "produit")

# Planted mechanism, expressed on (raw - CENTER) / SCALE.
CENTER = np.array([4.25, 36.5, 33.5, 30.5, 135.0, 3.5, 8.0, 5 / 7, 5.0, 2.0])
SCALE = np.array([1.0, 10.7, 10.7, 10.7, 17.0, 1.7, 2.8, 0.16, 2.2, 0.82])
PLANT_W = np.array(
    [
        # long  gros   moyen  petit  prod  type   Q_eb   taux   Q_RQM  RQM
        [0.5, 0.60, 0.45, 0.35, 0.4, -0.55, 0.25, 0.00, 0.30, 0.00],
        [0.5, 0.00, 0.00, -0.20, 0.4, 0.30, 0.75, 0.65, 0.40, -0.45],
    ]
)
PLANT_C = np.array([0.35, -0.40])
PLANT_V = np.array([650.0, 420.0])
PLANT_B = 1800.0


class CsvError(DatasetError):
    pass


class EmptyFileError(CsvError):
    pass


class MissingColumnError(CsvError):
    pass


class ParseError(CsvError):
    pass


@dataclass(frozen=True)
class GeneratorConfig:
    n_rows: int = 4000
    noise_std: float = 20.0
    outlier_fraction: float = 0.0
    outlier_scale: float = 10.0
    seed: int = 0
    redundancy: bool = True
    irrelevant_inputs: tuple = DECOYS
    out_of_class: bool = False
    train_fraction: float = 2 / 3

    def __post_init__(self):
        if self.n_rows < 2:
            raise ValueError("n_rows must be >= 2")
        if not self.noise_std >= 0:
            raise ValueError("noise_std must be >= 0")
        if not 0 <= self.outlier_fraction < 1:
            raise ValueError("outlier_fraction must be in [0, 1)")
        if not self.outlier_scale >= 0:
            raise ValueError("outlier_scale must be >= 0")
        unknown = set(self.irrelevant_inputs) - set(COLUMNS)
        if unknown:
            raise ValueError(f"unknown irrelevant input(s): {sorted(unknown)}")
        object.__setattr__(self, "irrelevant_inputs", tuple(self.irrelevant_inputs))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["irrelevant_inputs"] = list(self.irrelevant_inputs)
        return d


def _raw_inputs(n: int, rng: np.random.Generator, redundancy: bool) -> np.ndarray:
    longueur = rng.uniform(2.5, 6.0, n)
    gros = rng.uniform(18.0, 55.0, n)
    taper = rng.uniform(2.0, 10.0, n)
    petit = gros - taper
    moyen = 0.5 * (gros + petit) + rng.normal(0.0, 1.0, n)
    type_piece = rng.integers(1, 7, n).astype(float)
    if redundancy:
        produit = 100.0 + 10.0 * type_piece
    else:
        produit = 100.0 + 10.0 * rng.integers(1, 7, n)
    q_eb = rng.poisson(8.0, n).astype(float)
    taux = rng.beta(5.0, 2.0, n)
    q_rqm = rng.poisson(5.0, n).astype(float)
    rqm = rng.integers(1, 4, n).astype(float)
    return np.column_stack([longueur, gros, moyen, petit, produit, type_piece, q_eb, taux, q_rqm, rqm])


def planted_weights(config: GeneratorConfig) -> np.ndarray:
    W = PLANT_W.copy()
    for name in config.irrelevant_inputs:
        W[:, COLUMNS.index(name)] = 0.0
    return W


def planted_response(X_raw: np.ndarray, config: GeneratorConfig) -> np.ndarray:
    """Noise-free target for raw inputs."""
    Z = ((X_raw - CENTER) / SCALE) @ planted_weights(config).T + PLANT_C
    y = activation(Z) @ PLANT_V + PLANT_B
    if config.out_of_class:
        # queue-triggered extra delay, outside the tanh model class
        y = y + np.where(X_raw[:, COLUMNS.index("Q_eboueur")] > 10, 120.0, 0.0)
    return y


def generate(config: GeneratorConfig = GeneratorConfig()) -> Dataset:
    """Draw a dataset; identical configs give identical datasets."""
    ss = np.random.SeedSequence(config.seed)
    rng_x, rng_noise, rng_out, rng_split = (np.random.default_rng(s) for s in ss.spawn(4))
    X = _raw_inputs(config.n_rows, rng_x, config.redundancy)
    y = planted_response(X, config)
    y = y + rng_noise.normal(0.0, 1.0, config.n_rows) * config.noise_std
    # outlier draws use their own stream, so the clean data do not depend on them
    hit = rng_out.random(config.n_rows) < config.outlier_fraction
    kick = rng_out.normal(0.0, 1.0, config.n_rows) * config.outlier_scale * config.noise_std
    y = y + np.where(hit, kick, 0.0)
    split_seed = int(rng_split.integers(2**31))
    is_train = random_split(config.n_rows, split_seed, config.train_fraction)
    return Dataset(X, y, COLUMNS, is_train, TARGET)


def planted_model(config: GeneratorConfig, dataset: Dataset) -> MlpModel:
    """The generating network re-expressed on the dataset's standardized inputs."""
    if config.out_of_class:
        raise ValueError("the out-of-class term has no exact network form")
    W = planted_weights(config)
    # x_std = (raw - mean) / std  =>  (raw - CENTER) / SCALE = x_std * std / SCALE + (mean - CENTER) / SCALE
    W_std = W * (dataset.std / SCALE)
    c_std = PLANT_C + W @ ((dataset.mean - CENTER) / SCALE)
    return MlpModel(W_std, c_std, PLANT_V, PLANT_B, input_names=dataset.names)


# -- CSV -----------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def dumps_csv(dataset: Dataset, comments=()) -> str:
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*dataset.names, dataset.target_name, SPLIT])
    for row, t, lab in zip(dataset.raw_inputs, dataset.targets, dataset.split_labels):
        w.writerow([*(_fmt(v) for v in row), _fmt(t), lab])
    return buf.getvalue()


def save_csv(dataset: Dataset, path, comments=()) -> None:
    Path(path).write_text(dumps_csv(dataset, comments), encoding="utf-8")


def generate_csv(config: GeneratorConfig) -> str:
    """CSV text of a generated dataset, with the seed in a header comment."""
    comment = " ".join(f"{k}={v}" for k, v in config.to_dict().items())
    return dumps_csv(generate(config), [f"seed={config.seed}", f"generator {comment}"])


def load_csv(path, target: str = TARGET, split_column: str = SPLIT, split_seed: int = 0) -> Dataset:
    """Read a dataset CSV (``#`` lines are comments).

    Every column other than the target and the optional split column is an
    input. Without a split column a 2:1 random split is drawn from ``split_seed``.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise EmptyFileError(f"{path}: empty file")
    reader = csv.reader(lines)
    header = [h.strip() for h in next(reader)]
    if target not in header:
        raise MissingColumnError(f"{path}: target column {target!r} missing from header")
    has_split = split_column in header
    inputs = [h for h in header if h not in (target, split_column)]
    if not inputs:
        raise MissingColumnError(f"{path}: no input columns")
    rows, split = [], []
    for lineno, cells in enumerate(reader, start=2):
        if len(cells) != len(header):
            raise MissingColumnError(
                f"{path}: row {lineno} has {len(cells)} cells, header has {len(header)}"
            )
        rec = {}
        for col, cell in zip(header, cells):
            if col == split_column:
                lab = cell.strip()
                if lab not in SPLITS:
                    raise ParseError(f"{path}: row {lineno}, column {col!r}: bad split label {lab!r}")
                split.append(lab == TRAIN)
                continue
            try:
                val = float(cell)
            except ValueError:
                raise ParseError(f"{path}: row {lineno}, column {col!r}: non-numeric cell {cell!r}") from None
            if not np.isfinite(val):
                raise ParseError(f"{path}: row {lineno}, column {col!r}: non-finite value {cell!r}")
            rec[col] = val
        rows.append([rec[c] for c in inputs] + [rec[target]])
    if not rows:
        raise EmptyFileError(f"{path}: header but no data rows")
    data = np.array(rows)
    is_train = np.array(split) if has_split else random_split(len(rows), split_seed)
    return Dataset(data[:, :-1], data[:, -1], tuple(inputs), is_train, target)
