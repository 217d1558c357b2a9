"""One-hidden-layer perceptron with pruning masks.

The network maps ``n_inputs`` real inputs to a single real output::

    z_i = sum_h W[i, h] * x[h] + c[i]      (active weights only)
    a_i = tanh(z_i)
    y   = sum_i v[i] * a_i + b             (active hidden units only)

Pruned entities are masked rather than deleted so that trial removals can be
undone by simply keeping the previous model around. ``compact`` produces a
physically smaller model when needed.

Canonical parameter order (used by Jacobians, parameter vectors and traces):
active hidden weights row-major, active hidden biases, active output weights,
output bias.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_NAME = "mlpstruct-model"
FORMAT_VERSION = 1
# tanh(x) rounds to exactly 1.0 in double precision beyond |x| ~ 19.1
_SATURATION = 40.0


class ShapeError(ValueError):
    """Input array does not match the model dimensions."""


def activation(x):
    """Hyperbolic tangent written as (1 - e^-2x) / (1 + e^-2x).

    Evaluated on -|x| so the exponential never overflows; |x| is capped at
    _SATURATION, where the result is already exactly +-1, so it never
    underflows either.
    """
    x = np.asarray(x, dtype=float)
    e = np.exp(-2.0 * np.minimum(np.abs(x), _SATURATION))
    out = np.sign(x) * (1.0 - e) / (1.0 + e)
    return out if out.ndim else float(out)


def activation_logistic_form(x):
    """tanh as 2 / (1 + e^-2x) - 1, branch-stable for large |x|."""
    x = np.asarray(x, dtype=float)
    e = np.exp(-2.0 * np.minimum(np.abs(x), _SATURATION))
    pos = 2.0 / (1.0 + e) - 1.0
    # for x < 0: 2/(1+e^{2|x|}) - 1 = 2e/(1+e) - 1
    neg = 2.0 * e / (1.0 + e) - 1.0
    out = np.where(x >= 0, pos, neg)
    return out if out.ndim else float(out)


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class MlpModel:
    hidden_weights: np.ndarray
    hidden_biases: np.ndarray
    output_weights: np.ndarray
    output_bias: float
    weight_mask: np.ndarray = None
    input_active: np.ndarray = None
    hidden_active: np.ndarray = None
    input_names: tuple = field(default=None)

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.hidden_weights, dtype=float))
        n1, n0 = W.shape
        c = np.asarray(self.hidden_biases, dtype=float).reshape(-1)
        v = np.asarray(self.output_weights, dtype=float).reshape(-1)
        if c.shape != (n1,) or v.shape != (n1,):
            raise ShapeError(f"bias/output weight length must equal n_hidden={n1}")
        mask = np.ones((n1, n0), bool) if self.weight_mask is None else self.weight_mask
        inp = np.ones(n0, bool) if self.input_active is None else self.input_active
        hid = np.ones(n1, bool) if self.hidden_active is None else self.hidden_active
        mask, inp, hid = cascade_masks(mask, inp, hid)
        names = self.input_names
        if names is None:
            names = tuple(f"x{h}" for h in range(n0))
        if len(names) != n0:
            raise ShapeError("input_names length must equal n_inputs")
        set_ = object.__setattr__
        set_(self, "hidden_weights", _frozen(W))
        set_(self, "hidden_biases", _frozen(c))
        set_(self, "output_weights", _frozen(v))
        set_(self, "output_bias", float(self.output_bias))
        set_(self, "weight_mask", _frozen(mask, bool))
        set_(self, "input_active", _frozen(inp, bool))
        set_(self, "hidden_active", _frozen(hid, bool))
        set_(self, "input_names", tuple(str(n) for n in names))

    # -- shape -----------------------------------------------------------
    @property
    def n_inputs(self) -> int:
        return self.hidden_weights.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.hidden_weights.shape[0]

    @property
    def nb_inputs(self) -> int:
        return int(self.input_active.sum())

    @property
    def nb_hidden(self) -> int:
        return int(self.hidden_active.sum())

    @property
    def kept_inputs(self) -> list[str]:
        return [n for n, a in zip(self.input_names, self.input_active) if a]

    def replace(self, **changes) -> "MlpModel":
        return dataclasses.replace(self, **changes)

    # -- parameter vector ------------------------------------------------
    def params(self) -> np.ndarray:
        """Active parameters in canonical order."""
        return np.concatenate(
            [
                self.hidden_weights[self.weight_mask],
                self.hidden_biases[self.hidden_active],
                self.output_weights[self.hidden_active],
                [self.output_bias],
            ]
        )

    def with_params(self, theta) -> "MlpModel":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (count_params(self),):
            raise ShapeError(f"expected {count_params(self)} parameters, got {theta.shape}")
        nw = int(self.weight_mask.sum())
        nh = self.nb_hidden
        W = self.hidden_weights.copy()
        W[self.weight_mask] = theta[:nw]
        c = self.hidden_biases.copy()
        c[self.hidden_active] = theta[nw : nw + nh]
        v = self.output_weights.copy()
        v[self.hidden_active] = theta[nw + nh : nw + 2 * nh]
        return self.replace(hidden_weights=W, hidden_biases=c, output_weights=v, output_bias=theta[-1])

    def param_labels(self) -> list[tuple]:
        """Entity label for each active parameter, aligned with ``params()``."""
        rows, cols = np.nonzero(self.weight_mask)
        hid = np.flatnonzero(self.hidden_active)
        return (
            [("weight", int(i), int(h)) for i, h in zip(rows, cols)]
            + [("bias", int(i)) for i in hid]
            + [("output_weight", int(i)) for i in hid]
            + [("output_bias",)]
        )

    # -- evaluation ------------------------------------------------------
    def effective_weights(self) -> np.ndarray:
        return np.where(self.weight_mask, self.hidden_weights, 0.0)

    def hidden_pre(self, X: np.ndarray) -> np.ndarray:
        X = self._check_X(X)
        return X @ self.effective_weights().T + self.hidden_biases

    def predict(self, X) -> np.ndarray:
        """Network output for each row of ``X`` (shape N x n_inputs)."""
        a = activation(self.hidden_pre(X))
        v = np.where(self.hidden_active, self.output_weights, 0.0)
        return a @ v + self.output_bias

    def _check_X(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_inputs:
            raise ShapeError(f"expected inputs of shape (N, {self.n_inputs}), got {X.shape}")
        # masked inputs contribute zero whatever value is supplied (even nan)
        if not self.input_active.all():
            X = np.where(self.input_active, X, 0.0)
        return X


def cascade_masks(weight_mask, input_active, hidden_active):
    """Propagate pruning so the three masks agree.

    A pruned input or hidden unit masks its weights; an input with no active
    weight left is pruned; a hidden unit with no active input weight is pruned.
    Pure function of the masks, which makes removal traces replayable.
    """
    mask = np.array(weight_mask, dtype=bool, copy=True)
    inp = np.array(input_active, dtype=bool, copy=True)
    hid = np.array(hidden_active, dtype=bool, copy=True)
    if mask.shape != (hid.size, inp.size):
        raise ShapeError(f"weight_mask shape {mask.shape} does not match ({hid.size}, {inp.size})")
    while True:
        mask &= inp[None, :] & hid[:, None]
        new_inp = inp & mask.any(axis=0)
        new_hid = hid & mask.any(axis=1)
        if (new_inp == inp).all() and (new_hid == hid).all():
            return mask, inp, hid
        inp, hid = new_inp, new_hid


def forward(model: MlpModel, x) -> float:
    """Output for a single input vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n_inputs,):
        raise ShapeError(f"expected input of length {model.n_inputs}, got shape {x.shape}")
    return float(model.predict(x[None, :])[0])


def count_params(model: MlpModel) -> int:
    return int(model.weight_mask.sum()) + 2 * model.nb_hidden + 1


def jacobian(model: MlpModel, X) -> np.ndarray:
    """d(output)/d(parameter) for each row of X, columns in canonical order."""
    X = model._check_X(np.atleast_2d(X))
    z = X @ model.effective_weights().T + model.hidden_biases
    a = activation(z)
    hid = model.hidden_active
    v = model.output_weights
    # dy/dz_i = v_i * (1 - a_i^2)
    dz = (1.0 - a * a) * v
    rows, cols = np.nonzero(model.weight_mask)
    return np.concatenate(
        [
            dz[:, rows] * X[:, cols],
            dz[:, hid],
            a[:, hid],
            np.ones((X.shape[0], 1)),
        ],
        axis=1,
    )


def jacobian_params(model: MlpModel, x) -> np.ndarray:
    """Gradient of the output w.r.t. the active parameters for one input."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n_inputs,):
        raise ShapeError(f"expected input of length {model.n_inputs}, got shape {x.shape}")
    return jacobian(model, x[None, :])[0]


def input_sensitivities(model: MlpModel, X) -> np.ndarray:
    """d(output)/d(x_h) for each row of X (N x n_inputs); zero for pruned inputs."""
    X = model._check_X(np.atleast_2d(X))
    Weff = model.effective_weights()
    a = activation(X @ Weff.T + model.hidden_biases)
    dz = (1.0 - a * a) * np.where(model.hidden_active, model.output_weights, 0.0)
    return dz @ Weff


def sensitivity_wrt_input(model: MlpModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n_inputs,):
        raise ShapeError(f"expected input of length {model.n_inputs}, got shape {x.shape}")
    return input_sensitivities(model, x[None, :])[0]


def hidden_outputs(model: MlpModel, X) -> np.ndarray:
    return activation(model.hidden_pre(X))


# -- structural edits -----------------------------------------------------

def _edit(model: MlpModel, *, mask=None, inp=None, hid=None, c=None, b=None) -> MlpModel:
    mask = model.weight_mask if mask is None else mask
    inp = model.input_active if inp is None else inp
    hid = model.hidden_active if hid is None else hid
    c = model.hidden_biases if c is None else c
    b = model.output_bias if b is None else b
    _, _, hid_after = cascade_masks(mask, inp, hid)
    # units left without inputs output the constant tanh(c_i): fold it into b
    for i in np.flatnonzero(hid & ~hid_after):
        b = b + model.output_weights[i] * activation(c[i])
    return model.replace(weight_mask=mask, input_active=inp, hidden_active=hid, hidden_biases=c, output_bias=b)


def prune_input(model: MlpModel, h: int, fill_value: float | None = None) -> MlpModel:
    """Deactivate input ``h``.

    With ``fill_value`` the input is replaced by that constant, absorbed into
    the hidden biases, so the prediction is unchanged for rows where x_h equals
    ``fill_value``.
    """
    c = model.hidden_biases
    if fill_value is not None:
        c = c + model.effective_weights()[:, h] * fill_value
    inp = model.input_active.copy()
    inp[h] = False
    return _edit(model, inp=inp, c=c)


def prune_hidden(model: MlpModel, i: int, fill_value: float | None = None) -> MlpModel:
    """Deactivate hidden unit ``i``; ``fill_value`` replaces its activation in the output bias."""
    b = model.output_bias
    if fill_value is not None:
        b = b + model.output_weights[i] * fill_value
    hid = model.hidden_active.copy()
    hid[i] = False
    return _edit(model, hid=hid, b=b)


def prune_weight(model: MlpModel, i: int, h: int, fill_value: float | None = None) -> MlpModel:
    """Mask hidden weight (i, h), optionally absorbing ``W[i, h] * fill_value`` into c_i.

    A unit left without inputs is deactivated and its constant output folded
    into the output bias.
    """
    c = model.hidden_biases
    if fill_value is not None:
        c = c.copy()
        c[i] += model.hidden_weights[i, h] * fill_value
    mask = model.weight_mask.copy()
    mask[i, h] = False
    return _edit(model, mask=mask, c=c)


def apply_removal(model: MlpModel, entity: tuple) -> MlpModel:
    """Apply a trace entity without any value absorption (mask-only replay)."""
    kind = entity[0]
    if kind == "input":
        return prune_input(model, entity[1])
    if kind in ("hidden", "output_weight"):
        return prune_hidden(model, entity[1])
    if kind == "weight":
        mask = model.weight_mask.copy()
        mask[entity[1], entity[2]] = False
        return model.replace(weight_mask=mask)
    raise ValueError(f"unknown entity kind {kind!r}")


def compact(model: MlpModel) -> MlpModel:
    """Drop pruned inputs and hidden units from the arrays."""
    inp, hid = model.input_active, model.hidden_active
    return MlpModel(
        hidden_weights=model.hidden_weights[np.ix_(hid, inp)],
        hidden_biases=model.hidden_biases[hid],
        output_weights=model.output_weights[hid],
        output_bias=model.output_bias,
        weight_mask=model.weight_mask[np.ix_(hid, inp)],
        input_names=[n for n, a in zip(model.input_names, inp) if a],
    )


def models_equal(a: MlpModel, b: MlpModel) -> bool:
    """Bit-level equality of parameters and masks."""
    return (
        a.input_names == b.input_names
        and np.array_equal(a.hidden_weights, b.hidden_weights)
        and np.array_equal(a.hidden_biases, b.hidden_biases)
        and np.array_equal(a.output_weights, b.output_weights)
        and a.output_bias == b.output_bias
        and np.array_equal(a.weight_mask, b.weight_mask)
        and np.array_equal(a.input_active, b.input_active)
        and np.array_equal(a.hidden_active, b.hidden_active)
    )


# -- serialization ----------------------------------------------------------
#
# JSON document, floats written with repr() so they round-trip exactly:
#   format, version, n_inputs, n_hidden, input_names,
#   hidden_weights (row-major list of n_hidden*n_inputs floats),
#   hidden_biases, output_weights, output_bias,
#   weight_mask (row-major list of 0/1), input_active, hidden_active

def to_dict(model: MlpModel) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "n_inputs": model.n_inputs,
        "n_hidden": model.n_hidden,
        "input_names": list(model.input_names),
        "hidden_weights": model.hidden_weights.ravel().tolist(),
        "hidden_biases": model.hidden_biases.tolist(),
        "output_weights": model.output_weights.tolist(),
        "output_bias": model.output_bias,
        "weight_mask": model.weight_mask.ravel().astype(int).tolist(),
        "input_active": model.input_active.astype(int).tolist(),
        "hidden_active": model.hidden_active.astype(int).tolist(),
    }


def from_dict(d: dict) -> MlpModel:
    if d.get("format") != FORMAT_NAME:
        raise ValueError(f"not a {FORMAT_NAME} document")
    if d.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {d.get('version')}")
    n0, n1 = int(d["n_inputs"]), int(d["n_hidden"])
    return MlpModel(
        hidden_weights=np.array(d["hidden_weights"], dtype=float).reshape(n1, n0),
        hidden_biases=d["hidden_biases"],
        output_weights=d["output_weights"],
        output_bias=d["output_bias"],
        weight_mask=np.array(d["weight_mask"], dtype=bool).reshape(n1, n0),
        input_active=np.array(d["input_active"], dtype=bool),
        hidden_active=np.array(d["hidden_active"], dtype=bool),
        input_names=d["input_names"],
    )


def dumps(model: MlpModel) -> str:
    return json.dumps(to_dict(model), indent=1)


def loads(text: str) -> MlpModel:
    return from_dict(json.loads(text))


def save_model(model: MlpModel, path) -> None:
    Path(path).write_text(dumps(model), encoding="utf-8")


def load_model(path) -> MlpModel:
    return loads(Path(path).read_text(encoding="utf-8"))
