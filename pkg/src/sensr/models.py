"""Small differentiable classifiers with analytic gradients.

Two architectures: multinomial logistic regression (``logits = x W + b``) and a
one-hidden-layer network (``logits = act(x W1 + b1) W2 + b2``). Every function
accepts a single input vector or a batch of rows. Parameter gradients are of
the *mean* batch loss; input gradients are per sample.

A model may carry an ``input_projection`` matrix that is applied to inputs
before the first layer; the Project reference trainer uses it so that
evaluation inputs are projected exactly as training inputs were.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

ARCHS = ("logistic", "mlp")
ACTIVATIONS = ("relu", "tanh")


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    arch: str
    weights: dict = field(repr=False)
    activation: str = "relu"
    input_projection: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ModelError(f"unknown architecture {self.arch!r}")
        if self.activation not in ACTIVATIONS:
            raise ModelError(f"unknown activation {self.activation!r}")
        need = ("W", "b") if self.arch == "logistic" else ("W1", "b1", "W2", "b2")
        if set(self.weights) != set(need):
            raise ModelError(f"{self.arch} needs weights {need}, got {sorted(self.weights)}")
        for name, w in self.weights.items():
            if not np.all(np.isfinite(w)):
                raise ModelError(f"weight {name} has non-finite entries")
        if self.arch == "mlp":
            W1, b1, W2, b2 = (self.weights[k] for k in need)
            if b1.shape != (W1.shape[1],) or W2.shape[0] != W1.shape[1] or b2.shape != (W2.shape[1],):
                raise ModelError("inconsistent mlp weight shapes")
        elif self.weights["b"].shape != (self.weights["W"].shape[1],):
            raise ModelError("inconsistent logistic weight shapes")

    @property
    def input_dim(self) -> int:
        return self.weights["W" if self.arch == "logistic" else "W1"].shape[0]

    @property
    def n_classes(self) -> int:
        return self.weights["W" if self.arch == "logistic" else "W2"].shape[1]

    @property
    def hidden(self) -> int | None:
        return self.weights["W1"].shape[1] if self.arch == "mlp" else None

    @property
    def dims(self) -> list[int]:
        if self.arch == "logistic":
            return [self.input_dim, self.n_classes]
        return [self.input_dim, self.hidden, self.n_classes]

    def with_weights(self, weights: dict) -> "ModelParams":
        return replace(self, weights=weights)

    def to_json(self) -> dict:
        obj = {
            "arch": self.arch,
            "dims": self.dims,
            "activation": self.activation,
            "weights": {k: np.asarray(v).tolist() for k, v in self.weights.items()},
        }
        if self.input_projection is not None:
            obj["input_projection"] = self.input_projection.tolist()
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "ModelParams":
        weights = {k: np.asarray(v, dtype=np.float64) for k, v in obj["weights"].items()}
        proj = obj.get("input_projection")
        params = cls(
            arch=obj["arch"],
            weights=weights,
            activation=obj.get("activation", "relu"),
            input_projection=None if proj is None else np.asarray(proj, dtype=np.float64),
        )
        if list(obj.get("dims", params.dims)) != params.dims:
            raise ModelError(f"checkpoint dims {obj['dims']} do not match weights {params.dims}")
        return params

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path) -> "ModelParams":
        return cls.from_json(json.loads(Path(path).read_text()))


def init_params(
    arch: str,
    input_dim: int,
    n_classes: int,
    hidden: int = 100,
    seed: int = 0,
    activation: str = "relu",
    zero: bool = False,
) -> ModelParams:
    """Glorot-uniform weights and zero biases, seeded."""
    rng = np.random.default_rng(seed)

    def glorot(fan_in, fan_out):
        if zero:
            return np.zeros((fan_in, fan_out))
        a = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-a, a, size=(fan_in, fan_out))

    if arch == "logistic":
        weights = {"W": glorot(input_dim, n_classes), "b": np.zeros(n_classes)}
    elif arch == "mlp":
        weights = {
            "W1": glorot(input_dim, hidden),
            "b1": np.zeros(hidden),
            "W2": glorot(hidden, n_classes),
            "b2": np.zeros(n_classes),
        }
    else:
        raise ModelError(f"unknown architecture {arch!r}")
    return ModelParams(arch=arch, weights=weights, activation=activation)


def _batch(params: ModelParams, x):
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != params.input_dim:
        raise ModelError(f"input has dim {X.shape[1]}, model expects {params.input_dim}")
    return X, single


def _act(name, a):
    if name == "relu":
        return np.maximum(a, 0.0)
    return np.tanh(a)


def _act_grad(name, a, h):
    # relu subgradient at 0 is 0
    if name == "relu":
        return (a > 0.0).astype(np.float64)
    return 1.0 - h * h


def _logits(params: ModelParams, X):
    if params.input_projection is not None:
        X = X @ params.input_projection
    w = params.weights
    if params.arch == "logistic":
        return X, None, None, X @ w["W"] + w["b"]
    a = X @ w["W1"] + w["b1"]
    h = _act(params.activation, a)
    return X, a, h, h @ w["W2"] + w["b2"]


def forward(params: ModelParams, x):
    X, single = _batch(params, x)
    z = _logits(params, X)[3]
    return z[0] if single else z


def predict(params: ModelParams, x):
    """Argmax class; ties go to the lowest index."""
    return np.argmax(forward(params, x), axis=-1)


def _labels(y, n, n_classes):
    y = np.broadcast_to(np.asarray(y, dtype=np.int64), (n,))
    if np.any(y < 0) or np.any(y >= n_classes):
        raise ModelError(f"labels must be in [0, {n_classes})")
    return y


def _xent(z, y):
    zmax = z.max(axis=1, keepdims=True)
    shifted = z - zmax
    lse = np.log(np.exp(shifted).sum(axis=1))
    losses = lse - shifted[np.arange(z.shape[0]), y]
    p = np.exp(shifted - lse[:, None])
    return np.maximum(losses, 0.0), p


def loss_and_grads(params: ModelParams, x, y, want_params: bool = True, want_input: bool = True):
    """Cross-entropy losses with gradients in one pass.

    Returns ``(losses, param_grads, input_grads)``; the unrequested gradient is
    None. ``param_grads`` is the gradient of the mean loss over the batch.
    """
    X, single = _batch(params, x)
    n = X.shape[0]
    y = _labels(y, n, params.n_classes)
    Xin, a, h, z = _logits(params, X)
    losses, p = _xent(z, y)
    dz = p
    dz[np.arange(n), y] -= 1.0
    w = params.weights
    gp = gx = None
    if params.arch == "logistic":
        if want_params:
            gp = {"W": Xin.T @ dz / n, "b": dz.mean(axis=0)}
        if want_input:
            gx = dz @ w["W"].T
    else:
        da = (dz @ w["W2"].T) * _act_grad(params.activation, a, h)
        if want_params:
            gp = {
                "W1": Xin.T @ da / n,
                "b1": da.mean(axis=0),
                "W2": h.T @ dz / n,
                "b2": dz.mean(axis=0),
            }
        if want_input:
            gx = da @ w["W1"].T
    if gx is not None and params.input_projection is not None:
        gx = gx @ params.input_projection.T
    if single:
        return float(losses[0]), gp, None if gx is None else gx[0]
    return losses, gp, gx


def loss(params: ModelParams, x, y):
    return loss_and_grads(params, x, y, want_params=False, want_input=False)[0]


def grad_params(params: ModelParams, x, y) -> dict:
    return loss_and_grads(params, x, y, want_input=False)[1]


def grad_input(params: ModelParams, x, y):
    return loss_and_grads(params, x, y, want_params=False)[2]


def loss_and_grad_input(model, X, y):
    """Per-sample losses and input gradients for a ModelParams or any object
    exposing ``loss_and_grad_input(X, y)``."""
    if isinstance(model, ModelParams):
        losses, _, gx = loss_and_grads(model, X, y, want_params=False)
        return losses, gx
    return model.loss_and_grad_input(X, y)


def _rel_err(a, b, floor):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def gradient_check(params: ModelParams, x, y, step: float = 1e-5, floor: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients,
    over every parameter entry and every input coordinate of one sample.

    Entries whose magnitude is below ``floor`` are compared against ``floor``
    instead, so gradients that are zero up to rounding do not blow up the ratio.
    """
    if step <= 0:
        raise ModelError("step must be positive")
    x = np.asarray(x, dtype=np.float64)
    _, gp, gx = loss_and_grads(params, x, y)
    worst = 0.0
    for name, w in params.weights.items():
        num = np.empty_like(w)
        flat = w.reshape(-1)
        for i in range(flat.size):
            hi = flat.copy()
            lo = flat.copy()
            hi[i] += step
            lo[i] -= step
            w_hi = dict(params.weights, **{name: hi.reshape(w.shape)})
            w_lo = dict(params.weights, **{name: lo.reshape(w.shape)})
            num.reshape(-1)[i] = (
                loss(params.with_weights(w_hi), x, y) - loss(params.with_weights(w_lo), x, y)
            ) / (2 * step)
        worst = max(worst, float(_rel_err(gp[name], num, floor).max()))
    num = np.empty_like(x)
    for i in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi[i] += step
        lo[i] -= step
        num[i] = (loss(params, hi, y) - loss(params, lo, y)) / (2 * step)
    worst = max(worst, float(_rel_err(gx, num, floor).max()))
    return worst
