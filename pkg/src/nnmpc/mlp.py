"""Small fully connected network that imitates the MPC law, trained by
Levenberg-Marquardt on a sum-of-squares objective.

The node nonlinearity is sigma(z) = 2/(1 + e^z) - 1, a decreasing sigmoid
(equal to -tanh(z/2)); per-node gain parameters are absorbed into the
incoming weights, so training optimizes full weight matrices and biases.
Inputs and outputs are scaled to [-1, 1] with bounds-based affine maps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import NumericsError, TrainingError

HIDDEN_LAYERS = (4, 4, 4, 4)


def activation(alpha, z):
    """Node nonlinearity 2/(1 + exp(alpha z)) - 1, overflow-safe.

    Decreasing in z: limits are +1 as alpha*z -> -inf and -1 as -> +inf.
    """
    az = np.multiply(alpha, z)
    t = np.exp(-np.abs(az))
    return np.where(az >= 0, (t - 1.0) / (t + 1.0), (1.0 - t) / (1.0 + t))


def activation_deriv_from_value(s):
    """d sigma/dz expressed through the activation value: (s^2 - 1)/2."""
    return 0.5 * (s * s - 1.0)


@dataclass(frozen=True)
class AffineScaler:
    """Per-dimension map x -> (x - center) / half_range onto roughly [-1, 1]."""

    center: np.ndarray
    half_range: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        h = np.atleast_1d(np.asarray(self.half_range, dtype=float))
        if np.any(h <= 0):
            raise ValueError(f"scaler half-ranges must be positive, got {h}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "half_range", h)

    @classmethod
    def from_bounds(cls, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        return cls(center=0.5 * (lo + hi), half_range=0.5 * (hi - lo))

    def scale(self, x):
        return (x - self.center) / self.half_range

    def descale(self, s):
        return s * self.half_range + self.center


@dataclass
class Mlp:
    """Weights, biases and scalers of the fixed-topology network."""

    weights: list  # weights[l] has shape (n_out, n_in)
    biases: list  # biases[l] has shape (n_out,)
    input_scaler: AffineScaler
    output_scaler: AffineScaler
    metadata: dict = field(default_factory=dict)

    @property
    def layer_sizes(self):
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def forward(self, x):
        """Evaluate the network at a single state; returns a float (absolute units)."""
        out = forward_batch(self, np.asarray(x, dtype=float).reshape(1, -1))
        return float(out[0])

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(mlp_to_dict(self), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return mlp_from_dict(json.load(fh))


def mlp_to_dict(m: Mlp) -> dict:
    return {
        "topology": m.layer_sizes,
        "weights": [w.tolist() for w in m.weights],
        "biases": [b.tolist() for b in m.biases],
        "input_scaler": {"center": m.input_scaler.center.tolist(),
                         "half_range": m.input_scaler.half_range.tolist()},
        "output_scaler": {"center": m.output_scaler.center.tolist(),
                          "half_range": m.output_scaler.half_range.tolist()},
        "metadata": m.metadata,
    }


def mlp_from_dict(d: dict) -> Mlp:
    return Mlp(
        weights=[np.asarray(w, dtype=float) for w in d["weights"]],
        biases=[np.asarray(b, dtype=float) for b in d["biases"]],
        input_scaler=AffineScaler(**d["input_scaler"]),
        output_scaler=AffineScaler(**d["output_scaler"]),
        metadata=dict(d.get("metadata", {})),
    )


def _forward_scaled(weights, biases, xs):
    """Scaled-space forward pass; returns (hidden activations, output column).

    xs is (n, n_in) already scaled.  Hidden layers apply the sigmoid, the
    final layer is linear.
    """
    acts = [xs]
    a = xs
    n_layers = len(weights)
    for l in range(n_layers - 1):
        z = a @ weights[l].T + biases[l]
        a = activation(1.0, z)
        if not np.all(np.isfinite(a)):
            raise NumericsError(f"non-finite activation in hidden layer {l + 1}")
        acts.append(a)
    y = a @ weights[-1].T + biases[-1]
    if not np.all(np.isfinite(y)):
        raise NumericsError(f"non-finite output in layer {n_layers}")
    return acts, y


def forward_batch(m: Mlp, X):
    """Network outputs in absolute units for an (n, n_in) batch of states."""
    X = np.asarray(X, dtype=float)
    xs = m.input_scaler.scale(X)
    _, y = _forward_scaled(m.weights, m.biases, xs)
    return m.output_scaler.descale(y[:, 0])


def _backward_deltas(weights, acts, y):
    """Per-sample output sensitivities d y / d z_l for every layer."""
    n = y.shape[0]
    deltas = [None] * len(weights)
    deltas[-1] = np.ones((n, 1))
    for l in range(len(weights) - 2, -1, -1):
        upstream = deltas[l + 1] @ weights[l + 1]
        deltas[l] = upstream * activation_deriv_from_value(acts[l + 1])
    return deltas


def loss_and_gradient(m: Mlp, X, U):
    """Sum-of-squares loss in scaled space and its exact parameter gradient.

    X : (n, n_in) states in absolute units
    U : (n,) targets in absolute units
    Returns (loss, [dW_1, db_1, ..., dW_L, db_L]).
    """
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float).ravel()
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    xs = m.input_scaler.scale(X)
    us = m.output_scaler.scale(U)
    acts, y = _forward_scaled(m.weights, m.biases, xs)
    r = y[:, 0] - us
    loss = float(r @ r)
    deltas = _backward_deltas(m.weights, acts, y)
    grads = []
    for l in range(len(m.weights)):
        weighted = deltas[l] * (2.0 * r)[:, None]
        grads.append(weighted.T @ acts[l])
        grads.append(weighted.sum(axis=0))
    return loss, grads


def _pack(weights, biases):
    return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(weights, biases)])


def _unpack(theta, sizes):
    weights, biases = [], []
    pos = 0
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        w = theta[pos:pos + n_out * n_in].reshape(n_out, n_in)
        pos += n_out * n_in
        b = theta[pos:pos + n_out]
        pos += n_out
        weights.append(w)
        biases.append(b)
    return weights, biases


def _residuals_and_jacobian(weights, biases, xs, us):
    """Scaled residuals and the per-sample Jacobian wrt all parameters."""
    acts, y = _forward_scaled(weights, biases, xs)
    r = y[:, 0] - us
    deltas = _backward_deltas(weights, acts, y)
    cols = []
    for l in range(len(weights)):
        jac_w = np.einsum("ni,nj->nij", deltas[l], acts[l]).reshape(len(r), -1)
        cols.append(jac_w)
        cols.append(deltas[l])
    return r, np.hstack(cols)


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 400
    loss_tolerance: float = 1e-9  # min improvement of the train loss over 50 epochs
    damping: float = 1e-2  # initial Levenberg-Marquardt damping
    validation_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.max_epochs <= 0 or self.loss_tolerance <= 0 or self.damping <= 0:
            raise ValueError("max_epochs, loss_tolerance and damping must be positive")
        if not 0.0 < self.validation_fraction <= 0.5:
            raise ValueError(f"validation_fraction must be in (0, 0.5], got {self.validation_fraction}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        fields = ("max_epochs", "loss_tolerance", "damping", "validation_fraction", "seed")
        extra = set(d) - set(fields)
        if extra:
            raise ValueError(f"unknown train parameter(s): {sorted(extra)}")
        return cls(**{f: d[f] for f in fields if f in d})


def init_mlp(rng, input_scaler, output_scaler, hidden=HIDDEN_LAYERS):
    """Symmetric uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    sizes = [input_scaler.center.size, *hidden, 1]
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(n_in)
        weights.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
        biases.append(rng.uniform(-bound, bound, size=n_out))
    return Mlp(weights=weights, biases=biases, input_scaler=input_scaler,
               output_scaler=output_scaler)


def fit_mlp(X, U, cfg: TrainConfig, input_scaler: AffineScaler,
            output_scaler: AffineScaler, hidden=HIDDEN_LAYERS):
    """Levenberg-Marquardt fit; returns (best-validation Mlp, history dict).

    One epoch is one accepted parameter update (damping is escalated until
    the step decreases the training loss).  Falls back to a damped gradient
    step when the normal equations cannot be solved.  Raises TrainingError
    if the loss turns non-finite.
    """
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float).ravel()
    n = X.shape[0]
    if n == 0:
        raise ValueError("empty training set")

    rng = np.random.default_rng(cfg.seed)
    model = init_mlp(rng, input_scaler, output_scaler, hidden)
    sizes = model.layer_sizes

    perm = rng.permutation(n)
    n_val = max(1, int(round(cfg.validation_fraction * n))) if n > 1 else 0
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    if train_idx.size == 0:
        train_idx, val_idx = val_idx, train_idx

    xs = input_scaler.scale(X)
    us = output_scaler.scale(U)
    xs_t, us_t = xs[train_idx], us[train_idx]
    xs_v, us_v = xs[val_idx], us[val_idx]

    def train_loss(weights, biases):
        _, y = _forward_scaled(weights, biases, xs_t)
        r = y[:, 0] - us_t
        return float(r @ r)

    def val_loss(weights, biases):
        if xs_v.shape[0] == 0:
            return train_loss(weights, biases)
        _, y = _forward_scaled(weights, biases, xs_v)
        r = y[:, 0] - us_v
        return float(r @ r)

    theta = _pack(model.weights, model.biases)
    weights, biases = _unpack(theta, sizes)
    loss = train_loss(weights, biases)
    mu = cfg.damping
    best_val = val_loss(weights, biases)
    best_theta = theta.copy()
    best_epoch = 0
    history = {"train_loss": [loss], "val_loss": [best_val]}

    for epoch in range(1, cfg.max_epochs + 1):
        if not np.isfinite(loss):
            raise TrainingError(f"training loss became non-finite at epoch {epoch}", epoch=epoch)
        r, J = _residuals_and_jacobian(weights, biases, xs_t, us_t)
        jtj = J.T @ J
        g = J.T @ r
        accepted = False
        for _ in range(60):
            try:
                delta = np.linalg.solve(jtj + mu * np.eye(jtj.shape[0]), -g)
            except np.linalg.LinAlgError:
                delta = None
            if delta is None or not np.all(np.isfinite(delta)):
                # ill-conditioned normal equations: damped gradient fallback
                delta = -2.0 * g / (np.linalg.norm(jtj, np.inf) + mu)
            cand = theta + delta
            w_c, b_c = _unpack(cand, sizes)
            try:
                cand_loss = train_loss(w_c, b_c)
            except NumericsError:
                cand_loss = np.inf
            if np.isfinite(cand_loss) and cand_loss < loss:
                theta, weights, biases, loss = cand, w_c, b_c, cand_loss
                mu = max(mu * 0.2, 1e-14)
                accepted = True
                break
            mu = min(mu * 10.0, 1e16)
        v = val_loss(weights, biases)
        history["train_loss"].append(loss)
        history["val_loss"].append(v)
        if v < best_val:
            best_val = v
            best_theta = theta.copy()
            best_epoch = epoch
        if not accepted:
            break  # no decreasing step exists at any damping: local minimum
        if epoch > 50 and history["train_loss"][epoch - 50] - loss < cfg.loss_tolerance:
            break

    w_b, b_b = _unpack(best_theta, sizes)
    final = Mlp(weights=[w.copy() for w in w_b], biases=[b.copy() for b in b_b],
                input_scaler=input_scaler, output_scaler=output_scaler,
                metadata={"seed": cfg.seed,
                          "epochs_run": len(history["train_loss"]) - 1,
                          "best_epoch": best_epoch,
                          "final_train_loss": history["train_loss"][-1],
                          "best_val_loss": best_val,
                          "n_train": int(train_idx.size),
                          "n_val": int(val_idx.size)})
    history["best_epoch"] = best_epoch
    return final, history


def train(training_set, cfg: TrainConfig, input_bounds, output_bounds,
          hidden=HIDDEN_LAYERS):
    """Train on a labeled set; scaling is fixed by the given bounds."""
    in_scaler = AffineScaler.from_bounds(*input_bounds)
    out_scaler = AffineScaler.from_bounds(*output_bounds)
    return fit_mlp(training_set.X, training_set.U, cfg, in_scaler, out_scaler, hidden)


class MlpRegressor(RegressorMixin, BaseEstimator):
    """Scikit-learn estimator facade over the Levenberg-Marquardt trainer.

    Parameters mirror TrainConfig; input_bounds/output_bounds fix the affine
    scaling (derived from the training data when left as None).
    """

    def __init__(self, hidden_layer_sizes=HIDDEN_LAYERS, max_epochs=400,
                 loss_tolerance=1e-9, damping=1e-2, validation_fraction=0.1,
                 random_state=0, input_bounds=None, output_bounds=None):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.max_epochs = max_epochs
        self.loss_tolerance = loss_tolerance
        self.damping = damping
        self.validation_fraction = validation_fraction
        self.random_state = random_state
        self.input_bounds = input_bounds
        self.output_bounds = output_bounds

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        if self.input_bounds is not None:
            in_scaler = AffineScaler.from_bounds(*self.input_bounds)
        else:
            in_scaler = AffineScaler.from_bounds(X.min(axis=0), X.max(axis=0))
        if self.output_bounds is not None:
            out_scaler = AffineScaler.from_bounds(*self.output_bounds)
        else:
            out_scaler = AffineScaler.from_bounds(y.min(), y.max())
        cfg = TrainConfig(max_epochs=self.max_epochs, loss_tolerance=self.loss_tolerance,
                          damping=self.damping, validation_fraction=self.validation_fraction,
                          seed=self.random_state)
        self.mlp_, history = fit_mlp(X, y, cfg, in_scaler, out_scaler,
                                     tuple(self.hidden_layer_sizes))
        self.loss_curve_ = history["train_loss"]
        self.validation_curve_ = history["val_loss"]
        self.best_epoch_ = history["best_epoch"]
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "mlp_")
        X = check_array(X)
        return forward_batch(self.mlp_, X)


class NeuralController:
    """Explicit controller: network evaluation clamped to the input bounds."""

    tag = "nn"

    def __init__(self, mlp: Mlp, u_min: float, u_max: float):
        self.mlp = mlp
        self.u_min = u_min
        self.u_max = u_max

    def reset(self):
        pass

    def step(self, x_meas) -> float:
        return float(np.clip(self.mlp.forward(x_meas), self.u_min, self.u_max))
