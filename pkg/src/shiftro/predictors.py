"""Mean predictors for E[c|z] and residual-magnitude quantile predictors.

Two model families each: a convex baseline (ridge / linear quantile
regression) and a one-hidden-layer MLP with 16 units. The MLP machinery is
shared with the probabilistic classifier in density_ratio via _fit_gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .numerics import RngStream, solve_spd

WIDTH_FLOOR = 1e-6


@dataclass(frozen=True)
class Dataset:
    """Paired covariate/cost samples; cost block may be empty (test covariates)."""

    Z: np.ndarray
    C: np.ndarray
    groups: np.ndarray | None = None

    def __post_init__(self):
        Z = np.atleast_2d(np.asarray(self.Z, dtype=float))
        C = np.asarray(self.C, dtype=float)
        if C.ndim == 1:
            C = C[:, None]
        if C.size == 0:
            C = C.reshape(Z.shape[0], 0)
        if Z.shape[0] != C.shape[0]:
            raise ValueError(f"row mismatch: {Z.shape[0]} covariates vs {C.shape[0]} costs")
        if not (np.all(np.isfinite(Z)) and np.all(np.isfinite(C))):
            raise ValueError("dataset entries must be finite")
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "C", C)

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def d(self) -> int:
        return self.Z.shape[1]

    @property
    def n_cost(self) -> int:
        return self.C.shape[1]


def pinball(u, alpha: float):
    """Pinball loss rho_alpha(u) = alpha * u+ + (1 - alpha) * u-."""
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    uv = np.asarray(u, dtype=float)
    out = alpha * np.maximum(uv, 0.0) + (1.0 - alpha) * np.maximum(-uv, 0.0)
    return float(out) if np.ndim(u) == 0 else out


# ---------------------------------------------------------------------------
# shared gradient-descent engine (full batch)
# ---------------------------------------------------------------------------

def _mlp_init(d, hidden, k, rng: RngStream):
    g = rng.generator
    return {
        "W1": g.normal(0.0, 1.0 / np.sqrt(d), size=(d, hidden)),
        "b1": np.zeros(hidden),
        "W2": g.normal(0.0, 1.0 / np.sqrt(hidden), size=(hidden, k)),
        "b2": np.zeros(k),
    }


def _mlp_forward(params, Z):
    H = np.tanh(Z @ params["W1"] + params["b1"])
    return H @ params["W2"] + params["b2"], H


def _linear_forward(params, Z):
    return Z @ params["W"] + params["b"], None


def _output_grad(kind, out, Y, alpha):
    n = out.shape[0]
    if kind == "mse":
        return (out - Y) / n
    if kind == "pinball":
        # d/d out of rho_alpha(Y - out), zero subgradient on the kink
        u = Y - out
        return (-alpha * (u > 0) + (1.0 - alpha) * (u < 0)) / n
    if kind == "logistic":
        p = 1.0 / (1.0 + np.exp(-out))
        return (p - Y) / n
    raise ValueError(kind)


def _loss(kind, out, Y, alpha):
    n = out.shape[0]
    if kind == "mse":
        return 0.5 * np.sum((out - Y) ** 2) / n
    if kind == "pinball":
        return np.sum(pinball(Y - out, alpha)) / n
    if kind == "logistic":
        # stable softplus(out) - Y*out
        return np.sum(np.logaddexp(0.0, out) - Y * out) / n
    raise ValueError(kind)


def loss_and_grad(params, Z, Y, kind, alpha=0.5):
    """Loss plus exact (sub)gradients for either architecture.

    Exposed so tests can compare gradients against finite differences.
    """
    if "W1" in params:
        out, H = _mlp_forward(params, Z)
        G = _output_grad(kind, out, Y, alpha)
        dW2 = H.T @ G
        db2 = G.sum(axis=0)
        dH = (G @ params["W2"].T) * (1.0 - H * H)
        grads = {"W1": Z.T @ dH, "b1": dH.sum(axis=0), "W2": dW2, "b2": db2}
    else:
        out, _ = _linear_forward(params, Z)
        G = _output_grad(kind, out, Y, alpha)
        grads = {"W": Z.T @ G, "b": G.sum(axis=0)}
    return _loss(kind, out, Y, alpha), grads


def _fit_gradient(params, Z, Y, kind, alpha, epochs, lr, optimizer="adam"):
    """Full-batch training. Returns the best parameters seen, by loss."""
    params = {k: v.copy() for k, v in params.items()}
    if optimizer == "adam":
        m = {k: np.zeros_like(v) for k, v in params.items()}
        v = {k: np.zeros_like(p) for k, p in params.items()}
        b1, b2, eps = 0.9, 0.999, 1e-8
    best_loss = np.inf
    best = {k: p.copy() for k, p in params.items()}
    for t in range(1, epochs + 1):
        loss, grads = loss_and_grad(params, Z, Y, kind, alpha)
        if loss < best_loss:
            best_loss = loss
            best = {k: p.copy() for k, p in params.items()}
        if optimizer == "adam":
            for k in params:
                m[k] = b1 * m[k] + (1 - b1) * grads[k]
                v[k] = b2 * v[k] + (1 - b2) * grads[k] ** 2
                mh = m[k] / (1 - b1 ** t)
                vh = v[k] / (1 - b2 ** t)
                params[k] -= lr * mh / (np.sqrt(vh) + eps)
        else:  # subgradient descent with step decay
            step = lr / np.sqrt(1.0 + t / 50.0)
            for k in params:
                params[k] -= step * grads[k]
    loss, _ = loss_and_grad(params, Z, Y, kind, alpha)
    if loss < best_loss:
        best, best_loss = params, loss
    return best, best_loss


# ---------------------------------------------------------------------------
# mean models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeanSpec:
    kind: str = "ridge"          # "ridge" | "mlp"
    ridge_lambda: float = 1e-6
    hidden: int = 16
    epochs: int = 500
    learning_rate: float = 0.01
    seed: int = 0


class RidgeMean:
    """Linear least squares with an unpenalized intercept."""

    kind = "ridge"

    def __init__(self, weights, intercept):
        self.weights = weights          # (d, k)
        self.intercept = intercept      # (k,)
        self.input_dim = weights.shape[0]
        self.output_dim = weights.shape[1]

    def predict(self, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape[1] != self.input_dim:
            raise ValueError(f"expected {self.input_dim}-dim input, got {Z.shape[1]}")
        return Z @ self.weights + self.intercept


class MlpMean:
    kind = "mlp"

    def __init__(self, params, input_dim, output_dim):
        self.params = params
        self.input_dim = input_dim
        self.output_dim = output_dim

    def predict(self, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape[1] != self.input_dim:
            raise ValueError(f"expected {self.input_dim}-dim input, got {Z.shape[1]}")
        out, _ = _mlp_forward(self.params, Z)
        return out


def fit_mean(train: Dataset, spec: MeanSpec = MeanSpec()):
    """Fit the conditional-mean predictor on (Z, C)."""
    if train.n == 0 or train.n_cost == 0:
        raise ValueError("training data must be nonempty with a cost block")
    Z, C = train.Z, train.C
    if spec.kind == "ridge":
        zm = Z.mean(axis=0)
        cm = C.mean(axis=0)
        Zc = Z - zm
        G = Zc.T @ Zc + spec.ridge_lambda * np.eye(train.d)
        W = solve_spd(G, Zc.T @ (C - cm))
        return RidgeMean(W, cm - zm @ W)
    if spec.kind == "mlp":
        rng = RngStream(spec.seed, 101)
        params = _mlp_init(train.d, spec.hidden, train.n_cost, rng)
        params, _ = _fit_gradient(params, Z, C, "mse", 0.5,
                                  spec.epochs, spec.learning_rate)
        return MlpMean(params, train.d, train.n_cost)
    raise ValueError(f"unknown mean model kind {spec.kind!r}")


def compute_residuals(data: Dataset, mean_model) -> np.ndarray:
    """r_i = c_i - f(z_i), one row per sample."""
    if data.n_cost != mean_model.output_dim:
        raise ValueError("cost dimension does not match the mean model")
    return data.C - mean_model.predict(data.Z)


# ---------------------------------------------------------------------------
# quantile models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuantileSpec:
    kind: str = "linear"         # "linear" | "mlp"
    hidden: int = 16
    epochs: int = 2000
    learning_rate: float = 0.05
    width_floor: float = WIDTH_FLOOR
    seed: int = 0


class _QuantileBase:
    def __init__(self, alpha, width_floor, input_dim, output_dim):
        self.alpha = alpha
        self.width_floor = width_floor
        self.input_dim = input_dim
        self.output_dim = output_dim

    def _raw(self, Z):
        raise NotImplementedError

    def predict(self, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape[1] != self.input_dim:
            raise ValueError(f"expected {self.input_dim}-dim input, got {Z.shape[1]}")
        return np.maximum(self._raw(Z), self.width_floor)


class LinearQuantile(_QuantileBase):
    kind = "linear"

    def __init__(self, params, alpha, width_floor):
        super().__init__(alpha, width_floor, params["W"].shape[0], params["W"].shape[1])
        self.params = params

    def _raw(self, Z):
        out, _ = _linear_forward(self.params, Z)
        return out


class MlpQuantile(_QuantileBase):
    kind = "mlp"

    def __init__(self, params, alpha, width_floor):
        super().__init__(alpha, width_floor, params["W1"].shape[0], params["W2"].shape[1])
        self.params = params

    def _raw(self, Z):
        out, _ = _mlp_forward(self.params, Z)
        return out


def fit_quantile(Z, abs_residuals, alpha: float, spec: QuantileSpec = QuantileSpec()):
    """Fit h(z) to the alpha-quantile of |r| per output coordinate.

    Minimizes sum_k rho_alpha(|r|_k - h(z)_k) by (sub)gradient descent with
    step decay; the output bias starts at the empirical quantile, so the fit
    never ends worse than the best constant predictor.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    Y = np.asarray(abs_residuals, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if np.any(Y < 0):
        raise ValueError("absolute residuals must be nonnegative")
    if Z.shape[0] != Y.shape[0]:
        raise ValueError("row mismatch between Z and residuals")
    d, k = Z.shape[1], Y.shape[1]
    q0 = np.quantile(Y, alpha, axis=0)
    if spec.kind == "linear":
        params = {"W": np.zeros((d, k)), "b": q0.copy()}
        params, _ = _fit_gradient(params, Z, Y, "pinball", alpha,
                                  spec.epochs, spec.learning_rate,
                                  optimizer="sgd")
        return LinearQuantile(params, alpha, spec.width_floor)
    if spec.kind == "mlp":
        rng = RngStream(spec.seed, 202)
        params = _mlp_init(d, spec.hidden, k, rng)
        params["b2"] = q0.copy()
        params, _ = _fit_gradient(params, Z, Y, "pinball", alpha,
                                  spec.epochs, min(spec.learning_rate, 0.01),
                                  optimizer="adam")
        return MlpQuantile(params, alpha, spec.width_floor)
    raise ValueError(f"unknown quantile model kind {spec.kind!r}")
