"""Estimators of the test/train density ratio w(c, z) = q/p.

Kinds: trivial (w == 1), probabilistic classifier on covariates (linear
logistic via Newton, or MLP), kernel mean matching for covariate shift and
for label shift, and exact closed-form oracles for the Gaussian toy worlds.
All emitted weights are truncated into the model's [w_lo, w_hi] bounds.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .numerics import RngStream, solve_spd
from .predictors import Dataset, _fit_gradient, _mlp_forward, _mlp_init

DEFAULT_CLIP = (0.05, 20.0)
KMM_MAX_SAMPLES = 400


class RatioModel:
    """Base density-ratio model; subclasses provide _raw(C, Z)."""

    kind = "base"

    def __init__(self, w_lo: float = DEFAULT_CLIP[0], w_hi: float = DEFAULT_CLIP[1]):
        if not (0.0 < w_lo <= w_hi):
            raise ValueError(f"clip bounds must satisfy 0 < lo <= hi, got ({w_lo}, {w_hi})")
        self.w_lo = float(w_lo)
        self.w_hi = float(w_hi)

    def _raw(self, C, Z):
        raise NotImplementedError

    def weights(self, C, Z) -> np.ndarray:
        """Clipped weights, one per row of Z (C may be None for covariate kinds)."""
        raw = np.asarray(self._raw(C, Z), dtype=float)
        return np.clip(raw, self.w_lo, self.w_hi)


def clip_weights(model: RatioModel, w_lo: float, w_hi: float) -> RatioModel:
    """Copy of the model with new truncation bounds."""
    if not (0.0 < w_lo <= w_hi):
        raise ValueError(f"clip bounds must satisfy 0 < lo <= hi, got ({w_lo}, {w_hi})")
    out = copy.copy(model)
    out.w_lo = float(w_lo)
    out.w_hi = float(w_hi)
    return out


class TrivialRatio(RatioModel):
    """w == 1 everywhere: ignores the distribution shift."""

    kind = "trivial"

    def _raw(self, C, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        return np.ones(Z.shape[0])


def trivial_ratio(w_lo: float = DEFAULT_CLIP[0], w_hi: float = DEFAULT_CLIP[1]) -> TrivialRatio:
    return TrivialRatio(w_lo, w_hi)


# ---------------------------------------------------------------------------
# probabilistic classifier (covariate shift)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassifierSpec:
    kind: str = "mlp"            # "linear" | "mlp"
    hidden: int = 16
    epochs: int = 500
    learning_rate: float = 0.01
    newton_steps: int = 30
    seed: int = 0


class ClassifierRatio(RatioModel):
    """w(z) = p1(z) / (1 - p1(z)) from a train-vs-test probability classifier."""

    def __init__(self, kind, params, w_lo, w_hi):
        super().__init__(w_lo, w_hi)
        self.kind = f"cls-{kind}"
        self._arch = kind
        self.params = params

    def _logits(self, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if self._arch == "linear":
            return Z @ self.params["W"][:, 0] + self.params["b"][0]
        out, _ = _mlp_forward(self.params, Z)
        return out[:, 0]

    def predict_proba(self, Z):
        return 1.0 / (1.0 + np.exp(-self._logits(Z)))

    def _raw(self, C, Z):
        # log w = logit, so the ratio is exp(logit); exp saturates safely
        # because weights() clips right after.
        return np.exp(np.clip(self._logits(Z), -700, 700))


def _fit_logistic_newton(X, y, steps, ridge=1e-8):
    """Newton / IRLS for logistic regression with intercept."""
    n, d = X.shape
    Xi = np.hstack([X, np.ones((n, 1))])
    beta = np.zeros(d + 1)
    for _ in range(steps):
        eta = Xi @ beta
        p = 1.0 / (1.0 + np.exp(-eta))
        g = Xi.T @ (p - y) + ridge * beta
        r = np.maximum(p * (1.0 - p), 1e-10)
        H = (Xi * r[:, None]).T @ Xi + ridge * np.eye(d + 1)
        step = solve_spd(H, g)
        beta -= step
        if np.max(np.abs(step)) < 1e-10:
            break
    return {"W": beta[:d][:, None], "b": beta[d:].copy()}


def fit_classifier_ratio(train_z, test_z, spec: ClassifierSpec = ClassifierSpec(),
                         clip=DEFAULT_CLIP) -> ClassifierRatio:
    """Pool covariates with labels 0 (train) / 1 (test), fit a probability
    classifier, and emit w = p/(1-p)."""
    Ztr = np.atleast_2d(np.asarray(train_z, dtype=float))
    Zte = np.atleast_2d(np.asarray(test_z, dtype=float))
    if Ztr.shape[0] == 0 or Zte.shape[0] == 0:
        raise ValueError("both covariate sets must be nonempty")
    if Ztr.shape[1] != Zte.shape[1]:
        raise ValueError("train and test covariates must share a dimension")
    X = np.vstack([Ztr, Zte])
    y = np.concatenate([np.zeros(Ztr.shape[0]), np.ones(Zte.shape[0])])
    if spec.kind == "linear":
        params = _fit_logistic_newton(X, y, spec.newton_steps)
        model = ClassifierRatio("linear", params, *clip)
    elif spec.kind == "mlp":
        rng = RngStream(spec.seed, 303)
        params = _mlp_init(X.shape[1], spec.hidden, 1, rng)
        params, _ = _fit_gradient(params, X, y[:, None], "logistic", 0.5,
                                  spec.epochs, spec.learning_rate)
        model = ClassifierRatio("mlp", params, *clip)
    else:
        raise ValueError(f"unknown classifier kind {spec.kind!r}")
    # Unequal pool sizes bias the intercept by log(n_te / n_tr); remove it.
    offset = np.log(Zte.shape[0] / Ztr.shape[0])
    if abs(offset) > 0:
        if "b" in model.params:
            model.params["b"] = model.params["b"] - offset
        else:
            model.params["b2"] = model.params["b2"] - offset
    return model


# ---------------------------------------------------------------------------
# kernels and kernel mean matching
# ---------------------------------------------------------------------------

def median_bandwidth(X) -> float:
    """Median positive pairwise Euclidean distance (1.0 if all points tie)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    sq = np.sum(X * X, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * X @ X.T, 0.0)
    dist = np.sqrt(d2[np.triu_indices(X.shape[0], k=1)])
    pos = dist[dist > 0]
    return float(np.median(pos)) if pos.size else 1.0


def gaussian_gram(X, Y, bandwidth: float) -> np.ndarray:
    """k(x, y) = exp(-||x - y||^2 / (2 * bandwidth^2))."""
    if bandwidth <= 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    sx = np.sum(X * X, axis=1)[:, None]
    sy = np.sum(Y * Y, axis=1)[None, :]
    d2 = np.maximum(sx + sy - 2.0 * X @ Y.T, 0.0)
    return np.exp(-d2 / (2.0 * bandwidth * bandwidth))


@dataclass(frozen=True)
class KernelMatrices:
    """Gram matrices for KMM: K over train covariates, H over train costs,
    K_te between train and test covariates."""

    K: np.ndarray
    H: np.ndarray | None
    K_te: np.ndarray
    bandwidth_z: float
    bandwidth_c: float | None
    lam: float


def build_kernel_matrices(train_z, test_z, train_c=None, bandwidth_z=None,
                          bandwidth_c=None, lam=None) -> KernelMatrices:
    Ztr = np.atleast_2d(np.asarray(train_z, dtype=float))
    Zte = np.atleast_2d(np.asarray(test_z, dtype=float))
    bz = median_bandwidth(Ztr) if bandwidth_z is None else bandwidth_z
    if bz <= 0:
        raise ValueError(f"bandwidth must be positive, got {bz}")
    K = gaussian_gram(Ztr, Ztr, bz)
    K_te = gaussian_gram(Ztr, Zte, bz)
    H = None
    bc = bandwidth_c
    if train_c is not None:
        Ctr = np.atleast_2d(np.asarray(train_c, dtype=float))
        bc = median_bandwidth(Ctr) if bandwidth_c is None else bandwidth_c
        if bc <= 0:
            raise ValueError(f"bandwidth must be positive, got {bc}")
        H = gaussian_gram(Ctr, Ctr, bc)
    n = Ztr.shape[0]
    lam = 1e-3 * n if lam is None else lam
    return KernelMatrices(K, H, K_te, bz, bc, lam)


def project_box_meanband(v, cap: float, mean_lo: float, mean_hi: float) -> np.ndarray:
    """Exact Euclidean projection onto {0 <= w <= cap, mean_lo <= mean(w) <= mean_hi}.

    The projection is clip(v + mu, 0, cap) for a scalar shift mu; the sum of
    the clipped vector is piecewise linear and nondecreasing in mu, so the
    exact shift comes from its breakpoints.
    """
    n = v.size
    w = np.clip(v, 0.0, cap)
    s = w.sum()
    lo_sum, hi_sum = n * mean_lo, n * mean_hi
    if lo_sum - 1e-12 <= s <= hi_sum + 1e-12:
        return w
    target = hi_sum if s > hi_sum else lo_sum
    breaks = np.unique(np.concatenate([-v, cap - v]))
    sums = np.clip(v[None, :] + breaks[:, None], 0.0, cap).sum(axis=1)
    k = int(np.searchsorted(sums, target))
    if k == 0:
        mu = breaks[0]
    elif k >= breaks.size:
        mu = breaks[-1]
    else:
        s0, s1 = sums[k - 1], sums[k]
        frac = 0.0 if s1 == s0 else (target - s0) / (s1 - s0)
        mu = breaks[k - 1] + frac * (breaks[k] - breaks[k - 1])
    return np.clip(v + mu, 0.0, cap)


def _projected_gradient(quad, lin, cap, mean_slack, n_iter):
    """Minimize (1/2) w'Q w - lin'w over the capped mean band, from w == 1.

    Step size 1/L with L the largest eigenvalue of Q; with the exact
    projection this is monotone in the objective. Returns (w, objectives).
    """
    n = lin.size
    eigmax = float(np.linalg.eigvalsh(quad)[-1])
    step = 1.0 / max(eigmax, 1e-12)
    w = np.ones(n)
    w = project_box_meanband(w, cap, 1.0 - mean_slack, 1.0 + mean_slack)
    objs = []
    for _ in range(n_iter):
        g = quad @ w - lin
        objs.append(0.5 * w @ (quad @ w) - lin @ w)
        w = project_box_meanband(w - step * g, cap, 1.0 - mean_slack, 1.0 + mean_slack)
    objs.append(0.5 * w @ (quad @ w) - lin @ w)
    return w, np.array(objs)


class KmmRatio(RatioModel):
    """Per-sample KMM weights; defined only at the samples they were fit on."""

    def __init__(self, kind, fit_Z, fit_C, sample_weights, w_lo, w_hi, objectives):
        super().__init__(w_lo, w_hi)
        self.kind = kind
        self.fit_Z = fit_Z
        self.fit_C = fit_C
        self._weights = sample_weights
        self.objectives = objectives

    @property
    def sample_weights(self) -> np.ndarray:
        return np.clip(self._weights, self.w_lo, self.w_hi)

    def _raw(self, C, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape != self.fit_Z.shape or not np.array_equal(Z, self.fit_Z):
            raise ValueError("KMM weights are defined only at the samples they were fit on")
        if self.fit_C is not None and C is not None:
            C = np.atleast_2d(np.asarray(C, dtype=float))
            if C.ndim == 1:
                C = C[:, None]
            if not np.array_equal(C, self.fit_C):
                raise ValueError("KMM weights are defined only at the samples they were fit on")
        return self._weights


def _subsample(X, max_n, rng: RngStream | None, tag: int):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] <= max_n:
        return X, np.arange(X.shape[0])
    r = rng if rng is not None else RngStream(0, tag)
    idx = np.sort(r.generator.choice(X.shape[0], size=max_n, replace=False))
    return X[idx], idx


def fit_kmm_covariate(train_z, test_z, bandwidth=None, cap: float = 1000.0,
                      mean_slack=None, clip=DEFAULT_CLIP,
                      max_samples: int = KMM_MAX_SAMPLES, rng: RngStream | None = None,
                      n_iter: int = 800) -> KmmRatio:
    """Match kernel mean embeddings of the weighted train covariates to the
    test covariates: minimize (1/N^2) w'Kw - (2/(NM)) w'K_te 1 subject to
    0 <= w <= cap and |mean(w) - 1| <= mean_slack."""
    Ztr = np.atleast_2d(np.asarray(train_z, dtype=float))
    Zte = np.atleast_2d(np.asarray(test_z, dtype=float))
    if Ztr.shape[0] < 2 or Zte.shape[0] < 2:
        raise ValueError("KMM requires at least two samples on each side")
    Ztr, idx = _subsample(Ztr, max_samples, rng, 11)
    Zte, _ = _subsample(Zte, max_samples, rng, 12)
    n, m = Ztr.shape[0], Zte.shape[0]
    if mean_slack is None:
        mean_slack = (np.sqrt(n) - 1.0) / np.sqrt(n)
    km = build_kernel_matrices(Ztr, Zte, bandwidth_z=bandwidth)
    quad = 2.0 * km.K / (n * n) + 1e-12 * np.eye(n)
    lin = 2.0 * km.K_te.sum(axis=1) / (n * m)
    w, objs = _projected_gradient(quad, lin, cap, mean_slack, n_iter)
    model = KmmRatio("kmm-cov", Ztr, None, w, *clip, objectives=objs)
    model.fit_indices = idx
    return model


def fit_kmm_label(train: Dataset, test_z, kernels: KernelMatrices | None = None,
                  lam=None, cap: float = 1000.0, mean_slack=None,
                  clip=DEFAULT_CLIP, max_samples: int = KMM_MAX_SAMPLES,
                  rng: RngStream | None = None, n_iter: int = 800) -> KmmRatio:
    """Label-shift KMM through the empirical conditional embedding.

    With B = (H + lam I)^{-1} H, the embedding-matching loss expands to
    (1/N^2) w'B'KBw - (2/(NM)) w'B'K_te 1 + const; minimized by projected
    gradient over the same capped mean band as the covariate variant.
    """
    Zte = np.atleast_2d(np.asarray(test_z, dtype=float))
    if train.n < 2 or Zte.shape[0] < 2:
        raise ValueError("KMM requires at least two samples on each side")
    if kernels is None:
        Ztr, idx = _subsample(train.Z, max_samples, rng, 21)
        sel = idx
        Ctr = train.C[sel]
        Zte_s, _ = _subsample(Zte, max_samples, rng, 22)
        kernels = build_kernel_matrices(Ztr, Zte_s, train_c=Ctr, lam=lam)
    else:
        Ztr, Ctr, idx = train.Z, train.C, np.arange(train.n)
        Zte_s = Zte
    if kernels.H is None:
        raise ValueError("label-shift KMM needs the cost Gram matrix H")
    n = kernels.K.shape[0]
    m = kernels.K_te.shape[1]
    lam_eff = kernels.lam if lam is None else lam
    if lam_eff <= 0:
        raise ValueError("lam must be positive")
    H = kernels.H
    B = solve_spd(H + lam_eff * np.eye(n), H)
    BtKB = B.T @ kernels.K @ B
    quad = 2.0 * BtKB / (n * n)
    quad = 0.5 * (quad + quad.T) + 1e-12 * np.eye(n)
    lin = 2.0 * (B.T @ kernels.K_te.sum(axis=1)) / (n * m)
    if mean_slack is None:
        mean_slack = (np.sqrt(n) - 1.0) / np.sqrt(n)
    w, objs = _projected_gradient(quad, lin, cap, mean_slack, n_iter)
    model = KmmRatio("kmm-label", Ztr, np.atleast_2d(Ctr), w, *clip, objectives=objs)
    model.fit_indices = idx
    return model


# ---------------------------------------------------------------------------
# exact Gaussian oracles for the toy worlds
# ---------------------------------------------------------------------------

class GaussianOracleRatio(RatioModel):
    """Exact q/p for the 1-d Gaussian toy scenario.

    Covariate shift: w(z) = exp((2 z s - s^2) / (2 sigma1^2)).
    Label shift:     w(c) = exp((2 c s - s^2) / (2 (sigma1^2 + sigma2^2))).
    """

    kind = "oracle"

    def __init__(self, scenario, w_lo=DEFAULT_CLIP[0], w_hi=DEFAULT_CLIP[1]):
        super().__init__(w_lo, w_hi)
        if scenario.sigma1 <= 0 or scenario.sigma2 <= 0:
            raise ValueError("scenario sigmas must be positive")
        self.scenario = scenario

    def _raw(self, C, Z):
        scn = self.scenario
        s = scn.shift
        if scn.kind == "covariate":
            z = np.atleast_2d(np.asarray(Z, dtype=float))[:, 0]
            return np.exp((2.0 * z * s - s * s) / (2.0 * scn.sigma1 ** 2))
        if scn.kind == "label":
            if C is None:
                raise ValueError("label-shift oracle needs cost values")
            c = np.asarray(C, dtype=float).reshape(-1)
            var = scn.sigma1 ** 2 + scn.sigma2 ** 2
            return np.exp((2.0 * c * s - s * s) / (2.0 * var))
        raise ValueError(f"unknown shift kind {scn.kind!r}")


def gaussian_oracle_ratio(scenario, c, z) -> np.ndarray:
    """Exact density-ratio values (unclipped) at (c, z)."""
    model = GaussianOracleRatio(scenario, w_lo=1e-300, w_hi=1e300)
    cs = None if c is None else np.atleast_1d(np.asarray(c, dtype=float))[:, None]
    zs = np.atleast_1d(np.asarray(z, dtype=float))[:, None]
    return model._raw(cs, zs)
