"""Logistic-regression density-ratio estimation and divergence estimates.

A binary classifier trained to separate ideal from noisy shots gives the
density ratio r(y) = P_ideal(y) / P_noisy(y) through its odds, after a
log prior-ratio correction for class imbalance. Divergences follow from
ratio expectations under the noisy sample, so nothing ever needs the
2^s support enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .sampleset import ShotMatrix

FEATURE_KINDS = ("linear", "quadratic")

GRAD_TOL = 1e-6
MAX_ITER = 10000


@dataclass(frozen=True)
class RatioFeatureMap:
    """Deterministic bitstring -> real vector map with a leading bias.

    linear: (1, bits); quadratic adds the upper-triangular pairwise
    products. Squares are omitted since b^2 == b for binary features.
    """

    kind: str = "quadratic"

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ValueError(f"unknown feature map {self.kind!r}")

    def dim(self, s: int) -> int:
        if self.kind == "linear":
            return 1 + s
        return 1 + s + s * (s - 1) // 2

    def transform(self, bits: np.ndarray) -> np.ndarray:
        bits = np.asarray(bits, dtype=float)
        m, s = bits.shape
        cols = [np.ones((m, 1)), bits]
        if self.kind == "quadratic":
            iu, ju = np.triu_indices(s, k=1)
            cols.append(bits[:, iu] * bits[:, ju])
        return np.hstack(cols)


@dataclass(frozen=True)
class RatioModel:
    """Fitted classifier parameters plus the imbalance offset."""

    theta: np.ndarray
    featuremap: RatioFeatureMap
    log_prior_ratio: float = 0.0
    train_loss_trace: tuple = field(default=())

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta must be finite")
        theta = theta.copy()
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    def log_ratio(self, bits: np.ndarray) -> np.ndarray:
        """log of r(y) = P_ideal(y) / P_noisy(y) for each row."""
        phi = self.featuremap.transform(bits)
        return phi @ self.theta + self.log_prior_ratio

    def to_json_dict(self) -> dict:
        return {"kind": self.featuremap.kind,
                "theta": [float(t) for t in self.theta],
                "log_prior_ratio": self.log_prior_ratio}


def _dedupe(bits: np.ndarray):
    rows, counts = np.unique(bits, axis=0, return_counts=True)
    return rows, counts.astype(float)


def _loss_grad(theta, phi, labels, weights, reg):
    """Weighted L2-regularized cross-entropy and its gradient.

    The bias (first component) is excluded from the penalty.
    """
    z = phi @ theta
    # log(1 + exp(-z*y')) with y' in {-1, +1}, stable form
    sign = 2.0 * labels - 1.0
    zy = z * sign
    loss = np.sum(weights * np.logaddexp(0.0, -zy))
    p = 1.0 / (1.0 + np.exp(-z))
    grad = phi.T @ (weights * (p - labels))
    pen = theta.copy()
    pen[0] = 0.0
    loss += 0.5 * reg * np.dot(pen, pen)
    grad += reg * pen
    return loss, grad


def default_regularization(m_ideal: int, m_noisy: int) -> float:
    """Keeps the ratio bounded when small supports make classes separable."""
    return 1e-3 * (m_ideal + m_noisy)


def fit_ratio(ideal: ShotMatrix, noisy: ShotMatrix,
              fm: RatioFeatureMap | None = None,
              reg: float | None = None) -> RatioModel:
    """Train the ideal-vs-noisy classifier behind the ratio estimate.

    Full-batch deterministic minimization (L-BFGS on the exact loss and
    gradient, duplicate rows collapsed into weights) to gradient norm
    <= 1e-6 or 10000 iterations.
    """
    if ideal.width != noisy.width:
        raise ValueError(f"width mismatch: {ideal.width} vs {noisy.width}")
    if ideal.n_shots == 0 or noisy.n_shots == 0:
        raise ValueError("both classes must be nonempty")
    if fm is None:
        fm = RatioFeatureMap()
    if reg is None:
        reg = default_regularization(ideal.n_shots, noisy.n_shots)

    rows_i, w_i = _dedupe(ideal.bits)
    rows_n, w_n = _dedupe(noisy.bits)
    bits = np.vstack([rows_i, rows_n])
    weights = np.concatenate([w_i, w_n])
    labels = np.concatenate([np.ones(len(w_i)), np.zeros(len(w_n))])
    phi = fm.transform(bits)

    trace = []

    def objective(theta):
        loss, grad = _loss_grad(theta, phi, labels, weights, reg)
        return loss, grad

    def record(theta):
        trace.append(float(_loss_grad(theta, phi, labels, weights, reg)[0]))

    theta0 = np.zeros(phi.shape[1])
    record(theta0)
    res = minimize(objective, theta0, jac=True, method="L-BFGS-B",
                   callback=record,
                   options={"maxiter": MAX_ITER, "gtol": GRAD_TOL,
                            "ftol": 1e-14})
    log_prior = np.log(noisy.n_shots / ideal.n_shots)
    return RatioModel(theta=res.x, featuremap=fm, log_prior_ratio=log_prior,
                      train_loss_trace=tuple(trace))


def cross_entropy_loss(model: RatioModel, ideal: ShotMatrix,
                       noisy: ShotMatrix, reg: float) -> tuple:
    """Loss and gradient at the fitted theta, for finite-difference checks."""
    rows_i, w_i = _dedupe(ideal.bits)
    rows_n, w_n = _dedupe(noisy.bits)
    bits = np.vstack([rows_i, rows_n])
    weights = np.concatenate([w_i, w_n])
    labels = np.concatenate([np.ones(len(w_i)), np.zeros(len(w_n))])
    phi = model.featuremap.transform(bits)
    return _loss_grad(np.asarray(model.theta), phi, labels, weights, reg)


def estimate_bc(model: RatioModel, noisy: ShotMatrix,
                detail: bool = False):
    """Mean of sqrt(r) over the noisy rows, clipped into [0, 1].

    With detail=True returns (clipped, raw) so the pre-clip value stays
    available for diagnostics.
    """
    log_r = model.log_ratio(noisy.bits)
    raw = float(np.mean(np.exp(0.5 * log_r)))
    clipped = min(max(raw, 0.0), 1.0)
    if detail:
        return clipped, raw
    return clipped


def estimate_divergence(model: RatioModel, noisy: ShotMatrix, kind: str) -> float:
    """Ratio-based estimate of one divergence over the noisy sample."""
    log_r = model.log_ratio(noisy.bits)
    if kind == "d_BC":
        bc = estimate_bc(model, noisy)
        return float(-np.log(max(bc, 1e-12)))
    if kind == "d_KL":
        return max(float(-np.mean(log_r)), 0.0)
    if kind == "d_TV":
        return 0.5 * float(np.mean(np.abs(np.exp(log_r) - 1.0)))
    raise ValueError(f"unknown divergence kind {kind!r}")
