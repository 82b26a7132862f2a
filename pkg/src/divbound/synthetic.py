"""Product-Bernoulli distributions with closed-form divergences.

Factorized multivariate Bernoulli distributions make an exact oracle for
validating the density-ratio estimators: the Bhattacharyya distance
between two of them has a closed form, and sampling is trivial at any
dimension.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sampleset import ShotMatrix

WEIGHT_LO = 0.02
WEIGHT_HI = 0.98

PROFILE_KINDS = ("log", "rand", "cos")


@dataclass(frozen=True)
class ProductBernoulli:
    """Per-bit success probabilities, all strictly inside (0, 1)."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("weights must be a nonempty 1-D vector")
        if np.any(w <= 0.0) or np.any(w >= 1.0):
            raise ValueError("weights must lie strictly inside (0, 1)")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.weights.size


@dataclass(frozen=True)
class WeightProfile:
    kind: str
    dim: int
    seed: int = 0

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")


def rescale_weights(raw: np.ndarray) -> np.ndarray:
    """Affine min-max rescale of a raw weight vector into [0.02, 0.98].

    Constant vectors map to 0.5, except the all-zero vector which maps
    to the lower clamp. This pins down the proportionality constants the
    profile definitions leave open.
    """
    raw = np.asarray(raw, dtype=float)
    lo, hi = raw.min(), raw.max()
    if hi - lo < 1e-15:
        value = WEIGHT_LO if abs(hi) < 1e-15 else 0.5
        return np.full(raw.shape, value)
    return WEIGHT_LO + (raw - lo) * (WEIGHT_HI - WEIGHT_LO) / (hi - lo)


def make_weights(profile: WeightProfile) -> ProductBernoulli:
    """Build a ground-truth weight vector from a named profile."""
    s = profile.dim
    i = np.arange(1, s + 1, dtype=float)
    if profile.kind == "log":
        raw = np.log(1.0 + i) / s
    elif profile.kind == "rand":
        rng = np.random.default_rng(profile.seed)
        # one uniform draw per coordinate; a single shared draw would
        # cancel in the rescale and leave a deterministic ramp
        raw = rng.random(s) * i / s
    else:  # cos
        raw = np.cos(np.pi / (1e-4 + i)) ** 2
    return ProductBernoulli(rescale_weights(raw))


def perturb(w: ProductBernoulli, kind: str, seed: int = 0) -> ProductBernoulli:
    """Perturbed weight vector: apply a named map to w, then rescale."""
    if kind not in PROFILE_KINDS:
        raise ValueError(f"unknown perturbation kind {kind!r}")
    wv = w.weights
    if kind == "log":
        raw = np.log(1e-4 + wv)
    elif kind == "rand":
        rng = np.random.default_rng(seed)
        raw = wv * rng.standard_normal(wv.size)
    else:  # cos
        raw = np.cos(wv * 2.0 * np.pi)
    return ProductBernoulli(rescale_weights(raw))


def closed_form_dbc(w: ProductBernoulli, v: ProductBernoulli) -> float:
    """Bhattacharyya distance between two product Bernoullis.

    -log prod_i (sqrt(w_i v_i) + sqrt((1-w_i)(1-v_i))); factorization
    turns the 2^s sum into a product over bits.
    """
    if w.dim != v.dim:
        raise ValueError(f"dimension mismatch: {w.dim} vs {v.dim}")
    wv, vv = w.weights, v.weights
    per_bit = np.sqrt(wv * vv) + np.sqrt((1.0 - wv) * (1.0 - vv))
    return float(-np.sum(np.log(per_bit)))


def sample(w: ProductBernoulli, m: int, seed: int = 0,
           circuit_id: str = "", machine_id: str = "") -> ShotMatrix:
    """Draw m i.i.d. rows with bit i ~ Bernoulli(w_i)."""
    if m < 1:
        raise ValueError("need m >= 1")
    rng = np.random.default_rng(seed)
    bits = (rng.random((m, w.dim)) < w.weights).astype(np.uint8)
    return ShotMatrix(bits, circuit_id=circuit_id, machine_id=machine_id)
