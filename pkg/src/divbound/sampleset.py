"""Binary outcome samples, empirical distributions, and exact divergences.

These are the assumption-free building blocks everything else is checked
against: a shot matrix is the raw output of one device/circuit execution
batch, and the exact divergences computed here from empirical counts act
as the brute-force oracle for the ratio-based estimators.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

# Guard on enumerating supports; only the union of observed supports is
# iterated, but keys are materialized as length-s strings.
MAX_EXACT_DIM = 20

KL_INF = float("inf")


class DimensionMismatchError(ValueError):
    """Two distributions or shot matrices disagree on bitstring width."""


@dataclass(frozen=True)
class ShotMatrix:
    """M x s matrix of binary outcomes from one execution batch.

    Rows are shots, columns are measured bits. Immutable after
    construction; the bits array is stored read-only.
    """

    bits: np.ndarray
    circuit_id: str = ""
    machine_id: str = ""

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 2:
            raise ValueError("bits must be a 2-D matrix")
        if bits.shape[0] < 1 or bits.shape[1] < 1:
            raise ValueError("need M >= 1 shots and s >= 1 bits")
        if not np.isin(np.asarray(self.bits), (0, 1)).all():
            raise ValueError("entries must be 0 or 1")
        bits = bits.copy()
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def n_shots(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Observed-frequency distribution over bitstrings of fixed width.

    Unobserved strings are absent from ``probs`` and implicitly carry
    probability zero; no smoothing happens at this layer.
    """

    support_dim: int
    probs: dict = field(default_factory=dict)

    def __post_init__(self):
        total = sum(self.probs.values())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"frequencies sum to {total}, not 1")
        for key in self.probs:
            if len(key) != self.support_dim:
                raise ValueError(f"key {key!r} has wrong width")

    def __getitem__(self, key: str) -> float:
        return self.probs.get(key, 0.0)


def bits_to_string(row: np.ndarray) -> str:
    """Canonical most-significant-bit-first string key for one shot."""
    return "".join("1" if b else "0" for b in row)


def empirical_distribution(shots: ShotMatrix) -> EmpiricalDistribution:
    """Counting estimator: frequency of each observed bitstring."""
    if shots.n_shots == 0:
        raise ValueError("no samples")
    rows, counts = np.unique(shots.bits, axis=0, return_counts=True)
    m = shots.n_shots
    probs = {bits_to_string(r): c / m for r, c in zip(rows, counts)}
    return EmpiricalDistribution(support_dim=shots.width, probs=probs)


def _check_pair(p: EmpiricalDistribution, q: EmpiricalDistribution):
    if p.support_dim != q.support_dim:
        raise DimensionMismatchError(
            f"support dims differ: {p.support_dim} vs {q.support_dim}"
        )
    if p.support_dim > MAX_EXACT_DIM:
        raise ValueError(f"support dim {p.support_dim} exceeds {MAX_EXACT_DIM}")


def exact_bc(p: EmpiricalDistribution, q: EmpiricalDistribution) -> float:
    """Sum of sqrt(p * q) over the union of observed supports."""
    _check_pair(p, q)
    support = set(p.probs) | set(q.probs)
    return float(sum(np.sqrt(p[y] * q[y]) for y in support))


def exact_divergences(p: EmpiricalDistribution, q: EmpiricalDistribution) -> dict:
    """Exact BC-family divergences between two finite distributions.

    Returns d_BC = -log BC, the squared Hellinger distance d_H2 = 1 - BC,
    standard-convention total variation, and d_KL = KL(q || p) with q the
    noisy distribution. d_KL is +inf whenever q puts mass where p has
    none.
    """
    _check_pair(p, q)
    support = sorted(set(p.probs) | set(q.probs))
    pv = np.array([p[y] for y in support])
    qv = np.array([q[y] for y in support])
    bc = float(np.sum(np.sqrt(pv * qv)))
    d_tv = 0.5 * float(np.sum(np.abs(pv - qv)))
    if np.any((qv > 0) & (pv == 0)):
        d_kl = KL_INF
    else:
        mask = qv > 0
        d_kl = float(np.sum(qv[mask] * np.log(qv[mask] / pv[mask])))
        d_kl = max(d_kl, 0.0)
    d_bc = -np.log(bc) + 0.0 if bc > 0 else KL_INF
    return {"d_BC": float(d_bc), "d_H2": 1.0 - bc, "d_TV": d_tv, "d_KL": d_kl}


def save_shots_csv(shots: ShotMatrix, path) -> None:
    """Write one row per shot with a bit_0..bit_{s-1} header."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"bit_{i}" for i in range(shots.width)])
        for row in shots.bits:
            writer.writerow([int(b) for b in row])


def load_shots_csv(path, circuit_id: str = "", machine_id: str = "") -> ShotMatrix:
    """Load a shot CSV, validating the header and the {0,1} domain.

    Raises ValueError naming the offending line on malformed input.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        expected = [f"bit_{i}" for i in range(len(header))]
        if header != expected:
            raise ValueError(f"{path}: line 1: bad header {header}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(f"{path}: line {lineno}: expected {len(header)} columns")
            for cell in row:
                if cell not in ("0", "1"):
                    raise ValueError(f"{path}: line {lineno}: entry {cell!r} not in {{0,1}}")
            rows.append([int(c) for c in row])
    if not rows:
        raise ValueError(f"{path}: no samples")
    return ShotMatrix(np.array(rows, dtype=np.uint8), circuit_id, machine_id)
