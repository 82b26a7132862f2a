"""End-to-end experiment runner: generate, estimate, calibrate, evaluate.

Mirrors the four-setup, leave-one-machine-out evaluation grid: shot data
comes from the simulator, per-run divergence scores from the ratio
estimator, and bounds from the conformal module. Test circuits are the
largest-ordinal stratum; their oracle divergences are computed exactly
from the empirical ideal/noisy distributions, which is feasible here
precisely because every circuit in the manifest is classically small.

Noisy runs reuse the uniform stream of the matching ideal run (common
random numbers), so a zero-noise manifest yields bitwise identical
ideal/noisy pairs, zero scores, and full coverage.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, asdict, replace

import numpy as np

from . import qsim
from .conformal import (CalibrationRecord, calibrate_plain, calibrate_shift,
                        mondrian_select)
from .ratio import RatioFeatureMap, estimate_divergence, fit_ratio
from .sampleset import empirical_distribution, exact_divergences
from .shiftmodel import fit_shift, moment_features, predict_shift_batch

DIVERGENCE_KINDS = ("d_BC", "d_KL", "d_TV")


@dataclass(frozen=True)
class ExperimentManifest:
    """Everything needed to reproduce one full experiment grid."""

    families: tuple = ("ghz", "random", "deep_random")
    sizes: tuple = (5, 7, 9, 11, 13, 15)
    walker_depths: tuple = (5, 7, 9, 11, 13, 15)
    noise_multipliers: tuple = (0.5, 0.75, 1.0, 1.25, 1.5)
    m_shots: int = 1000
    runs_per_circuit: int = 5
    alpha: float = 0.1
    kinds: tuple = DIVERGENCE_KINDS
    setups: tuple = ("all", "mondrian", "shift", "shift_mondrian")
    feature_kind: str = "quadratic"
    master_seed: int = 0

    def machines(self) -> list:
        out = []
        for i, k in enumerate(self.noise_multipliers):
            out.append(qsim.NoiseModel(
                depolarizing_1q=0.001 * k,
                depolarizing_2q=0.01 * k,
                readout_flip=min(0.02 * k, 0.5),
                machine_id=f"machine_{i}"))
        return out

    def circuits(self) -> list:
        """(circuit, ordinal) pairs; ordinal is size, walkers rank as 4."""
        out = []
        for fi, fam in enumerate(self.families):
            for size in self.sizes:
                seed = _seed_int(self.master_seed, 1, fi, size)
                out.append((qsim.build_circuit(fam, size, seed=seed), float(size)))
        for depth in self.walker_depths:
            out.append((qsim.build_circuit("walker", depth), 4.0))
        return out

    def to_json_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json_dict(cls, d: dict) -> "ExperimentManifest":
        clean = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**clean)


def _seed_int(master: int, *tags) -> int:
    ss = np.random.SeedSequence([int(master)] + [int(t) for t in tags])
    return int(ss.generate_state(1)[0])


@dataclass(frozen=True)
class RunRecord:
    """One (circuit, machine, run): scores per kind plus the oracle."""

    circuit_id: str
    machine_id: str
    family: str
    ordinal: float
    run: int
    scores: dict
    oracle: dict | None
    features: object


def generate_run_records(manifest: ExperimentManifest,
                         with_oracle: str = "test") -> list:
    """Simulate all (circuit, machine, run) triples and score them.

    with_oracle: "test" computes exact empirical divergences only for
    the largest-ordinal stratum (all that evaluation needs), "all" for
    every record, "none" skips them.
    """
    machines = manifest.machines()
    circuits = manifest.circuits()
    s_max = max(o for _, o in circuits)
    fm = RatioFeatureMap(manifest.feature_kind)
    records = []
    for ci, (circ, ordinal) in enumerate(circuits):
        cid = f"{circ.family}_{circ.n_qubits}q_d{circ.depth}"
        for run in range(manifest.runs_per_circuit):
            shot_seed = _seed_int(manifest.master_seed, 2, ci, run)
            ideal = qsim.run_ideal(circ, manifest.m_shots, seed=shot_seed,
                                   circuit_id=cid)
            p_ideal = empirical_distribution(ideal)
            for nm in machines:
                # same uniform stream as the ideal run: zero noise
                # reproduces the ideal shots exactly
                noisy = qsim.run_noisy(circ, nm, manifest.m_shots,
                                       seed=shot_seed, circuit_id=cid)
                model = fit_ratio(ideal, noisy, fm=fm)
                scores = {k: estimate_divergence(model, noisy, k)
                          for k in manifest.kinds}
                oracle = None
                if with_oracle == "all" or (with_oracle == "test"
                                            and ordinal == s_max):
                    oracle = exact_divergences(p_ideal,
                                               empirical_distribution(noisy))
                records.append(RunRecord(
                    circuit_id=cid, machine_id=nm.machine_id,
                    family=circ.family, ordinal=ordinal, run=run,
                    scores=scores, oracle=oracle,
                    features=moment_features(noisy)))
    return records


def _to_cal_records(records, kind) -> list:
    return [CalibrationRecord(circuit_id=r.circuit_id, machine_id=r.machine_id,
                              ordinal=r.ordinal, score=r.scores[kind],
                              features=r.features)
            for r in records]


def _evaluate_setup(setup, cal_pool, test_records, kind, alpha, fold_seed):
    """Bounds for every test record under one setup, plus diagnostics."""
    ordinals = sorted({r.ordinal for r in cal_pool})
    if setup == "all":
        cal = _to_cal_records(cal_pool, kind)
        b = calibrate_plain(cal, alpha, kind)
        bounds = [b.bound] * len(test_records)
        return bounds, b
    if setup == "mondrian":
        # second-largest is relative to the full ordinal range, so the
        # test stratum participates in the selection but is never kept
        sel = mondrian_select(
            _to_cal_records(list(cal_pool) + list(test_records), kind),
            "second_largest")
        b = calibrate_plain(sel.kept, alpha, kind)
        b = replace(b, setup="mondrian",
                    n_discarded=len(cal_pool) - len(sel.kept))
        return [b.bound] * len(test_records), b
    if setup == "shift":
        rng = np.random.default_rng(fold_seed)
        order = rng.permutation(len(cal_pool))
        half = len(cal_pool) // 2
        train = [cal_pool[i] for i in order[:half]]
        cal = [cal_pool[i] for i in order[half:]]
        discarded = 0
    elif setup == "shift_mondrian":
        if len(ordinals) < 2:
            raise ValueError("stratum below second-largest ordinal is empty")
        s2 = ordinals[-1]
        train = [r for r in cal_pool if r.ordinal < s2]
        cal = [r for r in cal_pool if r.ordinal == s2]
        discarded = 0
    else:
        raise ValueError(f"unknown setup {setup!r}")
    if not train:
        raise ValueError(f"{setup}: shift-model training stratum is empty")
    if not cal:
        raise ValueError(f"{setup}: calibration stratum is empty")
    g = fit_shift([(r.features, r.scores[kind]) for r in train],
                  seed=fold_seed)
    bounds = []
    b = None
    for t in test_records:
        b = calibrate_shift(_to_cal_records(cal, kind), g, t.features,
                            alpha, residual_kind="signed", kind=kind,
                            setup=setup)
        bounds.append(b.bound)
    b = replace(b, n_discarded=discarded)
    return bounds, b


def run_pipeline(manifest: ExperimentManifest, records=None) -> dict:
    """Full grid: per-fold coverage and size for every setup and kind.

    Returns {"rows": [...], "summary": {...}, "audit": {...}} where rows
    hold one entry per setup x kind x fold and summary the
    leave-one-out means and standard deviations.
    """
    if records is None:
        records = generate_run_records(manifest)
    s_max = max(r.ordinal for r in records)
    machine_ids = sorted({r.machine_id for r in records})
    rows = []
    audit = {"s_max": s_max, "n_records": len(records), "folds": {}}
    for fold, held_out in enumerate(machine_ids):
        data = [r for r in records if r.machine_id != held_out]
        test = [r for r in data if r.ordinal == s_max]
        pool = [r for r in data if r.ordinal < s_max]
        if not test:
            raise ValueError("test stratum (largest ordinal) is empty")
        if not pool:
            raise ValueError("calibration pool (below largest ordinal) is empty")
        audit["folds"][held_out] = {"n_test": len(test), "n_pool": len(pool)}
        fold_seed = _seed_int(manifest.master_seed, 3, fold)
        for kind in manifest.kinds:
            oracles = [r.oracle[kind] for r in test]
            for setup in manifest.setups:
                bounds, b = _evaluate_setup(setup, pool, test, kind,
                                            manifest.alpha, fold_seed)
                cov, size = fold_coverage_and_size(bounds, oracles)
                rows.append({
                    "kind": kind, "setup": setup, "fold": held_out,
                    "coverage": cov, "size": size,
                    "n_cal": b.n_cal_used, "n_discarded": b.n_discarded,
                    "q_alpha": b.q_alpha, "infeasible": b.infeasible,
                })
    return {"rows": rows, "summary": summarize(rows), "audit": audit}


def fold_coverage_and_size(bounds, oracles) -> tuple:
    """One fold: fraction covered (closed bound) and mean bound length."""
    if len(bounds) != len(oracles):
        raise ValueError("bounds and oracles must align")
    if not bounds:
        raise ValueError("empty fold")
    covered = [o <= b for o, b in zip(oracles, bounds)]
    size = math.inf if any(math.isinf(b) for b in bounds) \
        else float(np.mean(bounds))
    return float(np.mean(covered)), size


def coverage_and_size(bounds_per_fold, oracles_per_fold) -> tuple:
    """Aggregate leave-one-out folds into means and standard deviations."""
    if len(bounds_per_fold) != len(oracles_per_fold):
        raise ValueError("fold lists must align")
    if not bounds_per_fold:
        raise ValueError("no folds")
    covs, sizes = [], []
    for b, o in zip(bounds_per_fold, oracles_per_fold):
        c, s = fold_coverage_and_size(b, o)
        covs.append(c)
        sizes.append(s)
    sds = {"coverage_sd": float(np.std(covs)),
           "size_sd": float(np.std(sizes)) if all(map(math.isfinite, sizes))
           else math.inf}
    mean_size = float(np.mean(sizes)) if all(map(math.isfinite, sizes)) \
        else math.inf
    return float(np.mean(covs)), mean_size, sds


def summarize(rows) -> dict:
    """Mean and sd across folds, keyed by (kind, setup)."""
    out = {}
    for kind in sorted({r["kind"] for r in rows}):
        for setup in sorted({r["setup"] for r in rows if r["kind"] == kind}):
            sub = [r for r in rows
                   if r["kind"] == kind and r["setup"] == setup]
            covs = [r["coverage"] for r in sub]
            sizes = [r["size"] for r in sub]
            finite = all(map(math.isfinite, sizes))
            out[f"{kind}/{setup}"] = {
                "coverage": float(np.mean(covs)),
                "coverage_sd": float(np.std(covs)),
                "size": float(np.mean(sizes)) if finite else math.inf,
                "size_sd": float(np.std(sizes)) if finite else math.inf,
                "n_folds": len(sub),
            }
    return out


def write_results_csv(rows, path) -> None:
    cols = ["kind", "setup", "fold", "coverage", "size", "n_cal",
            "n_discarded", "q_alpha", "infeasible"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        for r in rows:
            writer.writerow(r)


def write_summary_json(summary, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, default=str)


def write_scatter_csv(pairs, path) -> None:
    """x = oracle distance, y = estimate; plot data for the scatter demo."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["oracle", "estimate", "label"])
        for x, y, label in pairs:
            writer.writerow([x, y, label])
