"""Command-line front door: generate, estimate, bound, experiment.

All randomness flows from a single --seed (default DEFAULT_SEED) through
documented stream splitting; no global RNG is touched. Exit codes: 0
success, 1 usage, 2 data validation, 3 internal.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import qsim
from .conformal import CalibrationRecord, calibrate_plain, calibrate_shift, \
    mondrian_select
from .harness import (ExperimentManifest, run_pipeline, write_results_csv,
                      write_summary_json)
from .ratio import RatioFeatureMap, estimate_divergence, fit_ratio
from .sampleset import load_shots_csv, save_shots_csv
from .shiftmodel import (MomentFeatures, ShiftRegressor, moment_features,
                         DEFAULT_FEATURE_WIDTH)

DEFAULT_SEED = 20240  # fixed documented default; override with --seed

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

_KIND_FLAGS = {"bc": "d_BC", "kl": "d_KL", "tv": "d_TV"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="divbound")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    parser.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate")
    gen.add_argument("--manifest", required=True)
    gen.add_argument("--out", required=True)

    est = sub.add_parser("estimate")
    est.add_argument("ideal_csv")
    est.add_argument("noisy_csv")
    est.add_argument("--kind", choices=sorted(_KIND_FLAGS), default="bc")
    est.add_argument("--features", choices=("linear", "quadratic"),
                     default="quadratic")

    bnd = sub.add_parser("bound")
    bnd.add_argument("records_dir")
    bnd.add_argument("--setup", choices=("all", "mondrian", "shift",
                                         "shift+mondrian"), default="all")
    bnd.add_argument("--alpha", type=float, default=0.1)
    bnd.add_argument("--kind", choices=sorted(_KIND_FLAGS), default="bc")

    exp = sub.add_parser("experiment")
    exp.add_argument("--manifest", required=True)
    exp.add_argument("--alpha", type=float, default=None)
    exp.add_argument("--out", required=True)
    exp.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


def _load_manifest(path: str, seed: int, alpha: float | None = None
                   ) -> ExperimentManifest:
    with open(path) as fh:
        data = json.load(fh)
    manifest = ExperimentManifest.from_json_dict(data)
    manifest = replace(manifest, master_seed=seed)
    if alpha is not None:
        manifest = replace(manifest, alpha=alpha)
    return manifest


def cmd_generate(args) -> int:
    manifest = _load_manifest(args.manifest, args.seed)
    os.makedirs(args.out, exist_ok=True)
    machines = manifest.machines()
    many_runs = manifest.runs_per_circuit > 1
    for ci, (circ, _ordinal) in enumerate(manifest.circuits()):
        base_id = f"{circ.family}_{circ.n_qubits}q_d{circ.depth}"
        for run in range(manifest.runs_per_circuit):
            cid = f"{base_id}_r{run}" if many_runs else base_id
            shot_seed = int(np.random.SeedSequence(
                [manifest.master_seed, 2, ci, run]).generate_state(1)[0])
            ideal = qsim.run_ideal(circ, manifest.m_shots, seed=shot_seed,
                                   circuit_id=cid)
            for nm in machines:
                noisy = qsim.run_noisy(circ, nm, manifest.m_shots,
                                       seed=shot_seed, circuit_id=cid)
                prefix = os.path.join(args.out, f"{cid}_{nm.machine_id}")
                save_shots_csv(ideal, prefix + "_ideal.csv")
                save_shots_csv(noisy, prefix + "_noisy.csv")
    with open(os.path.join(args.out, "manifest.json"), "w") as fh:
        json.dump(manifest.to_json_dict(), fh, indent=2)
    print(json.dumps({"status": "ok", "out": args.out}))
    return EXIT_OK


def cmd_estimate(args) -> int:
    ideal = load_shots_csv(args.ideal_csv)
    noisy = load_shots_csv(args.noisy_csv)
    if ideal.width != noisy.width:
        print(f"width mismatch: {ideal.width} vs {noisy.width}",
              file=sys.stderr)
        return EXIT_DATA
    fm = RatioFeatureMap(args.features)
    model = fit_ratio(ideal, noisy, fm=fm)
    kind = _KIND_FLAGS[args.kind]
    estimate = estimate_divergence(model, noisy, kind)
    print(json.dumps({"kind": kind, "estimate": estimate,
                      "M": noisy.n_shots, "feature_map": args.features}))
    return EXIT_OK


def _load_records(path: str) -> list:
    with open(path) as fh:
        raw = json.load(fh)
    records = []
    for entry in raw:
        flattened = np.asarray(entry.get("features", []), dtype=float)
        feats = None
        if flattened.size:
            feats = MomentFeatures(mean=np.zeros(0),
                                   second=np.zeros((0, 0)),
                                   width=int(entry.get("width", 0)),
                                   flattened=flattened)
        records.append(CalibrationRecord(
            circuit_id=str(entry.get("circuit_id", "")),
            machine_id=str(entry.get("machine_id", "")),
            ordinal=float(entry["ordinal"]),
            score=float(entry["score"]),
            features=feats))
    return records


def _load_shift_model(path: str) -> ShiftRegressor:
    with open(path) as fh:
        d = json.load(fh)
    trees = tuple(
        (np.asarray(t["feature"], dtype=np.int64),
         np.asarray(t["threshold"], dtype=float),
         np.asarray(t["left"], dtype=np.int64),
         np.asarray(t["right"], dtype=np.int64),
         np.asarray(t["leaf_value"], dtype=float))
        for t in d["trees"])
    return ShiftRegressor(trees=trees, n_trees=d["n_trees"],
                          min_leaf=d["min_leaf"],
                          feature_frac=d["feature_frac"], seed=d["seed"],
                          n_features=d["n_features"])


def cmd_bound(args) -> int:
    records_path = os.path.join(args.records_dir, "records.json")
    if not os.path.exists(records_path):
        print(f"missing {records_path}", file=sys.stderr)
        return EXIT_DATA
    records = _load_records(records_path)
    if not records:
        print("no calibration records", file=sys.stderr)
        return EXIT_DATA
    kind = _KIND_FLAGS[args.kind]
    setup = args.setup.replace("+", "_")

    test_features = None
    test_csv = os.path.join(args.records_dir, "test_noisy.csv")
    if os.path.exists(test_csv):
        test_shots = load_shots_csv(test_csv)
        test_features = moment_features(test_shots, DEFAULT_FEATURE_WIDTH)

    if setup in ("mondrian", "shift_mondrian"):
        sel = mondrian_select(records, "second_largest")
        records = sel.kept
    if setup in ("shift", "shift_mondrian"):
        model_path = os.path.join(args.records_dir, "shift_model.json")
        if not os.path.exists(model_path):
            print("missing shift model", file=sys.stderr)
            return EXIT_DATA
        g = _load_shift_model(model_path)
        if test_features is None:
            print(f"missing test noisy CSV {test_csv}", file=sys.stderr)
            return EXIT_DATA
        bound = calibrate_shift(records, g, test_features, args.alpha,
                                kind=kind, setup=setup)
    else:
        bound = calibrate_plain(records, args.alpha, kind)
        bound = replace(bound, setup=setup)
    print(json.dumps(bound.to_json_dict(), default=str))
    return EXIT_OK


def cmd_experiment(args) -> int:
    manifest = _load_manifest(args.manifest, args.seed, args.alpha)
    result = run_pipeline(manifest)
    os.makedirs(args.out, exist_ok=True)
    if args.format == "csv":
        write_results_csv(result["rows"], os.path.join(args.out, "results.csv"))
    else:
        with open(os.path.join(args.out, "results.json"), "w") as fh:
            json.dump(result["rows"], fh, indent=2, default=str)
    write_summary_json(result["summary"],
                       os.path.join(args.out, "summary.json"))
    print(json.dumps(result["summary"], indent=2, default=str))
    return EXIT_OK


_COMMANDS = {
    "generate": cmd_generate,
    "estimate": cmd_estimate,
    "bound": cmd_bound,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or EXIT_USAGE)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
