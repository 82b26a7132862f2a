"""End-to-end experiment: simulate, score, calibrate, and summarize.

Runs a reduced manifest through the full pipeline (leave-one-machine-out
folds, all four calibration setups) and prints the coverage/size table.
The default manifest reproduces the full study but takes a few minutes.
"""

from divbound.harness import ExperimentManifest, run_pipeline

MANIFEST = ExperimentManifest(
    families=("ghz", "random"),
    sizes=(2, 3, 4),
    walker_depths=(3,),
    noise_multipliers=(0.5, 1.0, 1.5),
    m_shots=500,
    runs_per_circuit=5,
    kinds=("d_BC", "d_TV"),
    master_seed=0,
)


def main():
    result = run_pipeline(MANIFEST)
    print(f"{'kind/setup':<24} {'coverage':>9} {'size':>8}")
    for key, stats in sorted(result["summary"].items()):
        print(f"{key:<24} {stats['coverage']:>9.3f} {stats['size']:>8.3f}")
    audit = result["audit"]
    print(f"\nfolds: {len(audit['folds'])}  "
          f"test stratum ordinal: {audit['s_max']}")


if __name__ == "__main__":
    main()
