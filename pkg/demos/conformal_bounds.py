"""Conformal upper bounds under ordinal drift: plain vs mitigations.

Scores come from synthetic 8-bit samplers whose noise level grows with
an ordinal difficulty parameter. The calibration pool over-represents
easy ordinals, so plain split-conformal undercovers on the hardest
stratum. Ordinal (mondrian) selection trades calibration data for
better-matched scores and improves coverage; shift-model calibration
recenters scores on predicted difficulty and yields the tightest
bounds. This is the same trade-off the full experiment table shows.
"""

import numpy as np

from divbound.conformal import (CalibrationRecord, calibrate_plain,
                                calibrate_shift, mondrian_select)
from divbound.ratio import estimate_divergence, fit_ratio
from divbound.shiftmodel import fit_shift, moment_features
from divbound.synthetic import ProductBernoulli, sample

rng = np.random.default_rng(0)
ALPHA = 0.1
M = 400
S = 8


def make_records(ordinal, n):
    """Score n runs of an 8-bit sampler whose noise scales with ordinal."""
    out = []
    for i in range(n):
        w = ProductBernoulli(rng.uniform(0.35, 0.65, S))
        drift = 0.02 * ordinal * rng.uniform(0.5, 1.5, S)
        v = ProductBernoulli(np.clip(w.weights + drift, 0.02, 0.98))
        ideal = sample(w, M, seed=int(rng.integers(1 << 30)))
        noisy = sample(v, M, seed=int(rng.integers(1 << 30)))
        score = estimate_divergence(fit_ratio(ideal, noisy), noisy, "d_TV")
        out.append(CalibrationRecord(
            circuit_id=f"c{ordinal}_{i}", machine_id="m0",
            ordinal=float(ordinal), score=score,
            features=moment_features(noisy)))
    return out


def main():
    pool = make_records(2, 60) + make_records(3, 30) + make_records(4, 30)
    test = make_records(4, 120)
    truth = np.array([r.score for r in test])

    plain = calibrate_plain(pool, ALPHA)
    cov = float(np.mean(truth <= plain.bound))
    print(f"plain calibration:  bound {plain.bound:.3f}  coverage {cov:.2f}"
          f"  (n_cal {plain.n_cal_used})")

    sel = mondrian_select(pool, rule="optimize", test_ordinal=4.0)
    mond = calibrate_plain(sel.kept, ALPHA)
    cov = float(np.mean(truth <= mond.bound))
    print(f"mondrian selection: bound {mond.bound:.3f}  coverage {cov:.2f}"
          f"  (kept {len(sel.kept)} of {len(pool)} with "
          f"ordinal > {sel.s_min:g})")

    g = fit_shift([(r.features, r.score) for r in pool], seed=1)
    bounds = np.array([calibrate_shift(pool, g, r.features, ALPHA).bound
                       for r in test])
    cov = float(np.mean(truth <= bounds))
    print(f"shift calibration:  mean bound {bounds.mean():.3f}  "
          f"coverage {cov:.2f}")

    print("\nmondrian discards the easy strata and nearly restores the "
          f"nominal {1 - ALPHA:.0%}\nlevel; the shift model yields the "
          "tightest bounds at reduced coverage")


if __name__ == "__main__":
    main()
