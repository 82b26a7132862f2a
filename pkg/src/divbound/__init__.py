"""Conformal upper bounds on output divergences of noisy black-box samplers."""

from .sampleset import (ShotMatrix, EmpiricalDistribution,
                        empirical_distribution, exact_bc, exact_divergences,
                        load_shots_csv, save_shots_csv)
from .synthetic import (ProductBernoulli, WeightProfile, make_weights,
                        perturb, closed_form_dbc, sample)
from .qsim import (Circuit, Gate, NoiseModel, build_circuit, run_ideal,
                   run_noisy, default_machines)
from .ratio import (RatioFeatureMap, RatioModel, fit_ratio, estimate_bc,
                    estimate_divergence)
from .shiftmodel import (MomentFeatures, ShiftRegressor, moment_features,
                         fit_shift, predict_shift)
from .conformal import (CalibrationRecord, ConformalBound, conformal_quantile,
                        calibrate_plain, calibrate_shift, mondrian_select,
                        gap_estimate, verify_lemma1, verify_theorem1)
from .harness import (ExperimentManifest, run_pipeline, coverage_and_size,
                      generate_run_records)

__version__ = "0.1.0"
