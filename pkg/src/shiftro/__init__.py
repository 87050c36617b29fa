"""Distribution-shift-robust contextual linear programming.

Calibrates covariate-conditional box uncertainty sets from shifted training
data via density-ratio-weighted conformal adjustment, solves the resulting
box-robust LPs, and reproduces the reference analytic and simulated
experiments at desk scale.
"""

from .analytic import (DiscreteWorld, coverage_band, exact_coverage,
                       oracle_toy_decision, prob_conservative, tv_distance)
from .conformal import (CalibrationResult, CalibScores, calib_scores,
                        empirical_coverage, select_eta, uncertainty_box)
from .density_ratio import (ClassifierSpec, GaussianOracleRatio, KernelMatrices,
                            RatioModel, clip_weights, fit_classifier_ratio,
                            fit_kmm_covariate, fit_kmm_label,
                            gaussian_oracle_ratio, trivial_ratio)
from .harness import (ExperimentConfig, Report, ReportRow, box_baseline,
                      emit_report, empirical_var, run_pipeline, run_replicate)
from .lp import (BoxSet, LinearProgram, LpSolution, robustify_box, solve_lp,
                 solve_robust_box)
from .numerics import RngStream, normal_cdf, normal_quantile, sample, solve_spd
from .predictors import (Dataset, MeanSpec, QuantileSpec, compute_residuals,
                         fit_mean, fit_quantile, pinball)
from .scenarios import (GridScenario, KnapsackScenario, SimpleScenario,
                        ToyScenario, build_knapsack_lp, build_shortest_path_lp,
                        sample_grid_costs, sample_knapsack_utils, sample_simple,
                        sample_toy)

__version__ = "0.1.0"
