"""Masked self-supervised ridge regression and its high-dimensional asymptotics.

A numerics library and CLI around the zero-diagonal aggregate ridge
predictor: the closed-form estimator and its coordinate-wise oracle,
deterministic equivalents for generalization/training error, the limiting
spectrum of the estimator, spiked-model outlier predictions, AR(1) phase
boundaries against PCA, and a seeded Monte Carlo harness that checks each
prediction against simulation.
"""

from ._version import __version__
from .covariance import (CovarianceModel, SpikeSpec, ar1_eigendensity,
                         build_covariance, covariance_sqrt,
                         diag_precision_inverse, from_spec, load_covariance_csv)
from .errors import ConvergenceError, DefinitenessError, NumericError, PoleError
from .fixed_point import (ChiSolution, DbarVectors, FixedPointSolution,
                          SpectralWorkspace, dbar_vectors, degrees_of_freedom,
                          solve_chi, solve_kappa, solve_mtilde)
from .ssr import (ApproximationResult, Dataset, PcaResult, SsrEstimate,
                  approximation_optimum, empirical_risk, export_estimate_csv,
                  fit_ssr, fit_ssr_coordinatewise, pca_fit, population_risk,
                  ssr_spectrum_empirical)
from .asymptotics import (Ar1Analysis, RiskPrediction, SpectralModel,
                          SpikedAnalysis, ar1_analysis, ar1_pca_population_loss,
                          ar1_phase_boundary, ar1_population_ssr_loss,
                          bbp_prediction, predict_gen_error, predict_train_error,
                          predicted_spectral_density, resolvent_trace_equivalents,
                          spiked_population_losses, toeplitz_df2_closed_form,
                          universal_density, universal_support)
from .experiment import (ExperimentConfig, ExperimentReport, GridRecord,
                         run_bbp_sweep, run_experiment, run_pca_comparison,
                         run_risk_experiment, run_spectrum_experiment,
                         sample_dataset)

__all__ = [name for name in dir() if not name.startswith("_")]
