"""Prediction power of stochastic predictors in finite-horizon online control."""

from . import bounds, errors, estimation, lqr, policy_opt, predictors, presets, rollout
from .lqr import (LTVSystem, RiccatiSolution, dare_fixed_point, optimal_action,
                  optimal_feedforward, prediction_power_closed_form,
                  riccati_backward, surrogate_optimal_action)
from .predictors import (AffineGaussian, Baseline, BinaryPerfect, History,
                         InstanceDataset, MultiStep1D, ProblemInstance,
                         ShiftedAffineGaussian, sample_dataset, sample_instance)
from .rollout import (CostReport, NoPredictionLQR, OptimalPredictive, Planner,
                      LinearPredictive, Trajectory, monte_carlo_cost,
                      mpc_counterexample, prediction_power_mc, run_policy)

__version__ = "0.1.0"
