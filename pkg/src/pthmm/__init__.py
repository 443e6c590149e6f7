"""Bayesian inference for multivariate hidden Markov models by parallel tempering."""

from .diagnostics import ModeRegion, ess_basic, interval_table, relabel_by_ordering, running_weight, split_rhat, swap_summary
from .engine import PtConfig, PtEngine, PtResult, count_round_trips, pt_run, run_single_chain, select_swap_pair
from .estimator import ParallelTemperingHMM
from .hmm_core import (ModelSpec, ObservationSet, ParamVector, StreamFamily, log_likelihood, log_likelihood_bruteforce,
                       log_transition_matrices, simulate, tpm_row)
from .kernels import ProposalScales, ReplicaState, adapt_scales, cwmh_sweep
from .priors import PriorConfig, log_prior, sample_prior, tempered_prior_demo
from .store import ReplicaTrajectory, SampleStore
from .targets import BimodalToy, GaussianToy, HMMTarget
from .tempering import TemperatureLadder, geometric_ladder, log_power_posterior, swap_log_ratio, tune_ladder

__version__ = "0.1.0"
