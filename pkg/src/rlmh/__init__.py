"""Metropolis-Hastings with a learned, state-dependent proposal mean.

The sampler proposes from a Laplace distribution centred at ``φ_θ(x)``,
where ``φ_θ`` is a small neural network trained online by a deterministic
policy gradient to maximise the log expected squared jump distance.  The
package also ships adaptive random-walk Metropolis and adaptive MALA
comparators, ESJD/MMD metrics and an experiment CLI.
"""

from .baselines import (AmalaConfig, WarmStart, amala_run, arwmh_run, arwmh_step, mala,
                        mala_step, warm_start)
from .ddpg import DDPGAgent, DDPGConfig, ReplayBuffer
from .driver import LearningRateSchedule, RlmhConfig, RlmhResult, clip_gradient, rlmh_run
from .env import MdpAction, MdpState, PhiMHChain, Transition, acceptance_log_prob, env_step, mh_chain
from .estimators import AMALASampler, ARWMHSampler, RLMHSampler
from .laplace import CovarianceFactor, NotPositiveDefiniteError, factorize, norm1_sigma, \
    proposal_log_density, proposal_sample
from .metrics import MetricReport, esjd, evaluate, gaussian_kernel, median_heuristic, mmd
from .policy import MlpParams, Policy, load_policy, mean_shift_bound, phi_map, pretrain, \
    save_policy
from .targets import ReferenceSample, Target, gaussian, gmm, load_reference_samples, \
    make_builtin_target

__version__ = "0.1.0"

__all__ = [
    "AMALASampler", "ARWMHSampler", "AmalaConfig", "CovarianceFactor", "DDPGAgent",
    "DDPGConfig", "LearningRateSchedule", "MdpAction", "MdpState", "MetricReport", "MlpParams",
    "NotPositiveDefiniteError", "PhiMHChain", "Policy", "RLMHSampler", "ReferenceSample",
    "ReplayBuffer", "RlmhConfig", "RlmhResult", "Target", "Transition", "WarmStart",
    "acceptance_log_prob", "amala_run", "arwmh_run", "arwmh_step", "clip_gradient", "env_step",
    "esjd", "evaluate", "factorize", "gaussian", "gaussian_kernel", "gmm", "load_policy",
    "load_reference_samples", "make_builtin_target", "mala", "mala_step", "mean_shift_bound",
    "median_heuristic", "mh_chain", "mmd", "norm1_sigma", "phi_map", "pretrain",
    "proposal_log_density", "proposal_sample", "rlmh_run", "save_policy", "warm_start",
]
