"""Shared constructors for the test modules."""

import numpy as np

from rlmh.laplace import factorize
from rlmh.policy import MlpParams, Policy


def random_spd(rng, d, cond=10.0):
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    eig = np.exp(rng.uniform(0, np.log(cond), size=d))
    return (Q * eig) @ Q.T


def random_policy(rng, d, hidden=(5,), radius=10.0, scale=1.0):
    """Small policy with random weights, mean and covariance."""
    cov = random_spd(rng, d)
    mlp = MlpParams.glorot((d, *hidden, d), rng)
    mlp = mlp.with_theta(scale * mlp.theta + 0.1 * rng.standard_normal(mlp.n_params))
    return Policy(mlp, rng.standard_normal(d), factorize(cov), radius)


def identity_policy(d, warm_mean=None, cov=None, radius=1e-8):
    """Tiny ellipsoid: φ(x) = x everywhere except at the centre."""
    warm_mean = np.zeros(d) if warm_mean is None else warm_mean
    cov = np.eye(d) if cov is None else cov
    return Policy(MlpParams.zeros((d, 4, d)), warm_mean, factorize(cov), radius)


def tiny_config(family="gaussian", params=None, method="arwmh", seeds=(0,), **extra):
    """Experiment dict with every iteration count cut to a few dozen steps."""
    if params is None:
        params = {"dim": 2} if family == "gaussian" else {}
    cfg = {
        "target": {"family": family, "params": params, "n_reference": 200},
        "method": method,
        "seeds": list(seeds),
        "n_eval": 40,
        "warm": {"m": 60},
        "rlmh": {"episodes": 2, "steps_per_episode": 30, "hidden": [4], "pretrain_epochs": 5,
                 "batch_size": 8},
        "arwmh": {"n_iter": 100},
        "amala": {"n_epochs": 3, "warm_epoch_length": 30, "final_epoch_length": 40},
    }
    cfg.update(extra)
    return cfg


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: dict = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion #{number:<2d} {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = (ok, line)
    print(line)
