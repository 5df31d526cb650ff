"""Random-walk Metropolis over the flattened network parameters.

Desk-scale only (a hard cap on the parameter count): the chain exists to
cross-validate the variational posterior on tiny models, not to sample the
table-sized networks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .network import NetworkParams, NetworkShape, forward, loglik_and_grad
from .testbed import Dataset

__all__ = ["MHConfig", "MHResult", "mh_sample", "compare_vi_mh"]

MAX_PARAMS = 200


@dataclass
class MHConfig:
    steps: int = 20000
    burn_in: int = 5000
    proposal_sd: float = 0.1
    thin: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.steps > self.burn_in >= 0:
            raise ValueError("need steps > burn_in >= 0")
        if self.proposal_sd <= 0 or self.thin < 1:
            raise ValueError("need proposal_sd > 0 and thin >= 1")


@dataclass
class MHResult:
    chain: np.ndarray  # (kept_steps, T) post burn-in, thinned
    acceptance_rate: float
    proposal_sd: float  # final (post-adaptation) scale
    shape: NetworkShape


def _log_target(theta, shape, data, prior, sigma):
    lp = prior.log_density_sum(theta)
    if not math.isfinite(lp):
        return lp
    if data is None or data.n == 0:
        return lp
    params = NetworkParams.from_flat(shape, theta)
    ll, _ = loglik_and_grad(params, data.x, data.y, sigma)
    return lp + ll


def mh_sample(shape: NetworkShape, data: Dataset | None, prior, sigma: float,
              config: MHConfig, theta0=None) -> MHResult:
    """Spherical-Gaussian random-walk Metropolis targeting prior x likelihood.

    The proposal scale adapts toward 0.234 acceptance during burn-in and is
    frozen afterwards, so the retained chain is a correct Metropolis chain.
    """
    T = shape.n_params
    if T > MAX_PARAMS:
        raise ValueError(f"parameter count {T} exceeds the desk-scale cap {MAX_PARAMS}")
    rng = np.random.default_rng(config.seed)
    theta = np.zeros(T) if theta0 is None else np.asarray(theta0, dtype=float).copy()
    log_p = _log_target(theta, shape, data, prior, sigma)
    if not math.isfinite(log_p):
        raise ValueError("non-finite target at the initial point")

    sd = config.proposal_sd
    kept = []
    accepted_post = 0
    proposed_post = 0
    accept_window = 0
    window = 100
    for step in range(config.steps):
        prop = theta + sd * rng.standard_normal(T)
        log_p_prop = _log_target(prop, shape, data, prior, sigma)
        accept = math.log(rng.random()) < log_p_prop - log_p
        if accept:
            theta = prop
            log_p = log_p_prop
        if step < config.burn_in:
            accept_window += accept
            if (step + 1) % window == 0:
                rate = accept_window / window
                sd *= math.exp(0.5 * (rate - 0.234))
                accept_window = 0
        else:
            proposed_post += 1
            accepted_post += accept
            if (step - config.burn_in) % config.thin == 0:
                kept.append(theta.copy())
    return MHResult(
        chain=np.asarray(kept),
        acceptance_rate=accepted_post / max(proposed_post, 1),
        proposal_sd=sd,
        shape=shape,
    )


def compare_vi_mh(vi_mean_on_grid, mh_result: MHResult, grid, tolerance: float = 0.1):
    """Max absolute difference of posterior-predictive mean functions.

    vi_mean_on_grid is the variational predictive mean evaluated on `grid`;
    the chain mean function is averaged over the retained draws.
    """
    grid = np.asarray(grid, dtype=float)
    grid_x = grid.reshape(-1, 1) if grid.ndim == 1 else grid
    if grid_x.shape[1] != mh_result.shape.d_in:
        raise ValueError("grid dimension does not match the chain's model")
    vi_mean = np.asarray(vi_mean_on_grid, dtype=float)
    if vi_mean.shape[0] != grid_x.shape[0]:
        raise ValueError("vi summary and grid length mismatch")
    acc = np.zeros(grid_x.shape[0])
    for theta in mh_result.chain:
        params = NetworkParams.from_flat(mh_result.shape, theta)
        acc += forward(params, grid_x)
    mh_mean = acc / mh_result.chain.shape[0]
    max_diff = float(np.max(np.abs(vi_mean - mh_mean)))
    return {
        "max_abs_diff": max_diff,
        "within_tolerance": max_diff <= tolerance,
        "tolerance": tolerance,
    }
