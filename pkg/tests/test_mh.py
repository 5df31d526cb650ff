import math

import numpy as np
import pytest

from besovbnn.mh import MHConfig, MHResult, compare_vi_mh, mh_sample
from besovbnn.network import NetworkShape
from besovbnn.priors import make_density


def ess(x):
    """Crude effective sample size from the lag-1 autocorrelation."""
    x = np.asarray(x)
    r = np.corrcoef(x[:-1], x[1:])[0, 1]
    r = min(max(r, 0.0), 0.999)
    return len(x) * (1 - r) / (1 + r)


TINY_SHAPE = NetworkShape(d_in=1, hidden_widths=(2,))  # 7 parameters


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            MHConfig(steps=10, burn_in=10)
        with pytest.raises(ValueError):
            MHConfig(steps=10, burn_in=0, proposal_sd=0.0)
        with pytest.raises(ValueError):
            MHConfig(steps=10, burn_in=0, thin=0)


class TestPriorRecovery:
    def test_gaussian_prior_moments(self):
        # with no data the chain samples the prior; check first and second
        # moments of each coordinate against N(0, 0.7^2) within 3 ESS-based SE
        prior = make_density("gauss", sigma=0.7)
        config = MHConfig(steps=30_000, burn_in=5_000, proposal_sd=0.5, seed=1)
        res = mh_sample(TINY_SHAPE, None, prior, sigma=0.1, config=config)
        for j in range(TINY_SHAPE.n_params):
            x = res.chain[:, j]
            n_eff = ess(x)
            se_mean = 0.7 / math.sqrt(n_eff)
            assert abs(np.mean(x)) < 3 * se_mean, f"coord {j}"
            se_var = 0.7**2 * math.sqrt(2.0 / n_eff)
            assert abs(np.var(x) - 0.49) < 3 * se_var, f"coord {j}"

    def test_acceptance_adapts_toward_target(self):
        prior = make_density("gauss")
        config = MHConfig(steps=20_000, burn_in=8_000, proposal_sd=5.0, seed=3)
        res = mh_sample(TINY_SHAPE, None, prior, sigma=0.1, config=config)
        assert 0.1 < res.acceptance_rate < 0.4

    def test_tiny_proposal_accepts_everything(self):
        prior = make_density("gauss")
        config = MHConfig(steps=600, burn_in=500, proposal_sd=1e-8, seed=0)
        res = mh_sample(TINY_SHAPE, None, prior, sigma=0.1, config=config)
        assert res.acceptance_rate > 0.99


class _ShiftedGaussianTarget:
    """Coordinatewise N(mean, sd^2) target, used to validate the kernel
    against a known non-centered distribution."""

    def __init__(self, mean, sd):
        self.mean = mean
        self.sd = sd

    def log_density_sum(self, theta):
        z = (np.asarray(theta, dtype=float) - self.mean) / self.sd
        return float(np.sum(-0.5 * z**2 - math.log(self.sd)))


class TestKnownTarget:
    def test_shifted_gaussian_moments(self):
        mean, sd = 1.2, 0.4
        target = _ShiftedGaussianTarget(mean, sd)
        config = MHConfig(steps=40_000, burn_in=10_000, proposal_sd=0.3, seed=4)
        res = mh_sample(TINY_SHAPE, None, target, sigma=0.1, config=config)
        for j in range(TINY_SHAPE.n_params):
            x = res.chain[:, j]
            n_eff = ess(x)
            assert abs(np.mean(x) - mean) < 4 * sd / math.sqrt(n_eff), f"coord {j}"
            assert np.var(x) == pytest.approx(sd**2, rel=0.2)


class TestGuards:
    def test_parameter_cap(self):
        big = NetworkShape(d_in=1, hidden_widths=(20, 20))
        with pytest.raises(ValueError):
            mh_sample(big, None, make_density("gauss"), 0.1, MHConfig(steps=10, burn_in=1))

    def test_bad_initial_point(self):
        prior = make_density("uniform-slab", B=1.0)
        with pytest.raises(ValueError):
            mh_sample(
                TINY_SHAPE, None, prior, 0.1,
                MHConfig(steps=10, burn_in=1),
                theta0=np.full(TINY_SHAPE.n_params, 5.0),
            )


class TestCompare:
    def test_identical_means_have_zero_diff(self):
        chain = np.zeros((10, TINY_SHAPE.n_params))
        res = MHResult(chain=chain, acceptance_rate=0.2, proposal_sd=0.1, shape=TINY_SHAPE)
        grid = np.linspace(0, 1, 11)
        out = compare_vi_mh(np.zeros(11), res, grid)
        assert out["max_abs_diff"] == 0.0 and out["within_tolerance"]

    def test_flags_large_difference(self):
        chain = np.zeros((10, TINY_SHAPE.n_params))
        res = MHResult(chain=chain, acceptance_rate=0.2, proposal_sd=0.1, shape=TINY_SHAPE)
        grid = np.linspace(0, 1, 11)
        out = compare_vi_mh(np.full(11, 0.5), res, grid, tolerance=0.1)
        assert out["max_abs_diff"] == pytest.approx(0.5)
        assert not out["within_tolerance"]

    def test_grid_mismatch(self):
        res = MHResult(
            chain=np.zeros((5, TINY_SHAPE.n_params)),
            acceptance_rate=0.2,
            proposal_sd=0.1,
            shape=TINY_SHAPE,
        )
        with pytest.raises(ValueError):
            compare_vi_mh(np.zeros(3), res, np.linspace(0, 1, 5))
