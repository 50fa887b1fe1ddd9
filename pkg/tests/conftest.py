"""Shared builders for the test suite.

Most tests want a small but fully valid scenario plus the derived
estimation pipeline outputs.  The helpers here centralize that so the
individual test modules only state what they vary.
"""

import numpy as np
import pytest

from riswsr.channel import draw_channels
from riswsr.estimation import (
    ChannelEstimate,
    EstimateSet,
    estimate_channels,
    interference_covariance,
    observe_pilots,
)
from riswsr.harness import prepare_point
from riswsr.scenario import parse_config

BASE_SETTINGS = {
    "m": 2,
    "k": 2,
    "l": 9,
    "tx_power_dbm": 20,
    "noise_density_dbm_hz": -174,
    "bandwidth_hz": "20e6",
    "carrier_hz": "2e9",
    "blocklength": 100,
    "error_prob": "1e-3",
    "pilot_length": 10,
    "weight_policy": "equal",
    "seed": 7,
    "mc_realizations": 3,
}


def make_config(**overrides):
    """Scenario built through the text parser so that path is exercised too.

    Pass key=None to drop a key from the base settings.
    """
    settings = dict(BASE_SETTINGS)
    for key, val in overrides.items():
        if val is None:
            settings.pop(key, None)
        else:
            settings[key] = val
    text = "\n".join(f"{k} = {v}" for k, v in settings.items())
    return parse_config(text)


def pipeline(cfg, realization=0):
    """(context, true channels, estimates) for one realization."""
    ctx = prepare_point(cfg)
    channels = draw_channels(cfg, ctx.large_scale, ctx.geom, realization)
    observations = observe_pilots(cfg, channels, realization)
    estimates = estimate_channels(cfg, ctx.prior, observations)
    return ctx, channels, estimates


def complex_gaussian(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_psd(rng, n, scale=1.0):
    a = complex_gaussian(rng, (n, n))
    return (a @ a.conj().T) * (scale / n)


def synthetic_estimates(rng, m, k, l, noise_power=1e-3, err_scale=1e-4, tx_power=0.1):
    """Hand-built estimate set with controllable error statistics."""
    tx = np.full(m, float(tx_power))
    ests = []
    err_covs = []
    for _ in range(m):
        err = random_psd(rng, k, err_scale)
        ests.append(
            ChannelEstimate(matrix=complex_gaussian(rng, (k, l)), error_col_cov=err)
        )
        err_covs.append(err)
    return EstimateSet(
        estimates=tuple(ests),
        interference_cov=interference_covariance(err_covs, tx),
        noise_power=float(noise_power),
        tx_power_w=tx,
    )


def feasible_phi(rng, l, peak=1.0):
    """Random PSD matrix scaled so the largest diagonal entry equals peak."""
    phi = random_psd(rng, l)
    top = float(np.real(np.diag(phi)).max())
    return phi * (peak / top)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
