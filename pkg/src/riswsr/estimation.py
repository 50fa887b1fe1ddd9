"""Pilot observation and linear MMSE estimation of the cascaded channels.

Sensors transmit orthogonal pilots of length N, so after correlation the
CN observes Z_i = H_i + E_i with i.i.d. noise of variance
sigma_i^2 = sigma_w^2 / (N P_i) per entry.  The cascaded channel H_i has
a Kronecker-structured prior: vec(H_i) has mean vec(M_i) and covariance
I_L kron Cbar_i, where Cbar_i is a K x K per-column model covariance.
This structure reduces the KL x KL MMSE filter to a K x K filter applied
column-wise, which is how `estimate_channels` evaluates it.

The per-column covariance uses the column-averaged outer product of the
deterministic RIS-CN response; with half-wavelength element spacing the
columns are nearly collinear, so the average is an accurate surrogate for
each column's exact second moment while staying column-independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from riswsr.channel import ChannelRealization, LosGeometry, complex_normal
from riswsr.scenario import STREAM_PILOT, LargeScale, ScenarioConfig, substream

__all__ = [
    "ChannelPrior",
    "ChannelEstimate",
    "EstimateSet",
    "build_prior",
    "pilot_noise_var",
    "observe_pilots",
    "mmse_gain",
    "posterior_col_cov",
    "interference_covariance",
    "estimate_channels",
]


@dataclass(frozen=True)
class ChannelPrior:
    """First- and second-order statistics of the cascaded channels.

    mean: (M, K, L) expected effective channel per sensor.
    col_cov: (M, K, K) per-column covariance of the random part.
    """

    mean: np.ndarray
    col_cov: np.ndarray


@dataclass(frozen=True)
class ChannelEstimate:
    """MMSE estimate of one sensor's cascaded channel."""

    matrix: np.ndarray         # (K, L)
    error_col_cov: np.ndarray  # (K, K) posterior per-column error covariance


@dataclass(frozen=True)
class EstimateSet:
    """Everything the beamforming stage needs about the uplink.

    `interference_cov` is the power-weighted sum of per-column estimation
    error covariances over all sensors; it drives the robustness terms.
    """

    estimates: tuple
    interference_cov: np.ndarray  # (K, K)
    noise_power: float
    tx_power_w: np.ndarray        # (M,)

    @property
    def num_sensors(self) -> int:
        return len(self.estimates)

    @property
    def num_antennas(self) -> int:
        return self.estimates[0].matrix.shape[0]

    @property
    def num_ris(self) -> int:
        return self.estimates[0].matrix.shape[1]

    def matrices(self) -> np.ndarray:
        """Stacked estimates, shape (M, K, L)."""
        return np.stack([e.matrix for e in self.estimates], axis=0)

    def scaled(self, s: float) -> "EstimateSet":
        """Rescaled copy: channels 1/s, covariances and noise 1/s^2.

        Every SINR expression is invariant under this rescaling, so it can
        be used to bring badly conditioned units to order one.
        """
        ests = tuple(
            ChannelEstimate(matrix=e.matrix / s, error_col_cov=e.error_col_cov / s**2)
            for e in self.estimates
        )
        return EstimateSet(
            estimates=ests,
            interference_cov=self.interference_cov / s**2,
            noise_power=self.noise_power / s**2,
            tx_power_w=self.tx_power_w,
        )


def build_prior(cfg: ScenarioConfig, large_scale: LargeScale, geom: LosGeometry) -> ChannelPrior:
    """Prior mean and per-column covariance for every sensor."""
    gamma = cfg.rician_ris_cn
    g_los = geom.los_ris_cn
    lam_outer = (g_los @ g_los.conj().T) / cfg.num_ris
    eye = np.eye(cfg.num_antennas)

    means = []
    covs = []
    for i in range(cfg.num_sensors):
        delta = cfg.rician_sensor_ris[i]
        beta = large_scale.beta[i]
        mean_g = np.sqrt(large_scale.alpha * gamma / (1.0 + gamma)) * g_los
        mean_gi = np.sqrt(beta * delta / (1.0 + delta)) * geom.los_sensor_ris[i]
        means.append(mean_g * mean_gi[None, :])
        scale = large_scale.alpha * beta / ((1.0 + gamma) * (1.0 + delta))
        covs.append(scale * ((1.0 + delta) * eye + gamma * lam_outer))
    return ChannelPrior(mean=np.stack(means, axis=0), col_cov=np.stack(covs, axis=0))


def pilot_noise_var(cfg: ScenarioConfig) -> np.ndarray:
    """Per-sensor observation noise variance sigma_w^2 / (N P_i)."""
    return cfg.noise_power_w / (cfg.pilot_length * cfg.tx_power_w)


def observe_pilots(cfg: ScenarioConfig, channels: ChannelRealization, realization: int) -> np.ndarray:
    """Noisy channel observations after pilot correlation, shape (M, K, L)."""
    sig2 = pilot_noise_var(cfg)
    obs = np.empty_like(channels.effective)
    for i in range(cfg.num_sensors):
        rng = substream(cfg.seed, STREAM_PILOT, realization, i)
        noise = complex_normal(rng, channels.effective[i].shape)
        obs[i] = channels.effective[i] + np.sqrt(sig2[i]) * noise
    return obs


def mmse_gain(col_cov: np.ndarray, sigma2: float) -> np.ndarray:
    """MMSE filter W = C (C + sigma2 I)^{-1} for one column."""
    k = col_cov.shape[0]
    cho = cho_factor(col_cov + sigma2 * np.eye(k))
    return cho_solve(cho, col_cov).conj().T


def posterior_col_cov(col_cov: np.ndarray, sigma2: float) -> np.ndarray:
    """Per-column error covariance C - C (C + sigma2 I)^{-1} C."""
    w = mmse_gain(col_cov, sigma2)
    out = col_cov - w @ col_cov
    return 0.5 * (out + out.conj().T)


def interference_covariance(error_col_covs, tx_power_w) -> np.ndarray:
    """Power-weighted sum of estimation error covariances."""
    acc = sum(p * c for p, c in zip(tx_power_w, error_col_covs))
    return 0.5 * (acc + acc.conj().T)


def estimate_channels(cfg: ScenarioConfig, prior: ChannelPrior, observations: np.ndarray) -> EstimateSet:
    """Column-wise MMSE estimates plus aggregated error statistics."""
    sig2 = pilot_noise_var(cfg)
    estimates = []
    err_covs = []
    for i in range(cfg.num_sensors):
        w = mmse_gain(prior.col_cov[i], sig2[i])
        mat = prior.mean[i] + w @ (observations[i] - prior.mean[i])
        err = posterior_col_cov(prior.col_cov[i], sig2[i])
        estimates.append(ChannelEstimate(matrix=mat, error_col_cov=err))
        err_covs.append(err)
    return EstimateSet(
        estimates=tuple(estimates),
        interference_cov=interference_covariance(err_covs, cfg.tx_power_w),
        noise_power=cfg.noise_power_w,
        tx_power_w=np.asarray(cfg.tx_power_w, dtype=float),
    )
