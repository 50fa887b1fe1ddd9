"""Finite-blocklength rates and the SINR forms they are evaluated on.

Short packets pay a rate penalty relative to Shannon capacity:

    R(rho) = log2(1 + rho) - a * sqrt(V(rho)),   V(rho) = 2 rho / (1 + rho),

with a = (log2 e / sqrt(n)) * Qinv(eps) set by the blocklength n and the
target error probability eps.  Negative values are clamped to zero when
reporting achievable rates; optimization code works with the unclamped
value so surrogate bounds stay smooth.

The module offers several consistent SINR routes for the same uplink:
a generic receive filter (`sinr_filtered`), the matched filter obtained
from the channel estimates (`sinr_mrc`), and lifted forms in the RIS
autocorrelation matrix Phi = psi psi^H used by the convex restriction
(`sinr_lifted_single` for one CN antenna, `sinr_lifted_multi` otherwise).
All agree on rank-one Phi; the tests pin that down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from riswsr.estimation import EstimateSet
from riswsr.scenario import ScenarioConfig

__all__ = [
    "FblrParams",
    "RisResponse",
    "q_inv",
    "dispersion_penalty",
    "capacity",
    "dispersion",
    "rate",
    "achievable_rate",
    "sinr_filtered",
    "sinr_mrc",
    "sinr_true",
    "sinr_lifted_single",
    "sinr_lifted_multi",
    "sinr_lifted",
    "wsr",
    "wsr_batch",
    "wsr_true",
    "lifted_wsr",
    "cross_grams",
]

LOG2E = math.log2(math.e)


def q_inv(eps):
    """Inverse Gaussian Q-function."""
    return -ndtri(np.asarray(eps, dtype=float))


def dispersion_penalty(blocklength, error_prob):
    """Scaling factor a = (log2 e / sqrt(n)) Qinv(eps)."""
    n = np.asarray(blocklength, dtype=float)
    return LOG2E / np.sqrt(n) * q_inv(error_prob)


def capacity(rho):
    return np.log2(1.0 + np.asarray(rho, dtype=float))


def dispersion(rho):
    """Channel dispersion V(rho) = 2 rho / (1 + rho)."""
    r = np.asarray(rho, dtype=float)
    return 2.0 * r / (1.0 + r)


def rate(rho, penalty):
    """Unclamped finite-blocklength rate, may be negative at low SINR."""
    return capacity(rho) - np.asarray(penalty) * np.sqrt(dispersion(rho))


def achievable_rate(rho, penalty):
    """Reported rate, clamped at zero."""
    return np.maximum(rate(rho, penalty), 0.0)


@dataclass(frozen=True)
class FblrParams:
    """Per-sensor blocklengths, error targets, and derived penalties."""

    blocklength: np.ndarray
    error_prob: np.ndarray
    penalty: np.ndarray

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "FblrParams":
        return cls.from_targets(cfg.blocklength, cfg.error_prob)

    @classmethod
    def from_targets(cls, blocklength, error_prob) -> "FblrParams":
        n = np.atleast_1d(np.asarray(blocklength, dtype=int))
        eps = np.atleast_1d(np.asarray(error_prob, dtype=float))
        if n.shape != eps.shape:
            raise ValueError("blocklength and error_prob must align")
        if np.any(n < 1):
            raise ValueError("blocklength must be >= 1")
        if np.any((eps <= 0.0) | (eps >= 0.5)):
            raise ValueError("error_prob out of range (0, 0.5)")
        return cls(blocklength=n, error_prob=eps, penalty=dispersion_penalty(n, eps))


@dataclass(frozen=True)
class RisResponse:
    """RIS reflection vector with per-element magnitude at most one."""

    psi: np.ndarray

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=complex).ravel()
        if np.any(np.abs(psi) > 1.0 + 1e-9):
            raise ValueError("RIS element magnitudes must not exceed one")
        object.__setattr__(self, "psi", psi)

    @classmethod
    def uniform(cls, num_ris: int) -> "RisResponse":
        return cls(np.ones(num_ris, dtype=complex))

    @classmethod
    def random_phases(cls, num_ris: int, rng: np.random.Generator) -> "RisResponse":
        phases = rng.uniform(0.0, 2.0 * np.pi, size=num_ris)
        return cls(np.exp(1j * phases))

    @classmethod
    def project(cls, raw) -> "RisResponse":
        """Scale any vector elementwise into the unit-magnitude ball."""
        raw = np.asarray(raw, dtype=complex).ravel()
        return cls(raw / np.maximum(1.0, np.abs(raw)))


# -- SINR on receive filters ----------------------------------------------


def sinr_filtered(psi, filters, estimates: EstimateSet) -> np.ndarray:
    """SINR of each sensor under explicit receive filters.

    The denominator keeps the channel-uncertainty term driven by the
    estimation error statistics.  A zero filter is rejected: the SINR is
    undefined for it rather than zero.
    """
    psi = np.asarray(psi, dtype=complex).ravel()
    filters = np.asarray(filters, dtype=complex)
    norms = np.linalg.norm(filters, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("receive filters must be nonzero")
    eff = estimates.matrices()
    v = np.einsum("jkl,l->jk", eff, psi)
    inner = filters.conj() @ v.T  # inner[i, j] = f_i^H v_j
    p = estimates.tx_power_w
    signal = p * np.abs(np.diagonal(inner)) ** 2
    cross = np.abs(inner) ** 2 * p[None, :]
    interference = cross.sum(axis=1) - np.diagonal(cross)
    err = (np.linalg.norm(psi) ** 2) * np.real(
        np.einsum("ik,kq,iq->i", filters.conj(), estimates.interference_cov, filters)
    )
    den = estimates.noise_power * norms**2 + err + interference
    return _safe_ratio(signal, den)


def sinr_mrc(psi, estimates: EstimateSet) -> np.ndarray:
    """SINR with matched filters f_i = Hhat_i psi built from the estimates.

    Sensors whose matched filter vanishes get SINR zero: they receive no
    coherent combining gain at all.
    """
    psi = np.asarray(psi, dtype=complex).ravel()
    eff = estimates.matrices()
    v = np.einsum("jkl,l->jk", eff, psi)
    p = estimates.tx_power_w
    norms2 = np.einsum("ik,ik->i", v.conj(), v).real
    inner = v.conj() @ v.T
    cross = np.abs(inner) ** 2 * p[None, :]
    interference = cross.sum(axis=1) - np.diagonal(cross)
    err = (np.linalg.norm(psi) ** 2) * np.real(
        np.einsum("ik,kq,iq->i", v.conj(), estimates.interference_cov, v)
    )
    signal = p * norms2**2
    den = estimates.noise_power * norms2 + err + interference
    return _safe_ratio(signal, den)


def sinr_true(psi, estimates: EstimateSet, true_effective: np.ndarray) -> np.ndarray:
    """Genie SINR: estimate-based matched filters against the true links.

    No uncertainty term appears because the channels are exact here; the
    estimation error manifests through the mismatched filters instead.
    """
    psi = np.asarray(psi, dtype=complex).ravel()
    filters = np.einsum("jkl,l->jk", estimates.matrices(), psi)
    u = np.einsum("jkl,l->jk", np.asarray(true_effective), psi)
    p = estimates.tx_power_w
    inner = filters.conj() @ u.T
    signal = p * np.abs(np.diagonal(inner)) ** 2
    cross = np.abs(inner) ** 2 * p[None, :]
    interference = cross.sum(axis=1) - np.diagonal(cross)
    norms2 = np.einsum("ik,ik->i", filters.conj(), filters).real
    den = estimates.noise_power * norms2 + interference
    return _safe_ratio(signal, den)


def _safe_ratio(num, den):
    out = np.zeros_like(np.asarray(num, dtype=float))
    mask = den > 0.0
    out[mask] = num[mask] / den[mask]
    return out


# -- lifted SINR in Phi ----------------------------------------------------


def cross_grams(estimates: EstimateSet) -> np.ndarray:
    """Pairwise Gram matrices Hhat_i^H Hhat_j, shape (M, M, L, L)."""
    eff = estimates.matrices()
    return np.einsum("ikl,jkq->ijlq", eff.conj(), eff)


def sinr_lifted_single(Phi, estimates: EstimateSet) -> np.ndarray:
    """Lifted SINR for a single CN antenna.

    Linear-fractional in Phi: every term is a trace against Phi, and the
    uncertainty enters through the scalar error variance times tr(Phi).
    """
    if estimates.num_antennas != 1:
        raise ValueError("single-antenna lifted SINR needs K == 1")
    Phi = np.asarray(Phi, dtype=complex)
    eff = estimates.matrices()[:, 0, :]  # (M, L)
    p = estimates.tx_power_w
    # tr(h^H h Phi) with the outer product conj(h_l) h_q, matching the
    # gram matrices used by the surrogate expansion.
    gains = np.real(np.einsum("il,iq,ql->i", eff.conj(), eff, Phi))
    weighted = p * gains
    c_err = float(np.real(estimates.interference_cov[0, 0]))
    base = estimates.noise_power + c_err * float(np.trace(Phi).real)
    den = base + weighted.sum() - weighted
    return _safe_ratio(weighted, den)


def sinr_lifted_multi(Phi, estimates: EstimateSet) -> np.ndarray:
    """Lifted SINR for a multi-antenna CN after the matched-filter expansion.

    Quadratic-fractional: signal tr^2(Xi_ii Phi), noise sigma^2 tr(Xi_ii
    Phi), uncertainty tr(Phi Lambda_i Phi), interference |tr(Xi_ij Phi)|^2.
    """
    Phi = np.asarray(Phi, dtype=complex)
    eff = estimates.matrices()
    p = estimates.tx_power_w
    m = estimates.num_sensors
    hp = np.einsum("jkl,lq->jkq", eff, Phi)  # Hhat_j Phi
    # tr(Xi_ij Phi) = tr(Hhat_i^H Hhat_j Phi)
    tr_cross = np.einsum("ikl,jkl->ij", eff.conj(), hp)
    tr_own = np.real(np.diagonal(tr_cross))
    ctil = estimates.interference_cov
    # tr(Phi Lambda_i Phi) = || Ctil^{1/2} Hhat_i Phi ||_F^2
    err = np.real(np.einsum("ikl,kq,iql->i", hp.conj(), ctil, hp))
    signal = p * tr_own**2
    noise = estimates.noise_power * tr_own
    cross = np.abs(tr_cross) ** 2 * p[None, :]
    interference = cross.sum(axis=1) - np.diagonal(cross)
    den = noise + err + interference
    return _safe_ratio(signal, den)


def sinr_lifted(Phi, estimates: EstimateSet) -> np.ndarray:
    """Dispatch to the lifted SINR form matching the CN antenna count."""
    if estimates.num_antennas == 1:
        return sinr_lifted_single(Phi, estimates)
    return sinr_lifted_multi(Phi, estimates)


# -- weighted sum rates ----------------------------------------------------


def wsr(psi, estimates: EstimateSet, params: FblrParams, weights, clamp: bool = True) -> float:
    rho = sinr_mrc(psi, estimates)
    r = achievable_rate(rho, params.penalty) if clamp else rate(rho, params.penalty)
    return float(np.dot(np.asarray(weights, dtype=float), r))


def wsr_true(psi, estimates: EstimateSet, true_effective, params: FblrParams, weights) -> float:
    rho = sinr_true(psi, estimates, true_effective)
    return float(np.dot(np.asarray(weights, dtype=float), achievable_rate(rho, params.penalty)))


def lifted_wsr(Phi, estimates: EstimateSet, params: FblrParams, weights, clamp: bool = False) -> float:
    rho = sinr_lifted(Phi, estimates)
    r = achievable_rate(rho, params.penalty) if clamp else rate(rho, params.penalty)
    return float(np.dot(np.asarray(weights, dtype=float), r))


def wsr_batch(candidates, estimates: EstimateSet, params: FblrParams, weights, clamp: bool = True) -> np.ndarray:
    """Weighted sum rate of many RIS vectors at once, shape (S,).

    Vectorized over candidates so the work per candidate is a constant
    number of array operations regardless of the sensor or antenna count.
    """
    cand = np.atleast_2d(np.asarray(candidates, dtype=complex))  # (S, L)
    eff = estimates.matrices()
    p = estimates.tx_power_w
    v = np.einsum("jkl,sl->jsk", eff, cand)  # (M, S, K)
    norms2 = np.einsum("jsk,jsk->js", v.conj(), v).real
    inner = np.einsum("isk,jsk->ijs", v.conj(), v)
    cross = np.abs(inner) ** 2 * p[None, :, None]
    interference = cross.sum(axis=1) - cross[np.arange(len(p)), np.arange(len(p)), :]
    err = np.einsum("isk,kq,isq->is", v.conj(), estimates.interference_cov, v).real
    err *= np.sum(np.abs(cand) ** 2, axis=1)[None, :]
    signal = p[:, None] * norms2**2
    den = estimates.noise_power * norms2 + err + interference
    rho = np.zeros_like(signal)
    mask = den > 0.0
    rho[mask] = signal[mask] / den[mask]
    pen = params.penalty[:, None]
    r = capacity(rho) - pen * np.sqrt(dispersion(rho))
    if clamp:
        r = np.maximum(r, 0.0)
    return np.asarray(weights, dtype=float) @ r
