"""Rician channel synthesis with spherical-wavefront line-of-sight terms.

Two links are modelled: RIS panel to central node (CN) and each sensor to
the RIS panel.  Deterministic components follow the exact per-element
propagation distance (no planar approximation); diffuse components are
i.i.d. unit-variance circularly-symmetric Gaussian.  The effective uplink
channel of sensor i through the RIS is H_i = G diag(g_i).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from riswsr.scenario import STREAM_CHANNEL, LargeScale, ScenarioConfig, substream

__all__ = [
    "LosGeometry",
    "ChannelRealization",
    "ula_positions",
    "upa_positions",
    "los_response",
    "build_geometry",
    "complex_normal",
    "rician_sample",
    "effective_channels",
    "draw_channels",
]


def ula_positions(n: int, spacing: float, center, axis: int = 2) -> np.ndarray:
    """Positions of a uniform linear array centred at `center` along `axis`."""
    offsets = (np.arange(n) - (n - 1) / 2.0) * spacing
    pts = np.tile(np.asarray(center, dtype=float), (n, 1))
    pts[:, axis] += offsets
    return pts


def upa_positions(n_elements: int, spacing: float, center, axes=(1, 2)) -> np.ndarray:
    """Positions of a square uniform planar array spanning the given axes.

    Elements are ordered row-major: the second axis varies fastest.
    """
    side = math.isqrt(n_elements)
    if side * side != n_elements:
        raise ValueError("planar array needs a perfect-square element count")
    offsets = (np.arange(side) - (side - 1) / 2.0) * spacing
    pts = np.tile(np.asarray(center, dtype=float), (n_elements, 1))
    a, b = axes
    grid_a, grid_b = np.meshgrid(offsets, offsets, indexing="ij")
    pts[:, a] += grid_a.ravel()
    pts[:, b] += grid_b.ravel()
    return pts


def los_response(tx_points, rx_points, wavelength_m: float) -> np.ndarray:
    """Unit-modulus response exp(-j 2 pi d / lambda) per (rx, tx) pair.

    Distances are exact Euclidean separations, so near-field curvature
    across large arrays is captured.  Shape is (num_rx, num_tx).
    """
    tx = np.atleast_2d(np.asarray(tx_points, dtype=float))
    rx = np.atleast_2d(np.asarray(rx_points, dtype=float))
    d = np.linalg.norm(rx[:, None, :] - tx[None, :, :], axis=2)
    return np.exp(-2j * np.pi * d / wavelength_m)


@dataclass(frozen=True)
class LosGeometry:
    """Element positions and cached deterministic responses."""

    cn_elements: np.ndarray    # (K, 3)
    ris_elements: np.ndarray   # (L, 3)
    sensor_points: np.ndarray  # (M, 3)
    wavelength_m: float
    los_ris_cn: np.ndarray     # (K, L)
    los_sensor_ris: np.ndarray  # (M, L)


def build_geometry(cfg: ScenarioConfig) -> LosGeometry:
    """Element grids (half-wavelength spacing) and deterministic responses.

    The CN is a K-element vertical line array; the RIS is a square panel
    in the plane orthogonal to the deployment floor.
    """
    lam = cfg.wavelength_m
    spacing = lam / 2.0
    cn = ula_positions(cfg.num_antennas, spacing, cfg.cn_position, axis=2)
    ris = upa_positions(cfg.num_ris, spacing, cfg.ris_position, axes=(1, 2))
    los_g = los_response(ris, cn, lam)
    los_gi = los_response(cfg.sensor_positions, ris, lam).T
    return LosGeometry(
        cn_elements=cn,
        ris_elements=ris,
        sensor_points=np.asarray(cfg.sensor_positions, dtype=float),
        wavelength_m=lam,
        los_ris_cn=los_g,
        los_sensor_ris=los_gi,
    )


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Unit-variance circularly-symmetric complex Gaussian samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def rician_sample(scale: float, kappa: float, los: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One Rician draw: sqrt(scale/(1+kappa)) (sqrt(kappa) los + diffuse)."""
    diffuse = complex_normal(rng, np.shape(los))
    return math.sqrt(scale / (1.0 + kappa)) * (math.sqrt(kappa) * los + diffuse)


def effective_channels(ris_cn: np.ndarray, sensor_ris: np.ndarray) -> np.ndarray:
    """Cascade H_i = G diag(g_i) for every sensor, shape (M, K, L)."""
    return ris_cn[None, :, :] * sensor_ris[:, None, :]


@dataclass(frozen=True)
class ChannelRealization:
    """One draw of all small-scale channels."""

    ris_cn: np.ndarray      # (K, L)
    sensor_ris: np.ndarray  # (M, L)
    effective: np.ndarray   # (M, K, L)


def draw_channels(
    cfg: ScenarioConfig,
    large_scale: LargeScale,
    geom: LosGeometry,
    realization: int,
) -> ChannelRealization:
    """Draw realization `realization` of both links from the scenario seed.

    Each link uses its own rng substream, so the RIS-CN draw for a given
    realization index is identical no matter how many sensors exist.
    """
    rng_g = substream(cfg.seed, STREAM_CHANNEL, realization, 0)
    ris_cn = rician_sample(large_scale.alpha, cfg.rician_ris_cn, geom.los_ris_cn, rng_g)
    rows = []
    for i in range(cfg.num_sensors):
        rng_i = substream(cfg.seed, STREAM_CHANNEL, realization, 1 + i)
        rows.append(
            rician_sample(
                large_scale.beta[i],
                cfg.rician_sensor_ris[i],
                geom.los_sensor_ris[i],
                rng_i,
            )
        )
    sensor_ris = np.stack(rows, axis=0)
    return ChannelRealization(
        ris_cn=ris_cn,
        sensor_ris=sensor_ris,
        effective=effective_channels(ris_cn, sensor_ris),
    )
