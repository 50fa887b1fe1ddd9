"""Scenario configuration, parsing, and the large-scale link budget.

A scenario file is plain ``key = value`` text (``#`` starts a comment).
Keys use dots for grouping, e.g. ``positions.cn``.  Per-sensor keys accept
either a scalar (broadcast to all sensors) or a comma/space separated list
with one entry per sensor.

Geometry convention: coordinates are 3-D metres.  By default the central
node (CN) sits at (5, 0, 0), the RIS at (0, 5, 0), and sensors are placed
uniformly at random on the deployment square [0, side]^2 at z = 0, drawn
once at load time from the scenario seed so a loaded config is immutable
and self-contained.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "LargeScale",
    "parse_config",
    "load_config",
    "serialize_config",
    "dbm_to_watt",
    "path_loss_db",
    "path_gain",
    "derive_large_scale",
    "link_distances",
    "substream",
]

SPEED_OF_LIGHT_M_S = 299_792_458.0

# substream identifiers for the deterministic rng tree (see `substream`)
STREAM_PLACEMENT = 0
STREAM_CHANNEL = 1
STREAM_PILOT = 2
STREAM_METHOD = 3

_REQUIRED_KEYS = (
    "m",
    "k",
    "l",
    "tx_power_dbm",
    "noise_density_dbm_hz",
    "bandwidth_hz",
    "carrier_hz",
    "blocklength",
    "error_prob",
    "pilot_length",
    "weight_policy",
    "seed",
    "mc_realizations",
)

_OPTIONAL_KEYS = (
    "rician_ris_cn",
    "rician_sensor_ris",
    "area_side_m",
    "positions.cn",
    "positions.ris",
    "positions.sensors",
)


class ConfigError(ValueError):
    """Raised for malformed scenario files or invariant violations."""


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent, deterministic rng substream for (seed, key...).

    The harness derives every random draw (sensor placement, channel
    realizations, pilot noise, method randomness) from the master seed
    through this function, so results are reproducible regardless of
    evaluation order or worker count.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def dbm_to_watt(dbm) -> float:
    """Convert a power level in dBm to watts."""
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def path_loss_db(distance_m, carrier_hz: float):
    """Indoor line-of-sight path loss in dB at the given distance.

    PL(d) = 32.8 + 16.9 log10(d / 1 m) + 20 log10(f_c / 1 GHz)
    """
    d = np.asarray(distance_m, dtype=float)
    if np.any(d <= 0.0):
        raise ValueError("path loss requires a positive distance")
    return 32.8 + 16.9 * np.log10(d) + 20.0 * np.log10(carrier_hz / 1e9)


def path_gain(distance_m, carrier_hz: float):
    """Linear power gain 10^(-PL/10) for the path loss model above."""
    return 10.0 ** (-path_loss_db(distance_m, carrier_hz) / 10.0)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """Immutable scenario description.

    Array-valued fields hold one entry per sensor.  Instances should be
    produced by `load_config`/`parse_config` (or `dataclasses.replace` on
    an existing instance followed by `validate`).
    """

    num_sensors: int
    num_antennas: int
    num_ris: int
    tx_power_dbm: np.ndarray
    noise_density_dbm_hz: float
    bandwidth_hz: float
    carrier_hz: float
    blocklength: np.ndarray
    error_prob: np.ndarray
    pilot_length: int
    weight_policy: str
    seed: int
    mc_realizations: int
    rician_ris_cn: float = 10.0
    rician_sensor_ris: np.ndarray = None
    area_side_m: float = math.sqrt(10.0)
    cn_position: tuple = (5.0, 0.0, 0.0)
    ris_position: tuple = (0.0, 5.0, 0.0)
    sensor_positions: np.ndarray = None

    def __post_init__(self):
        m = int(self.num_sensors)
        object.__setattr__(self, "num_sensors", m)
        object.__setattr__(self, "num_antennas", int(self.num_antennas))
        object.__setattr__(self, "num_ris", int(self.num_ris))
        object.__setattr__(self, "pilot_length", int(self.pilot_length))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "mc_realizations", int(self.mc_realizations))

        def per_sensor(value, dtype=float):
            arr = np.atleast_1d(np.asarray(value, dtype=dtype))
            if arr.size == 1:
                arr = np.full(m, arr[0], dtype=dtype)
            return _readonly(arr)

        object.__setattr__(self, "tx_power_dbm", per_sensor(self.tx_power_dbm))
        object.__setattr__(self, "blocklength", per_sensor(self.blocklength, dtype=int))
        object.__setattr__(self, "error_prob", per_sensor(self.error_prob))
        rician = self.rician_sensor_ris if self.rician_sensor_ris is not None else 10.0
        object.__setattr__(self, "rician_sensor_ris", per_sensor(rician))
        object.__setattr__(self, "cn_position", tuple(float(v) for v in self.cn_position))
        object.__setattr__(self, "ris_position", tuple(float(v) for v in self.ris_position))
        if self.sensor_positions is not None:
            pos = np.asarray(self.sensor_positions, dtype=float)
            if pos.ndim != 2 or pos.shape[1] != 3:
                raise ConfigError("sensor_positions must have shape (num_sensors, 3)")
            object.__setattr__(self, "sensor_positions", _readonly(pos))

    # -- derived physical quantities -------------------------------------

    @property
    def tx_power_w(self) -> np.ndarray:
        return dbm_to_watt(self.tx_power_dbm)

    @property
    def noise_power_w(self) -> float:
        """Receiver noise power sigma_w^2 = N_o * B in watts."""
        return float(dbm_to_watt(self.noise_density_dbm_hz) * self.bandwidth_hz)

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT_M_S / self.carrier_hz

    def validate(self) -> "ScenarioConfig":
        m = self.num_sensors
        if m < 1:
            raise ConfigError("m must be a positive integer")
        if self.num_antennas < 1:
            raise ConfigError("k must be a positive integer")
        if self.num_ris < 1:
            raise ConfigError("l must be a positive integer")
        if math.isqrt(self.num_ris) ** 2 != self.num_ris:
            raise ConfigError("l must be a perfect square (square RIS panel)")
        if self.bandwidth_hz <= 0:
            raise ConfigError("bandwidth_hz must be positive")
        if self.carrier_hz <= 0:
            raise ConfigError("carrier_hz must be positive")
        for name in ("blocklength", "error_prob", "tx_power_dbm", "rician_sensor_ris"):
            if getattr(self, name).shape != (m,):
                raise ConfigError(f"{name} must be scalar or one entry per sensor")
        if np.any(self.blocklength < 1):
            raise ConfigError("blocklength must be >= 1")
        if np.any((self.error_prob <= 0.0) | (self.error_prob >= 0.5)):
            raise ConfigError("error_prob out of range (0, 0.5)")
        if self.pilot_length < m:
            raise ConfigError("pilot_length must be >= m (orthogonal pilots)")
        if self.weight_policy not in ("equal", "fair"):
            raise ConfigError("weight_policy must be 'equal' or 'fair'")
        if self.mc_realizations < 1:
            raise ConfigError("mc_realizations must be >= 1")
        if self.rician_ris_cn < 0 or np.any(self.rician_sensor_ris < 0):
            raise ConfigError("Rician factors must be nonnegative")
        if self.area_side_m <= 0:
            raise ConfigError("area_side_m must be positive")
        if self.sensor_positions is None:
            raise ConfigError("sensor_positions missing; use load_config/parse_config")
        if self.sensor_positions.shape != (m, 3):
            raise ConfigError("sensor_positions must have shape (num_sensors, 3)")
        return self

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScenarioConfig):
            return NotImplemented
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
                if not np.array_equal(a, b):
                    return False
            elif a != b:
                return False
        return True


@dataclass(frozen=True)
class LargeScale:
    """Large-scale power gains: RIS->CN (`alpha`) and sensor->RIS (`beta`)."""

    alpha: float
    beta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "beta", _readonly(np.atleast_1d(self.beta)))
        if self.alpha <= 0 or np.any(self.beta <= 0):
            raise ValueError("large-scale gains must be positive")


# -- parsing -------------------------------------------------------------


def _parse_number_list(raw: str):
    parts = [p for chunk in raw.split(",") for p in chunk.split()]
    if not parts:
        raise ConfigError("empty value")
    out = []
    for p in parts:
        try:
            out.append(float(p))
        except ValueError as exc:
            raise ConfigError(f"cannot parse number {p!r}") from exc
    return out


def _parse_scalar(raw: str) -> float:
    vals = _parse_number_list(raw)
    if len(vals) != 1:
        raise ConfigError(f"expected a single number, got {raw!r}")
    return vals[0]


def parse_config(text: str) -> ScenarioConfig:
    """Parse scenario text into a validated `ScenarioConfig`."""
    entries: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip().lower()
        raw = raw.strip()
        if not key or not raw:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = raw

    missing = [k for k in _REQUIRED_KEYS if k not in entries]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    known = set(_REQUIRED_KEYS) | set(_OPTIONAL_KEYS)
    unknown = sorted(set(entries) - known)
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(unknown)}")

    m = int(_parse_scalar(entries["m"]))

    def per_sensor_values(key, default=None):
        if key not in entries:
            return default
        vals = _parse_number_list(entries[key])
        if len(vals) not in (1, m):
            raise ConfigError(f"{key} must be scalar or a list of {m} values")
        return vals[0] if len(vals) == 1 else np.asarray(vals)

    def point(key, default):
        if key not in entries:
            return default
        vals = _parse_number_list(entries[key])
        if len(vals) == 2:
            vals = vals + [0.0]
        if len(vals) != 3:
            raise ConfigError(f"{key} must be 'x, y' or 'x, y, z'")
        return tuple(vals)

    seed = int(_parse_scalar(entries["seed"]))
    if "area_side_m" in entries:
        area_side = float(_parse_scalar(entries["area_side_m"]))
    else:
        area_side = math.sqrt(10.0)

    sensors = None
    if "positions.sensors" in entries:
        vals = _parse_number_list(entries["positions.sensors"])
        if len(vals) == 2 * m:
            arr = np.asarray(vals).reshape(m, 2)
            arr = np.hstack([arr, np.zeros((m, 1))])
        elif len(vals) == 3 * m:
            arr = np.asarray(vals).reshape(m, 3)
        else:
            raise ConfigError("positions.sensors must list 2 or 3 coordinates per sensor")
        sensors = arr
    else:
        rng = substream(seed, STREAM_PLACEMENT)
        xy = rng.uniform(0.0, area_side, size=(m, 2))
        sensors = np.hstack([xy, np.zeros((m, 1))])

    cfg = ScenarioConfig(
        num_sensors=m,
        num_antennas=int(_parse_scalar(entries["k"])),
        num_ris=int(_parse_scalar(entries["l"])),
        tx_power_dbm=per_sensor_values("tx_power_dbm"),
        noise_density_dbm_hz=_parse_scalar(entries["noise_density_dbm_hz"]),
        bandwidth_hz=_parse_scalar(entries["bandwidth_hz"]),
        carrier_hz=_parse_scalar(entries["carrier_hz"]),
        blocklength=per_sensor_values("blocklength"),
        error_prob=per_sensor_values("error_prob"),
        pilot_length=int(_parse_scalar(entries["pilot_length"])),
        weight_policy=entries["weight_policy"].strip().lower(),
        seed=seed,
        mc_realizations=int(_parse_scalar(entries["mc_realizations"])),
        rician_ris_cn=_parse_scalar(entries["rician_ris_cn"]) if "rician_ris_cn" in entries else 10.0,
        rician_sensor_ris=per_sensor_values("rician_sensor_ris", 10.0),
        area_side_m=area_side,
        cn_position=point("positions.cn", (5.0, 0.0, 0.0)),
        ris_position=point("positions.ris", (0.0, 5.0, 0.0)),
        sensor_positions=sensors,
    )
    return cfg.validate()


def load_config(path) -> ScenarioConfig:
    """Read and parse a scenario file."""
    return parse_config(Path(path).read_text())


def _fmt(v: float) -> str:
    return repr(float(v))


def serialize_config(cfg: ScenarioConfig) -> str:
    """Render a config back to text; parse_config(serialize_config(c)) == c."""
    lines = [
        f"m = {cfg.num_sensors}",
        f"k = {cfg.num_antennas}",
        f"l = {cfg.num_ris}",
        "tx_power_dbm = " + ", ".join(_fmt(v) for v in cfg.tx_power_dbm),
        f"noise_density_dbm_hz = {_fmt(cfg.noise_density_dbm_hz)}",
        f"bandwidth_hz = {_fmt(cfg.bandwidth_hz)}",
        f"carrier_hz = {_fmt(cfg.carrier_hz)}",
        "blocklength = " + ", ".join(str(int(v)) for v in cfg.blocklength),
        "error_prob = " + ", ".join(_fmt(v) for v in cfg.error_prob),
        f"pilot_length = {cfg.pilot_length}",
        f"weight_policy = {cfg.weight_policy}",
        f"seed = {cfg.seed}",
        f"mc_realizations = {cfg.mc_realizations}",
        f"rician_ris_cn = {_fmt(cfg.rician_ris_cn)}",
        "rician_sensor_ris = " + ", ".join(_fmt(v) for v in cfg.rician_sensor_ris),
        f"area_side_m = {_fmt(cfg.area_side_m)}",
        "positions.cn = " + ", ".join(_fmt(v) for v in cfg.cn_position),
        "positions.ris = " + ", ".join(_fmt(v) for v in cfg.ris_position),
        "positions.sensors = " + ", ".join(_fmt(v) for v in cfg.sensor_positions.ravel()),
    ]
    return "\n".join(lines) + "\n"


# -- link budget ---------------------------------------------------------


def link_distances(cfg: ScenarioConfig):
    """(RIS->CN distance, per-sensor sensor->RIS distances) between array centres."""
    cn = np.asarray(cfg.cn_position)
    ris = np.asarray(cfg.ris_position)
    d_ris_cn = float(np.linalg.norm(cn - ris))
    d_sensor_ris = np.linalg.norm(cfg.sensor_positions - ris[None, :], axis=1)
    return d_ris_cn, d_sensor_ris


def derive_large_scale(cfg: ScenarioConfig, d_ris_cn: float, d_sensor_ris) -> LargeScale:
    """Large-scale gains for the RIS->CN and sensor->RIS links."""
    alpha = float(path_gain(d_ris_cn, cfg.carrier_hz))
    beta = path_gain(np.asarray(d_sensor_ris, dtype=float), cfg.carrier_hz)
    return LargeScale(alpha=alpha, beta=beta)
