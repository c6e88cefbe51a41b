"""Scenario configuration, 2-D geometry and seeded randomness.

All powers are converted to linear milliwatts at load time; the
optimization code never sees dB values. A single master seed feeds
named sub-streams (user placement, path gains, path angles, random
phase draws) so that Monte Carlo drops are reproducible and the
different sources of randomness stay independent.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

# Default deployment used by the bundled presets: the base station sits at
# the origin, six candidate reflector sites form a ring around the user disc.
DEFAULT_IRS_SITES = (
    (60.0, 40.0),
    (60.0, -40.0),
    (100.0, 40.0),
    (100.0, -40.0),
    (140.0, 40.0),
    (140.0, -40.0),
)
DEFAULT_USER_CENTER = (100.0, 0.0)
DEFAULT_USER_RADIUS = 10.0
DEFAULT_PATHLOSS_LOS = (61.4, 2.0, 5.8)
DEFAULT_PATHLOSS_NLOS = (72.0, 2.92, 8.7)

# Sub-stream domain tags for the master-seed split scheme.
STREAM_PLACEMENT = 1
STREAM_PATH_GAINS = 2
STREAM_ANGLES = 3
STREAM_PHASES = 4


class ConfigError(ValueError):
    """Raised when a configuration document is malformed or inconsistent."""


def dbm_to_linear(x_dbm: float) -> float:
    """dBm -> milliwatts: 10^(x/10). Also valid for plain dB ratios."""
    if not math.isfinite(x_dbm):
        raise ConfigError(f"non-finite dB value: {x_dbm}")
    return 10.0 ** (x_dbm / 10.0)


def db_to_linear(x_db: float) -> float:
    """dB ratio -> linear ratio."""
    return dbm_to_linear(x_db)


@dataclass(frozen=True)
class ScenarioConfig:
    """Static description of one simulated deployment.

    Geometry is planar (positions in meters). ``pathloss_los`` and
    ``pathloss_nlos`` are ``(a, b, sigma_xi)`` triples of the log-distance
    model ``kappa = a + 10*b*log10(d) + xi`` with ``xi ~ N(0, sigma_xi^2)``,
    all in dB.
    """

    M: int
    N: int
    K: int
    L_v: int
    L_h: int
    mbs_position: tuple[float, float] = (0.0, 0.0)
    irs_positions: tuple[tuple[float, float], ...] = DEFAULT_IRS_SITES
    user_center: tuple[float, float] = DEFAULT_USER_CENTER
    user_radius: float = DEFAULT_USER_RADIUS
    P_max_dbm: float = 30.0
    sinr_min_db: float = -20.0
    noise_dbm: float = -90.0
    n_paths_bs_irs: int = 5
    n_paths_irs_user: int = 1
    n_paths_bs_user: int = 3
    pathloss_los: tuple[float, float, float] = DEFAULT_PATHLOSS_LOS
    pathloss_nlos: tuple[float, float, float] = DEFAULT_PATHLOSS_NLOS
    include_direct_link: bool = False
    seed: int = 2024

    @property
    def L(self) -> int:
        return self.L_v * self.L_h

    @property
    def p_max(self) -> float:
        """Transmit power budget in milliwatts."""
        return dbm_to_linear(self.P_max_dbm)

    @property
    def sinr_min(self) -> float:
        """Minimum SINR as a linear ratio."""
        return db_to_linear(self.sinr_min_db)

    @property
    def noise_power(self) -> float:
        """Noise power sigma^2 in milliwatts."""
        return dbm_to_linear(self.noise_dbm)

    def validate(self) -> "ScenarioConfig":
        for name in ("M", "N", "K", "L_v", "L_h"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"invariant violation: {name} must be >= 1")
        for name in ("n_paths_bs_irs", "n_paths_irs_user", "n_paths_bs_user"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"invariant violation: {name} must be >= 1")
        if not self.user_radius > 0:
            raise ConfigError("invariant violation: user_radius must be > 0")
        for name in ("P_max_dbm", "sinr_min_db", "noise_dbm"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"invariant violation: {name} must be finite")
        if len(self.irs_positions) != self.N:
            raise ConfigError(
                "invariant violation: irs_positions must list exactly N points "
                f"(got {len(self.irs_positions)} for N={self.N})"
            )
        for trip_name in ("pathloss_los", "pathloss_nlos"):
            trip = getattr(self, trip_name)
            if len(trip) != 3:
                raise ConfigError(f"invariant violation: {trip_name} needs (a, b, sigma_xi)")
            if trip[2] < 0:
                raise ConfigError(f"invariant violation: {trip_name}.sigma_xi must be >= 0")
        if not self.noise_power > 0:
            raise ConfigError("invariant violation: noise power must be > 0")
        return self

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "N": self.N,
            "K": self.K,
            "L_v": self.L_v,
            "L_h": self.L_h,
            "mbs_position": list(self.mbs_position),
            "irs_positions": [list(p) for p in self.irs_positions],
            "user_region": {"center": list(self.user_center), "radius": self.user_radius},
            "P_max_dbm": self.P_max_dbm,
            "sinr_min_db": self.sinr_min_db,
            "noise_dbm": self.noise_dbm,
            "n_paths_bs_irs": self.n_paths_bs_irs,
            "n_paths_irs_user": self.n_paths_irs_user,
            "n_paths_bs_user": self.n_paths_bs_user,
            "pathloss_los": list(self.pathloss_los),
            "pathloss_nlos": list(self.pathloss_nlos),
            "include_direct_link": self.include_direct_link,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


def load_config(document) -> ScenarioConfig:
    """Parse a JSON document (text or already-decoded dict) into a config.

    ``M``, ``N``, ``K``, ``L_v`` and ``L_h`` are required; every other key
    falls back to the defaults above. Unknown keys are rejected so typos do
    not silently disappear.
    """
    if isinstance(document, (str, bytes)):
        try:
            data = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"parse failure: {exc}") from exc
    else:
        data = dict(document)
    if not isinstance(data, dict):
        raise ConfigError("parse failure: top-level value must be an object")

    required = ("M", "N", "K", "L_v", "L_h")
    for key in required:
        if key not in data:
            raise ConfigError(f"missing field: {key}")

    known = set(required) | {
        "mbs_position", "irs_positions", "user_region", "P_max_dbm",
        "sinr_min_db", "noise_dbm", "n_paths_bs_irs", "n_paths_irs_user",
        "n_paths_bs_user", "pathloss_los", "pathloss_nlos",
        "include_direct_link", "seed",
    }
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown field(s): {sorted(unknown)}")

    kwargs: dict = {k: int(data[k]) for k in required}
    n = kwargs["N"]
    if "irs_positions" in data:
        kwargs["irs_positions"] = tuple(tuple(map(float, p)) for p in data["irs_positions"])
    else:
        if n > len(DEFAULT_IRS_SITES):
            raise ConfigError(
                f"missing field: irs_positions (no default for N={n} > {len(DEFAULT_IRS_SITES)})"
            )
        kwargs["irs_positions"] = DEFAULT_IRS_SITES[:n]
    if "mbs_position" in data:
        kwargs["mbs_position"] = tuple(map(float, data["mbs_position"]))
    if "user_region" in data:
        region = data["user_region"]
        try:
            kwargs["user_center"] = tuple(map(float, region["center"]))
            kwargs["user_radius"] = float(region["radius"])
        except (KeyError, TypeError) as exc:
            raise ConfigError("user_region needs 'center' and 'radius'") from exc
    for key in ("P_max_dbm", "sinr_min_db", "noise_dbm"):
        if key in data:
            kwargs[key] = float(data[key])
    for key in ("n_paths_bs_irs", "n_paths_irs_user", "n_paths_bs_user", "seed"):
        if key in data:
            kwargs[key] = int(data[key])
    for key in ("pathloss_los", "pathloss_nlos"):
        if key in data:
            kwargs[key] = tuple(map(float, data[key]))
    if "include_direct_link" in data:
        kwargs["include_direct_link"] = bool(data["include_direct_link"])

    return ScenarioConfig(**kwargs).validate()


def preset_config(name: str, **overrides) -> ScenarioConfig:
    """Named experiment scales.

    ``paper``: M=40, N=6, K=4, 8x8 reflector grids. ``desk``: M=8, N=4,
    K=4, 4x4 grids, small enough for quick laptop sweeps. Field overrides
    are applied on top (``N`` trims the default site list).
    """
    if name == "paper":
        base = dict(M=40, N=6, K=4, L_v=8, L_h=8)
    elif name == "desk":
        base = dict(M=8, N=4, K=4, L_v=4, L_h=4)
    else:
        raise ConfigError(f"unknown preset: {name!r}")
    base.update(overrides)
    if "irs_positions" not in base:
        n = base["N"]
        if n > len(DEFAULT_IRS_SITES):
            raise ConfigError(f"no default site list for N={n}")
        base["irs_positions"] = DEFAULT_IRS_SITES[:n]
    return ScenarioConfig(**base).validate()


# -- randomness ------------------------------------------------------------


def substream(seed: int, domain: int, drop: int = 0) -> np.random.Generator:
    """Derive an independent generator from (master seed, domain, drop).

    The split scheme is the documented triple-entropy seed sequence; the
    same triple always yields the same stream.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(domain), int(drop)]))


@dataclass(frozen=True)
class DropStreams:
    """The named sub-streams consumed by one Monte Carlo drop."""

    placement: np.random.Generator
    path_gains: np.random.Generator
    angles: np.random.Generator
    phases: np.random.Generator


def drop_streams(seed: int, drop: int = 0) -> DropStreams:
    return DropStreams(
        placement=substream(seed, STREAM_PLACEMENT, drop),
        path_gains=substream(seed, STREAM_PATH_GAINS, drop),
        angles=substream(seed, STREAM_ANGLES, drop),
        phases=substream(seed, STREAM_PHASES, drop),
    )


# -- geometry ---------------------------------------------------------------


@dataclass(frozen=True)
class Layout:
    """Realized geometry of one drop: positions, distances, boresight angles.

    Azimuths are measured in the plane via ``atan2``; elevation has no
    geometric source in a planar layout and is synthesized by the channel
    generators instead.
    """

    user_positions: np.ndarray          # (K, 2)
    dist_bs_irs: np.ndarray             # (N,)
    dist_irs_user: np.ndarray           # (N, K)
    dist_bs_user: np.ndarray            # (K,)
    aod_bs_to_irs: np.ndarray           # (N,)  departure azimuth at the array
    aod_bs_to_user: np.ndarray          # (K,)
    aoa_irs_from_bs: np.ndarray         # (N,)  arrival azimuth at the reflector
    aod_irs_to_user: np.ndarray         # (N, K)


def place_users(config: ScenarioConfig, stream: np.random.Generator) -> Layout:
    """Drop K users uniformly on the configured disc and derive geometry."""
    k = config.K
    radii = config.user_radius * np.sqrt(stream.uniform(size=k))
    angles = stream.uniform(0.0, 2.0 * np.pi, size=k)
    center = np.asarray(config.user_center, dtype=float)
    users = center + np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)

    mbs = np.asarray(config.mbs_position, dtype=float)
    irs = np.asarray(config.irs_positions, dtype=float)

    d_bi = np.linalg.norm(irs - mbs, axis=1)
    d_iu = np.linalg.norm(irs[:, None, :] - users[None, :, :], axis=2)
    d_bu = np.linalg.norm(users - mbs, axis=1)
    if not (np.all(d_bi > 0) and np.all(d_iu > 0) and np.all(d_bu > 0)):
        raise ConfigError("invariant violation: coincident nodes give zero link distance")

    def azimuth(src, dst):
        delta = np.atleast_2d(dst) - np.atleast_2d(src)
        return np.arctan2(delta[..., 1], delta[..., 0])

    aod_bs_irs = azimuth(mbs, irs)
    aod_bs_user = azimuth(mbs, users)
    aoa_irs_bs = np.arctan2(mbs[1] - irs[:, 1], mbs[0] - irs[:, 0])
    aod_irs_user = np.arctan2(
        users[None, :, 1] - irs[:, None, 1], users[None, :, 0] - irs[:, None, 0]
    )

    return Layout(
        user_positions=users,
        dist_bs_irs=d_bi,
        dist_irs_user=d_iu,
        dist_bs_user=d_bu,
        aod_bs_to_irs=aod_bs_irs,
        aod_bs_to_user=aod_bs_user,
        aoa_irs_from_bs=aoa_irs_bs,
        aod_irs_to_user=aod_irs_user,
    )
