"""Saleh-Valenzuela mmWave channel synthesis.

Three link families are generated: base station to user (uniform linear
array response), base station to reflector (planar-array receive response
times linear-array transmit response) and reflector to user (planar-array
response). Line-of-sight azimuths come from the layout geometry; NLOS
azimuths are uniform on [-pi/2, pi/2] and all elevations are uniform on
[-pi/4, pi/4] since the planar geometry carries no elevation information.
Per-path complex gains are circularly-symmetric Gaussian with power set by
a log-distance loss plus per-path lognormal shadowing.

Vectors are stored so that ``vec.conj()`` is the channel *row* that left-
multiplies a precoder, matching the receive-side inner products used in
the system module.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scenario import Layout, ScenarioConfig, load_config

NLOS_AZIMUTH_HALF_RANGE = np.pi / 2
ELEVATION_HALF_RANGE = np.pi / 4


@dataclass(frozen=True)
class PathLossParams:
    """Log-distance loss ``kappa = a + 10*b*log10(d) + xi`` (all dB)."""

    a: float
    b: float
    sigma_xi: float

    def __post_init__(self):
        if self.sigma_xi < 0:
            raise ValueError("sigma_xi must be >= 0")

    @classmethod
    def from_tuple(cls, trip) -> "PathLossParams":
        return cls(*map(float, trip))


def ula_response(phi: float, m: int) -> np.ndarray:
    """Normalized linear-array response: entry k = exp(j*pi*k*sin(phi))/sqrt(m)."""
    if m < 1:
        raise ValueError("array size must be >= 1")
    return np.exp(1j * np.pi * np.arange(m) * np.sin(phi)) / np.sqrt(m)


def upa_response(theta_az: float, theta_el: float, l_v: int, l_h: int) -> np.ndarray:
    """Normalized planar-array response, vertical-major vectorization.

    Entry (lv, lh) carries phase pi*(lv*sin(az)*sin(el) + lh*cos(el)) and
    lands at flat index lv*l_h + lh.
    """
    if l_v < 1 or l_h < 1:
        raise ValueError("array size must be >= 1")
    vert = np.exp(1j * np.pi * np.arange(l_v) * np.sin(theta_az) * np.sin(theta_el))
    horiz = np.exp(1j * np.pi * np.arange(l_h) * np.cos(theta_el))
    return np.kron(vert, horiz) / np.sqrt(l_v * l_h)


def sample_path_gain(
    d: float, params: PathLossParams, stream: np.random.Generator, size=None
) -> np.ndarray | complex:
    """Draw complex path gain(s) with power 10^(-kappa/10) at distance ``d``."""
    if d <= 0:
        raise ValueError(f"link distance must be > 0, got {d}")
    xi = stream.normal(0.0, params.sigma_xi, size=size)
    kappa = params.a + 10.0 * params.b * np.log10(d) + xi
    amplitude = 10.0 ** (-kappa / 20.0)
    shape = () if size is None else xi.shape
    gauss = (stream.standard_normal(shape) + 1j * stream.standard_normal(shape)) / np.sqrt(2.0)
    out = amplitude * gauss
    return complex(out) if size is None else out


def sv_vector(prefactor: float, gains: np.ndarray, responses: np.ndarray) -> np.ndarray:
    """Assemble a vector channel from per-path gains and response rows.

    ``responses`` is (paths, dim). The stored vector is the conjugate of the
    row ``prefactor * sum_l gains[l] * responses[l]``.
    """
    row = prefactor * (np.asarray(gains) @ np.asarray(responses))
    return np.conj(row)


def sv_matrix(
    prefactor: float, gains: np.ndarray, rx_responses: np.ndarray, tx_responses: np.ndarray
) -> np.ndarray:
    """Assemble a matrix channel ``prefactor * sum_l g[l] * rx[l] tx[l]^H``."""
    return prefactor * np.einsum("p,pl,pm->lm", gains, rx_responses, np.conj(tx_responses))


@dataclass
class ChannelSet:
    """One realization of every link in the scenario.

    ``h_direct[k]`` is the blocked direct vector (generated for completeness,
    excluded from the optimizer's SINR by default), ``H_bs_irs[n]`` the L-by-M
    feeder matrix of reflector n, ``h_irs_user[n, k]`` the reflector-to-user
    vector.
    """

    h_direct: np.ndarray       # (K, M)
    H_bs_irs: np.ndarray       # (N, L, M)
    h_irs_user: np.ndarray     # (N, K, L)
    layout: Layout | None = None
    config_hash: str = ""
    seed: int = 0
    drop: int = 0

    def validate(self, config: ScenarioConfig) -> "ChannelSet":
        expected = {
            "h_direct": (config.K, config.M),
            "H_bs_irs": (config.N, config.L, config.M),
            "h_irs_user": (config.N, config.K, config.L),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr.view(float))):
                raise ValueError(f"{name} contains non-finite entries")
        return self


def _los_nlos_params(config: ScenarioConfig) -> tuple[PathLossParams, PathLossParams]:
    return (
        PathLossParams.from_tuple(config.pathloss_los),
        PathLossParams.from_tuple(config.pathloss_nlos),
    )


def _path_gains(d, n_paths, los, nlos, gains_rng):
    """LOS gain for path 0, NLOS gains (same distance) for the rest."""
    first = sample_path_gain(d, los, gains_rng)
    if n_paths == 1:
        return np.array([first])
    rest = sample_path_gain(d, nlos, gains_rng, size=n_paths - 1)
    return np.concatenate([[first], rest])


def gen_direct_channel(
    layout: Layout,
    config: ScenarioConfig,
    gains_rng: np.random.Generator,
    angles_rng: np.random.Generator,
) -> np.ndarray:
    """Base-station-to-user vectors, (K, M)."""
    los, nlos = _los_nlos_params(config)
    n_p = config.n_paths_bs_user
    out = np.empty((config.K, config.M), dtype=complex)
    for k in range(config.K):
        gains = _path_gains(layout.dist_bs_user[k], n_p, los, nlos, gains_rng)
        aods = np.empty(n_p)
        aods[0] = layout.aod_bs_to_user[k]
        aods[1:] = angles_rng.uniform(-NLOS_AZIMUTH_HALF_RANGE, NLOS_AZIMUTH_HALF_RANGE, n_p - 1)
        rows = np.stack([ula_response(a, config.M) for a in aods])
        out[k] = sv_vector(np.sqrt(config.M / n_p), gains, rows)
    return out


def gen_bs_irs_channel(
    layout: Layout,
    config: ScenarioConfig,
    gains_rng: np.random.Generator,
    angles_rng: np.random.Generator,
) -> np.ndarray:
    """Base-station-to-reflector matrices, (N, L, M)."""
    los, nlos = _los_nlos_params(config)
    n_p = config.n_paths_bs_irs
    out = np.empty((config.N, config.L, config.M), dtype=complex)
    for n in range(config.N):
        gains = _path_gains(layout.dist_bs_irs[n], n_p, los, nlos, gains_rng)
        aoa_az = np.empty(n_p)
        aoa_az[0] = layout.aoa_irs_from_bs[n]
        aoa_az[1:] = angles_rng.uniform(-NLOS_AZIMUTH_HALF_RANGE, NLOS_AZIMUTH_HALF_RANGE, n_p - 1)
        aoa_el = angles_rng.uniform(-ELEVATION_HALF_RANGE, ELEVATION_HALF_RANGE, n_p)
        aod = np.empty(n_p)
        aod[0] = layout.aod_bs_to_irs[n]
        aod[1:] = angles_rng.uniform(-NLOS_AZIMUTH_HALF_RANGE, NLOS_AZIMUTH_HALF_RANGE, n_p - 1)
        rx = np.stack([upa_response(a, e, config.L_v, config.L_h) for a, e in zip(aoa_az, aoa_el)])
        tx = np.stack([ula_response(a, config.M) for a in aod])
        out[n] = sv_matrix(np.sqrt(config.M * config.L / n_p), gains, rx, tx)
    return out


def gen_irs_user_channel(
    layout: Layout,
    config: ScenarioConfig,
    gains_rng: np.random.Generator,
    angles_rng: np.random.Generator,
) -> np.ndarray:
    """Reflector-to-user vectors, (N, K, L)."""
    los, nlos = _los_nlos_params(config)
    n_p = config.n_paths_irs_user
    out = np.empty((config.N, config.K, config.L), dtype=complex)
    for n in range(config.N):
        for k in range(config.K):
            gains = _path_gains(layout.dist_irs_user[n, k], n_p, los, nlos, gains_rng)
            aod_az = np.empty(n_p)
            aod_az[0] = layout.aod_irs_to_user[n, k]
            aod_az[1:] = angles_rng.uniform(
                -NLOS_AZIMUTH_HALF_RANGE, NLOS_AZIMUTH_HALF_RANGE, n_p - 1
            )
            aod_el = angles_rng.uniform(-ELEVATION_HALF_RANGE, ELEVATION_HALF_RANGE, n_p)
            rows = np.stack(
                [upa_response(a, e, config.L_v, config.L_h) for a, e in zip(aod_az, aod_el)]
            )
            out[n, k] = sv_vector(np.sqrt(config.L / n_p), gains, rows)
    return out


def generate_channels(
    config: ScenarioConfig,
    layout: Layout,
    gains_rng: np.random.Generator,
    angles_rng: np.random.Generator,
    drop: int = 0,
) -> ChannelSet:
    """Realize every link of one drop. Draw order is fixed: direct links,
    then feeder matrices, then reflector-to-user vectors."""
    cs = ChannelSet(
        h_direct=gen_direct_channel(layout, config, gains_rng, angles_rng),
        H_bs_irs=gen_bs_irs_channel(layout, config, gains_rng, angles_rng),
        h_irs_user=gen_irs_user_channel(layout, config, gains_rng, angles_rng),
        layout=layout,
        config_hash=config.hash(),
        seed=config.seed,
        drop=drop,
    )
    return cs.validate(config)


def save_channels(path, channels: ChannelSet) -> None:
    """Dump a realization (plus provenance) for replay."""
    layout = channels.layout
    if layout is None:
        raise ValueError("cannot dump a ChannelSet without its layout")
    np.savez_compressed(
        Path(path),
        h_direct=channels.h_direct,
        H_bs_irs=channels.H_bs_irs,
        h_irs_user=channels.h_irs_user,
        config_hash=np.array(channels.config_hash),
        seed=np.array(channels.seed),
        drop=np.array(channels.drop),
        user_positions=layout.user_positions,
        dist_bs_irs=layout.dist_bs_irs,
        dist_irs_user=layout.dist_irs_user,
        dist_bs_user=layout.dist_bs_user,
        aod_bs_to_irs=layout.aod_bs_to_irs,
        aod_bs_to_user=layout.aod_bs_to_user,
        aoa_irs_from_bs=layout.aoa_irs_from_bs,
        aod_irs_to_user=layout.aod_irs_to_user,
    )


def load_channels(path) -> ChannelSet:
    with np.load(Path(path)) as data:
        layout = Layout(
            user_positions=data["user_positions"],
            dist_bs_irs=data["dist_bs_irs"],
            dist_irs_user=data["dist_irs_user"],
            dist_bs_user=data["dist_bs_user"],
            aod_bs_to_irs=data["aod_bs_to_irs"],
            aod_bs_to_user=data["aod_bs_to_user"],
            aoa_irs_from_bs=data["aoa_irs_from_bs"],
            aod_irs_to_user=data["aod_irs_to_user"],
        )
        return ChannelSet(
            h_direct=data["h_direct"],
            H_bs_irs=data["H_bs_irs"],
            h_irs_user=data["h_irs_user"],
            layout=layout,
            config_hash=str(data["config_hash"]),
            seed=int(data["seed"]),
            drop=int(data["drop"]),
        )
