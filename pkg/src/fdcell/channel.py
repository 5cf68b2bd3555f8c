"""Link budgets: LOS models, pathloss, shadowing, noise, antenna caps.

Distances are kilometers inside the pathloss/LOS formulas and meters
everywhere else. Gains are linear power ratios; a gain table built here
is the single channel input consumed by the SINR and scheduling layers.
Shadowing is drawn once per unordered node pair so links are reciprocal.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .topology import INDOOR_GRID, NetworkTopology, pairwise_distance

BS_BS = "BS_BS"
BS_UE = "BS_UE"
UE_UE = "UE_UE"

# minimum propagation distance fed into the loss formulas (km)
MIN_DIST_KM = 1e-3


def los_probability_indoor(r_km):
    """LOS probability for a link inside one room."""
    r = np.asarray(r_km, dtype=float)
    if np.any(r < 0):
        raise ValueError("distance must be non-negative")
    p = np.where(
        r <= 0.018,
        1.0,
        np.where(r < 0.037, np.exp(-(r - 0.018) / 0.027), 0.5),
    )
    return p if p.ndim else float(p)


def los_probability_outdoor(r_km):
    """LOS probability between outdoor nodes."""
    r = np.asarray(r_km, dtype=float)
    if np.any(r < 0):
        raise ValueError("distance must be non-negative")
    # below 1 mm the formula is singular; use its limit value 1
    r = np.maximum(r, 1e-6)
    p = (
        0.5
        - np.minimum(0.5, 5.0 * np.exp(-0.156 / r))
        + np.minimum(0.5, 5.0 * np.exp(-r / 0.03))
    )
    return p if p.ndim else float(p)


def _checked_log10_km(r_km):
    r = np.asarray(r_km, dtype=float)
    if np.any(r <= 0):
        raise ValueError("distance must be positive")
    return r, np.log10(r)


def pathloss_indoor_intra(r_km, los):
    """Same-room pathloss in dB."""
    _, lg = _checked_log10_km(r_km)
    pl = np.where(np.asarray(los, bool), 89.5 + 16.9 * lg, 147.4 + 43.3 * lg)
    return pl if pl.ndim else float(pl)


def pathloss_indoor_inter(r_km):
    """Room-to-room pathloss in dB, before wall penetration."""
    _, lg = _checked_log10_km(r_km)
    pl = np.maximum(131.1 + 42.8 * lg, 147.4 + 43.3 * lg)
    return pl if pl.ndim else float(pl)


def pathloss_outdoor(kind: str, r_km, los=True):
    """Outdoor pathloss in dB for a link of the given endpoint kinds."""
    r, lg = _checked_log10_km(r_km)
    if kind == BS_BS:
        los_pl = np.where(r < 2.0 / 3.0, 89.5 + 16.9 * lg, 101.9 + 40.0 * lg)
        pl = np.where(np.asarray(los, bool), los_pl, 169.36 + 40.0 * lg)
    elif kind == BS_UE:
        pl = np.where(np.asarray(los, bool), 103.8 + 20.9 * lg, 145.4 + 37.5 * lg)
    elif kind == UE_UE:
        # distance-switched, no LOS state
        pl = np.where(r <= 0.05, 98.45 + 20.0 * lg, 175.78 + 40.0 * lg)
    else:
        raise ConfigError(f"unknown outdoor link kind {kind!r}")
    return pl if pl.ndim else float(pl)


def noise_power_w(bandwidth_hz: float, noise_figure_db: float) -> float:
    """Thermal noise power in watts over the given bandwidth."""
    dbm = -174.0 + 10.0 * np.log10(bandwidth_hz) + noise_figure_db
    return float(10.0 ** (dbm / 10.0 - 3.0))


def dbm_to_w(dbm: float) -> float:
    return float(10.0 ** (dbm / 10.0 - 3.0))


@dataclass(frozen=True)
class ScenarioParams:
    bandwidth_hz: float = 10e6
    bs_power_dbm: float = 24.0
    ue_power_dbm: float = 23.0
    bs_noise_figure_db: float = 8.0
    ue_noise_figure_db: float = 9.0
    wall_loss_db: float = 20.0
    shadow_los_db: float = 3.0       # BS-UE and indoor intra LOS
    shadow_nlos_db: float = 4.0      # BS-UE and indoor NLOS / inter-room
    shadow_bs_bs_db: float = 6.0     # outdoor BS-BS only
    shadow_ue_ue_db: float = 4.0     # outdoor UE-UE only


def indoor_params() -> ScenarioParams:
    return ScenarioParams(bs_noise_figure_db=8.0)


def outdoor_params() -> ScenarioParams:
    return ScenarioParams(bs_noise_figure_db=13.0)


@dataclass
class GainTable:
    """Linear channel gains plus the radio constants the scheduler needs."""

    g_dl: np.ndarray          # (B, N) BS <-> UE, reciprocal
    g_bs: np.ndarray          # (B, B) BS <-> BS, diagonal zero
    g_ue: np.ndarray          # (N, N) UE <-> UE, diagonal zero
    dist_bs_ue_m: np.ndarray  # (B, N)
    ue_cell: np.ndarray       # (N,) owning cell per UE
    cell_ue_ids: list         # per-cell arrays of UE indices
    noise_bs_w: float
    noise_ue_w: float
    p_bs_w: float
    p_ue_w: float
    bandwidth_hz: float
    gamma: float = 0.0        # residual self-interference power ratio

    @property
    def n_cells(self) -> int:
        return self.g_bs.shape[0]

    @property
    def n_ues(self) -> int:
        return self.g_ue.shape[0]

    def with_cancellation(self, cancellation_db) -> "GainTable":
        """Copy sharing the gain arrays, with gamma = 10^(-C/10).

        None or +inf cancellation means perfect suppression (gamma 0).
        """
        if cancellation_db is None or np.isinf(cancellation_db):
            return replace(self, gamma=0.0)
        return replace(self, gamma=float(10.0 ** (-cancellation_db / 10.0)))


def _gain_from_db(loss_db: np.ndarray) -> np.ndarray:
    return 10.0 ** (-loss_db / 10.0)


def _symmetric_normal(rng: np.random.Generator, n: int) -> np.ndarray:
    """Unit normal per unordered pair, mirrored across the diagonal."""
    draw = rng.standard_normal((n, n))
    upper = np.triu(draw, k=1)
    return upper + upper.T


def _symmetric_uniform(rng: np.random.Generator, n: int) -> np.ndarray:
    draw = rng.random((n, n))
    upper = np.triu(draw, k=1)
    return upper + upper.T


def _indoor_pair_loss(
    topo: NetworkTopology,
    params: ScenarioParams,
    dist_m: np.ndarray,
    walls: np.ndarray,
    los_u: np.ndarray,
    shadow_n: np.ndarray,
) -> np.ndarray:
    """Loss in dB for indoor links given pre-drawn uniforms and normals."""
    r = np.maximum(dist_m / 1000.0, MIN_DIST_KM)
    same_room = walls == 0
    los = los_u < los_probability_indoor(r)
    intra = pathloss_indoor_intra(r, los)
    inter = pathloss_indoor_inter(r) + params.wall_loss_db * walls
    sigma = np.where(
        same_room,
        np.where(los, params.shadow_los_db, params.shadow_nlos_db),
        params.shadow_nlos_db,
    )
    return np.where(same_room, intra, inter) + sigma * shadow_n


def _outdoor_pair_loss(
    kind: str,
    params: ScenarioParams,
    dist_m: np.ndarray,
    los_u: np.ndarray,
    shadow_n: np.ndarray,
) -> np.ndarray:
    r = np.maximum(dist_m / 1000.0, MIN_DIST_KM)
    los = los_u < los_probability_outdoor(r)
    pl = pathloss_outdoor(kind, r, los)
    if kind == BS_BS:
        sigma = np.full(pl.shape, params.shadow_bs_bs_db)
    elif kind == UE_UE:
        sigma = np.full(pl.shape, params.shadow_ue_ue_db)
    else:
        sigma = np.where(los, params.shadow_los_db, params.shadow_nlos_db)
    return pl + sigma * shadow_n


def build_gains(
    topo: NetworkTopology, params: ScenarioParams, rng: np.random.Generator
) -> GainTable:
    """Draw shadowing and LOS states and assemble the full gain table.

    Draw order is fixed (BS-UE, BS-BS, UE-UE; uniforms before normals in
    each block) so a seeded generator reproduces the same channel.
    """
    bs = topo.bs_positions()
    ue = topo.ue_positions()
    B, N = len(bs), len(ue)
    d_bu, w_bu = pairwise_distance(topo, bs, ue)
    d_bb, w_bb = pairwise_distance(topo, bs, bs)
    d_uu, w_uu = pairwise_distance(topo, ue, ue)

    los_bu = rng.random((B, N))
    sh_bu = rng.standard_normal((B, N))
    los_bb = _symmetric_uniform(rng, B)
    sh_bb = _symmetric_normal(rng, B)
    los_uu = _symmetric_uniform(rng, N)
    sh_uu = _symmetric_normal(rng, N)

    if topo.layout == INDOOR_GRID:
        loss_bu = _indoor_pair_loss(topo, params, d_bu, w_bu, los_bu, sh_bu)
        loss_bb = _indoor_pair_loss(topo, params, d_bb, w_bb, los_bb, sh_bb)
        loss_uu = _indoor_pair_loss(topo, params, d_uu, w_uu, los_uu, sh_uu)
    else:
        loss_bu = _outdoor_pair_loss(BS_UE, params, d_bu, los_bu, sh_bu)
        loss_bb = _outdoor_pair_loss(BS_BS, params, d_bb, los_bb, sh_bb)
        loss_uu = _outdoor_pair_loss(UE_UE, params, d_uu, los_uu, sh_uu)

    g_dl = _gain_from_db(loss_bu)
    g_bs = _gain_from_db(loss_bb)
    g_ue = _gain_from_db(loss_uu)
    np.fill_diagonal(g_bs, 0.0)
    np.fill_diagonal(g_ue, 0.0)

    return GainTable(
        g_dl=g_dl,
        g_bs=g_bs,
        g_ue=g_ue,
        dist_bs_ue_m=d_bu,
        ue_cell=topo.ue_cell_index(),
        cell_ue_ids=topo.cell_ue_ids(),
        noise_bs_w=noise_power_w(params.bandwidth_hz, params.bs_noise_figure_db),
        noise_ue_w=noise_power_w(params.bandwidth_hz, params.ue_noise_figure_db),
        p_bs_w=dbm_to_w(params.bs_power_dbm),
        p_ue_w=dbm_to_w(params.ue_power_dbm),
        bandwidth_hz=params.bandwidth_hz,
    )


def node_gain_matrix(gains: GainTable) -> np.ndarray:
    """Full (B+N) x (B+N) linear gain matrix, nodes ordered BSs then UEs."""
    B, N = gains.n_cells, gains.n_ues
    m = np.zeros((B + N, B + N))
    m[:B, :B] = gains.g_bs
    m[:B, B:] = gains.g_dl
    m[B:, :B] = gains.g_dl.T
    m[B:, B:] = gains.g_ue
    return m


def dump_csv(gains: GainTable, path: str) -> None:
    """Matrix dump: row = source node, column = destination, linear gain."""
    np.savetxt(path, node_gain_matrix(gains), delimiter=",")
