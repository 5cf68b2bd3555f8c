"""Drop and timeslot orchestration for every system variant.

A drop is one random realization of node positions and shadowing,
simulated over a fixed number of 1 ms timeslots. Variants share the
drop realization through paired seeding (same seed and drop index give
the same network regardless of variant), so gain metrics compare the
same channels under different schedulers.

Variants:
  HD              synchronized single-direction slots, greedy PF
                  selection and optimized powers (even slots downlink)
  FD              hybrid selection: cells go full duplex when the
                  marginal PF utility supports it
  RR_HD / RR_FD   round-robin baselines at fixed maximum power; the FD
                  one pairs the round-robin pick with a random partner
  FD_FDUE         hybrid with full-duplex-capable UEs (a cell may put
                  one UE on both directions; the UE pays the same
                  residual self-interference factor as a BS)
  FD_EnergyAware  hybrid with a distance-weighted log-power penalty in
                  the power objective
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .channel import GainTable, build_gains, dbm_to_w, indoor_params, outdoor_params
from .errors import ConfigError
from .power_alloc import AllocConfig, allocate_with_fallback
from .scheduler import (
    DL,
    UL,
    PFState,
    RoundRobinState,
    Selection,
    hd_select_ues,
    init_state,
    round_robin_select,
    select_ues,
    update_state,
)
from .sinr_rate import SlotDecision, slot_rates, validate
from .topology import IndoorConfig, OutdoorConfig, build_indoor, build_outdoor

SLOT_DURATION_S = 1e-3    # only ratios (gains, bits/joule) depend on it
SCENARIOS = ("Indoor", "Outdoor")
VARIANTS = ("HD", "FD", "RR_HD", "RR_FD", "FD_FDUE", "FD_EnergyAware")

# mode codes in the per-slot trace
MODE_IDLE, MODE_HD_DL, MODE_HD_UL, MODE_FD = 0, 1, 2, 3
MODE_NAMES = {MODE_IDLE: "IDLE", MODE_HD_DL: "HD-DL", MODE_HD_UL: "HD-UL", MODE_FD: "FD"}

# default weight of the log-power penalty (scaled by 1/distance per link)
ENERGY_KAPPA_DEFAULT = 0.05


@dataclass
class RunConfig:
    scenario: str = "Indoor"
    variant: str = "FD"
    cancellation_db: float | None = None    # None = perfect cancellation
    slots: int = 1000
    drops: int = 5
    bandwidth_hz: float = 10e6
    beta: float = 0.99
    bs_power_dbm: float = 24.0
    ue_power_dbm: float = 23.0
    ues_per_cell: int | None = None          # scenario default when None
    energy_kappa: float = ENERGY_KAPPA_DEFAULT
    seed: int = 0

    def validated(self) -> "RunConfig":
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}, expected one of {SCENARIOS}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.slots < 1:
            raise ConfigError(f"slots must be >= 1, got {self.slots}")
        if self.drops < 1:
            raise ConfigError(f"drops must be >= 1, got {self.drops}")
        if self.bandwidth_hz <= 0:
            raise ConfigError("bandwidth_hz must be positive")
        if not 0 < self.beta < 1:
            raise ConfigError(f"beta must be in (0, 1), got {self.beta}")
        if self.bs_power_dbm < -30 or self.ue_power_dbm < -30:
            raise ConfigError("power caps below -30 dBm are out of range")
        if self.cancellation_db is not None and not np.isfinite(self.cancellation_db):
            return replace(self, cancellation_db=None)
        return self


@dataclass
class DropResult:
    """Per-drop accumulators plus the full decision trace."""

    n_cells: int
    n_ues: int
    slots: int
    slot_s: float
    bits_dl: np.ndarray        # (N,) delivered bits per UE
    bits_ul: np.ndarray
    energy_dl_j: float         # transmit energy, accumulated slot by slot
    energy_ul_j: float
    mode_counts: np.ndarray    # (4,) cells per mode summed over slots
    trace_mode: np.ndarray     # (S, B) int8 mode codes
    trace_dl_ue: np.ndarray    # (S, B) UE id or -1
    trace_ul_ue: np.ndarray
    trace_p_dl: np.ndarray     # (S, B) watts
    trace_p_ul: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def mean_rate_dl(self) -> np.ndarray:
        return self.bits_dl / (self.slots * self.slot_s)

    def mean_rate_ul(self) -> np.ndarray:
        return self.bits_ul / (self.slots * self.slot_s)

    def energy_from_trace(self):
        """Second energy ledger, recomputed from the decision trace.

        Mirrors the slot-loop accumulation order exactly so the
        double-entry comparison is == on floats, not approximate.
        """
        e_dl = 0.0
        e_ul = 0.0
        for s in range(self.slots):
            e_dl += float(self.trace_p_dl[s].sum()) * self.slot_s
            e_ul += float(self.trace_p_ul[s].sum()) * self.slot_s
        return e_dl, e_ul

    def mode_fractions(self):
        """(frac_fd, frac_hd, frac_idle) over all cell-slots."""
        total = self.slots * self.n_cells
        fd = self.mode_counts[MODE_FD] / total
        hd = (self.mode_counts[MODE_HD_DL] + self.mode_counts[MODE_HD_UL]) / total
        idle = self.mode_counts[MODE_IDLE] / total
        return float(fd), float(hd), float(idle)


def _build_network(cfg: RunConfig, topo_rng, chan_rng):
    if cfg.scenario == "Indoor":
        tcfg = IndoorConfig()
        if cfg.ues_per_cell is not None:
            tcfg = replace(tcfg, ues_per_cell=cfg.ues_per_cell)
        topo = build_indoor(tcfg, topo_rng)
        par = indoor_params()
    else:
        tcfg = OutdoorConfig()
        if cfg.ues_per_cell is not None:
            tcfg = replace(tcfg, ues_per_cell=cfg.ues_per_cell)
        topo = build_outdoor(tcfg, topo_rng)
        par = outdoor_params()
    par = replace(
        par,
        bandwidth_hz=cfg.bandwidth_hz,
        bs_power_dbm=cfg.bs_power_dbm,
        ue_power_dbm=cfg.ue_power_dbm,
    )
    g = build_gains(topo, par, chan_rng).with_cancellation(cfg.cancellation_db)
    return topo, g


def _classify(dec: SlotDecision) -> np.ndarray:
    has_dl = dec.dl_ue >= 0
    has_ul = dec.ul_ue >= 0
    mode = np.full(len(dec.dl_ue), MODE_IDLE, dtype=np.int8)
    mode[has_dl & ~has_ul] = MODE_HD_DL
    mode[~has_dl & has_ul] = MODE_HD_UL
    mode[has_dl & has_ul] = MODE_FD
    return mode


def drop_rngs(seed: int, drop_index: int):
    """Paired per-drop streams: topology, shadowing, scheduler.

    The spawn key depends only on (seed, drop), never on the variant, so
    every variant sees the same network realization for the same drop.
    """
    ss = np.random.SeedSequence(seed, spawn_key=(drop_index,))
    return [np.random.default_rng(s) for s in ss.spawn(3)]


def run_drop(cfg: RunConfig, drop_index: int) -> DropResult:
    """Simulate one drop of cfg.slots timeslots; see the module docstring."""
    cfg = cfg.validated()
    topo_rng, chan_rng, sched_rng = drop_rngs(cfg.seed, drop_index)
    topo, g = _build_network(cfg, topo_rng, chan_rng)
    B, N = topo.n_cells, topo.n_ues
    P = (g.p_bs_w, g.p_ue_w)
    dt = SLOT_DURATION_S

    st = init_state(N, cfg.bandwidth_hz, beta=cfg.beta)
    rr = RoundRobinState.fresh(B)
    alloc_cfg = AllocConfig(
        energy_kappa=cfg.energy_kappa if cfg.variant == "FD_EnergyAware" else 0.0
    )
    fd_ue = cfg.variant == "FD_FDUE"

    bits_dl = np.zeros(N)
    bits_ul = np.zeros(N)
    energy_dl = 0.0
    energy_ul = 0.0
    mode_counts = np.zeros(4, dtype=np.int64)
    trace_mode = np.zeros((cfg.slots, B), dtype=np.int8)
    trace_dl_ue = np.full((cfg.slots, B), -1, dtype=np.int32)
    trace_ul_ue = np.full((cfg.slots, B), -1, dtype=np.int32)
    trace_p_dl = np.zeros((cfg.slots, B))
    trace_p_ul = np.zeros((cfg.slots, B))
    diag_tot = {"pruned": 0, "fallbacks": 0, "nonconverged_slots": 0}

    for t in range(cfg.slots):
        direction = DL if t % 2 == 0 else UL
        if cfg.variant == "HD":
            sel = hd_select_ues(st, g, P, direction, sched_rng)
            dec, diag = allocate_with_fallback(st, sel, g, alloc_cfg)
        elif cfg.variant in ("FD", "FD_FDUE", "FD_EnergyAware"):
            sel = select_ues(st, g, P, sched_rng, fd_ue=fd_ue)
            dec, diag = allocate_with_fallback(st, sel, g, alloc_cfg)
        elif cfg.variant == "RR_HD":
            dec = round_robin_select(rr, "HD", direction, g, P, sched_rng)
            diag = {}
        else:  # RR_FD
            dec = round_robin_select(rr, "FD", direction, g, P, sched_rng)
            diag = {}
        validate(dec, g)

        rate_dl, rate_ul = slot_rates(dec, g)
        on = dec.dl_ue >= 0
        np.add.at(bits_dl, dec.dl_ue[on], rate_dl[on] * dt)
        on = dec.ul_ue >= 0
        np.add.at(bits_ul, dec.ul_ue[on], rate_ul[on] * dt)
        energy_dl += float(dec.p_dl.sum()) * dt
        energy_ul += float(dec.p_ul.sum()) * dt

        mode = _classify(dec)
        mode_counts += np.bincount(mode, minlength=4)
        trace_mode[t] = mode
        trace_dl_ue[t] = dec.dl_ue
        trace_ul_ue[t] = dec.ul_ue
        trace_p_dl[t] = dec.p_dl
        trace_p_ul[t] = dec.p_ul
        if diag:
            diag_tot["pruned"] += diag.get("pruned", 0)
            diag_tot["fallbacks"] += diag.get("fallbacks", 0)
            if diag.get("status") not in ("converged", "idle"):
                diag_tot["nonconverged_slots"] += 1

        st = update_state(st, dec, rate_dl, rate_ul)

    return DropResult(
        n_cells=B,
        n_ues=N,
        slots=cfg.slots,
        slot_s=dt,
        bits_dl=bits_dl,
        bits_ul=bits_ul,
        energy_dl_j=energy_dl,
        energy_ul_j=energy_ul,
        mode_counts=mode_counts,
        trace_mode=trace_mode,
        trace_dl_ue=trace_dl_ue,
        trace_ul_ue=trace_ul_ue,
        trace_p_dl=trace_p_dl,
        trace_p_ul=trace_p_ul,
        diagnostics=diag_tot,
    )


def run_variant(cfg: RunConfig, jobs: int = 1) -> list:
    """All drops for one config; drops are independent and parallelizable."""
    cfg = cfg.validated()
    if jobs <= 1 or cfg.drops == 1:
        return [run_drop(cfg, d) for d in range(cfg.drops)]
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(run_drop, cfg, d) for d in range(cfg.drops)]
        return [f.result() for f in futures]


@dataclass
class DirectionMetrics:
    mean_tput_bps: float
    edge5_bps: float
    ee_bits_per_joule: float
    gain_pct: float | None = None
    gain_median_pct: float | None = None


@dataclass
class Metrics:
    scenario: str
    variant: str
    cancellation_db: float | None
    n_drops: int
    dl: DirectionMetrics
    ul: DirectionMetrics
    frac_fd: float
    frac_hd: float
    frac_idle: float
    per_ue_dl_bps: np.ndarray    # pooled across drops, for CDF files
    per_ue_ul_bps: np.ndarray


def _pool_rates(results):
    dl = np.concatenate([r.mean_rate_dl() for r in results])
    ul = np.concatenate([r.mean_rate_ul() for r in results])
    return dl, ul


def aggregate(cfg: RunConfig, results: list, baseline: list | None = None) -> Metrics:
    """Reduce drop results to the reported metrics.

    Gains compare pooled per-UE mean throughputs against the baseline
    runs (ratio of means, plus ratio of medians for robustness).
    """
    dl, ul = _pool_rates(results)
    e_dl = sum(r.energy_dl_j for r in results)
    e_ul = sum(r.energy_ul_j for r in results)
    bits_dl = sum(float(r.bits_dl.sum()) for r in results)
    bits_ul = sum(float(r.bits_ul.sum()) for r in results)
    fracs = np.array([r.mode_fractions() for r in results]).mean(axis=0)

    def direction(rates, bits, energy, base_rates):
        gain = gain_med = None
        if base_rates is not None and base_rates.mean() > 0:
            gain = (rates.mean() / base_rates.mean() - 1.0) * 100.0
            med = np.median(base_rates)
            if med > 0:
                gain_med = (np.median(rates) / med - 1.0) * 100.0
        return DirectionMetrics(
            mean_tput_bps=float(rates.mean()),
            edge5_bps=float(np.percentile(rates, 5.0)),
            ee_bits_per_joule=bits / energy if energy > 0 else float("inf"),
            gain_pct=gain,
            gain_median_pct=gain_med,
        )

    base_dl = base_ul = None
    if baseline is not None:
        base_dl, base_ul = _pool_rates(baseline)
    return Metrics(
        scenario=cfg.scenario,
        variant=cfg.variant,
        cancellation_db=cfg.cancellation_db,
        n_drops=len(results),
        dl=direction(dl, bits_dl, e_dl, base_dl),
        ul=direction(ul, bits_ul, e_ul, base_ul),
        frac_fd=float(fracs[0]),
        frac_hd=float(fracs[1]),
        frac_idle=float(fracs[2]),
        per_ue_dl_bps=np.sort(dl),
        per_ue_ul_bps=np.sort(ul),
    )


METRICS_COLUMNS = (
    "scenario,variant,cancellation_db,direction,mean_tput_bps,gain_pct,"
    "edge5_bps,ee_bits_per_joule,frac_fd,frac_hd,frac_idle"
)


def _canc_str(c) -> str:
    return "inf" if c is None else f"{c:g}"


def persist(metrics, out_dir: str, config: dict | None = None) -> dict:
    """Write metrics.csv, per-variant CDF files, and a run manifest.

    Accepts one Metrics or a list. Returns {filename: sha256} for the
    files written; the manifest stores the same map as a content hash.
    """
    if not isinstance(metrics, (list, tuple)):
        metrics = [metrics]
    os.makedirs(out_dir, exist_ok=True)
    written = {}

    lines = [METRICS_COLUMNS]
    for m in metrics:
        for direction, d in ((DL, m.dl), (UL, m.ul)):
            gain = "" if d.gain_pct is None else f"{d.gain_pct:.6g}"
            lines.append(
                f"{m.scenario},{m.variant},{_canc_str(m.cancellation_db)},{direction},"
                f"{d.mean_tput_bps:.6g},{gain},{d.edge5_bps:.6g},"
                f"{d.ee_bits_per_joule:.6g},{m.frac_fd:.6g},{m.frac_hd:.6g},{m.frac_idle:.6g}"
            )
    path = os.path.join(out_dir, "metrics.csv")
    data = ("\n".join(lines) + "\n").encode()
    with open(path, "wb") as f:
        f.write(data)
    written["metrics.csv"] = hashlib.sha256(data).hexdigest()

    multi = len({m.variant for m in metrics}) < len(metrics)
    for m in metrics:
        tag = f"{m.variant}_{_canc_str(m.cancellation_db)}" if multi else m.variant
        name = f"cdf_{tag}.csv"
        rows = ["dl_bps,ul_bps"]
        for a, b in zip(m.per_ue_dl_bps, m.per_ue_ul_bps):
            rows.append(f"{a:.6g},{b:.6g}")
        data = ("\n".join(rows) + "\n").encode()
        with open(os.path.join(out_dir, name), "wb") as f:
            f.write(data)
        written[name] = hashlib.sha256(data).hexdigest()

    manifest = {
        "config": config or {},
        "results": [
            {
                "scenario": m.scenario,
                "variant": m.variant,
                "cancellation_db": m.cancellation_db,
                "n_drops": m.n_drops,
            }
            for m in metrics
        ],
        "files": written,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return written


def dump_trace(result: DropResult, path: str) -> None:
    """Per-slot, per-cell decision log (mode, UE ids, powers in dBm)."""

    def dbm(w):
        return -np.inf if w <= 0 else 10.0 * np.log10(w * 1e3)

    with open(path, "w") as f:
        f.write("slot,cell,mode,dl_ue,ul_ue,p_dl_dbm,p_ul_dbm\n")
        for s in range(result.slots):
            for b in range(result.n_cells):
                f.write(
                    f"{s},{b},{MODE_NAMES[int(result.trace_mode[s, b])]},"
                    f"{int(result.trace_dl_ue[s, b])},{int(result.trace_ul_ue[s, b])},"
                    f"{dbm(result.trace_p_dl[s, b]):.3f},{dbm(result.trace_p_ul[s, b]):.3f}\n"
                )


def config_dict(cfg: RunConfig) -> dict:
    d = asdict(cfg)
    d["cancellation_db"] = _canc_str(cfg.cancellation_db)
    return d
