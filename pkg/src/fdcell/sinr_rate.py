"""Per-link SINR and rate evaluation for one slot decision.

A slot decision holds, per cell, the chosen downlink UE, uplink UE (or
NONE) and the transmit powers. The evaluator charges every active
transmitter against every active receiver: downlink receivers hear all
other downlink cells plus every uplink UE; an uplink receiver (the BS)
hears residual self-interference gamma times its own downlink power,
other downlink BSs, and other cells' uplink UEs. With the FD-UE option
a UE may be scheduled in both directions at once, and gamma applies at
its own receiver in place of the (zero) UE-to-UE self gain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import GainTable

NONE = -1

MIN_SE = 0.26   # bits/s/Hz, links below this deliver nothing
MAX_SE = 6.0    # bits/s/Hz


@dataclass
class SlotDecision:
    dl_ue: np.ndarray          # (B,) global UE index or NONE
    ul_ue: np.ndarray          # (B,)
    p_dl: np.ndarray           # (B,) watts, 0 where no downlink
    p_ul: np.ndarray           # (B,) watts
    fd_ue: bool = False        # allow dl_ue == ul_ue with gamma at the UE

    def copy(self) -> "SlotDecision":
        return SlotDecision(
            self.dl_ue.copy(),
            self.ul_ue.copy(),
            self.p_dl.copy(),
            self.p_ul.copy(),
            self.fd_ue,
        )


def empty_decision(n_cells: int, fd_ue: bool = False) -> SlotDecision:
    return SlotDecision(
        dl_ue=np.full(n_cells, NONE, dtype=int),
        ul_ue=np.full(n_cells, NONE, dtype=int),
        p_dl=np.zeros(n_cells),
        p_ul=np.zeros(n_cells),
        fd_ue=fd_ue,
    )


def validate(dec: SlotDecision, g: GainTable) -> None:
    """Assert the structural invariants of a decision."""
    B = g.n_cells
    dl_on = dec.dl_ue >= 0
    ul_on = dec.ul_ue >= 0
    if not dec.fd_ue:
        both = dl_on & ul_on
        if np.any(dec.dl_ue[both] == dec.ul_ue[both]):
            raise AssertionError("half-duplex UE scheduled in both directions")
    if np.any(dec.p_dl[~dl_on] != 0) or np.any(dec.p_ul[~ul_on] != 0):
        raise AssertionError("power on an unassigned link")
    if np.any(dec.p_dl < 0) or np.any(dec.p_dl > g.p_bs_w * (1 + 1e-9)):
        raise AssertionError("downlink power out of bounds")
    if np.any(dec.p_ul < 0) or np.any(dec.p_ul > g.p_ue_w * (1 + 1e-9)):
        raise AssertionError("uplink power out of bounds")
    own = g.ue_cell[np.where(dl_on, dec.dl_ue, 0)]
    if np.any(own[dl_on] != np.arange(B)[dl_on]):
        raise AssertionError("downlink UE served by a foreign cell")
    own = g.ue_cell[np.where(ul_on, dec.ul_ue, 0)]
    if np.any(own[ul_on] != np.arange(B)[ul_on]):
        raise AssertionError("uplink UE served by a foreign cell")


def slot_link_terms(dec: SlotDecision, g: GainTable):
    """Signal and denominator power per link: (sig_d, den_d, sig_u, den_u).

    Signals are zero on inactive links; denominators always include the
    receiver noise so they stay positive.
    """
    B = g.n_cells
    idx = np.arange(B)
    dl_on = dec.dl_ue >= 0
    ul_on = dec.ul_ue >= 0
    pd = np.where(dl_on, dec.p_dl, 0.0)
    pu = np.where(ul_on, dec.p_ul, 0.0)
    r = np.where(dl_on, dec.dl_ue, 0)
    u = np.where(ul_on, dec.ul_ue, 0)

    # downlink: receiver is UE r[b]
    sig_d = pd * g.g_dl[idx, r]
    bs_to_r = g.g_dl[:, r]                       # [i, b] = BS i -> UE r[b]
    ue_to_r = g.g_ue[u][:, r]                    # [i, b] = UE u[i] -> UE r[b]
    den_d = g.noise_ue_w + pd @ bs_to_r - sig_d + pu @ ue_to_r
    if dec.fd_ue:
        same = dl_on & ul_on & (dec.dl_ue == dec.ul_ue)
        den_d = den_d + np.where(same, pu * g.gamma, 0.0)

    # uplink: receiver is BS b
    sig_u = pu * g.g_dl[idx, u]
    ue_to_b = g.g_dl[:, u]                       # [b, i] = BS b <- UE u[i]
    den_u = g.noise_bs_w + pd * g.gamma + pd @ g.g_bs + ue_to_b @ pu - sig_u
    return sig_d, den_d, sig_u, den_u


def slot_sinrs(dec: SlotDecision, g: GainTable):
    """Vector of downlink and uplink SINRs, zero on inactive links."""
    sig_d, den_d, sig_u, den_u = slot_link_terms(dec, g)
    sinr_d = np.where(dec.dl_ue >= 0, sig_d / den_d, 0.0)
    sinr_u = np.where(dec.ul_ue >= 0, sig_u / den_u, 0.0)
    return sinr_d, sinr_u


def rate_from_sinr(sinr, bandwidth_hz: float, sub_min_floor: bool = False):
    """Shannon rate with the spectral-efficiency window applied.

    Efficiency above MAX_SE is clipped; below MIN_SE the link is treated
    as outage (rate 0) unless sub_min_floor lifts it to the minimum.
    """
    se = np.log2(1.0 + np.asarray(sinr, dtype=float))
    se = np.minimum(se, MAX_SE)
    if sub_min_floor:
        se = np.maximum(se, MIN_SE)
    else:
        se = np.where(se < MIN_SE, 0.0, se)
    out = bandwidth_hz * se
    return out if out.ndim else float(out)


def slot_rates(dec: SlotDecision, g: GainTable, sub_min_floor: bool = False):
    """Downlink and uplink rate vectors for the decision, bits/second."""
    sinr_d, sinr_u = slot_sinrs(dec, g)
    rate_d = rate_from_sinr(sinr_d, g.bandwidth_hz, sub_min_floor)
    rate_u = rate_from_sinr(sinr_u, g.bandwidth_hz, sub_min_floor)
    rate_d = np.where(dec.dl_ue >= 0, rate_d, 0.0)
    rate_u = np.where(dec.ul_ue >= 0, rate_u, 0.0)
    return rate_d, rate_u


def downlink_sinr(b: int, dec: SlotDecision, g: GainTable) -> float:
    """SINR of cell b's downlink; the cell must have a downlink UE."""
    if dec.dl_ue[b] < 0:
        raise ValueError(f"cell {b} has no downlink assignment")
    return float(slot_sinrs(dec, g)[0][b])


def uplink_sinr(b: int, dec: SlotDecision, g: GainTable) -> float:
    """SINR of cell b's uplink; the cell must have an uplink UE."""
    if dec.ul_ue[b] < 0:
        raise ValueError(f"cell {b} has no uplink assignment")
    return float(slot_sinrs(dec, g)[1][b])
