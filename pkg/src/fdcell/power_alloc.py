"""Transmit-power optimization for a fixed UE selection.

The weighted sum-rate maximization over powers is a signomial problem:
each scheduled link contributes ((interference+noise)/(interference+
noise+signal))^w to a product objective that should be minimized. The
denominators are condensed to monomials at the current iterate (AM-GM),
which turns every factor into posynomial/monomial; in log space that is
a convex weighted log-sum-exp minimization over the power box, solved
with a projected Newton. Re-condensing at each new iterate yields a
monotone successive approximation that stops once the power vector
moves less than epsilon.

Every monomial in these problems is either a constant (noise) or linear
in a single power, so instead of generic exponent matrices the problem
stores one variable index per term; values, gradients, Hessians and the
condensation reduce to gather/scatter operations.

The allocator wraps the loop with the scheduler-facing policy: start at
maximum power, prune the weakest selection on solver failure, zero out
links parked at the numerical floor, never return a point worse than
the starting one, and finally shed the power that only overshoots the
spectral-efficiency cap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import GainTable
from .errors import ConfigError
from .gp_core import (
    STATUS_CONVERGED,
    STATUS_MAX_ITER,
    Monomial,
    Posynomial,
    minimize_box,
)
from .scheduler import DL, UL, PFState, Selection, chi
from .sinr_rate import MAX_SE, NONE, SlotDecision, slot_rates, slot_sinrs

POWER_FLOOR_RATIO = 1e-6      # floor = ratio * cap, GP needs positive vars
SE_CAP_SINR = 2.0**MAX_SE - 1.0


@dataclass
class AllocConfig:
    energy_kappa: float = 0.0       # > 0 enables the log-power penalty
    epsilon: float | None = None    # SP termination on ||P_s - P_{s-1}||_2
    max_outer: int = 30
    inner_tol: float = 1e-8
    inner_max_iter: int = 200
    trim_se_cap: bool = True
    safeguard: bool = True


def pf_weights(st: PFState, selection: Selection):
    """Per-link rate weights (1-beta)/(beta * avg * ln 10), zero if idle."""
    dec = selection.decision
    b = st.beta
    w_dl = np.zeros(len(dec.dl_ue))
    w_ul = np.zeros(len(dec.ul_ue))
    on = dec.dl_ue >= 0
    w_dl[on] = (1.0 - b) / (b * st.avg_dl[dec.dl_ue[on]] * np.log(10.0))
    on = dec.ul_ue >= 0
    w_ul[on] = (1.0 - b) / (b * st.avg_ul[dec.ul_ue[on]] * np.log(10.0))
    return w_dl, w_ul


def _lse_rows(idx: np.ndarray, c: np.ndarray, y: np.ndarray):
    """Row-wise lse and softmax of z[l,m] = y[idx[l,m]] + c[l,m].

    idx entries of -1 denote constant terms; padded entries carry
    c = -inf and drop out of the softmax.
    """
    yx = np.append(y, 0.0)
    z = yx[idx] + c
    m = z.max(axis=1)
    e = np.exp(z - m[:, None])
    s = e.sum(axis=1)
    return m + np.log(s), e / s[:, None]


class LinkLseObjective:
    """F(y) = sum_l w_l * lse_l(y) + lin . y + const over one-hot terms."""

    def __init__(self, idx, c, w, lin, const=0.0):
        self.idx = idx              # (L, M) with -1 for constant rows
        self.c = c                  # (L, M), -inf padded
        self.w = w                  # (L,)
        self.lin = lin              # (n,)
        self.const = const
        self.n = len(lin)
        L, M = idx.shape
        self._rows = np.repeat(np.arange(L), M)

    def __call__(self, y, need_hess=True):
        lse, p = _lse_rows(self.idx, self.c, y)
        val = float(self.w @ lse + self.lin @ y + self.const)
        wp = self.w[:, None] * p
        acc = np.bincount(self.idx.ravel() + 1, weights=wp.ravel(), minlength=self.n + 2)
        grad = acc[1 : self.n + 1] + self.lin
        if not need_hess:
            return val, grad, None
        G = np.zeros((len(self.w), self.n + 1))
        np.add.at(G, (self._rows, self.idx.ravel()), p.ravel())
        G = G[:, : self.n]
        H = np.diag(acc[1 : self.n + 1]) - (G * self.w[:, None]).T @ G
        return val, grad, H


@dataclass
class PowerProblem:
    """Per-slot power problem over the active links.

    Variable order: downlink links by cell, then uplink links by cell.
    num holds the interference+noise terms of each link as (variable
    index, log coefficient) rows; den additionally has the signal term.
    `lin` carries the energy penalty exponents (zero when plain).
    """

    cells_dl: np.ndarray
    cells_ul: np.ndarray
    ues_dl: np.ndarray
    ues_ul: np.ndarray
    w: np.ndarray               # (L,) rescaled weights
    w_scale: float              # multiply w by this to recover the raw weights
    idx_num: np.ndarray         # (L, M) int
    c_num: np.ndarray           # (L, M)
    idx_den: np.ndarray         # (L, M+1)
    c_den: np.ndarray
    lin: np.ndarray             # (n,) energy penalty in log space (rescaled)
    p_max: np.ndarray           # (n,)
    p_floor: np.ndarray         # (n,)
    epsilon: float
    gains: GainTable
    energy_kappa: float = 0.0

    @property
    def n_vars(self) -> int:
        return len(self.p_max)

    def link_labels(self):
        return [(int(c), DL) for c in self.cells_dl] + [(int(c), UL) for c in self.cells_ul]

    def true_objective(self, p: np.ndarray) -> float:
        """Weighted log objective at powers p (lower is better)."""
        y = np.log(p)
        lse_n, _ = _lse_rows(self.idx_num, self.c_num, y)
        lse_d, _ = _lse_rows(self.idx_den, self.c_den, y)
        return float(self.w @ (lse_n - lse_d) + self.lin @ y)


def build_power_problem(
    st: PFState,
    selection: Selection,
    g: GainTable,
    cfg: AllocConfig = AllocConfig(),
) -> PowerProblem | None:
    """Assemble the SP arrays for the selection; None if nothing is active."""
    if cfg.energy_kappa < 0:
        raise ConfigError(f"energy_kappa must be non-negative, got {cfg.energy_kappa}")
    dec = selection.decision
    cells_dl = np.where(dec.dl_ue >= 0)[0]
    cells_ul = np.where(dec.ul_ue >= 0)[0]
    n = len(cells_dl) + len(cells_ul)
    if n == 0:
        return None
    ues_dl = dec.dl_ue[cells_dl]
    ues_ul = dec.ul_ue[cells_ul]
    var_of_dl = {int(c): i for i, c in enumerate(cells_dl)}
    var_of_ul = {int(c): len(cells_dl) + i for i, c in enumerate(cells_ul)}

    w_dl, w_ul = pf_weights(st, selection)
    w = np.concatenate([w_dl[cells_dl], w_ul[cells_ul]])
    w_scale = float(w.max())
    w = w / w_scale

    rows_per_link = []
    for r in ues_dl:                      # downlink receivers
        rows = [(-1, g.noise_ue_w)]
        for i in cells_dl:
            if g.ue_cell[r] != i:
                rows.append((var_of_dl[int(i)], g.g_dl[i, r]))
        for i, u in zip(cells_ul, ues_ul):
            if dec.fd_ue and u == r:
                coeff = g.gamma         # own receiver residual, not UE-UE gain
            else:
                coeff = g.g_ue[u, r]
            if coeff > 0:
                rows.append((var_of_ul[int(i)], coeff))
        rows_per_link.append(rows)
    for b, u in zip(cells_ul, ues_ul):    # uplink receivers (the BSs)
        rows = [(-1, g.noise_bs_w)]
        if g.gamma > 0 and int(b) in var_of_dl:
            rows.append((var_of_dl[int(b)], g.gamma))
        for i in cells_dl:
            if i != b and g.g_bs[i, b] > 0:
                rows.append((var_of_dl[int(i)], g.g_bs[i, b]))
        for i, ui in zip(cells_ul, ues_ul):
            if i != b and g.g_dl[b, ui] > 0:
                rows.append((var_of_ul[int(i)], g.g_dl[b, ui]))
        rows_per_link.append(rows)

    signal = [
        (var_of_dl[int(c)], g.g_dl[c, r]) for c, r in zip(cells_dl, ues_dl)
    ] + [
        (var_of_ul[int(c)], g.g_dl[c, u]) for c, u in zip(cells_ul, ues_ul)
    ]

    L = n
    M = max(len(r) for r in rows_per_link)
    idx_num = np.full((L, M), -1, dtype=int)
    c_num = np.full((L, M), -np.inf)
    idx_den = np.full((L, M + 1), -1, dtype=int)
    c_den = np.full((L, M + 1), -np.inf)
    for l, rows in enumerate(rows_per_link):
        for m, (var, coeff) in enumerate(rows):
            idx_num[l, m] = var
            c_num[l, m] = np.log(coeff)
        idx_den[l, : len(rows)] = idx_num[l, : len(rows)]
        c_den[l, : len(rows)] = c_num[l, : len(rows)]
        var, coeff = signal[l]
        idx_den[l, len(rows)] = var
        c_den[l, len(rows)] = np.log(coeff)

    lin = np.zeros(n)
    if cfg.energy_kappa > 0:
        dist = np.concatenate(
            [
                g.dist_bs_ue_m[cells_dl, ues_dl],
                g.dist_bs_ue_m[cells_ul, ues_ul],
            ]
        )
        c_energy = cfg.energy_kappa / np.maximum(dist, 1.0)
        # product form: each penalty is the monomial factor p^(c ln2 / W)
        lin = c_energy * np.log(2.0) / g.bandwidth_hz / w_scale

    p_max = np.concatenate(
        [np.full(len(cells_dl), g.p_bs_w), np.full(len(cells_ul), g.p_ue_w)]
    )
    eps = cfg.epsilon
    if eps is None:
        eps = 1e-3 * np.sqrt(2.0 * g.n_cells) * float(p_max.max())
    return PowerProblem(
        cells_dl=cells_dl,
        cells_ul=cells_ul,
        ues_dl=ues_dl,
        ues_ul=ues_ul,
        w=w,
        w_scale=w_scale,
        idx_num=idx_num,
        c_num=c_num,
        idx_den=idx_den,
        c_den=c_den,
        lin=lin,
        p_max=p_max,
        p_floor=POWER_FLOOR_RATIO * p_max,
        epsilon=float(eps),
        gains=g,
        energy_kappa=cfg.energy_kappa,
    )


def _rows_to_posynomial(idx: np.ndarray, c: np.ndarray) -> Posynomial:
    terms = []
    for var, logc in zip(idx, c):
        if np.isneginf(logc):
            continue
        exps = {} if var < 0 else {int(var): 1.0}
        terms.append(Monomial(float(np.exp(logc)), exps))
    return Posynomial(terms)


@dataclass
class SPObjective:
    """Contract view of the objective: prod_l (num_l/den_l)^(w_l) * prod p^lin."""

    num: list
    den: list
    w: np.ndarray
    lin: np.ndarray
    w_scale: float

    def value(self, p) -> float:
        p = np.asarray(p, dtype=float)
        out = float(self.lin @ np.log(p))
        for n_, d_, w_ in zip(self.num, self.den, self.w):
            out += w_ * (np.log(n_.value(p)) - np.log(d_.value(p)))
        return float(np.exp(out))


def build_sp_objective(prob: PowerProblem) -> SPObjective:
    """Posynomial-ratio form of the slot objective (for checks and dumps)."""
    num = [_rows_to_posynomial(prob.idx_num[l], prob.c_num[l]) for l in range(len(prob.w))]
    den = [_rows_to_posynomial(prob.idx_den[l], prob.c_den[l]) for l in range(len(prob.w))]
    return SPObjective(num, den, prob.w.copy(), prob.lin.copy(), prob.w_scale)


def energy_aware_objective(prob: PowerProblem) -> SPObjective:
    """The log-power-penalized objective; penalty must be configured."""
    if prob.energy_kappa < 0:
        raise ConfigError("energy penalty must be non-negative")
    return build_sp_objective(prob)


def _condense_den(prob: PowerProblem, y: np.ndarray):
    """AM-GM condensation of every denominator at the current iterate.

    Returns (a, k) with ln den_l(y') >= a_l . y' + k_l for all y',
    tight at y.
    """
    _, alpha = _lse_rows(prob.idx_den, prob.c_den, y)
    L, n = alpha.shape[0], prob.n_vars
    a = np.zeros((L, n + 1))
    rows = np.repeat(np.arange(L), alpha.shape[1])
    np.add.at(a, (rows, prob.idx_den.ravel()), alpha.ravel())
    a = a[:, :n]
    pos = alpha > 0
    cc = np.where(pos, prob.c_den - np.log(np.where(pos, alpha, 1.0)), 0.0)
    k = np.einsum("lm,lm->l", alpha, cc)
    return a, k


def solve_power_sp(prob: PowerProblem, P0: np.ndarray, cfg: AllocConfig = AllocConfig()):
    """Successive condensation loop; returns (powers, status, info).

    info carries the true-objective trajectory (one entry per outer
    iteration, evaluated at that iteration's solution) and the iterate
    step norms, for diagnostics and the monotonicity tests.
    """
    lo = np.log(prob.p_floor)
    hi = np.log(prob.p_max)
    y = np.clip(np.log(np.asarray(P0, dtype=float)), lo, hi)
    trajectory = [prob.true_objective(np.exp(y))]
    steps = []
    status = STATUS_CONVERGED
    outer = 0
    for outer in range(1, cfg.max_outer + 1):
        a, k = _condense_den(prob, y)
        objective = LinkLseObjective(
            prob.idx_num,
            prob.c_num,
            prob.w,
            lin=prob.lin - prob.w @ a,
            const=-float(prob.w @ k),
        )
        y_new, inner_status, _ = minimize_box(
            objective, y, lo, hi, tol=cfg.inner_tol, max_iter=cfg.inner_max_iter
        )
        step = float(np.linalg.norm(np.exp(y_new) - np.exp(y)))
        steps.append(step)
        y = y_new
        trajectory.append(prob.true_objective(np.exp(y)))
        if inner_status != STATUS_CONVERGED:
            status = inner_status
            break
        if step < prob.epsilon:
            break
    else:
        status = STATUS_MAX_ITER
    info = {"outer_iterations": outer, "trajectory": trajectory, "steps": steps}
    return np.exp(y), status, info


def _apply_powers(dec: SlotDecision, prob: PowerProblem, p: np.ndarray) -> SlotDecision:
    out = dec.copy()
    out.p_dl[prob.cells_dl] = p[: len(prob.cells_dl)]
    out.p_ul[prob.cells_ul] = p[len(prob.cells_dl):]
    return out


def _extract_powers(dec: SlotDecision, prob: PowerProblem) -> np.ndarray:
    return np.concatenate([dec.p_dl[prob.cells_dl], dec.p_ul[prob.cells_ul]])


def _floor_prune(dec: SlotDecision, prob: PowerProblem, skip=None) -> SlotDecision:
    """Links parked at the numerical floor carry no real transmission.

    `skip` marks variables pinned by the cap conditioning; those run
    below the floor legitimately and are never pruned.
    """
    out = dec.copy()
    tol = 1.0 + 1e-9
    for i, c in enumerate(prob.cells_dl):
        if skip is not None and skip[i]:
            continue
        if out.p_dl[c] <= prob.p_floor[i] * tol:
            out.p_dl[c] = 0.0
            out.dl_ue[c] = NONE
    off = len(prob.cells_dl)
    for i, c in enumerate(prob.cells_ul):
        if skip is not None and skip[off + i]:
            continue
        if out.p_ul[c] <= prob.p_floor[off + i] * tol:
            out.p_ul[c] = 0.0
            out.ul_ue[c] = NONE
    return out


def _reduce_problem(prob: PowerProblem, fixed_p: np.ndarray, fixed: np.ndarray):
    """Condition the problem on the pinned variables.

    Pinned links keep transmitting at fixed_p: their rate rows leave the
    objective (the cap makes them constant) and every reference to them
    in the remaining rows folds into the row's constant coefficient.
    Returns (sub_problem, free_mask) or (None, free_mask) when nothing
    is left to optimize.
    """
    free = ~fixed
    if not free.any():
        return None, free
    n_free = int(free.sum())
    new_index = np.full(prob.n_vars + 1, -1, dtype=int)
    new_index[: prob.n_vars][free] = np.arange(n_free)

    nd = len(prob.cells_dl)
    link_free = free                       # row l belongs to variable l
    y_fix = np.where(fixed, np.log(np.where(fixed_p > 0, fixed_p, 1.0)), 0.0)

    def transform(idx, c):
        idx = idx[link_free].copy()
        c = c[link_free].copy()
        hit = (idx >= 0) & fixed[np.maximum(idx, 0)]
        c[hit] += y_fix[idx[hit]]          # absorb fixed power into coeff
        idx = np.where(hit, -1, idx)
        idx = np.where(idx >= 0, new_index[np.maximum(idx, 0)], -1)
        return idx, c

    idx_num, c_num = transform(prob.idx_num, prob.c_num)
    idx_den, c_den = transform(prob.idx_den, prob.c_den)
    sub = PowerProblem(
        cells_dl=prob.cells_dl[free[:nd]],
        cells_ul=prob.cells_ul[free[nd:]],
        ues_dl=prob.ues_dl[free[:nd]],
        ues_ul=prob.ues_ul[free[nd:]],
        w=prob.w[link_free],
        w_scale=prob.w_scale,
        idx_num=idx_num,
        c_num=c_num,
        idx_den=idx_den,
        c_den=c_den,
        lin=prob.lin[free],
        p_max=prob.p_max[free],
        p_floor=prob.p_floor[free],
        epsilon=prob.epsilon,
        gains=prob.gains,
        energy_kappa=prob.energy_kappa,
    )
    return sub, free


def trim_to_se_cap(dec: SlotDecision, g: GainTable, max_rounds: int = 60) -> SlotDecision:
    """Scale down powers that overshoot the spectral-efficiency cap.

    A link above the cap keeps exactly its capped rate with power scaled
    by cap/SINR; everyone else only sees less interference. Powers are
    non-increasing across rounds so the loop terminates.
    """
    out = dec.copy()
    for _ in range(max_rounds):
        sinr_d, sinr_u = slot_sinrs(out, g)
        over_d = (out.dl_ue >= 0) & (sinr_d > SE_CAP_SINR * (1 + 1e-12))
        over_u = (out.ul_ue >= 0) & (sinr_u > SE_CAP_SINR * (1 + 1e-12))
        if not (over_d.any() or over_u.any()):
            break
        out.p_dl[over_d] *= SE_CAP_SINR / sinr_d[over_d]
        out.p_ul[over_u] *= SE_CAP_SINR / sinr_u[over_u]
    return out


def realized_objective(prob: PowerProblem, dec: SlotDecision, g: GainTable) -> float:
    """Problem objective at a decision, with rates saturated at the cap.

    Inactive links contribute no rate term and no power penalty; this is
    the quantity the cap conditioning actually improves, so safeguard
    comparisons happen on it.
    """
    sinr_d, sinr_u = slot_sinrs(dec, g)
    sinr = np.concatenate([sinr_d[prob.cells_dl], sinr_u[prob.cells_ul]])
    p = _extract_powers(dec, prob)
    on = p > 0
    cap = np.log1p(np.minimum(sinr[on], SE_CAP_SINR))
    val = -float(prob.w[on] @ cap)
    val += float(prob.lin[on] @ np.log(p[on]))
    return val


def _capped_solve(st: PFState, sel: Selection, g: GainTable, cfg: AllocConfig):
    """Successive SP solves conditioned on links that reach the SE cap.

    The plain SP objective keeps valuing SINR beyond the cap, which
    inflates transmit powers (and the self-interference they cause) past
    the point where realized rates saturate. Each round therefore trims
    the solution to the cap, pins every capped link at its trimmed power
    (its rate is constant from here on; it persists only as a fixed
    interference source), and re-solves the remaining links. At most one
    round per link, in practice 2-4.
    """
    prob = build_power_problem(st, sel, g, cfg)
    n = prob.n_vars
    fixed = np.zeros(n, dtype=bool)
    p = prob.p_max.copy()
    info = {"outer_iterations": 0, "cap_rounds": 0}
    dec = trimmed = None
    for _ in range(n + 1):
        sub, free = _reduce_problem(prob, p, fixed)
        if sub is not None:
            p_sub, status, info_s = solve_power_sp(sub, p[free], cfg)
            info["outer_iterations"] += info_s["outer_iterations"]
            if status != STATUS_CONVERGED:
                return None, fixed, prob, status, info
            p[free] = p_sub
        dec = _apply_powers(sel.decision, prob, p)
        trimmed = trim_to_se_cap(dec, g)
        p = _extract_powers(trimmed, prob)
        info["cap_rounds"] += 1
        sinr_d, sinr_u = slot_sinrs(trimmed, g)
        at_cap = np.concatenate(
            [
                sinr_d[prob.cells_dl] >= SE_CAP_SINR * (1 - 1e-9),
                sinr_u[prob.cells_ul] >= SE_CAP_SINR * (1 - 1e-9),
            ]
        )
        newly = at_cap & ~fixed
        if not newly.any():
            break
        fixed |= newly
    return trimmed, fixed, prob, STATUS_CONVERGED, info


def _slot_utility(dec: SlotDecision, g: GainTable, st: PFState) -> float:
    """Actual marginal PF utility of the slot at the decision's powers."""
    rate_dl, rate_ul = slot_rates(dec, g)
    u = 0.0
    on = dec.dl_ue >= 0
    u += float(np.sum(chi(st.avg_dl[dec.dl_ue[on]], rate_dl[on], st.beta)))
    on = dec.ul_ue >= 0
    u += float(np.sum(chi(st.avg_ul[dec.ul_ue[on]], rate_ul[on], st.beta)))
    return u


def _drop_weakest(selection: Selection) -> Selection:
    """Remove the active link with the smallest recorded selection gain."""
    dec = selection.decision.copy()
    du_dl = selection.du_dl.copy()
    du_ul = selection.du_ul.copy()
    best = None   # (du, dir, cell)
    for c in np.where(dec.dl_ue >= 0)[0]:
        du = du_dl[c] if np.isfinite(du_dl[c]) else 0.0
        if best is None or du < best[0]:
            best = (du, DL, c)
    for c in np.where(dec.ul_ue >= 0)[0]:
        du = du_ul[c] if np.isfinite(du_ul[c]) else 0.0
        if best is None or du < best[0]:
            best = (du, UL, c)
    if best is None:
        return selection
    _, direction, c = best
    if direction == DL:
        dec.dl_ue[c] = NONE
        dec.p_dl[c] = 0.0
        du_dl[c] = np.nan
    else:
        dec.ul_ue[c] = NONE
        dec.p_ul[c] = 0.0
        du_ul[c] = np.nan
    return Selection(dec, du_dl, du_ul)


def allocate_with_fallback(
    st: PFState,
    selection: Selection,
    g: GainTable,
    cfg: AllocConfig = AllocConfig(),
):
    """Power-optimize the selection, pruning weakest links on failure.

    Returns (final SlotDecision, diagnostics dict). The decision may
    carry fewer links than the selection: solver failures drop the
    weakest candidates, and links the optimizer parks at the numerical
    floor are zeroed.
    """
    diag = {"pruned": 0, "status": "idle", "outer_iterations": 0, "fallbacks": 0}
    sel = selection
    while True:
        dec = sel.decision
        if not (np.any(dec.dl_ue >= 0) or np.any(dec.ul_ue >= 0)):
            return dec.copy(), diag
        if cfg.trim_se_cap:
            out, fixed, prob, status, info = _capped_solve(st, sel, g, cfg)
        else:
            prob = build_power_problem(st, sel, g, cfg)
            p, status, info = solve_power_sp(prob, prob.p_max.copy(), cfg)
            out = _apply_powers(dec, prob, p) if status == STATUS_CONVERGED else None
            fixed = None
        diag["outer_iterations"] = info["outer_iterations"]
        diag["status"] = status
        if status == STATUS_CONVERGED:
            if cfg.safeguard:
                base = _apply_powers(dec, prob, prob.p_max)
                if cfg.trim_se_cap:
                    base = trim_to_se_cap(base, g)
                if realized_objective(prob, out, g) > realized_objective(prob, base, g):
                    out = base
                    fixed = None
                    diag["fallbacks"] += 1
            out = _floor_prune(out, prob, skip=fixed)
            if cfg.trim_se_cap:
                out = trim_to_se_cap(out, g)
            return out, diag
        sel = _drop_weakest(sel)
        diag["pruned"] += 1
