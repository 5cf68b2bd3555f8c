"""Geometric-programming core: posynomial algebra and a log-space solver.

A monomial is d * prod_k x_k^(a_k) with d > 0; a posynomial is a sum of
monomials. Under y = log x a posynomial becomes log-sum-exp of affine
forms, so minimizing a positive-weighted product of posynomial powers
over a box is a smooth convex problem. That weighted form is the native
objective here because the power allocator produces real (non-integer)
weights; classic standard-form GPs reduce to it with unit weights.

Solver: projected Newton over the box for unconstrained-in-x problems;
posynomial <= 1 constraints go through a log-barrier path with a
smoothed-max phase I; monomial = 1 constraints are eliminated by
substitution before solving.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

STATUS_CONVERGED = "converged"
STATUS_MAX_ITER = "max_iterations"
STATUS_INFEASIBLE = "infeasible"


@dataclass
class Monomial:
    coeff: float
    exponents: dict = field(default_factory=dict)   # var id -> real exponent

    def __post_init__(self):
        if not self.coeff > 0:
            raise ValueError(f"monomial coefficient must be positive, got {self.coeff}")

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        out = self.coeff
        for k, a in self.exponents.items():
            out *= x[k] ** a
        return float(out)


@dataclass
class Posynomial:
    terms: list

    def __post_init__(self):
        if not self.terms:
            raise ValueError("posynomial needs at least one term")

    def value(self, x) -> float:
        return float(sum(t.value(x) for t in self.terms))

    def n_vars(self) -> int:
        ids = [k for t in self.terms for k in t.exponents]
        return max(ids) + 1 if ids else 0


@dataclass
class GPProblem:
    objective: Posynomial
    constraints_le: list = field(default_factory=list)   # Posynomial <= 1
    constraints_eq: list = field(default_factory=list)   # Monomial  == 1
    var_bounds: dict = field(default_factory=dict)       # var id -> (lo, hi)


def evaluate(p, x) -> float:
    """Value of a monomial or posynomial at a positive point."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("posynomials are defined for positive x only")
    return p.value(x)


def condense(p: Posynomial, x0) -> Monomial:
    """Best monomial lower bound of p that is tight at x0 (AM-GM).

    With alpha_j = term_j(x0)/p(x0), the monomial prod (term_j/alpha_j)^alpha_j
    satisfies m(x) <= p(x) everywhere and m(x0) = p(x0).
    """
    x0 = np.asarray(x0, dtype=float)
    if np.any(x0 <= 0):
        raise ValueError("condensation point must be positive")
    vals = np.array([t.value(x0) for t in p.terms])
    total = vals.sum()
    alphas = vals / total
    log_coeff = 0.0
    exps: dict = {}
    for t, a in zip(p.terms, alphas):
        if a == 0.0:
            continue
        log_coeff += a * (np.log(t.coeff) - np.log(a))
        for k, e in t.exponents.items():
            exps[k] = exps.get(k, 0.0) + a * e
    return Monomial(float(np.exp(log_coeff)), {k: v for k, v in exps.items() if v != 0.0})


# ---------------------------------------------------------------------------
# array-level machinery (log-variable space)


def posynomial_arrays(p: Posynomial, n: int):
    """Exponent matrix A (terms x n) and log-coefficients c for log x space."""
    A = np.zeros((len(p.terms), n))
    c = np.zeros(len(p.terms))
    for j, t in enumerate(p.terms):
        c[j] = np.log(t.coeff)
        for k, a in t.exponents.items():
            A[j, k] = a
    return A, c


def _lse_vgh(A: np.ndarray, c: np.ndarray, y: np.ndarray, need_hess: bool = True):
    """Value, gradient and Hessian of lse(A y + c)."""
    z = A @ y + c
    m = z.max()
    e = np.exp(z - m)
    s = e.sum()
    val = m + np.log(s)
    p = e / s
    g = p @ A
    if not need_hess:
        return val, g, None
    H = (A * p[:, None]).T @ A - np.outer(g, g)
    return val, g, H


class WeightedLogObjective:
    """F(y) = sum_j w_j * lse(A_j y + c_j) + lin . y + const.

    Blocks are stored padded into one tensor; pad rows carry c = -inf and
    zero exponents so they drop out of the softmax.
    """

    def __init__(self, blocks, lin=None, const=0.0, n=None):
        # blocks: list of (w, A(m x n), c(m,))
        if n is None:
            n = blocks[0][1].shape[1] if blocks else len(lin)
        self.n = n
        J = len(blocks)
        M = max((b[1].shape[0] for b in blocks), default=1)
        self.A = np.zeros((J, M, n))
        self.c = np.full((J, M), -np.inf)
        self.w = np.zeros(J)
        for j, (w, A, c) in enumerate(blocks):
            m = A.shape[0]
            self.A[j, :m] = A
            self.c[j, :m] = c
            self.w[j] = w
        self.lin = np.zeros(n) if lin is None else np.asarray(lin, dtype=float)
        self.const = float(const)

    def __call__(self, y: np.ndarray, need_hess: bool = True):
        z = np.einsum("jmn,n->jm", self.A, y) + self.c
        m = z.max(axis=1, keepdims=True)
        e = np.exp(z - m)
        s = e.sum(axis=1)
        val = float(self.w @ (m.ravel() + np.log(s)) + self.lin @ y + self.const)
        p = e / s[:, None]
        gj = np.einsum("jm,jmn->jn", p, self.A)
        grad = self.w @ gj + self.lin
        if not need_hess:
            return val, grad, None
        H = np.einsum("j,jm,jmn,jmk->nk", self.w, p, self.A, self.A)
        H -= np.einsum("j,jn,jk->nk", self.w, gj, gj)
        return val, grad, H


def projected_grad_norm(y, g, lo, hi, atol=1e-10):
    """Infinity norm of the KKT residual on a box."""
    pg = g.copy()
    at_lo = y <= lo + atol
    at_hi = y >= hi - atol
    pg[at_lo] = np.minimum(g[at_lo], 0.0)
    pg[at_hi & ~at_lo] = np.maximum(g[at_hi & ~at_lo], 0.0)
    return float(np.abs(pg).max()) if len(pg) else 0.0


def minimize_box(fgh, y0, lo, hi, tol=1e-8, max_iter=200):
    """Projected-Newton minimization of a smooth convex f over a box.

    fgh(y, need_hess) -> (value, gradient, hessian). Returns (y, status,
    iterations); status is converged once the projected gradient drops
    below tol.
    """
    y = np.clip(np.asarray(y0, dtype=float), lo, hi)
    n = len(y)
    f, g, H = fgh(y)
    for it in range(max_iter):
        if projected_grad_norm(y, g, lo, hi) <= tol:
            return y, STATUS_CONVERGED, it
        atol = 1e-10
        active = ((y <= lo + atol) & (g > 0)) | ((y >= hi - atol) & (g < 0))
        free = ~active
        d = np.zeros(n)
        if free.any():
            Hf = H[np.ix_(free, free)]
            gf = g[free]
            ridge = 1e-12 * (1.0 + np.trace(Hf) / max(free.sum(), 1))
            try:
                df = np.linalg.solve(Hf + ridge * np.eye(free.sum()), -gf)
                if df @ gf >= 0:
                    df = -gf
            except np.linalg.LinAlgError:
                df = -gf
            d[free] = df
        if not np.any(d):
            return y, STATUS_CONVERGED, it
        alpha = 1.0
        accepted = False
        for _ in range(60):
            y_new = np.clip(y + alpha * d, lo, hi)
            step = y_new - y
            if not np.any(step):
                break
            f_new = fgh(y_new, need_hess=False)[0]
            if f_new <= f + 1e-4 * (g @ step):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            # numerical stall: no descent step representable
            ok = projected_grad_norm(y, g, lo, hi) <= 10 * tol
            return y, STATUS_CONVERGED if ok else STATUS_MAX_ITER, it
        y = y_new
        f, g, H = fgh(y)
    return y, STATUS_MAX_ITER, max_iter


# ---------------------------------------------------------------------------
# constrained path (log barrier) and the standard-form front end


class _BarrierObjective:
    """F(y) - (1/t) sum_i ln(-g_i(y)) with g_i = lse(A_i y + c_i).

    Normalized so the gradient keeps F's scale as t grows; the duality
    gap bound is still (number of constraints)/t.
    """

    def __init__(self, base, cons, t):
        self.base = base
        self.cons = cons
        self.inv_t = 1.0 / t

    def __call__(self, y, need_hess=True):
        val, grad, H = self.base(y, need_hess)
        for A, c in self.cons:
            gv, gg, gH = _lse_vgh(A, c, y, need_hess)
            if gv >= 0:
                big = 1e30
                return big, grad, H if need_hess else None
            val -= self.inv_t * np.log(-gv)
            grad = grad + self.inv_t * gg / (-gv)
            if need_hess:
                H = H + self.inv_t * (np.outer(gg, gg) / gv**2 + gH / (-gv))
        return val, grad, H


class _SmoothedMax:
    """tau * lse(g_i(y)/tau) over constraint functions, for phase I."""

    def __init__(self, cons, tau):
        self.cons = cons
        self.tau = tau

    def __call__(self, y, need_hess=True):
        vals, grads, hesss = [], [], []
        for A, c in self.cons:
            v, g, H = _lse_vgh(A, c, y, need_hess)
            vals.append(v)
            grads.append(g)
            hesss.append(H)
        vals = np.array(vals)
        m = vals.max()
        e = np.exp((vals - m) / self.tau)
        s = e.sum()
        p = e / s
        val = m + self.tau * np.log(s)
        G = np.stack(grads)
        grad = p @ G
        if not need_hess:
            return val, grad, None
        H = sum(pi * Hi for pi, Hi in zip(p, hesss))
        H = H + ((G * p[:, None]).T @ G - np.outer(grad, grad)) / self.tau
        return val, grad, H


def _substitute_equalities(prob: GPProblem, n: int):
    """Eliminate monomial equality constraints by variable substitution.

    Returns (posynomials', constraints_le', kept_ids, recover) where
    recover(x_kept) rebuilds the full positive vector.
    """
    # representation: every posynomial as (A, c) arrays over n vars
    def to_arrays(p):
        return posynomial_arrays(p, n)

    obj_A, obj_c = to_arrays(prob.objective)
    cons = [to_arrays(p) for p in prob.constraints_le]
    lo = np.full(n, 1e-12)
    hi = np.full(n, 1e12)
    for k, (l, h) in prob.var_bounds.items():
        if not (0 < l <= h):
            raise ValueError(f"bounds for variable {k} must satisfy 0 < lo <= hi")
        lo[k], hi[k] = l, h

    # equalities as affine rows in log space: a . y + ln d = 0
    eq_rows = []
    for mono in prob.constraints_eq:
        a = np.zeros(n)
        for k, e in mono.exponents.items():
            a[k] = e
        eq_rows.append((a, float(np.log(mono.coeff))))

    subs = []          # (k, a_row(n,), b) meaning y_k = a . y + b
    eliminated = []
    for i, (a, logd) in enumerate(eq_rows):
        if not np.any(a):
            if abs(logd) > 1e-9:
                raise ValueError("inconsistent monomial equality constraints")
            continue
        k = int(np.argmax(np.abs(a)))
        # y_k = (-ln d - sum_{j != k} a_j y_j) / a_k
        coef = -a / a[k]
        coef[k] = 0.0
        offset = -logd / a[k]

        def apply(Ac, coef=coef, offset=offset, k=k):
            A, c = Ac
            c = c + A[:, k] * offset
            A = A + np.outer(A[:, k], coef)
            A[:, k] = 0.0
            return A, c

        obj_A, obj_c = apply((obj_A, obj_c))
        cons = [apply(x) for x in cons]
        for j in range(i + 1, len(eq_rows)):
            aj, dj = eq_rows[j]
            dj += aj[k] * offset
            aj = aj + aj[k] * coef
            aj[k] = 0.0
            eq_rows[j] = (aj, dj)
        for j in range(len(subs)):
            kk, arow, b = subs[j]
            b = b + arow[k] * offset
            arow = arow + arow[k] * coef
            arow[k] = 0.0
            subs[j] = (kk, arow, b)
        # the eliminated variable's box becomes two monomial constraints
        up_A = coef[None, :].copy()
        cons.append((up_A, np.array([offset - np.log(hi[k])])))
        cons.append((-up_A, np.array([np.log(lo[k]) - offset])))
        subs.append((k, coef.copy(), offset))
        eliminated.append(k)

    kept = np.array([k for k in range(n) if k not in eliminated], dtype=int)

    def shrink(Ac):
        A, c = Ac
        return A[:, kept], c

    obj = shrink((obj_A, obj_c))
    cons = [shrink(x) for x in cons]

    def recover(y_kept):
        y = np.zeros(n)
        y[kept] = y_kept
        for k, arow, b in reversed(subs):
            y[k] = arow @ y + b
        return y

    return obj, cons, lo[kept], hi[kept], recover


def solve_gp(prob: GPProblem, tol: float = 1e-6):
    """Solve a standard-form GP; returns (x, status).

    x is the positive solution vector (length = number of variables) and
    status one of converged / max_iterations / infeasible.
    """
    n = max(
        [prob.objective.n_vars()]
        + [p.n_vars() for p in prob.constraints_le]
        + [max(m.exponents, default=-1) + 1 for m in prob.constraints_eq]
        + [max(prob.var_bounds, default=-1) + 1]
    )
    (obj_A, obj_c), cons, lo, hi, recover = _substitute_equalities(prob, n)
    lo_y, hi_y = np.log(lo), np.log(hi)
    # drop constraint rows that became constant (all-zero exponents)
    clean = []
    for A, c in cons:
        if np.any(A):
            clean.append((A, c))
        elif np.logaddexp.reduce(c) > 0:
            return np.exp(recover((lo_y + hi_y) / 2)), STATUS_INFEASIBLE
    cons = clean
    base = WeightedLogObjective([(1.0, obj_A, obj_c)], n=len(lo_y))
    y0 = (lo_y + hi_y) / 2.0

    if not cons:
        y, status, _ = minimize_box(base, y0, lo_y, hi_y, tol=tol)
        return np.exp(recover(y)), status

    # phase I: drive max_i lse_i below zero through a smoothed max
    y = y0
    feasible = max(_lse_vgh(A, c, y, False)[0] for A, c in cons) < -1e-9
    if not feasible:
        for tau in (1.0, 0.1, 0.01, 1e-3):
            y, _, _ = minimize_box(_SmoothedMax(cons, tau), y, lo_y, hi_y, tol=1e-10)
            if max(_lse_vgh(A, c, y, False)[0] for A, c in cons) < -1e-9:
                feasible = True
                break
        if not feasible:
            return np.exp(recover(y)), STATUS_INFEASIBLE

    t, mu = 1.0, 20.0
    status = STATUS_CONVERGED
    for _ in range(64):
        y, st, _ = minimize_box(_BarrierObjective(base, cons, t), y, lo_y, hi_y, tol=tol)
        if len(cons) / t < tol:
            status = st
            break
        t *= mu
    else:
        status = STATUS_MAX_ITER
    return np.exp(recover(y)), status


def problem_to_text(prob: GPProblem) -> str:
    """Plain-text dump: one monomial per line as coeff then id:exponent pairs."""
    lines = []

    def fmt(m):
        pairs = " ".join(f"{k}:{m.exponents[k]:g}" for k in sorted(m.exponents))
        return f"{m.coeff:.17g} {pairs}".rstrip()

    lines.append("minimize")
    lines.extend(fmt(t) for t in prob.objective.terms)
    for p in prob.constraints_le:
        lines.append("st_le_1")
        lines.extend(fmt(t) for t in p.terms)
    for m in prob.constraints_eq:
        lines.append("st_eq_1")
        lines.append(fmt(m))
    for k in sorted(prob.var_bounds):
        l, h = prob.var_bounds[k]
        lines.append(f"bound {k} {l:.17g} {h:.17g}")
    return "\n".join(lines) + "\n"
