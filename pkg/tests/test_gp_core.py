import numpy as np
import pytest

from fdcell.gp_core import (
    GPProblem,
    Monomial,
    Posynomial,
    STATUS_CONVERGED,
    STATUS_INFEASIBLE,
    WeightedLogObjective,
    condense,
    evaluate,
    minimize_box,
    posynomial_arrays,
    projected_grad_norm,
    solve_gp,
)


def random_posynomial(rng, n_vars=3, n_terms=5):
    terms = []
    for _ in range(n_terms):
        coeff = float(rng.lognormal(0.0, 1.0))
        exps = {k: float(rng.uniform(-2.0, 2.0)) for k in range(n_vars) if rng.random() < 0.7}
        terms.append(Monomial(coeff, exps))
    return Posynomial(terms)


def test_evaluate_oracles():
    assert evaluate(Monomial(2.0, {0: 1.0}), [3.0]) == pytest.approx(6.0, rel=1e-12)
    p = Posynomial([Monomial(1.0, {0: 1.0}), Monomial(1.0, {0: -1.0})])
    assert evaluate(p, [1.0]) == pytest.approx(2.0, rel=1e-12)
    assert evaluate(Monomial(1.0, {0: 0.5, 1: 0.5}), [4.0, 9.0]) == pytest.approx(6.0, rel=1e-12)
    with pytest.raises(ValueError):
        evaluate(Monomial(1.0, {0: 1.0}), [-1.0])


def test_condense_hand_example():
    p = Posynomial([Monomial(1.0, {0: 1.0}), Monomial(1.0, {1: 1.0})])
    m = condense(p, [1.0, 1.0])
    assert m.coeff == pytest.approx(2.0, rel=1e-12)
    assert m.exponents == {0: pytest.approx(0.5), 1: pytest.approx(0.5)}


def test_condense_tangency_and_lower_bound():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        p = random_posynomial(rng)
        x0 = rng.lognormal(0.0, 0.7, 3)
        m = condense(p, x0)
        pv, mv = evaluate(p, x0), evaluate(m, x0)
        assert mv == pytest.approx(pv, rel=1e-12)
        for _ in range(100):
            x = rng.lognormal(0.0, 0.9, 3)
            gap = evaluate(m, x) - evaluate(p, x)
            worst = max(worst, gap / max(evaluate(p, x), 1e-300))
    assert worst <= 1e-12


def test_posynomial_arrays_consistency():
    rng = np.random.default_rng(5)
    p = random_posynomial(rng, n_vars=4)
    A, c = posynomial_arrays(p, 4)
    for _ in range(5):
        y = rng.normal(0.0, 1.0, 4)
        direct = np.log(evaluate(p, np.exp(y)))
        lse = float(np.logaddexp.reduce(A @ y + c))
        assert lse == pytest.approx(direct, rel=1e-12)


def test_minimize_box_quadratic_like():
    # minimize lse of (y, -y): symmetric, optimum at y = 0 -> x = 1
    obj = WeightedLogObjective([(1.0, np.array([[1.0], [-1.0]]), np.zeros(2))], n=1)
    y, status, _ = minimize_box(obj, np.array([1.5]), np.array([-3.0]), np.array([3.0]))
    assert status == STATUS_CONVERGED
    assert y[0] == pytest.approx(0.0, abs=1e-6)
    _, grad, _ = obj(y)
    assert projected_grad_norm(y, grad, np.array([-3.0]), np.array([3.0])) < 1e-6


def test_solve_unconstrained_amgm():
    # min x + 1/x on [0.1, 10] -> x* = 1, value 2
    obj = Posynomial([Monomial(1.0, {0: 1.0}), Monomial(1.0, {0: -1.0})])
    x, status = solve_gp(GPProblem(obj, var_bounds={0: (0.1, 10.0)}))
    assert status == STATUS_CONVERGED
    assert x[0] == pytest.approx(1.0, rel=1e-4)
    assert evaluate(obj, x) == pytest.approx(2.0, rel=1e-4)


def test_solve_constrained_symmetric():
    # min 1/(x y) s.t. x/2 + y/2 <= 1 on (0, 2] -> x* = y* = 1, value 1
    obj = Posynomial([Monomial(1.0, {0: -1.0, 1: -1.0})])
    con = Posynomial([Monomial(0.5, {0: 1.0}), Monomial(0.5, {1: 1.0})])
    prob = GPProblem(obj, constraints_le=[con], var_bounds={0: (1e-4, 2.0), 1: (1e-4, 2.0)})
    x, status = solve_gp(prob)
    assert status == STATUS_CONVERGED
    assert x[0] == pytest.approx(1.0, rel=1e-4)
    assert x[1] == pytest.approx(1.0, rel=1e-4)
    assert evaluate(obj, x) == pytest.approx(1.0, rel=2e-4)


def test_solve_monotone_hits_cap():
    # min 1/x with x <= Pmax -> x* = Pmax
    pmax = 0.251
    obj = Posynomial([Monomial(1.0, {0: -1.0})])
    x, status = solve_gp(GPProblem(obj, var_bounds={0: (1e-6, pmax)}))
    assert status == STATUS_CONVERGED
    assert x[0] == pytest.approx(pmax, rel=1e-6)


def test_solve_with_equality_substitution():
    # min x + y s.t. x y^2 = 4 -> y* = 2, x* = 1, value 3
    obj = Posynomial([Monomial(1.0, {0: 1.0}), Monomial(1.0, {1: 1.0})])
    eq = Monomial(0.25, {0: 1.0, 1: 2.0})
    prob = GPProblem(obj, constraints_eq=[eq], var_bounds={0: (1e-2, 50.0), 1: (1e-2, 50.0)})
    x, status = solve_gp(prob)
    assert status == STATUS_CONVERGED
    assert x[0] * x[1] ** 2 == pytest.approx(4.0, rel=1e-6)
    assert x[0] == pytest.approx(1.0, rel=1e-3)
    assert x[1] == pytest.approx(2.0, rel=1e-3)


def test_solve_infeasible_constant_constraint():
    obj = Posynomial([Monomial(1.0, {0: 1.0})])
    bad = Posynomial([Monomial(2.0, {})])   # 2 <= 1 never holds
    _, status = solve_gp(GPProblem(obj, constraints_le=[bad], var_bounds={0: (0.1, 1.0)}))
    assert status == STATUS_INFEASIBLE


def test_solve_infeasible_within_bounds():
    # 10/x <= 1 needs x >= 10, but x is capped at 2
    obj = Posynomial([Monomial(1.0, {0: 1.0})])
    con = Posynomial([Monomial(10.0, {0: -1.0})])
    _, status = solve_gp(GPProblem(obj, constraints_le=[con], var_bounds={0: (0.1, 2.0)}))
    assert status == STATUS_INFEASIBLE


def test_feasible_inequality_tightens():
    # min 1/x s.t. x <= 1.5 expressed as posynomial constraint x/1.5 <= 1
    obj = Posynomial([Monomial(1.0, {0: -1.0})])
    con = Posynomial([Monomial(1.0 / 1.5, {0: 1.0})])
    x, status = solve_gp(GPProblem(obj, constraints_le=[con], var_bounds={0: (0.1, 10.0)}))
    assert status == STATUS_CONVERGED
    assert x[0] == pytest.approx(1.5, rel=1e-3)
