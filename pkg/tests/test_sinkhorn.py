import csv
import math

import numpy as np
import pytest

from mmot import regmot
from mmot.oracle import lp_dual_optimum_phi
from mmot.sinkhorn import (greedy_axis, init_state, iteration_bound, multi_sinkhorn,
                           sinkhorn_step)

from conftest import random_instance, uniform_instance


def classical_sinkhorn(C, a, b, eta, iters=5000):
    K = np.exp(-C / eta)
    u, v = np.ones(len(a)), np.ones(len(b))
    for _ in range(iters):
        u = a / (K @ v)
        v = b / (K.T @ u)
    return u, v


def test_greedy_axis_single_positive(rng):
    inst = random_instance(rng, 3, 3)
    beta = regmot.coordinate_update(inst, 0.5, np.zeros((3, 3)), 0)
    beta = regmot.coordinate_update(inst, 0.5, beta, 2)
    # only axis 2 is fitted, so any axis but 2 may win; brute force agrees
    lm = regmot.normalized_log_marginals(inst, 0.5, beta)
    rhos = [regmot.rho(inst.marginals[k], np.exp(lm[k])) for k in range(3)]
    assert greedy_axis(inst, 0.5, beta) == int(np.argmax(rhos)) != 2


def test_greedy_axis_one_axis_off():
    C = np.zeros((2, 2, 2))
    inst = regmot.MotInstance(C, [[0.5, 0.5], [0.5, 0.5], [0.2, 0.8]])
    assert greedy_axis(inst, 1.0, np.zeros((3, 2))) == 2


def test_greedy_axis_tie_goes_to_first():
    inst = uniform_instance(2, 3)
    assert greedy_axis(inst, 1.0, np.zeros((3, 2))) == 0
    C = np.zeros((2, 2, 2))
    inst = regmot.MotInstance(C, [[0.3, 0.7]] * 3)
    assert greedy_axis(inst, 1.0, np.zeros((3, 2))) == 0


def test_step_fits_axis_and_decrease_is_rho(rng):
    inst = random_instance(rng, 4, 3)
    eta = 0.3
    s = init_state(inst, eta)
    for _ in range(15):
        lm = s.log_marg.copy()
        prev_phi = s.phi
        s = sinkhorn_step(inst, eta, s)
        K = s.last_axis
        assert regmot.log_mass(inst, eta, s.beta) == pytest.approx(0, abs=1e-10)
        assert s.residues(inst)[K] < 1e-10
        assert prev_phi - s.phi == pytest.approx(regmot.rho(inst.marginals[K], np.exp(lm[K])), abs=1e-9)
        assert s.phi == pytest.approx(regmot.phi(inst, eta, s.beta), abs=1e-10)
        np.testing.assert_allclose(s.log_marg, regmot.normalized_log_marginals(inst, eta, s.beta),
                                   atol=1e-10)


def test_two_steps_are_one_classical_sweep(rng):
    n, eta = 4, 0.5
    inst = random_instance(rng, n, 2)
    a, b = inst.marginals
    s = init_state(inst, eta)
    s1 = sinkhorn_step(inst, eta, s)
    s2 = sinkhorn_step(inst, eta, s1)
    assert {s1.last_axis, s2.last_axis} == {0, 1}
    X = np.exp(-inst.cost / eta)
    X /= X.sum()
    if s1.last_axis == 0:
        X = X * (a / X.sum(1))[:, None]
        X = X * (b / X.sum(0))[None, :]
    else:
        X = X * (b / X.sum(0))[None, :]
        X = X * (a / X.sum(1))[:, None]
    np.testing.assert_allclose(regmot.plan(inst, eta, s2.beta, normalize=False), X, rtol=1e-12)


def test_zero_cost_uniform_needs_no_iterations():
    beta, rep = multi_sinkhorn(uniform_instance(3, 3), 1.0, 1e-8)
    assert rep.converged and rep.iterations == 0


def test_converged_state_is_stable(rng):
    inst = uniform_instance(3, 3)
    s = init_state(inst, 1.0)
    s2 = sinkhorn_step(inst, 1.0, s)
    assert float(s2.residues(inst).sum()) < 1e-14
    d = s2.beta - s.beta
    assert np.ptp(d[s2.last_axis]) < 1e-14


def test_classical_fixed_point():
    C = np.array([[0.0, 1.0], [1.0, 0.0]])
    inst = uniform_instance(2, 2, C)
    beta, rep = multi_sinkhorn(inst, 1.0, 1e-6)
    assert rep.converged
    u, v = classical_sinkhorn(C, inst.marginals[0], inst.marginals[1], 1.0)
    du, dv = beta[0] - np.log(u), beta[1] - np.log(v)
    assert np.ptp(du) < 1e-6 and np.ptp(dv) < 1e-6
    assert du[0] + dv[0] == pytest.approx(0, abs=1e-6)


def test_run_properties(rng):
    inst = random_instance(rng, 4, 3)
    eta, eps = 0.1, 1e-5
    beta, rep = multi_sinkhorn(inst, eta, eps)
    assert rep.converged and rep.final_residue <= eps
    assert rep.iterations <= iteration_bound(3, rep.Rbar, eps)
    phis = [row["phi"] for row in rep.trace]
    assert all(b <= a + 1e-12 for a, b in zip(phis, phis[1:]))
    assert regmot.residue(inst, eta, beta)[0] == pytest.approx(rep.final_residue, abs=1e-10)
    phi_star = lp_dual_optimum_phi(inst, eta)
    for row, nxt in zip(rep.trace, rep.trace[1:]):
        assert row["phi"] - nxt["phi"] >= 0.5 * (row["E_t"] / 3) ** 2 - 1e-9
        assert row["phi"] - phi_star <= rep.Rbar * row["E_t"] + 1e-8


def test_dual_optimum_radius(rng):
    inst = random_instance(rng, 3, 3)
    eta = 0.2
    beta, rep = multi_sinkhorn(inst, eta, 1e-10, max_iter=100000)
    b = regmot.canonical_shift(beta)
    assert np.abs(b).max() <= rep.R
    assert np.linalg.norm(b) <= math.sqrt(inst.m * inst.n) * rep.R


def test_budget_exhausted_is_reported(rng):
    inst = random_instance(rng, 4, 3)
    _, rep = multi_sinkhorn(inst, 0.05, 1e-8, max_iter=2)
    assert not rep.converged and rep.iterations == 2 and len(rep.trace) == 3


def test_default_budget(rng):
    inst = random_instance(rng, 3, 3)
    _, rep = multi_sinkhorn(inst, 0.5, 1e-3)
    assert rep.max_iter == math.ceil(rep.iteration_bound) + 10


def test_rejects_zero_marginal():
    inst = regmot.MotInstance(np.zeros((2, 2)), [[1.0, 0.0], [0.5, 0.5]])
    with pytest.raises(ValueError):
        multi_sinkhorn(inst, 1.0, 1e-3)
    with pytest.raises(ValueError):
        multi_sinkhorn(uniform_instance(2, 2), 1.0, 0.0)


def test_trace_csv(tmp_path, rng):
    _, rep = multi_sinkhorn(random_instance(rng, 3, 3), 0.3, 1e-4)
    rep.write_trace_csv(tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0][:4] == ["t", "E_t", "phi", "axis"]
    assert len(rows) == len(rep.trace) + 1
    assert float(rows[1][1]) == rep.trace[0]["E_t"]


def test_deterministic(rng):
    inst = random_instance(rng, 4, 3)
    b1, r1 = multi_sinkhorn(inst, 0.1, 1e-6)
    b2, r2 = multi_sinkhorn(inst, 0.1, 1e-6)
    assert b1.tobytes() == b2.tobytes() and r1.to_json() == r2.to_json()
