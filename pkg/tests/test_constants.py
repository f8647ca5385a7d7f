from dataclasses import replace

import numpy as np
import pytest

from mfgcs import constants as C
from mfgcs import lagrangian as L
from mfgcs.errors import SmallnessViolated


@pytest.fixture(scope="module")
def frozen_chain(interval, frozen_setup):
    model, terminal, view = frozen_setup
    return model, terminal, view, interval


def test_theta_exact(frozen_chain):
    model, terminal, view, dom = frozen_chain
    base = C.compute_base(model, terminal, view, dom, 0.0)
    assert base.theta == 6.0


def test_delta_exact_quarter(frozen_chain):
    model, terminal, view, dom = frozen_chain
    base = C.compute_base(model, terminal, view, dom, 0.0)
    assert base.m == 1.0
    assert base.delta == 0.25


def test_delta_caps_at_one(interval):
    model = L.quadratic(1, c1=0.0)
    terminal = L.zero_terminal(1)
    view = L.hamiltonian_view(model, interval)
    base = C.compute_base(model, terminal, view, interval, 0.0)
    assert base.m == 0.0
    assert base.delta == 1.0


def test_closed_forms_reproduce_bitwise(frozen_chain):
    model, terminal, view, dom = frozen_chain
    cc = C.compute_base(model, terminal, view, dom, 3.0)
    assert cc.delta == min(1.0 / (2.0 * cc.m * model.c), 1.0)
    assert cc.B1 == model.kappa1 + model.c1 * 3.0
    assert cc.costate_bound == 2.0 * np.sqrt(model.c * cc.C1) / cc.delta


def test_k_tilde_requires_matching_flow(frozen_chain):
    model, terminal, view, dom = frozen_chain
    cc = C.compute_base(model, terminal, view, dom, 1.0)
    with pytest.raises(ValueError):
        C.k_tilde(cc, C.KBudget(k1=2.0, k2=3.0))


def test_no_coupling_self_map_is_constant(interval):
    model = L.quadratic(1, c1=0.0)
    terminal = L.saturating_ramp(target=[1.2], direction=[-1.0])
    view = L.hamiltonian_view(model, interval)
    a = C.compute_base(model, terminal, view, interval, 0.0)
    b = C.compute_base(model, terminal, view, interval, 123.0)
    assert a.k_tilde_1 == pytest.approx(b.k_tilde_1, rel=1e-14)
    assert a.k_tilde_2 == pytest.approx(b.k_tilde_2, rel=1e-14)


def test_coupled_self_map_strictly_increases(frozen_chain):
    model, terminal, view, dom = frozen_chain
    lo = C.compute_base(model, terminal, view, dom, 10.0)
    hi = C.compute_base(model, terminal, view, dom, 20.0)
    assert hi.k_tilde_1 > lo.k_tilde_1


def test_two_path_agreement(frozen_chain):
    """Fitted functional forms reproduce direct evaluation to 1e-10."""
    model, terminal, view, dom = frozen_chain
    sol = C.solve_k_budget(model, terminal, view, dom)
    cc = sol.constants
    for s in (0.5, 7.0, 400.0):
        direct = C.compute_base(model, terminal, view, dom, s,
                                _m_cache=cc.m)
        fitted_k1 = cc.b2 + cc.b3 * np.sqrt(cc.b4 + model.c1 * s)
        assert fitted_k1 == pytest.approx(direct.k_tilde_1, rel=1e-10)
        affine = cc.b5 + (cc.b6 * model.c1 + cc.c2) * s
        assert direct.k_tilde_2 <= affine * (1 + 1e-12)


def test_budget_solve_and_strictness(frozen_chain):
    model, terminal, view, dom = frozen_chain
    sol = C.solve_k_budget(model, terminal, view, dom)
    t1, t2 = C.k_tilde(sol.constants, sol.budget)
    assert t1 < sol.budget.k1
    assert t2 < sol.budget.k2
    again = C.solve_k_budget(model, terminal, view, dom)
    assert again.budget == sol.budget


def test_decoupled_budget_always_exists(interval):
    model = L.quadratic(1, c1=0.0)
    terminal = L.saturating_ramp(target=[1.2], direction=[-1.0])
    view = L.hamiltonian_view(model, interval)
    sol = C.solve_k_budget(model, terminal, view, interval)
    t1, t2 = C.k_tilde(sol.constants, sol.budget)
    assert t1 < sol.budget.k1 and t2 < sol.budget.k2


def test_smallness_violated_at_large_coupling(interval):
    model = L.quadratic(1, c1=0.9)
    terminal = L.saturating_ramp(target=[1.2], direction=[-1.0])
    view = L.hamiltonian_view(model, interval)
    assert view.c2 == pytest.approx(1.8)
    with pytest.raises(SmallnessViolated):
        C.solve_k_budget(model, terminal, view, interval)


def test_coupling_at_least_one_rejected(interval):
    model = L.quadratic(1, c1=1.0)
    terminal = L.saturating_ramp(target=[1.2], direction=[-1.0])
    view = L.hamiltonian_view(model, interval)
    with pytest.raises(SmallnessViolated):
        C.solve_k_budget(model, terminal, view, interval)


def test_monotone_in_declared_constants(frozen_chain):
    model, terminal, view, dom = frozen_chain
    base = C.compute_base(model, terminal, view, dom, 0.0)
    for attr in ("n1", "c", "kappa1"):
        up = C.compute_base(replace(model, **{attr: getattr(model, attr) * 1.1}),
                            terminal, view, dom, 0.0, _m_cache=base.m)
        assert up.theta >= base.theta - 1e-12
        assert up.C1 >= base.C1 - 1e-12


def test_ledger_carries_all_fields(frozen_chain):
    model, terminal, view, dom = frozen_chain
    sol = C.solve_k_budget(model, terminal, view, dom)
    ledger = sol.constants.ledger()
    for key in ("theta", "m", "delta", "B1", "C1", "costate_bound", "lip_p",
                "lip_x", "k_tilde_1", "k_tilde_2", "b1", "b2", "b3", "b4",
                "b5", "b6", "n2", "k2", "c2", "lambda_bar"):
        assert key in ledger
        assert "formula" in ledger[key]
        assert np.isfinite(ledger[key]["value"])
