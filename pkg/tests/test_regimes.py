import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stabilab.errors import InfeasibleError, PreconditionError
from stabilab.regimes import (
    RegimeParams,
    alpha_bound,
    case_b_thresholds,
    complete_stabilizability_sweep,
    fractional_schedule,
    select_regime,
)
from stabilab.symbols import FractionalSymbol, PolynomialSymbol, certify_ellipticity

UNIT = dict(d0=1.0, d1=1.0, d2=1.0, d3=1.0)


def worked_a():
    return RegimeParams(**UNIT, gamma1=1.0, gamma2=0.5, gamma3=1.0, delta=0.5)


def case_a_condition(q, T):
    g1, g2, g3 = q.gamma1, q.gamma2, q.gamma3
    rhs = (q.d3 / (2 * q.d1)) ** (g2 / (g1 - g2)) * q.d3 / 2 * (q.delta * T) ** (g1 * g3 / (g1 - g2))
    return q.log_prefactor < rhs - q.omega_plus * T


def test_worked_case_a_instance():
    dec = select_regime(worked_a())
    assert dec.case_id == "A"
    assert dec.T == pytest.approx(4 * math.sqrt(math.log(2)), abs=1e-6)
    assert dec.lam == pytest.approx((dec.T / 4) ** 2, rel=1e-12)
    assert dec.alpha == alpha_bound(worked_a(), dec.lam, dec.T)
    assert dec.alpha < 1


def test_case_a_horizon_is_minimal():
    for q in (
        worked_a(),
        RegimeParams(d0=2.0, d1=0.5, d2=3.0, d3=0.7, gamma1=2.0, gamma2=1.0, gamma3=1.0, omega=0.1, M=1.5),
    ):
        dec = select_regime(q)
        assert dec.case_id == "A"
        assert case_a_condition(q, dec.T)
        assert not case_a_condition(q, dec.T * (1 - 1e-6))


def test_case_b_threshold_display():
    q = RegimeParams(**UNIT, gamma1=1.0, gamma2=1.0, gamma3=1.0, delta=0.5)
    display, positive = case_b_thresholds(q)
    assert display == 0.5
    assert positive == 2.0


def test_case_b_lambda_formula():
    q = RegimeParams(**UNIT, gamma1=1.0, gamma2=1.0, gamma3=1.0, delta=0.5)
    dec = select_regime(q, T_hint=6.0)
    assert dec.case_id == "B"
    base = math.log(2) / (1 * 3.0 - 1)
    assert dec.lam == pytest.approx(1.01 * base, rel=1e-14)
    assert 0 < dec.alpha < 1
    assert dec.alpha == alpha_bound(q, dec.lam, dec.T)


def test_case_b_below_positivity_is_infeasible():
    q = RegimeParams(**UNIT, gamma1=1.0, gamma2=1.0, gamma3=1.0, delta=0.5)
    dec = select_regime(q, T_hint=1.0)
    assert dec.case_id == "infeasible" and not dec.feasible


def test_vanishing_prefactor():
    prev = math.inf
    for d2 in (1e-1, 1e-4, 1e-8, 1e-12):
        q = RegimeParams(d0=1.0, d1=1.0, d2=d2, d3=1.0, gamma1=1.0, gamma2=1.0, gamma3=1.0)
        a = alpha_bound(q, 2.0, 5.0)
        assert a < prev
        prev = a
    assert prev < 1e-11


def test_case_c_any_horizon():
    for T in (0.05, 0.5, 5.0):
        q = RegimeParams(**UNIT, gamma1=1.0, gamma2=2.0, gamma3=1.0, omega=0.3)
        dec = select_regime(q, T_hint=T)
        assert dec.case_id == "C"
        assert dec.T == T
        assert 0 < dec.alpha < 1


def test_case_e_bisects_horizon():
    q = RegimeParams(**UNIT, gamma1=2.0, gamma2=1.0, gamma3=0.2)
    dec = select_regime(q, lambda_hint=0.5)
    assert dec.case_id == "E"
    assert 0 < dec.alpha < 1
    assert alpha_bound(q, 0.5, dec.T / 1.01 * (1 - 1e-6)) >= 1


def test_case_e_rejects_growth():
    q = RegimeParams(**UNIT, gamma1=2.0, gamma2=1.0, gamma3=0.2, omega=0.1)
    with pytest.raises(PreconditionError):
        select_regime(q, case="E")


def test_no_guaranteed_horizon_is_infeasible():
    q = RegimeParams(**UNIT, gamma1=2.0, gamma2=1.0, gamma3=0.2, omega=0.5)
    dec = select_regime(q)
    assert dec.case_id == "infeasible"
    assert "case D" in dec.justification


def test_case_d_not_implemented():
    with pytest.raises(PreconditionError):
        select_regime(worked_a(), case="D")


def test_invalid_params():
    with pytest.raises(PreconditionError):
        RegimeParams(**UNIT, gamma1=1.0, gamma2=1.0, gamma3=1.0, M=0.5)
    with pytest.raises(PreconditionError):
        RegimeParams(**UNIT, gamma1=1.0, gamma2=1.0, gamma3=1.0, delta=1.0)
    with pytest.raises(PreconditionError):
        RegimeParams(d0=0.0, d1=1.0, d2=1.0, d3=1.0, gamma1=1.0, gamma2=1.0, gamma3=1.0)


def fractional(m, s):
    base = PolynomialSymbol(1, m, {(m,): 1.0})
    xi = np.arange(-64, 64, dtype=float)
    return FractionalSymbol(base, certify_ellipticity(base, xi, 1.0, 0.0), s=s, nu=0.0)


@pytest.mark.parametrize(
    "m, s, case",
    [(2, 0.5, "B"), (2, 1.0, "C"), (1, 0.25, "A"), (2, 0.25, "A"), (4, 0.5, "C"), (4, 0.25, "B"), (2, 0.75, "C")],
)
def test_schedule_routing(m, s, case):
    dec = fractional_schedule(fractional(m, s), (1.5, 0.3), T_hint=50.0 if case != "A" else None)
    assert dec.case_id == case
    assert 0 < dec.alpha < 1


def test_schedule_routing_depends_only_on_order():
    for m in (1, 2, 4):
        for s in (0.125, 0.25, 0.5, 0.75, 1.0):
            dec = fractional_schedule(fractional(m, s), (1.0, 0.2), T_hint=100.0)
            sm = m * s
            expected = "A" if sm < 1 else ("B" if sm == 1 else "C")
            assert dec.case_id == expected


def test_sweep_examples():
    assert complete_stabilizability_sweep([1] * 6, list(range(6)), 2.5, 0.0) == 3
    assert complete_stabilizability_sweep([1] * 8, [2.0**k for k in range(8)], 10.0, 1.0) == 4
    with pytest.raises(InfeasibleError):
        complete_stabilizability_sweep([], [], 1.0, 0.0)
    with pytest.raises(InfeasibleError):
        complete_stabilizability_sweep([1, 1], [0.0, 1.0], 5.0, 0.0)


def test_sweep_preconditions():
    with pytest.raises(PreconditionError):
        complete_stabilizability_sweep([1, 1], [1.0, 1.0], 0.5, 0.0)
    with pytest.raises(PreconditionError):
        complete_stabilizability_sweep([0.5], [1.0], 0.5, 0.0)


pos = st.floats(0.05, 5.0)


@settings(max_examples=80, deadline=None)
@given(
    d0=pos, d1=pos, d2=pos, d3=pos,
    gammas=st.sampled_from([(1.0, 0.5, 1.0), (1.0, 1.0, 1.0), (1.0, 2.0, 1.0), (2.0, 1.0, 0.8), (1.0, 0.25, 1.0)]),
    omega=st.floats(-1.0, 0.5),
    M=st.floats(1.0, 5.0),
    delta=st.floats(0.1, 0.9),
)
def test_every_feasible_decision_has_alpha_below_one(d0, d1, d2, d3, gammas, omega, M, delta):
    g1, g2, g3 = gammas
    q = RegimeParams(d0=d0, d1=d1, d2=d2, d3=d3, gamma1=g1, gamma2=g2, gamma3=g3, omega=omega, M=M, delta=delta)
    dec = select_regime(q)
    if dec.feasible:
        assert 0 <= dec.alpha < 1
        assert dec.alpha == alpha_bound(q, dec.lam, dec.T)
