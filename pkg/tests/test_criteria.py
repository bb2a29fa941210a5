import math

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from mkv.criteria import (
    INF,
    CriteriaError,
    LebesgueBesovIndices,
    conjugate,
    evaluate_conditions,
    intrinsic_index,
    model_thresholds,
)

exponents = st.one_of(st.just(INF), st.floats(1.0, 20.0))


@st.composite
def indices(draw, beta=None):
    d = draw(st.integers(1, 3))
    alpha = draw(st.floats(1.01, 2.0))
    b = draw(st.one_of(st.just(-1.0), st.floats(-0.99, 0.0))) if beta is None else beta
    return LebesgueBesovIndices(
        d=d, alpha=alpha, beta=b, p=draw(exponents), q=draw(exponents), r=draw(exponents),
        beta0=draw(st.floats(0.0, 2.0)), p0=draw(exponents), eta=draw(st.floats(1e-6, 0.2)),
        has_div_bound=draw(st.booleans()))


def test_intrinsic_index_examples():
    assert intrinsic_index(0.0, INF, 2) == 2.0
    assert intrinsic_index(1.0, 2.0, 2) == 2.0
    for d in (1, 2, 3):
        assert intrinsic_index(0.0, 1.0, d) == 0.0


def test_conjugate():
    assert conjugate(1.0) == INF
    assert conjugate(INF) == 1.0
    assert conjugate(2.0) == 2.0


def test_burgers_example():
    rep = evaluate_conditions(LebesgueBesovIndices(d=1, alpha=2.0, beta=0.0, p=1.0, beta0=0.0, p0=2.0, eta=0.1))
    assert rep.c1
    assert rep.zeta0 == pytest.approx(0.25)
    assert rep.Gamma == pytest.approx(0.4)
    assert rep.theta == pytest.approx(0.45)
    assert rep.r0_window == pytest.approx((2.0, 1 / 0.45))
    assert rep.well_posed


def test_keller_segel_examples():
    ks = dict(d=2, alpha=2.0, beta=-1.0, p=2.0, beta0=0.0, has_div_bound=True)
    rep = evaluate_conditions(LebesgueBesovIndices(p0=4.0, **ks))
    assert rep.c2 and not rep.c1
    assert rep.intrinsic_index == pytest.approx(1.5)
    assert not evaluate_conditions(LebesgueBesovIndices(p0=1.0, **ks)).c2


def test_missing_divergence_bound_reason():
    rep = evaluate_conditions(LebesgueBesovIndices(d=2, alpha=2.0, beta=-1.0, p=2.0, p0=4.0))
    assert not rep.c2
    assert "missing div(b) structure condition" in rep.reasons


def test_eta_too_large_reported():
    rep = evaluate_conditions(LebesgueBesovIndices(d=1, alpha=2.0, beta=0.0, p=1.0, p0=2.0, eta=0.6))
    assert rep.c1 and rep.Gamma <= 0
    assert not rep.well_posed
    assert any("too large" in r for r in rep.reasons)
    assert rep.eta_max == pytest.approx(0.5)


@pytest.mark.parametrize("kw", [dict(alpha=0.8), dict(beta=0.5), dict(beta=-1.5), dict(p=0.5), dict(beta0=-0.1),
                                dict(eta=0.0), dict(r=0.9)])
def test_invalid_indices(kw):
    base = dict(d=1, alpha=2.0, beta=0.0, p=1.0)
    base.update(kw)
    with pytest.raises(CriteriaError):
        LebesgueBesovIndices(**base)


def test_model_examples():
    v = model_thresholds("burgers", 2.0, 1, 0.0, 2.0)
    assert v.weak and v.strong
    v = model_thresholds("vortex2d", 2.0, 2, 0.0, 1.0)
    assert not v.weak
    v = model_thresholds("kellersegel", 2.0, 2, 1.5, 1.0)
    assert v.weak and v.strong


def test_model_inadmissible_dimension():
    with pytest.raises(CriteriaError):
        model_thresholds("burgers", 2.0, 2, 0.0, 2.0)
    with pytest.raises(CriteriaError):
        model_thresholds("vortex2d", 2.0, 3, 0.0, 2.0)
    with pytest.raises(CriteriaError):
        model_thresholds("kellersegel", 2.0, 1, 0.0, 2.0)
    with pytest.raises(CriteriaError):
        model_thresholds("navier", 2.0, 2, 0.0, 2.0)


def test_report_lines_are_key_value():
    rep = evaluate_conditions(LebesgueBesovIndices(d=1, alpha=2.0, beta=0.0, p=1.0, p0=2.0))
    keys = [line.split(": ", 1)[0] for line in rep.lines()]
    assert {"c0", "c1", "c2", "c1_s", "c2_s", "zeta0", "Gamma", "theta", "r0_window", "margin"} <= set(keys)


@settings(max_examples=300, deadline=None)
@given(indices())
def test_strong_implies_weak(idx):
    rep = evaluate_conditions(idx)
    assert not rep.c1_s or rep.c1
    assert not rep.c2_s or rep.c2
    assert not rep.c0_s or rep.c0


@settings(max_examples=300, deadline=None)
@given(indices())
def test_exponent_identity(idx):
    rep = evaluate_conditions(idx)
    assume(rep.c1 or rep.c2)
    assert rep.theta == pytest.approx(rep.Gamma / idx.alpha + rep.zeta0, abs=1e-12)
    assert rep.eta_max - rep.Gamma == pytest.approx(idx.eta, abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(indices(), st.floats(0.0, 1.0), st.floats(1.0, 4.0))
def test_monotone_in_initial_regularity(idx, extra_beta0, p0_factor):
    """More initial regularity or integrability never breaks a passing condition."""
    rep = evaluate_conditions(idx)
    p0 = idx.p0 * p0_factor
    better = LebesgueBesovIndices(**{**idx.__dict__, "beta0": idx.beta0 + extra_beta0, "p0": p0})
    rep2 = evaluate_conditions(better)
    for flag in ("c1", "c2", "c1_s", "c2_s"):
        assert not getattr(rep, flag) or getattr(rep2, flag)


@settings(max_examples=200, deadline=None)
@given(indices(), st.floats(1.01, 2.0))
def test_monotone_in_alpha(idx, alpha):
    """A stronger noise never breaks a passing weak condition."""
    assume(alpha >= idx.alpha)
    rep = evaluate_conditions(idx)
    rep2 = evaluate_conditions(LebesgueBesovIndices(**{**idx.__dict__, "alpha": alpha}))
    assert not rep.c1 or rep2.c1
    assert not rep.c2 or rep2.c2


@settings(max_examples=200, deadline=None)
@given(indices())
def test_margin_sign_matches_verdict(idx):
    rep = evaluate_conditions(idx)
    if idx.beta > -1:
        assert (rep.margin > 0) == rep.c1
    elif idx.has_div_bound:
        assert (rep.margin > 0) == rep.c2


@settings(max_examples=200, deadline=None)
@given(st.floats(1.01, 2.0), st.floats(0.0, 2.0), exponents)
def test_burgers_verdict_closed_form(alpha, beta0, p0):
    i = intrinsic_index(beta0, p0, 1)
    assume(abs(i - (2 - alpha)) > 1e-6 and abs(i - (3 - 1.5 * alpha)) > 1e-6)
    v = model_thresholds("burgers", alpha, 1, beta0, p0)
    assert v.weak == (i > 2 - alpha)
    assert v.strong == (i > 3 - 1.5 * alpha)


def test_window_infinite_when_theta_nonpositive():
    # theta + 1/r = 1 - 1.3/1.5 - 1/3 - 0.6 + 1/3 < 0: the upper constraint is vacuous
    rep = evaluate_conditions(LebesgueBesovIndices(d=1, alpha=1.5, beta=-0.3, p=2.0, r=3.0, beta0=1.5, p0=INF,
                                                   eta=0.9))
    assert rep.theta == pytest.approx(-0.8)
    assert rep.r0_window == (pytest.approx(1.5 / 0.2), INF)
