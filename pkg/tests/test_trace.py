import math

import pytest

from cfsim.errors import ValidationError
from cfsim.oracle import oracle_run
from cfsim.protocols import ProtocolSpec, build
from cfsim.trace import (joint_route, power_law_fit, second_order_fit, trace_coherent, trace_combined, trace_exact,
                         trace_incoherent)

EPS = 1e-2


def test_reference_trace_is_eps_squared():
    c = build(ProtocolSpec("reference"))
    assert trace_incoherent(c, "D", EPS) == pytest.approx(EPS ** 2)
    rep = trace_combined(c, EPS)
    assert rep.ratio == pytest.approx(1.0)


def test_ev_ifm_blocked_has_no_trace():
    rep = trace_combined(build(ProtocolSpec("ev_ifm", blocked=True)), EPS)
    assert rep.combined == 0.0 and rep.ratio == 0.0


def test_nested_mzi_trace():
    assert trace_incoherent(build(ProtocolSpec("nested_mzi")), "D", EPS) == pytest.approx(EPS ** 2)


def test_two_way_combined_trace():
    c = build(ProtocolSpec("two_way"))
    rep = trace_combined(c, EPS)
    assert rep.per_outcome["D1"].singular
    assert not rep.per_outcome["D0"].singular
    assert rep.combined == pytest.approx(2 * EPS ** 2, abs=5 * EPS ** 4)
    assert rep.combined == pytest.approx(oracle_run(c, EPS).legit_combined(c), abs=5 * EPS ** 4)


def test_two_way_unnormalized():
    c = build(ProtocolSpec("two_way"))
    rep = trace_combined(c, EPS, postselected=False)
    # the D1 error click adds eps^2 * |t|^2 = eps^2 * 2/35
    assert rep.legit_probability == pytest.approx(2 / 35 * (1 + EPS ** 2), rel=1e-6)
    assert rep.combined == pytest.approx(oracle_run(c, EPS).legit_combined(c, False), abs=5 * EPS ** 4)


def test_joint_route_d1():
    p, joint = joint_route(build(ProtocolSpec("two_way")), "D1", EPS)
    assert p == pytest.approx(joint, rel=1e-3)


@pytest.mark.parametrize("K", [1, 2, 4, 8])
def test_k_path_trace(K):
    rep = trace_combined(build(ProtocolSpec("k_path", K=K)), EPS)
    assert rep.combined == pytest.approx(EPS ** 2 / K, abs=5 * EPS ** 4)


@pytest.mark.parametrize("K", [1, 3, 6])
def test_coherent_bounce(K):
    c = build(ProtocolSpec("coherent_bounce", K=K))
    assert trace_coherent(c, "D", EPS) == pytest.approx(K ** 2 * EPS ** 2)
    assert trace_incoherent(c, "D", EPS) == pytest.approx(K * EPS ** 2)


def test_asb_alice_and_all_legit():
    N = 32
    rep = trace_combined(build(ProtocolSpec("asb_chain", N=N)), EPS)
    assert rep.alice_only == pytest.approx(N * EPS ** 2 / 8, rel=10 / N)
    assert rep.combined > rep.alice_only
    assert rep.combined == pytest.approx(N * EPS ** 2 / 2, rel=10 / N)


def test_zeno_small_against_oracle():
    c = build(ProtocolSpec("zeno", M=2, N=4))
    eps = 1e-3
    for model, coherent in (("incoherent", False), ("coherent", True)):
        rep = trace_combined(c, eps, model)
        assert rep.combined == pytest.approx(oracle_run(c, eps, coherent=coherent).legit_combined(c), abs=5 * eps ** 4)


def test_epsilon_bounds():
    c = build(ProtocolSpec("reference"))
    with pytest.raises(ValidationError):
        trace_combined(c, 0.0)
    with pytest.raises(ValidationError):
        trace_combined(c, 0.2)
    with pytest.raises(ValidationError):
        trace_combined(c, EPS, model="bogus")


def test_trace_exact_matches_first_order_small():
    c = build(ProtocolSpec("nested_mzi"))
    assert trace_exact(c, EPS) == pytest.approx(trace_combined(c, EPS).combined, abs=5 * EPS ** 4)


def test_power_law_fit_recovers_exponent():
    xs = [0.1, 0.05, 0.025]
    c, k = power_law_fit(xs, [3 * x ** 4 for x in xs])
    assert k == pytest.approx(4.0) and c == pytest.approx(3.0)


@pytest.mark.parametrize("name", ["av_nested", "av_two_way"])
def test_av_trace_is_fourth_order(name):
    c = build(ProtocolSpec(name))
    rep = trace_combined(c, EPS)
    for o in rep.per_outcome.values():
        if not o.singular:
            assert o.joint == pytest.approx(0.0, abs=1e-20)
    fit = second_order_fit(c)
    assert rep.combined <= fit["C"] * EPS ** 4 * 1.01
    assert fit["slope"] == pytest.approx(4.0, abs=0.05)
    for e, v in zip(fit["epsilon"], fit["trace"]):
        assert v <= fit["C"] * e ** 4 * (1 + 1e-12)


def test_report_serializes():
    d = trace_combined(build(ProtocolSpec("two_way")), EPS).to_dict()
    assert set(d["per_outcome"]) == {"D0", "D1"}
    assert math.isfinite(d["ratio"])
