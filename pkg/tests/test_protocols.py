import math

import pytest

from cfsim.circuit import LOST, evolve_forward, outcome_distribution
from cfsim.errors import ValidationError
from cfsim.protocols import PROTOCOLS, ProtocolSpec, bob_sites, build
from cfsim.state import H
from cfsim.tsvf import TwoStateEngine


@pytest.mark.parametrize("name", PROTOCOLS)
@pytest.mark.parametrize("blocked", [False, True])
def test_every_protocol_builds(name, blocked):
    c = build(ProtocolSpec(name, M=2, N=4, K=3, blocked=blocked))
    dist = outcome_distribution(c)
    assert sum(dist.values()) == pytest.approx(1.0, abs=1e-12)
    assert c.legitimate_outcomes <= set(c.detectors)


@pytest.mark.parametrize("doc, field", [
    ({"name": "nope"}, "protocol"),
    ({"name": "zeno", "M": 3, "N": 4}, "N, M"),
    ({"name": "zeno", "M": 1, "N": 4}, "N, M"),
    ({"name": "asb_chain", "N": 1}, "N"),
    ({"name": "k_path", "K": 0}, "K"),
    ({"name": "k_path", "K": "x"}, "K"),
    ({"name": "k_path", "Q": 1}, "protocol"),
])
def test_spec_validation(doc, field):
    with pytest.raises(ValidationError, match=field):
        ProtocolSpec.from_dict(doc)


def test_spec_round_trip():
    spec = ProtocolSpec("zeno", M=4, N=32, blocked=True)
    assert ProtocolSpec.from_dict(spec.to_dict()) == spec


def test_ev_ifm_distributions():
    blocked = outcome_distribution(build(ProtocolSpec("ev_ifm", blocked=True)))
    assert blocked[("D", H)] == pytest.approx(0.25, abs=1e-12)
    assert blocked[("bright", H)] == pytest.approx(0.25, abs=1e-12)
    assert blocked[LOST] == pytest.approx(0.5, abs=1e-12)
    assert outcome_distribution(build(ProtocolSpec("ev_ifm")))[("D", H)] < 1e-20


def test_nested_mzi_conditions():
    assert outcome_distribution(build(ProtocolSpec("nested_mzi", blocked=True)))[("D", H)] < 1e-20
    open_ = outcome_distribution(build(ProtocolSpec("nested_mzi")))
    assert open_[("exit", H)] == pytest.approx(2 / 3)
    assert open_[("D", H)] == pytest.approx(1 / 9)


def test_two_way_amplitudes():
    c = build(ProtocolSpec("two_way"))
    eng = TwoStateEngine(c)
    k = c.site("B").slice
    fwd = eng.forward[k]
    want = {"B": 4, "A": 4, "C1": 1, "C2": math.sqrt(2)}
    for path, a in want.items():
        assert fwd.path_amplitude(path) == pytest.approx(a / math.sqrt(35), abs=1e-10)
    d0 = {"B": 1 / math.sqrt(8), "A": -1 / math.sqrt(8), "C1": 1 / math.sqrt(2), "C2": 0.5}
    d1 = {"B": -1 / math.sqrt(8), "A": 1 / math.sqrt(8), "C1": 1 / math.sqrt(2), "C2": -0.5}
    for det, want_b in (("D0", d0), ("D1", d1)):
        bwd = eng.backward(det)[k]
        for path, a in want_b.items():
            assert bwd.path_amplitude(path) == pytest.approx(a, abs=1e-10)
    assert outcome_distribution(c)[("D0", H)] == pytest.approx(2 / 35)
    assert abs(eng.overlap("D1")) < 1e-15


def test_two_way_blocked_d0_dark():
    assert outcome_distribution(build(ProtocolSpec("two_way", blocked=True)))[("D0", H)] < 1e-20


@pytest.mark.parametrize("M, N", [(4, 16), (8, 64)])
def test_zeno_forward_checkpoints(M, N):
    c = build(ProtocolSpec("zeno", M=M, N=N))
    eng = TwoStateEngine(c)
    a = math.pi / (2 * M)
    for s in c.bob_sites:
        m, n = s.coords
        fwd = eng.forward[s.slice]
        want = math.cos(a) ** (m - 1) * math.sin(a) * math.sin(n * math.pi / (2 * N))
        assert fwd.path_amplitude(s.path) == pytest.approx(want, abs=1e-10)
        assert fwd.path_amplitude("C") == pytest.approx(math.cos(a) ** m, abs=1e-10)


@pytest.mark.parametrize("M, N", [(4, 16), (8, 64)])
def test_zeno_backward_checkpoints(M, N):
    # the closing outer splitter adds one cos(pi/2M) factor per chain
    c = build(ProtocolSpec("zeno", M=M, N=N))
    eng = TwoStateEngine(c)
    a = math.pi / (2 * M)
    bwd = eng.backward("D0")
    for s in c.bob_sites:
        m, n = s.coords
        want = math.cos(a) ** (M - m) * math.sin(a) * math.cos(n * math.pi / (2 * N))
        assert bwd[s.slice].path_amplitude(s.path) == pytest.approx(want, abs=1e-10)


def test_zeno_open_probabilities():
    M, N = 8, 64
    dist = outcome_distribution(build(ProtocolSpec("zeno", M=M, N=N)))
    assert dist[("D0", H)] >= 1 - math.pi ** 2 / (4 * M) - 1 / N
    want = math.pi ** 2 / (4 * M ** 2)
    assert abs(dist[("D1", H)] - want) <= 10 / M * want


def test_zeno_blocked_d0_suppressed():
    ps = [outcome_distribution(build(ProtocolSpec("zeno", M=M, N=8 * M, blocked=True)))[("D0", H)]
          for M in (4, 8, 16)]
    assert ps[0] > ps[1] > ps[2]
    assert ps[2] < 0.01


@pytest.mark.parametrize("N", [2, 16, 33])
def test_asb_blocked_alice_click(N):
    dist = outcome_distribution(build(ProtocolSpec("asb_chain", N=N, blocked=True)))
    assert dist[("D", H)] == pytest.approx(math.cos(math.pi / (2 * N)) ** (2 * N), abs=1e-12)


def test_asb_open_leaves_through_out():
    dist = outcome_distribution(build(ProtocolSpec("asb_chain", N=16)))
    assert dist[("out", H)] == pytest.approx(1.0)


@pytest.mark.parametrize("K", [1, 2, 3, 8])
def test_k_path_equal_split(K):
    c = build(ProtocolSpec("k_path", K=K))
    eng = TwoStateEngine(c)
    for s in c.bob_sites:
        assert abs(eng.forward[s.slice].path_amplitude(s.path)) ** 2 == pytest.approx(1 / K)
    assert outcome_distribution(c)[("D", H)] == pytest.approx(1.0)


@pytest.mark.parametrize("name", ["av_nested", "av_two_way"])
def test_av_separation(name):
    c = build(ProtocolSpec(name))
    eng = TwoStateEngine(c)
    b1, b2 = c.site("B1"), c.site("B2")
    assert eng.forward[b2.slice].path_amplitude(b2.path) == 0
    for det in c.legitimate_outcomes:
        assert eng.backward(det)[b1.slice].path_amplitude(b1.path) == 0
    assert abs(eng.forward[b1.slice].path_amplitude(b1.path)) > 0.1


def test_av_nested_blocked_dark():
    assert outcome_distribution(build(ProtocolSpec("av_nested", blocked=True)))[("D", H)] < 1e-20


def test_av_two_way_dark_ports():
    assert outcome_distribution(build(ProtocolSpec("av_two_way")))[("D1", H)] < 1e-20
    assert outcome_distribution(build(ProtocolSpec("av_two_way", blocked=True)))[("D0", H)] < 1e-20


def test_bob_site_registries():
    assert [s.site_id for s in bob_sites(ProtocolSpec("ev_ifm"))] == ["B"]
    assert [s.site_id for s in bob_sites(ProtocolSpec("av_nested"))] == ["B1", "B2"]
    z = bob_sites(ProtocolSpec("zeno", M=4, N=8))
    assert len(z) == 32
    assert {s.coords for s in z} == {(m, n) for m in range(1, 5) for n in range(1, 9)}
    assert len(bob_sites(ProtocolSpec("av_zeno", M=2, N=4))) == 16


def test_zeno_reference_count():
    assert build(ProtocolSpec("zeno", M=4, N=8)).reference_path_count == 32
    assert build(ProtocolSpec("av_zeno", M=2, N=4)).reference_path_count == 16


def test_blocked_circuits_absorb():
    fin = evolve_forward(build(ProtocolSpec("coherent_bounce", K=3, blocked=True)), record=False).final
    assert fin.lost_weight == pytest.approx(1.0)
