"""Builders for the catalog of counterfactual-communication circuits.

Every builder returns a validated :class:`~cfsim.circuit.Circuit` whose
``legitimate_outcomes`` are the detector events the protocol accepts and whose
Bob sites carry an EnvCoupler/PolRotator pair. Free parameters that had to be
chosen (splitting ratios not fixed by the defining interference conditions)
are recorded in ``circuit.metadata``.

Conventions shared by all builders:

* A "rotation" splitter (``_Builder.rotation``) is a beam splitter preceded by
  a pi phase on its second input, so that ``a -> cos(x) a' + sin(x) b'`` and
  ``b -> -sin(x) a' + cos(x) b'``; consecutive rotations add their angles.
  Zeno chains are built from these.
* Each site occupies two slices (coupler, then rotator), optionally followed
  by an Absorber when Bob blocks.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .circuit import Absorber, BeamSplitter, Circuit, EnvCoupler, Mirror, PolRotator, Relabel, Site
from .circuit import evolve_backward, evolve_forward, outcome_distribution
from .errors import ValidationError
from .state import H

PROTOCOLS = (
    "reference", "ev_ifm", "nested_mzi", "two_way", "zeno", "k_path", "asb_chain",
    "coherent_bounce", "av_nested", "av_two_way", "av_zeno",
)

QUARTER = math.pi / 4


@dataclass(frozen=True)
class ProtocolSpec:
    name: str
    M: int = 8
    N: int = 64
    K: int = 4
    blocked: bool = False

    def validate(self) -> "ProtocolSpec":
        if self.name not in PROTOCOLS:
            raise ValidationError(f"protocol: unknown name {self.name!r}; expected one of {', '.join(PROTOCOLS)}")
        for key in ("M", "N", "K"):
            if not isinstance(getattr(self, key), int) or getattr(self, key) < 1:
                raise ValidationError(f"{key}: must be a positive integer")
        if self.name in ("zeno", "av_zeno") and not (self.N >= 2 * self.M and self.M >= 2):
            raise ValidationError("N, M: zeno protocols require N >= 2M >= 4")
        if self.name == "asb_chain" and self.N < 2:
            raise ValidationError("N: asb_chain requires N >= 2")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ProtocolSpec":
        known = {"name", "M", "N", "K", "blocked"}
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"protocol: unknown fields {sorted(unknown)}")
        if "name" not in doc:
            raise ValidationError("protocol: name is required")
        vals = dict(doc)
        for key in ("M", "N", "K"):
            if key in vals:
                try:
                    vals[key] = int(vals[key])
                except (TypeError, ValueError) as exc:
                    raise ValidationError(f"{key}: must be an integer") from exc
        if "blocked" in vals:
            vals["blocked"] = bool(vals["blocked"])
        return cls(**vals).validate()


class _Builder:
    def __init__(self, source: str):
        self.source = source
        self.slices = []
        self.sites = []
        self.fresh = 0

    def add(self, *elements):
        self.slices.append(tuple(elements))
        return len(self.slices) - 1

    def vacuum(self) -> str:
        self.fresh += 1
        return f"vac{self.fresh}"

    def rotation(self, a, b, a_out, b_out, angle):
        """Rotation splitter; ``b=None`` means an empty input port."""
        if b is None:
            b = self.vacuum()
        else:
            self.add(Mirror(b, b, math.pi))
        self.add(BeamSplitter(a, b, a_out, b_out, angle))

    def site_group(self, entries, blocked=False):
        """``entries``: iterable of (site_id, path, owner, coords); all share one slice."""
        entries = list(entries)
        k = self.add(*(EnvCoupler(path, sid) for sid, path, _, _ in entries))
        self.add(*(PolRotator(path, sid) for sid, path, _, _ in entries))
        out = []
        for sid, path, owner, coords in entries:
            site = Site(sid, path, k, owner, tuple(coords))
            self.sites.append(site)
            out.append(site)
        blocks = [Absorber(path) for sid, path, owner, _ in entries if blocked and owner == "Bob"]
        if blocks:
            self.add(*blocks)
        return out

    def site(self, sid, path, blocked=False, owner="Bob", coords=()):
        return self.site_group([(sid, path, owner, coords)], blocked)[0]

    def circuit(self, detectors, legit, K=1, alice=None, name="", **metadata) -> Circuit:
        return Circuit(
            slices=tuple(self.slices), source=self.source, detectors=detectors, sites=tuple(self.sites),
            legitimate_outcomes=frozenset(legit), reference_path_count=K,
            alice_detectors=None if alice is None else frozenset(alice), name=name, metadata=metadata,
        ).validate()


# --------------------------------------------------------------------------
# single-path and small interferometers

def reference() -> Circuit:
    b = _Builder("B")
    b.site("B", "B")
    return b.circuit({"D": "B"}, {"D"}, name="reference")


def ev_ifm(blocked: bool) -> Circuit:
    b = _Builder("src")
    b.add(BeamSplitter("src", b.vacuum(), "A", "B", QUARTER))
    b.site("B", "B", blocked)
    b.add(BeamSplitter("A", "B", "bright", "D", QUARTER))
    return b.circuit({"D": "D", "bright": "bright"}, {"D"}, name="ev_ifm")


def nested_mzi(blocked: bool) -> Circuit:
    # outer 1:2 split so that |psi> = (C + B + A)/sqrt3 at the intermediate time
    outer = math.acos(1 / math.sqrt(3))
    b = _Builder("src")
    b.add(BeamSplitter("src", b.vacuum(), "C", "R", outer))
    b.add(BeamSplitter("R", b.vacuum(), "B", "A", QUARTER))
    b.site_group([("B", "B", "Bob", ()), ("C", "C", "Alice", ()), ("A", "A", "Alice", ())], blocked)
    b.add(BeamSplitter("B", "A", "exit", "r", QUARTER))
    b.add(BeamSplitter("C", "r", "D", "Dp", outer))
    return b.circuit({"D": "D", "Dp": "Dp", "exit": "exit"}, {"D"}, name="nested_mzi", outer_angle=outer)


def _two_way_tail(b: _Builder):
    """Recombine (r, C1, C2) into D0, D1 and a third (illegitimate) port."""
    b.add(BeamSplitter("r", "C2", "u", "Lp", QUARTER))
    b.add(BeamSplitter("C1", "u", "D0", "D1", QUARTER))


def two_way(blocked: bool) -> Circuit:
    # left arm weight 3/35 (reflectivity 3:32), then C1:C2 = 1:2; right arm 50:50
    first = math.atan(math.sqrt(32 / 3))
    left = math.atan(math.sqrt(2))
    b = _Builder("src")
    b.add(BeamSplitter("src", b.vacuum(), "L", "R", first))
    b.add(BeamSplitter("L", b.vacuum(), "C1", "C2", left), BeamSplitter("R", b.vacuum(), "B", "A", QUARTER))
    b.site_group([("B", "B", "Bob", ()), ("A", "A", "Alice", ()), ("C1", "C1", "Alice", ()),
                  ("C2", "C2", "Alice", ())], blocked)
    b.add(BeamSplitter("B", "A", "exit", "r", QUARTER))
    _two_way_tail(b)
    return b.circuit({"D0": "D0", "D1": "D1", "exit": "exit", "Lp": "Lp"}, {"D0", "D1"}, name="two_way",
                     first_angle=first, left_angle=left)


# --------------------------------------------------------------------------
# AV modifications of the small interferometers

def _av_mzi(b: _Builder, inp: str, tag: str, blocked: bool) -> str:
    """Inner MZI that sends everything to its exit port when open; returns the through port."""
    x, y = f"X{tag}", f"Y{tag}"
    b.add(BeamSplitter(inp, b.vacuum(), x, y, QUARTER))
    b.site(tag, x, blocked)
    b.add(BeamSplitter(x, y, f"exit{tag}", f"th{tag}", QUARTER))
    return f"th{tag}"


def av_nested(blocked: bool) -> Circuit:
    # blocked transmission through both inner MZIs is 1/4; outer 50:50 and a
    # final splitter with tan(beta) = 1/4 make D dark in that case
    final = math.atan(0.25)
    b = _Builder("src")
    b.add(BeamSplitter("src", b.vacuum(), "C", "R", QUARTER))
    th1 = _av_mzi(b, "R", "B1", blocked)
    th2 = _av_mzi(b, th1, "B2", blocked)
    b.add(BeamSplitter("C", th2, "Dp", "D", final))
    return b.circuit({"D": "D", "Dp": "Dp", "exitB1": "exitB1", "exitB2": "exitB2"}, {"D"},
                     name="av_nested", outer_angle=QUARTER, final_angle=final, inner_angle=QUARTER)


def av_two_way(blocked: bool) -> Circuit:
    # blocked return amplitude is R/4 (instead of -R/2), so the first split
    # becomes L:R = 3:128 and a pi phase restores the sign of the return port
    first = math.atan(math.sqrt(128 / 3))
    left = math.atan(math.sqrt(2))
    b = _Builder("src")
    b.add(BeamSplitter("src", b.vacuum(), "L", "R", first))
    b.add(BeamSplitter("L", b.vacuum(), "C1", "C2", left))
    th1 = _av_mzi(b, "R", "B1", blocked)
    th2 = _av_mzi(b, th1, "B2", blocked)
    b.add(Mirror(th2, "r", math.pi))
    _two_way_tail(b)
    return b.circuit({"D0": "D0", "D1": "D1", "Lp": "Lp", "exitB1": "exitB1", "exitB2": "exitB2"},
                     {"D0", "D1"}, name="av_two_way", first_angle=first, left_angle=left, inner_angle=QUARTER)


# --------------------------------------------------------------------------
# Zeno chains

def _inner_chain(b: _Builder, a_path: str, tag: str, m: int, N: int, blocked: bool, coords_prefix=()):
    """N rotations by pi/2N from ``a_path`` into Bob's arm; the arm after the
    last splitter leaves through terminal ``exit{tag}``."""
    alpha = math.pi / (2 * N)
    prev = None
    for n in range(1, N + 1):
        arm = f"B{tag}_{n}" if n < N else f"exit{tag}"
        b.rotation(a_path, prev, a_path, arm, alpha)
        b.site(f"{tag}_{n}" if not coords_prefix else f"{tag}_{n}", arm, blocked, coords=(m, *coords_prefix, n))
        prev = arm
    return f"exit{tag}"


def _zeno(M: int, N: int, blocked: bool, doubled: bool) -> Circuit:
    alpha = math.pi / (2 * M)
    b = _Builder("C")
    exits = {}
    prev_a = None
    for m in range(1, M + 1):
        a = f"A{m}"
        b.rotation("C", prev_a, "C", a, alpha)
        if doubled:
            ex = _inner_chain(b, a, f"{m}.1", m, N, blocked, coords_prefix=(1,))
            exits[ex] = ex
            a2 = f"A{m}.2"
            b.add(Mirror(a, a2))
            ex = _inner_chain(b, a2, f"{m}.2", m, N, blocked, coords_prefix=(2,))
            exits[ex] = ex
            a = a2
        else:
            ex = _inner_chain(b, a, f"{m}", m, N, blocked)
            exits[ex] = ex
        prev_a = a
    b.rotation("C", prev_a, "D0", "D1", alpha)
    paths = 2 * M * N if doubled else M * N
    return b.circuit({"D0": "D0", "D1": "D1", **exits}, {"D0", "D1"}, K=paths,
                     name="av_zeno" if doubled else "zeno", M=M, N=N, outer_angle=alpha,
                     inner_angle=math.pi / (2 * N))


def zeno(M: int, N: int, blocked: bool) -> Circuit:
    return _zeno(M, N, blocked, doubled=False)


def av_zeno(M: int, N: int, blocked: bool) -> Circuit:
    return _zeno(M, N, blocked, doubled=True)


def asb_chain(N: int, blocked: bool) -> Circuit:
    """Single Zeno chain; no click at Alice (probe leaves through ``out``) is
    the legitimate bit-0 event, so ``out`` is legitimate but not Alice's."""
    alpha = math.pi / (2 * N)
    b = _Builder("A")
    prev = None
    for n in range(1, N + 1):
        arm = f"B{n}" if n < N else "out"
        b.rotation("A", prev, "A", arm, alpha)
        if n < N:
            b.site(f"B{n}", arm, blocked, coords=(n,))
        prev = arm
    return b.circuit({"D": "A", "out": "out"}, {"D", "out"}, K=N, alice={"D"}, name="asb_chain", N=N,
                     inner_angle=alpha)


# --------------------------------------------------------------------------
# multi-path references

def k_path(K: int, blocked: bool) -> Circuit:
    """Equal K-way split onto Bob's mirror and the mirror-image recombination."""
    b = _Builder("T0")
    trunk = "T0"
    angles = []
    for j in range(1, K):
        ang = math.acos(1 / math.sqrt(K - j + 1))
        angles.append(ang)
        b.add(BeamSplitter(trunk, b.vacuum(), f"P{j}", f"T{j}", ang))
        trunk = f"T{j}"
    b.add(Relabel(trunk, f"P{K}"))
    b.site_group([(f"P{k}", f"P{k}", "Bob", (k,)) for k in range(1, K + 1)], blocked)
    b.add(Relabel(f"P{K}", f"R{K - 1}"))
    detectors = {}
    for j in range(K - 1, 0, -1):
        b.add(BeamSplitter(f"P{j}", f"R{j}", f"R{j - 1}", f"aux{j}", angles[j - 1]))
        detectors[f"aux{j}"] = f"aux{j}"
    detectors["D"] = "R0"
    return b.circuit(detectors, {"D"}, K=K, name="k_path", K_paths=K)


def coherent_bounce(K: int, blocked: bool) -> Circuit:
    """One path meeting Bob's mirror K times in succession."""
    b = _Builder("B")
    for k in range(1, K + 1):
        b.site(f"bounce{k}", "B", blocked, coords=(k,))
    return b.circuit({"D": "B"}, {"D"}, K=1, name="coherent_bounce", bounces=K)


# --------------------------------------------------------------------------
# entry points

def _dark(circuit, detector, tol=1e-20):
    p = outcome_distribution(circuit)[(detector, H)]
    return p < tol, p


def check_interference(spec: ProtocolSpec, circuit: Circuit) -> None:
    """Raise ValidationError if the circuit misses its defining interference condition."""
    name, blocked = spec.name, spec.blocked

    def fail(cond, value):
        raise ValidationError(f"{name}: interference condition violated: {cond} (got {value:.3e})")

    if name == "ev_ifm" and not blocked:
        ok, p = _dark(circuit, "D")
        if not ok:
            fail("dark port D must be dark when open", p)
    elif name == "nested_mzi":
        if blocked:
            ok, p = _dark(circuit, "D")
            if not ok:
                fail("D must be dark when B is blocked", p)
        else:
            r = abs(evolve_forward(circuit, record=False).final.path_amplitude("exit")) ** 2
            if abs(r - 2 / 3) > 1e-12:
                fail("inner MZI must send its whole input to the exit port", r)
    elif name in ("two_way", "av_two_way"):
        ok, p = _dark(circuit, "D0" if blocked else "D1")
        if not ok:
            fail(("D0" if blocked else "D1") + " must be dark", p)
    elif name == "av_nested" and blocked:
        ok, p = _dark(circuit, "D")
        if not ok:
            fail("D must be dark when B1, B2 are blocked", p)
    elif name == "asb_chain" and blocked:
        p = outcome_distribution(circuit)[("D", H)]
        want = math.cos(math.pi / (2 * spec.N)) ** (2 * spec.N)
        if abs(p - want) > 1e-12:
            fail("blocked Alice-click probability must be cos^2N(pi/2N)", abs(p - want))
    elif name == "zeno" and not blocked:
        p = outcome_distribution(circuit)[("D1", H)]
        want = math.pi ** 2 / (4 * spec.M ** 2)
        if abs(p - want) > 10 / spec.M * want:
            fail("open D1 probability must be close to pi^2/4M^2", p)
    if name.startswith("av_") and not blocked:
        _check_av_separation(circuit)


def _check_av_separation(circuit: Circuit) -> None:
    """Open AV circuits: forward misses the second inner region, backward the first."""
    fwd = evolve_forward(circuit).states
    first = [s for s in circuit.bob_sites if _region(s) == 1]
    second = [s for s in circuit.bob_sites if _region(s) == 2]
    for s in second:
        a = abs(fwd[s.slice].path_amplitude(s.path))
        if a > 1e-10:
            raise ValidationError(f"{circuit.name}: forward amplitude {a:.2e} reaches second region at {s.site_id}")
    for det in circuit.legitimate_outcomes:
        bwd = evolve_backward(circuit, det)
        for s in first:
            a = abs(bwd[s.slice].path_amplitude(s.path))
            if a > 1e-10:
                raise ValidationError(f"{circuit.name}: backward amplitude {a:.2e} from {det} reaches {s.site_id}")


def _region(site: Site) -> int:
    if site.site_id in ("B1", "B2"):
        return int(site.site_id[1])
    return site.coords[1]


def build(spec: ProtocolSpec, check: bool = True) -> Circuit:
    spec.validate()
    name = spec.name
    if name == "reference":
        circuit = reference()
    elif name == "ev_ifm":
        circuit = ev_ifm(spec.blocked)
    elif name == "nested_mzi":
        circuit = nested_mzi(spec.blocked)
    elif name == "two_way":
        circuit = two_way(spec.blocked)
    elif name == "zeno":
        circuit = zeno(spec.M, spec.N, spec.blocked)
    elif name == "av_zeno":
        circuit = av_zeno(spec.M, spec.N, spec.blocked)
    elif name == "asb_chain":
        circuit = asb_chain(spec.N, spec.blocked)
    elif name == "k_path":
        circuit = k_path(spec.K, spec.blocked)
    elif name == "coherent_bounce":
        circuit = coherent_bounce(spec.K, spec.blocked)
    elif name == "av_nested":
        circuit = av_nested(spec.blocked)
    else:
        circuit = av_two_way(spec.blocked)
    if check:
        check_interference(spec, circuit)
    return circuit


def bob_sites(spec: ProtocolSpec) -> tuple:
    return build(spec, check=False).bob_sites
