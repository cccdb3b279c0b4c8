"""Layered optical circuits and their forward/backward evolution.

A circuit is an ordered list of time slices. Each slice holds elements acting
on disjoint path modes; paths not touched by a slice pass through unchanged.
State ``k`` of an evolution record is the state *before* slice ``k`` (so the
record has ``len(slices) + 1`` entries and the last one is the final state).

Beam splitters use the single real symmetric convention

    [out_a]   [cos a   sin a] [in_a]
    [out_b] = [sin a  -cos a] [in_b]

Any other phase convention is built from explicit :class:`Mirror` phases.
"""
from __future__ import annotations

import cmath
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field, fields
from typing import Iterable

from .errors import ValidationError
from .state import H, V, CovectorState, ModeLabel, PureState

LOST = "lost"


# --------------------------------------------------------------------------
# elements

@dataclass(frozen=True)
class BeamSplitter:
    in_a: str
    in_b: str
    out_a: str
    out_b: str
    angle: float

    @property
    def inputs(self):
        return (self.in_a, self.in_b)

    @property
    def outputs(self):
        return (self.out_a, self.out_b)

    def forward(self, label, amp, ctx):
        c, s = math.cos(self.angle), math.sin(self.angle)
        if label.path == self.in_a:
            return [(label._replace(path=self.out_a), c * amp), (label._replace(path=self.out_b), s * amp)]
        return [(label._replace(path=self.out_a), s * amp), (label._replace(path=self.out_b), -c * amp)]

    def transpose(self, label, amp, ctx):
        c, s = math.cos(self.angle), math.sin(self.angle)
        if label.path == self.out_a:
            return [(label._replace(path=self.in_a), c * amp), (label._replace(path=self.in_b), s * amp)]
        return [(label._replace(path=self.in_a), s * amp), (label._replace(path=self.in_b), -c * amp)]


@dataclass(frozen=True)
class Mirror:
    inp: str
    out: str
    phase: float = 0.0

    @property
    def inputs(self):
        return (self.inp,)

    @property
    def outputs(self):
        return (self.out,)

    def _factor(self):
        f = cmath.rect(1.0, self.phase)
        # keep exact signs for phases that are multiples of pi/2
        return complex(round(f.real, 15), round(f.imag, 15))

    def forward(self, label, amp, ctx):
        return [(label._replace(path=self.out), self._factor() * amp if self.phase else amp)]

    def transpose(self, label, amp, ctx):
        return [(label._replace(path=self.inp), self._factor() * amp if self.phase else amp)]


@dataclass(frozen=True)
class Absorber:
    """Bob's block: amplitude on ``path`` is removed (counted as lost)."""

    path: str

    @property
    def inputs(self):
        return (self.path,)

    @property
    def outputs(self):
        return (self.path,)

    def forward(self, label, amp, ctx):
        ctx["lost"] += abs(amp) ** 2
        return []

    def transpose(self, label, amp, ctx):
        return []


@dataclass(frozen=True)
class EnvCoupler:
    """Weak coupling of the path to a two-level environment system.

    chi -> sqrt(1-eps^2) chi + eps chi_perp (and the orthogonal completion on
    chi_perp). ``epsilon=None`` takes the run-wide value.
    """

    path: str
    site: str
    epsilon: float | None = None

    @property
    def inputs(self):
        return (self.path,)

    @property
    def outputs(self):
        return (self.path,)

    def _params(self, ctx):
        eps = ctx["epsilon"] if self.epsilon is None else self.epsilon
        if ctx["coupled"] is not None and self.site not in ctx["coupled"]:
            eps = 0.0
        key = ctx["env_keys"].get(self.site, self.site)
        return eps, key

    def forward(self, label, amp, ctx):
        eps, key = self._params(ctx)
        if eps == 0.0:
            return [(label, amp)]
        level = label.env_level(key)
        if ctx["env_mode"] == "counter":
            return [(label.with_env(key, level + 1), amp)]
        a = math.sqrt(1.0 - eps * eps)
        if level == 0:
            return [(label, a * amp), (label.with_env(key, 1), eps * amp)]
        return [(label.with_env(key, 0), -eps * amp), (label, a * amp)]

    def transpose(self, label, amp, ctx):
        eps, key = self._params(ctx)
        if eps == 0.0:
            return [(label, amp)]
        if ctx["env_mode"] == "counter":
            raise ValidationError("counter environments have no backward evolution")
        a = math.sqrt(1.0 - eps * eps)
        if label.env_level(key) == 0:
            return [(label, a * amp), (label.with_env(key, 1), -eps * amp)]
        return [(label.with_env(key, 0), eps * amp), (label, a * amp)]


@dataclass(frozen=True)
class PolRotator:
    """Polarization distortion at a Bob site; active only for distorted sites."""

    path: str
    site: str
    theta_key: str = "theta"

    @property
    def inputs(self):
        return (self.path,)

    @property
    def outputs(self):
        return (self.path,)

    def _angle(self, ctx):
        if self.site not in ctx["distorted"]:
            return 0.0
        return ctx["theta"]

    def forward(self, label, amp, ctx):
        th = self._angle(ctx)
        if th == 0.0:
            return [(label, amp)]
        c, s = math.cos(th), math.sin(th)
        if label.pol == H:
            return [(label, c * amp), (label._replace(pol=V), s * amp)]
        return [(label._replace(pol=H), -s * amp), (label, c * amp)]

    def transpose(self, label, amp, ctx):
        th = self._angle(ctx)
        if th == 0.0:
            return [(label, amp)]
        c, s = math.cos(th), math.sin(th)
        if label.pol == H:
            return [(label, c * amp), (label._replace(pol=V), -s * amp)]
        return [(label._replace(pol=H), s * amp), (label, c * amp)]


@dataclass(frozen=True)
class Relabel:
    src: str
    dst: str

    @property
    def inputs(self):
        return (self.src,)

    @property
    def outputs(self):
        return (self.dst,)

    def forward(self, label, amp, ctx):
        return [(label._replace(path=self.dst), amp)]

    def transpose(self, label, amp, ctx):
        return [(label._replace(path=self.src), amp)]


ELEMENT_TYPES = {cls.__name__: cls for cls in (BeamSplitter, Mirror, Absorber, EnvCoupler, PolRotator, Relabel)}


# --------------------------------------------------------------------------
# circuit

@dataclass(frozen=True)
class Site:
    """Position of a Bob (or Alice) interaction region.

    ``slice`` is the index of the slice holding the site's EnvCoupler; its
    PolRotator sits in the following slice. Weak values are evaluated at the
    boundary just before ``slice``.
    """

    site_id: str
    path: str
    slice: int
    owner: str = "Bob"
    coords: tuple = ()


@dataclass(frozen=True)
class Circuit:
    slices: tuple
    source: str
    detectors: dict
    sites: tuple = ()
    legitimate_outcomes: frozenset = frozenset()
    reference_path_count: int = 1
    alice_detectors: frozenset | None = None
    name: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "slices", tuple(tuple(s) for s in self.slices))
        object.__setattr__(self, "sites", tuple(self.sites))
        object.__setattr__(self, "legitimate_outcomes", frozenset(self.legitimate_outcomes))
        if self.alice_detectors is None:
            object.__setattr__(self, "alice_detectors", frozenset(self.legitimate_outcomes))
        else:
            object.__setattr__(self, "alice_detectors", frozenset(self.alice_detectors))

    @property
    def bob_sites(self):
        return tuple(s for s in self.sites if s.owner == "Bob")

    def site(self, site_id: str) -> Site:
        for s in self.sites:
            if s.site_id == site_id:
                return s
        raise KeyError(site_id)

    def validate(self) -> "Circuit":
        validate(self)
        return self

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "source": self.source,
            "detectors": dict(self.detectors),
            "legitimate_outcomes": sorted(self.legitimate_outcomes),
            "alice_detectors": sorted(self.alice_detectors),
            "reference_path_count": self.reference_path_count,
            "sites": [
                {"site_id": s.site_id, "path": s.path, "slice": s.slice, "owner": s.owner, "coords": list(s.coords)}
                for s in self.sites
            ],
            "slices": [[{"type": type(e).__name__, **asdict(e)} for e in sl] for sl in self.slices],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Circuit":
        try:
            slices = []
            for sl in doc["slices"]:
                row = []
                for rec in sl:
                    rec = dict(rec)
                    etype = ELEMENT_TYPES[rec.pop("type")]
                    names = {f.name for f in fields(etype)}
                    unknown = set(rec) - names
                    if unknown:
                        raise ValidationError(f"unknown fields {sorted(unknown)} for {etype.__name__}")
                    row.append(etype(**rec))
                slices.append(tuple(row))
            sites = tuple(
                Site(s["site_id"], s["path"], int(s["slice"]), s.get("owner", "Bob"), tuple(s.get("coords", ())))
                for s in doc.get("sites", ())
            )
            return cls(
                slices=tuple(slices),
                source=doc["source"],
                detectors=dict(doc["detectors"]),
                sites=sites,
                legitimate_outcomes=frozenset(doc.get("legitimate_outcomes", ())),
                reference_path_count=int(doc.get("reference_path_count", 1)),
                alice_detectors=frozenset(doc["alice_detectors"]) if "alice_detectors" in doc else None,
                name=doc.get("name", ""),
                metadata=dict(doc.get("metadata", {})),
            )
        except KeyError as exc:
            raise ValidationError(f"circuit document missing or unknown key: {exc}") from exc

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text: str) -> "Circuit":
        return cls.from_dict(json.loads(text))


def validate(circuit: Circuit) -> None:
    live = {circuit.source}
    for k, sl in enumerate(circuit.slices):
        ins, outs = [], []
        for e in sl:
            if type(e).__name__ not in ELEMENT_TYPES:
                raise ValidationError(f"slice {k}: unknown element {e!r}")
            ins.extend(e.inputs)
            outs.extend(e.outputs)
        if len(set(ins)) != len(ins):
            raise ValidationError(f"slice {k}: elements share an input path")
        if len(set(outs)) != len(outs):
            raise ValidationError(f"slice {k}: elements share an output path")
        passing = live - set(ins)
        clash = passing & set(outs)
        if clash:
            raise ValidationError(f"slice {k}: outputs {sorted(clash)} collide with untouched live paths")
        live = passing | set(outs)
    det_paths = list(circuit.detectors.values())
    if len(set(det_paths)) != len(det_paths):
        raise ValidationError("two detectors share a path")
    missing = set(det_paths) - live
    if missing:
        raise ValidationError(f"detector paths {sorted(missing)} are not outputs of the circuit")
    undetected = live - set(det_paths)
    if undetected:
        raise ValidationError(f"terminal paths without detector: {sorted(undetected)}")
    if not circuit.legitimate_outcomes <= set(circuit.detectors):
        raise ValidationError("legitimate_outcomes must be a subset of detector ids")
    if not circuit.alice_detectors <= circuit.legitimate_outcomes:
        raise ValidationError("alice_detectors must be legitimate outcomes")
    if circuit.reference_path_count < 1:
        raise ValidationError("reference_path_count must be positive")
    ids = [s.site_id for s in circuit.sites]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate site ids")
    for s in circuit.sites:
        if not 0 <= s.slice < len(circuit.slices) - 1:
            raise ValidationError(f"site {s.site_id}: slice {s.slice} out of range")
        coupler = [e for e in circuit.slices[s.slice] if isinstance(e, EnvCoupler) and e.site == s.site_id]
        rot = [e for e in circuit.slices[s.slice + 1] if isinstance(e, PolRotator) and e.site == s.site_id]
        if not coupler or coupler[0].path != s.path or not rot or rot[0].path != s.path:
            raise ValidationError(f"site {s.site_id}: no coupler/rotator pair on path {s.path} at slice {s.slice}")
        if s.owner not in ("Alice", "Bob"):
            raise ValidationError(f"site {s.site_id}: owner must be Alice or Bob")


# --------------------------------------------------------------------------
# evolution

@dataclass
class EvolutionRecord:
    states: list
    final: PureState


def _context(epsilon, theta, distorted_sites, env_mode="qubit", env_keys=None, coupled_sites=None):
    if not (0.0 <= epsilon < 0.5):
        raise ValidationError(f"epsilon must lie in [0, 0.5), got {epsilon}")
    if abs(theta) >= 0.5:
        raise ValidationError(f"|theta| must be below 0.5, got {theta}")
    return {
        "epsilon": float(epsilon),
        "theta": float(theta),
        "distorted": frozenset(distorted_sites or ()),
        "env_mode": env_mode,
        "env_keys": dict(env_keys or {}),
        "coupled": None if coupled_sites is None else frozenset(coupled_sites),
        "lost": 0.0,
    }


def _apply(amps: dict, sl, ctx, transpose: bool, max_excitations=None) -> dict:
    by_path = {}
    for e in sl:
        for p in (e.outputs if transpose else e.inputs):
            by_path[p] = e
    out = defaultdict(complex)
    for label, amp in amps.items():
        e = by_path.get(label.path)
        if e is None:
            out[label] += amp
            continue
        action = e.transpose if transpose else e.forward
        for lab, a in action(label, amp, ctx):
            if max_excitations is not None and len(lab.env) > max_excitations:
                continue
            out[lab] += a
    return out


def evolve_forward(circuit: Circuit, epsilon: float = 0.0, theta: float = 0.0, distorted_sites=(),
                   *, record: bool = True, max_excitations=None, **options) -> EvolutionRecord:
    """Push the source state through every slice.

    ``max_excitations`` truncates the environment expansion (labels with more
    disturbed environment systems are dropped), which keeps first- and
    second-order runs on large circuits cheap. ``None`` means exact.
    """
    ctx = _context(epsilon, theta, distorted_sites, **options)
    state = PureState.basis(circuit.source)
    states = [state] if record else []
    amps = dict(state.amplitudes)
    lost = 0.0
    for sl in circuit.slices:
        ctx["lost"] = 0.0
        amps = _apply(amps, sl, ctx, transpose=False, max_excitations=max_excitations)
        lost += ctx["lost"]
        state = PureState(amps, lost)
        amps = state.amplitudes
        if record:
            states.append(state)
    return EvolutionRecord(states, state)


def evolve_backward(circuit: Circuit, detector: str, epsilon: float = 0.0, theta: float = 0.0,
                    distorted_sites=(), pol: str = H, **options) -> list:
    """Backward-evolving covectors, one per slice boundary (same indexing as forward)."""
    if detector not in circuit.detectors:
        raise ValidationError(f"unknown detector {detector!r}")
    ctx = _context(epsilon, theta, distorted_sites, **options)
    bra = CovectorState.basis(circuit.detectors[detector], pol)
    out = [bra]
    amps = dict(bra.amplitudes)
    for sl in reversed(circuit.slices):
        amps = _apply(amps, sl, ctx, transpose=True)
        bra = CovectorState(amps)
        amps = bra.amplitudes
        out.append(bra)
    out.reverse()
    return out


def outcome_distribution(circuit: Circuit, epsilon: float = 0.0, theta: float = 0.0, distorted_sites=(),
                         final: PureState | None = None, **options) -> dict:
    """Probabilities of (detector, polarization) outcomes plus ``"lost"``."""
    if final is None:
        final = evolve_forward(circuit, epsilon, theta, distorted_sites, record=False, **options).final
    path_to_det = {p: d for d, p in circuit.detectors.items()}
    probs = {(d, pol): 0.0 for d in circuit.detectors for pol in (H, V)}
    for label, amp in final.amplitudes.items():
        probs[(path_to_det[label.path], label.pol)] += abs(amp) ** 2
    probs[LOST] = final.lost_weight
    return probs


def outcome_key(outcome) -> str:
    return outcome if isinstance(outcome, str) else f"{outcome[0]}:{outcome[1]}"


def iter_elements(circuit: Circuit) -> Iterable:
    for sl in circuit.slices:
        yield from sl
