"""Two-state vectors and weak values of path projectors."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

from .circuit import Circuit, evolve_backward, evolve_forward
from .errors import ValidationError
from .state import H, CovectorState, PureState, inner_product

#: |<phi|psi>| below this makes weak values undefined
SINGULAR_OVERLAP = 1e-12


class _Singular:
    """Marker for a weak value with (numerically) vanishing overlap."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "Singular"

    def __reduce__(self):
        return (_Singular, ())


Singular = _Singular()


@dataclass(frozen=True)
class TwoStateVector:
    forward: PureState
    backward: CovectorState
    slice: int

    @property
    def overlap(self) -> complex:
        return inner_product(self.backward, self.forward)

    def weak_value(self, path: str, pol: str = H):
        ov = self.overlap
        if abs(ov) < SINGULAR_OVERLAP:
            return Singular
        return self.backward.path_amplitude(path, pol) * self.forward.path_amplitude(path, pol) / ov


@dataclass
class WeakValueTable:
    detector: str
    values: dict = field(default_factory=dict)
    singular: bool = False
    overlap: complex = 0j

    def __getitem__(self, site_id):
        return Singular if self.singular else self.values[site_id]

    def total(self) -> complex:
        if self.singular:
            return Singular
        return sum(self.values.values())


class TwoStateEngine:
    """Caches one undisturbed forward run and backward runs per detector.

    Weak values are taken for the circuit with epsilon = theta = 0; the
    backward state starts from the detector with polarization H.
    """

    def __init__(self, circuit: Circuit):
        self.circuit = circuit
        self._backward = {}

    @cached_property
    def forward(self):
        return evolve_forward(self.circuit).states

    def backward(self, detector: str):
        if detector not in self._backward:
            self._backward[detector] = evolve_backward(self.circuit, detector)
        return self._backward[detector]

    def two_state_vector(self, detector: str, slice_index: int) -> TwoStateVector:
        return TwoStateVector(self.forward[slice_index], self.backward(detector)[slice_index], slice_index)

    def overlap(self, detector: str) -> complex:
        return self.two_state_vector(detector, 0).overlap

    def transfer(self, detector: str, site) -> complex:
        """<phi|P_site|psi>: amplitude routed from the source through ``site`` to ``detector``."""
        k = site.slice
        return self.backward(detector)[k].path_amplitude(site.path) * self.forward[k].path_amplitude(site.path)

    def weak_value(self, detector: str, site_id: str):
        _check_detector(self.circuit, detector)
        site = self.circuit.site(site_id)
        return self.two_state_vector(detector, site.slice).weak_value(site.path)

    def table(self, detector: str, sites=None) -> WeakValueTable:
        _check_detector(self.circuit, detector)
        sites = self.circuit.bob_sites if sites is None else sites
        ov = self.overlap(detector)
        if abs(ov) < SINGULAR_OVERLAP:
            return WeakValueTable(detector, {}, True, ov)
        return WeakValueTable(detector, {s.site_id: self.transfer(detector, s) / ov for s in sites}, False, ov)

    def path_weak_values(self, detector: str, slice_index: int) -> dict:
        """Weak values of every (path, polarization) projector present at a boundary."""
        tsv = self.two_state_vector(detector, slice_index)
        labels = set(tsv.forward.amplitudes) | set(tsv.backward.amplitudes)
        ov = tsv.overlap
        if abs(ov) < SINGULAR_OVERLAP:
            return {}
        return {
            lab: tsv.backward.amplitudes.get(lab, 0j) * tsv.forward.amplitudes.get(lab, 0j) / ov for lab in labels
        }


def _check_detector(circuit, detector):
    if detector not in circuit.legitimate_outcomes:
        raise ValidationError(f"{detector!r} is not a legitimate outcome of {circuit.name or 'circuit'}")


def weak_value(circuit: Circuit, detector: str, site_id: str):
    return TwoStateEngine(circuit).weak_value(detector, site_id)


def weak_value_table(circuit: Circuit, detector: str) -> WeakValueTable:
    return TwoStateEngine(circuit).table(detector)
