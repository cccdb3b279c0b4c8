"""Weak-trace counterfactuality: probability of an orthogonal environment component.

Incoherent model: every Bob site has its own two-level environment and the
per-site first-order probabilities add. Coherent model: all Bob sites share one
environment (one mirror), so first-order amplitudes add before squaring.

For an outcome whose weak values are singular (the backward state is orthogonal
to the forward one) the weak-value shortcut is unavailable; the orthogonal
component is then taken from an explicit joint evolution of probe and
environment with the couplings switched on.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .circuit import Circuit, evolve_forward
from .errors import ValidationError
from .tsvf import SINGULAR_OVERLAP, TwoStateEngine

MAX_FIRST_ORDER_EPS = 0.05
#: joint fallback runs exactly up to this many sites, first-order above
EXACT_SITE_CAP = 12


@dataclass
class OutcomeTrace:
    probability: float
    conditional: float
    joint: float
    singular: bool


@dataclass
class TraceReport:
    model: str
    epsilon: float
    per_outcome: dict
    combined: float
    alice_only: float
    reference: float
    ratio: float
    postselected: bool = True
    legit_probability: float = 1.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_outcome"] = {k: asdict(v) for k, v in self.per_outcome.items()}
        return d


def _check_eps(epsilon):
    if not (0.0 < epsilon <= MAX_FIRST_ORDER_EPS):
        raise ValidationError(f"epsilon: must lie in (0, {MAX_FIRST_ORDER_EPS}] for first-order trace analysis")


def joint_route(circuit: Circuit, detector: str, epsilon: float):
    """(P(detector), P(detector and some site in chi_perp)) from a coupled run."""
    sites = {s.site_id for s in circuit.bob_sites}
    order = None if len(sites) <= EXACT_SITE_CAP else 1
    final = evolve_forward(circuit, epsilon, record=False, coupled_sites=sites, max_excitations=order).final
    path = circuit.detectors[detector]
    total = perp = 0.0
    for label, amp in final.amplitudes.items():
        if label.path == path:
            p = abs(amp) ** 2
            total += p
            if label.env:
                perp += p
    return total, perp


def _outcome(engine: TwoStateEngine, detector: str, epsilon: float, model: str) -> OutcomeTrace:
    circuit = engine.circuit
    ov = engine.overlap(detector)
    transfers = [engine.transfer(detector, s) for s in circuit.bob_sites]
    if abs(ov) >= SINGULAR_OVERLAP:
        p = abs(ov) ** 2
        if model == "incoherent":
            cond = sum(abs(t / ov * epsilon) ** 2 for t in transfers)
        else:
            cond = abs(sum(transfers) / ov * epsilon) ** 2
        return OutcomeTrace(p, min(cond, 1.0), p * min(cond, 1.0), False)
    if model == "incoherent":
        p, joint = joint_route(circuit, detector, epsilon)
    else:
        # shared mirror: first-order orthogonal amplitude is eps * sum of transfers
        joint = abs(epsilon * sum(transfers)) ** 2
        p = abs(ov) ** 2 + joint
    cond = joint / p if p > 0 else 0.0
    return OutcomeTrace(p, cond, joint, True)


def trace_incoherent(circuit: Circuit, detector: str, epsilon: float, engine=None) -> float:
    """Conditional probability of some orthogonal component given ``detector``."""
    _check_eps(epsilon)
    engine = engine or TwoStateEngine(circuit)
    return _outcome(engine, detector, epsilon, "incoherent").conditional


def trace_coherent(circuit: Circuit, detector: str, epsilon: float, engine=None) -> float:
    _check_eps(epsilon)
    engine = engine or TwoStateEngine(circuit)
    return _outcome(engine, detector, epsilon, "coherent").conditional


def trace_combined(circuit: Circuit, epsilon: float, model: str = "incoherent", postselected: bool = True,
                   engine=None) -> TraceReport:
    """Joint trace probability summed over all legitimate outcomes.

    With ``postselected`` the outcome probabilities are normalized over the
    legitimate outcomes, i.e. the result is the trace per legitimate run.
    """
    if model not in ("incoherent", "coherent"):
        raise ValidationError(f"coupling: unknown model {model!r}")
    _check_eps(epsilon)
    engine = engine or TwoStateEngine(circuit)
    per = {d: _outcome(engine, d, epsilon, model) for d in sorted(circuit.legitimate_outcomes)}
    z = sum(o.probability for o in per.values())
    norm = z if (postselected and z > 0) else 1.0
    for o in per.values():
        o.probability /= norm
        o.joint /= norm
    combined = sum(o.joint for o in per.values())
    alice = sum(o.joint for d, o in per.items() if d in circuit.alice_detectors)
    reference = epsilon ** 2 / circuit.reference_path_count
    return TraceReport(model, epsilon, per, combined, alice, reference, combined / reference, postselected, z)


def trace_exact(circuit: Circuit, epsilon: float, order=None, postselected: bool = True) -> float:
    """Joint orthogonal-component probability over legitimate outcomes from a
    coupled evolution, truncated at ``order`` disturbed sites (None = exact)."""
    sites = {s.site_id for s in circuit.bob_sites}
    if order is None and len(sites) > EXACT_SITE_CAP:
        raise ValidationError(f"exact trace limited to {EXACT_SITE_CAP} sites; pass an expansion order")
    final = evolve_forward(circuit, epsilon, record=False, coupled_sites=sites, max_excitations=order).final
    legit_paths = {circuit.detectors[d] for d in circuit.legitimate_outcomes}
    total = perp = 0.0
    for label, amp in final.amplitudes.items():
        if label.path in legit_paths:
            p = abs(amp) ** 2
            total += p
            if label.env:
                perp += p
    return perp / total if postselected else perp


def power_law_fit(xs, ys):
    """Least-squares fit of log y = log C + k log x; returns (C, k)."""
    k, logc = np.polyfit(np.log(xs), np.log(ys), 1)
    return float(np.exp(logc)), float(k)


def second_order_fit(circuit: Circuit, eps_values=(0.02, 0.01, 0.005), order=2):
    """Fit the residual trace of a first-order-free protocol to C * eps^k."""
    values = [trace_exact(circuit, e, order) for e in eps_values]
    c, k = power_law_fit(eps_values, values)
    return {"C": max(v / e ** 4 for v, e in zip(values, eps_values)), "fit_C": c, "slope": k,
            "epsilon": list(eps_values), "trace": values, "order": order}
