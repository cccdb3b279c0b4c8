"""Brute-force joint simulation of probe and every Bob environment system.

Independent of the weak-value machinery: the full probe+environment state is
evolved with the couplings applied exactly and probabilities are read off the
final state.

Coherent model: all Bob sites act on one shared mirror whose orthogonal
amplitude grows linearly with the number of bounces (a Gaussian momentum state
displaced k times, linearized): after k bounces the mirror is
``sqrt(1 - k^2 eps^2) chi + k eps chi_perp``. Results are exact relative to
that model.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

from .circuit import LOST, Circuit, evolve_forward
from .errors import TooLargeError, ValidationError
from .state import H, V

MAX_SITES = 12


@dataclass
class OracleResult:
    exact_outcome_probs: dict
    exact_orthogonal_prob: dict
    joint_orthogonal_prob: dict = field(default_factory=dict)
    state_dimension: int = 0
    model: str = "incoherent"

    def legit_combined(self, circuit: Circuit, postselected: bool = True) -> float:
        """Joint orthogonal probability summed over legitimate detectors."""
        joint = sum(self.joint_orthogonal_prob.get(d, 0.0) for d in circuit.legitimate_outcomes)
        if not postselected:
            return joint
        z = sum(self.exact_outcome_probs.get((d, pol), 0.0) for d in circuit.legitimate_outcomes for pol in (H, V))
        return joint / z


def oracle_run(circuit: Circuit, epsilon: float, theta: float = 0.0, distorted_sites=(),
               coherent: bool = False) -> OracleResult:
    sites = [s.site_id for s in circuit.bob_sites]
    if len(sites) > MAX_SITES:
        raise TooLargeError(f"oracle limited to {MAX_SITES} Bob sites, circuit has {len(sites)}")
    if coherent and epsilon * len(sites) >= 1.0:
        raise ValidationError("coherent oracle needs K*epsilon < 1")
    n_paths = len({p for sl in circuit.slices for e in sl for p in (*e.inputs, *e.outputs)} | {circuit.source})
    env_levels = (len(sites) + 1) if coherent else 2 ** len(sites)
    dim = env_levels * n_paths * 2
    if coherent:
        final = evolve_forward(circuit, epsilon, theta, distorted_sites, record=False, coupled_sites=sites,
                               env_mode="counter", env_keys={s: "mirror" for s in sites}).final
    else:
        final = evolve_forward(circuit, epsilon, theta, distorted_sites, record=False, coupled_sites=sites).final
    path_to_det = {p: d for d, p in circuit.detectors.items()}
    probs = {(d, pol): 0.0 for d in circuit.detectors for pol in (H, V)}
    joint = {d: 0.0 for d in circuit.detectors}
    if coherent:
        chi = defaultdict(complex)
        perp = defaultdict(complex)
        for label, amp in final.amplitudes.items():
            k = label.env_level("mirror")
            key = (path_to_det[label.path], label.pol)
            chi[key] += math.sqrt(1.0 - (k * epsilon) ** 2) * amp
            perp[key] += k * epsilon * amp
        for key in set(chi) | set(perp):
            pp = abs(perp[key]) ** 2
            probs[key] += abs(chi[key]) ** 2 + pp
            joint[key[0]] += pp
    else:
        for label, amp in final.amplitudes.items():
            d = path_to_det[label.path]
            p = abs(amp) ** 2
            probs[(d, label.pol)] += p
            if label.env:
                joint[d] += p
    probs[LOST] = final.lost_weight
    if coherent:
        # the linearized mirror model is not exactly norm preserving
        total = sum(probs.values())
        probs = {k: v / total for k, v in probs.items()}
        joint = {k: v / total for k, v in joint.items()}
    cond = {}
    for d in circuit.detectors:
        pd = probs[(d, H)] + probs[(d, V)]
        cond[d] = joint[d] / pd if pd > 0 else 0.0
    return OracleResult(probs, cond, joint, dim, "coherent" if coherent else "incoherent")
