"""Fisher information about a polarization distortion reaching Alice.

``P(i|theta)`` runs over legitimate (detector, polarization) outcomes and is
normalized over them by default (postselected Fisher information). Only
Alice's detectors contribute to the reported total; legitimate outcomes
observed elsewhere (the A-SB "no click" event) are summed separately as
``excluded``.

Derivatives are central differences with step ``theta/8``; the theta -> 0
limit is a Richardson extrapolation over a halving grid assuming an even
expansion ``F0 + a theta^2 + b theta^4 + ...``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .circuit import Circuit, evolve_forward
from .errors import UnconvergedError, ValidationError
from .state import H, V
from .tsvf import TwoStateEngine

THETA_GRID = (0.02, 0.01, 0.005, 0.0025)
#: relative residual above which an extrapolation is reported unconverged
RESIDUAL_TOL = 1e-3
TINY_P = 1e-14


@dataclass
class FisherReport:
    mode: str
    total: float
    reference: float
    ratio: float
    per_site: dict = field(default_factory=dict)
    per_detector: dict = field(default_factory=dict)
    excluded: float = 0.0
    theta_grid: list = field(default_factory=lambda: list(THETA_GRID))
    extrapolation_residual: float = 0.0
    converged: bool = True
    postselected: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# outcome distributions as functions of theta

def _legit_outcomes(circuit):
    return [(d, pol) for d in sorted(circuit.legitimate_outcomes) for pol in (H, V)]


class EvolvedDistribution:
    """P(i|theta) from a full forward evolution with the given sites distorted."""

    def __init__(self, circuit: Circuit, distorted_sites, postselected=True):
        self.circuit = circuit
        self.sites = frozenset(distorted_sites)
        self.postselected = postselected
        self.outcomes = _legit_outcomes(circuit)

    def __call__(self, theta: float) -> np.ndarray:
        final = evolve_forward(self.circuit, 0.0, theta, self.sites, record=False).final
        path_to_det = {p: d for d, p in self.circuit.detectors.items()}
        index = {o: i for i, o in enumerate(self.outcomes)}
        probs = np.zeros(len(self.outcomes))
        for label, amp in final.amplitudes.items():
            i = index.get((path_to_det[label.path], label.pol))
            if i is not None:
                probs[i] += abs(amp) ** 2
        if self.postselected:
            probs = probs / probs.sum()
        return probs


class SiteTransferDistribution:
    """P(i|theta) for single-site distortions, vectorized over sites.

    With only one rotator active the detector amplitudes are exactly
    ``A_d - (1 - cos theta) t_ds`` (H) and ``sin theta * t_ds`` (V), where
    ``A_d = <phi_d|psi>`` and ``t_ds = <phi_d|P_s|psi>``.
    """

    def __init__(self, circuit: Circuit, sites, postselected=True, engine=None):
        engine = engine or TwoStateEngine(circuit)
        self.circuit = circuit
        self.sites = list(sites)
        self.postselected = postselected
        self.outcomes = _legit_outcomes(circuit)
        dets = sorted(circuit.legitimate_outcomes)
        self.A = np.array([engine.overlap(d) for d in dets])
        self.t = np.array([[engine.transfer(d, s) for s in self.sites] for d in dets])  # (det, site)

    def __call__(self, theta: float) -> np.ndarray:
        """Array of shape (outcome, site)."""
        amp_h = self.A[:, None] - (1 - np.cos(theta)) * self.t
        amp_v = np.sin(theta) * self.t
        probs = np.empty((len(self.outcomes), len(self.sites)))
        probs[0::2] = np.abs(amp_h) ** 2
        probs[1::2] = np.abs(amp_v) ** 2
        if self.postselected:
            probs = probs / probs.sum(axis=0, keepdims=True)
        return probs


def _fisher_terms(dist, theta):
    """Per-outcome Fisher contributions at ``theta`` (same leading shape as dist())."""
    h = theta / 8
    p0 = dist(theta)
    dp = (dist(theta + h) - dist(theta - h)) / (2 * h)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p0 > TINY_P, dp ** 2 / np.where(p0 > TINY_P, p0, 1.0), 0.0)
        # outcome vanishing like c*theta^2: contribution -> 4c
        c = p0 / theta ** 2
        tiny = (p0 <= TINY_P) & (np.abs(dp) > 0)
        terms = np.where(tiny, 4 * c, terms)
    return terms


def _mask(circuit, outcomes, alice=True):
    ds = circuit.alice_detectors
    return np.array([(d in ds) == alice for d, _ in outcomes])


def richardson(values, ratio=2.0):
    """Extrapolate F(theta) on a halving grid to theta = 0.

    Returns (limit, residual); residual is the gap between the limit and the
    finest estimate of the previous elimination level.
    """
    table = [np.asarray(v, dtype=float) for v in values]
    residual = np.zeros_like(table[0])
    power = 2
    while len(table) > 1:
        f = ratio ** power
        finest = table[-1]
        table = [(f * table[i + 1] - table[i]) / (f - 1) for i in range(len(table) - 1)]
        residual = np.abs(table[-1] - finest)
        power += 2
    return table[0], residual


def fisher_at(circuit: Circuit, theta: float, distorted_sites, postselected=True, method="auto",
              split=False):
    """Fisher information about theta at Alice's legitimate detectors.

    With ``split=True`` returns (alice_total, excluded_total).
    """
    if not (1e-4 <= theta <= 0.1):
        raise ValidationError(f"theta must lie in [1e-4, 0.1], got {theta}")
    sites = list(distorted_sites)
    if method == "auto":
        method = "transfer" if len(sites) == 1 else "evolve"
    if method == "transfer":
        objs = [circuit.site(s) for s in sites]
        dist = SiteTransferDistribution(circuit, objs, postselected)
        terms = _fisher_terms(dist, theta)[:, 0]
    else:
        dist = EvolvedDistribution(circuit, sites, postselected)
        terms = _fisher_terms(dist, theta)
    mask = _mask(circuit, dist.outcomes)
    alice, excluded = float(terms[mask].sum()), float(terms[~mask].sum())
    return (alice, excluded) if split else alice


def _limit_from_dist(dist, circuit, grid, tol):
    per_theta = [_fisher_terms(dist, th) for th in grid]
    mask = _mask(circuit, dist.outcomes)
    dets = [d for d, _ in dist.outcomes]
    limit, resid = richardson(per_theta)
    return limit, resid, mask, dets


def fisher_limit(circuit: Circuit, distorted_sites, postselected=True, grid=THETA_GRID, tol=RESIDUAL_TOL,
                 method="auto", strict=True):
    """theta -> 0 limit of Fisher information at Alice's detectors.

    Returns (value, residual). Raises UnconvergedError when the residual
    exceeds ``tol`` relative to max(1, value) and ``strict`` is set.
    """
    sites = list(distorted_sites)
    if method == "auto":
        method = "transfer" if len(sites) == 1 else "evolve"
    if method == "transfer":
        dist = SiteTransferDistribution(circuit, [circuit.site(s) for s in sites], postselected)
        limit, resid, mask, _ = _limit_from_dist(dist, circuit, grid, tol)
        value, residual = float(limit[mask, 0].sum()), float(resid[mask, 0].sum())
    else:
        dist = EvolvedDistribution(circuit, sites, postselected)
        limit, resid, mask, _ = _limit_from_dist(dist, circuit, grid, tol)
        value, residual = float(limit[mask].sum()), float(resid[mask].sum())
    if strict and residual > tol * max(1.0, abs(value)):
        raise UnconvergedError(f"Fisher extrapolation residual {residual:.3e} above tolerance", residual=residual)
    return value, residual


def fisher_curve(circuit: Circuit, distorted_sites, thetas, postselected=True) -> list:
    """F(theta) at Alice's detectors for each theta (no extrapolation)."""
    return [fisher_at(circuit, th, distorted_sites, postselected) for th in thetas]


def fisher_per_site_sum(circuit: Circuit, postselected=True, grid=THETA_GRID, tol=RESIDUAL_TOL,
                        strict=True) -> FisherReport:
    """Distort one Bob site at a time and sum the limits over sites."""
    sites = list(circuit.bob_sites)
    reference = 4.0 / circuit.reference_path_count
    if not sites:
        return FisherReport("per_site_sum", 0.0, reference, 0.0, theta_grid=list(grid), postselected=postselected)
    dist = SiteTransferDistribution(circuit, sites, postselected)
    limit, resid, mask, dets = _limit_from_dist(dist, circuit, grid, tol)
    per_site_vals = limit[mask].sum(axis=0)
    per_site_res = resid[mask].sum(axis=0)
    scale = np.maximum(1.0, np.abs(per_site_vals))
    bad = np.nonzero(per_site_res > tol * scale)[0]
    converged = len(bad) == 0
    if strict and not converged:
        s = sites[bad[0]].site_id
        raise UnconvergedError(f"Fisher extrapolation unconverged at site {s}", site=s,
                               residual=float(per_site_res[bad[0]]))
    per_det = {}
    for i, d in enumerate(dets):
        if mask[i]:
            per_det[d] = per_det.get(d, 0.0) + float(limit[i].sum())
    total = float(per_site_vals.sum())
    excluded = float(limit[~mask].sum())
    return FisherReport(
        "per_site_sum", total, reference, total / reference,
        per_site={s.site_id: float(v) for s, v in zip(sites, per_site_vals)},
        per_detector=per_det, excluded=excluded, theta_grid=list(grid),
        extrapolation_residual=float(per_site_res.max()), converged=converged, postselected=postselected,
    )


def fisher_common_theta(circuit: Circuit, postselected=True, grid=THETA_GRID, tol=RESIDUAL_TOL,
                        strict=True) -> FisherReport:
    """All Bob sites rotate by the same theta."""
    sites = [s.site_id for s in circuit.bob_sites]
    reference = 4.0 / circuit.reference_path_count
    dist = EvolvedDistribution(circuit, sites, postselected)
    limit, resid, mask, dets = _limit_from_dist(dist, circuit, grid, tol)
    total = float(limit[mask].sum())
    residual = float(resid[mask].sum())
    converged = residual <= tol * max(1.0, abs(total))
    if strict and not converged:
        raise UnconvergedError(f"common-theta Fisher extrapolation residual {residual:.3e}", residual=residual)
    per_det = {}
    for i, d in enumerate(dets):
        if mask[i]:
            per_det[d] = per_det.get(d, 0.0) + float(limit[i])
    return FisherReport(
        "common_theta", total, reference, total / reference, per_detector=per_det,
        excluded=float(limit[~mask].sum()), theta_grid=list(grid), extrapolation_residual=residual,
        converged=converged, postselected=postselected,
    )
