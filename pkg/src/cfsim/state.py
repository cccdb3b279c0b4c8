"""Sparse single-excitation states over composite mode labels.

A basis label is ``(path, polarization, env)`` where ``env`` is a sorted tuple
of ``(env_key, level)`` pairs. Level 0 (the undisturbed state chi) is never
stored, so an empty tuple means every environment system is untouched. For the
two-level sites used almost everywhere, level 1 is chi_perp; the coherent
oracle reuses ``level`` as an integer kick counter.

Bra states (:class:`CovectorState`) store amplitudes *already conjugated*:
``inner_product(bra, ket)`` is the plain sum ``sum(bra[l] * ket[l])``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple

import numpy as np

from .errors import NullStateError

H = "H"
V = "V"
POLARIZATIONS = (H, V)

#: amplitudes below this magnitude are dropped
PRUNE_THRESHOLD = 1e-15
#: smallest norm that normalize() accepts
NULL_NORM = 1e-14


class ModeLabel(NamedTuple):
    path: str
    pol: str = H
    env: tuple = ()

    def env_level(self, key) -> int:
        for k, level in self.env:
            if k == key:
                return level
        return 0

    def with_env(self, key, level: int) -> "ModeLabel":
        rest = [(k, v) for k, v in self.env if k != key]
        if level:
            rest.append((key, level))
        return self._replace(env=tuple(sorted(rest, key=lambda kv: str(kv[0]))))

    def excitations(self) -> int:
        return len(self.env)


def canonical(amplitudes: Mapping[ModeLabel, complex]) -> dict:
    """Drop amplitudes below the pruning threshold."""
    return {k: complex(a) for k, a in amplitudes.items() if abs(a) >= PRUNE_THRESHOLD}


@dataclass(frozen=True)
class PureState:
    amplitudes: dict = field(default_factory=dict)
    lost_weight: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", canonical(self.amplitudes))

    @classmethod
    def basis(cls, path: str, pol: str = H) -> "PureState":
        return cls({ModeLabel(path, pol): 1.0})

    def norm_sq(self) -> float:
        return float(sum(abs(a) ** 2 for a in self.amplitudes.values()))

    def total_weight(self) -> float:
        """Surviving plus absorbed probability."""
        return self.norm_sq() + self.lost_weight

    def amplitude(self, label: ModeLabel) -> complex:
        return self.amplitudes.get(label, 0j)

    def path_amplitude(self, path: str, pol: str = H) -> complex:
        """Amplitude on ``path`` with every environment system in chi."""
        return self.amplitudes.get(ModeLabel(path, pol), 0j)

    def to_bra(self) -> "CovectorState":
        return CovectorState({k: np.conj(a) for k, a in self.amplitudes.items()})

    def __len__(self):
        return len(self.amplitudes)


@dataclass(frozen=True)
class CovectorState:
    """Backward-evolving state; amplitudes are stored conjugated."""

    amplitudes: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", canonical(self.amplitudes))

    @classmethod
    def basis(cls, path: str, pol: str = H) -> "CovectorState":
        return cls({ModeLabel(path, pol): 1.0})

    def norm_sq(self) -> float:
        return float(sum(abs(a) ** 2 for a in self.amplitudes.values()))

    def path_amplitude(self, path: str, pol: str = H) -> complex:
        return self.amplitudes.get(ModeLabel(path, pol), 0j)

    def __len__(self):
        return len(self.amplitudes)


def inner_product(bra: CovectorState, ket: PureState) -> complex:
    """<bra|ket> as a plain sum of products over shared labels."""
    small, big = (bra.amplitudes, ket.amplitudes)
    if len(small) > len(big):
        small, big = big, small
    return complex(sum(a * big[k] for k, a in small.items() if k in big))


def project(state: PureState, predicate: Callable[[ModeLabel], bool]):
    """Keep labels satisfying ``predicate``; returns (unnormalized state, weight)."""
    kept = {k: a for k, a in state.amplitudes.items() if predicate(k)}
    out = PureState(kept)
    return out, out.norm_sq()


def normalize(state: PureState) -> PureState:
    norm = np.sqrt(state.norm_sq())
    if norm < NULL_NORM:
        raise NullStateError("cannot normalize a null state (impossible postselection)")
    return PureState({k: a / norm for k, a in state.amplitudes.items()})
