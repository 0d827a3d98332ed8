"""Densities under the uniform measure, relative entropy, and bounded test functionals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .groups import GroupSpec, character_values

MEAN_TOL = 1e-9
SUP_NORM_TOL = 1e-12

_full_family_cache: dict[tuple[int, ...], "Family"] = {}


class DensityError(ValueError):
    """Invalid density construction or functional/family misuse."""


@dataclass(frozen=True)
class Density:
    """Non-negative function with mean 1 under the uniform measure."""

    values: np.ndarray
    space: GroupSpec

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64).copy()
        if values.shape != (self.space.size,):
            raise DensityError(
                f"density has {values.shape} values, space has size {self.space.size}"
            )
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def uniform(cls, space: GroupSpec) -> "Density":
        return cls(values=np.ones(space.size), space=space)

    def mean(self) -> float:
        return float(self.values.mean())


def make_density(space: GroupSpec, values, normalize: bool = False) -> Density:
    """Validated density; with normalize set, rescales so the mean is exactly 1."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (space.size,):
        raise DensityError(f"expected {space.size} values, got shape {arr.shape}")
    if np.any(arr < 0):
        raise DensityError("density values must be non-negative")
    mean = float(arr.mean())
    if mean == 0.0:
        raise DensityError("density cannot be identically zero")
    if normalize:
        arr = arr / mean
    elif abs(mean - 1.0) > MEAN_TOL:
        raise DensityError(f"density mean {mean} is not 1 (pass normalize to rescale)")
    return Density(values=arr, space=space)


def indicator_density(space: GroupSpec, support: Iterable[int]) -> Density:
    """Normalized indicator (|G|/|S|) * 1_S for a set of canonical indices."""
    values = np.zeros(space.size)
    idx = sorted(set(int(i) for i in support))
    if not idx:
        raise DensityError("indicator support cannot be empty")
    if idx[0] < 0 or idx[-1] >= space.size:
        raise DensityError("indicator support index out of range")
    values[idx] = 1.0
    return make_density(space, values, normalize=True)


def relative_entropy(f: Density) -> float:
    """Ent(f) = E_mu[f log f] in nats, with 0 log 0 = 0."""
    v = f.values
    pos = v > 0
    return float(np.sum(v[pos] * np.log(v[pos])) / f.space.size)


def kl_divergence(h: Density, h2: Density) -> float:
    """D(h || h2) = E_mu[h log(h / h2)]; +inf when supp(h) is not inside supp(h2)."""
    if h.space != h2.space:
        raise DensityError("densities live on different spaces")
    a, b = h.values, h2.values
    pos = a > 0
    if np.any(b[pos] == 0):
        return math.inf
    return float(np.sum(a[pos] * np.log(a[pos] / b[pos])) / h.space.size)


# -- functionals -------------------------------------------------------------

RE = "Re"
IM = "Im"


@dataclass(frozen=True)
class Functional:
    """Re u_gamma or Im u_gamma, optionally sign-flipped; sup-norm at most 1."""

    kind: str
    gamma: tuple[int, ...]
    sign: int = 1

    def __post_init__(self) -> None:
        if self.kind not in (RE, IM):
            raise DensityError(f"functional kind must be {RE!r} or {IM!r}, got {self.kind!r}")
        if self.sign not in (-1, 1):
            raise DensityError(f"functional sign must be +1 or -1, got {self.sign}")
        object.__setattr__(self, "gamma", tuple(int(g) for g in self.gamma))

    def realize(self, space: GroupSpec) -> np.ndarray:
        chars = character_values(space, self.gamma)
        base = chars.real if self.kind == RE else chars.imag
        return self.sign * base

    def negated(self) -> "Functional":
        return Functional(kind=self.kind, gamma=self.gamma, sign=-self.sign)

    def unsigned(self) -> "Functional":
        return Functional(kind=self.kind, gamma=self.gamma, sign=1)

    def label(self) -> str:
        sign = "+" if self.sign > 0 else "-"
        return f"{sign}{self.kind}{list(self.gamma)}"


def canonical_functional_key(space: GroupSpec, phi: Functional) -> tuple[int, int, int]:
    """Sort key: canonical gamma order, Re before Im, + before -."""
    return (space.index(phi.gamma), 0 if phi.kind == RE else 1, 0 if phi.sign > 0 else 1)


@dataclass(frozen=True)
class Family:
    """Deterministically ordered collection of functionals with sup-norm <= 1."""

    space: GroupSpec
    members: tuple[Functional, ...]
    closed_under_negation: bool = True
    _matrix: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self) -> None:
        members = tuple(
            sorted(self.members, key=lambda phi: canonical_functional_key(self.space, phi))
        )
        if not members:
            raise DensityError("family cannot be empty")
        matrix = np.vstack([phi.realize(self.space) for phi in members])
        if np.max(np.abs(matrix)) > 1.0 + SUP_NORM_TOL:
            raise DensityError("family member exceeds sup-norm 1")
        matrix.flags.writeable = False
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "_matrix", matrix)

    def __len__(self) -> int:
        return len(self.members)

    def matrix(self) -> np.ndarray:
        """Realized members as a (len(family), size) array of rows."""
        return self._matrix

    @classmethod
    def characters(cls, space: GroupSpec) -> "Family":
        """The full family {Re u_gamma, Im u_gamma : gamma} in canonical order."""
        cached = _full_family_cache.get(space.orders)
        if cached is None:
            members = []
            for gamma in space.elements():
                members.append(Functional(kind=RE, gamma=gamma))
                members.append(Functional(kind=IM, gamma=gamma))
            cached = cls(space=space, members=tuple(members))
            _full_family_cache[space.orders] = cached
        return cached


def _values_and_space(f, space: GroupSpec | None) -> tuple[np.ndarray, GroupSpec]:
    if isinstance(f, Density):
        return f.values, f.space
    if space is None:
        raise DensityError("a raw function needs an explicit space")
    values = np.asarray(f, dtype=np.float64)
    if values.shape != (space.size,):
        raise DensityError(f"function has {values.shape} values, space has size {space.size}")
    return values, space


def inner(f, phi: Functional, space: GroupSpec | None = None) -> float:
    """<f, phi> = E_mu[f * phi] under the uniform measure."""
    values, space = _values_and_space(f, space)
    return float(phi.realize(space) @ values / space.size)


def pairings(f, family: Family) -> np.ndarray:
    """All inner products <f, phi> for phi in the family, in enumeration order."""
    values, _ = _values_and_space(f, family.space)
    return family.matrix() @ values / family.space.size


def seminorm(f, family: Family) -> float:
    """Worst-case discrepancy sup_phi |<f, phi>| over the family."""
    return float(np.max(np.abs(pairings(f, family))))


def coefficient_map(f, family: Family) -> Mapping[Functional, float]:
    values = pairings(f, family)
    return {phi: float(v) for phi, v in zip(family.members, values)}
