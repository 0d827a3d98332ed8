"""Finite abelian groups as products of cyclic factors: elements, characters, direct DFT."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

MAX_GROUP_SIZE = 1 << 20

# Character matrices are only cached for small groups; larger groups fall back
# to per-row evaluation inside fourier_transform.
_CHARACTER_CACHE_LIMIT = 1024

_residue_cache: dict[tuple[int, ...], np.ndarray] = {}
_character_cache: dict[tuple[int, ...], np.ndarray] = {}


class GroupError(ValueError):
    """Invalid group construction, parse failure, or element/group mismatch."""


@dataclass(frozen=True)
class GroupSpec:
    """Z_{n_1} x ... x Z_{n_k} with mixed-radix lexicographic element indexing.

    Elements and dual elements are residue tuples (x_1, ..., x_k) with
    0 <= x_j < n_j; the group is self-dual in these coordinates.  The
    canonical index of an element treats the first coordinate as the most
    significant digit, so Z_2 x Z_2 orders its elements 00, 01, 10, 11.
    """

    orders: tuple[int, ...]
    size: int

    def __post_init__(self) -> None:
        if not self.orders:
            raise GroupError("group needs at least one cyclic factor")
        if any(n < 2 for n in self.orders):
            raise GroupError(f"cyclic factor orders must be >= 2, got {self.orders}")
        if self.size != math.prod(self.orders):
            raise GroupError("size does not match the product of the factor orders")

    # -- element indexing ------------------------------------------------

    def index(self, element: Sequence[int]) -> int:
        self.validate_element(element)
        idx = 0
        for x, n in zip(element, self.orders):
            idx = idx * n + x
        return idx

    def element(self, index: int) -> tuple[int, ...]:
        index = int(index)
        if not 0 <= index < self.size:
            raise GroupError(f"element index {index} out of range for group of size {self.size}")
        residues = []
        for n in reversed(self.orders):
            index, r = divmod(index, n)
            residues.append(r)
        return tuple(reversed(residues))

    def elements(self) -> Iterator[tuple[int, ...]]:
        for i in range(self.size):
            yield self.element(i)

    def residue_matrix(self) -> np.ndarray:
        """All elements as a (size, k) int array in canonical index order."""
        cached = _residue_cache.get(self.orders)
        if cached is None:
            cols = []
            stride = self.size
            for n in self.orders:
                stride //= n
                cols.append((np.arange(self.size) // stride) % n)
            cached = np.column_stack(cols)
            cached.flags.writeable = False
            _residue_cache[self.orders] = cached
        return cached

    def validate_element(self, element: Sequence[int]) -> None:
        if len(element) != len(self.orders):
            raise GroupError(
                f"element has {len(element)} coordinates, group has {len(self.orders)} factors"
            )
        for x, n in zip(element, self.orders):
            if not 0 <= x < n:
                raise GroupError(f"residue {x} out of range for cyclic factor of order {n}")

    # -- group law --------------------------------------------------------

    def add(self, a: Sequence[int], b: Sequence[int]) -> tuple[int, ...]:
        return tuple(int(x + y) % n for x, y, n in zip(a, b, self.orders))

    def neg(self, a: Sequence[int]) -> tuple[int, ...]:
        return tuple(int(-x) % n for x, n in zip(a, self.orders))

    def scale(self, m: int, a: Sequence[int]) -> tuple[int, ...]:
        return tuple(int(m * x) % n for x, n in zip(a, self.orders))

    def zero(self) -> tuple[int, ...]:
        return (0,) * len(self.orders)

    def shift_permutation(self, a: Sequence[int]) -> np.ndarray:
        """Index permutation of the translation x -> x + a."""
        self.validate_element(a)
        res = (self.residue_matrix() + np.asarray(a, dtype=np.int64)) % np.asarray(self.orders)
        return self._indices_of(res)

    def _indices_of(self, residues: np.ndarray) -> np.ndarray:
        idx = np.zeros(len(residues), dtype=np.int64)
        for j, n in enumerate(self.orders):
            idx = idx * n + residues[:, j]
        return idx


def make_group(orders: Iterable[int], max_size: int = MAX_GROUP_SIZE) -> GroupSpec:
    """Validated group from a list of cyclic factor orders."""
    orders = tuple(int(n) for n in orders)
    if not orders:
        raise GroupError("group needs at least one cyclic factor")
    if any(n < 2 for n in orders):
        raise GroupError(f"cyclic factor orders must be >= 2, got {orders}")
    size = math.prod(orders)
    if size > max_size:
        raise GroupError(f"group size {size} exceeds the configured maximum {max_size}")
    return GroupSpec(orders=orders, size=size)


def parse_group(text: str, max_size: int = MAX_GROUP_SIZE) -> GroupSpec:
    """Parse group strings like "Z4", "Z2^3", or "Z8xZ3"."""
    orders: list[int] = []
    for part in text.strip().replace("X", "x").split("x"):
        part = part.strip()
        if not part or part[0] not in "Zz":
            raise GroupError(f"unrecognized group factor {part!r} in {text!r}")
        body = part[1:]
        repeat = 1
        if "^" in body:
            body, _, power = body.partition("^")
            if not power.isdigit() or int(power) < 1:
                raise GroupError(f"bad repeat count in group factor {part!r}")
            repeat = int(power)
        if not body.isdigit():
            raise GroupError(f"unrecognized group factor {part!r} in {text!r}")
        orders.extend([int(body)] * repeat)
    return make_group(orders, max_size=max_size)


def group_label(group: GroupSpec) -> str:
    return "x".join(f"Z{n}" for n in group.orders)


# -- characters ------------------------------------------------------------


def character_eval(group: GroupSpec, gamma: Sequence[int], x: Sequence[int]) -> complex:
    """u_gamma(x) = exp(2*pi*i * sum_j gamma_j x_j / n_j), a unit complex number."""
    group.validate_element(gamma)
    group.validate_element(x)
    frac = sum(((g * xi) % n) / n for g, xi, n in zip(gamma, x, group.orders))
    return complex(math.cos(2.0 * math.pi * frac), math.sin(2.0 * math.pi * frac))


def character_values(group: GroupSpec, gamma: Sequence[int]) -> np.ndarray:
    """u_gamma evaluated at every element, in canonical index order."""
    group.validate_element(gamma)
    res = group.residue_matrix()
    orders = np.asarray(group.orders, dtype=np.int64)
    g = np.asarray(gamma, dtype=np.int64)
    frac = (((res * g) % orders) / orders).sum(axis=1)
    return np.exp(2j * np.pi * frac)


def character_matrix(group: GroupSpec) -> np.ndarray:
    """Full character table M[gamma_index, x_index]; cached for small groups."""
    cached = _character_cache.get(group.orders)
    if cached is None:
        rows = [character_values(group, gamma) for gamma in group.elements()]
        cached = np.vstack(rows)
        cached.flags.writeable = False
        if group.size <= _CHARACTER_CACHE_LIMIT:
            _character_cache[group.orders] = cached
    return cached


@dataclass(frozen=True)
class FourierTable:
    """Fourier coefficients of a real function, indexed by dual elements.

    Uses the convention fhat(gamma) = E_mu[f * conj(u_gamma)] under the
    uniform measure, so fhat(0) is the mean of f and Parseval reads
    sum_gamma |fhat(gamma)|^2 = E_mu[f^2].
    """

    group: GroupSpec
    coefficients: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.coefficients, dtype=np.complex128)
        if values.shape != (self.group.size,):
            raise GroupError("coefficient table does not match the group size")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "coefficients", values)

    def __getitem__(self, gamma: Sequence[int]) -> complex:
        return complex(self.coefficients[self.group.index(gamma)])

    def items(self) -> Iterator[tuple[tuple[int, ...], complex]]:
        for i, gamma in enumerate(self.group.elements()):
            yield gamma, complex(self.coefficients[i])

    def magnitudes(self) -> np.ndarray:
        return np.abs(self.coefficients)


def _function_values(group: GroupSpec, f) -> np.ndarray:
    values = np.asarray(getattr(f, "values", f), dtype=np.float64)
    if values.shape != (group.size,):
        raise GroupError(f"function has {values.shape} values, group has size {group.size}")
    return values


def fourier_transform(group: GroupSpec, f) -> FourierTable:
    """Direct DFT by character summation: fhat(gamma) = E_mu[f * conj(u_gamma)].

    Accepts a Density or any array of group.size reals.  O(size^2) with a
    fixed summation order per coefficient; desk-scale groups only.
    """
    values = _function_values(group, f)
    if group.size <= _CHARACTER_CACHE_LIMIT:
        coeffs = character_matrix(group).conj() @ values / group.size
    else:
        coeffs = np.empty(group.size, dtype=np.complex128)
        for i, gamma in enumerate(group.elements()):
            coeffs[i] = np.dot(character_values(group, gamma).conj(), values) / group.size
    return FourierTable(group=group, coefficients=coeffs)


def inverse_fourier_transform(table: FourierTable) -> np.ndarray:
    """Pointwise reconstruction f(x) = sum_gamma fhat(gamma) u_gamma(x), real part."""
    group = table.group
    if group.size <= _CHARACTER_CACHE_LIMIT:
        values = table.coefficients @ character_matrix(group)
    else:
        values = np.zeros(group.size, dtype=np.complex128)
        for i, gamma in enumerate(group.elements()):
            values += table.coefficients[i] * character_values(group, gamma)
    return values.real


def spectrum(group: GroupSpec, f, delta: float) -> set[tuple[int, ...]]:
    """Large spectrum {gamma : |fhat(gamma)| > delta}; strict inequality."""
    if delta < 0:
        raise GroupError(f"spectrum threshold must be >= 0, got {delta}")
    table = f if isinstance(f, FourierTable) else fourier_transform(group, f)
    mags = table.magnitudes()
    return {group.element(i) for i in np.nonzero(mags > delta)[0]}


def sorted_dual(group: GroupSpec, gammas: Iterable[Sequence[int]]) -> list[tuple[int, ...]]:
    """Dual elements in canonical (mixed-radix lexicographic) order."""
    return sorted((tuple(g) for g in gammas), key=group.index)
