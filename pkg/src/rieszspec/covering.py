"""Covering certificates for the large spectrum: Chang, Bloom, and tuple covers.

Coverage questions are decided by reachable-set dynamic programming over the
group (O(|Lambda| * |G|) instead of 3^|Lambda| sign enumeration), with
back-pointers so every covered element gets an explicit sign assignment that
re-sums exactly in integer group arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .density import Density, Family, relative_entropy
from .descent import SparseApproxReport, sparse_approximate
from .groups import GroupSpec, fourier_transform, sorted_dual, spectrum
from .riesz import (
    RieszProduct,
    SUPPORT_THRESHOLD,
    riesz_support,
    taylor_degree,
)

Dual = tuple[int, ...]


class CoverBoundError(RuntimeError):
    """A certified size or degree bound failed; indicates a numerical bug."""


@dataclass(frozen=True)
class CoverCertificate:
    """Sign assignments proving each covered gamma is a signed sum over lams.

    missing lists the requested elements that are not reachable; a complete
    certificate has none.  Assignments align with the canonical order of lams.
    """

    space: GroupSpec
    lams: tuple[Dual, ...]
    assignments: dict[Dual, tuple[int, ...]]
    covered: tuple[Dual, ...]
    missing: tuple[Dual, ...]

    @property
    def complete(self) -> bool:
        return not self.missing

    @property
    def witness(self) -> Dual | None:
        return self.missing[0] if self.missing else None

    def verify(self) -> bool:
        """Exact re-summation of every assignment; no tolerances involved."""
        if self.missing:
            return False
        for gamma, signs in self.assignments.items():
            if len(signs) != len(self.lams):
                return False
            total = self.space.zero()
            for eps, lam in zip(signs, self.lams):
                if eps not in (-1, 0, 1):
                    return False
                if eps:
                    total = self.space.add(total, self.space.scale(eps, lam))
            if total != gamma:
                return False
        return set(self.assignments) == set(self.covered)


@dataclass(frozen=True)
class TupleCoverCertificate:
    """Per-gamma signed tuples over lams with repeats allowed, lengths capped."""

    space: GroupSpec
    lams: tuple[Dual, ...]
    tuples: dict[Dual, tuple[tuple[Dual, int], ...]]
    max_length: int

    def verify(self) -> bool:
        allowed = set(self.lams)
        for gamma, entries in self.tuples.items():
            if len(entries) > self.max_length:
                return False
            total = self.space.zero()
            for lam, eps in entries:
                if eps not in (-1, 1) or lam not in allowed:
                    return False
                total = self.space.add(total, self.space.scale(eps, lam))
            if total != gamma:
                return False
        return True


def is_covered(space: GroupSpec, targets: Iterable[Dual], lams: Iterable[Dual]) -> CoverCertificate:
    """Decide whether every target is a {-1,0,1}-signed sum over lams.

    Reachable sets are expanded one lam at a time with first-write-wins
    back-pointers, so assignments are deterministic.  The empty sum covers the
    identity, so 0 is always covered.
    """
    lam_list = sorted_dual(space, set(tuple(l) for l in lams))
    target_list = sorted_dual(space, set(tuple(t) for t in targets))
    n = space.size

    prev_tables: list[np.ndarray] = []
    eps_tables: list[np.ndarray] = []
    reach = np.zeros(n, dtype=bool)
    reach[0] = True
    for lam in lam_list:
        prev = np.full(n, -1, dtype=np.int64)
        eps_step = np.zeros(n, dtype=np.int8)
        src = np.nonzero(reach)[0]
        for eps in (0, 1, -1):
            if eps == 0:
                dst = src
            else:
                shift = space.shift_permutation(lam if eps == 1 else space.neg(lam))
                dst = shift[src]
            unset = prev[dst] == -1
            prev[dst[unset]] = src[unset]
            eps_step[dst[unset]] = eps
        prev_tables.append(prev)
        eps_tables.append(eps_step)
        reach = prev != -1

    assignments: dict[Dual, tuple[int, ...]] = {}
    missing: list[Dual] = []
    for gamma in target_list:
        idx = space.index(gamma)
        if not reach[idx]:
            missing.append(gamma)
            continue
        signs = []
        v = idx
        for prev, eps_step in zip(reversed(prev_tables), reversed(eps_tables)):
            signs.append(int(eps_step[v]))
            v = int(prev[v])
        assignments[gamma] = tuple(reversed(signs))
    return CoverCertificate(
        space=space,
        lams=tuple(lam_list),
        assignments=assignments,
        covered=tuple(g for g in target_list if g not in set(missing)),
        missing=tuple(missing),
    )


def is_disassociated(space: GroupSpec, lams: Iterable[Dual]) -> bool:
    """True iff only the all-zero sign pattern over lams sums to the identity."""
    counts = _zero_pattern_counts(space, sorted_dual(space, set(tuple(l) for l in lams)))
    return int(counts[0]) == 1


def _zero_pattern_counts(space: GroupSpec, lam_list: Sequence[Dual]) -> np.ndarray:
    """Number of sign patterns reaching each element, capped at 2."""
    counts = np.zeros(space.size, dtype=np.int64)
    counts[0] = 1
    for lam in lam_list:
        counts = _count_step(space, counts, lam)
    return counts


def _count_step(space: GroupSpec, counts: np.ndarray, lam: Dual) -> np.ndarray:
    plus = space.shift_permutation(lam)
    minus = space.shift_permutation(space.neg(lam))
    nxt = counts.copy()
    nxt[plus] += counts
    nxt[minus] += counts
    return np.minimum(nxt, 2)


def chang_cover(space: GroupSpec, f: Density, delta: float) -> tuple[tuple[Dual, ...], CoverCertificate]:
    """Greedy maximal disassociated subset of the large spectrum, with certificate.

    The subset size obeys |Lambda| <= 4*Ent(f)/delta^2 and maximality makes it
    cover all of Spec_delta(f); both are verified before returning.
    """
    if delta <= 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    spec = sorted_dual(space, spectrum(space, f, delta))
    lams: list[Dual] = []
    counts = np.zeros(space.size, dtype=np.int64)
    counts[0] = 1
    for gamma in spec:
        if all(g == 0 for g in gamma):
            continue
        candidate = _count_step(space, counts, gamma)
        if int(candidate[0]) == 1:
            lams.append(gamma)
            counts = candidate
    bound = 4.0 * relative_entropy(f) / delta**2
    if len(lams) > bound + 1e-9:
        raise CoverBoundError(
            f"disassociated subset of size {len(lams)} exceeds 4*Ent/delta^2 = {bound:.6f}"
        )
    certificate = is_covered(space, spec, lams)
    if not certificate.complete:
        raise CoverBoundError(
            f"maximal disassociated subset fails to cover {certificate.witness}"
        )
    return tuple(lams), certificate


@dataclass(frozen=True)
class BloomCover:
    """A large certified sub-spectrum from the best term of the approximation."""

    covered: tuple[Dual, ...]
    lams: tuple[Dual, ...]
    certificate: CoverCertificate
    d: int
    spectrum_size: int
    coverage_fraction: float
    coverage_required: float
    term_degree: int
    degree_bound: int
    term_index: int
    terms_scanned: int
    term_count: int
    weight_sum: float
    expectation: float
    partial: bool
    bounds_hold: bool
    approx_report: SparseApproxReport


def _term_spectrum(space: GroupSpec, product: RieszProduct) -> set[Dual]:
    mags = fourier_transform(space, product.values(space)).magnitudes()
    peak = float(mags.max())
    if peak == 0.0:
        return set()
    return {space.element(i) for i in np.nonzero(mags > SUPPORT_THRESHOLD * peak)[0]}


def bloom_cover(
    space: GroupSpec,
    f: Density,
    delta: float,
    max_terms: int = 10**6,
    scan_budget: int = 50_000,
) -> BloomCover:
    """Cover a (delta/2)-fraction of Spec_delta(f) using one Riesz product term.

    Runs the sparse approximation at eta = delta/(2*sqrt(2)), then picks the
    term whose thresholded Fourier support meets the large spectrum in the
    most elements (the averaging argument over the term distribution
    guarantees the fraction).  The random choice is derandomized by exhaustive
    maximization; when the expansion exceeds the cap, the scan covers the
    first scan_budget terms in enumeration order and the result is flagged
    partial.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    eta = delta / (2.0 * math.sqrt(2.0))
    combination, approx_report = sparse_approximate(
        f, Family.characters(space), eta, max_terms=max_terms
    )
    spec = sorted_dual(space, spectrum(space, f, delta))
    spec_set = set(spec)

    partial = not combination.materialized and combination.term_count > scan_budget
    limit = None if combination.materialized else scan_budget
    best: tuple[int, int, RieszProduct] | None = None
    weight_sum = 0.0
    scanned = 0
    for index, (coef, product) in enumerate(combination.iter_terms(limit)):
        scanned += 1
        values = product.values(space)
        mean = float(values.mean())
        weight_sum += coef * mean
        if mean == 0.0:
            continue
        hits = len(_term_spectrum(space, product) & spec_set)
        if best is None or hits > best[0]:
            best = (hits, index, product)
            # Lazy scans stop once no term can intersect more; materialized
            # scans run to the end so weight_sum checks the full distribution.
            if hits == len(spec_set) and not combination.materialized:
                break
    if best is None:
        raise CoverBoundError("no term with positive mass; the combination is degenerate")

    hits, term_index, product = best
    covered = tuple(g for g in spec if g in _term_spectrum(space, product))
    spec0, lams = riesz_support(space, product)
    certificate = is_covered(space, covered, lams)
    if not certificate.complete:
        raise CoverBoundError(f"support cover fails on {certificate.witness}")
    required = (delta / 2.0) * len(spec)
    degree_bound = taylor_degree(6.0 * relative_entropy(f) / eta, eta / 3.0)
    bounds_hold = (
        len(covered) + 1e-12 >= required
        and len(lams) <= product.degree
        and product.degree <= degree_bound
    )
    if not bounds_hold and not partial:
        raise CoverBoundError(
            f"covered {len(covered)} of {len(spec)} spectrum elements; "
            f"the averaging bound requires at least {required:.6f}"
        )
    return BloomCover(
        covered=covered,
        lams=tuple(lams),
        certificate=certificate,
        d=len(lams),
        spectrum_size=len(spec),
        coverage_fraction=len(covered) / len(spec) if spec else 1.0,
        coverage_required=required,
        term_degree=product.degree,
        degree_bound=degree_bound,
        term_index=term_index,
        terms_scanned=scanned,
        term_count=combination.term_count,
        weight_sum=weight_sum,
        expectation=combination.expectation(),
        partial=partial,
        bounds_hold=bounds_hold,
        approx_report=approx_report,
    )


@dataclass(frozen=True)
class WeakChangCover:
    """Tuple cover: every spectrum element as a short signed tuple over lams."""

    lams: tuple[Dual, ...]
    certificate: TupleCoverCertificate
    lam_bound: float
    max_length: int
    degree_bound: int
    partial: bool
    missing: tuple[Dual, ...]
    approx_report: SparseApproxReport


def weak_chang_cover(
    space: GroupSpec,
    f: Density,
    delta: float,
    max_terms: int = 10**6,
    scan_budget: int = 50_000,
) -> WeakChangCover:
    """Write every gamma in Spec_delta(f) as a signed tuple over the functionals
    selected by the sparse approximation at eta = delta/sqrt(2).

    Tuples may repeat elements of Lambda; lengths stay below the per-term
    degree.  |Lambda| <= 18*Ent(f)/delta^2 is asserted.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    eta = delta / math.sqrt(2.0)
    combination, approx_report = sparse_approximate(
        f, Family.characters(space), eta, max_terms=max_terms
    )
    lams = sorted_dual(
        space,
        {phi.gamma for phi in approx_report.trace.distinct if any(phi.gamma)},
    )
    lam_bound = 18.0 * relative_entropy(f) / delta**2
    if len(lams) > lam_bound + 1e-9:
        raise CoverBoundError(
            f"tuple cover base of size {len(lams)} exceeds 18*Ent/delta^2 = {lam_bound:.6f}"
        )

    spec = sorted_dual(space, spectrum(space, f, delta))
    partial = not combination.materialized and combination.term_count > scan_budget
    limit = None if combination.materialized else scan_budget
    scanned: list[tuple[RieszProduct, set[Dual]]] = []
    terms_iter = combination.iter_terms(limit)

    tuples: dict[Dual, tuple[tuple[Dual, int], ...]] = {}
    missing: list[Dual] = []
    max_length = 0
    for gamma in spec:
        if all(g == 0 for g in gamma):
            tuples[gamma] = ()
            continue
        found = None
        for product, spec0 in scanned:
            if gamma in spec0:
                found = product
                break
        while found is None:
            nxt = next(terms_iter, None)
            if nxt is None:
                break
            product = nxt[1]
            spec0 = _term_spectrum(space, product)
            scanned.append((product, spec0))
            if gamma in spec0:
                found = product
        if found is None:
            # Thresholding can hide a support element of every single term even
            # though the combination's coefficient is provably nonzero; fall
            # back to any term whose factor list reaches gamma by signed sums.
            for product, _ in scanned:
                if _factor_tuple(space, product, gamma) is not None:
                    found = product
                    break
        if found is None:
            if partial:
                missing.append(gamma)
                continue
            raise CoverBoundError(f"no expansion term supports {gamma}")
        entries = _factor_tuple(space, found, gamma)
        if entries is None:
            raise CoverBoundError(f"support element {gamma} is not reachable from its factors")
        tuples[gamma] = entries
        max_length = max(max_length, len(entries))

    degree_bound = taylor_degree(6.0 * relative_entropy(f) / eta, eta / 3.0)
    certificate = TupleCoverCertificate(
        space=space, lams=tuple(lams), tuples=tuples, max_length=max(max_length, 1)
    )
    return WeakChangCover(
        lams=tuple(lams),
        certificate=certificate,
        lam_bound=lam_bound,
        max_length=max_length,
        degree_bound=degree_bound,
        partial=partial,
        missing=tuple(missing),
        approx_report=approx_report,
    )


def _factor_tuple(
    space: GroupSpec, product: RieszProduct, gamma: Dual
) -> tuple[tuple[Dual, int], ...] | None:
    """Signed selection over the factor gammas (repeats allowed) summing to gamma."""
    gammas = [
        factor.functional.gamma
        for factor in product.factors
        if factor.eps != 0 and any(factor.functional.gamma)
    ]
    n = space.size
    prev_tables = []
    eps_tables = []
    reach = np.zeros(n, dtype=bool)
    reach[0] = True
    for lam in gammas:
        prev = np.full(n, -1, dtype=np.int64)
        eps_step = np.zeros(n, dtype=np.int8)
        src = np.nonzero(reach)[0]
        for eps in (0, 1, -1):
            if eps == 0:
                dst = src
            else:
                shift = space.shift_permutation(lam if eps == 1 else space.neg(lam))
                dst = shift[src]
            unset = prev[dst] == -1
            prev[dst[unset]] = src[unset]
            eps_step[dst[unset]] = eps
        prev_tables.append(prev)
        eps_tables.append(eps_step)
        reach = prev != -1
    idx = space.index(gamma)
    if not reach[idx]:
        return None
    entries = []
    v = idx
    for lam, prev, eps_step in zip(reversed(gammas), reversed(prev_tables), reversed(eps_tables)):
        eps = int(eps_step[v])
        if eps:
            entries.append((lam, eps))
        v = int(prev[v])
    return tuple(reversed(entries))


@dataclass(frozen=True)
class F2SpanCover:
    """Subset-sum cover over a group of exponent 2, where signed and plain sums agree."""

    lams: tuple[Dual, ...]
    certificate: CoverCertificate
    delta_effective: float
    lam_bound: float
    approx_report: SparseApproxReport


def chang_cover_f2(
    space: GroupSpec,
    f: Density,
    eta: float,
    max_terms: int = 10**6,
) -> F2SpanCover:
    """Span-style cover for groups with every order 2.

    The sparse approximation at eta confines Spec_{2*sqrt(2)*eta}(f) to the
    span of the selected dual elements; over exponent-2 groups that span
    equals the set of signed sums, so is_covered certifies it directly.
    """
    if any(n != 2 for n in space.orders):
        raise ValueError(f"group orders must all be 2, got {space.orders}")
    combination, approx_report = sparse_approximate(
        f, Family.characters(space), eta, max_terms=max_terms
    )
    lams = sorted_dual(
        space,
        {phi.gamma for phi in approx_report.trace.distinct if any(phi.gamma)},
    )
    lam_bound = 9.0 * relative_entropy(f) / eta**2
    if len(lams) > lam_bound + 1e-9:
        raise CoverBoundError(
            f"span cover base of size {len(lams)} exceeds 9*Ent/eta^2 = {lam_bound:.6f}"
        )
    delta_effective = 2.0 * math.sqrt(2.0) * eta
    spec = spectrum(space, f, delta_effective)
    certificate = is_covered(space, spec, lams)
    if not certificate.complete:
        raise CoverBoundError(f"span cover fails on {certificate.witness}")
    return F2SpanCover(
        lams=tuple(lams),
        certificate=certificate,
        delta_effective=delta_effective,
        lam_bound=lam_bound,
        approx_report=approx_report,
    )
