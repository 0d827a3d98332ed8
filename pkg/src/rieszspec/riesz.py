"""Generalized Riesz products, their Fourier support, and truncated-exponential combinations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .density import Functional, canonical_functional_key
from .groups import GroupSpec, character_eval, fourier_transform, sorted_dual

SUPPORT_THRESHOLD = 1e-9
DEFAULT_TERM_CAP = 10**6

_LOG_FLOOR = -1e30


class RieszError(ValueError):
    """Invalid Riesz product or truncation request."""


@dataclass(frozen=True)
class RieszFactor:
    """One factor 1 + eps * phi(x); stays in [0, 2] because the functionals are bounded."""

    functional: Functional
    eps: int

    def __post_init__(self) -> None:
        if self.eps not in (-1, 0, 1):
            raise RieszError(f"factor eps must be -1, 0 or 1, got {self.eps}")


@dataclass(frozen=True)
class RieszProduct:
    """Product of factors (1 + eps_i phi_i); non-negative everywhere; empty product is 1."""

    factors: tuple[RieszFactor, ...] = ()

    @property
    def degree(self) -> int:
        return len(self.factors)

    def values(self, space: GroupSpec) -> np.ndarray:
        out = np.ones(space.size)
        for factor in self.factors:
            if factor.eps != 0:
                out = out * (1.0 + factor.eps * factor.functional.realize(space))
        return out


def riesz_eval(product: RieszProduct, space: GroupSpec, x: Sequence[int]) -> float:
    """Evaluate the product at one element."""
    out = 1.0
    for factor in product.factors:
        if factor.eps == 0:
            continue
        char = character_eval(space, factor.functional.gamma, x)
        base = char.real if factor.functional.kind == "Re" else char.imag
        out *= 1.0 + factor.eps * factor.functional.sign * base
    return out


def _reachable(space: GroupSpec, lams: Sequence[tuple[int, ...]]) -> np.ndarray:
    """Boolean table of signed sums sum eps_j lam_j over eps in {-1,0,1}^lams."""
    reach = np.zeros(space.size, dtype=bool)
    reach[0] = True
    for lam in lams:
        plus = space.shift_permutation(lam)
        minus = space.shift_permutation(space.neg(lam))
        nxt = reach.copy()
        nxt[plus[reach]] = True
        nxt[minus[reach]] = True
        reach = nxt
    return reach


def riesz_support(space: GroupSpec, product: RieszProduct) -> tuple[set[tuple[int, ...]], tuple[tuple[int, ...], ...]]:
    """Thresholded Fourier support of the product and a small covering set.

    Returns (Spec0, Lambda): Spec0 holds the dual elements where |Rhat| exceeds
    1e-9 relative to max|Rhat|; Lambda has at most degree(product) elements and
    every Spec0 member is a {-1,0,1}-signed sum over Lambda.  A repeated gamma
    with multiplicity t contributes the multiples {gamma, 2*gamma, ..., t*gamma};
    multiples are reduced in the group, deduplicated, and 0 is dropped.  When
    collisions between multiples of different gammas lose coverage, uncovered
    spectrum elements are appended directly (they still fit the degree budget).
    """
    table = fourier_transform(space, product.values(space))
    mags = table.magnitudes()
    peak = float(mags.max())
    if peak == 0.0:
        return set(), ()
    spec0 = {space.element(i) for i in np.nonzero(mags > SUPPORT_THRESHOLD * peak)[0]}

    def class_rep(gamma: tuple[int, ...]) -> tuple[int, ...]:
        return min(gamma, space.neg(gamma), key=space.index)

    counts: dict[tuple[int, ...], int] = {}
    for factor in product.factors:
        gamma = factor.functional.gamma
        if factor.eps == 0 or all(g == 0 for g in gamma):
            continue
        rep = class_rep(gamma)
        counts[rep] = counts.get(rep, 0) + 1

    cover: set[tuple[int, ...]] = set()
    for rep in sorted_dual(space, counts):
        for k in range(1, counts[rep] + 1):
            multiple = space.scale(k, rep)
            if any(g != 0 for g in multiple):
                cover.add(class_rep(multiple))

    lams = sorted_dual(space, cover)
    reach = _reachable(space, lams)
    for gamma in sorted_dual(space, spec0):
        if not reach[space.index(gamma)]:
            lams = sorted_dual(space, set(lams) | {class_rep(gamma)})
            reach = _reachable(space, lams)
    if len(lams) > product.degree:
        raise RieszError(
            f"cover set of size {len(lams)} exceeds the product degree {product.degree}"
        )
    return spec0, tuple(lams)


def taylor_degree(bound: float, eta: float) -> int:
    """Smallest m with bound^(m+1)/(m+1)! <= eta/2, searched in the log domain."""
    if not 0.0 < eta < 1.0:
        raise RieszError(f"truncation accuracy must be in (0, 1), got {eta}")
    if bound < 0:
        raise RieszError(f"exponent bound must be >= 0, got {bound}")
    if bound == 0.0:
        return 0
    log_target = math.log(eta / 2.0)
    log_b = math.log(bound)
    m = 0
    while (m + 1) * log_b - math.lgamma(m + 2) > log_target:
        m += 1
    return m


def _log_truncated_exp(psi: np.ndarray, m: int) -> np.ndarray:
    """log p_m(psi) pointwise for psi >= 0, p_m(x) = sum_{j<=m} x^j / j!."""
    with np.errstate(divide="ignore"):
        log_psi = np.where(psi > 0, np.log(np.maximum(psi, 1e-300)), _LOG_FLOOR)
    j = np.arange(m + 1, dtype=np.float64)
    rows = j[:, None] * log_psi[None, :] - np.array([math.lgamma(k + 1) for k in j])[:, None]
    top = rows.max(axis=0)
    return top + np.log(np.exp(rows - top).sum(axis=0))


def _logsumexp(values: np.ndarray) -> float:
    top = float(values.max())
    return top + math.log(float(np.exp(values - top).sum()))


@dataclass(frozen=True)
class RieszCombination:
    """Non-negative linear combination of Riesz products; optionally a density."""

    space: GroupSpec
    terms: tuple[tuple[float, RieszProduct], ...]
    degree_bound: int | None = None
    truncation_error: float | None = None
    target_error: float | None = None
    _cached_values: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        for coef, _ in self.terms:
            if coef < 0:
                raise RieszError(f"combination coefficients must be >= 0, got {coef}")

    @property
    def materialized(self) -> bool:
        return True

    @property
    def term_count(self) -> int:
        return len(self.terms)

    def max_degree(self) -> int:
        return max((product.degree for _, product in self.terms), default=0)

    def iter_terms(self, limit: int | None = None) -> Iterator[tuple[float, RieszProduct]]:
        terms = self.terms if limit is None else self.terms[:limit]
        yield from terms

    def values(self) -> np.ndarray:
        if self._cached_values is None:
            out = np.zeros(self.space.size)
            for coef, product in self.terms:
                out += coef * product.values(self.space)
            out.flags.writeable = False
            object.__setattr__(self, "_cached_values", out)
        return self._cached_values

    def expectation(self) -> float:
        return float(self.values().mean())


@dataclass(frozen=True)
class TruncatedExponential:
    """Factored form of p_m(psi)/E[p_m(psi)] kept unexpanded past the term cap.

    psi = sum_phi c_phi (1 + phi).  Terms of the multinomial expansion can be
    enumerated lazily in graded lexicographic order without materializing all
    C(#coeffs + m, m) of them.
    """

    space: GroupSpec
    coefficients: tuple[tuple[Functional, float], ...]
    degree: int
    log_norm: float
    term_count: int
    truncation_error: float | None = None
    target_error: float | None = None
    _cached_values: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def materialized(self) -> bool:
        return False

    @property
    def degree_bound(self) -> int:
        return self.degree

    def max_degree(self) -> int:
        return self.degree

    def _psi(self) -> np.ndarray:
        psi = np.zeros(self.space.size)
        for phi, c in self.coefficients:
            psi += c * (1.0 + phi.realize(self.space))
        return psi

    def values(self) -> np.ndarray:
        if self._cached_values is None:
            logp = _log_truncated_exp(self._psi(), self.degree)
            out = np.exp(logp - self.log_norm)
            out.flags.writeable = False
            object.__setattr__(self, "_cached_values", out)
        return self._cached_values

    def expectation(self) -> float:
        return float(self.values().mean())

    def iter_terms(self, limit: int | None = None) -> Iterator[tuple[float, RieszProduct]]:
        log_c = [math.log(c) for _, c in self.coefficients]
        produced = 0
        for alpha in _exponent_vectors(len(self.coefficients), self.degree):
            if limit is not None and produced >= limit:
                return
            log_coef = -self.log_norm
            factors: list[RieszFactor] = []
            for i, a in enumerate(alpha):
                if a == 0:
                    continue
                log_coef += a * log_c[i] - math.lgamma(a + 1)
                factors.extend([RieszFactor(self.coefficients[i][0], 1)] * a)
            yield math.exp(log_coef), RieszProduct(tuple(factors))
            produced += 1


def _exponent_vectors(n: int, max_degree: int) -> Iterator[tuple[int, ...]]:
    """Exponent tuples with total degree <= max_degree, graded then lexicographic."""
    if n == 0:
        yield ()
        return
    vec = [0] * n

    def fill(pos: int, remaining: int) -> Iterator[tuple[int, ...]]:
        if pos == n - 1:
            vec[pos] = remaining
            yield tuple(vec)
            return
        for a in range(remaining + 1):
            vec[pos] = a
            yield from fill(pos + 1, remaining - a)

    for degree in range(max_degree + 1):
        yield from fill(0, degree)


def truncate_exponential(
    space: GroupSpec,
    coefficients: Mapping[Functional, float],
    eta: float,
    max_terms: int = DEFAULT_TERM_CAP,
) -> RieszCombination | TruncatedExponential:
    """Density approximation of exp(sum c_phi (1 + phi)) by a truncated Taylor polynomial.

    Returns a combination whose terms all have degree at most
    taylor_degree(2 * sum c_phi, eta) and whose L1 distance to the normalized
    exponential is at most eta (measured exactly and stored on the result).
    The multinomial expansion is materialized only when its term count fits
    under max_terms; otherwise the factored form is returned.
    """
    if not 0.0 < eta < 1.0:
        raise RieszError(f"truncation accuracy must be in (0, 1), got {eta}")
    items = [
        (phi, float(c))
        for phi, c in sorted(
            coefficients.items(), key=lambda kv: canonical_functional_key(space, kv[0])
        )
        if c != 0.0
    ]
    for phi, c in items:
        if c < 0:
            raise RieszError(f"exponential coefficients must be >= 0, got {c} on {phi.label()}")

    if not items:
        return RieszCombination(
            space=space,
            terms=((1.0, RieszProduct(())),),
            degree_bound=0,
            truncation_error=0.0,
            target_error=eta,
        )

    rows = np.vstack([1.0 + phi.realize(space) for phi, _ in items])
    if rows.min() < -1e-12:
        raise RieszError("functional exceeds sup-norm 1; factors must stay non-negative")
    c_vec = np.array([c for _, c in items])
    psi = c_vec @ rows
    total = float(c_vec.sum())
    m = taylor_degree(2.0 * total, eta)

    logp = _log_truncated_exp(psi, m)
    log_norm = _logsumexp(logp) - math.log(space.size)
    log_eh = _logsumexp(psi) - math.log(space.size)
    exact = np.exp(psi - log_eh)
    truncated = np.exp(logp - log_norm)
    l1_error = float(np.abs(exact - truncated).mean())

    count = math.comb(len(items) + m, m)
    if count > max_terms:
        return TruncatedExponential(
            space=space,
            coefficients=tuple(items),
            degree=m,
            log_norm=log_norm,
            term_count=count,
            truncation_error=l1_error,
            target_error=eta,
        )

    with np.errstate(divide="ignore"):
        log_rows = np.where(rows > 0, np.log(np.maximum(rows, 1e-300)), _LOG_FLOOR)
    log_c = np.log(c_vec)
    lgam_table = np.array([math.lgamma(k + 1) for k in range(m + 1)])
    exponents = np.array(list(_exponent_vectors(len(items), m)), dtype=np.int64)
    log_coefs = exponents @ log_c - lgam_table[exponents].sum(axis=1) - log_norm
    coefs = np.exp(log_coefs)
    term_values = np.exp(log_coefs[:, None] + exponents @ log_rows).sum(axis=0)

    terms = []
    for alpha, coef in zip(exponents, coefs):
        factors: list[RieszFactor] = []
        for i, a in enumerate(alpha):
            if a:
                factors.extend([RieszFactor(items[i][0], 1)] * int(a))
        terms.append((float(coef), RieszProduct(tuple(factors))))

    combination = RieszCombination(
        space=space,
        terms=tuple(terms),
        degree_bound=m,
        truncation_error=l1_error,
        target_error=eta,
    )
    object.__setattr__(combination, "_cached_values", term_values)
    return combination


def combination_eval(combination, x: Sequence[int]) -> float:
    """Pointwise value of a combination at one element."""
    index = combination.space.index(x)
    return float(combination.values()[index])


def combination_values(combination) -> np.ndarray:
    return combination.values()
