"""Exponential-weights dynamics with piecewise-constant driving functionals.

The trajectory g_t = exp(w_t)/E[exp(w_t)] starts at the uniform density and,
stage by stage, drives the worst-discrepancy functional until its pairing with
g lands within eta/3 of the target pairing with f.  The run stops once every
discrepancy is at most 2*eta/3.  KL divergence to the target decreases at rate
at least eta/3 while driving, which yields the time bound T <= 3*Ent(f)/eta
and the stage bound 9*Ent(f)/eta^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .density import Density, Family, Functional, canonical_functional_key, relative_entropy
from .groups import GroupSpec
from .riesz import RieszCombination, TruncatedExponential, taylor_degree, truncate_exponential

ENDPOINT_VALUE_TOL = 1e-3  # multiplied by eta; tolerance on the driven inner product
_MAX_BISECT = 300


class DescentError(RuntimeError):
    """Numerical contradiction with the stage-count or time bounds."""


@dataclass(frozen=True)
class DescentInterval:
    t_start: float
    t_end: float
    functional: Functional
    sign: int

    @property
    def length(self) -> float:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class DescentTrace:
    """Complete record of one run: intervals, final weights, and the final density."""

    space: GroupSpec
    intervals: tuple[DescentInterval, ...]
    total_time: float
    distinct: tuple[Functional, ...]
    log_weights: np.ndarray
    g_final: Density
    entropy: float
    eta: float
    seminorm_error: float

    def log_weights_at(self, t: float) -> np.ndarray:
        """Replay the integral of the driving functionals up to time t."""
        w = np.zeros(self.space.size)
        for interval in self.intervals:
            if t <= interval.t_start:
                break
            span = min(t, interval.t_end) - interval.t_start
            w += span * interval.sign * interval.functional.realize(self.space)
        return w

    def density_at(self, t: float) -> Density:
        return _gibbs(self.space, self.log_weights_at(t))

    def coefficient_map(self) -> dict[Functional, float]:
        """Total drive time per signed functional; feeds the exponential truncation."""
        coeffs: dict[Functional, float] = {}
        for interval in self.intervals:
            key = Functional(
                kind=interval.functional.kind,
                gamma=interval.functional.gamma,
                sign=interval.sign * interval.functional.sign,
            )
            coeffs[key] = coeffs.get(key, 0.0) + interval.length
        return coeffs


def _gibbs(space: GroupSpec, log_weights: np.ndarray) -> Density:
    shifted = log_weights - log_weights.max()
    raw = np.exp(shifted)
    return Density(values=raw / raw.mean(), space=space)


def _driven_inner(log_weights: np.ndarray, phi: np.ndarray, step: float) -> float:
    z = log_weights + step * phi
    p = np.exp(z - z.max())
    return float((p @ phi) / p.sum())


def interval_endpoint(
    space: GroupSpec,
    log_weights: np.ndarray,
    functional: Functional,
    f_target: float,
    eta: float,
) -> float:
    """Smallest step s with |<g_{w + s*phi}, phi> - f_target| <= eta/3.

    The functional's sign encodes the drive direction, so the signed inner
    product increases monotonically (its derivative is a variance) and first
    crosses the band edge f_target_signed - eta/3 from below.  Located by
    doubling plus bisection; tolerance eta * 1e-3 on the inner-product value.
    """
    phi = functional.realize(space)
    edge = functional.sign * f_target - eta / 3.0
    return _endpoint_search(log_weights, phi, edge, eta * ENDPOINT_VALUE_TOL)


def _endpoint_search(
    log_weights: np.ndarray, phi: np.ndarray, edge: float, value_tol: float
) -> float:
    u0 = _driven_inner(log_weights, phi, 0.0)
    if u0 >= edge:
        return 0.0
    hi = max(1e-6, 0.25 * (edge - u0))
    u_hi = _driven_inner(log_weights, phi, hi)
    for _ in range(_MAX_BISECT):
        if u_hi >= edge:
            break
        hi *= 2.0
        u_hi = _driven_inner(log_weights, phi, hi)
    else:
        raise DescentError("driven inner product never reached the stopping band")
    lo = 0.0
    for _ in range(_MAX_BISECT):
        if u_hi - edge <= value_tol:
            return hi
        mid = 0.5 * (lo + hi)
        u_mid = _driven_inner(log_weights, phi, mid)
        if u_mid >= edge:
            hi, u_hi = mid, u_mid
        else:
            lo = mid
    return hi


def run_mirror_descent(f: Density, family: Family, eta: float) -> DescentTrace:
    """Drive worst-discrepancy functionals until ||f - g||_family <= 2*eta/3.

    Deterministic: stages select the maximum absolute discrepancy with ties
    broken by the family's canonical enumeration order.  Aborts if the stage
    count ever exceeds ceil(9*Ent(f)/eta^2) + 1, which would contradict the
    minimum stage length eta/3.
    """
    if not 0.0 < eta < 1.0:
        raise ValueError(f"eta must be in (0, 1), got {eta}")
    if f.space != family.space:
        raise ValueError("density and family live on different spaces")
    space = f.space
    matrix = family.matrix()
    targets = matrix @ f.values / space.size
    entropy = relative_entropy(f)
    stage_cap = math.ceil(9.0 * entropy / eta**2) + 1

    w = np.zeros(space.size)
    t = 0.0
    intervals: list[DescentInterval] = []
    while True:
        g = _gibbs(space, w)
        discrepancies = matrix @ g.values / space.size - targets
        k = int(np.argmax(np.abs(discrepancies)))
        worst = float(discrepancies[k])
        if abs(worst) <= 2.0 * eta / 3.0:
            break
        if len(intervals) >= stage_cap:
            raise DescentError(
                f"stage count exceeded {stage_cap} (eta={eta}, Ent={entropy:.6f}); "
                "this contradicts the minimum stage length eta/3"
            )
        sign = -1 if worst > 0 else 1
        phi = sign * matrix[k]
        edge = sign * targets[k] - eta / 3.0
        step = _endpoint_search(w, phi, edge, eta * ENDPOINT_VALUE_TOL)
        w = w + step * phi
        intervals.append(
            DescentInterval(t_start=t, t_end=t + step, functional=family.members[k], sign=sign)
        )
        t += step

    g_final = _gibbs(space, w)
    seminorm_error = float(np.max(np.abs(matrix @ g_final.values / space.size - targets)))
    distinct = tuple(
        sorted(
            {interval.functional.unsigned() for interval in intervals},
            key=lambda phi: canonical_functional_key(space, phi),
        )
    )
    return DescentTrace(
        space=space,
        intervals=tuple(intervals),
        total_time=t,
        distinct=distinct,
        log_weights=w,
        g_final=g_final,
        entropy=entropy,
        eta=eta,
        seminorm_error=seminorm_error,
    )


@dataclass(frozen=True)
class SparseApproxReport:
    eta: float
    entropy: float
    total_time: float
    time_bound: float
    sparsity: int
    sparsity_bound: float
    degree: int
    degree_bound: int
    seminorm_error: float
    l1_error: float
    all_bounds_hold: bool
    trace: DescentTrace


def sparse_approximate(
    f: Density,
    family: Family,
    eta: float,
    max_terms: int = 10**6,
) -> tuple[RieszCombination | TruncatedExponential, SparseApproxReport]:
    """Density approximation ||f - g||_family <= eta by non-negative Riesz products.

    Splits the budget 2*eta/3 for the descent and eta/3 for truncating the
    exponential form of the final iterate.  The report carries the measured
    error together with the time, sparsity, and degree bounds.
    """
    trace = run_mirror_descent(f, family, eta)
    combination = truncate_exponential(
        f.space, trace.coefficient_map(), eta / 3.0, max_terms=max_terms
    )
    gvals = combination.values()
    matrix = family.matrix()
    pair_gap = matrix @ (gvals - f.values) / f.space.size
    seminorm_error = float(np.max(np.abs(pair_gap)))

    time_bound = 3.0 * trace.entropy / eta
    sparsity_bound = 9.0 * trace.entropy / eta**2
    degree_bound = taylor_degree(2.0 * time_bound, eta / 3.0)
    degree = combination.degree_bound if combination.degree_bound is not None else 0
    all_bounds_hold = (
        trace.total_time <= time_bound + 1e-9
        and len(trace.distinct) <= sparsity_bound + 1e-9
        and degree <= degree_bound
        and seminorm_error <= eta + 1e-9
    )
    report = SparseApproxReport(
        eta=eta,
        entropy=trace.entropy,
        total_time=trace.total_time,
        time_bound=time_bound,
        sparsity=len(trace.distinct),
        sparsity_bound=sparsity_bound,
        degree=degree,
        degree_bound=degree_bound,
        seminorm_error=seminorm_error,
        l1_error=combination.truncation_error or 0.0,
        all_bounds_hold=all_bounds_hold,
        trace=trace,
    )
    return combination, report
