"""Relative-entropy minimization over moment constraints, solved through its dual.

The primal minimizes Ent(g) over densities with <g, phi> >= <f, phi> - delta
for every constraint functional.  Its dual maximizes
-log E[exp(sum lambda_phi phi)] + sum lambda_phi (<f, phi> - delta) over
lambda >= 0, and the optimal primal point is the Gibbs density of the optimal
multipliers.  The solver is projected gradient ascent with Barzilai-Borwein
step seeding and Armijo backtracking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .density import Density, Family, Functional, canonical_functional_key, kl_divergence, relative_entropy
from .groups import GroupSpec
from .riesz import RieszCombination, TruncatedExponential, taylor_degree, truncate_exponential

KKT_TOL = 1e-8
MAX_ITERATIONS = 10**5


class DualityError(ValueError):
    """Invalid moment program or solver misuse."""


@dataclass(frozen=True)
class MomentProgram:
    """Target density, constraint functionals (signs included), and slack delta."""

    f: Density
    functionals: tuple[Functional, ...]
    delta: float

    def __post_init__(self) -> None:
        if self.delta < 0:
            raise DualityError(f"delta must be >= 0, got {self.delta}")
        if not self.functionals:
            raise DualityError("a moment program needs at least one constraint")
        object.__setattr__(self, "functionals", tuple(self.functionals))

    def matrix(self) -> np.ndarray:
        return np.vstack([phi.realize(self.f.space) for phi in self.functionals])

    def targets(self) -> np.ndarray:
        return self.matrix() @ self.f.values / self.f.space.size - self.delta


def _lambda_vector(program: MomentProgram, lam) -> np.ndarray:
    if isinstance(lam, Mapping):
        vec = np.array([float(lam.get(phi, 0.0)) for phi in program.functionals])
    else:
        vec = np.asarray(lam, dtype=np.float64)
        if vec.shape != (len(program.functionals),):
            raise DualityError(
                f"expected {len(program.functionals)} multipliers, got shape {vec.shape}"
            )
    if np.any(vec < 0):
        raise DualityError("dual multipliers must be non-negative")
    return vec


def _log_partition(matrix: np.ndarray, lam: np.ndarray) -> float:
    z = lam @ matrix
    top = float(z.max())
    return top + math.log(float(np.exp(z - top).mean()))


def _gibbs_values(matrix: np.ndarray, lam: np.ndarray) -> np.ndarray:
    z = lam @ matrix
    raw = np.exp(z - z.max())
    return raw / raw.mean()


def dual_objective(program: MomentProgram, lam) -> float:
    """-log E[exp(sum lambda phi)] + sum lambda (<f, phi> - delta); 0 at lambda = 0."""
    vec = _lambda_vector(program, lam)
    matrix = program.matrix()
    return float(-_log_partition(matrix, vec) + vec @ program.targets())


@dataclass(frozen=True)
class DualSolution:
    """Optimal multipliers with their Gibbs density and convergence diagnostics."""

    program: MomentProgram
    lam: np.ndarray
    dual_value: float
    g_star: Density
    gap: float
    kkt_residual: float
    converged: bool
    iterations: int
    objective_history: tuple[float, ...]

    @property
    def sum_lambda(self) -> float:
        return float(self.lam.sum())

    def multipliers(self) -> dict[Functional, float]:
        return {phi: float(v) for phi, v in zip(self.program.functionals, self.lam)}


def solve_dual(
    program: MomentProgram,
    tol: float = KKT_TOL,
    max_iterations: int = MAX_ITERATIONS,
) -> DualSolution:
    """Projected gradient ascent on the dual with backtracking line search.

    Terminates when the KKT residual max_phi |min(lambda_phi, -grad_phi)|
    drops to tol; the iteration cap returns the best iterate flagged as
    non-converged.  Requires delta > 0 so that strong duality holds.
    """
    if program.delta <= 0:
        raise DualityError("solve_dual needs delta > 0 (strict feasibility)")
    matrix = program.matrix()
    targets = program.targets()
    size = program.f.space.size

    def objective(vec: np.ndarray) -> float:
        return -_log_partition(matrix, vec) + float(vec @ targets)

    def gradient(vec: np.ndarray) -> np.ndarray:
        return targets - matrix @ _gibbs_values(matrix, vec) / size

    lam = np.zeros(len(program.functionals))
    obj = objective(lam)
    grad = gradient(lam)
    history = [obj]
    step = 1.0
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        residual = float(np.max(np.abs(np.minimum(lam, -grad))))
        if residual <= tol:
            converged = True
            break
        trial_step = step
        accepted = False
        for _ in range(60):
            candidate = np.maximum(lam + trial_step * grad, 0.0)
            move = candidate - lam
            if not move.any():
                break
            cand_obj = objective(candidate)
            if cand_obj >= obj + 1e-4 * float(grad @ move):
                accepted = True
                break
            trial_step *= 0.5
        if not accepted:
            break
        new_grad = gradient(candidate)
        dlam = candidate - lam
        dgrad = new_grad - grad
        curve = float(dlam @ dgrad)
        step = float(dlam @ dlam) / abs(curve) if curve != 0.0 else trial_step * 2.0
        step = min(max(step, 1e-12), 1e12)
        lam, obj, grad = candidate, cand_obj, new_grad
        history.append(obj)
    residual = float(np.max(np.abs(np.minimum(lam, -gradient(lam)))))
    if residual <= tol:
        converged = True

    g_star = Density(values=_gibbs_values(matrix, lam), space=program.f.space)
    gap = abs(relative_entropy(g_star) - obj)
    return DualSolution(
        program=program,
        lam=lam,
        dual_value=obj,
        g_star=g_star,
        gap=gap,
        kkt_residual=residual,
        converged=converged,
        iterations=iterations,
        objective_history=tuple(history),
    )


@dataclass(frozen=True)
class DualityReport:
    """Both sides of Ent(f) - D(f||g*) = dual + delta * sum(lambda), plus margins."""

    dual_value: float
    primal_value: float
    gap: float
    identity_lhs: float
    identity_rhs: float
    identity_gap: float
    weak_duality_margin: float
    sum_lambda: float
    sum_lambda_bound: float
    sum_lambda_margin: float


def duality_report(program: MomentProgram, solution: DualSolution) -> DualityReport:
    ent_f = relative_entropy(program.f)
    lhs = ent_f - kl_divergence(program.f, solution.g_star)
    rhs = solution.dual_value + program.delta * solution.sum_lambda
    bound = ent_f / program.delta if program.delta > 0 else math.inf
    return DualityReport(
        dual_value=solution.dual_value,
        primal_value=relative_entropy(solution.g_star),
        gap=solution.gap,
        identity_lhs=lhs,
        identity_rhs=rhs,
        identity_gap=abs(lhs - rhs),
        weak_duality_margin=ent_f - solution.dual_value,
        sum_lambda=solution.sum_lambda,
        sum_lambda_bound=bound,
        sum_lambda_margin=bound - solution.sum_lambda,
    )


@dataclass(frozen=True)
class LaplaceReport:
    """Worst margin of log E[exp(sum lambda phi)] - (1/2) sum lambda^2 over samples."""

    max_margin: float
    margins: tuple[float, ...]
    certified: bool


def laplace_check(family: Family, lambda_samples: Sequence, tol: float = 1e-9) -> LaplaceReport:
    """Sampled check of the exponential-moment bound; a smoke test, not a proof.

    Disassociated character families satisfy the bound for every multiplier
    choice, so any positive margin here indicates a broken family.
    """
    matrix = family.matrix()
    size = family.space.size
    margins = []
    for sample in lambda_samples:
        if isinstance(sample, Mapping):
            vec = np.array([float(sample.get(phi, 0.0)) for phi in family.members])
        else:
            vec = np.asarray(sample, dtype=np.float64)
            if vec.shape != (len(family.members),):
                raise DualityError("lambda sample does not match the family size")
        lhs = _log_partition(matrix, vec)
        rhs = 0.5 * float(vec @ vec)
        margins.append(lhs - rhs)
    max_margin = max(margins, default=-math.inf)
    return LaplaceReport(
        max_margin=max_margin, margins=tuple(margins), certified=max_margin <= tol
    )


def sum_of_squares_bound(f: Density, family: Family) -> tuple[float, float]:
    """(sum_phi <f, phi>^2, 2*Ent(f)); the inequality holds for pseudorandom families.

    Follows the delta = 0 program with the explicit feasible multipliers
    lambda_phi = <f, phi>, so nothing is solved numerically.
    """
    values = family.matrix() @ f.values / family.space.size
    return float(values @ values), 2.0 * relative_entropy(f)


@dataclass(frozen=True)
class LowDegreeReport:
    eta: float
    entropy: float
    sum_lambda: float
    sum_lambda_bound: float
    degree: int
    degree_bound: int
    seminorm_error: float
    l1_error: float
    converged: bool
    all_bounds_hold: bool
    solution: DualSolution


def low_degree_approximate(
    f: Density,
    family: Family,
    eta: float,
    max_terms: int = 10**6,
) -> tuple[RieszCombination | TruncatedExponential, LowDegreeReport]:
    """Duality route to ||f - g||_family <= eta with low per-term degree.

    Solves the program with delta = eta/2 over both signs of every family
    member, then truncates the exponential of the optimal Gibbs exponent with
    budget eta/2.  The multiplier mass obeys sum(lambda) <= 2*Ent(f)/eta.
    """
    if not 0.0 < eta < 1.0:
        raise DualityError(f"eta must be in (0, 1), got {eta}")
    space = f.space
    signed = []
    for phi in family.members:
        signed.append(phi)
        signed.append(phi.negated())
    signed.sort(key=lambda phi: canonical_functional_key(space, phi))
    program = MomentProgram(f=f, functionals=tuple(signed), delta=eta / 2.0)
    solution = solve_dual(program)

    coeffs = {phi: v for phi, v in solution.multipliers().items() if v > 1e-12}
    combination = truncate_exponential(space, coeffs, eta / 2.0, max_terms=max_terms)

    gvals = combination.values()
    matrix = family.matrix()
    seminorm_error = float(np.max(np.abs(matrix @ (gvals - f.values) / space.size)))
    entropy = relative_entropy(f)
    sum_bound = 2.0 * entropy / eta
    degree = combination.degree_bound or 0
    degree_bound = taylor_degree(2.0 * (sum_bound + 1e-6), eta / 2.0)
    all_bounds_hold = (
        solution.sum_lambda <= sum_bound + 1e-6
        and seminorm_error <= eta + 1e-9
        and degree <= degree_bound
    )
    report = LowDegreeReport(
        eta=eta,
        entropy=entropy,
        sum_lambda=solution.sum_lambda,
        sum_lambda_bound=sum_bound,
        degree=degree,
        degree_bound=degree_bound,
        seminorm_error=seminorm_error,
        l1_error=combination.truncation_error or 0.0,
        converged=solution.converged,
        all_bounds_hold=all_bounds_hold,
        solution=solution,
    )
    return combination, report
