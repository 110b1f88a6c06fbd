"""
Property suite run by ``manage.py peds verify``.

Every property returns a measured error and its tolerance; a property that
raises a PedsError is reported as a failure instead of aborting the run.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .analysis import (
    classify_equilibrium,
    commutator_norm,
    compare_spectra,
    find_fixed_points,
    kronecker_jacobian,
    peds_jacobian_closed_form,
    peds_jacobian_fd,
)
from .choices import Classification, IntegrationMethod, MapKind, PropertyStatus
from .embedding import (
    DecayFunction,
    ExtendedState,
    PedsSystem,
    matrix_function_eval,
    similarity_spectrum,
)
from .exceptions import PedsError
from .integrators import IntegrationConfig, complement_norms, fit_decay_rate, integrate, integrate_target
from .projectors import gram_projector, uniform_mean_field
from .targets import (
    DOUBLE_WELL,
    ExpPoly,
    MonomialTerm,
    Ordering,
    Power,
    TargetSystem,
    dissipative_hamiltonian,
    eval_scalar,
    exponential_potential_2d,
    jacobian_scalar,
    linear_system,
    logistic,
    matrix_polynomial,
    memristor_mean_field,
    quartic_critical_points,
    quartic_gradient,
    zero_system,
)

logger = logging.getLogger(__name__)

JACOBIAN_ALPHA = 0.5
MAP_SPLIT_FLOOR = 1e-6
ORDERINGS = (Ordering.standard(), Ordering.balanced())

TRANSFER = {
    Classification.STABLE: Classification.STABLE,
    Classification.UNSTABLE: Classification.SADDLE,
    Classification.SADDLE: Classification.SADDLE,
}


class SkipProperty(Exception):
    pass


@dataclass(frozen=True)
class PropertyResult:
    name: str
    status: str
    measured: float = math.nan
    tolerance: float = math.nan
    reason: str = ''

    @classmethod
    def check(cls, name, measured, tolerance):
        measured = float(measured)
        status = PropertyStatus.PASS if measured <= tolerance else PropertyStatus.FAIL
        return cls(name, status, measured, float(tolerance))

    @classmethod
    def skip(cls, name, reason):
        logger.warning('Property %s skipped: %s', name, reason)
        return cls(name, PropertyStatus.SKIP, reason=reason)

    @property
    def failed(self):
        return self.status == PropertyStatus.FAIL

    def line(self):
        text = f'PROP {self.name} {self.status} measured={self.measured:.3e} tol={self.tolerance:.3e}'
        if self.reason:
            text += f' reason="{self.reason}"'
        return text


@dataclass(frozen=True)
class VerifyContext:
    alpha: float = 0.5
    n: int = 5
    dt: float = 0.01
    seed: int = 0
    samples: int = 100


PROPERTIES = []


def register(name):
    def decorator(func):
        PROPERTIES.append((name, func))
        return func
    return decorator


# Fixtures

def _random_gram(rng, max_n=50):
    n = int(rng.integers(2, max_n + 1))
    k = int(rng.integers(1, n))
    return gram_projector(rng.standard_normal((k, n)))


def _projector_sample(rng):
    return [uniform_mean_field(n) for n in (2, 10, 50)] + [_random_gram(rng) for _ in range(20)]


def _mixed_defined(target, x_star):
    """The mixed map is smooth at x* when every monomial of degree >= 2 sees positive variables."""
    for terms in target.equations:
        for term in terms:
            for monomial in term.expansion(target.m):
                if monomial.degree < 2:
                    continue
                if any(x_star[j] <= 0 for j, e in enumerate(monomial.exponents) if e):
                    return False
    return True


def _equilibria():
    """Targets with their fixed points, shared by the Jacobian properties."""
    well = quartic_gradient(*DOUBLE_WELL)
    yield well, [np.array([r]) for r in quartic_critical_points(*DOUBLE_WELL)]
    yield exponential_potential_2d(), [np.array(p) for p in ((0.0, 0.0), (0.0, 1.0), (0.0, -1.0))]
    yield dissipative_hamiltonian(1.0, 2.0, *DOUBLE_WELL), [np.array([4.0, 0.0]), np.array([-1.0, 0.0])]
    yield linear_system([[-1.0, 0.5, 0.0], [0.0, -2.0, 0.3], [0.2, 0.0, -0.5]]), [np.zeros(3)]


def _embeddings(target, x_star, n, decays=None):
    maps = [MapKind.STANDARD_COMMUTATIVE, MapKind.STANDARD_NONCOMMUTATIVE]
    if _mixed_defined(target, x_star):
        maps.append(MapKind.MIXED_COMMUTATIVE)
    omega = uniform_mean_field(n)
    for map_kind in maps:
        orderings = ORDERINGS if map_kind == MapKind.STANDARD_NONCOMMUTATIVE else ORDERINGS[:1]
        for ordering in orderings:
            yield PedsSystem.build(target, omega, JACOBIAN_ALPHA, map_kind=map_kind, ordering=ordering, decays=decays)


# Projector algebra

@register('projector_idempotence')
def _projector_idempotence(ctx, rng):
    worst = max(np.max(np.abs(p.matrix @ p.matrix - p.matrix)) for p in _projector_sample(rng))
    return worst, 1e-10


@register('projector_spectrum')
def _projector_spectrum(ctx, rng):
    worst = 0.0
    for omega in _projector_sample(rng):
        eigenvalues = np.linalg.eigvalsh(omega.matrix)
        worst = max(worst, np.max(np.minimum(np.abs(eigenvalues), np.abs(eigenvalues - 1.0))))
    return worst, 1e-8


@register('mean_field_collapse')
def _mean_field_collapse(ctx, rng):
    worst = 0.0
    for _ in range(ctx.samples):
        n = int(rng.integers(2, 20))
        omega = uniform_mean_field(n)
        x = rng.uniform(-1.0, 1.0, n)
        mean = x.mean()
        product = omega.matrix * x[None, :]
        for k in range(1, 7):
            expected = mean ** (k - 1) * product
            worst = max(worst, np.max(np.abs(np.linalg.matrix_power(product, k) - expected)))
        sandwich = product @ omega.matrix
        worst = max(worst, np.max(np.abs(sandwich - mean * omega.matrix)))
    return worst, 1e-12


# Embedding

@register('banality_of_the_mean')
def _banality(ctx, rng):
    omega = uniform_mean_field(ctx.n)
    polynomial = [logistic(), quartic_gradient(*DOUBLE_WELL), dissipative_hamiltonian(1.0, 2.0, *DOUBLE_WELL)]
    worst = 0.0
    for target in polynomial + [exponential_potential_2d()]:
        maps = list(MapKind.values) if target in polynomial else [MapKind.STANDARD_COMMUTATIVE, MapKind.STANDARD_NONCOMMUTATIVE]
        for map_kind in maps:
            system = PedsSystem.build(target, omega, JACOBIAN_ALPHA, map_kind=map_kind)
            for _ in range(10):
                x = rng.uniform(0.1, 1.0, target.m)
                derivative = system.rhs_array(ExtendedState.uniform(x, ctx.n).columns)
                expected = np.outer(target.evaluate(x), np.ones(ctx.n))
                worst = max(worst, np.max(np.abs(derivative - expected)))
    return worst, 1e-12


@register('scalar_map_equivalence')
def _scalar_map_equivalence(ctx, rng):
    """
    For scalar polynomial targets under Omega_1 the mixed commutative and the
    standard non-commutative maps agree on every positive state, while the
    standard commutative map differs as soon as the replicas spread.
    """
    omega = uniform_mean_field(ctx.n)
    worst = 0.0
    for target in (logistic(), quartic_gradient(*DOUBLE_WELL)):
        commutative, mixed, noncommutative = (
            PedsSystem.build(target, omega, JACOBIAN_ALPHA, map_kind=kind)
            for kind in (MapKind.STANDARD_COMMUTATIVE, MapKind.MIXED_COMMUTATIVE, MapKind.STANDARD_NONCOMMUTATIVE)
        )
        largest_split = 0.0
        for _ in range(ctx.samples):
            state = rng.uniform(0.1, 2.0, (1, ctx.n))
            reference = noncommutative.rhs_array(state)
            worst = max(worst, np.max(np.abs(mixed.rhs_array(state) - reference)))
            largest_split = max(largest_split, np.max(np.abs(commutative.rhs_array(state) - reference)))
        if largest_split <= MAP_SPLIT_FLOOR:
            logger.error('%s: commutative and non-commutative maps coincide (gap %.3e)', target, largest_split)
            return math.inf, 1e-10
    return worst, 1e-10


@register('ordering_independence')
def _ordering_independence(ctx, rng):
    omega = uniform_mean_field(ctx.n)
    polynomial = TargetSystem(2, (
        (MonomialTerm(1.0, (1, 2)), MonomialTerm(-0.5, (2, 1))),
        (MonomialTerm(0.3, (1, 1)), MonomialTerm(-1.0, (0, 1))),
    ))
    worst = 0.0
    for target in (polynomial, exponential_potential_2d()):
        standard, balanced = (PedsSystem.build(target, omega, JACOBIAN_ALPHA, ordering=o) for o in ORDERINGS)
        for _ in range(20):
            state = rng.uniform(-1.0, 1.0, (2, ctx.n))
            worst = max(worst, np.max(np.abs(standard.rhs_array(state) - balanced.rhs_array(state))))
    return worst, 1e-10


@register('exp_factorization')
def _exp_factorization(ctx, rng):
    omega = uniform_mean_field(10)
    ones = np.ones(10)
    worst = 0.0
    for _ in range(ctx.samples):
        x, y = rng.uniform(0.5, 1.5, (2, 10))
        f = matrix_polynomial(rng.uniform(-0.5, 0.5, 3), omega.matrix * x[None, :])
        g = matrix_polynomial(rng.uniform(-0.5, 0.5, 3), omega.matrix * y[None, :])
        joint = linalg.expm(f + g) @ ones
        split = linalg.expm(f) @ (linalg.expm(g) @ ones)
        worst = max(worst, np.max(np.abs(joint - split)))
    return worst, 1e-10


@register('spectrum_reality')
def _spectrum_reality(ctx, rng):
    worst = 0.0
    for omega in [uniform_mean_field(ctx.n)] + [_random_gram(rng, 20) for _ in range(10)]:
        for _ in range(10):
            eigenvalues = similarity_spectrum(omega, rng.uniform(0.1, 2.0, omega.dim))
            worst = max(worst, np.max(np.abs(eigenvalues.imag)))
    return worst, 1e-10


@register('matrix_function_powers')
def _matrix_function_powers(ctx, rng):
    worst = 0.0
    for omega in (uniform_mean_field(ctx.n), _random_gram(rng, 20)):
        for _ in range(20):
            x = rng.uniform(0.5, 1.5, omega.dim)
            product = omega.matrix * x[None, :]
            for p in (1, 2, 3):
                direct = np.linalg.matrix_power(product, p)
                worst = max(worst, np.max(np.abs(matrix_function_eval(omega, x, Power(p)) - direct)))
    return worst, 1e-10


@register('matrix_function_exp')
def _matrix_function_exp(ctx, rng):
    omega = uniform_mean_field(ctx.n)
    exponential = ExpPoly((0.0, 1.0))
    worst = 0.0
    for _ in range(20):
        x = rng.uniform(0.5, 1.5, omega.dim)
        product = omega.matrix * x[None, :]
        series = np.eye(omega.dim)
        term = np.eye(omega.dim)
        for j in range(1, 30):
            term = term @ product / j
            series = series + term
        worst = max(worst, np.max(np.abs(matrix_function_eval(omega, x, exponential) - series)))
    return worst, 1e-9


# Targets

@register('target_jacobian_fd')
def _target_jacobian_fd(ctx, rng):
    h = 1e-6
    cases = [
        (quartic_gradient(9.85, 10.0, 2.0, -0.395), lambda: rng.uniform(-3.0, 3.0, 1)),
        (exponential_potential_2d(), lambda: rng.uniform(-1.5, 1.5, 2)),
        (dissipative_hamiltonian(1.0, 2.0, *DOUBLE_WELL), lambda: rng.uniform(-3.0, 3.0, 2)),
        (memristor_mean_field(0.5, 0.2), lambda: rng.uniform(0.05, 0.9, 1)),
    ]
    worst = 0.0
    for target, sample in cases:
        for _ in range(10):
            x = sample()
            analytic = jacobian_scalar(target, x)
            steps = np.eye(target.m) * h
            fd = np.column_stack([(eval_scalar(target, x + e) - eval_scalar(target, x - e)) / (2 * h) for e in steps])
            worst = max(worst, np.max(np.abs(analytic - fd)) / max(1.0, np.max(np.abs(analytic))))
    return worst, 1e-6


@register('fixed_point_roots')
def _fixed_point_roots(ctx, rng):
    target = quartic_gradient(*DOUBLE_WELL)
    roots = quartic_critical_points(*DOUBLE_WELL)
    found = np.sort([report.x_star[0] for report in find_fixed_points(target, np.linspace(-3.0, 6.0, 19)[:, None])])
    if found.size != roots.size:
        return math.inf, 1e-8
    return np.max(np.abs(found - roots)), 1e-8


# Integrator

@register('containment')
def _containment(ctx, rng):
    steps = int(round(10.0 / ctx.dt))
    cfg = IntegrationConfig(dt=ctx.dt, steps=steps, method=IntegrationMethod.EULER, record_stride=max(1, steps // 100))
    cases = [(linear_system([[-1.0]]), [1.0]), (logistic(), [0.2]), (exponential_potential_2d(), [1.0, 0.5])]
    worst = 0.0
    for target, x0 in cases:
        system = PedsSystem.build(target, uniform_mean_field(ctx.n), JACOBIAN_ALPHA)
        trajectory = integrate(system, ExtendedState.uniform(x0, ctx.n), cfg)
        reference = integrate_target(target, x0, cfg)
        worst = max(worst, np.max(np.abs(trajectory.projected - reference.states)))
    return worst, 10.0 * ctx.dt


@register('convergence_to_mean')
def _convergence_to_mean(ctx, rng):
    if ctx.alpha == 0:
        raise SkipProperty('decay disabled (alpha = 0)')
    steps = 500
    cfg = IntegrationConfig(dt=5.0 / (ctx.alpha * steps), steps=steps, method=IntegrationMethod.RK4)
    omega = uniform_mean_field(ctx.n)
    system = PedsSystem.build(zero_system(1), omega, ctx.alpha)
    trajectory = integrate(system, rng.uniform(-1.0, 1.0, (1, ctx.n)), cfg)
    rate = fit_decay_rate(trajectory.times, complement_norms(trajectory, omega)[:, 0])
    return abs(rate - ctx.alpha) / ctx.alpha, 0.05


@register('lyapunov_monotone')
def _lyapunov_monotone(ctx, rng):
    omega = uniform_mean_field(ctx.n)
    cfg = IntegrationConfig(dt=0.01, steps=500, method=IntegrationMethod.RK4)
    worst = 0.0
    for build in (DecayFunction.gen_a, DecayFunction.gen_b):
        system = PedsSystem.build(zero_system(1), omega, decays=(build(rng.uniform(0.5, 2.0, ctx.n)),))
        trajectory = integrate(system, rng.uniform(-1.0, 1.0, (1, ctx.n)), cfg)
        norms = complement_norms(trajectory, omega)[:, 0]
        worst = max(worst, float(np.max(np.diff(norms), initial=0.0)))
    return worst, 1e-12


@register('span_closure')
def _span_closure(ctx, rng):
    omega = uniform_mean_field(ctx.n)
    x = rng.uniform(-1.0, 1.0, (1, ctx.n))
    x = x - x @ omega.matrix.T
    system = PedsSystem.build(zero_system(1), omega, max(ctx.alpha, JACOBIAN_ALPHA))
    trajectory = integrate(system, x, IntegrationConfig(dt=0.01, steps=500))
    return np.max(np.abs(trajectory.states @ omega.matrix.T)), 1e-8


@register('scheme_consistency')
def _scheme_consistency(ctx, rng):
    """Halving dt halves the Euler-vs-RK4 gap within a factor 2.5."""
    system = PedsSystem.build(logistic(), uniform_mean_field(ctx.n), JACOBIAN_ALPHA)
    x0 = 0.2 + 0.05 * rng.standard_normal((1, ctx.n))
    gaps = []
    for dt in (0.02, 0.01):
        steps = int(round(2.0 / dt))
        euler, rk4 = (
            integrate(system, x0, IntegrationConfig(dt=dt, steps=steps, method=method, record_stride=steps))
            for method in (IntegrationMethod.EULER, IntegrationMethod.RK4)
        )
        gaps.append(np.max(np.abs(euler.final_projected - rk4.final_projected)))
    ratio = gaps[0] / gaps[1]
    return max(ratio / 2.0, 2.0 / ratio), 2.5


# Analysis

@register('closed_form_vs_fd')
def _closed_form_vs_fd(ctx, rng):
    worst = 0.0
    for target, roots in _equilibria():
        for x_star in roots:
            for n in (2, 5, 20):
                for system in _embeddings(target, x_star, n):
                    report = peds_jacobian_closed_form(system, x_star)
                    fd = peds_jacobian_fd(system, ExtendedState.uniform(x_star, n))
                    worst = max(worst, np.max(np.abs(report.closed_form - fd)))
            for build in (DecayFunction.gen_a, DecayFunction.gen_b):
                decays = tuple(build(rng.uniform(0.5, 2.0, 5)) for _ in range(target.m))
                for system in _embeddings(target, x_star, 5, decays):
                    report = peds_jacobian_closed_form(system, x_star)
                    fd = peds_jacobian_fd(system, ExtendedState.uniform(x_star, 5))
                    worst = max(worst, np.max(np.abs(report.closed_form - fd)))
    return worst, 1e-5


@register('ordering_invariance_jacobian')
def _ordering_invariance_jacobian(ctx, rng):
    omega = uniform_mean_field(ctx.n)
    worst = 0.0
    for target, roots in _equilibria():
        for x_star in roots:
            standard, balanced = (
                peds_jacobian_fd(PedsSystem.build(target, omega, JACOBIAN_ALPHA, ordering=o), ExtendedState.uniform(x_star, ctx.n))
                for o in ORDERINGS
            )
            worst = max(worst, np.max(np.abs(standard - balanced)))
    return worst, 1e-6


@register('spectrum_theorem')
def _spectrum_theorem(ctx, rng):
    worst = 0.0
    for target, roots in _equilibria():
        for x_star in roots:
            for n in (2, 5, 20):
                system = PedsSystem.build(target, uniform_mean_field(n), JACOBIAN_ALPHA)
                report = peds_jacobian_closed_form(system, x_star)
                expected = np.concatenate([report.target_eigenvalues, np.full(target.m * (n - 1), -JACOBIAN_ALPHA)])
                worst = max(worst, compare_spectra(report.eigenvalues, expected))
    return worst, 1e-8


@register('gram_spectrum')
def _gram_spectrum(ctx, rng):
    worst = 0.0
    for target, roots in _equilibria():
        for x_star in roots:
            omega = _random_gram(rng, 20)
            target_jacobian = target.jacobian(x_star)
            decays = tuple(DecayFunction.standard(JACOBIAN_ALPHA) for _ in range(target.m))
            eigenvalues = np.linalg.eigvals(kronecker_jacobian(target_jacobian, omega, decays))
            expected = np.concatenate([
                np.repeat(np.linalg.eigvals(target_jacobian), omega.rank),
                np.full(target.m * (omega.dim - omega.rank), -JACOBIAN_ALPHA),
            ])
            worst = max(worst, compare_spectra(eigenvalues, expected))
    return worst, 1e-8


@register('genb_commutation')
def _genb_commutation(ctx, rng):
    omega = uniform_mean_field(ctx.n)
    worst = 0.0
    for target, roots in _equilibria():
        decays = tuple(DecayFunction.gen_b(rng.uniform(0.5, 2.0, ctx.n)) for _ in range(target.m))
        for x_star in roots:
            drive = np.kron(target.jacobian(x_star), omega.matrix)
            decay = kronecker_jacobian(np.zeros((target.m, target.m)), omega, decays)
            worst = max(worst, commutator_norm(drive, decay))
    return worst, 1e-10


@register('classification_transfer')
def _classification_transfer(ctx, rng):
    mismatches = 0
    for target, roots in _equilibria():
        for x_star in roots:
            report = peds_jacobian_closed_form(PedsSystem.build(target, uniform_mean_field(ctx.n), JACOBIAN_ALPHA), x_star)
            expected = TRANSFER.get(report.target_classification)
            if expected is not None and report.classification != expected:
                logger.info('Classification %s -> %s at %s', report.target_classification, report.classification, x_star)
                mismatches += 1
            if classify_equilibrium(report.target_eigenvalues) != report.target_classification:
                mismatches += 1
    return mismatches, 0


def run_verify(alpha=0.5, n=5, dt=0.01, seed=0, samples=100):
    ctx = VerifyContext(alpha=alpha, n=n, dt=dt, seed=seed, samples=samples)
    results = []
    for index, (name, func) in enumerate(PROPERTIES):
        rng = np.random.default_rng([seed, index])
        try:
            measured, tolerance = func(ctx, rng)
        except SkipProperty as exc:
            results.append(PropertyResult.skip(name, str(exc)))
            continue
        except PedsError as exc:
            logger.info('Property %s raised %s', name, exc)
            results.append(PropertyResult(name, PropertyStatus.FAIL, reason=str(exc)))
            continue
        results.append(PropertyResult.check(name, measured, tolerance))
    failed = sum(result.failed for result in results)
    logger.info('Verified %d properties, %d failed', len(results), failed)
    return results
