"""
Named scenarios run by ``manage.py peds run``.

A scenario takes the validated dict produced by ``config.load_section``,
integrates its runs on the thread pool and writes every artifact once all
runs have finished, so file contents never depend on thread scheduling.
"""
import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from django.conf import settings

from .analysis import (
    compare_spectra,
    find_fixed_points,
    fixed_point_from_trajectory,
    peds_fixed_point,
    peds_jacobian_closed_form,
)
from .choices import Classification, ExpGrouping, MapKind, OrderingKind, ProjectorKind
from .embedding import PedsSystem
from .exceptions import DimensionMismatch, DivergenceError, PreconditionError, SingularGram
from .formats import (
    provenance_line,
    read_projector,
    write_eigenvalues_csv,
    write_projector,
    write_table,
    write_target_csv,
    write_trajectory_csv,
)
from .integrators import IntegrationConfig, integrate_ensemble, integrate_target
from .memristors import MemristorNetwork, stationary_point
from .projectors import gram_projector, trivial_projector, uniform_mean_field
from .targets import (
    Ordering,
    dissipative_hamiltonian,
    exponential_potential_2d,
    memristor_mean_field,
    quartic_critical_points,
    quartic_gradient,
    quartic_potential,
)
from .verification import PropertyResult

logger = logging.getLogger(__name__)


@dataclass
class ScenarioResult:
    name: str
    artifacts: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return not any(check.failed for check in self.checks)

    def lines(self):
        lines = [f'artifact {path}' for path in self.artifacts]
        lines += [f'{key} = {value}' for key, value in self.summary.items()]
        lines += [check.line() for check in self.checks]
        return lines


# Helpers

def _output_dir(cfg):
    directory = Path(cfg.get('output') or settings.PEDS_OUTPUT_DIR)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def _integration(cfg):
    return IntegrationConfig(
        dt=cfg['dt'],
        steps=cfg['steps'],
        method=cfg['method'],
        record_stride=cfg['record_stride'],
    )


def _ordering(cfg):
    return Ordering(cfg.get('ordering') or OrderingKind.STANDARD)


def _coefficients(cfg):
    return cfg['a1'], cfg['a2'], cfg['a3'], cfg['a4']


def member_rng(seed, member):
    """Independent stream per (seed, member) pair."""
    return np.random.default_rng([seed, member])


def _ensemble(rng, mean, sigma, n):
    """Gaussian initial replicas around ``mean``, one row per variable."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    return mean[:, None] + sigma * rng.standard_normal((mean.size, n))


def _provenance(cfg, n=None, alpha=None, map_kind=None):
    return provenance_line(
        seed=cfg['seed'],
        n=cfg['n'] if n is None else n,
        alpha=cfg['alpha'] if alpha is None else alpha,
        dt=cfg['dt'],
        map_kind=map_kind or cfg.get('map_kind') or '-',
        ordering=cfg.get('ordering') or '-',
    )


def _minima(coefficients):
    target = quartic_gradient(*coefficients)
    minima = [r for r in quartic_critical_points(*coefficients) if target.jacobian(np.array([r]))[0, 0] < 0]
    if not minima:
        raise PreconditionError('The potential has no local minimum.')
    return np.array(minima)


def _coordinates(values):
    return ','.join(f'{v:.10g}' for v in np.atleast_1d(values))


def _distance_to_nearest(values, points):
    values = np.atleast_1d(np.asarray(values, dtype=float))
    return np.min(np.abs(values[:, None] - np.asarray(points)[None, :]), axis=1)


def _run_all(jobs, cfg, label):
    """Integrate every job; each diverged member is logged before the first divergence is raised."""
    results = integrate_ensemble(jobs, _integration(cfg), settings.PEDS_MAX_WORKERS, return_exceptions=True)
    for result in results:
        if isinstance(result, Exception) and not isinstance(result, DivergenceError):
            raise result
    diverged = [(index, result) for index, result in enumerate(results) if isinstance(result, DivergenceError)]
    for index, exc in diverged:
        logger.error('%s member %d diverged: %s', label, index, exc)
    if diverged:
        index, exc = diverged[0]
        raise DivergenceError(
            f'{label}: {len(diverged)} of {len(results)} run(s) diverged, first was member {index} ({exc})',
            step=exc.step,
        )
    return results


# Scenarios

def scenario_quartic1d(cfg):
    coefficients = _coefficients(cfg)
    target = quartic_gradient(*coefficients)
    minima = _minima(coefficients)
    global_minimum = min(minima, key=lambda r: quartic_potential(*coefficients, r))

    n = cfg['n']
    ordering = _ordering(cfg)
    peds = PedsSystem.build(target, uniform_mean_field(n), cfg['alpha'], map_kind=cfg['map_kind'], ordering=ordering)
    uncoupled = PedsSystem.build(target, trivial_projector(n), cfg['alpha'], map_kind=cfg['map_kind'], ordering=ordering)
    starts = [
        _ensemble(member_rng(cfg['seed'], member), [cfg['x0']], cfg['sigma'], n)
        for member in range(cfg['ensemble_size'])
    ]
    logger.info('quartic1d: %d PEDS member(s) of N=%d around x0=%g', len(starts), n, cfg['x0'])
    runs = _run_all([(peds, x0) for x0 in starts] + [(uncoupled, starts[0])], cfg, 'quartic1d')
    peds_runs, reference = runs[:-1], runs[-1]

    output = _output_dir(cfg)
    provenance = _provenance(cfg)
    artifacts = [
        write_trajectory_csv(output / f'quartic1d_peds_{member:02d}.csv', run, peds.omega, provenance, cfg['full_state'])
        for member, run in enumerate(peds_runs)
    ]
    artifacts.append(write_trajectory_csv(
        output / 'quartic1d_uncoupled.csv', reference, uncoupled.omega, provenance, full_state=True,
    ))

    peds_finals = np.concatenate([run.final_state.columns[0] for run in peds_runs])
    uncoupled_finals = reference.final_state.columns[0]
    peds_basins = np.argmin(np.abs(peds_finals[:, None] - minima[None, :]), axis=1)
    uncoupled_basins = np.argmin(np.abs(uncoupled_finals[:, None] - minima[None, :]), axis=1)
    table = np.column_stack([
        minima,
        quartic_potential(*coefficients, minima),
        [np.count_nonzero(peds_basins == i) for i in range(minima.size)],
        [np.count_nonzero(uncoupled_basins == i) for i in range(minima.size)],
    ])
    artifacts.append(write_table(
        output / 'quartic1d_basins.csv', table, ['minimum', 'potential', 'peds_count', 'uncoupled_count'], provenance,
    ))

    largest_share = np.max(np.bincount(uncoupled_basins, minlength=minima.size)) / uncoupled_finals.size
    return ScenarioResult(
        name='quartic1d',
        artifacts=artifacts,
        summary={
            'global_minimum': f'{global_minimum:.10g}',
            'peds_final_xtilde': ' '.join(f'{run.final_projected[0]:.10g}' for run in peds_runs),
            'uncoupled_basin_counts': ' '.join(str(int(c)) for c in table[:, 3]),
        },
        checks=[
            PropertyResult.check('peds_reach_global_minimum', np.max(np.abs(peds_finals - global_minimum)), cfg['tolerance']),
            PropertyResult.check('uncoupled_split', largest_share, (uncoupled_finals.size - 1) / uncoupled_finals.size),
        ],
    )


def scenario_map_compare(cfg):
    """
    Commutative and non-commutative maps from the same initial replicas; no quantitative target.

    The target is the quartic gradient flow unless the ``target`` key describes another system.
    """
    target = cfg.get('target') or quartic_gradient(*_coefficients(cfg))
    n = cfg['n']
    omega = uniform_mean_field(n)
    x0 = _ensemble(np.random.default_rng(cfg['seed']), [cfg['x0']] * target.m, cfg['sigma'], n)

    kinds = (MapKind.STANDARD_COMMUTATIVE, MapKind.STANDARD_NONCOMMUTATIVE)
    systems = [
        PedsSystem.build(target, omega, cfg['alpha'], map_kind=kind, ordering=_ordering(cfg))
        for kind in kinds
    ]
    runs = _run_all([(system, x0) for system in systems], cfg, 'map_compare')
    reference = integrate_target(target, x0.mean(axis=1), _integration(cfg))

    output = _output_dir(cfg)
    artifacts = [
        write_trajectory_csv(output / f'map_compare_{kind}.csv', run, omega, _provenance(cfg, map_kind=kind), cfg['full_state'])
        for kind, run in zip(kinds, runs)
    ]
    artifacts.append(write_target_csv(output / 'map_compare_target.csv', reference, _provenance(cfg, map_kind='target')))

    commutative, noncommutative = runs
    roots = [fixed_point_from_trajectory(target, run) for run in runs]
    root_gap = max(
        np.inf if root is None else float(np.max(np.abs(run.final_projected - root.x_star)))
        for run, root in zip(runs, roots)
    )
    return ScenarioResult(
        name='map_compare',
        artifacts=artifacts,
        summary={
            'target': str(target),
            'final_xtilde': ' '.join(f'{kind}={_coordinates(run.final_projected)}' for kind, run in zip(kinds, runs)),
            'target_final': _coordinates(reference.final_state),
            'max_map_gap': f'{np.max(np.abs(commutative.projected - noncommutative.projected)):.6e}',
        },
        checks=[
            PropertyResult.check(
                'noncommutative_follows_mean',
                np.max(np.abs(noncommutative.projected - reference.states)),
                1e-8,
            ),
            PropertyResult.check('terminal_roots', root_gap, cfg['tolerance']),
        ],
    )


def scenario_potential2d(cfg):
    """Joint versus split exponential blocks of V(x, y) = exp(x^2/2 - y^2/2 + y^4/4)."""
    n = cfg['n']
    omega = uniform_mean_field(n)
    ordering = _ordering(cfg)
    x0 = _ensemble(np.random.default_rng(cfg['seed']), cfg['x0'], cfg['sigma'], n)

    joint, split = (
        PedsSystem.build(exponential_potential_2d(grouping), omega, cfg['alpha'], map_kind=cfg['map_kind'], ordering=ordering)
        for grouping in (ExpGrouping.JOINT, ExpGrouping.SPLIT)
    )
    uncoupled = PedsSystem.build(
        exponential_potential_2d(), trivial_projector(n), cfg['alpha'], map_kind=cfg['map_kind'], ordering=ordering,
    )
    joint_run, split_run, uncoupled_run = _run_all([(joint, x0), (split, x0), (uncoupled, x0)], cfg, 'potential2d')

    output = _output_dir(cfg)
    provenance = _provenance(cfg)
    artifacts = [
        write_trajectory_csv(output / f'potential2d_{name}.csv', run, system.omega, provenance, cfg['full_state'])
        for name, run, system in (('joint', joint_run, joint), ('split', split_run, split))
    ]
    artifacts.append(write_trajectory_csv(
        output / 'potential2d_uncoupled.csv', uncoupled_run, uncoupled.omega, provenance, full_state=True,
    ))

    final = joint_run.final_projected
    gap = np.max(np.abs(joint_run.states - split_run.states))
    return ScenarioResult(
        name='potential2d',
        artifacts=artifacts,
        summary={
            'final_xtilde': f'({final[0]:.10g}, {final[1]:.10g})',
            'ordering_gap': f'{gap:.6e}',
        },
        checks=[
            PropertyResult.check('ordering_gap', gap, cfg['gap_tolerance']),
            PropertyResult.check('terminal_x', abs(final[0]), cfg['tolerance']),
            PropertyResult.check('terminal_y', abs(abs(final[1]) - 1.0), cfg['tolerance']),
        ],
    )


def scenario_hamiltonian(cfg):
    coefficients = _coefficients(cfg)
    target = dissipative_hamiltonian(cfg['mass'], cfg['chi'], *coefficients)
    n = cfg['n']
    omega = uniform_mean_field(n)
    alphas = (cfg['alpha_x'], cfg['alpha_p'])
    system = PedsSystem.build(target, omega, alphas, map_kind=cfg['map_kind'], ordering=_ordering(cfg))
    x0 = _ensemble(np.random.default_rng(cfg['seed']), cfg['x0'], cfg['sigma'], n)

    (run,) = _run_all([(system, x0)], cfg, 'hamiltonian')
    reference = integrate_target(target, x0.mean(axis=1), _integration(cfg))

    output = _output_dir(cfg)
    provenance = _provenance(cfg, alpha='/'.join(f'{a:g}' for a in alphas))
    artifacts = [
        write_trajectory_csv(output / 'hamiltonian_peds.csv', run, omega, provenance, cfg['full_state']),
        write_target_csv(output / 'hamiltonian_target.csv', reference, provenance),
    ]

    position, momentum = run.final_projected
    roots = quartic_critical_points(*coefficients)
    return ScenarioResult(
        name='hamiltonian',
        artifacts=artifacts,
        summary={
            'final_xtilde': f'({position:.10g}, {momentum:.10g})',
            'target_final': f'({reference.final_state[0]:.10g}, {reference.final_state[1]:.10g})',
        },
        checks=[
            PropertyResult.check('terminal_momentum', abs(momentum), cfg['tolerance']),
            PropertyResult.check('terminal_position', _distance_to_nearest(position, roots)[0], cfg['tolerance']),
        ],
    )


def _gram_with_retries(cfg):
    """Gram projector of a seeded uniform K x N matrix; a singular draw retries with a fresh seed."""
    for attempt in range(cfg['max_retries']):
        rng = np.random.default_rng(cfg['seed'] if attempt == 0 else [cfg['seed'], attempt])
        try:
            return gram_projector(rng.uniform(0.0, 1.0, (cfg['k'], cfg['n']))), rng
        except SingularGram as exc:
            logger.info('Singular Gram matrix on attempt %d of %d: %s', attempt + 1, cfg['max_retries'], exc)
    raise SingularGram(f'No well-conditioned B after {cfg["max_retries"]} attempts.')


def scenario_random_projector(cfg):
    coefficients = _coefficients(cfg)
    target = quartic_gradient(*coefficients)
    minima = _minima(coefficients)

    if cfg['projector_file']:
        omega = read_projector(cfg['projector_file'])
        rng = np.random.default_rng(cfg['seed'])
        logger.info('random_projector: read %s from %s', omega, cfg['projector_file'])
    else:
        omega, rng = _gram_with_retries(cfg)
    n = omega.dim
    ordering = _ordering(cfg)

    system = PedsSystem.build(
        target, omega, cfg['alpha'], map_kind=cfg['map_kind'], ordering=ordering, b_vectors=omega.apply(np.ones(n)),
    )
    uncoupled = PedsSystem.build(target, trivial_projector(n), cfg['alpha'], map_kind=cfg['map_kind'], ordering=ordering)
    x0 = _ensemble(rng, [cfg['x0']], cfg['sigma'], n)
    run, reference = _run_all([(system, x0), (uncoupled, x0)], cfg, 'random_projector')

    output = _output_dir(cfg)
    provenance = _provenance(cfg, n=n)
    artifacts = [
        write_trajectory_csv(output / 'random_projector_peds.csv', run, omega, provenance, cfg['full_state']),
        write_trajectory_csv(output / 'random_projector_uncoupled.csv', reference, uncoupled.omega, provenance, full_state=True),
        write_projector(output / 'random_projector_omega.txt', omega),
    ]

    final = run.final_projected[0]
    x_star = minima[np.argmin(np.abs(minima - final))]
    leakage = float(np.sum(omega.complement(np.ones(n)) ** 2) / n)
    # x~ converges to the equilibrium of the extended system, which leaves x* unless Omega is the mean field
    equilibrium = peds_fixed_point(system, run.final_state)
    equilibrium_xtilde = float(omega.observable(equilibrium.x_star.reshape(1, n))[0])
    logger.info('random_projector: x~ settles %.3e from x* = %.10g', abs(equilibrium_xtilde - x_star), x_star)
    return ScenarioResult(
        name='random_projector',
        artifacts=artifacts,
        summary={
            'rank': omega.rank,
            'leakage': f'{leakage:.6e}',
            'minimum': f'{x_star:.10g}',
            'final_xtilde': f'{final:.10g}',
            'equilibrium_xtilde': f'{equilibrium_xtilde:.10g}',
            'minimum_gap': f'{abs(final - x_star):.6e}',
        },
        checks=[
            PropertyResult.check('projected_converges', abs(final - equilibrium_xtilde), cfg['tolerance']),
        ],
    )


def _memristor_projector(cfg, rng):
    if cfg['projector_file']:
        return read_projector(cfg['projector_file'])
    if cfg['projector'] == ProjectorKind.GRAM:
        return gram_projector(rng.uniform(0.0, 1.0, (cfg['k'], cfg['n'])))
    if cfg['projector'] == ProjectorKind.TRIVIAL:
        return trivial_projector(cfg['n'])
    return uniform_mean_field(cfg['n'])


def scenario_memristor(cfg):
    rng = np.random.default_rng(cfg['seed'])
    omega = _memristor_projector(cfg, rng)
    network = MemristorNetwork(omega, cfg['chi'], cfg['s'], alpha=cfg['alpha'], beta=cfg['beta'])
    x0 = np.clip(_ensemble(rng, [cfg['x0']], cfg['sigma'], omega.dim), 0.0, np.nextafter(1.0, 0.0))

    (run,) = _run_all([(network, x0)], cfg, 'memristor')
    reference = integrate_target(network.target, x0.mean(axis=1), _integration(cfg))

    output = _output_dir(cfg)
    provenance = _provenance(cfg, n=omega.dim, map_kind='memristor')
    artifacts = [
        write_trajectory_csv(output / 'memristor.csv', run, omega, provenance, cfg['full_state']),
        write_target_csv(output / 'memristor_target.csv', reference, provenance),
    ]

    x_star = stationary_point(cfg['chi'], cfg['s'], cfg['alpha'], cfg['beta'])
    roots = find_fixed_points(network.target, np.linspace(0.0, 0.95, 20)[:, None])
    final_mean = float(np.mean(run.final_state.columns[0]))
    checks = [
        PropertyResult.check(
            'stationary_point_newton',
            min((abs(report.x_star[0] - x_star) for report in roots), default=np.inf),
            1e-8,
        ),
    ]
    if omega.is_mean_field:
        checks.append(PropertyResult.check('terminal_mean', abs(final_mean - x_star), cfg['tolerance']))
    return ScenarioResult(
        name='memristor',
        artifacts=artifacts,
        summary={
            'projector': str(omega),
            'stationary_point': f'{x_star:.10g}',
            'final_mean': f'{final_mean:.10g}',
        },
        checks=checks,
    )


SCENARIOS = {
    'quartic1d': scenario_quartic1d,
    'map_compare': scenario_map_compare,
    'potential2d': scenario_potential2d,
    'hamiltonian': scenario_hamiltonian,
    'random_projector': scenario_random_projector,
    'memristor': scenario_memristor,
}


# Jacobian reports

def _jacobian_setup(name, cfg):
    """Target, decay rates and Newton seeds for the scenario's fixed points."""
    if cfg.get('target') is not None:
        target = cfg['target']
        grid = itertools.product(np.linspace(-3.0, 3.0, 7), repeat=target.m)
        return target, cfg['alpha'], [np.array(seed) for seed in grid]
    if name == 'potential2d':
        grid = np.linspace(-1.5, 1.5, 7)
        seeds = np.array(np.meshgrid(grid, grid)).reshape(2, -1).T
        return exponential_potential_2d(), cfg['alpha'], seeds
    if name == 'hamiltonian':
        coefficients = _coefficients(cfg)
        seeds = [(r, 0.0) for r in quartic_critical_points(*coefficients)]
        return dissipative_hamiltonian(cfg['mass'], cfg['chi'], *coefficients), (cfg['alpha_x'], cfg['alpha_p']), seeds
    if name == 'memristor':
        target = memristor_mean_field(cfg['chi'], cfg['s'], cfg['alpha'], cfg['beta'])
        return target, cfg['alpha'], np.linspace(0.0, 0.95, 20)[:, None]
    coefficients = _coefficients(cfg)
    return quartic_gradient(*coefficients), cfg['alpha'], quartic_critical_points(*coefficients)[:, None]


def scenario_jacobians(name, cfg, at=None):
    """Closed-form PEDS Jacobian at each fixed point of the scenario's target under the mean-field projector."""
    target, alpha, seeds = _jacobian_setup(name, cfg)
    n = cfg['n']
    system = PedsSystem.build(
        target, uniform_mean_field(n), alpha,
        map_kind=cfg.get('map_kind') or MapKind.STANDARD_NONCOMMUTATIVE,
        ordering=_ordering(cfg),
    )
    if at is not None:
        point = np.asarray(at, dtype=float)
        if point.shape != (target.m,):
            raise DimensionMismatch(f'--at needs {target.m} value(s), got {point.size}.')
        points = [point]
    else:
        points = [report.x_star for report in find_fixed_points(target, seeds)]
    if not points:
        raise PreconditionError(f'No fixed points found for {name}.')

    output = _output_dir(cfg)
    rates = np.broadcast_to(np.asarray(alpha, dtype=float), (target.m,))
    provenance = _provenance(cfg, alpha='/'.join(f'{a:g}' for a in rates))
    result = ScenarioResult(name=f'{name} jacobian')
    for index, x_star in enumerate(points):
        report = peds_jacobian_closed_form(system, x_star)
        result.artifacts.append(write_eigenvalues_csv(output / f'{name}_jacobian_{index}.csv', report, provenance))
        result.summary[f'point_{index}'] = report.summary()
        expected = np.concatenate([report.target_eigenvalues, np.repeat(-rates, n - 1)])
        result.checks.append(PropertyResult.check(f'spectrum_theorem_{index}', compare_spectra(report.eigenvalues, expected), 1e-8))
        if report.target_classification == Classification.UNSTABLE and report.classification != Classification.SADDLE:
            logger.warning('Unstable point %s did not become a saddle', x_star)
    return result
