"""
Fixed points, Jacobians and stability of target and embedded systems.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .choices import Classification, DecayKind, FixedPointSource
from .exceptions import DimensionMismatch, DomainError, NumericError, PreconditionError, ScopeError

logger = logging.getLogger(__name__)

FIXED_POINT_TOLERANCE = 1e-9
CLOSED_FORM_RESIDUAL = 1e-6
CLASSIFICATION_TOLERANCE = 1e-8
SPECTRUM_TOLERANCE = 1e-8
DEDUPLICATION_RADIUS = 1e-6
SYMMETRY_TOLERANCE = 1e-12
FD_STEP_MIN = 1e-8
FD_STEP_MAX = 1e-3


@dataclass(frozen=True, eq=False)
class FixedPointReport:
    x_star: np.ndarray
    residual: float
    source: str = FixedPointSource.NEWTON_ON_TARGET

    def __post_init__(self):
        if not self.residual <= FIXED_POINT_TOLERANCE:
            raise PreconditionError(f'Residual {self.residual:.3e} exceeds {FIXED_POINT_TOLERANCE:g}.')

    def __str__(self):
        coordinates = ', '.join(f'{v:.10g}' for v in self.x_star)
        return f'({coordinates}) residual={self.residual:.2e} source={self.source}'


@dataclass(frozen=True, eq=False)
class JacobianReport:
    x_star: np.ndarray
    closed_form: np.ndarray
    eigenvalues: np.ndarray
    classification: str
    target_eigenvalues: np.ndarray
    target_classification: str

    def __post_init__(self):
        if len(self.eigenvalues) != self.closed_form.shape[0]:
            raise DimensionMismatch('Eigenvalue count must equal the Jacobian dimension.')

    @property
    def spectral_abscissa(self):
        return float(np.max(self.eigenvalues.real))

    def summary(self):
        coordinates = ', '.join(f'{v:.10g}' for v in self.x_star)
        return (
            f'x*=({coordinates}) target={self.target_classification} '
            f'peds={self.classification} eigenvalues={len(self.eigenvalues)} '
            f'max_re={self.spectral_abscissa:.6g}'
        )


def _newton(target, x, tolerance, max_iterations):
    for _ in range(max_iterations):
        value = target.evaluate(x)
        if np.max(np.abs(value)) <= tolerance:
            break
        x = x - np.linalg.solve(target.jacobian(x), value)
        if not np.all(np.isfinite(x)):
            break
    return x


def _polish(target, seed, tolerance, max_iterations):
    """Newton from ``seed``; returns (x, residual) or None when the seed is dropped."""
    try:
        x = _newton(target, seed, tolerance, max_iterations)
        if not np.all(np.isfinite(x)):
            logger.info('Seed %s dropped: Newton iterate left the reals', seed)
            return None
        target.check_domain(x)
        residual = float(np.max(np.abs(target.evaluate(x))))
    except np.linalg.LinAlgError:
        logger.info('Seed %s skipped: singular Newton Jacobian', seed)
        return None
    except DomainError as exc:
        logger.info('Seed %s dropped: %s', seed, exc)
        return None
    if residual > tolerance:
        logger.info('Seed %s dropped: residual %.3e after %d iterations', seed, residual, max_iterations)
        return None
    return x, residual


def find_fixed_points(target, seeds, tolerance=FIXED_POINT_TOLERANCE, max_iterations=100):
    reports = []
    for seed in seeds:
        seed = np.array(seed, dtype=float).reshape(-1)
        if seed.shape != (target.m,):
            raise DimensionMismatch(f'Seed has length {seed.size}, target has m={target.m}.')
        if not np.all(np.isfinite(seed)):
            raise PreconditionError('Seeds must be finite.')
        polished = _polish(target, seed, tolerance, max_iterations)
        if polished is None:
            continue
        x, residual = polished
        if any(np.max(np.abs(x - report.x_star)) <= DEDUPLICATION_RADIUS for report in reports):
            continue
        reports.append(FixedPointReport(x, residual, FixedPointSource.NEWTON_ON_TARGET))
    return reports


def fixed_point_from_trajectory(target, trajectory, tolerance=FIXED_POINT_TOLERANCE, max_iterations=50):
    """Newton-polished terminal projected value of a run, or None if it is not near a root."""
    final = getattr(trajectory, 'final_projected', None)
    if final is None:
        final = trajectory.final_state
    polished = _polish(target, np.array(final, dtype=float), tolerance, max_iterations)
    if polished is None:
        return None
    x, residual = polished
    return FixedPointReport(x, residual, FixedPointSource.TRAJECTORY_LIMIT)


def classify_equilibrium(eigenvalues, tolerance=CLASSIFICATION_TOLERANCE):
    real = np.real(np.asarray(eigenvalues, dtype=complex)).ravel()
    if real.size == 0:
        raise PreconditionError('Cannot classify an empty spectrum.')
    if np.any(np.abs(real) <= tolerance):
        return Classification.MARGINAL
    if np.all(real < -tolerance):
        return Classification.STABLE
    if np.all(real > tolerance):
        return Classification.UNSTABLE
    return Classification.SADDLE


def spectrum(matrix):
    matrix = np.asarray(matrix, dtype=float)
    if np.allclose(matrix, matrix.T, rtol=0.0, atol=SYMMETRY_TOLERANCE):
        return np.linalg.eigvalsh((matrix + matrix.T) / 2).astype(complex)
    return np.linalg.eigvals(matrix).astype(complex)


def kronecker_jacobian(target_jacobian, omega, decays):
    """J_m (x) Omega plus the block-diagonal decay matrices Q_i(Omega)."""
    target_jacobian = np.atleast_2d(np.asarray(target_jacobian, dtype=float))
    m, n = target_jacobian.shape[0], omega.dim
    if len(decays) != m:
        raise DimensionMismatch(f'Expected {m} decay functions, got {len(decays)}.')
    jacobian = np.kron(target_jacobian, omega.matrix)
    for i, decay in enumerate(decays):
        jacobian[i * n:(i + 1) * n, i * n:(i + 1) * n] += decay.matrix(omega)
    return jacobian


def peds_jacobian_closed_form(system, x_star):
    x_star = np.array(x_star, dtype=float).reshape(-1)
    if x_star.shape != (system.m,):
        raise DimensionMismatch(f'x* has length {x_star.size}, system has m={system.m}.')
    if not system.omega.is_mean_field:
        raise ScopeError('The closed-form Jacobian needs the uniform mean-field projector.')
    if not system.has_unit_b:
        raise ScopeError('The closed-form Jacobian needs b_i = 1.')

    residual = float(np.max(np.abs(system.target.evaluate(x_star))))
    if residual > CLOSED_FORM_RESIDUAL:
        raise PreconditionError(f'x* is not a fixed point: residual {residual:.3e}.')

    target_jacobian = system.target.jacobian(x_star)
    closed_form = kronecker_jacobian(target_jacobian, system.omega, system.decays)
    eigenvalues = spectrum(closed_form)
    target_eigenvalues = np.linalg.eigvals(target_jacobian).astype(complex)
    return JacobianReport(
        x_star=x_star,
        closed_form=closed_form,
        eigenvalues=eigenvalues,
        classification=classify_equilibrium(eigenvalues),
        target_eigenvalues=target_eigenvalues,
        target_classification=classify_equilibrium(target_eigenvalues),
    )


def peds_jacobian_fd(system, state, h=1e-5):
    if not FD_STEP_MIN <= h <= FD_STEP_MAX:
        raise PreconditionError(f'Finite-difference step must lie in [{FD_STEP_MIN:g}, {FD_STEP_MAX:g}], got {h!r}.')
    columns = state.columns if hasattr(state, 'columns') else state
    flat = np.array(columns, dtype=float).reshape(-1)
    if flat.size != system.m * system.n:
        raise DimensionMismatch(f'State has {flat.size} entries, system has {system.m * system.n}.')

    jacobian = np.zeros((flat.size, flat.size))
    for k in range(flat.size):
        step = np.zeros_like(flat)
        step[k] = h
        jacobian[:, k] = (system.rhs_flat(flat + step) - system.rhs_flat(flat - step)) / (2.0 * h)
    return jacobian


def peds_fixed_point(system, state, tolerance=FIXED_POINT_TOLERANCE, max_iterations=50, h=1e-6):
    """
    Equilibrium of the extended system itself, by Newton on its right-hand side
    from ``state`` with finite-difference Jacobians. ``x_star`` holds the
    flattened m x N state.
    """
    columns = state.columns if hasattr(state, 'columns') else state
    flat = np.array(columns, dtype=float).reshape(-1)
    if flat.size != system.m * system.n:
        raise DimensionMismatch(f'State has {flat.size} entries, system has {system.m * system.n}.')

    value = system.rhs_flat(flat)
    for _ in range(max_iterations):
        if np.max(np.abs(value)) <= tolerance:
            break
        try:
            flat = flat - np.linalg.solve(peds_jacobian_fd(system, flat, h), value)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f'Singular Jacobian of the extended system: {exc}') from exc
        if not np.all(np.isfinite(flat)):
            raise NumericError('Newton iterate on the extended system is not finite.')
        value = system.rhs_flat(flat)

    residual = float(np.max(np.abs(value)))
    if residual > tolerance:
        raise NumericError(f'Newton on the extended system stopped at residual {residual:.3e}.')
    logger.debug('Extended fixed point of %s with residual %.3e', system, residual)
    return FixedPointReport(flat, residual, FixedPointSource.NEWTON_ON_EMBEDDING)


def gerschgorin_bounds(system, x_star):
    """Row discs of J = f'(x*) Omega_1 - D (I - Omega_1) for a scalar target under generalization A."""
    if system.m != 1:
        raise ScopeError('Gerschgorin bounds are implemented for scalar targets only.')
    if not system.omega.is_mean_field:
        raise ScopeError('Gerschgorin bounds need the uniform mean-field projector.')
    decay = system.decays[0]
    if decay.kind != DecayKind.GEN_A:
        raise ScopeError('Gerschgorin bounds need a generalization A decay.')

    n = system.n
    slope = float(system.target.jacobian(np.atleast_1d(np.asarray(x_star, dtype=float)))[0, 0])
    d = decay.diagonal
    centers = slope / n - (n - 1) * d / n
    radii = (n - 1) * np.abs(slope + d) / n
    return list(zip(centers.tolist(), radii.tolist()))


def in_gerschgorin_union(eigenvalues, discs, tolerance=1e-9):
    eigenvalues = np.asarray(eigenvalues, dtype=complex)
    return all(
        any(abs(z - center) <= radius + tolerance for center, radius in discs)
        for z in eigenvalues
    )


def compare_spectra(first, second, tolerance=SPECTRUM_TOLERANCE):
    """
    Largest pairing distance between two eigenvalue multisets.

    Both lists are sorted on (real, imag); each eigenvalue is then paired
    with the nearest unpaired one from the other list.
    """
    first = np.asarray(first, dtype=complex)
    second = np.asarray(second, dtype=complex)
    if first.size != second.size:
        return float('inf')
    first = first[np.lexsort((first.imag, first.real))]
    remaining = list(second[np.lexsort((second.imag, second.real))])
    worst = 0.0
    for z in first:
        distances = [abs(z - w) for w in remaining]
        j = int(np.argmin(distances))
        worst = max(worst, distances[j])
        remaining.pop(j)
    if worst > tolerance:
        logger.debug('Spectra differ by %.3e (tolerance %g)', worst, tolerance)
    return worst


def commutator_norm(a, b):
    return float(np.max(np.abs(a @ b - b @ a)))
