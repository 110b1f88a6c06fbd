import tempfile
from io import StringIO
from pathlib import Path
from unittest.mock import MagicMock, patch

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings
from numpy.testing import assert_allclose
from rest_framework import serializers
from scipy import linalg

from .analysis import (
    classify_equilibrium,
    compare_spectra,
    find_fixed_points,
    fixed_point_from_trajectory,
    gerschgorin_bounds,
    in_gerschgorin_union,
    peds_fixed_point,
    peds_jacobian_closed_form,
    peds_jacobian_fd,
)
from .choices import Classification, DecayKind, ExpGrouping, FixedPointSource, IntegrationMethod, MapKind, PropertyStatus
from .config import dump_config, load_section, parse_overrides
from .embedding import (
    DecayFunction,
    ExtendedState,
    PedsSystem,
    apply_decay,
    matrix_function_eval,
    noncommutative_monomial,
)
from .exceptions import (
    DimensionMismatch,
    DivergenceError,
    DomainError,
    IdempotenceError,
    InvalidDimension,
    NormalizationError,
    NumericError,
    PreconditionError,
    ScopeError,
    SingularGram,
    SizeLimitExceeded,
)
from .formats import read_projector, write_projector, write_trajectory_csv
from .integrators import (
    IntegrationConfig,
    complement_norms,
    fit_decay_rate,
    integrate,
    integrate_ensemble,
    integrate_target,
)
from .memristors import MemristorNetwork, stationary_point
from .projectors import (
    Projector,
    complement_project,
    gram_projector,
    projector_exponential,
    trivial_projector,
    uniform_mean_field,
)
from .scenarios import (
    member_rng,
    scenario_hamiltonian,
    scenario_map_compare,
    scenario_memristor,
    scenario_potential2d,
    scenario_quartic1d,
    scenario_random_projector,
)
from .serializers import SECTION_SERIALIZERS, parse_target
from .targets import (
    DOUBLE_WELL,
    ExpPoly,
    LogAffine,
    MonomialTerm,
    Ordering,
    TargetSystem,
    exponential_potential_2d,
    linear_system,
    logistic,
    memristor_mean_field,
    ordering_coefficients,
    quartic_critical_points,
    quartic_gradient,
    zero_system,
)
from .verification import PROPERTIES, PropertyResult, VerifyContext, run_verify


def _blow_up():
    """dx/dt = x^2, which leaves every bounded set in finite time from x > 0."""
    return TargetSystem(1, ((MonomialTerm(1.0, (2,)),),), name='blow-up')


def _read_csv(path):
    return np.loadtxt(path, delimiter=',', skiprows=2, ndmin=2)


LOGISTIC_JSON = '[[{"coefficient": 1, "exponents": [1]}, {"coefficient": -1, "exponents": [2]}]]'


def _commutative_drive(system, columns):
    return system.target.evaluate(columns) * system.b_vectors


class OutputDirMixin:
    """Gives each test a throwaway output directory."""

    def setUp(self):
        super().setUp()
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.output = Path(tmp.name)


# 1. Projector Tests
class ProjectorTest(SimpleTestCase):
    """Tests for projector construction and validation"""

    def test_uniform_mean_field(self):
        """Test the mean-field projector averages a vector"""
        omega = uniform_mean_field(4)
        self.assertEqual(omega.rank, 1)
        self.assertTrue(omega.is_mean_field)
        self.assertTrue(omega.is_symmetric)
        assert_allclose(omega.apply([1.0, 2.0, 3.0, 6.0]), np.full(4, 3.0))
        assert_allclose(omega.observable(np.array([[1.0, 2.0, 3.0, 6.0]])), [3.0])

    def test_trivial_projector(self):
        """Test the identity projector has full rank and no complement"""
        omega = trivial_projector(3)
        self.assertEqual(omega.rank, 3)
        self.assertFalse(omega.is_mean_field)
        assert_allclose(omega.complement([1.0, -2.0, 5.0]), np.zeros(3))

    def test_invalid_dimension(self):
        """Test N must be a positive integer"""
        with self.assertRaises(InvalidDimension):
            uniform_mean_field(0)
        with self.assertRaises(InvalidDimension):
            Projector(np.ones((2, 3)))

    def test_non_idempotent_matrix_rejected(self):
        """Test a matrix with Omega^2 != Omega is refused"""
        with self.assertRaises(IdempotenceError):
            Projector(np.array([[1.0, 1.0], [0.0, 1.0]]))

    def test_gram_projector(self):
        """Test the Gram projector has rank K and is symmetric and idempotent"""
        rng = np.random.default_rng(0)
        omega = gram_projector(rng.standard_normal((3, 8)))
        self.assertEqual(omega.rank, 3)
        self.assertTrue(omega.is_symmetric)
        assert_allclose(omega.matrix @ omega.matrix, omega.matrix, atol=1e-12)

    def test_gram_projector_rank_deficient(self):
        """Test too many rows or repeated rows raise SingularGram"""
        with self.assertRaises(SingularGram):
            gram_projector(np.ones((4, 3)))
        with self.assertRaises(SingularGram):
            gram_projector(np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]]))

    def test_gram_projector_special_cases(self):
        """Test B = 1^T gives the mean field and B = I gives the identity"""
        assert_allclose(gram_projector(np.ones((1, 4))).matrix, uniform_mean_field(4).matrix, atol=1e-12)
        assert_allclose(gram_projector(np.eye(3)).matrix, np.eye(3), atol=1e-12)

    def test_complement_project(self):
        """Test (I - Omega) v lies in the kernel of Omega"""
        omega = uniform_mean_field(2)
        assert_allclose(complement_project(omega, [3.0, 1.0]), [1.0, -1.0])
        assert_allclose(complement_project(uniform_mean_field(3), [2.0, 2.0, 2.0]), np.zeros(3), atol=1e-12)
        assert_allclose(complement_project(trivial_projector(3), [1.0, -4.0, 2.0]), np.zeros(3))
        gram = gram_projector(np.random.default_rng(2).standard_normal((2, 6)))
        residual = gram.apply(complement_project(gram, np.arange(6.0)))
        self.assertLessEqual(np.max(np.abs(residual)), 1e-10)

    def test_projector_exponential(self):
        """Test exp(a Omega) = I + (e^a - 1) Omega"""
        omega = uniform_mean_field(3)
        assert_allclose(projector_exponential(omega, 0.7), linalg.expm(0.7 * omega.matrix), atol=1e-12)

    def test_vector_length_checked(self):
        """Test applying a projector to a vector of the wrong length"""
        with self.assertRaises(DimensionMismatch):
            uniform_mean_field(3).apply([1.0, 2.0])


# 2. Target System Tests
class TargetSystemTest(SimpleTestCase):
    """Tests for target systems and orderings"""

    def test_double_well_critical_points(self):
        """Test the default quartic has critical points -1, -0.51 and 4"""
        assert_allclose(quartic_critical_points(*DOUBLE_WELL), [-1.0, -0.51, 4.0], atol=1e-9)

    def test_quartic_gradient_value(self):
        """Test f(x) = -V'(x)"""
        target = quartic_gradient(*DOUBLE_WELL)
        assert_allclose(target.evaluate(np.array([0.0])), [2.04])
        assert_allclose(target.evaluate(np.array([4.0])), [0.0], atol=1e-12)

    def test_linear_jacobian(self):
        """Test the analytic Jacobian of the linear system"""
        a = np.array([[-1.0, 0.5], [0.2, -2.0]])
        target = linear_system(a)
        assert_allclose(target.jacobian(np.array([0.3, -0.7])), a)

    def test_logistic(self):
        """Test f(x) = x - x^2"""
        target = logistic()
        assert_allclose(target.evaluate(np.array([0.3])), [0.21])
        assert_allclose(target.jacobian(np.array([1.0])), [[-1.0]])

    def test_domain_hint(self):
        """Test the memristor target refuses x outside [0, 1)"""
        target = memristor_mean_field(0.5, 0.2)
        target.check_domain(np.array([0.5]))
        with self.assertRaises(DomainError):
            target.check_domain(np.array([1.0]))
        clipped, changed = target.clip_to_domain(np.array([[1.2, 0.3]]))
        self.assertTrue(changed)
        self.assertLess(clipped[0, 0], 1.0)

    def test_balanced_ordering(self):
        """Test the balanced ordering weighs all permutations equally"""
        coefficients = ordering_coefficients(Ordering.balanced(), 3)
        self.assertEqual(len(coefficients), 6)
        self.assertAlmostEqual(sum(w for _, w in coefficients), 1.0)

    def test_ordering_size_limit(self):
        """Test more than 8 factors are refused"""
        with self.assertRaises(SizeLimitExceeded):
            ordering_coefficients(Ordering.balanced(), 9)

    def test_weighted_ordering_must_be_normalized(self):
        """Test weights that do not sum to 1 are refused"""
        with self.assertRaises(NormalizationError):
            Ordering.weighted({(0, 1): 0.5, (1, 0): 0.4})

    def test_log_affine(self):
        """Test log(1 + x/2) and its derivative, series and matrix function"""
        log = LogAffine(1.0, 0.5)
        self.assertAlmostEqual(float(log.value(2.0)), np.log(2.0))
        self.assertAlmostEqual(float(log.derivative(2.0)), 0.25)
        assert_allclose(log.taylor(3), [0.0, 0.5, -0.125, 0.125 / 3])
        assert_allclose(log.matrix(np.diag([0.5, 1.0])), np.diag(np.log([1.25, 1.5])), atol=1e-12)
        with self.assertRaises(DomainError):
            log.value(-2.0)

    def test_parse_target_monomials(self):
        """Test a JSON term list describes the logistic equation"""
        target = parse_target(LOGISTIC_JSON)
        self.assertEqual(target.m, 1)
        assert_allclose(target.evaluate(np.array([0.3])), [0.21])
        assert_allclose(target.jacobian(np.array([1.0])), [[-1.0]])

    def test_parse_target_factors(self):
        """Test tagged factors rebuild the two-dimensional exponential potential"""
        exp_x = '{"variable": 0, "tag": "exp_poly", "args": [0, 0, 0.5]}'
        exp_y = '{"variable": 1, "tag": "exp_poly", "args": [0, 0, -0.5, 0, 0.25]}'
        text = (
            '{"name": "potential", "equations": ['
            '[{"coefficient": -1, "grouping": "joint", "factors": ['
            f'{{"variable": 0, "tag": "power", "args": [1]}}, {exp_x}, {exp_y}]}}],'
            '[{"coefficient": 1, "grouping": "joint", "factors": ['
            f'{{"variable": 1, "tag": "custom_series", "args": [0, 1, 0, -1]}}, {exp_x}, {exp_y}]}}]'
            ']}'
        )
        target = parse_target(text)
        reference = exponential_potential_2d(ExpGrouping.JOINT)
        self.assertEqual(str(target), 'potential')
        self.assertEqual(target.equations[0][0].exp_grouping, ExpGrouping.JOINT)

        x = np.array([0.3, 0.7])
        assert_allclose(target.evaluate(x), reference.evaluate(x))
        assert_allclose(target.jacobian(x), reference.jacobian(x))
        omega = uniform_mean_field(3)
        columns = np.random.default_rng(5).uniform(0.2, 1.2, (2, 3))
        assert_allclose(
            PedsSystem.build(target, omega, 0.5).rhs_array(columns),
            PedsSystem.build(reference, omega, 0.5).rhs_array(columns),
            atol=1e-12,
        )

    def test_parse_target_domain(self):
        """Test a logarithmic factor with a domain hint"""
        target = parse_target(
            '{"equations": [[{"coefficient": 2, "factors": [{"variable": 0, "tag": "log_affine", "args": [1, 0.5]}]}]],'
            ' "domain": [[-1.5, 10]]}'
        )
        assert_allclose(target.evaluate(np.array([2.0])), [2.0 * np.log(2.0)])
        with self.assertRaises(DomainError):
            target.check_domain(np.array([-1.9]))

    def test_parse_target_rejects_bad_input(self):
        """Test malformed descriptions raise ValidationError"""
        bad = [
            'not json',
            '[]',
            '[[{"coefficient": 1, "factors": [{"variable": 0, "tag": "sinh", "args": [1]}]}]]',
            '[[{"coefficient": 1, "exponents": [1, 2]}]]',
            '[[{"coefficient": 1, "factors": [{"variable": 0, "tag": "reciprocal_affine", "args": [1, 2, 3]}]}]]',
            '[[{"coefficient": 1, "factors": [{"variable": 1, "tag": "power", "args": [2]}]}]]',
            '[[{"coefficient": 1, "factors": [{"variable": 0, "tag": "power", "args": [1.5]}]}]]',
            '[[{"coefficient": 1, "exponents": [1], "factors": []}]]',
            '[[{"coefficient": 1}]]',
        ]
        for text in bad:
            with self.subTest(text=text), self.assertRaises(serializers.ValidationError):
                parse_target(text)

    def test_equation_count_checked(self):
        """Test the number of equations must equal m"""
        with self.assertRaises(DimensionMismatch):
            TargetSystem(2, ((MonomialTerm(1.0, (1, 0)),),))


# 3. Embedding Tests
class EmbeddingTest(SimpleTestCase):
    """Tests for decay functions, matrix maps and the extended right-hand side"""

    def test_standard_decay(self):
        """Test the standard decay pulls replicas toward their mean"""
        decay = DecayFunction.standard(0.1)
        assert_allclose(apply_decay(decay, uniform_mean_field(2), [3.0, 1.0]), [-0.1, 0.1])

    def test_gen_b_reduces_to_standard(self):
        """Test generalization B with D = alpha I equals the standard decay"""
        omega = uniform_mean_field(4)
        x = np.array([0.3, -1.2, 2.0, 0.5])
        assert_allclose(
            apply_decay(DecayFunction.gen_b(np.full(4, 0.7)), omega, x),
            apply_decay(DecayFunction.standard(0.7), omega, x),
            atol=1e-12,
        )

    def test_decay_requires_positive_rate(self):
        """Test alpha <= 0 is refused"""
        with self.assertRaises(PreconditionError):
            DecayFunction.standard(0.0)
        with self.assertRaises(PreconditionError):
            DecayFunction.gen_a([1.0, -1.0])

    def test_decay_matrix(self):
        """Test the decay matrix reproduces apply_decay"""
        omega = uniform_mean_field(3)
        x = np.array([1.0, 4.0, -2.0])
        for decay in (DecayFunction.standard(0.5), DecayFunction.gen_a([0.5, 1.0, 2.0]), DecayFunction.gen_b([0.5, 1.0, 2.0])):
            assert_allclose(decay.matrix(omega) @ x, apply_decay(decay, omega, x), atol=1e-12)

    def test_maps_agree_on_uniform_states(self):
        """Test every matrix map gives f(x) on replicas that all equal x"""
        omega = uniform_mean_field(3)
        state = ExtendedState.uniform([0.3], 3)
        for map_kind in MapKind.values:
            system = PedsSystem.build(logistic(), omega, 1.0, map_kind=map_kind)
            assert_allclose(system.rhs(state).columns, np.full((1, 3), 0.21), atol=1e-12)

    def test_noncommutative_mean_field_drive(self):
        """Test the non-commutative drive under Omega_1 is f evaluated at the mean"""
        omega = uniform_mean_field(4)
        system = PedsSystem.build(logistic(), omega, 1.0)
        columns = np.array([[0.1, 0.2, 0.4, 0.5]])
        mean = 0.3
        assert_allclose(omega.apply(system.rhs_array(columns)[0]), np.full(4, mean - mean ** 2), atol=1e-12)

    def test_matrix_function_eval_matches_expm(self):
        """Test the similarity transform against a dense exponential"""
        omega = uniform_mean_field(3)
        x = np.array([0.5, 1.0, 2.0])
        assert_allclose(
            matrix_function_eval(omega, x, ExpPoly((0.0, 1.0))),
            linalg.expm(omega.matrix * x[None, :]),
            atol=1e-10,
        )

    def test_matrix_function_eval_needs_symmetric_projector(self):
        """Test an oblique projector is out of scope for the similarity transform"""
        omega = Projector(np.array([[1.0, 1.0], [0.0, 0.0]]))
        with self.assertRaises(ScopeError):
            matrix_function_eval(omega, np.array([1.0, 2.0]), ExpPoly((0.0, 1.0)))

    def test_noncommutative_monomial_commuting_case(self):
        """Test a single factor gives (Omega X)^e"""
        omega = uniform_mean_field(3)
        x = np.array([1.0, 2.0, 3.0])
        expected = np.linalg.matrix_power(omega.matrix * x[None, :], 2)
        assert_allclose(noncommutative_monomial(omega, [(x, 2)], Ordering.standard()), expected)

    def test_noncommutative_monomial_two_variables(self):
        """Test (Omega_1 X)(Omega_1 Y)^2 = <X><Y> Omega_1 Y"""
        omega = uniform_mean_field(4)
        x = np.array([0.5, 1.0, 1.5, 3.0])
        y = np.array([2.0, -1.0, 0.5, 0.5])
        expected = x.mean() * y.mean() * (omega.matrix * y[None, :])
        assert_allclose(noncommutative_monomial(omega, [(x, 1), (y, 2)], Ordering.standard()), expected, atol=1e-12)

    def test_noncommutative_monomial_zero_exponents(self):
        """Test exponent 0 factors contribute the identity"""
        omega = uniform_mean_field(3)
        states = [(np.array([1.0, 2.0, 3.0]), 0), (np.array([4.0, 5.0, 6.0]), 0)]
        assert_allclose(noncommutative_monomial(omega, states, Ordering.balanced()), np.eye(3))

    def test_weighted_ordering_in_rhs(self):
        """Test permutation weights reach the extended right-hand side"""
        rng = np.random.default_rng(4)
        omega = gram_projector(rng.standard_normal((2, 4)))
        target = TargetSystem(2, ((MonomialTerm(1.0, (1, 1)),), ()))
        ordering = Ordering.weighted({(0, 1): 0.25, (1, 0): 0.75})
        columns = rng.uniform(0.5, 1.5, (2, 4))

        weighted = PedsSystem.build(target, omega, 1.0, ordering=ordering).rhs_array(columns)
        monomial = noncommutative_monomial(omega, [(columns[0], 1), (columns[1], 1)], ordering)
        expected = omega.matrix @ monomial @ np.ones(4) + apply_decay(DecayFunction.standard(1.0), omega, columns[0])
        assert_allclose(weighted[0], expected, atol=1e-12)

        standard = PedsSystem.build(target, omega, 1.0).rhs_array(columns)
        self.assertGreater(np.max(np.abs(standard[0] - weighted[0])), 1e-6)

    def test_matrix_function_eval_zero_shift(self):
        """Test zero diagonal entries are shifted with a warning"""
        omega = uniform_mean_field(3)
        x = np.array([0.0, 1.0, 2.0])
        with self.assertLogs('peds_app.embedding', 'WARNING'):
            result = matrix_function_eval(omega, x, ExpPoly((0.0, 1.0)))
        assert_allclose(result, linalg.expm(omega.matrix * x[None, :]), atol=1e-6)

    def test_matrix_function_eval_negative_entry(self):
        """Test a negative diagonal entry raises DomainError"""
        with self.assertRaises(DomainError):
            matrix_function_eval(uniform_mean_field(3), np.array([1.0, -0.5, 2.0]), ExpPoly((0.0, 1.0)))

    def test_b_vector_in_kernel_rejected(self):
        """Test Omega b = 0 is refused"""
        with self.assertRaises(PreconditionError):
            PedsSystem.build(logistic(), uniform_mean_field(2), 1.0, b_vectors=[1.0, -1.0])

    def test_state_shape_checked(self):
        """Test the right-hand side entry points agree and refuse a wrong shape"""
        system = PedsSystem.build(logistic(), uniform_mean_field(3), 1.0)
        with self.assertRaises(DimensionMismatch):
            system.rhs_array(np.zeros((1, 4)))
        with self.assertRaises(DimensionMismatch):
            system.rhs(ExtendedState(np.zeros((1, 4))))
        state = ExtendedState(np.array([[0.2, 0.4, 0.9]]))
        assert_allclose(system.rhs(state).columns, system.rhs_array(state.columns))
        assert_allclose(system.rhs_flat(state.columns.ravel()), system.rhs_array(state.columns).ravel())


# 4. Integrator Tests
class IntegratorTest(SimpleTestCase):
    """Tests for time integration"""

    def test_logistic_follows_target(self):
        """Test the projected logistic run tracks the target and reaches 1"""
        system = PedsSystem.build(logistic(), uniform_mean_field(2), 1.0)
        cfg = IntegrationConfig(dt=0.01, steps=1500, method=IntegrationMethod.RK4, record_stride=100)
        trajectory = integrate(system, np.array([[0.3, 0.1]]), cfg)
        reference = integrate_target(logistic(), [0.2], cfg)

        at_ten = int(np.argmin(np.abs(trajectory.times - 10.0)))
        self.assertAlmostEqual(trajectory.times[at_ten], 10.0)
        self.assertAlmostEqual(trajectory.projected[at_ten, 0], reference.states[at_ten, 0], delta=1e-8)
        self.assertAlmostEqual(trajectory.final_projected[0], 1.0, delta=1e-5)

    def test_complement_decays_at_alpha(self):
        """Test the spread around the mean shrinks as exp(-alpha t)"""
        omega = uniform_mean_field(4)
        system = PedsSystem.build(zero_system(1), omega, 0.8)
        cfg = IntegrationConfig(dt=0.01, steps=500, method=IntegrationMethod.RK4, record_stride=10)
        trajectory = integrate(system, np.array([[0.1, -0.4, 0.9, 0.2]]), cfg)
        rate = fit_decay_rate(trajectory.times, complement_norms(trajectory, omega)[:, 0])
        self.assertAlmostEqual(rate, 0.8, delta=1e-3)

    def test_divergence(self):
        """Test a blow-up raises DivergenceError with the failing step"""
        cfg = IntegrationConfig(dt=0.01, steps=1000, method=IntegrationMethod.EULER)
        with self.assertRaises(DivergenceError) as ctx:
            integrate_target(_blow_up(), [2.0], cfg)
        self.assertIsNotNone(ctx.exception.step)
        with self.assertRaises(DivergenceError):
            integrate(PedsSystem.build(_blow_up(), uniform_mean_field(2), 1.0), np.full((1, 2), 2.0), cfg)

    def test_euler_first_order(self):
        """Test halving dt roughly halves the Euler error"""
        target = linear_system([[-1.0]])
        errors = []
        for dt in (0.1, 0.05):
            cfg = IntegrationConfig(dt=dt, steps=int(round(1.0 / dt)), method=IntegrationMethod.EULER)
            errors.append(abs(integrate_target(target, [1.0], cfg).final_state[0] - np.exp(-1.0)))
        self.assertGreater(errors[0] / errors[1], 1.8)
        self.assertLess(errors[0] / errors[1], 2.2)

    def test_invalid_config(self):
        """Test dt and steps are validated"""
        with self.assertRaises(PreconditionError):
            IntegrationConfig(dt=0.0)
        with self.assertRaises(PreconditionError):
            IntegrationConfig(steps=0)

    def test_ensemble_keeps_order(self):
        """Test ensemble results come back in submission order"""
        cfg = IntegrationConfig(dt=0.01, steps=100)
        system = PedsSystem.build(linear_system([[-1.0]]), uniform_mean_field(2), 1.0)
        starts = [np.full((1, 2), float(k)) for k in range(4)]
        results = integrate_ensemble([(system, x0) for x0 in starts], cfg, max_workers=2)
        for k, trajectory in enumerate(results):
            self.assertAlmostEqual(trajectory.projected[0, 0], float(k))

    def test_ensemble_returns_exceptions(self):
        """Test a diverged member is returned in place when asked"""
        cfg = IntegrationConfig(dt=0.01, steps=1000, method=IntegrationMethod.EULER)
        stable = PedsSystem.build(linear_system([[-1.0]]), uniform_mean_field(2), 1.0)
        unstable = PedsSystem.build(_blow_up(), uniform_mean_field(2), 1.0)
        results = integrate_ensemble(
            [(stable, np.ones((1, 2))), (unstable, np.full((1, 2), 2.0))], cfg, return_exceptions=True,
        )
        self.assertNotIsInstance(results[0], Exception)
        self.assertIsInstance(results[1], DivergenceError)

    def test_memristor_network_mean(self):
        """Test the mean-field network relaxes to the single-device stationary point"""
        network = MemristorNetwork(uniform_mean_field(4), 0.5, 0.2)
        cfg = IntegrationConfig(dt=0.01, steps=2000, record_stride=100)
        trajectory = integrate(network, np.array([[0.1, 0.3, 0.5, 0.7]]), cfg)
        self.assertAlmostEqual(np.mean(trajectory.final_state.columns), stationary_point(0.5, 0.2), delta=1e-6)


# 5. Analysis Tests
class AnalysisTest(SimpleTestCase):
    """Tests for fixed points and Jacobians"""

    def test_logistic_fixed_points(self):
        """Test Newton finds 0 and 1, deduplicated"""
        reports = find_fixed_points(logistic(), [[-0.5], [0.5], [2.0]])
        roots = sorted(float(report.x_star[0]) for report in reports)
        assert_allclose(roots, [0.0, 1.0], atol=1e-9)

    def test_fixed_point_from_trajectory(self):
        """Test the terminal projected value is polished into a root"""
        system = PedsSystem.build(logistic(), uniform_mean_field(2), 1.0)
        trajectory = integrate(system, np.array([[0.3, 0.1]]), IntegrationConfig(dt=0.01, steps=1500, record_stride=500))
        report = fixed_point_from_trajectory(logistic(), trajectory)
        self.assertAlmostEqual(report.x_star[0], 1.0, delta=1e-9)

    def test_closed_form_stable(self):
        """Test the stable logistic root gives -1 three times"""
        system = PedsSystem.build(logistic(), uniform_mean_field(3), 1.0)
        report = peds_jacobian_closed_form(system, [1.0])
        assert_allclose(np.sort(report.eigenvalues.real), [-1.0, -1.0, -1.0], atol=1e-10)
        self.assertEqual(report.classification, Classification.STABLE)

    def test_closed_form_unstable_becomes_saddle(self):
        """Test the unstable logistic root becomes a saddle"""
        system = PedsSystem.build(logistic(), uniform_mean_field(4), 0.5)
        report = peds_jacobian_closed_form(system, [0.0])
        assert_allclose(np.sort(report.eigenvalues.real), [-0.5, -0.5, -0.5, 1.0], atol=1e-10)
        self.assertEqual(report.target_classification, Classification.UNSTABLE)
        self.assertEqual(report.classification, Classification.SADDLE)

    def test_zero_system_is_marginal(self):
        """Test a vanishing target Jacobian leaves zero eigenvalues"""
        system = PedsSystem.build(zero_system(2), uniform_mean_field(3), 2.0)
        report = peds_jacobian_closed_form(system, [0.0, 0.0])
        self.assertEqual(report.classification, Classification.MARGINAL)
        self.assertAlmostEqual(report.spectral_abscissa, 0.0)

    def test_closed_form_matches_finite_differences(self):
        """Test the closed form against central differences on the commutative map"""
        system = PedsSystem.build(logistic(), uniform_mean_field(3), 1.0, map_kind=MapKind.STANDARD_COMMUTATIVE)
        report = peds_jacobian_closed_form(system, [1.0])
        numeric = peds_jacobian_fd(system, ExtendedState.uniform([1.0], 3))
        assert_allclose(numeric, report.closed_form, atol=1e-6)

    def test_closed_form_scope(self):
        """Test the closed form refuses other projectors and non-roots"""
        with self.assertRaises(ScopeError):
            peds_jacobian_closed_form(PedsSystem.build(logistic(), trivial_projector(3), 1.0), [1.0])
        with self.assertRaises(PreconditionError):
            peds_jacobian_closed_form(PedsSystem.build(logistic(), uniform_mean_field(3), 1.0), [0.5])

    def test_gerschgorin_discs_contain_spectrum(self):
        """Test the generalization A spectrum lies in its Gerschgorin discs"""
        decay = DecayFunction.gen_a([0.5, 1.0, 1.5, 2.0])
        system = PedsSystem.build(logistic(), uniform_mean_field(4), decays=[decay])
        self.assertEqual(system.decays[0].kind, DecayKind.GEN_A)
        report = peds_jacobian_closed_form(system, [1.0])
        discs = gerschgorin_bounds(system, [1.0])
        self.assertEqual(len(discs), 4)
        self.assertTrue(in_gerschgorin_union(report.eigenvalues, discs))

    def test_gerschgorin_single_replica(self):
        """Test N = 1 gives one disc of radius 0 centred on f'(x*)"""
        system = PedsSystem.build(logistic(), uniform_mean_field(1), decays=[DecayFunction.gen_a([0.7])])
        (disc,) = gerschgorin_bounds(system, [1.0])
        assert_allclose(disc, (-1.0, 0.0))

    def test_extended_fixed_point(self):
        """Test Newton on the extended system lands on the uniform state 1"""
        system = PedsSystem.build(logistic(), uniform_mean_field(5), 0.5)
        start = np.array([[0.85, 0.9, 0.95, 0.88, 0.92]])
        report = peds_fixed_point(system, start)
        self.assertEqual(report.source, FixedPointSource.NEWTON_ON_EMBEDDING)
        self.assertLessEqual(report.residual, 1e-9)
        assert_allclose(report.x_star, np.ones(5), atol=1e-8)

    def test_extended_fixed_point_not_reached(self):
        """Test a Newton budget that runs out raises NumericError"""
        system = PedsSystem.build(logistic(), uniform_mean_field(3), 1.0)
        with self.assertRaises(NumericError):
            peds_fixed_point(system, np.array([[0.2, 0.4, 0.6]]), max_iterations=0)

    def test_classify_equilibrium(self):
        """Test the four classifications"""
        self.assertEqual(classify_equilibrium([-1.0, -2.0]), Classification.STABLE)
        self.assertEqual(classify_equilibrium([1.0, 2.0]), Classification.UNSTABLE)
        self.assertEqual(classify_equilibrium([1.0, -2.0]), Classification.SADDLE)
        self.assertEqual(classify_equilibrium([0.0, -2.0]), Classification.MARGINAL)

    def test_compare_spectra(self):
        """Test spectra are compared as multisets"""
        self.assertAlmostEqual(compare_spectra([1.0, -2.0, 3.0], [3.0, 1.0, -2.0]), 0.0)
        self.assertEqual(compare_spectra([1.0], [1.0, 2.0]), float('inf'))

    def test_memristor_stationary_point(self):
        """Test the closed-form root solves the device balance"""
        self.assertAlmostEqual(stationary_point(0.0, 0.2, 2.0, 0.5), 0.2)
        with self.assertLogs('peds_app.memristors', 'DEBUG'):
            x = stationary_point(0.5, 0.2)
        self.assertAlmostEqual(x * (1.0 - 0.5 * x), 0.2)
        with self.assertRaises(PreconditionError):
            stationary_point(1.0, 0.5)


# 6. Config Tests
class ConfigTest(OutputDirMixin, SimpleTestCase):
    """Tests for INI config loading and validation"""

    def test_defaults(self):
        """Test a section with no file gives serializer defaults"""
        cfg = load_section('hamiltonian')
        self.assertEqual(cfg['x0'], [3.0, 0.0])
        self.assertEqual(cfg['chi'], 2.0)
        self.assertNotIn('alpha', cfg)

    def test_file_and_overrides(self):
        """Test file values are read and overrides win"""
        path = self.output / 'peds.ini'
        path.write_text('[hamiltonian]\nx0 = 2.5, 0.0\nchi = 20\nn = 8\n')
        cfg = load_section('hamiltonian', path, {'n': '12'})
        self.assertEqual(cfg['x0'], [2.5, 0.0])
        self.assertEqual(cfg['chi'], 20.0)
        self.assertEqual(cfg['n'], 12)

    def test_list_override(self):
        """Test a comma separated override fills a list key"""
        cfg = load_section('potential2d', overrides=parse_overrides(['x0=0.5,-0.25']))
        self.assertEqual(cfg['x0'], [0.5, -0.25])

    def test_dump_config_round_trip(self):
        """Test the dumped defaults load back to the same values"""
        path = self.output / 'defaults.ini'
        path.write_text(dump_config())
        for section in SECTION_SERIALIZERS:
            self.assertEqual(load_section(section, path), load_section(section), section)

    def test_invalid_values(self):
        """Test out-of-range values raise ValidationError"""
        with self.assertRaises(serializers.ValidationError):
            load_section('quartic1d', overrides={'alpha': -1.0})
        with self.assertRaises(serializers.ValidationError):
            load_section('memristor', overrides={'chi': 2.0})
        with self.assertRaises(serializers.ValidationError):
            load_section('random_projector', overrides={'k': 60, 'n': 50})
        with self.assertRaises(serializers.ValidationError):
            load_section('potential2d', overrides={'map_kind': MapKind.MIXED_COMMUTATIVE})

    def test_unknown_key_and_section(self):
        """Test unknown keys, sections and missing files are refused"""
        with self.assertRaises(serializers.ValidationError):
            load_section('quartic1d', overrides={'beta': 1.0})
        with self.assertRaises(serializers.ValidationError):
            load_section('lorenz')
        with self.assertRaises(serializers.ValidationError):
            load_section('quartic1d', self.output / 'missing.ini')

    def test_sigma_defaults(self):
        """Test the quartic scenarios spread replicas by 0.1"""
        self.assertEqual(load_section('quartic1d')['sigma'], 0.1)
        self.assertEqual(load_section('map_compare')['sigma'], 0.1)

    def test_target_key(self):
        """Test the map_compare target key parses to a system and defaults to none"""
        self.assertIsNone(load_section('map_compare')['target'])
        cfg = load_section('map_compare', overrides={'target': LOGISTIC_JSON})
        self.assertEqual(cfg['target'].m, 1)
        with self.assertRaises(serializers.ValidationError):
            load_section('map_compare', overrides={'target': '[[{"coefficient": 1}]]'})

    def test_parse_overrides(self):
        """Test key=value parsing"""
        self.assertEqual(parse_overrides(['n=4', ' dt = 0.5 ']), {'n': '4', 'dt': '0.5'})
        with self.assertRaises(serializers.ValidationError):
            parse_overrides(['n'])


# 7. File Format Tests
class FormatTest(OutputDirMixin, SimpleTestCase):
    """Tests for the plain-text artifacts"""

    def test_projector_file(self):
        """Test a written projector reads back identically"""
        omega = gram_projector(np.random.default_rng(1).uniform(0.0, 1.0, (2, 5)))
        path = write_projector(self.output / 'omega.txt', omega)
        restored = read_projector(path)
        self.assertEqual(restored.rank, 2)
        self.assertEqual(restored.kind, omega.kind)
        assert_allclose(restored.matrix, omega.matrix, rtol=0.0, atol=0.0)

    def test_projector_file_errors(self):
        """Test malformed projector files"""
        path = self.output / 'bad.txt'
        path.write_text('2 1\n0.5 0.5\n0.5 0.5\n')
        with self.assertRaises(PreconditionError):
            read_projector(path)
        path.write_text('2 2 custom\n0.5 0.5\n0.5 0.5\n')
        with self.assertRaises(IdempotenceError):
            read_projector(path)
        path.write_text('3 1 custom\n0.5 0.5\n0.5 0.5\n')
        with self.assertRaises(DimensionMismatch):
            read_projector(path)

    def test_trajectory_csv_layout(self):
        """Test the provenance line and column header"""
        omega = uniform_mean_field(2)
        system = PedsSystem.build(logistic(), omega, 1.0)
        trajectory = integrate(system, np.array([[0.3, 0.1]]), IntegrationConfig(dt=0.01, steps=10, record_stride=5))
        path = write_trajectory_csv(self.output / 'run.csv', trajectory, omega, '# seed=1', full_state=True)
        lines = path.read_text().splitlines()
        self.assertEqual(lines[0], '# seed=1')
        self.assertEqual(lines[1], 't,xtilde_1,comp_norm_1,X_1_1,X_1_2')
        self.assertEqual(_read_csv(path).shape, (3, 5))


# 8. Scenario Tests
class ScenarioTest(OutputDirMixin, SimpleTestCase):
    """Tests for the named scenarios"""

    def test_map_compare_reproducible(self):
        """Test two runs with the same seed write identical files"""
        overrides = {'n': 4, 'steps': 200, 'record_stride': 20}
        first = scenario_map_compare(load_section('map_compare', overrides={**overrides, 'output': str(self.output / 'a')}))
        second = scenario_map_compare(load_section('map_compare', overrides={**overrides, 'output': str(self.output / 'b')}))
        self.assertEqual(len(first.artifacts), 3)
        for a, b in zip(first.artifacts, second.artifacts):
            self.assertEqual(a.name, b.name)
            self.assertEqual(a.read_bytes(), b.read_bytes())
        follows = next(check for check in first.checks if check.name == 'noncommutative_follows_mean')
        self.assertEqual(follows.status, PropertyStatus.PASS)

    def test_overdamped_hamiltonian_is_monotone(self):
        """Test strong friction takes x from 3 to the minimum at 4 without overshoot"""
        cfg = load_section('hamiltonian', overrides={
            'n': 5, 'chi': 20.0, 'sigma': 0.0, 'dt': 0.002, 'steps': 10000, 'output': str(self.output),
        })
        result = scenario_hamiltonian(cfg)
        self.assertTrue(result.passed)
        position = _read_csv(result.artifacts[0])[:, 1]
        self.assertTrue(np.all(np.diff(position) >= -1e-12))
        self.assertAlmostEqual(position[-1], 4.0, delta=1e-3)

    def test_memristor_without_feedback(self):
        """Test chi = 0 relaxes to s / (alpha beta)"""
        cfg = load_section('memristor', overrides={
            'chi': 0.0, 's': 0.3, 'n': 5, 'steps': 2000, 'output': str(self.output),
        })
        result = scenario_memristor(cfg)
        self.assertTrue(result.passed)
        self.assertEqual(result.summary['stationary_point'], '0.3')
        self.assertEqual(len(result.checks), 2)

    def test_quartic1d_defaults(self):
        """Test the coupled ensemble reaches the global minimum while uncoupled replicas split"""
        result = scenario_quartic1d(load_section('quartic1d', overrides={'output': str(self.output)}))
        self.assertTrue(result.passed)
        self.assertEqual(result.summary['global_minimum'], '4')
        counts = [int(c) for c in result.summary['uncoupled_basin_counts'].split()]
        self.assertEqual(len(counts), 2)
        self.assertTrue(all(c > 0 for c in counts))
        self.assertEqual(len(result.artifacts), 3)

    def test_member_rng(self):
        """Test ensemble members draw from distinct, reproducible streams"""
        self.assertNotEqual(member_rng(0, 1).random(), member_rng(1, 0).random())
        self.assertEqual(member_rng(7, 2).random(), member_rng(7, 2).random())

    def test_potential2d_defaults(self):
        """Test joint and split exponential blocks give the same run"""
        result = scenario_potential2d(load_section('potential2d', overrides={'output': str(self.output)}))
        self.assertTrue(result.passed)
        self.assertLessEqual(float(result.summary['ordering_gap']), 1e-8)
        self.assertEqual(len(result.artifacts), 3)

    def test_random_projector(self):
        """Test x~ under a Gram projector settles on the extended equilibrium"""
        cfg = load_section('random_projector', overrides={'steps': 10000, 'output': str(self.output)})
        result = scenario_random_projector(cfg)
        (check,) = result.checks
        self.assertEqual(check.name, 'projected_converges')
        self.assertEqual(check.tolerance, 1e-2)
        self.assertEqual(check.status, PropertyStatus.PASS)
        self.assertEqual(result.summary['rank'], 25)
        self.assertIn('minimum_gap', result.summary)
        self.assertEqual(len(result.artifacts), 3)

    def test_map_compare_with_parsed_target(self):
        """Test the target key replaces the quartic flow"""
        cfg = load_section('map_compare', overrides={
            'target': LOGISTIC_JSON, 'x0': 0.3, 'sigma': 0.05, 'n': 4, 'alpha': 1.0, 'steps': 2000,
            'output': str(self.output),
        })
        result = scenario_map_compare(cfg)
        self.assertTrue(result.passed)
        self.assertEqual(result.summary['target'], 'custom target')
        self.assertAlmostEqual(float(result.summary['target_final']), 1.0, delta=1e-6)

    @override_settings(PEDS_OUTPUT_DIR=None)
    def test_output_setting_used(self):
        """Test an explicit output key beats the settings default"""
        cfg = load_section('memristor', overrides={'n': 3, 'steps': 10, 'output': str(self.output / 'explicit')})
        result = scenario_memristor(cfg)
        self.assertTrue(all(path.parent == self.output / 'explicit' for path in result.artifacts))


# 9. Management Command Tests
class PedsCommandTest(OutputDirMixin, SimpleTestCase):
    """Tests for manage.py peds"""

    def call(self, *args):
        out = StringIO()
        call_command('peds', *args, stdout=out)
        return out.getvalue()

    def test_dump_config(self):
        """Test every section is printed"""
        output = self.call('dump-config')
        for section in SECTION_SERIALIZERS:
            self.assertIn(f'[{section}]', output)

    def test_run(self):
        """Test a passing run reports its artifacts"""
        output = self.call('run', 'memristor', '--n', '4', '--steps', '2000', '--output', str(self.output))
        self.assertIn('PROP terminal_mean PASS', output)
        self.assertTrue((self.output / 'memristor.csv').exists())

    def test_invalid_config_exit_code(self):
        """Test a config error exits with 1"""
        with self.assertRaises(CommandError) as ctx:
            self.call('run', 'memristor', '--set', 'chi=2')
        self.assertEqual(ctx.exception.returncode, 1)

    def test_divergence_exit_code(self):
        """Test a diverged scenario exits with 3"""
        failing = MagicMock(side_effect=DivergenceError(step=7))
        with patch.dict('peds_app.scenarios.SCENARIOS', {'memristor': failing}):
            with self.assertRaises(CommandError) as ctx:
                self.call('run', 'memristor', '--output', str(self.output))
        self.assertEqual(ctx.exception.returncode, 3)

    def test_jacobian(self):
        """Test the Jacobian report at every critical point of the double well"""
        output = self.call('jacobian', 'quartic1d', '--n', '4', '--output', str(self.output))
        for index in range(3):
            self.assertIn(f'PROP spectrum_theorem_{index} PASS', output)
        self.assertTrue((self.output / 'quartic1d_jacobian_2.csv').exists())

    def test_jacobian_at_non_root(self):
        """Test --at away from a fixed point exits with 1"""
        with self.assertRaises(CommandError) as ctx:
            self.call('jacobian', 'quartic1d', '--at', '0.0', '--output', str(self.output))
        self.assertEqual(ctx.exception.returncode, 1)

    def test_jacobian_with_target(self):
        """Test the Jacobian report for a target given as JSON"""
        output = self.call(
            'jacobian', 'map_compare', '--n', '3', '--set', f'target={LOGISTIC_JSON}', '--output', str(self.output),
        )
        self.assertIn('PROP spectrum_theorem_0 PASS', output)
        self.assertIn('PROP spectrum_theorem_1 PASS', output)
        self.assertNotIn('spectrum_theorem_2', output)

    def test_verify_failure_exit_code(self):
        """Test a failing property exits with 2"""
        fake = [
            ('always_passes', lambda ctx, rng: (0.0, 1.0)),
            ('always_fails', lambda ctx, rng: (2.0, 1.0)),
        ]
        with patch('peds_app.verification.PROPERTIES', fake):
            with self.assertRaises(CommandError) as ctx:
                self.call('verify', '--n', '3')
        self.assertEqual(ctx.exception.returncode, 2)


# 10. Property Suite Tests
class VerificationTest(SimpleTestCase):
    """Tests for the property suite"""

    def _only(self, name):
        return [(n, func) for n, func in PROPERTIES if n == name]

    def test_defaults_pass(self):
        """Test no property fails at the default settings"""
        results = run_verify()
        self.assertEqual(len(results), len(PROPERTIES))
        failed = [result.line() for result in results if result.failed]
        self.assertEqual(failed, [])

    def test_zero_alpha_skips_convergence(self):
        """Test alpha = 0 skips the convergence property"""
        with patch('peds_app.verification.PROPERTIES', self._only('convergence_to_mean')):
            (result,) = run_verify(alpha=0.0)
        self.assertEqual(result.status, PropertyStatus.SKIP)
        self.assertIn('reason=', result.line())

    def test_reversed_decay_fails_convergence(self):
        """Test a decay with the wrong sign is caught"""
        original = apply_decay
        with patch('peds_app.embedding.apply_decay', side_effect=lambda *args: -original(*args)):
            with patch('peds_app.verification.PROPERTIES', self._only('convergence_to_mean')):
                (result,) = run_verify()
        self.assertEqual(result.status, PropertyStatus.FAIL)

    def test_scalar_map_equivalence(self):
        """Test mixed and non-commutative maps agree on spread positive states"""
        with patch('peds_app.verification.PROPERTIES', self._only('scalar_map_equivalence')):
            (result,) = run_verify()
        self.assertEqual(result.status, PropertyStatus.PASS)

    def test_scalar_map_equivalence_catches_commutative_mixed_map(self):
        """Test a mixed map that averages f(x_k) fails"""
        with patch.object(PedsSystem, '_mixed_drive', _commutative_drive):
            with patch('peds_app.verification.PROPERTIES', self._only('scalar_map_equivalence')):
                (result,) = run_verify()
        self.assertEqual(result.status, PropertyStatus.FAIL)

    def test_scalar_map_equivalence_needs_split(self):
        """Test the property fails when every map collapses to the commutative one"""
        with patch.object(PedsSystem, '_mixed_drive', _commutative_drive), \
                patch.object(PedsSystem, '_noncommutative_drive', _commutative_drive):
            with patch('peds_app.verification.PROPERTIES', self._only('scalar_map_equivalence')):
                (result,) = run_verify()
        self.assertEqual(result.status, PropertyStatus.FAIL)

    def test_property_error_becomes_failure(self):
        """Test a property raising a library error is reported, not raised"""
        def broken(ctx, rng):
            raise DomainError('bad value', variable=0)

        with patch('peds_app.verification.PROPERTIES', [('broken', broken)]):
            (result,) = run_verify()
        self.assertTrue(result.failed)
        self.assertIn('variable 0', result.reason)

    def test_property_line(self):
        """Test the PROP line format"""
        line = PropertyResult.check('demo', 1e-12, 1e-10).line()
        self.assertEqual(line, 'PROP demo PASS measured=1.000e-12 tol=1.000e-10')
        self.assertEqual(VerifyContext().n, 5)
