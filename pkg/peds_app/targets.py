"""
Target systems dx_i/dt = f_i(x) stored as explicit sums of terms.

A term is either a monomial c * x_1^e_1 ... x_m^e_m or a product of scalar
analytic factors c * prod_k g_k(x_{v_k}). Each scalar factor knows its value,
its derivative, its dense matrix function and its Taylor coefficients at 0,
which is everything the three matrix maps need.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import linalg

from .choices import ExpGrouping, FactorTag, OrderingKind
from .exceptions import (
    DimensionMismatch,
    DomainError,
    InvalidDimension,
    NormalizationError,
    NumericError,
    PreconditionError,
    SizeLimitExceeded,
)

logger = logging.getLogger(__name__)

MAX_ORDERING_FACTORS = 8
NORMALIZATION_TOLERANCE = 1e-12
POLE_TOLERANCE = 1e-14
DEFAULT_SERIES_ORDER = 20


def matrix_polynomial(coefficients, matrix):
    """Horner evaluation of sum_k c_k M^k for a square matrix M."""
    identity = np.eye(matrix.shape[0])
    result = coefficients[-1] * identity
    for c in reversed(coefficients[:-1]):
        result = result @ matrix + c * identity
    return result


# Scalar analytic factors

class ScalarFunction:
    tag = ''

    def value(self, x):
        raise NotImplementedError

    def derivative(self, x):
        raise NotImplementedError

    def matrix(self, m):
        raise NotImplementedError

    def taylor(self, order):
        raise NotImplementedError

    @property
    def is_polynomial(self):
        return False


@dataclass(frozen=True)
class Power(ScalarFunction):
    p: int
    tag = 'power'

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 0:
            raise PreconditionError(f'power needs a non-negative integer exponent, got {self.p!r}.')
        object.__setattr__(self, 'p', int(self.p))

    def value(self, x):
        return np.power(x, self.p)

    def derivative(self, x):
        if self.p == 0:
            return np.zeros_like(np.asarray(x, dtype=float))
        return self.p * np.power(x, self.p - 1)

    def matrix(self, m):
        return np.linalg.matrix_power(m, self.p)

    def taylor(self, order):
        coefficients = np.zeros(order + 1)
        if self.p <= order:
            coefficients[self.p] = 1.0
        return coefficients

    @property
    def is_polynomial(self):
        return True


@dataclass(frozen=True)
class ExpPoly(ScalarFunction):
    """exp(c_0 + c_1 x + ... + c_d x^d)"""
    coefficients: tuple
    tag = 'exp_poly'

    def __post_init__(self):
        coefficients = tuple(float(c) for c in self.coefficients) or (0.0,)
        object.__setattr__(self, 'coefficients', coefficients)

    def value(self, x):
        return np.exp(P.polyval(x, self.coefficients))

    def derivative(self, x):
        return P.polyval(x, P.polyder(self.coefficients)) * self.value(x)

    def matrix(self, m):
        return linalg.expm(matrix_polynomial(self.coefficients, m))

    def taylor(self, order):
        # h = exp(g) satisfies h' = g' h, so n h_n = sum_k k g_k h_{n-k}
        g = np.zeros(order + 1)
        g[:min(len(self.coefficients), order + 1)] = self.coefficients[:order + 1]
        h = np.zeros(order + 1)
        h[0] = math.exp(g[0])
        for n in range(1, order + 1):
            k = np.arange(1, n + 1)
            h[n] = np.sum(k * g[k] * h[n - k]) / n
        return h


def exp_of_quadratic(c2, c1=0.0):
    return ExpPoly((0.0, c1, c2))


@dataclass(frozen=True)
class ReciprocalAffine(ScalarFunction):
    """1 / (c0 + c1 x)"""
    c0: float
    c1: float
    tag = 'reciprocal_affine'

    def _denominator(self, x):
        denominator = self.c0 + self.c1 * np.asarray(x, dtype=float)
        if np.any(np.abs(denominator) <= POLE_TOLERANCE):
            raise DomainError('reciprocal_affine evaluated at its pole')
        return denominator

    def value(self, x):
        return 1.0 / self._denominator(x)

    def derivative(self, x):
        return -self.c1 / self._denominator(x) ** 2

    def matrix(self, m):
        n = m.shape[0]
        try:
            return np.linalg.solve(self.c0 * np.eye(n) + self.c1 * m, np.eye(n))
        except np.linalg.LinAlgError as exc:
            raise NumericError(f'c0 I + c1 M is singular: {exc}') from exc

    def taylor(self, order):
        if self.c0 == 0.0:
            raise DomainError('reciprocal_affine with c0 = 0 has no expansion at 0')
        ratio = -self.c1 / self.c0
        return ratio ** np.arange(order + 1) / self.c0


@dataclass(frozen=True)
class LogAffine(ScalarFunction):
    """log(c0 + c1 x)"""
    c0: float
    c1: float
    tag = 'log_affine'

    def _argument(self, x):
        argument = self.c0 + self.c1 * np.asarray(x, dtype=float)
        if np.any(argument <= 0.0):
            raise DomainError('log_affine evaluated at a non-positive argument')
        return argument

    def value(self, x):
        return np.log(self._argument(x))

    def derivative(self, x):
        return self.c1 / self._argument(x)

    def matrix(self, m):
        argument = self.c0 * np.eye(m.shape[0]) + self.c1 * m
        eigenvalues = np.linalg.eigvals(argument)
        if np.any((eigenvalues.real <= 0.0) & (np.abs(eigenvalues.imag) <= 1e-12)):
            raise DomainError('log_affine matrix argument has a non-positive eigenvalue')
        result = linalg.logm(argument)
        if np.iscomplexobj(result):
            if np.max(np.abs(result.imag)) > 1e-9:
                raise NumericError('Matrix logarithm has no real branch for this argument.')
            result = result.real
        return result

    def taylor(self, order):
        if self.c0 <= 0.0:
            raise DomainError('log_affine with c0 <= 0 has no expansion at 0')
        ratio = self.c1 / self.c0
        coefficients = np.zeros(order + 1)
        coefficients[0] = math.log(self.c0)
        n = np.arange(1, order + 1)
        coefficients[1:] = (-1.0) ** (n + 1) * ratio ** n / n
        return coefficients


@dataclass(frozen=True)
class Series(ScalarFunction):
    """Custom power series sum_n a_n x^n, truncated after ``order``."""
    coefficients: tuple
    order: int = DEFAULT_SERIES_ORDER
    tag = 'custom_series'

    def __post_init__(self):
        coefficients = tuple(float(c) for c in self.coefficients) or (0.0,)
        object.__setattr__(self, 'coefficients', coefficients)
        if len(coefficients) > self.order + 1:
            logger.debug(
                'custom series truncated at order %d, remainder bound at |x|=1: %.3e',
                self.order, self.remainder_bound(1.0),
            )

    @property
    def truncated(self):
        return self.coefficients[:self.order + 1]

    @property
    def is_polynomial(self):
        return True

    def remainder_bound(self, radius):
        """Sum of |a_n| r^n over the dropped tail."""
        tail = np.abs(self.coefficients[self.order + 1:])
        if tail.size == 0:
            return 0.0
        powers = float(radius) ** np.arange(self.order + 1, self.order + 1 + tail.size)
        return float(np.sum(tail * powers))

    def value(self, x):
        return P.polyval(x, self.truncated)

    def derivative(self, x):
        return P.polyval(x, P.polyder(self.truncated))

    def matrix(self, m):
        return matrix_polynomial(self.truncated, m)

    def taylor(self, order):
        coefficients = np.zeros(order + 1)
        kept = self.truncated[:order + 1]
        coefficients[:len(kept)] = kept
        return coefficients


@dataclass(frozen=True)
class Product(ScalarFunction):
    """Pointwise product of factors acting on the same variable."""
    functions: tuple
    tag = 'product'

    def value(self, x):
        result = np.ones_like(np.asarray(x, dtype=float))
        for function in self.functions:
            result = result * function.value(x)
        return result

    def derivative(self, x):
        values = [function.value(x) for function in self.functions]
        total = np.zeros_like(np.asarray(x, dtype=float))
        for j, function in enumerate(self.functions):
            partial = function.derivative(x)
            for i, v in enumerate(values):
                if i != j:
                    partial = partial * v
            total = total + partial
        return total

    def matrix(self, m):
        result = np.eye(m.shape[0])
        for function in self.functions:
            result = result @ function.matrix(m)
        return result

    def taylor(self, order):
        coefficients = np.array([1.0])
        for function in self.functions:
            coefficients = P.polymul(coefficients, function.taylor(order))[:order + 1]
        padded = np.zeros(order + 1)
        padded[:len(coefficients)] = coefficients
        return padded

    @property
    def is_polynomial(self):
        return all(function.is_polynomial for function in self.functions)


def combine(functions):
    functions = tuple(functions)
    if len(functions) == 1:
        return functions[0]
    return Product(functions)


# Argument counts per factor tag; None takes any non-empty coefficient list
FACTOR_ARITY = {
    FactorTag.POWER: 1,
    FactorTag.EXP_POLY: None,
    FactorTag.RECIPROCAL_AFFINE: 2,
    FactorTag.LOG_AFFINE: 2,
    FactorTag.CUSTOM_SERIES: None,
}


def scalar_function(tag, args):
    """The scalar factor named by ``tag``, built from its numeric arguments."""
    if tag not in FACTOR_ARITY:
        raise PreconditionError(f'Unknown factor tag {tag!r}.')
    args = tuple(float(a) for a in args)
    arity = FACTOR_ARITY[tag]
    if arity is not None and len(args) != arity:
        raise PreconditionError(f'{tag} takes {arity} argument(s), got {len(args)}.')
    if not args:
        raise PreconditionError(f'{tag} needs at least one coefficient.')

    if tag == FactorTag.POWER:
        return Power(args[0])
    if tag == FactorTag.EXP_POLY:
        return ExpPoly(args)
    if tag == FactorTag.RECIPROCAL_AFFINE:
        return ReciprocalAffine(*args)
    if tag == FactorTag.LOG_AFFINE:
        return LogAffine(*args)
    return Series(args)


# Terms

@dataclass(frozen=True)
class MonomialTerm:
    coefficient: float
    exponents: tuple

    def __post_init__(self):
        exponents = tuple(int(e) for e in self.exponents)
        if any(e < 0 for e in exponents):
            raise PreconditionError(f'Monomial exponents must be non-negative, got {self.exponents}.')
        if not math.isfinite(self.coefficient):
            raise PreconditionError('Monomial coefficient must be finite.')
        object.__setattr__(self, 'exponents', exponents)
        object.__setattr__(self, 'coefficient', float(self.coefficient))

    @property
    def degree(self):
        return sum(self.exponents)

    def variable_groups(self):
        return tuple((k, (Power(e),)) for k, e in enumerate(self.exponents) if e > 0)

    def block_layout(self):
        return self.variable_groups(), None

    def value(self, x):
        result = self.coefficient
        for k, e in enumerate(self.exponents):
            if e:
                result = result * np.power(x[k], e)
        return result

    def gradient(self, x):
        grad = np.zeros(len(self.exponents))
        for j, e in enumerate(self.exponents):
            if e == 0:
                continue
            partial = self.coefficient * e * x[j] ** (e - 1)
            for k, other in enumerate(self.exponents):
                if k != j and other:
                    partial *= x[k] ** other
            grad[j] = partial
        return grad

    def expansion(self, m, order=DEFAULT_SERIES_ORDER):
        return (self,)

    def check_variables(self, m):
        if len(self.exponents) != m:
            raise DimensionMismatch(f'Monomial has {len(self.exponents)} exponents for a system with m={m}.')


@dataclass(frozen=True)
class AnalyticFactorTerm:
    coefficient: float
    factors: tuple
    exp_grouping: str = ExpGrouping.SPLIT

    def __post_init__(self):
        factors = tuple((int(k), function) for k, function in self.factors)
        for k, function in factors:
            if k < 0:
                raise PreconditionError(f'Variable index must be non-negative, got {k}.')
            if not isinstance(function, ScalarFunction):
                raise PreconditionError(f'Unsupported factor {function!r}.')
        object.__setattr__(self, 'factors', factors)
        object.__setattr__(self, 'coefficient', float(self.coefficient))

    def variable_groups(self):
        """Factors grouped per variable, in order of first appearance."""
        groups = {}
        for k, function in self.factors:
            groups.setdefault(k, []).append(function)
        return tuple((k, tuple(functions)) for k, functions in groups.items())

    def block_layout(self):
        """
        Blocks for the non-commutative map.

        Returns the per-variable groups and, for joint grouping, the summed
        exponent polynomial of every variable carrying exp_poly factors.
        """
        if self.exp_grouping != ExpGrouping.JOINT:
            return self.variable_groups(), None

        groups = {}
        exponents = {}
        for k, function in self.factors:
            if isinstance(function, ExpPoly):
                exponents[k] = P.polyadd(exponents.get(k, (0.0,)), function.coefficients)
            else:
                groups.setdefault(k, []).append(function)
        return (
            tuple((k, tuple(functions)) for k, functions in groups.items()),
            {k: tuple(c) for k, c in exponents.items()} or None,
        )

    def value(self, x):
        result = self.coefficient
        for k, function in self.factors:
            try:
                result = result * function.value(x[k])
            except DomainError as exc:
                raise DomainError(exc.detail, variable=k) from exc
        return result

    def gradient(self, x):
        values = []
        for k, function in self.factors:
            try:
                values.append(function.value(x[k]))
            except DomainError as exc:
                raise DomainError(exc.detail, variable=k) from exc
        grad = np.zeros(len(x))
        for j, (k, function) in enumerate(self.factors):
            partial = self.coefficient * function.derivative(x[k])
            for i, v in enumerate(values):
                if i != j:
                    partial = partial * v
            grad[k] += partial
        return grad

    def expansion(self, m, order=DEFAULT_SERIES_ORDER):
        return _expand(self, m, order)

    def check_variables(self, m):
        for k, _ in self.factors:
            if k >= m:
                raise DimensionMismatch(f'Factor refers to variable {k} in a system with m={m}.')


@lru_cache(maxsize=256)
def _expand(term, m, order):
    """Multivariate Taylor expansion of a factor term, truncated at total degree ``order``."""
    monomials = {(0,) * m: term.coefficient}
    for k, functions in term.variable_groups():
        coefficients = combine(functions).taylor(order)
        expanded = {}
        for exponents, c in monomials.items():
            budget = order - sum(exponents)
            for d in range(budget + 1):
                if coefficients[d] == 0.0:
                    continue
                key = exponents[:k] + (exponents[k] + d,) + exponents[k + 1:]
                expanded[key] = expanded.get(key, 0.0) + c * coefficients[d]
        monomials = expanded
    return tuple(MonomialTerm(c, e) for e, c in sorted(monomials.items()) if c != 0.0)


# Systems

@dataclass(frozen=True, eq=False)
class TargetSystem:
    m: int
    equations: tuple
    domain: tuple = None
    name: str = ''

    def __post_init__(self):
        if not isinstance(self.m, (int, np.integer)) or self.m < 1:
            raise InvalidDimension(f'Target system needs m >= 1, got {self.m!r}.')
        equations = tuple(tuple(terms) for terms in self.equations)
        if len(equations) != self.m:
            raise DimensionMismatch(f'Expected {self.m} equations, got {len(equations)}.')
        for terms in equations:
            for term in terms:
                term.check_variables(self.m)
        object.__setattr__(self, 'equations', equations)

        if self.domain is not None:
            domain = tuple(
                (-math.inf, math.inf) if hint is None else (float(hint[0]), float(hint[1]))
                for hint in self.domain
            )
            if len(domain) != self.m:
                raise DimensionMismatch(f'Expected {self.m} domain hints, got {len(domain)}.')
            object.__setattr__(self, 'domain', domain)

    def __str__(self):
        return self.name or f'target system (m={self.m})'

    def check_domain(self, x):
        """Domain hints are half-open intervals [lo, hi)."""
        if self.domain is None:
            return
        for k, (lo, hi) in enumerate(self.domain):
            values = np.asarray(x[k])
            if np.any(values < lo) or np.any(values >= hi):
                raise DomainError(f'value outside the domain hint [{lo}, {hi})', variable=k)

    def clip_to_domain(self, columns):
        """Clip rows of ``columns`` into the domain hints; returns (clipped, changed)."""
        if self.domain is None:
            return columns, False
        clipped = columns.copy()
        for k, (lo, hi) in enumerate(self.domain):
            upper = np.nextafter(hi, lo) if math.isfinite(hi) else hi
            clipped[k] = np.clip(clipped[k], lo, upper)
        return clipped, not np.array_equal(clipped, columns)

    def evaluate(self, x):
        """f(x) for x of shape (m,) or (m, N), evaluated row by row."""
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.m:
            raise DimensionMismatch(f'Expected {self.m} variables, got {x.shape[0]}.')
        out = np.zeros(x.shape)
        for i, terms in enumerate(self.equations):
            for term in terms:
                out[i] = out[i] + term.value(x)
        return out

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.m,):
            raise DimensionMismatch(f'Expected a vector of length {self.m}, got shape {x.shape}.')
        jac = np.zeros((self.m, self.m))
        for i, terms in enumerate(self.equations):
            for term in terms:
                jac[i] += term.gradient(x)
        return jac


def eval_scalar(system, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (system.m,):
        raise DimensionMismatch(f'Expected a vector of length {system.m}, got shape {x.shape}.')
    system.check_domain(x)
    return system.evaluate(x)


def jacobian_scalar(system, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (system.m,):
        raise DimensionMismatch(f'Expected a vector of length {system.m}, got shape {x.shape}.')
    system.check_domain(x)
    return system.jacobian(x)


# Orderings

@dataclass(frozen=True)
class Ordering:
    kind: str = OrderingKind.STANDARD
    weights: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in OrderingKind.values:
            raise PreconditionError(f'Unknown ordering {self.kind!r}.')
        if self.kind != OrderingKind.WEIGHTED:
            return
        weights = tuple((tuple(int(i) for i in perm), float(w)) for perm, w in self.weights)
        if not weights:
            raise NormalizationError('Weighted ordering needs at least one permutation weight.')
        for perm, _ in weights:
            if sorted(perm) != list(range(len(perm))):
                raise NormalizationError(f'{perm} is not a permutation.')
        _check_normalized(weights)
        object.__setattr__(self, 'weights', weights)

    def __str__(self):
        return self.kind

    @classmethod
    def standard(cls):
        return cls(OrderingKind.STANDARD)

    @classmethod
    def balanced(cls):
        return cls(OrderingKind.BALANCED)

    @classmethod
    def weighted(cls, weights):
        return cls(OrderingKind.WEIGHTED, tuple(dict(weights).items()))


def _check_normalized(weights):
    total = sum(w for _, w in weights)
    if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
        raise NormalizationError(f'Ordering weights sum to {total!r}, expected 1.')


def ordering_coefficients(ordering, m_term):
    if m_term < 0:
        raise InvalidDimension(f'Factor count must be non-negative, got {m_term}.')
    if m_term > MAX_ORDERING_FACTORS:
        raise SizeLimitExceeded(f'{m_term} factors exceed the limit of {MAX_ORDERING_FACTORS}.')

    identity = tuple(range(m_term))
    if m_term <= 1 or ordering.kind == OrderingKind.STANDARD:
        return [(identity, 1.0)]
    if ordering.kind == OrderingKind.BALANCED:
        permutations = list(itertools.permutations(identity))
        weight = 1.0 / len(permutations)
        return [(perm, weight) for perm in permutations]

    weights = [(perm, w) for perm, w in ordering.weights if len(perm) == m_term and w != 0.0]
    if not weights:
        raise NormalizationError(f'Weighted ordering has no weights for {m_term} factors.')
    _check_normalized(weights)
    return weights


# Library of target systems

def linear_system(a_matrix, name='linear'):
    a_matrix = np.atleast_2d(np.asarray(a_matrix, dtype=float))
    m = a_matrix.shape[0]
    equations = []
    for i in range(m):
        terms = []
        for j in range(m):
            if a_matrix[i, j] != 0.0:
                exponents = [0] * m
                exponents[j] = 1
                terms.append(MonomialTerm(a_matrix[i, j], tuple(exponents)))
        equations.append(tuple(terms))
    return TargetSystem(m, tuple(equations), name=name)


def logistic():
    """f(x) = x - x^2"""
    return TargetSystem(1, ((MonomialTerm(1.0, (1,)), MonomialTerm(-1.0, (2,))),), name='logistic')


def zero_system(m):
    return TargetSystem(m, tuple(() for _ in range(m)), name='zero')


# V'(x) = (x + 1)(x + 0.51)(x - 4): maximum at -0.51, minima at -1 and 4.
DOUBLE_WELL = (-2.04, -5.53, -2.49, 1.0)


def quartic_gradient(a1, a2, a3, a4):
    """Gradient flow f(x) = -(a1 + a2 x + a3 x^2 + a4 x^3) of a quartic potential."""
    terms = tuple(
        MonomialTerm(-a, (power,))
        for power, a in enumerate((a1, a2, a3, a4))
        if a != 0.0
    )
    return TargetSystem(1, (terms,), name='quartic gradient')


def quartic_potential(a1, a2, a3, a4, x):
    """V(x) with V(0) = 0 and V'(x) = a1 + a2 x + a3 x^2 + a4 x^3."""
    return P.polyval(x, (0.0, a1, a2 / 2, a3 / 3, a4 / 4))


def quartic_critical_points(a1, a2, a3, a4):
    """Real roots of V' from the companion matrix."""
    roots = P.polyroots(np.trim_zeros(np.array([a1, a2, a3, a4], dtype=float), 'b'))
    real = roots[np.abs(roots.imag) <= 1e-9].real
    return np.sort(real)


def exponential_potential_2d(exp_grouping=ExpGrouping.SPLIT):
    """
    Gradient flow of V(x, y) = exp(x^2/2 - y^2/2 + y^4/4).

    f_x = -x V and f_y = (y - y^3) V; minima at (0, +-1), saddle at (0, 0).
    """
    exp_x = exp_of_quadratic(0.5)
    exp_y = ExpPoly((0.0, 0.0, -0.5, 0.0, 0.25))
    f_x = AnalyticFactorTerm(-1.0, ((0, Power(1)), (0, exp_x), (1, exp_y)), exp_grouping)
    f_y = AnalyticFactorTerm(1.0, ((1, Series((0.0, 1.0, 0.0, -1.0))), (0, exp_x), (1, exp_y)), exp_grouping)
    return TargetSystem(2, ((f_x,), (f_y,)), name=f'exponential potential ({exp_grouping})')


def dissipative_hamiltonian(mass, chi, a1, a2, a3, a4):
    """dx/dt = p/mass, dp/dt = -V'(x) - chi p/mass."""
    if mass <= 0:
        raise PreconditionError('Mass must be positive.')
    momentum = (MonomialTerm(1.0 / mass, (0, 1)),)
    force = tuple(
        MonomialTerm(-a, (power, 0))
        for power, a in enumerate((a1, a2, a3, a4))
        if a != 0.0
    )
    friction = (MonomialTerm(-chi / mass, (0, 1)),) if chi else ()
    return TargetSystem(2, (momentum, force + friction), name='dissipative hamiltonian')


def memristor_mean_field(chi, s, alpha=1.0, beta=1.0):
    """dx/dt = (s / beta) / (1 - chi x) - alpha x on the domain [0, 1)."""
    drive = AnalyticFactorTerm(s / beta, ((0, ReciprocalAffine(1.0, -chi)),))
    relaxation = MonomialTerm(-alpha, (1,))
    return TargetSystem(1, ((drive, relaxation),), domain=((0.0, 1.0),), name='memristor')
