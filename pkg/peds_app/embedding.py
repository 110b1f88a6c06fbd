"""
The extended right-hand side dX_i/dt = Omega F_i(X_1..X_m) b_i + G_i(Omega; X_i).

F_i is the lift of the scalar f_i to diagonal-matrix arguments by one of the
three matrix maps; G_i is a decay function acting on Ker(Omega). Matrix
products are applied right to left on b_i, so polynomial blocks never
form dense powers.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .choices import DecayKind, MapKind
from .exceptions import (
    DimensionMismatch,
    DomainError,
    InvalidDimension,
    NumericError,
    PreconditionError,
    ScopeError,
)
from .targets import (
    DEFAULT_SERIES_ORDER,
    Ordering,
    Power,
    combine,
    matrix_polynomial,
    ordering_coefficients,
)

logger = logging.getLogger(__name__)

ZERO_SHIFT = 1e-9
B_VECTOR_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class ExtendedState:
    """The m replica vectors X_1..X_m of length N, stored as rows."""
    columns: np.ndarray

    def __post_init__(self):
        columns = np.array(self.columns, dtype=float)
        if columns.ndim != 2 or 0 in columns.shape:
            raise InvalidDimension(f'Extended state must be a non-empty m x N array, got shape {columns.shape}.')
        if not np.all(np.isfinite(columns)):
            raise NumericError('Extended state has non-finite entries.')
        columns.setflags(write=False)
        object.__setattr__(self, 'columns', columns)

    @property
    def m(self):
        return self.columns.shape[0]

    @property
    def n(self):
        return self.columns.shape[1]

    @classmethod
    def uniform(cls, x, n):
        """X_i = x_i * 1"""
        return cls(np.outer(np.atleast_1d(np.asarray(x, dtype=float)), np.ones(n)))


@dataclass(frozen=True, eq=False)
class DecayFunction:
    kind: str
    alpha: float = None
    diagonal: np.ndarray = None

    def __post_init__(self):
        if self.kind == DecayKind.STANDARD:
            if self.alpha is None or not np.isfinite(self.alpha) or self.alpha <= 0:
                raise PreconditionError(f'Standard decay needs alpha > 0, got {self.alpha!r}.')
            object.__setattr__(self, 'alpha', float(self.alpha))
        elif self.kind in (DecayKind.GEN_A, DecayKind.GEN_B):
            diagonal = np.array(self.diagonal, dtype=float)
            if diagonal.ndim != 1 or diagonal.size == 0 or np.any(diagonal <= 0) or not np.all(np.isfinite(diagonal)):
                raise PreconditionError('Generalized decay needs a non-empty positive diagonal D.')
            diagonal.setflags(write=False)
            object.__setattr__(self, 'diagonal', diagonal)
        else:
            raise PreconditionError(f'Unknown decay kind {self.kind!r}.')

    def __str__(self):
        if self.kind == DecayKind.STANDARD:
            return f'standard(alpha={self.alpha:g})'
        return f'{self.kind}(N={self.diagonal.size})'

    @classmethod
    def standard(cls, alpha):
        return cls(DecayKind.STANDARD, alpha=alpha)

    @classmethod
    def gen_a(cls, diagonal):
        return cls(DecayKind.GEN_A, diagonal=diagonal)

    @classmethod
    def gen_b(cls, diagonal):
        return cls(DecayKind.GEN_B, diagonal=diagonal)

    def rates(self, n):
        if self.kind == DecayKind.STANDARD:
            return np.full(n, self.alpha)
        return np.array(self.diagonal)

    def check_dimension(self, n):
        if self.diagonal is not None and self.diagonal.size != n:
            raise DimensionMismatch(f'Decay diagonal has length {self.diagonal.size}, expected {n}.')

    def matrix(self, omega):
        """Q with G(Omega; x) = Q x."""
        self.check_dimension(omega.dim)
        complement = np.eye(omega.dim) - omega.matrix
        if self.kind == DecayKind.STANDARD:
            return -self.alpha * complement
        if self.kind == DecayKind.GEN_A:
            return -(self.diagonal[:, None] * complement)
        return -(complement @ (self.diagonal[:, None] * complement))


def apply_decay(decay, omega, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (omega.dim,):
        raise DimensionMismatch(f'Expected a vector of length {omega.dim}, got shape {x.shape}.')
    decay.check_dimension(omega.dim)

    complement = x - omega.matrix @ x
    if decay.kind == DecayKind.STANDARD:
        return -decay.alpha * complement
    if decay.kind == DecayKind.GEN_A:
        return -decay.diagonal * complement
    weighted = decay.diagonal * complement
    return -(weighted - omega.matrix @ weighted)


# Matrix function evaluation

def _similarity_matrix(omega, x):
    root = np.sqrt(x)
    return root, root[:, None] * omega.matrix * root[None, :]


def similarity_spectrum(omega, x_diag):
    """Eigenvalues of sqrt(X) Omega sqrt(X) from the general (non-symmetric) solver."""
    x = np.asarray(x_diag, dtype=float)
    if np.any(x <= 0):
        raise DomainError('similarity transform needs a positive diagonal')
    _, a = _similarity_matrix(omega, x)
    return np.linalg.eigvals(a)


def matrix_function_eval(omega, x_diag, function):
    """
    F(Omega X) = sqrt(X)^-1 P F(Sigma) P^t sqrt(X), where P Sigma P^t is the
    eigendecomposition of the symmetric matrix sqrt(X) Omega sqrt(X).
    """
    x = np.asarray(x_diag, dtype=float)
    if x.shape != (omega.dim,):
        raise DimensionMismatch(f'Expected a diagonal of length {omega.dim}, got shape {x.shape}.')
    if np.any(x < 0):
        raise DomainError('similarity transform needs a positive diagonal')
    zeros = np.count_nonzero(x == 0)
    if zeros:
        logger.warning('Shifting %d zero diagonal entries by %g before the similarity transform', zeros, ZERO_SHIFT)
        x = np.where(x == 0, ZERO_SHIFT, x)
    if not omega.is_symmetric:
        raise ScopeError('The similarity transform needs a symmetric projector.')

    root, a = _similarity_matrix(omega, x)
    try:
        sigma, vectors = linalg.eigh((a + a.T) / 2)
    except linalg.LinAlgError as exc:
        raise NumericError(f'Symmetric eigensolver failed: {exc}') from exc
    core = (vectors * function.value(sigma)) @ vectors.T
    return core / root[:, None] * root[None, :]


def noncommutative_monomial(omega, states, ordering):
    """Weighted permutation sum of the products (Omega X_k)^{e_k}."""
    n = omega.dim
    blocks = []
    for x, exponent in states:
        x = np.asarray(x, dtype=float)
        if x.shape != (n,):
            raise DimensionMismatch(f'Expected a diagonal of length {n}, got shape {x.shape}.')
        if exponent < 0:
            raise PreconditionError('Exponents must be non-negative.')
        blocks.append(np.linalg.matrix_power(omega.matrix * x[None, :], int(exponent)))

    result = np.zeros((n, n))
    for perm, weight in ordering_coefficients(ordering, len(blocks)):
        product = np.eye(n)
        for index in perm:
            product = product @ blocks[index]
        result += weight * product
    return result


class _PowerBlock:
    """(Omega X)^p applied by repeated products."""

    def __init__(self, omega_matrix, x, p):
        self.omega_matrix = omega_matrix
        self.x = x
        self.p = p

    def apply(self, v):
        for _ in range(self.p):
            v = self.omega_matrix @ (self.x * v)
        return v


class _DenseBlock:

    def __init__(self, matrix):
        self.matrix = matrix

    def apply(self, v):
        return self.matrix @ v


# Systems

@dataclass(frozen=True, eq=False)
class PedsSystem:
    target: object
    omega: object
    map_kind: str = MapKind.STANDARD_NONCOMMUTATIVE
    ordering: Ordering = field(default_factory=Ordering.standard)
    decays: tuple = ()
    b_vectors: np.ndarray = None
    series_order: int = DEFAULT_SERIES_ORDER

    def __post_init__(self):
        m, n = self.target.m, self.omega.dim
        if self.map_kind not in MapKind.values:
            raise PreconditionError(f'Unknown matrix map {self.map_kind!r}.')
        decays = tuple(self.decays)
        if len(decays) != m:
            raise DimensionMismatch(f'Expected {m} decay functions, got {len(decays)}.')
        for decay in decays:
            decay.check_dimension(n)
        object.__setattr__(self, 'decays', decays)

        if self.b_vectors is None:
            b = np.ones((m, n))
        else:
            b = np.array(np.broadcast_to(np.asarray(self.b_vectors, dtype=float), (m, n)))
        for i, row in enumerate(b):
            if np.linalg.norm(self.omega.matrix @ row) <= B_VECTOR_TOLERANCE:
                raise PreconditionError(f'Omega b_{i} vanishes; b_{i} must not lie in Ker(Omega).')
        b.setflags(write=False)
        object.__setattr__(self, 'b_vectors', b)

    def __str__(self):
        return f'PEDS[{self.target}; {self.omega}; {self.map_kind}/{self.ordering}]'

    @classmethod
    def build(cls, target, omega, alpha=1.0, map_kind=MapKind.STANDARD_NONCOMMUTATIVE,
              ordering=None, decays=None, b_vectors=None):
        if decays is None:
            alphas = np.broadcast_to(np.asarray(alpha, dtype=float), (target.m,))
            decays = tuple(DecayFunction.standard(a) for a in alphas)
        return cls(
            target=target,
            omega=omega,
            map_kind=map_kind,
            ordering=ordering or Ordering.standard(),
            decays=tuple(decays),
            b_vectors=b_vectors,
        )

    @property
    def m(self):
        return self.target.m

    @property
    def n(self):
        return self.omega.dim

    @property
    def domain(self):
        return self.target.domain

    @property
    def has_unit_b(self):
        return bool(np.all(self.b_vectors == 1.0))

    def clip_to_domain(self, columns):
        return self.target.clip_to_domain(columns)

    def rhs(self, state):
        if (state.m, state.n) != (self.m, self.n):
            raise DimensionMismatch(f'State is {state.m} x {state.n}, system is {self.m} x {self.n}.')
        return ExtendedState(self.rhs_array(state.columns))

    def rhs_flat(self, vector):
        return self.rhs_array(np.asarray(vector, dtype=float).reshape(self.m, self.n)).reshape(-1)

    def rhs_array(self, columns):
        columns = np.asarray(columns, dtype=float)
        if columns.shape != (self.m, self.n):
            raise DimensionMismatch(f'State is {columns.shape}, system is {(self.m, self.n)}.')

        if self.map_kind == MapKind.STANDARD_COMMUTATIVE:
            drive = self.target.evaluate(columns) * self.b_vectors
        elif self.map_kind == MapKind.MIXED_COMMUTATIVE:
            drive = self._mixed_drive(columns)
        else:
            drive = self._noncommutative_drive(columns)

        out = drive @ self.omega.matrix.T
        for i, decay in enumerate(self.decays):
            out[i] += apply_decay(decay, self.omega, columns[i])
        return out

    def _noncommutative_drive(self, columns):
        drive = np.zeros((self.m, self.n))
        for i, terms in enumerate(self.target.equations):
            for term in terms:
                blocks = self._blocks(term, columns)
                total = np.zeros(self.n)
                for perm, weight in ordering_coefficients(self.ordering, len(blocks)):
                    v = self.b_vectors[i]
                    for index in reversed(perm):
                        v = blocks[index].apply(v)
                    total += weight * v
                drive[i] += term.coefficient * total
        return drive

    def _blocks(self, term, columns):
        groups, joint = term.block_layout()
        blocks = [self._variable_block(k, combine(functions), columns[k]) for k, functions in groups]
        if joint:
            exponent = sum(
                matrix_polynomial(coefficients, self.omega.matrix * columns[k][None, :])
                for k, coefficients in joint.items()
            )
            blocks.append(_DenseBlock(linalg.expm(exponent)))
        return blocks

    def _variable_block(self, k, function, x):
        if isinstance(function, Power):
            return _PowerBlock(self.omega.matrix, x, function.p)
        try:
            if not function.is_polynomial and np.all(x > 0) and self.omega.is_symmetric:
                return _DenseBlock(matrix_function_eval(self.omega, x, function))
            return _DenseBlock(function.matrix(self.omega.matrix * x[None, :]))
        except DomainError as exc:
            raise DomainError(exc.detail, variable=k) from exc

    def _mixed_drive(self, columns):
        drive = np.zeros((self.m, self.n))
        for i, terms in enumerate(self.target.equations):
            for term in terms:
                for monomial in term.expansion(self.m, self.series_order):
                    drive[i] += self._mixed_monomial(monomial, columns, self.b_vectors[i])
        return drive

    def _mixed_monomial(self, monomial, columns, b):
        """c (Omega (X_1^e_1 ... X_m^e_m)^(1/k))^k b with k the total degree."""
        k = monomial.degree
        if k == 0:
            return monomial.coefficient * b
        product = np.ones(self.n)
        for j, e in enumerate(monomial.exponents):
            if e:
                product = product * columns[j] ** e
        if k % 2 == 0 and np.any(product < 0):
            negative = next(j for j, e in enumerate(monomial.exponents) if e and np.any(columns[j] < 0))
            raise DomainError(f'mixed map root of order {k} of a negative diagonal product', variable=negative)
        root = np.sign(product) * np.abs(product) ** (1.0 / k)
        v = b
        for _ in range(k):
            v = self.omega.matrix @ (root * v)
        return monomial.coefficient * v