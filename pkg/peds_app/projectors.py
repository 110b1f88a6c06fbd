"""
Projector operators.

A projector is a square matrix with Omega @ Omega == Omega. Construction
always certifies idempotence and the 0/1 spectral split; nothing here
renormalizes a matrix that fails those checks.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .choices import ProjectorKind
from .exceptions import DimensionMismatch, IdempotenceError, InvalidDimension, SingularGram

logger = logging.getLogger(__name__)

IDEMPOTENCE_TOLERANCE = 1e-10
SPECTRAL_TOLERANCE = 1e-8
GRAM_CONDITION_LIMIT = 1e12
SYMMETRY_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class Projector:
    """Dense idempotent matrix with certified rank."""
    matrix: np.ndarray
    kind: str = ProjectorKind.CUSTOM
    rank: int = field(init=False)
    symmetric: bool = field(init=False, repr=False)
    observable_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] == 0:
            raise InvalidDimension(f'Projector must be a non-empty square matrix, got shape {matrix.shape}.')
        n = matrix.shape[0]

        if self.kind == ProjectorKind.UNIFORM_MEAN_FIELD and not np.all(matrix == 1.0 / n):
            raise IdempotenceError('Uniform mean-field projector must have every entry equal to 1/N.')
        if self.kind == ProjectorKind.TRIVIAL and not np.array_equal(matrix, np.eye(n)):
            raise IdempotenceError('Trivial projector must be the identity.')

        defect = np.max(np.abs(matrix @ matrix - matrix))
        if defect > IDEMPOTENCE_TOLERANCE:
            raise IdempotenceError(f'max |Omega^2 - Omega| = {defect:.3e} exceeds {IDEMPOTENCE_TOLERANCE:g}.')

        rank = _spectral_rank(matrix)
        matrix.setflags(write=False)
        object.__setattr__(self, 'matrix', matrix)
        object.__setattr__(self, 'rank', rank)
        object.__setattr__(self, 'symmetric', bool(np.allclose(matrix, matrix.T, rtol=0.0, atol=SYMMETRY_TOLERANCE)))
        object.__setattr__(self, 'observable_weights', _observable_weights(matrix))

    def __str__(self):
        return f'{self.kind} projector (N={self.dim}, rank={self.rank})'

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def is_symmetric(self):
        return self.symmetric

    @property
    def is_mean_field(self):
        """Check if this is the uniform mean-field projector"""
        if self.kind == ProjectorKind.UNIFORM_MEAN_FIELD:
            return True
        return bool(np.allclose(self.matrix, 1.0 / self.dim, rtol=0.0, atol=SYMMETRY_TOLERANCE))

    @classmethod
    def from_matrix(cls, matrix, kind=ProjectorKind.CUSTOM):
        return cls(matrix=matrix, kind=kind)

    def apply(self, v):
        v = _as_vector(v, self.dim)
        return self.matrix @ v

    def complement(self, v):
        v = _as_vector(v, self.dim)
        return v - self.matrix @ v

    def observable(self, columns):
        """Projected observable 1^T Omega X_i / 1^T Omega 1 for each row of ``columns``."""
        columns = np.asarray(columns, dtype=float)
        if columns.shape[-1] != self.dim:
            raise DimensionMismatch(f'Expected vectors of length {self.dim}, got {columns.shape[-1]}.')
        return columns @ self.observable_weights


def _as_vector(v, n):
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise DimensionMismatch(f'Expected a vector of length {n}, got shape {v.shape}.')
    return v


def _spectral_rank(matrix):
    if np.allclose(matrix, matrix.T, rtol=0.0, atol=SYMMETRY_TOLERANCE):
        eigenvalues = np.linalg.eigvalsh((matrix + matrix.T) / 2)
    else:
        eigenvalues = np.linalg.eigvals(matrix)
        if np.max(np.abs(eigenvalues.imag)) > SPECTRAL_TOLERANCE:
            raise IdempotenceError('Projector has complex eigenvalues.')
        eigenvalues = eigenvalues.real

    distance = np.minimum(np.abs(eigenvalues), np.abs(eigenvalues - 1.0))
    if np.max(distance) > SPECTRAL_TOLERANCE:
        raise IdempotenceError(
            f'Eigenvalue {eigenvalues[np.argmax(distance)]:.3e} is not within {SPECTRAL_TOLERANCE:g} of 0 or 1.'
        )
    return int(np.count_nonzero(eigenvalues > 0.5))


def _observable_weights(matrix):
    n = matrix.shape[0]
    ones = np.ones(n)
    column_sums = matrix.T @ ones
    norm = ones @ column_sums
    if abs(norm) < 1e-12:
        # 1 is orthogonal to Span(Omega); fall back to the plain 1/N average
        return column_sums / n
    return column_sums / norm


def uniform_mean_field(n):
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidDimension(f'Mean-field projector needs N >= 1, got {n!r}.')
    return Projector(np.full((n, n), 1.0 / n), kind=ProjectorKind.UNIFORM_MEAN_FIELD)


def trivial_projector(n):
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidDimension(f'Trivial projector needs N >= 1, got {n!r}.')
    return Projector(np.eye(n), kind=ProjectorKind.TRIVIAL)


def gram_projector(b):
    """
    Projector B^t (B B^t)^-1 B onto the row space of a full-row-rank K x N matrix.

    Built from an orthonormal basis of the row space (pivoted QR of B^t) instead
    of an explicit inverse, then symmetrized before validation.
    """
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if b.ndim != 2 or b.size == 0:
        raise InvalidDimension(f'B must be a non-empty K x N matrix, got shape {b.shape}.')
    k, n = b.shape
    if k > n:
        raise SingularGram(f'B has {k} rows but only {n} columns, so B B^t is singular.')

    singular_values = linalg.svdvals(b)
    if singular_values[-1] == 0.0:
        raise SingularGram('B is rank deficient.')
    condition = (singular_values[0] / singular_values[-1]) ** 2
    if condition > GRAM_CONDITION_LIMIT:
        raise SingularGram(f'cond(B B^t) = {condition:.3e} exceeds {GRAM_CONDITION_LIMIT:g}.')

    q, _, _ = linalg.qr(b.T, mode='economic', pivoting=True)
    matrix = q @ q.T
    matrix = (matrix + matrix.T) / 2
    return Projector(matrix, kind=ProjectorKind.GRAM)


def projector_exponential(omega, a):
    """exp(a Omega) = I + (e^a - 1) Omega"""
    return np.eye(omega.dim) + np.expm1(a) * omega.matrix


def complement_project(omega, v):
    return omega.complement(v)
