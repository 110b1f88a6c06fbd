"""
Memristor network dynamics written as a projective embedding.

    dx/dt = Omega (beta^-1 (I - chi Omega X)^-1 Omega S - alpha x) - alpha (I - Omega) x

For the uniform mean-field projector the mean obeys the single-device law
dx/dt = <S> / (beta (1 - chi x)) - alpha x.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionMismatch, NumericError, PreconditionError
from .targets import memristor_mean_field

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MemristorNetwork:
    omega: object
    chi: float
    source: np.ndarray
    alpha: float = 1.0
    beta: float = 1.0
    target: object = field(init=False, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.chi <= 1.0:
            raise PreconditionError(f'chi must lie in [0, 1], got {self.chi!r}.')
        if self.alpha <= 0 or self.beta <= 0:
            raise PreconditionError('alpha and beta must be positive.')
        source = np.array(np.broadcast_to(np.asarray(self.source, dtype=float), (self.omega.dim,)))
        source.setflags(write=False)
        object.__setattr__(self, 'source', source)
        object.__setattr__(self, 'target', memristor_mean_field(self.chi, float(np.mean(source)), self.alpha, self.beta))

    def __str__(self):
        return f'memristor network (chi={self.chi:g}, N={self.n}, {self.omega.kind})'

    @property
    def m(self):
        return 1

    @property
    def n(self):
        return self.omega.dim

    @property
    def domain(self):
        return self.target.domain

    def clip_to_domain(self, columns):
        return self.target.clip_to_domain(columns)

    def rhs_array(self, columns):
        columns = np.asarray(columns, dtype=float)
        if columns.shape != (1, self.n):
            raise DimensionMismatch(f'State is {columns.shape}, network is {(1, self.n)}.')
        x = columns[0]
        omega = self.omega.matrix
        resistance = np.eye(self.n) - self.chi * (omega * x[None, :])
        try:
            current = np.linalg.solve(resistance, omega @ self.source)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f'I - chi Omega X is singular: {exc}') from exc
        drive = omega @ (current / self.beta - self.alpha * x)
        decay = -self.alpha * (x - omega @ x)
        return (drive + decay)[None, :]

    def rhs_flat(self, vector):
        return self.rhs_array(np.asarray(vector, dtype=float).reshape(1, self.n)).reshape(-1)


def stationary_point(chi, s, alpha=1.0, beta=1.0):
    """Root in [0, 1) of alpha beta x (1 - chi x) = s, the minimum of the device potential."""
    scale = alpha * beta
    if chi == 0.0:
        x_star = s / scale
    else:
        discriminant = scale * scale - 4.0 * scale * chi * s
        if discriminant < 0:
            raise PreconditionError(f'No stationary point for chi={chi}, s={s}.')
        x_star = (scale - math.sqrt(discriminant)) / (2.0 * scale * chi)
    logger.debug('Stationary point x*=%.10g for chi=%g, s=%g, alpha=%g, beta=%g', x_star, chi, s, alpha, beta)
    return x_star
