"""
Fixed-step time integration of extended and target systems.

Any dynamics object exposing ``m``, ``n``, ``omega``, ``rhs_array`` and
``clip_to_domain`` can be integrated: PedsSystem and MemristorNetwork both do.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .choices import IntegrationMethod
from .embedding import ExtendedState
from .exceptions import DimensionMismatch, DivergenceError, PreconditionError

logger = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e12


@dataclass(frozen=True)
class IntegrationConfig:
    dt: float = 0.01
    steps: int = 1000
    method: str = IntegrationMethod.RK4
    record_stride: int = 1

    def __post_init__(self):
        if not np.isfinite(self.dt) or self.dt <= 0:
            raise PreconditionError(f'dt must be positive, got {self.dt!r}.')
        if int(self.steps) != self.steps or self.steps < 1:
            raise PreconditionError(f'steps must be a positive integer, got {self.steps!r}.')
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise PreconditionError(f'record_stride must be a positive integer, got {self.record_stride!r}.')
        if self.method not in IntegrationMethod.values:
            raise PreconditionError(f'Unknown integration method {self.method!r}.')

    @property
    def duration(self):
        return self.dt * self.steps


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Recorded times, full states (records x m x N) and projected observables (records x m)."""
    times: np.ndarray
    states: np.ndarray
    projected: np.ndarray

    def __len__(self):
        return len(self.times)

    def state(self, k):
        return ExtendedState(self.states[k])

    @property
    def final_state(self):
        return self.state(-1)

    @property
    def final_projected(self):
        return self.projected[-1]


@dataclass(frozen=True, eq=False)
class TargetTrajectory:
    times: np.ndarray
    states: np.ndarray

    def __len__(self):
        return len(self.times)

    @property
    def final_state(self):
        return self.states[-1]


def _step(fun, y, dt, method):
    if method == IntegrationMethod.EULER:
        return y + dt * fun(y)
    k1 = fun(y)
    k2 = fun(y + 0.5 * dt * k1)
    k3 = fun(y + 0.5 * dt * k2)
    k4 = fun(y + dt * k3)
    return y + dt * (k1 + 2.0 * (k2 + k3) + k4) / 6.0


def _evolve(fun, y, cfg, clip, label):
    """Shared stepping loop; returns recorded times and states."""
    times = [0.0]
    records = [y.copy()]
    clipped_once = False
    with np.errstate(over='ignore', invalid='ignore'):
        for step in range(1, cfg.steps + 1):
            try:
                y = _step(fun, y, cfg.dt, cfg.method)
            except (ValueError, FloatingPointError) as exc:
                raise DivergenceError(f'{label} diverged at step {step}: {exc}', step=step) from exc
            if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > DIVERGENCE_LIMIT:
                raise DivergenceError(step=step)

            y, clipped = clip(y)
            if clipped and not clipped_once:
                logger.warning('%s left its domain hints at step %d; state clipped', label, step)
                clipped_once = True

            if step % cfg.record_stride == 0 or step == cfg.steps:
                times.append(step * cfg.dt)
                records.append(y.copy())
    return np.array(times), np.array(records)


def integrate(system, x0, cfg):
    columns = np.array(x0.columns if isinstance(x0, ExtendedState) else x0, dtype=float)
    if columns.shape != (system.m, system.n):
        raise DimensionMismatch(f'Initial state is {columns.shape}, system is {(system.m, system.n)}.')
    times, states = _evolve(system.rhs_array, columns, cfg, system.clip_to_domain, str(system))
    return Trajectory(times=times, states=states, projected=system.omega.observable(states))


def integrate_target(target, x0, cfg):
    x = np.array(x0, dtype=float).reshape(-1)
    if x.shape != (target.m,):
        raise DimensionMismatch(f'Initial point has length {x.size}, target has m={target.m}.')
    times, states = _evolve(target.evaluate, x, cfg, target.clip_to_domain, str(target))
    return TargetTrajectory(times=times, states=states)


def integrate_ensemble(jobs, cfg, max_workers=None, return_exceptions=False):
    """
    Integrate (system, x0) pairs concurrently; results keep the input order.

    With ``return_exceptions`` a failed member yields its exception in place
    of a trajectory, so callers can report every diverged member.
    """
    jobs = list(jobs)
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        futures = [executor.submit(integrate, system, x0, cfg) for system, x0 in jobs]
        if return_exceptions:
            return [future.exception() or future.result() for future in futures]
        return [future.result() for future in futures]


def complement_norms(trajectory, omega):
    """||(I - Omega) X_i(t)||_2 per record and variable."""
    states = trajectory.states
    if states.shape[-1] != omega.dim:
        raise DimensionMismatch(f'Trajectory has N={states.shape[-1]}, projector has N={omega.dim}.')
    complement = states - states @ omega.matrix.T
    return np.linalg.norm(complement, axis=-1)


def fit_decay_rate(times, norms, floor=1e-300):
    """Exponential rate r of norms ~ C exp(-r t) by least squares on the logarithm."""
    times = np.asarray(times, dtype=float)
    norms = np.asarray(norms, dtype=float)
    mask = norms > floor
    if np.count_nonzero(mask) < 2:
        return float('nan')
    slope, _ = np.polyfit(times[mask], np.log(norms[mask]), 1)
    return float(-slope)
