"""
Plain-text artifacts: projector matrices, trajectory CSVs and eigenvalue CSVs.
"""
import functools
import logging
import subprocess
from pathlib import Path

import numpy as np

from .choices import ProjectorKind
from .exceptions import DimensionMismatch, IdempotenceError, PreconditionError
from .integrators import complement_norms
from .projectors import Projector

logger = logging.getLogger(__name__)

CSV_FORMAT = '%.12g'
MATRIX_FORMAT = '%.17g'


@functools.lru_cache(maxsize=1)
def git_describe():
    try:
        result = subprocess.run(
            ['git', 'describe', '--always', '--dirty'],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=10,
            check=False,
        )
    except (OSError, subprocess.SubprocessError):
        return 'unknown'
    description = result.stdout.strip()
    return description if result.returncode == 0 and description else 'unknown'


def provenance_line(seed, n, alpha, dt, map_kind, ordering):
    return (
        f'# seed={seed} N={n} alpha={alpha} dt={dt} '
        f'map={map_kind} ordering={ordering} git={git_describe()}'
    )


def trajectory_header(m, n=None):
    header = ['t']
    header += [f'xtilde_{i}' for i in range(1, m + 1)]
    header += [f'comp_norm_{i}' for i in range(1, m + 1)]
    if n is not None:
        header += [f'X_{i}_{k}' for i in range(1, m + 1) for k in range(1, n + 1)]
    return header


def write_table(path, data, header, provenance):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, data, fmt=CSV_FORMAT, delimiter=',', header=f'{provenance}\n{",".join(header)}', comments='')
    logger.info('Wrote %s', path)
    return path


def write_trajectory_csv(path, trajectory, omega, provenance, full_state=False):
    records, m, n = trajectory.states.shape
    columns = [trajectory.times[:, None], trajectory.projected, complement_norms(trajectory, omega)]
    if full_state:
        columns.append(trajectory.states.reshape(records, m * n))
    header = trajectory_header(m, n if full_state else None)
    return write_table(path, np.hstack(columns), header, provenance)


def write_target_csv(path, trajectory, provenance):
    """Reference target runs use the trajectory header with zero complement norms."""
    states = trajectory.states.reshape(len(trajectory), -1)
    m = states.shape[1]
    data = np.hstack([trajectory.times[:, None], states, np.zeros_like(states)])
    return write_table(path, data, trajectory_header(m), provenance)


def write_eigenvalues_csv(path, report, provenance):
    data = np.column_stack([report.eigenvalues.real, report.eigenvalues.imag])
    return write_table(path, data, ['re', 'im'], provenance)


def write_projector(path, omega):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, omega.matrix, fmt=MATRIX_FORMAT, header=f'{omega.dim} {omega.rank} {omega.kind}', comments='')
    return path


def read_projector(path):
    """Read the "N K kind" header followed by N rows of N entries."""
    with open(path, encoding='utf-8') as handle:
        fields = handle.readline().split()
    if len(fields) != 3:
        raise PreconditionError(f'{path}: first line must be "N K kind".')
    try:
        n, k, kind = int(fields[0]), int(fields[1]), fields[2]
    except ValueError:
        raise PreconditionError(f'{path}: N and K must be integers.') from None
    if kind not in ProjectorKind.values:
        raise PreconditionError(f'{path}: unknown projector kind {kind!r}.')

    matrix = np.loadtxt(path, skiprows=1, ndmin=2)
    if matrix.shape != (n, n):
        raise DimensionMismatch(f'{path}: header says N={n}, matrix is {matrix.shape}.')
    omega = Projector(matrix, kind=kind)
    if omega.rank != k:
        raise IdempotenceError(f'{path}: header says rank {k}, spectrum gives {omega.rank}.')
    return omega
