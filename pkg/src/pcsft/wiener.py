"""Discretised m-dimensional Wiener paths with covariance min(s1, s2) B.

Increments are exact Gaussian samples ``sqrt(dt) A z`` with ``A A^T = B``.
Step ``i`` (1-based) consumes normals ``(i-1)*m .. i*m - 1`` of its stream,
so any stretch of a path can be regenerated without replaying the rest.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveStep
from .linalg import CovarianceOperator, cholesky
from .rng import RngStream

DEFAULT_CHUNK = 1 << 16


def n_steps(duration, dt):
    """Number of whole steps of size ``dt`` that fit in ``duration``."""
    return int(math.floor(duration / dt * (1.0 + 1e-12)))


def _factor(chol_factor):
    a = np.asarray(chol_factor, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square factor, got shape {a.shape}")
    return a


def sample_increments(chol_factor, dt, rng, count, start_step=0):
    """Increments for steps ``start_step+1 .. start_step+count``, shape (count, m)."""
    if not dt > 0:
        raise NonPositiveStep(f"dt must be positive, got {dt!r}", field="dt")
    a = _factor(chol_factor)
    m = a.shape[0]
    z = rng.normals(count * m, start=start_step * m).reshape(count, m)
    return math.sqrt(dt) * (z @ a.T)


def sample_increment(chol_factor, dt, rng, step=0):
    """One increment ``sqrt(dt) A z`` (covariance ``dt B``) for the given step index."""
    return sample_increments(chol_factor, dt, rng, 1, start_step=step)[0]


@dataclass(frozen=True, eq=False)
class FieldTrajectory:
    """A lazily generated path ``phi(s_i)``, ``s_i = i dt``, starting at zero.

    Iterating yields the samples one by one; :meth:`chunks` yields blocks of
    ``(times, samples)`` and never holds more than one block in memory.
    """

    factor: np.ndarray
    dt: float
    steps: int
    rng: RngStream

    @property
    def dim(self):
        return self.factor.shape[0]

    def __len__(self):
        return self.steps + 1

    def increment_chunks(self, size=DEFAULT_CHUNK):
        """Yield ``(first_step, increments)`` blocks covering steps 1..steps."""
        done = 0
        while done < self.steps:
            n = min(size, self.steps - done)
            yield done + 1, sample_increments(self.factor, self.dt, self.rng, n, start_step=done)
            done += n

    def chunks(self, size=DEFAULT_CHUNK):
        pos = np.zeros(self.dim)
        yield np.zeros(1), pos[None, :].copy()
        for first, inc in self.increment_chunks(size):
            path = np.cumsum(inc, axis=0) + pos
            pos = path[-1].copy()
            yield self.dt * np.arange(first, first + len(inc)), path

    def __iter__(self):
        for _, block in self.chunks():
            yield from block

    def samples(self):
        """The whole path as an array of shape ``(steps + 1, m)``."""
        return np.concatenate([b for _, b in self.chunks()], axis=0)

    def times(self):
        return self.dt * np.arange(self.steps + 1)

    def to_csv(self, path):
        """Debug dump with header ``s,phi_1,...,phi_m``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s"] + [f"phi_{j + 1}" for j in range(self.dim)])
            for t, block in self.chunks():
                for s, row in zip(t, block):
                    w.writerow([repr(float(s))] + [repr(float(x)) for x in row])


def generate_path(B, dt, duration, rng):
    """Trajectory of the Wiener process with covariance ``B`` on ``[0, duration]``."""
    if not dt > 0:
        raise NonPositiveStep(f"dt must be positive, got {dt!r}", field="dt")
    if not duration >= dt:
        raise NonPositiveStep(f"duration {duration!r} is shorter than dt {dt!r}", field="T")
    if not isinstance(B, CovarianceOperator):
        B = CovarianceOperator(B)
    return FieldTrajectory(cholesky(B), float(dt), n_steps(duration, dt), rng)
