"""Real matrix value types and the quantum-side reference formulas.

All matrices are small (m of a few to a few dozen) real arrays.  The value
types copy their input and freeze it, so instances can be shared freely
between worker threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, NoConvergence, NotPSD, NotSymmetric, ValidationError, ZeroTrace

SYM_RTOL = 1e-12
PSD_RTOL = 1e-10
JACOBI_MAX_SWEEPS = 100
JACOBI_RTOL = 1e-12
SIGN_TOL = 1e-12  # eigenvector entries below this count as zero for the sign rule


def _frozen(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


def _square(entries, name):
    a = np.asarray(entries, dtype=np.float64)
    if a.ndim == 1:
        m = math.isqrt(a.size)
        if m * m != a.size:
            raise ValidationError(f"{name}: {a.size} entries is not a square count", field=name)
        a = a.reshape(m, m)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise ValidationError(f"{name}: expected a non-empty square matrix, got shape {a.shape}", field=name)
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name}: entries must be finite", field=name)
    return a


def _symmetrized(a, name):
    scale = max(float(np.max(np.abs(a))), np.finfo(float).tiny)
    if np.max(np.abs(a - a.T)) > SYM_RTOL * scale:
        raise NotSymmetric(f"{name} is not symmetric", field=name)
    return 0.5 * (a + a.T)


def _check_psd(a, name):
    tr = float(np.trace(a))
    if tr <= 0.0:
        raise ZeroTrace(f"{name} must have positive trace, got {tr!r}", field=name)
    lam_min = float(np.linalg.eigvalsh(a)[0])
    if lam_min < -PSD_RTOL * tr:
        raise NotPSD(f"{name} has eigenvalue {lam_min:.3e} below -{PSD_RTOL:g}*Tr", field=name)


def matrix_to_json(a):
    a = np.asarray(a)
    return {"dim": int(a.shape[0]), "entries": [float(x) for x in a.ravel()]}


def matrix_from_json(obj, name="matrix"):
    """Accept ``{"dim", "entries"}`` (row-major) or a nested list."""
    if isinstance(obj, dict):
        try:
            dim = int(obj["dim"])
            entries = obj["entries"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{name}: expected keys 'dim' and 'entries'", field=name) from exc
        a = np.asarray(entries, dtype=np.float64)
        if a.size != dim * dim:
            raise ValidationError(f"{name}: dim={dim} needs {dim * dim} entries, got {a.size}", field=name)
        return a.reshape(dim, dim)
    try:
        return _square(obj, name)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"{name}: not a numeric matrix", field=name) from exc


class _Matrix:
    entries: np.ndarray

    @property
    def dim(self):
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def to_json(self):
        return matrix_to_json(self.entries)

    def __eq__(self, other):
        return type(self) is type(other) and np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash((type(self).__name__, self.entries.tobytes()))


class CovarianceOperator(_Matrix):
    """Symmetric PSD covariance B of the Wiener process (units of power)."""

    def __init__(self, entries, name="B"):
        a = _symmetrized(_square(entries, name), name)
        _check_psd(a, name)
        self.entries = _frozen(a)

    @classmethod
    def from_json(cls, obj, name="B"):
        return cls(matrix_from_json(obj, name), name=name)

    @property
    def trace(self):
        return float(np.trace(self.entries))

    @property
    def powers(self):
        """Per-component average powers b_jj."""
        return self.entries.diagonal().copy()

    def __repr__(self):
        return f"CovarianceOperator({self.entries.tolist()!r})"


class DensityMatrix(_Matrix):
    """Unit-trace symmetric PSD matrix."""

    def __init__(self, entries, name="rho"):
        a = _symmetrized(_square(entries, name), name)
        _check_psd(a, name)
        tr = float(np.trace(a))
        if abs(tr - 1.0) > 1e-12:
            raise ValidationError(f"{name} must have unit trace, got {tr!r}", field=name)
        self.entries = _frozen(a)

    @classmethod
    def from_json(cls, obj, name="rho"):
        return cls(matrix_from_json(obj, name), name=name)

    @property
    def diagonal(self):
        return self.entries.diagonal().copy()

    def __repr__(self):
        return f"DensityMatrix({self.entries.tolist()!r})"


class Projector(_Matrix):
    """Orthogonal projector: symmetric and idempotent."""

    def __init__(self, entries, name="P"):
        a = _symmetrized(_square(entries, name), name)
        if np.max(np.abs(a @ a - a)) > 1e-10:
            raise ValidationError(f"{name} is not idempotent", field=name)
        self.entries = _frozen(a)

    @classmethod
    def onto(cls, vectors):
        """Projector onto the span of the given vector (1-D) or matrix columns."""
        v = np.asarray(vectors, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        q, r = np.linalg.qr(v)
        keep = np.abs(np.diag(r)) > 1e-12 * max(1.0, float(np.max(np.abs(r))))
        q = q[:, keep]
        return cls(q @ q.T)

    @classmethod
    def basis(cls, j, dim):
        """The coordinate projector |e_j><e_j| (0-based j)."""
        a = np.zeros((dim, dim))
        a[j, j] = 1.0
        return cls(a)

    @classmethod
    def zero(cls, dim):
        return cls(np.zeros((dim, dim)))

    def __repr__(self):
        return f"Projector({self.entries.tolist()!r})"


def field_vector(values, name="phi"):
    """Validate and copy a real field vector (components in sqrt(energy))."""
    v = np.array(values, dtype=np.float64, copy=True).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"{name}: components must be finite", field=name)
    return v


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int = 0

    def reconstruct(self):
        q = self.eigenvectors
        return (q * self.eigenvalues) @ q.T


def _fix_signs(q):
    for k in range(q.shape[1]):
        nz = np.flatnonzero(np.abs(q[:, k]) > SIGN_TOL)
        if nz.size and q[nz[0], k] < 0:
            q[:, k] = -q[:, k]
    return q


def spectral_decompose(L):
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Eigenvalues come back ascending; each eigenvector has its first nonzero
    component positive.
    """
    a = _square(L, "L")
    scale = float(np.max(np.abs(a)))
    if np.max(np.abs(a - a.T)) > SYM_RTOL * max(scale, np.finfo(float).tiny):
        raise NotSymmetric("L is not symmetric", field="L")
    # Work on L / max|L| so squared entries neither underflow nor overflow.
    norm = scale if scale > 0 else 1.0
    a = 0.5 * (a + a.T) / norm
    m = a.shape[0]
    v = np.eye(m)
    target = JACOBI_RTOL * np.linalg.norm(a)
    sweeps = 0
    while True:
        off = math.sqrt(2.0 * float(np.sum(np.triu(a, 1) ** 2)))
        if off <= target:
            break
        if sweeps >= JACOBI_MAX_SWEEPS:
            raise NoConvergence(f"Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps")
        sweeps += 1
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(apq) < 1e-30 * abs(diff):
                    a[p, q] = a[q, p] = 0.0
                    continue
                theta = diff / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.hypot(t, 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    w = np.diag(a) * norm
    order = np.argsort(w, kind="stable")
    return SpectralDecomposition(_frozen(w[order]), _frozen(_fix_signs(v[:, order])), sweeps)


def density_from_covariance(B):
    """rho = B / Tr B."""
    b = np.asarray(B, dtype=np.float64)
    tr = float(np.trace(b))
    if not tr > 0.0:
        raise ZeroTrace(f"Tr B must be positive, got {tr!r}", field="B")
    rho = b / tr
    # Renormalise the trace so that it is 1 up to a single rounding.
    rho = rho / float(np.trace(rho))
    return DensityMatrix(rho)


def born_probability(rho, C):
    """Tr(rho C), clamped to [0, 1]."""
    r = np.asarray(rho, dtype=np.float64)
    c = np.asarray(C, dtype=np.float64)
    if r.shape != c.shape:
        raise DimMismatch(f"rho has shape {r.shape} but projector has {c.shape}")
    p = float(np.sum(r * c.T))
    return min(1.0, max(0.0, p))


def cholesky(B):
    """Lower-triangular A with A A^T = B for a PSD B.

    Zero pivots (rank deficiency) give zero columns instead of failing.
    """
    b = np.asarray(B, dtype=np.float64)
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise DimMismatch(f"expected a square matrix, got shape {b.shape}")
    m = b.shape[0]
    tr = float(np.trace(b))
    tol_psd = PSD_RTOL * max(tr, 0.0)
    tol_zero = 1e-14 * m * max(tr, 0.0)
    a = np.zeros((m, m))
    for j in range(m):
        d = b[j, j] - float(a[j, :j] @ a[j, :j])
        if d < -tol_psd:
            raise NotPSD(f"pivot {j} is {d:.3e}; matrix is not positive semidefinite", field="B")
        if d <= tol_zero:
            continue
        a[j, j] = math.sqrt(d)
        a[j + 1:, j] = (b[j + 1:, j] - a[j + 1:, :j] @ a[j, :j]) / a[j, j]
    return a
