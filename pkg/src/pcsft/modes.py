"""Linear wave dynamics by eigen-expansion, component extraction and energies.

Two evolution modes are supported for a real symmetric generator ``L`` with
eigenpairs ``(omega_k, phi_k)``:

``plain``
    ``dphi/dt = L phi``; each coefficient grows as ``exp(omega_k t) c_k0``.
``unitary``
    the ``gamma = i`` case.  The field is complex, stored as a real vector
    of length ``2m`` with component pairs ``(2j, 2j + 1) = (Re, Im)`` of
    amplitude ``j``.  Each mode's complex coefficient turns by the planar
    rotation ``exp(-i omega_k t)``, so ``|c_k(t)| = |c_k0|``.  A length-``m``
    real initial field is promoted to this encoding with zero imaginary part.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimMismatch, NegativeTime, NotOrthonormal, ValidationError, ZeroField
from .linalg import DensityMatrix, SpectralDecomposition, field_vector, matrix_from_json, spectral_decompose

MODES = ("plain", "unitary")


@dataclass(frozen=True, eq=False)
class ModeSystem:
    generator: np.ndarray
    mode: str = "plain"
    decomposition: SpectralDecomposition = field(init=False, repr=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}", field="mode")
        L = matrix_from_json(self.generator, "generator")
        dec = spectral_decompose(L)
        L = 0.5 * (L + L.T)
        L.setflags(write=False)
        object.__setattr__(self, "generator", L)
        object.__setattr__(self, "decomposition", dec)

    @property
    def dim(self):
        return self.generator.shape[0]

    @property
    def frequencies(self):
        return self.decomposition.eigenvalues

    @property
    def modes(self):
        return self.decomposition.eigenvectors

    def to_json(self):
        return {"generator": self.generator.tolist(), "mode": self.mode}

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        try:
            return cls(obj["generator"], obj.get("mode", "plain"))
        except KeyError as exc:
            raise ValidationError("ModeSystem JSON needs a 'generator'", field="generator") from exc


@dataclass(frozen=True, eq=False)
class EvolvedField:
    """State at time ``t``.

    ``coefficients`` has shape ``(m,)`` in plain mode and ``(m, 2)`` holding
    ``(Re c_k, Im c_k)`` in unitary mode; ``initial`` is ``c_k0`` in the same
    layout.
    """

    t: float
    coefficients: np.ndarray
    initial: np.ndarray
    field: np.ndarray
    mode: str

    @property
    def amplitudes(self):
        c = self.coefficients
        return np.abs(c) if c.ndim == 1 else np.hypot(c[:, 0], c[:, 1])

    @property
    def phases(self):
        """Phase angle of each mode (unitary mode only)."""
        if self.coefficients.ndim == 1:
            return np.where(self.coefficients < 0, np.pi, 0.0)
        return np.arctan2(self.coefficients[:, 1], self.coefficients[:, 0])


def _complex_pairs(phi, m):
    if phi.size == m:
        return np.stack([phi, np.zeros(m)], axis=1)
    if phi.size == 2 * m:
        return phi.reshape(m, 2)
    raise DimMismatch(f"field has {phi.size} components; generator needs {m} or {2 * m}")


def evolve(system, phi0, t):
    """Evolve ``phi0`` for time ``t`` under ``system``."""
    t = float(t)
    if not t >= 0.0:
        raise NegativeTime(f"t must be >= 0, got {t!r}", field="t")
    phi0 = field_vector(phi0, "phi0")
    q = system.modes
    w = system.frequencies
    m = system.dim
    if system.mode == "plain":
        if phi0.size != m:
            raise DimMismatch(f"field has {phi0.size} components; generator needs {m}")
        c0 = q.T @ phi0
        c = np.exp(w * t) * c0
        out = phi0.copy() if t == 0.0 else q @ c
        return EvolvedField(t, c, c0, out, system.mode)
    pairs = _complex_pairs(phi0, m)
    c0 = q.T @ pairs
    cos = np.cos(w * t)[:, None]
    sin = np.sin(w * t)[:, None]
    # (a + ib) * exp(-i w t) = (a cos + b sin) + i (b cos - a sin)
    c = np.concatenate([cos * c0[:, :1] + sin * c0[:, 1:], cos * c0[:, 1:] - sin * c0[:, :1]], axis=1)
    out = pairs.reshape(-1).copy() if t == 0.0 else (q @ c).reshape(-1)
    return EvolvedField(t, c, c0, out, system.mode)


def project_component(phi, P):
    """The unnormalised component ``P phi``."""
    phi = field_vector(phi)
    p = np.asarray(P, dtype=np.float64)
    if p.shape != (phi.size, phi.size):
        raise DimMismatch(f"projector shape {p.shape} does not match field of size {phi.size}")
    return p @ phi


def component_energy(Phi):
    Phi = np.asarray(Phi, dtype=np.float64)
    return float(Phi @ Phi)


def _check_basis(basis, n):
    u = np.asarray(basis, dtype=np.float64)
    if u.shape != (n, n):
        raise DimMismatch(f"basis shape {u.shape} does not match field of size {n}")
    if np.max(np.abs(u.T @ u - np.eye(n))) > 1e-10:
        raise NotOrthonormal("basis columns are not orthonormal", field="basis")
    return u


def relative_energies(phi, basis=None):
    """Energy shares ``<phi, q_k>^2 / |phi|^2`` along the basis columns."""
    phi = field_vector(phi)
    total = float(phi @ phi)
    if not total > 0.0:
        raise ZeroField("field has zero energy", field="phi")
    u = np.eye(phi.size) if basis is None else _check_basis(basis, phi.size)
    e = (u.T @ phi) ** 2
    return e / e.sum()


def decoherent_mixture(phi, basis=None):
    """The mixture ``sum_k (E_k / E_phi) |q_k><q_k|``."""
    phi = field_vector(phi)
    u = np.eye(phi.size) if basis is None else _check_basis(basis, phi.size)
    w = relative_energies(phi, u)
    rho = (u * w) @ u.T
    rho = 0.5 * (rho + rho.T)
    return DensityMatrix(rho)
