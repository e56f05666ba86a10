import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import expm

from pcsft.errors import DimMismatch, NegativeTime, NotOrthonormal, ZeroField
from pcsft.linalg import Projector
from pcsft.modes import (ModeSystem, component_energy, decoherent_mixture, evolve, project_component,
                         relative_energies)


def sym(m, seed):
    a = np.random.default_rng(seed).normal(size=(m, m))
    return 0.5 * (a + a.T)


def orthonormal(m, seed):
    q, _ = np.linalg.qr(np.random.default_rng(seed).normal(size=(m, m)))
    return q


nonzero_fields = st.integers(1, 8).flatmap(
    lambda m: arrays(np.float64, m, elements=st.floats(-100, 100))).filter(lambda v: v @ v > 1e-6)


def test_plain_example():
    f = evolve(ModeSystem(np.diag([1.0, 2.0])), [1.0, 1.0], 1.0)
    assert np.allclose(f.coefficients, [math.e, math.e ** 2], rtol=1e-14)


@pytest.mark.parametrize("mode", ["plain", "unitary"])
def test_identity_at_zero(mode):
    phi0 = np.array([0.3, -1.2, 2.0])
    f = evolve(ModeSystem(sym(3, 1), mode), phi0, 0.0)
    if mode == "plain":
        assert np.array_equal(f.field, phi0)
    else:
        assert np.array_equal(f.field, np.stack([phi0, np.zeros(3)], 1).reshape(-1))


def test_plain_matches_matrix_exponential():
    L = sym(5, 2) * 0.3
    phi0 = np.random.default_rng(3).normal(size=5)
    f = evolve(ModeSystem(L), phi0, 2.5)
    assert np.allclose(f.field, expm(L * 2.5) @ phi0, rtol=1e-10, atol=1e-12)


def test_unitary_matches_complex_exponential():
    L = sym(4, 4)
    rng = np.random.default_rng(5)
    psi0 = rng.normal(size=4) + 1j * rng.normal(size=4)
    enc = np.stack([psi0.real, psi0.imag], 1).reshape(-1)
    f = evolve(ModeSystem(L, "unitary"), enc, 1.7)
    ref = expm(-1j * L * 1.7) @ psi0
    got = f.field.reshape(4, 2)
    assert np.allclose(got[:, 0] + 1j * got[:, 1], ref, atol=1e-12)


@given(st.integers(1, 6), st.integers(0, 2**31), st.floats(0, 100))
def test_unitary_norm_and_amplitudes(m, seed, t):
    sys_ = ModeSystem(sym(m, seed), "unitary")
    phi0 = np.random.default_rng(seed + 1).normal(size=2 * m)
    f = evolve(sys_, phi0, t)
    assert abs(np.linalg.norm(f.field) - np.linalg.norm(phi0)) <= 1e-10 * np.linalg.norm(phi0)
    assert np.allclose(f.amplitudes, np.hypot(f.initial[:, 0], f.initial[:, 1]), rtol=1e-10, atol=1e-14)


@given(st.integers(1, 6), st.integers(0, 2**31), st.floats(0, 5))
def test_plain_mode_persistence(m, seed, t):
    sys_ = ModeSystem(sym(m, seed))
    f = evolve(sys_, np.random.default_rng(seed).normal(size=m), t)
    assert np.all((f.initial == 0) | (f.coefficients != 0))
    assert np.allclose(f.coefficients, np.exp(sys_.frequencies * t) * f.initial, rtol=1e-12, atol=0)
    # field reconstructs from coefficients
    assert np.allclose(sys_.modes @ f.coefficients, f.field, rtol=1e-10, atol=1e-300)


def test_evolve_errors():
    s = ModeSystem(np.eye(2))
    with pytest.raises(NegativeTime):
        evolve(s, [1.0, 0.0], -1.0)
    with pytest.raises(DimMismatch):
        evolve(s, [1.0, 0.0, 0.0], 1.0)


def test_mode_system_json():
    s = ModeSystem([[1.0, 0.5], [0.5, 2.0]], "unitary")
    t = ModeSystem.from_json(s.to_json())
    assert t.mode == "unitary" and np.array_equal(t.generator, s.generator)


def test_project_component_examples():
    assert np.array_equal(project_component([3.0, 4.0], Projector.basis(0, 2)), [3.0, 0.0])
    p = Projector.onto(np.array([[1.0], [1.0]]))
    assert np.allclose(project_component([1.0, 1.0], p), [1.0, 1.0])
    assert np.array_equal(project_component([1.0, 1.0], Projector.zero(2)), [0.0, 0.0])
    with pytest.raises(DimMismatch):
        project_component([1.0, 1.0, 1.0], Projector.zero(2))


def test_component_energy_examples():
    assert component_energy([3.0, 0.0]) == 9.0
    assert component_energy([0.0, 0.0]) == 0.0
    assert component_energy(project_component([1.0, math.sqrt(3)], Projector.basis(1, 2))) == pytest.approx(3.0)


def test_relative_energies_examples():
    assert np.allclose(relative_energies([1.0, 1.0]), [0.5, 0.5])
    assert np.allclose(relative_energies([1.0, math.sqrt(3)]), [0.25, 0.75])
    h = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2)
    assert np.allclose(relative_energies([1.0, 0.0], h), [0.5, 0.5])
    with pytest.raises(ZeroField):
        relative_energies([0.0, 0.0])
    with pytest.raises(NotOrthonormal):
        relative_energies([1.0, 0.0], [[1.0, 1.0], [0.0, 1.0]])


@given(nonzero_fields, st.integers(0, 2**31), st.floats(1e-3, 1e3) | st.floats(-1e3, -1e-3))
def test_parseval_and_scale_invariance(phi, seed, c):
    u = orthonormal(phi.size, seed)
    shares = relative_energies(phi, u)
    energies = [component_energy(project_component(phi, Projector.onto(u[:, [k]]))) for k in range(phi.size)]
    assert abs(sum(energies) - phi @ phi) <= 1e-10 * (phi @ phi)
    assert abs(shares.sum() - 1) <= 1e-12
    assert np.allclose(relative_energies(c * phi, u), shares, atol=1e-12)


def test_decoherent_mixture_examples():
    assert np.allclose(np.asarray(decoherent_mixture([1.0, math.sqrt(3)])), np.diag([0.25, 0.75]))
    assert np.array_equal(np.asarray(decoherent_mixture([1.0, 0.0])), np.diag([1.0, 0.0]))


@given(nonzero_fields, st.integers(0, 2**31))
def test_decoherent_mixture_properties(phi, seed):
    u = orthonormal(phi.size, seed)
    rho = np.asarray(decoherent_mixture(phi, u))
    assert abs(np.trace(rho) - 1) <= 1e-12
    assert np.allclose(np.diag(u.T @ rho @ u), relative_energies(phi, u), atol=1e-12)
    assert np.array_equal(np.diag(np.asarray(decoherent_mixture(phi))), relative_energies(phi))
