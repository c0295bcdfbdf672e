import numpy as np
import pytest
from scipy.linalg import expm

from quadgroup.hamiltonian import Orientation, QuadrupoleParams, SpinSystemParams
from quadgroup.powder import EnsembleMember
from quadgroup.propagation import (
    PulseShape,
    commutator_series_derivative,
    evolve,
    phase_kernel,
    propagator_derivative,
    step_propagator,
)
from quadgroup.spinops import angular_momentum_operators, three_quantum_target, thermal_state

from conftest import random_hermitian

OPS = angular_momentum_operators(1.5)
IZ = thermal_state(1.5)
TARGET = three_quantum_target(1.5)


def test_zero_hamiltonian_gives_identity():
    st = step_propagator(np.zeros((4, 4)), 1e-7)
    assert np.allclose(st.propagator, np.eye(4), atol=1e-15)


def test_diagonal_hamiltonian():
    w = 2 * np.pi * 5e4
    st = step_propagator(w * OPS.iz, 1e-6)
    expected = np.diag(np.exp(-1j * w * OPS.m_values * 1e-6))
    assert np.abs(st.propagator - expected).max() <= 1e-14


def test_step_invariants(rng):
    for _ in range(50):
        h = random_hermitian(rng, scale=2 * np.pi * 1e6)
        dt = 1e-7
        st = step_propagator(h, dt)
        u, v = st.propagator, st.eigenvectors
        assert np.abs(u.conj().T @ u - np.eye(4)).max() <= 1e-12
        assert np.abs(v.conj().T @ v - np.eye(4)).max() <= 1e-12
        assert np.abs(v @ np.diag(np.exp(-1j * st.eigenvalues * dt)) @ v.conj().T - u).max() <= 1e-12
        assert abs(abs(np.linalg.det(u)) - 1) <= 1e-12
        assert np.abs(u - expm(-1j * h * dt)).max() <= 1e-12


def test_rejects_non_hermitian():
    with pytest.raises(ValueError):
        step_propagator(np.triu(np.ones((4, 4))), 1e-7)


def _member(cq=3.2e6, scale=1.0, orient=Orientation(0.7, 1.1, 2.3)):
    params = SpinSystemParams(QuadrupoleParams(cq, 0.2), 130.9e6, 0.0, 30e3)
    return EnsembleMember(orient, scale, params, 1.0)


def test_zero_pulse_keeps_diagonal_state():
    traj = evolve(PulseShape(1e-7, np.zeros((20, 2))), _member(), IZ, TARGET)
    for rho in traj.forward:
        assert np.abs(rho - IZ).max() <= 1e-14


def test_rabi_rotation_about_x():
    # H = w Ix for time T with w T = pi/2: Iz -> Iz cos - Iy sin = -Iy
    n, dt = 50, 1e-7
    w = (np.pi / 2) / (n * dt)
    pulse = PulseShape(dt, np.column_stack([np.full(n, w), np.zeros(n)]))
    traj = evolve(pulse, _member(cq=0.0), IZ, TARGET)
    final = traj.final_state
    assert np.abs(final - (-OPS.iy)).max() <= 1e-12
    assert abs(np.trace(OPS.iz @ final)) <= 1e-12
    assert np.trace(OPS.iy @ final).real == pytest.approx(-np.trace(IZ @ IZ).real, abs=1e-12)


def test_rf_scale_multiplies_controls():
    n, dt = 40, 1e-7
    w = (np.pi / 2) / (n * dt)
    pulse = PulseShape(dt, np.column_stack([np.zeros(n), np.full(n, w / 2)]))
    traj = evolve(pulse, _member(cq=0.0, scale=2.0), IZ, TARGET)
    # rotation by pi/2 about y: Iz -> Ix
    assert np.abs(traj.final_state - OPS.ix).max() <= 1e-12


def test_trace_hermiticity_and_overlap_constancy(rng):
    pulse = PulseShape(1e-7, rng.uniform(-1, 1, (60, 2)) * 2 * np.pi * 1e5)
    traj = evolve(pulse, _member(), IZ, TARGET)
    assert traj.forward[0] is not None and np.array_equal(traj.forward[0], IZ)
    assert np.array_equal(traj.backward[-1], TARGET.conj().T)
    overlaps = []
    for rho, lam in zip(traj.forward, traj.backward):
        assert abs(np.trace(rho) - np.trace(IZ)) <= 1e-12
        assert np.abs(rho - rho.conj().T).max() <= 1e-12
        overlaps.append(np.trace(lam @ rho))
    assert np.abs(np.array(overlaps) - overlaps[0]).max() <= 1e-10


def test_degenerate_spectrum_gives_plain_generator():
    st = step_propagator(3.0e5 * np.eye(4), 1e-7)
    d = propagator_derivative(st, OPS.ix, 1e-7)
    assert np.abs(d - (-1j * OPS.ix * 1e-7)).max() <= 1e-22


def test_phase_kernel_values():
    g = phase_kernel(np.array([np.pi, 0.0]), 1.0)
    assert abs(g[0, 1]) == pytest.approx(2 / np.pi, rel=1e-15)
    assert g[0, 0] == 1 and g[1, 1] == 1
    theta = 0.37
    direct = (np.exp(1j * theta) - 1) / (1j * theta)
    assert phase_kernel(np.array([theta, 0.0]), 1.0)[0, 1] == pytest.approx(direct, rel=1e-15)


def test_derivative_matches_finite_differences(rng):
    dt = 1e-7
    for _ in range(5):
        h0 = random_hermitian(rng, scale=2 * np.pi * 1e6)
        for hk in (OPS.ix, OPS.iy):
            st = step_propagator(h0, dt)
            exact = st.propagator @ propagator_derivative(st, hk, dt)
            errors = []
            for h in (1e2, 1e1, 1e0):
                fd = (expm(-1j * (h0 + h * hk) * dt) - expm(-1j * (h0 - h * hk) * dt)) / (2 * h)
                errors.append(np.abs(fd - exact).max() / np.abs(exact).max())
            assert min(errors) < 1e-7


def test_series_order_zero():
    rng = np.random.default_rng(2)
    h = random_hermitian(rng, scale=1e6)
    u = expm(-1j * h * 1e-7)
    assert np.allclose(commutator_series_derivative(h, OPS.ix, 1e-7, 0), -1j * 1e-7 * u @ OPS.ix, rtol=0, atol=1e-22)


def test_series_with_commuting_control():
    h = 2e5 * OPS.iz @ OPS.iz + 1e5 * OPS.iz
    base = commutator_series_derivative(h, OPS.iz, 1e-6, 0)
    for order in (1, 3, 6):
        assert np.array_equal(commutator_series_derivative(h, OPS.iz, 1e-6, order), base)


def test_series_converges_to_exact_derivative(rng):
    dt = 1e-9
    h = random_hermitian(rng, scale=2 * np.pi * 1e6)
    st = step_propagator(h, dt)
    exact = st.propagator @ propagator_derivative(st, OPS.ix, dt)
    series = commutator_series_derivative(h, OPS.ix, dt, 6)
    assert np.linalg.norm(series - exact) / np.linalg.norm(exact) < 1e-10


def test_pulse_shape_validation():
    with pytest.raises(ValueError):
        PulseShape(0.0, np.zeros((3, 2)))
    with pytest.raises(ValueError):
        PulseShape(1e-7, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        PulseShape(1e-7, np.full((3, 2), np.nan))
    p = PulseShape(1e-7, np.zeros((4, 2)))
    assert p.duration == pytest.approx(4e-7)
    assert np.allclose(p.midpoints(), [0.5e-7, 1.5e-7, 2.5e-7, 3.5e-7])
