import numpy as np
import pytest
from scipy.linalg import expm
from scipy.optimize import minimize as sp_minimize

from quadgroup.hamiltonian import Orientation, QuadrupoleParams, SpinSystemParams
from quadgroup.objective import (
    EnsembleProblem,
    Normalization,
    ensemble_cost_gradient,
    fidelity,
    member_cost_gradient,
)
from quadgroup.powder import EnsembleMember, PowderSpec, build_ensemble
from quadgroup.propagation import PulseShape
from quadgroup.spinops import three_quantum_target, thermal_state

from conftest import random_unitary
from gradcheck import fd_relative_errors

IZ = thermal_state(1.5)
TARGET = three_quantum_target(1.5)
DT = 1e-7


def _pulse(rng, n, scale=2 * np.pi * 300e3):
    return PulseShape(DT, scale * rng.uniform(-1, 1, (n, 2)))


def _witness():
    # pi/2 rotation inside the {+3/2, -3/2} pair turns 3/2 sigma_z into 3/2 sigma_x
    u = np.eye(4, dtype=complex)
    c = s = 1 / np.sqrt(2)
    u[np.ix_([0, 3], [0, 3])] = [[c, -s], [s, c]]
    return u


def test_normalization_from_spectrum():
    assert Normalization.for_initial(IZ).n_factor == pytest.approx(9 / 4, rel=1e-15)
    assert Normalization().n_factor == 9 / 4
    with pytest.raises(ValueError):
        Normalization(0.0)


def test_fidelity_of_thermal_state_is_zero():
    assert fidelity(IZ, TARGET) == 0.0


def test_witness_reaches_unit_fidelity():
    u = _witness()
    rho = u @ IZ @ u.conj().T
    assert abs(rho[0, 3]) == pytest.approx(1.5, rel=1e-15)
    assert fidelity(rho, TARGET) > 1 - 1e-10


def test_corner_entry_matches_trace_form(rng):
    for _ in range(20):
        u = random_unitary(rng)
        rho = u @ IZ @ u.conj().T
        assert fidelity(rho, TARGET) == pytest.approx(abs(rho[0, 3]) ** 2 / (9 / 4), rel=1e-12)


def test_random_unitaries_bounded_and_local_maximum_reaches_bound(rng):
    best, best_u = 0.0, None
    for _ in range(2000):
        u = random_unitary(rng)
        f = fidelity(u @ IZ @ u.conj().T, TARGET)
        assert f <= 1 + 1e-10
        if f > best:
            best, best_u = f, u

    # brute-force oracle for the normalisation: climb |rho_14| from the best sample
    def neg(params):
        h = np.zeros((4, 4), dtype=complex)
        iu = np.triu_indices(4, 1)
        h[iu] = params[:6] + 1j * params[6:12]
        h = h + h.conj().T + np.diag(params[12:])
        v = expm(-1j * h) @ best_u
        return -abs((v @ IZ @ v.conj().T)[0, 3])

    res = sp_minimize(neg, np.zeros(16), method="BFGS", options={"gtol": 1e-12})
    assert -res.fun == pytest.approx(1.5, abs=1e-7)
    assert -res.fun <= 1.5 + 1e-12


def test_fidelity_shape_mismatch():
    with pytest.raises(ValueError):
        fidelity(np.eye(3), TARGET)


def test_zero_pulse_is_stationary(member):
    rep = member_cost_gradient(PulseShape(DT, np.zeros((16, 2))), member)
    assert rep.fidelity == 0.0
    assert np.abs(rep.gradient).max() == 0.0


def test_member_gradient_matches_finite_differences(member):
    rng = np.random.default_rng(7)
    pulse = _pulse(rng, 24)
    rep = member_cost_gradient(pulse, member)
    assert 0 < rep.fidelity < 1

    def cost(values):
        return member_cost_gradient(PulseShape(DT, values), member).cost

    errors = fd_relative_errors(cost, pulse.values, rep.gradient)
    assert max(errors.values()) < 1e-6


def test_fast_path_matches_reference(member):
    rng = np.random.default_rng(3)
    params = member.params
    ens = [
        EnsembleMember(Orientation(*rng.uniform(0, np.pi, 3)), s, params, w)
        for s, w in ((0.95, 0.2), (1.0, 0.5), (1.05, 0.3))
    ]
    pulse = _pulse(rng, 40)
    fast = EnsembleProblem(ens, 40, DT).evaluate(pulse.values)
    slow_cost = 0.0
    slow_grad = np.zeros((40, 2))
    for m in ens:
        rep = member_cost_gradient(pulse, m)
        slow_cost += m.weight * rep.cost
        slow_grad += m.weight * rep.gradient
    assert fast.cost == pytest.approx(slow_cost, abs=1e-12)
    assert np.abs(fast.gradient - slow_grad).max() <= 1e-12 * np.abs(slow_grad).max()
    dense = EnsembleProblem(ens, 40, DT, target=TARGET + 1e-300 * np.eye(4))
    assert dense._entry is None
    rep = dense.evaluate(pulse.values)
    assert rep.cost == pytest.approx(slow_cost, abs=1e-12)


def test_single_member_ensemble_equals_member(member):
    rng = np.random.default_rng(4)
    pulse = _pulse(rng, 20)
    a = ensemble_cost_gradient(pulse, [member])
    b = member_cost_gradient(pulse, member)
    assert a.cost == pytest.approx(b.cost, abs=1e-13)
    assert np.allclose(a.gradient, b.gradient, rtol=0, atol=1e-12 * np.abs(b.gradient).max())


def test_duplicate_members_with_split_weights(member):
    rng = np.random.default_rng(5)
    pulse = _pulse(rng, 20)
    m1 = EnsembleMember(member.orient, 1.0, member.params, 0.3)
    m2 = EnsembleMember(member.orient, 1.0, member.params, 0.7)
    a = ensemble_cost_gradient(pulse, [m1, m2])
    b = ensemble_cost_gradient(pulse, [member])
    assert a.cost == pytest.approx(b.cost, abs=1e-13)
    assert np.allclose(a.gradient, b.gradient, rtol=0, atol=1e-12 * np.abs(b.gradient).max())


def test_weights_must_sum_to_one(member):
    half = EnsembleMember(member.orient, 1.0, member.params, 0.5)
    with pytest.raises(ValueError):
        EnsembleProblem([half], 4, DT)
    with pytest.raises(ValueError):
        ensemble_cost_gradient(PulseShape(DT, np.zeros((4, 2))), [])


def test_powder_ensemble_gradient_matches_finite_differences(rbclo4):
    ens = build_ensemble(PowderSpec(n_alpha_beta=50, n_gamma=3), rbclo4, seed=0)
    assert len(ens) == 450
    prob = EnsembleProblem(ens, 16, DT)
    rng = np.random.default_rng(6)
    values = 2 * np.pi * 300e3 * rng.uniform(-1, 1, (16, 2))
    rep = prob.evaluate(values)
    errors = fd_relative_errors(lambda v: prob.evaluate(v).cost, values, rep.gradient,
                                entries=range(0, 32, 3))
    assert max(errors.values()) < 1e-6


def test_global_phase_of_target_is_irrelevant(member):
    rng = np.random.default_rng(8)
    pulse = _pulse(rng, 12)
    a = member_cost_gradient(pulse, member)
    b = member_cost_gradient(pulse, member, target=np.exp(0.83j) * TARGET)
    fast = EnsembleProblem([member], 12, DT, target=np.exp(0.83j) * TARGET).evaluate(pulse.values)
    assert b.cost == pytest.approx(a.cost, abs=1e-14)
    assert np.allclose(b.gradient, a.gradient, rtol=0, atol=1e-13 * np.abs(a.gradient).max())
    assert fast.cost == pytest.approx(a.cost, abs=1e-13)


def test_fidelity_bounded_for_random_pulses(member):
    prob = EnsembleProblem([member], 8, DT)
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(10_000):
        rep = prob.evaluate(2 * np.pi * 500e3 * rng.uniform(-1, 1, (8, 2)))
        worst = max(worst, rep.fidelity)
    assert worst <= 1 + 1e-10


def test_no_quadrupole_coupling_gives_no_triple_quantum():
    params = SpinSystemParams(QuadrupoleParams(0.0, 0.0), 130.9e6, 0.0, 30e3)
    m = EnsembleMember(Orientation(0.3, 0.9, 0.1), 1.0, params, 1.0)
    prob = EnsembleProblem([m], 20, DT)
    rng = np.random.default_rng(10)
    for _ in range(200):
        assert prob.evaluate(2 * np.pi * 200e3 * rng.uniform(-1, 1, (20, 2))).fidelity < 1e-10


def test_shape_validation(member):
    prob = EnsembleProblem([member], 5, DT)
    with pytest.raises(ValueError):
        prob.evaluate(np.zeros((4, 2)))
