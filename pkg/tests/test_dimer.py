import math

import numpy as np
import pytest
import scipy.linalg as sla

from otocsim.dimer import (
    DimerParams, UnitaryPropagator, eigensystem_static, floquet_modes, floquet_propagator,
    hamiltonian_static, parity_operator, propagate, spectral_states,
)
from otocsim.errors import UnitarityError
from otocsim.spin_space import bloch_coherent, build_spin_operators


def test_noninteracting_spectrum():
    N = 12
    eig = eigensystem_static(hamiltonian_static(DimerParams(N, 0.0, 1.3)))
    # H = -2 J S_x has levels -2 J m
    assert np.allclose(eig.energies, np.sort(-2 * 1.3 * (np.arange(N + 1) - N / 2)), atol=1e-12)


def test_two_particle_spectrum():
    eig = eigensystem_static(hamiltonian_static(DimerParams(2, 0.0, 1.0)))
    assert np.allclose(eig.energies, [-2.0, 0.0, 2.0], atol=1e-13)


def test_hamiltonian_matches_spin_operators():
    p = DimerParams.from_NU(7, -2.0, J0=0.8)
    sx, _, sz = build_spin_operators(7)
    assert np.allclose(hamiltonian_static(p), 2 * p.U * sz @ sz - 2 * p.J0 * sx, atol=1e-13)


def test_zero_tunnelling_limit_is_diagonal():
    p = DimerParams(6, 0.3, 1e-300)
    H = hamiltonian_static(p)
    assert np.abs(H - np.diag(np.diag(H))).max() < 1e-290


def test_eigen_reconstruction_and_parity_labels():
    p = DimerParams.from_NU(1000, -2.0)
    H = hamiltonian_static(p)
    eig = eigensystem_static(H)
    rec = (eig.modes * eig.energies) @ eig.modes.T
    assert np.abs(rec - H).max() < 1e-9
    P = parity_operator(1000)
    assert np.allclose(P @ eig.modes, eig.modes * eig.parity, atol=1e-10)
    assert np.abs(eig.modes.T @ eig.modes - np.eye(1001)).max() < 1e-10


def test_parity_blocks_agree_with_full_eigensolve():
    p = DimerParams.from_NU(31, -1.3)
    a = eigensystem_static(hamiltonian_static(p), use_parity=True)
    b = eigensystem_static(hamiltonian_static(p), use_parity=False)
    assert np.allclose(a.energies, b.energies, atol=1e-11)


def test_eigenstates_are_stationary():
    p = DimerParams.from_NU(20, -2.0)
    eig = eigensystem_static(hamiltonian_static(p))
    psi = eig.modes[:, 5].astype(complex)
    states = propagate(psi, p, np.linspace(0, 10, 11))
    assert np.abs(np.abs(states @ psi.conj()) - 1).max() < 1e-12


def test_single_particle_rabi_oscillation():
    p = DimerParams(1, 0.0, 1.0)
    t = np.linspace(0, 5, 51)
    states = propagate(np.array([1, 0], complex), p, t)
    # H = -J sigma_x: population in mode 2 is sin^2(J t)
    assert np.abs(np.abs(states[:, 1]) ** 2 - np.sin(t) ** 2).max() < 1e-12


def test_driven_rabi_oscillation():
    # for N = 1 the drive only rescales the accumulated phase
    p = DimerParams(1, 0.0, 1.0, mu=0.7, omega=2.0)
    t = np.linspace(0, 6, 61)
    states = propagate(np.array([1, 0], complex), p, t)
    theta = t + 0.7 * np.sin(2.0 * t) / 2.0
    assert np.abs(np.abs(states[:, 1]) ** 2 - np.sin(theta) ** 2).max() < 1e-9


def test_static_energy_and_norm_conserved():
    p = DimerParams.from_NU(50, -2.0)
    H = hamiltonian_static(p)
    psi0 = bloch_coherent(50, 0.0, 0.0)
    states = propagate(psi0, p, np.linspace(0, 50, 101))
    e = np.einsum("ti,ij,tj->t", states.conj(), H, states).real
    assert np.abs(e - e[0]).max() < 1e-9
    assert np.abs(np.linalg.norm(states, axis=1) - 1).max() < 1e-12


def test_stroboscopic_consistency():
    p = DimerParams.from_NU(12, -1.0, mu=1.5, omega=5.0)
    prop = floquet_propagator(p)
    psi0 = bloch_coherent(12, 0.2, 0.3)
    k = 100
    times = p.period * np.arange(k + 1)
    states = propagate(psi0, p, times)
    v = psi0.copy()
    for i in range(1, k + 1):
        v = prop.matrix @ v
        if i in (1, 10, k):
            assert np.abs(v - states[i]).max() < 1e-10


def test_substep_halving_changes_little():
    p = DimerParams.from_NU(10, -1.0, mu=1.5, omega=0.5)
    psi0 = bloch_coherent(10, 0.0, 0.0)
    t = np.linspace(0, 5, 11)
    h = p.max_substep()
    a = propagate(psi0, p, t, substep=h)
    b = propagate(psi0, p, t, substep=h / 2)
    assert np.abs(a - b).max() < 1e-8


def test_floquet_static_continuity():
    N = 8
    static = DimerParams.from_NU(N, -1.0)
    eps = 1e-7
    driven = DimerParams.from_NU(N, -1.0, mu=eps, omega=0.5)
    T = driven.period
    lam_f = np.linalg.eigvals(floquet_propagator(driven).matrix)
    lam_s = np.exp(-1j * np.linalg.eigvalsh(hamiltonian_static(static)) * T)
    # compare as unordered sets on the unit circle
    dist = np.abs(lam_f[:, None] - lam_s[None, :]).min(axis=1)
    assert dist.max() < 1e-5


def test_floquet_modes_of_identity():
    prop = UnitaryPropagator(np.eye(5, dtype=complex), 2 * math.pi / 0.5)
    eig = floquet_modes(prop)
    assert np.allclose(eig.energies, 0.0, atol=1e-14)


def test_floquet_modes_diagonalise_propagator():
    p = DimerParams.from_NU(30, -1.0, mu=1.5, omega=0.5)
    prop = floquet_propagator(p)
    assert prop.defect() < 1e-10
    eig = floquet_modes(prop)
    T = p.period
    assert np.all(eig.energies >= -p.omega / 2) and np.all(eig.energies < p.omega / 2)
    lhs = prop.matrix @ eig.modes
    rhs = eig.modes * np.exp(-1j * eig.energies * T)
    assert np.abs(lhs - rhs).max() < 1e-9
    assert np.abs(eig.modes.conj().T @ eig.modes - np.eye(31)).max() < 1e-9
    assert set(np.unique(eig.parity)) == {-1, 1}


def test_floquet_spectral_states_match_stroboscopic_propagation():
    p = DimerParams.from_NU(16, -1.0, mu=1.5, omega=0.5)
    eig = floquet_modes(floquet_propagator(p))
    psi0 = bloch_coherent(16, 0.0, 0.0)
    times = p.period * np.arange(4)
    assert np.abs(spectral_states(eig, psi0, times) - propagate(psi0, p, times)).max() < 1e-9


def test_nonunitary_propagator_rejected():
    with pytest.raises(UnitarityError):
        floquet_modes(UnitaryPropagator(1.01 * np.eye(3, dtype=complex), 1.0))


def test_parameter_validation():
    with pytest.raises(ValueError):
        DimerParams(0, 1.0)
    with pytest.raises(ValueError):
        DimerParams(10, 1.0, mu=1.0, omega=0.0)
    with pytest.raises(ValueError):
        propagate(np.ones(3) / math.sqrt(3), DimerParams(2, 0.0), [0.0, 1.0, 3.0])
    with pytest.raises(ValueError):
        eigensystem_static(np.array([[0, 1], [2, 0]], float))


def test_expm_cross_check():
    p = DimerParams.from_NU(6, -1.5, mu=0.9, omega=1.3)
    h = 1e-3
    T = 0.3
    psi0 = bloch_coherent(6, 0.1, -0.4)
    out = propagate(psi0, p, [0.0, T])[1]
    v = psi0.copy()
    for k in range(int(round(T / h))):
        v = sla.expm(-1j * h * hamiltonian_static(p, J=float(p.J((k + 0.5) * h)))) @ v
    # midpoint scheme with a tenfold finer step agrees to its O(h^2) error
    assert np.abs(out - v).max() < 1e-6
