import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from otocsim.spin_space import (
    QGrid, bloch_coherent, build_spin_operators, dimer_page_value, entanglement_entropy,
    husimi_q, page_curve, reduced_density_matrix, spin_moments, von_neumann_entropy,
)


def random_state(N, seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(N + 1) + 1j * rng.standard_normal(N + 1)
    return v / np.linalg.norm(v)


def symmetric_embedding(n):
    """Columns |k>_sym in the 2^n qubit space, k = number of 1 bits."""
    B = np.zeros((2**n, n + 1))
    for idx, bits in enumerate(itertools.product((0, 1), repeat=n)):
        B[idx, sum(bits)] = 1.0
    return B / np.sqrt(B.sum(axis=0))


def brute_force_rdm(psi, s):
    N = psi.size - 1
    full = symmetric_embedding(N) @ psi
    A = full.reshape(2**s, 2 ** (N - s))
    rho = A @ A.conj().T
    Bs = symmetric_embedding(s)
    return Bs.T @ rho @ Bs


@pytest.mark.parametrize("N", [1, 2, 3, 5, 8])
def test_spin_algebra(N):
    sx, sy, sz = build_spin_operators(N)
    j = N / 2
    assert np.allclose(sx @ sy - sy @ sx, 1j * sz, atol=1e-12)
    assert np.allclose(sy @ sz - sz @ sy, 1j * sx, atol=1e-12)
    casimir = sx @ sx + sy @ sy + sz @ sz
    assert np.allclose(casimir, j * (j + 1) * np.eye(N + 1), atol=1e-12)


def test_coherent_state_two_particles():
    psi = bloch_coherent(2, 0.0, 0.0)
    assert np.allclose(psi, [0.5, 1 / math.sqrt(2), 0.5], atol=1e-14)


@pytest.mark.parametrize("z,phi", [(0.0, 0.0), (0.3, 1.1), (-0.8, -2.5), (1.0, 0.0), (-1.0, 0.4)])
def test_coherent_state_coordinates(z, phi):
    N = 40
    m = spin_moments(bloch_coherent(N, z, phi))
    assert m["Sz"] == pytest.approx(N * z / 2, abs=1e-10)
    rho = math.sqrt(1 - z * z)
    assert m["Sx"] == pytest.approx(N / 2 * rho * math.cos(phi), abs=1e-10)
    assert m["Sy"] == pytest.approx(-N / 2 * rho * math.sin(phi), abs=1e-10)


def test_coherent_state_large_N_is_finite():
    psi = bloch_coherent(1000, 0.0, 0.0)
    assert np.all(np.isfinite(psi))
    assert np.linalg.norm(psi) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        bloch_coherent(10, 1.5, 0.0)


def test_spin_moments_match_dense_operators():
    N = 9
    psi = random_state(N, 3)
    sx, sy, sz = build_spin_operators(N)
    m = spin_moments(psi)
    for name, op in (("x", sx), ("y", sy), ("z", sz)):
        mean = np.vdot(psi, op @ psi).real
        assert m["S" + name] == pytest.approx(mean, abs=1e-12)
        assert m["VarS" + name] == pytest.approx(np.vdot(psi, op @ op @ psi).real - mean**2, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(N=st.integers(1, 6), seed=st.integers(0, 2**31 - 1), data=st.data())
def test_rdm_matches_first_quantized_symmetrisation(N, seed, data):
    s = data.draw(st.integers(0, N))
    psi = random_state(N, seed)
    assert np.abs(reduced_density_matrix(psi, s) - brute_force_rdm(psi, s)).max() < 1e-10


@settings(max_examples=30, deadline=None)
@given(N=st.integers(2, 40), seed=st.integers(0, 2**31 - 1), data=st.data())
def test_entropy_symmetric_and_bounded(N, seed, data):
    s = data.draw(st.integers(0, N))
    psi = random_state(N, seed)
    a = entanglement_entropy(psi, s)
    b = entanglement_entropy(psi, N - s)
    assert a == pytest.approx(b, abs=1e-9)
    assert -1e-12 <= a <= math.log(min(s, N - s) + 1) + 1e-9
    rho = reduced_density_matrix(psi, s)
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)


def test_entropy_product_state_is_zero():
    psi = np.zeros(11, complex)
    psi[0] = 1.0
    assert entanglement_entropy(psi, 5) == pytest.approx(0.0, abs=1e-14)


def test_entropy_two_level_example():
    # -(1/4) ln(1/4) - (3/4) ln(3/4)
    rho = np.diag([0.25, 0.75])
    assert von_neumann_entropy(rho) == pytest.approx(0.5623351446188083, abs=1e-12)


def test_page_curve_values():
    assert page_curve(2, 2) == pytest.approx(1 / 3, abs=1e-12)
    # d_a = 1 carries no entanglement
    assert page_curve(1, 7) == pytest.approx(0.0, abs=1e-12)
    assert dimer_page_value(100, 50) == page_curve(51, 51)
    assert dimer_page_value(100, 80) == page_curve(21, 81)
    vals = [dimer_page_value(100, s) for s in range(0, 51, 5)]
    assert np.all(np.diff(vals) > 0)
    with pytest.raises(ValueError):
        page_curve(5, 3)


def test_page_curve_against_random_states():
    rng = np.random.default_rng(7)
    da, db = 3, 5
    ents = []
    for _ in range(4000):
        v = rng.standard_normal((da, db)) + 1j * rng.standard_normal((da, db))
        v /= np.linalg.norm(v)
        ents.append(von_neumann_entropy(v @ v.conj().T))
    assert np.mean(ents) == pytest.approx(page_curve(da, db), abs=4 * np.std(ents) / np.sqrt(4000))


def test_husimi_single_spin():
    # spin-1/2 pointing to z = +1: Q = (2/4pi) (1 + z)/2
    psi = np.array([0.0, 1.0], complex)
    q = husimi_q(psi, n_z=21, n_phi=8)
    expected = (2 / (4 * np.pi)) * (1 + q.z) / 2
    assert np.allclose(q.values, expected[:, None], atol=1e-14)


@pytest.mark.parametrize("N", [1, 10, 60])
def test_husimi_normalised_and_peaked(N):
    psi = bloch_coherent(N, 0.4, 1.0)
    q = husimi_q(psi, n_z=801, n_phi=256)
    assert q.integral() == pytest.approx(1.0, abs=2e-3)
    if N > 1:
        z, phi = q.argmax()
        assert z == pytest.approx(0.4, abs=0.01)
        assert phi == pytest.approx(1.0, abs=0.03)


def test_husimi_csv_round_trip(tmp_path):
    q = husimi_q(bloch_coherent(6, 0.1, 0.2), n_z=11, n_phi=8)
    q.to_csv(tmp_path / "q.csv")
    back = QGrid.from_csv(tmp_path / "q.csv")
    assert np.allclose(back.values, q.values, rtol=1e-11)
    assert np.allclose(back.z, q.z) and np.allclose(back.phi, q.phi)
