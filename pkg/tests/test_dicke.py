import math

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from otocsim.dicke import (
    DickeParams, converged_eigensystem, displaced_fock_overlap, displacement_matrix, ecb_operators,
    ldos_window, parity_isometry, parity_operator, saddle_state, slice_spectrum, spectral_sz_variance,
    spin_moments_ecb, state_parity,
)
from otocsim.errors import TruncationInsufficient
from otocsim.spin_space import build_spin_operators

FOCK = 200


def displacement_expm(alpha, levels=FOCK):
    b = np.diag(np.sqrt(np.arange(1, levels)), 1)
    return sla.expm(alpha * b.T - np.conj(alpha) * b)


_REF = {}


def reference(alpha):
    if alpha not in _REF:
        _REF[alpha] = displacement_expm(alpha)
    return _REF[alpha]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 59), st.integers(0, 59),
       st.sampled_from([0.3, -1.1, 2.0, 0.7 + 0.9j, -1.5j, 0.0]))
def test_overlap_matches_matrix_exponential(m, n, alpha):
    assert abs(displaced_fock_overlap(m, n, alpha) - reference(alpha)[m, n]) < 1e-8


@pytest.mark.parametrize("alpha", [0.4, -1.7, 2.5])
def test_displacement_matrix_matches_matrix_exponential(alpha):
    assert np.abs(displacement_matrix(alpha, 60) - reference(alpha)[:60, :60]).max() < 1e-8


def fock_dicke(N, omega, delta, gamma, levels):
    sx, _, sz = build_spin_operators(N)
    b = np.diag(np.sqrt(np.arange(1, levels)), 1)
    eye_s, eye_b = np.eye(N + 1), np.eye(levels)
    H = omega * np.kron(eye_s, b.T @ b) + delta * np.kron(sz.real, eye_b) \
        + 2 * gamma / math.sqrt(N) * np.kron(sx.real, b + b.T)
    return H


@pytest.mark.parametrize("gamma", [0.3, 0.66, 1.2])
def test_ecb_spectrum_matches_fock_basis(gamma):
    N, omega, delta = 4, 0.5, 1.0
    ref = np.linalg.eigvalsh(fock_dicke(N, omega, delta, gamma, FOCK))[:30]
    ecb = np.linalg.eigvalsh(ecb_operators(DickeParams(N, omega, delta, gamma, 80)).H.toarray())[:30]
    assert np.abs(ecb - ref).max() < 1e-6


def test_ecb_operators_hermitian_and_parity_symmetric():
    p = DickeParams(10, 0.5, 3.0, 0.66, 30)
    ops = ecb_operators(p)
    P = parity_operator(p)
    for M in (ops.H, ops.Sz, ops.photon_number):
        assert abs(M - M.T).max() < 1e-13
        assert abs(P @ M - M @ P).max() < 1e-10
    assert abs(P @ P - sp.identity(p.dimension)).max() < 1e-14


def test_parity_isometries_split_space():
    p = DickeParams(6, 0.5, 1.0, 0.4, 10)
    P = parity_operator(p).toarray()
    total = 0
    for s in (1, -1):
        V = parity_isometry(p, s).toarray()
        assert np.allclose(V.T @ V, np.eye(V.shape[1]))
        assert np.allclose(P @ V, s * V)
        total += V.shape[1]
    assert total == p.dimension


def test_saddle_state_round_trip():
    p = DickeParams(20, 0.5, 3.0, 0.66, 60)
    psi = saddle_state(p)
    ops = ecb_operators(p)
    assert psi @ psi == pytest.approx(1.0, abs=1e-14)
    assert psi @ (ops.Sz @ psi) == pytest.approx(-10.0, abs=1e-8)
    assert psi @ (ops.photon_number @ psi) == pytest.approx(0.0, abs=1e-8)
    assert state_parity(p, psi) == 1


def test_uncoupled_model_is_bare():
    p = DickeParams(6, 0.5, 1.0, 0.0, 5)
    e = np.linalg.eigvalsh(ecb_operators(p).H.toarray())
    n = np.arange(6)
    m = np.arange(7) - 3
    bare = np.sort((0.5 * n[:, None] + m[None, :]).ravel())
    assert np.allclose(e, bare, atol=1e-12)


def test_converged_eigensystem_small():
    p = DickeParams(8, 0.5, 1.0, 0.4, 30)
    ces = converged_eigensystem(p)
    assert ces.captured > 1 - 1e-5
    assert np.all(ces.shifts < 1e-3)
    assert ces.parity == 1
    full = np.linalg.eigvalsh(fock_dicke(8, 0.5, 1.0, 0.4, 120))
    # retained energies agree with a large Fock-space solve to the convergence gate
    for e in ces.energies[ces.overlaps > 1e-6]:
        assert np.abs(full - e).min() < 1e-3
    s1, s2 = spin_moments_ecb(ces)
    assert np.all(s2 - s1**2 > -1e-10)


def test_spectral_variance_starts_at_coherent_value():
    p = DickeParams(8, 0.5, 1.0, 0.4, 30)
    ces = converged_eigensystem(p)
    var = spectral_sz_variance(ces, [0.0])
    assert var[0] == pytest.approx(0.0, abs=1e-5)


def test_truncation_too_small_raises():
    with pytest.raises(TruncationInsufficient):
        converged_eigensystem(DickeParams(40, 0.5, 1.0, 1.5, 6), delta_n=2)


def test_slice_spectrum_matches_dense():
    rng = np.random.default_rng(0)
    A = sp.random(600, 600, density=0.01, random_state=1)
    A = ((A + A.T) / 2 + sp.diags(rng.uniform(-5, 5, 600))).tocsc()
    dense = np.linalg.eigvalsh(A.toarray())
    e, v = slice_spectrum(A, -1.0, 1.5, k=40)
    ref = dense[(dense >= -1.0) & (dense <= 1.5)]
    assert e.size == ref.size and np.allclose(e, ref, atol=1e-9)
    assert np.abs(A @ v - v * e).max() < 1e-8


def test_ldos_window_covers_weight():
    rng = np.random.default_rng(2)
    d = np.sort(rng.uniform(-10, 10, 400))
    A = sp.diags(d).tocsr()
    v = np.exp(-0.5 * d**2)
    v /= np.linalg.norm(v)
    W = ldos_window(A, v, 0.0, tail=1e-7)
    assert np.sum(v[np.abs(d) > W] ** 2) < 1e-7


def test_parameter_validation():
    with pytest.raises(ValueError):
        DickeParams(0, 0.5, 1.0, 0.1, 10)
    with pytest.raises(ValueError):
        DickeParams(4, -0.5, 1.0, 0.1, 10)
    p = DickeParams(200, 0.5, 3.0, 0.66, 80)
    assert p.gamma_c == pytest.approx(math.sqrt(1.5) / 2)
    assert p.dimension == 201 * 81
