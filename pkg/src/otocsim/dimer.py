"""Bose-Hubbard dimer: H = 2U S_z^2 - 2J(t) S_x with J(t) = J0 [1 + mu cos(omega t)].

Everything lives in the (N+1)-dimensional Fock basis of ``spin_space``. The
Hamiltonian is real, symmetric and tridiagonal there, and commutes with the
Fock-reversal parity k -> N-k; eigensolvers work parity block by parity block
so that tunnelling doublets split cleanly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.special import jv

from .errors import NormDriftError, UnitarityError
from .spin_space import ladder_elements

SUBSTEPS_PER_SCALE = 200
NORM_TOL = 1e-7


@dataclass(frozen=True)
class DimerParams:
    N: int
    U: float
    J0: float = 1.0
    mu: float = 0.0
    omega: float = 0.0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if self.J0 <= 0:
            raise ValueError(f"J0 must be > 0, got {self.J0}")
        if self.mu != 0 and self.omega <= 0:
            raise ValueError("omega must be > 0 when mu != 0")

    @classmethod
    def from_NU(cls, N: int, NU: float, **kw) -> "DimerParams":
        return cls(N=N, U=NU / N, **kw)

    @property
    def NU(self) -> float:
        return self.N * self.U

    @property
    def driven(self) -> bool:
        return self.mu != 0.0

    @property
    def period(self) -> float:
        if not self.driven:
            raise ValueError("static dimer has no drive period")
        return 2.0 * math.pi / self.omega

    def J(self, t):
        return self.J0 * (1.0 + self.mu * np.cos(self.omega * t))

    def max_substep(self) -> float:
        scales = [1.0 / self.J0]
        if self.driven:
            scales.append(2.0 * math.pi / self.omega)
        if self.NU != 0:
            scales.append(1.0 / abs(self.NU))
        return min(scales) / SUBSTEPS_PER_SCALE


@dataclass
class EigenSystem:
    energies: np.ndarray
    modes: np.ndarray
    kind: str = "static"  # static | floquet
    parity: np.ndarray | None = None
    omega: float | None = None  # drive frequency, floquet only

    def __len__(self):
        return self.energies.shape[0]

    def magnitude_order(self) -> np.ndarray:
        """Indices sorted by |energy| (or |quasienergy|), ties broken by index."""
        return np.lexsort((np.arange(len(self)), np.abs(self.energies)))


@dataclass
class UnitaryPropagator:
    matrix: np.ndarray
    span: float
    meta: dict = field(default_factory=dict)

    def defect(self) -> float:
        u = self.matrix
        return float(np.abs(u.conj().T @ u - np.eye(u.shape[0])).max())


def _tridiag(p: DimerParams) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal 2U m^2 and the S_x off-diagonal (per unit J) of H."""
    m = np.arange(p.N + 1) - p.N / 2.0
    return 2.0 * p.U * m**2, -ladder_elements(p.N)  # -2J * (lad / 2)


def hamiltonian_static(p: DimerParams, J: float | None = None) -> np.ndarray:
    """Dense real-symmetric 2U S_z^2 - 2J S_x; ``J`` defaults to J0."""
    J = p.J0 if J is None else J
    d, off = _tridiag(p)
    return np.diag(d) + np.diag(J * off, 1) + np.diag(J * off, -1)


def parity_operator(N: int) -> np.ndarray:
    return np.eye(N + 1)[::-1]


def parity_isometries(N: int) -> tuple[np.ndarray, np.ndarray]:
    """Columns spanning the even (+1) and odd (-1) Fock-reversal sectors."""
    D = N + 1
    half = D // 2
    even = np.zeros((D, half + D % 2))
    odd = np.zeros((D, half))
    r = 1.0 / math.sqrt(2.0)
    for k in range(half):
        even[k, k] = even[N - k, k] = r
        odd[k, k] = r
        odd[N - k, k] = -r
    if D % 2:
        even[half, half] = 1.0
    return even, odd


def _commutes_with_parity(M: np.ndarray) -> bool:
    scale = max(np.abs(M).max(), 1e-300)
    return np.abs(M[::-1, ::-1] - M).max() <= 1e-12 * scale


def eigensystem_static(H: np.ndarray, use_parity: bool = True) -> EigenSystem:
    """Full spectral decomposition, ascending energies.

    When H commutes with Fock reversal each parity sector is diagonalised on
    its own and the eigenvectors carry a definite parity label.
    """
    H = np.asarray(H)
    if np.abs(H - H.conj().T).max() > 1e-12 * max(np.abs(H).max(), 1.0):
        raise ValueError("Hamiltonian is not Hermitian")
    N = H.shape[0] - 1
    if use_parity and N >= 1 and _commutes_with_parity(H):
        es, vs, ps = [], [], []
        for sign, iso in zip((1, -1), parity_isometries(N)):
            if iso.shape[1] == 0:
                continue
            e, v = sla.eigh(iso.T @ H @ iso)
            es.append(e)
            vs.append(iso @ v)
            ps.append(np.full(e.shape, sign))
        e = np.concatenate(es)
        v = np.hstack(vs)
        par = np.concatenate(ps)
        order = np.argsort(e, kind="stable")
        return EigenSystem(e[order], v[:, order], "static", par[order])
    try:
        e, v = sla.eigh(H)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise RuntimeError(f"eigensolver did not converge: {exc}") from exc
    return EigenSystem(e, v, "static", None)


def _check_grid(times) -> tuple[np.ndarray, float]:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or times[0] != 0.0:
        raise ValueError("times must be a 1-d grid starting at 0")
    if times.size == 1:
        return times, 0.0
    dt = times[1] - times[0]
    if dt <= 0 or np.abs(np.diff(times) - dt).max() > 1e-9 * max(1.0, times[-1]):
        raise ValueError("times must be uniformly spaced")
    return times, float(dt)


def spectral_states(eig: EigenSystem, psi0: np.ndarray, times) -> np.ndarray:
    """psi(t) = sum_n exp(-i E_n t) <Phi_n|psi0> |Phi_n>, one row per time."""
    coeff = eig.modes.conj().T @ psi0
    phases = np.exp(-1j * np.outer(np.asarray(times, dtype=float), eig.energies))
    return (phases * coeff) @ eig.modes.T


class ChebyshevStepper:
    """exp(-i h H(J)) for the dimer via a fixed-order Chebyshev expansion.

    The expansion interval covers the spectrum of H(J) for every |J| <= j_max
    (Weyl bound: spec(2U Sz^2) plus [-|J| N, |J| N]), so one coefficient set
    serves the whole drive cycle.
    """

    def __init__(self, p: DimerParams, h: float, j_max: float, tol: float = 1e-16):
        self.diag, self.off = _tridiag(p)
        lo = self.diag.min() - j_max * p.N
        hi = self.diag.max() + j_max * p.N
        pad = 1e-6 * max(hi - lo, 1.0)
        self.centre = 0.5 * (hi + lo)
        self.radius = 0.5 * (hi - lo) + pad
        self.h = h
        x = h * self.radius
        kmax = int(x + 30 + 10 * x ** (1 / 3))
        c = jv(np.arange(kmax), x)
        big = np.nonzero(np.abs(c) > tol)[0]
        K = int(big[-1]) + 2 if big.size else 2
        coef = c[:K] * (-1j) ** np.arange(K) * 2.0
        coef[0] /= 2.0
        self.coef = coef * np.exp(-1j * h * self.centre)

    def _apply_h(self, v: np.ndarray, J: float) -> np.ndarray:
        d = self.diag if v.ndim == 1 else self.diag[:, None]
        o = J * (self.off if v.ndim == 1 else self.off[:, None])
        r = d * v
        r[1:] += o * v[:-1]
        r[:-1] += o * v[1:]
        return r

    def _scaled(self, v, J):
        return (self._apply_h(v, J) - self.centre * v) / self.radius

    def step(self, v: np.ndarray, J: float) -> np.ndarray:
        t0 = v
        t1 = self._scaled(v, J)
        out = self.coef[0] * t0 + self.coef[1] * t1
        for c in self.coef[2:]:
            t0, t1 = t1, 2.0 * self._scaled(t1, J) - t0
            out += c * t1
        return out


# fourth-order commutator-free Magnus: two exponentials per step built from
# H at the Gauss points t1, t2 with weights (A, B) and (B, A)
_GAUSS = (0.5 - math.sqrt(3.0) / 6.0, 0.5 + math.sqrt(3.0) / 6.0)
_CFM_A = (3.0 - 2.0 * math.sqrt(3.0)) / 12.0
_CFM_B = (3.0 + 2.0 * math.sqrt(3.0)) / 12.0
# |2(A J1 + B J2)| <= _CFM_SPAN * max|J|
_CFM_SPAN = 2.0 * (abs(_CFM_A) + abs(_CFM_B))


def _driven_segment(stepper: ChebyshevStepper, p: DimerParams, v: np.ndarray,
                    t0: float, nsteps: int) -> np.ndarray:
    h = 2.0 * stepper.h  # the stepper exponentiates half steps
    for i in range(nsteps):
        t = t0 + i * h
        j1 = float(p.J(t + _GAUSS[0] * h))
        j2 = float(p.J(t + _GAUSS[1] * h))
        v = stepper.step(v, 2.0 * (_CFM_A * j2 + _CFM_B * j1))
        v = stepper.step(v, 2.0 * (_CFM_A * j1 + _CFM_B * j2))
    return v


def _stepper(p: DimerParams, h: float) -> ChebyshevStepper:
    return ChebyshevStepper(p, 0.5 * h, _CFM_SPAN * p.J0 * (1.0 + abs(p.mu)))


def propagate(psi0: np.ndarray, p: DimerParams, times, substep: float | None = None) -> np.ndarray:
    """States on a uniform grid starting at t = 0, one row per time.

    Static runs use the exact spectral solution. Driven runs use a unitary
    exponential integrator (fourth-order commutator-free Magnus, two Chebyshev
    exponentials per step) with h <= min(2 pi/omega, 1/J0, 1/|NU|)/200
    dividing the output spacing.
    """
    times, dt = _check_grid(times)
    psi0 = np.asarray(psi0, dtype=complex)
    if not p.driven:
        states = spectral_states(eigensystem_static(hamiltonian_static(p)), psi0, times)
    else:
        states = np.empty((times.size, psi0.size), dtype=complex)
        states[0] = psi0
        if times.size > 1:
            hmax = p.max_substep() if substep is None else substep
            nsub = max(1, math.ceil(dt / hmax - 1e-9))
            stepper = _stepper(p, dt / nsub)
            v = psi0.copy()
            for i in range(1, times.size):
                v = _driven_segment(stepper, p, v, times[i - 1], nsub)
                states[i] = v
    drift = np.abs(np.linalg.norm(states, axis=1) - 1.0).max()
    if drift > NORM_TOL:
        raise NormDriftError(f"norm drift {drift:.3e} exceeds {NORM_TOL}")
    return states


def floquet_propagator(p: DimerParams, substep: float | None = None) -> UnitaryPropagator:
    """One-period propagator U(T), T = 2 pi / omega, built column by column."""
    if not p.driven:
        raise ValueError("floquet_propagator requires mu != 0")
    T = p.period
    hmax = p.max_substep() if substep is None else substep
    nsteps = max(1, math.ceil(T / hmax - 1e-9))
    stepper = _stepper(p, T / nsteps)
    u = _driven_segment(stepper, p, np.eye(p.N + 1, dtype=complex), 0.0, nsteps)
    prop = UnitaryPropagator(u, T, {"substeps": nsteps})
    defect = prop.defect()
    if defect > NORM_TOL:
        raise UnitarityError(f"U(T) unitarity defect {defect:.3e}")
    return prop


def _unitary_eig(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # complex Schur of a normal matrix is diagonal up to roundoff, Z unitary
    t, z = sla.schur(u, output="complex")
    return np.diag(t).copy(), z


def floquet_modes(prop: UnitaryPropagator, use_parity: bool = True) -> EigenSystem:
    """Quasienergies -arg(u_n)/T in [-omega/2, omega/2) and Floquet modes, ascending."""
    u = prop.matrix
    if prop.defect() > NORM_TOL:
        raise UnitarityError("propagator is not unitary")
    T = prop.span
    omega = 2.0 * math.pi / T
    N = u.shape[0] - 1
    if use_parity and N >= 1 and _commutes_with_parity(u):
        vals, vecs, par = [], [], []
        for sign, iso in zip((1, -1), parity_isometries(N)):
            if iso.shape[1] == 0:
                continue
            lam, z = _unitary_eig(iso.T @ u @ iso)
            vals.append(lam)
            vecs.append(iso @ z)
            par.append(np.full(lam.shape, sign))
        lam = np.concatenate(vals)
        modes = np.hstack(vecs)
        parity = np.concatenate(par)
    else:
        lam, modes = _unitary_eig(u)
        parity = None
    eps = -np.angle(lam) / T
    eps = np.where(eps >= omega / 2.0, eps - omega, eps)
    order = np.argsort(eps, kind="stable")
    return EigenSystem(eps[order], modes[:, order], "floquet",
                       None if parity is None else parity[order], omega)
