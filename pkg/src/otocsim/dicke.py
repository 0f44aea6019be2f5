"""Dicke model H = omega b^dag b + Delta S_z + (2 gamma / sqrt(N)) (b^dag + b) S_x
in the efficient coherent basis (ECB).

For every S_x eigenvalue m the photon part is a displaced oscillator, so the
basis states are |n; m> = |m>_x (x) D(-G m)|n> with G = 2 gamma / (omega sqrt N).
The block-diagonal part is omega n - omega G^2 m^2 and Delta S_z couples
m <-> m +/- 1 through Franck-Condon factors <n'|D(G (m' - m))|n>.

Basis ordering is m-major: index = i (n_max + 1) + n with i = m + N/2 and
n = 0..n_max, and the spin states |m>_x are taken in the phase convention where
S_z has the positive ladder elements (Delta/2) sqrt(j(j+1) - m(m+1)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import gammaln

from .errors import NumericalError, TruncationInsufficient
from .spin_space import log_binom

ENERGY_GATE = 1e-3
NORM_GATE = 1e-5


@dataclass(frozen=True)
class DickeParams:
    N: int
    omega: float
    delta: float
    gamma: float
    n_max: int

    def __post_init__(self):
        if self.N < 1 or self.n_max < 1:
            raise ValueError("N and n_max must be >= 1")
        if self.omega <= 0 or self.delta <= 0 or self.gamma < 0:
            raise ValueError("need omega > 0, delta > 0, gamma >= 0")

    @property
    def gamma_c(self) -> float:
        return math.sqrt(self.omega * self.delta) / 2.0

    @property
    def G(self) -> float:
        return 2.0 * self.gamma / (self.omega * math.sqrt(self.N))

    @property
    def dimension(self) -> int:
        return (self.N + 1) * (self.n_max + 1)

    def with_n_max(self, n_max: int) -> "DickeParams":
        return DickeParams(self.N, self.omega, self.delta, self.gamma, n_max)


def spin_m(N: int) -> np.ndarray:
    return np.arange(N + 1) - N / 2.0


def sz_ladder(N: int) -> np.ndarray:
    """<m+1|S_z|m>_x = (1/2) sqrt(j(j+1) - m(m+1)) for m = -j..j-1."""
    j = N / 2.0
    m = spin_m(N)[:-1]
    return 0.5 * np.sqrt(j * (j + 1.0) - m * (m + 1.0))


def displaced_fock_overlap(m_level: int, n_level: int, alpha: complex) -> complex:
    """<m|D(alpha)|n> from the associated-Laguerre closed form."""
    if m_level < 0 or n_level < 0:
        raise ValueError("levels must be >= 0")
    x = abs(alpha) ** 2
    if m_level >= n_level:
        hi, lo, a = m_level, n_level, complex(alpha)
    else:
        hi, lo, a = n_level, m_level, -complex(alpha).conjugate()
    k = hi - lo
    if x == 0.0:
        return 1.0 + 0j if k == 0 else 0j
    # L_lo^{(k)}(x) by the three-term upward recurrence
    l_prev, l_cur = 1.0, 1.0 + k - x
    if lo == 0:
        lag = l_prev
    else:
        for i in range(1, lo):
            l_prev, l_cur = l_cur, ((2 * i + 1 + k - x) * l_cur - (i + k) * l_prev) / (i + 1)
        lag = l_cur
    logmag = 0.5 * (gammaln(lo + 1.0) - gammaln(hi + 1.0)) + k * math.log(abs(a)) - 0.5 * x
    phase = (a / abs(a)) ** k
    return complex(math.exp(logmag) * lag * phase)


def displacement_matrix(alpha: float, n_levels: int) -> np.ndarray:
    """Dense <m|D(alpha)|n> for m, n < n_levels and real alpha.

    Same Laguerre closed form as ``displaced_fock_overlap``, with the
    recurrence run for every order k = |m - n| at once and the magnitude
    assembled in log space.
    """
    if alpha == 0.0:
        return np.eye(n_levels)
    x = alpha * alpha
    k = np.arange(n_levels, dtype=float)
    lag = np.empty((n_levels, n_levels))  # lag[i, k] = L_i^{(k)}(x)
    lag[0] = 1.0
    if n_levels > 1:
        lag[1] = 1.0 + k - x
    for i in range(1, n_levels - 1):
        lag[i + 1] = ((2 * i + 1 + k - x) * lag[i] - (i + k) * lag[i - 1]) / (i + 1)
    m, n = np.indices((n_levels, n_levels))
    lo, hi = np.minimum(m, n), np.maximum(m, n)
    kk = hi - lo
    val = lag[lo, kk]
    with np.errstate(divide="ignore", under="ignore"):
        logmag = 0.5 * (gammaln(lo + 1.0) - gammaln(hi + 1.0)) + kk * math.log(abs(alpha)) - 0.5 * x \
            + np.log(np.abs(val))
        D = np.sign(val) * np.exp(logmag)
    # <m|D|n> carries alpha^k below the diagonal and (-alpha)^k above it
    sign = np.where(m >= n, np.sign(alpha), -np.sign(alpha)) ** kk
    return D * sign


def _coupling_blocks(p: DickeParams, tol: float = 1e-15) -> sp.csr_matrix:
    """S_z in the ECB (without the factor Delta), sparse."""
    D = displacement_matrix(p.G, p.n_max + 1)
    D[np.abs(D) < tol] = 0.0
    off = sp.kron(sp.diags(sz_ladder(p.N), -1), sp.csr_matrix(D), format="csr")
    return (off + off.T).tocsr()


def _diagonal(p: DickeParams) -> np.ndarray:
    n = np.arange(p.n_max + 1)
    m = spin_m(p.N)
    return (p.omega * n[None, :] - p.omega * p.G**2 * (m**2)[:, None]).ravel()


@dataclass
class EcbOperators:
    H: sp.csr_matrix
    Sz: sp.csr_matrix
    photon_number: sp.csr_matrix


def dicke_hamiltonian_ecb(p: DickeParams) -> sp.csr_matrix:
    return ecb_operators(p).H


def ecb_operators(p: DickeParams) -> EcbOperators:
    sz = _coupling_blocks(p)
    H = (sp.diags(_diagonal(p)) + p.delta * sz).tocsr()
    # b^dag b = c^dag c - G m (c + c^dag) + G^2 m^2 with c the displaced annihilator
    n1 = p.n_max + 1
    n = np.arange(n1)
    cc = sp.diags(np.sqrt(n[1:]), 1)
    blocks = [sp.diags(n.astype(float)) - p.G * m * (cc + cc.T) + (p.G * m) ** 2 * sp.identity(n1)
              for m in spin_m(p.N)]
    return EcbOperators(H, sz, sp.block_diag(blocks, format="csr"))


def spin_parity_signs(N: int) -> np.ndarray:
    """eta_i with exp(i pi (S_z + N/2)) |m_i>_x = eta_i |-m_i>_x."""
    zx = np.diag(sz_ladder(N), 1) + np.diag(sz_ladder(N), -1)
    mu, v = sla.eigh(zx)
    ps = (v * np.cos(np.pi * (mu + N / 2.0))) @ v.T  # eigenphases are +/-1
    eta = ps[np.arange(N, -1, -1), np.arange(N + 1)]
    if np.abs(np.abs(eta) - 1.0).max() > 1e-8:
        raise NumericalError("spin parity is not a signed reversal in the S_x basis")
    return np.rint(eta)


def parity_isometry(p: DickeParams, sector: int) -> sp.csr_matrix:
    """Columns spanning the +1 or -1 eigenspace of exp(i pi (b^dag b + S_z + N/2)).

    In the ECB the parity maps |n; m> to (-1)^n eta_m |n; -m>.
    """
    eta = spin_parity_signs(p.N)
    n1 = p.n_max + 1
    rows, cols, vals = [], [], []
    c = 0
    r = 1.0 / math.sqrt(2.0)
    for i in range(p.N + 1):
        ip = p.N - i
        for n in range(n1):
            s = (-1) ** n * eta[i]
            if i < ip:
                rows += [i * n1 + n, ip * n1 + n]
                cols += [c, c]
                vals += [r, sector * s * r]
                c += 1
            elif i == ip and s == sector:
                rows.append(i * n1 + n)
                cols.append(c)
                vals.append(1.0)
                c += 1
    return sp.csr_matrix((vals, (rows, cols)), shape=(p.dimension, c))


def parity_operator(p: DickeParams) -> sp.csr_matrix:
    eta = spin_parity_signs(p.N)
    n1 = p.n_max + 1
    idx = np.arange(p.dimension)
    i, n = np.divmod(idx, n1)
    target = (p.N - i) * n1 + n
    vals = ((-1.0) ** n) * eta[i]
    return sp.csr_matrix((vals, (target, idx)), shape=(p.dimension,) * 2)


def saddle_state(p: DickeParams) -> np.ndarray:
    """Spin-down Bloch state (x) photon vacuum in the ECB.

    Spin part: <m_i|_x down_z> = (-1)^i sqrt(C(N, i)) / 2^(N/2). Photon part in
    block m: <n|D(G m)|0> = e^{-(G m)^2 / 2} (G m)^n / sqrt(n!). The photon
    truncation loses a tiny amount of weight, so the result is renormalised.
    """
    N = p.N
    i = np.arange(N + 1)
    spin = np.exp(0.5 * log_binom(N, i) - 0.5 * N * math.log(2.0)) * (-1.0) ** i
    n = np.arange(p.n_max + 1)
    gm = p.G * spin_m(N)
    photon = np.zeros((N + 1, p.n_max + 1))
    for k, a in enumerate(gm):
        if a == 0.0:
            photon[k, 0] = 1.0
        else:
            with np.errstate(under="ignore"):
                photon[k] = np.exp(-0.5 * a * a + n * math.log(abs(a)) - 0.5 * gammaln(n + 1.0))
            photon[k] *= np.sign(a) ** n
    psi = (spin[:, None] * photon).ravel()
    return psi / np.linalg.norm(psi)


def lanczos_ldos(A, v0: np.ndarray, steps: int = 400) -> tuple[np.ndarray, np.ndarray]:
    """Ritz values and weights of the spectral measure of v0 (full reorthogonalisation)."""
    steps = min(steps, v0.size)
    Q = np.zeros((steps, v0.size))
    a = np.zeros(steps)
    b = np.zeros(steps)
    q = v0 / np.linalg.norm(v0)
    k_used = steps
    for k in range(steps):
        Q[k] = q
        w = A @ q
        a[k] = q @ w
        w -= Q[: k + 1].T @ (Q[: k + 1] @ w)
        w -= Q[: k + 1].T @ (Q[: k + 1] @ w)
        b[k] = np.linalg.norm(w)
        if b[k] < 1e-12:
            k_used = k + 1
            break
        q = w / b[k]
    T = np.diag(a[:k_used]) + np.diag(b[: k_used - 1], 1) + np.diag(b[: k_used - 1], -1)
    theta, S = sla.eigh(T)
    return theta, S[0] ** 2


def ldos_window(A, v0: np.ndarray, E0: float, tail: float = 1e-7, steps: int = 400) -> float:
    """Smallest half-width W with LDOS weight outside [E0 - W, E0 + W] below ``tail``."""
    theta, w = lanczos_ldos(A, v0, steps)
    order = np.argsort(-np.abs(theta - E0))
    outside = np.cumsum(w[order])
    far = np.abs(theta - E0)[order]
    # first Ritz value (from the outside in) whose inclusion pushes the tail above tol
    j = np.searchsorted(outside, tail, side="left")
    return float(far[min(j, far.size - 1)]) + 1e-9


def slice_spectrum(A, lo: float, hi: float, k: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """All eigenpairs of sparse symmetric A in [lo, hi] by shift-invert slicing."""
    k = min(k, A.shape[0] - 2)
    covered = lo
    sigma = lo
    es, vs = [], []
    while covered < hi:
        e, v = spla.eigsh(A, k=k, sigma=sigma, which="LM", tol=1e-12)
        order = np.argsort(e)
        e, v = e[order], v[:, order]
        reach = np.abs(e - sigma).max() * 0.999
        if sigma - reach > covered:
            sigma = 0.5 * (sigma + covered)
            continue
        sel = (e > covered) & (e <= sigma + reach)
        if covered == lo:
            sel |= e == lo
        es.append(e[sel])
        vs.append(v[:, sel])
        covered = sigma + reach
        sigma = covered + 0.9 * reach
    e = np.concatenate(es)
    v = np.hstack(vs)
    keep = (e >= lo) & (e <= hi)
    order = np.argsort(e[keep])
    return e[keep][order], v[:, keep][:, order]


@dataclass
class SectorEigen:
    energies: np.ndarray
    modes: np.ndarray  # columns in the parity-sector basis
    iso: sp.csr_matrix
    window: tuple[float, float] | None


def _sector_eigen(p: DickeParams, sector: int, window: tuple[float, float] | None,
                  dense_limit: int) -> SectorEigen:
    ops = ecb_operators(p)
    iso = parity_isometry(p, sector)
    Hs = (iso.T @ ops.H @ iso).tocsc()
    if Hs.shape[0] <= dense_limit or window is None:
        e, v = sla.eigh(Hs.toarray())
        if window is not None:
            sel = (e >= window[0]) & (e <= window[1])
            e, v = e[sel], v[:, sel]
        return SectorEigen(e, v, iso, window)
    e, v = slice_spectrum(Hs, *window)
    return SectorEigen(e, v, iso, window)


@dataclass
class ConvergedEigenSystem:
    energies: np.ndarray
    modes: np.ndarray  # full-ECB columns, retained states only
    amplitudes: np.ndarray  # <Phi_n|psi0> for the normalised psi0
    parity: int
    shifts: np.ndarray  # |E_n(n_max) - E_n(n_max - dn)| for retained states
    candidates: int
    params: DickeParams
    delta_n: int
    window: tuple[float, float] | None
    E0: float
    sigma_E: float
    meta: dict = field(default_factory=dict)

    @property
    def retained(self) -> int:
        return self.energies.size

    @property
    def overlaps(self) -> np.ndarray:
        return self.amplitudes**2

    @property
    def captured(self) -> float:
        return float(self.overlaps.sum())

    def to_csv(self, path) -> None:
        with Path(path).open("w") as fh:
            fh.write(f"# n_max: {self.params.n_max}\n# delta_n: {self.delta_n}\n")
            fh.write(f"# retained: {self.retained}\n# parity: {self.parity}\n")
            fh.write("index,energy,overlap,parity\n")
            for i, (e, w) in enumerate(zip(self.energies, self.overlaps)):
                fh.write(f"{i},{e:.12g},{w:.12g},{self.parity}\n")


def state_parity(p: DickeParams, psi: np.ndarray, tol: float = 1e-8) -> int:
    P = parity_operator(p)
    pv = P @ psi
    nrm = np.vdot(psi, psi).real
    for s in (1, -1):
        if np.linalg.norm(pv - s * psi) <= tol * math.sqrt(nrm):
            return s
    raise ValueError("initial state has no definite parity")


def converged_eigensystem(p: DickeParams, psi0: np.ndarray | None = None, delta_n: int = 4,
                          window: float | None = None, tail: float = 1e-7,
                          dense_limit: int = 6000) -> ConvergedEigenSystem:
    """Eigenstates of the psi0 parity sector that are stable under n_max -> n_max - delta_n.

    Small sectors are diagonalised densely. Larger ones are solved only in an
    energy window around <H>: either the given half-width or one read off the
    Lanczos local density of states so that at most ``tail`` of psi0's weight
    lies outside. Retained states must shift by less than 1e-3 between the two
    truncations and must jointly capture 1 - 1e-5 of psi0.
    """
    if delta_n < 1 or p.n_max - delta_n < 1:
        raise ValueError("need 1 <= delta_n < n_max")
    psi0 = saddle_state(p) if psi0 is None else np.asarray(psi0, dtype=float)
    sector = state_parity(p, psi0)
    ops = ecb_operators(p)
    hpsi = ops.H @ psi0
    nrm = psi0 @ psi0
    E0 = float(psi0 @ hpsi / nrm)
    sigma_E = float(math.sqrt(max(hpsi @ hpsi / nrm - E0**2, 0.0)))
    iso = parity_isometry(p, sector)
    v0 = iso.T @ psi0
    bounds = None
    if iso.shape[1] > dense_limit:
        half = window if window is not None else ldos_window(iso.T @ ops.H @ iso, v0, E0, tail)
        bounds = (E0 - half, E0 + half)
    big = _sector_eigen(p, sector, bounds, dense_limit)
    small_bounds = None if bounds is None else (bounds[0] - 0.05, bounds[1] + 0.05)
    small = _sector_eigen(p.with_n_max(p.n_max - delta_n), sector, small_bounds, dense_limit)
    if small.energies.size == 0:
        shifts = np.full(big.energies.size, np.inf)
    else:
        pos = np.clip(np.searchsorted(small.energies, big.energies), 1, small.energies.size - 1) \
            if small.energies.size > 1 else np.zeros(big.energies.size, int)
        cand = np.stack([small.energies[pos - 1], small.energies[pos]]) if small.energies.size > 1 \
            else small.energies[pos][None]
        shifts = np.abs(cand - big.energies).min(axis=0)
    keep = shifts < ENERGY_GATE
    modes = big.iso @ big.modes[:, keep]
    amps = modes.T @ psi0 / math.sqrt(nrm)
    deficit = 1.0 - float(amps @ amps)
    if deficit > NORM_GATE:
        raise TruncationInsufficient(deficit, p.n_max)
    return ConvergedEigenSystem(big.energies[keep], modes, amps, sector, shifts[keep],
                                int(big.energies.size), p, delta_n, bounds, E0, sigma_E,
                                {"psi0_norm": float(math.sqrt(nrm)), "deficit": deficit})


def spin_moments_ecb(ces: ConvergedEigenSystem) -> tuple[np.ndarray, np.ndarray]:
    """<S_z> and <S_z^2> in each retained eigenstate."""
    sz = ecb_operators(ces.params).Sz
    sv = sz @ ces.modes
    return np.einsum("in,in->n", ces.modes, sv), np.einsum("in,in->n", sv, sv)


def spectral_sz_variance(ces: ConvergedEigenSystem, times) -> np.ndarray:
    """Var(S_z)(t) of psi0 evolved in the retained eigenbasis."""
    sz = ecb_operators(ces.params).Sz
    sv = sz @ ces.modes
    m1 = ces.modes.T @ sv
    m2 = sv.T @ sv
    c = ces.amplitudes
    out = np.empty(len(times))
    for i, t in enumerate(np.asarray(times, dtype=float)):
        a = c * np.exp(-1j * ces.energies * t)
        s1 = np.vdot(a, m1 @ a).real
        s2 = np.vdot(a, m2 @ a).real
        out[i] = s2 - s1 * s1
    return out
