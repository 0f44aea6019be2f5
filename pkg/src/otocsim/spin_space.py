"""Collective-spin (two-mode Fock) machinery.

The basis for ``N`` bosons in two modes is labelled by the occupation ``k`` of
mode 2, ``k = 0..N``, which is the S_z eigenbasis with ``m = k - N/2``.
Coordinates on the Bloch sphere are the normalised imbalance
``z = 2<S_z>/N`` in [-1, 1] and the relative phase
``phi = -arg(<S_x> + i<S_y>)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import digamma, gammaln

ENTROPY_FLOOR = 1e-14


def log_binom(n, k):
    """Natural log of the binomial coefficient, vectorised over ``k``."""
    k = np.asarray(k, dtype=float)
    return gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)


@dataclass(frozen=True)
class SpinBasis:
    n_particles: int

    def __post_init__(self):
        if int(self.n_particles) < 1:
            raise ValueError(f"n_particles must be >= 1, got {self.n_particles}")

    @property
    def dimension(self) -> int:
        return self.n_particles + 1

    @property
    def labels(self) -> np.ndarray:
        return np.arange(self.dimension)

    @property
    def m(self) -> np.ndarray:
        return self.labels - self.n_particles / 2.0


def ladder_elements(N: int) -> np.ndarray:
    """Off-diagonal elements <k+1|S_+|k> = sqrt((k+1)(N-k)), k = 0..N-1."""
    k = np.arange(N, dtype=float)
    return np.sqrt((k + 1.0) * (N - k))


def build_spin_operators(N: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense S_x, S_y, S_z for spin j = N/2 in the S_z eigenbasis (ascending m)."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    sp = np.diag(ladder_elements(N), -1).astype(complex)  # S_+ raises k
    sx = 0.5 * (sp + sp.conj().T)
    sy = -0.5j * (sp - sp.conj().T)
    sz = np.diag(np.arange(N + 1) - N / 2.0).astype(complex)
    return sx, sy, sz


def bloch_coherent(N: int, z: float, phi: float) -> np.ndarray:
    """Bloch coherent state with 2<S_z>/N = z and -arg(<S_+>) = phi.

    Amplitudes are ``sqrt(C(N,k)) cos(t/2)^(N-k) (e^{i phi} sin(t/2))^k`` with
    ``t = arccos(-z)``, assembled in log space so that N ~ 10^3 is safe.
    """
    if abs(z) > 1.0 + 1e-15:
        raise ValueError(f"|z| must be <= 1, got z={z}")
    z = float(np.clip(z, -1.0, 1.0))
    k = np.arange(N + 1)
    c = np.sqrt((1.0 - z) / 2.0)  # cos(t/2)
    s = np.sqrt((1.0 + z) / 2.0)  # sin(t/2)
    with np.errstate(divide="ignore", invalid="ignore"):
        logmag = 0.5 * log_binom(N, k) + (N - k) * np.log(c) + k * np.log(s)
    amp = np.where(np.isfinite(logmag), np.exp(logmag), 0.0)
    # 0**0 == 1 at the poles
    if c == 0.0:
        amp[-1] = 1.0
    if s == 0.0:
        amp[0] = 1.0
    psi = amp * np.exp(1j * k * phi)
    return psi / np.linalg.norm(psi)


def expectation(psi: np.ndarray, op) -> complex:
    return np.vdot(psi, op @ psi)


def spin_moments(psi: np.ndarray) -> dict[str, float]:
    """<S_a> and Var(S_a) for a = x, y, z, using the tridiagonal structure."""
    N = psi.shape[0] - 1
    lad = ladder_elements(N)
    # <S_+> = sum_k conj(c_{k+1}) c_k lad_k
    splus = np.sum(np.conj(psi[1:]) * psi[:-1] * lad)
    m = np.arange(N + 1) - N / 2.0
    p = np.abs(psi) ** 2
    mz = float(p @ m)
    vz = float(p @ m**2) - mz**2
    # <S_+^2> and <S_+ S_- + S_- S_+>
    s2 = np.sum(np.conj(psi[2:]) * psi[:-2] * lad[1:] * lad[:-1]) if N >= 2 else 0.0
    up = np.concatenate([lad, [0.0]])  # |<k+1|S_+|k>|
    down = np.concatenate([[0.0], lad])  # |<k-1|S_-|k>|
    anti = float(p @ (up**2 + down**2))
    mx = float(np.real(splus))
    my = float(np.imag(splus))
    # S_x^2 = (S_+^2 + S_-^2 + {S_+,S_-}) / 4 ; S_y^2 = (-S_+^2 - S_-^2 + {S_+,S_-}) / 4
    sx2 = 0.25 * (2.0 * np.real(s2) + anti)
    sy2 = 0.25 * (-2.0 * np.real(s2) + anti)
    return {
        "Sx": mx, "Sy": my, "Sz": mz,
        "VarSx": sx2 - mx**2, "VarSy": sy2 - my**2, "VarSz": vz,
    }


def reduced_density_matrix(psi: np.ndarray, s: int) -> np.ndarray:
    """Reduced state of ``s`` particles after tracing out the other ``N - s``.

    Returned in the (s+1)-dimensional symmetric basis of the subsystem,
    labelled by its mode-2 occupation.
    """
    N = psi.shape[0] - 1
    if not 0 <= s <= N:
        raise ValueError(f"subsystem size s={s} outside [0, {N}]")
    a = _schmidt_matrix(psi, s)
    return a @ a.conj().T


def _schmidt_matrix(psi: np.ndarray, s: int) -> np.ndarray:
    N = psi.shape[0] - 1
    m = np.arange(s + 1)[:, None]
    j = np.arange(N - s + 1)[None, :]
    weight = 0.5 * (log_binom(s, m) + log_binom(N - s, j) - log_binom(N, m + j))
    return psi[m + j] * np.exp(weight)


def von_neumann_entropy(rho: np.ndarray) -> float:
    """-Tr rho ln rho in nats; eigenvalues below 1e-14 are dropped."""
    lam = np.linalg.eigvalsh(rho)
    if lam.min() < -1e-8:
        raise ValueError(f"density matrix has a negative eigenvalue {lam.min():.3e}")
    lam = lam[lam > ENTROPY_FLOOR]
    return float(-np.sum(lam * np.log(lam)))


def entanglement_entropy(psi: np.ndarray, s: int) -> float:
    return von_neumann_entropy(reduced_density_matrix(psi, s))


def page_curve(d_a: int, d_b: int) -> float:
    """Mean entanglement entropy of a d_a-dimensional subsystem of a random pure state."""
    if d_a < 1 or d_b < 1:
        raise ValueError("dimensions must be positive")
    if d_a > d_b:
        raise ValueError(f"page_curve needs d_a <= d_b, got {d_a} > {d_b}")
    return float(digamma(d_a * d_b + 1) - digamma(d_b + 1) - (d_a - 1) / (2.0 * d_b))


def dimer_page_value(N: int, s: int) -> float:
    s = min(s, N - s)
    return page_curve(s + 1, N - s + 1)


@dataclass(frozen=True)
class QGrid:
    z: np.ndarray
    phi: np.ndarray
    values: np.ndarray  # shape (len(z), len(phi))

    def integral(self) -> float:
        """Trapezoid in z, periodic rectangle rule in phi."""
        dphi = 2.0 * np.pi / len(self.phi)
        return float(trapezoid(self.values.sum(axis=1) * dphi, self.z))

    def argmax(self) -> tuple[float, float]:
        i, j = np.unravel_index(np.argmax(self.values), self.values.shape)
        return float(self.z[i]), float(self.phi[j])

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w") as fh:
            fh.write("# z: " + ",".join(f"{v:.12g}" for v in self.z) + "\n")
            fh.write("# phi: " + ",".join(f"{v:.12g}" for v in self.phi) + "\n")
            for row in self.values:
                fh.write(",".join(f"{v:.12g}" for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "QGrid":
        lines = Path(path).read_text().splitlines()
        z = np.array([float(v) for v in lines[0].split(":", 1)[1].split(",")])
        phi = np.array([float(v) for v in lines[1].split(":", 1)[1].split(",")])
        vals = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:] if ln])
        return cls(z, phi, vals)


def husimi_q(psi: np.ndarray, n_z: int = 101, n_phi: int = 128,
             z: np.ndarray | None = None, phi: np.ndarray | None = None) -> QGrid:
    """Husimi Q(z, phi) = (N+1)/(4 pi) |<z,phi|psi>|^2 on a (z, phi) grid."""
    N = psi.shape[0] - 1
    if z is None:
        z = np.linspace(-1.0, 1.0, n_z)
    if phi is None:
        phi = -np.pi + 2.0 * np.pi * np.arange(n_phi) / n_phi
    z = np.asarray(z, dtype=float)
    phi = np.asarray(phi, dtype=float)
    k = np.arange(N + 1)
    # <z,phi|psi> = sum_k conj(c_k(z)) e^{-i k phi} psi_k
    zc = np.clip(z, -1.0, 1.0)
    c = np.sqrt((1.0 - zc) / 2.0)[:, None]
    s = np.sqrt((1.0 + zc) / 2.0)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        logmag = 0.5 * log_binom(N, k)[None, :] + (N - k) * np.log(c) + k * np.log(s)
    amp = np.where(np.isfinite(logmag), np.exp(logmag), 0.0)
    amp[c[:, 0] == 0.0, -1] = 1.0
    amp[s[:, 0] == 0.0, 0] = 1.0
    phases = np.exp(-1j * np.outer(k, phi))  # (N+1, n_phi)
    overlaps = (amp * psi[None, :]) @ phases
    vals = (N + 1) / (4.0 * np.pi) * np.abs(overlaps) ** 2
    return QGrid(z, phi, vals)
