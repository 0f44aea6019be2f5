"""FOTOCs, diagonal-ensemble predictions, entropies, spectra and growth fits.

The fidelity OTOC with V the projector on |psi0> and W = exp(i delta S_a)
reduces to ``C(t) = 1 - |<psi(t)| exp(i delta S_a) |psi(t)>|^2``, so only the
forward trajectory psi(t) = U(t) psi0 is needed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
from scipy.signal import find_peaks

from .errors import EmptyWindow, NoGrowthWindow, NumericalError
from .spin_space import entanglement_entropy, ladder_elements

GENERATORS = ("Sx", "Sy", "Sz")


@dataclass(frozen=True)
class FotocSpec:
    generator: str = "auto"
    delta: float = 1e-2
    mode: str = "variance"  # variance | exact

    def __post_init__(self):
        if self.generator not in GENERATORS + ("auto",):
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.mode not in ("variance", "exact"):
            raise ValueError(f"unknown FOTOC mode {self.mode!r}")
        if self.delta <= 0 or (self.mode == "exact" and self.delta > 0.1):
            raise ValueError(f"delta={self.delta} outside (0, 0.1]")


@dataclass
class TimeSeries:
    times: np.ndarray
    values: np.ndarray
    label: str = "value"
    meta: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)  # additional named columns

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values differ in length")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"non-finite values in series {self.label!r}")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def to_csv(self, path) -> None:
        cols = ["t", "value", *self.extra]
        data = np.column_stack([self.times, self.values, *self.extra.values()])
        with Path(path).open("w") as fh:
            fh.write(f"# label: {self.label}\n")
            for k in sorted(self.meta):
                fh.write(f"# {k}: {self.meta[k]}\n")
            fh.write(",".join(cols) + "\n")
            for row in data:
                fh.write(",".join(f"{v:.12g}" for v in row) + "\n")


@dataclass
class Spectrum:
    omega: np.ndarray
    amplitude: np.ndarray
    window: str

    def to_csv(self, path) -> None:
        with Path(path).open("w") as fh:
            fh.write(f"# window: {self.window}\n")
            fh.write("omega,amplitude\n")
            for w, a in zip(self.omega, self.amplitude):
                fh.write(f"{w:.12g},{a:.12g}\n")


@dataclass
class DiagonalDistribution:
    weights: np.ndarray
    energies: np.ndarray

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def magnitude_order(self) -> np.ndarray:
        n = np.arange(self.weights.size)
        return np.lexsort((n, np.abs(self.energies)))

    def top(self, k: int) -> np.ndarray:
        """Indices of the k largest weights, heaviest first."""
        return np.argsort(-self.weights, kind="stable")[:k]

    def to_csv(self, path) -> None:
        with Path(path).open("w") as fh:
            fh.write("n,energy,weight\n")
            for n in self.magnitude_order():
                fh.write(f"{n},{self.energies[n]:.12g},{self.weights[n]:.12g}\n")


class SpinGenerator:
    """S_x, S_y or S_z of the dimer acting as a sparse tridiagonal map."""

    def __init__(self, N: int, name: str):
        if name not in GENERATORS:
            raise ValueError(f"unknown generator {name!r}")
        self.N = N
        self.name = name
        self._lad = ladder_elements(N)
        self._m = np.arange(N + 1) - N / 2.0

    def matrix(self) -> np.ndarray:
        if self.name == "Sz":
            return np.diag(self._m).astype(complex)
        half = 0.5 * self._lad
        if self.name == "Sx":
            return (np.diag(half, 1) + np.diag(half, -1)).astype(complex)
        return np.diag(0.5j * self._lad, 1) + np.diag(-0.5j * self._lad, -1)

    def apply(self, v: np.ndarray) -> np.ndarray:
        """S v for vectors (last axis = basis) or batches of row states."""
        if self.name == "Sz":
            return self._m * v
        lo = 0.5 * self._lad  # <k+1|S_+|k>/2
        out = np.zeros_like(v, dtype=complex)
        if self.name == "Sx":
            out[..., 1:] += lo * v[..., :-1]
            out[..., :-1] += lo * v[..., 1:]
        else:
            out[..., 1:] += -1j * lo * v[..., :-1]
            out[..., :-1] += 1j * lo * v[..., 1:]
        return out

    def rotation(self, delta: float) -> np.ndarray:
        """Dense exp(i delta S)."""
        if self.name == "Sz":
            return np.diag(np.exp(1j * delta * self._m))
        s, w = sla.eigh(self.matrix())
        return (w * np.exp(1j * delta * s)) @ w.conj().T


def resolve_generator(psi0: np.ndarray, name: str = "auto") -> str:
    """The explicit name, or argmax_a |<S_a>| for ``auto`` (first wins ties)."""
    if name != "auto":
        return name
    N = psi0.shape[0] - 1
    means = [abs(np.vdot(psi0, SpinGenerator(N, g).apply(psi0))) for g in GENERATORS]
    best = max(means)
    return GENERATORS[next(i for i, m in enumerate(means) if m >= best * (1 - 1e-12))]


def state_variances(states: np.ndarray, gen: SpinGenerator) -> np.ndarray:
    sv = gen.apply(states)
    mean = np.einsum("ti,ti->t", states.conj(), sv).real
    sq = np.einsum("ti,ti->t", sv.conj(), sv).real
    return sq - mean**2


def fotoc(states: np.ndarray, times, spec: FotocSpec, psi0: np.ndarray | None = None,
          guard: bool = True) -> TimeSeries:
    """FOTOC along a precomputed trajectory (rows of ``states``)."""
    states = np.asarray(states)
    N = states.shape[1] - 1
    name = resolve_generator(states[0] if psi0 is None else psi0, spec.generator)
    gen = SpinGenerator(N, name)
    var_c = spec.delta**2 * state_variances(states, gen)
    meta = {"generator": name, "delta": spec.delta, "mode": spec.mode}
    if spec.mode == "variance":
        return TimeSeries(times, var_c, "fotoc", meta)
    rot = gen.rotation(spec.delta)
    amp = np.einsum("ti,ti->t", states.conj(), states @ rot.T)
    exact = 1.0 - np.abs(amp) ** 2
    if guard:
        gap = np.abs(exact - var_c).max()
        if gap > 10.0 * spec.delta**3 * N**3:
            raise NumericalError(f"exact and variance FOTOC differ by {gap:.3e}")
    return TimeSeries(times, exact, "fotoc", meta)


def ude_prediction(N: int, delta: float) -> float:
    return delta**2 * N * (N + 2) / 12.0


def diagonal_distribution(psi0: np.ndarray, modes: np.ndarray, energies: np.ndarray) -> DiagonalDistribution:
    c = modes.conj().T @ psi0
    return DiagonalDistribution(np.abs(c) ** 2, np.asarray(energies, dtype=float))


def eigen_moments(modes: np.ndarray, gen: SpinGenerator) -> tuple[np.ndarray, np.ndarray]:
    """<Phi_n|S|Phi_n> and <Phi_n|S^2|Phi_n> for every column of ``modes``."""
    sv = gen.apply(modes.T)
    s1 = np.einsum("ni,ni->n", modes.T.conj(), sv).real
    s2 = np.einsum("ni,ni->n", sv.conj(), sv).real
    return s1, s2


def de_prediction(weights: np.ndarray, s1: np.ndarray, s2: np.ndarray, delta: float,
                  convention: str = "variance_of_average") -> float:
    """Diagonal-ensemble FOTOC.

    ``variance_of_average``: delta^2 [sum p <S^2>_n - (sum p <S>_n)^2].
    ``average_of_variance``: delta^2 sum p (<S^2>_n - <S>_n^2).
    """
    p = np.asarray(weights, dtype=float)
    if convention == "variance_of_average":
        return float(delta**2 * (p @ s2 - (p @ s1) ** 2))
    if convention == "average_of_variance":
        return float(delta**2 * (p @ (s2 - s1**2)))
    raise ValueError(f"unknown DE convention {convention!r}")


def microcanonical_prediction(energies: np.ndarray, s1: np.ndarray, s2: np.ndarray,
                              E0: float, sigma_E: float, delta: float) -> tuple[float, int]:
    """Unweighted mean of delta^2 Var_n(S) over eigenstates with |E_n - E0| <= sigma_E."""
    win = np.abs(np.asarray(energies) - E0) <= sigma_E
    count = int(win.sum())
    if count == 0:
        raise EmptyWindow(f"no eigenstates within [{E0 - sigma_E:.6g}, {E0 + sigma_E:.6g}]")
    return float(delta**2 * np.mean(s2[win] - s1[win] ** 2)), count


def diagonal_entropy(weights) -> float:
    p = np.asarray(weights, dtype=float)
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def goe_entropy(N: int) -> float:
    return math.log(0.48 * (N + 1))


def entanglement_series(states: np.ndarray, s: int, times) -> TimeSeries:
    vals = np.array([entanglement_entropy(psi, s) for psi in states])
    return TimeSeries(times, vals, f"S_E(s={s})", {"s": s})


def _uniform_dt(times: np.ndarray) -> float:
    d = np.diff(times)
    if d.size == 0 or np.abs(d - d[0]).max() > 1e-9 * max(1.0, abs(times[-1])):
        raise ValueError("fourier_spectrum needs a uniform time grid")
    return float(d[0])


def fourier_spectrum(ts: TimeSeries, window: str = "rectangular") -> Spectrum:
    """One-sided amplitude spectrum of the mean-subtracted series.

    Angular frequencies are 2 pi k / (n dt). A rectangular-window cosine
    A cos(w t) sampled over whole periods gives a single bin of height A.
    """
    x = ts.values
    n = x.size
    if n < 16:
        raise ValueError("fourier_spectrum needs at least 16 samples")
    dt = _uniform_dt(ts.times)
    if window == "rectangular":
        w = np.ones(n)
    elif window == "hann":
        w = np.hanning(n)
    else:
        raise ValueError(f"unknown window {window!r}")
    y = (x - x.mean()) * w
    amp = np.abs(np.fft.rfft(y)) / w.sum()
    amp[1:] *= 2.0
    if n % 2 == 0:
        amp[-1] /= 2.0
    omega = 2.0 * np.pi * np.fft.rfftfreq(n, dt)
    return Spectrum(omega, amp, window)


def spectral_peaks(spec: Spectrum, count: int = 2, min_omega: float = 0.0) -> np.ndarray:
    """Bin indices of the ``count`` tallest local maxima above ``min_omega``, by frequency."""
    idx, _ = find_peaks(spec.amplitude)
    idx = idx[spec.omega[idx] > min_omega]
    tallest = idx[np.argsort(-spec.amplitude[idx], kind="stable")[:count]]
    return np.sort(tallest)


def transition_frequencies(weights: np.ndarray, energies: np.ndarray, k: int,
                           omega_drive: float | None = None) -> list[tuple[int, int, float]]:
    """Pairwise |E_n - E_m| among the k heaviest eigenstates, ascending.

    With ``omega_drive`` the gaps are taken modulo the drive frequency and
    folded into [0, omega/2].
    """
    if k < 2:
        raise ValueError("need k >= 2")
    top = np.argsort(-np.asarray(weights), kind="stable")[:k]
    out = []
    for a in range(len(top)):
        for b in range(a + 1, len(top)):
            n, m = int(top[a]), int(top[b])
            gap = abs(float(energies[n] - energies[m]))
            if omega_drive is not None:
                gap = gap % omega_drive
                gap = min(gap, omega_drive - gap)
            out.append((min(n, m), max(n, m), gap))
    return sorted(out, key=lambda r: (r[2], r[0], r[1]))


@dataclass
class GrowthFit:
    rate: float
    ehrenfest_time: float | None
    r_squared: float
    t_lo: float
    t_hi: float
    c_lo: float
    c_hi: float
    points: int


def fit_growth_and_ehrenfest(ts: TimeSeries, target: float, lo: float | None = None,
                             hi: float = 0.1, ehrenfest_fraction: float = 0.9) -> GrowthFit:
    """Exponential rate of C(t) and the time it first reaches 0.9 * target.

    The fit band is [max(10 C(0), lo * target), hi * target]; ``lo`` defaults to
    0 so that the band floor is 10 C(0). The fit uses the first monotonically
    increasing run of samples that starts inside the band.
    """
    C = ts.values
    t = ts.times
    if target <= 0:
        raise ValueError("target must be positive")
    floor = max(10.0 * C[0], (lo or 0.0) * target)
    ceil = hi * target
    if floor <= 0 or floor >= ceil:
        raise NoGrowthWindow(f"fit band [{floor:.3e}, {ceil:.3e}] is empty or touches zero")
    above = np.nonzero(C >= floor)[0]
    if above.size == 0 or C[above[0]] > ceil:
        raise NoGrowthWindow("series never enters the fit band")
    i0 = i1 = int(above[0])
    while i1 + 1 < C.size and C[i1 + 1] > C[i1] and C[i1 + 1] <= ceil:
        i1 += 1
    if i1 - i0 < 2:
        raise NoGrowthWindow(f"only {i1 - i0 + 1} samples inside the fit band")
    x, y = t[i0:i1 + 1], np.log(C[i0:i1 + 1])
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss if ss > 0 else 1.0
    reach = np.nonzero(C >= ehrenfest_fraction * target)[0]
    t_e = float(t[reach[0]]) if reach.size else None
    return GrowthFit(float(slope), t_e, float(r2), float(x[0]), float(x[-1]),
                     float(floor), float(ceil), int(x.size))


def window_stats(ts: TimeSeries, t_lo: float, t_hi: float) -> tuple[float, float]:
    sel = (ts.times >= t_lo - 1e-9) & (ts.times <= t_hi + 1e-9)
    if not sel.any():
        raise EmptyWindow(f"no samples in [{t_lo}, {t_hi}]")
    v = ts.values[sel]
    return float(v.mean()), float(v.std())
