"""Mean-field and truncated-Wigner dynamics of the dimer.

The mean-field flow is integrated for the normalised Bloch vector
r = 2<S>/N = (sqrt(1-z^2) cos phi, -sqrt(1-z^2) sin phi, z), which has no
coordinate singularity at the poles:

    dX/dt = -2 NU Z Y,   dY/dt = 2 NU Z X + 2 J(t) Z,   dZ/dt = -2 J(t) Y.

In (z, phi) this is dz/dt = 2J sqrt(1-z^2) sin phi and
dphi/dt = -2 NU z - 2J z cos phi / sqrt(1-z^2), generated by
H_cl = (N/2)[NU z^2 - 2J sqrt(1-z^2) cos phi].
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from .dimer import DimerParams
from .errors import NumericalError
from .scrambling import TimeSeries

RTOL = 1e-11
ATOL = 1e-12


@dataclass(frozen=True)
class PhasePoint:
    z: float
    phi: float

    def __post_init__(self):
        if abs(self.z) > 1.0:
            raise ValueError(f"|z| must be <= 1, got {self.z}")
        object.__setattr__(self, "phi", wrap_phase(self.phi))

    def bloch(self) -> np.ndarray:
        rho = math.sqrt(max(0.0, 1.0 - self.z**2))
        return np.array([rho * math.cos(self.phi), -rho * math.sin(self.phi), self.z])

    @classmethod
    def from_bloch(cls, r) -> "PhasePoint":
        x, y, z = r
        return cls(float(np.clip(z, -1.0, 1.0)), float(-math.atan2(y, x)))


def wrap_phase(phi):
    return (np.asarray(phi) + np.pi) % (2.0 * np.pi) - np.pi if np.ndim(phi) else \
        (phi + math.pi) % (2.0 * math.pi) - math.pi


def meanfield_rhs(pt: PhasePoint, params: DimerParams, t: float = 0.0) -> tuple[float, float]:
    """(dz/dt, dphi/dt) in the (z, phi) chart."""
    z, phi = pt.z, pt.phi
    if abs(z) > 1.0 - 1e-12:
        raise ValueError("meanfield_rhs is singular at the poles")
    J = float(params.J(t))
    rho = math.sqrt(1.0 - z * z)
    return (2.0 * J * rho * math.sin(phi),
            -2.0 * params.NU * z - 2.0 * J * z * math.cos(phi) / rho)


def bloch_rhs(t, r, NU, J0, mu, omega):
    x, y, z = r
    J = J0 * (1.0 + mu * math.cos(omega * t))
    return [-2.0 * NU * z * y, 2.0 * NU * z * x + 2.0 * J * z, -2.0 * J * y]


def _bloch_jacobian(r, NU, J):
    x, y, z = r
    return np.array([
        [0.0, -2.0 * NU * z, -2.0 * NU * y],
        [2.0 * NU * z, 0.0, 2.0 * NU * x + 2.0 * J],
        [0.0, -2.0 * J, 0.0],
    ])


def _tangent_rhs(t, w, NU, J0, mu, omega):
    r, v = w[:3], w[3:]
    J = J0 * (1.0 + mu * math.cos(omega * t))
    return np.concatenate([bloch_rhs(t, r, NU, J0, mu, omega), _bloch_jacobian(r, NU, J) @ v])


def classical_energy(r, params: DimerParams, t: float = 0.0) -> np.ndarray:
    """H_cl in units of N/2: NU Z^2 - 2 J X."""
    r = np.asarray(r)
    return params.NU * r[..., 2] ** 2 - 2.0 * params.J(t) * r[..., 0]


def polar_jacobian(params: DimerParams, pt: PhasePoint) -> np.ndarray:
    """Analytic d(dz, dphi)/d(z, phi)."""
    z, phi = pt.z, pt.phi
    J = params.J0
    rho = math.sqrt(1.0 - z * z)
    return np.array([
        [-2.0 * J * z * math.sin(phi) / rho, 2.0 * J * rho * math.cos(phi)],
        [-2.0 * params.NU - 2.0 * J * math.cos(phi) / rho**3, 2.0 * J * z * math.sin(phi) / rho],
    ])


def _numeric_jacobian(params, pt, h=1e-6):
    cols = []
    for dz, dp in ((h, 0.0), (0.0, h)):
        fp = np.array(meanfield_rhs(PhasePoint(pt.z + dz, pt.phi + dp), params))
        fm = np.array(meanfield_rhs(PhasePoint(pt.z - dz, pt.phi - dp), params))
        cols.append((fp - fm) / (2.0 * h))
    return np.column_stack(cols)


def linear_stability(params: DimerParams, fp: PhasePoint) -> np.ndarray:
    """Eigenvalues of the static-flow Jacobian at a fixed point, ascending by (real, imag)."""
    resid = np.abs(meanfield_rhs(fp, DimerParams(params.N, params.U, params.J0))).max()
    if resid > 1e-10:
        raise ValueError(f"({fp.z}, {fp.phi}) is not a fixed point (residual {resid:.2e})")
    jac = polar_jacobian(params, fp)
    if np.abs(jac - _numeric_jacobian(params, fp)).max() > 1e-5 * max(1.0, np.abs(jac).max()):
        raise NumericalError("analytic and finite-difference Jacobians disagree")
    # 2x2 closed form keeps the real saddle pair exact
    tr = jac[0, 0] + jac[1, 1]
    det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
    disc = complex(tr * tr / 4.0 - det)
    root = np.sqrt(disc)
    ev = np.array([tr / 2.0 - root, tr / 2.0 + root])
    if abs(disc.imag) == 0 and disc.real >= 0:
        return ev.real
    return ev


@dataclass
class LyapunovEstimate:
    value: float
    uncertainty: float
    intervals: int
    interval: float


def lyapunov_tangent(params: DimerParams, ic: PhasePoint, horizon: float = 1e4,
                     interval: float | None = None, blocks: int = 10,
                     max_uncertainty: float = 0.05) -> LyapunovEstimate:
    """Largest Lyapunov exponent by tangent-vector renormalisation.

    The interval defaults to one drive period (driven) or 1/J0 (static). The
    uncertainty is the standard error over ``blocks`` contiguous block means.
    """
    if interval is None:
        interval = params.period if params.driven else 1.0 / params.J0
    n = int(round(horizon / interval))
    if n < 2 * blocks:
        raise ValueError("horizon must span at least 2*blocks renormalisation intervals")
    args = (params.NU, params.J0, params.mu, params.omega)
    r = ic.bloch()
    # initial tangent: along phi direction, orthogonal to r
    v = np.cross([0.0, 0.0, 1.0], r)
    if np.linalg.norm(v) < 1e-12:
        v = np.array([1.0, 0.0, 0.0])
    v /= np.linalg.norm(v)
    logs = np.empty(n)
    t = 0.0
    for i in range(n):
        sol = solve_ivp(_tangent_rhs, (t, t + interval), np.concatenate([r, v]), method="DOP853",
                        rtol=RTOL, atol=ATOL, args=args)
        if not sol.success:
            raise NumericalError(f"tangent integration failed: {sol.message}")
        r = sol.y[:3, -1]
        r /= np.linalg.norm(r)
        v = sol.y[3:, -1]
        v -= (v @ r) * r
        g = np.linalg.norm(v)
        logs[i] = math.log(g)
        v /= g
        t += interval
    lam = logs.sum() / (n * interval)
    per = n // blocks
    means = logs[: per * blocks].reshape(blocks, per).sum(axis=1) / (per * interval)
    err = float(means.std(ddof=1) / math.sqrt(blocks))
    if err > max_uncertainty:
        raise NumericalError(f"Lyapunov estimate not converged: {lam:.4g} +/- {err:.2g}")
    return LyapunovEstimate(float(lam), err, n, float(interval))


def finite_time_exponent(params: DimerParams, ic: PhasePoint, t_end: float) -> float:
    """ln |v(t)| / t for a single un-renormalised tangent vector."""
    args = (params.NU, params.J0, params.mu, params.omega)
    r = ic.bloch()
    v = np.array([0.0, 0.0, 1.0]) if abs(r[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    v -= (v @ r) * r
    v /= np.linalg.norm(v)
    sol = solve_ivp(_tangent_rhs, (0.0, t_end), np.concatenate([r, v]), method="DOP853",
                    rtol=RTOL, atol=ATOL, args=args)
    return float(math.log(np.linalg.norm(sol.y[3:, -1])) / t_end)


@dataclass
class Portrait:
    traj_id: np.ndarray
    t: np.ndarray
    z: np.ndarray
    phi: np.ndarray

    def to_csv(self, path) -> None:
        with Path(path).open("w") as fh:
            fh.write("traj,t,z,phi\n")
            for row in zip(self.traj_id, self.t, self.z, self.phi):
                fh.write(f"{row[0]},{row[1]:.12g},{row[2]:.12g},{row[3]:.12g}\n")


def phase_portrait(params: DimerParams, ics: list[PhasePoint], horizon: float,
                   dt: float = 0.1, energy_tol: float = 1e-8) -> Portrait:
    """Trajectories sampled every ``dt`` (static) or once per drive period (driven)."""
    step = params.period if params.driven else dt
    ts = np.arange(0.0, horizon + 0.5 * step, step)
    args = (params.NU, params.J0, params.mu, params.omega)
    ids, tt, zz, pp = [], [], [], []
    for i, ic in enumerate(ics):
        sol = solve_ivp(bloch_rhs, (0.0, ts[-1]), ic.bloch(), method="DOP853", t_eval=ts,
                        rtol=1e-12, atol=1e-13, args=args)
        if not sol.success:
            raise NumericalError(f"trajectory {i} failed: {sol.message}")
        r = sol.y.T
        if not params.driven:
            drift = np.abs(classical_energy(r, params) - classical_energy(r[0], params)).max()
            if drift > energy_tol:
                raise NumericalError(f"trajectory {i} energy drift {drift:.2e}")
        ids.append(np.full(ts.size, i))
        tt.append(ts)
        zz.append(np.clip(r[:, 2], -1.0, 1.0))
        pp.append(-np.arctan2(r[:, 1], r[:, 0]))
    return Portrait(np.concatenate(ids), np.concatenate(tt), np.concatenate(zz),
                    wrap_phase(np.concatenate(pp)))


@dataclass
class TrajectoryEnsemble:
    alpha1: np.ndarray
    alpha2: np.ndarray
    seed: int
    N: int

    def __len__(self):
        return self.alpha1.size

    def spin(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Weyl symbols (S_x, S_y, S_z) per sample."""
        s_plus = np.conj(self.alpha2) * self.alpha1
        return s_plus.real, s_plus.imag, 0.5 * (np.abs(self.alpha2) ** 2 - np.abs(self.alpha1) ** 2)


# Weyl symbol of S_x^2 exceeds (S_x symbol)^2 by this constant
WEYL_SX2_SHIFT = 0.125


def wigner_sample(pt: PhasePoint, N: int, n_samples: int, seed: int) -> TrajectoryEnsemble:
    """Gaussian Wigner samples of the Bloch coherent state at ``pt``.

    In the frame where the state is all-in-one-mode, the occupied amplitude has
    |a|^2 = N + 1/2 + xi/2 (xi standard normal, fixing the total number) and the
    empty mode carries vacuum noise with 1/4 per quadrature. The frame is then
    rotated to (z, phi). All randomness comes from one generator seeded by
    ``seed`` and is drawn up front.
    """
    if n_samples < 100:
        raise ValueError("n_samples must be >= 100")
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal(n_samples)
    q = rng.standard_normal((2, n_samples))
    a = np.sqrt(np.maximum(N + 0.5 + 0.5 * xi, 0.0))
    b = 0.5 * (q[0] + 1j * q[1])
    theta = math.acos(-pt.z)
    u1 = math.cos(theta / 2.0)
    u2 = math.sin(theta / 2.0) * np.exp(1j * pt.phi)
    alpha1 = a * u1 - b * np.conj(u2)
    alpha2 = a * u2 + b * u1
    return TrajectoryEnsemble(alpha1, alpha2, seed, N)


def _tw_rhs(a1, a2, U, J):
    sz = 0.5 * (np.abs(a2) ** 2 - np.abs(a1) ** 2)
    return 1j * (2.0 * U * sz * a1 + J * a2), 1j * (-2.0 * U * sz * a2 + J * a1)


def wigner_fotoc(ens: TrajectoryEnsemble, params: DimerParams, delta: float, times,
                 generator: str = "Sx", substep: float | None = None) -> TimeSeries:
    """Truncated-Wigner FOTOC delta^2 [<S_W^2> - <S_W>^2 - 1/8] with its Monte Carlo error.

    Samples follow the classical Gross-Pitaevskii flow of the two modes with
    classical RK4 at the same substep rule as the quantum integrator.
    """
    times = np.asarray(times, dtype=float)
    dt = times[1] - times[0]
    hmax = params.max_substep() if substep is None else substep
    nsub = max(1, math.ceil(dt / hmax - 1e-9))
    h = dt / nsub
    col = {"Sx": 0, "Sy": 1, "Sz": 2}[generator]
    a1, a2 = ens.alpha1.copy(), ens.alpha2.copy()
    U = params.U
    n = len(ens)
    vals = np.empty(times.size)
    errs = np.empty(times.size)
    for i in range(times.size):
        if i > 0:
            t0 = times[i - 1]
            for k in range(nsub):
                t = t0 + k * h
                J0, Jm, J1 = params.J(t), params.J(t + 0.5 * h), params.J(t + h)
                k1 = _tw_rhs(a1, a2, U, J0)
                k2 = _tw_rhs(a1 + 0.5 * h * k1[0], a2 + 0.5 * h * k1[1], U, Jm)
                k3 = _tw_rhs(a1 + 0.5 * h * k2[0], a2 + 0.5 * h * k2[1], U, Jm)
                k4 = _tw_rhs(a1 + h * k3[0], a2 + h * k3[1], U, J1)
                a1 = a1 + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
                a2 = a2 + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            if not (np.all(np.isfinite(a1)) and np.all(np.isfinite(a2))):
                raise NumericalError(f"Wigner sample diverged before t={times[i]}")
        s = TrajectoryEnsemble(a1, a2, ens.seed, ens.N).spin()[col]
        dev = s - s.mean()
        m2 = np.mean(dev**2)
        m4 = np.mean(dev**4)
        vals[i] = delta**2 * (m2 * n / (n - 1) - WEYL_SX2_SHIFT)
        errs[i] = delta**2 * math.sqrt(max(m4 - m2 * m2, 0.0) / n)
    meta = {"generator": generator, "delta": delta, "samples": n, "seed": ens.seed}
    return TimeSeries(times, vals, "fotoc_tw", meta, {"stderr": errs})
