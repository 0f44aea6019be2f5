"""Named experiments: config parsing (all validation up front) and execution."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import dicke as dk
from . import dimer as dm
from . import scrambling as sc
from . import semiclassics as scl
from .errors import ConfigError
from .io import Section, eigensystem_to_csv, observables_to_csv, write_json, write_rows
from .spin_space import bloch_coherent, dimer_page_value, husimi_q, spin_moments


# ---- shared parsers --------------------------------------------------------

def parse_dimer(cfg: Section) -> dm.DimerParams:
    m = cfg.sub("model")
    N = m.get("N", int, check=lambda v: v >= 1, msg="N must be >= 1")
    if m.has("NU") == m.has("U"):
        raise ConfigError("model.NU", "give exactly one of NU or U")
    U = m.get("NU", float) / N if m.has("NU") else m.get("U", float)
    J0 = m.get("J0", float, 1.0, lambda v: v > 0, "J0 must be > 0")
    mu = m.get("mu", float, 0.0)
    omega = m.get("omega", float, 0.0)
    if mu != 0 and omega <= 0:
        raise ConfigError("model.omega", "omega must be > 0 when mu != 0")
    return dm.DimerParams(N, U, J0, mu, omega)


def parse_point(cfg: Section, name: str = "state") -> scl.PhasePoint:
    s = cfg.sub(name)
    z = s.get("z", float, check=lambda v: abs(v) <= 1, msg="|z| must be <= 1")
    return scl.PhasePoint(z, s.get("phi", float, 0.0))


def parse_fotoc(cfg: Section, exact_ok: bool = True) -> sc.FotocSpec:
    f = cfg.sub("fotoc", required=False)
    gen = f.choice("generator", sc.GENERATORS + ("auto",), "auto")
    mode = f.choice("mode", ("variance", "exact") if exact_ok else ("variance",), "variance")
    delta = f.get("delta", float, 1e-2, lambda v: v > 0, "delta must be > 0")
    if mode == "exact" and delta > 0.1:
        raise ConfigError("fotoc.delta", "exact mode needs delta <= 0.1")
    return sc.FotocSpec(gen, delta, mode)


def parse_times(cfg: Section) -> np.ndarray:
    t = cfg.sub("time")
    t_max = t.get("t_max", float, check=lambda v: v > 0, msg="t_max must be > 0")
    dt = t.get("dt", float, check=lambda v: 0 < v <= t_max, msg="need 0 < dt <= t_max")
    n = int(round(t_max / dt))
    return dt * np.arange(n + 1)


def parse_window(sec: Section, name: str, default) -> tuple[float, float] | None:
    if not sec.has(name) and default is None:
        return None
    lo, hi = sec.floats(name, default, 2)
    if hi <= lo:
        raise ConfigError(f"{sec.prefix}.{name}", "window must satisfy lo < hi")
    return lo, hi


def parse_fit(an: Section):
    if not an.has("fit"):
        return None
    f = an.sub("fit")
    target = f.get("target", str, "de")
    if target not in ("de", "ude"):
        try:
            target = float(target)
        except ValueError:
            raise ConfigError("analysis.fit.target", "must be de, ude or a number") from None
    return {
        "target": target,
        "lo": f.get("lo", float, 0.0, lambda v: v >= 0),
        "hi": f.get("hi", float, 0.1, lambda v: 0 < v <= 1),
    }


def dimer_states(p: dm.DimerParams, psi0, times):
    return dm.propagate(psi0, p, times)


def dimer_eigen(p: dm.DimerParams) -> dm.EigenSystem:
    if p.driven:
        return dm.floquet_modes(dm.floquet_propagator(p))
    return dm.eigensystem_static(dm.hamiltonian_static(p))


def params_meta(p: dm.DimerParams) -> dict:
    return {"N": p.N, "NU": p.NU, "J0": p.J0, "mu": p.mu, "omega": p.omega}


# ---- experiments -----------------------------------------------------------

@dataclass
class Experiment:
    name: str
    reproduces: str
    required: tuple[str, ...]
    artifacts: tuple[str, ...]
    parse: Callable[[Section], dict]
    execute: Callable[[dict, Path], list[str]]
    needs_seed: bool = False


def _parse_dimer_fotoc(cfg):
    p = parse_dimer(cfg)
    an = cfg.sub("analysis", required=False)
    return {
        "params": p,
        "state": parse_point(cfg),
        "fotoc": parse_fotoc(cfg),
        "times": parse_times(cfg),
        "fit": parse_fit(an),
        "stats": parse_window(an, "stats_window", None),
        "floquet_de": an.get("floquet_de", bool, False),
    }


def _run_dimer_fotoc(a, out: Path):
    p, pt, spec, times = a["params"], a["state"], a["fotoc"], a["times"]
    psi0 = bloch_coherent(p.N, pt.z, pt.phi)
    states = dimer_states(p, psi0, times)
    ts = sc.fotoc(states, times, spec)
    ts.meta.update(params_meta(p))
    ts.to_csv(out / "fotoc.csv")
    observables_to_csv(out / "observables.csv", times, [spin_moments(s) for s in states])
    gen = sc.SpinGenerator(p.N, ts.meta["generator"])
    summary = {"generator": gen.name, "ude": sc.ude_prediction(p.N, spec.delta), **params_meta(p)}
    if not p.driven or a["floquet_de"]:
        eig = dimer_eigen(p)
        w = sc.diagonal_distribution(psi0, eig.modes, eig.energies).weights
        s1, s2 = sc.eigen_moments(eig.modes, gen)
        summary["de"] = sc.de_prediction(w, s1, s2, spec.delta)
        summary["de_average_of_variance"] = sc.de_prediction(w, s1, s2, spec.delta, "average_of_variance")
    if a["fit"] is not None:
        f = a["fit"]
        target = f["target"] if isinstance(f["target"], float) else summary.get(f["target"])
        if target is None:
            raise ConfigError("analysis.fit.target", "DE target needs a static model or floquet_de")
        fit = sc.fit_growth_and_ehrenfest(ts, target, f["lo"], f["hi"])
        summary["fit"] = {**fit.__dict__, "target": target}
        if fit.rate > 0:
            summary["fit"]["ehrenfest_log_estimate"] = math.log(p.N) / fit.rate
    if a["stats"] is not None:
        mean, std = sc.window_stats(ts, *a["stats"])
        summary["window"] = {"t_lo": a["stats"][0], "t_hi": a["stats"][1], "mean": mean, "std": std,
                             "relative_std": std / mean if mean else float("nan")}
    write_json(out / "summary.json", summary)
    return ["fotoc.csv", "observables.csv", "summary.json"]


def _parse_dimer_entropy(cfg):
    p = parse_dimer(cfg)
    an = cfg.sub("analysis", required=False)
    subs = an.get("subsystems", list, [p.N // 2])
    if not subs or any(not isinstance(s, int) or not 0 <= s <= p.N for s in subs):
        raise ConfigError("analysis.subsystems", f"integers in [0, {p.N}] required")
    return {"params": p, "state": parse_point(cfg), "times": parse_times(cfg),
            "subsystems": sorted(set(subs)), "stats": parse_window(an, "stats_window", [20.0, 200.0])}


def _run_dimer_entropy(a, out: Path):
    p, pt, times = a["params"], a["state"], a["times"]
    states = dimer_states(p, bloch_coherent(p.N, pt.z, pt.phi), times)
    rows, files = [], []
    for s in a["subsystems"]:
        ts = sc.entanglement_series(states, s, times)
        ts.meta.update(params_meta(p))
        name = f"entropy_s{s}.csv"
        ts.to_csv(out / name)
        files.append(name)
        mean, std = sc.window_stats(ts, *a["stats"])
        rows.append((s, mean, std, mean - 2 * std, mean + 2 * std, dimer_page_value(p.N, s)))
    write_rows(out / "table.csv", ["s", "mean", "std", "lo_2std", "hi_2std", "page"], rows,
               {"window": f"{a['stats'][0]:g}..{a['stats'][1]:g}"})
    return files + ["table.csv"]


def _parse_dimer_spectra(cfg):
    base = _parse_dimer_fotoc(cfg)
    an = cfg.sub("analysis", required=False)
    p = base["params"]
    base.update({
        "window": an.choice("spectrum_window", ("rectangular", "hann"), "rectangular"),
        "top_k": an.get("top_k", int, 3, lambda v: v >= 2),
        "s": an.get("subsystem", int, p.N // 2, lambda v: 0 <= v <= p.N),
        "peaks": an.get("peaks", int, 2, lambda v: v >= 1),
    })
    return base


def double_peak_periods(spec: sc.Spectrum, peaks: np.ndarray) -> dict:
    """Carrier period 2 pi / mean(w) and beat period 2 pi / |w1 - w2| of two peaks."""
    if peaks.size < 2:
        return {}
    w1, w2 = spec.omega[peaks[:2]]
    return {"carrier_period": 4.0 * math.pi / (w1 + w2), "beat_period": 2.0 * math.pi / abs(w2 - w1)}


def _run_dimer_spectra(a, out: Path):
    p, pt, spec_f, times = a["params"], a["state"], a["fotoc"], a["times"]
    psi0 = bloch_coherent(p.N, pt.z, pt.phi)
    states = dimer_states(p, psi0, times)
    fot = sc.fotoc(states, times, spec_f)
    ent = sc.entanglement_series(states, a["s"], times)
    for ts in (fot, ent):
        ts.meta.update(params_meta(p))
    fot.to_csv(out / "fotoc.csv")
    ent.to_csv(out / "entropy.csv")
    eig = dimer_eigen(p)
    dist = sc.diagonal_distribution(psi0, eig.modes, eig.energies)
    trans = sc.transition_frequencies(dist.weights, dist.energies, a["top_k"], eig.omega)
    write_rows(out / "transitions.csv", ["n", "m", "omega"], trans)
    summary = {"transitions": [t[2] for t in trans], "top_states": dist.top(a["top_k"]).tolist()}
    for label, ts in (("fotoc", fot), ("entropy", ent)):
        spec = sc.fourier_spectrum(ts, a["window"])
        spec.to_csv(out / f"spectrum_{label}.csv")
        pk = sc.spectral_peaks(spec, a["peaks"])
        summary[label] = {"peak_omega": spec.omega[pk].tolist(), "bin": float(spec.omega[1]),
                          **double_peak_periods(spec, pk)}
    write_json(out / "summary.json", summary)
    return ["fotoc.csv", "entropy.csv", "transitions.csv", "spectrum_fotoc.csv",
            "spectrum_entropy.csv", "summary.json"]


def _parse_dimer_qdist(cfg):
    p = parse_dimer(cfg)
    an = cfg.sub("analysis", required=False)
    snaps = an.floats("snapshot_times", [])
    if any(t < 0 for t in snaps):
        raise ConfigError("analysis.snapshot_times", "times must be >= 0")
    return {"params": p, "state": parse_point(cfg), "top_k": an.get("top_k", int, 3, lambda v: v >= 1),
            "n_z": an.get("n_z", int, 101, lambda v: v >= 3), "n_phi": an.get("n_phi", int, 128, lambda v: v >= 4),
            "snapshots": snaps}


def _run_dimer_qdist(a, out: Path):
    p, pt = a["params"], a["state"]
    psi0 = bloch_coherent(p.N, pt.z, pt.phi)
    eig = dimer_eigen(p)
    dist = sc.diagonal_distribution(psi0, eig.modes, eig.energies)
    eigensystem_to_csv(out / "eigensystem.csv", eig.energies, eig.parity)
    dist.to_csv(out / "distribution.csv")
    files = ["eigensystem.csv", "distribution.csv"]
    top = dist.top(a["top_k"])
    for n in top:
        husimi_q(eig.modes[:, n], a["n_z"], a["n_phi"]).to_csv(out / f"q_eigen_{n}.csv")
        files.append(f"q_eigen_{n}.csv")
    if a["snapshots"]:
        # spectral evolution works for Floquet modes at stroboscopic times too
        for i, t in enumerate(a["snapshots"]):
            if p.driven:
                k = t / p.period
                if abs(k - round(k)) > 1e-9:
                    raise ConfigError("analysis.snapshot_times", "driven snapshots must be whole periods")
            psi = dm.spectral_states(eig, psi0, [t])[0]
            husimi_q(psi, a["n_z"], a["n_phi"]).to_csv(out / f"q_t{i}.csv")
            files.append(f"q_t{i}.csv")
    sd = sc.diagonal_entropy(dist.weights)
    write_json(out / "summary.json", {"diagonal_entropy": sd, "goe_entropy": sc.goe_entropy(p.N),
                                      "ratio": sd / sc.goe_entropy(p.N), "top_states": top.tolist(),
                                      "kind": eig.kind, **params_meta(p)})
    return files + ["summary.json"]


def _parse_floquet_diag(cfg):
    a = _parse_dimer_qdist(cfg)
    if not a["params"].driven:
        raise ConfigError("model.mu", "dimer-floquet-diag needs a driven model (mu != 0)")
    return a


def _run_floquet_diag(a, out: Path):
    p, pt = a["params"], a["state"]
    psi0 = bloch_coherent(p.N, pt.z, pt.phi)
    prop = dm.floquet_propagator(p)
    eig = dm.floquet_modes(prop)
    dist = sc.diagonal_distribution(psi0, eig.modes, eig.energies)
    eigensystem_to_csv(out / "quasienergies.csv", eig.energies, eig.parity)
    dist.to_csv(out / "distribution.csv")
    sd = sc.diagonal_entropy(dist.weights)
    write_json(out / "summary.json", {"diagonal_entropy": sd, "goe_entropy": sc.goe_entropy(p.N),
                                      "ratio": sd / sc.goe_entropy(p.N), "unitarity_defect": prop.defect(),
                                      "substeps": prop.meta["substeps"], **params_meta(p)})
    return ["quasienergies.csv", "distribution.csv", "summary.json"]


def _parse_dimer_wigner(cfg):
    p = parse_dimer(cfg)
    w = cfg.sub("wigner")
    return {"params": p, "state": parse_point(cfg), "fotoc": parse_fotoc(cfg, exact_ok=False),
            "times": parse_times(cfg), "seed": cfg.get("seed", int),
            "samples": w.get("samples", int, 10000, lambda v: v >= 100, "samples must be >= 100"),
            "exact": w.get("compare_exact", bool, True)}


def _run_dimer_wigner(a, out: Path):
    p, pt, spec, times = a["params"], a["state"], a["fotoc"], a["times"]
    psi0 = bloch_coherent(p.N, pt.z, pt.phi)
    gen = sc.resolve_generator(psi0, spec.generator)
    ens = scl.wigner_sample(pt, p.N, a["samples"], a["seed"])
    tw = scl.wigner_fotoc(ens, p, spec.delta, times, gen)
    tw.meta.update(params_meta(p))
    tw.to_csv(out / "fotoc_tw.csv")
    files = ["fotoc_tw.csv"]
    if a["exact"]:
        ex = sc.fotoc(dimer_states(p, psi0, times), times, sc.FotocSpec(gen, spec.delta))
        ex.meta.update(params_meta(p))
        ex.to_csv(out / "fotoc_exact.csv")
        files.append("fotoc_exact.csv")
    return files


def _parse_dimer_lyapunov(cfg):
    p = parse_dimer(cfg)
    ly = cfg.sub("lyapunov", required=False)
    interval = ly.get("interval", float, None)
    return {"params": p, "state": parse_point(cfg),
            "horizon": ly.get("horizon", float, 1e4, lambda v: v > 0),
            "interval": interval, "blocks": ly.get("blocks", int, 10, lambda v: v >= 2),
            "fixed_point": parse_point(cfg, "fixed_point") if cfg.has("fixed_point") else None}


def _run_dimer_lyapunov(a, out: Path):
    p = a["params"]
    est = scl.lyapunov_tangent(p, a["state"], a["horizon"], a["interval"], a["blocks"])
    summary = {"lyapunov": est.value, "uncertainty": est.uncertainty, "intervals": est.intervals,
               "interval": est.interval, **params_meta(p)}
    if a["fixed_point"] is not None:
        ev = scl.linear_stability(p, a["fixed_point"])
        summary["stability"] = {"real": np.real(ev).tolist(), "imag": np.imag(ev).tolist()}
    write_json(out / "summary.json", summary)
    return ["summary.json"]


def _parse_dimer_portrait(cfg):
    p = parse_dimer(cfg)
    po = cfg.sub("portrait")
    n_z = po.get("n_z", int, 7, lambda v: v >= 1)
    n_phi = po.get("n_phi", int, 7, lambda v: v >= 1)
    z_max = po.get("z_max", float, 0.95, lambda v: 0 < v < 1)
    zs = np.linspace(-z_max, z_max, n_z)
    phis = -np.pi + 2 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
    ics = [scl.PhasePoint(z, f) for z in zs for f in phis]
    return {"params": p, "ics": ics, "horizon": po.get("horizon", float, 100.0, lambda v: v > 0),
            "dt": po.get("dt", float, 0.1, lambda v: v > 0)}


def _run_dimer_portrait(a, out: Path):
    scl.phase_portrait(a["params"], a["ics"], a["horizon"], a["dt"]).to_csv(out / "portrait.csv")
    return ["portrait.csv"]


def parse_dicke(cfg: Section) -> dict:
    m = cfg.sub("model")
    pos = (lambda v: v > 0, "must be > 0")
    p = dk.DickeParams(
        N=m.get("N", int, check=lambda v: v >= 1, msg="N must be >= 1"),
        omega=m.get("omega", float, check=pos[0], msg=pos[1]),
        delta=m.get("delta", float, check=pos[0], msg=pos[1]),
        gamma=m.get("gamma", float, check=lambda v: v >= 0, msg="must be >= 0"),
        n_max=m.get("n_max", int, check=lambda v: v >= 2, msg="n_max must be >= 2"),
    )
    dn = m.get("delta_n", int, 4, lambda v: 1 <= v < p.n_max, "need 1 <= delta_n < n_max")
    st = cfg.sub("state", required=False)
    if not st.get("saddle", bool, True):
        raise ConfigError("state.saddle", "only the saddle initial state is supported for the Dicke model")
    spec = parse_fotoc(cfg, exact_ok=False)
    if spec.generator not in ("auto", "Sz"):
        raise ConfigError("fotoc.generator", "the Dicke FOTOC uses S_z (or auto)")
    return {"params": p, "delta_n": dn, "window": m.get("window", float, None), "delta": spec.delta,
            "tail": m.get("ldos_tail", float, 1e-6, lambda v: 0 < v < 1e-5)}


def dicke_summary(ces: dk.ConvergedEigenSystem, delta: float) -> dict:
    p = ces.params
    s1, s2 = dk.spin_moments_ecb(ces)
    w = ces.overlaps / ces.overlaps.sum()
    ude_spin = sc.ude_prediction(p.N, delta)
    flat = np.full(w.size, 1.0 / w.size)
    ude_retained = sc.de_prediction(flat, s1, s2, delta)
    de = sc.de_prediction(w, s1, s2, delta)
    de_avg = sc.de_prediction(w, s1, s2, delta, "average_of_variance")
    me, count = sc.microcanonical_prediction(ces.energies, s1, s2, ces.E0, ces.sigma_E, delta)
    out = {
        "N": p.N, "omega": p.omega, "delta": p.delta, "gamma": p.gamma, "n_max": p.n_max,
        "delta_n": ces.delta_n, "gamma_over_gamma_c": p.gamma / p.gamma_c,
        "retained": ces.retained, "candidates": ces.candidates, "captured": ces.captured,
        "parity": ces.parity, "E0": ces.E0, "sigma_E": ces.sigma_E,
        "window": list(ces.window) if ces.window else None,
        "diagonal_entropy": sc.diagonal_entropy(w), "de": de, "de_average_of_variance": de_avg,
        "microcanonical": me, "microcanonical_count": count,
        "ude": {"spin": ude_spin, "retained": ude_retained},
    }
    out["ratios"] = {conv: {"de": de / u, "de_average_of_variance": de_avg / u, "microcanonical": me / u}
                     for conv, u in out["ude"].items()}
    return out


def _run_dicke_diag(a, out: Path):
    ces = dk.converged_eigensystem(a["params"], delta_n=a["delta_n"], window=a["window"], tail=a["tail"])
    ces.to_csv(out / "eigensystem.csv")
    write_json(out / "summary.json", dicke_summary(ces, a["delta"]))
    return ["eigensystem.csv", "summary.json"]


def _parse_dicke_fotoc(cfg):
    a = parse_dicke(cfg)
    a["times"] = parse_times(cfg)
    return a


def _run_dicke_fotoc(a, out: Path):
    ces = dk.converged_eigensystem(a["params"], delta_n=a["delta_n"], window=a["window"], tail=a["tail"])
    var = dk.spectral_sz_variance(ces, a["times"])
    summ = dicke_summary(ces, a["delta"])
    ts = sc.TimeSeries(a["times"], a["delta"] ** 2 * var, "fotoc",
                       {"generator": "Sz", "delta": a["delta"], "N": ces.params.N,
                        "gamma": ces.params.gamma, "Delta": ces.params.delta, "n_max": ces.params.n_max})
    ts.to_csv(out / "fotoc.csv")
    ces.to_csv(out / "eigensystem.csv")
    write_json(out / "summary.json", summ)
    return ["fotoc.csv", "eigensystem.csv", "summary.json"]


EXPERIMENTS: dict[str, Experiment] = {e.name: e for e in [
    Experiment("dimer-fotoc", "FOTOC growth and saturation", ("model", "state", "time"),
               ("fotoc.csv", "observables.csv", "summary.json"), _parse_dimer_fotoc, _run_dimer_fotoc),
    Experiment("dimer-entropy", "entanglement entropy vs Page value", ("model", "state", "time"),
               ("entropy_s<s>.csv", "table.csv"), _parse_dimer_entropy, _run_dimer_entropy),
    Experiment("dimer-spectra", "FOTOC and entropy Fourier spectra", ("model", "state", "time"),
               ("fotoc.csv", "entropy.csv", "spectrum_fotoc.csv", "spectrum_entropy.csv",
                "transitions.csv", "summary.json"), _parse_dimer_spectra, _run_dimer_spectra),
    Experiment("dimer-qdist", "diagonal distribution and Husimi Q snapshots", ("model", "state"),
               ("eigensystem.csv", "distribution.csv", "q_eigen_<n>.csv", "q_t<i>.csv", "summary.json"),
               _parse_dimer_qdist, _run_dimer_qdist),
    Experiment("dimer-floquet-diag", "Floquet-mode diagonal entropy vs GOE", ("model", "state"),
               ("quasienergies.csv", "distribution.csv", "summary.json"), _parse_floquet_diag, _run_floquet_diag),
    Experiment("dimer-wigner", "truncated Wigner vs exact FOTOC", ("model", "state", "time", "wigner", "seed"),
               ("fotoc_tw.csv", "fotoc_exact.csv"), _parse_dimer_wigner, _run_dimer_wigner, needs_seed=True),
    Experiment("dimer-lyapunov", "classical stability and Lyapunov exponent", ("model", "state"),
               ("summary.json",), _parse_dimer_lyapunov, _run_dimer_lyapunov),
    Experiment("dimer-portrait", "mean-field phase portrait", ("model", "portrait"),
               ("portrait.csv",), _parse_dimer_portrait, _run_dimer_portrait),
    Experiment("dicke-fotoc", "Dicke saddle-state FOTOC", ("model", "time"),
               ("fotoc.csv", "eigensystem.csv", "summary.json"), _parse_dicke_fotoc, _run_dicke_fotoc),
    Experiment("dicke-diag", "Dicke DE / microcanonical / UDE ratios", ("model",),
               ("eigensystem.csv", "summary.json"), parse_dicke, _run_dicke_diag),
]}


def run_experiment(name: str, args: dict, out: Path) -> list[str]:
    return EXPERIMENTS[name].execute(args, out)

