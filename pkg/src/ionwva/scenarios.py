"""Scenario runners: turn a validated config into CSV curves plus a summary.

Every random draw comes from ``rng_for(seed, *stream)`` with a stream
index fixed by the point's position in the sweep, and results are gathered
in input order, so the files do not depend on the worker count.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import theory
from .config import ExperimentConfig
from .dynamics import PulseParams
from .fitting import weighted_polyfit
from .hilbert import expect_p, expect_p2, expect_z, position_distribution
from .measurement import (
    DetectionModel,
    ShotPlan,
    entangled_state,
    fit_rabi_from_phonon,
    imaginary_pointer,
    postselected_pointer,
    rng_for,
    sample_herald,
    sample_population,
    simulated_calibration,
)
from .reconstruction import (
    DEFAULT_P2_KS,
    Grid,
    generate_signals,
    grid_probabilities,
    kinetic_bound_from_signals,
    l1_distance,
    observable_expectation,
    reconstruct_distribution,
)

CURVE_COLUMNS = {
    "sweep_z": ["theta", "g", "exact", "weak_limit", "simulated", "simulated_sigma", "kept", "weak_strength", "success_probability"],
    "sweep_p": ["phi", "g", "exact", "weak_limit", "simulated", "simulated_sigma", "kept", "weak_strength", "success_probability"],
    "amplify": ["theta", "z", "branch_plus", "branch_minus", "exact", "simulated"],
    "calibrate": ["t_us", "alpha", "exact", "simulated", "sampled", "sigma", "shots"],
    "calibrate_phonon": ["t_us", "exact", "sampled"],
    "reconstruct": ["theta", "z", "exact", "reconstructed"],
    "fitdemo": ["g", "theta", "k", "exact", "value", "sigma", "fit"],
}


@dataclass
class ScenarioOutput:
    files: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def write_curve_csv(path, columns: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"row has {len(row)} fields, expected {len(columns)}")
            writer.writerow([_fmt(v) for v in row])


def read_curve_csv(path) -> dict[str, np.ndarray]:
    """Column name -> float array for a file written by ``write_curve_csv``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [[float(v) for v in row] for row in reader]
    arr = np.array(data, dtype=float).reshape(len(data), len(header))
    return {name: arr[:, i] for i, name in enumerate(header)}


def pool_map(fn: Callable, items: Sequence, workers: int) -> list:
    """Ordered map, in a process pool when ``workers > 1``."""
    items = list(items)
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def _cot_or_nan(x: float) -> float:
    t = math.tan(x)
    return 1.0 / t if t != 0 else math.nan


# -- amplified-shift sweeps ----------------------------------------------------


@dataclass(frozen=True)
class _SweepTask:
    index: int
    quadrature: str  # "z": real weak value, "p": imaginary weak value
    angle: float
    g: float
    ks: tuple
    shots: int
    seed: int
    n_max: int
    error_up: float
    error_down: float
    exact_only: bool
    terms: int


def _sweep_point(task: _SweepTask) -> list:
    g, ang = task.g, task.angle
    if task.quadrature == "z":
        exact = theory.delta_z(g, ang)
        weak = -g * _cot_or_nan(ang) + 0.0  # no signed zero in the CSV
        prob, pointer = postselected_pointer(g, ang, task.n_max)
        mean = expect_z(pointer)
    else:
        exact = theory.delta_p(g, ang)
        weak = g * _cot_or_nan(ang)
        prob, pointer = imaginary_pointer(g, ang, task.n_max)
        mean = expect_p(pointer)
    strength = abs(_cot_or_nan(ang)) * g
    if task.exact_only:
        return [ang, g, exact, weak, mean, 0.0, 0, strength, prob]

    model = DetectionModel(task.error_up, task.error_down)
    ks, values, sigmas, kept_total = [], [], [], 0
    for j, k in enumerate(task.ks):
        kept = sample_herald(prob, model, ShotPlan(task.shots, task.seed, (task.index, j, 0)))[0]
        kept_total += kept
        if kept == 0:
            continue
        e = observable_expectation(pointer, k, "sigma_y", task.quadrature)
        est, sig = sample_population((1 + e) / 2, ShotPlan(kept, task.seed, (task.index, j, 1)))
        ks.append(k)
        values.append(2 * est - 1)
        sigmas.append(2 * sig)
    powers = tuple(2 * i + 1 for i in range(task.terms))
    if len(ks) < max(3, len(powers)):
        return [ang, g, exact, weak, math.nan, math.nan, kept_total, strength, prob]
    fit = weighted_polyfit(ks, values, sigmas, powers)
    return [ang, g, exact, weak, fit.coefficient(1), fit.sigma(1), kept_total, strength, prob]


def _run_sweep(cfg: ExperimentConfig, seed: int, out: Path, quadrature: str) -> ScenarioOutput:
    angles = cfg.theta if quadrature == "z" else cfg.phi
    ks = tuple(float(k) for k in np.linspace(0.0, cfg.slope.k_max, cfg.slope.k_points))
    tasks = []
    for ang in angles:
        for g in cfg.g_values():
            tasks.append(
                _SweepTask(
                    len(tasks), quadrature, float(ang), float(g), ks, cfg.shots, seed, cfg.n_max,
                    cfg.detection.error_up, cfg.detection.error_down, cfg.exact_only, cfg.slope.terms,
                )
            )
    rows = pool_map(_sweep_point, tasks, cfg.workers)
    name = cfg.scenario
    write_curve_csv(out / f"{name}.csv", CURVE_COLUMNS[name], rows)

    summary = {"points": len(rows), "curves": []}
    for ang in angles:
        sel = [r for r in rows if r[0] == ang]
        exact = np.array([r[2] for r in sel])
        sim = np.array([r[4] for r in sel])
        sig = np.array([r[5] for r in sel])
        good = np.isfinite(sim)
        entry = {
            ("theta" if quadrature == "z" else "phi"): ang,
            "max_abs_exact": float(np.max(np.abs(exact))),
            "max_abs_simulated_minus_exact": float(np.max(np.abs(sim[good] - exact[good]))) if good.any() else None,
            "undetermined_points": int((~good).sum()),
        }
        if not cfg.exact_only and good.any():
            pulls = (sim[good] - exact[good]) / sig[good]
            entry["rms_pull"] = float(np.sqrt(np.mean(pulls**2)))
        summary["curves"].append(entry)
    return ScenarioOutput([f"{name}.csv"], summary)


def run_sweep_z(cfg, seed, out):
    return _run_sweep(cfg, seed, out, "z")


def run_sweep_p(cfg, seed, out):
    return _run_sweep(cfg, seed, out, "p")


# -- single-shot amplification ------------------------------------------------


def _slope_estimate(pointer, ks, shots, seed, stream, terms, exact_only):
    if exact_only:
        values = [observable_expectation(pointer, k, "sigma_y", "z") for k in ks]
        sigmas = np.ones(len(ks))
    else:
        sig_set = generate_signals(pointer, ks, "sigma_y", "z", ShotPlan(shots, seed, stream))
        values, sigmas = sig_set.values, sig_set.sigmas
    fit = weighted_polyfit(ks, values, sigmas, tuple(2 * i + 1 for i in range(terms)))
    return fit.coefficient(1), (0.0 if exact_only else fit.sigma(1))


def run_amplify(cfg: ExperimentConfig, seed: int, out: Path) -> ScenarioOutput:
    g = cfg.coupling
    units = cfg.trap.units()
    z = np.linspace(-8.0, 8.0, 321)
    branch = lambda c: np.exp(-((z - c) ** 2) / 2) / np.sqrt(2 * np.pi)
    ks = np.linspace(0.0, cfg.slope.k_max, cfg.slope.k_points)
    model = DetectionModel(cfg.detection.error_up, cfg.detection.error_down)

    rows, points = [], []
    for i, th in enumerate(cfg.theta):
        prob, pointer = postselected_pointer(g, th, cfg.n_max)
        exact = theory.postselected_density(g, th)(z)
        simulated = position_distribution(pointer, z, check=False)
        rows.extend(zip([th] * z.size, z, branch(g), branch(-g), exact, simulated))

        dz = theory.delta_z(g, th)
        entry = {
            "theta": th,
            "g": g,
            "splitting_nm": g * units.delta_z * 1e9,
            "delta_z": dz,
            "shift_nm": abs(dz) * units.delta_z * 1e9,
            "amplification": abs(dz) / g if g > 0 else None,
            "weak_limit_delta_z": -g * _cot_or_nan(th),
            "success_probability": prob,
            "simulated_delta_z": expect_z(pointer),
        }
        mean, sigma = _slope_estimate(pointer, ks, cfg.shots, seed, (i, 1), cfg.slope.terms, cfg.exact_only)
        entry["measured_delta_z"] = mean
        entry["measured_sigma"] = sigma
        if not cfg.exact_only:
            entry["herald_cycles"] = cfg.shots
            entry["herald_expected_kept"] = cfg.shots * prob
            entry["herald_kept"] = sample_herald(prob, model, ShotPlan(cfg.shots, seed, (i, 0)))[0]
        points.append(entry)

    write_curve_csv(out / "amplify.csv", CURVE_COLUMNS["amplify"], rows)
    return ScenarioOutput(["amplify.csv"], {"points": points})


# -- calibration ----------------------------------------------------------------


def run_calibrate(cfg: ExperimentConfig, seed: int, out: Path) -> ScenarioOutput:
    params = cfg.pulse.params()
    t_us = cfg.times_us.values()
    times = t_us * 1e-6
    alpha = params.eta * params.rabi * times / 2
    exact = theory.calibration_probability(alpha)
    simulated = simulated_calibration(params, times, cfg.n_max)
    rows = []
    for j, (t, a, e, s) in enumerate(zip(t_us, alpha, exact, simulated)):
        if cfg.exact_only:
            rows.append([t, a, e, s, s, 0.0, 0])
        else:
            est, sig = sample_population(s, ShotPlan(cfg.shots, seed, (0, j)))
            rows.append([t, a, e, s, est, sig, cfg.shots])
    write_curve_csv(out / "calibrate.csv", CURVE_COLUMNS["calibrate"], rows)

    # low-power pulse: mean phonon number of the displaced pointer
    ph_params = PulseParams(2 * math.pi * cfg.phonon_rabi_hz, params.eta, 0.0, params.phi_plus, params.phi_minus)
    ph_t_us = cfg.phonon_times_us.values()
    ph_rows, samples = [], []
    for j, t in enumerate(ph_t_us):
        state = entangled_state(PulseParams(ph_params.rabi, ph_params.eta, t * 1e-6, ph_params.phi_plus, ph_params.phi_minus), cfg.n_max)
        n = np.arange(state.n_max + 1)
        nbar = float(np.sum(n * (np.abs(state.block_up) ** 2 + np.abs(state.block_down) ** 2)))
        sampled = nbar if cfg.exact_only else nbar + cfg.phonon_noise * rng_for(seed, 1, j).standard_normal()
        ph_rows.append([t, nbar, sampled])
        samples.append((t * 1e-6, sampled))
    write_curve_csv(out / "calibrate_phonon.csv", CURVE_COLUMNS["calibrate_phonon"], ph_rows)

    fitted = fit_rabi_from_phonon(samples, params.eta)
    summary = {
        "max_simulated_minus_formula": float(np.max(np.abs(simulated - exact))),
        "saturation": float(exact[-1]),
        "planted_phonon_rabi_hz": cfg.phonon_rabi_hz,
        "fitted_phonon_rabi_hz": fitted / (2 * math.pi),
        "fitted_relative_error": abs(fitted / (2 * math.pi) - cfg.phonon_rabi_hz) / cfg.phonon_rabi_hz,
    }
    return ScenarioOutput(["calibrate.csv", "calibrate_phonon.csv"], summary)


# -- reconstruction -------------------------------------------------------------


@dataclass(frozen=True)
class _ReconTask:
    index: int
    g: float
    theta: float
    ks: tuple
    grid: tuple  # (lo, hi, n)
    shots: int
    seed: int
    n_max: int
    restarts: int
    bound_mode: str
    exact_only: bool
    out_dir: str


def _reconstruct_point(task: _ReconTask) -> dict:
    _, pointer = postselected_pointer(task.g, task.theta, task.n_max)
    grid = Grid.uniform(*task.grid)
    plans = [None] * 3 if task.exact_only else [ShotPlan(task.shots, task.seed, (task.index, c)) for c in range(3)]
    cos_set = generate_signals(pointer, task.ks, "sigma_z", "z", plans[0])
    sin_set = generate_signals(pointer, task.ks, "sigma_y", "z", plans[1])
    if task.bound_mode == "true":
        bound, source = expect_p2(pointer), "true_state"
        estimate, sigma = bound, 0.0
    else:
        p2_set = generate_signals(pointer, DEFAULT_P2_KS, "sigma_z", "p", plans[2])
        bound, estimate, sigma = kinetic_bound_from_signals(p2_set)
        source = "extract_p2" if p2_set.exact else "extract_p2_upper_2sigma"
    result = reconstruct_distribution(cos_set, sin_set, grid, bound, task.restarts, task.seed, source)

    out = Path(task.out_dir)
    stem = f"reconstruct_{task.index}"
    cos_set.to_csv(out / f"{stem}_cos.csv")
    sin_set.to_csv(out / f"{stem}_sin.csv")
    result.to_csv(out / f"{stem}_distribution.csv")
    truth = grid_probabilities(theory.postselected_density(task.g, task.theta), grid)
    return {
        "files": [f"{stem}_cos.csv", f"{stem}_sin.csv", f"{stem}_distribution.csv", f"{stem}_distribution.json"],
        "rows": [[task.theta, z, t, p] for z, t, p in zip(grid.points, truth, result.probabilities)],
        "summary": {
            "theta": task.theta,
            "g": task.g,
            "l1_distance": l1_distance(result.probabilities, truth),
            "objective": result.objective,
            "kinetic_bound": bound,
            "kinetic_bound_source": source,
            "p2_estimate": estimate,
            "p2_sigma": sigma,
            "kinetic_bound_active": result.kinetic_bound_active,
            "true_p2": expect_p2(pointer),
        },
    }


def run_reconstruct(cfg: ExperimentConfig, seed: int, out: Path) -> ScenarioOutput:
    rc = cfg.reconstruction
    ks = tuple(float(k) for k in np.linspace(0.0, rc.k_max, rc.k_points))
    tasks = [
        _ReconTask(i, cfg.coupling, float(th), ks, (rc.grid.lo, rc.grid.hi, rc.grid.n), cfg.shots, seed,
                   cfg.n_max, rc.restarts, rc.kinetic_bound, cfg.exact_only, str(out))
        for i, th in enumerate(cfg.theta)
    ]
    results = pool_map(_reconstruct_point, tasks, cfg.workers)
    rows = [row for r in results for row in r["rows"]]
    write_curve_csv(out / "reconstruct.csv", CURVE_COLUMNS["reconstruct"], rows)
    files = ["reconstruct.csv"] + [f for r in results for f in r["files"]]
    return ScenarioOutput(files, {"points": [r["summary"] for r in results]})


# -- slope-fit demonstration ------------------------------------------------------


def run_fitdemo(cfg: ExperimentConfig, seed: int, out: Path) -> ScenarioOutput:
    ks = np.linspace(0.0, cfg.slope.k_max, cfg.slope.k_points)
    powers = tuple(2 * i + 1 for i in range(cfg.slope.terms))
    rows, points = [], []
    for i, case in enumerate(cfg.cases):
        _, pointer = postselected_pointer(case.g, case.theta, cfg.n_max)
        exact = np.array([observable_expectation(pointer, k, "sigma_y", "z") for k in ks])
        if cfg.exact_only:
            values, sigmas = exact, np.ones_like(ks)
        else:
            s = generate_signals(pointer, ks, "sigma_y", "z", ShotPlan(cfg.shots, seed, (i,)))
            values, sigmas = s.values, s.sigmas
        fit = weighted_polyfit(ks, values, sigmas, powers)
        design = np.stack([ks**p for p in powers], axis=1)
        line = design @ fit.coefficients
        sig_out = np.zeros_like(ks) if cfg.exact_only else sigmas
        rows.extend(zip([case.g] * ks.size, [case.theta] * ks.size, ks, exact, values, sig_out, line))
        dz = theory.delta_z(case.g, case.theta)
        sigma = 0.0 if cfg.exact_only else fit.sigma(1)
        points.append({
            "g": case.g,
            "theta": case.theta,
            "delta_z": dz,
            "fitted_mean": fit.coefficient(1),
            "fitted_sigma": sigma,
            "z_score": (fit.coefficient(1) - dz) / sigma if sigma > 0 else None,
        })
    write_curve_csv(out / "fitdemo.csv", CURVE_COLUMNS["fitdemo"], rows)
    return ScenarioOutput(["fitdemo.csv"], {"points": points})


RUNNERS = {
    "amplify": run_amplify,
    "sweep_z": run_sweep_z,
    "sweep_p": run_sweep_p,
    "calibrate": run_calibrate,
    "reconstruct": run_reconstruct,
    "fitdemo": run_fitdemo,
}


def run_scenario(cfg: ExperimentConfig, seed: int, out_dir) -> ScenarioOutput:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return RUNNERS[cfg.scenario](cfg, seed, out)
