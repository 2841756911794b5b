"""Projective spin readout, heralded postselection and projection noise.

Randomness is drawn from numpy ``Generator`` streams keyed by
``(seed, stream)``; every sampled quantity in the package takes its stream
index explicitly, so serial and parallel runs agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from .dynamics import PulseParams, RotationSpec, evolve_displacement, rotate
from .errors import (
    ConfigurationError,
    ContractError,
    EmptyPostselectionError,
    FitError,
    ImpossibleOutcomeError,
)
from .fitting import weighted_polyfit
from .hilbert import DEFAULT_NMAX, JointState, MotionalState, SpinState, ground_state

IMPOSSIBLE_TOL = 1e-14


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for ``(seed, *stream)``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream)))


@dataclass(frozen=True)
class DetectionModel:
    """Two-outcome confusion matrix of the fluorescence readout.

    ``error_up`` is the chance a true |up> (dark) reads as bright,
    ``error_down`` the chance a true |down> reads as dark.
    """

    error_up: float = 0.0
    error_down: float = 0.0
    detection_time: float = 120e-6

    def __post_init__(self):
        for name in ("error_up", "error_down"):
            val = getattr(self, name)
            if not (0.0 <= val < 0.5):
                raise ConfigurationError(f"{name} must lie in [0, 0.5), got {val}")


@dataclass(frozen=True)
class ShotPlan:
    shots: int
    seed: int = 0
    stream: tuple = ()

    def __post_init__(self):
        if int(self.shots) < 1:
            raise ConfigurationError(f"shots must be >= 1, got {self.shots}")

    def rng(self) -> np.random.Generator:
        return rng_for(self.seed, *self.stream)

    def child(self, *index: int) -> "ShotPlan":
        return replace(self, stream=tuple(self.stream) + tuple(int(i) for i in index))


def project_spin(state: JointState, outcome: str) -> tuple[float, MotionalState]:
    """Probability of ``outcome`` ("up" or "down") and the collapsed motion."""
    if abs(state.norm - 1.0) > 1e-10:
        raise ContractError(f"joint state is not normalized (norm = {state.norm!r})")
    if outcome not in ("up", "down"):
        raise ContractError(f"outcome must be 'up' or 'down', got {outcome!r}")
    block = state.block_up if outcome == "up" else state.block_down
    prob = float(np.vdot(block, block).real)
    if prob < IMPOSSIBLE_TOL:
        raise ImpossibleOutcomeError(f"outcome {outcome!r} has probability {prob:.3e}")
    return prob, MotionalState(block / np.sqrt(prob))


class HeraldTally(NamedTuple):
    kept: int
    discarded: int
    falsely_kept: int
    falsely_discarded: int
    probability: float
    pointer: MotionalState | None


def expected_tallies(p_up: float, model: DetectionModel, shots: int) -> dict:
    """Mean values of the herald counters for ``shots`` cycles."""
    return {
        "kept": shots * (p_up * (1 - model.error_up) + (1 - p_up) * model.error_down),
        "falsely_kept": shots * (1 - p_up) * model.error_down,
        "falsely_discarded": shots * p_up * model.error_up,
    }


def sample_herald(p_up: float, model: DetectionModel, plan: ShotPlan) -> tuple[int, int, int]:
    """(kept, falsely_kept, falsely_discarded) for ``plan.shots`` readouts."""
    rng = plan.rng()
    true_up = int(rng.binomial(plan.shots, p_up))
    lost = int(rng.binomial(true_up, model.error_up)) if model.error_up > 0 else 0
    gained = int(rng.binomial(plan.shots - true_up, model.error_down)) if model.error_down > 0 else 0
    return true_up - lost + gained, gained, lost


def heralded_postselect(
    state: JointState,
    theta: float,
    model: DetectionModel,
    plan: ShotPlan,
) -> HeraldTally:
    """Rotate by R_y(2 theta), read the spin, keep the dark (|up>) shots.

    The kept pointer is the ideal |up>-projected motional state; readout
    errors only move shots between the kept and discarded tallies.
    Raises EmptyPostselectionError (with the tallies) if nothing is kept.
    """
    rotated = rotate(state, RotationSpec("y", 2 * theta))
    p_up = float(np.vdot(rotated.block_up, rotated.block_up).real)
    kept, gained, lost = sample_herald(p_up, model, plan)
    pointer = project_spin(rotated, "up")[1] if p_up >= IMPOSSIBLE_TOL else None
    tally = HeraldTally(kept, plan.shots - kept, gained, lost, p_up, pointer)
    if kept == 0:
        raise EmptyPostselectionError("no shot survived postselection", tally)
    return tally


def sample_population(p: float, plan: ShotPlan) -> tuple[float, float]:
    """Binomial estimate of a population and its projection-noise sigma."""
    if not (0.0 <= p <= 1.0):
        # tolerate round-off from exact expectation values
        if -1e-12 <= p < 0 or 1 < p <= 1 + 1e-12:
            p = min(max(p, 0.0), 1.0)
        else:
            raise ContractError(f"population must lie in [0, 1], got {p}")
    n = int(plan.shots)
    k = int(plan.rng().binomial(n, p))
    est = k / n
    if k == 0 or k == n:
        return est, 1.0 / (2 * n)
    return est, float(np.sqrt(est * (1 - est) / n))


# -- experiment building blocks ----------------------------------------------


def entangled_state(params: PulseParams, n_max: int = DEFAULT_NMAX) -> JointState:
    """Bichromatic pulse applied to |down>|0>."""
    start = JointState.product(SpinState.down(), ground_state(n_max))
    return evolve_displacement(start, params)


def postselected_pointer(g: float, theta: float, n_max: int = DEFAULT_NMAX) -> tuple[float, MotionalState]:
    """Real-weak-value chain: |down>|0> -> pulse(g) -> R_y(2 theta) -> keep |up>."""
    state = entangled_state(PulseParams.for_coupling(g), n_max)
    state = rotate(state, RotationSpec("y", 2 * theta))
    return project_spin(state, "up")


def imaginary_pointer(g: float, phi: float, n_max: int = DEFAULT_NMAX) -> tuple[float, MotionalState]:
    """Imaginary-weak-value chain: R_x(2 phi)|down>|0> -> pulse(g) -> keep |up>."""
    start = JointState.product(SpinState.down(), ground_state(n_max))
    start = rotate(start, RotationSpec("x", 2 * phi))
    state = evolve_displacement(start, PulseParams.for_coupling(g))
    return project_spin(state, "up")


def calibration_curve(params: PulseParams, times: Sequence[float]) -> np.ndarray:
    """p_up(t) = (1 - exp(-2|alpha|^2)) / 2 with alpha = eta Omega t / 2.

    Assumes equal red and blue sideband strengths; the laser phases do not
    enter because |down> has equal weight on both eigenstates of any
    transverse spin axis.
    """
    alpha = params.eta * params.rabi * np.asarray(times, dtype=float) / 2
    return 0.5 * (1.0 - np.exp(-2.0 * alpha**2))


def simulated_calibration(params: PulseParams, times: Sequence[float], n_max: int = DEFAULT_NMAX) -> np.ndarray:
    """p_up(t) from the Fock-space simulator (no noise)."""
    out = []
    for t in times:
        state = entangled_state(replace(params, duration=float(t)), n_max)
        out.append(float(np.vdot(state.block_up, state.block_up).real))
    return np.array(out)


def fit_rabi_from_phonon(samples: Sequence[tuple[float, float]], eta: float) -> float:
    """Rabi frequency (rad/s) from (t, mean phonon number) pairs.

    Fits sqrt(nbar) = (eta Omega / 2) t through the origin by least squares;
    negative phonon estimates are clipped to zero before the square root.
    """
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise FitError("samples must be a sequence of (t, nbar) pairs")
    if data.shape[0] < 3:
        raise FitError(f"need at least 3 calibration points, got {data.shape[0]}")
    t, nbar = data[:, 0], data[:, 1]
    if not np.any(t != 0):
        raise FitError("all probe times are zero")
    fit = weighted_polyfit(t, np.sqrt(np.clip(nbar, 0.0, None)), powers=(1,))
    return 2.0 * fit.coefficient(1) / eta
