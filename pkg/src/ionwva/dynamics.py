"""Bichromatic spin-dependent displacement and single-qubit rotations."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from .errors import ConfigurationError
from .hilbert import JointState, annihilation

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}

# operating point of the amplification experiment
DEFAULT_ETA = 0.08
DEFAULT_RABI = 2 * np.pi * 19.0e3


@dataclass(frozen=True)
class PulseParams:
    """Knobs of one bichromatic pulse.

    ``rabi`` is the sideband Rabi frequency in rad/s, ``duration`` in seconds.
    The red/blue laser phases only enter through
    ``phi_plus = (phi_red + phi_blue) / 2`` and
    ``phi_minus = (phi_red - phi_blue) / 2``.  The default phases
    (pi/2, pi/2) give a position displacement conditioned on sigma_x.
    """

    rabi: float
    eta: float
    duration: float
    phi_plus: float = np.pi / 2
    phi_minus: float = np.pi / 2

    def __post_init__(self):
        if not (0 < self.eta <= 0.3):
            raise ConfigurationError(f"eta must lie in (0, 0.3], got {self.eta}")
        if self.rabi < 0 or self.duration < 0:
            raise ConfigurationError("rabi and duration must be non-negative")
        if not np.all(np.isfinite([self.rabi, self.duration, self.phi_plus, self.phi_minus])):
            raise ConfigurationError("pulse parameters must be finite")

    @property
    def coupling(self) -> float:
        """Splitting g = eta * Omega * t in units of delta_z."""
        return self.eta * self.rabi * self.duration

    @classmethod
    def from_phases(cls, rabi, eta, duration, phi_red, phi_blue) -> "PulseParams":
        return cls(rabi, eta, duration, (phi_red + phi_blue) / 2, (phi_red - phi_blue) / 2)

    @classmethod
    def for_coupling(
        cls,
        g: float,
        eta: float = DEFAULT_ETA,
        rabi: float = DEFAULT_RABI,
        phi_plus: float = np.pi / 2,
        phi_minus: float = np.pi / 2,
    ) -> "PulseParams":
        """Pulse of the duration that realizes splitting ``g``."""
        if g < 0:
            raise ConfigurationError("coupling g must be non-negative")
        return cls(rabi, eta, g / (eta * rabi), phi_plus, phi_minus)


@dataclass(frozen=True)
class RotationSpec:
    axis: str
    angle: float

    def __post_init__(self):
        if self.axis not in PAULI:
            raise ConfigurationError(f"axis must be one of x, y, z; got {self.axis!r}")
        if not np.isfinite(self.angle):
            raise ConfigurationError("rotation angle must be finite")


def _spin_factor(phi_plus: float) -> np.ndarray:
    return SIGMA_X * np.sin(phi_plus) + SIGMA_Y * np.cos(phi_plus)


@lru_cache(maxsize=64)
def _motion_factor(phi_minus: float, n_max: int) -> np.ndarray:
    a = annihilation(n_max)
    ad = a.conj().T
    m = -(ad + a) * np.cos(phi_minus) + 1j * (ad - a) * np.sin(phi_minus)
    m.setflags(write=False)
    return m


def bichromatic_generator(params: PulseParams, n_max: int) -> np.ndarray:
    """H_d / hbar (rad/s) on the joint space, ordering kron(spin, motion).

    H_d = (hbar eta Omega / 2) [sx sin(phi+) + sy cos(phi+)]
          (x) [-(a^dag + a) cos(phi-) + i (a^dag - a) sin(phi-)]
    """
    spin = _spin_factor(params.phi_plus)
    motion = _motion_factor(float(params.phi_minus), n_max)
    return 0.5 * params.eta * params.rabi * np.kron(spin, motion)


def propagator(params: PulseParams, n_max: int) -> np.ndarray:
    """exp(-i H_d t / hbar), computed from the dimensionless generator."""
    spin = _spin_factor(params.phi_plus)
    motion = _motion_factor(float(params.phi_minus), n_max)
    # -i H t / hbar = -i (g / 2) S (x) M
    return expm(-0.5j * params.coupling * np.kron(spin, motion))


def evolve_displacement(state: JointState, params: PulseParams) -> JointState:
    if params.coupling == 0.0:
        return state
    return JointState.from_vector(propagator(params, state.n_max) @ state.vector)


def rotation_matrix(spec: RotationSpec) -> np.ndarray:
    """R_axis(beta) = exp(-i beta sigma_axis / 2)."""
    half = spec.angle / 2
    return np.cos(half) * np.eye(2) - 1j * np.sin(half) * PAULI[spec.axis]


def rotate(state: JointState, spec: RotationSpec) -> JointState:
    return JointState(rotation_matrix(spec) @ state.blocks)


def spin_conditional_kick(state: JointState, k: float, quadrature: str) -> JointState:
    """Apply exp(-i k Q sigma_x / 2) with Q = zeta (quadrature "z") or pi ("p").

    Uses the eigendecomposition of the truncated quadrature, so the result is
    the exact exponential of the truncated generator.
    """
    vals, vecs = _quadrature_eigen(quadrature, state.n_max)
    plus = (vecs * np.exp(-0.5j * k * vals)) @ vecs.conj().T
    minus = (vecs * np.exp(0.5j * k * vals)) @ vecs.conj().T
    up, down = state.blocks
    s, d = (up + down) / np.sqrt(2), (up - down) / np.sqrt(2)  # sigma_x = +1 / -1 parts
    s, d = plus @ s, minus @ d
    return JointState(np.array([(s + d) / np.sqrt(2), (s - d) / np.sqrt(2)]))


@lru_cache(maxsize=16)
def _quadrature_eigen(quadrature: str, n_max: int):
    a = annihilation(n_max)
    if quadrature == "z":
        op = a + a.conj().T
    elif quadrature == "p":
        op = 1j * (a.conj().T - a)
    else:
        raise ConfigurationError(f"quadrature must be 'z' or 'p', got {quadrature!r}")
    vals, vecs = np.linalg.eigh(op)
    vals.setflags(write=False)
    vecs.setflags(write=False)
    return vals, vecs
