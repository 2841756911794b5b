"""Truncated Fock-space representation of the ion's axial motion and its spin.

All public quantities are dimensionless: positions in units of the ground
state size ``delta_z`` and momenta in units of ``delta_p = hbar / (2 delta_z)``.
With these units the quadratures are

    zeta = a + a^dagger,    pi = i (a^dagger - a),    [zeta, pi] = 2i,

so the vacuum has <zeta^2> = <pi^2> = 1 and a coherent state |alpha> sits at
(<zeta>, <pi>) = (2 Re alpha, 2 Im alpha).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.constants import atomic_mass, hbar
from scipy.linalg import expm
from scipy.special import gammaln

from .errors import ConfigurationError, ContractError, InvalidStateError

DEFAULT_NMAX = 64
MIN_NMAX = 8
GUARD_LEVELS = 4
GUARD_TOL = 1e-10
NORM_TOL = 1e-10

CA40_MASS_U = 39.9626


@dataclass(frozen=True)
class TrapUnits:
    """Bridge between dimensionless phase-space units and SI units.

    Parameters
    ----------
    omega_z : float
        Axial trap angular frequency in rad/s.
    mass : float
        Ion mass in kg.
    """

    omega_z: float = 2 * np.pi * 1.41e6
    mass: float = CA40_MASS_U * atomic_mass

    def __post_init__(self):
        if not (self.omega_z > 0 and self.mass > 0):
            raise ConfigurationError("omega_z and mass must be positive")

    @property
    def delta_z(self) -> float:
        """Ground-state wavepacket size sqrt(hbar / (2 m omega_z)) in metres."""
        return float(np.sqrt(hbar / (2.0 * self.mass * self.omega_z)))

    @property
    def delta_p(self) -> float:
        return hbar / (2.0 * self.delta_z)

    def length(self, z: float) -> float:
        """Convert a dimensionless position to metres."""
        return z * self.delta_z

    def momentum(self, p: float) -> float:
        return p * self.delta_p


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=complex)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MotionalState:
    """Fock amplitudes ``amplitudes[n]`` for n = 0 .. n_max.

    Construction checks the truncation guard: the population of the top
    four levels must stay below 1e-10.
    """

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = _frozen(self.amplitudes)
        if amps.ndim != 1 or amps.size - 1 < MIN_NMAX:
            raise ConfigurationError(f"need a 1-d amplitude vector with n_max >= {MIN_NMAX}")
        object.__setattr__(self, "amplitudes", amps)
        check_truncation(amps)

    @property
    def n_max(self) -> int:
        return self.amplitudes.size - 1

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "MotionalState":
        nrm = self.norm
        if nrm == 0.0:
            raise ContractError("cannot normalize the zero vector")
        return MotionalState(self.amplitudes / nrm)

    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def mean_phonon(self) -> float:
        pops = self.populations()
        return float(np.arange(pops.size) @ pops / pops.sum())

    def overlap(self, other: "MotionalState") -> complex:
        """<self|other>."""
        return complex(np.vdot(self.amplitudes, other.amplitudes))


def check_truncation(amplitudes: np.ndarray, tol: float = GUARD_TOL) -> None:
    total = float(np.sum(np.abs(amplitudes) ** 2))
    top = float(np.sum(np.abs(amplitudes[-GUARD_LEVELS:]) ** 2))
    # guard is relative so that unnormalized branches are judged fairly
    if total > 0 and top > tol * total:
        raise InvalidStateError(
            f"truncation guard violated: top {GUARD_LEVELS} Fock levels hold {top / total:.3e} of the norm"
        )


@dataclass(frozen=True)
class SpinState:
    """Two-level state, basis order (up, down)."""

    c_up: complex
    c_down: complex

    def __post_init__(self):
        nrm = abs(self.c_up) ** 2 + abs(self.c_down) ** 2
        if abs(nrm - 1.0) > 1e-12:
            raise ContractError(f"spin state not normalized (|c|^2 sum = {nrm!r})")

    @classmethod
    def up(cls) -> "SpinState":
        return cls(1.0, 0.0)

    @classmethod
    def down(cls) -> "SpinState":
        return cls(0.0, 1.0)

    @classmethod
    def from_vector(cls, vec) -> "SpinState":
        vec = np.asarray(vec, dtype=complex)
        return cls(complex(vec[0]), complex(vec[1]))

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.c_up, self.c_down], dtype=complex)


@dataclass(frozen=True)
class JointState:
    """Spin (x) motion amplitudes stored as a (2, n_max + 1) array.

    Row 0 is the motional block paired with |up>, row 1 the block paired
    with |down>.  Flattening row-major matches ``np.kron(spin_op, motion_op)``.
    """

    blocks: np.ndarray = field(repr=False)

    def __post_init__(self):
        blocks = _frozen(self.blocks)
        if blocks.ndim != 2 or blocks.shape[0] != 2 or blocks.shape[1] - 1 < MIN_NMAX:
            raise ConfigurationError("joint state must have shape (2, n_max + 1)")
        object.__setattr__(self, "blocks", blocks)
        check_truncation(np.sqrt(np.sum(np.abs(blocks) ** 2, axis=0)))

    @classmethod
    def product(cls, spin: SpinState, motion: MotionalState) -> "JointState":
        return cls(np.outer(spin.vector, motion.amplitudes))

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "JointState":
        vec = np.asarray(vec, dtype=complex)
        return cls(vec.reshape(2, -1))

    @property
    def n_max(self) -> int:
        return self.blocks.shape[1] - 1

    @property
    def vector(self) -> np.ndarray:
        return self.blocks.reshape(-1)

    @property
    def block_up(self) -> np.ndarray:
        return self.blocks[0]

    @property
    def block_down(self) -> np.ndarray:
        return self.blocks[1]

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.blocks))

    def spin_populations(self) -> tuple[float, float]:
        """(p_up, p_down) of the normalized state."""
        w = np.sum(np.abs(self.blocks) ** 2, axis=1)
        w = w / w.sum()
        return float(w[0]), float(w[1])


# -- ladder operators -------------------------------------------------------


@lru_cache(maxsize=16)
def annihilation(n_max: int) -> np.ndarray:
    """Truncated annihilation operator a on levels 0..n_max (read-only)."""
    a = np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), k=1).astype(complex)
    a.setflags(write=False)
    return a


@lru_cache(maxsize=16)
def position_operator(n_max: int) -> np.ndarray:
    """zeta = a + a^dagger."""
    a = annihilation(n_max)
    z = a + a.conj().T
    z.setflags(write=False)
    return z


@lru_cache(maxsize=16)
def momentum_operator(n_max: int) -> np.ndarray:
    """pi = i (a^dagger - a)."""
    a = annihilation(n_max)
    p = 1j * (a.conj().T - a)
    p.setflags(write=False)
    return p


# -- states -----------------------------------------------------------------


def ground_state(n_max: int = DEFAULT_NMAX) -> MotionalState:
    if n_max < MIN_NMAX:
        raise ConfigurationError(f"n_max must be >= {MIN_NMAX}, got {n_max}")
    amps = np.zeros(n_max + 1, dtype=complex)
    amps[0] = 1.0
    return MotionalState(amps)


def coherent_state(alpha: complex, n_max: int = DEFAULT_NMAX) -> MotionalState:
    """Analytic coherent state e^{-|alpha|^2/2} alpha^n / sqrt(n!)."""
    if n_max < MIN_NMAX:
        raise ConfigurationError(f"n_max must be >= {MIN_NMAX}, got {n_max}")
    alpha = complex(alpha)
    if abs(alpha) ** 2 > n_max / 4:
        raise InvalidStateError(f"|alpha|^2 = {abs(alpha) ** 2:.3g} exceeds n_max/4 = {n_max / 4}")
    n = np.arange(n_max + 1)
    if alpha == 0:
        return ground_state(n_max)
    log_mag = -abs(alpha) ** 2 / 2 + n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    amps = np.exp(log_mag) * np.exp(1j * n * np.angle(alpha))
    return MotionalState(amps)


def displacement_operator(alpha: complex, n_max: int) -> np.ndarray:
    """exp(alpha a^dagger - alpha* a) of the truncated generator."""
    a = annihilation(n_max)
    return expm(alpha * a.conj().T - np.conj(alpha) * a)


def apply_displacement(state: MotionalState, alpha: complex) -> MotionalState:
    return MotionalState(displacement_operator(complex(alpha), state.n_max) @ state.amplitudes)


# -- expectation values -----------------------------------------------------


def _require_normalized(state: MotionalState) -> np.ndarray:
    amps = state.amplitudes
    nrm2 = float(np.vdot(amps, amps).real)
    if abs(nrm2 - 1.0) > NORM_TOL:
        raise ContractError(f"state is not normalized (norm^2 = {nrm2!r})")
    return amps


def _expect(state: MotionalState, op: np.ndarray) -> float:
    amps = _require_normalized(state)
    val = np.vdot(amps, op @ amps)
    return float(val.real)


def expect_z(state: MotionalState) -> float:
    """<zeta> = <z> / delta_z."""
    return _expect(state, position_operator(state.n_max))


def expect_p(state: MotionalState) -> float:
    """<pi> = <p> / delta_p."""
    return _expect(state, momentum_operator(state.n_max))


def expect_p2(state: MotionalState) -> float:
    """<pi^2>, evaluated as ||pi psi||^2 so the top level is handled exactly."""
    amps = _require_normalized(state)
    a = annihilation(state.n_max + 1)
    ext = np.append(amps, 0.0)
    v = 1j * (a.conj().T - a) @ ext
    return float(np.vdot(v, v).real)


def expect_z2(state: MotionalState) -> float:
    amps = _require_normalized(state)
    a = annihilation(state.n_max + 1)
    ext = np.append(amps, 0.0)
    v = (a + a.conj().T) @ ext
    return float(np.vdot(v, v).real)


# -- position representation ------------------------------------------------


def hermite_functions(n_max: int, z: np.ndarray) -> np.ndarray:
    """Oscillator eigenfunctions h_n(zeta), shape (n_max + 1, len(z)).

    Normalised so that sum_n |h_n|^2 integrates to one over zeta; h_0 is the
    Gaussian with unit variance density.  Built with the three-term
    recurrence of the normalised functions, which cannot overflow.
    """
    x = np.asarray(z, dtype=float) / np.sqrt(2.0)
    out = np.empty((n_max + 1, x.size))
    out[0] = np.pi ** -0.25 * np.exp(-x * x / 2)
    if n_max >= 1:
        out[1] = np.sqrt(2.0) * x * out[0]
    for n in range(1, n_max):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * x * out[n] - np.sqrt(n / (n + 1)) * out[n - 1]
    return out * 2 ** -0.25


def wavefunction(state: MotionalState, grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    return state.amplitudes @ hermite_functions(state.n_max, grid)


def position_distribution(state: MotionalState, grid, check: bool = True) -> np.ndarray:
    """|psi(zeta)|^2 sampled on ``grid`` (a sorted array of zeta values).

    With ``check`` the Riemann sum over the grid must be 1 within 1e-3,
    otherwise the grid is too narrow or too coarse for the state.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ContractError("grid must be a sorted 1-d array with at least two points")
    dens = np.abs(wavefunction(_normalized_view(state), grid)) ** 2
    if check:
        total = float(np.sum(dens[:-1] * np.diff(grid)))
        total = 0.5 * (total + float(np.sum(dens[1:] * np.diff(grid))))
        if abs(total - 1.0) > 1e-3:
            raise ContractError(f"grid does not resolve the state: Riemann sum = {total:.6f}")
    return dens


def _normalized_view(state: MotionalState) -> MotionalState:
    _require_normalized(state)
    return state
