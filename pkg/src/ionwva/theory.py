"""Closed-form weak values and pointer shifts.

Nothing here touches the Fock-space simulator; these functions are the
independent predictions the simulator is checked against.  Lengths are in
units of delta_z, momenta in units of delta_p, angles in radians.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import UndefinedShiftError, UndefinedWeakValueError

SINGULAR_TOL = 1e-14
WEAK_REGIME_LIMIT = 0.1


@dataclass(frozen=True)
class WeakValueResult:
    value: complex
    overlap: complex


class PointerShift(NamedTuple):
    dz: float
    dp: float
    strength: float  # |A_w| g
    outside_weak_regime: bool


def weak_value(psi_i, psi_f, observable) -> WeakValueResult:
    """A_w = <f|A|i> / <f|i> for two-component spin vectors (or SpinStates)."""
    vi = np.asarray(getattr(psi_i, "vector", psi_i), dtype=complex)
    vf = np.asarray(getattr(psi_f, "vector", psi_f), dtype=complex)
    overlap = complex(np.vdot(vf, vi))
    if abs(overlap) <= SINGULAR_TOL:
        raise UndefinedWeakValueError("pre- and postselected states are orthogonal")
    num = complex(np.vdot(vf, np.asarray(observable, dtype=complex) @ vi))
    return WeakValueResult(num / overlap, overlap)


def first_order_pointer_shift(g: float, a_w: complex) -> PointerShift:
    """Linear-response shift (g Re A_w, g Im A_w) plus the regime indicator."""
    a_w = complex(a_w)
    strength = abs(a_w) * g
    return PointerShift(g * a_w.real, g * a_w.imag, strength, strength >= WEAK_REGIME_LIMIT)


def _herald_norm2(g: float, theta: float) -> float:
    return 1.0 - np.cos(2 * theta) * np.exp(-g * g / 2)


def postselected_wavefunction(g: float, theta: float) -> Callable[[np.ndarray], np.ndarray]:
    """Pointer amplitude after postselecting cos(th)|up> - sin(th)|down>.

    Returns a vectorised function of zeta.  The two ground-state branches
    displaced by +-g interfere with weights cos(pi/4 + th), -sin(pi/4 + th).
    """
    d = _herald_norm2(g, theta)
    if d <= SINGULAR_TOL:
        raise UndefinedShiftError(f"degenerate postselection at g={g}, theta={theta}")
    pref = 1.0 / ((2 * np.pi) ** 0.25 * np.sqrt(d))
    c, s = np.cos(np.pi / 4 + theta), np.sin(np.pi / 4 + theta)

    def amplitude(z):
        z = np.asarray(z, dtype=float)
        return pref * (c * np.exp(-((z - g) ** 2) / 4) - s * np.exp(-((z + g) ** 2) / 4))

    return amplitude


def postselected_density(g: float, theta: float) -> Callable[[np.ndarray], np.ndarray]:
    amp = postselected_wavefunction(g, theta)
    return lambda z: amp(z) ** 2


def postselected_prefactor(g: float, theta: float) -> float:
    return 1.0 / np.sqrt(_herald_norm2(g, theta))


def delta_z(g: float, theta: float) -> float:
    """Exact mean position of the postselected pointer."""
    if g == 0:
        return 0.0
    # g / (e^{-g^2/2} cot 2th - csc 2th), multiplied through by sin 2th
    den = np.exp(-g * g / 2) * np.cos(2 * theta) - 1.0
    if abs(den) <= SINGULAR_TOL:
        raise UndefinedShiftError(f"delta_z is singular at g={g}, theta={theta}")
    return float(g * np.sin(2 * theta) / den)


def delta_p(g: float, phi: float) -> float:
    """Exact mean momentum for the imaginary weak value i cot(phi)."""
    den = np.exp(g * g / 2) - np.cos(2 * phi)
    if abs(den) <= SINGULAR_TOL:
        raise UndefinedShiftError(f"delta_p is 0/0 at g={g}, phi={phi}")
    return float(g * np.sin(2 * phi) / den)


def success_probability(g: float, theta: float) -> float:
    """Probability of the |up> herald after the R_y(2 theta) rotation."""
    return float(0.5 * _herald_norm2(g, theta))


def imaginary_success_probability(g: float, phi: float) -> float:
    """Herald probability for R_x(2 phi)|down> preparation and |up> postselection."""
    return float(0.5 * (1.0 - np.cos(2 * phi) * np.exp(-g * g / 2)))


def weak_limit_z(g: float, theta: float) -> float:
    return float(-g / np.tan(theta))


def weak_limit_p(g: float, phi: float) -> float:
    return float(g / np.tan(phi))


def calibration_probability(alpha) -> np.ndarray:
    """p_up = (1 - exp(-2|alpha|^2)) / 2 after a balanced bichromatic pulse on |down>|0>."""
    alpha = np.asarray(alpha)
    return 0.5 * (1.0 - np.exp(-2.0 * np.abs(alpha) ** 2))
