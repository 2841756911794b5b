"""Weak-value amplification of a trapped-ion motional pointer.

Fock-space simulation of a spin-dependent bichromatic displacement, spin
rotations and heralded postselection, the closed-form weak-value theory it
is checked against, projection-noise sampling, and reconstruction of the
pointer from characteristic-function signals.
"""

from .errors import (
    ConfigurationError,
    ContractError,
    ConvergenceError,
    EmptyPostselectionError,
    FitError,
    ImpossibleOutcomeError,
    InfeasibleBoundError,
    InvalidStateError,
    UndefinedShiftError,
    UndefinedWeakValueError,
    WVAError,
)
from .hilbert import (
    JointState,
    MotionalState,
    SpinState,
    TrapUnits,
    apply_displacement,
    coherent_state,
    expect_p,
    expect_p2,
    expect_z,
    ground_state,
    position_distribution,
)
from .dynamics import PulseParams, RotationSpec, evolve_displacement, rotate
from .theory import delta_p, delta_z, success_probability, weak_value
from .measurement import DetectionModel, ShotPlan, fit_rabi_from_phonon, heralded_postselect
from .reconstruction import SignalSet, extract_mean, extract_p2, generate_signals, reconstruct_distribution

__version__ = "0.1.0"
