"""Experiment configuration: JSON schema, validation and derived quantities."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .dynamics import PulseParams
from .errors import ConfigurationError
from .hilbert import CA40_MASS_U, TrapUnits
from . import theory

SCHEMA_VERSION = 1
SCENARIOS = {
    "amplify": "single-shot amplification: pointer distribution of both branches and of the postselected state",
    "sweep_z": "amplified position shift vs splitting g for several theta",
    "sweep_p": "amplified momentum shift vs g for several phi, imaginary weak value",
    "calibrate": "bichromatic calibration curve p_up(t) and Rabi fit from phonon numbers",
    "reconstruct": "constrained least-squares wavepacket reconstruction of a postselected pointer",
    "fitdemo": "weighted slope fit of <sin kz> for the mean position",
}


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class TrapConfig(_Model):
    frequency_hz: float = Field(1.41e6, gt=0, description="axial trap frequency omega_z / 2 pi")
    mass_u: float = Field(CA40_MASS_U, gt=0, description="ion mass in atomic mass units")

    def units(self) -> TrapUnits:
        from scipy.constants import atomic_mass

        return TrapUnits(2 * math.pi * self.frequency_hz, self.mass_u * atomic_mass)


class PulseConfig(_Model):
    rabi_hz: float = Field(19.0e3, ge=0, description="sideband Rabi frequency Omega / 2 pi")
    eta: float = Field(0.08, gt=0, le=0.3)
    duration_us: float = Field(4.0, ge=0)
    phi_plus: float = math.pi / 2
    phi_minus: float = math.pi / 2

    def params(self) -> PulseParams:
        return PulseParams(2 * math.pi * self.rabi_hz, self.eta, self.duration_us * 1e-6, self.phi_plus, self.phi_minus)


class Linspace(_Model):
    start: float
    stop: float
    num: int = Field(ge=1)

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.num)


class DetectionConfig(_Model):
    error_up: float = Field(3e-5, ge=0, lt=0.5)
    error_down: float = Field(0.0, ge=0, lt=0.5)


class GridConfig(_Model):
    lo: float = -8.0
    hi: float = 8.0
    n: int = Field(64, ge=8)

    @model_validator(mode="after")
    def _ordered(self):
        if not self.hi > self.lo:
            raise ValueError("grid.hi must exceed grid.lo")
        return self


class ReconstructionConfig(_Model):
    grid: GridConfig = GridConfig()
    k_max: float = Field(6.0, gt=0)
    k_points: int = Field(24, ge=4)
    restarts: int = Field(10, ge=1)
    kinetic_bound: Literal["extracted", "true"] = "extracted"


class SlopeConfig(_Model):
    k_max: float = Field(0.3, gt=0)
    k_points: int = Field(6, ge=3)
    terms: int = Field(1, ge=1, le=4)


class FitCase(_Model):
    g: float = Field(ge=0)
    theta: float


class ExperimentConfig(_Model):
    schema_version: Literal[1] = 1
    scenario: Literal["amplify", "sweep_z", "sweep_p", "calibrate", "reconstruct", "fitdemo"]
    seed: Optional[int] = Field(None, ge=0)
    trap: TrapConfig = TrapConfig()
    pulse: PulseConfig = PulseConfig()
    g: Optional[float] = Field(None, ge=0, description="splitting; overrides the pulse-derived value")
    theta: Optional[list[float]] = None
    phi: Optional[list[float]] = None
    g_grid: Optional[Linspace] = None
    times_us: Optional[Linspace] = None
    phonon_rabi_hz: float = Field(19.0e3, gt=0)
    phonon_times_us: Linspace = Linspace(start=0.0, stop=100.0, num=21)
    phonon_noise: float = Field(0.01, ge=0)
    cases: list[FitCase] = [FitCase(g=0.2, theta=0.2), FitCase(g=0.4, theta=0.2)]
    shots: int = Field(500, ge=1)
    detection: DetectionConfig = DetectionConfig()
    exact_only: bool = False
    workers: int = Field(1, ge=1)
    n_max: int = Field(64, ge=8)
    reconstruction: ReconstructionConfig = ReconstructionConfig()
    slope: SlopeConfig = SlopeConfig()
    output_dir: str = "out"

    @field_validator("theta", "phi")
    @classmethod
    def _finite_angles(cls, v):
        if v is not None:
            if not v:
                raise ValueError("angle list must not be empty")
            if not all(math.isfinite(x) and 0 <= x <= math.pi / 2 for x in v):
                raise ValueError("angles must be finite radians in [0, pi/2]")
        return v

    @model_validator(mode="after")
    def _scenario_fields(self):
        need = {
            "amplify": ["theta"],
            "sweep_z": ["theta", "g_grid"],
            "sweep_p": ["phi", "g_grid"],
            "calibrate": ["times_us"],
            "reconstruct": ["theta"],
            "fitdemo": [],
        }[self.scenario]
        for name in need:
            if getattr(self, name) is None:
                raise ValueError(f"{name}: required for scenario {self.scenario!r}")
        if self.g_grid is not None and (self.g_grid.start < 0 or self.g_grid.stop < 0):
            raise ValueError("g_grid: splittings must be non-negative")
        for g, th in self.postselection_pairs():
            if theory.success_probability(g, th) <= theory.SINGULAR_TOL:
                raise ValueError(f"theta: undefined postselection at g={g}, theta={th} (zero success probability)")
        for g, ph in self.imaginary_pairs():
            if theory.imaginary_success_probability(g, ph) <= theory.SINGULAR_TOL:
                raise ValueError(f"phi: undefined postselection at g={g}, phi={ph} (zero success probability)")
        return self

    # -- derived quantities ---------------------------------------------------

    @property
    def coupling(self) -> float:
        return self.g if self.g is not None else self.pulse.params().coupling

    def g_values(self) -> np.ndarray:
        if self.g_grid is not None:
            return self.g_grid.values()
        return np.array([self.coupling])

    def postselection_pairs(self):
        if self.scenario in ("amplify", "reconstruct"):
            return [(self.coupling, th) for th in self.theta or []]
        if self.scenario == "sweep_z":
            return [(g, th) for th in self.theta or [] for g in self.g_values()]
        if self.scenario == "fitdemo":
            return [(c.g, c.theta) for c in self.cases]
        return []

    def imaginary_pairs(self):
        if self.scenario == "sweep_p":
            return [(g, ph) for ph in self.phi or [] for g in self.g_values()]
        return []


def load_config(path) -> ExperimentConfig:
    """Parse and validate a JSON config; errors become ConfigurationError."""
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON: {exc}") from exc
    return parse_config(raw)


def parse_config(raw: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            msg = err["msg"].removeprefix("Value error, ")
            loc = ".".join(str(x) for x in err["loc"])
            lines.append(f"{loc}: {msg}" if loc else msg)
        raise ConfigurationError("invalid config:\n  " + "\n  ".join(lines)) from None


def derived_quantities(cfg: ExperimentConfig) -> dict:
    """Everything ``validate`` reports: splitting, regime flags, herald rates."""
    units = cfg.trap.units()
    out = {
        "delta_z_nm": units.delta_z * 1e9,
        "delta_p_kg_m_s": units.delta_p,
    }
    if cfg.scenario == "calibrate":
        p = cfg.pulse.params()
        times = cfg.times_us.values() * 1e-6
        out["max_alpha"] = float(p.eta * p.rabi * times.max() / 2)
        return out
    if cfg.scenario in ("amplify", "reconstruct"):
        g = cfg.coupling
        out["g"] = g
        out["splitting_nm"] = g * units.delta_z * 1e9
    rows = []
    for g, th in cfg.postselection_pairs():
        rows.append(_real_row(g, th, units))
    for g, ph in cfg.imaginary_pairs():
        rows.append(_imag_row(g, ph))
    if cfg.scenario in ("amplify", "reconstruct", "fitdemo"):
        out["points"] = rows
    elif rows:
        strengths = [r["weak_strength"] for r in rows if r["weak_strength"] is not None]
        out["points"] = len(rows)
        out["max_weak_strength"] = max(strengths) if strengths else None
        out["min_success_probability"] = min(r["success_probability"] for r in rows)
    return out


def _regime(strength):
    if strength is None:
        return "weak value undefined (orthogonal pre/postselection)"
    if strength >= theory.WEAK_REGIME_LIMIT:
        return "outside weak-coupling limit"
    return "weak-coupling limit"


def _real_row(g, th, units):
    a_w = -1 / math.tan(th) if math.tan(th) != 0 else None
    strength = abs(a_w) * g if a_w is not None else None
    dz = theory.delta_z(g, th)
    return {
        "g": g,
        "theta": th,
        "weak_value": a_w,
        "weak_strength": strength,
        "regime": _regime(strength),
        "success_probability": theory.success_probability(g, th),
        "delta_z": dz,
        "shift_nm": abs(dz) * units.delta_z * 1e9,
        "amplification": abs(dz) / g if g > 0 else None,
    }


def _imag_row(g, ph):
    im = 1 / math.tan(ph) if math.tan(ph) != 0 else None
    strength = abs(im) * g if im is not None else None
    return {
        "g": g,
        "phi": ph,
        "weak_value_imag": im,
        "weak_strength": strength,
        "regime": _regime(strength),
        "success_probability": theory.imaginary_success_probability(g, ph),
        "delta_p": theory.delta_p(g, ph),
    }
