"""Characteristic-function signals, wavepacket reconstruction and moment fits.

The spin-dependent kick exp(-i k Q sigma_x / 2) (Q = zeta or pi) followed by
a sigma_z readout measures cos(kQ) sigma_z + sin(kQ) sigma_y.  Preparing the
spin in the +1 eigenstate of sigma_z therefore yields <cos kQ>, the +1
eigenstate of sigma_y yields <sin kQ>.  From those signals this module

* reconstructs the position distribution on a grid by constrained least
  squares (simplex plus a Fisher-information / kinetic-energy bound),
* extracts <Q> from the small-k slope of <sin kQ> and <pi^2> from the
  curvature of <cos k pi>, both by weighted least squares.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dynamics import spin_conditional_kick
from .errors import ContractError, ConvergenceError, FitError, InfeasibleBoundError
from .fitting import weighted_polyfit
from .hilbert import JointState, MotionalState, SpinState
from .measurement import ShotPlan, rng_for, sample_population

FISHER_FLOOR = 1e-8
LINEAR_REGIME = 0.3

DEFAULT_RECON_KS = np.linspace(0.0, 6.0, 24)
DEFAULT_SLOPE_KS = np.linspace(0.0, 0.3, 6)
DEFAULT_P2_KS = np.linspace(0.0, 1.0, 11)

_PREP_KIND = {"sigma_z": "cos", "sigma_y": "sin"}


@dataclass(frozen=True)
class SignalSet:
    """Measured <cos kQ> or <sin kQ> values with their standard deviations.

    ``shots == 0`` marks noiseless (exact) signals; their sigmas are 1 so
    that weighted fits reduce to ordinary ones.
    """

    ks: np.ndarray
    values: np.ndarray
    sigmas: np.ndarray
    kind: str
    quadrature: str
    shots: int

    def __post_init__(self):
        arrs = []
        for name in ("ks", "values", "sigmas"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
            arrs.append(arr)
        if not (arrs[0].shape == arrs[1].shape == arrs[2].shape) or arrs[0].ndim != 1:
            raise ContractError("ks, values and sigmas must be 1-d and of equal length")
        if np.any(~(self.sigmas > 0)):
            raise ContractError("sigmas must be positive")
        if np.any(np.abs(self.values) > 1 + 1e-12):
            raise ContractError("signal values must lie in [-1, 1]")
        if self.kind not in ("cos", "sin"):
            raise ContractError(f"kind must be 'cos' or 'sin', got {self.kind!r}")
        if self.quadrature not in ("z", "p"):
            raise ContractError(f"quadrature must be 'z' or 'p', got {self.quadrature!r}")

    @property
    def exact(self) -> bool:
        return self.shots == 0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["k", "value", "sigma", "kind", "quadrature", "shots"])
            for k, v, s in zip(self.ks, self.values, self.sigmas):
                writer.writerow([_fmt(k), _fmt(v), _fmt(s), self.kind, self.quadrature, self.shots])

    @classmethod
    def from_csv(cls, path) -> "SignalSet":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ContractError(f"{path}: no signal rows")
        kinds = {r["kind"] for r in rows}
        quads = {r["quadrature"] for r in rows}
        shots = {int(r["shots"]) for r in rows}
        if len(kinds) != 1 or len(quads) != 1 or len(shots) != 1:
            raise ContractError(f"{path}: mixed kind/quadrature/shots columns")
        return cls(
            [float(r["k"]) for r in rows],
            [float(r["value"]) for r in rows],
            [float(r["sigma"]) for r in rows],
            kinds.pop(),
            quads.pop(),
            shots.pop(),
        )


@dataclass(frozen=True)
class Grid:
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 3:
            raise ContractError("grid needs at least three points")
        steps = np.diff(pts)
        if np.any(steps <= 0) or np.ptp(steps) > 1e-12 * max(1.0, abs(steps[0])):
            raise ContractError("grid must be sorted and uniformly spaced")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, lo: float = -8.0, hi: float = 8.0, n: int = 64) -> "Grid":
        pts = lo + (hi - lo) * np.arange(n) / (n - 1)
        return cls(pts)

    @property
    def spacing(self) -> float:
        return float((self.points[-1] - self.points[0]) / (self.points.size - 1))

    def covers(self, shift: float, margin: float = 5.0) -> bool:
        reach = abs(shift) + margin
        return self.points[0] <= -reach and self.points[-1] >= reach


@dataclass(frozen=True)
class ReconstructionResult:
    grid: Grid
    probabilities: np.ndarray
    objective: float
    iterations: int
    kinetic_bound_active: bool
    fisher: float
    kinetic_bound: float
    bound_source: str = "given"
    restarts: int = 1
    history: tuple = field(default=(), repr=False)

    def density(self) -> np.ndarray:
        return self.probabilities / self.grid.spacing

    def metadata(self) -> dict:
        return {
            "objective": self.objective,
            "iterations": self.iterations,
            "kinetic_bound_active": self.kinetic_bound_active,
            "fisher_information": self.fisher,
            "kinetic_bound": self.kinetic_bound,
            "kinetic_bound_source": self.bound_source,
            "restarts": self.restarts,
            "grid": {"lo": float(self.grid.points[0]), "hi": float(self.grid.points[-1]), "n": int(self.grid.points.size)},
        }

    def to_csv(self, path, metadata_path=None) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["z", "probability"])
            for z, p in zip(self.grid.points, self.probabilities):
                writer.writerow([_fmt(z), _fmt(p)])
        if metadata_path is None:
            metadata_path = Path(path).with_suffix(".json")
        Path(metadata_path).write_text(json.dumps(self.metadata(), indent=2, sort_keys=True) + "\n")


def read_distribution_csv(path) -> tuple[np.ndarray, np.ndarray, dict]:
    """(z, probability, metadata) as written by ``ReconstructionResult.to_csv``."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    meta_path = Path(path).with_suffix(".json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return data[:, 0], data[:, 1], meta


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# -- signals -----------------------------------------------------------------


def _prepared(motional: MotionalState, prep: str) -> JointState:
    if prep == "sigma_z":
        spin = SpinState.up()
    elif prep == "sigma_y":
        spin = SpinState(1 / np.sqrt(2), 1j / np.sqrt(2))
    else:
        raise ContractError(f"prep must be 'sigma_z' or 'sigma_y', got {prep!r}")
    return JointState.product(spin, motional)


def observable_expectation(motional: MotionalState, k: float, prep: str, quadrature: str) -> float:
    """<sigma_z> after kicking ``prep`` (x) motional by exp(-i k Q sigma_x / 2).

    sigma_z preparation gives <cos kQ>, sigma_y preparation gives <sin kQ>.
    """
    if abs(motional.norm - 1.0) > 1e-10:
        raise ContractError("motional state must be normalized")
    state = spin_conditional_kick(_prepared(motional, prep), k, quadrature)
    pu = float(np.vdot(state.block_up, state.block_up).real)
    pd = float(np.vdot(state.block_down, state.block_down).real)
    return pu - pd


def generate_signals(
    motional: MotionalState,
    ks: Sequence[float],
    prep: str,
    quadrature: str,
    plan: ShotPlan | None = None,
) -> SignalSet:
    """Simulated signal record; ``plan=None`` returns exact expectations.

    With a plan, point j is sampled from the stream ``plan.child(j)``:
    p_up = (1 + e) / 2 is estimated from ``plan.shots`` readouts and mapped
    back to 2 p - 1, so sigmas are twice the population sigmas.
    """
    ks = np.asarray(ks, dtype=float)
    exact = np.array([observable_expectation(motional, k, prep, quadrature) for k in ks])
    kind = _PREP_KIND[prep]
    if plan is None:
        return SignalSet(ks, np.clip(exact, -1, 1), np.ones_like(ks), kind, quadrature, 0)
    values, sigmas = [], []
    for j, e in enumerate(exact):
        est, sig = sample_population((1 + e) / 2, plan.child(j))
        values.append(2 * est - 1)
        sigmas.append(2 * sig)
    return SignalSet(ks, values, sigmas, kind, quadrature, int(plan.shots))


# -- moment extraction ---------------------------------------------------------


def extract_mean(signals: SignalSet, terms: int = 1) -> tuple[float, float]:
    """<Q> and its fit sigma from the small-k slope of <sin kQ>.

    Weighted least squares (weights 1/sigma^2) of the odd series
    c1 k + c3 k^3 + ... with ``terms`` coefficients; ``terms=1`` is the
    straight line through the origin.  Returns (c1, sigma(c1)).
    """
    if signals.kind != "sin":
        raise FitError("the mean is extracted from sin-kind signals")
    if signals.ks.size < 3:
        raise FitError(f"need at least 3 points, got {signals.ks.size}")
    if terms < 1:
        raise FitError("terms must be >= 1")
    powers = tuple(2 * j + 1 for j in range(terms))
    fit = weighted_polyfit(signals.ks, signals.values, signals.sigmas, powers)
    slope = fit.coefficient(1)
    if terms == 1 and np.max(np.abs(signals.ks)) * abs(slope) > LINEAR_REGIME:
        warnings.warn(
            f"k range exceeds the linear regime (max k * |<Q>| = {np.max(np.abs(signals.ks)) * abs(slope):.3f})",
            stacklevel=2,
        )
    return slope, fit.sigma(1)


def _p2_fit(signals: SignalSet, terms: int):
    if signals.kind != "cos":
        raise FitError("<Q^2> is extracted from cos-kind signals")
    if signals.ks.size < 5:
        raise FitError(f"need at least 5 small-k points, got {signals.ks.size}")
    powers = tuple(2 * j + 2 for j in range(terms))
    fit = weighted_polyfit(signals.ks, 1.0 - signals.values, signals.sigmas, powers)
    if fit.coefficient(2) <= 0:
        raise FitError("signal is not concave at k = 0")
    return fit


def extract_p2(signals: SignalSet, terms: int = 3) -> float:
    """<Q^2> from the curvature of <cos kQ> at k = 0.

    Fits 1 - <cos kQ> = c2 k^2 + c4 k^4 + ... (``terms`` even powers) and
    returns 2 c2, i.e. minus twice the quadratic coefficient of the signal.
    """
    return 2.0 * _p2_fit(signals, terms).coefficient(2)


def kinetic_bound_from_signals(signals: SignalSet, terms: int = 3, confidence: float = 2.0) -> tuple[float, float, float]:
    """(bound, estimate, sigma) for the Fisher-information constraint.

    For sampled signals the bound is the one-sided upper confidence limit
    ``estimate + confidence * sigma``: an underestimated bound excludes the
    true state, an overestimated one only loosens the constraint.  Exact
    signals use the estimate itself.
    """
    fit = _p2_fit(signals, terms)
    estimate = 2.0 * fit.coefficient(2)
    if signals.exact:
        return estimate, estimate, 0.0
    sigma = 2.0 * fit.sigma(2)
    return estimate + confidence * sigma, estimate, sigma


# -- constrained least-squares reconstruction -----------------------------------


def derivative_matrix(n: int, spacing: float) -> np.ndarray:
    """Central differences inside, one-sided differences at the two edges."""
    d = np.zeros((n, n))
    idx = np.arange(1, n - 1)
    d[idx, idx + 1] = 0.5
    d[idx, idx - 1] = -0.5
    d[0, 0], d[0, 1] = -1.0, 1.0
    d[-1, -2], d[-1, -1] = -1.0, 1.0
    return d / spacing


STENCIL = "staggered"


def fisher_operators(n: int, spacing: float, stencil: str = "staggered"):
    """(D, M) such that the Fisher sum is sum_j (D p)_j^2 / (M p)_j."""
    if stencil == "central":
        return derivative_matrix(n, spacing), np.eye(n)
    d = np.zeros((n - 1, n))
    m = np.zeros((n - 1, n))
    j = np.arange(n - 1)
    d[j, j], d[j, j + 1] = -1.0, 1.0
    m[j, j], m[j, j + 1] = 0.5, 0.5
    return d / spacing, m


def fisher_information(probabilities, spacing: float, floor: float = FISHER_FLOOR, stencil: str = "staggered") -> float:
    """Discretised integral of rho'^2 / rho for grid probabilities p = rho * spacing.

    Equals sum_i (D p)_i^2 / max(p_i, floor) with D the difference matrix.
    For a unit-variance Gaussian it is 1, and the kinetic-energy bound
    reads fisher <= <pi^2>.
    """
    p = np.asarray(probabilities, dtype=float)
    d, m = fisher_operators(p.size, spacing, stencil)
    x = d @ p
    return float(np.sum(x * x / np.maximum(m @ p, floor)))


def signal_matrix(ks, grid: Grid, kind: str) -> np.ndarray:
    phase = np.outer(np.asarray(ks, dtype=float), grid.points)
    return np.cos(phase) if kind == "cos" else np.sin(phase)


class _Problem:
    """min |A p - b|^2  s.t.  p > 0, sum p = 1, sum_j (D p)_j^2 / (M p)_j <= bound."""

    def __init__(self, a, b, d, mid, bound):
        self.a, self.b, self.d, self.mid, self.bound = a, b, d, mid, bound
        self.ata2 = 2 * a.T @ a
        self.n = a.shape[1]

    def objective(self, p):
        r = self.a @ p - self.b
        return float(r @ r)

    def fisher(self, p):
        x = self.d @ p
        return float(x @ (x / (self.mid @ p)))

    def feasible(self, p):
        return bool(np.all(p > 0)) and self.fisher(p) < self.bound

    def barrier_value(self, p, t):
        if not self.feasible(p):
            return np.inf
        return self.objective(p) + (-np.sum(np.log(p)) - np.log(self.bound - self.fisher(p))) / t

    def derivatives(self, p, t):
        r = self.a @ p - self.b
        x = self.d @ p
        y = self.mid @ p
        q = x / y
        slack = self.bound - float(x @ q)
        g_fisher = 2 * self.d.T @ q - self.mid.T @ (q * q)
        # each term x^2/y has Hessian (2/y) v v^T with v = d - (x/y) m
        v = self.d - q[:, None] * self.mid
        h_fisher = v.T @ (v * (2 / y)[:, None])
        grad = 2 * self.a.T @ r + (-1 / p + g_fisher / slack) / t
        hess = self.ata2 + (np.diag(1 / p**2) + np.outer(g_fisher, g_fisher) / slack**2 + h_fisher / slack) / t
        return grad, hess


def _newton_direction(grad, hess):
    n = grad.size
    kkt = np.zeros((n + 1, n + 1))
    kkt[:n, :n] = hess
    kkt[:n, n] = 1.0
    kkt[n, :n] = 1.0
    rhs = np.concatenate([-grad, [0.0]])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    step = sol[:n]
    return step - step.mean()


def _barrier_solve(problem: _Problem, p0, gap_tol=1e-11, max_newton=3000, t0=1.0, growth=10.0):
    """Log-barrier interior-point method with equality-constrained Newton steps.

    Returns (p, newton_steps, histories).  Each history lists the barrier
    merit after every accepted step of one centring stage; Armijo
    backtracking makes each list non-increasing.
    """
    p = np.array(p0, dtype=float)
    m = problem.n + 1
    t = t0
    steps = 0
    histories = []
    while True:
        f = problem.barrier_value(p, t)
        hist = [f]
        for _ in range(200):
            grad, hess = problem.derivatives(p, t)
            dp = _newton_direction(grad, hess)
            decrement = -float(grad @ dp)
            if decrement / 2 <= 1e-13 * max(1.0, abs(f)) or decrement <= 0:
                break
            s = 1.0
            while not problem.feasible(p + s * dp):
                s *= 0.5
                if s < 1e-16:
                    break
            f_new = problem.barrier_value(p + s * dp, t)
            while f_new > f - 0.25 * s * decrement and s >= 1e-16:
                s *= 0.5
                f_new = problem.barrier_value(p + s * dp, t)
            if s < 1e-16 or f_new > f:
                break
            p = p + s * dp
            p /= p.sum()
            f = problem.barrier_value(p, t)
            hist.append(f)
            steps += 1
            if steps >= max_newton:
                raise ConvergenceError(f"no convergence after {steps} Newton steps", best=p)
        histories.append(np.array(hist))
        if m / t < gap_tol:
            return p, steps, histories
        t *= growth


def reconstruct_distribution(
    cos_set: SignalSet,
    sin_set: SignalSet,
    grid: Grid | None = None,
    kinetic_bound: float = 1.0,
    restarts: int = 10,
    seed: int = 0,
    bound_source: str = "given",
) -> ReconstructionResult:
    """Least-squares position distribution subject to the kinetic-energy bound.

    Minimises F = sum_k (sum_i p_i cos(k z_i) - C_k)^2 + (sum_i p_i sin(k z_i) - S_k)^2
    over the probability simplex with fisher_information(p) <= kinetic_bound
    (the bound is <pi^2>, dimensionless).  The problem is convex; it is
    solved from ``restarts`` seeded interior starting points and the best
    objective wins, ties going to the lowest restart index.
    """
    grid = grid or Grid.uniform()
    if cos_set.kind != "cos" or sin_set.kind != "sin":
        raise ContractError("expected one cos-kind and one sin-kind signal set")
    if cos_set.quadrature != sin_set.quadrature:
        raise ContractError("signal sets probe different quadratures")
    if cos_set.ks.shape != sin_set.ks.shape or not np.allclose(cos_set.ks, sin_set.ks, rtol=0, atol=1e-12):
        raise ContractError("cos and sin signals must share one k grid")
    if not (np.isfinite(kinetic_bound) and kinetic_bound > 0):
        # the flat distribution has zero Fisher information, so any positive bound is feasible
        raise InfeasibleBoundError(f"kinetic bound must be positive, got {kinetic_bound}")

    a = np.vstack([signal_matrix(cos_set.ks, grid, "cos"), signal_matrix(sin_set.ks, grid, "sin")])
    b = np.concatenate([cos_set.values, sin_set.values])
    problem = _Problem(a, b, *fisher_operators(grid.points.size, grid.spacing, STENCIL), float(kinetic_bound))
    n = grid.points.size
    flat = np.full(n, 1.0 / n)

    best = None
    total_steps = 0
    for r in range(max(1, restarts)):
        if r == 0:
            p0 = flat
        else:
            q = rng_for(seed, r).dirichlet(np.ones(n))
            lam = min(1.0, 0.5 * problem.bound / max(problem.fisher(q), 1e-300))
            p0 = lam * q + (1 - lam) * flat
        p, steps, hist = _barrier_solve(problem, p0)
        total_steps += steps
        obj = problem.objective(p)
        if best is None or obj < best[1]:
            best = (p, obj, hist)

    p, obj, hist = best
    fisher = problem.fisher(p)
    active = (problem.bound - fisher) <= 1e-6 * problem.bound
    return ReconstructionResult(
        grid=grid,
        probabilities=p,
        objective=obj,
        iterations=total_steps,
        kinetic_bound_active=bool(active),
        fisher=fisher,
        kinetic_bound=float(kinetic_bound),
        bound_source=bound_source,
        restarts=max(1, restarts),
        history=tuple(hist),
    )


def l1_distance(p, q) -> float:
    return float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))


def grid_probabilities(density, grid: Grid) -> np.ndarray:
    """Riemann-normalised probabilities of a density function on the grid."""
    vals = np.asarray(density(grid.points), dtype=float)
    return vals / vals.sum()
