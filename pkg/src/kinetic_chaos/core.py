"""Phase-space types, the elastic collision map, conserved functionals,
and the good-set predicates used throughout the toolkit.

Conventions:
  * A phase point holds s labeled hard spheres in R^d, positions and
    velocities as float64 arrays of shape (s, d).
  * "Backward free streaming" of a pair means the relative position
    x_i - x_j - (v_i - v_j) * tau for tau > 0.
  * Set predicates are strict inequalities with a configurable slack
    delta (membership is "quantity > threshold + delta"); boundary
    contact pairs are classified by whether they approach or recede
    under the backward flow, so states created at exact contact are
    handled deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "PhasePoint",
    "SimConfig",
    "Functionals",
    "CutoffParams",
    "WeightParams",
    "collide",
    "functionals",
    "in_K",
    "in_U_eta",
    "in_tilde_U_eta",
    "in_G",
    "in_hat_U_eta",
    "default_chi",
]

_UNIT_TOL = 1e-12


def _as_matrix(arr, d: int | None = None) -> np.ndarray:
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ValueError("expected an (s, d) array of vectors")
    if d is not None and a.shape[1] != d:
        raise ValueError(f"expected vectors of length {d}, got {a.shape[1]}")
    return a


@dataclass(frozen=True)
class PhasePoint:
    """State of s labeled hard spheres: positions x and velocities v, shape (s, d)."""

    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        x = _as_matrix(self.x)
        v = _as_matrix(self.v, x.shape[1])
        if x.shape != v.shape:
            raise ValueError("positions and velocities must have the same shape")
        if x.shape[0] < 1:
            raise ValueError("need at least one particle")
        x = x.copy()
        v = v.copy()
        x.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)

    @property
    def s(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def is_admissible(self, epsilon: float, tol: float = 1e-9) -> bool:
        """True when all pairwise separations are >= epsilon (up to a relative tol)."""
        if self.s == 1:
            return True
        iu, ju = np.triu_indices(self.s, k=1)
        gaps = np.linalg.norm(self.x[iu] - self.x[ju], axis=1)
        return bool(np.all(gaps >= epsilon * (1.0 - tol)))

    def free_stream(self, t: float) -> "PhasePoint":
        return PhasePoint(self.x + self.v * t, self.v)


@dataclass(frozen=True)
class SimConfig:
    """Scaling configuration: d, particle count N, mean free path ell.

    The diameter epsilon is tied to the scaling N * epsilon^(d-1) = 1/ell.
    """

    d: int
    N: int
    ell: float
    epsilon: float = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("dimension must be >= 2")
        if self.N < 1:
            raise ValueError("N must be positive")
        if not self.ell > 0:
            raise ValueError("ell must be positive")
        if self.epsilon is None:
            eps = (1.0 / (self.N * self.ell)) ** (1.0 / (self.d - 1))
            object.__setattr__(self, "epsilon", float(eps))
        rel = abs(self.N * self.epsilon ** (self.d - 1) - 1.0 / self.ell) * self.ell
        if rel > 1e-9:
            raise ValueError(
                "scaling violated: N * epsilon^(d-1) must equal 1/ell "
                f"(relative error {rel:.3e})"
            )


@dataclass(frozen=True)
class Functionals:
    """Kinetic energy, moment of inertia, and the virial-type functional."""

    energy: float
    moment_of_inertia: float
    virial: float


def default_chi(z: float | np.ndarray) -> np.ndarray | float:
    """Smooth non-increasing cutoff profile: 1 on [0,1], 0 on [2,inf), |chi'| <= 1.5."""
    z = np.asarray(z, dtype=np.float64)
    u = np.clip(z - 1.0, 0.0, 1.0)
    out = 1.0 - u * u * (3.0 - 2.0 * u)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class CutoffParams:
    """Analysis thresholds: velocity gap eta, energy radius R, grazing angle alpha,
    creation separation y, recollision cone half-angle theta, exponent kappa,
    truncation depth n, and the cutoff profile chi."""

    eta: float
    R: float
    alpha: float
    y: float
    theta: float
    kappa: float = 0.5
    n: int = 3
    chi: Callable = default_chi
    c_d: float = 4.0  # geometric calibration constant; see module docs
    delta_set: float = 0.0  # slack for strict set-membership inequalities

    def __post_init__(self):
        if not (self.eta > 0 and self.R > 0 and self.alpha > 0 and self.y > 0):
            raise ValueError("eta, R, alpha, y must be positive")
        if not (0 < self.theta < np.pi / 2):
            raise ValueError("theta must lie in (0, pi/2)")
        if not (0 < self.kappa < 1):
            raise ValueError("kappa must lie in (0, 1)")
        if self.n < 0:
            raise ValueError("truncation depth must be nonnegative")
        if not self.eta < self.R:
            raise ValueError("eta must be smaller than R")

    def check_cone_hypothesis(self, epsilon: float) -> None:
        """The geometric hypothesis sin(theta) > c_d * epsilon / y."""
        if not np.sin(self.theta) > self.c_d * epsilon / self.y:
            raise ValueError(
                "cone hypothesis violated: sin(theta) must exceed "
                f"c_d*epsilon/y = {self.c_d * epsilon / self.y:.3e}"
            )


@dataclass(frozen=True)
class WeightParams:
    """Exponential weights: inverse-temperature-like beta and fugacity-like mu."""

    beta: float
    mu: float = 0.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")


def collide(v_i, v_j, omega) -> tuple[np.ndarray, np.ndarray]:
    """Elastic hard-sphere exchange along the unit impact direction omega.

    v_i* = v_i + omega (omega . (v_j - v_i)),  v_j* = v_j - omega (omega . (v_j - v_i)).
    Preserves kinetic energy and momentum; applying it twice returns the inputs.
    """
    v_i = np.asarray(v_i, dtype=np.float64)
    v_j = np.asarray(v_j, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    if abs(np.dot(omega, omega) - 1.0) > 2 * _UNIT_TOL:
        raise ValueError("omega must be a unit vector")
    w = np.dot(omega, v_j - v_i)
    return v_i + omega * w, v_j - omega * w


def functionals(Z: PhasePoint) -> Functionals:
    """Energy (1/2)sum|v|^2, inertia (1/2)sum|x|^2, and sum x.v."""
    e = 0.5 * float(np.sum(Z.v * Z.v))
    i = 0.5 * float(np.sum(Z.x * Z.x))
    y = float(np.sum(Z.x * Z.v))
    return Functionals(energy=e, moment_of_inertia=i, virial=y)


def _pair_diffs(Z: PhasePoint):
    iu, ju = np.triu_indices(Z.s, k=1)
    return Z.x[iu] - Z.x[ju], Z.v[iu] - Z.v[ju]


def _backward_contact(dx: np.ndarray, dv: np.ndarray, epsilon: float,
                      delta: float = 0.0) -> np.ndarray:
    """For rows of relative data, True where the pair reaches an approaching
    contact at distance <= epsilon + delta under backward free streaming
    (relative position dx - dv*tau, tau > 0)."""
    dx = np.atleast_2d(dx)
    dv = np.atleast_2d(dv)
    b = np.sum(dx * dv, axis=1)
    vv = np.sum(dv * dv, axis=1)
    xx = np.sum(dx * dx, axis=1)
    thr = (epsilon + delta) ** 2
    # minimizer of |dx - dv tau|^2 is tau* = b / vv; only tau* > 0 can approach
    with np.errstate(divide="ignore", invalid="ignore"):
        tau_star = np.where(vv > 0, b / np.where(vv > 0, vv, 1.0), 0.0)
        min_sq = xx - np.where(vv > 0, b * b / np.where(vv > 0, vv, 1.0), 0.0)
    hit = (tau_star > 0) & (min_sq <= thr)
    return hit


def in_K(Z: PhasePoint, epsilon: float, delta: float = 0.0) -> bool:
    """Backward free-flow set: no pair ever reaches an approaching contact
    under backward free streaming.

    Separated pairs are tested by closed-form quadratic minimization over
    tau > 0; pairs exactly at contact count as free when they recede
    backward in time.
    """
    if Z.s == 1:
        return True
    dx, dv = _pair_diffs(Z)
    return not bool(np.any(_backward_contact(dx, dv, epsilon, delta)))


def in_U_eta(Z: PhasePoint, eta: float, delta: float = 0.0) -> bool:
    """All pairwise velocity gaps exceed eta (strict)."""
    if Z.s == 1:
        return True
    _, dv = _pair_diffs(Z)
    gaps = np.linalg.norm(dv, axis=1)
    return bool(np.all(gaps > eta + delta))


def _iota(dx: np.ndarray, dv: np.ndarray) -> np.ndarray:
    """Closest approach inf over all real tau of |dx - dv*tau| (row-wise)."""
    dx = np.atleast_2d(dx)
    dv = np.atleast_2d(dv)
    xx = np.sum(dx * dx, axis=1)
    vv = np.sum(dv * dv, axis=1)
    b = np.sum(dx * dv, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        proj = np.where(vv > 0, b * b / np.where(vv > 0, vv, 1.0), 0.0)
    return np.sqrt(np.maximum(xx - proj, 0.0))


def in_tilde_U_eta(Z: PhasePoint, eta: float, delta: float = 0.0) -> bool:
    """Refined dispersion set allowing equal velocities at large impact parameter:
    |dv|/eta + iota(dx, dv) / (eta log(1/eta)) > 1 for every pair."""
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    if Z.s == 1:
        return True
    dx, dv = _pair_diffs(Z)
    gaps = np.linalg.norm(dv, axis=1)
    score = gaps / eta + _iota(dx, dv) / (eta * np.log(1.0 / eta))
    return bool(np.all(score > 1.0 + delta))


def _tracked_pair_branches(Z: PhasePoint, epsilon: float):
    """Backward branches of particles 0 and 1 (0-based).

    Each branch is (origin, velocity, tau_start) describing the backward
    position origin - velocity * (tau - tau_start) for tau >= tau_start.
    Particles 0 and 1 may either stream through each other (their full
    free line) or scatter at their mutual backward contact time, so each
    carries at most two branches.
    """
    branches = {0: [(Z.x[0], Z.v[0], 0.0)], 1: [(Z.x[1], Z.v[1], 0.0)]}
    dx = Z.x[0] - Z.x[1]
    dv = Z.v[0] - Z.v[1]
    vv = float(np.dot(dv, dv))
    if vv == 0.0:
        return branches, None
    b = float(np.dot(dx, dv))
    disc = b * b - vv * (float(np.dot(dx, dx)) - epsilon * epsilon)
    if b <= 0 or disc <= 0:
        return branches, None
    tau_c = (b - np.sqrt(disc)) / vv
    if tau_c <= 0:
        return branches, None
    # positions at backward contact, scattered velocities for the post branch
    x0c = Z.x[0] - Z.v[0] * tau_c
    x1c = Z.x[1] - Z.v[1] * tau_c
    omega = x1c - x0c
    omega = omega / float(np.linalg.norm(omega))
    u0, u1 = collide(Z.v[0], Z.v[1], omega)
    branches[0].append((x0c, u0, tau_c))
    branches[1].append((x1c, u1, tau_c))
    return branches, tau_c


def _segment_line_clear(origin_a, vel_a, tau_a, origin_b, vel_b,
                        epsilon: float, delta: float) -> bool:
    """True when backward branch a (valid for tau >= tau_a) stays clear of the
    free backward line b (valid for all tau > 0): no approaching contact on
    the common domain tau >= tau_a."""
    # relative position at tau >= tau_a: (origin_a - origin_b + vel_b*tau_a) - (vel_a - vel_b)(tau - tau_a)
    dx = (origin_a - (origin_b - vel_b * tau_a))
    dv = vel_a - vel_b
    # at the start of the branch the pair must already be separated
    if float(np.linalg.norm(dx)) < epsilon - 1e-12 * max(epsilon, 1.0):
        return False
    return not bool(_backward_contact(dx[None, :], dv[None, :], epsilon, delta)[0])


def in_G(Z: PhasePoint, epsilon: float, delta: float = 0.0) -> bool:
    """At-most-two-particle backward interaction set: particles 3..s move
    freely under the backward flow, and particles 1, 2 (which may collide
    with each other, pass through, or miss) stay farther than epsilon from
    every other particle along each of their straight-line branches.
    """
    s = Z.s
    if s <= 2:
        return True
    # pairs among particles 3..s must be backward-free
    idx = np.arange(2, s)
    iu, ju = np.triu_indices(len(idx), k=1)
    if len(iu):
        dx = Z.x[idx[iu]] - Z.x[idx[ju]]
        dv = Z.v[idx[iu]] - Z.v[idx[ju]]
        if bool(np.any(_backward_contact(dx, dv, epsilon, delta))):
            return False
    branches, _ = _tracked_pair_branches(Z, epsilon)
    for i in (0, 1):
        for origin, vel, tau_start in branches[i]:
            for j in range(2, s):
                if not _segment_line_clear(origin, vel, tau_start,
                                           Z.x[j], Z.v[j], epsilon, delta):
                    return False
    return True


def _backward_velocity_values(Z: PhasePoint, epsilon: float,
                              max_events: int = 1000) -> list[np.ndarray]:
    """Velocity values taken by each particle along the backward flow.

    Runs a light event loop (backward in time, hard-sphere scattering at
    each approaching contact) and records every velocity a particle holds.
    """
    x = np.array(Z.x, dtype=np.float64)
    v = np.array(Z.v, dtype=np.float64)
    s = Z.s
    values: list[list[np.ndarray]] = [[v[i].copy()] for i in range(s)]
    if s == 1:
        return [np.asarray(h) for h in values]
    for _ in range(max_events):
        iu, ju = np.triu_indices(s, k=1)
        dx = x[iu] - x[ju]
        dv = v[iu] - v[ju]
        b = np.sum(dx * dv, axis=1)
        vv = np.sum(dv * dv, axis=1)
        xx = np.sum(dx * dx, axis=1)
        disc = b * b - vv * (xx - epsilon * epsilon)
        ok = (b > 0) & (disc > 0) & (vv > 0)
        if not np.any(ok):
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            tau = np.where(ok, (b - np.sqrt(np.maximum(disc, 0.0))) /
                           np.where(vv > 0, vv, 1.0), np.inf)
        tau = np.where(ok & (tau > 1e-15), tau, np.inf)
        k = int(np.argmin(tau))
        if not np.isfinite(tau[k]):
            break
        i, j = int(iu[k]), int(ju[k])
        step = float(tau[k])
        x = x - v * step
        omega = x[j] - x[i]
        omega = omega / float(np.linalg.norm(omega))
        # backward scattering: reverse, exchange, reverse (the map is odd in v)
        vi, vj = collide(v[i], v[j], omega)
        v = v.copy()
        v[i], v[j] = vi, vj
        values[i].append(v[i].copy())
        values[j].append(v[j].copy())
    return [np.asarray(h) for h in values]


def in_hat_U_eta(Z: PhasePoint, eta: float, epsilon: float,
                 delta: float = 0.0,
                 histories: Sequence[np.ndarray] | None = None) -> bool:
    """History-separated velocity set: along the backward flow, every pair of
    velocity values of distinct particles differs by more than eta, and any
    two distinct values of the same particle differ by more than eta.

    Velocities change only at backward collisions, so each particle takes
    finitely many values; the check enumerates them pairwise. Precomputed
    histories (arrays of velocity values per particle) may be supplied.
    """
    if Z.s == 1:
        return True
    if histories is None:
        histories = _backward_velocity_values(Z, epsilon)
    s = len(histories)
    for i in range(s):
        hi = histories[i]
        for j in range(i + 1, s):
            hj = histories[j]
            gaps = np.linalg.norm(hi[:, None, :] - hj[None, :, :], axis=2)
            if bool(np.any(gaps <= eta + delta)):
                return False
        # distinct values of the same particle
        if len(hi) > 1:
            gaps = np.linalg.norm(hi[:, None, :] - hi[None, :, :], axis=2)
            iu, ju = np.triu_indices(len(hi), k=1)
            g = gaps[iu, ju]
            nz = g > 0
            if bool(np.any(g[nz] <= eta + delta)):
                return False
    return True
