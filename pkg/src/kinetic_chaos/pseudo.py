"""Backward collision trees and Monte Carlo evaluation of the truncated
Duhamel series for the hierarchy of marginal equations.

A collision tree ("pseudo-trajectory") is built backward from an s-particle
state at time t: between creation times the state flows backward under one
of three flavors, and at each creation time a particle is adjoined next to
its parent.  Flavors:

  * 'bbgky':     hard-sphere backward flow, creation at contact (offset
                 epsilon * omega), suitability indicators exclude overlap
                 with the other particles;
  * 'boltzmann': backward free streaming, creation at the parent's exact
                 position, no exclusion;
  * 'enskog':    backward pass-through flow (only the first m-1 labeled
                 particles collide), creation at offset epsilon * omega,
                 no exclusion indicators.

The series coefficient for depth k is exact: a falling factorial times an
exact binary-rational power of epsilon, rounded to float once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .core import PhasePoint, SimConfig, CutoffParams, collide, functionals
from .flow import FlowPolicy, DegenerateEventError, backward, backward_tilde

__all__ = [
    "CreationSequence",
    "PseudoTrajectoryResult",
    "DepthEstimate",
    "SeriesEstimate",
    "ProductData",
    "PartialProductData",
    "coefficient_a",
    "build_pst",
    "duhamel_mc",
    "enskog_factorization_residual",
]

_FLAVORS = ("bbgky", "boltzmann", "enskog")


@dataclass(frozen=True)
class CreationSequence:
    """Creation data for a depth-k collision tree rooted at time t.

    times: strictly decreasing, inside (0, t); velocities: (k, d) new-particle
    velocities; omegas: (k, d) unit impact directions; parents: 0-based index
    of the parent among the particles existing just before each creation
    (so 0 <= parents[j] <= s + j - 1 when the root has s particles).
    """

    times: np.ndarray
    velocities: np.ndarray
    omegas: np.ndarray
    parents: np.ndarray

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.times, dtype=np.float64))
        v = np.atleast_2d(np.asarray(self.velocities, dtype=np.float64))
        w = np.atleast_2d(np.asarray(self.omegas, dtype=np.float64))
        p = np.atleast_1d(np.asarray(self.parents, dtype=int))
        k = len(t)
        if v.shape[0] != k or w.shape[0] != k or len(p) != k:
            raise ValueError("creation arrays must share the leading length k")
        if k and not np.all(np.diff(t) < 0):
            raise ValueError("creation times must be strictly decreasing")
        if k and not np.all(t > 0):
            raise ValueError("creation times must be positive")
        if np.any(np.abs(np.sum(w * w, axis=1) - 1.0) > 1e-10):
            raise ValueError("impact directions must be unit vectors")
        for name, arr in (("times", t), ("velocities", v),
                          ("omegas", w), ("parents", p)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def depth(self) -> int:
        return len(self.times)

    def validate_parents(self, s: int):
        for j, p in enumerate(self.parents):
            if not 0 <= p <= s + j - 1:
                raise ValueError(
                    f"creation {j}: parent {p} out of range 0..{s + j - 1}")


@dataclass(frozen=True)
class PseudoTrajectoryResult:
    """Backward tree endpoint: state at time 0 (None when the construction
    hits a degenerate event), the signed kernel product, and per-creation
    branch labels ('post' when the scattering exchange was applied)."""

    state: PhasePoint | None
    kernel: float
    defined: bool
    branch_record: tuple[str, ...]


@dataclass(frozen=True)
class DepthEstimate:
    k: int
    value: float
    stderr: float
    samples: int
    undefined: int


@dataclass(frozen=True)
class SeriesEstimate:
    value: float
    stderr: float
    per_depth: tuple[DepthEstimate, ...]


@dataclass(frozen=True)
class ProductData:
    """Fully factorized initial hierarchy: product of a one-particle density."""

    f1: Callable

    def __call__(self, x: np.ndarray, v: np.ndarray) -> float:
        vals = np.asarray(self.f1(x, v), dtype=np.float64)
        return float(np.prod(vals))


@dataclass(frozen=True)
class PartialProductData:
    """Initial hierarchy factorized past the first `tracked` particles:
    a joint density on the tracked block times a product over the rest."""

    g_tracked: Callable
    g1: Callable
    tracked: int = 2

    def __call__(self, x: np.ndarray, v: np.ndarray) -> float:
        m = min(self.tracked, x.shape[0])
        val = float(self.g_tracked(x[:m], v[:m]))
        if x.shape[0] > m:
            val *= float(np.prod(np.asarray(self.g1(x[m:], v[m:]),
                                            dtype=np.float64)))
        return val


def coefficient_a(N: int, k: int, s: int, cfg: SimConfig) -> float:
    """(N - s)! / (N - s - k)! * epsilon^{k (d-1)}, evaluated exactly.

    Equals the product over j < k of (N - s - j) / (N * ell); lies in
    [0, ell^{-k}] and tends to ell^{-k} as N grows at fixed k, s.
    """
    if k < 0 or s < 1:
        raise ValueError("need k >= 0 and s >= 1")
    if k == 0:
        return 1.0
    if N - s - k + 1 <= 0:
        return 0.0
    falling = 1
    for j in range(k):
        falling *= N - s - j
    return float(falling * Fraction(cfg.epsilon) ** (k * (cfg.d - 1)))


def _flow_back(Z: PhasePoint, dt: float, flavor: str, m: int,
               cfg: SimConfig, policy: FlowPolicy) -> PhasePoint:
    if dt == 0.0:
        return Z
    if flavor == "boltzmann":
        return Z.free_stream(-dt)
    if flavor == "bbgky":
        return backward(Z, dt, cfg, policy)[0]
    return backward_tilde(Z, dt, m, cfg, policy)[0]


def build_pst(Z: PhasePoint, t: float, seq: CreationSequence, cfg: SimConfig,
              flavor: str = "bbgky", m: int = 3,
              policy: FlowPolicy | None = None) -> PseudoTrajectoryResult:
    """Backward collision tree from the state Z at time t down to time 0.

    Returns the endpoint state, the signed product of the kernel factors
    omega_j . (v_new - v_parent) evaluated before any exchange (times the
    overlap indicators for the 'bbgky' flavor), and the branch labels.
    Degenerate flow events or an overlapping creation make the result
    undefined with kernel 0.
    """
    if flavor not in _FLAVORS:
        raise ValueError(f"unknown flavor {flavor!r}")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if seq.depth and seq.times[0] >= t:
        raise ValueError("creation times must lie strictly below t")
    seq.validate_parents(Z.s)
    policy = policy or FlowPolicy()
    cur = Z
    cursor = float(t)
    kernel = 1.0
    record: list[str] = []
    eps = cfg.epsilon
    try:
        for j in range(seq.depth):
            tj = float(seq.times[j])
            cur = _flow_back(cur, cursor - tj, flavor, m, cfg, policy)
            cursor = tj
            parent = int(seq.parents[j])
            omega = seq.omegas[j]
            v_new = seq.velocities[j]
            xp = cur.x[parent]
            vp = cur.v[parent]
            offset = 0.0 if flavor == "boltzmann" else eps * omega
            x_new = xp + offset
            if flavor == "bbgky":
                others = np.delete(np.arange(cur.s), parent)
                if len(others):
                    gaps = np.linalg.norm(cur.x[others] - x_new, axis=1)
                    if np.any(gaps <= eps):
                        return PseudoTrajectoryResult(None, 0.0, False,
                                                      tuple(record))
            factor = float(np.dot(omega, v_new - vp))
            kernel *= factor
            if factor > 0:
                vp_new, v_created = collide(vp, v_new, omega)
                record.append("post")
            else:
                vp_new, v_created = vp, v_new
                record.append("pre")
            x = np.vstack([cur.x, x_new[None, :]])
            v = np.vstack([cur.v, v_created[None, :]])
            v[parent] = vp_new
            cur = PhasePoint(x, v)
        cur = _flow_back(cur, cursor, flavor, m, cfg, policy)
    except (DegenerateEventError, ValueError, RuntimeError):
        return PseudoTrajectoryResult(None, 0.0, False, tuple(record))
    return PseudoTrajectoryResult(cur, kernel, True, tuple(record))


def _reg_lower_gamma(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) by power series."""
    if x <= 0:
        return 0.0
    term = math.exp(a * math.log(x) - x - math.lgamma(a + 1.0))
    total = term
    n = 0
    while term > 1e-17 * total and n < 10_000:
        n += 1
        term *= x / (a + n)
        total += term
    return min(total, 1.0)


def _gaussian_ball_mass(radius: float, sigma: float, d: int) -> float:
    """P(|G| <= radius) for G ~ N(0, sigma^2 I_d)."""
    return _reg_lower_gamma(d / 2.0, radius * radius / (2.0 * sigma * sigma))


def _sphere_area(d: int) -> float:
    """Surface measure of the unit sphere S^{d-1} in R^d."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def _sample_unit(rng: np.random.Generator, d: int) -> np.ndarray:
    while True:
        g = rng.normal(size=d)
        n = float(np.linalg.norm(g))
        if n > 1e-12:
            return g / n


def _sample_truncated_gaussian(rng: np.random.Generator, sigma: float,
                               radius: float, d: int) -> np.ndarray:
    for _ in range(100_000):
        g = rng.normal(scale=sigma, size=d)
        if float(np.dot(g, g)) <= radius * radius:
            return g
    raise RuntimeError("truncated-Gaussian proposal acceptance is degenerate")


def duhamel_mc(Z: PhasePoint, t: float, cfg: SimConfig, cut: CutoffParams,
               data: Callable, flavor: str = "bbgky", m: int = 3,
               M: int = 2000, rng: np.random.Generator | None = None,
               proposal_beta: float = 1.0,
               policy: FlowPolicy | None = None) -> SeriesEstimate:
    """Monte Carlo value of the depth-truncated backward Duhamel series.

    Depth k contributes a_k * t^k/k! * E[ prod_j (s+j-1) |S^{d-1}| / q(v_j)
    * kernel * data(endpoint) * chi(E / R^2) ] with creation times uniform
    on the simplex (sorted uniforms), velocities from an isotropic Gaussian
    proposal with density exp(-proposal_beta |v|^2), truncated to the ball
    of radius 2R, and impact directions uniform on the sphere.  a_k is the
    exact hierarchy coefficient for 'bbgky' and ell^{-k} otherwise.
    Undefined trees contribute exact zeros.  M samples per depth.
    """
    if flavor not in _FLAVORS:
        raise ValueError(f"unknown flavor {flavor!r}")
    if t <= 0:
        raise ValueError("t must be positive")
    rng = rng or np.random.default_rng(0)
    policy = policy or FlowPolicy()
    s, d = Z.s, Z.dim
    sigma = math.sqrt(0.5 / proposal_beta)
    radius = 2.0 * cut.R
    ball_mass = _gaussian_ball_mass(radius, sigma, d)
    surf = _sphere_area(d)
    gauss_norm = (2.0 * math.pi * sigma * sigma) ** (d / 2.0)
    chi = cut.chi
    R2 = cut.R ** 2

    def _coeff(k: int) -> float:
        if flavor == "bbgky":
            return coefficient_a(cfg.N, k, s, cfg)
        return cfg.ell ** (-k)

    per_depth: list[DepthEstimate] = []
    # depth 0: pure backward transport, deterministic
    res0 = build_pst(Z, t, CreationSequence(np.empty(0), np.empty((0, d)),
                                            np.empty((0, d)), np.empty(0, int)),
                     cfg, flavor=flavor, m=m, policy=policy)
    if res0.defined:
        e0 = functionals(res0.state).energy
        val0 = float(data(res0.state.x, res0.state.v)) * float(chi(e0 / R2))
        per_depth.append(DepthEstimate(0, val0, 0.0, 1, 0))
    else:
        per_depth.append(DepthEstimate(0, 0.0, 0.0, 1, 1))

    for k in range(1, cut.n + 1):
        coeff = _coeff(k)
        base_weight = coeff * t ** k / math.factorial(k)
        vals = np.zeros(M)
        undefined = 0
        if coeff != 0.0:
            for r in range(M):
                times = np.sort(rng.uniform(0.0, t, size=k))[::-1]
                parents = np.empty(k, dtype=int)
                omegas = np.empty((k, d))
                vels = np.empty((k, d))
                weight = base_weight
                for j in range(k):
                    parents[j] = rng.integers(0, s + j)
                    omegas[j] = _sample_unit(rng, d)
                    vj = _sample_truncated_gaussian(rng, sigma, radius, d)
                    vels[j] = vj
                    q = math.exp(-0.5 * float(np.dot(vj, vj)) / sigma ** 2) \
                        / gauss_norm / ball_mass
                    weight *= (s + j) * surf / q
                seq = CreationSequence(times, vels, omegas, parents)
                res = build_pst(Z, t, seq, cfg, flavor=flavor, m=m,
                                policy=policy)
                if not res.defined:
                    undefined += 1
                    continue
                if res.kernel == 0.0:
                    continue
                e = functionals(res.state).energy
                c = float(chi(e / R2))
                if c == 0.0:
                    continue
                vals[r] = weight * res.kernel \
                    * float(data(res.state.x, res.state.v)) * c
        mean = float(vals.mean())
        stderr = float(vals.std(ddof=1)) / math.sqrt(M) if M > 1 else 0.0
        per_depth.append(DepthEstimate(k, mean, stderr, M, undefined))

    value = sum(p.value for p in per_depth)
    stderr = math.sqrt(sum(p.stderr ** 2 for p in per_depth))
    return SeriesEstimate(value=value, stderr=stderr,
                          per_depth=tuple(per_depth))


@dataclass(frozen=True)
class FactorizationResult:
    lhs: SeriesEstimate
    rhs_value: float
    rhs_stderr: float
    residual: float
    stderr: float


def enskog_factorization_residual(Z: PhasePoint, t: float, cfg: SimConfig,
                                  cut: CutoffParams, g_pair: Callable,
                                  g1: Callable, M: int = 2000,
                                  rng: np.random.Generator | None = None,
                                  m: int = 3, proposal_beta: float = 1.0,
                                  policy: FlowPolicy | None = None
                                  ) -> FactorizationResult:
    """Partial-factorization defect of the pass-through hierarchy.

    Compares the s-particle series with partially factorized initial data
    (joint density on the first two particles, product past them) against
    the product of the two-particle series and one-particle series at the
    remaining coordinates (flavor m=1: free transport with creations).
    Returns the absolute residual with first-order propagated stderr.
    """
    if Z.s < 3:
        raise ValueError("need at least three particles")
    rng = rng or np.random.default_rng(0)
    streams = rng.spawn(Z.s)
    data_partial = PartialProductData(g_pair, g1, tracked=2)
    data_prod = ProductData(g1)
    lhs = duhamel_mc(Z, t, cfg, cut, data_partial, flavor="enskog", m=m,
                     M=M, rng=streams[0], proposal_beta=proposal_beta,
                     policy=policy)
    pair = duhamel_mc(PhasePoint(Z.x[:2], Z.v[:2]), t, cfg, cut,
                      data_partial, flavor="enskog", m=m, M=M,
                      rng=streams[1], proposal_beta=proposal_beta,
                      policy=policy)
    parts = [pair]
    for i in range(2, Z.s):
        single = duhamel_mc(PhasePoint(Z.x[i], Z.v[i]), t, cfg, cut,
                            data_prod, flavor="enskog", m=1, M=M,
                            rng=streams[i], proposal_beta=proposal_beta,
                            policy=policy)
        parts.append(single)
    rhs = 1.0
    for p in parts:
        rhs *= p.value
    rhs_var = 0.0
    for idx, p in enumerate(parts):
        rest = 1.0
        for jdx, q in enumerate(parts):
            if jdx != idx:
                rest *= q.value
        rhs_var += (rest * p.stderr) ** 2
    rhs_stderr = math.sqrt(rhs_var)
    stderr = math.sqrt(lhs.stderr ** 2 + rhs_var)
    return FactorizationResult(lhs=lhs, rhs_value=rhs, rhs_stderr=rhs_stderr,
                               residual=abs(lhs.value - rhs), stderr=stderr)
