"""Conditioned factorized initial data, partition-function estimation,
ensemble evolution, and empirical marginal estimation.

Initial N-particle data is the product measure f0^(x N) conditioned on
pairwise exclusion at diameter epsilon; sampling is by rejection, so
accepted states are admissible by construction.  Marginals are estimated
with box kernels whose position widths stay above the exclusion scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import PhasePoint, SimConfig, CutoffParams, in_K, in_U_eta
from .flow import FlowPolicy, advance

__all__ = [
    "DensitySpec",
    "PartitionEstimate",
    "MarginalEstimate",
    "EvolvedEnsemble",
    "sample_initial",
    "estimate_partition",
    "prefix_partition_estimates",
    "evolve_ensemble",
    "estimate_marginal",
    "marginal_at_points",
    "chaos_error",
]

_KINDS = ("gaussian-product", "uniform-box-maxwellian", "custom")


@dataclass(frozen=True)
class DensitySpec:
    """One-particle density f0(x, v), normalized to 1.

    kind 'gaussian-product':      f0 = (a b / pi^2)^{d/2} exp(-a|x|^2 - b|v|^2)
    kind 'uniform-box-maxwellian': x uniform on [0, box]^d,
                                  v Maxwellian (b/pi)^{d/2} exp(-b|v|^2)
    kind 'custom':                user supplies eval_fn, sample_fn and the
                                  bound sup_x int f0 dv.
    """

    kind: str
    a: float = 1.0
    b: float = 1.0
    box: float = 1.0
    eval_fn: Callable | None = None
    sample_fn: Callable | None = None
    linf_l1_bound: float | None = None
    certificate: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown density kind {self.kind!r}")
        if self.kind == "custom":
            if self.eval_fn is None or self.sample_fn is None or self.linf_l1_bound is None:
                raise ValueError("custom densities need eval_fn, sample_fn, linf_l1_bound")
        if self.a <= 0 or self.b <= 0 or self.box <= 0:
            raise ValueError("density parameters must be positive")

    def evaluate(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Pointwise density; x, v arrays of shape (..., d)."""
        x = np.asarray(x, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        d = x.shape[-1]
        if self.kind == "gaussian-product":
            amp = (self.a * self.b / math.pi ** 2) ** (d / 2.0)
            return amp * np.exp(-self.a * np.sum(x * x, axis=-1)
                                - self.b * np.sum(v * v, axis=-1))
        if self.kind == "uniform-box-maxwellian":
            inside = np.all((x >= 0.0) & (x <= self.box), axis=-1)
            amp = self.box ** (-d) * (self.b / math.pi) ** (d / 2.0)
            return np.where(inside, amp * np.exp(-self.b * np.sum(v * v, axis=-1)), 0.0)
        return np.asarray(self.eval_fn(x, v), dtype=np.float64)

    def sample(self, rng: np.random.Generator, n: int, d: int):
        """n independent draws -> (positions, velocities), shape (n, d)."""
        if self.kind == "gaussian-product":
            x = rng.normal(scale=math.sqrt(0.5 / self.a), size=(n, d))
            v = rng.normal(scale=math.sqrt(0.5 / self.b), size=(n, d))
            return x, v
        if self.kind == "uniform-box-maxwellian":
            x = rng.uniform(0.0, self.box, size=(n, d))
            v = rng.normal(scale=math.sqrt(0.5 / self.b), size=(n, d))
            return x, v
        return self.sample_fn(rng, n, d)

    def linf_l1(self, d: int) -> float:
        """The bound sup_x integral of f0 over velocities."""
        if self.kind == "gaussian-product":
            return (self.a / math.pi) ** (d / 2.0)
        if self.kind == "uniform-box-maxwellian":
            return self.box ** (-d)
        return float(self.linf_l1_bound)

    def weight_certificate(self, d: int) -> tuple[float, float]:
        """(beta0, mu0) with f0(x, v) <= exp(-mu0) exp(-beta0 |v|^2 / 2)."""
        if self.certificate is not None:
            return self.certificate
        if self.kind == "gaussian-product":
            amp = (self.a * self.b / math.pi ** 2) ** (d / 2.0)
            return 2.0 * self.b, -math.log(amp)
        if self.kind == "uniform-box-maxwellian":
            amp = self.box ** (-d) * (self.b / math.pi) ** (d / 2.0)
            return 2.0 * self.b, -math.log(amp)
        raise ValueError("custom density without a declared certificate")


@dataclass(frozen=True)
class PartitionEstimate:
    s: int
    value: float
    stderr: float
    samples: int

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError("partition estimate must be positive")
        if self.value - 3.0 * self.stderr > 1.0:
            raise ValueError("partition estimate significantly above 1")


@dataclass(frozen=True)
class MarginalEstimate:
    """Box-kernel density estimates of the first-s-particle marginal.

    points: (P, 2*s*d) cell centers, coordinates ordered as
            x_1, v_1, ..., x_s, v_s; widths: per-axis box widths.
    """

    s: int
    d: int
    points: np.ndarray
    widths: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    ensemble_size: int

    def cell_volume(self) -> float:
        return float(np.prod(self.widths))

    def total_mass(self) -> float:
        return float(np.sum(self.values)) * self.cell_volume()

    def phase_point(self, p: int) -> PhasePoint:
        z = self.points[p].reshape(self.s, 2, self.d)
        return PhasePoint(z[:, 0, :], z[:, 1, :])


def _pairwise_admissible(x: np.ndarray, epsilon: float) -> np.ndarray:
    """x: (batch, s, d) -> boolean (batch,) no pair closer than epsilon."""
    s = x.shape[1]
    if s == 1:
        return np.ones(x.shape[0], dtype=bool)
    iu, ju = np.triu_indices(s, k=1)
    gaps = np.linalg.norm(x[:, iu, :] - x[:, ju, :], axis=2)
    return np.all(gaps >= epsilon, axis=1)


def sample_initial(cfg: SimConfig, f0: DensitySpec, rng: np.random.Generator,
                   acceptance_floor: float = 1e-4) -> PhasePoint:
    """One draw from the conditioned product measure by rejection."""
    max_tries = max(int(math.ceil(20.0 / acceptance_floor)), 100)
    for _ in range(max_tries):
        x, v = f0.sample(rng, cfg.N, cfg.d)
        if cfg.N == 1 or cfg.epsilon == 0.0 or _pairwise_admissible(x[None], cfg.epsilon)[0]:
            return PhasePoint(x, v)
    raise RuntimeError(
        "rejection acceptance appears to be below the floor "
        f"{acceptance_floor:g}; reduce epsilon or the particle count")


def estimate_partition(s: int, cfg: SimConfig, f0: DensitySpec, M: int,
                       rng: np.random.Generator) -> PartitionEstimate:
    """Acceptance fraction of M product draws of s particles, with binomial stderr."""
    if not 1 <= s <= cfg.N:
        raise ValueError("need 1 <= s <= N")
    if M < 100:
        raise ValueError("need at least 100 samples")
    if s == 1 or cfg.epsilon == 0.0:
        return PartitionEstimate(s=s, value=1.0, stderr=0.0, samples=M)
    hits = 0
    chunk = max(1, min(M, int(2e6 // (s * s))))
    left = M
    while left > 0:
        nb = min(chunk, left)
        x, _ = f0.sample(rng, nb * s, cfg.d)
        x = x.reshape(nb, s, cfg.d)
        hits += int(np.sum(_pairwise_admissible(x, cfg.epsilon)))
        left -= nb
    p = hits / M
    if p <= 0.0:
        raise RuntimeError("no admissible draws; acceptance too small to estimate")
    return PartitionEstimate(s=s, value=p, stderr=math.sqrt(p * (1 - p) / M), samples=M)


def prefix_partition_estimates(cfg: SimConfig, f0: DensitySpec, M: int,
                               rng: np.random.Generator) -> np.ndarray:
    """Admissibility indicators for all particle-count prefixes.

    Returns a boolean array (M, N); entry [m, s-1] says whether the first s
    particles of draw m are pairwise separated.  Sharing draws across s gives
    paired estimates of all partition functions at once.
    """
    if M < 100:
        raise ValueError("need at least 100 samples")
    N, d = cfg.N, cfg.d
    out = np.empty((M, N), dtype=bool)
    chunk = max(1, min(M, int(4e7 // (N * N))))
    done = 0
    while done < M:
        nb = min(chunk, M - done)
        x, _ = f0.sample(rng, nb * N, d)
        x = x.reshape(nb, N, d)
        ok = np.ones((nb, N), dtype=bool)
        for s in range(2, N + 1):
            # pairs (j, s-1) for j < s-1 must all be separated
            gaps = np.linalg.norm(x[:, : s - 1, :] - x[:, s - 1 : s, :], axis=2)
            ok[:, s - 1] = ok[:, s - 2] & np.all(gaps >= cfg.epsilon, axis=1)
        out[done : done + nb] = ok
        done += nb
    return out


@dataclass
class EvolvedEnsemble:
    cfg: SimConfig
    t: float
    seed: int
    x0: np.ndarray  # (M, N, d) initial positions
    v0: np.ndarray
    x: np.ndarray  # (M, N, d) positions at time t
    v: np.ndarray
    events: int = 0

    @property
    def size(self) -> int:
        return self.x.shape[0]


def _evolve_one(args):
    x0, v0, t, cfg, policy = args
    Z = PhasePoint(x0, v0)
    out, log = advance(Z, t, cfg, policy)
    return np.asarray(out.x), np.asarray(out.v), len(log.events)


def evolve_ensemble(cfg: SimConfig, f0: DensitySpec, t: float, M: int,
                    policy: FlowPolicy | None = None, seed: int = 0,
                    workers: int = 1,
                    initial: EvolvedEnsemble | None = None) -> EvolvedEnsemble:
    """M independent replicas sampled by rejection and advanced for time t.

    Deterministic given (seed, M): replica r always uses the r-th spawn of
    the master seed sequence, independent of chunking or worker count.
    Passing a previous EvolvedEnsemble as `initial` continues its replicas
    from their current states (t is the additional time).
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    policy = policy or FlowPolicy(degenerate_policy="perturb")
    N, d = cfg.N, cfg.d
    if initial is None:
        streams = np.random.SeedSequence(seed).spawn(M)
        x0 = np.empty((M, N, d))
        v0 = np.empty((M, N, d))
        for r in range(M):
            rng = np.random.default_rng(streams[r])
            Z = sample_initial(cfg, f0, rng)
            x0[r] = Z.x
            v0[r] = Z.v
        xs, vs = x0, v0
        base_x0, base_v0 = x0, v0
        total_t = t
    else:
        if initial.size != M or initial.cfg != cfg:
            raise ValueError("initial ensemble does not match (cfg, M)")
        xs, vs = initial.x, initial.v
        base_x0, base_v0 = initial.x0, initial.v0
        total_t = initial.t + t

    x = np.empty((M, N, d))
    v = np.empty((M, N, d))
    events = 0
    if t == 0.0:
        x[:] = xs
        v[:] = vs
    else:
        tasks = ((xs[r], vs[r], t, cfg, _replica_policy(policy, seed, r))
                 for r in range(M))
        if workers > 1:
            import concurrent.futures as cf

            with cf.ProcessPoolExecutor(max_workers=workers) as ex:
                for r, res in enumerate(ex.map(_evolve_one, tasks, chunksize=256)):
                    x[r], v[r], ne = res
                    events += ne
        else:
            for r, task in enumerate(tasks):
                x[r], v[r], ne = _evolve_one(task)
                events += ne
    return EvolvedEnsemble(cfg=cfg, t=total_t, seed=seed,
                           x0=base_x0, v0=base_v0, x=x, v=v, events=events)


def _replica_policy(policy: FlowPolicy, seed: int, r: int) -> FlowPolicy:
    if policy.degenerate_policy != "perturb":
        return policy
    return FlowPolicy(grazing_tolerance=policy.grazing_tolerance,
                      simultaneity_tolerance=policy.simultaneity_tolerance,
                      degenerate_policy="perturb",
                      jitter_seed=(seed * 1_000_003 + r) & 0x7FFFFFFF,
                      max_events=policy.max_events)


def _injections(N: int, s: int, rng: np.random.Generator,
                cap: int = 200) -> np.ndarray:
    """Ordered index injections {1..s} -> {1..N}, at most `cap` of them."""
    total = math.perm(N, s)
    if total <= cap:
        if s == 1:
            return np.arange(N)[:, None]
        from itertools import permutations

        return np.array(list(permutations(range(N), s)), dtype=int)
    out = np.empty((cap, s), dtype=int)
    for k in range(cap):
        out[k] = rng.choice(N, size=s, replace=False)
    return out


def _box_masses(ens_x: np.ndarray, ens_v: np.ndarray, inj: np.ndarray,
                points: np.ndarray, widths: np.ndarray, s: int, d: int) -> np.ndarray:
    """Per-replica box-kernel mass at each point, averaged over injections.

    Returns (M, P): fraction of injections whose mapped s-particle state
    falls in the box centered at each point.
    """
    M = ens_x.shape[0]
    P = points.shape[0]
    # coordinates per point: (P, s, 2, d) -> x-centers (P, s, d), v-centers
    z = points.reshape(P, s, 2, d)
    cx, cv = z[:, :, 0, :], z[:, :, 1, :]
    w = widths.reshape(s, 2, d)
    wx, wv = w[:, 0, :], w[:, 1, :]
    out = np.zeros((M, P))
    # loop over injections to bound memory; each step materializes
    # (M, chunk, P, s, d) comparisons
    chunk = max(1, int(2e7 // (M * P * s * d)))
    for lo in range(0, inj.shape[0], chunk):
        sub = inj[lo : lo + chunk]
        xs = ens_x[:, sub, :]  # (M, n_inj, s, d)
        vs = ens_v[:, sub, :]
        inx = np.all(np.abs(xs[:, :, None, :, :] - cx[None, None, :, :, :])
                     <= wx[None, None, None, :, :] / 2.0, axis=(3, 4))
        inv = np.all(np.abs(vs[:, :, None, :, :] - cv[None, None, :, :, :])
                     <= wv[None, None, None, :, :] / 2.0, axis=(3, 4))
        out += np.sum(inx & inv, axis=1)
    return out / inj.shape[0]


def marginal_at_points(ens: EvolvedEnsemble, s: int, points: np.ndarray,
                       widths: np.ndarray, max_injections: int = 200) -> MarginalEstimate:
    """Box-kernel estimate of the s-particle marginal at arbitrary centers.

    Exchangeability is exploited by averaging over index injections; the
    replica-to-replica spread gives honest standard errors.
    """
    cfg = ens.cfg
    if s > cfg.N:
        raise ValueError("s exceeds the particle count")
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    widths = np.broadcast_to(np.asarray(widths, dtype=np.float64),
                             (2 * s * cfg.d,)).copy()
    if points.shape[1] != 2 * s * cfg.d:
        raise ValueError("points must have 2*s*d coordinates")
    rng = np.random.default_rng(np.random.SeedSequence([ens.seed, 0xB0C5, s]))
    inj = _injections(cfg.N, s, rng, cap=max_injections)
    mass = _box_masses(ens.x, ens.v, inj, points, widths, s, cfg.d)
    vol = float(np.prod(widths))
    M = ens.size
    values = mass.mean(axis=0) / vol
    stderr = mass.std(axis=0, ddof=1) / math.sqrt(M) / vol
    return MarginalEstimate(s=s, d=cfg.d, points=points, widths=widths,
                            values=values, stderr=stderr, ensemble_size=M)


def estimate_marginal(ens: EvolvedEnsemble, s: int, window, bins,
                      max_injections: int = 200) -> MarginalEstimate:
    """Histogram estimate on a regular grid over a bounded phase window.

    window: (lower, upper) arrays of length 2*s*d (coordinates ordered
    x_1, v_1, ..., x_s, v_s); bins: cells per axis (scalar or per-axis).
    Position bin widths are kept at or above 4*epsilon so exclusion-scale
    structure does not alias.
    """
    cfg = ens.cfg
    lower = np.asarray(window[0], dtype=np.float64)
    upper = np.asarray(window[1], dtype=np.float64)
    naxes = 2 * s * cfg.d
    if lower.shape != (naxes,) or upper.shape != (naxes,):
        raise ValueError("window bounds must have 2*s*d coordinates")
    if not np.all(upper > lower):
        raise ValueError("empty window")
    bins = np.broadcast_to(np.asarray(bins, dtype=int), (naxes,)).copy()
    widths = (upper - lower) / bins
    # position axes are the first d of every 2d block
    pos_axes = np.zeros(naxes, dtype=bool)
    for i in range(s):
        pos_axes[2 * i * cfg.d : (2 * i + 1) * cfg.d] = True
    min_w = 4.0 * cfg.epsilon
    if np.any(widths[pos_axes] < min_w):
        raise ValueError("position bin widths must be at least 4*epsilon")
    axes = [lower[k] + widths[k] * (np.arange(bins[k]) + 0.5) for k in range(naxes)]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    return marginal_at_points(ens, s, points, widths, max_injections=max_injections)


def chaos_error(marginal: MarginalEstimate, reference: Callable[[PhasePoint], float],
                cut: CutoffParams, cfg: SimConfig) -> tuple[float, int]:
    """Sup over admissible tested points of |estimate - reference|.

    A point is admissible when it passes the backward-free-flow predicate,
    the velocity-gap predicate at eta = epsilon^kappa, and E_s <= R^2.
    Returns (sup_error, number of admissible points).
    """
    eta = cfg.epsilon ** cut.kappa
    sup = 0.0
    count = 0
    for p in range(marginal.points.shape[0]):
        Z = marginal.phase_point(p)
        if 0.5 * float(np.sum(Z.v * Z.v)) > cut.R ** 2:
            continue
        if not (in_K(Z, cfg.epsilon, cut.delta_set)
                and in_U_eta(Z, eta, cut.delta_set)):
            continue
        count += 1
        err = abs(float(marginal.values[p]) - float(reference(Z)))
        sup = max(sup, err)
    if count == 0:
        raise ValueError("no admissible test points in the window/cutoff combination")
    return sup, count
