"""Geometric bad-set classification for particle adjunction, measure
estimation, and stability verification of the good sets.

A "context" is an admissible root state with a designated parent particle.
A "candidate" adjunction is a triple (tau, v, omega): at backward time tau
a particle with velocity v is created at the parent's position plus
epsilon * omega.  Candidates are classified into labeled bad subsets; a
candidate outside all of them must leave the enlarged state inside the
good sets (backward-free / velocity-separated), which `verify_stability`
checks by direct sampling.

Two flavors:
  * 'prop9': the root state is backward-free (every particle moves on its
    free line), so positions at the creation slice are linear in tau;
  * 'appA':  the root state allows the first two labeled particles to
    scatter backward, so those particles carry up to two straight-line
    branches whose projections to the creation slice are all tested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (PhasePoint, SimConfig, CutoffParams, collide, in_K,
                   in_U_eta, in_G, in_hat_U_eta, _tracked_pair_branches)

__all__ = [
    "BadSetContext",
    "BadSetVerdict",
    "BadMeasureEstimate",
    "StabilityReport",
    "CapMeasureEstimate",
    "band_measure_exact",
    "cylinder_cap_measure",
    "classify_candidate",
    "classify_batch",
    "estimate_bad_measure",
    "verify_stability",
]

_MINUS_LABELS = ("I", "II", "III-", "IV-")
_PLUS_LABELS = ("I", "II", "III+", "IV+", "V+", "VI+", "VII+")


def _sphere_area(d: int) -> float:
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def _ball_volume(r: float, d: int) -> float:
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0) * r ** d


def _sample_sphere(rng: np.random.Generator, M: int, d: int) -> np.ndarray:
    g = rng.normal(size=(M, d))
    n = np.linalg.norm(g, axis=1, keepdims=True)
    n = np.where(n > 1e-12, n, 1.0)
    return g / n


def _sample_ball(rng: np.random.Generator, M: int, r: float, d: int) -> np.ndarray:
    u = _sample_sphere(rng, M, d)
    rad = r * rng.uniform(0.0, 1.0, size=M) ** (1.0 / d)
    return u * rad[:, None]


# ---------------------------------------------------------------------------
# sphere-cylinder geometry


@dataclass(frozen=True)
class CapMeasureEstimate:
    """Monte Carlo measures of a rho-neighborhood of a line on the sphere.

    set_value:  surface measure of {omega : dist(omega, L) <= rho};
    band_value: surface measure of the enclosing band {|omega.n - h| <= rho},
                where h = dist(0, L) and n points to the closest point of L;
    band_exact: closed-form band measure (d = 2, 3).
    """

    rho: float
    d: int
    set_value: float
    set_stderr: float
    band_value: float
    band_stderr: float
    band_exact: float
    samples: int


def band_measure_exact(h: float, rho: float, d: int) -> float:
    """Surface measure of {omega in S^{d-1} : |omega . n - h| <= rho}."""
    lo = max(h - rho, -1.0)
    hi = min(h + rho, 1.0)
    if hi <= lo:
        return 0.0
    if d == 2:
        return 2.0 * (math.acos(lo) - math.acos(hi))
    if d == 3:
        return 2.0 * math.pi * (hi - lo)
    raise NotImplementedError("closed form implemented for d in {2, 3}")


def cylinder_cap_measure(point: np.ndarray, direction: np.ndarray, rho: float,
                         d: int, M: int = 200_000,
                         rng: np.random.Generator | None = None
                         ) -> CapMeasureEstimate:
    """Estimate the spherical measure of the rho-neighborhood of the line
    {point + t * direction} and of its enclosing band.

    The distance from any unit vector omega to the line is bounded below by
    |omega . n - h| with h the line's distance to the origin and n the unit
    vector to its closest point, so the neighborhood sits inside the band;
    the band measure scales like rho^{(d-1)/2} when the line is tangent to
    the sphere (h = 1) and proportionally to rho when it is transversal.
    """
    rng = rng or np.random.default_rng(0)
    p = np.asarray(point, dtype=np.float64)
    u = np.asarray(direction, dtype=np.float64)
    u = u / float(np.linalg.norm(u))
    q = p - u * float(np.dot(p, u))  # closest point of the line to the origin
    h = float(np.linalg.norm(q))
    if h > 1e-12:
        n = q / h
    else:
        # line through the origin: any unit normal to u gives a valid band
        basis = np.eye(d)
        k = int(np.argmin(np.abs(u)))
        n = basis[k] - u * u[k]
        n = n / float(np.linalg.norm(n))
    omega = _sample_sphere(rng, M, d)
    rel = omega - p[None, :]
    proj = rel @ u
    dist = np.sqrt(np.maximum(np.sum(rel * rel, axis=1) - proj ** 2, 0.0))
    in_set = dist <= rho
    in_band = np.abs(omega @ n - h) <= rho
    if not np.all(in_band[in_set]):
        raise AssertionError("band must enclose the neighborhood")
    surf = _sphere_area(d)
    f_set = float(np.mean(in_set))
    f_band = float(np.mean(in_band))
    return CapMeasureEstimate(
        rho=rho, d=d,
        set_value=f_set * surf,
        set_stderr=math.sqrt(max(f_set * (1 - f_set), 0.0) / M) * surf,
        band_value=f_band * surf,
        band_stderr=math.sqrt(max(f_band * (1 - f_band), 0.0) / M) * surf,
        band_exact=band_measure_exact(h, rho, d),
        samples=M)


# ---------------------------------------------------------------------------
# bad-set classification


@dataclass(frozen=True)
class BadSetContext:
    """Root state for adjunction: particles at the slice-origin time, with a
    designated parent.  The 'appA' flavor additionally uses the backward
    branch structure of the first two labeled particles."""

    Z: PhasePoint
    parent: int

    def __post_init__(self):
        if not 0 <= self.parent < self.Z.s:
            raise ValueError("parent index out of range")


@dataclass(frozen=True)
class BadSetVerdict:
    member: bool
    labels: tuple[str, ...]
    side: str  # '+' or '-'


@dataclass(frozen=True)
class BadMeasureEstimate:
    value: float
    stderr: float
    total_measure: float
    per_label: dict
    bound_bracket: float
    bound_shape: float
    samples: int


@dataclass(frozen=True)
class StabilityReport:
    fraction_good: float
    tested: int
    sampled: int
    bad_fraction: float


def _branch_table(ctx: BadSetContext, cfg: SimConfig, flavor: str):
    """Per-particle straight-line backward branches.

    Each branch is (origin, velocity, tau_start, needs_tau_below), with
    backward position origin - velocity * (tau - tau_start); when
    needs_tau_below is not None the branch only exists for tau < tau_c
    (the free line of a tracked particle before its mutual collision).
    """
    Z = ctx.Z
    table = [[(Z.x[i], Z.v[i], 0.0, None)] for i in range(Z.s)]
    if flavor == "appA" and Z.s >= 2:
        branches, tau_c = _tracked_pair_branches(Z, cfg.epsilon)
        if tau_c is not None:
            for i in (0, 1):
                origin, vel, t0 = branches[i][1]
                table[i] = [(Z.x[i], Z.v[i], 0.0, tau_c),
                            (origin, vel, t0, None)]
    return table


def _branch_eval(table, tau: np.ndarray):
    """Positions of every branch at the slice times tau (shape (M,)).

    Returns a list over particles of lists of (pos (M, d), vel (d,),
    valid (M,)) triples."""
    out = []
    for branches in table:
        cur = []
        for origin, vel, t0, tau_max in branches:
            pos = origin[None, :] - vel[None, :] * (tau - t0)[:, None]
            if tau_max is None:
                valid = np.ones(len(tau), dtype=bool)
            else:
                valid = tau < tau_max
            cur.append((pos, vel, valid))
        out.append(cur)
    return out


def _actual_state(table, tau: np.ndarray):
    """Position and velocity of each particle at the slice along the true
    backward flow (the free line before its collision, the scattered branch
    after).  Returns (pos (M, s, d), vel (M, s, d))."""
    M = len(tau)
    s = len(table)
    d = table[0][0][0].shape[0]
    pos = np.empty((M, s, d))
    vel = np.empty((M, s, d))
    for i, branches in enumerate(table):
        origin, v0, t0, tau_max = branches[0]
        p = origin[None, :] - v0[None, :] * (tau - t0)[:, None]
        w = np.broadcast_to(v0, (M, d)).copy()
        if tau_max is not None:
            o2, v2, t2, _ = branches[1]
            late = tau >= tau_max
            p[late] = o2[None, :] - v2[None, :] * (tau[late] - t2)[:, None]
            w[late] = v2
        pos[:, i] = p
        vel[:, i] = w
    return pos, vel


def classify_batch(ctx: BadSetContext, tau: np.ndarray, v: np.ndarray,
                   omega: np.ndarray, cut: CutoffParams, cfg: SimConfig,
                   flavor: str = "prop9"):
    """Vectorized classification of candidates into labeled bad subsets.

    Returns (masks, side_plus): masks maps each label to a boolean array;
    a candidate is a bad-set member when any label holds.
    """
    if flavor not in ("prop9", "appA"):
        raise ValueError(f"unknown flavor {flavor!r}")
    Z = ctx.Z
    p = ctx.parent
    tau = np.asarray(tau, dtype=np.float64)
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    omega = np.atleast_2d(np.asarray(omega, dtype=np.float64))
    M = len(tau)
    eta, y, theta, alpha = cut.eta, cut.y, cut.theta, cut.alpha
    cos_t, sin_a = math.cos(theta), math.sin(alpha)

    table = _branch_table(ctx, cfg, flavor)
    pos_act, vel_act = _actual_state(table, tau)
    vp = vel_act[:, p, :]  # parent velocity at the slice (t' = 0 history)
    dvp = v - vp
    ndvp = np.linalg.norm(dvp, axis=1)
    wdot = np.sum(omega * dvp, axis=1)
    side_plus = wdot > 0
    w = wdot[:, None] * omega
    v_star = v - w
    vp_star = vp + w

    masks = {lbl: np.zeros(M, dtype=bool) for lbl in
             set(_MINUS_LABELS) | set(_PLUS_LABELS)}

    def _cone(disp, dvel, absolute):
        nd = np.linalg.norm(disp, axis=1)
        nu = np.linalg.norm(dvel, axis=1)
        dot = np.sum(disp * dvel, axis=1)
        if absolute:
            dot = np.abs(dot)
        ok = (nd > 0) & (nu > 0)
        return ok & (dot >= cos_t * nd * nu)

    if flavor == "prop9":
        # every particle stays on its free line
        x0, v0 = Z.x, Z.v
        grazing = np.abs(wdot) <= sin_a * ndvp
        masks["II"] |= side_plus & grazing
        not_g = side_plus & ~grazing
        for i in range(Z.s):
            if i == p:
                # velocity gap to the parent counts on the minus side
                masks["III-"] |= ~side_plus & (ndvp <= eta)
                continue
            disp = (x0[p] - x0[i])[None, :] - tau[:, None] * (v0[p] - v0[i])[None, :]
            masks["I"] |= np.linalg.norm(disp, axis=1) <= y
            dvi = v - v0[i][None, :]
            masks["III-"] |= ~side_plus & (np.linalg.norm(dvi, axis=1) <= eta)
            masks["IV-"] |= ~side_plus & _cone(disp, dvi, absolute=True)
            masks["III+"] |= not_g & (np.linalg.norm(v_star - v0[i], axis=1) <= eta)
            masks["IV+"] |= not_g & (np.linalg.norm(vp_star - v0[i], axis=1) <= eta)
            masks["VI+"] |= not_g & _cone(disp, v_star - v0[i], absolute=True)
            masks["VII+"] |= not_g & _cone(disp, vp_star - v0[i], absolute=True)
        masks["V+"] |= side_plus & (ndvp <= eta)
    else:
        branches_at = _branch_eval(table, tau)
        creation = pos_act[:, p, :] + cfg.epsilon * omega
        grazing = np.abs(wdot) <= sin_a * ndvp
        masks["II"] |= grazing
        not_g = side_plus & ~grazing
        # pairwise branch-point distances: tau = 0 or some pair within y
        masks["I"] |= tau <= 0.0
        for i in range(Z.s):
            for pos_i, _, val_i in branches_at[i]:
                for j in range(i + 1, Z.s):
                    for pos_j, _, val_j in branches_at[j]:
                        gap = np.linalg.norm(pos_i - pos_j, axis=1)
                        masks["I"] |= val_i & val_j & (gap <= y)
            if len(branches_at[i]) == 2:
                p0, _, v0m = branches_at[i][0]
                p1, _, v1m = branches_at[i][1]
                gap = np.linalg.norm(p0 - p1, axis=1)
                masks["I"] |= v0m & v1m & (gap > 0) & (gap <= y)
        for i in range(Z.s):
            for pos_i, vel_i, val_i in branches_at[i]:
                disp = creation - pos_i
                dvi = v - vel_i[None, :]
                masks["III-"] |= ~side_plus & val_i & (np.linalg.norm(dvi, axis=1) <= eta)
                masks["IV-"] |= ~side_plus & val_i & _cone(disp, dvi, absolute=False)
                masks["III+"] |= not_g & val_i & (np.linalg.norm(v_star - vel_i, axis=1) <= eta)
                if i != p:
                    masks["IV+"] |= not_g & val_i & (np.linalg.norm(vp_star - vel_i, axis=1) <= eta)
                    masks["VI+"] |= not_g & val_i & _cone(disp, v_star - vel_i[None, :], absolute=False)
                    masks["VII+"] |= not_g & val_i & _cone(disp, vp_star - vel_i[None, :], absolute=False)
        masks["V+"] |= side_plus & (ndvp <= eta)

    return masks, side_plus


def classify_candidate(ctx: BadSetContext, tau: float, v: np.ndarray,
                       omega: np.ndarray, cut: CutoffParams, cfg: SimConfig,
                       flavor: str = "prop9") -> BadSetVerdict:
    """Classify a single candidate; labels list which subsets it falls in."""
    masks, side = classify_batch(ctx, np.array([tau]), np.asarray(v)[None, :],
                                 np.asarray(omega)[None, :], cut, cfg, flavor)
    labels = tuple(sorted(lbl for lbl, m in masks.items() if m[0]))
    return BadSetVerdict(member=bool(labels), labels=labels,
                         side="+" if side[0] else "-")


def estimate_bad_measure(ctx: BadSetContext, cut: CutoffParams,
                         cfg: SimConfig, T: float, M: int = 100_000,
                         rng: np.random.Generator | None = None,
                         flavor: str = "prop9") -> BadMeasureEstimate:
    """Monte Carlo measure of the bad candidate set in
    [0, T] x B_{2R} x S^{d-1}, with the theoretical bound shape
    (s) * T * R^d * [alpha + y/(eta T) + (eta/R)^{d-1} + theta^{(d-1)/2}].
    """
    rng = rng or np.random.default_rng(0)
    d = ctx.Z.dim
    tau = rng.uniform(0.0, T, size=M)
    v = _sample_ball(rng, M, 2.0 * cut.R, d)
    omega = _sample_sphere(rng, M, d)
    masks, _ = classify_batch(ctx, tau, v, omega, cut, cfg, flavor)
    member = np.zeros(M, dtype=bool)
    for m in masks.values():
        member |= m
    total = T * _ball_volume(2.0 * cut.R, d) * _sphere_area(d)
    frac = float(np.mean(member))
    per_label = {lbl: float(np.mean(m)) * total for lbl, m in masks.items()}
    bracket = (math.sin(cut.alpha) + cut.y / (cut.eta * T)
               + (cut.eta / cut.R) ** (d - 1)
               + math.sin(cut.theta) ** ((d - 1) / 2.0))
    shape = ctx.Z.s * T * cut.R ** d * bracket
    return BadMeasureEstimate(
        value=frac * total,
        stderr=math.sqrt(max(frac * (1 - frac), 0.0) / M) * total,
        total_measure=total, per_label=per_label,
        bound_bracket=bracket, bound_shape=shape, samples=M)


def _adjoined_state(ctx: BadSetContext, tau: float, v: np.ndarray,
                    omega: np.ndarray, cfg: SimConfig, flavor: str
                    ) -> PhasePoint:
    """The enlarged state at the creation slice: existing particles moved to
    backward time tau along the true flow, the new particle at contact, the
    scattering exchange applied on the post-collisional side."""
    table = _branch_table(ctx, cfg, flavor)
    pos, vel = _actual_state(table, np.array([tau]))
    x = pos[0].copy()
    w = vel[0].copy()
    p = ctx.parent
    x_new = x[p] + cfg.epsilon * omega
    vp = w[p]
    if float(np.dot(omega, v - vp)) > 0:
        vp_new, v_created = collide(vp, v, omega)
    else:
        vp_new, v_created = vp, v
    w[p] = vp_new
    return PhasePoint(np.vstack([x, x_new[None, :]]),
                      np.vstack([w, np.asarray(v_created)[None, :]]))


def verify_stability(ctx: BadSetContext, cut: CutoffParams, cfg: SimConfig,
                     T: float, M: int = 10_000,
                     rng: np.random.Generator | None = None,
                     flavor: str = "prop9",
                     max_draws: int = 2_000_000) -> StabilityReport:
    """Fraction of non-bad candidates whose adjoined state stays good.

    The root state must itself be good (backward-free and velocity-
    separated for 'prop9'; two-particle-interaction and history-separated
    for 'appA') and the cone hypothesis sin(theta) > c_d epsilon / y must
    hold.  Samples candidates until M non-bad ones are tested.
    """
    rng = rng or np.random.default_rng(0)
    Z = ctx.Z
    eps = cfg.epsilon
    cut.check_cone_hypothesis(eps)
    if flavor == "prop9":
        if not (in_K(Z, eps) and in_U_eta(Z, cut.eta)):
            raise ValueError("root state is not backward-free / velocity-separated")
    else:
        if not (in_G(Z, eps) and in_hat_U_eta(Z, cut.eta, eps)):
            raise ValueError("root state is not in the two-particle good set")
    d = Z.dim
    tested = good = sampled = bad = 0
    chunk = 20_000
    while tested < M and sampled < max_draws:
        nb = min(chunk, max_draws - sampled)
        tau = rng.uniform(0.0, T, size=nb)
        v = _sample_ball(rng, nb, 2.0 * cut.R, d)
        omega = _sample_sphere(rng, nb, d)
        masks, _ = classify_batch(ctx, tau, v, omega, cut, cfg, flavor)
        member = np.zeros(nb, dtype=bool)
        for m in masks.values():
            member |= m
        sampled += nb
        bad += int(np.sum(member))
        idx = np.flatnonzero(~member)
        for r in idx:
            if tested >= M:
                break
            new = _adjoined_state(ctx, float(tau[r]), v[r], omega[r], cfg, flavor)
            if flavor == "prop9":
                ok = in_K(new, eps) and in_U_eta(new, cut.eta)
            else:
                ok = in_G(new, eps) and in_hat_U_eta(new, cut.eta, eps)
            tested += 1
            good += int(ok)
    if tested == 0:
        raise RuntimeError("no non-bad candidates found; cutoffs too aggressive")
    return StabilityReport(fraction_good=good / tested, tested=tested,
                           sampled=sampled, bad_fraction=bad / sampled)
