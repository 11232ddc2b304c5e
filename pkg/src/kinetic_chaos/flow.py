"""Event-driven hard-sphere dynamics.

Forward flow `advance`, its time reverse `backward`, and the unsymmetric
pass-through flow `advance_tilde` in which only the first m-1 labeled
particles collide while every other pair streams through contact.

The flow is undefined on a null set (grazing or simultaneous events);
the policy either rejects such runs with an error or perturbs positions
by a logged jitter of size 1e-9 * epsilon.  Perturbation keeps ensemble
runs total but may bias estimates by a correspondingly tiny amount; use
reject for bias-sensitive studies.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .core import PhasePoint, SimConfig, collide

__all__ = [
    "FlowEvent",
    "FlowEventLog",
    "FlowPolicy",
    "DegenerateEventError",
    "next_collision",
    "advance",
    "backward",
    "advance_tilde",
]


class DegenerateEventError(RuntimeError):
    """Raised when a grazing or simultaneous event is met under the reject policy."""


@dataclass(frozen=True)
class FlowEvent:
    time: float
    pair: tuple[int, int]
    omega: np.ndarray
    pre_velocities: tuple[np.ndarray, np.ndarray]
    post_velocities: tuple[np.ndarray, np.ndarray]


@dataclass
class FlowPolicy:
    grazing_tolerance: float = 1e-12
    simultaneity_tolerance: float = 1e-12
    degenerate_policy: str = "reject"  # or "perturb"
    jitter_seed: int = 0
    max_events: int = 100_000

    def __post_init__(self):
        if self.grazing_tolerance < 0 or self.simultaneity_tolerance < 0:
            raise ValueError("tolerances must be nonnegative")
        if self.degenerate_policy not in ("reject", "perturb"):
            raise ValueError("degenerate_policy must be 'reject' or 'perturb'")


@dataclass
class FlowEventLog:
    events: list[FlowEvent] = field(default_factory=list)
    perturbations: int = 0

    def append(self, ev: FlowEvent):
        if self.events and not ev.time > self.events[-1].time:
            raise ValueError("event times must be strictly increasing")
        self.events.append(ev)

    def to_csv(self) -> str:
        """One row per event: t, i, j, omega components, pre/post velocities."""
        if not self.events:
            return "# schema=1\nt,i,j\n"
        d = len(self.events[0].omega)
        cols = (["t", "i", "j"]
                + [f"omega{k}" for k in range(d)]
                + [f"pre_vi{k}" for k in range(d)] + [f"pre_vj{k}" for k in range(d)]
                + [f"post_vi{k}" for k in range(d)] + [f"post_vj{k}" for k in range(d)])
        buf = io.StringIO()
        buf.write("# schema=1\n")
        buf.write(",".join(cols) + "\n")
        for ev in self.events:
            row = [repr(ev.time), str(ev.pair[0]), str(ev.pair[1])]
            for vec in (ev.omega, ev.pre_velocities[0], ev.pre_velocities[1],
                        ev.post_velocities[0], ev.post_velocities[1]):
                row.extend(repr(float(c)) for c in vec)
            buf.write(",".join(row) + "\n")
        return buf.getvalue()


def _pair_collision_times(x: np.ndarray, v: np.ndarray, epsilon: float,
                          iu: np.ndarray, ju: np.ndarray,
                          grazing_tolerance: float) -> np.ndarray:
    """First forward contact time per listed pair (inf where none).

    A root is accepted only when the pair approaches (dx.dv < 0) and the
    quadratic discriminant exceeds (grazing_tolerance * |dv|)^2.
    """
    dx = x[iu] - x[ju]
    dv = v[iu] - v[ju]
    b = np.sum(dx * dv, axis=1)
    vv = np.sum(dv * dv, axis=1)
    xx = np.sum(dx * dx, axis=1)
    disc = b * b - vv * (xx - epsilon * epsilon)
    thresh = (grazing_tolerance * np.sqrt(vv)) ** 2
    ok = (b < 0) & (disc > thresh) & (vv > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = np.where(ok, (-b - np.sqrt(np.maximum(disc, 0.0))) /
                       np.where(vv > 0, vv, 1.0), np.inf)
    # contact exactly now with approach would mean an unresolved overlap;
    # a fresh post-collisional pair has b >= 0 and is excluded by `ok`
    tau = np.where(ok & (tau >= 0.0), tau, np.inf)
    return tau


def next_collision(Z: PhasePoint, epsilon: float,
                   policy: FlowPolicy | None = None,
                   active: np.ndarray | None = None):
    """Earliest forward contact among (active) pairs.

    Returns (pair, tau, omega_at_contact) or None when no pair ever meets.
    `active` optionally restricts to pairs listed as (iu, ju) index arrays.
    """
    policy = policy or FlowPolicy()
    if not Z.is_admissible(epsilon):
        raise ValueError("phase point is not hard-sphere admissible")
    if Z.s == 1:
        return None
    if active is None:
        iu, ju = np.triu_indices(Z.s, k=1)
    else:
        iu, ju = active
        if len(iu) == 0:
            return None
    tau = _pair_collision_times(Z.x, Z.v, epsilon, iu, ju,
                                policy.grazing_tolerance)
    k = int(np.argmin(tau))
    if not np.isfinite(tau[k]):
        return None
    i, j = int(iu[k]), int(ju[k])
    t_star = float(tau[k])
    xc_i = Z.x[i] + Z.v[i] * t_star
    xc_j = Z.x[j] + Z.v[j] * t_star
    omega = (xc_j - xc_i) / epsilon
    nrm = float(np.linalg.norm(omega))
    omega = omega / nrm
    return (i, j), t_star, omega


def _advance_impl(x: np.ndarray, v: np.ndarray, t: float, epsilon: float,
                  policy: FlowPolicy, iu: np.ndarray, ju: np.ndarray,
                  log: FlowEventLog) -> tuple[np.ndarray, np.ndarray]:
    rng = None
    elapsed = 0.0
    for _ in range(policy.max_events):
        if len(iu) == 0:
            break
        tau = _pair_collision_times(x, v, epsilon, iu, ju,
                                    policy.grazing_tolerance)
        k = int(np.argmin(tau))
        t_star = float(tau[k])
        if t_star > t - elapsed or not np.isfinite(t_star):
            break
        # degenerate events: two distinct events within the tolerance
        order = np.argsort(tau)
        simultaneous = (len(tau) > 1 and np.isfinite(tau[order[1]]) and
                        tau[order[1]] - t_star <= policy.simultaneity_tolerance)
        i, j = int(iu[k]), int(ju[k])
        x = x + v * t_star
        elapsed += t_star
        omega = (x[j] - x[i]) / epsilon
        omega = omega / float(np.linalg.norm(omega))
        dv = v[j] - v[i]
        grazing = abs(float(np.dot(omega, dv))) <= policy.grazing_tolerance
        if simultaneous or grazing:
            kind = "simultaneous" if simultaneous else "grazing"
            if policy.degenerate_policy == "reject":
                raise DegenerateEventError(
                    f"{kind} event for pair ({i},{j}) at t={elapsed:.6g}")
            if rng is None:
                rng = np.random.default_rng(policy.jitter_seed)
            x = x + rng.normal(scale=1e-9 * epsilon, size=x.shape)
            log.perturbations += 1
            continue
        vi_new, vj_new = collide(v[i], v[j], omega)
        log.append(FlowEvent(time=elapsed, pair=(i, j), omega=omega.copy(),
                             pre_velocities=(v[i].copy(), v[j].copy()),
                             post_velocities=(vi_new.copy(), vj_new.copy())))
        v = v.copy()
        v[i] = vi_new
        v[j] = vj_new
    else:
        raise RuntimeError("event cap exceeded; state may be pathological")
    x = x + v * (t - elapsed)
    return x, v


def advance(Z: PhasePoint, t: float, cfg: SimConfig,
            policy: FlowPolicy | None = None) -> tuple[PhasePoint, FlowEventLog]:
    """Forward hard-sphere flow for time t >= 0.

    Free-streams to the earliest collision, applies the exchange, repeats.
    States reported at an exact collision time use the post-collisional
    representative (the flow is right-continuous in time).
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    policy = policy or FlowPolicy()
    if not Z.is_admissible(cfg.epsilon):
        raise ValueError("phase point is not hard-sphere admissible")
    log = FlowEventLog()
    iu, ju = np.triu_indices(Z.s, k=1)
    x, v = _advance_impl(np.array(Z.x), np.array(Z.v), float(t),
                         cfg.epsilon, policy, iu, ju, log)
    return PhasePoint(x, v), log


def backward(Z: PhasePoint, t: float, cfg: SimConfig,
             policy: FlowPolicy | None = None) -> tuple[PhasePoint, FlowEventLog]:
    """Backward flow for time t >= 0: velocity reversal, advance, reversal."""
    rev = PhasePoint(Z.x, -Z.v)
    out, log = advance(rev, t, cfg, policy)
    return PhasePoint(out.x, -out.v), log


def advance_tilde(Z: PhasePoint, t: float, m: int, cfg: SimConfig,
                  policy: FlowPolicy | None = None) -> tuple[PhasePoint, FlowEventLog]:
    """Unsymmetric flow: only pairs with both labels among the first m-1
    particles collide; every other pair passes through contact."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if m < 1:
        raise ValueError("m must be >= 1")
    policy = policy or FlowPolicy()
    tracked = min(m - 1, Z.s)
    if tracked >= 2:
        iu, ju = np.triu_indices(tracked, k=1)
        # tracked pairs must satisfy the exclusion condition
        gaps = np.linalg.norm(Z.x[iu] - Z.x[ju], axis=1)
        if not np.all(gaps >= cfg.epsilon * (1.0 - 1e-9)):
            raise ValueError("tracked particles overlap; state is inadmissible")
    else:
        iu = ju = np.empty(0, dtype=int)
    log = FlowEventLog()
    x, v = _advance_impl(np.array(Z.x), np.array(Z.v), float(t),
                         cfg.epsilon, policy, iu, ju, log)
    return PhasePoint(x, v), log


def backward_tilde(Z: PhasePoint, t: float, m: int, cfg: SimConfig,
                   policy: FlowPolicy | None = None) -> tuple[PhasePoint, FlowEventLog]:
    """Backward unsymmetric flow: reversal, advance_tilde, reversal."""
    rev = PhasePoint(Z.x, -Z.v)
    out, log = advance_tilde(rev, t, m, cfg, policy)
    return PhasePoint(out.x, -out.v), log
