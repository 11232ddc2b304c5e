"""Command-line orchestration: batch experiments in, schema=1 CSVs out.

Subcommands: simulate, converge, badset-scan, pseudo, partition, verify.
Exit codes: 0 success, 2 configuration error, 3 numerical policy rejection
or hypothesis failure, 1 failed verification checks.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from itertools import product as iproduct
from pathlib import Path

import numpy as np

from . import __version__
from .core import (PhasePoint, SimConfig, CutoffParams, WeightParams, collide,
                   functionals, in_K, in_U_eta, in_G)
from .flow import FlowPolicy, DegenerateEventError, advance
from .ensemble import (DensitySpec, sample_initial, estimate_partition,
                       prefix_partition_estimates, evolve_ensemble,
                       estimate_marginal)
from .pseudo import (ProductData, coefficient_a, duhamel_mc)
from .badsets import BadSetContext, estimate_bad_measure
from .analysis import GaussianPhaseDensity, dispersive_check, boltzmann_series_solve
from .config import ExperimentConfig, RunManifest, ConfigError
from .csvio import write_csv

__all__ = ["main"]


def _resolve_workers(args) -> int:
    if args.workers is not None:
        return args.workers
    env = os.environ.get("KINETIC_CHAOS_WORKERS")
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"KINETIC_CHAOS_WORKERS={env!r} is not an integer") from exc
    return 1


def _load(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("--config PATH is required")
    cfg = ExperimentConfig.from_file(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    return cfg


def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _window_grid(cfg: ExperimentConfig, simcfg: SimConfig, s: int):
    """Grid window and per-axis bin counts from the [window] section,
    with position bins capped so widths stay >= 4 * epsilon."""
    sec = cfg.section("window")
    x_lo = float(sec.get("x_lo", -1.5))
    x_hi = float(sec.get("x_hi", 1.5))
    v_lo = float(sec.get("v_lo", -2.0))
    v_hi = float(sec.get("v_hi", 2.0))
    want = int(sec.get("bins", 4))
    d = simcfg.d
    lower, upper, bins = [], [], []
    max_pos_bins = max(1, int(math.floor((x_hi - x_lo) / (4.0 * simcfg.epsilon))))
    for _ in range(s):
        lower += [x_lo] * d + [v_lo] * d
        upper += [x_hi] * d + [v_hi] * d
        bins += [min(want, max_pos_bins)] * d + [want] * d
    return (np.array(lower), np.array(upper)), np.array(bins, dtype=int)


def _coord_header(s: int, d: int) -> list[str]:
    cols = []
    for i in range(s):
        cols += [f"x{i}_{k}" for k in range(d)]
        cols += [f"v{i}_{k}" for k in range(d)]
    return cols


def cmd_simulate(args) -> int:
    cfg = _load(args)
    workers = _resolve_workers(args)
    if not cfg.times:
        raise ConfigError("empty time grid")
    out = _outdir(cfg)
    t0 = time.time()
    rows = []
    events = 0
    d = cfg.d
    times = sorted(set(cfg.times))
    header = ["N", "s", "t"] + _coord_header(1, d) + ["value", "stderr"]
    for N in cfg.N_list:
        simcfg = cfg.sim_config(N)
        window, bins = _window_grid(cfg, simcfg, 1)
        ens = None
        prev_t = 0.0
        for t in times:
            ens = evolve_ensemble(simcfg, cfg.density, t - prev_t, cfg.M,
                                  seed=cfg.seed, workers=workers, initial=ens)
            prev_t = t
            events += ens.events
            marg = estimate_marginal(ens, 1, window, bins)
            for p in range(marg.points.shape[0]):
                rows.append([N, 1, t, *[float(c) for c in marg.points[p]],
                             float(marg.values[p]), float(marg.stderr[p])])
    path = out / f"{cfg.experiment_id}_marginals.csv"
    write_csv(path, header, rows)
    manifest = RunManifest(config_hash=cfg.config_hash(), version=__version__,
                           seed=cfg.seed, wallclock=time.time() - t0,
                           events=events, outputs=[str(path)])
    manifest.write(out / f"{cfg.experiment_id}_manifest.txt")
    return 0


def cmd_converge(args) -> int:
    cfg = _load(args)
    workers = _resolve_workers(args)
    if not cfg.times:
        raise ConfigError("empty time grid")
    try:
        cfg.density.weight_certificate(cfg.d)
    except ValueError as exc:
        raise ConfigError(f"density lacks a weight certificate: {exc}") from exc
    out = _outdir(cfg)
    t0 = time.time()
    times = sorted(set(cfg.times))
    ref_M = int(cfg.section("reference").get("m", 2000))
    ref_cache: dict = {}

    def ref_value(t: float, cut: CutoffParams, Z: PhasePoint):
        """Product of one-particle reference values, (value, stderr)."""
        simcfg0 = cfg.sim_config(cfg.N_list[0])
        val, var_rel = 1.0, 0.0
        for i in range(Z.s):
            key = (t, Z.x[i].tobytes(), Z.v[i].tobytes())
            if key not in ref_cache:
                sol = boltzmann_series_solve(cfg.density, t, simcfg0, cut,
                                             M=ref_M, seed=cfg.seed + 7)
                ref_cache[key] = sol.evaluate(Z.x[i], Z.v[i])
            vi, si = ref_cache[key]
            val *= vi
            if vi != 0:
                var_rel += (si / vi) ** 2
        return val, abs(val) * math.sqrt(var_rel)

    rows = []
    for N in sorted(cfg.N_list):
        simcfg = cfg.sim_config(N)
        cut = cfg.cutoff(simcfg.epsilon)
        eta = simcfg.epsilon ** cut.kappa
        ens = None
        prev_t = 0.0
        per_t = {}
        for t in times:
            ens = evolve_ensemble(simcfg, cfg.density, t - prev_t, cfg.M,
                                  seed=cfg.seed, workers=workers, initial=ens)
            prev_t = t
            per_t[t] = ens
        for s in range(1, cfg.s_max + 1):
            for t in times:
                window, bins = _window_grid(cfg, simcfg, s)
                marg = estimate_marginal(per_t[t], s, window, bins)
                sup, sup_err, count = 0.0, 0.0, 0
                for p in range(marg.points.shape[0]):
                    Z = marg.phase_point(p)
                    if functionals(Z).energy > cut.R ** 2:
                        continue
                    if not (in_K(Z, simcfg.epsilon) and in_U_eta(Z, eta)):
                        continue
                    count += 1
                    rv, rerr = ref_value(t, cut, Z)
                    err = abs(float(marg.values[p]) - rv)
                    if err > sup:
                        sup = err
                        sup_err = math.hypot(float(marg.stderr[p]), rerr)
                rows.append([N, s, t, sup, sup_err, count])
    path = _outdir(cfg) / f"{cfg.experiment_id}_convergence.csv"
    write_csv(path, ["N", "s", "t", "error", "stderr", "count"], rows)
    manifest = RunManifest(config_hash=cfg.config_hash(), version=__version__,
                           seed=cfg.seed, wallclock=time.time() - t0,
                           outputs=[str(path)])
    manifest.write(out / f"{cfg.experiment_id}_manifest.txt")
    return 0


def _fit_exponent(pairs: list[tuple[float, float]]) -> float:
    pts = [(math.log(a), math.log(b)) for a, b in pairs if a > 0 and b > 0]
    if len(set(p[0] for p in pts)) < 2:
        return float("nan")
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    return float(np.polyfit(xs, ys, 1)[0])


def cmd_badset_scan(args) -> int:
    cfg = _load(args)
    out = _outdir(cfg)
    sec = cfg.section("scan")
    s_root = int(sec.get("s", 3))
    T = float(sec.get("t", 1.0))
    M = int(sec.get("m", 20000))
    simcfg = cfg.sim_config(cfg.N_list[0])
    base = cfg.cutoff(simcfg.epsilon)

    def _list(key, default):
        if key in sec:
            return [float(tok) for tok in sec[key].replace(",", " ").split()]
        return [default]

    alphas = _list("alpha_list", base.alpha)
    ys = _list("y_list", base.y)
    etas = _list("eta_list", base.eta)
    thetas = _list("theta_list", base.theta)

    # root state: admissible, backward-free, velocity-separated at the largest eta
    rng = np.random.default_rng(cfg.seed)
    eta_max = max(etas)
    Z = None
    for _ in range(5000):
        x, v = cfg.density.sample(rng, s_root, cfg.d)
        cand = PhasePoint(x, v)
        if (cand.is_admissible(simcfg.epsilon) and in_K(cand, simcfg.epsilon)
                and in_U_eta(cand, eta_max)):
            Z = cand
            break
    if Z is None:
        raise ConfigError("could not sample a good root state; thresholds too tight")
    ctx = BadSetContext(Z=Z, parent=0)

    grid = sorted(set(iproduct(alphas, ys, etas, thetas)))
    rows = []
    eta_pairs, theta_pairs = [], []
    for alpha, yv, eta, theta in grid:
        cut = CutoffParams(eta=eta, R=base.R, alpha=alpha, y=yv, theta=theta,
                           kappa=base.kappa, n=base.n, c_d=base.c_d)
        if not math.sin(theta) > cut.c_d * simcfg.epsilon / yv:
            rows.append([alpha, yv, eta, theta, T, base.R,
                         float("nan"), float("nan"), float("nan"),
                         float("nan"), float("nan"), 1])
            continue
        est = estimate_bad_measure(ctx, cut, simcfg, T, M=M,
                                   rng=np.random.default_rng(cfg.seed + 1))
        const = est.value / est.bound_shape if est.bound_shape > 0 else float("nan")
        rows.append([alpha, yv, eta, theta, T, base.R, est.value, est.stderr,
                     est.bound_bracket, est.bound_shape, const, 0])
        if (alpha, yv, theta) == (alphas[0], ys[0], thetas[0]):
            gap_term = est.per_label.get("III+", 0.0) + est.per_label.get("III-", 0.0)
            eta_pairs.append((eta, gap_term))
        if (alpha, yv, eta) == (alphas[0], ys[0], etas[0]):
            cone_term = est.per_label.get("VI+", 0.0) + est.per_label.get("IV-", 0.0)
            theta_pairs.append((theta, cone_term))
    fit_eta = _fit_exponent(eta_pairs)
    fit_theta = _fit_exponent([(math.sin(th), val) for th, val in theta_pairs])
    for row in rows:
        row += [fit_eta, fit_theta]
    path = out / f"{cfg.experiment_id}_badset.csv"
    write_csv(path, ["alpha", "y", "eta", "theta", "T", "R", "value", "stderr",
                     "bracket", "shape", "constant", "skipped",
                     "fit_eta_exponent", "fit_theta_exponent"], rows)
    manifest = RunManifest(config_hash=cfg.config_hash(), version=__version__,
                           seed=cfg.seed, outputs=[str(path)])
    manifest.write(out / f"{cfg.experiment_id}_manifest.txt")
    return 0


def cmd_pseudo(args) -> int:
    cfg = _load(args)
    out = _outdir(cfg)
    sec = cfg.section("pseudo")
    flavor = sec.get("flavor", "bbgky")
    if flavor not in ("bbgky", "boltzmann", "enskog"):
        raise ConfigError(f"unknown series flavor {flavor!r}")
    s = int(sec.get("s", 2))
    t = float(sec.get("t", cfg.times[0] if cfg.times else 0.5))
    m = int(sec.get("m", 3))
    M = int(sec.get("samples", 2000))
    N = cfg.N_list[0]
    simcfg = cfg.sim_config(N)
    cut = cfg.cutoff(simcfg.epsilon)
    d = cfg.d
    if "point" in sec:
        coords = np.array([float(tok) for tok in sec["point"].replace(",", " ").split()])
        if coords.size != 2 * s * d:
            raise ConfigError("pseudo point needs 2*s*d coordinates")
        z = coords.reshape(s, 2, d)
        Z = PhasePoint(z[:, 0, :], z[:, 1, :])
    else:
        x = np.zeros((s, d))
        x[:, 0] = np.arange(s) * max(4.0 * simcfg.epsilon, 0.5)
        v = np.zeros((s, d))
        v[:, 0] = 0.3 * (-1.0) ** np.arange(s)
        Z = PhasePoint(x, v)
    data = ProductData(cfg.density.evaluate)
    est = duhamel_mc(Z, t, simcfg, cut, data, flavor=flavor, m=m, M=M,
                     rng=np.random.default_rng(cfg.seed),
                     proposal_beta=cfg.density.b)
    rows = [[flavor, s, p.k, t, p.value, p.stderr, p.samples, p.undefined]
            for p in est.per_depth]
    rows.append([flavor, s, "total", t, est.value, est.stderr,
                 sum(p.samples for p in est.per_depth),
                 sum(p.undefined for p in est.per_depth)])
    path = out / f"{cfg.experiment_id}_pseudo.csv"
    write_csv(path, ["flavor", "s", "k", "t", "value", "stderr", "samples",
                     "undefined"], rows)
    manifest = RunManifest(config_hash=cfg.config_hash(), version=__version__,
                           seed=cfg.seed, outputs=[str(path)])
    manifest.write(out / f"{cfg.experiment_id}_manifest.txt")
    return 0


def cmd_partition(args) -> int:
    cfg = _load(args)
    out = _outdir(cfg)
    N = max(cfg.N_list)
    simcfg = cfg.sim_config(N)
    rng = np.random.default_rng(cfg.seed)
    prefix = prefix_partition_estimates(simcfg, cfg.density, cfg.M, rng)
    rows = []
    M = prefix.shape[0]
    for s in range(1, N + 1):
        p = float(np.mean(prefix[:, s - 1]))
        rows.append([s, p, math.sqrt(max(p * (1 - p), 0.0) / M), M])
    path = out / f"{cfg.experiment_id}_partition.csv"
    write_csv(path, ["s", "value", "stderr", "samples"], rows)
    manifest = RunManifest(config_hash=cfg.config_hash(), version=__version__,
                           seed=cfg.seed, outputs=[str(path)])
    manifest.write(out / f"{cfg.experiment_id}_manifest.txt")
    return 0


# ---------------------------------------------------------------------------
# verification suites


def _suite_collision(rng) -> list[tuple[str, bool, str]]:
    checks = []
    ok_inv = ok_cons = True
    for _ in range(200):
        d = int(rng.integers(2, 4))
        vi, vj = rng.normal(size=d), rng.normal(size=d)
        w = rng.normal(size=d)
        w /= np.linalg.norm(w)
        a, b = collide(vi, vj, w)
        a2, b2 = collide(a, b, w)
        ok_inv &= np.allclose(a2, vi, atol=1e-12) and np.allclose(b2, vj, atol=1e-12)
        ok_cons &= (abs(np.sum(a * a + b * b) - np.sum(vi * vi + vj * vj)) < 1e-10
                    and np.allclose(a + b, vi + vj, atol=1e-12))
    checks.append(("collision-involution", ok_inv, ""))
    checks.append(("collision-conservation", ok_cons, ""))
    return checks


def _suite_lemma3(rng) -> list[tuple[str, bool, str]]:
    simcfg = SimConfig(d=2, N=6, ell=1.0 / 0.5)
    f0 = DensitySpec(kind="gaussian-product", a=2.0, b=1.0)
    ok_virial = ok_inertia = True
    for k in range(20):
        sub = np.random.default_rng(rng.integers(2**32))
        Z = sample_initial(simcfg, f0, sub)
        t = float(sub.uniform(0.2, 2.0))
        out, _ = advance(Z, t, simcfg, FlowPolicy(degenerate_policy="perturb"))
        before = functionals(Z)
        after = functionals(out)
        ok_virial &= after.virial >= 2 * t * before.energy + before.virial - 1e-8
        free = functionals(Z.free_stream(t))
        ok_inertia &= after.moment_of_inertia >= free.moment_of_inertia - 1e-8
    checks = [("virial-growth", ok_virial, ""),
              ("inertia-dominates-free", ok_inertia, "")]
    return checks


def _suite_sets(rng) -> list[tuple[str, bool, str]]:
    eps = 0.05
    ok_mono = ok_incl = True
    for _ in range(200):
        x = rng.uniform(-1, 1, size=(4, 2))
        v = rng.normal(size=(4, 2))
        Z = PhasePoint(x, v)
        if in_U_eta(Z, 0.5):
            ok_mono &= in_U_eta(Z, 0.25)
        if Z.is_admissible(eps) and in_K(Z, eps) and in_U_eta(Z, 0.25):
            ok_incl &= in_G(Z, eps)
    return [("velocity-gap-monotone", ok_mono, ""),
            ("free-set-within-two-particle-set", ok_incl, "")]


def _suite_dispersive(rng) -> list[tuple[str, bool, str]]:
    ok = True
    for _ in range(50):
        a, b = float(rng.uniform(0.2, 3)), float(rng.uniform(0.2, 3))
        t = float(rng.uniform(0.1, 10))
        zeta = GaussianPhaseDensity(a=a, b=b, d=int(rng.integers(2, 4)))
        lhs, rhs, holds = dispersive_check(zeta, t)
        ok &= holds
    return [("dispersive-inequality", ok, "")]


def _suite_coefficients(rng) -> list[tuple[str, bool, str]]:
    ok_bounds = ok_limit = True
    last = 0.0
    for N in (8, 32, 128, 512, 4096):
        simcfg = SimConfig(d=2, N=N, ell=20.0)
        for k in range(4):
            a = coefficient_a(N, k, 2, simcfg)
            ok_bounds &= 0.0 <= a <= simcfg.ell ** (-k) * (1 + 1e-12)
        scaled = coefficient_a(N, 3, 2, simcfg) * simcfg.ell ** 3
        ok_limit &= scaled >= last - 1e-12
        last = scaled
    ok_limit &= abs(last - 1.0) < 0.01
    return [("coefficient-bounds", ok_bounds, ""),
            ("coefficient-limit", ok_limit, "")]


_SUITES = {
    "collision": _suite_collision,
    "lemma-3": _suite_lemma3,
    "sets": _suite_sets,
    "dispersive": _suite_dispersive,
    "coefficients": _suite_coefficients,
}


def cmd_verify(args) -> int:
    suite = args.suite
    names = list(_SUITES) + ["all"]
    if suite not in names:
        print(f"unknown suite {suite!r}; available: {', '.join(names)}",
              file=sys.stderr)
        return 2
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    selected = list(_SUITES) if suite == "all" else [suite]
    failed = 0
    for name in selected:
        for check, ok, detail in _SUITES[name](rng):
            status = "PASS" if ok else "FAIL"
            line = f"{status} {name}/{check}"
            if detail and not ok:
                line += f" ({detail})"
            print(line)
            failed += 0 if ok else 1
    return 0 if failed == 0 else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kinetic-chaos",
        description="hard-sphere kinetic simulation and verification toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("simulate", cmd_simulate), ("converge", cmd_converge),
                     ("badset-scan", cmd_badset_scan), ("pseudo", cmd_pseudo),
                     ("partition", cmd_partition)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--out", default=None)
        p.set_defaults(func=fn)
    pv = sub.add_parser("verify")
    pv.add_argument("suite")
    pv.add_argument("--seed", type=int, default=None)
    pv.set_defaults(func=cmd_verify)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DegenerateEventError,) as exc:
        print(f"numerical policy rejection: {exc}", file=sys.stderr)
        return 3
    except (ValueError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
