import math

import numpy as np
import pytest

from kinetic_chaos import (PhasePoint, SimConfig, CutoffParams, DensitySpec,
                           sample_initial, estimate_partition,
                           prefix_partition_estimates, evolve_ensemble,
                           estimate_marginal, marginal_at_points, chaos_error)


GAUSS = DensitySpec(kind="gaussian-product", a=1.0, b=1.0)
BOX = DensitySpec(kind="uniform-box-maxwellian", b=1.0, box=1.0)


def _erf_box_mass(center, half, scale):
    """Exact mass of exp(-scale*x^2)/norm over [center-half, center+half]."""
    lo = (center - half) * math.sqrt(scale)
    hi = (center + half) * math.sqrt(scale)
    return 0.5 * (math.erf(hi) - math.erf(lo))


def test_density_evaluate_normalization_gaussian():
    # closed-form normalization: integral over a wide erf box is ~1
    val = GAUSS.evaluate(np.zeros(2), np.zeros(2))
    assert val == pytest.approx(1.0 / math.pi ** 2, rel=1e-12)
    assert GAUSS.linf_l1(2) == pytest.approx(1.0 / math.pi, rel=1e-12)
    assert BOX.linf_l1(2) == pytest.approx(1.0, rel=1e-12)


def test_density_certificate_holds_on_samples():
    rng = np.random.default_rng(0)
    for f0 in (GAUSS, BOX):
        beta0, mu0 = f0.weight_certificate(2)
        x, v = f0.sample(rng, 2000, 2)
        vals = f0.evaluate(x, v)
        bound = np.exp(-mu0) * np.exp(-beta0 * 0.5 * np.sum(v * v, axis=1))
        assert np.all(vals <= bound * (1 + 1e-12))


def test_density_sample_matches_evaluate_moments():
    rng = np.random.default_rng(1)
    x, v = GAUSS.sample(rng, 200_000, 2)
    # var of each coordinate is 1/(2a) and 1/(2b)
    assert np.var(x) == pytest.approx(0.5, rel=0.02)
    assert np.var(v) == pytest.approx(0.5, rel=0.02)


def test_custom_density_requires_fields():
    with pytest.raises(ValueError):
        DensitySpec(kind="custom")
    with pytest.raises(ValueError):
        DensitySpec(kind="unheard-of")


def test_sample_initial_admissible():
    cfg = SimConfig(d=2, N=10, ell=1.0 / (10 * 0.05), epsilon=0.05)
    rng = np.random.default_rng(2)
    for _ in range(20):
        Z = sample_initial(cfg, GAUSS, rng)
        assert Z.is_admissible(cfg.epsilon)


def test_partition_s1_exact_and_validation():
    cfg = SimConfig(d=2, N=4, ell=20.0 / 4)
    rng = np.random.default_rng(0)
    est = estimate_partition(1, cfg, GAUSS, 1000, rng)
    assert est.value == 1.0 and est.stderr == 0.0
    with pytest.raises(ValueError):
        estimate_partition(1, cfg, GAUSS, 50, rng)
    with pytest.raises(ValueError):
        estimate_partition(5, cfg, GAUSS, 1000, rng)


def test_partition_two_particles_box_oracle():
    # two uniform points in the unit square: P(|x1-x2| <= r) has the closed
    # form pi r^2 - (8/3) r^3 + r^4/2, so Z_2 = 1 - that
    eps = 0.2
    cfg = SimConfig(d=2, N=2, ell=1.0 / (2 * eps), epsilon=eps)
    est = estimate_partition(2, cfg, BOX, 200_000, np.random.default_rng(3))
    want = 1.0 - (math.pi * eps ** 2 - (8.0 / 3.0) * eps ** 3 + eps ** 4 / 2.0)
    assert abs(est.value - want) <= 3.0 * est.stderr


def test_prefix_estimates_monotone_and_match_direct():
    eps = 0.05
    cfg = SimConfig(d=2, N=8, ell=1.0 / (8 * eps), epsilon=eps)
    pref = prefix_partition_estimates(cfg, BOX, 5000, np.random.default_rng(4))
    assert pref.shape == (5000, 8)
    assert np.all(pref[:, 0])
    # admissibility of a longer prefix implies that of a shorter one
    for s in range(1, 8):
        assert np.all(pref[:, s] <= pref[:, s - 1])
    direct = estimate_partition(8, cfg, BOX, 5000, np.random.default_rng(5))
    z8 = float(np.mean(pref[:, 7]))
    sigma = math.hypot(direct.stderr, math.sqrt(z8 * (1 - z8) / 5000))
    assert abs(z8 - direct.value) <= 4.0 * sigma


def test_evolve_deterministic_and_worker_independent():
    cfg = SimConfig(d=2, N=4, ell=1.0 / (4 * 0.05), epsilon=0.05)
    a = evolve_ensemble(cfg, GAUSS, 0.5, 40, seed=9)
    b = evolve_ensemble(cfg, GAUSS, 0.5, 40, seed=9)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.v, b.v)
    c = evolve_ensemble(cfg, GAUSS, 0.5, 40, seed=9, workers=2)
    assert np.array_equal(a.x, c.x) and np.array_equal(a.v, c.v)
    d = evolve_ensemble(cfg, GAUSS, 0.5, 40, seed=10)
    assert not np.array_equal(a.x, d.x)


def test_evolve_incremental_continuation():
    cfg = SimConfig(d=2, N=4, ell=1.0 / (4 * 0.05), epsilon=0.05)
    full = evolve_ensemble(cfg, GAUSS, 0.6, 25, seed=1)
    half = evolve_ensemble(cfg, GAUSS, 0.3, 25, seed=1)
    rest = evolve_ensemble(cfg, GAUSS, 0.3, 25, seed=1, initial=half)
    assert rest.t == pytest.approx(0.6)
    assert np.allclose(rest.x, full.x, atol=1e-9)
    assert np.allclose(rest.v, full.v, atol=1e-9)


def test_marginal_single_particle_matches_cell_average():
    # N=1, t=0: the s=1 marginal is f0 itself; the box-kernel estimate must
    # match the exact erf cell average within 3 sigma
    cfg = SimConfig(d=2, N=1, ell=1.0, epsilon=1.0)
    ens = evolve_ensemble(cfg, GAUSS, 0.0, 40_000, seed=6)
    pts = np.array([[0.0, 0.0, 0.0, 0.0], [0.5, 0.0, -0.5, 0.5]])
    widths = np.full(4, 0.5)
    marg = marginal_at_points(ens, 1, pts, widths)
    vol = 0.5 ** 4
    for p in range(2):
        mass = 1.0
        for k in range(4):
            mass *= _erf_box_mass(pts[p, k], 0.25, 1.0)
        want = mass / vol
        assert abs(marg.values[p] - want) <= 3.0 * marg.stderr[p] + 1e-12


def test_marginal_grid_mass_bounded():
    cfg = SimConfig(d=2, N=2, ell=1.0 / (2 * 0.05), epsilon=0.05)
    ens = evolve_ensemble(cfg, GAUSS, 0.1, 2000, seed=7)
    window = (np.array([-2.0, -2.0, -2.0, -2.0]), np.array([2.0, 2.0, 2.0, 2.0]))
    marg = estimate_marginal(ens, 1, window, 4)
    assert marg.total_mass() <= 1.0 + 1e-9
    assert marg.total_mass() > 0.5  # most of the mass is inside the window


def test_marginal_rejects_narrow_position_bins():
    cfg = SimConfig(d=2, N=2, ell=1.0 / (2 * 0.3), epsilon=0.3)
    ens = evolve_ensemble(cfg, GAUSS, 0.0, 200, seed=8)
    window = (np.full(4, -1.0), np.full(4, 1.0))
    with pytest.raises(ValueError):
        estimate_marginal(ens, 1, window, 10)


def test_marginal_two_particle_injections():
    cfg = SimConfig(d=2, N=3, ell=1.0 / (3 * 0.01), epsilon=0.01)
    ens = evolve_ensemble(cfg, GAUSS, 0.0, 3000, seed=11)
    pts = np.array([[0.0, 0.0, 0.0, 0.0, 0.5, 0.5, -0.5, 0.5]])
    marg = marginal_at_points(ens, 2, pts, np.full(8, 0.8))
    # product reference (conditioning correction is far below MC noise here)
    z = pts[0].reshape(2, 2, 2)
    ref = 1.0
    for i in range(2):
        for blk in range(2):
            for k in range(2):
                ref *= _erf_box_mass(z[i, blk, k], 0.4, 1.0)
    ref /= 0.8 ** 8
    assert abs(marg.values[0] - ref) <= 3.0 * marg.stderr[0] + 1e-12


def test_chaos_error_counts_and_errors():
    cfg = SimConfig(d=2, N=2, ell=1.0 / (2 * 0.05), epsilon=0.05)
    ens = evolve_ensemble(cfg, GAUSS, 0.0, 500, seed=12)
    pts = np.array([[0.0, 0.0, 0.3, 0.2]])
    marg = marginal_at_points(ens, 1, pts, np.full(4, 0.5))
    cut = CutoffParams(eta=0.01, R=4.0, alpha=0.05, y=0.1, theta=0.3)
    err, count = chaos_error(marg, lambda Z: 0.0, cut, cfg)
    assert count == 1 and err == pytest.approx(float(marg.values[0]))
    # energy cutoff excludes every probe point -> error
    tiny = CutoffParams(eta=0.001, R=0.05, alpha=0.05, y=0.1, theta=0.3)
    with pytest.raises(ValueError):
        chaos_error(marg, lambda Z: 0.0, tiny, cfg)
