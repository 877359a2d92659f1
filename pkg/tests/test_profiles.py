"""Profile shapes, density bounds, and block-event lower bounds."""

import math

import numpy as np
import pytest

from recomblab import (
    BlockSpec,
    block_product_pmf,
    check_l1_l2_bound,
    continuous_profile,
    discrete_profile,
    gaussian_tv,
    gaussian_tv_asymptotics,
    gaussian_tv_complement,
    gaussian_tv_quadrature,
    l1_from_l2_bound,
    lowerbound_experiment_continuous,
    lowerbound_experiment_discrete,
    mixture_profile_tv,
    mono_mixture_tv,
    mono_tv_large_n_limit,
    normal_density_ratio,
    two_valued_extremal_density,
)
from recomblab.errors import ConfigError, InvalidDistributionError
from recomblab.streams import rng_substream


# -----------------------------------------------------------------------
# the Gaussian scale profile
# -----------------------------------------------------------------------


def test_gaussian_tv_against_quadrature_grid():
    for s in np.logspace(-3, 6, 19):
        closed = gaussian_tv(s)
        quad = gaussian_tv_quadrature(s)
        assert closed == pytest.approx(quad, abs=1e-8), s


def test_gaussian_tv_fixed_values():
    assert gaussian_tv(1.0) == pytest.approx(0.16606407498351294, abs=1e-12)
    assert gaussian_tv(0.0) == 0.0
    # monotone increasing in the scale
    grid = np.logspace(-2, 4, 25)
    vals = [gaussian_tv(s) for s in grid]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1.0


def test_gaussian_tv_complement_identity():
    for s in (1e-3, 0.5, 1.0, 20.0, 1e5):
        assert gaussian_tv(s) + gaussian_tv_complement(s) == pytest.approx(
            1.0, abs=1e-12
        )


def test_normal_density_ratio_crossings():
    # the densities cross where the ratio is one; distance integrates the
    # gap between the crossings
    s = 2.0
    z = math.sqrt((1 + s) * math.log1p(s) / s)
    assert normal_density_ratio(s, z) == pytest.approx(1.0, abs=1e-12)
    # the wider density sits below the reference at the center and above
    # it in the tails
    assert normal_density_ratio(s, 0.0) < 1.0
    assert normal_density_ratio(s, 3 * z) > 1.0


def test_small_scale_asymptote():
    report = gaussian_tv_asymptotics()
    assert report.passed_small
    assert report.small_scale_ratio == pytest.approx(1.0, abs=0.02)
    assert report.center_value == pytest.approx(0.16606407498351294, abs=1e-12)


@pytest.mark.xfail(
    strict=True,
    reason=(
        "requested large-scale gate does not hold for this distance: the "
        "measured ratio against sqrt(log(s) / (2 pi s)) is 2.136 at s = 10^6 "
        "(1.068 after halving), not within 5 percent of one, because the "
        "distance keeps an additional tail term of relative size "
        "O(1/log s). Recorded in the acceptance registry as the red "
        "criterion; see the decisions ledger."
    ),
)
def test_large_scale_asymptote_gate():
    report = gaussian_tv_asymptotics()
    assert report.passed_large


# -----------------------------------------------------------------------
# large-n mixture limits
# -----------------------------------------------------------------------


def test_mono_tv_large_n_limit_fixed_values():
    assert mono_tv_large_n_limit(0) == pytest.approx(1.0)
    assert mono_tv_large_n_limit(1) == pytest.approx(0.5)
    assert mono_tv_large_n_limit(2) == pytest.approx(0.625)
    assert mono_tv_large_n_limit(3) == pytest.approx(0.7265625)


def test_mono_tv_approaches_its_large_n_limit():
    for t in (1, 2, 3):
        lim = mono_tv_large_n_limit(t)
        assert mono_mixture_tv(2000, t) == pytest.approx(lim, abs=1e-6)


# -----------------------------------------------------------------------
# mixture profile quadrature
# -----------------------------------------------------------------------


def test_mixture_profile_reduces_to_gaussian_for_unit_weights():
    ones = np.ones(64)
    for lam in (-10.0, -6.0, 0.0, 6.0, 10.0):
        s = math.exp(-lam / 2.0)
        assert mixture_profile_tv(lam, ones) == pytest.approx(
            gaussian_tv(s), abs=1e-6
        )


def test_mixture_profile_monotone_in_window():
    rng = rng_substream(21, 0)
    w = rng.exponential(size=500)
    grid = [-4.0, -2.0, 0.0, 2.0, 4.0]
    vals = [mixture_profile_tv(lam, w) for lam in grid]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_mixture_profile_rejects_empty_batch():
    with pytest.raises(InvalidDistributionError):
        mixture_profile_tv(0.0, np.array([]))


# -----------------------------------------------------------------------
# L1 / L2 density bound
# -----------------------------------------------------------------------


def test_l1_from_l2_bound_shape():
    # linear branch below one, saturating branch above, continuous at one
    assert l1_from_l2_bound(0.4) == pytest.approx(0.2)
    assert l1_from_l2_bound(2.0) == pytest.approx(4.0 / 5.0)
    assert l1_from_l2_bound(1.0) == pytest.approx(0.5)
    grid = np.linspace(0.0, 5.0, 200)
    vals = [l1_from_l2_bound(x) for x in grid]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
    assert all(v < 1.0 for v in vals)


def test_l1_l2_bound_on_random_densities():
    rng = rng_substream(21, 1)
    for n in (3, 5, 8):
        probs = np.full(2 ** n, 2.0 ** (-n))
        density = rng.exponential(size=2 ** n)
        density /= probs @ density
        check = check_l1_l2_bound(probs, density)
        assert check.holds
        assert check.l1_half <= check.bound + 1e-12


def test_l1_l2_bound_equality_families():
    # half-mass two-valued densities meet the linear branch exactly
    for dev in (0.25, 0.7, 1.0):
        probs, density = two_valued_extremal_density(0.5, dev)
        check = check_l1_l2_bound(probs, density)
        assert check.holds
        assert check.l1_half == pytest.approx(check.bound, abs=1e-12)
    # a vanishing-density cell of weight v >= 1/2 meets the other branch
    probs = np.array([0.75, 0.25])
    density = np.array([0.0, 4.0])
    check = check_l1_l2_bound(probs, density)
    assert check.holds
    assert check.l1_half == pytest.approx(check.bound, abs=1e-12)


def test_l1_l2_bound_input_validation():
    with pytest.raises(InvalidDistributionError):
        check_l1_l2_bound(np.array([0.6, 0.6]), np.array([1.0, 1.0]))
    with pytest.raises(InvalidDistributionError):
        check_l1_l2_bound(np.array([0.5, 0.5]), np.array([2.0, 2.0]))


# -----------------------------------------------------------------------
# block experiments
# -----------------------------------------------------------------------


def test_block_spec_partition():
    spec = BlockSpec(block_size=7, block_count=3, leftover=2)
    assert spec.n == 23
    assert list(spec.block_sizes) == [7, 7, 7, 2]


def test_block_product_concentrates_on_block_constant_configs():
    spec = BlockSpec(block_size=3, block_count=2, leftover=0)
    state = block_product_pmf(spec)
    assert state.n == 6
    assert state.site_bias(1) == 0.0
    pmf = state.to_pmf()
    # support: each 3-site block all-down or all-up, independent fair signs
    support = {0b000000, 0b000111, 0b111000, 0b111111}
    for idx, w in enumerate(pmf.weights):
        if idx in support:
            assert w == pytest.approx(0.25)
        else:
            assert w == 0.0


def test_discrete_block_moments_match_formulas():
    report = lowerbound_experiment_discrete(5120, 3)
    assert report.first_moment_exact == pytest.approx(
        report.first_moment_formula, rel=1e-12
    )
    assert report.second_moment_exact == pytest.approx(
        report.second_moment_formula, rel=1e-12
    )
    # the event is rare at stationarity and typical after evolution
    assert report.stationary_event <= 1.0 / 20.0
    assert report.paley_zygmund_bound >= 1.0 / 12.0
    assert report.tv_lower_bound > 0.9
    assert report.mc is None


def test_discrete_block_mc_agrees_with_formulas():
    rng = rng_substream(21, 2)
    report = lowerbound_experiment_discrete(2560, 3, rng=rng, mc_samples=4000)
    assert report.mc is not None
    assert abs(report.mc.first_moment_z) < 4.0
    assert abs(report.mc.second_moment_z) < 4.0


def test_continuous_block_bound_is_dominated_by_z_law():
    rng = rng_substream(21, 3)
    report = lowerbound_experiment_continuous(400, 1.0, 120, rng, inner_samples=512)
    assert 0.0 < report.tv_lower_bound <= report.block_count_tv + 1e-12
    assert report.second_moment_bound_ok
    assert abs(report.first_moment_max_abs_z) < 5.0


# -----------------------------------------------------------------------
# profile drivers
# -----------------------------------------------------------------------


def test_discrete_profile_rows():
    points = discrete_profile(256, [-2, 0, 2])
    assert [p.window for p in points] == [-2.0, 0.0, 2.0]
    for p in points:
        assert p.tv == pytest.approx(mono_mixture_tv(256, round(8 + p.window)))
        assert p.bound_upper == min(1.0, p.scale)
    with pytest.raises(ConfigError):
        discrete_profile(8, [-5])


def test_continuous_profile_rows():
    rng = rng_substream(21, 4)
    w = rng.exponential(size=400)
    pts = continuous_profile([-1.0, 1.0], w, dz=1e-2)
    assert pts[0].scale == pytest.approx(math.exp(0.5))
    assert pts[0].tv > pts[1].tv
    assert pts[0].bound_upper is None
