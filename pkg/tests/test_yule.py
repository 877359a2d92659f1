"""Continuous-time dynamics: branching trees, martingale samplers, spinal law."""

import math

import numpy as np
import pytest
from scipy import stats as sps

from recomblab import (
    CapacityError,
    Pmf,
    continuous_trajectory,
    double_quenched_estimate,
    evolve_continuous,
    leaf_weight_martingale,
    marginal_bias,
    martingale_limit_samples,
    martingale_samples,
    martingale_tail_probability,
    monochromatic_pmf,
    product_pmf,
    quenched_measure_on_tree,
    random_pmf,
    sample_leaf_spins,
    sample_partition_on_tree,
    sample_yule,
    spinal_identity_check,
    stationary_product,
    tail_probability_from_samples,
    tree_measure,
    tv_distance,
    uniform_pmf,
    wht_forward,
    wild_mc_estimate,
)
from recomblab.streams import rng_substream


# -----------------------------------------------------------------------
# trees
# -----------------------------------------------------------------------


def test_tree_structure_invariants():
    rng = rng_substream(11, 0)
    for _ in range(50):
        tree = sample_yule(2.0, rng)
        ids = np.arange(tree.num_nodes)
        interior = tree.children[:, 0] >= 0
        # children always come after their parent
        assert (tree.children[interior] > ids[interior, None]).all()
        assert (tree.parent[1:] < ids[1:]).all()
        assert tree.parent[0] == -1
        assert (tree.birth_time >= 0).all()
        assert (tree.birth_time <= 2.0).all()
        # halving weights over leaves always telescope to exactly one
        assert tree.leaf_weight_sum(radix=2) == 1.0


def test_tree_leaf_count_is_geometric():
    # leaf count at horizon t is geometric with mean e^t
    rng = rng_substream(11, 1)
    t, m = 1.5, 4000
    counts = np.array([sample_yule(t, rng).num_leaves for _ in range(m)])
    p = math.exp(-t)
    mean, var = 1.0 / p, (1.0 - p) / p ** 2
    z = (counts.mean() - mean) / math.sqrt(var / m)
    assert abs(z) < 4.0
    # geometric tail: P(N > k) = (1-p)^k
    k = 5
    emp = (counts > k).mean()
    expect = (1 - p) ** k
    sigma = math.sqrt(expect * (1 - expect) / m)
    assert emp == pytest.approx(expect, abs=4 * sigma)


def test_tree_capacity_cap():
    rng = rng_substream(11, 2)
    with pytest.raises(CapacityError):
        for _ in range(50):
            sample_yule(12.0, rng, max_leaves=64)


def test_tree_measure_no_split_is_identity():
    rng = rng_substream(11, 3)
    mu = random_pmf(3, rng)
    tree = sample_yule(0.0, rng)
    assert tree.num_leaves == 1
    out = tree_measure(tree, mu)
    np.testing.assert_allclose(out.weights, mu.weights, atol=1e-14)


def test_tree_measure_single_split_is_one_collision():
    # find a two-leaf tree; its measure is exactly one self-collision
    from recomblab import collide_pmf

    rng = rng_substream(11, 4)
    mu = random_pmf(3, rng)
    while True:
        tree = sample_yule(0.4, rng)
        if tree.num_leaves == 2:
            break
    np.testing.assert_allclose(
        tree_measure(tree, mu).weights, collide_pmf(mu, mu).weights, atol=1e-13
    )


def test_partition_walk_hits_leaves_with_halving_weights():
    # on a fixed tree, each site lands on leaf x with probability 2^-depth(x)
    rng = rng_substream(11, 5)
    while True:
        tree = sample_yule(1.2, rng)
        if 3 <= tree.num_leaves <= 6:
            break
    m = 100_000
    hits = np.zeros(tree.num_nodes)
    for _ in range(m):
        leaf = sample_partition_on_tree(tree, 1, rng)[0]
        hits[leaf] += 1
    for leaf in tree.leaves:
        p = 2.0 ** (-float(tree.depth[leaf]))
        sigma = math.sqrt(p * (1 - p) / m)
        assert hits[leaf] / m == pytest.approx(p, abs=4 * sigma)


# -----------------------------------------------------------------------
# deterministic continuous evolution
# -----------------------------------------------------------------------


def test_continuous_product_fixed_point():
    rng = rng_substream(11, 6)
    prod = product_pmf(rng.uniform(-0.8, 0.8, size=3))
    out = evolve_continuous(prod, 2.0)
    assert tv_distance(out, prod) < 1e-12


def test_continuous_two_site_closed_form():
    # with both site biases zero the only live coefficient is the full pair,
    # and it decays exactly like exp(-t/2)
    mono = monochromatic_pmf(2)
    for t in (0.5, 1.0, 3.0):
        out = evolve_continuous(mono, t, step=1e-3)
        assert wht_forward(out).coeffs[3] == pytest.approx(
            math.exp(-t / 2.0), abs=1e-10
        )


def test_continuous_preserves_biases():
    rng = rng_substream(11, 7)
    mu = random_pmf(4, rng)
    out = evolve_continuous(mu, 1.7)
    for s in range(1, 5):
        assert marginal_bias(out, s) == pytest.approx(
            marginal_bias(mu, s), abs=1e-9
        )


def test_continuous_trajectory_monotone_times():
    mu = monochromatic_pmf(3)
    states = continuous_trajectory(mu, [0.5, 1.0, 2.0])
    target = stationary_product(mu)
    d = [tv_distance(s, target) for s in states]
    assert d[0] > d[1] > d[2]
    with pytest.raises(ValueError):
        continuous_trajectory(mu, [1.0, 0.5])


# -----------------------------------------------------------------------
# Monte Carlo representations
# -----------------------------------------------------------------------


def test_wild_average_matches_exact_evolution():
    n, t, m = 3, 1.0, 3000
    rng = rng_substream(11, 8)
    mu = monochromatic_pmf(n)
    est = wild_mc_estimate(mu, t, m, rng)
    exact = evolve_continuous(mu, t, step=1e-3)
    err = np.abs(est.mean.weights - exact.weights)
    gate = 4.0 * est.stderr + 1e-6
    assert (err <= gate).all()
    # singleton coefficients never fluctuate across trees
    assert est.coeff_stderr[0b001] == 0.0
    assert est.coeff_stderr[0b010] == 0.0


def test_double_quenched_average_matches_exact_evolution():
    n, t, m = 3, 1.0, 20_000
    rng = rng_substream(11, 9)
    mu = monochromatic_pmf(n)
    est = double_quenched_estimate(mu, t, m, rng)
    exact = evolve_continuous(mu, t, step=1e-3)
    err = np.abs(est.mean.weights - exact.weights)
    gate = 4.0 * est.stderr + 1e-6
    assert (err <= gate).all()


def test_quenched_measure_on_tree_is_product_of_leaf_averages():
    rng = rng_substream(11, 10)
    mu = monochromatic_pmf(3)
    tree = sample_yule(1.0, rng)
    spins = sample_leaf_spins(tree, mu, rng)
    q = quenched_measure_on_tree(tree, spins)
    weights = np.ldexp(1.0, -tree.leaf_depths.astype(np.int32))
    biases = weights @ spins
    np.testing.assert_allclose(q.weights, product_pmf(biases).weights, atol=1e-14)


# -----------------------------------------------------------------------
# leaf-weight martingale
# -----------------------------------------------------------------------


def test_martingale_no_split_value():
    rng = rng_substream(11, 11)
    tree = sample_yule(0.0, rng)
    s = leaf_weight_martingale(tree)
    assert s.value == pytest.approx(1.0)
    assert s.leaf_count == 1


def test_martingale_one_split_value():
    rng = rng_substream(11, 12)
    while True:
        tree = sample_yule(0.3, rng)
        if tree.num_leaves == 2:
            break
    s = leaf_weight_martingale(tree)
    assert s.value == pytest.approx(math.exp(0.3 / 2.0) / 2.0, rel=1e-12)


def test_martingale_batch_mean_and_bound():
    t, m = 4.0, 20_000
    rng = rng_substream(11, 13)
    batch = martingale_samples(t, m, rng)
    assert batch.method == "direct"
    assert (batch.values > 0).all()
    assert batch.values.max() <= math.exp(t / 2.0) + 1e-12
    z = (batch.values.mean() - 1.0) / (batch.values.std(ddof=1) / math.sqrt(m))
    assert abs(z) < 4.0


def test_martingale_below_one_probability():
    # P(value < 1) equals 1 - e^-t while 2^-1 e^{t/2} <= ... the identity
    # window; checked inside it
    m = 40_000
    for t in (0.5, 1.0):
        rng = rng_substream(11, 14)
        batch = martingale_samples(t, m, rng)
        emp = (batch.values < 1.0).mean()
        p = 1.0 - math.exp(-t)
        sigma = math.sqrt(p * (1 - p) / m)
        assert emp == pytest.approx(p, abs=4 * sigma)


def test_cascade_agrees_with_direct_at_equal_horizon():
    t, m = 6.0, 4000
    direct = martingale_samples(t, m, rng_substream(11, 15), method="direct")
    cascade = martingale_samples(t, m, rng_substream(11, 16), method="cascade")
    stat = sps.ks_2samp(direct.values, cascade.values).statistic
    # 99th percentile of the two-sample KS null at these sizes
    assert stat < 1.628 * math.sqrt(2.0 / m)


@pytest.mark.xfail(
    strict=True,
    reason=(
        "requested example is false as stated: the value distribution at "
        "horizon 30 measurably differs from horizon 10 (KS about 0.08 vs a "
        "0.023 null at 10^4 samples; P(value < 0.5) moves 0.453 -> 0.489 -> "
        "0.554 across horizons 8, 10, 30, while same-horizon samplers agree "
        "to KS 0.013). Convergence to the limit law is real but slower than "
        "the example assumes; see the decisions ledger."
    ),
)
def test_horizon_10_vs_30_within_ks_noise():
    m = 10_000
    a = martingale_samples(10.0, m, rng_substream(11, 17)).values
    b = martingale_samples(30.0, m, rng_substream(11, 18)).values
    stat = sps.ks_2samp(a, b).statistic
    assert stat < 1.628 * math.sqrt(2.0 / m)


def test_limit_samples_positive_and_tail_estimator():
    rng = rng_substream(11, 19)
    batch = martingale_limit_samples(3000, rng, horizon=12.0)
    assert (batch.values >= 0).all()
    assert batch.horizon == 12.0

    est = tail_probability_from_samples(np.array([0.1, 0.6, 2.0]), 0.5)
    assert est.probability == pytest.approx(1.0 / 3.0)
    assert est.samples == 3
    assert est.ci_low <= est.probability <= est.ci_high

    rng2 = rng_substream(11, 20)
    e2 = martingale_tail_probability(1.0, 0.9, 5000, rng2)
    assert 0.0 < e2.probability < 1.0


def test_batch_csv_roundtrip(tmp_path):
    rng = rng_substream(11, 21)
    batch = martingale_samples(2.0, 50, rng)
    path = tmp_path / "m.csv"
    batch.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "sample,t,W,leaves"
    assert len(lines) == 51
    first = lines[1].split(",")
    assert float(first[2]) == batch.values[0]
    assert int(first[3]) == batch.leaf_counts[0]


# -----------------------------------------------------------------------
# spinal identity
# -----------------------------------------------------------------------


def test_spinal_identity_holds():
    rng = rng_substream(11, 22)
    report = spinal_identity_check(1.0, 30_000, rng)
    assert report.passed
    names = {r.name for r in report.results}
    assert "unit" in names
    for r in report.results:
        assert abs(r.z) <= 4.0
