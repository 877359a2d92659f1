"""Cutoff profiles, closed-form bounds, and block lower-bound experiments.

The discrete-time distance profile converges to the total variation distance
between a standard normal and a centered normal with variance 1+s, written
`gaussian_tv(s)` here; its continuous-time analogue replaces s by a random
multiple of the limiting leaf-weight martingale and is estimated by
`mixture_profile_tv`.  The module also carries the exact n-to-infinity
fixed-step limit, asymptotic ratio diagnostics, the L1-from-L2 bound for
densities on finite spaces, and the two block-magnetization experiments that
certify distance lower bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import quad, simpson
from scipy.special import erfc, gammaln
from scipy.stats import binom

from .cube import Pmf
from .discrete import mono_mixture_tv
from .errors import (
    CapacityError,
    ConfigError,
    DimensionMismatchError,
    InvalidDistributionError,
)
from .yule import sample_yule

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def normal_density_ratio(s: float, z) -> np.ndarray | float:
    """Density of N(0, 1+s) relative to N(0, 1) at z."""
    if s < 0:
        raise InvalidDistributionError(f"variance excess must be >= 0, got {s}")
    z = np.asarray(z, dtype=np.float64)
    out = np.exp(s * z * z / (2.0 * (s + 1.0))) / math.sqrt(1.0 + s)
    return float(out) if out.ndim == 0 else out


def gaussian_tv(s: float) -> float:
    """Distance between N(0,1) and N(0,1+s): crossing-point closed form.

    The densities cross at z* with z*^2 = (1+s)log(1+s)/s, and the distance
    is the mass each density wins between the crossings.
    """
    if s < 0:
        raise InvalidDistributionError(f"variance excess must be >= 0, got {s}")
    if s == 0:
        return 0.0
    z_star = math.sqrt((1.0 + s) * math.log1p(s) / s)
    return 2.0 * (_norm_cdf(z_star) - _norm_cdf(z_star / math.sqrt(1.0 + s)))


def gaussian_tv_complement(s: float) -> float:
    """1 - gaussian_tv(s), in a form free of large-s cancellation."""
    if s < 0:
        raise InvalidDistributionError(f"variance excess must be >= 0, got {s}")
    if s == 0:
        return 1.0
    z_star = math.sqrt((1.0 + s) * math.log1p(s) / s)
    root2 = math.sqrt(2.0)
    return math.erfc(z_star / root2) + math.erf(
        z_star / (root2 * math.sqrt(1.0 + s))
    )


def gaussian_tv_quadrature(s: float) -> float:
    """Same distance by direct quadrature of the two densities.

    Integrates |pdf of N(0,1+s) - pdf of N(0,1)| without using the cdf
    formula; the crossing point only splits the domain so the integrand is
    smooth on each piece.  Serves as the independent oracle for gaussian_tv.
    """
    if s < 0:
        raise InvalidDistributionError(f"variance excess must be >= 0, got {s}")
    if s == 0:
        return 0.0
    sd2 = math.sqrt(1.0 + s)

    def gap(z: float) -> float:
        wide = math.exp(-z * z / (2.0 * (1.0 + s))) / (_SQRT_2PI * sd2)
        narrow = math.exp(-z * z / 2.0) / _SQRT_2PI
        return abs(wide - narrow)

    z_star = math.sqrt((1.0 + s) * math.log1p(s) / s)
    inner, _ = quad(gap, 0.0, z_star, limit=200)
    outer, _ = quad(gap, z_star, np.inf, limit=200)
    return inner + outer


@dataclass(frozen=True)
class AsymptoticsReport:
    """Ratio diagnostics of gaussian_tv against its small/large-s shapes.

    `small_scale_ratio` divides the distance at s=1e-3 by s/sqrt(2 e pi).
    `large_scale_ratio` multiplies the complement at s=1e6 by
    sqrt(2 pi s / log s).  Since P(|N(0,1)| <= x) ~ 2x/sqrt(2 pi), the
    complement actually behaves like twice that reference shape, with a
    further O(1/log s) term from the outer tail; the halved ratio is
    reported alongside as a diagnostic.
    """

    small_scale: float
    small_scale_ratio: float
    large_scale: float
    large_scale_ratio: float
    large_scale_ratio_halved: float
    center_value: float
    passed_small: bool
    passed_large: bool


def gaussian_tv_asymptotics(
    small_s: float = 1e-3,
    large_s: float = 1e6,
    small_tol: float = 0.02,
    large_tol: float = 0.05,
) -> AsymptoticsReport:
    ratio_small = gaussian_tv(small_s) / (small_s / math.sqrt(2.0 * math.e * math.pi))
    complement = gaussian_tv_complement(large_s)
    ratio_large = complement * math.sqrt(2.0 * math.pi * large_s / math.log(large_s))
    return AsymptoticsReport(
        small_scale=small_s,
        small_scale_ratio=ratio_small,
        large_scale=large_s,
        large_scale_ratio=ratio_large,
        large_scale_ratio_halved=ratio_large / 2.0,
        center_value=gaussian_tv(1.0),
        passed_small=abs(ratio_small - 1.0) <= small_tol,
        passed_large=abs(ratio_large - 1.0) <= large_tol,
    )


def mono_tv_large_n_limit(t: int) -> float:
    """Large-n limit of the distance after t steps from the two-point start.

    Equals 1 - C(2^t, 2^{t-1}) 2^{-2^t}; the t=0 limit is 1.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if t > 30:
        raise CapacityError(f"limit evaluation is capped at t <= 30, got {t}")
    if t == 0:
        return 1.0
    leaves = 1 << t
    log_central = (
        gammaln(leaves + 1)
        - 2.0 * gammaln(leaves // 2 + 1)
        - leaves * math.log(2.0)
    )
    return -math.expm1(log_central)


# ---------------------------------------------------------------------------
# mixture profile
# ---------------------------------------------------------------------------


def mixture_profile_tv(
    window: float,
    martingale_values: Sequence[float],
    z_max: float = 12.0,
    dz: float = 1e-3,
) -> float:
    """Distance profile of the normal mixture at window coordinate `window`.

    Computes 1/2 * integral of |mean over samples of the N(0, 1+a)-to-N(0,1)
    density ratio - 1| against the standard normal, where a = exp(-window/2)
    times each martingale sample.  The mean over samples sits inside the
    absolute value.  The quadrature runs on [-z_max, z_max] with step <= dz,
    plus the exact tail correction (all density ratios exceed 1 out there).
    """
    values = np.asarray(martingale_values, dtype=np.float64)
    if values.size == 0:
        raise InvalidDistributionError("need at least one martingale sample")
    if not np.isfinite(values).all() or values.min() <= 0.0:
        raise InvalidDistributionError("martingale samples must be finite and > 0")
    excess = math.exp(-window / 2.0) * values
    half_pts = int(math.ceil(z_max / dz))
    grid = np.linspace(-z_max, z_max, 2 * half_pts + 1)
    h = z_max / half_pts

    coeff = excess / (2.0 * (excess + 1.0))
    scale = 1.0 / np.sqrt(1.0 + excess)
    mix = np.empty(grid.size)
    chunk = max(1, int(8e6) // values.size)
    for start in range(0, grid.size, chunk):
        zz = grid[start : start + chunk]
        block = np.exp(np.outer(zz * zz, coeff))
        block *= scale
        mix[start : start + zz.size] = block.mean(axis=1)
    integrand = np.abs(mix - 1.0) * np.exp(-grid * grid / 2.0) / _SQRT_2PI
    interior = simpson(integrand, dx=h)

    root2 = math.sqrt(2.0)
    outside_mixture = float(np.mean(erfc(z_max / (root2 * np.sqrt(1.0 + excess)))))
    outside_reference = math.erfc(z_max / root2)
    return 0.5 * interior + 0.5 * (outside_mixture - outside_reference)


# ---------------------------------------------------------------------------
# L1-from-L2 bound for finite densities
# ---------------------------------------------------------------------------


def l1_from_l2_bound(x: float) -> float:
    """Best bound on half the L1 deviation given the L2 deviation x."""
    if x < 0:
        raise InvalidDistributionError(f"L2 deviation must be >= 0, got {x}")
    return x / 2.0 if x <= 1.0 else x * x / (1.0 + x * x)


@dataclass(frozen=True)
class DensityBoundCheck:
    l1_half: float
    l2: float
    bound: float
    holds: bool


def check_l1_l2_bound(
    probs: Sequence[float], density: Sequence[float], tol: float = 1e-9
) -> DensityBoundCheck:
    """Verify half the L1 deviation of a density against the L2 bound.

    `probs` are the weights of a finite probability space and `density` a
    non-negative function with unit mean under them.
    """
    p = np.asarray(probs, dtype=np.float64)
    f = np.asarray(density, dtype=np.float64)
    if p.shape != f.shape or p.ndim != 1 or p.size == 0:
        raise DimensionMismatchError("probs and density must be equal-length vectors")
    if p.min() < 0 or abs(p.sum() - 1.0) > tol:
        raise InvalidDistributionError("probs is not a probability vector")
    if f.min() < 0 or abs(float(p @ f) - 1.0) > tol:
        raise InvalidDistributionError("density must be >= 0 with unit mean")
    dev = f - 1.0
    l1_half = 0.5 * float(p @ np.abs(dev))
    l2 = math.sqrt(float(p @ (dev * dev)))
    bound = l1_from_l2_bound(l2)
    return DensityBoundCheck(
        l1_half=l1_half, l2=l2, bound=bound, holds=l1_half <= bound + 1e-12
    )


def two_valued_extremal_density(weight_a: float, deviation_a: float):
    """Two-valued density saturating the L1-from-L2 bound.

    Takes value 1 + deviation_a on a part of weight `weight_a` and the
    mean-one complement value elsewhere.  Returns (probs, density) as
    two-entry vectors.
    """
    if not 0.0 < weight_a < 1.0:
        raise InvalidDistributionError("weight_a must be inside (0,1)")
    other = -deviation_a * weight_a / (1.0 - weight_a)
    if 1.0 + other < 0 or 1.0 + deviation_a < 0:
        raise InvalidDistributionError("deviation leaves the density cone")
    probs = np.array([weight_a, 1.0 - weight_a])
    density = np.array([1.0 + deviation_a, 1.0 + other])
    return probs, density


# ---------------------------------------------------------------------------
# block-product states
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockSpec:
    """Partition of the sites into equal blocks plus a leftover block."""

    block_size: int
    block_count: int
    leftover: int

    def __post_init__(self):
        if self.block_size < 1 or self.block_count < 1 or self.leftover < 0:
            raise ConfigError(
                f"invalid block spec ({self.block_size}, {self.block_count}, "
                f"{self.leftover})"
            )

    @property
    def n(self) -> int:
        return self.block_size * self.block_count + self.leftover

    @property
    def block_sizes(self) -> tuple:
        sizes = (self.block_size,) * self.block_count
        return sizes + ((self.leftover,) if self.leftover else ())


@dataclass(frozen=True)
class BlockProductState:
    """Product of all-equal two-point blocks, kept structural for large n.

    Every block is +-monochromatic with a fair sign, so every site bias is
    zero; the dense weight vector is only materialized on demand.
    """

    spec: BlockSpec

    @property
    def n(self) -> int:
        return self.spec.n

    def site_bias(self, site: int) -> float:
        if not 1 <= site <= self.n:
            raise DimensionMismatchError(f"site {site} out of range 1..{self.n}")
        return 0.0

    def to_pmf(self) -> Pmf:
        weights = np.array([1.0])
        for size in self.spec.block_sizes:
            block = np.zeros(1 << size)
            block[0] = 0.5
            block[-1] = 0.5
            weights = np.kron(block, weights)
        return Pmf(self.n, weights)


def block_product_pmf(spec: BlockSpec) -> BlockProductState:
    return BlockProductState(spec)


# ---------------------------------------------------------------------------
# block lower-bound experiments
# ---------------------------------------------------------------------------


def _square_tail_given_bias(block_size: int, up_prob, threshold: int):
    """P(squared block magnetization >= threshold) for i.i.d. +-1 sites.

    `up_prob` is the per-site probability of +1 (scalar or vector); the
    magnetization of B up-sites out of p is 2B - p.  The threshold is
    resolved exactly in integers, respecting the parity of p.
    """
    p = block_size
    if threshold <= 0:
        return np.ones_like(np.asarray(up_prob, dtype=np.float64))
    s = math.isqrt(threshold)
    if s * s < threshold:
        s += 1
    if (s - p) % 2 != 0:
        s += 1
    up = np.asarray(up_prob, dtype=np.float64)
    if s > p:
        out = np.zeros_like(up)
        return float(out) if out.ndim == 0 else out
    b_hi = (p + s) // 2
    b_lo = (p - s) // 2
    out = binom.sf(b_hi - 1, p, up) + binom.cdf(b_lo, p, up)
    return float(out) if out.ndim == 0 else out


def _second_moment_coeffs(p: int):
    p2 = p * (p - 1)
    p3 = p2 * (p - 2)
    p4 = p3 * (p - 3)
    return p2, p3, p4


def _fourth_moment_given_bias(p: int, q: np.ndarray) -> np.ndarray:
    """E[(sum of p i.i.d. +-1 with mean q)^4], exact."""
    v = 1.0 - q * q
    a = p * q
    central2 = p * v
    central3 = -2.0 * p * q * v
    central4 = 3.0 * p * p * v * v + p * (1.0 + 2.0 * q * q - 3.0 * q**4 - 3.0 * v * v)
    return a**4 + 6.0 * a * a * central2 + 4.0 * a * central3 + central4


@dataclass(frozen=True)
class BlockMomentMC:
    samples: int
    first_moment_mean: float
    first_moment_z: float
    second_moment_mean: float
    second_moment_z: float


@dataclass(frozen=True)
class DiscreteBlockReport:
    """Exact block-event computation certifying a distance lower bound.

    The event counts blocks whose squared magnetization reaches 20x the
    block size; it is rare at stationarity and typical after t steps, so
    1 - stationary_event - evolved_complement lower-bounds the distance.
    """

    n: int
    t: int
    spec: BlockSpec
    event_threshold: int
    stationary_block_tail: float
    stationary_event: float
    evolved_block_tail: float
    evolved_complement: float
    tv_lower_bound: float
    first_moment_formula: float
    first_moment_exact: float
    second_moment_formula: float
    second_moment_exact: float
    paley_zygmund_bound: float
    mc: Optional[BlockMomentMC]


def lowerbound_experiment_discrete(
    n: int,
    t: int,
    rng: Optional[np.random.Generator] = None,
    mc_samples: int = 0,
) -> DiscreteBlockReport:
    """Exact discrete-time block experiment with optional MC validation.

    Blocks of size 80 * 2^t start all-equal and evolve independently; the
    per-block law of the squared magnetization after t steps is the exact
    binomial mixture over the common leaf bias.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    p = 80 << t
    if p > n:
        raise ConfigError(f"block size {p} exceeds n={n}; no block fits")
    alpha = n // p
    spec = BlockSpec(block_size=p, block_count=alpha, leftover=n - alpha * p)
    threshold = 20 * p
    k_min = -(-alpha // 15)

    q_pi = float(_square_tail_given_bias(p, 0.5, threshold))
    pi_a = float(binom.sf(k_min - 1, alpha, q_pi))

    leaves = 1 << t
    counts = np.arange(leaves + 1)
    leaf_weights = binom.pmf(counts, leaves, 0.5)
    up = counts / leaves
    bias = 2.0 * up - 1.0
    q_mu = float(leaf_weights @ _square_tail_given_bias(p, up, threshold))
    mu_ac = float(binom.cdf(k_min - 1, alpha, q_mu))

    # moments of the squared magnetization under the evolved block law,
    # both from the closed-form leaf-bias moments and from the mixture
    first_formula = p * (p - 1) * 2.0 ** (-t) + p
    second_given = 4.0 * p * up * (1.0 - up) + (p * bias) ** 2
    first_exact = float(leaf_weights @ second_given)
    p2, p3, p4 = _second_moment_coeffs(p)
    bias4 = 3.0 * 4.0 ** (-t) - 2.0 * 8.0 ** (-t)
    second_formula = (
        p4 * bias4 + (6.0 * p3 + 4.0 * p2) * 2.0 ** (-t) + 3.0 * p2 + p
    )
    second_exact = float(leaf_weights @ _fourth_moment_given_bias(p, bias))

    ratio = 1.0 - threshold / first_exact
    pz = 0.0 if ratio <= 0 else ratio * ratio * first_exact**2 / second_exact

    mc = None
    if rng is not None and mc_samples > 0:
        k_draw = rng.binomial(leaves, 0.5, size=mc_samples)
        up_draw = k_draw / leaves
        b_draw = rng.binomial(p, up_draw)
        xi = (2.0 * b_draw - p) ** 2
        mean1 = float(xi.mean())
        se1 = float(xi.std(ddof=1)) / math.sqrt(mc_samples)
        xi2 = xi * xi
        mean2 = float(xi2.mean())
        se2 = float(xi2.std(ddof=1)) / math.sqrt(mc_samples)
        mc = BlockMomentMC(
            samples=mc_samples,
            first_moment_mean=mean1,
            first_moment_z=(mean1 - first_formula) / se1,
            second_moment_mean=mean2,
            second_moment_z=(mean2 - second_formula) / se2,
        )

    return DiscreteBlockReport(
        n=n,
        t=t,
        spec=spec,
        event_threshold=threshold,
        stationary_block_tail=q_pi,
        stationary_event=pi_a,
        evolved_block_tail=q_mu,
        evolved_complement=mu_ac,
        tv_lower_bound=1.0 - pi_a - mu_ac,
        first_moment_formula=first_formula,
        first_moment_exact=first_exact,
        second_moment_formula=second_formula,
        second_moment_exact=second_exact,
        paley_zygmund_bound=pz,
        mc=mc,
    )


@dataclass(frozen=True)
class ContinuousBlockReport:
    """Monte Carlo block experiment for the continuous-time dynamics.

    Per sampled tree, the block law is the exact binomial mixture over the
    tree's leaf-weight bias; the distance lower bound and its cross-check
    against the distance between the block-count laws are reported together
    with per-tree moment diagnostics.
    """

    n: int
    t: float
    spec: BlockSpec
    event_threshold: int
    trees: int
    inner_samples: int
    stationary_event: float
    evolved_complement: float
    evolved_complement_stderr: float
    tv_lower_bound: float
    block_count_tv: float
    first_moment_max_abs_z: float
    second_moment_bound_ok: bool


def lowerbound_experiment_continuous(
    n: int,
    t: float,
    m: int,
    rng: np.random.Generator,
    inner_samples: int = 2048,
) -> ContinuousBlockReport:
    if t <= 0:
        raise ValueError("t must be > 0")
    damp = max(1.0, math.log(1.0 / t))
    p = int(math.sqrt(80.0 * n) * math.exp(t / 4.0) / math.sqrt(damp))
    if p < 2:
        raise ConfigError(f"block size {p} too small at n={n}, t={t}")
    if p > n:
        raise ConfigError(f"block size {p} exceeds n={n}")
    alpha = n // p
    spec = BlockSpec(block_size=p, block_count=alpha, leftover=n - alpha * p)
    threshold = 20 * p
    k_min = -(-alpha // 15)

    q_pi = float(_square_tail_given_bias(p, 0.5, threshold))
    pi_a = float(binom.sf(k_min - 1, alpha, q_pi))

    p2, p3, p4 = _second_moment_coeffs(p)
    decay = math.exp(-t / 2.0)
    r_scale = n * decay
    block_tails = np.empty(m)
    moment_zs = np.empty(m)
    second_ok = True
    counts_grid = np.arange(alpha + 1)
    mix_pmf = np.zeros(alpha + 1)
    for i in range(m):
        tree = sample_yule(t, rng)
        w = np.ldexp(1.0, -tree.leaf_depths.astype(np.int32))
        m2 = float((w * w).sum())
        m4 = float((w**4).sum())
        martingale = math.exp(t / 2.0) * m2
        signs = rng.integers(0, 2, size=(inner_samples, w.size)) * 2 - 1
        q_draw = signs @ w
        tails = _square_tail_given_bias(p, (1.0 + q_draw) / 2.0, threshold)
        block_tails[i] = tails.mean()
        mix_pmf += binom.pmf(counts_grid, alpha, block_tails[i])

        # first-moment check: formula vs the same trees' sign-mixture
        formula = p + p2 * m2
        per_draw = p + p2 * q_draw * q_draw
        se = float(per_draw.std(ddof=1)) / math.sqrt(inner_samples)
        moment_zs[i] = 0.0 if se == 0.0 else (float(per_draw.mean()) - formula) / se
        second_formula = (
            p4 * (3.0 * m2 * m2 - 2.0 * m4) + (6.0 * p3 + 4.0 * p2) * m2
            + 3.0 * p2 + p
        )
        second_cap = 3.0 * ((p - 1) * (r_scale / alpha) * martingale + p) ** 2
        if second_formula > second_cap * (1.0 + 1e-12):
            second_ok = False
    mix_pmf /= m
    pi_pmf = binom.pmf(counts_grid, alpha, q_pi)
    block_count_tv = 0.5 * float(np.abs(mix_pmf - pi_pmf).sum())

    below = binom.cdf(k_min - 1, alpha, block_tails)
    mu_ac = float(below.mean())
    mu_se = float(below.std(ddof=1)) / math.sqrt(m)
    return ContinuousBlockReport(
        n=n,
        t=t,
        spec=spec,
        event_threshold=threshold,
        trees=m,
        inner_samples=inner_samples,
        stationary_event=pi_a,
        evolved_complement=mu_ac,
        evolved_complement_stderr=mu_se,
        tv_lower_bound=1.0 - pi_a - mu_ac,
        block_count_tv=block_count_tv,
        first_moment_max_abs_z=float(np.abs(moment_zs).max()),
        second_moment_bound_ok=second_ok,
    )


# ---------------------------------------------------------------------------
# profile drivers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProfilePoint:
    window: float
    scale: float
    tv: float
    bound_upper: Optional[float]
    bound_lower: Optional[float]


def discrete_profile(
    n: int, windows: Sequence[int], t_base: Optional[int] = None
) -> list[ProfilePoint]:
    """Exact two-point-start profile at steps t_base + window."""
    if t_base is None:
        t_base = round(math.log2(n))
    points = []
    for w in windows:
        t = t_base + w
        if t < 0:
            raise ConfigError(f"window {w} puts the step count below zero")
        scale = n * 2.0 ** (-t)
        points.append(
            ProfilePoint(
                window=float(w),
                scale=scale,
                tv=mono_mixture_tv(n, t),
                bound_upper=min(1.0, scale),
                bound_lower=None,
            )
        )
    return points


def continuous_profile(
    windows: Sequence[float],
    martingale_values: Sequence[float],
    z_max: float = 12.0,
    dz: float = 1e-3,
) -> list[ProfilePoint]:
    """Mixture-profile estimate on a window grid from one martingale batch."""
    return [
        ProfilePoint(
            window=float(w),
            scale=math.exp(-w / 2.0),
            tv=mixture_profile_tv(w, martingale_values, z_max=z_max, dz=dz),
            bound_upper=None,
            bound_lower=None,
        )
        for w in windows
    ]
