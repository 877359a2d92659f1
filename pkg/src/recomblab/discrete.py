"""Discrete-time recombination dynamics.

One step replaces the state mu by the self-collision mu∘mu, where the
collision of two measures picks a uniform random subset A of sites, draws one
parent from each measure, and splices the A-coordinates of the first onto the
complement-coordinates of the second.  In character coordinates the collision
is a subset convolution,

    (mu∘nu)^(S) = 2^{-|S|} * sum over T ⊆ S of mu^(T) * nu^(S\\T),

which is what the fast paths below compute.  The module also carries the
quenched representation of step t (a product measure conditioned on 2^t
i.i.d. leaf samples), the fragmentation process that tracks which sites still
share ancestry, the exact mixture formula for the distance to stationarity
from the two-point (monochromatic) start, and the closed-form upper bounds.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Optional

import numpy as np
from scipy.special import gammaln, logsumexp

from .cube import (
    FourierTable,
    Pmf,
    popcount_table,
    product_pmf,
    wht_forward,
    wht_inverse,
)
from .errors import (
    BudgetError,
    CapacityError,
    DimensionMismatchError,
    InvalidDistributionError,
)

# Submask-pair tables are cached dense; beyond this the ranked transform path
# takes over, and beyond that the state itself is too large to hold.
PAIR_TABLE_SITE_CAP = 14
COLLIDE_SITE_CAP = 18
DIRECT_SITE_CAP = 10

# Fraction of binomial mass allowed to be dropped by the tail truncation in
# mono_mixture_tv; the induced error on the result is of the same order.
_TRUNCATED_MASS = 1e-15

_MIXTURE_CELL_BUDGET = 1 << 31


@lru_cache(maxsize=3)
def _disjoint_pair_tables(n: int):
    """All unordered pairs {A,B} of disjoint non-both-empty submasks.

    Returns int32 arrays (union, a, b) with a|b = union, a&b = 0, a < b,
    sorted by union.  Every union S != 0 splits its 2^|S| ordered submask
    pairs into 2^{|S|-1} unordered ones; S = 0 (the single pair A=B=0) is
    excluded and handled separately by the caller.
    """
    m = 3**n
    codes = np.arange(m, dtype=np.int32)
    a = np.zeros(m, dtype=np.int32)
    b = np.zeros(m, dtype=np.int32)
    for i in range(n):
        codes, trit = np.divmod(codes, 3)
        a |= (trit == 1).astype(np.int32) << i
        b |= (trit == 2).astype(np.int32) << i
    keep = a < b
    a, b = a[keep], b[keep]
    union = a | b
    order = np.argsort(union, kind="stable")
    return union[order], a[order], b[order]


def _collide_pairs(f: np.ndarray, g: np.ndarray, n: int) -> np.ndarray:
    union, a, b = _disjoint_pair_tables(n)
    # f[a]*g[b] + f[b]*g[a] is symmetric under swapping f and g term by term,
    # so the whole path is exactly commutative in floating point.
    terms = f[a] * g[b] + f[b] * g[a]
    out = np.bincount(union, weights=terms, minlength=1 << n)
    out[0] = f[0] * g[0]
    out *= np.ldexp(1.0, -popcount_table(n).astype(np.int32))
    return out


def _rank_slices(values: np.ndarray, pc: np.ndarray, n: int) -> np.ndarray:
    """Split by popcount rank and apply the sum-over-submasks transform."""
    size = values.shape[0]
    sliced = np.zeros((n + 1, size))
    sliced[pc, np.arange(size)] = values
    for i in range(n):
        h = 1 << i
        blk = sliced.reshape(n + 1, -1, 2, h)
        blk[:, :, 1, :] += blk[:, :, 0, :]
    return sliced


def _collide_ranked(f: np.ndarray, g: np.ndarray, n: int) -> np.ndarray:
    """Subset convolution through rank-split zeta/Moebius transforms.

    O(2^n n^2) instead of O(3^n); used where the pair tables would not fit.
    The rank products are accumulated symmetrically so this path is exactly
    commutative as well.
    """
    size = 1 << n
    pc = popcount_table(n).astype(np.int64)
    fz = _rank_slices(f, pc, n)
    gz = _rank_slices(g, pc, n)
    conv = np.zeros((n + 1, size))
    for r in range(n + 1):
        acc = conv[r]
        for i in range(r // 2 + 1):
            j = r - i
            if i == j:
                acc += fz[i] * gz[i]
            else:
                acc += fz[i] * gz[j] + fz[j] * gz[i]
    for i in range(n):
        h = 1 << i
        blk = conv.reshape(n + 1, -1, 2, h)
        blk[:, :, 1, :] -= blk[:, :, 0, :]
    out = conv[pc, np.arange(size)]
    out *= np.ldexp(1.0, -pc.astype(np.int32))
    out[0] = f[0] * g[0]
    return out


def collide_coeffs(
    f: np.ndarray, g: np.ndarray, n: int, method: str = "auto"
) -> np.ndarray:
    """Collision product on raw coefficient vectors (no validation)."""
    if method == "auto":
        method = "pairs" if n <= PAIR_TABLE_SITE_CAP else "ranked"
    if method == "pairs":
        if n > PAIR_TABLE_SITE_CAP:
            raise CapacityError(
                f"pair tables are capped at n={PAIR_TABLE_SITE_CAP}, got n={n}"
            )
        return _collide_pairs(f, g, n)
    if method == "ranked":
        if n > COLLIDE_SITE_CAP:
            raise CapacityError(
                f"collision is capped at n={COLLIDE_SITE_CAP}, got n={n}"
            )
        return _collide_ranked(f, g, n)
    raise ValueError(f"unknown collision method {method!r}")


def collide(a: FourierTable, b: FourierTable, method: str = "auto") -> FourierTable:
    """Collision product of two measures given in character coordinates.

    Exactly commutative: collide(a, b) and collide(b, a) agree bit for bit.
    """
    if a.n != b.n:
        raise DimensionMismatchError("operands live on different cubes")
    return FourierTable(a.n, collide_coeffs(a.coeffs, b.coeffs, a.n, method))


def collide_pmf(mu: Pmf, nu: Pmf) -> Pmf:
    """Collision product in the weight representation (transform round trip)."""
    return wht_inverse(collide(wht_forward(mu), wht_forward(nu)))


def collide_direct(mu: Pmf, nu: Pmf) -> Pmf:
    """Definitional oracle: average of marginal splices over all 2^n subsets.

    Costs about 4^n, so it is capped at small n; it exists to cross-check the
    transform-space implementation, not to be fast.
    """
    if mu.n != nu.n:
        raise DimensionMismatchError("operands live on different cubes")
    n = mu.n
    if n > DIRECT_SITE_CAP:
        raise CapacityError(
            f"direct collision is capped at n={DIRECT_SITE_CAP}, got n={n}"
        )
    shape = (2,) * n
    mu_t = mu.weights.reshape(shape)
    nu_t = nu.weights.reshape(shape)
    acc = np.zeros(shape)
    for subset in range(1 << n):
        # site k+1 lives on axis n-1-k of the reshaped tensor
        in_a = tuple(n - 1 - k for k in range(n) if (subset >> k) & 1)
        out_a = tuple(ax for ax in range(n) if ax not in in_a)
        mu_marg = mu_t.sum(axis=out_a, keepdims=True) if out_a else mu_t
        nu_marg = nu_t.sum(axis=in_a, keepdims=True) if in_a else nu_t
        acc += mu_marg * nu_marg
    return Pmf(n, (acc / (1 << n)).reshape(-1))


def evolve_discrete(mu: Pmf, steps: int) -> Pmf:
    """State after `steps` rounds of self-collision."""
    if steps < 0:
        raise ValueError("steps must be >= 0")
    coeffs = wht_forward(mu).coeffs
    for _ in range(steps):
        coeffs = collide_coeffs(coeffs, coeffs, mu.n)
    return wht_inverse(FourierTable(mu.n, coeffs))


def discrete_trajectory(mu: Pmf, steps: int) -> Iterator[Pmf]:
    """Yield the states at times 0, 1, ..., steps."""
    if steps < 0:
        raise ValueError("steps must be >= 0")
    coeffs = wht_forward(mu).coeffs
    yield mu
    for _ in range(steps):
        coeffs = collide_coeffs(coeffs, coeffs, mu.n)
        yield wht_inverse(FourierTable(mu.n, coeffs))


# ---------------------------------------------------------------------------
# quenched representation
# ---------------------------------------------------------------------------

LEAF_CELL_CAP = 1 << 27


@dataclass(frozen=True)
class QuenchedEnvironment:
    """Leaf environment behind one sample of the quenched representation.

    `leaf_spins` holds `leaf_count` i.i.d. draws from the initial state, one
    row per leaf, entries +-1.  `biases` are the per-site leaf averages; the
    quenched measure is the product measure with exactly these biases, and
    averaging it over environments reproduces the evolved state.
    """

    n: int
    leaf_count: int
    leaf_spins: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        spins = np.asarray(self.leaf_spins, dtype=np.int8)
        if spins.shape != (self.leaf_count, self.n):
            raise DimensionMismatchError(
                f"leaf_spins shape {spins.shape} != ({self.leaf_count}, {self.n})"
            )
        if not np.all(np.abs(spins) == 1):
            raise InvalidDistributionError("leaf spins must be +-1")
        q = np.asarray(self.biases, dtype=np.float64)
        expect = spins.sum(axis=0, dtype=np.int64) / self.leaf_count
        if q.shape != (self.n,) or not np.array_equal(q, expect):
            raise InvalidDistributionError("biases must equal the leaf averages")
        spins.flags.writeable = False
        q.flags.writeable = False
        object.__setattr__(self, "leaf_spins", spins)
        object.__setattr__(self, "biases", q)

    @classmethod
    def from_leaf_spins(cls, spins: np.ndarray) -> "QuenchedEnvironment":
        spins = np.asarray(spins, dtype=np.int8)
        count, n = spins.shape
        biases = spins.sum(axis=0, dtype=np.int64) / count
        return cls(n=n, leaf_count=count, leaf_spins=spins, biases=biases)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["leaf", "site", "spin"])
            for leaf in range(self.leaf_count):
                row = self.leaf_spins[leaf]
                for site in range(self.n):
                    writer.writerow([leaf, site + 1, int(row[site])])


def sample_quenched(
    mu: Pmf, t: int, rng: np.random.Generator
) -> QuenchedEnvironment:
    """Draw the 2^t-leaf environment for the t-step quenched representation."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if t > 30:
        raise CapacityError(f"leaf count 2^{t} exceeds the sampler cap (t <= 30)")
    count = 1 << t
    if count * mu.n > LEAF_CELL_CAP:
        raise CapacityError(
            f"environment of {count}x{mu.n} spins exceeds the memory cap",
            leaf_count=count,
            sites=mu.n,
        )
    cdf = np.cumsum(mu.weights)
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, rng.random(count), side="right")
    spins = (((idx[:, None] >> np.arange(mu.n)) & 1) * 2 - 1).astype(np.int8)
    return QuenchedEnvironment.from_leaf_spins(spins)


def quenched_measure(env: QuenchedEnvironment) -> Pmf:
    """Product measure with the environment's site biases."""
    return product_pmf(env.biases)


# ---------------------------------------------------------------------------
# fragmentation process
# ---------------------------------------------------------------------------

FRAGMENTATION_STEP_CAP = 62


@dataclass(frozen=True)
class FragmentationState:
    """Ancestral-block labels after t splitting rounds.

    Sites with equal labels still share a block.  Labels are the site's
    subset-membership bits accumulated over rounds, so they live in [0, 2^t).
    """

    t: int
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.uint64)
        if labels.ndim != 1 or labels.size < 1:
            raise DimensionMismatchError("labels must be a non-empty vector")
        if self.t < 0 or self.t > FRAGMENTATION_STEP_CAP:
            raise CapacityError(
                f"step counter {self.t} outside [0, {FRAGMENTATION_STEP_CAP}]"
            )
        if labels.max(initial=0) >= (1 << self.t):
            raise InvalidDistributionError("label out of range for step counter")
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.labels.size

    def fully_fragmented(self) -> bool:
        return np.unique(self.labels).size == self.labels.size


def initial_fragmentation(n: int) -> FragmentationState:
    return FragmentationState(0, np.zeros(n, dtype=np.uint64))


def fragmentation_step(
    state: FragmentationState, rng: np.random.Generator
) -> FragmentationState:
    """Split every block by one uniform random subset of the sites.

    Membership in a uniform subset is an independent fair bit per site, so
    appending one fair bit to every label realizes simultaneous independent
    splits of all blocks.
    """
    if state.t >= FRAGMENTATION_STEP_CAP:
        raise CapacityError(
            f"label words are capped at {FRAGMENTATION_STEP_CAP} splitting rounds",
            t=state.t,
        )
    bits = rng.integers(0, 2, size=state.n, dtype=np.uint64)
    return FragmentationState(state.t + 1, (state.labels << np.uint64(1)) | bits)


def fragmentation_time(n: int, rng: np.random.Generator) -> int:
    """First round after which every site sits in its own block."""
    state = initial_fragmentation(n)
    while not state.fully_fragmented():
        state = fragmentation_step(state, rng)
    return state.t


def pair_separation_bound(n: int, t: int) -> float:
    """Union bound on P(some pair still shares a block after t rounds)."""
    return 0.5 * n * (n - 1) * 2.0 ** (-t)


# ---------------------------------------------------------------------------
# exact distance from the two-point start
# ---------------------------------------------------------------------------


def mono_mixture_tv(n: int, t: int) -> float:
    """Exact distance to stationarity after t steps from the two-point start.

    From the all-equal two-point initial state, the t-step state is a mixture
    over K ~ Binomial(2^t, 1/2) of product measures with common site bias
    (2K - 2^t)/2^t, and its stationary product is uniform.  The distance is

        1/2 * sum_m C(n,m) | E_K[(K/N)^m ((N-K)/N)^(n-m)] - 2^-n |,  N = 2^t,

    evaluated in log space with the negligible binomial tails dropped.
    """
    if n < 1:
        raise DimensionMismatchError(f"need at least one site, got n={n}")
    if t < 0:
        raise ValueError("t must be >= 0")
    if t > 60:
        raise BudgetError(f"leaf count 2^{t} is out of budget")
    leaves = 1 << t
    half_width = math.sqrt(0.5 * leaves * math.log(2.0 / _TRUNCATED_MASS))
    klo = max(1, math.ceil(leaves / 2 - half_width))
    khi = min(leaves - 1, math.floor(leaves / 2 + half_width))
    kept = max(0, khi - klo + 1)
    if (n + 1) * kept > _MIXTURE_CELL_BUDGET:
        raise BudgetError(
            f"mixture evaluation needs {(n + 1) * kept:.2e} cells, over budget",
            sites=n,
            kept_terms=kept,
        )
    log_half = math.log(2.0)
    target = -n * log_half

    if kept > 0:
        k = np.arange(klo, khi + 1, dtype=np.float64)
        log_weight = (
            gammaln(leaves + 1)
            - gammaln(k + 1)
            - gammaln(leaves - k + 1)
            - leaves * log_half
        )
        log_up = np.log(k / leaves)
        log_down = np.log((leaves - k) / leaves)
        log_mean = np.empty(n + 1)
        chunk = max(1, int(3e7) // kept)
        for start in range(0, n + 1, chunk):
            m = np.arange(start, min(start + chunk, n + 1), dtype=np.float64)
            mat = log_weight[None, :] + m[:, None] * log_up[None, :]
            mat += (n - m)[:, None] * log_down[None, :]
            log_mean[start : start + m.size] = logsumexp(mat, axis=1)
    else:
        log_mean = np.full(n + 1, -np.inf)

    # the all-minus (k=0) and all-plus (k=N) leaves contribute only to the
    # extreme occupation counts m=0 and m=n
    log_mean[0] = np.logaddexp(log_mean[0], -leaves * log_half)
    log_mean[n] = np.logaddexp(log_mean[n], -leaves * log_half)

    log_choose = (
        gammaln(n + 1)
        - gammaln(np.arange(n + 1) + 1.0)
        - gammaln(n - np.arange(n + 1) + 1.0)
    )
    terms = []
    for m in range(n + 1):
        la = log_mean[m]
        if la == target:
            continue
        hi, lo = (la, target) if la > target else (target, la)
        gap = lo - hi
        if gap > -log_half:
            log_abs = hi + math.log(-math.expm1(gap))
        else:
            log_abs = hi + math.log1p(-math.exp(gap))
        terms.append(math.exp(log_choose[m] + log_abs))
    return 0.5 * math.fsum(terms)


# ---------------------------------------------------------------------------
# tilt statistics of a quenched product measure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TiltStatistics:
    """Exponents of a common-bias product measure against the uniform one.

    With common site bias q, the density at configuration sigma is
    exp(magnetization_coeff * m + log_normalizer) where m = (sum of spins)
    divided by sqrt(n).  Degenerate means |q| = 1: the measure is a point
    mass and both exponents are reported as nan.
    """

    magnetization_coeff: float
    log_normalizer: float
    degenerate: bool


def tilt_statistics(mean_bias: float, n: int) -> TiltStatistics:
    if n < 1:
        raise DimensionMismatchError(f"need at least one site, got n={n}")
    if not -1.0 <= mean_bias <= 1.0:
        raise InvalidDistributionError(f"bias {mean_bias!r} outside [-1, 1]")
    if abs(mean_bias) == 1.0:
        return TiltStatistics(math.nan, math.nan, True)
    coeff = math.sqrt(n) * math.atanh(mean_bias)
    log_norm = 0.5 * n * math.log1p(-mean_bias * mean_bias)
    return TiltStatistics(coeff, log_norm, False)


# ---------------------------------------------------------------------------
# closed-form upper bounds
# ---------------------------------------------------------------------------

PLATEAU_SCALE_MIN = math.log(2.0) / 2.0


@dataclass(frozen=True)
class DiscreteUpperBounds:
    """Upper bounds on the distance to stationarity after t steps.

    `scale` is the cutoff-window coordinate s = n * 2^-t.  The two union
    bounds hold for every balanced initial state.  `plateau_bound` is the
    near-saturation bound 1 - exp(-2s)/2, which is only valid for
    s >= ln(2)/2 and is None below that threshold.
    """

    scale: float
    site_union_bound: float
    pair_union_bound: float
    plateau_bound: Optional[float]

    @property
    def plateau_applicable(self) -> bool:
        return self.plateau_bound is not None


def discrete_upper_bounds(n: int, t: int) -> DiscreteUpperBounds:
    if n < 1:
        raise DimensionMismatchError(f"need at least one site, got n={n}")
    if t < 0:
        raise ValueError("t must be >= 0")
    scale = n * 2.0 ** (-t)
    plateau = 1.0 - math.exp(-2.0 * scale) / 2.0 if scale >= PLATEAU_SCALE_MIN else None
    return DiscreteUpperBounds(
        scale=scale,
        site_union_bound=scale,
        pair_union_bound=pair_separation_bound(n, t),
        plateau_bound=plateau,
    )
