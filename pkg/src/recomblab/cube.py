"""Dense probability measures on the spin cube {-1,+1}^n and their Walsh transform.

Configurations are encoded as integers: bit i of the index is set exactly when
site i+1 carries spin +1.  A measure is a length-2^n weight vector (`Pmf`);
its character expansion is a length-2^n coefficient vector (`FourierTable`)
indexed by subsets of sites, also as bitmasks.  With chi_S(sigma) equal to the
product of the spins on S, the two are linked by

    coeffs[S] = sum_sigma weights[sigma] * chi_S(sigma)
    weights[sigma] = 2^-n * sum_S coeffs[S] * chi_S(sigma)

Both directions are computed with an in-place butterfly in O(n 2^n).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    CapacityError,
    DimensionMismatchError,
    InvalidDistributionError,
)

DENSE_SITE_CAP = 24
WEIGHT_SUM_TOL = 1e-12
NEGATIVE_WEIGHT_TOL = -1e-9


def _check_sites(n: int) -> None:
    if not isinstance(n, (int, np.integer)):
        raise DimensionMismatchError(f"site count must be an integer, got {n!r}")
    if n < 1:
        raise DimensionMismatchError(f"need at least one site, got n={n}")
    if n > DENSE_SITE_CAP:
        raise CapacityError(
            f"dense mode is capped at n={DENSE_SITE_CAP} sites, got n={n}"
        )


def _as_vector(values, n: int) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != (1 << n):
        raise DimensionMismatchError(
            f"expected a vector of length 2^{n}={1 << n}, got shape {arr.shape}"
        )
    return arr


@dataclass(frozen=True)
class SpinConfig:
    """A single configuration of n spins, packed into the bits of an int."""

    bits: int
    n: int

    def __post_init__(self):
        _check_sites(self.n)
        if not 0 <= self.bits < (1 << self.n):
            raise DimensionMismatchError(
                f"bits={self.bits} out of range for n={self.n}"
            )

    def spin(self, site: int) -> int:
        """Spin (+1 or -1) at a 1-based site index."""
        if not 1 <= site <= self.n:
            raise DimensionMismatchError(f"site {site} out of range 1..{self.n}")
        return 1 if (self.bits >> (site - 1)) & 1 else -1

    def as_vector(self) -> np.ndarray:
        bits = (self.bits >> np.arange(self.n)) & 1
        return (2 * bits - 1).astype(np.int8)


@dataclass(frozen=True)
class Pmf:
    """Probability weights over all 2^n configurations (immutable)."""

    n: int
    weights: np.ndarray

    def __post_init__(self):
        _check_sites(self.n)
        arr = _as_vector(self.weights, self.n)
        lo = arr.min()
        if lo < NEGATIVE_WEIGHT_TOL:
            raise InvalidDistributionError(
                f"negative weight {lo:.3e} below tolerance {NEGATIVE_WEIGHT_TOL}"
            )
        if lo < 0.0:
            # round-off from a transform; clip, the mass involved is <= 1e-9
            arr = np.where(arr < 0.0, 0.0, arr)
        total = float(arr.sum())
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise InvalidDistributionError(
                f"weights sum to {total!r}, outside 1 +/- {WEIGHT_SUM_TOL}"
            )
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "weights", arr)

    def prob(self, config: SpinConfig) -> float:
        if config.n != self.n:
            raise DimensionMismatchError("configuration lives on a different cube")
        return float(self.weights[config.bits])


@dataclass(frozen=True)
class FourierTable:
    """Character coefficients of a signed measure, indexed by subset bitmask."""

    n: int
    coeffs: np.ndarray

    def __post_init__(self):
        _check_sites(self.n)
        arr = _as_vector(self.coeffs, self.n).copy()
        if not np.isfinite(arr).all():
            raise InvalidDistributionError("non-finite coefficient")
        if abs(arr[0] - 1.0) > 1e-9:
            raise InvalidDistributionError(
                f"empty-set coefficient must be 1, got {arr[0]!r}"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "coeffs", arr)

    def singleton(self, site: int) -> float:
        """Coefficient of the single-site character, i.e. the site bias."""
        if not 1 <= site <= self.n:
            raise DimensionMismatchError(f"site {site} out of range 1..{self.n}")
        return float(self.coeffs[1 << (site - 1)])


def _butterfly_forward(values: np.ndarray) -> np.ndarray:
    """Per site: (w_minus, w_plus) -> (w_minus + w_plus, w_plus - w_minus)."""
    out = values.astype(np.float64).copy()
    size = out.shape[0]
    h = 1
    while h < size:
        blk = out.reshape(-1, 2, h)
        lo = blk[:, 0, :].copy()
        blk[:, 0, :] += blk[:, 1, :]
        blk[:, 1, :] -= lo
        h *= 2
    return out


def _butterfly_inverse(values: np.ndarray) -> np.ndarray:
    """Inverse of the forward butterfly, without the final 2^-n scaling."""
    out = values.astype(np.float64).copy()
    size = out.shape[0]
    h = 1
    while h < size:
        blk = out.reshape(-1, 2, h)
        lo = blk[:, 0, :].copy()
        blk[:, 0, :] -= blk[:, 1, :]
        blk[:, 1, :] += lo
        h *= 2
    return out


def wht_forward(pmf: Pmf) -> FourierTable:
    """Character coefficients of a pmf.

    The empty-set coefficient is the total mass, identically 1 for any pmf,
    and is pinned to exactly 1.0 so it never carries the round-off of the
    weight sum into downstream products.
    """
    coeffs = _butterfly_forward(pmf.weights)
    coeffs[0] = 1.0
    return FourierTable(pmf.n, coeffs)


def wht_inverse(table: FourierTable) -> Pmf:
    """Reconstruct the weight vector from character coefficients.

    The weights sum to the empty-set coefficient up to round-off, so the
    vector is renormalized by its computed sum as long as that sum stays
    within the coefficient gate (1e-9); a larger deviation raises.  Round-off
    may also leave weights slightly negative; anything below -1e-9 is a
    genuine invalidity and raises, smaller dips are clipped by `Pmf`.
    """
    raw = _butterfly_inverse(table.coeffs) / float(1 << table.n)
    total = float(raw.sum())
    if not abs(total - 1.0) <= 1e-9:
        raise InvalidDistributionError(
            f"reconstructed weights sum to {total!r}, outside 1 +/- 1e-9"
        )
    return Pmf(table.n, raw / total)


def tv_distance(a: Pmf, b: Pmf) -> float:
    """Total variation distance, half the L1 distance between weight vectors."""
    if a.n != b.n:
        raise DimensionMismatchError("measures live on different cubes")
    return 0.5 * float(np.abs(a.weights - b.weights).sum())


def marginal_bias(pmf: Pmf, site: int) -> float:
    """Expected spin at a 1-based site."""
    if not 1 <= site <= pmf.n:
        raise DimensionMismatchError(f"site {site} out of range 1..{pmf.n}")
    h = 1 << (site - 1)
    blk = pmf.weights.reshape(-1, 2, h)
    return float(blk[:, 1, :].sum() - blk[:, 0, :].sum())


def all_biases(pmf: Pmf) -> np.ndarray:
    return np.array([marginal_bias(pmf, i) for i in range(1, pmf.n + 1)])


def is_balanced(pmf: Pmf, tol: float = 1e-12) -> bool:
    """True when every site bias vanishes to within ``tol``."""
    return bool(np.all(np.abs(all_biases(pmf)) <= tol))


def product_pmf(biases) -> Pmf:
    """Product measure with the given per-site biases (site i drawn with
    mean ``biases[i-1]``, independently)."""
    b = np.asarray(biases, dtype=np.float64)
    if b.ndim != 1 or b.size < 1:
        raise DimensionMismatchError("biases must be a non-empty vector")
    if np.abs(b).max() > 1.0 + 1e-12:
        raise InvalidDistributionError("biases must lie in [-1, 1]")
    b = np.clip(b, -1.0, 1.0)
    _check_sites(b.size)
    weights = np.array([1.0])
    for bias in b:
        factor = np.array([(1.0 - bias) / 2.0, (1.0 + bias) / 2.0])
        weights = np.kron(factor, weights)
    return Pmf(b.size, weights)


def product_fourier(biases) -> FourierTable:
    """Character table of the product measure: coeffs[S] = prod of biases on S.

    Built by dynamic programming over the lowest set bit, so the singleton
    coefficients reproduce the inputs bit-for-bit.
    """
    b = np.asarray(biases, dtype=np.float64)
    _check_sites(b.size)
    n = b.size
    coeffs = np.empty(1 << n)
    coeffs[0] = 1.0
    for s in range(1, 1 << n):
        low = s & (-s)
        coeffs[s] = coeffs[s ^ low] * b[low.bit_length() - 1]
    return FourierTable(n, coeffs)


def stationary_product(pmf: Pmf) -> Pmf:
    """Product measure sharing the pmf's site biases (its dynamics fixed point)."""
    return product_pmf(all_biases(pmf))


def stationary_product_fourier(pmf: Pmf) -> FourierTable:
    return product_fourier(all_biases(pmf))


def uniform_pmf(n: int) -> Pmf:
    _check_sites(n)
    return Pmf(n, np.full(1 << n, 1.0 / (1 << n)))


def point_mass(n: int, bits: int) -> Pmf:
    _check_sites(n)
    if not 0 <= bits < (1 << n):
        raise DimensionMismatchError(f"bits={bits} out of range for n={n}")
    w = np.zeros(1 << n)
    w[bits] = 1.0
    return Pmf(n, w)


def monochromatic_pmf(n: int) -> Pmf:
    """Equal mixture of the all-plus and all-minus configurations."""
    _check_sites(n)
    w = np.zeros(1 << n)
    w[0] = 0.5
    w[(1 << n) - 1] = 0.5
    return Pmf(n, w)


def random_pmf(n: int, rng: np.random.Generator) -> Pmf:
    """Random strictly positive measure (normalized exponential weights)."""
    _check_sites(n)
    raw = rng.exponential(size=1 << n) + 1e-3
    return Pmf(n, raw / raw.sum())


def random_balanced_pmf(n: int, rng: np.random.Generator) -> Pmf:
    """Random strictly positive measure symmetrised under the global spin flip,
    hence with every site bias equal to zero."""
    _check_sites(n)
    raw = rng.exponential(size=1 << n) + 1e-3
    raw /= raw.sum()
    flipped = raw[::-1]  # index -> complement is exactly the reversal
    return Pmf(n, (raw + flipped) / 2.0)


@lru_cache(maxsize=32)
def popcount_table(n: int) -> np.ndarray:
    """Number of set bits for every index below 2^n (read-only)."""
    idx = np.arange(1 << n, dtype=np.int64)
    counts = np.zeros(1 << n, dtype=np.int8)
    while idx.any():
        counts += (idx & 1).astype(np.int8)
        idx >>= 1
    counts.flags.writeable = False
    return counts


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

_KINDS = {"pmf", "fourier"}


def values_to_csv(path, values: np.ndarray) -> None:
    """Write a dense vector as ``index,value`` rows with deterministic bytes."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "value"])
        for i, v in enumerate(values):
            writer.writerow([i, repr(float(v))])


def values_from_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["index", "value"]:
            raise InvalidDistributionError(f"{path}: expected header index,value")
        rows = list(reader)
    values = np.empty(len(rows))
    for expect, row in enumerate(rows):
        if len(row) != 2 or int(row[0]) != expect:
            raise InvalidDistributionError(f"{path}: bad row {row!r}")
        values[expect] = float(row[1])
    if values.size == 0 or values.size & (values.size - 1):
        raise InvalidDistributionError(f"{path}: row count {values.size} is not 2^n")
    return values


def pmf_to_csv(pmf: Pmf, path) -> None:
    values_to_csv(path, pmf.weights)


def pmf_from_csv(path) -> Pmf:
    values = values_from_csv(path)
    return Pmf(values.size.bit_length() - 1, values)


def fourier_to_csv(table: FourierTable, path) -> None:
    values_to_csv(path, table.coeffs)


def fourier_from_csv(path) -> FourierTable:
    values = values_from_csv(path)
    return FourierTable(values.size.bit_length() - 1, values)


def to_json_dict(obj) -> dict:
    if isinstance(obj, Pmf):
        return {"n": obj.n, "kind": "pmf", "values": [float(v) for v in obj.weights]}
    if isinstance(obj, FourierTable):
        return {
            "n": obj.n,
            "kind": "fourier",
            "values": [float(v) for v in obj.coeffs],
        }
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def from_json_dict(doc: dict):
    kind = doc.get("kind")
    if kind not in _KINDS:
        raise InvalidDistributionError(f"unknown kind {kind!r}")
    n = int(doc["n"])
    values = np.asarray(doc["values"], dtype=np.float64)
    if values.shape != (1 << n,):
        raise InvalidDistributionError("values length does not match n")
    return Pmf(n, values) if kind == "pmf" else FourierTable(n, values)


def save_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_json_dict(obj), fh)
        fh.write("\n")


def load_json(path):
    with open(path) as fh:
        return from_json_dict(json.load(fh))
