"""Constructive checks of the multiset results behind multiple aggregators.

* Recovering a real multiset of known size ``n`` from its mean and
  normalised central moments ``M_2..M_n`` (power sums -> Newton's identities
  -> monic polynomial -> roots).
* The scaled-mean injection on bounded multisets over a countable set, with
  a decoder that reads multiplicities back out of base-``N`` digits.
* Exhaustive collision search for finite aggregator sets.

All statistics here use exact moments (no stabilising epsilon).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .aggregation import aggregate

MAX_RECOVERY_SIZE = 8


class RecoveryError(ArithmeticError):
    pass


# -- moments and recovery ----------------------------------------------------


def normalized_moments(values: Sequence[float], n_max: int | None = None) -> tuple[float, list[float]]:
    """Mean and ``M_k = sign(m_k) |m_k|^(1/k)`` for k = 2..n_max (default len(values))."""
    x = np.asarray(values, dtype=np.float64)
    n_max = len(x) if n_max is None else n_max
    mu = float(x.mean())
    r = x - mu
    out = []
    for k in range(2, n_max + 1):
        m = float(np.mean(r**k))
        out.append(float(np.sign(m) * abs(m) ** (1.0 / k)))
    return mu, out


def elementary_symmetric(power_sums: Sequence[float]) -> list[float]:
    """``e_1..e_n`` from ``p_1..p_n`` by Newton's identities."""
    p = [0.0] + list(power_sums)
    e = [1.0]
    for k in range(1, len(p)):
        acc = 0.0
        for j in range(1, k + 1):
            acc += (-1) ** (j - 1) * e[k - j] * p[j]
        e.append(acc / k)
    return e[1:]


def monic_coefficients(e: Sequence[float]) -> np.ndarray:
    """Coefficients of ``prod (x - r_i)``, highest degree first, via Vieta."""
    return np.array([1.0] + [(-1) ** k * ek for k, ek in enumerate(e, start=1)])


def _horner(c: np.ndarray, z):
    p = 0.0 * z + c[0]
    dp = 0.0 * z
    for a in c[1:]:
        dp = dp * z + p
        p = p * z + a
    return p, dp


def polynomial_roots(coeffs: Sequence[float], max_iter: int = 500) -> np.ndarray:
    """All complex roots of a polynomial (highest degree first) by Aberth-Ehrlich iteration."""
    c = np.asarray(coeffs, dtype=np.float64)
    c = c / c[0]
    n = len(c) - 1
    if n == 0:
        return np.zeros(0, dtype=complex)
    if n == 1:
        return np.array([-c[1]], dtype=complex)
    radius = 1.0 + np.max(np.abs(c[1:]))
    # start points on a circle, rotated off the real axis
    z = radius * 0.5 * np.exp(1j * (2 * np.pi * np.arange(n) / n + 0.4))
    for _ in range(max_iter):
        p, dp = _horner(c, z)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(p == 0, 0.0, p / dp)
            diff = z[:, None] - z[None, :]
            np.fill_diagonal(diff, 1.0)
            inv = 1.0 / diff
            np.fill_diagonal(inv, 0.0)
            step = ratio / (1.0 - ratio * inv.sum(axis=1))
        step = np.where(np.isfinite(step), step, 0.0)
        z = z - step
        if np.max(np.abs(step)) <= 1e-15 * max(1.0, np.max(np.abs(z))):
            break
    return z


def _polish_real(c: np.ndarray, r: float, steps: int = 8) -> float:
    for _ in range(steps):
        p, dp = _horner(c, r)
        if dp == 0 or p == 0:
            break
        nxt = r - p / dp
        if abs(_horner(c, nxt)[0]) >= abs(p):
            break
        r = nxt
    return r


def recover_from_moments(mu: float, moments: Sequence[float], n: int, tol: float = 1e-8) -> np.ndarray:
    """Sorted multiset of size ``n`` with mean ``mu`` and moments ``M_2..M_n``."""
    if n < 1:
        raise ValueError("multiset size must be >= 1")
    if n > MAX_RECOVERY_SIZE:
        raise ValueError(f"recovery is limited to n <= {MAX_RECOVERY_SIZE} (ill-conditioned beyond)")
    if len(moments) != n - 1:
        raise ValueError(f"expected {n - 1} moments (M_2..M_n), got {len(moments)}")
    p = [0.0] + [n * float(m) ** k for k, m in enumerate(moments, start=2)]
    coeffs = monic_coefficients(elementary_symmetric(p))
    roots = polynomial_roots(coeffs)
    real = np.sort(np.array([_polish_real(coeffs, float(z.real)) for z in roots]))
    resid = np.abs(_horner(coeffs, real)[0])
    if np.any(resid > tol):
        raise RecoveryError(f"root residual {resid.max():.3g} exceeds {tol}")
    return real + mu


# -- scaled mean on countable multisets --------------------------------------


def enumerate_multisets(values: Iterable, sizes: Iterable[int]) -> list[tuple]:
    """All multisets (as sorted tuples) of the given sizes, ordered by size then lexicographically."""
    vals = sorted(set(values))
    return [m for s in sizes for m in itertools.combinations_with_replacement(vals, s)]


@dataclass
class ScaledMeanCode:
    """``h(X) = s(|X|) * mean(f(X))`` with ``f(x) = base^-Z(x) + K`` and ``s(i) = i``."""

    rank: dict        # Z: feature -> 1..|features|
    base: int
    offset: float     # K
    max_size: int

    @classmethod
    def build(cls, features: Iterable, max_size: int) -> "ScaledMeanCode":
        feats = sorted(set(features))
        rank = {x: i + 1 for i, x in enumerate(feats)}
        base = max(max_size, len(feats)) + 2
        # s(i) = i over sizes 1..base: smallest ratio between distinct values is base/(base-1)
        gamma = base / (base - 1)
        offset = float(np.floor(1.0 / (gamma - 1.0)) + 1.0)
        return cls(rank, base, offset, max_size)

    def f(self, x) -> float:
        return self.base ** -self.rank[x] + self.offset

    def h(self, multiset: Sequence) -> float:
        return len(multiset) * float(np.mean([self.f(x) for x in multiset]))

    def decode(self, value: float) -> tuple:
        size = None
        for s in range(1, self.max_size + 1):
            if s * self.offset - 1e-9 <= value <= s * (self.offset + 1) + 1e-9:
                size = s
                break
        if size is None:
            raise ValueError(f"{value} is not an encoded multiset")
        residual = value - self.offset * size
        top = max(self.rank.values())
        digits = int(round(residual * self.base**top))
        out = []
        for x, z in sorted(self.rank.items(), key=lambda kv: kv[1]):
            count = (digits // self.base ** (top - z)) % self.base
            out.extend([x] * count)
        return tuple(sorted(out))


@dataclass
class InjectivityReport:
    injective: bool
    witness: tuple | None
    decoded: bool | None
    num_multisets: int

    @property
    def passed(self) -> bool:
        return self.injective and self.decoded is not False


def _first_collision(items: list[tuple], values: list, tol: float) -> tuple | None:
    vals = np.asarray(values, dtype=np.float64).reshape(len(items), -1)
    for i in range(len(items)):
        close = np.all(np.abs(vals[i + 1:] - vals[i]) <= tol, axis=1)
        hit = np.flatnonzero(close)
        if hit.size:
            return items[i], items[i + 1 + hit[0]]
    return None


def injective_scaled_mean_check(feature_set: Iterable, max_size: int, aggregator: str = "scaled_mean",
                                tol: float = 1e-12) -> InjectivityReport:
    """Enumerate every multiset of size 1..max_size and test the aggregator for collisions.

    ``aggregator`` is ``"scaled_mean"`` (the injective construction, also
    decoded back), ``"mean"`` or ``"sum"`` (plain values).
    """
    feats = sorted(set(feature_set))
    items = enumerate_multisets(feats, range(1, max_size + 1))
    decoded = None
    if aggregator == "scaled_mean":
        code = ScaledMeanCode.build(feats, max_size)
        values = [code.h(m) for m in items]
        decoded = all(code.decode(v) == m for v, m in zip(values, items))
    elif aggregator == "mean":
        values = [float(np.mean(m)) for m in items]
    elif aggregator == "sum":
        values = [float(np.sum(m)) for m in items]
    else:
        raise ValueError(f"unknown aggregator {aggregator!r}")
    witness = _first_collision(items, values, tol)
    return InjectivityReport(witness is None, witness, decoded, len(items))


# -- exhaustive collision search ---------------------------------------------


def _features(agg_set: Sequence[str], items: list[tuple]) -> np.ndarray:
    out = np.empty((len(items), len(agg_set)))
    for i, m in enumerate(items):
        arr = np.asarray(m, dtype=np.float64)
        for j, a in enumerate(agg_set):
            if a == "sum":
                out[i, j] = arr.sum()
            elif a.startswith("order"):
                out[i, j] = np.sort(arr)[int(a[5:]) - 1]
            else:
                out[i, j] = aggregate(a, arr, eps=0.0)
    return out


def _sizes(max_size: int, exact_size: int | None) -> range:
    return range(exact_size, exact_size + 1) if exact_size else range(1, max_size + 1)


def aggregator_counterexample_search(agg_set: Sequence[str], values: Iterable[int] = range(5),
                                     max_size: int = 4, exact_size: int | None = None,
                                     tol: float = 1e-12) -> tuple[tuple, tuple] | None:
    """First colliding pair of distinct multisets (size, then lexicographic order), or None."""
    items = enumerate_multisets(values, _sizes(max_size, exact_size))
    return _first_collision(items, list(_features(list(agg_set), items)), tol)


def count_collisions(agg_set: Sequence[str], values: Iterable[int] = range(5), max_size: int = 4,
                     exact_size: int | None = None, tol: float = 1e-12) -> int:
    """Number of unordered pairs of distinct multisets with identical aggregate vectors."""
    items = enumerate_multisets(values, _sizes(max_size, exact_size))
    feats = _features(list(agg_set), items)
    total = 0
    for i in range(len(items)):
        total += int(np.sum(np.all(np.abs(feats[i + 1:] - feats[i]) <= tol, axis=1)))
    return total


def order_statistics_discriminate(values: Iterable[int], n: int) -> bool:
    """True when the n order statistics separate every multiset of size n."""
    names = [f"order{k}" for k in range(1, n + 1)]
    return count_collisions(names, values, exact_size=n) == 0


def subsets(agg_set: Sequence[str]) -> list[tuple[str, ...]]:
    return [c for r in range(1, len(agg_set) + 1) for c in itertools.combinations(agg_set, r)]


def collision_lattice(agg_set: Sequence[str], values: Iterable[int] = range(5),
                      exact_size: int = 3) -> dict[tuple[str, ...], int]:
    vals = list(values)
    return {s: count_collisions(s, vals, exact_size=exact_size) for s in subsets(agg_set)}


def is_monotone(lattice: dict[tuple[str, ...], int]) -> bool:
    """Adding an aggregator never increases the collision count."""
    for s, c in lattice.items():
        for t, d in lattice.items():
            if set(s) < set(t) and d > c:
                return False
    return True

