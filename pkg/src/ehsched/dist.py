"""Finite pmfs on integer grids, a.s.u. checks and majorization tools."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

TOL = 1e-12


@dataclass(frozen=True)
class Pmf:
    """Probability mass function on the contiguous grid ``lo, lo+1, ...``.

    Zeros are allowed anywhere; the weights must sum to one within ``TOL``.
    """

    lo: int
    weights: tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        if not w:
            raise ValueError("pmf needs at least one weight")
        if any(v < 0 or not np.isfinite(v) for v in w):
            raise ValueError("pmf weights must be finite and non-negative")
        total = float(np.sum(w))
        if abs(total - 1.0) > TOL:
            raise ValueError(f"pmf weights sum to {total!r}, not 1")
        object.__setattr__(self, "lo", int(self.lo))
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_array(cls, lo: int, weights, trim: bool = True) -> "Pmf":
        w = np.asarray(weights, dtype=float)
        if trim:
            nz = np.flatnonzero(w > 0)
            if nz.size == 0:
                raise ValueError("pmf has no mass")
            lo, w = lo + int(nz[0]), w[nz[0]:nz[-1] + 1]
        return cls(lo, tuple(w.tolist()))

    @classmethod
    def from_dict(cls, mass: Mapping[int, float]) -> "Pmf":
        keys = sorted(mass)
        w = np.zeros(keys[-1] - keys[0] + 1)
        for k in keys:
            w[k - keys[0]] = mass[k]
        return cls(keys[0], tuple(w.tolist()))

    @classmethod
    def point(cls, x: int) -> "Pmf":
        return cls(x, (1.0,))

    @classmethod
    def uniform(cls, lo: int, hi: int) -> "Pmf":
        n = hi - lo + 1
        return cls(lo, (1.0 / n,) * n)

    @cached_property
    def w(self) -> np.ndarray:
        arr = np.array(self.weights)
        arr.flags.writeable = False
        return arr

    @property
    def hi(self) -> int:
        return self.lo + len(self.weights) - 1

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    def prob(self, x: int) -> float:
        if self.lo <= x <= self.hi:
            return self.weights[x - self.lo]
        return 0.0

    def mean(self) -> float:
        return float(self.support @ self.w)

    @property
    def reach(self) -> int:
        """Largest |x| over the grid (zeros included)."""
        return max(abs(self.lo), abs(self.hi))

    def to_dict(self) -> dict[int, float]:
        return {int(x): p for x, p in zip(self.support, self.weights) if p > 0}


def _grid(p) -> tuple[int, np.ndarray]:
    if isinstance(p, Pmf):
        return p.lo, p.w
    if isinstance(p, Mapping):
        keys = sorted(p)
        w = np.zeros(keys[-1] - keys[0] + 1)
        for k in keys:
            w[k - keys[0]] = p[k]
        return keys[0], w
    raise TypeError(f"expected Pmf or mapping, got {type(p).__name__}")


def _weights(p) -> np.ndarray:
    if isinstance(p, Pmf):
        return p.w
    if isinstance(p, Mapping):
        return _grid(p)[1]
    return np.asarray(p, dtype=float)


def spiral(n: int) -> np.ndarray:
    """First ``n`` offsets of the sequence 0, 1, -1, 2, -2, ..."""
    k = np.arange(n)
    return np.where(k % 2 == 1, (k + 1) // 2, -(k // 2))


def _spiral_values(lo: int, w: np.ndarray, a: int) -> tuple[np.ndarray, np.ndarray]:
    hi = lo + len(w) - 1
    reach = max(hi - a, a - lo, 0)
    pts = a + spiral(2 * reach + 2)
    idx = pts - lo
    inside = (idx >= 0) & (idx < len(w))
    vals = np.zeros(len(pts))
    vals[inside] = w[idx[inside]]
    return pts, vals


def asu_about(p, a: int, tol: float = TOL) -> bool:
    """True iff p(a+k) >= p(a-k) >= p(a+k+1) for all k >= 0.

    Equivalently the weights read in the order a, a+1, a-1, a+2, ... never
    increase.
    """
    lo, w = _grid(p)
    _, vals = _spiral_values(lo, w, int(a))
    return bool(np.all(np.diff(vals) <= tol))


def asu_even(p, tol: float = TOL) -> bool:
    lo, w = _grid(p)
    if not asu_about(p, 0, tol):
        return False
    hi = lo + len(w) - 1
    r = max(abs(lo), abs(hi))
    full = np.zeros(2 * r + 1)
    full[lo + r:hi + r + 1] = w
    return bool(np.all(np.abs(full - full[::-1]) <= tol))


def asu_centers(p, tol: float = TOL) -> list[int]:
    """All points about which ``p`` is a.s.u.  Every center is a mode."""
    lo, w = _grid(p)
    if len(w) == 0:
        return []
    modes = lo + np.flatnonzero(w >= w.max() - tol)
    return [int(a) for a in modes if asu_about(p, int(a), tol)]


def rearrange_desc(p) -> list[float]:
    w = _weights(p)
    order = np.argsort(-w, kind="stable")
    return w[order].tolist()


@dataclass(frozen=True)
class MajorizationVerdict:
    holds: bool
    first_violating_prefix: int | None
    sum_gap: float

    def __bool__(self) -> bool:
        return self.holds


def majorizes(nu, mu, tol: float = TOL) -> MajorizationVerdict:
    """Check ``mu ≺ nu``: every prefix sum of sorted ``mu`` is at most that of ``nu``."""
    a = np.sort(_weights(nu))[::-1]
    b = np.sort(_weights(mu))[::-1]
    n = max(len(a), len(b))
    a = np.pad(a, (0, n - len(a)))
    b = np.pad(b, (0, n - len(b)))
    ca, cb = np.cumsum(a), np.cumsum(b)
    gap = float(ca[-1] - cb[-1])
    bad = np.flatnonzero(cb[:-1] > ca[:-1] + tol)
    if bad.size:
        return MajorizationVerdict(False, int(bad[0]) + 1, gap)
    if abs(gap) > tol:
        return MajorizationVerdict(False, n, gap)
    return MajorizationVerdict(True, None, gap)


def convolve(p: Pmf, q: Pmf) -> Pmf:
    w = np.convolve(p.w, q.w)
    return Pmf(p.lo + q.lo, tuple((w / w.sum()).tolist()))


def hardy_littlewood_gap(p: Sequence[float], q: Sequence[float]) -> float:
    """<p↓, q↓> - <p, q>, which is never negative."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    return float(np.sort(p)[::-1] @ np.sort(q)[::-1] - p @ q)


def threshold_prescription(pi_marginal, a: int, lambda_mass: float) -> dict[int, float]:
    """Transmission probabilities that keep exactly ``lambda_mass`` near ``a``.

    Points are visited in the order a, a+1, a-1, a+2, ...; the leading
    points are kept silent (0) until the retained mass reaches
    ``lambda_mass``, the point where it is reached transmits with probability
    ``1 - alpha``, and every later point transmits surely.
    """
    lo, w = _grid(pi_marginal)
    total = float(w.sum())
    if not (-TOL <= lambda_mass <= total + TOL):
        raise ValueError(f"lambda_mass={lambda_mass} outside [0, {total}]")
    hi = lo + len(w) - 1
    pts, vals = _spiral_values(lo, w, int(a))
    gamma = {x: 1.0 for x in range(lo, hi + 1)}
    if lambda_mass <= 0:
        return gamma
    cum = np.cumsum(vals)
    n_star = int(np.argmax(cum >= lambda_mass - TOL))
    before = cum[n_star - 1] if n_star else 0.0
    if vals[n_star] > 0:
        alpha = min(max((lambda_mass - before) / vals[n_star], 0.0), 1.0)
    else:
        alpha = 0.0
    for k, x in enumerate(pts):
        if lo <= x <= hi:
            if k < n_star:
                gamma[int(x)] = 0.0
            elif k == n_star:
                gamma[int(x)] = 1.0 - alpha
    return gamma


# ---------------------------------------------------------------------------
# Random generators and the randomized property suite

def random_asu(rng: np.random.Generator, size: int, a: int = 0,
               zero_frac: float = 0.0) -> Pmf:
    """Random pmf a.s.u. about ``a``: sorted weights laid out on the spiral."""
    vals = np.sort(rng.random(size))[::-1]
    if zero_frac and size > 1:
        nz = max(1, int(round(size * (1 - zero_frac))))
        vals[nz:] = 0.0
    vals /= vals.sum()
    pts = a + spiral(size)
    return Pmf.from_dict(dict(zip(pts.tolist(), vals.tolist())))


def random_asu_even(rng: np.random.Generator, radius: int) -> Pmf:
    """Random even pmf on [-radius, radius], non-increasing in |x|."""
    half = np.sort(rng.random(radius + 1))[::-1]
    w = np.concatenate([half[:0:-1], half])
    return Pmf(-radius, tuple((w / w.sum()).tolist()))


def robin_hood(rng: np.random.Generator, w: np.ndarray, steps: int) -> np.ndarray:
    """Apply random mass transfers from a larger weight to a smaller one.

    Each transfer moves at most half the difference, so the result is
    majorized by the input.
    """
    w = np.array(w, dtype=float)
    if len(w) < 2:
        return w
    for _ in range(steps):
        i, j = rng.choice(len(w), size=2, replace=False)
        if w[i] < w[j]:
            i, j = j, i
        eps = rng.random() * (w[i] - w[j]) / 2
        w[i] -= eps
        w[j] += eps
    return w


def _check_closure(rng) -> bool:
    a = int(rng.integers(-5, 6))
    p = random_asu(rng, int(rng.integers(1, 22)), a, zero_frac=rng.random() * 0.5)
    q = random_asu_even(rng, int(rng.integers(0, 11)))
    return asu_about(convolve(p, q), a)


def _check_preservation(rng) -> bool:
    size = int(rng.integers(1, 22))
    pt = random_asu(rng, size, int(rng.integers(-5, 6)))
    q = random_asu_even(rng, int(rng.integers(0, 11)))
    w = robin_hood(rng, pt.w, int(rng.integers(0, 3 * size + 1)))
    # arbitrary placement of the perturbed weights on the grid
    perm = rng.permutation(len(w))
    p = Pmf(int(rng.integers(-5, 6)), tuple((w[perm] / w.sum()).tolist()))
    if not majorizes(pt, p).holds:
        return False
    return majorizes(convolve(pt, q), convolve(p, q), tol=1e-10).holds


def _check_hardy_littlewood(rng) -> bool:
    n = int(rng.integers(1, 30))
    return hardy_littlewood_gap(rng.random(n), rng.random(n)) >= -TOL


PROPERTY_CHECKS = {
    "asu_convolution_closure": _check_closure,
    "majorization_preserved_by_convolution": _check_preservation,
    "hardy_littlewood_gap_nonnegative": _check_hardy_littlewood,
}


def property_suite(trials: int = 1000, seed: int = 0,
                   names: Iterable[str] | None = None) -> dict[str, int]:
    """Run each randomized property ``trials`` times; map name -> failure count."""
    failures = {}
    for k, name in enumerate(names or PROPERTY_CHECKS):
        rng = np.random.default_rng([seed, k])
        check = PROPERTY_CHECKS[name]
        failures[name] = sum(not check(rng) for _ in range(trials))
    return failures
