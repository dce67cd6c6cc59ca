"""Estimator beliefs over (source value, energy) and exact policy evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .dist import Pmf
from .model import DistortionSpec, EstimatorRule, ProblemSpec

MASS_TOL = 1e-10


class InconsistentObservation(ValueError):
    """An observation that has zero probability under the current belief."""


class BudgetExceeded(RuntimeError):
    def __init__(self, needed: int, budget: int, what: str = "nodes"):
        super().__init__(f"{what}: need {needed}, budget is {budget}")
        self.needed = needed
        self.budget = budget


def energy_kernel(harvest: Pmf, B: int) -> np.ndarray:
    """M[e', e] = P(min(e' + N, B) = e)."""
    M = np.zeros((B + 1, B + 1))
    for ep in range(B + 1):
        for n, p in zip(harvest.support, harvest.w):
            M[ep, min(ep + int(n), B)] += p
    return M


def propagate(lo: int, table: np.ndarray, noise: Pmf, M: np.ndarray,
              kind: str = "random_walk") -> tuple[int, np.ndarray]:
    """Linear map from a post-transmission measure to the next pre-transmission one."""
    if kind == "random_walk":
        conv = np.stack([np.convolve(table[:, e], noise.w) for e in range(table.shape[1])],
                        axis=1)
        new_lo = lo + noise.lo
    elif kind == "iid":
        conv = np.outer(noise.w, table.sum(axis=0))
        new_lo = noise.lo
    else:
        raise ValueError(f"no discrete belief update for source kind {kind!r}")
    return new_lo, conv @ M


def best_estimate_raw(lo: int, mass: np.ndarray, d: DistortionSpec) -> tuple[int, float]:
    """argmin_a sum_x mass(x) rho(x - a) over the support hull; smallest a on ties."""
    nz = np.flatnonzero(mass > 0)
    if nz.size == 0:
        return lo, 0.0
    xs = lo + np.arange(len(mass))
    cand = xs[nz[0]:nz[-1] + 1]
    costs = np.array([mass @ d.of_error(xs - a) for a in cand])
    best = costs.min()
    k = int(np.flatnonzero(costs <= best + 1e-12 * max(1.0, abs(best)))[0])
    return int(cand[k]), float(costs[k])


@dataclass(frozen=True, eq=False)
class JointBelief:
    """Probability table over (x, e) with x = grid_lo + row index."""

    grid_lo: int
    table: np.ndarray

    def __post_init__(self):
        tab = np.array(self.table, dtype=float)
        if tab.ndim != 2:
            raise ValueError("belief table must be 2-D (x, e)")
        if np.any(tab < 0):
            raise ValueError("belief entries must be non-negative")
        if abs(tab.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"belief mass is {tab.sum()!r}, not 1")
        tab.flags.writeable = False
        object.__setattr__(self, "table", tab)

    @classmethod
    def point(cls, x: int, e: int, B: int) -> "JointBelief":
        tab = np.zeros((1, B + 1))
        tab[0, e] = 1.0
        return cls(x, tab)

    @classmethod
    def product(cls, xdist: Pmf, edist: np.ndarray) -> "JointBelief":
        return cls(xdist.lo, np.outer(xdist.w, edist))

    @property
    def B(self) -> int:
        return self.table.shape[1] - 1

    @property
    def xs(self) -> np.ndarray:
        return self.grid_lo + np.arange(self.table.shape[0])

    @cached_property
    def x_marginal(self) -> np.ndarray:
        return self.table.sum(axis=1)

    def marginal(self, e: int) -> dict[int, float]:
        """Unnormalized x-profile at energy ``e`` (for a.s.u. checks)."""
        return dict(zip(self.xs.tolist(), self.table[:, e].tolist()))

    def prob(self, x: int, e: int) -> float:
        i = x - self.grid_lo
        if 0 <= i < self.table.shape[0] and 0 <= e <= self.B:
            return float(self.table[i, e])
        return 0.0

    def key(self) -> tuple:
        return (self.grid_lo, self.table.shape, np.round(self.table, 14).tobytes())

    def __eq__(self, other) -> bool:
        if not isinstance(other, JointBelief):
            return NotImplemented
        return (self.grid_lo == other.grid_lo and self.table.shape == other.table.shape
                and np.allclose(self.table, other.table, atol=1e-14, rtol=0))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Prescription:
    """Transmission probabilities gamma(x, e) on the grid ``lo + i``.

    Points off the grid never transmit; gamma(., 0) is forced to zero.
    """

    lo: int
    gamma: np.ndarray

    def __post_init__(self):
        g = np.array(self.gamma, dtype=float)
        if np.any(g < 0) or np.any(g > 1):
            raise ValueError("prescription values must lie in [0, 1]")
        if np.any(g[:, 0] != 0):
            raise ValueError("prescription must not transmit at zero energy")
        g.flags.writeable = False
        object.__setattr__(self, "gamma", g)

    @classmethod
    def threshold(cls, lo: int, nx: int, B: int, center: int, n) -> "Prescription":
        """gamma(x, e) = 1{|x - center| >= n[e]} for e > 0."""
        xs = lo + np.arange(nx)
        g = np.zeros((nx, B + 1))
        for e in range(1, B + 1):
            g[:, e] = np.abs(xs - center) >= n[e]
        return cls(lo, g)

    def on(self, lo: int, nx: int) -> np.ndarray:
        out = np.zeros((nx, self.gamma.shape[1]))
        a, b = max(lo, self.lo), min(lo + nx, self.lo + self.gamma.shape[0])
        if a < b:
            out[a - lo:b - lo] = self.gamma[a - self.lo:b - self.lo]
        return out


def pre_update(theta: JointBelief, noise: Pmf, harvest: Pmf, B: int,
               kind: str = "random_walk") -> JointBelief:
    lo, tab = propagate(theta.grid_lo, theta.table, noise, energy_kernel(harvest, B), kind)
    return JointBelief(lo, tab)


def post_update(pi: JointBelief, gamma: Prescription, y) -> JointBelief:
    """Condition on the observation ``y``: ``None`` for silence or ``(x, e)``."""
    g = gamma.on(pi.grid_lo, pi.table.shape[0])
    if y is not None:
        x, e = y
        i = x - pi.grid_lo
        inside = 0 <= i < g.shape[0] and 0 < e <= pi.B
        if not inside or g[i, e] <= 0 or pi.table[i, e] <= 0:
            raise InconsistentObservation(f"observation {y} has zero probability")
        return JointBelief.point(x, e - 1, pi.B)
    kept = (1.0 - g) * pi.table
    mass = kept.sum()
    if mass <= 0:
        raise InconsistentObservation("silence has zero probability")
    return JointBelief(pi.grid_lo, kept / mass)


def best_estimate(theta: JointBelief, d: DistortionSpec) -> tuple[int, float]:
    a, val = best_estimate_raw(theta.grid_lo, theta.x_marginal, d)
    return a, val


def exact_cost(spec: ProblemSpec, sensor, estimator: EstimatorRule | None = None,
               budget: int = 5_000_000) -> float:
    """Exact expected cost of a threshold policy with a fixed estimator rule.

    The observation tree is expanded forward with histories merged whenever
    they leave the estimator in the same state; the joint law of (last
    estimate, x, e) is propagated exactly.
    """
    src = spec.source
    if src.kind not in ("random_walk", "iid"):
        raise ValueError("exact_cost handles discrete sources only")
    rule = estimator or sensor.estimator
    if rule.kind != "last_received_or_mean" and rule.gain != 1.0:
        raise ValueError("discrete exact_cost needs unit estimator gain")
    T, B, c = spec.T, spec.B, spec.comm_cost
    if src.kind == "random_walk":
        R = src.init.reach + (T - 1) * src.noise.reach
    else:
        R = max(src.init.reach, src.noise.reach,
                *(int(abs(m)) for m in rule.centers[:T]))
    G = 2 * R + 1
    if G * G * (B + 1) > budget:
        raise BudgetExceeded(G * G * (B + 1), budget)
    xs = np.arange(-R, R + 1)
    M = energy_kernel(spec.harvest, B)
    e0 = spec.energy_vector(spec.initial_energy)
    # P[h, i, e]: last estimate xs[h], source xs[i], energy e
    P = np.zeros((G, G, B + 1))
    p0 = np.zeros(G)
    p0[src.init.lo + R:src.init.hi + R + 1] = src.init.w
    P[R] = np.outer(p0, e0)
    total = 0.0
    for t in range(1, T + 1):
        if rule.kind == "last_received_or_mean":
            pred = np.full(G, rule.centers[t - 1], dtype=float)
        else:
            pred = rule.gain * xs.astype(float)
        dist = np.abs(xs[None, :] - pred[:, None])
        thr = sensor.thresholds[t - 1]
        u = (dist[:, :, None] >= thr[None, None, :]).astype(float)
        u[:, :, 0] = 0.0
        rho_stay = spec.distortion.of_error(xs[None, :] - pred[:, None])
        total += float(np.sum(P * u) * c + np.sum(P * (1 - u) * rho_stay[:, :, None]))
        if t == T:
            break
        stay = P * (1 - u)
        sent = (P * u).sum(axis=0)  # (x, e): estimate jumps to x
        nxt = stay.copy()
        nxt[np.arange(G), np.arange(G), :-1] += sent[:, 1:]
        nxt = nxt @ M
        if src.kind == "random_walk":
            z = src.noise
            out = np.zeros_like(nxt)
            for off, pz in zip(z.support, z.w):
                if pz == 0:
                    continue
                if off >= 0:
                    out[:, off:, :] += pz * nxt[:, :G - off, :]
                else:
                    out[:, :G + off, :] += pz * nxt[:, -off:, :]
            P = out
        else:
            pz = np.zeros(G)
            pz[src.noise.lo + R:src.noise.hi + R + 1] = src.noise.w
            P = pz[None, :, None] * nxt.sum(axis=1, keepdims=True)
    return total
