"""System model: source, battery, channel, stage cost and closed-loop rollouts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .dist import Pmf, asu_centers, asu_even

if TYPE_CHECKING:
    from .solver import ThresholdPolicy

SOURCE_KINDS = ("random_walk", "iid", "gaussian_radial")
DISTORTION_KINDS = ("indicator", "power")


class ConstraintViolation(ValueError):
    """An action the battery cannot pay for."""


@dataclass(frozen=True)
class GaussianSpec:
    dim: int = 1
    lam: float = 1.0
    s1: float = 1.0
    s2: float = 1.0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        for name in ("lam", "s1", "s2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class DistortionSpec:
    kind: str = "indicator"
    k: float = 1.0

    def __post_init__(self):
        if self.kind not in DISTORTION_KINDS:
            raise ValueError(f"unknown distortion kind {self.kind!r}")
        if not self.k > 0:
            raise ValueError("distortion exponent k must be positive")

    def of_error(self, d):
        """rho as a function of the error x - a (array-friendly)."""
        d = np.abs(np.asarray(d, dtype=float))
        if self.kind == "indicator":
            return (d != 0).astype(float)
        return d ** self.k


@dataclass(frozen=True)
class SourceSpec:
    kind: str = "random_walk"
    init: Pmf = field(default_factory=lambda: Pmf.point(0))
    noise: Pmf = field(default_factory=lambda: Pmf.point(0))
    gaussian: GaussianSpec | None = None

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ValueError(f"unknown source kind {self.kind!r}")
        if self.kind == "gaussian_radial" and self.gaussian is None:
            raise ValueError("gaussian_radial source needs a GaussianSpec")

    @property
    def is_neat(self) -> bool:
        """Initial state and increments both a.s.u. and even."""
        return asu_even(self.init) and asu_even(self.noise)


@dataclass(frozen=True)
class ProblemSpec:
    horizon: int
    comm_cost: float
    battery_cap: int
    initial_energy: Pmf
    harvest: Pmf
    source: SourceSpec
    distortion: DistortionSpec = field(default_factory=DistortionSpec)

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not self.comm_cost >= 0:
            raise ValueError("comm_cost must be non-negative")
        if self.battery_cap < 0:
            raise ValueError("battery_cap must be >= 0")
        B = self.battery_cap
        e0 = self.initial_energy
        if e0.lo < 0 or (e0.hi > B and any(e0.w[B + 1 - e0.lo:] > 0)):
            raise ValueError("initial_energy support must lie in [0, B]")
        if self.harvest.lo < 0:
            raise ValueError("harvest must be non-negative")
        object.__setattr__(self, "initial_energy", clip_pmf(e0, B))
        object.__setattr__(self, "harvest", clip_pmf(self.harvest, B))

    @property
    def T(self) -> int:
        return self.horizon

    @property
    def B(self) -> int:
        return self.battery_cap

    def energy_vector(self, pmf: Pmf) -> np.ndarray:
        out = np.zeros(self.B + 1)
        out[pmf.lo:pmf.hi + 1] = pmf.w
        return out

    def with_(self, **kw) -> "ProblemSpec":
        return replace(self, **kw)


def clip_pmf(p: Pmf, cap: int) -> Pmf:
    """Move all mass above ``cap`` onto ``cap``."""
    if p.hi <= cap:
        return p
    w = np.zeros(cap - p.lo + 1)
    w[:] = p.w[:cap - p.lo + 1]
    w[-1] += p.w[cap - p.lo + 1:].sum()
    return Pmf(p.lo, tuple(w.tolist()))


@dataclass(frozen=True)
class SystemState:
    x: object
    e: int
    t: int


@dataclass(frozen=True)
class EstimatorRule:
    """Estimator used between receipts.

    ``last_received_or_zero``: keep the last received value (scaled by ``gain``
    each step without a receipt), starting from 0.
    ``last_received_or_mean``: i.i.d. source; fall back to ``centers[t-1]``.
    """

    kind: str = "last_received_or_zero"
    gain: float = 1.0
    centers: tuple[float, ...] = ()

    def prediction(self, t: int, last_estimate):
        """Estimate issued at time ``t`` if nothing is received."""
        if self.kind == "last_received_or_mean":
            return self.centers[t - 1]
        return self.gain * last_estimate


def energy_step(e: int, u: int, n_harvest: int, B: int) -> int:
    if not 0 <= e <= B:
        raise ConstraintViolation(f"energy {e} outside [0, {B}]")
    if u > e:
        raise ConstraintViolation(f"cannot transmit with energy {e}")
    return min(e + n_harvest - u, B)


def stage_distortion(d: DistortionSpec | None, x, a) -> float:
    """rho(x, a); vectors (Gaussian case) give the squared Euclidean norm."""
    vec_x, vec_a = np.ndim(x) > 0, np.ndim(a) > 0
    if vec_x != vec_a:
        raise TypeError("state and estimate must be of the same kind")
    if vec_x:
        diff = np.asarray(x, dtype=float) - np.asarray(a, dtype=float)
        return float(diff @ diff)
    if d is None:
        raise TypeError("scalar states need a DistortionSpec")
    return float(d.of_error(x - a))


def source_center(p: Pmf, distortion: DistortionSpec) -> int:
    """Best constant estimate of a draw from ``p`` (the a.s.u. center if any)."""
    centers = asu_centers(p)
    if centers:
        return min(centers, key=abs)
    cand = p.support
    cost = [float(p.w @ distortion.of_error(p.support - a)) for a in cand]
    return int(cand[int(np.argmin(cost))])


# ---------------------------------------------------------------------------
# Monte Carlo

@dataclass
class Trace:
    x: list
    e: list[int]
    u: list[int]
    y: list
    xhat: list
    cost: list[float]

    @property
    def total_cost(self) -> float:
        return float(sum(self.cost))


def _sample(rng, p: Pmf, size) -> np.ndarray:
    return p.lo + rng.choice(len(p.weights), size=size, p=p.w)


def simulate(spec: ProblemSpec, sensor: "ThresholdPolicy", rollouts: int,
             seed, record: bool = False):
    """Vectorized closed-loop rollouts.

    Returns per-rollout total costs, plus per-step arrays when ``record``.
    """
    T, B, c = spec.T, spec.B, spec.comm_cost
    if sensor.thresholds.shape != (T, B + 1):
        raise ValueError("policy dimensions do not match the problem")
    rng = np.random.default_rng(seed)
    src = spec.source
    rule = sensor.estimator
    gauss = src.kind == "gaussian_radial"
    m = rollouts
    e = _sample(rng, spec.initial_energy, m)
    if gauss:
        g = src.gaussian
        x = rng.standard_normal((m, g.dim)) * math.sqrt(g.s1)
        xhat = np.zeros((m, g.dim))
    else:
        x = _sample(rng, src.init, m).astype(float)
        xhat = np.zeros(m)
    total = np.zeros(m)
    steps = []
    for t in range(1, T + 1):
        pred = rule.prediction(t, xhat)
        if gauss:
            dist = np.linalg.norm(x - pred, axis=1)
        else:
            dist = np.abs(x - pred)
        thr = sensor.thresholds[t - 1, e]
        u = ((e > 0) & (dist >= thr)).astype(int)
        if gauss:
            new_hat = np.where(u[:, None] == 1, x, pred)
            distortion = np.sum((x - new_hat) ** 2, axis=1)
        else:
            new_hat = np.where(u == 1, x, pred)
            distortion = spec.distortion.of_error(x - new_hat)
        stage = c * u + distortion
        total += stage
        if record:
            steps.append((x.copy(), e.copy(), u, new_hat.copy(), stage))
        xhat = new_hat
        n = _sample(rng, spec.harvest, m)
        e = np.minimum(e - u + n, B)
        if t < T:
            if gauss:
                z = rng.standard_normal((m, g.dim)) * math.sqrt(g.s2)
                x = g.lam * x + z
            else:
                z = _sample(rng, src.noise, m)
                x = x + z if src.kind == "random_walk" else z.astype(float)
    if record:
        return total, steps
    return total


def sample_trajectory(spec: ProblemSpec, sensor: "ThresholdPolicy", rng_seed: int) -> Trace:
    _, steps = simulate(spec, sensor, 1, rng_seed, record=True)
    tr = Trace([], [], [], [], [], [])
    for x, e, u, xhat, stage in steps:
        xv = x[0].tolist() if np.ndim(x) > 1 else int(x[0])
        tr.x.append(xv)
        tr.e.append(int(e[0]))
        tr.u.append(int(u[0]))
        tr.y.append((xv, int(e[0])) if u[0] else None)
        tr.xhat.append(xhat[0].tolist() if np.ndim(xhat) > 1 else float(xhat[0]))
        tr.cost.append(float(stage[0]))
    return tr


def monte_carlo_cost(spec: ProblemSpec, sensor: "ThresholdPolicy", rollouts: int,
                     seeds: Sequence[int] = (0,), chunk: int = 250_000) -> tuple[float, float]:
    """Mean closed-loop cost and its standard error over all seeds."""
    costs = []
    for s in seeds:
        done = 0
        while done < rollouts:
            k = min(chunk, rollouts - done)
            costs.append(simulate(spec, sensor, k, seed=[s, done]))
            done += k
    allc = np.concatenate(costs)
    return float(allc.mean()), float(allc.std(ddof=1) / math.sqrt(len(allc)))
