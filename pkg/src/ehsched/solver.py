"""Backward induction over (error, energy) and threshold extraction.

Three variants share the same recursion

    J_t(d, e) = min{ c + E J_{t+1}(next error after sending, min(e-1+N, B)),
                     rho(d) + E J_{t+1}(next error after silence, min(e+N, B)) }

with J_{T+1} = 0 and the first branch unavailable at e = 0:

* random walk on Z: the error after silence is d + Z, after sending Z;
* i.i.d. source: the state is x itself and the next state is a fresh draw;
* Gaussian source in R^n: the value depends on the error only through its
  norm, so the recursion runs on a radial grid with a noncentral-chi kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, ive
from scipy.stats import chi2

from .belief import energy_kernel
from .dist import asu_even
from .model import EstimatorRule, ProblemSpec, source_center

MONO_TOL = 1e-12
RADIAL_MONO_TOL = 1e-9


class StructuralViolation(RuntimeError):
    """A solved instance that lacks the expected threshold structure."""

    def __init__(self, message: str, t: int, e: int, d):
        super().__init__(f"{message} at t={t}, e={e}, d={d}")
        self.witness = (t, e, d)


class GridTooSmall(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ValueTable:
    """Cost-to-go J[t-1][i][e] on ``grid`` for t = 1..T+1 and decisions for t = 1..T.

    ``centers[t-1]`` is the grid value the threshold distance is measured
    from (0 for error grids, the fallback estimate for i.i.d. sources).
    """

    kind: str
    grid: np.ndarray
    values: np.ndarray
    decisions: np.ndarray
    centers: np.ndarray
    estimator: EstimatorRule

    @property
    def T(self) -> int:
        return self.decisions.shape[0]

    @property
    def B(self) -> int:
        return self.decisions.shape[2] - 1

    def J(self, t: int, d, e: int) -> float:
        i = self.index(d)
        return float(self.values[t - 1, i, e])

    def U(self, t: int, d, e: int) -> int:
        return int(self.decisions[t - 1, self.index(d), e])

    def index(self, d) -> int:
        if self.kind == "radial":
            return int(np.argmin(np.abs(self.grid - d)))
        i = int(d - self.grid[0])
        if not 0 <= i < len(self.grid) or self.grid[i] != d:
            raise KeyError(f"{d} is off the grid")
        return i


@dataclass(frozen=True, eq=False)
class ThresholdPolicy:
    """Transmit at time t with energy e iff e > 0 and |d| >= thresholds[t-1, e]."""

    thresholds: np.ndarray
    kind: str
    estimator: EstimatorRule

    @property
    def T(self) -> int:
        return self.thresholds.shape[0]

    @property
    def B(self) -> int:
        return self.thresholds.shape[1] - 1

    def decide(self, t: int, dist: float, e: int) -> int:
        return int(e > 0 and abs(dist) >= self.thresholds[t - 1, e])

    @classmethod
    def constant(cls, T: int, B: int, n: float, kind: str = "discrete",
                 estimator: EstimatorRule | None = None) -> "ThresholdPolicy":
        thr = np.full((T, B + 1), float(n))
        thr[:, 0] = np.inf
        return cls(thr, kind, estimator or EstimatorRule())


@dataclass(frozen=True)
class RadialGridCfg:
    h: float | None = None
    r_max: float | None = None
    nodes_per_cell: int = 8

    def resolve(self, spec: ProblemSpec) -> tuple[float, float]:
        g = spec.source.gaussian
        h = self.h or 0.01 * math.sqrt(g.s1 + g.s2)
        r_max = self.r_max or 8 * math.sqrt(g.s1 + spec.T * g.s2) * max(g.lam, 1.0) ** spec.T
        return h, r_max


# ---------------------------------------------------------------------------
# threshold extraction and structural checks

def extract_thresholds(vt: ValueTable) -> ThresholdPolicy:
    """Summarize the decision table as per-(t, e) thresholds, or fail loudly."""
    T, B = vt.T, vt.B
    thr = np.full((T, B + 1), np.inf)
    for t in range(1, T + 1):
        dist = np.abs(vt.grid - vt.centers[t - 1])
        dec = vt.decisions[t - 1]
        if np.any(dec[:, 0]):
            i = int(np.flatnonzero(dec[:, 0])[0])
            raise StructuralViolation("transmission at zero energy", t, 0, vt.grid[i])
        for e in range(1, B + 1):
            on = dec[:, e].astype(bool)
            if not on.any():
                continue
            n = dist[on].min()
            bad = np.flatnonzero(on != (dist >= n))
            if bad.size:
                raise StructuralViolation("decision not monotone in |d|", t, e,
                                          vt.grid[bad[0]].item())
            thr[t - 1, e] = n
    return ThresholdPolicy(thr, "radial" if vt.kind == "radial" else "discrete", vt.estimator)


def _check_values(J: np.ndarray, grid: np.ndarray, center, t: int, tol: float,
                  symmetric: bool, monotone_d: bool):
    scale = np.maximum(1.0, np.abs(J))
    if symmetric:
        # grid points paired around the center must carry bitwise-equal values
        idx = np.flatnonzero(grid == center)
        if idx.size:
            c0 = int(idx[0])
            k = min(c0, len(grid) - 1 - c0)
            left = J[c0 - k:c0][::-1]
            right = J[c0 + 1:c0 + k + 1]
            bad = np.argwhere(left != right)
            if bad.size:
                i, e = bad[0]
                raise StructuralViolation("J not symmetric", t, int(e), grid[c0 + i + 1].item())
    if monotone_d:
        dist = np.abs(grid - center)
        order = np.argsort(dist, kind="stable")
        Js, ss = J[order], scale[order]
        drop = Js[:-1] - Js[1:] > tol * ss[:-1]
        tie = dist[order][:-1] == dist[order][1:]
        bad = np.argwhere(drop & ~tie[:, None])
        if bad.size:
            i, e = bad[0]
            raise StructuralViolation("J decreasing in |d|", t, int(e), grid[order[i + 1]].item())
    bad = np.argwhere(J[:, 1:] - J[:, :-1] > tol * scale[:, :-1])
    if bad.size:
        i, e = bad[0]
        raise StructuralViolation("J increasing in energy", t, int(e) + 1, grid[i].item())


# ---------------------------------------------------------------------------
# discrete sources

def _noise_expectation(J: np.ndarray, noise, even: bool) -> np.ndarray:
    """E J(d + Z) for the inner rows of ``J``; rows shrink by the noise reach.

    With even noise the sum pairs +z and -z terms so that a symmetric ``J``
    maps to a bitwise symmetric result.
    """
    r = noise.reach
    n = J.shape[0] - 2 * r
    out = np.zeros((n,) + J.shape[1:])
    if even:
        out += noise.prob(0) * J[r:r + n]
        for z in range(1, r + 1):
            pz = noise.prob(z)
            if pz:
                out += pz * (J[r + z:r + z + n] + J[r - z:r - z + n])
    else:
        for z in range(-r, r + 1):
            pz = noise.prob(z)
            if pz:
                out += pz * J[r + z:r + z + n]
    return out


def _mix_energy(EZ: np.ndarray, M: np.ndarray, e_from: int) -> np.ndarray:
    """sum_e' M[e_from, e'] EZ[..., e'] accumulated in a fixed order."""
    out = np.zeros(EZ.shape[:-1])
    for ep in range(M.shape[1]):
        if M[e_from, ep]:
            out = out + M[e_from, ep] * EZ[..., ep]
    return out


def _bellman(stay_base: np.ndarray, EZ_stay: np.ndarray, EZ_send: np.ndarray,
             M: np.ndarray, c: float) -> tuple[np.ndarray, np.ndarray]:
    """One backward step given next-step expectations.

    ``EZ_stay[i, e']``: expected J_{t+1} at energy e' after silence from row i;
    ``EZ_send[e']``: the same after a transmission (independent of the row).
    """
    B = M.shape[0] - 1
    J = np.empty((len(stay_base), B + 1))
    U = np.zeros((len(stay_base), B + 1), dtype=np.int8)
    for e in range(B + 1):
        stay = stay_base + _mix_energy(EZ_stay, M, e)
        if e == 0:
            J[:, e] = stay
            continue
        send = c + _mix_energy(EZ_send, M, e - 1)
        U[:, e] = send <= stay
        J[:, e] = np.where(U[:, e] == 1, send, stay)
    return J, U


def solve_discrete(spec: ProblemSpec, check: bool = True) -> tuple[ValueTable, ThresholdPolicy]:
    """Random-walk source: backward induction on the error d = x - last estimate."""
    src = spec.source
    if src.kind != "random_walk":
        raise ValueError("solve_discrete needs a random_walk source")
    T, B, c = spec.T, spec.B, spec.comm_cost
    noise = src.noise
    zr = noise.reach
    D = src.init.reach + T * zr
    W = D + T * zr
    even = asu_even(noise)
    M = energy_kernel(spec.harvest, B)
    rho = spec.distortion.of_error

    grid = np.arange(-D, D + 1)
    values = np.zeros((T + 1, len(grid), B + 1))
    decisions = np.zeros((T, len(grid), B + 1), dtype=np.int8)
    J_next = np.zeros((2 * W + 1, B + 1))
    Wn = W
    for t in range(T, 0, -1):
        Wt = Wn - zr
        EZ = _noise_expectation(J_next, noise, even)  # rows -Wt..Wt
        d = np.arange(-Wt, Wt + 1)
        J, U = _bellman(rho(d), EZ, EZ[Wt], M, c)
        crop = slice(Wt - D, Wt + D + 1)
        values[t - 1] = J[crop]
        decisions[t - 1] = U[crop]
        if check:
            _check_values(J[crop], grid, 0, t, MONO_TOL, symmetric=even, monotone_d=even)
        J_next, Wn = J, Wt

    rule = EstimatorRule("last_received_or_zero")
    vt = ValueTable("discrete", grid, values, decisions, np.zeros(T), rule)
    return vt, extract_thresholds(vt)


def solve_iid(spec: ProblemSpec, check: bool = True) -> tuple[ValueTable, ThresholdPolicy]:
    """i.i.d. source: the state is the source value; silence costs rho(x - center)."""
    src = spec.source
    if src.kind != "iid":
        raise ValueError("solve_iid needs an iid source")
    T, B, c = spec.T, spec.B, spec.comm_cost
    M = energy_kernel(spec.harvest, B)
    rho = spec.distortion.of_error
    centers = [source_center(src.init, spec.distortion)]
    centers += [source_center(src.noise, spec.distortion)] * (T - 1)
    R = max(src.init.reach, src.noise.reach, *(abs(m) for m in centers))
    grid = np.arange(-R, R + 1)
    pz = np.zeros(len(grid))
    pz[src.noise.lo + R:src.noise.hi + R + 1] = src.noise.w

    values = np.zeros((T + 1, len(grid), B + 1))
    decisions = np.zeros((T, len(grid), B + 1), dtype=np.int8)
    for t in range(T, 0, -1):
        EX = pz @ values[t]  # (B+1,): next state is a fresh draw either way
        J, U = _bellman(rho(grid - centers[t - 1]), np.broadcast_to(EX, (len(grid), B + 1)),
                        EX, M, c)
        values[t - 1], decisions[t - 1] = J, U
        if check:
            _check_values(J, grid, centers[t - 1], t, MONO_TOL, symmetric=True, monotone_d=True)

    rule = EstimatorRule("last_received_or_mean", centers=tuple(float(m) for m in centers))
    vt = ValueTable("iid", grid, values, decisions, np.array(centers, dtype=float), rule)
    return vt, extract_thresholds(vt)


# ---------------------------------------------------------------------------
# Gaussian source on a radial grid

def noncentral_chi_logpdf(x, k: int, nc) -> np.ndarray:
    """log density of ||v + Z|| with Z ~ N(0, I_k) and ||v|| = nc (x > 0)."""
    x = np.asarray(x, dtype=float)
    nc = np.broadcast_to(np.asarray(nc, dtype=float), np.broadcast_shapes(np.shape(x), np.shape(nc)))
    x = np.broadcast_to(x, nc.shape)
    out = np.empty(nc.shape)
    central = nc == 0
    if central.any():
        xc = x[central]
        out[central] = ((k - 1) * np.log(xc) - xc ** 2 / 2
                        - (k / 2 - 1) * math.log(2) - gammaln(k / 2))
    nz = ~central
    if nz.any():
        xn, ncn = x[nz], nc[nz]
        out[nz] = ((k / 2) * np.log(xn) + (1 - k / 2) * np.log(ncn)
                   + np.log(ive(k / 2 - 1, ncn * xn)) - (xn - ncn) ** 2 / 2)
    return out


def radial_kernel(r_grid: np.ndarray, k: int, centers, sigma: float,
                  nodes: int = 8, chunk: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Hat-basis quadrature of the noncentral-chi law on ``r_grid``.

    Row i maps grid values of a function f to the approximation of
    E f(||v + sigma Z||) with ||v|| = centers[i], using piecewise-linear f
    inside the grid; the mass beyond the last grid point is returned
    separately as ``tail``.
    """
    centers = np.atleast_1d(np.asarray(centers, dtype=float))
    xi, wq = np.polynomial.legendre.leggauss(nodes)
    xi, wq = (xi + 1) / 2, wq / 2
    left = r_grid[:-1]
    width = np.diff(r_grid)
    pts = left[:, None] + width[:, None] * xi[None, :]  # (cells, nodes)
    K = np.zeros((len(centers), len(r_grid)))
    for s in range(0, len(centers), chunk):
        nc = centers[s:s + chunk] / sigma
        logf = noncentral_chi_logpdf(pts[None, :, :] / sigma, k, nc[:, None, None])
        f = np.exp(logf) / sigma * width[None, :, None]
        K[s:s + chunk, :-1] += f @ (wq * (1 - xi))
        K[s:s + chunk, 1:] += f @ (wq * xi)
    tail = 1.0 - K.sum(axis=1)
    return K, tail


def _variance_bound(spec: ProblemSpec) -> list[float]:
    """Per-step bound on the per-coordinate variance of the error."""
    g = spec.source.gaussian
    out, v, worst = [], g.s1, g.s1
    for _ in range(spec.T):
        worst = max(worst, v)
        out.append(worst)
        v = g.lam ** 2 * max(v, g.s2) + g.s2
    return out


def solve_gaussian_radial(spec: ProblemSpec, grid: RadialGridCfg | None = None,
                          check: bool = True) -> tuple[ValueTable, ThresholdPolicy]:
    src = spec.source
    if src.kind != "gaussian_radial":
        raise ValueError("solve_gaussian_radial needs a gaussian_radial source")
    cfg = grid or RadialGridCfg()
    g = src.gaussian
    T, B, c = spec.T, spec.B, spec.comm_cost
    h, r_max = cfg.resolve(spec)
    N = int(math.ceil(r_max / h - 1e-9))
    r = h * np.arange(N + 1)
    sig = math.sqrt(g.s2)
    K_stay, tail_stay = radial_kernel(r, g.dim, g.lam * r, sig, cfg.nodes_per_cell)
    K_send, tail_send = radial_kernel(r, g.dim, [0.0], sig, cfg.nodes_per_cell)
    if check:
        q = math.sqrt(chi2.ppf(1 - 1e-8, g.dim))
        if tail_send[0] >= 1e-6:
            raise GridTooSmall(f"r_max={r[-1]:.4g} leaves {tail_send[0]:.2e} of noise mass")
        for t, var in enumerate(_variance_bound(spec)[:-1], start=1):
            rows = r <= q * math.sqrt(var)
            worst = float(tail_stay[rows].max())
            if worst >= 1e-6:
                raise GridTooSmall(f"r_max={r[-1]:.4g} leaves {worst:.2e} of mass at t={t}")
    M = energy_kernel(spec.harvest, B)

    values = np.zeros((T + 1, N + 1, B + 1))
    decisions = np.zeros((T, N + 1, B + 1), dtype=np.int8)
    for t in range(T, 0, -1):
        Jn = values[t]
        # beyond r_max the next-step value is continued as a constant
        E_stay = K_stay @ Jn + tail_stay[:, None] * Jn[-1][None, :]
        E_send = (K_send @ Jn + tail_send[:, None] * Jn[-1][None, :])[0]
        J, U = _bellman(r ** 2, E_stay, E_send, M, c)
        values[t - 1], decisions[t - 1] = J, U
        if check:
            _check_values(J, r, 0.0, t, RADIAL_MONO_TOL, symmetric=False, monotone_d=True)

    rule = EstimatorRule("last_received_or_zero", gain=g.lam)
    vt = ValueTable("radial", r, values, decisions, np.zeros(T), rule)
    return vt, extract_thresholds(vt)


# ---------------------------------------------------------------------------

def solve(spec: ProblemSpec, grid: RadialGridCfg | None = None,
          check: bool = True) -> tuple[ValueTable, ThresholdPolicy]:
    kind = spec.source.kind
    if kind == "random_walk":
        return solve_discrete(spec, check)
    if kind == "iid":
        return solve_iid(spec, check)
    return solve_gaussian_radial(spec, grid, check)


def expected_cost(spec: ProblemSpec, vt: ValueTable, nodes: int = 8) -> float:
    """Predicted optimal cost: J_1 averaged over the initial (state, energy) law."""
    e0 = spec.energy_vector(spec.initial_energy)
    J1 = vt.values[0]
    if vt.kind == "radial":
        g = spec.source.gaussian
        K, tail = radial_kernel(vt.grid, g.dim, [0.0], math.sqrt(g.s1), nodes)
        per_e = K[0] @ J1 + tail[0] * J1[-1]
        return float(per_e @ e0)
    init = spec.source.init
    idx = init.support - int(vt.grid[0])
    return float(init.w @ J1[idx] @ e0)
