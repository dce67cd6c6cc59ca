"""Ground truth for small instances.

* ``enumerate_all`` scores every deterministic sensor strategy against its
  pointwise best-response estimator by exact propagation over the tree of
  observation histories.
* ``threshold_family_dp`` runs backward induction on estimator beliefs with
  the sensor restricted to deterministic threshold prescriptions.
* ``estimator_structure_check`` walks every reachable history of a threshold
  policy and asks whether "last received value" is a best estimate.
* ``signed_grid_dp_1d`` is a scalar Gaussian DP on a signed grid with exact
  Gaussian-times-hat integrals, used to audit the radial solver.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .belief import (BudgetExceeded, JointBelief, Prescription, best_estimate,
                     energy_kernel, exact_cost, post_update, pre_update)
from .dist import asu_centers
from .model import ProblemSpec, source_center
from .solver import (RadialGridCfg, StructuralViolation, ThresholdPolicy,
                     solve_discrete, solve_iid)

COST_TOL = 1e-9


@dataclass
class OracleReport:
    best_cost: float
    best_strategy_id: int
    solver_cost: float
    gap: float
    strategy_count: int
    threshold_witness: bool
    costs: np.ndarray | None = field(default=None, repr=False)

    HEADER = ("best_cost", "best_strategy_id", "solver_cost", "gap",
              "strategy_count", "threshold_witness")

    def row(self) -> list:
        return [repr(self.best_cost), self.best_strategy_id, repr(self.solver_cost),
                repr(self.gap), self.strategy_count, int(self.threshold_witness)]


def _solve(spec: ProblemSpec):
    if spec.source.kind == "iid":
        return solve_iid(spec)
    return solve_discrete(spec)


# ---------------------------------------------------------------------------
# exhaustive enumeration

class _Tree:
    """Shared machinery: a fixed x-grid, batched propagation, stage costs."""

    def __init__(self, spec: ProblemSpec):
        src = spec.source
        if src.kind not in ("random_walk", "iid"):
            raise ValueError("enumeration needs a discrete source")
        self.spec = spec
        self.T, self.B, self.c = spec.T, spec.B, spec.comm_cost
        if src.kind == "random_walk":
            R = src.init.reach + (self.T - 1) * src.noise.reach
        else:
            R = max(src.init.reach, src.noise.reach)
        self.R = R
        self.xs = np.arange(-R, R + 1)
        self.M = energy_kernel(spec.harvest, self.B)
        self.noise = src.noise
        self.iid = src.kind == "iid"
        # distortion of estimate a (rows) against every grid x (cols)
        self.rho = spec.distortion.of_error(self.xs[None, :] - self.xs[:, None])
        if self.iid:
            self.centers = [source_center(src.init, spec.distortion)]
            self.centers += [source_center(src.noise, spec.distortion)] * (self.T - 1)

    def vec(self, p) -> np.ndarray:
        out = np.zeros(len(self.xs))
        out[p.lo + self.R:p.hi + self.R + 1] = p.w
        return out

    def initial(self) -> np.ndarray:
        e0 = self.spec.energy_vector(self.spec.initial_energy)
        return np.outer(self.vec(self.spec.source.init), e0)

    def step(self, tab: np.ndarray) -> np.ndarray:
        """Post-decision table (..., x, e') to the next pre-decision table."""
        tab = tab @ self.M
        if self.iid:
            return self.vec(self.noise)[:, None] * tab.sum(axis=-2, keepdims=True)
        out = np.zeros_like(tab)
        G = len(self.xs)
        for z, pz in zip(self.noise.support, self.noise.w):
            if pz == 0:
                continue
            z = int(z)
            if z >= 0:
                out[..., z:, :] += pz * tab[..., :G - z, :]
            else:
                out[..., :G + z, :] += pz * tab[..., -z:, :]
        return out

    def distortion(self, silent: np.ndarray) -> np.ndarray:
        """min_a sum_x m(x) rho(x - a) for unnormalized silent mass (..., x)."""
        return (silent @ self.rho.T).min(axis=-1)

    def reference(self, t: int, last) -> int:
        """Point the witness measures |d| from."""
        if self.iid:
            return self.centers[t - 1]
        return 0 if last is None else last


@dataclass
class _Node:
    t: int
    key: tuple
    support: np.ndarray          # boolean (x, e) table
    last: int | None             # last received value
    children: list = field(default_factory=list)  # (obs, _Node)


def _build(tree: _Tree, collapse: bool) -> tuple[_Node, dict]:
    """Maximal-support history tree and the union of decision points per key."""
    points: dict[tuple, np.ndarray] = {}

    def key_of(t, hist, last, when):
        return (t, last, when) if collapse else (t, hist)

    def grow(t, hist, sup, last, when):
        key = key_of(t, hist, last, when)
        node = _Node(t, key, sup, last)
        dec = sup.copy()
        dec[:, 0] = False
        points[key] = points.get(key, np.zeros_like(dec)) | dec
        if t == tree.T:
            return node
        nxt = tree.step(sup.astype(float)) > 0
        node.children.append((None, grow(t + 1, hist + (None,), nxt, last, when)))
        for i, e in zip(*np.nonzero(dec)):
            x = int(tree.xs[i])
            pt = np.zeros(sup.shape)
            pt[i, e - 1] = 1.0
            child = grow(t + 1, hist + ((x, int(e)),), tree.step(pt) > 0, x, t)
            node.children.append(((x, int(e)), child))
        return node

    root = grow(1, (), tree.initial() > 0, None, 0)
    return root, points


def _choice_tables(tree: _Tree, pts: np.ndarray) -> np.ndarray:
    """gamma for every choice index: bit j of the index is the j-th point's action."""
    idx = np.argwhere(pts)
    k = len(idx)
    n = 1 << k
    g = np.zeros((n,) + pts.shape)
    bits = (np.arange(n)[:, None] >> np.arange(k)[None, :]) & 1
    g[:, idx[:, 0], idx[:, 1]] = bits
    return g


def _threshold_choices(tree: _Tree, pts: np.ndarray, ref: int) -> np.ndarray:
    """Mask over choice indices whose decisions are monotone in |x - ref| per e."""
    idx = np.argwhere(pts)
    k = len(idx)
    n = 1 << k
    bits = (np.arange(n)[:, None] >> np.arange(k)[None, :]) & 1
    ok = np.ones(n, dtype=bool)
    dist = np.abs(tree.xs[idx[:, 0]] - ref)
    for e in np.unique(idx[:, 1]):
        cols = np.flatnonzero(idx[:, 1] == e)
        dd = dist[cols]
        b = bits[:, cols]
        hi_silent = np.where(b == 0, dd[None, :], -1).max(axis=1)
        lo_send = np.where(b == 1, dd[None, :], np.inf).min(axis=1)
        ok &= hi_silent < lo_send
    return ok


def enumerate_all(spec: ProblemSpec, budget: int = 1_000_000,
                  collapse_histories: bool = False, keep_costs: bool = False) -> OracleReport:
    """Exact cost of every deterministic sensor strategy with best-response estimation.

    A strategy assigns an action to every (history, x, e > 0) that some
    strategy can reach; its id is the C-order flat index over the decision
    nodes in depth-first order, each node's choice read as a bit vector.
    """
    tree = _Tree(spec)
    root, points = _build(tree, collapse_histories)
    keys = [k for k in points if points[k].any()]
    sizes = [1 << int(points[k].sum()) for k in keys]
    count = math.prod(sizes)
    if count > budget:
        raise BudgetExceeded(count, budget, "strategies")
    axis = {k: i for i, k in enumerate(keys)}
    gammas = {k: _choice_tables(tree, points[k]) for k in keys}

    # partial cost arrays keyed by the tuple of axes they depend on
    parts: dict[tuple, np.ndarray] = {}
    refs: dict[tuple, int] = {}

    def add(axes, arr):
        if axes in parts:
            parts[axes] = parts[axes] + arr
        else:
            parts[axes] = arr

    def visit(node: _Node, axes: tuple, tab: np.ndarray):
        # tab: (*sizes of axes, x, e) unnormalized joint mass of this history
        own = axis.get(node.key)
        if own is not None:
            refs[node.key] = tree.reference(node.t, node.last)
            g = gammas[node.key]
            tab = tab[..., None, :, :]
            send = tab * g
            silent = tab * (1 - g)
            new_axes = axes + (own,)
        else:
            send = np.zeros_like(tab)
            silent = tab
            new_axes = axes
        cost = tree.c * send.sum(axis=(-2, -1)) + tree.distortion(silent.sum(axis=-1))
        add(new_axes, cost)
        for obs, child in node.children:
            if obs is None:
                visit(child, new_axes, tree.step(silent))
            else:
                x, e = obs
                i = x + tree.R
                w = send[..., i, e]
                pt = np.zeros(tab.shape[-2:])
                pt[i, e - 1] = 1.0
                visit(child, new_axes, tree.step(w[..., None, None] * pt))

    visit(root, (), tree.initial())

    ndim = len(keys)
    shape = tuple(sizes)
    total = np.zeros(shape)
    for axes, arr in parts.items():
        order = np.argsort(axes)
        arr = np.transpose(arr, order) if arr.ndim > 1 else arr
        view = [1] * ndim
        for a in axes:
            view[a] = shape[a]
        total = total + arr.reshape(view)
    flat = total.ravel()
    best_id = int(np.argmin(flat))
    best = float(flat[best_id])

    penalty = np.zeros(shape)
    for k in keys:
        mask = _threshold_choices(tree, points[k], refs.get(k, 0))
        view = [1] * ndim
        view[axis[k]] = shape[axis[k]]
        penalty = penalty + np.where(mask, 0.0, np.inf).reshape(view)
    witness = bool(np.min(total + penalty) <= best + COST_TOL * max(1.0, abs(best)))

    try:
        _, pol = _solve(spec)
        solver_cost = exact_cost(spec, pol)
    except StructuralViolation:
        solver_cost = float("nan")
    return OracleReport(best, best_id, solver_cost, solver_cost - best, count, witness,
                        flat if keep_costs else None)


# ---------------------------------------------------------------------------
# belief-space DP over threshold prescriptions

def _candidate_centers(pi: JointBelief, spec: ProblemSpec) -> list[int]:
    common = None
    for e in range(pi.B + 1):
        col = pi.table[:, e]
        if not col.any():
            continue
        cs = set(asu_centers(pi.marginal(e)))
        common = cs if common is None else common & cs
    if common:
        return sorted(common)
    return [best_estimate(pi, spec.distortion)[0]]


def threshold_family_dp(spec: ProblemSpec, budget: int = 200_000) -> float:
    """V_1 of the belief-space DP with the sensor limited to threshold prescriptions.

    At each belief the prescription is 1{|x - a| >= n(e)} with a a common
    a.s.u. center of the per-energy slices (the best estimate if there is
    none) and n(e) in {0, ..., D, inf}.
    """
    src = spec.source
    if src.kind not in ("random_walk", "iid"):
        raise ValueError("threshold_family_dp needs a discrete source")
    T, B, c = spec.T, spec.B, spec.comm_cost
    kind = src.kind
    memo: dict[tuple, float] = {}

    def after(t: int, theta: JointBelief) -> float:
        if t == T:
            return 0.0
        return value(t + 1, pre_update(theta, src.noise, spec.harvest, B, kind))

    def value(t: int, pi: JointBelief) -> float:
        key = (t, pi.key())
        if key in memo:
            return memo[key]
        if len(memo) >= budget:
            raise BudgetExceeded(len(memo) + 1, budget, "belief states")
        xs, nx = pi.xs, pi.table.shape[0]
        best = math.inf
        seen = set()
        for a in _candidate_centers(pi, spec):
            D = int(np.abs(xs - a).max())
            for n in itertools.product(list(range(D + 1)) + [math.inf], repeat=B):
                gam = Prescription.threshold(pi.grid_lo, nx, B, a, (math.inf,) + n)
                sig = gam.gamma.tobytes()
                if sig in seen:
                    continue
                seen.add(sig)
                send = pi.table * gam.gamma
                total = c * send.sum()
                p_sil = 1.0 - send.sum()
                if p_sil > 1e-15:
                    theta = post_update(pi, gam, None)
                    total += p_sil * (best_estimate(theta, spec.distortion)[1] + after(t, theta))
                for i, e in zip(*np.nonzero(send)):
                    theta = JointBelief.point(int(xs[i]), int(e) - 1, B)
                    total += send[i, e] * after(t, theta)
                best = min(best, total)
        memo[key] = best
        return best

    e0 = spec.energy_vector(spec.initial_energy)
    return value(1, JointBelief.product(src.init, e0))


# ---------------------------------------------------------------------------
# estimator structure

def estimator_structure_check(spec: ProblemSpec, sensor: ThresholdPolicy,
                              tol: float = 1e-12) -> bool:
    """True iff the last-received estimate is a best response on every reachable history."""
    tree = _Tree(spec)
    rule = sensor.estimator
    G = len(tree.xs)
    seen = set()

    def walk(t: int, tab: np.ndarray, last: float) -> bool:
        key = (t, last, np.round(tab, 14).tobytes())
        if key in seen:
            return True
        seen.add(key)
        pred = rule.prediction(t, last)
        dist = np.abs(tree.xs - pred)
        g = (dist[:, None] >= sensor.thresholds[t - 1][None, :]).astype(float)
        g[:, 0] = 0.0
        send = tab * g
        silent = (tab * (1 - g)).sum(axis=1)
        mass = silent.sum()
        if mass > tol:
            costs = silent @ tree.rho.T / mass
            i = int(round(pred)) + tree.R
            if not (0 <= i < G and pred == round(pred)):
                mine = float(silent @ tree.spec.distortion.of_error(tree.xs - pred)) / mass
            else:
                mine = costs[i]
            if mine > costs.min() + tol * max(1.0, abs(costs.min())):
                return False
        if t == tree.T:
            return True
        if mass > tol and not walk(t + 1, tree.step(tab * (1 - g)) / mass, pred):
            return False
        for i, e in zip(*np.nonzero(send > tol)):
            pt = np.zeros(tab.shape)
            pt[i, e - 1] = 1.0
            if not walk(t + 1, tree.step(pt), float(tree.xs[i])):
                return False
        return True

    return walk(1, tree.initial(), 0.0)


# ---------------------------------------------------------------------------
# scalar Gaussian audit

def _hat_gauss(r: np.ndarray, mu: np.ndarray, sigma: float) -> np.ndarray:
    """K[i, j] = integral of hat_j(y) N(y; mu_i, sigma^2) dy on the uniform grid ``r``.

    Uses int_a^b (y - m) N(y) dy = mu-part times the CDF difference minus
    sigma times the density difference.
    """
    h = r[1] - r[0]
    a = (r[None, :] - mu[:, None]) / sigma
    Phi = ndtr(a)
    phi = np.exp(-a * a / 2) / math.sqrt(2 * math.pi)
    dP = np.diff(Phi, axis=1)
    dp = np.diff(phi, axis=1)
    # first moment of y - mu over each cell
    m1 = -sigma * dp
    left = r[:-1][None, :] - mu[:, None]
    # rising half of hat_{j+1} on cell j: (y - r_j) / h
    up = (m1 - left * dP) / h
    down = dP - up
    K = np.zeros((len(mu), len(r)))
    K[:, :-1] += down
    K[:, 1:] += up
    return K


def signed_grid_dp_1d(spec: ProblemSpec, grid: RadialGridCfg | None = None):
    """Scalar Gaussian DP on d in [-r_max, r_max] with exact hat integrals.

    Returns ``(d, J)`` with ``J`` shaped (T+1, len(d), B+1).  Beyond the grid
    the next-step value is held at its edge value.
    """
    g = spec.source.gaussian
    if spec.source.kind != "gaussian_radial" or g.dim != 1:
        raise ValueError("signed_grid_dp_1d needs a scalar Gaussian source")
    cfg = grid or RadialGridCfg()
    h, r_max = cfg.resolve(spec)
    N = int(math.ceil(r_max / h - 1e-9))
    d = h * np.arange(-N, N + 1)
    sig = math.sqrt(g.s2)
    K_stay = _hat_gauss(d, g.lam * d, sig)
    lo_tail = ndtr((d[0] - g.lam * d) / sig)
    hi_tail = ndtr((g.lam * d - d[-1]) / sig)
    K_send = _hat_gauss(d, np.zeros(1), sig)[0]
    s_lo, s_hi = ndtr(d[0] / sig), ndtr(-d[-1] / sig)
    T, B, c = spec.T, spec.B, spec.comm_cost
    M = energy_kernel(spec.harvest, B)
    J = np.zeros((T + 1, len(d), B + 1))
    for t in range(T, 0, -1):
        Jn = J[t]
        E_stay = K_stay @ Jn + np.outer(lo_tail, Jn[0]) + np.outer(hi_tail, Jn[-1])
        E_send = K_send @ Jn + s_lo * Jn[0] + s_hi * Jn[-1]
        for e in range(B + 1):
            stay = d ** 2 + E_stay @ M[e]
            if e == 0:
                J[t - 1, :, e] = stay
            else:
                J[t - 1, :, e] = np.minimum(c + E_send @ M[e - 1], stay)
    return d, J
