"""Shared problem instances for the test suite."""

import numpy as np

from ehsched.dist import Pmf, random_asu_even
from ehsched.model import DistortionSpec, GaussianSpec, ProblemSpec, SourceSpec

Z3 = Pmf(-1, (0.25, 0.5, 0.25))


def walk(T, c, B, e0, harvest, init, noise, distortion=DistortionSpec()):
    return ProblemSpec(T, c, B, e0, harvest, SourceSpec("random_walk", init, noise), distortion)


def gauss(T, c, B, dim=1, lam=1.0, s1=1.0, s2=1.0, e0=None, harvest=None):
    return ProblemSpec(T, c, B, e0 or Pmf.point(B), harvest or Pmf.point(0),
                       SourceSpec("gaussian_radial", gaussian=GaussianSpec(dim, lam, s1, s2)))


# small instances with even a.s.u. source inputs, T = 2, B <= 2
ORACLE_INSTANCES = {
    "tri_c08": walk(2, 0.8, 1, Pmf.point(1), Pmf.point(0), Z3, Z3),
    "unif_c08": walk(2, 0.8, 1, Pmf.point(1), Pmf.point(0), Pmf.uniform(-1, 1), Z3),
    "sq_c05": walk(2, 0.5, 1, Pmf.point(1), Pmf.point(0), Pmf.uniform(-1, 1), Z3,
                   DistortionSpec("power", 2)),
    "abs_B2": walk(2, 0.3, 2, Pmf.point(2), Pmf.point(0), Pmf.uniform(-1, 1),
                   Pmf(-1, (0.2, 0.6, 0.2)), DistortionSpec("power", 1)),
    "harvest": walk(2, 0.6, 1, Pmf(0, (0.3, 0.7)), Pmf(0, (0.5, 0.5)), Pmf.uniform(-1, 1), Z3),
    "point_B2": walk(2, 0.2, 2, Pmf.uniform(0, 2), Pmf.point(0), Pmf.point(0), Z3),
}


def random_walk_instance(rng: np.random.Generator, max_T=6, max_hull=41, max_B=4) -> ProblemSpec:
    """Random instance with even a.s.u. initial and noise pmfs and a bounded error hull."""
    T = int(rng.integers(1, max_T + 1))
    B = int(rng.integers(1, max_B + 1))
    zr = int(rng.integers(0, 4))
    while 2 * (T * zr) + 1 > max_hull and zr > 0:
        zr -= 1
    ir = int(rng.integers(0, max(1, (max_hull - 1) // 2 - T * zr) + 1))
    ir = min(ir, (max_hull - 1) // 2 - T * zr)
    init = random_asu_even(rng, ir)
    noise = random_asu_even(rng, zr)
    e0 = rng.random(B + 1)
    harvest = rng.random(int(rng.integers(1, B + 2)))
    kind = ("indicator", "power")[int(rng.integers(0, 2))]
    k = float(rng.choice([1.0, 2.0, 0.5, 3.0]))
    return walk(T, float(rng.uniform(0, 4)), B,
                Pmf(0, tuple((e0 / e0.sum()).tolist())),
                Pmf(0, tuple((harvest / harvest.sum()).tolist())),
                init, noise, DistortionSpec(kind, k))
