import math

import numpy as np
import pytest
from scipy.stats import ncx2
from instances import Z3, gauss, random_walk_instance, walk

from ehsched.belief import exact_cost
from ehsched.dist import Pmf
from ehsched.model import DistortionSpec, EstimatorRule, ProblemSpec, SourceSpec
from ehsched.solver import (GridTooSmall, RadialGridCfg, StructuralViolation, ValueTable,
                            expected_cost, extract_thresholds, noncentral_chi_logpdf,
                            radial_kernel, solve_discrete, solve_gaussian_radial, solve_iid)


def test_terminal_step_abs_distortion():
    spec = walk(1, 1.5, 2, Pmf.point(2), Pmf.point(0), Pmf.uniform(-3, 3), Z3,
                DistortionSpec("power", 1))
    vt, pol = solve_discrete(spec)
    d = vt.grid
    for e in (1, 2):
        assert np.allclose(vt.values[0, :, e], np.minimum(1.5, np.abs(d)))
        assert pol.thresholds[0, e] == 2
    assert np.allclose(vt.values[0, :, 0], np.abs(d))
    assert pol.thresholds[0, 0] == np.inf
    assert np.all(vt.values[-1] == 0)


def test_table_invariants():
    spec = walk(4, 0.9, 3, Pmf(0, (0.2, 0.3, 0.5)), Pmf(0, (0.5, 0.3, 0.2)),
                Pmf.uniform(-2, 2), Z3, DistortionSpec("power", 2))
    vt, pol = solve_discrete(spec)
    assert np.all(vt.values >= 0)
    assert not vt.decisions[:, :, 0].any()
    for t in range(1, 5):
        for i, d in enumerate(vt.grid):
            for e in range(4):
                assert vt.decisions[t - 1, i, e] == pol.decide(t, d, e)


def test_free_transmission_anchor():
    spec = walk(5, 0.0, 1, Pmf.point(1), Pmf.point(1), Pmf.uniform(-2, 2), Z3)
    vt, pol = solve_discrete(spec)
    assert np.all(vt.values[:, :, 1] == 0)
    assert np.all(pol.thresholds[:, 1] == 0)
    assert expected_cost(spec, vt) == 0


def test_tie_goes_to_transmission():
    # c = 1 equals the indicator distortion at T = 1
    spec = walk(1, 1.0, 1, Pmf.point(1), Pmf.point(0), Pmf.uniform(-1, 1), Z3)
    _, pol = solve_discrete(spec)
    assert pol.thresholds[0, 1] == 1


@pytest.mark.parametrize("seed", range(25))
def test_random_instances_have_threshold_structure(seed):
    spec = random_walk_instance(np.random.default_rng(seed))
    vt, pol = solve_discrete(spec)
    J = vt.values
    assert np.array_equal(J, J[:, ::-1, :])
    assert expected_cost(spec, vt) == pytest.approx(exact_cost(spec, pol), rel=1e-10, abs=1e-12)


def test_skewed_noise_is_reported_not_hidden():
    spec = walk(3, 0.5, 1, Pmf.point(1), Pmf.point(0), Pmf.point(0), Pmf(0, (0.1, 0.9)))
    try:
        vt, pol = solve_discrete(spec)
    except StructuralViolation as ex:
        assert len(ex.witness) == 3
    else:
        for t in range(1, 4):
            for i, d in enumerate(vt.grid):
                assert vt.decisions[t - 1, i, 1] == pol.decide(t, d, 1)


def test_extract_thresholds_examples():
    grid = np.arange(-3, 4)
    dec = np.zeros((2, 7, 3), dtype=np.int8)
    dec[:, :, 1:] = 1
    vt = ValueTable("discrete", grid, np.zeros((3, 7, 3)), dec, np.zeros(2), EstimatorRule())
    pol = extract_thresholds(vt)
    assert np.all(pol.thresholds[:, 1:] == 0) and np.all(pol.thresholds[:, 0] == np.inf)
    dec[:] = 0
    assert np.all(extract_thresholds(vt).thresholds == np.inf)
    dec[0, 3, 1] = 1  # transmit only at d = 0
    with pytest.raises(StructuralViolation) as ex:
        extract_thresholds(vt)
    assert ex.value.witness[:2] == (1, 1)


def test_iid_examples():
    u = Pmf.uniform(-1, 1)
    spec = ProblemSpec(3, 5.0, 1, Pmf.point(1), Pmf.point(0), SourceSpec("iid", u, u))
    vt, pol = solve_iid(spec)
    assert np.all(pol.thresholds == np.inf)
    assert expected_cost(spec, vt) == pytest.approx(3 * 2 / 3)
    spec = ProblemSpec(3, 0.0, 1, Pmf.point(1), Pmf.point(1), SourceSpec("iid", u, u))
    vt, pol = solve_iid(spec)
    assert expected_cost(spec, vt) == 0 and np.all(pol.thresholds[:, 1] == 0)
    skew = Pmf(2, (0.2, 0.5, 0.3))
    spec = ProblemSpec(2, 0.4, 1, Pmf.point(1), Pmf(0, (0.5, 0.5)),
                       SourceSpec("iid", skew, skew), DistortionSpec("power", 2))
    vt, pol = solve_iid(spec)
    assert vt.centers.tolist() == [3, 3]
    assert expected_cost(spec, vt) == pytest.approx(exact_cost(spec, pol), abs=1e-12)


def test_noncentral_chi_density():
    from scipy.stats import chi
    x = np.linspace(0.05, 6, 40)
    for k in (1, 2, 3, 5):
        assert np.allclose(np.exp(noncentral_chi_logpdf(x, k, 0.0)), chi.pdf(x, k))
        nc = 1.7
        ref = ncx2.pdf(x ** 2, k, nc ** 2) * 2 * x
        assert np.allclose(np.exp(noncentral_chi_logpdf(x, k, nc)), ref, rtol=1e-8)
    # far from the origin the scaled Bessel form must not overflow
    assert np.isfinite(noncentral_chi_logpdf(np.array([300.0]), 2, 299.0)).all()


def test_radial_kernel_mass():
    r = 0.05 * np.arange(201)
    K, tail = radial_kernel(r, 2, np.array([0.0, 1.0, 9.0]), 1.0)
    assert np.allclose(K.sum(axis=1) + tail, 1)
    assert tail[0] < 1e-12
    assert tail[2] == pytest.approx(ncx2.sf(10.0 ** 2, 2, 9.0 ** 2), abs=1e-9)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_radial_terminal_threshold(dim):
    c = 1.3
    spec = gauss(1, c, 1, dim)
    vt, pol = solve_gaussian_radial(spec, RadialGridCfg(h=0.02))
    assert abs(pol.thresholds[0, 1] - math.sqrt(c)) <= 0.02


def test_radial_grid_too_small():
    spec = gauss(3, 1.0, 1, 2)
    with pytest.raises(GridTooSmall):
        solve_gaussian_radial(spec, RadialGridCfg(h=0.05, r_max=3.0))


def test_radial_monotone_and_threshold_form():
    spec = gauss(3, 1.5, 2, 2, lam=0.9, harvest=Pmf(0, (0.5, 0.5)))
    vt, pol = solve_gaussian_radial(spec, RadialGridCfg(h=0.04))
    J = vt.values[:-1]
    assert np.all(np.diff(J, axis=1) >= -1e-9)
    assert np.all(np.diff(J, axis=2) <= 1e-9)
    assert np.all(np.isfinite(pol.thresholds[:, 1:]))
