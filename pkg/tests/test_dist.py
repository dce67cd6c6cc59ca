import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ehsched.dist import (Pmf, asu_about, asu_centers, asu_even, convolve, hardy_littlewood_gap,
                          majorizes, property_suite, random_asu, random_asu_even,
                          rearrange_desc, robin_hood, spiral, threshold_prescription)


def test_pmf_validation():
    with pytest.raises(ValueError):
        Pmf(0, (0.5, 0.6))
    with pytest.raises(ValueError):
        Pmf(0, (1.5, -0.5))
    with pytest.raises(ValueError):
        Pmf(0, ())
    p = Pmf(-1, (0.25, 0.0, 0.75))
    assert p.hi == 1 and p.prob(0) == 0.0 and p.prob(5) == 0.0
    assert p.reach == 1
    assert Pmf.from_array(-3, [0, 0, 1, 0]) == Pmf.point(-1)


@pytest.mark.parametrize("p, a, want", [
    ({-1: 0.2, 0: 0.5, 1: 0.3}, 0, True),
    ({0: 1.0}, 0, True),
    ({-1: 0.4, 0: 0.2, 1: 0.4}, 0, False),
])
def test_asu_about(p, a, want):
    assert asu_about(Pmf.from_dict(p), a) is want


@pytest.mark.parametrize("p, want", [
    ({-1: 0.25, 0: 0.5, 1: 0.25}, True),
    ({0: 1.0}, True),
    ({-1: 0.2, 0: 0.5, 1: 0.3}, False),
])
def test_asu_even(p, want):
    assert asu_even(Pmf.from_dict(p)) is want


def test_asu_centers():
    assert asu_centers(Pmf.from_dict({-1: 0.2, 0: 0.5, 1: 0.3})) == [0]
    # flat pair: a.s.u. about the left point only (a+1 may tie a, a-1 may not exceed a+1)
    assert asu_centers(Pmf.from_dict({3: 0.5, 4: 0.5})) == [3]


@pytest.mark.parametrize("p, want", [
    ({0: 0.2, 1: 0.5, 2: 0.3}, [0.5, 0.3, 0.2]),
    ({0: 1.0}, [1.0]),
    ({0: 0.25, 1: 0.25, 2: 0.25, 3: 0.25}, [0.25] * 4),
])
def test_rearrange_desc(p, want):
    assert rearrange_desc(Pmf.from_dict(p)) == want


def test_majorizes_examples():
    point, unif = Pmf.point(0), Pmf.uniform(0, 3)
    assert majorizes(point, unif).holds
    v = majorizes(unif, point)
    assert not v.holds and v.first_violating_prefix == 1
    p = Pmf.from_dict({-1: 0.2, 0: 0.5, 1: 0.3})
    v = majorizes(p, p)
    assert v.holds and v.first_violating_prefix is None and abs(v.sum_gap) <= 1e-12


def test_majorizes_total_mismatch():
    v = majorizes([0.5, 0.5], [0.5, 0.4])
    assert not v.holds and v.first_violating_prefix == 2


def test_convolve_examples():
    assert convolve(Pmf.point(0), Pmf.from_dict({-1: 0.5, 1: 0.5})).to_dict() == {-1: 0.5, 1: 0.5}
    assert convolve(Pmf(0, (0.5, 0.5)), Pmf(0, (0.5, 0.5))) == Pmf(0, (0.25, 0.5, 0.25))


def test_hardy_littlewood_examples():
    assert hardy_littlewood_gap([1, 2], [2, 1]) == 1
    assert hardy_littlewood_gap([3, 2, 1], [3, 2, 1]) == 0
    with pytest.raises(ValueError):
        hardy_littlewood_gap([1, 2], [1])


def test_threshold_prescription_examples():
    pi = Pmf.from_dict({-1: 0.25, 0: 0.5, 1: 0.25})
    assert set(threshold_prescription(pi, 0, 0.0).values()) == {1.0}
    assert set(threshold_prescription(pi, 0, 1.0).values()) == {0.0}
    g = threshold_prescription(pi, 0, 0.6)
    assert g[0] == 0.0 and g[1] == pytest.approx(0.6) and g[-1] == 1.0
    with pytest.raises(ValueError):
        threshold_prescription(pi, 0, 1.5)
    with pytest.raises(ValueError):
        threshold_prescription(pi, 0, -0.1)


def test_spiral():
    assert spiral(7).tolist() == [0, 1, -1, 2, -2, 3, -3]


def test_property_suite_clean():
    assert property_suite(trials=300, seed=7) == {
        "asu_convolution_closure": 0,
        "majorization_preserved_by_convolution": 0,
        "hardy_littlewood_gap_nonnegative": 0,
    }


# ---------------------------------------------------------------------------
# property tests

weights = st.lists(st.floats(0, 1), min_size=1, max_size=15).filter(lambda w: sum(w) > 1e-3)


def _pmf(lo, w):
    w = np.asarray(w)
    return Pmf(lo, tuple((w / w.sum()).tolist()))


@given(st.integers(-5, 5), weights, st.integers(-5, 5), weights)
def test_convolve_mean_is_additive(lo1, w1, lo2, w2):
    p, q = _pmf(lo1, w1), _pmf(lo2, w2)
    assert convolve(p, q).mean() == pytest.approx(p.mean() + q.mean(), abs=1e-9)


@given(st.integers(0, 2**32 - 1))
def test_generators_are_asu(seed):
    rng = np.random.default_rng(seed)
    a = int(rng.integers(-4, 5))
    assert asu_about(random_asu(rng, int(rng.integers(1, 20)), a, zero_frac=0.3), a)
    assert asu_even(random_asu_even(rng, int(rng.integers(0, 9))))


@given(st.integers(0, 2**32 - 1))
def test_robin_hood_is_majorized(seed):
    rng = np.random.default_rng(seed)
    w = rng.random(int(rng.integers(1, 12)))
    w /= w.sum()
    assert majorizes(w, robin_hood(rng, w, 20), tol=1e-12).holds


@given(st.lists(st.floats(0, 10), min_size=1, max_size=20).flatmap(
    lambda p: st.tuples(st.just(p), st.lists(st.floats(0, 10), min_size=len(p), max_size=len(p)))))
def test_hardy_littlewood_nonnegative(pq):
    p, q = pq
    assert hardy_littlewood_gap(p, q) >= -1e-9


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_majorizes_reflexive_and_transitive(seed):
    rng = np.random.default_rng(seed)
    a = rng.random(8)
    a /= a.sum()
    b = robin_hood(rng, a, 5)
    c = robin_hood(rng, b, 5)
    assert majorizes(a, a).holds
    assert majorizes(a, b).holds and majorizes(b, c).holds and majorizes(a, c, tol=1e-10).holds


@given(st.integers(-3, 3), weights, st.floats(0, 1))
def test_threshold_prescription_retains_mass(a, w, lam):
    p = _pmf(-3, w)
    g = threshold_prescription(p, a, lam)
    kept = sum(p.prob(x) * (1 - gx) for x, gx in g.items())
    assert kept == pytest.approx(lam, abs=1e-9)
    assert sum(0 < v < 1 for v in g.values()) <= 1
