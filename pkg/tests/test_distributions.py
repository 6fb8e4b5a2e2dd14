import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alloctrack.distributions import (
    ArmState,
    DiscreteDistribution,
    DistanceKind,
    EtaInterior,
    RngStream,
    distance,
    draw,
    empirical,
    sample,
)
from alloctrack.errors import DimensionMismatch, DivisionByZeroMass, InvalidDistribution, ZeroPulls


def simplex(min_len=2, max_len=8, positive=False):
    lo = 1e-3 if positive else 0.0

    def build(ws):
        w = np.array(ws)
        if w.sum() == 0:
            w[0] = 1.0
        return w / w.sum()

    return st.lists(st.floats(lo, 1.0), min_size=min_len, max_size=max_len).map(build)


def test_construction_normalizes():
    P = DiscreteDistribution([2, 1, 1])
    assert P.l == 3
    assert abs(P.probs.sum() - 1) < 1e-12
    np.testing.assert_allclose(P.probs, [0.5, 0.25, 0.25])


@pytest.mark.parametrize("bad", [[-0.1, 1.1], [0, 0], [np.nan, 1], [1.0]])
def test_construction_rejects(bad):
    with pytest.raises(InvalidDistribution):
        DiscreteDistribution(bad)


def test_probs_are_read_only():
    P = DiscreteDistribution([0.5, 0.5])
    with pytest.raises(ValueError):
        P.probs[0] = 1.0


def test_eta_interior():
    region = EtaInterior(0.1)
    assert [0.1, 0.9] in region
    assert [0.05, 0.95] not in region
    with pytest.raises(ValueError):
        EtaInterior(0.5)


def test_sample_point_mass():
    P = DiscreteDistribution([1, 0, 0])
    rng = RngStream(3)
    assert all(sample(P, rng) == 0 for _ in range(200))


def test_sample_bernoulli_frequency():
    # 3 sigma for 1e6 fair draws is 0.0015
    P = DiscreteDistribution.bernoulli(0.5)
    x = draw(P, RngStream(1), 10**6)
    assert 0.498 <= np.mean(x == 1) <= 0.502


def test_sample_matches_draw():
    P = DiscreteDistribution([0.2, 0.3, 0.5])
    a = [sample(P, RngStream(5, 9)) for _ in range(1)]
    b = draw(P, RngStream(5, 9), 1)
    assert a[0] == b[0]


def test_same_stream_reproduces():
    P = DiscreteDistribution([0.2, 0.3, 0.5])
    a = draw(P, RngStream(42, 7), 1000)
    b = draw(P, RngStream(42, 7), 1000)
    c = draw(P, RngStream(42, 8), 1000)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_spawned_streams_look_independent():
    root = RngStream(11)
    u = root.spawn(0).random(20000)
    v = root.spawn(1).random(20000)
    assert abs(np.corrcoef(u, v)[0, 1]) < 4 / math.sqrt(20000)


@pytest.mark.parametrize(
    "counts, expected",
    [((3, 1), (0.75, 0.25)), ((0, 5), (0.0, 1.0)), ((2, 2, 2), (1 / 3, 1 / 3, 1 / 3))],
)
def test_empirical(counts, expected):
    arm = ArmState(0, counts)
    assert arm.pulls == sum(counts)
    np.testing.assert_allclose(empirical(arm).probs, expected, atol=1e-15)


def test_empirical_zero_pulls():
    with pytest.raises(ZeroPulls):
        empirical(ArmState.empty(0, 3))


def test_arm_state_observe_and_centered_sums():
    arm = ArmState.empty(1, 2)
    for s in (0, 0, 1):
        arm.observe(s)
    assert arm.pulls == 3
    np.testing.assert_allclose(arm.centered_sums([0.5, 0.5]), [0.5, -0.5])


def test_distance_examples():
    a, b = [0.6, 0.4], [0.5, 0.5]
    assert distance("l2", a, b) == pytest.approx(0.02, abs=1e-15)
    kl = mpmath.mpf("0.6") * mpmath.log(mpmath.mpf("1.2")) + mpmath.mpf("0.4") * mpmath.log(mpmath.mpf("0.8"))
    assert distance("kl", a, b) == pytest.approx(float(kl), abs=1e-12)
    assert abs(distance("kl", a, b) - 0.020136) < 1e-6
    assert distance("sep", [0.25, 0.75], b) == pytest.approx(0.5)


def test_distance_errors():
    with pytest.raises(DimensionMismatch):
        distance("l1", [0.5, 0.5], [0.2, 0.3, 0.5])
    with pytest.raises(DivisionByZeroMass):
        distance("kl", [0.5, 0.5], [1.0, 0.0])
    # a zero empirical mass is fine for KL
    assert distance("kl", [1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2))


def test_kind_parse():
    assert DistanceKind.parse("separation") is DistanceKind.SEPARATION
    assert DistanceKind.parse("l2sq") is DistanceKind.L2SQ
    with pytest.raises(ValueError):
        DistanceKind.parse("wasserstein")


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 8).flatmap(lambda l: st.tuples(simplex(l, l), simplex(l, l, positive=True))))
def test_properties_on_random_pairs(pair):
    p, q = pair
    vals = {k: distance(k, p, q) for k in ("l1", "tv", "l2", "kl", "chi2", "hellinger", "sep")}
    for k, v in vals.items():
        assert v >= -1e-12, k
        assert distance(k, q, q) == pytest.approx(0.0, abs=1e-12)
    assert vals["tv"] == vals["l1"] / 2
    # TV <= H <= sqrt(KL) <= sqrt(chi2), compared on squares to avoid sqrt of roundoff
    assert vals["tv"] <= vals["hellinger"] + 1e-9
    assert vals["hellinger"] ** 2 <= vals["kl"] + 1e-12
    assert vals["kl"] <= vals["chi2"] + 1e-12


def test_empirical_converges():
    P = DiscreteDistribution([0.1, 0.2, 0.3, 0.4])
    rng = RngStream(2024)
    reps = 400
    means = []
    for T in (50, 100, 200, 400, 800):
        d = []
        for r in range(reps):
            x = draw(P, rng.spawn(T).spawn(r), T)
            arm = ArmState(0, np.bincount(x, minlength=4))
            d.append(distance("l1", empirical(arm), P))
        means.append((np.mean(d), np.std(d, ddof=1) / math.sqrt(reps)))
    for (m0, s0), (m1, s1) in zip(means, means[1:]):
        assert m1 < m0 + 3 * math.hypot(s0, s1)
