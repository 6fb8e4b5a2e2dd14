import math

import numpy as np
import pytest

from alloctrack.allocators import approx_oracle
from alloctrack.distributions import DiscreteDistribution, RngStream, distance
from alloctrack.errors import TooManyOutcomes
from alloctrack.harness import (
    EpsFamily,
    ProblemInstance,
    Scheme,
    compositions,
    coverage_audit,
    distances_from_counts,
    estimate_risk,
    exact_risk,
    exact_risk_enumeration,
    exact_risk_marginal,
    figure2_sweep,
    lower_bound_experiment,
    loglog_slope,
    regret,
    run_replications,
    summarize,
    table1_gaps,
)
from alloctrack.objectives import exact_expected_distance

BER = DiscreteDistribution.bernoulli(0.5)


def test_compositions():
    c = compositions(4, 3)
    assert len(c) == math.comb(6, 2)
    assert np.all(c.sum(axis=1) == 4)
    assert len({tuple(r) for r in c}) == len(c)


def test_enumeration_small_cases():
    assert exact_risk_enumeration(BER, "l1", 2) == 0.5
    assert exact_risk_enumeration(BER, "sep", 2) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("l", [2, 3])
def test_enumeration_closed_forms(l):
    rng = np.random.default_rng(l)
    for T in range(1, 9):
        P = DiscreteDistribution(rng.dirichlet(np.ones(l)))
        assert exact_risk_enumeration(P, "l2", T) == pytest.approx(np.sum(P.probs * (1 - P.probs)) / T, abs=1e-12)
        assert exact_risk_enumeration(P, "chi2", T) == pytest.approx((l - 1) / T, abs=1e-12)


def test_marginal_matches_enumeration():
    P = DiscreteDistribution([0.2, 0.3, 0.5])
    for kind in ("l2", "l1", "tv", "kl", "chi2"):
        for T in (1, 4, 9):
            assert exact_risk_marginal(P, kind, T) == pytest.approx(exact_risk_enumeration(P, kind, T), abs=1e-12)


def test_exact_risk_dispatch():
    P = DiscreteDistribution(np.ones(10))
    assert exact_risk(P, "sep", 10**4) is None
    with pytest.raises(TooManyOutcomes):
        exact_risk_enumeration(P, "sep", 10**4)


def test_mc_risk_l2():
    est = estimate_risk("uniform", [BER], "l2", 10, 10**5, RngStream(1))
    assert abs(est.risk - 0.05) <= 3 * est.stderr


@pytest.mark.parametrize("kind", ["l1", "sep"])
def test_mc_risk_two_draws(kind):
    est = estimate_risk("uniform", [BER], kind, 2, 20000, RngStream(2))
    assert abs(est.risk - 0.5) <= 3 * est.stderr


def test_stderr_scaling():
    a = estimate_risk("uniform", [BER], "l2", 10, 5000, RngStream(3))
    b = estimate_risk("uniform", [BER], "l2", 10, 20000, RngStream(4))
    assert a.stderr / b.stderr == pytest.approx(2.0, rel=0.2)


def test_order_independent_aggregation():
    D = np.random.default_rng(0).exponential(size=(3001, 3))
    a = summarize(D)
    b = summarize(D[np.random.default_rng(1).permutation(3001)])
    assert np.max(np.abs(a.per_arm_mean - b.per_arm_mean)) < 1e-12
    assert a.max_then_mean >= a.risk


def test_distances_from_counts():
    inst = ProblemInstance([[0.5, 0.5], [0.9, 0.1]])
    counts = np.array([[[3, 1], [9, 1]]])
    D = distances_from_counts("l2", inst, counts)
    assert D[0, 0] == pytest.approx(distance("l2", [0.75, 0.25], [0.5, 0.5]))
    assert D[0, 1] == pytest.approx(0.0, abs=1e-15)


def test_threads_do_not_change_results():
    inst = ProblemInstance([[0.5, 0.5], [0.9, 0.1]])
    a = run_replications("adaptive", inst, "l1", 200, 300, RngStream(5), threads=1)
    b = run_replications("adaptive", inst, "l1", 200, 300, RngStream(5), threads=4)
    np.testing.assert_array_equal(a.counts, b.counts)


def test_schemes_share_streams():
    # uniform and oracle allocations read prefixes of the same per-arm symbols
    inst = ProblemInstance([[0.5, 0.5], [0.9, 0.1]])
    u = run_replications("uniform", inst, "l2", 100, 5, RngStream(8))
    o = run_replications("oracle", inst, "l2", 100, 5, RngStream(8))
    assert list(u.pulls[0]) == [50, 50]
    T = o.pulls[0]
    assert (T[0] >= 50) == np.all(o.counts[:, 0].sum(1) >= u.counts[:, 0].sum(1))


def test_oracle_regret_is_zero():
    inst = ProblemInstance([[0.5, 0.5], [0.9, 0.1]])
    rep = regret("oracle", inst, "l2", 300, 500, RngStream(6))
    assert rep.regret == pytest.approx(0.0, abs=1e-12)
    assert rep.stderr == 0


def test_regret_report_fields():
    inst = ProblemInstance([[0.5, 0.5], [0.9, 0.1]])
    rep = regret("uniform", inst, "l2", 200, 400, RngStream(7))
    assert rep.regret > 0
    T = approx_oracle("l2", inst.distributions, 200).rounded().counts
    assert list(T) == [147, 53]
    assert rep.oracle_risk == pytest.approx(max(
        exact_expected_distance("l2", P, t) for P, t in zip(inst.distributions, T)), rel=1e-12)
    assert {"M", "leading_term"} <= set(rep.overlay)
    assert "level" in rep.decomposition


def test_eps_family():
    fam = EpsFamily()
    assert np.allclose(fam.arm2(0.1).probs, 0.1)
    assert fam.arm2(0.9).probs[0] == pytest.approx(0.9)


def test_figure2_symmetric_arms():
    recs = figure2_sweep(distances=("l2",), n_list=(200,), eps_list=(0.1,), reps=100, rng=RngStream(3))
    r = recs[0]
    assert r.approx_oracle_T2 == pytest.approx(100)
    assert abs(r.adaptive_T2_mean - 100) <= 3 * r.adaptive_T2_std / math.sqrt(100) + 1


def test_table1_identical_arms():
    recs = table1_gaps(distances=("l2", "l1"), n=200, eps_list=(0.1,), reps=400, rng=RngStream(4))
    for r in recs:
        assert abs(r.gap) <= 2 * r.stderr + 1e-12


def test_lower_bound_symmetric():
    recs = lower_bound_experiment(n_list=(400,), schemes=("l2",), reps=100, rng=RngStream(5),
                                  eps_fn=lambda n: 0.0)
    assert recs[0].epsilon == 0.0
    with pytest.raises(ValueError):
        lower_bound_experiment(n_list=(400,), schemes=("l2",), reps=2, eps_fn=lambda n: 0.3)


def test_lower_bound_deviation_centered():
    inst = ProblemInstance([[0.75, 0.25], [0.75, 0.25]])
    res = run_replications(Scheme("adaptive"), inst, "l2", 400, 400, RngStream(9))
    dev = res.pulls[:, 0] - 200.0
    assert abs(dev.mean()) <= 3 * dev.std(ddof=1) / math.sqrt(400)


def test_coverage_weak_delta():
    inst = ProblemInstance([[0.5, 0.5], [0.8, 0.2]])
    res = coverage_audit("l1", inst, 60, 0.5, 300, RngStream(1))
    assert res.coverage >= 0.5 - 3 * math.sqrt(0.25 / 300)
    assert res.finite_checks > 0


def test_loglog_slope():
    n = np.array([1, 2, 4, 8.0])
    assert loglog_slope(n, 3 * n**-1.5) == pytest.approx(-1.5)
