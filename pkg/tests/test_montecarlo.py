import math

import numpy as np
import pytest
from scipy import stats

from matbern import bounds, ensembles, montecarlo
from matbern.bounds import BoundResult
from matbern.ensembles import FiniteSupport, FixedBasisRademacher, MartingaleAdapted
from matbern.errors import DomainError
from matbern.montecarlo import SimConfig, TailEstimate


def test_clopper_pearson_against_binomial_tails():
    lo, hi = montecarlo.clopper_pearson(7, 50, 0.95)
    # defining property: the binomial tail at each endpoint equals alpha/2
    assert stats.binom.sf(6, 50, lo) == pytest.approx(0.025, rel=1e-8)
    assert stats.binom.cdf(7, 50, hi) == pytest.approx(0.025, rel=1e-8)
    assert montecarlo.clopper_pearson(0, 10)[0] == 0
    assert montecarlo.clopper_pearson(10, 10)[1] == 1


def test_sim_config_validation():
    spec = FiniteSupport.scalar_rademacher(4)
    for grid in ([], [0.0, 1.0], [2.0, 1.0], [1.0, 1.0]):
        with pytest.raises(DomainError):
            SimConfig(spec, grid, 10)
    with pytest.raises(DomainError):
        SimConfig(spec, [1.0], 0)
    with pytest.raises(DomainError):
        SimConfig(spec, [1.0], 10, confidence=1.0)


def test_scalar_tail_matches_enumeration():
    spec = FiniteSupport.scalar_rademacher(4)
    est = montecarlo.estimate_tail(SimConfig(spec, (2.0,), 1_000_000, seed=3))[0]
    assert est.ci_low <= 0.125 <= est.ci_high
    assert est.ci_low <= est.p_hat <= est.ci_high


def test_hits_monotone_and_zero_beyond_support():
    spec = FixedBasisRademacher.random(3, 6, seed=2)
    grid = np.linspace(0.1, 6.5, 30)
    est = montecarlo.estimate_tail(SimConfig(spec, grid, 5000, seed=1))
    hits = [e.hits for e in est]
    assert all(a >= b for a, b in zip(hits, hits[1:]))
    assert hits[-1] == 0


def test_thread_count_does_not_change_counts():
    spec = FixedBasisRademacher.random(4, 8, seed=5)
    cfg = SimConfig(spec, np.linspace(0.5, 6, 12), 3 * montecarlo.CHUNK + 17, seed=11)
    one = montecarlo.estimate_tail(cfg, threads=1)
    many = montecarlo.estimate_tail(cfg, threads=8)
    assert [e.hits for e in one] == [e.hits for e in many]


def test_exact_oracle_agreement_over_seeds():
    spec = FiniteSupport([np.diag([1.0, 0.0]), np.diag([-0.5, 0.5]), np.diag([-0.5, -0.5])], [1 / 3, 1 / 3, 1 / 3], 5)
    grid = [0.4, 1.1, 2.2]
    exact = ensembles.exact_tail(ensembles.enumerate_sum_distribution(spec), grid)
    trials = 4000
    good = 0
    for seed in range(50):
        est = montecarlo.estimate_tail(SimConfig(spec, grid, trials, seed=seed))
        ok = all(
            abs(e.p_hat - p) <= 4 * math.sqrt(p * (1 - p) / trials) + 10 / trials for e, p in zip(est, exact)
        )
        good += ok
    assert good >= 49


def test_joint_martingale_event():
    spec = MartingaleAdapted(np.diag([1.0, 0.6]), 10)
    grid = (0.5, 1.0, 2.0)
    plain = montecarlo.estimate_tail(SimConfig(spec, grid, 3000, seed=2))
    joint = montecarlo.estimate_joint_tail_martingale(SimConfig(spec, grid, 3000, seed=2), sigma2=spec.n)
    assert [e.hits for e in plain] == [e.hits for e in joint]
    zero = montecarlo.estimate_joint_tail_martingale(SimConfig(spec, grid, 3000, seed=2), sigma2=0.0)
    assert all(e.hits == 0 for e in zero)
    nullB = MartingaleAdapted(np.zeros((2, 2)), 10)
    est = montecarlo.estimate_joint_tail_martingale(SimConfig(nullB, grid, 500), sigma2=5.0)
    assert all(e.hits == 0 for e in est)
    with pytest.raises(DomainError):
        montecarlo.estimate_joint_tail_martingale(SimConfig(FiniteSupport.scalar_rademacher(3), grid, 10), 1.0)


def test_mean_norm():
    spec = FiniteSupport.scalar_rademacher(4)
    mean, se = montecarlo.estimate_mean_norm(spec, 100_000, seed=4)
    assert abs(mean - 1.5) <= 3 * se
    zero = FixedBasisRademacher(np.zeros((3, 2, 2)))
    assert montecarlo.estimate_mean_norm(zero, 100, 0) == (0.0, 0.0)


def test_mean_norm_below_integrated_bound():
    spec = FixedBasisRademacher.random(4, 16, seed=8)
    params = ensembles.ensemble_params(spec)
    mean, _ = montecarlo.estimate_mean_norm(spec, 20_000, seed=1)

    def tail(t):
        return montecarlo.bound_for_params(params, "bounded", t).clipped

    assert mean <= bounds.expectation_bound_by_integration(tail, params.n * params.U, 4000)


def test_certify_dominance_controls():
    est = [TailEstimate(1.0, 10, 10, 1.0, 1.0)]
    assert montecarlo.certify_dominance(est, lambda t: BoundResult(1.0, "bounded")).passed
    rep = montecarlo.certify_dominance(est, lambda t: BoundResult(0.5, "bounded"))
    assert not rep.passed and not rep.rows[0].dominated
    exact = montecarlo.certify_dominance([], lambda t: BoundResult(0.2, "bounded"), [0.125], {"t_grid": [2.0]})
    assert exact.passed and exact.rows[0].exact_p == 0.125


def test_exact_dominance_scalar():
    spec = FiniteSupport.scalar_rademacher(4)
    rep = montecarlo.run_dominance(spec, np.linspace(0.2, 4, 20), exact=True)
    assert rep.passed
    assert all(r.exact_p <= r.bound_clipped for r in rep.rows)


def test_bound_for_params_degenerate_and_martingale():
    p = ensembles.ensemble_params(ensembles.RankOneSphere(1, 4))
    assert montecarlo.bound_for_params(p, "bounded", 0.5).raw == 0
    with pytest.raises(DomainError):
        montecarlo.bound_for_params(p, "martingale", 0.5)
    assert montecarlo.bound_for_params(p, "martingale", 0.5, EWn=np.eye(1), sigma2_event=0).raw == 0
    with pytest.raises(DomainError):
        montecarlo.bound_for_params(p, "nope", 0.5)


def test_truncation_slope_and_cap():
    from matbern import checks

    slope, vals = checks.truncation_slope()
    assert 0.4 <= slope <= 0.6
    assert vals.max() <= 64
