import math

import numpy as np
import pytest
from scipy import stats

from conftest import cached_chain
from ringtrace.errors import DegenerateData, SimulationError
from ringtrace.fixtures import chain_from_rings
from ringtrace.montecarlo import (REPORT_COLUMNS, SimConfig, estimate_mixin_age_density,
                                  fit_gamma_log_spendtime, gamma_fit_report, ks_distance,
                                  resolve_real_output, simulate_policy, spend_records,
                                  wilson_interval)
from ringtrace.sampling import parse_policy


@pytest.fixture(scope="module")
def sim_chain():
    """About 20 days of 600 s blocks, one-mixin rings, gamma spend times."""
    chain, gt = cached_chain(num_blocks=3000, block_interval_s=600, txs_per_block=2.0, dist=((1, 1.0),), seed=21)
    return chain, spend_records(chain, gt)


def run(chain, records, policy, mixins, trials=1000, **kw):
    cfg = SimConfig(chain=chain, records=records, policy=policy, mixins=mixins, trials=trials,
                    density_samples=kw.pop("density_samples", 10_000), **kw)
    return simulate_policy(cfg)


def test_zero_mixins_always_caught(sim_chain):
    chain, records = sim_chain
    p = run(chain, records, "pre_0_9", [0], trials=500).points[0]
    assert p.gn_rate == 1.0 and p.eff_untrace_mean == 1.0 and p.skips == 0


def test_report_is_seed_deterministic_and_worker_independent(sim_chain):
    chain, records = sim_chain
    a = run(chain, records, "v0_10_1", [1, 3], trials=400, seed=5).to_csv()
    b = run(chain, records, "v0_10_1", [1, 3], trials=400, seed=5, workers=3).to_csv()
    c = run(chain, records, "v0_10_1", [1, 3], trials=400, seed=6).to_csv()
    assert a == b
    assert a != c
    assert a.splitlines()[0].split(",") == REPORT_COLUMNS


def test_confidence_interval_shrinks(sim_chain):
    chain, records = sim_chain
    small = run(chain, records, "pre_0_9", [2], trials=1000).points[0]
    large = run(chain, records, "pre_0_9", [2], trials=4000).points[0]
    for p in (small, large):
        assert 0 <= p.gn_ci_lo <= p.gn_rate <= p.gn_ci_hi <= 1
        assert p.eu_ci_lo <= p.eff_untrace_mean <= p.eu_ci_hi
    gn_ratio = (small.gn_ci_hi - small.gn_ci_lo) / (large.gn_ci_hi - large.gn_ci_lo)
    assert gn_ratio == pytest.approx(2.0, rel=0.2)
    assert small.eu_halfwidth / large.eu_halfwidth == pytest.approx(2.0, rel=0.2)


def test_wilson_against_reference():
    proportion = pytest.importorskip("statsmodels.stats.proportion")
    for k, n in [(0, 10), (3, 10), (712, 1000), (1000, 1000)]:
        lo, hi = proportion.proportion_confint(k, n, alpha=0.05, method="wilson")
        assert wilson_interval(k, n) == pytest.approx((lo, hi), abs=1e-6)


def test_too_many_skips_fail_the_run():
    chain = chain_from_rings([], num_outputs=3)
    with pytest.raises(SimulationError):
        run(chain, [(100.0, 0)] * 5, "pre_0_9", [4], trials=50)


def test_resolve_real_output_nearest_block(sim_chain):
    chain, _ = sim_chain
    h = chain.height
    rng = np.random.default_rng(0)
    for age in (0, 600, 6000, 250, 10**9):
        idx = resolve_real_output(chain, 0, age, h, rng)
        got = chain.block_time(h) - chain.output_time(0, idx)
        best = min(abs(chain.block_time(h) - t - age) for t in chain.output_times(0))
        assert abs(got - age) == best


@pytest.mark.slow
def test_uniform_rate_strictly_decreasing(sim_chain):
    chain, records = sim_chain
    report = run(chain, records, "pre_0_9", list(range(1, 11)), trials=10_000)
    rates = [p.gn_rate for p in report.points]
    assert all(a > b for a, b in zip(rates, rates[1:])), rates


# density estimation --------------------------------------------------------------

def test_density_single_block_is_point_mass():
    chain = chain_from_rings([], num_outputs=50)
    dens = estimate_mixin_age_density(parse_policy("pre_0_9"), chain, 0, 10_000, np.random.default_rng(0))
    widths = np.diff(dens.edges)
    mass = dens.values * widths
    assert mass.max() == pytest.approx(1.0) and np.count_nonzero(mass) == 1


def test_density_normalized_and_needs_samples(sim_chain):
    chain, _ = sim_chain
    pol = parse_policy("v0_9")
    dens = estimate_mixin_age_density(pol, chain, chain.height, 10_000, np.random.default_rng(1))
    assert dens.integral() == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ValueError):
        estimate_mixin_age_density(pol, chain, chain.height, 500, np.random.default_rng(1))


def test_gamma_policy_density_matches_target():
    chain, _ = cached_chain(num_blocks=100_000, block_interval_s=600, txs_per_block=0.0, seed=1)
    h = chain.height
    dens = estimate_mixin_age_density(parse_policy("gamma"), chain, h, 20_000, np.random.default_rng(2))
    history = chain.block_time(h) - chain.block_time(0)
    target = stats.gamma(19.28, scale=1 / 1.61)
    cap = target.cdf(math.log(history))
    hist_cdf = np.concatenate([[0], np.cumsum(dens.values * np.diff(dens.edges))])
    ref_cdf = np.minimum(target.cdf(dens.edges) / cap, 1.0)
    assert np.max(np.abs(hist_cdf - ref_cdf)) < 0.05


# fitting and KS -------------------------------------------------------------------

def test_fit_recovers_parameters():
    rng = np.random.default_rng(3)
    times = np.exp(rng.gamma(19.28, 1 / 1.61, 100_000))
    shape, rate = fit_gamma_log_spendtime(times)
    assert shape == pytest.approx(19.28, rel=0.02)
    assert rate == pytest.approx(1.61, rel=0.02)
    assert fit_gamma_log_spendtime(times) == (shape, rate)


def test_fit_errors():
    with pytest.raises(DegenerateData):
        fit_gamma_log_spendtime([5000.0] * 200)
    with pytest.raises(DegenerateData):
        fit_gamma_log_spendtime([100.0, 200.0] * 10)
    with pytest.raises(DegenerateData):
        fit_gamma_log_spendtime([0.5] + [100.0 + k for k in range(200)])


def test_fit_scale_shift_is_visible_in_goodness_of_fit():
    rng = np.random.default_rng(4)
    times = np.exp(rng.gamma(19.28, 1 / 1.61, 20_000))
    base = gamma_fit_report(times)
    shifted = times * math.e  # every log spend time moves up by exactly one
    refit = gamma_fit_report(shifted)
    assert base["ks"] < 0.02 and refit["ks"] < 0.02
    logs = np.log(shifted)
    stale = ks_distance(logs, lambda x: stats.gamma.cdf(x, base["shape"], scale=1 / base["rate"]))
    assert stale > 0.1
    # the refit absorbs the offset: its mean moves by one log-second
    assert refit["shape"] / refit["rate"] == pytest.approx(base["shape"] / base["rate"] + 1, rel=1e-3)


def test_ks_examples():
    rng = np.random.default_rng(5)
    u = rng.random(10_000)
    assert ks_distance(u, stats.uniform.cdf) < 0.02
    assert ks_distance(u, stats.uniform.cdf) == pytest.approx(stats.kstest(u, "uniform").statistic, abs=1e-12)
    assert stats.kstest(u, "uniform").pvalue > 0.01
    assert ks_distance(u, stats.uniform(0.5, 1).cdf) == pytest.approx(0.5, abs=0.02)
    cdf = stats.norm.cdf
    for x in (-1.0, 0.0, 2.0):
        assert ks_distance([x], cdf) == pytest.approx(max(cdf(x), 1 - cdf(x)))
    with pytest.raises(ValueError):
        ks_distance([], cdf)
