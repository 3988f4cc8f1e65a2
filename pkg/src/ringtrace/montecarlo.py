"""
Monte Carlo evaluation of mixin policies, plus spend-time fitting helpers.

Each trial draws a ``(spend_time, denomination)`` record uniformly, resolves it
to the output at ``fixed_height`` whose age is closest to the drawn spend time,
builds a ring around it with the policy under test and scores

* whether Guess-Newest picks the real output, and
* the effective untraceability of the Bayes posterior, using the configured
  spend-time density and a histogram estimate of the policy's mixin-age density.

Trial ``t`` of ring size ``M`` always uses the generator seeded with
``(seed, M, t)``, so splitting trials across processes never changes a report.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import stats

from .chain import Chain, OutRef
from .errors import DegenerateData, InsufficientOutputs, NonTerminating, SimulationError
from .sampling import Policy, parse_policy
from .temporal import HistogramDensity, LogGammaDensity, guess_newest, posterior_real_spend

MAX_SKIP_FRACTION = 0.10
MIN_DENSITY_SAMPLES = 10_000
REPORT_COLUMNS = ["policy", "num_mixins", "trials", "gn_rate", "gn_ci_lo", "gn_ci_hi",
                  "eff_untrace_mean", "eu_ci_lo", "eu_ci_hi", "skips"]


def spend_records(chain: Chain, truth) -> list[tuple[int, int]]:
    """``(spend_time_s, denom)`` for every input covered by ``truth``."""
    return [(chain.spend_time(ring.input_id, truth), ring.denom)
            for _, ring in chain.inputs() if ring.input_id in truth]


def resolve_real_output(chain: Chain, denom: int, spend_time: float, height: int,
                        rng: np.random.Generator) -> int:
    """An output of ``denom`` whose age at ``height`` is nearest ``spend_time``
    (uniform among the outputs of the closest block)."""
    k = chain.nearest_output_block(denom, height, chain.block_time(height) - spend_time)
    block = chain.block_output_range(denom, k)
    return block.start + int(rng.integers(len(block)))


def wilson_interval(successes: int, n: int, z: float = 1.959964) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = successes / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def estimate_mixin_age_density(policy: Policy, chain: Chain, height: int, n_samples: int,
                               rng: np.random.Generator, num_mixins: int = 1, denom: int | None = None,
                               real_sampler: Callable[[np.random.Generator], int] | None = None,
                               num_bins: int = 100, pseudocount: float = 0.0) -> HistogramDensity:
    """Histogram of the ages of non-real ring members produced by ``policy``.

    Rings of ``num_mixins`` mixins are built around real outputs drawn by
    ``real_sampler`` (uniform over existing outputs by default) until
    ``n_samples`` mixin ages are collected.
    """
    if n_samples < MIN_DENSITY_SAMPLES:
        raise ValueError(f"n_samples must be >= {MIN_DENSITY_SAMPLES}")
    if num_mixins < 1:
        raise ValueError("need at least one mixin per ring to observe mixin ages")
    if denom is None:
        denom = chain.denominations[0]
    top = chain.top_global_index(denom, height)
    times = np.asarray(chain.output_times(denom)[: top + 1])
    now = chain.block_time(height)
    if real_sampler is None:
        real_sampler = lambda g: int(g.integers(top + 1))  # noqa: E731
    ages: list[int] = []
    failures = rings = 0
    while len(ages) < n_samples:
        real = real_sampler(rng)
        try:
            ring = policy.sample(chain, OutRef(denom, real), num_mixins, height, rng)
        except InsufficientOutputs:
            failures += 1
            if failures > 1000 and failures > 10 * rings:
                raise
            continue
        rings += 1
        ages.extend(int(now - times[i]) for i in ring.refs if i != real)
    history = now - chain.block_time(0)
    return HistogramDensity.from_ages(ages[:n_samples], max_age=history + 1, num_bins=num_bins,
                                      pseudocount=pseudocount)


@dataclass
class PointResult:
    policy: str
    num_mixins: int
    trials: int
    gn_rate: float
    gn_ci_lo: float
    gn_ci_hi: float
    eff_untrace_mean: float
    eu_ci_lo: float
    eu_ci_hi: float
    skips: int

    @property
    def eu_halfwidth(self) -> float:
        return 0.5 * (self.eu_ci_hi - self.eu_ci_lo)


@dataclass
class SimReport:
    points: list[PointResult] = field(default_factory=list)

    def point(self, policy: str, num_mixins: int) -> PointResult:
        for p in self.points:
            if p.policy == policy and p.num_mixins == num_mixins:
                return p
        raise KeyError((policy, num_mixins))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for p in self.points:
            writer.writerow([p.policy, p.num_mixins, p.trials, f"{p.gn_rate:.6f}", f"{p.gn_ci_lo:.6f}",
                             f"{p.gn_ci_hi:.6f}", f"{p.eff_untrace_mean:.6f}", f"{p.eu_ci_lo:.6f}",
                             f"{p.eu_ci_hi:.6f}", p.skips])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


@dataclass
class SimConfig:
    chain: Chain
    records: Sequence[tuple[float, int]]
    policy: Policy | str
    mixins: Sequence[int] = (1, 2, 3, 4, 5, 6, 7, 8, 9, 10)
    trials: int = 10_000
    fixed_height: int | None = None
    seed: int = 0
    spend_density: Callable = field(default_factory=LogGammaDensity)
    density_samples: int = 20_000
    density_pseudocount: float = 0.5
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.policy, str):
            self.policy = parse_policy(self.policy)
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.records:
            raise ValueError("no spend records")
        if self.fixed_height is None:
            self.fixed_height = self.chain.height
        if not 0 <= self.fixed_height <= self.chain.height:
            raise ValueError(f"fixed_height {self.fixed_height} outside chain 0..{self.chain.height}")


_WORKER_STATE: tuple = ()


def _init_worker(*state) -> None:
    global _WORKER_STATE
    _WORKER_STATE = state


def _worker_batch(args):
    return _trial_batch(*_WORKER_STATE, *args)


def _trial_batch(chain, policy, records, height, spend_density, seed, m, trial_ids, densities):
    now = chain.block_time(height)
    out = []
    for t in trial_ids:
        rng = np.random.default_rng([seed, m, t])
        spend_time, denom = records[int(rng.integers(len(records)))]
        try:
            real = resolve_real_output(chain, denom, spend_time, height, rng)
            ring = policy.sample(chain, OutRef(denom, real), m, height, rng)
        except (InsufficientOutputs, NonTerminating):
            out.append(None)
            continue
        hit = guess_newest(ring) == real
        if m == 0:
            eu = 1.0
        else:
            times = chain.output_times(denom)
            ages = np.array([now - times[i] for i in ring.refs], dtype=float)
            eu = posterior_real_spend(ages, spend_density, densities[denom]).effective_untraceability
        out.append((hit, eu))
    return out


def _real_sampler(chain: Chain, records, denom: int, height: int):
    recs = [r for r in records if r[1] == denom] or list(records)

    def draw(rng):
        spend_time, _ = recs[int(rng.integers(len(recs)))]
        return resolve_real_output(chain, denom, spend_time, height, rng)
    return draw


def simulate_policy(cfg: SimConfig) -> SimReport:
    chain, policy, height = cfg.chain, cfg.policy, cfg.fixed_height
    records = [(float(s), int(d)) for s, d in cfg.records]
    denoms = sorted({d for _, d in records})
    report = SimReport()
    workers = max(1, int(cfg.workers))
    shared = (chain, policy, records, height, cfg.spend_density)
    pool = ProcessPoolExecutor(workers, initializer=_init_worker, initargs=shared) if workers > 1 else None
    try:
        for m in cfg.mixins:
            if not policy.ring_size_ok(m):
                raise ValueError(f"policy {policy} cannot build rings with {m} mixins")
            densities = {}
            if m > 0:
                for d in denoms:
                    drng = np.random.default_rng([cfg.seed, m, 2**32 - 1, d])
                    try:
                        densities[d] = estimate_mixin_age_density(
                            policy, chain, height, cfg.density_samples, drng, num_mixins=m, denom=d,
                            real_sampler=_real_sampler(chain, records, d, height),
                            pseudocount=cfg.density_pseudocount)
                    except InsufficientOutputs as exc:
                        raise SimulationError(f"cannot estimate mixin ages for {policy} at {m} mixins: {exc}") from exc
            ids = list(range(cfg.trials))
            chunks = [ids[k::workers] for k in range(workers)]
            jobs = [(cfg.seed, m, c, densities) for c in chunks]
            parts = list(pool.map(_worker_batch, jobs)) if pool else [_trial_batch(*shared, *jobs[0])]
            results = [None] * cfg.trials
            for c, part in zip(chunks, parts):
                for t, r in zip(c, part):
                    results[t] = r
            done = [r for r in results if r is not None]
            skips = cfg.trials - len(done)
            if skips > MAX_SKIP_FRACTION * cfg.trials:
                raise SimulationError(
                    f"{skips}/{cfg.trials} trials skipped for {policy} at {m} mixins (insufficient outputs)")
            hits = sum(h for h, _ in done)
            n = len(done)
            lo, hi = wilson_interval(hits, n)
            eus = np.array([e for _, e in done])
            mean = float(eus.mean()) if n else float("nan")
            half = 1.959964 * float(eus.std(ddof=1)) / math.sqrt(n) if n > 1 else float("inf")
            report.points.append(PointResult(str(policy), m, n, hits / n if n else float("nan"),
                                             lo, hi, mean, mean - half, mean + half, skips))
    finally:
        if pool:
            pool.shutdown()
    return report


def default_workers() -> int:
    return int(os.environ.get("RINGTRACE_THREADS", "1"))


# spend-time fitting ---------------------------------------------------------

class GammaFit(NamedTuple):
    shape: float
    rate: float


def fit_gamma_log_spendtime(spendtimes_s: Sequence[float]) -> GammaFit:
    """Maximum-likelihood Gamma(shape, rate) for ``ln(spend time in seconds)``."""
    s = np.asarray(spendtimes_s, dtype=float)
    if s.size < 100:
        raise DegenerateData(f"need at least 100 spend times, got {s.size}")
    if np.any(s <= 1.0):
        raise DegenerateData("spend times must exceed 1 second")
    logs = np.log(s)
    if np.var(logs) == 0:
        raise DegenerateData("all spend times are equal")
    shape, _, scale = stats.gamma.fit(logs, floc=0)
    return GammaFit(float(shape), float(1.0 / scale))


def ks_distance(samples: Sequence[float], reference_cdf: Callable) -> float:
    """Supremum distance between the empirical CDF of ``samples`` and ``reference_cdf``."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise ValueError("no samples")
    f = np.asarray(reference_cdf(x), dtype=float)
    above = np.arange(1, n + 1) / n - f
    below = f - np.arange(0, n) / n
    return float(max(above.max(), below.max()))


def gamma_fit_report(spendtimes_s: Sequence[float]) -> dict:
    fit = fit_gamma_log_spendtime(spendtimes_s)
    logs = np.log(np.asarray(spendtimes_s, dtype=float))
    ks = ks_distance(logs, lambda v: stats.gamma.cdf(v, fit.shape, scale=1.0 / fit.rate))
    return {"shape": fit.shape, "rate": fit.rate, "ks": ks, "n": int(logs.size)}
