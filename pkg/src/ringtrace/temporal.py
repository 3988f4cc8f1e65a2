"""
Temporal-analysis metrics.

Guessing entropy ``Ge`` is the expected number of wrong guesses an analyst makes
when trying ring members in decreasing order of probability; effective
untraceability is ``1 + 2 Ge`` and equals the ring size for a uniform posterior.

The posterior over ring members follows from Bayes' rule when the analyst knows
both the spend-time density ``D_S`` and the mixin-sampling density ``D_M``:
``p_i`` is proportional to ``D_S(x_i) / D_M(x_i)``.  The worst case over ages,
parameterized by the maximum percent error ``eps`` between the two densities,
gives closed forms for single and binned sampling.

Densities are functions of output age in seconds.  The ones provided here
(:class:`LogGammaDensity`, :class:`HistogramDensity`) are densities of
``ln(age)``; a posterior only uses ratios, so any common change of variable
cancels as long as both densities use the same one.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special, stats

from .errors import DegenerateRing, NonNormalized

Density = Callable[[np.ndarray], np.ndarray]

NORMALIZATION_TOL = 1e-6

# (total mixins, bin size) rows of the min-untraceability table
TABLE4_CONFIGS = [(5, 1), (5, 2), (5, 3), (7, 1), (7, 2), (7, 4), (8, 1), (8, 3)]
TABLE4_EPSILONS = [0.0, 0.25, 0.5, 0.75, 1.0]


def guess_newest(ring) -> int:
    """The ring member with the largest global index (youngest output)."""
    refs = getattr(ring, "refs", ring)
    if len(refs) == 0:
        raise ValueError("empty ring")
    return max(refs)


def guessing_entropy(probs: Sequence[float]) -> float:
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise NonNormalized("probabilities must be a non-empty vector")
    if np.any(p < 0) or abs(math.fsum(p) - 1.0) > NORMALIZATION_TOL:
        raise NonNormalized(f"probabilities must be >= 0 and sum to 1 (sum={math.fsum(p)!r})")
    p = np.sort(p)[::-1]
    return math.fsum(i * pi for i, pi in enumerate(p))


def effective_untraceability(probs: Sequence[float]) -> float:
    return 1.0 + 2.0 * guessing_entropy(probs)


@dataclass(frozen=True)
class RingPosterior:
    probs: np.ndarray

    @property
    def guessing_entropy(self) -> float:
        return guessing_entropy(self.probs)

    @property
    def effective_untraceability(self) -> float:
        return effective_untraceability(self.probs)


def posterior_real_spend(ages: Sequence[float], spend_density: Density,
                         mixin_density: Density) -> RingPosterior:
    """Probability that each ring member is the real spend, from its age.

    A member the mixin sampler can never produce (``D_M = 0``) while real spends
    can (``D_S > 0``) has an infinite ratio and takes all the mass.  Two such
    members leave the posterior undefined.
    """
    ages = np.asarray(ages, dtype=float)
    ds = np.asarray(spend_density(ages), dtype=float)
    dm = np.asarray(mixin_density(ages), dtype=float)
    if np.any(ds < 0) or np.any(dm < 0):
        raise DegenerateRing("densities must be non-negative")
    infinite = (dm == 0) & (ds > 0)
    if infinite.sum() > 1:
        raise DegenerateRing("several ring members have zero mixin density but positive spend density")
    if infinite.any():
        return RingPosterior(infinite.astype(float))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(dm > 0, ds / dm, 0.0)
    total = ratios.sum()
    if not total > 0:
        raise DegenerateRing("every ring member has zero likelihood ratio")
    return RingPosterior(ratios / total)


def _log_age(ages) -> np.ndarray:
    return np.log(np.maximum(np.asarray(ages, dtype=float), 1.0))


@dataclass(frozen=True)
class LogGammaDensity:
    """Gamma(shape, rate) density of ``ln(age)``; ages below 1 s count as 1 s."""

    shape: float = 19.28
    rate: float = 1.61

    def __call__(self, ages) -> np.ndarray:
        x = _log_age(ages)
        k, r = self.shape, self.rate
        with np.errstate(divide="ignore"):
            log_pdf = k * math.log(r) + (k - 1) * np.log(x) - r * x - special.gammaln(k)
        return np.exp(log_pdf)

    def cdf(self, ages) -> np.ndarray:
        return stats.gamma.cdf(_log_age(ages), self.shape, scale=1.0 / self.rate)


@dataclass(frozen=True)
class HistogramDensity:
    """Piecewise density of ``ln(age)`` over log-spaced age bins.

    ``edges`` are bin edges in log-age.  With ``interpolate`` the density is
    linear between bin centres (constant in the outer half-bins) and zero
    outside the edges.
    """

    edges: np.ndarray
    values: np.ndarray
    interpolate: bool = True

    @classmethod
    def from_ages(cls, ages, max_age: float, num_bins: int = 100, pseudocount: float = 0.0,
                  interpolate: bool = True) -> "HistogramDensity":
        upper = math.log(max(float(max_age), 1.0)) + 1e-9
        edges = np.linspace(0.0, max(upper, 1e-3), num_bins + 1)
        counts, _ = np.histogram(np.clip(_log_age(ages), 0.0, edges[-1]), bins=edges)
        counts = counts.astype(float) + pseudocount
        total = counts.sum()
        if total <= 0:
            raise ValueError("no ages to build a histogram from")
        return cls(edges, counts / (total * np.diff(edges)), interpolate)

    def integral(self) -> float:
        return float(np.sum(self.values * np.diff(self.edges)))

    def __call__(self, ages) -> np.ndarray:
        x = _log_age(ages)
        inside = (x >= self.edges[0]) & (x <= self.edges[-1])
        if self.interpolate:
            centres = 0.5 * (self.edges[:-1] + self.edges[1:])
            out = np.interp(x, centres, self.values)
        else:
            k = np.clip(np.searchsorted(self.edges, x, side="right") - 1, 0, len(self.values) - 1)
            out = self.values[k]
        return np.where(inside, out, 0.0)


# worst-case closed forms ----------------------------------------------------

def ge_min(m: int, epsilon: float) -> float:
    """Smallest guessing entropy over ring ages when ``D_S/D_M`` ranges over
    ``[1-eps, 1/(1-eps)]``: one member at the max ratio, ``m`` at the min."""
    if m < 0 or not 0.0 <= epsilon <= 1.0:
        raise ValueError("need m >= 0 and 0 <= epsilon <= 1")
    if epsilon == 1.0:
        return 0.0
    spread = 1.0 / (1.0 - epsilon) ** 2
    return 0.5 * m * (m + 1) / (spread + m)


def bge_min(bin_size: int, num_bins: int, epsilon: float) -> float:
    """Worst-case guessing entropy of a ring made of ``num_bins`` bins of
    ``bin_size`` equally-aged outputs."""
    if bin_size < 1 or num_bins < 1:
        raise ValueError("bin_size and num_bins must be >= 1")
    return bin_size * ge_min(num_bins - 1, epsilon) + (bin_size - 1) / 2.0


def min_untraceability(bin_size: int, num_bins: int, epsilon: float) -> float:
    return 1.0 + 2.0 * bge_min(bin_size, num_bins, epsilon)


def min_untraceability_table(configs=TABLE4_CONFIGS, epsilons=TABLE4_EPSILONS,
                             decimals: int | None = 2) -> list[dict]:
    rows = []
    for mixins, size in configs:
        if (mixins + 1) % size:
            raise ValueError(f"bin size {size} does not divide ring size {mixins + 1}")
        row = {"mixins": mixins, "bin_size": size}
        for eps in epsilons:
            value = min_untraceability(size, (mixins + 1) // size, eps)
            row[f"eps_{round(eps * 100)}"] = round(value, decimals) if decimals is not None else value
        rows.append(row)
    return rows


def table4_csv(decimals: int = 2) -> str:
    rows = min_untraceability_table(decimals=None)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["mixins", "bin_size"] + [f"eps_{round(e * 100)}" for e in TABLE4_EPSILONS])
    for row in rows:
        values = [row[f"eps_{round(e * 100)}"] for e in TABLE4_EPSILONS]
        writer.writerow([row["mixins"], row["bin_size"]] + [f"{v:.{decimals}f}" for v in values])
    return buf.getvalue()
