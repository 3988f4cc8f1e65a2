"""
Mixin selection policies.

Historical client models:

``pre_0_9``   uniform candidates over every output of the denomination
``v0_9``      candidates from a triangular (newer-favouring) distribution
``v0_10_1``   a quota of uniform candidates from the last 5 days, rest triangular
``v0_11_0``   a larger quota from the last 1.8 days, triangular inside the zone too

All four gather ``floor(1.5 (M + 1) + 1)`` distinct candidates and then keep a
uniform subset of ``M``.

Countermeasures:

``gamma``     ages drawn from a log-gamma spend-time model, mapped to the
              nearest block that holds an output of the denomination
``binned``    rings made of whole bins of near-simultaneous outputs; single
              candidates come from an inner policy and are expanded to their bin

Every sampler takes a ``numpy.random.Generator`` and returns a sorted
:class:`~ringtrace.chain.RingInput` that contains the real output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .chain import Chain, OutRef, RingInput
from .errors import IndivisibleRing, InsufficientBins, InsufficientOutputs, NonTerminating

DAY = 86_400
RECENT_WINDOW_V0_10_1 = 5 * DAY
RECENT_WINDOW_V0_11_0 = 155_520  # 1.8 days
RECENT_RATIO_V0_10_1 = 0.25
RECENT_RATIO_V0_11_0 = 0.5
GAMMA_SHAPE = 19.28
GAMMA_RATE = 1.61
BIN_CONFIRMATIONS = 10
MAX_DRAWS = 1_000_000

POLICY_NAMES = ("pre_0_9", "v0_9", "v0_10_1", "v0_11_0", "gamma", "binned")


def base_request_count(num_mixins: int) -> int:
    return math.floor((num_mixins + 1) * 1.5 + 1)


def triangle_select(lo: int, hi: int, rng: np.random.Generator) -> int:
    """Index in ``[lo, hi]`` with probability increasing linearly towards ``hi``."""
    if lo > hi:
        raise ValueError(f"empty range [{lo}, {hi}]")
    i = lo + int((hi - lo + 1) * math.sqrt(rng.random()))
    return min(i, hi)


def uniform_select(lo: int, hi: int, rng: np.random.Generator) -> int:
    return lo + int(rng.integers(hi - lo + 1))


def _resolve_real(chain: Chain, real_out, height: int) -> tuple[int, int, int]:
    denom, idx = (real_out.denom, real_out.idx) if isinstance(real_out, OutRef) else real_out
    top = chain.top_global_index(denom, height)
    if not 0 <= idx <= top:
        raise InsufficientOutputs(f"real output {idx} of denom {denom} does not exist by height {height}")
    return denom, idx, top


def _check_pool(top: int, num_mixins: int, denom: int) -> None:
    if num_mixins < 0:
        raise ValueError("num_mixins must be >= 0")
    if top < num_mixins:
        raise InsufficientOutputs(
            f"{num_mixins} mixins requested but only {top} other outputs of denom {denom} exist")


def _collect(vector: list[int], seen: set[int], count: int, draw: Callable[[], int], real: int) -> None:
    draws = 0
    while len(vector) < count:
        draws += 1
        if draws > MAX_DRAWS:
            raise NonTerminating(f"no new candidate after {MAX_DRAWS} draws")
        i = draw()
        if i != real and i not in seen:
            seen.add(i)
            vector.append(i)


def _finish(vector: list[int], num_mixins: int, real: int, denom: int,
            rng: np.random.Generator, input_id: str) -> RingInput:
    if num_mixins:
        picks = rng.choice(len(vector), size=num_mixins, replace=False)
        chosen = [vector[k] for k in picks]
    else:
        chosen = []
    return RingInput(input_id, denom, tuple(sorted(chosen + [real])))


def sample_pre_0_9(chain: Chain, real_out, num_mixins: int, height: int,
                   rng: np.random.Generator, input_id: str = "") -> RingInput:
    denom, real, top = _resolve_real(chain, real_out, height)
    _check_pool(top, num_mixins, denom)
    target = min(base_request_count(num_mixins), top)
    vector: list[int] = []
    _collect(vector, set(), target, lambda: uniform_select(0, top, rng), real)
    return _finish(vector, num_mixins, real, denom, rng, input_id)


def sample_v0_9(chain: Chain, real_out, num_mixins: int, height: int,
                rng: np.random.Generator, input_id: str = "") -> RingInput:
    denom, real, top = _resolve_real(chain, real_out, height)
    _check_pool(top, num_mixins, denom)
    target = min(base_request_count(num_mixins), top)
    vector: list[int] = []
    _collect(vector, set(), target, lambda: triangle_select(0, top, rng), real)
    return _finish(vector, num_mixins, real, denom, rng, input_id)


def recent_quota(num_mixins: int, top: int, recent: int, real: int, ratio: float) -> int:
    """Number of candidates drawn from the recent zone before the main fill."""
    base = base_request_count(num_mixins)
    quota = max(1, min(top - recent + 1, math.floor(base * ratio)))
    if real > recent:
        quota -= 1
    return quota


def _sample_recent(chain, real_out, num_mixins, height, rng, input_id, window, ratio, triangular_zone):
    denom, real, top = _resolve_real(chain, real_out, height)
    _check_pool(top, num_mixins, denom)
    target = min(base_request_count(num_mixins), top)
    recent = chain.recent_zone_boundary(denom, height, window)
    zone_lo = max(recent, 0)
    zone_free = (top - zone_lo + 1) - (zone_lo <= real)
    quota = min(recent_quota(num_mixins, top, recent, real, ratio), zone_free, target)
    select = triangle_select if triangular_zone else uniform_select
    vector: list[int] = []
    seen: set[int] = set()
    _collect(vector, seen, quota, lambda: select(zone_lo, top, rng), real)
    _collect(vector, seen, target, lambda: triangle_select(0, top, rng), real)
    return _finish(vector, num_mixins, real, denom, rng, input_id)


def sample_v0_10_1(chain: Chain, real_out, num_mixins: int, height: int, rng: np.random.Generator,
                   input_id: str = "", window: int = RECENT_WINDOW_V0_10_1,
                   ratio: float = RECENT_RATIO_V0_10_1) -> RingInput:
    return _sample_recent(chain, real_out, num_mixins, height, rng, input_id, window, ratio, False)


def sample_v0_11_0(chain: Chain, real_out, num_mixins: int, height: int, rng: np.random.Generator,
                   input_id: str = "", window: int = RECENT_WINDOW_V0_11_0,
                   ratio: float = RECENT_RATIO_V0_11_0) -> RingInput:
    return _sample_recent(chain, real_out, num_mixins, height, rng, input_id, window, ratio, True)


def sample_gamma(chain: Chain, real_out, num_mixins: int, height: int, rng: np.random.Generator,
                 shape: float = GAMMA_SHAPE, rate: float = GAMMA_RATE,
                 input_id: str = "") -> RingInput:
    """Mixins whose ages follow ``exp(Gamma(shape, rate))`` seconds.

    Ages beyond the chain's history at ``height`` are redrawn; a chain with a
    single block has no history to compare against and every draw lands there.
    """
    denom, real, top = _resolve_real(chain, real_out, height)
    _check_pool(top, num_mixins, denom)
    now = chain.block_time(height)
    history = now - chain.block_time(0)
    scale = 1.0 / rate
    mixins: list[int] = []
    seen: set[int] = set()
    draws = 0
    while len(mixins) < num_mixins:
        draws += 1
        if draws > MAX_DRAWS:
            raise NonTerminating(f"gamma sampler found no new mixin after {MAX_DRAWS} draws")
        age = math.exp(rng.gamma(shape, scale))
        if history > 0 and age > history:
            continue
        block = chain.block_output_range(denom, chain.nearest_output_block(denom, height, now - age))
        i = block.start + int(rng.integers(len(block)))
        if i != real and i not in seen:
            seen.add(i)
            mixins.append(i)
    return RingInput(input_id, denom, tuple(sorted(mixins + [real])))


# binning --------------------------------------------------------------------

@dataclass
class BinMap:
    """Assignment of outputs of one denomination to bins.

    Bins are listed in creation order.  Outputs that could not be completed
    into a bin with their own or the next block are merged into the most recent
    complete bin once they have ``confirmations`` blocks on top; until then
    they have no bin and cannot be referenced by binned rings.
    """

    denom: int
    bin_size: int
    height: int
    members: list[list[int]] = field(default_factory=list)
    bin_of: dict[int, int] = field(default_factory=dict)
    last_complete_bin_id: int = -1
    undersized: bool = False

    def bin_members(self, idx: int) -> tuple[int, ...]:
        return tuple(sorted(self.members[self.bin_of[idx]]))

    @property
    def num_bins(self) -> int:
        return len(self.members)


class BinAssigner:
    """Incremental bin assignment; ``advance(h)`` is equivalent to assigning
    bins from scratch over blocks ``0..h``.

    Within each block the outputs are shuffled with a generator seeded by the
    block's ``header_seed``, cut into bins, and the remainder is completed with
    the next block's first shuffled outputs.  With ``separate_coinbase``
    coinbase and regular outputs are binned in separate streams.
    """

    def __init__(self, chain: Chain, bin_size: int, denom: int | None = None,
                 separate_coinbase: bool = False, confirmations: int = BIN_CONFIRMATIONS):
        if bin_size < 1:
            raise ValueError("bin_size must be >= 1")
        if denom is None:
            if len(chain.denominations) != 1:
                raise ValueError("chain has several denominations; pass denom explicitly")
            denom = chain.denominations[0]
        self.chain = chain
        self.separate_coinbase = separate_coinbase
        self.confirmations = confirmations
        self.map = BinMap(denom, bin_size, -1)
        self._next_block = 0          # position in the chain's per-denomination block list
        self._carry: dict[bool, tuple[int, list[int]]] = {}
        self._stranded: list[tuple[int, int, list[int]]] = []  # (height, target bin, outputs)
        self._orphans: list[int] = []  # outputs stranded before any bin existed

    def _emit(self, outs) -> None:
        m = self.map
        bid = len(m.members)
        m.members.append([int(o) for o in outs])
        for o in m.members[bid]:
            m.bin_of[o] = bid
        m.last_complete_bin_id = bid

    def _strand(self, height: int, outs: list[int]) -> None:
        self._stranded.append((height, self.map.last_complete_bin_id, outs))

    def _shuffle(self, block_height: int, stream: bool, outs: list[int]) -> list[int]:
        seed = int.from_bytes(self.chain.blocks[block_height].header_seed, "big")
        rng = np.random.default_rng([seed, self.map.denom, int(stream)])
        return [outs[k] for k in rng.permutation(len(outs))]

    def advance(self, height: int) -> BinMap:
        if height < self.map.height:
            raise ValueError("BinAssigner only moves forward")
        chain, m, size = self.chain, self.map, self.map.bin_size
        n_blocks = chain.num_output_blocks(m.denom, height)
        heights, _ = chain.output_blocks(m.denom, height)
        for k in range(self._next_block, n_blocks):
            b = heights[k]
            streams: dict[bool, list[int]] = {}
            for i in chain.block_output_range(m.denom, k):
                key = chain.output_is_coinbase(m.denom, i) if self.separate_coinbase else False
                streams.setdefault(key, []).append(i)
            for key in sorted(set(streams) | set(self._carry)):
                outs = self._shuffle(b, key, streams[key]) if key in streams else []
                carry = self._carry.pop(key, None)
                if carry is not None:
                    c_height, c_outs = carry
                    need = size - len(c_outs)
                    if c_height == b - 1 and len(outs) >= need:
                        self._emit(c_outs + outs[:need])
                        outs = outs[need:]
                    else:
                        self._strand(c_height, c_outs)
                full = len(outs) - len(outs) % size
                for j in range(0, full, size):
                    self._emit(outs[j:j + size])
                if full < len(outs):
                    self._carry[key] = (b, outs[full:])
        self._next_block = n_blocks
        # a carry whose successor block exists but brought nothing for its stream
        for key, (c_height, c_outs) in list(self._carry.items()):
            if c_height < height:
                del self._carry[key]
                self._strand(c_height, c_outs)
        m.height = height
        self._merge_confirmed(height)
        return m

    def _merge_confirmed(self, height: int) -> None:
        m = self.map
        keep = []
        for s_height, target, outs in self._stranded:
            if height - s_height < self.confirmations:
                keep.append((s_height, target, outs))
                continue
            if target < 0:
                target = 0 if m.members else -1
            if target < 0:
                self._orphans.extend(outs)
                continue
            m.members[target].extend(outs)
            for o in outs:
                m.bin_of[o] = target
            m.undersized = m.undersized or len(m.members[target]) < m.bin_size
        self._stranded = keep
        if self._orphans and m.members:
            target = 0
            m.members[target].extend(self._orphans)
            for o in self._orphans:
                m.bin_of[o] = target
            self._orphans = []
        elif self._orphans and not m.members:
            # fewer outputs than one bin in total: a single flagged undersized bin
            m.members.append(list(self._orphans))
            for o in self._orphans:
                m.bin_of[o] = 0
            m.undersized = True
            self._orphans = []


def assign_bins(chain: Chain, bin_size: int, height: int, denom: int | None = None,
                separate_coinbase: bool = False) -> BinMap:
    return BinAssigner(chain, bin_size, denom, separate_coinbase).advance(height)


def sample_binned(chain: Chain, real_out, num_mixins: int, bin_size: int, inner_policy: "Policy",
                  height: int, rng: np.random.Generator, bins: BinMap | None = None,
                  input_id: str = "") -> RingInput:
    """Ring made of the real output's bin plus whole bins located through single
    candidates from ``inner_policy``.

    The ring spans exactly ``(num_mixins + 1) / bin_size`` distinct bins; it has
    ``num_mixins + 1`` members unless a bin absorbed stranded outputs.
    """
    if (num_mixins + 1) % bin_size:
        raise IndivisibleRing(f"bin size {bin_size} does not divide ring size {num_mixins + 1}")
    denom, real, _ = _resolve_real(chain, real_out, height)
    if bins is None:
        bins = assign_bins(chain, bin_size, height, denom)
    num_bins = (num_mixins + 1) // bin_size
    real_bin = bins.bin_of.get(real)
    if real_bin is None:
        raise InsufficientBins(f"real output {real} is not in a complete bin yet")
    if bins.num_bins < num_bins:
        raise InsufficientBins(f"{num_bins} bins needed, {bins.num_bins} exist")
    vector = set(bins.members[real_bin])
    used = {real_bin}
    draws = 0
    while len(used) < num_bins:
        draws += 1
        if draws > MAX_DRAWS:
            raise NonTerminating(f"binned sampler found no new bin after {MAX_DRAWS} draws")
        cand = inner_policy.draw_single(chain, OutRef(denom, real), height, rng)
        if cand in vector:
            continue
        b = bins.bin_of.get(cand)
        if b is None:
            continue
        used.add(b)
        vector.update(bins.members[b])
    return RingInput(input_id, denom, tuple(sorted(vector)))


# policy objects -----------------------------------------------------------

@dataclass
class Policy:
    """A named mixin policy with its parameters.

    String form (``str(policy)`` / :func:`parse_policy`)::

        pre_0_9 | v0_9 | v0_10_1[:window_s,ratio] | v0_11_0[:window_s,ratio]
        gamma[:shape,rate] | binned[:bin_size[,inner]]
    """

    name: str
    recent_window_s: int | None = None
    recent_ratio: float | None = None
    shape: float = GAMMA_SHAPE
    rate: float = GAMMA_RATE
    bin_size: int = 2
    inner: "Policy | None" = None
    separate_coinbase: bool = False
    _assigners: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.name not in POLICY_NAMES:
            raise ValueError(f"unknown policy {self.name!r}; expected one of {', '.join(POLICY_NAMES)}")
        if self.name == "v0_10_1":
            self.recent_window_s = self.recent_window_s or RECENT_WINDOW_V0_10_1
            self.recent_ratio = self.recent_ratio or RECENT_RATIO_V0_10_1
        elif self.name == "v0_11_0":
            self.recent_window_s = self.recent_window_s or RECENT_WINDOW_V0_11_0
            self.recent_ratio = self.recent_ratio or RECENT_RATIO_V0_11_0
        if self.recent_ratio is not None and not 0 < self.recent_ratio <= 1:
            raise ValueError("recent_ratio must be in (0, 1]")
        if self.recent_window_s is not None and self.recent_window_s <= 0:
            raise ValueError("recent window must be positive")
        if self.shape <= 0 or self.rate <= 0:
            raise ValueError("gamma shape and rate must be positive")
        if self.bin_size < 1:
            raise ValueError("bin_size must be >= 1")
        if self.name == "binned":
            self.inner = self.inner or Policy("gamma")
            if self.inner.name == "binned":
                raise ValueError("binned policy cannot nest another binned policy")

    def __str__(self) -> str:
        if self.name in ("v0_10_1", "v0_11_0"):
            default = (RECENT_WINDOW_V0_10_1, RECENT_RATIO_V0_10_1) if self.name == "v0_10_1" \
                else (RECENT_WINDOW_V0_11_0, RECENT_RATIO_V0_11_0)
            if (self.recent_window_s, self.recent_ratio) != default:
                return f"{self.name}:{self.recent_window_s},{self.recent_ratio:g}"
        if self.name == "gamma":
            return f"gamma:{self.shape:g},{self.rate:g}"
        if self.name == "binned":
            return f"binned:{self.bin_size},{self.inner}"
        return self.name

    def ring_size_ok(self, num_mixins: int) -> bool:
        return self.name != "binned" or (num_mixins + 1) % self.bin_size == 0

    def bins(self, chain: Chain, denom: int, height: int) -> BinMap:
        key = (id(chain), denom)
        assigner = self._assigners.get(key)
        if assigner is None or assigner.chain is not chain or assigner.map.height > height:
            assigner = BinAssigner(chain, self.bin_size, denom, self.separate_coinbase)
            self._assigners[key] = assigner
        if assigner.map.height < height:
            assigner.advance(height)
        return assigner.map

    def sample(self, chain: Chain, real_out, num_mixins: int, height: int,
               rng: np.random.Generator, input_id: str = "") -> RingInput:
        n = self.name
        if n == "pre_0_9":
            return sample_pre_0_9(chain, real_out, num_mixins, height, rng, input_id)
        if n == "v0_9":
            return sample_v0_9(chain, real_out, num_mixins, height, rng, input_id)
        if n == "v0_10_1":
            return sample_v0_10_1(chain, real_out, num_mixins, height, rng, input_id,
                                  self.recent_window_s, self.recent_ratio)
        if n == "v0_11_0":
            return sample_v0_11_0(chain, real_out, num_mixins, height, rng, input_id,
                                  self.recent_window_s, self.recent_ratio)
        if n == "gamma":
            return sample_gamma(chain, real_out, num_mixins, height, rng, self.shape, self.rate, input_id)
        denom = real_out.denom if isinstance(real_out, OutRef) else real_out[0]
        return sample_binned(chain, real_out, num_mixins, self.bin_size, self.inner, height, rng,
                             self.bins(chain, denom, height), input_id)

    def draw_single(self, chain: Chain, real_out, height: int, rng: np.random.Generator) -> int:
        """One candidate mixin, i.e. the non-real member of a one-mixin ring."""
        ring = self.sample(chain, real_out, 1, height, rng)
        real = real_out.idx if isinstance(real_out, OutRef) else real_out[1]
        return ring.refs[0] if ring.refs[1] == real else ring.refs[1]


def parse_policy(text: str) -> Policy:
    name, _, args = text.strip().partition(":")
    parts = [a.strip() for a in args.split(",")] if args else []
    try:
        if name in ("pre_0_9", "v0_9"):
            if parts:
                raise ValueError(f"policy {name} takes no parameters")
            return Policy(name)
        if name in ("v0_10_1", "v0_11_0"):
            if len(parts) not in (0, 2):
                raise ValueError(f"{name} expects window_s,ratio")
            return Policy(name, int(parts[0]), float(parts[1])) if parts else Policy(name)
        if name in ("gamma", "gamma_fit"):
            if len(parts) not in (0, 2):
                raise ValueError("gamma expects shape,rate")
            return Policy("gamma", shape=float(parts[0]), rate=float(parts[1])) if parts else Policy("gamma")
        if name == "binned":
            size = int(parts[0]) if parts else 2
            inner = parse_policy(",".join(parts[1:])) if len(parts) > 1 else None
            return Policy("binned", bin_size=size, inner=inner)
    except (IndexError, TypeError) as exc:
        raise ValueError(f"bad policy spec {text!r}: {exc}") from None
    raise ValueError(f"unknown policy {name!r} in {text!r}")
