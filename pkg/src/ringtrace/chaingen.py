"""
Synthetic chain generation with ground truth, and the JSON Lines chain format.

Every non-coinbase input picks its real spend by drawing a spend time from the
configured model (truncated to the history available at that block) and
taking a random unspent output from the block whose age best matches it.
Chaff comes from a mixin policy evaluated against the chain as of the previous
block.  Spends that cannot be served yet (too few outputs for the ring, real
output not binned yet, no unspent output of the denomination) are deferred to
the next block and dropped after ``max_deferral_blocks`` attempts; both events
are counted and logged.
"""

from __future__ import annotations

import bisect
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import special, stats

from .chain import Block, Chain, GroundTruth, Output, OutRef, RingInput, Transaction
from .errors import ChainFormatError, InfeasibleConfig, InsufficientOutputs, InvalidChain, NonTerminating
from .sampling import parse_policy
from .temporal import LogGammaDensity

log = logging.getLogger(__name__)

SPEND_MODEL_KINDS = ("gamma_log_seconds", "exponential", "empirical")


@dataclass
class SpendTimeModel:
    """Distribution of the age (seconds) of an output when it is really spent.

    ``gamma_log_seconds``: ``ln(age) ~ Gamma(shape, rate)``.
    ``exponential``: ``age ~ Exp(rate)`` with ``rate`` in 1/seconds.
    ``empirical``: resample ``samples``.
    """

    kind: str = "gamma_log_seconds"
    shape: float = 19.28
    rate: float = 1.61
    samples: list[float] | None = None

    def __post_init__(self):
        if self.kind not in SPEND_MODEL_KINDS:
            raise ValueError(f"unknown spend-time model {self.kind!r}")
        if self.kind == "empirical":
            if not self.samples:
                raise ValueError("empirical spend-time model needs samples")
            if min(self.samples) <= 0:
                raise ValueError("spend times must be positive")
            self._sorted = np.sort(np.asarray(self.samples, dtype=float))
        elif self.rate <= 0 or (self.kind == "gamma_log_seconds" and self.shape <= 0):
            raise ValueError("spend-time model parameters must be positive")

    def cdf(self, seconds) -> np.ndarray:
        s = np.asarray(seconds, dtype=float)
        if self.kind == "gamma_log_seconds":
            return stats.gamma.cdf(np.log(np.maximum(s, 1e-300)), self.shape, scale=1.0 / self.rate)
        if self.kind == "exponential":
            return 1.0 - np.exp(-self.rate * np.maximum(s, 0.0))
        return np.searchsorted(self._sorted, s, side="right") / len(self._sorted)

    def sample(self, rng: np.random.Generator, max_age: float = math.inf) -> float:
        """One spend time, conditioned on not exceeding ``max_age``.

        Equivalent to redrawing until the value fits, done by inverting the
        truncated CDF so early blocks cost the same as late ones.
        """
        if self.kind == "empirical":
            n = np.searchsorted(self._sorted, max_age, side="right")
            if n == 0:
                raise InfeasibleConfig(f"no empirical spend time below {max_age}s")
            return float(self._sorted[rng.integers(n)])
        top = float(self.cdf(max_age)) if math.isfinite(max_age) else 1.0
        if top <= 0.0:
            raise InfeasibleConfig(f"spend-time model has no mass below {max_age}s")
        u = rng.random() * top
        if self.kind == "gamma_log_seconds":
            return math.exp(special.gammaincinv(self.shape, u) / self.rate)
        return -math.log1p(-u) / self.rate

    def log_age_density(self):
        """Density of ``ln(age)``, the convention of :mod:`ringtrace.temporal`."""
        if self.kind == "gamma_log_seconds":
            return LogGammaDensity(self.shape, self.rate)
        if self.kind == "exponential":
            rate = self.rate
            return lambda ages: (lambda a: rate * a * np.exp(-rate * a))(np.maximum(np.asarray(ages, float), 1.0))
        from .temporal import HistogramDensity
        return HistogramDensity.from_ages(self._sorted, max_age=float(self._sorted[-1]) + 1.0)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "shape": self.shape, "rate": self.rate}
        if self.samples is not None:
            d["samples"] = list(self.samples)
        return d


@dataclass
class GenConfig:
    num_blocks: int = 1000
    block_interval_s: int = 120
    txs_per_block: float = 2.0
    mixin_count_distribution: dict[int, float] = field(default_factory=lambda: {2: 1.0})
    spend_time_model: SpendTimeModel = field(default_factory=SpendTimeModel)
    denominations: list[int] = field(default_factory=lambda: [0])
    mixin_policy: str = "pre_0_9"
    seed: int = 0
    inputs_per_tx: int = 1
    outputs_per_tx: int = 2
    coinbase_outputs: int = 1
    genesis_timestamp: int = 1_400_000_000
    max_deferral_blocks: int = 20

    def __post_init__(self):
        if isinstance(self.spend_time_model, dict):
            self.spend_time_model = SpendTimeModel(**self.spend_time_model)
        self.mixin_count_distribution = {int(k): float(v) for k, v in self.mixin_count_distribution.items()}
        if self.num_blocks < 1:
            raise ValueError("num_blocks must be >= 1")
        if self.block_interval_s <= 0:
            raise ValueError("block_interval_s must be positive")
        if self.txs_per_block < 0:
            raise ValueError("txs_per_block must be >= 0")
        probs = list(self.mixin_count_distribution.values())
        if not probs or min(probs) < 0 or abs(math.fsum(probs) - 1.0) > 1e-9:
            raise ValueError("mixin_count_distribution must be non-negative and sum to 1")
        if min(self.mixin_count_distribution) < 0:
            raise ValueError("mixin counts must be >= 0")
        if not self.denominations or any(d < 0 for d in self.denominations):
            raise ValueError("denominations must be non-negative integers")
        if 0 in self.denominations and len(self.denominations) > 1:
            raise ValueError("concealed denomination 0 cannot be mixed with explicit denominations")
        if self.inputs_per_tx < 1 or self.outputs_per_tx < 1 or self.coinbase_outputs < 1:
            raise ValueError("inputs_per_tx, outputs_per_tx and coinbase_outputs must be >= 1")
        parse_policy(self.mixin_policy)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["spend_time_model"] = self.spend_time_model.to_dict()
        d["mixin_count_distribution"] = {str(k): v for k, v in sorted(self.mixin_count_distribution.items())}
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "GenConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {', '.join(sorted(unknown))}")
        return cls(**data)


def load_config(path) -> GenConfig:
    with open(path) as fh:
        return GenConfig.from_dict(json.load(fh))


@dataclass
class GenStats:
    inputs: int = 0
    deferred: int = 0
    dropped: int = 0


class _UnspentPool:
    """Unspent outputs of one denomination grouped by block, searchable by time."""

    def __init__(self):
        self.heights: list[int] = []
        self.times: list[int] = []
        self.outs: dict[int, list[int]] = {}

    def add(self, height: int, timestamp: int, idx: int) -> None:
        if height not in self.outs:
            self.heights.append(height)
            self.times.append(timestamp)
            self.outs[height] = []
        self.outs[height].append(idx)

    def nearest(self, target_time: float, max_height: int) -> int | None:
        n = bisect.bisect_right(self.heights, max_height)
        if n == 0:
            return None
        pos = bisect.bisect_left(self.times, target_time, 0, n)
        if pos == 0:
            return 0
        if pos == n:
            return n - 1
        return pos - 1 if target_time - self.times[pos - 1] <= self.times[pos] - target_time else pos

    def take(self, pos: int, k: int) -> int:
        h = self.heights[pos]
        bucket = self.outs[h]
        idx = bucket.pop(k)
        if not bucket:
            del self.outs[h]
            del self.heights[pos]
            del self.times[pos]
        return idx


def generate_chain_with_stats(config: GenConfig, strict: bool = False):
    rng = np.random.default_rng(config.seed)
    policy = parse_policy(config.mixin_policy)
    model = config.spend_time_model
    mix_values = np.array(sorted(config.mixin_count_distribution), dtype=int)
    mix_probs = np.array([config.mixin_count_distribution[m] for m in mix_values])
    mix_probs = mix_probs / mix_probs.sum()
    denoms = list(config.denominations)
    chain = Chain()
    truth = GroundTruth()
    pools = {d: _UnspentPool() for d in denoms}
    stats_ = GenStats()
    pending: list[tuple[int, int, int]] = []  # (denom, mixins, first attempt height)

    def new_outputs(h: int, count: int, coinbase: bool, next_idx: dict[int, int]) -> list[Output]:
        outs = []
        for d in rng.choice(denoms, size=count):
            d = int(d)
            outs.append(Output(next_idx[d], d, h, coinbase))
            next_idx[d] += 1
        return outs

    def spend(d: int, m: int, h: int, input_id: str) -> RingInput | None:
        pool = pools[d]
        now = config.genesis_timestamp + h * config.block_interval_s
        age = model.sample(rng, max_age=now - config.genesis_timestamp)
        pos = pool.nearest(now - age, h - 1)
        if pos is None:
            return None
        bucket = pool.outs[pool.heights[pos]]
        k = int(rng.integers(len(bucket)))
        try:
            ring = policy.sample(chain, OutRef(d, bucket[k]), m, h - 1, rng, input_id)
        except (InsufficientOutputs, NonTerminating):
            return None
        truth[input_id] = pool.take(pos, k)
        return ring

    for h in range(config.num_blocks):
        timestamp = config.genesis_timestamp + h * config.block_interval_s
        header_seed = rng.bytes(32)
        next_idx = {d: chain.next_global_index(d) for d in denoms}
        txs = [Transaction(f"b{h}.cb", (), new_outputs(h, config.coinbase_outputs, True, next_idx), True)]
        if h > 0:
            requests: list[list[tuple[int, int, int]]] = [[p] for p in pending]
            pending = []
            for _ in range(rng.poisson(config.txs_per_block)):
                k = min(config.inputs_per_tx, len(denoms))
                chosen = rng.choice(denoms, size=k, replace=False)
                requests.append([(int(d), int(rng.choice(mix_values, p=mix_probs)), h) for d in chosen])
            for t, request in enumerate(requests):
                tx_id = f"b{h}.t{t}"
                inputs = []
                for j, (d, m, first) in enumerate(request):
                    ring = spend(d, m, h, f"{tx_id}.i{j}")
                    if ring is not None:
                        inputs.append(ring)
                    elif h - first < config.max_deferral_blocks:
                        stats_.deferred += 1
                        pending.append((d, m, first))
                    else:
                        stats_.dropped += 1
                if inputs:
                    stats_.inputs += len(inputs)
                    txs.append(Transaction(tx_id, inputs, new_outputs(h, config.outputs_per_tx, False, next_idx)))
        block = Block(h, timestamp, header_seed, txs)
        chain.append_block(block)
        for tx in txs:
            for out in tx.outputs:
                pools[out.denomination].add(h, timestamp, out.global_idx)

    if stats_.deferred or stats_.dropped:
        log.info("generator deferred %d spends, dropped %d after %d blocks",
                 stats_.deferred, stats_.dropped, config.max_deferral_blocks)
    if strict and (stats_.dropped or pending):
        raise InfeasibleConfig(
            f"{stats_.dropped + len(pending)} spends could not be served by the available outputs")
    return chain, truth, stats_


def generate_chain(config: GenConfig, strict: bool = False) -> tuple[Chain, GroundTruth]:
    """Build a chain and its ground truth from ``config``; same config, same bytes."""
    chain, truth, _ = generate_chain_with_stats(config, strict)
    return chain, truth


# JSON Lines I/O -------------------------------------------------------------

def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"))


def block_to_json(block: Block) -> dict:
    return {
        "height": block.height,
        "timestamp": block.timestamp,
        "header_seed": block.header_seed.hex(),
        "txs": [
            {
                "tx_id": tx.tx_id,
                "coinbase": tx.is_coinbase,
                "inputs": [{"input_id": i.input_id, "denom": i.denom, "refs": list(i.refs)} for i in tx.inputs],
                "outputs": [{"denom": o.denomination} for o in tx.outputs],
            }
            for tx in block.txs
        ],
    }


def chain_paths(path_prefix) -> tuple[Path, Path]:
    prefix = str(path_prefix)
    return Path(prefix + ".chain.jsonl"), Path(prefix + ".truth.jsonl")


def write_chain(chain: Chain, ground_truth, path_prefix) -> tuple[Path, Path]:
    """Write ``<prefix>.chain.jsonl`` and, separately, ``<prefix>.truth.jsonl``."""
    chain_path, truth_path = chain_paths(path_prefix)
    with open(chain_path, "w", newline="\n") as fh:
        for block in chain.blocks:
            fh.write(_dumps(block_to_json(block)) + "\n")
    if ground_truth is not None:
        write_ground_truth(chain, ground_truth, truth_path)
    return chain_path, truth_path


def write_ground_truth(chain: Chain, ground_truth, path) -> None:
    with open(path, "w", newline="\n") as fh:
        for _, ring in chain.inputs():
            if ring.input_id in ground_truth:
                fh.write(_dumps({"input_id": ring.input_id, "real_ref": ground_truth[ring.input_id]}) + "\n")


def _parse_block(obj, next_idx: dict[int, int]) -> Block:
    txs = []
    height = int(obj["height"])
    for t in obj["txs"]:
        coinbase = bool(t["coinbase"])
        outputs = []
        for o in t["outputs"]:
            d = int(o["denom"])
            idx = next_idx.get(d, 0)
            next_idx[d] = idx + 1
            outputs.append(Output(idx, d, height, coinbase))
        inputs = [RingInput(str(i["input_id"]), int(i["denom"]), tuple(i["refs"])) for i in t["inputs"]]
        txs.append(Transaction(str(t["tx_id"]), inputs, outputs, coinbase))
    return Block(height, int(obj["timestamp"]), bytes.fromhex(obj["header_seed"]), txs)


def read_chain(path) -> Chain:
    chain = Chain()
    next_idx: dict[int, int] = {}
    last_good = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                block = _parse_block(json.loads(line), dict(next_idx))
                chain.append_block(block)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError, InvalidChain) as exc:
                raise ChainFormatError(f"{type(exc).__name__}: {exc}", lineno, last_good) from None
            for tx in block.txs:
                for out in tx.outputs:
                    next_idx[out.denomination] = out.global_idx + 1
            last_good = lineno
    if not chain.blocks:
        raise ChainFormatError(f"{path}: no blocks")
    return chain


def read_ground_truth(path) -> GroundTruth:
    truth = GroundTruth()
    last_good = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                truth[str(obj["input_id"])] = int(obj["real_ref"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ChainFormatError(f"{type(exc).__name__}: {exc}", lineno, last_good) from None
            last_good = lineno
    return truth
