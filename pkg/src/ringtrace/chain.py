"""
Transaction-graph data model.

Outputs are indexed per denomination: the ``global_idx`` of an output is its
position in the blockchain-ordered list of outputs sharing its denomination.
Denomination 0 holds concealed-amount (RingCT-style) outputs, which all live in
one shared index.

A :class:`Chain` is built once, block by block, and treated as read-only
afterwards. All temporal queries (``top_global_index``, ``recent_zone_boundary``,
block search by timestamp) are answered from per-denomination lists with
``bisect``, so they stay cheap while a generator is still appending blocks.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, NamedTuple

from .errors import InvalidChain, MissingGroundTruth, NoSuchDenomination

CONCEALED = 0


class OutRef(NamedTuple):
    denom: int
    idx: int


@dataclass(frozen=True)
class Output:
    global_idx: int
    denomination: int
    block_height: int
    is_coinbase: bool = False

    @property
    def ref(self) -> OutRef:
        return OutRef(self.denomination, self.global_idx)


@dataclass(frozen=True)
class RingInput:
    """One transaction input: sorted candidate indices within ``denom``."""

    input_id: str
    denom: int
    refs: tuple[int, ...]

    def __post_init__(self):
        refs = tuple(int(r) for r in self.refs)
        object.__setattr__(self, "refs", refs)
        if not refs:
            raise InvalidChain(f"input {self.input_id!r} has no references")
        if any(b <= a for a, b in zip(refs, refs[1:])):
            raise InvalidChain(f"input {self.input_id!r} refs must be strictly ascending: {refs}")
        if refs[0] < 0:
            raise InvalidChain(f"input {self.input_id!r} has a negative reference")

    @property
    def num_mixins(self) -> int:
        return len(self.refs) - 1

    @property
    def ref_pairs(self) -> list[OutRef]:
        return [OutRef(self.denom, r) for r in self.refs]


@dataclass(frozen=True)
class Transaction:
    tx_id: str
    inputs: tuple[RingInput, ...] = ()
    outputs: tuple[Output, ...] = ()
    is_coinbase: bool = False

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        if self.is_coinbase and self.inputs:
            raise InvalidChain(f"coinbase tx {self.tx_id!r} has inputs")
        if not self.is_coinbase and not self.inputs:
            raise InvalidChain(f"tx {self.tx_id!r} has no inputs")


@dataclass(frozen=True)
class Block:
    height: int
    timestamp: int
    header_seed: bytes
    txs: tuple[Transaction, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "txs", tuple(self.txs))
        if len(self.header_seed) != 32:
            raise InvalidChain(f"block {self.height}: header_seed must be 32 bytes")
        if self.timestamp < 0:
            raise InvalidChain(f"block {self.height}: negative timestamp")


@dataclass
class _DenomIndex:
    # per output, in global_idx order
    heights: list[int] = field(default_factory=list)
    times: list[int] = field(default_factory=list)
    coinbase: list[bool] = field(default_factory=list)
    # per block that holds >= 1 output of this denomination
    block_heights: list[int] = field(default_factory=list)
    block_times: list[int] = field(default_factory=list)
    block_start: list[int] = field(default_factory=list)
    block_end: list[int] = field(default_factory=list)


class Chain:
    """Append-only sequence of blocks with a per-denomination output index."""

    def __init__(self, blocks: Iterable[Block] = ()):
        self.blocks: list[Block] = []
        self._block_times: list[int] = []
        self._index: dict[int, _DenomIndex] = {}
        self._inputs: dict[str, tuple[int, RingInput]] = {}
        self._tx_ids: set[str] = set()
        for block in blocks:
            self.append_block(block)

    # construction -------------------------------------------------------

    def next_global_index(self, denom: int) -> int:
        idx = self._index.get(denom)
        return len(idx.heights) if idx is not None else 0

    def append_block(self, block: Block) -> None:
        """Validate and append ``block``. Only construction code calls this."""
        if block.height != len(self.blocks):
            raise InvalidChain(f"expected block height {len(self.blocks)}, got {block.height}")
        if self._block_times and block.timestamp < self._block_times[-1]:
            raise InvalidChain(f"block {block.height}: timestamp decreases")

        counts: dict[int, int] = {}
        for tx in block.txs:
            if tx.tx_id in self._tx_ids:
                raise InvalidChain(f"duplicate tx_id {tx.tx_id!r}")
            for out in tx.outputs:
                expected = self.next_global_index(out.denomination) + counts.get(out.denomination, 0)
                if out.global_idx != expected:
                    raise InvalidChain(
                        f"block {block.height}: output of denom {out.denomination} has index "
                        f"{out.global_idx}, expected {expected}")
                if out.block_height != block.height:
                    raise InvalidChain(f"block {block.height}: output claims height {out.block_height}")
                if out.is_coinbase != tx.is_coinbase:
                    raise InvalidChain(f"tx {tx.tx_id!r}: output coinbase flag mismatch")
                counts[out.denomination] = counts.get(out.denomination, 0) + 1
        seen_inputs: set[str] = set()
        for tx in block.txs:
            for inp in tx.inputs:
                if inp.input_id in self._inputs or inp.input_id in seen_inputs:
                    raise InvalidChain(f"duplicate input_id {inp.input_id!r}")
                seen_inputs.add(inp.input_id)
                available = self.next_global_index(inp.denom) + counts.get(inp.denom, 0)
                if inp.refs[-1] >= available:
                    raise InvalidChain(
                        f"input {inp.input_id!r} references future output {inp.refs[-1]} "
                        f"of denom {inp.denom}")

        self.blocks.append(block)
        self._block_times.append(block.timestamp)
        for tx in block.txs:
            self._tx_ids.add(tx.tx_id)
            for inp in tx.inputs:
                self._inputs[inp.input_id] = (block.height, inp)
            for out in tx.outputs:
                di = self._index.setdefault(out.denomination, _DenomIndex())
                if not di.block_heights or di.block_heights[-1] != block.height:
                    di.block_heights.append(block.height)
                    di.block_times.append(block.timestamp)
                    di.block_start.append(out.global_idx)
                    di.block_end.append(out.global_idx + 1)
                else:
                    di.block_end[-1] = out.global_idx + 1
                di.heights.append(block.height)
                di.times.append(block.timestamp)
                di.coinbase.append(out.is_coinbase)

    # basic accessors ------------------------------------------------------

    def __len__(self) -> int:
        return len(self.blocks)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Chain):
            return NotImplemented
        return self.blocks == other.blocks

    def __repr__(self) -> str:
        return f"Chain(blocks={len(self.blocks)}, inputs={len(self._inputs)}, denoms={self.denominations})"

    @property
    def height(self) -> int:
        """Height of the tip block."""
        return len(self.blocks) - 1

    @property
    def denominations(self) -> list[int]:
        return sorted(self._index)

    def block_time(self, height: int) -> int:
        return self._block_times[height]

    @property
    def block_times(self) -> list[int]:
        return self._block_times

    def num_outputs(self, denom: int) -> int:
        return self.next_global_index(denom)

    def inputs(self) -> Iterator[tuple[int, RingInput]]:
        """Yield ``(block_height, ring_input)`` in blockchain order."""
        return iter(self._inputs.values())

    def num_inputs(self) -> int:
        return len(self._inputs)

    def get_input(self, input_id: str) -> tuple[int, RingInput]:
        return self._inputs[input_id]

    def outputs(self, denom: int | None = None) -> Iterator[Output]:
        for block in self.blocks:
            for tx in block.txs:
                for out in tx.outputs:
                    if denom is None or out.denomination == denom:
                        yield out

    def _denom(self, denom: int) -> _DenomIndex:
        di = self._index.get(denom)
        if di is None:
            raise NoSuchDenomination(f"no outputs of denomination {denom}")
        return di

    def output_height(self, denom: int, idx: int) -> int:
        return self._denom(denom).heights[idx]

    def output_time(self, denom: int, idx: int) -> int:
        return self._denom(denom).times[idx]

    def output_is_coinbase(self, denom: int, idx: int) -> bool:
        return self._denom(denom).coinbase[idx]

    def output_times(self, denom: int) -> list[int]:
        return self._denom(denom).times

    def output_heights(self, denom: int) -> list[int]:
        return self._denom(denom).heights

    # temporal queries -----------------------------------------------------

    def top_global_index(self, denom: int, height: int) -> int:
        """Largest global index of ``denom`` created in blocks ``0..height``."""
        di = self._denom(denom)
        n = bisect.bisect_right(di.heights, height)
        if n == 0:
            raise NoSuchDenomination(f"no outputs of denomination {denom} by height {height}")
        return n - 1

    def recent_zone_boundary(self, denom: int, height: int, window_seconds: int) -> int:
        """Newest ``denom`` output whose block is at least ``window_seconds`` older than
        block ``height``; -1 when every output is inside the window."""
        if window_seconds <= 0:
            raise ValueError("window_seconds must be positive")
        top = self.top_global_index(denom, height)
        cutoff = self._block_times[height] - window_seconds
        return bisect.bisect_right(self._denom(denom).times, cutoff, 0, top + 1) - 1

    def output_blocks(self, denom: int, height: int) -> tuple[list[int], list[int]]:
        """Heights and timestamps of blocks up to ``height`` holding ``denom`` outputs.

        The returned lists may extend past ``height``; callers bound them with
        :meth:`num_output_blocks`.
        """
        di = self._denom(denom)
        return di.block_heights, di.block_times

    def num_output_blocks(self, denom: int, height: int) -> int:
        return bisect.bisect_right(self._denom(denom).block_heights, height)

    def block_output_range(self, denom: int, k: int) -> range:
        """Global indices of ``denom`` in the ``k``-th block that holds any."""
        di = self._denom(denom)
        return range(di.block_start[k], di.block_end[k])

    def nearest_output_block(self, denom: int, height: int, target_time: float) -> int:
        """Position (into :meth:`output_blocks`) of the block at or below ``height`` that
        holds a ``denom`` output and whose timestamp is closest to ``target_time``.
        Ties go to the older block."""
        di = self._denom(denom)
        n = bisect.bisect_right(di.block_heights, height)
        if n == 0:
            raise NoSuchDenomination(f"no outputs of denomination {denom} by height {height}")
        pos = bisect.bisect_left(di.block_times, target_time, 0, n)
        if pos == 0:
            return 0
        if pos == n:
            return n - 1
        before, after = di.block_times[pos - 1], di.block_times[pos]
        return pos - 1 if target_time - before <= after - target_time else pos

    def spend_time(self, input_id: str, ground_truth: Mapping[str, int]) -> int:
        """Seconds between the real referenced output's block and the spending block."""
        height, ring = self._inputs[input_id]
        try:
            real = ground_truth[input_id]
        except KeyError:
            raise MissingGroundTruth(f"no ground truth for input {input_id!r}") from None
        return self._block_times[height] - self._denom(ring.denom).times[real]


# module-level aliases matching the operation names used throughout the package

def top_global_index(chain: Chain, denom: int, height: int) -> int:
    return chain.top_global_index(denom, height)


def recent_zone_boundary(chain: Chain, denom: int, height: int, window_seconds: int) -> int:
    return chain.recent_zone_boundary(denom, height, window_seconds)


def spend_time(chain: Chain, input_id: str, ground_truth: Mapping[str, int]) -> int:
    return chain.spend_time(input_id, ground_truth)


class GroundTruth(dict):
    """``input_id -> global_idx`` of the real spend. Kept apart from the chain."""

    def validate(self, chain: Chain) -> None:
        spent: dict[OutRef, str] = {}
        for _, ring in chain.inputs():
            if ring.input_id not in self:
                raise MissingGroundTruth(f"no ground truth for input {ring.input_id!r}")
            real = self[ring.input_id]
            if real not in ring.refs:
                raise InvalidChain(f"real spend {real} of {ring.input_id!r} is not among its refs")
            key = OutRef(ring.denom, real)
            if key in spent:
                raise InvalidChain(
                    f"output {key} spent by both {spent[key]!r} and {ring.input_id!r}")
            spent[key] = ring.input_id
