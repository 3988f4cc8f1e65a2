"""Small hand-built chains used by tests, demos and the CLI smoke checks."""

from __future__ import annotations

import hashlib
from typing import Sequence

from .chain import Block, Chain, GroundTruth, Output, RingInput, Transaction

GENESIS_TIME = 1_500_000_000


def _seed(label: str) -> bytes:
    return hashlib.sha256(label.encode()).digest()


def chain_from_rings(
    rings: Sequence[Sequence[int]],
    num_outputs: int | None = None,
    denom: int = 0,
    input_ids: Sequence[str] | None = None,
    separate_blocks: bool = False,
    block_interval: int = 120,
) -> Chain:
    """Block 0 mints ``num_outputs`` coinbase outputs; later blocks hold one
    single-input transaction per ring (all in block 1 unless ``separate_blocks``)."""
    if num_outputs is None:
        num_outputs = 1 + max((max(r) for r in rings if r), default=0)
    if input_ids is None:
        input_ids = [f"in{k}" for k in range(len(rings))]
    mint = Transaction(
        "mint", outputs=[Output(i, denom, 0, True) for i in range(num_outputs)], is_coinbase=True)
    blocks = [Block(0, GENESIS_TIME, _seed("block-0"), [mint])]
    txs = [
        Transaction(f"tx-{iid}", inputs=[RingInput(iid, denom, tuple(sorted(set(r))))])
        for iid, r in zip(input_ids, rings)
    ]
    if separate_blocks:
        for k, tx in enumerate(txs, start=1):
            blocks.append(Block(k, GENESIS_TIME + k * block_interval, _seed(f"block-{k}"), [tx]))
    elif txs:
        blocks.append(Block(1, GENESIS_TIME + block_interval, _seed("block-1"), txs))
    return Chain(blocks)


def cascade_chain(spender_first: bool = True) -> tuple[Chain, GroundTruth]:
    """Output O (idx 0) is spent by a 0-mixin input of tx_B; tx_C's 2-ring {O, P}
    therefore spends P (idx 1). ``spender_first=False`` mines tx_C before tx_B."""
    rings = {"tx_B.in0": [0], "tx_C.in0": [0, 1]}
    order = ["tx_B.in0", "tx_C.in0"] if spender_first else ["tx_C.in0", "tx_B.in0"]
    chain = chain_from_rings([rings[k] for k in order], num_outputs=2,
                             input_ids=order, separate_blocks=True)
    return chain, GroundTruth({"tx_B.in0": 0, "tx_C.in0": 1})


def counting_chain() -> tuple[Chain, GroundTruth]:
    """Outputs X=0, Y=1, W=2. Inputs B and C both reference {Y, W}, so together
    they consume both; A references {X, Y} and must spend X."""
    ids = ["tx_A.in0", "tx_B.in0", "tx_C.in0"]
    chain = chain_from_rings([[0, 1], [1, 2], [1, 2]], num_outputs=3, input_ids=ids)
    return chain, GroundTruth({"tx_A.in0": 0, "tx_B.in0": 1, "tx_C.in0": 2})
