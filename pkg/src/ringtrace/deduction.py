"""
Chain-reaction deduction.

Two analyses over the input/output reference graph, both per denomination:

``fixpoint_deduce``
    Iterative elimination.  A ring with a single remaining candidate spends it;
    an output proved spent is removed from every other ring that references it.
    Repeats until nothing changes.

``closure_deduce``
    Exact semantics of "each input spends exactly one referenced output, each
    output is spent at most once": a reference is the real spend iff it holds
    in every satisfying assignment, and it is ruled out iff it holds in none.
    Satisfying assignments are the input-saturating matchings of the residual
    bipartite graph, so a reference that is not in the chosen matching can be
    used by some assignment iff it lies on an alternating cycle or on an
    alternating path that ends at a free output.  Both tests are linear-time
    graph searches (strongly connected components and reachability) over the
    residual graph.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .chain import Chain
from .errors import ConflictingChain

FIXPOINT = "fixpoint"
CLOSURE = "closure"


@dataclass
class DeductionStats:
    iterations: int = 0
    components_solved: int = 0
    components_skipped: int = 0
    skipped_inputs: int = 0


@dataclass
class DeductionResult:
    deduced: dict[str, int] = field(default_factory=dict)
    ruled_out: dict[str, set[int]] = field(default_factory=dict)
    method: dict[str, str] = field(default_factory=dict)
    stats: DeductionStats = field(default_factory=DeductionStats)

    def candidates(self, ring) -> set[int]:
        return set(ring.refs) - self.ruled_out.get(ring.input_id, set())

    def verdict(self, ring) -> str:
        if ring.input_id in self.deduced:
            return "deduced"
        if self.ruled_out.get(ring.input_id):
            return "partial"
        return "open"

    def rows(self, chain: Chain) -> list[dict]:
        out = []
        for _, ring in chain.inputs():
            iid = ring.input_id
            out.append({
                "input_id": iid,
                "denom": ring.denom,
                "ring_size": len(ring.refs),
                "verdict": self.verdict(ring),
                "deduced_ref": self.deduced.get(iid, ""),
                "n_ruled_out": len(self.ruled_out.get(iid, ())),
                "method": self.method.get(iid, ""),
            })
        return out

    def write_csv(self, chain: Chain, path) -> None:
        rows = self.rows(chain)
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)


REPORT_COLUMNS = ["input_id", "denom", "ring_size", "verdict", "deduced_ref", "n_ruled_out", "method"]


def _rings_by_denom(chain: Chain):
    grouped = defaultdict(list)
    for _, ring in chain.inputs():
        grouped[ring.denom].append(ring)
    return grouped


def _propagate(rings, result: DeductionResult) -> int:
    """Elimination fixpoint for the rings of one denomination. Returns wave count."""
    referencing: dict[int, list[int]] = defaultdict(list)
    remaining = []
    for p, ring in enumerate(rings):
        remaining.append(set(ring.refs))
        for o in ring.refs:
            referencing[o].append(p)
    spent_by: dict[int, int] = {}
    wave = [p for p, cands in enumerate(remaining) if len(cands) == 1]
    waves = 0
    while wave:
        waves += 1
        nxt = []
        for p in wave:
            iid = rings[p].input_id
            if iid in result.deduced:
                continue
            (o,) = remaining[p]
            other = spent_by.get(o)
            if other is not None:
                raise ConflictingChain(
                    f"inputs {rings[other].input_id!r} and {iid!r} are both forced to spend "
                    f"output {o} of denom {rings[p].denom}")
            spent_by[o] = p
            result.deduced[iid] = o
            result.method[iid] = FIXPOINT
            for q in referencing[o]:
                if q == p or o not in remaining[q]:
                    continue
                remaining[q].discard(o)
                result.ruled_out.setdefault(rings[q].input_id, set()).add(o)
                if not remaining[q]:
                    raise ConflictingChain(
                        f"input {rings[q].input_id!r} has every reference spent elsewhere")
                if len(remaining[q]) == 1:
                    nxt.append(q)
        wave = nxt
    return waves


def fixpoint_deduce(chain: Chain) -> DeductionResult:
    result = DeductionResult()
    for _, rings in sorted(_rings_by_denom(chain).items()):
        result.stats.iterations = max(result.stats.iterations, _propagate(rings, result))
    for iid in result.ruled_out:
        result.method.setdefault(iid, FIXPOINT)
    return result


def _closure_denom(rings, result: DeductionResult, limit: int) -> None:
    residual = [r for r in rings if r.input_id not in result.deduced]
    if not residual:
        return
    cand_lists = [sorted(result.candidates(r)) for r in residual]
    out_ids = sorted({o for c in cand_lists for o in c})
    col_of = {o: k for k, o in enumerate(out_ids)}
    n_in, n_out = len(residual), len(out_ids)

    rows = np.repeat(np.arange(n_in), [len(c) for c in cand_lists])
    cols = np.fromiter((col_of[o] for c in cand_lists for o in c), dtype=np.int64, count=len(rows))

    # connected components of the undirected bipartite graph
    n = n_in + n_out
    undirected = sparse.coo_matrix((np.ones(len(rows)), (rows, cols + n_in)), shape=(n, n)).tocsr()
    _, comp = csgraph.connected_components(undirected, directed=False)
    in_comp = comp[:n_in]
    comp_ids, comp_sizes = np.unique(in_comp, return_counts=True)
    big = set(comp_ids[comp_sizes > limit].tolist())
    result.stats.components_solved += int(np.sum(comp_sizes <= limit))
    result.stats.components_skipped += len(big)
    result.stats.skipped_inputs += int(comp_sizes[comp_sizes > limit].sum())

    keep_in = np.array([c not in big for c in in_comp], dtype=bool)
    if not keep_in.any():
        return
    edge_keep = keep_in[rows]
    rows, cols = rows[edge_keep], cols[edge_keep]

    biadj = sparse.csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n_in, n_out))
    match = csgraph.maximum_bipartite_matching(biadj, perm_type="column")
    unmatched = np.flatnonzero(keep_in & (match < 0))
    if len(unmatched):
        members = [residual[p].input_id for p in np.flatnonzero(in_comp == in_comp[unmatched[0]])]
        raise ConflictingChain(
            f"unsatisfiable component of denom {residual[0].denom} "
            f"(inputs {', '.join(sorted(members)[:8])}{'...' if len(members) > 8 else ''})")

    is_match = match[rows] == cols
    # alternating orientation: input -> output off the matching, output -> input on it
    src = np.where(is_match, cols + n_in, rows)
    dst = np.where(is_match, rows, cols + n_in)
    graph = sparse.csr_matrix((np.ones(len(src), dtype=np.int8), (src, dst)), shape=(n, n))
    _, scc = csgraph.connected_components(graph, directed=True, connection="strong")

    matched_cols = np.zeros(n_out, dtype=bool)
    matched_cols[match[keep_in]] = True
    free_nodes = np.flatnonzero(~matched_cols) + n_in
    reaches_free = np.zeros(n + 1, dtype=bool)
    if len(free_nodes):
        # reverse graph plus a super-source feeding every free output
        super_src = n
        rev = sparse.csr_matrix(
            (np.ones(len(src) + len(free_nodes), dtype=np.int8),
             (np.concatenate([dst, np.full(len(free_nodes), super_src)]),
              np.concatenate([src, free_nodes]))),
            shape=(n + 1, n + 1))
        order = csgraph.breadth_first_order(rev, super_src, directed=True, return_predecessors=False)
        reaches_free[order] = True

    out_nodes = cols + n_in
    usable = is_match | reaches_free[out_nodes] | (scc[out_nodes] == scc[rows])
    alternatives = np.bincount(rows[~is_match & usable], minlength=n_in)

    for r, c in zip(rows[~usable].tolist(), cols[~usable].tolist()):
        iid = residual[r].input_id
        result.ruled_out.setdefault(iid, set()).add(out_ids[c])
        result.method[iid] = CLOSURE
    for p in np.flatnonzero(keep_in & (alternatives == 0)).tolist():
        iid = residual[p].input_id
        result.deduced[iid] = out_ids[match[p]]
        result.method[iid] = CLOSURE


def closure_deduce(chain: Chain, component_size_limit: int = 10_000) -> DeductionResult:
    """Forced and impossible references under the full matching constraints.

    Runs :func:`fixpoint_deduce` first, then analyses every residual connected
    component with at most ``component_size_limit`` inputs.  Larger components
    are left untouched and counted in ``stats.components_skipped``.
    """
    if component_size_limit < 1:
        raise ValueError("component_size_limit must be >= 1")
    result = fixpoint_deduce(chain)
    for _, rings in sorted(_rings_by_denom(chain).items()):
        _closure_denom(rings, result, component_size_limit)
    return result


# scoring against ground truth ---------------------------------------------

@dataclass
class TruthScore:
    precision: float
    recall: float
    deduced: int
    correct: int
    inputs: int
    by_mixins: dict[int, tuple[int, int]]  # mixins -> (total, deduced)


def score_against_truth(result: DeductionResult, chain: Chain, truth: Mapping[str, int]) -> TruthScore:
    """Precision of deduced spends and the deducible share per mixin count."""
    correct = 0
    by_mixins: dict[int, list[int]] = defaultdict(lambda: [0, 0])
    n = 0
    for _, ring in chain.inputs():
        n += 1
        iid = ring.input_id
        counts = by_mixins[ring.num_mixins]
        counts[0] += 1
        if iid in result.deduced:
            counts[1] += 1
            if truth.get(iid) == result.deduced[iid]:
                correct += 1
    deduced = len(result.deduced)
    return TruthScore(
        precision=correct / deduced if deduced else 1.0,
        recall=correct / n if n else 0.0,
        deduced=deduced,
        correct=correct,
        inputs=n,
        by_mixins={m: (t, d) for m, (t, d) in sorted(by_mixins.items())},
    )


def deducible_fraction(result: DeductionResult, chain: Chain, min_mixins: int = 1,
                       mixins: int | None = None) -> float:
    """Share of inputs with at least ``min_mixins`` mixins (or exactly ``mixins``)
    whose real spend was deduced."""
    total = hit = 0
    for _, ring in chain.inputs():
        m = ring.num_mixins
        if (mixins is not None and m != mixins) or m < min_mixins:
            continue
        total += 1
        hit += ring.input_id in result.deduced
    return hit / total if total else float("nan")
