"""Query-independent network reduction under evidence.

Two classical reductions: barren leaves outside evidence and query are deleted
to a fixpoint, and edges out of observed variables are severed by pinning the
observed parent inside each child CPT.  Pinning keeps the original table and
row indexing intact (a mask, not a rebuilt table), so parameter identities
survive for learning.  Disjunctive evidence constraints protect the variables
they mention but never trigger edge removal; only fixed assignments do.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InconsistentEvidenceError
from .model import BayesianNetwork, Cpt, Evidence, merge_evidence


@dataclass
class PruneReport:
    removed_variables: set[int] = field(default_factory=set)
    severed_edges: set[tuple[int, int]] = field(default_factory=set)
    row_selections: dict[int, np.ndarray] = field(default_factory=dict)

    def retained_rows(self, cpt_id: int) -> int:
        return int(self.row_selections[cpt_id].sum())


def _row_mask(cpt: Cpt, domain_of) -> np.ndarray:
    mask = np.zeros(cpt.n_rows, dtype=bool)
    for idx, _ in cpt.active_rows(domain_of):
        mask[idx] = True
    return mask


def classical_prune(net: BayesianNetwork, ev: Evidence,
                    query_vars=()) -> tuple[BayesianNetwork, PruneReport]:
    """Remove barren leaves and sever edges out of observed variables.

    Pr(ev and any event over the surviving variables) is invariant under the
    transformation.  Returns the reduced network and a report of what changed.
    """
    live = set(net.live)
    keep = (ev.mentioned_vars() | set(query_vars)) & live
    report = PruneReport()

    # barren-leaf deletion to fixpoint
    while True:
        has_child = set()
        for v in live:
            for p in net.cpts[v].effective_parents():
                if p in live:
                    has_child.add(p)
        barren = [v for v in sorted(live) if v not in has_child and v not in keep]
        if not barren:
            break
        for v in barren:
            live.remove(v)
            report.removed_variables.add(v)

    # sever edges out of assigned variables by pinning them in child CPTs
    cpts: dict[int, Cpt] = {}
    for v in sorted(live):
        cpt = net.cpts[v]
        pins = dict(cpt.fixed_parents)
        for p in cpt.effective_parents():
            if p in ev.assignments and p in live:
                pins[p] = ev.assignments[p]
                report.severed_edges.add((p, v))
        cpts[v] = Cpt(cpt.child, cpt.parents, cpt.table, pins)

    pruned = BayesianNetwork(net.variables, cpts, set(net.learnable) & live)
    for v, cpt in cpts.items():
        report.row_selections[v] = _row_mask(cpt, pruned.domain)
    return pruned, report


def reprune_with_learned(net: BayesianNetwork, ev: Evidence, learned: Evidence,
                         query_vars=()) -> tuple[BayesianNetwork, PruneReport]:
    """Classical pruning under the union of given and learned evidence.

    The learned evidence must be consistent with the given evidence; a
    conflicting assignment means the evidence has probability zero.
    """
    try:
        merged = merge_evidence(ev, learned)
    except InconsistentEvidenceError:
        raise InconsistentEvidenceError(
            "learned evidence contradicts the given evidence"
        ) from None
    return classical_prune(net, merged, query_vars)
