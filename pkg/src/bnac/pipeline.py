"""End-to-end compilation of a network plus evidence into a circuit.

Stages: classical pruning, CNF encoding, simplification (unit resolution and
subsumption removal), learned-evidence extraction feeding back into pruning,
minfill ordering, dtree construction, d-DNNF compilation, and circuit
extraction.  The learn/reprune loop runs to a fixpoint with an iteration cap;
one round is typical, and only newly learned assignments trigger another
round since constraints already live inside the CNF.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .circuit import ArithmeticCircuit, extract
from .compiler import CompileStats, build_dtree, compile_cnf, minfill_order
from .encoder import WeightedCnf, encode
from .errors import CompileBudgetError, InconsistentEvidenceError
from .logic import learned_evidence, simplify
from .model import BayesianNetwork, Evidence, merge_evidence, require_valid
from .pruning import PruneReport, classical_prune


@dataclass
class PipelineOptions:
    refinements: bool = True
    use_learned: bool = True
    loop_cap: int = 3
    edge_budget: int = 50_000_000
    use_cache: bool = True
    query_vars: tuple = ()
    # work bound for the reported cluster statistic; NaN when exceeded
    cluster_op_budget: int = 2_000_000


@dataclass
class CompiledQuery:
    circuit: ArithmeticCircuit | None
    inconsistent: bool
    pruned_net: BayesianNetwork | None
    prune_report: PruneReport | None
    learned: Evidence
    compile_stats: CompileStats
    cluster_learned: float = 0.0
    cnf_vars: int = 0
    cnf_clauses: int = 0
    simplified_clauses: int = 0
    offline_seconds: float = 0.0

    @property
    def ac_edges(self) -> int:
        return self.circuit.edge_count if self.circuit is not None else 0

    def pr(self, extra: Evidence | None = None, params=None) -> float:
        if self.inconsistent:
            return 0.0
        return self.circuit.evaluate(extra, params)

    def marginals(self, extra: Evidence | None = None, params=None):
        if self.inconsistent:
            raise InconsistentEvidenceError("evidence has probability zero")
        return self.circuit.marginals(extra, params)

    def family_marginals(self, cpt: int, extra: Evidence | None = None,
                         params=None) -> np.ndarray:
        if self.inconsistent:
            raise InconsistentEvidenceError("evidence has probability zero")
        return self.circuit.family_marginals(cpt, extra, params)


def moral_graph(net: BayesianNetwork) -> tuple[dict[int, set[int]], dict[int, int]]:
    """Interaction graph over network variables: each family forms a clique."""
    adj: dict[int, set[int]] = {v: set() for v in net.live}
    sizes = {v: net.domain(v) for v in net.live}
    for v in net.live:
        fam = [p for p in net.cpts[v].effective_parents() if p in adj] + [v]
        for i in range(len(fam)):
            for j in range(i + 1, len(fam)):
                if fam[i] != fam[j]:
                    adj[fam[i]].add(fam[j])
                    adj[fam[j]].add(fam[i])
    return adj, sizes


def network_cluster_size(net: BayesianNetwork,
                         op_budget: int | None = None) -> float:
    """Minfill cluster statistic of the moral graph; NaN past the budget."""
    adj, sizes = moral_graph(net)
    try:
        _, cluster = minfill_order(adj, sizes, op_budget=op_budget)
    except CompileBudgetError:
        return float("nan")
    return cluster


def grouped_order(cnf: WeightedCnf) -> list[int]:
    """Elimination order over Boolean variables via network-variable groups.

    Minfill runs on the clause graph collapsed onto network variables (an
    indicator groups under its variable, a parameter under its CPT's child),
    then each group expands to its Boolean variables.  This keeps the
    ordering cost proportional to the network, not the encoding.
    """
    group_of: dict[int, int] = {}
    members: dict[int, list[int]] = {}
    sizes: dict[int, int] = {}
    for b, info in enumerate(cnf.var_info, start=1):
        g = info.var if info.kind == "ind" else info.cpt
        group_of[b] = g
        members.setdefault(g, []).append(b)
        if info.kind == "ind":
            sizes[g] = max(sizes.get(g, 0), info.state + 1)
    adj: dict[int, set[int]] = {}
    for clause in cnf.clauses:
        gs = sorted({group_of[abs(l)] for l in clause})
        for g in gs:
            adj.setdefault(g, set())
        for i in range(len(gs)):
            for j in range(i + 1, len(gs)):
                adj[gs[i]].add(gs[j])
                adj[gs[j]].add(gs[i])
    order_groups, _ = minfill_order(adj, {g: sizes.get(g, 2) for g in adj})
    order: list[int] = []
    seen = set()
    for g in order_groups:
        for b in members.get(g, ()):
            order.append(b)
            seen.add(b)
    for b in range(1, cnf.num_vars + 1):
        if b not in seen:
            order.append(b)
    return order


def compile_query(net: BayesianNetwork, ev: Evidence,
                  options: PipelineOptions | None = None) -> CompiledQuery:
    """Compile ``net`` with ``ev`` baked in; returns the query object.

    Inconsistent evidence (probability zero, detected logically) yields a
    result whose ``pr`` is 0 rather than an exception, mirroring how the
    weighted model count of an unsatisfiable encoding is 0.
    """
    opts = options or PipelineOptions()
    t0 = time.perf_counter()
    require_valid(net)
    ev.check(net)

    merged = ev
    learned_total = Evidence()
    try:
        pruned, report = classical_prune(net, merged, opts.query_vars)
    except InconsistentEvidenceError:
        return _inconsistent_result(float("nan"), t0)

    res = None
    cnf = None
    for _ in range(max(1, opts.loop_cap)):
        cnf = encode(pruned, merged, refinements=opts.refinements)
        res = simplify(cnf)
        if res.conflict:
            return _inconsistent_result(float("nan"), t0,
                                        pruned=pruned, report=report)
        if not opts.use_learned:
            break
        learned = learned_evidence(res, merged)
        learned_total = merge_evidence(learned_total, learned)
        new_assign = {
            v: s for v, s in learned.assignments.items()
            if merged.assignments.get(v) != s
        }
        if not new_assign:
            break
        try:
            merged = merge_evidence(merged, Evidence(new_assign))
            pruned, report = classical_prune(net, merged, opts.query_vars)
        except InconsistentEvidenceError:
            return _inconsistent_result(float("nan"), t0,
                                        pruned=pruned, report=report)
    cluster_learned = network_cluster_size(pruned, opts.cluster_op_budget)

    simplified = res.simplified
    order = grouped_order(simplified)
    dtree = build_dtree(simplified, order)
    branch_vars = None
    if opts.refinements:
        branch_vars = {
            b for b, info in enumerate(simplified.var_info, start=1)
            if info.kind == "ind"
        }
    graph, cstats = compile_cnf(simplified, dtree,
                                branch_vars=branch_vars,
                                use_cache=opts.use_cache,
                                edge_budget=opts.edge_budget)
    cstats.max_cluster = cluster_learned
    pruned_away = set(net.live) - set(pruned.live)
    circuit = extract(graph, simplified, pruned, ev, pruned_away)
    return CompiledQuery(
        circuit=circuit,
        inconsistent=False,
        pruned_net=pruned,
        prune_report=report,
        learned=learned_total,
        compile_stats=cstats,
        cluster_learned=cluster_learned,
        cnf_vars=cnf.num_vars,
        cnf_clauses=len(cnf.clauses),
        simplified_clauses=len(simplified.clauses),
        offline_seconds=time.perf_counter() - t0,
    )


def _inconsistent_result(cluster: float, t0: float, *,
                         pruned: BayesianNetwork | None = None,
                         report: PruneReport | None = None) -> CompiledQuery:
    return CompiledQuery(
        circuit=None,
        inconsistent=True,
        pruned_net=pruned,
        prune_report=report,
        learned=Evidence(),
        compile_stats=CompileStats(),
        cluster_learned=cluster,
        offline_seconds=time.perf_counter() - t0,
    )
