"""Compile a weighted CNF into d-DNNF by recursive conditioning.

The recursion runs unit resolution on the current subproblem, splits the
active clauses into connected components (union-find at every step), and
otherwise conditions on a decision variable, joining the two cases with a
deterministic Or.  Decision variables come from the dtree: the first
unassigned separator variable of the component's deepest covering node, in
elimination-order position.  Subproblems are cached per dtree node, keyed by
the component's active clauses and the assigned variables they mention; the
cache never spans dtree nodes.

The output graph satisfies decomposability (And children share no variables)
and determinism (Or children disagree on the decision variable) by
construction, and is logically equivalent to the input CNF.  A node budget
turns memory blowup into a clean failure, never a wrong circuit.
"""

from __future__ import annotations

import heapq
import math
import sys
import time
from dataclasses import dataclass, field

from .errors import CompileBudgetError, ModelError
from .encoder import WeightedCnf

K_TRUE, K_FALSE, K_LIT, K_AND, K_OR = range(5)


# ---------------------------------------------------------------------------
# minfill elimination ordering


def minfill_order(adj: dict[int, set[int]], sizes: dict[int, int] | None = None,
                  op_budget: int | None = None) -> tuple[list[int], float]:
    """Greedy minimum-fill elimination order over an interaction graph.

    Ties break toward the lowest node id.  Also returns the largest cluster
    met during elimination, as log2 of the instantiation count of the
    eliminated node plus its current neighbors (nodes default to 2 states).

    ``op_budget`` bounds the neighbor-pair scans; dense graphs whose
    elimination fronts explode then fail deterministically instead of
    stalling.
    """
    graph = {u: set(vs) for u, vs in adj.items()}
    for u, vs in adj.items():
        for v in vs:
            graph.setdefault(v, set()).add(u)
    if sizes is None:
        sizes = {}
    log_size = {u: math.log2(sizes.get(u, 2)) for u in graph}
    ops = 0

    def fill(u: int) -> int:
        nonlocal ops
        nbrs = list(graph[u])
        ops += len(nbrs) * len(nbrs)
        if op_budget is not None and ops > op_budget:
            raise CompileBudgetError("minfill work budget exceeded")
        count = 0
        for i in range(len(nbrs)):
            ni = graph[nbrs[i]]
            for j in range(i + 1, len(nbrs)):
                if nbrs[j] not in ni:
                    count += 1
        return count

    current = {u: fill(u) for u in graph}
    heap = [(f, u) for u, f in current.items()]
    heapq.heapify(heap)
    order: list[int] = []
    max_cluster = 0.0
    alive = set(graph)
    while alive:
        f, u = heapq.heappop(heap)
        if u not in alive or current[u] != f:
            continue
        order.append(u)
        alive.remove(u)
        nbrs = sorted(graph[u])
        cluster = log_size[u] + sum(log_size[n] for n in nbrs)
        max_cluster = max(max_cluster, cluster)
        affected = set(nbrs)
        for i in range(len(nbrs)):
            for j in range(i + 1, len(nbrs)):
                a, b = nbrs[i], nbrs[j]
                if b not in graph[a]:
                    graph[a].add(b)
                    graph[b].add(a)
                    affected |= graph[a] & graph[b]
        for n in nbrs:
            graph[n].discard(u)
        del graph[u]
        affected &= alive
        for w in affected:
            current[w] = fill(w)
            heapq.heappush(heap, (current[w], w))
    return order, max_cluster


def cnf_interaction_graph(cnf: WeightedCnf) -> dict[int, set[int]]:
    """Variables adjacent iff they co-occur in a clause."""
    adj: dict[int, set[int]] = {v: set() for v in cnf.live_vars()}
    for clause in cnf.clauses:
        vs = [abs(l) for l in clause]
        for i in range(len(vs)):
            for j in range(i + 1, len(vs)):
                if vs[i] != vs[j]:
                    adj[vs[i]].add(vs[j])
                    adj[vs[j]].add(vs[i])
    return adj


# ---------------------------------------------------------------------------
# dtree


@dataclass
class DtreeNode:
    id: int
    left: int | None = None
    right: int | None = None
    clause: int | None = None
    vars: frozenset = frozenset()
    separator: frozenset = frozenset()
    context: frozenset = frozenset()
    parent: int | None = None
    depth: int = 0
    tin: int = 0
    tout: int = 0
    sep_sorted: tuple[int, ...] = ()


@dataclass
class Dtree:
    nodes: list[DtreeNode] = field(default_factory=list)
    root: int | None = None
    leaf_of_clause: dict[int, int] = field(default_factory=dict)
    orderpos: dict[int, int] = field(default_factory=dict)


def build_dtree(cnf: WeightedCnf, order: list[int]) -> Dtree:
    """Binary tree over clauses built from an elimination order.

    Clauses are grouped at their earliest-eliminated variable and composed
    bottom-up, so separators stay small where the order is good.  Variable-
    disjoint groups meet only at the top, with empty separators.
    """
    dt = Dtree(orderpos={v: i for i, v in enumerate(order)})
    for clause in cnf.clauses:
        for lit in clause:
            if abs(lit) not in dt.orderpos:
                raise ModelError(f"elimination order misses variable {abs(lit)}")

    def new_node(**kw) -> int:
        node = DtreeNode(id=len(dt.nodes), **kw)
        dt.nodes.append(node)
        return node.id

    def compose_pair(a: int, b: int) -> int:
        vs = dt.nodes[a].vars | dt.nodes[b].vars
        return new_node(left=a, right=b, vars=vs)

    def compose(parts: list[int]) -> int:
        while len(parts) > 1:
            nxt = []
            for i in range(0, len(parts) - 1, 2):
                nxt.append(compose_pair(parts[i], parts[i + 1]))
            if len(parts) % 2:
                nxt.append(parts[-1])
            parts = nxt
        return parts[0]

    bucket: dict[int, list[int]] = {}
    for cid, clause in enumerate(cnf.clauses):
        vs = frozenset(abs(l) for l in clause)
        leaf = new_node(clause=cid, vars=vs)
        dt.leaf_of_clause[cid] = leaf
        first = min(vs, key=dt.orderpos.get)
        bucket.setdefault(first, []).append(leaf)

    roots: list[int] = []
    for pos, v in enumerate(order):
        parts = bucket.pop(v, [])
        if not parts:
            continue
        t = compose(parts)
        pending = [u for u in dt.nodes[t].vars if dt.orderpos[u] > pos]
        if pending:
            nxt = min(pending, key=dt.orderpos.get)
            bucket.setdefault(nxt, []).append(t)
        else:
            roots.append(t)
    if roots:
        dt.root = compose(roots)
        _annotate(dt)
    return dt


def _annotate(dt: Dtree) -> None:
    """Fill separators, contexts, parents, depths, and DFS intervals."""
    counter = 0
    stack = [(dt.root, None, 0, frozenset(), False)]
    while stack:
        nid, parent, depth, acut, closing = stack.pop()
        node = dt.nodes[nid]
        if closing:
            node.tout = counter
            counter += 1
            continue
        node.parent = parent
        node.depth = depth
        node.tin = counter
        counter += 1
        stack.append((nid, parent, depth, acut, True))
        if node.left is None:
            continue
        left, right = dt.nodes[node.left], dt.nodes[node.right]
        node.separator = left.vars & right.vars
        node.context = node.vars & acut
        cutset = node.separator - acut
        # conditioning runs in reverse elimination order: hubs first, so
        # components fall apart as early as possible
        node.sep_sorted = tuple(sorted(node.separator, key=dt.orderpos.get,
                                       reverse=True))
        child_acut = acut | cutset
        stack.append((node.left, nid, depth + 1, child_acut, False))
        stack.append((node.right, nid, depth + 1, child_acut, False))


def _lca(dt: Dtree, a: int, b: int) -> int:
    na, nb = dt.nodes[a], dt.nodes[b]
    while na.depth > nb.depth:
        na = dt.nodes[na.parent]
    while nb.depth > na.depth:
        nb = dt.nodes[nb.parent]
    while na.id != nb.id:
        na = dt.nodes[na.parent]
        nb = dt.nodes[nb.parent]
    return na.id


# ---------------------------------------------------------------------------
# d-DNNF arena


class DdnnfGraph:
    """Rooted DAG of True/False/Literal/And/Or nodes, hash-consed."""

    def __init__(self, num_vars: int):
        self.num_vars = num_vars
        self.kinds = [K_TRUE, K_FALSE]
        self.payload = [0, 0]
        self.children: list[tuple[int, ...]] = [(), ()]
        self.root = 0
        self.total_edges = 0
        self._memo: dict = {}

    TRUE = 0
    FALSE = 1

    def _new(self, kind: int, payload: int, children: tuple[int, ...]) -> int:
        self.kinds.append(kind)
        self.payload.append(payload)
        self.children.append(children)
        self.total_edges += len(children)
        return len(self.kinds) - 1

    def literal(self, lit: int) -> int:
        key = ("L", lit)
        node = self._memo.get(key)
        if node is None:
            node = self._memo[key] = self._new(K_LIT, lit, ())
        return node

    def conj(self, parts) -> int:
        flat: list[int] = []
        for p in parts:
            if p == self.FALSE:
                return self.FALSE
            if p == self.TRUE:
                continue
            if self.kinds[p] == K_AND:
                flat.extend(self.children[p])
            else:
                flat.append(p)
        flat = sorted(set(flat))
        if not flat:
            return self.TRUE
        if len(flat) == 1:
            return flat[0]
        key = ("A", tuple(flat))
        node = self._memo.get(key)
        if node is None:
            node = self._memo[key] = self._new(K_AND, 0, tuple(flat))
        return node

    def disj(self, var: int, hi: int, lo: int) -> int:
        if hi == self.FALSE:
            return lo
        if lo == self.FALSE:
            return hi
        key = ("O", var, hi, lo)
        node = self._memo.get(key)
        if node is None:
            node = self._memo[key] = self._new(K_OR, var, (hi, lo))
        return node

    def reachable(self) -> list[int]:
        """Node ids reachable from the root, ascending (children first)."""
        seen = {self.root}
        stack = [self.root]
        while stack:
            n = stack.pop()
            for c in self.children[n]:
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        return sorted(seen)

    def stats_counts(self) -> tuple[int, int]:
        nodes = self.reachable()
        return len(nodes), sum(len(self.children[n]) for n in nodes)


@dataclass
class CompileStats:
    node_count: int = 0
    edge_count: int = 0
    created_edges: int = 0
    cache_hits: int = 0
    cache_misses: int = 0
    max_cluster: float = 0.0
    offline_seconds: float = 0.0
    sep_picks: int = 0
    fallback_picks: int = 0


# ---------------------------------------------------------------------------
# the compiler


def compile_cnf(cnf: WeightedCnf, dtree: Dtree | None = None, *,
                order: list[int] | None = None,
                branch_vars: set[int] | None = None,
                use_cache: bool = True,
                edge_budget: int = 50_000_000,
                branch_rule: str = "dtree") -> tuple[DdnnfGraph, CompileStats]:
    """Compile the CNF's active clauses into an equivalent d-DNNF.

    ``dtree`` guides decision-variable choice and cache locality; when absent
    it is built from ``order`` (or from a minfill order over the CNF's
    interaction graph).  ``branch_vars`` optionally restricts decision
    variables, falling back to any variable when a component offers none.
    """
    t0 = time.perf_counter()
    if dtree is None:
        if order is None:
            order, _ = minfill_order(cnf_interaction_graph(cnf))
        dtree = build_dtree(cnf, order)
    orderpos = dtree.orderpos

    g = DdnnfGraph(cnf.num_vars)
    stats = CompileStats()
    clauses = [tuple(c) for c in cnf.clauses]
    nv = cnf.num_vars
    # literal truth array indexed by nv + lit: 0 free, 1 true, 2 false
    lval = bytearray(2 * nv + 1)
    trail: list[int] = []
    cache: dict = {}

    def set_lit(lit: int) -> None:
        lval[nv + lit] = 1
        lval[nv - lit] = 2
        trail.append(lit)

    def undo(mark: int) -> None:
        while len(trail) > mark:
            lit = trail.pop()
            lval[nv + lit] = 0
            lval[nv - lit] = 0

    def propagate(entries):
        """Unit resolution over restricted clause views.

        ``entries`` pairs clause ids with the literals still unresolved at
        the caller; queue-driven with occurrence lists local to the
        subproblem.  Returns (ok, implied literals, surviving entries).
        """
        implied: list[int] = []
        sat = set()
        n_un: dict[int, int] = {}
        view: dict[int, tuple] = {}
        occ: dict[int, list[int]] = {}
        queue: list[tuple[int, int]] = []
        for cid, lits in entries:
            cnt, last, satisfied = 0, 0, False
            for lit in lits:
                a = lval[nv + lit]
                if a == 0:
                    cnt += 1
                    last = lit
                elif a == 1:
                    satisfied = True
                    break
            if satisfied:
                sat.add(cid)
                continue
            if cnt == 0:
                return False, implied, None
            n_un[cid] = cnt
            view[cid] = lits
            if cnt == 1:
                queue.append((cid, last))
            for lit in lits:
                if lval[nv + lit] == 0:
                    occ.setdefault(lit, []).append(cid)
        qi = 0
        while qi < len(queue):
            cid0, lit = queue[qi]
            qi += 1
            if cid0 in sat:
                continue
            a = lval[nv + lit]
            if a == 1:
                sat.add(cid0)
                continue
            if a == 2:
                return False, implied, None
            set_lit(lit)
            implied.append(lit)
            for c in occ.get(lit, ()):
                sat.add(c)
            for c in occ.get(-lit, ()):
                if c in sat:
                    continue
                n_un[c] -= 1
                if n_un[c] == 0:
                    return False, implied, None
                if n_un[c] == 1:
                    u = next(l for l in view[c] if lval[nv + l] == 0)
                    queue.append((c, u))
        active = []
        for cid, lits in entries:
            if cid in sat or cid not in n_un:
                continue
            if n_un[cid] == len(lits):
                active.append((cid, lits))
            else:
                active.append((cid, tuple(
                    l for l in lits if lval[nv + l] == 0
                )))
        return True, implied, active

    uf_parent = list(range(nv + 1))
    uf_stamp = [0] * (nv + 1)
    uf_round = 0

    def split(active):
        """Connected components of the active clauses over unassigned vars.

        Stamped array union-find; state resets by advancing the round
        counter instead of reallocating.
        """
        nonlocal uf_round
        uf_round += 1
        stamp = uf_round
        parent, stamps = uf_parent, uf_stamp

        def find(x):
            if stamps[x] != stamp:
                stamps[x] = stamp
                parent[x] = x
                return x
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for _, rest in active:
            first = rest[0]
            ra = find(first if first > 0 else -first)
            for lit in rest[1:]:
                rb = find(lit if lit > 0 else -lit)
                if ra != rb:
                    parent[rb] = ra
        comps: dict[int, list] = {}
        for entry in active:
            lit = entry[1][0]
            root = find(lit if lit > 0 else -lit)
            comps.setdefault(root, []).append(entry)
        return [comps[k] for k in sorted(comps, key=lambda r: comps[r][0][0])]

    dnodes = dtree.nodes
    leaf_of = dtree.leaf_of_clause
    anchor_memo: dict[tuple[int, int], int] = {}

    def anchor_of(entries) -> int:
        # LCA of a leaf set = LCA of its DFS-extreme leaves
        lo = hi = dnodes[leaf_of[entries[0][0]]]
        for cid, _ in entries[1:]:
            leaf = dnodes[leaf_of[cid]]
            if leaf.tin < lo.tin:
                lo = leaf
            elif leaf.tin > hi.tin:
                hi = leaf
        key = (lo.id, hi.id)
        hit = anchor_memo.get(key)
        if hit is not None:
            return hit
        node = lo
        while node.tin > hi.tin or node.tout < hi.tout:
            node = dnodes[node.parent]
        anchor_memo[key] = node.id
        return node.id

    def pick_branch(anchor: int, comp_vars: set[int]) -> int:
        sep = dtree.nodes[anchor].sep_sorted
        if branch_vars is not None:
            for v in sep:
                if lval[nv + v] == 0 and v in comp_vars and v in branch_vars:
                    stats.sep_picks += 1
                    return v
            allowed = [v for v in comp_vars if v in branch_vars]
            if allowed:
                stats.fallback_picks += 1
                return max(allowed, key=orderpos.get)
        for v in sep:
            if lval[nv + v] == 0 and v in comp_vars:
                stats.sep_picks += 1
                return v
        stats.fallback_picks += 1
        return max(comp_vars, key=orderpos.get)

    sys.setrecursionlimit(max(sys.getrecursionlimit(), 100_000))

    def pick_by_degree(comp):
        deg: dict[int, int] = {}
        for _, rest in comp:
            for l in rest:
                v = l if l > 0 else -l
                if branch_vars is None or v in branch_vars:
                    deg[v] = deg.get(v, 0) + 1
        return max(deg, key=lambda v: (deg[v], -v))

    def rec(entries) -> int:
        mark = len(trail)
        ok, implied, active = propagate(entries)
        if not ok:
            undo(mark)
            return g.FALSE
        parts = [g.literal(l) for l in implied]
        if active:
            for comp in split(active):
                comp_vars = set()
                for _, rest in comp:
                    comp_vars.update(l if l > 0 else -l for l in rest)
                anchor = anchor_of(comp)
                key = None
                if use_cache:
                    # the clause ids plus their unassigned variables pin the
                    # restricted subproblem exactly
                    key = (anchor, tuple(e[0] for e in comp),
                           tuple(sorted(comp_vars)))
                    node = cache.get(key)
                    if node is not None:
                        stats.cache_hits += 1
                        parts.append(node)
                        continue
                    stats.cache_misses += 1
                if branch_rule == "degree":
                    v = pick_by_degree(comp)
                else:
                    v = pick_branch(anchor, comp_vars)
                m2 = len(trail)
                set_lit(v)
                hi = g.conj([g.literal(v), rec(comp)])
                undo(m2)
                set_lit(-v)
                lo = g.conj([g.literal(-v), rec(comp)])
                undo(m2)
                node = g.disj(v, hi, lo)
                if g.total_edges > edge_budget:
                    raise CompileBudgetError(
                        f"edge budget {edge_budget} exceeded during compilation"
                    )
                if use_cache:
                    cache[key] = node
                parts.append(node)
        out = g.conj(parts)
        undo(mark)
        return out

    g.root = rec([(cid, clauses[cid]) for cid in range(len(clauses))])
    stats.node_count, stats.edge_count = g.stats_counts()
    stats.created_edges = g.total_edges
    stats.offline_seconds = time.perf_counter() - t0
    return g, stats


# ---------------------------------------------------------------------------
# counting and verification


def _scopes(g: DdnnfGraph, nodes: list[int]) -> dict[int, frozenset]:
    scope: dict[int, frozenset] = {}
    for n in nodes:
        kind = g.kinds[n]
        if kind in (K_TRUE, K_FALSE):
            scope[n] = frozenset()
        elif kind == K_LIT:
            scope[n] = frozenset((abs(g.payload[n]),))
        else:
            s = frozenset()
            for c in g.children[n]:
                s |= scope[c]
            scope[n] = s
    return scope


def model_count(g: DdnnfGraph, universe) -> int:
    """Satisfying assignments over ``universe`` (an int count or an iterable).

    Variables absent from a branch are free there; the count is adjusted per
    disjunct and at the root, which makes the result independent of how the
    graph chose to mention variables.
    """
    if isinstance(universe, int):
        universe = range(1, universe + 1)
    universe = frozenset(universe)
    nodes = g.reachable()
    scope = _scopes(g, nodes)
    count: dict[int, int] = {}
    for n in nodes:
        kind = g.kinds[n]
        if kind == K_TRUE:
            count[n] = 1
        elif kind == K_FALSE:
            count[n] = 0
        elif kind == K_LIT:
            count[n] = 1
        elif kind == K_AND:
            total = 1
            for c in g.children[n]:
                total *= count[c]
            count[n] = total
        else:
            total = 0
            for c in g.children[n]:
                total += count[c] * 2 ** len(scope[n] - scope[c])
            count[n] = total
    return count[g.root] * 2 ** len(universe - scope[g.root])


def weighted_count(g: DdnnfGraph, weights: dict[int, float], universe) -> float:
    """Weighted model count; free variables contribute (weight + 1)."""
    if isinstance(universe, int):
        universe = range(1, universe + 1)
    universe = frozenset(universe)
    nodes = g.reachable()
    scope = _scopes(g, nodes)

    def free_factor(vs) -> float:
        f = 1.0
        for v in vs:
            f *= weights.get(v, 1.0) + 1.0
        return f

    val: dict[int, float] = {}
    for n in nodes:
        kind = g.kinds[n]
        if kind == K_TRUE:
            val[n] = 1.0
        elif kind == K_FALSE:
            val[n] = 0.0
        elif kind == K_LIT:
            lit = g.payload[n]
            val[n] = weights.get(lit, 1.0) if lit > 0 else 1.0
        elif kind == K_AND:
            total = 1.0
            for c in g.children[n]:
                total *= val[c]
            val[n] = total
        else:
            total = 0.0
            for c in g.children[n]:
                total += val[c] * free_factor(scope[n] - scope[c])
            val[n] = total
    return val[g.root] * free_factor(universe - scope[g.root])


@dataclass
class VerifyReport:
    violations: list[str] = field(default_factory=list)
    nodes_checked: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations


def _entails_literal(g: DdnnfGraph, node: int, lit: int) -> bool:
    if g.kinds[node] == K_LIT:
        return g.payload[node] == lit
    if g.kinds[node] == K_AND:
        return any(
            g.kinds[c] == K_LIT and g.payload[c] == lit for c in g.children[node]
        )
    return False


def verify_ddnnf(g: DdnnfGraph, cnf: WeightedCnf | None = None,
                 exhaustive_limit: int = 24) -> VerifyReport:
    """Check decomposability and determinism; optionally compare model counts.

    The count comparison runs only when the CNF's live variables fit the
    exhaustive limit, using the independent DPLL counter.
    """
    from .encoder import model_count_oracle

    report = VerifyReport()
    nodes = g.reachable()
    report.nodes_checked = len(nodes)
    scope = _scopes(g, nodes)
    for n in nodes:
        kind = g.kinds[n]
        if kind == K_AND:
            seen: set[int] = set()
            for c in g.children[n]:
                if scope[c] & seen:
                    report.violations.append(
                        f"node {n}: And children share variables "
                        f"{sorted(scope[c] & seen)}"
                    )
                seen |= scope[c]
        elif kind == K_OR:
            var = g.payload[n]
            hi, lo = g.children[n]
            if not _entails_literal(g, hi, var) or not _entails_literal(g, lo, -var):
                report.violations.append(
                    f"node {n}: Or children do not decide variable {var}"
                )
    if cnf is not None and len(cnf.live_vars()) <= exhaustive_limit:
        expected = model_count_oracle(cnf)
        got = model_count(g, cnf.live_vars())
        if expected != got:
            report.violations.append(
                f"model count mismatch: graph {got}, exhaustive {expected}"
            )
    return report


def to_nnf_text(g: DdnnfGraph) -> str:
    """Standard NNF text layout: header then one L/A/O record per node."""
    nodes = g.reachable()
    index = {n: i for i, n in enumerate(nodes)}
    lines = []
    edges = 0
    for n in nodes:
        kind = g.kinds[n]
        if kind == K_TRUE:
            lines.append("A 0")
        elif kind == K_FALSE:
            lines.append("O 0 0")
        elif kind == K_LIT:
            lines.append(f"L {g.payload[n]}")
        elif kind == K_AND:
            cs = [index[c] for c in g.children[n]]
            edges += len(cs)
            lines.append("A " + " ".join(str(x) for x in [len(cs)] + cs))
        else:
            cs = [index[c] for c in g.children[n]]
            edges += len(cs)
            lines.append(
                f"O {g.payload[n]} " + " ".join(str(x) for x in [len(cs)] + cs)
            )
    header = f"nnf {len(nodes)} {edges} {g.num_vars}"
    return "\n".join([header] + lines) + "\n"
