"""Arithmetic circuits extracted from compiled d-DNNF graphs.

Mapping: positive literals become leaves carrying the variable's weight
(indicator slots stay settable, learnable parameters stay settable,
non-learnable parameters become constants), negative literals become the
constant 1, And becomes Product, Or becomes Sum.  Negative literals may map
to 1 because every weight attaches to the positive variable and the
exactly-one indicator clauses make a negative side weight redundant: each
model sets exactly one indicator per variable true, so the product over true
variables already captures the term.

Smoothing happens here, not in the compiler: a Sum whose branches mention
different network variables gets the deficient branch multiplied by the sum
of the missing variable's indicator leaves.  Graphs compiled from this
package's encodings are already smooth because every constrained variable is
either decided or mentioned along every path; the check is a cheap hash
comparison per Sum and the insertion path exists for foreign graphs.

The circuit is immutable after extraction.  Evaluation and differentiation
each use fresh scratch buffers, so concurrent calls with different parameter
values are safe; that contract is what makes estimation loops parallelizable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .compiler import DdnnfGraph, K_AND, K_FALSE, K_LIT, K_OR, K_TRUE
from .encoder import WeightedCnf
from .errors import InconsistentEvidenceError, ModelError, UnsupportedQueryError
from .model import BayesianNetwork, Evidence, Variable

LIVE, FIXED_TRUE, FIXED_FALSE = 0, 1, 2

C_LEAF, C_SUM, C_PROD = 0, 1, 2

_M64 = (1 << 64) - 1


def _mix(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _M64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _M64
    return x ^ (x >> 31)


@dataclass
class Slot:
    kind: str            # "ind" or "par"
    var: int = -1
    state: int = -1
    cpt: int = -1
    row: int = -1
    theta: float = 0.0
    learnable: bool = False
    node: int = -1       # circuit leaf bound to this slot, -1 if none


@dataclass
class EvalResult:
    value: float
    slot_partials: np.ndarray
    circuit: "ArithmeticCircuit"

    def indicator_partial(self, var: int, state: int) -> float:
        slot = self.circuit.ind_slot.get((var, state))
        return float(self.slot_partials[slot]) if slot is not None else 0.0

    def parameter_partial(self, cpt: int, row: int, state: int) -> float:
        slot = self.circuit.par_slot.get((cpt, row, state))
        return float(self.slot_partials[slot]) if slot is not None else 0.0

    def family_posterior(self, cpt: int, params=None) -> np.ndarray:
        """Posterior over (row, child state) of one learnable family."""
        ac = self.circuit
        if self.value <= 0.0:
            raise InconsistentEvidenceError("evidence has probability zero")
        rows = ac.cpt_rows.get(cpt)
        if rows is None:
            rows = max((s.row for s in ac.slots
                        if s.kind == "par" and s.cpt == cpt), default=-1) + 1
        states = ac.variables[cpt].n_states
        out = np.zeros((rows, states))
        for idx, slot in enumerate(ac.slots):
            if slot.kind != "par" or slot.cpt != cpt:
                continue
            theta = (float(params[cpt][slot.row, slot.state])
                     if params is not None else slot.theta)
            out[slot.row, slot.state] = theta * self.slot_partials[idx] / self.value
        return out


class ArithmeticCircuit:
    """Rooted DAG of leaf/sum/product nodes in topological order.

    Node arrays are flat; evaluation is a single forward loop and
    differentiation one forward plus one backward loop, both free of
    recursion and hashing.
    """

    def __init__(self, variables: list[Variable], live_vars, pruned_vars,
                 learnable, baked: Evidence, prefactor: float):
        self.variables = variables
        self.live_vars = tuple(live_vars)
        self.pruned_vars = frozenset(pruned_vars)
        self.learnable = set(learnable)
        self.baked = baked
        self.prefactor = prefactor
        self.cpt_rows: dict[int, int] = {}   # learnable cpt -> full row count
        self.status: dict[tuple[int, int], int] = {}
        self.slots: list[Slot] = []
        self.ind_slot: dict[tuple[int, int], int] = {}
        self.par_slot: dict[tuple[int, int, int], int] = {}
        self.kinds: list[int] = []
        self.child_list: list[int] = []
        self.child_off: list[int] = [0]
        self.leaf_slot: list[int] = []
        self.leaf_const: list[float] = []
        self.root = -1
        self._const_cache: dict[float, int] = {}

    # -- construction -----------------------------------------------------

    def add_slot(self, slot: Slot) -> int:
        idx = len(self.slots)
        self.slots.append(slot)
        if slot.kind == "ind":
            self.ind_slot[(slot.var, slot.state)] = idx
        else:
            self.par_slot[(slot.cpt, slot.row, slot.state)] = idx
        return idx

    def _node(self, kind: int, children, slot: int, const: float) -> int:
        self.kinds.append(kind)
        self.child_list.extend(children)
        self.child_off.append(len(self.child_list))
        self.leaf_slot.append(slot)
        self.leaf_const.append(const)
        return len(self.kinds) - 1

    def const_leaf(self, value: float) -> int:
        node = self._const_cache.get(value)
        if node is None:
            node = self._node(C_LEAF, (), -1, value)
            self._const_cache[value] = node
        return node

    def slot_leaf(self, slot: int) -> int:
        existing = self.slots[slot].node
        if existing >= 0:
            return existing
        node = self._node(C_LEAF, (), slot, 0.0)
        self.slots[slot].node = node
        return node

    def sum_node(self, children) -> int:
        return self._node(C_SUM, tuple(children), -1, 0.0)

    def prod_node(self, children) -> int:
        return self._node(C_PROD, tuple(children), -1, 0.0)

    # -- inspection --------------------------------------------------------

    @property
    def node_count(self) -> int:
        return len(self.kinds)

    @property
    def edge_count(self) -> int:
        return len(self.child_list)

    def n_slots(self) -> int:
        return len(self.slots)

    def var_status(self, var: int):
        """Assigned state of ``var`` if its status pins one, else None."""
        for s in range(self.variables[var].n_states):
            if self.status.get((var, s)) == FIXED_TRUE:
                return s
        return None

    # -- evaluation --------------------------------------------------------

    def _leaf_values(self, extra: Evidence | None, params) -> list[float] | None:
        """Initial node-value array; None signals a contradicted query."""
        values = [0.0] * len(self.kinds)
        for n in range(len(self.kinds)):
            if self.kinds[n] == C_LEAF and self.leaf_slot[n] < 0:
                values[n] = self.leaf_const[n]
        for slot_idx, slot in enumerate(self.slots):
            if slot.node < 0:
                continue
            if slot.kind == "ind":
                values[slot.node] = 1.0
            elif params is not None and slot.learnable:
                values[slot.node] = float(params[slot.cpt][slot.row, slot.state])
            else:
                values[slot.node] = slot.theta
        if extra is not None:
            if extra.constraints:
                raise UnsupportedQueryError(
                    "disjunctive constraints must be baked at compile time"
                )
            for var, state in extra.assignments.items():
                if var in self.pruned_vars:
                    raise UnsupportedQueryError(
                        f"variable {self.variables[var].name!r} was removed by "
                        "pruning and cannot be queried"
                    )
                if var not in self.live_vars:
                    raise UnsupportedQueryError(
                        f"variable {self.variables[var].name!r} is not part of "
                        "this circuit"
                    )
                if not 0 <= state < self.variables[var].n_states:
                    raise ModelError(
                        f"state {state} out of range for "
                        f"{self.variables[var].name!r}"
                    )
                if self.status.get((var, state)) == FIXED_FALSE:
                    return None
                for s in range(self.variables[var].n_states):
                    if s == state:
                        continue
                    slot = self.ind_slot.get((var, s))
                    if slot is not None and self.slots[slot].node >= 0:
                        values[self.slots[slot].node] = 0.0
        return values

    def _forward(self, values: list[float]) -> None:
        kinds, child_list, offs = self.kinds, self.child_list, self.child_off
        for n in range(len(kinds)):
            kind = kinds[n]
            if kind == C_LEAF:
                continue
            lo, hi = offs[n], offs[n + 1]
            if kind == C_SUM:
                acc = 0.0
                for i in range(lo, hi):
                    acc += values[child_list[i]]
            else:
                acc = 1.0
                for i in range(lo, hi):
                    acc *= values[child_list[i]]
            values[n] = acc

    def evaluate(self, extra: Evidence | None = None, params=None) -> float:
        """Probability of the baked evidence conjoined with ``extra``.

        One upward pass.  ``params`` optionally supplies tables for learnable
        CPTs; all other leaf values were fixed at extraction.
        """
        values = self._leaf_values(extra, params)
        if values is None:
            return 0.0
        self._forward(values)
        return self.prefactor * values[self.root]

    def differentiate(self, extra: Evidence | None = None, params=None) -> EvalResult:
        """Value plus one partial derivative per slot; two linear passes."""
        partials = np.zeros(len(self.slots))
        values = self._leaf_values(extra, params)
        if values is None:
            return EvalResult(0.0, partials, self)
        self._forward(values)
        kinds, child_list, offs = self.kinds, self.child_list, self.child_off
        deriv = [0.0] * len(kinds)
        deriv[self.root] = 1.0
        for n in range(len(kinds) - 1, -1, -1):
            kind = kinds[n]
            d = deriv[n]
            if kind == C_LEAF or d == 0.0:
                continue
            lo, hi = offs[n], offs[n + 1]
            if kind == C_SUM:
                for i in range(lo, hi):
                    deriv[child_list[i]] += d
            else:
                zeros = 0
                nz = 1.0
                for i in range(lo, hi):
                    v = values[child_list[i]]
                    if v == 0.0:
                        zeros += 1
                        if zeros > 1:
                            break
                    else:
                        nz *= v
                if zeros == 0:
                    for i in range(lo, hi):
                        deriv[child_list[i]] += d * nz / values[child_list[i]]
                elif zeros == 1:
                    for i in range(lo, hi):
                        if values[child_list[i]] == 0.0:
                            deriv[child_list[i]] += d * nz
                            break
        for slot_idx, slot in enumerate(self.slots):
            if slot.node >= 0:
                partials[slot_idx] = self.prefactor * deriv[slot.node]
        return EvalResult(self.prefactor * values[self.root], partials, self)

    # -- query helpers -----------------------------------------------------

    def _assigned_state(self, var: int, extra: Evidence | None):
        if extra is not None and var in extra.assignments:
            return extra.assignments[var]
        if var in self.baked.assignments:
            return self.baked.assignments[var]
        return self.var_status(var)

    def marginals(self, extra: Evidence | None = None, params=None
                  ) -> dict[int, np.ndarray]:
        """Posterior distribution per circuit variable given all evidence."""
        res = self.differentiate(extra, params)
        if res.value <= 0.0:
            raise InconsistentEvidenceError("evidence has probability zero")
        out: dict[int, np.ndarray] = {}
        for var in self.live_vars:
            n = self.variables[var].n_states
            dist = np.zeros(n)
            pinned = self._assigned_state(var, extra)
            if pinned is not None:
                dist[pinned] = 1.0
            else:
                for s in range(n):
                    if self.status.get((var, s)) == FIXED_FALSE:
                        continue
                    dist[s] = res.indicator_partial(var, s) / res.value
            out[var] = dist
        return out

    def family_marginals(self, cpt: int, extra: Evidence | None = None,
                         params=None) -> np.ndarray:
        """Posterior over (row, child state) for a learnable family."""
        if cpt not in self.learnable:
            raise UnsupportedQueryError(
                f"cpt of {self.variables[cpt].name!r} is not learnable; its "
                "parameters were baked at compile time"
            )
        return self.differentiate(extra, params).family_posterior(cpt, params)


# ---------------------------------------------------------------------------
# extraction


def extract(graph: DdnnfGraph, cnf: WeightedCnf, net: BayesianNetwork,
            baked: Evidence, pruned_vars=()) -> ArithmeticCircuit:
    """Build the arithmetic circuit for a compiled, simplified encoding.

    The circuit's value with all indicators at 1 equals the weighted model
    count of the original encoding: the scalar prefactor from simplification
    multiplies the root, and parameters implied true during simplification
    whose CPTs are learnable become explicit root factors so their partials
    stay available.
    """
    info = cnf.var_info
    ac = ArithmeticCircuit(
        variables=list(net.variables),
        live_vars=net.live,
        pruned_vars=pruned_vars,
        learnable=set(net.learnable),
        baked=baked,
        prefactor=cnf.prefactor,
    )
    for c in net.learnable:
        ac.cpt_rows[c] = net.cpts[c].n_rows

    bool_of_ind = cnf.indicator_index()

    # slots first, in a stable order independent of graph traversal
    for var in net.live:
        for s in range(net.domain(var)):
            b = bool_of_ind.get((var, s))
            if b is None:
                raise ModelError(f"encoding lacks indicator for ({var}, {s})")
            fixed = cnf.fixed.get(b)
            if fixed is None:
                ac.status[(var, s)] = LIVE
                ac.add_slot(Slot("ind", var=var, state=s))
            else:
                ac.status[(var, s)] = FIXED_TRUE if fixed else FIXED_FALSE
    for v, bv in enumerate(info, start=1):
        if bv.kind == "par" and bv.sticky:
            ac.add_slot(Slot("par", cpt=bv.cpt, row=bv.row, state=bv.state,
                             theta=bv.weight, learnable=True))

    nodes = graph.reachable()
    zob = {}
    zsize = {}
    mapped: dict[int, int] = {}
    for n in nodes:
        kind = graph.kinds[n]
        if kind == K_TRUE:
            zob[n], zsize[n] = 0, 0
            mapped[n] = ac.const_leaf(1.0)
        elif kind == K_FALSE:
            zob[n], zsize[n] = 0, 0
            mapped[n] = ac.const_leaf(0.0)
        elif kind == K_LIT:
            lit = graph.payload[n]
            bv = info[abs(lit) - 1]
            zob[n], zsize[n] = _mix(abs(lit)), 1
            if lit < 0:
                mapped[n] = ac.const_leaf(1.0)
            elif bv.kind == "ind":
                slot = ac.ind_slot.get((bv.var, bv.state))
                if slot is None:
                    raise ModelError(
                        f"graph mentions fixed indicator ({bv.var}, {bv.state})"
                    )
                mapped[n] = ac.slot_leaf(slot)
            elif bv.sticky:
                slot = ac.par_slot.get((bv.cpt, bv.row, bv.state))
                if slot is None:
                    slot = ac.add_slot(Slot("par", cpt=bv.cpt, row=bv.row,
                                            state=bv.state, theta=bv.weight,
                                            learnable=True))
                mapped[n] = ac.slot_leaf(slot)
            else:
                mapped[n] = ac.const_leaf(bv.weight)
        elif kind == K_AND:
            h, size = 0, 0
            for c in graph.children[n]:
                h ^= zob[c]
                size += zsize[c]
            zob[n], zsize[n] = h, size
            mapped[n] = ac.prod_node([mapped[c] for c in graph.children[n]])
        else:
            cs = graph.children[n]
            signatures = {(zob[c], zsize[c]) for c in cs}
            if len(signatures) == 1:
                zob[n], zsize[n] = zob[cs[0]], zsize[cs[0]]
                mapped[n] = ac.sum_node([mapped[c] for c in cs])
            else:
                mapped[n], zob[n], zsize[n] = _smooth_or(
                    ac, graph, n, mapped, info, bool_of_ind, net
                )
    # learnable parameters implied true multiply the root explicitly
    sticky_leaves = [
        ac.slot_leaf(ac.par_slot[(bv.cpt, bv.row, bv.state)])
        for v, bv in enumerate(info, start=1)
        if bv.kind == "par" and bv.sticky and v in cnf.sticky_true
    ]
    root = mapped[graph.root]
    if sticky_leaves:
        root = ac.prod_node([root] + sticky_leaves)
    ac.root = root
    return ac


def _bool_scope(graph: DdnnfGraph, node: int, memo: dict) -> frozenset:
    if node in memo:
        return memo[node]
    kind = graph.kinds[node]
    if kind in (K_TRUE, K_FALSE):
        out = frozenset()
    elif kind == K_LIT:
        out = frozenset((abs(graph.payload[node]),))
    else:
        out = frozenset()
        for c in graph.children[node]:
            out |= _bool_scope(graph, c, memo)
    memo[node] = out
    return out


def _smooth_or(ac: ArithmeticCircuit, graph: DdnnfGraph, node: int, mapped,
               info, bool_of_ind, net: BayesianNetwork):
    """Insert indicator-sum factors for branches missing whole variables.

    Entered only when the cheap hash check failed.  Any mismatch that is not
    a fully-missing network variable (a parameter, or a partial indicator
    group) is an internal invariant failure: such a graph cannot be repaired
    by smoothing and would evaluate incorrectly.
    """
    memo: dict[int, frozenset] = {}
    scopes = [_bool_scope(graph, c, memo) for c in graph.children[node]]
    union = frozenset().union(*scopes)
    new_children = []
    for child, scope in zip(graph.children[node], scopes):
        missing = union - scope
        groups: set[int] = set()
        for b in missing:
            bv = info[b - 1]
            if bv.kind != "ind":
                raise ModelError(
                    "unsmoothable graph: parameter variable "
                    f"{b} missing from a disjunct"
                )
            groups.add(bv.var)
        factors = [mapped[child]]
        for var in sorted(groups):
            group_bools = {
                bool_of_ind[(var, s)] for s in range(net.domain(var))
                if (var, s) in bool_of_ind
            }
            if group_bools & scope:
                raise ModelError(
                    f"unsmoothable graph: variable {var} partially mentioned"
                )
            leaves = [
                ac.slot_leaf(ac.ind_slot[(var, s)])
                for s in range(net.domain(var))
                if ac.status.get((var, s)) == LIVE
            ]
            if not leaves:
                raise ModelError(f"no live indicator leaves to smooth var {var}")
            factors.append(ac.sum_node(leaves))
        new_children.append(
            ac.prod_node(factors) if len(factors) > 1 else factors[0]
        )
    h = 0
    for b in union:
        h ^= _mix(b)
    return ac.sum_node(new_children), h, len(union)


# ---------------------------------------------------------------------------
# text serialization (round-trips bit-exactly; floats via repr)


def to_ac_text(ac: ArithmeticCircuit) -> str:
    lines = [f"ac {ac.node_count} {ac.edge_count} {ac.n_slots()}"]
    for v in ac.variables:
        lines.append(f"var {v.id} {v.name} " + " ".join(v.states))
    lines.append("live " + " ".join(str(v) for v in ac.live_vars))
    lines.append("pruned " + " ".join(str(v) for v in sorted(ac.pruned_vars)))
    lines.append("learnable " + " ".join(str(v) for v in sorted(ac.learnable)))
    for c in sorted(ac.cpt_rows):
        lines.append(f"cptrows {c} {ac.cpt_rows[c]}")
    for var in sorted(ac.baked.assignments):
        lines.append(f"baked {var} {ac.baked.assignments[var]}")
    for clause in ac.baked.constraints:
        lines.append("bakedor " + " ".join(f"{v}:{s}" for v, s in clause))
    for (var, s), st in sorted(ac.status.items()):
        lines.append(f"status {var} {s} {st}")
    lines.append(f"prefactor {ac.prefactor!r}")
    for i, slot in enumerate(ac.slots):
        if slot.kind == "ind":
            lines.append(f"slot {i} ind {slot.var} {slot.state} {slot.node}")
        else:
            lines.append(
                f"slot {i} par {slot.cpt} {slot.row} {slot.state} "
                f"{slot.theta!r} {int(slot.learnable)} {slot.node}"
            )
    for n in range(ac.node_count):
        kind = ac.kinds[n]
        if kind == C_LEAF:
            if ac.leaf_slot[n] >= 0:
                lines.append(f"L {ac.leaf_slot[n]}")
            else:
                lines.append(f"K {ac.leaf_const[n]!r}")
        else:
            cs = ac.child_list[ac.child_off[n]:ac.child_off[n + 1]]
            tag = "A" if kind == C_PROD else "O"
            lines.append(f"{tag} " + " ".join(str(x) for x in [len(cs)] + cs))
    lines.append(f"root {ac.root}")
    return "\n".join(lines) + "\n"


def from_ac_text(text: str) -> ArithmeticCircuit:
    variables: list[Variable] = []
    live: list[int] = []
    pruned: list[int] = []
    learnable: list[int] = []
    cpt_rows: dict[int, int] = {}
    baked = Evidence()
    status: list[tuple[int, int, int]] = []
    prefactor = 1.0
    slot_lines: list[list[str]] = []
    node_lines: list[list[str]] = []
    root = -1
    for raw in text.splitlines():
        parts = raw.split()
        if not parts:
            continue
        tag = parts[0]
        if tag == "var":
            variables.append(Variable(int(parts[1]), parts[2], tuple(parts[3:])))
        elif tag == "live":
            live = [int(x) for x in parts[1:]]
        elif tag == "pruned":
            pruned = [int(x) for x in parts[1:]]
        elif tag == "learnable":
            learnable = [int(x) for x in parts[1:]]
        elif tag == "cptrows":
            cpt_rows[int(parts[1])] = int(parts[2])
        elif tag == "baked":
            baked.assignments[int(parts[1])] = int(parts[2])
        elif tag == "bakedor":
            baked.constraints.append(
                tuple(tuple(int(y) for y in x.split(":")) for x in parts[1:])
            )
        elif tag == "status":
            status.append((int(parts[1]), int(parts[2]), int(parts[3])))
        elif tag == "prefactor":
            prefactor = float(parts[1])
        elif tag == "slot":
            slot_lines.append(parts)
        elif tag in ("L", "K", "A", "O"):
            node_lines.append(parts)
        elif tag == "root":
            root = int(parts[1])
        elif tag != "ac":
            raise ModelError(f"unknown record {tag!r} in circuit text")

    ac = ArithmeticCircuit(variables, live, pruned, learnable, baked, prefactor)
    ac.cpt_rows.update(cpt_rows)
    for var, s, st in status:
        ac.status[(var, s)] = st
    for parts in slot_lines:
        if parts[2] == "ind":
            slot = Slot("ind", var=int(parts[3]), state=int(parts[4]),
                        node=int(parts[5]))
        else:
            slot = Slot("par", cpt=int(parts[3]), row=int(parts[4]),
                        state=int(parts[5]), theta=float(parts[6]),
                        learnable=bool(int(parts[7])), node=int(parts[8]))
        ac.add_slot(slot)
    for parts in node_lines:
        if parts[0] == "L":
            ac._node(C_LEAF, (), int(parts[1]), 0.0)
        elif parts[0] == "K":
            ac._node(C_LEAF, (), -1, float(parts[1]))
        else:
            kind = C_PROD if parts[0] == "A" else C_SUM
            ac._node(kind, tuple(int(x) for x in parts[2:]), -1, 0.0)
    ac.root = root
    return ac


def zero_circuit(net: BayesianNetwork, baked: Evidence) -> ArithmeticCircuit:
    """Constant-zero circuit standing in for an inconsistent compilation."""
    ac = ArithmeticCircuit(list(net.variables), (), set(net.live), set(),
                           baked, 1.0)
    ac.root = ac.const_leaf(0.0)
    return ac


def smooth_marginal_total(ac: ArithmeticCircuit, extra=None, params=None) -> float:
    """Max deviation of any unpinned variable's marginal mass from 1."""
    res = ac.differentiate(extra, params)
    if res.value <= 0.0:
        raise InconsistentEvidenceError("evidence has probability zero")
    worst = 0.0
    for var in ac.live_vars:
        if ac._assigned_state(var, extra) is not None:
            continue
        total = 0.0
        for s in range(ac.variables[var].n_states):
            if ac.status.get((var, s)) == FIXED_FALSE:
                continue
            total += res.indicator_partial(var, s) / res.value
        worst = max(worst, abs(total - 1.0))
    return worst
