"""Discrete Bayesian networks, evidence, and exhaustive-enumeration oracles.

A network denotes a polynomial with one term per full variable instantiation;
each term multiplies one indicator per variable and one CPT entry per family.
Probability-of-evidence is that polynomial evaluated with indicators of states
contradicting the evidence set to zero.  Everything here realizes the
semantics directly, by enumeration or dense tensor algebra, and serves as
ground truth for the compiled route.

Variables and states are dense integer handles assigned at construction; all
other modules speak handles, never names.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import EnumerationBoundError, InconsistentEvidenceError, ModelError

DEFAULT_ENUM_BOUND = 1 << 24
ROW_SUM_TOL = 1e-9
ROW_NORMALIZE_TOL = 1e-6


@dataclass(frozen=True)
class Variable:
    id: int
    name: str
    states: tuple[str, ...]

    @property
    def n_states(self) -> int:
        return len(self.states)


@dataclass
class Cpt:
    """Conditional probability table for one child variable.

    ``table`` has one row per instantiation of ``parents`` in row-major order
    (first parent varies slowest) and one column per child state.  Pruning may
    pin some parents to observed states via ``fixed_parents``; pinned parents
    stay in ``parents`` so row indices keep their original meaning, but only
    rows consistent with the pins are active.
    """

    child: int
    parents: tuple[int, ...]
    table: np.ndarray
    fixed_parents: dict[int, int] = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return self.table.shape[0]

    @property
    def n_states(self) -> int:
        return self.table.shape[1]

    def strides(self, domain_of) -> list[int]:
        sizes = [domain_of(p) for p in self.parents]
        strides = [1] * len(sizes)
        for i in range(len(sizes) - 2, -1, -1):
            strides[i] = strides[i + 1] * sizes[i + 1]
        return strides

    def row_index(self, parent_states, domain_of) -> int:
        idx = 0
        for stride, p in zip(self.strides(domain_of), self.parents):
            s = self.fixed_parents.get(p)
            if s is None:
                s = parent_states[p]
            idx += stride * s
        return idx

    def active_rows(self, domain_of):
        """(row index, {parent: state}) for rows consistent with the pins."""
        strides = self.strides(domain_of)
        free = [p for p in self.parents if p not in self.fixed_parents]
        for combo in itertools.product(*[range(domain_of(p)) for p in free]):
            states = dict(self.fixed_parents)
            states.update(zip(free, combo))
            idx = sum(stride * states[p] for stride, p in zip(strides, self.parents))
            yield idx, states

    def effective_parents(self) -> tuple[int, ...]:
        return tuple(p for p in self.parents if p not in self.fixed_parents)


@dataclass
class BayesianNetwork:
    """Variables plus one CPT per live variable.

    ``variables`` is the full, id-indexed vocabulary and never shrinks; a
    pruned network simply carries CPTs for a subset of the ids.  ``learnable``
    names the CPTs whose entries are free during parameter estimation.
    """

    variables: list[Variable]
    cpts: dict[int, Cpt]
    learnable: set[int] = field(default_factory=set)

    @property
    def live(self) -> tuple[int, ...]:
        return tuple(sorted(self.cpts))

    def domain(self, var: int) -> int:
        return self.variables[var].n_states

    def var_named(self, name: str) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise ModelError(f"unknown variable {name!r}")

    def state_index(self, var: int, state: str) -> int:
        try:
            return self.variables[var].states.index(state)
        except ValueError:
            raise ModelError(
                f"variable {self.variables[var].name!r} has no state {state!r}"
            ) from None

    def instantiation_count(self) -> int:
        total = 1
        for v in self.live:
            total *= self.domain(v)
        return total

    def topo_order(self) -> list[int]:
        live = set(self.live)
        indeg = {v: 0 for v in live}
        children = {v: [] for v in live}
        for v in live:
            for p in self.cpts[v].effective_parents():
                if p in live:
                    indeg[v] += 1
                    children[p].append(v)
        order = []
        stack = sorted((v for v in live if indeg[v] == 0), reverse=True)
        while stack:
            v = stack.pop()
            order.append(v)
            for c in children[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    stack.append(c)
        if len(order) != len(live):
            raise ModelError("parent graph is cyclic")
        return order


@dataclass
class Evidence:
    """Fixed assignments plus optional disjunctive constraints.

    Each constraint is a clause of (variable, state) atoms, at least one of
    which must hold.  A variable may appear both assigned and in constraints;
    contradictions surface as zero probability / propagation conflicts.
    """

    assignments: dict[int, int] = field(default_factory=dict)
    constraints: list[tuple[tuple[int, int], ...]] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not self.assignments and not self.constraints

    def mentioned_vars(self) -> set[int]:
        vs = set(self.assignments)
        for clause in self.constraints:
            vs.update(var for var, _ in clause)
        return vs

    def check(self, net: BayesianNetwork) -> None:
        for var, state in self.assignments.items():
            if var < 0 or var >= len(net.variables):
                raise ModelError(f"evidence references unknown variable id {var}")
            if not 0 <= state < net.domain(var):
                raise ModelError(
                    f"evidence state {state} out of range for "
                    f"{net.variables[var].name!r}"
                )
        for clause in self.constraints:
            if not clause:
                raise ModelError("empty evidence constraint")
            for var, state in clause:
                if var < 0 or var >= len(net.variables):
                    raise ModelError(f"constraint references unknown variable id {var}")
                if not 0 <= state < net.domain(var):
                    raise ModelError(
                        f"constraint state {state} out of range for "
                        f"{net.variables[var].name!r}"
                    )


def merge_evidence(base: Evidence, extra: Evidence) -> Evidence:
    """Union of two evidence sets; conflicting assignments are inconsistent."""
    assignments = dict(base.assignments)
    for var, state in extra.assignments.items():
        if assignments.get(var, state) != state:
            raise InconsistentEvidenceError(
                f"conflicting assignments for variable id {var}"
            )
        assignments[var] = state
    constraints = list(base.constraints)
    seen = {tuple(sorted(c)) for c in constraints}
    for clause in extra.constraints:
        key = tuple(sorted(clause))
        if key not in seen:
            seen.add(key)
            constraints.append(clause)
    return Evidence(assignments, constraints)


# ---------------------------------------------------------------------------
# validation


def validate(net: BayesianNetwork) -> list[str]:
    """Check every structural invariant; returns a list of violations.

    An empty list means the network is valid.  Messages name the offending
    variable or CPT row so callers can surface actionable diagnostics.
    """
    problems: list[str] = []
    ids = [v.id for v in net.variables]
    if ids != list(range(len(net.variables))):
        problems.append("variable ids must be dense 0..n-1 in order")
        return problems
    for v in net.variables:
        if v.n_states < 1:
            problems.append(f"variable {v.name!r} has an empty domain")
        if len(set(v.states)) != v.n_states:
            problems.append(f"variable {v.name!r} has duplicate state names")

    live = set(net.cpts)
    for var, cpt in net.cpts.items():
        name = net.variables[var].name
        if cpt.child != var:
            problems.append(f"cpt registered under {name!r} has child {cpt.child}")
            continue
        bad_parent = False
        for p in cpt.parents:
            if p < 0 or p >= len(net.variables):
                problems.append(f"cpt {name!r} has invalid parent id {p}")
                bad_parent = True
            elif p not in live:
                problems.append(
                    f"cpt {name!r} has parent {net.variables[p].name!r} "
                    "with no cpt of its own"
                )
        if bad_parent:
            continue
        expected_rows = 1
        for p in cpt.parents:
            expected_rows *= net.domain(p)
        if cpt.table.shape != (expected_rows, net.domain(var)):
            problems.append(
                f"cpt {name!r} has shape {cpt.table.shape}, "
                f"expected ({expected_rows}, {net.domain(var)})"
            )
            continue
        if np.any(cpt.table < -1e-12) or np.any(cpt.table > 1 + 1e-12):
            problems.append(f"cpt {name!r} has entries outside [0, 1]")
        sums = cpt.table.sum(axis=1)
        bad = np.nonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)[0]
        for r in bad[:4]:
            problems.append(f"cpt {name!r} row {int(r)} sums to {sums[r]:.12g}")
        for p, s in cpt.fixed_parents.items():
            if p not in cpt.parents or not 0 <= s < net.domain(p):
                problems.append(f"cpt {name!r} pins invalid parent state ({p}, {s})")

    try:
        BayesianNetwork(net.variables, net.cpts).topo_order()
    except ModelError as exc:
        problems.append(str(exc))
    return problems


def require_valid(net: BayesianNetwork) -> BayesianNetwork:
    problems = validate(net)
    if problems:
        raise ModelError("; ".join(problems))
    return net


def normalize_rows(table: np.ndarray, context: str) -> np.ndarray:
    """Renormalize rows that are off by text-format rounding; reject worse.

    Rows already within the validation tolerance are left untouched so that
    parse/write round-trips stay bit-identical.
    """
    sums = table.sum(axis=1)
    off = np.abs(sums - 1.0)
    if np.any(off > ROW_NORMALIZE_TOL):
        r = int(np.argmax(off))
        raise ModelError(f"{context}: row {r} sums to {sums[r]:.12g}")
    out = np.array(table)
    fix = off > ROW_SUM_TOL
    if np.any(fix):
        out[fix] = out[fix] / sums[fix, None]
    return out


# ---------------------------------------------------------------------------
# enumeration oracles


def _check_bound(net: BayesianNetwork, enum_bound: int) -> None:
    count = net.instantiation_count()
    if count > enum_bound:
        raise EnumerationBoundError(
            f"{count} instantiations exceed the enumeration bound {enum_bound}"
        )


def enumerate_terms(net: BayesianNetwork, ev: Evidence,
                    enum_bound: int = DEFAULT_ENUM_BOUND):
    """Yield (instantiation, weight) per full instantiation consistent with ev.

    The weight multiplies exactly one CPT entry per live family.  Terms whose
    weight is zero are still produced, so the term count reflects structure
    and evidence alone.
    """
    _check_bound(net, enum_bound)
    live = net.live
    ranges = []
    for v in live:
        s = ev.assignments.get(v)
        ranges.append(range(net.domain(v)) if s is None else (s,))
    for combo in itertools.product(*ranges):
        inst = dict(zip(live, combo))
        ok = True
        for clause in ev.constraints:
            if not any(inst.get(var) == state for var, state in clause):
                ok = False
                break
        if not ok:
            continue
        weight = 1.0
        for v in live:
            cpt = net.cpts[v]
            weight *= float(cpt.table[cpt.row_index(inst, net.domain), inst[v]])
        yield inst, weight


def _broadcast_factor(factor: np.ndarray, dst_axes: list[int], n_axes: int) -> np.ndarray:
    """Reshape ``factor`` so its axes land on ``dst_axes`` of an n-axis tensor."""
    order = list(np.argsort(dst_axes, kind="stable"))
    moved = np.transpose(factor, axes=order)
    shape = [1] * n_axes
    for axis, size in zip(sorted(dst_axes), moved.shape):
        shape[axis] = size
    return moved.reshape(shape)


def joint_tensor(net: BayesianNetwork, enum_bound: int = DEFAULT_ENUM_BOUND) -> np.ndarray:
    """Dense joint over the live variables, axes in ``net.live`` order."""
    _check_bound(net, enum_bound)
    live = net.live
    axis_of = {v: i for i, v in enumerate(live)}
    joint = np.ones(tuple(net.domain(v) for v in live))
    for v in live:
        cpt = net.cpts[v]
        free = [p for p in cpt.parents if p not in cpt.fixed_parents]
        fam_shape = tuple(net.domain(p) for p in free) + (net.domain(v),)
        factor = np.empty(fam_shape)
        for idx, states in cpt.active_rows(net.domain):
            pos = tuple(states[p] for p in free)
            factor[pos] = cpt.table[idx]
        dst = [axis_of[p] for p in free] + [axis_of[v]]
        joint = joint * _broadcast_factor(factor, dst, len(live))
    return joint


def evidence_mask(net: BayesianNetwork, ev: Evidence) -> np.ndarray:
    """0/1 tensor over the live axes selecting ev-consistent instantiations."""
    live = net.live
    axis_of = {v: i for i, v in enumerate(live)}
    shape = tuple(net.domain(v) for v in live)
    mask = np.ones(shape)
    for var, state in ev.assignments.items():
        if var not in axis_of:
            continue
        keep = np.zeros(net.domain(var))
        keep[state] = 1.0
        mask = mask * _broadcast_factor(keep, [axis_of[var]], len(live))
    for clause in ev.constraints:
        atoms = [(var, state) for var, state in clause if var in axis_of]
        if not atoms:
            continue
        cmask = np.zeros(shape)
        for var, state in atoms:
            sel = [slice(None)] * len(live)
            sel[axis_of[var]] = state
            cmask[tuple(sel)] = 1.0
        mask = mask * cmask
    return mask


def brute_force_pr(net: BayesianNetwork, ev: Evidence,
                   enum_bound: int = DEFAULT_ENUM_BOUND) -> float:
    """Probability of the evidence by full tensor summation."""
    joint = joint_tensor(net, enum_bound)
    return float((joint * evidence_mask(net, ev)).sum())


def brute_force_marginals(net: BayesianNetwork, ev: Evidence,
                          enum_bound: int = DEFAULT_ENUM_BOUND) -> dict[int, np.ndarray]:
    """Posterior distribution per live variable given the evidence."""
    joint = joint_tensor(net, enum_bound) * evidence_mask(net, ev)
    total = float(joint.sum())
    if total <= 0.0:
        raise InconsistentEvidenceError("evidence has probability zero")
    live = net.live
    out = {}
    for i, v in enumerate(live):
        axes = tuple(j for j in range(len(live)) if j != i)
        out[v] = np.asarray(joint.sum(axis=axes)) / total
    return out


def brute_force_family_marginals(net: BayesianNetwork, ev: Evidence, cpt_id: int,
                                 enum_bound: int = DEFAULT_ENUM_BOUND) -> np.ndarray:
    """Posterior over (row, child state) of one family given the evidence.

    Rows are indexed in the CPT's original row-major order; rows inconsistent
    with pinned parents get probability zero.
    """
    joint = joint_tensor(net, enum_bound) * evidence_mask(net, ev)
    total = float(joint.sum())
    if total <= 0.0:
        raise InconsistentEvidenceError("evidence has probability zero")
    live = net.live
    axis_of = {v: i for i, v in enumerate(live)}
    cpt = net.cpts[cpt_id]
    free = [p for p in cpt.parents if p not in cpt.fixed_parents]
    fam_axes = [axis_of[p] for p in free] + [axis_of[cpt_id]]
    other = tuple(j for j in range(len(live)) if j not in fam_axes)
    fam = joint.sum(axis=other)
    # fam's axes follow ascending tensor order; realign to (free..., child)
    rank = np.argsort(np.argsort(fam_axes, kind="stable"), kind="stable")
    fam = np.transpose(fam, axes=list(rank))
    out = np.zeros((cpt.n_rows, cpt.n_states))
    for pos in itertools.product(*[range(net.domain(p)) for p in free]):
        states = dict(cpt.fixed_parents)
        states.update(zip(free, pos))
        row = cpt.row_index(states, net.domain)
        out[row, :] = fam[pos]
    return out / total
