"""CNF simplification: unit resolution, subsumption, learned evidence.

Only unit resolution is implemented; stronger inference is an extension
point, not default behavior.  Weight bookkeeping keeps the weighted model
count exact: when propagation fixes a variable true, its weight is multiplied
into the scalar prefactor carried on the simplified CNF, except for sticky
(learnable-parameter) variables, which are recorded separately so they can
stay symbolic in the extracted circuit.
"""

from __future__ import annotations

from dataclasses import dataclass

from .encoder import WeightedCnf
from .model import Evidence


@dataclass
class PropagationResult:
    implied: list[int]          # literals fixed by propagation, in order
    simplified: WeightedCnf
    conflict: bool

    def implied_literal_set(self) -> set[int]:
        return set(self.implied)


def unit_propagate(cnf: WeightedCnf) -> PropagationResult:
    """Run unit resolution to a fixpoint.

    Models of the simplified CNF extended by the implied literals are exactly
    the models of the input.  A conflict is a result state, not an error.
    """
    assign: dict[int, bool] = {}
    queue: list[int] = []
    clauses = [list(c) for c in cnf.clauses]
    origin = list(cnf.origin)

    def enqueue(lit: int) -> bool:
        var, val = abs(lit), lit > 0
        if var in assign:
            return assign[var] == val
        assign[var] = val
        queue.append(lit)
        return True

    conflict = False
    for clause in clauses:
        if len(clause) == 1 and not enqueue(clause[0]):
            conflict = True
    # occurrence lists for linear-time propagation
    occ: dict[int, list[int]] = {}
    for i, clause in enumerate(clauses):
        for lit in clause:
            occ.setdefault(lit, []).append(i)

    satisfied = [False] * len(clauses)
    qi = 0
    while qi < len(queue) and not conflict:
        lit = queue[qi]
        qi += 1
        for i in occ.get(lit, ()):
            satisfied[i] = True
        for i in occ.get(-lit, ()):
            if satisfied[i]:
                continue
            clause = clauses[i]
            if -lit in clause:
                clause.remove(-lit)
            unassigned = [l for l in clause if abs(l) not in assign]
            if not unassigned:
                if not any(assign[abs(l)] == (l > 0) for l in clause):
                    conflict = True
                    break
                satisfied[i] = True
            elif len(unassigned) == 1 and not any(
                assign.get(abs(l)) == (l > 0) for l in clause
            ):
                if not enqueue(unassigned[0]):
                    conflict = True
                    break

    implied = list(queue)
    if conflict:
        return PropagationResult(implied, cnf, True)

    prefactor = cnf.prefactor
    sticky = list(cnf.sticky_true)
    fixed = dict(cnf.fixed)
    for var, val in assign.items():
        fixed[var] = val
        if val:
            info = cnf.var_info[var - 1]
            if info.sticky:
                sticky.append(var)
            else:
                prefactor *= cnf.weight(var)

    new_clauses, new_origin = [], []
    for i, clause in enumerate(clauses):
        if satisfied[i]:
            continue
        kept = tuple(l for l in clause if abs(l) not in assign)
        if any(assign.get(abs(l)) == (l > 0) for l in clause):
            continue
        new_clauses.append(kept)
        new_origin.append(origin[i])

    simplified = WeightedCnf(
        num_vars=cnf.num_vars,
        clauses=new_clauses,
        weights=list(cnf.weights),
        origin=new_origin,
        var_info=list(cnf.var_info),
        prefactor=prefactor,
        fixed=fixed,
        sticky_true=sticky,
    )
    return PropagationResult(implied, simplified, False)


def remove_subsumed(cnf: WeightedCnf) -> WeightedCnf:
    """Drop every clause that is a superset of another clause.

    Forward subsumption: clauses are visited shortest-first, and each one
    kills its supersets, located through the occurrence list of its rarest
    literal (a superset necessarily contains it).  A 64-bit literal
    signature prefilters the subset tests, keeping the scan near-linear on
    the clause counts produced here.
    """
    n = len(cnf.clauses)
    sets = [frozenset(c) for c in cnf.clauses]
    sigs = [0] * n
    occ: dict[int, list[int]] = {}
    for i, c in enumerate(sets):
        s = 0
        for lit in c:
            s |= 1 << (hash(lit) & 63)
            occ.setdefault(lit, []).append(i)
        sigs[i] = s
    alive = [True] * n
    for i in sorted(range(n), key=lambda k: len(sets[k])):
        if not alive[i]:
            continue
        c = sets[i]
        sig = sigs[i]
        rarest = min(c, key=lambda lit: len(occ[lit]))
        for j in occ[rarest]:
            if j == i or not alive[j]:
                continue
            if sig & ~sigs[j]:
                continue
            if c <= sets[j]:
                alive[j] = False

    return WeightedCnf(
        num_vars=cnf.num_vars,
        clauses=[cnf.clauses[i] for i in range(len(cnf.clauses)) if alive[i]],
        weights=list(cnf.weights),
        origin=[cnf.origin[i] for i in range(len(cnf.origin)) if alive[i]],
        var_info=list(cnf.var_info),
        prefactor=cnf.prefactor,
        fixed=dict(cnf.fixed),
        sticky_true=list(cnf.sticky_true),
    )


def simplify(cnf: WeightedCnf) -> PropagationResult:
    """Unit resolution followed by removal of subsumed clauses."""
    result = unit_propagate(cnf)
    if result.conflict:
        return result
    return PropagationResult(result.implied, remove_subsumed(result.simplified),
                             False)


def learned_evidence(result: PropagationResult,
                     baseline: Evidence | None = None) -> Evidence:
    """Evidence entailed by the input evidence plus network determinism.

    Implied positive indicator literals become assignments; implied negative
    literals become assignments when all but one state of a variable is
    excluded and otherwise surviving-state constraints.  Clauses of the
    simplified CNF that mention only indicators are also translated into
    constraints, which captures exclusions that single-variable evidence
    cannot express.  Assignments already present in ``baseline`` are omitted.
    """
    if result.conflict:
        raise ValueError("no learned evidence from a conflicting propagation")
    cnf = result.simplified
    info = cnf.var_info
    domain_states: dict[int, set[int]] = {}
    for bv in info:
        if bv.kind == "ind":
            domain_states.setdefault(bv.var, set()).add(bv.state)

    base_assign = dict(baseline.assignments) if baseline else {}
    assignments: dict[int, int] = {}
    excluded: dict[int, set[int]] = {}
    for lit in result.implied:
        bv = info[abs(lit) - 1]
        if bv.kind != "ind":
            continue
        if lit > 0:
            if base_assign.get(bv.var) != bv.state:
                assignments[bv.var] = bv.state
        else:
            excluded.setdefault(bv.var, set()).add(bv.state)

    constraints: list[tuple[tuple[int, int], ...]] = []
    seen = set()

    def add_constraint(atoms) -> None:
        key = tuple(sorted(atoms))
        if key and key not in seen:
            seen.add(key)
            constraints.append(tuple(atoms))

    for var, gone in sorted(excluded.items()):
        if var in assignments or var in base_assign:
            continue
        left = sorted(domain_states[var] - gone)
        if len(left) == 1:
            assignments[var] = left[0]
        elif left:
            add_constraint([(var, s) for s in left])

    # indicator-only clauses of the simplified CNF, rewritten over states
    for clause in cnf.clauses:
        atoms: list[tuple[int, int]] = []
        ok = True
        touched: set[int] = set()
        for lit in clause:
            bv = info[abs(lit) - 1]
            if bv.kind != "ind":
                ok = False
                break
            if lit > 0:
                atoms.append((bv.var, bv.state))
            else:
                atoms.extend(
                    (bv.var, s)
                    for s in sorted(domain_states[bv.var] - {bv.state})
                )
            touched.add(bv.var)
        if not ok:
            continue
        atoms = sorted(set(atoms))
        # skip clauses that are vacuous because they allow every state of
        # some variable
        per_var: dict[int, set[int]] = {}
        for var, s in atoms:
            per_var.setdefault(var, set()).add(s)
        if any(per_var.get(v, set()) >= domain_states[v] for v in touched):
            continue
        add_constraint(atoms)

    return Evidence(assignments, constraints)
