"""Translate a network plus evidence into a weighted CNF.

Boolean variables: one indicator per (variable, state) and one parameter per
CPT entry that survives the determinism refinements.  Numbering is fixed and
documented because DIMACS golden files depend on it: indicators first
(variable-major, state-minor), then parameters (CPT-major over active rows,
row-major, state-minor).

Clause sets per the standard encoding: exactly-one indicator clauses per
variable, an IP clause (family indicators imply the parameter) and PI clauses
(parameter implies each family indicator) per parameter.  Evidence assignments
become unit clauses and disjunctive constraints become clauses over
indicators.

Determinism refinements, applied per CPT and never to learnable CPTs:

* a 0 entry allocates no parameter variable; the family instantiation is
  forbidden by a clause of negated indicators;
* a 1 entry allocates no variable and no clauses;
* a CPT with any 0 entries additionally emits implicate clauses that restore
  unit-propagation strength: for each child state, clauses tying it to the
  parent states that support it, and for each parent state, a clause tying it
  to the child states it can produce.  These are entailed by the zero-entry
  clauses plus exactly-one, so the model set is unchanged, but they let unit
  resolution discover forced values (an observed deterministic output forces
  its inputs) instead of leaving them to search.

Models restricted to indicators are exactly the evidence-consistent full
instantiations; each model sets true precisely the parameters compatible with
it.  The weight of a model is the product of its true variables' weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import EnumerationBoundError, ModelError
from .model import BayesianNetwork, Evidence

ORIGIN_TAGS = ("indicator", "IP", "PI", "evidence", "constraint", "zero-parameter")


@dataclass(frozen=True)
class BoolVar:
    kind: str              # "ind", "par", or "raw" (parsed from DIMACS)
    weight: float
    var: int = -1          # ind: network variable id
    state: int = -1        # ind and par: state index
    cpt: int = -1          # par: cpt id
    row: int = -1          # par: original row index
    sticky: bool = False   # par of a learnable CPT: never fold into prefactor


@dataclass
class WeightedCnf:
    """Clauses over weighted Boolean variables, DIMACS-style signed literals.

    ``prefactor`` carries weights of variables eliminated by simplification
    (recorded in ``fixed``); ``sticky_true`` lists variables implied true
    whose weights must stay symbolic for the circuit.  The weighted model
    count of the object is
    prefactor * product(weights of sticky_true) * sum over models of the
    remaining variables of the product of true-variable weights, where a
    variable in no clause is free and contributes (weight + 1).
    """

    num_vars: int
    clauses: list[tuple[int, ...]] = field(default_factory=list)
    weights: list[float] = field(default_factory=list)
    origin: list[str] = field(default_factory=list)
    var_info: list[BoolVar] = field(default_factory=list)
    prefactor: float = 1.0
    fixed: dict[int, bool] = field(default_factory=dict)
    sticky_true: list[int] = field(default_factory=list)

    def add_clause(self, lits, tag: str) -> None:
        lits = tuple(lits)
        if not lits:
            raise ModelError("empty clause at construction")
        if len(set(lits)) != len(lits):
            raise ModelError(f"duplicate literal in clause {lits}")
        self.clauses.append(lits)
        self.origin.append(tag)

    def weight(self, var: int) -> float:
        return self.weights[var - 1]

    def live_vars(self) -> list[int]:
        return [v for v in range(1, self.num_vars + 1) if v not in self.fixed]

    def indicator_index(self) -> dict[tuple[int, int], int]:
        return {
            (info.var, info.state): v
            for v, info in enumerate(self.var_info, start=1)
            if info.kind == "ind"
        }

    def parameter_index(self) -> dict[tuple[int, int, int], int]:
        return {
            (info.cpt, info.row, info.state): v
            for v, info in enumerate(self.var_info, start=1)
            if info.kind == "par"
        }


def encode_evidence_clauses(ev: Evidence, indicator) -> list[tuple[int, ...]]:
    """Unit clause per assignment, one clause per disjunctive constraint.

    ``indicator`` maps (variable, state) to the Boolean variable number.
    """
    clauses = []
    for var in sorted(ev.assignments):
        clauses.append((indicator[(var, ev.assignments[var])],))
    for clause in ev.constraints:
        lits = []
        for var, state in clause:
            lit = indicator[(var, state)]
            if lit not in lits:
                lits.append(lit)
        clauses.append(tuple(lits))
    return clauses


def _support_clauses(cpt, rows, free_parents, domain_of, ind):
    """Implicates restoring propagation strength for a deterministic pattern.

    ``rows`` maps an active row index to ({parent: state}, weights per child
    state).  Emitted clauses are entailed by the zero-entry clauses together
    with the exactly-one indicator clauses.
    """
    child = cpt.child
    n_states = cpt.n_states

    out, seen = [], set()

    def emit(lits):
        key = tuple(sorted(lits))
        if key not in seen:
            seen.add(key)
            out.append(tuple(lits))

    # child-state supports: a child state implies each parent takes one of
    # the states occurring in rows that can produce it
    for x in range(n_states):
        support = [states for states, weights in rows.values() if weights[x] > 0.0]
        if not support:
            emit([-ind[(child, x)]])
            continue
        for p in free_parents:
            vals = sorted({states[p] for states in support})
            if len(vals) < domain_of(p):
                emit([-ind[(child, x)]] + [ind[(p, s)] for s in vals])

    # parent-state supports: a parent state implies one of the child states
    # it can produce
    for p in free_parents:
        for s in range(domain_of(p)):
            reachable = sorted({
                x
                for states, weights in rows.values()
                if states[p] == s
                for x in range(n_states)
                if weights[x] > 0.0
            })
            if not reachable:
                emit([-ind[(p, s)]])
            elif len(reachable) < n_states:
                emit([-ind[(p, s)]] + [ind[(child, x)] for x in reachable])
    return out


def encode(net: BayesianNetwork, ev: Evidence, *, refinements: bool = True,
           refine_cpts=None) -> WeightedCnf:
    """Weighted CNF whose models correspond one-to-one with the network's
    evidence-consistent instantiations.

    ``refinements`` switches the determinism refinements globally;
    ``refine_cpts`` optionally restricts them to a subset of CPT ids.
    Learnable CPTs never take refinements (their parameters must remain
    circuit inputs).
    """
    live = net.live
    cnf = WeightedCnf(num_vars=0)
    ind: dict[tuple[int, int], int] = {}

    def new_var(info: BoolVar) -> int:
        cnf.num_vars += 1
        cnf.weights.append(info.weight)
        cnf.var_info.append(info)
        return cnf.num_vars

    for v in live:
        for s in range(net.domain(v)):
            ind[(v, s)] = new_var(BoolVar("ind", 1.0, var=v, state=s))

    def refined(cpt_id: int) -> bool:
        if not refinements or cpt_id in net.learnable:
            return False
        return refine_cpts is None or cpt_id in refine_cpts

    # parameter variables, numbered before any clause is emitted
    par: dict[tuple[int, int, int], int] = {}
    cpt_rows = {}
    for v in live:
        cpt = net.cpts[v]
        rows = {}
        for row, states in cpt.active_rows(net.domain):
            weights = [float(w) for w in cpt.table[row]]
            rows[row] = (dict(states), weights)
            for x, w in enumerate(weights):
                if refined(v) and w in (0.0, 1.0):
                    continue
                sticky = v in net.learnable
                par[(v, row, x)] = new_var(
                    BoolVar("par", w, cpt=v, row=row, state=x, sticky=sticky)
                )
        cpt_rows[v] = rows

    # exactly-one indicator clauses
    for v in live:
        n = net.domain(v)
        cnf.add_clause([ind[(v, s)] for s in range(n)], "indicator")
        for i in range(n):
            for j in range(i + 1, n):
                cnf.add_clause([-ind[(v, i)], -ind[(v, j)]], "indicator")

    # parameter clauses and zero-entry clauses
    for v in live:
        cpt = net.cpts[v]
        free_parents = list(cpt.effective_parents())
        has_zero = False
        for row, (states, weights) in cpt_rows[v].items():
            for x, w in enumerate(weights):
                family = [ind[(p, states[p])] for p in free_parents] + [ind[(v, x)]]
                theta = par.get((v, row, x))
                if theta is not None:
                    cnf.add_clause([-lam for lam in family] + [theta], "IP")
                    for lam in family:
                        cnf.add_clause([-theta, lam], "PI")
                elif w == 0.0:
                    has_zero = True
                    cnf.add_clause([-lam for lam in family], "zero-parameter")
                # w == 1.0 under refinement: no variable, no clauses
        if has_zero:
            for lits in _support_clauses(cpt, cpt_rows[v], free_parents,
                                         net.domain, ind):
                cnf.add_clause(lits, "zero-parameter")

    for i, clause in enumerate(encode_evidence_clauses(ev, ind)):
        tag = "evidence" if i < len(ev.assignments) else "constraint"
        cnf.add_clause(clause, tag)
    return cnf


# ---------------------------------------------------------------------------
# reference weighted model counter


def weighted_model_count_oracle(cnf: WeightedCnf, max_vars: int = 200) -> float:
    """Exhaustive DPLL reference counter; exponential, for small CNFs only."""
    live = cnf.live_vars()
    if len(live) > max_vars:
        raise EnumerationBoundError(
            f"{len(live)} variables exceed the counting bound {max_vars}"
        )
    weights = {v: cnf.weight(v) for v in live}
    clauses = [frozenset(c) for c in cnf.clauses]

    def assign(cs, lit):
        out = []
        for c in cs:
            if lit in c:
                continue
            if -lit in c:
                c = c - {-lit}
            out.append(c)
        return out

    def count(cs, free):
        while True:
            if any(len(c) == 0 for c in cs):
                return 0.0
            unit = next((c for c in cs if len(c) == 1), None)
            if unit is None:
                break
            lit = next(iter(unit))
            factor = weights[abs(lit)] if lit > 0 else 1.0
            cs = assign(cs, lit)
            free = free - {abs(lit)}
            acc = count(cs, free)
            return factor * acc
        if not cs:
            total = 1.0
            for v in free:
                total *= weights[v] + 1.0
            return total
        v = min(abs(lit) for lit in min(cs, key=lambda c: min(abs(l) for l in c)))
        rest = free - {v}
        return (weights[v] * count(assign(cs, v), rest)
                + count(assign(cs, -v), rest))

    total = count(clauses, set(live))
    for v in cnf.sticky_true:
        total *= cnf.weight(v)
    return cnf.prefactor * total


def model_count_oracle(cnf: WeightedCnf, max_vars: int = 200) -> int:
    """Number of satisfying assignments over the live variables."""
    ones = WeightedCnf(
        num_vars=cnf.num_vars,
        clauses=list(cnf.clauses),
        weights=[1.0] * cnf.num_vars,
        origin=list(cnf.origin),
        var_info=list(cnf.var_info),
        fixed=dict(cnf.fixed),
    )
    return round(weighted_model_count_oracle(ones, max_vars))


# ---------------------------------------------------------------------------
# DIMACS export / import


def to_dimacs(cnf: WeightedCnf) -> str:
    """Serialize clauses and weights; ``w <var> <weight>`` for every variable."""
    lines = [f"p cnf {cnf.num_vars} {len(cnf.clauses)}"]
    for clause in cnf.clauses:
        lines.append(" ".join(str(l) for l in clause) + " 0")
    for v in range(1, cnf.num_vars + 1):
        lines.append(f"w {v} {cnf.weights[v - 1]!r}")
    return "\n".join(lines) + "\n"


def from_dimacs(text: str) -> WeightedCnf:
    cnf = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        parts = line.split()
        if parts[0] == "p":
            if len(parts) != 4 or parts[1] != "cnf":
                raise ModelError(f"bad DIMACS header at line {lineno}")
            num_vars = int(parts[2])
            cnf = WeightedCnf(
                num_vars=num_vars,
                weights=[1.0] * num_vars,
                var_info=[BoolVar("raw", 1.0) for _ in range(num_vars)],
            )
        elif parts[0] == "w":
            if cnf is None:
                raise ModelError(f"weight before header at line {lineno}")
            v = int(parts[1])
            cnf.weights[v - 1] = float(parts[2])
            cnf.var_info[v - 1] = BoolVar("raw", cnf.weights[v - 1])
        else:
            if cnf is None:
                raise ModelError(f"clause before header at line {lineno}")
            lits = [int(t) for t in parts]
            if lits[-1] != 0:
                raise ModelError(f"clause not terminated by 0 at line {lineno}")
            cnf.add_clause(lits[:-1], "raw")
    if cnf is None:
        raise ModelError("no DIMACS header found")
    return cnf
