"""Shared generators and reference implementations for the test suite.

Everything here is deliberately independent of the compiled inference path:
networks come from seeded random construction, evidence is sampled from a
forward pass so it has positive probability by construction, and the
estimation reference runs its expectation step by exhaustive enumeration.
"""

from __future__ import annotations

import random

import numpy as np

from bnac.model import (
    BayesianNetwork,
    Cpt,
    Evidence,
    Variable,
    brute_force_family_marginals,
    brute_force_pr,
)


def random_network(n_vars: int, seed: int, *, max_states: int = 4,
                   max_parents: int = 3, determinism: float = 0.3,
                   learnable=()) -> BayesianNetwork:
    """Random DAG over ``n_vars`` variables with point-mass rows mixed in.

    Roughly ``determinism`` of the CPT rows are deterministic, except in
    learnable CPTs, which must keep interior parameters.
    """
    r = random.Random(seed)
    variables, cpts = [], {}
    for i in range(n_vars):
        d = r.randint(2, max_states)
        variables.append(Variable(i, f"X{i}", tuple(f"s{k}" for k in range(d))))
    for i in range(n_vars):
        pool = list(range(i))
        parents = tuple(sorted(r.sample(pool, min(len(pool), r.randint(0, max_parents)))))
        rows = 1
        for p in parents:
            rows *= variables[p].n_states
        table = np.empty((rows, variables[i].n_states))
        for row in range(rows):
            if r.random() < determinism and i not in learnable:
                table[row] = 0.0
                table[row][r.randrange(table.shape[1])] = 1.0
            else:
                raw = np.array([r.random() + 0.05 for _ in range(table.shape[1])])
                table[row] = raw / raw.sum()
        cpts[i] = Cpt(i, parents, table)
    return BayesianNetwork(variables, cpts, set(learnable))


def forward_sample(net: BayesianNetwork, r: random.Random) -> dict[int, int]:
    inst: dict[int, int] = {}
    for v in net.topo_order():
        cpt = net.cpts[v]
        row = cpt.row_index(inst, net.domain)
        weights = [float(x) for x in cpt.table[row]]
        inst[v] = r.choices(range(len(weights)), weights=weights)[0]
    return inst


def consistent_evidence(net: BayesianNetwork, seed: int, *,
                        assign_prob: float = 0.35,
                        constraint_prob: float = 0.5) -> Evidence:
    """Evidence projected from a forward sample, so its probability is
    positive; may include a disjunctive constraint anchored on the sample."""
    r = random.Random(seed)
    inst = forward_sample(net, r)
    assignments = {v: inst[v] for v in net.live if r.random() < assign_prob}
    constraints = []
    if r.random() < constraint_prob:
        pool = [v for v in net.live if v not in assignments]
        if len(pool) >= 2:
            a, b = r.sample(pool, 2)
            constraints.append(
                ((a, inst[a]), (b, r.randrange(net.domain(b))))
            )
    return Evidence(assignments, constraints)


def em_reference(net: BayesianNetwork, cases, params, iters: int):
    """Expectation-maximization with an exhaustively enumerated E-step."""
    lls = []
    for _ in range(iters):
        swapped = {
            v: Cpt(v, net.cpts[v].parents,
                   params[v] if v in params else net.cpts[v].table)
            for v in net.live
        }
        current = BayesianNetwork(net.variables, swapped, net.learnable)
        counts = {c: np.zeros_like(params[c]) for c in sorted(net.learnable)}
        ll = 0.0
        for case in cases:
            ll += float(np.log(brute_force_pr(current, case)))
            for c in sorted(net.learnable):
                counts[c] += brute_force_family_marginals(current, case, c)
        new_params = {}
        for c, n in counts.items():
            table = np.array(params[c])
            totals = n.sum(axis=1)
            for row in range(table.shape[0]):
                if totals[row] > 0.0:
                    table[row] = n[row] / totals[row]
            new_params[c] = table
        params = new_params
        lls.append(ll)
    return params, lls


def random_cnf(n_vars: int, n_clauses: int, seed: int, max_width: int = 3):
    """Plain random CNF over ``n_vars`` variables as literal tuples."""
    r = random.Random(seed)
    clauses = []
    for _ in range(n_clauses):
        width = r.randint(1, max_width)
        vs = r.sample(range(1, n_vars + 1), min(width, n_vars))
        clauses.append(tuple(v if r.random() < 0.5 else -v for v in vs))
    return clauses
