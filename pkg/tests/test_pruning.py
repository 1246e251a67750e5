import itertools

import numpy as np
import pytest

from bnac.errors import InconsistentEvidenceError
from bnac.model import (
    BayesianNetwork,
    Cpt,
    Evidence,
    Variable,
    brute_force_pr,
    merge_evidence,
)
from bnac.pruning import classical_prune, reprune_with_learned
from support import consistent_evidence, random_network


def chain3():
    half = np.full((2, 2), 0.5)
    return BayesianNetwork(
        [Variable(i, f"X{i}", ("s0", "s1")) for i in range(3)],
        {
            0: Cpt(0, (), np.array([[0.7, 0.3]])),
            1: Cpt(1, (0,), half.copy()),
            2: Cpt(2, (1,), half.copy()),
        },
    )


def test_barren_descendants_removed():
    net = chain3()
    pruned, report = classical_prune(net, Evidence({0: 0}), query_vars=(0,))
    assert report.removed_variables == {1, 2}
    assert pruned.live == (0,)


def test_eq_style_row_selection(abc_net):
    ev = Evidence({0: 1, 1: 0})
    pruned, report = classical_prune(abc_net, ev, query_vars=(2,))
    assert report.severed_edges == {(0, 2), (1, 2)}
    assert report.retained_rows(2) == 1
    # the single surviving row is the observed parent instantiation
    mask = report.row_selections[2]
    assert list(np.nonzero(mask)[0]) == [2]  # row (a2, b1)


def test_identity_pruning(abc_net):
    pruned, report = classical_prune(abc_net, Evidence(), query_vars=abc_net.live)
    assert not report.removed_variables
    assert not report.severed_edges
    assert pruned.live == abc_net.live


def test_pruning_preserves_pr():
    for seed in range(12):
        net = random_network(7, seed)
        ev = consistent_evidence(net, seed + 50)
        pruned, _ = classical_prune(net, ev)
        left = brute_force_pr(pruned, ev)
        right = brute_force_pr(net, ev)
        assert left == pytest.approx(right, abs=1e-12)


def test_pruning_idempotent():
    for seed in range(6):
        net = random_network(6, seed)
        ev = consistent_evidence(net, seed + 11)
        once, r1 = classical_prune(net, ev)
        twice, r2 = classical_prune(once, ev)
        assert once.live == twice.live
        assert not r2.removed_variables
        assert not r2.severed_edges
        for v in once.live:
            assert once.cpts[v].fixed_parents == twice.cpts[v].fixed_parents


def test_constraints_protect_but_do_not_sever(abc_net):
    ev = Evidence(constraints=[((0, 0), (1, 1))])
    pruned, report = classical_prune(abc_net, ev)
    # C is barren (not in evidence or query); A and B are constraint-mentioned
    assert report.removed_variables == {2}
    assert not report.severed_edges


def test_reprune_with_learned_resolves_gate(det3_net):
    ev = Evidence({2: 0})
    learned = Evidence({0: 0, 1: 0})
    pruned, report = reprune_with_learned(det3_net, ev, learned)
    assert report.severed_edges == {(0, 2), (1, 2)}
    assert report.retained_rows(2) == 1
    assert pruned.live == (0, 1, 2)  # observed variables stay, resolved


def test_reprune_empty_learned_matches_classical(abc_net):
    ev = Evidence({0: 1})
    a, ra = classical_prune(abc_net, ev)
    b, rb = reprune_with_learned(abc_net, ev, Evidence())
    assert a.live == b.live
    assert ra.severed_edges == rb.severed_edges


def test_reprune_inconsistent_learned(det3_net):
    with pytest.raises(InconsistentEvidenceError):
        reprune_with_learned(det3_net, Evidence({0: 0}), Evidence({0: 1}))


def test_learned_reduces_rows_on_deterministic_chain():
    # X0 -> X1 -> X2 with deterministic copies; observing the end determines
    # everything, so learned repruning retains strictly fewer rows
    ident = np.eye(2)
    net = BayesianNetwork(
        [Variable(i, f"X{i}", ("s0", "s1")) for i in range(3)],
        {
            0: Cpt(0, (), np.array([[0.4, 0.6]])),
            1: Cpt(1, (0,), ident.copy()),
            2: Cpt(2, (1,), ident.copy()),
        },
    )
    ev = Evidence({2: 1})
    _, plain = classical_prune(net, ev)
    _, learned = reprune_with_learned(net, ev, Evidence({0: 1, 1: 1}))
    plain_rows = sum(plain.retained_rows(v) for v in (1, 2))
    learned_rows = sum(learned.retained_rows(v) for v in (1, 2))
    assert learned_rows < plain_rows


def test_pruned_extension_matches_original():
    # completing the pruned network by ev-consistent values of removed
    # variables reproduces the original probability
    for seed in range(6):
        net = random_network(6, seed, determinism=0.0)
        ev = consistent_evidence(net, seed + 77, constraint_prob=0.0)
        pruned, report = classical_prune(net, ev)
        if not report.removed_variables:
            continue
        assert brute_force_pr(pruned, ev) == pytest.approx(
            brute_force_pr(net, ev), abs=1e-12
        )
