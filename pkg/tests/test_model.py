import numpy as np
import pytest

from bnac.errors import EnumerationBoundError, InconsistentEvidenceError, ModelError
from bnac.model import (
    BayesianNetwork,
    Cpt,
    Evidence,
    Variable,
    brute_force_family_marginals,
    brute_force_marginals,
    brute_force_pr,
    enumerate_terms,
    merge_evidence,
    normalize_rows,
    validate,
)
from support import consistent_evidence, random_network


def test_abc_is_valid(abc_net):
    assert validate(abc_net) == []


def test_row_sum_violation():
    v = Variable(0, "X", ("x1", "x2"))
    net = BayesianNetwork([v], {0: Cpt(0, (), np.array([[0.3, 0.8]]))})
    problems = validate(net)
    assert len(problems) == 1
    assert "row 0" in problems[0]


def test_cycle_violation():
    a = Variable(0, "A", ("a1", "a2"))
    b = Variable(1, "B", ("b1", "b2"))
    half = np.full((2, 2), 0.5)
    net = BayesianNetwork([a, b], {
        0: Cpt(0, (1,), half.copy()),
        1: Cpt(1, (0,), half.copy()),
    })
    assert any("cyclic" in p for p in validate(net))


def test_dimension_mismatch():
    a = Variable(0, "A", ("a1", "a2"))
    b = Variable(1, "B", ("b1", "b2"))
    net = BayesianNetwork([a, b], {
        0: Cpt(0, (), np.array([[0.5, 0.5]])),
        1: Cpt(1, (0,), np.array([[0.5, 0.5]])),  # needs 2 rows
    })
    assert any("shape" in p for p in validate(net))


def test_normalize_rows_tolerates_rounding():
    table = np.array([[0.3333333, 0.6666666]])
    out = normalize_rows(table, "cpt")
    assert abs(out.sum() - 1.0) < 1e-15
    with pytest.raises(ModelError):
        normalize_rows(np.array([[0.3, 0.8]]), "cpt")


def test_term_counts(abc_net):
    assert len(list(enumerate_terms(abc_net, Evidence()))) == 12
    assert len(list(enumerate_terms(abc_net, Evidence({0: 1, 1: 0})))) == 3
    assert len(list(enumerate_terms(abc_net, Evidence({0: 1, 1: 0, 2: 2})))) == 1


def test_term_count_includes_zero_weight_terms(det3_net):
    terms = list(enumerate_terms(det3_net, Evidence()))
    assert len(terms) == 12
    assert sum(1 for _, w in terms if w == 0.0) == 8


def test_term_count_with_constraints(abc_net):
    ev = Evidence(constraints=[((2, 0), (0, 0))])  # C=c1 or A=a1
    expected = sum(
        1 for inst, _ in enumerate_terms(abc_net, Evidence())
        if inst[2] == 0 or inst[0] == 0
    )
    assert len(list(enumerate_terms(abc_net, ev))) == expected


def test_total_probability_is_one():
    for seed in range(5):
        net = random_network(6, seed)
        assert brute_force_pr(net, Evidence()) == pytest.approx(1.0, abs=1e-12)


def test_pr_matches_term_sum(abc_net):
    ev = Evidence({0: 1, 1: 0})
    total = sum(w for _, w in enumerate_terms(abc_net, ev))
    assert brute_force_pr(abc_net, ev) == pytest.approx(total, abs=1e-15)
    assert brute_force_pr(abc_net, ev) == pytest.approx(0.4 * 0.3, abs=1e-12)


def test_deterministic_gate_pr(det3_net):
    # both mixed rows feed the middle state, each carrying 0.25 of the mass
    assert brute_force_pr(det3_net, Evidence({2: 1})) == pytest.approx(0.5, abs=1e-12)


def test_monotone_under_refinement():
    for seed in range(8):
        net = random_network(6, seed)
        ev = consistent_evidence(net, seed + 100)
        pr = brute_force_pr(net, ev)
        extended = dict(ev.assignments)
        for v in net.live:
            if v not in extended:
                extended[v] = 0
                break
        pr2 = brute_force_pr(net, Evidence(extended, ev.constraints))
        assert pr2 <= pr + 1e-12


def test_marginals_point_mass(abc_net):
    marg = brute_force_marginals(abc_net, Evidence({0: 1}))
    assert marg[0][1] == pytest.approx(1.0)
    for v, dist in marg.items():
        assert dist.sum() == pytest.approx(1.0, abs=1e-9)


def test_marginals_from_observed_gate(det3_net):
    marg = brute_force_marginals(det3_net, Evidence({2: 0}))
    assert marg[0][0] == pytest.approx(1.0, abs=1e-12)
    assert marg[1][0] == pytest.approx(1.0, abs=1e-12)


def test_inconsistent_evidence_signals(det3_net):
    with pytest.raises(InconsistentEvidenceError):
        brute_force_marginals(det3_net, Evidence({0: 0, 1: 0, 2: 2}))


def test_family_marginals_sum_to_one(abc_net):
    fam = brute_force_family_marginals(abc_net, Evidence({2: 0}), 2)
    assert fam.sum() == pytest.approx(1.0, abs=1e-9)


def test_enumeration_bound():
    net = random_network(8, 3)
    with pytest.raises(EnumerationBoundError):
        brute_force_pr(net, Evidence(), enum_bound=16)


def test_merge_evidence_conflict():
    with pytest.raises(InconsistentEvidenceError):
        merge_evidence(Evidence({0: 0}), Evidence({0: 1}))


def test_evidence_check_rejects_bad_state(abc_net):
    with pytest.raises(ModelError):
        Evidence({2: 5}).check(abc_net)
    with pytest.raises(ModelError):
        Evidence(constraints=[()]).check(abc_net)
