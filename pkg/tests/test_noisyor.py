import itertools

import numpy as np
import pytest

from bnac.errors import EnumerationBoundError, ModelError
from bnac.model import Evidence, brute_force_pr, validate
from bnac.noisyor import (
    ABSENT,
    PRESENT,
    Findings,
    NoisyOrNetwork,
    QuickscoreEngine,
    csi_transform,
    decompose,
    findings_evidence,
    generate,
    nor_joint_pr,
    quickscore,
)
from bnac.pipeline import PipelineOptions, compile_query
from support import random_network


def test_one_link_introduces_two_nodes_three_edges():
    nor = NoisyOrNetwork(np.array([0.3]), 1, [[0]], [np.array([0.8])])
    net, idx = decompose(nor)
    assert len(net.variables) == 4  # disease, activation root, conjunction, feature
    assert sum(len(net.cpts[v].parents) for v in net.live) == 3


def test_feature_without_causes_is_false():
    nor = NoisyOrNetwork(np.array([0.3]), 1, [[]], [np.array([])])
    net, idx = decompose(nor)
    pr = brute_force_pr(net, Evidence({idx.feature_ids[0]: PRESENT}))
    assert pr == pytest.approx(0.0, abs=1e-15)


def test_decompose_preserves_joint():
    for seed in range(6):
        nor, _ = generate(3, 3, 2, 1, seed)
        net, idx = decompose(nor)
        assert validate(net) == []
        for d in itertools.product((0, 1), repeat=3):
            for f in itertools.product((0, 1), repeat=3):
                ev = Evidence(
                    {idx.disease_ids[i]: d[i] for i in range(3)}
                    | {idx.feature_ids[j]: f[j] for j in range(3)}
                )
                assert brute_force_pr(net, ev) == pytest.approx(
                    nor_joint_pr(nor, d, f), abs=1e-10
                )


def test_decompose_with_leak():
    nor, _ = generate(2, 2, 2, 1, seed=5)
    nor.leak = np.array([0.1, 0.2])
    net, idx = decompose(nor)
    for d in itertools.product((0, 1), repeat=2):
        for f in itertools.product((0, 1), repeat=2):
            ev = Evidence(
                {idx.disease_ids[i]: d[i] for i in range(2)}
                | {idx.feature_ids[j]: f[j] for j in range(2)}
            )
            assert brute_force_pr(net, ev) == pytest.approx(
                nor_joint_pr(nor, d, f), abs=1e-12
            )


def brute_posteriors(nor, findings):
    n = nor.n_diseases
    f_states = [0] * nor.n_features
    for j in findings.positive:
        f_states[j] = 1
    den, num = 0.0, np.zeros(n)
    for d in itertools.product((0, 1), repeat=n):
        pr = nor_joint_pr(nor, d, f_states)
        den += pr
        for i in range(n):
            if d[i]:
                num[i] += pr
    return num / den, den


def test_quickscore_no_positives_single_subset():
    nor, _ = generate(4, 5, 2, 0, seed=3)
    findings = Findings(frozenset(), frozenset(range(5)))
    result = quickscore(nor, findings)
    assert result.subset_count == 1
    post, den = brute_posteriors(nor, findings)
    assert np.max(np.abs(result.posteriors - post)) < 1e-10


def test_quickscore_mixed_findings_matches_brute_force():
    for seed in range(8):
        nor, _ = generate(2, 2, 2, 1, seed)
        findings = Findings(frozenset({0}), frozenset({1}))
        result = quickscore(nor, findings)
        post, den = brute_posteriors(nor, findings)
        assert np.max(np.abs(result.posteriors - post)) < 1e-10
        assert result.pr_evidence == pytest.approx(den, rel=1e-10)


def test_quickscore_exact_mode_matches_brute_force():
    nor, _ = generate(4, 6, 3, 2, seed=9)
    findings = Findings(frozenset({0, 3}), frozenset({1, 2, 4, 5}))
    engine = QuickscoreEngine(nor, findings)
    exact = engine.run_exact()
    post, den = brute_posteriors(nor, findings)
    assert np.max(np.abs(exact.posteriors - post)) < 1e-12
    assert exact.pr_evidence == pytest.approx(den, rel=1e-12)


def test_quickscore_subset_cap():
    nor, findings = generate(10, 30, 3, 8, seed=2)
    with pytest.raises(EnumerationBoundError):
        quickscore(nor, findings, m_plus_cap=6)


def test_quickscore_agrees_with_compile_route_desk_scale():
    for seed in (0, 1):
        for m_plus in (0, 2, 4):
            nor, findings = generate(30, 50, 4, m_plus, seed)
            result = quickscore(nor, findings)
            net, idx = decompose(nor)
            cq = compile_query(net, findings_evidence(idx, findings))
            marg = cq.marginals()
            post = np.array([marg[idx.disease_ids[i]][PRESENT]
                             for i in range(30)])
            assert np.max(np.abs(post - result.posteriors)) < 1e-8


def test_generator_is_seed_deterministic():
    a_nor, a_f = generate(20, 15, 3, 4, seed=42)
    b_nor, b_f = generate(20, 15, 3, 4, seed=42)
    assert np.array_equal(a_nor.priors, b_nor.priors)
    assert a_nor.causes == b_nor.causes
    assert all(np.array_equal(x, y)
               for x, y in zip(a_nor.activation, b_nor.activation))
    assert a_f == b_f
    c_nor, _ = generate(20, 15, 3, 4, seed=43)
    assert not np.array_equal(a_nor.priors, c_nor.priors)


def test_generator_respects_protocol():
    nor, findings = generate(25, 40, 5, 7, seed=0)
    assert nor.n_diseases == 25 and nor.n_features == 40
    assert all(len(c) == 5 and len(set(c)) == 5 for c in nor.causes)
    assert len(findings.positive) == 7
    assert findings.positive | findings.negative == set(range(40))
    assert np.all(nor.priors > 0) and np.all(nor.priors < 1)
    assert all(np.all(a > 0) and np.all(a < 1) for a in nor.activation)


def test_generator_rejects_bad_parameters():
    with pytest.raises(ModelError):
        generate(3, 5, 4, 1, seed=0)
    with pytest.raises(ModelError):
        generate(3, 5, 2, 6, seed=0)


def test_csi_transform_matches_example():
    # binary child with binary parents; the first parent's first state makes
    # the child independent of the second parent
    from bnac.model import BayesianNetwork, Cpt, Variable

    variables = [
        Variable(0, "A", ("a1", "a2")),
        Variable(1, "B", ("b1", "b2")),
        Variable(2, "C", ("c1", "c2")),
    ]
    table = np.array([[0.7, 0.3], [0.7, 0.3], [0.2, 0.8], [0.9, 0.1]])
    net = BayesianNetwork(variables, {
        0: Cpt(0, (), np.array([[0.4, 0.6]])),
        1: Cpt(1, (), np.array([[0.5, 0.5]])),
        2: Cpt(2, (0, 1), table),
    })
    out = csi_transform(net, 2, [[0, 1], [2], [3]])
    assert validate(out) == []
    sel = out.variables[3]
    assert sel.n_states == 3
    assert out.cpts[2].parents == (3,)
    for a in range(2):
        for b in range(2):
            for c in range(2):
                ev = Evidence({0: a, 1: b, 2: c})
                assert brute_force_pr(out, ev) == pytest.approx(
                    brute_force_pr(net, ev), abs=1e-12
                )


def test_csi_trivial_partition_relabels():
    net = random_network(3, 7, determinism=0.0)
    child = 2
    rows = net.cpts[child].n_rows
    out = csi_transform(net, child, [[r] for r in range(rows)])
    sel = len(net.variables)
    assert out.variables[sel].n_states == rows
    for v in net.live:
        for s in range(net.domain(v)):
            ev = Evidence({v: s})
            assert brute_force_pr(out, ev) == pytest.approx(
                brute_force_pr(net, ev), abs=1e-12
            )


def test_csi_random_families_preserve_joint():
    import random as _random

    r = _random.Random(3)
    for seed in range(4):
        net = random_network(4, seed, determinism=0.0)
        child = max(net.live, key=lambda v: len(net.cpts[v].parents))
        cpt = net.cpts[child]
        if not cpt.parents:
            continue
        # force two rows to share a distribution, then block them together
        cpt.table[0] = cpt.table[-1]
        blocks = [[0, cpt.n_rows - 1]] + [[x] for x in range(1, cpt.n_rows - 1)]
        out = csi_transform(net, child, blocks)
        for v in net.live:
            ev = Evidence({v: r.randrange(net.domain(v))})
            assert brute_force_pr(out, ev) == pytest.approx(
                brute_force_pr(net, ev), abs=1e-12
            )


def test_csi_rejects_mismatched_blocks():
    net = random_network(3, 2, determinism=0.0)
    child = 2
    if not net.cpts[child].parents:
        pytest.skip("fixture has no family here")
    with pytest.raises(ModelError):
        csi_transform(net, child, [list(range(net.cpts[child].n_rows))])
