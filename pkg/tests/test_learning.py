import random

import numpy as np
import pytest

from bnac.errors import InconsistentEvidenceError, ModelError
from bnac.learning import (
    LearningOptions,
    build_problem,
    check_params,
    em_step,
    initial_params,
    run_em,
    run_gradient_ascent,
)
from bnac.model import BayesianNetwork, Cpt, Evidence, Variable
from support import em_reference, forward_sample, random_network


def observed_root_problem():
    net = BayesianNetwork(
        [Variable(0, "X", ("x1", "x2"))],
        {0: Cpt(0, (), np.array([[0.5, 0.5]]))},
        learnable={0},
    )
    cases = [Evidence({0: 0})] * 3 + [Evidence({0: 1})] * 7
    return net, cases


def hidden_chain_problem():
    net = BayesianNetwork(
        [Variable(0, "H", ("h1", "h2")), Variable(1, "V", ("v1", "v2"))],
        {
            0: Cpt(0, (), np.array([[0.5, 0.5]])),
            1: Cpt(1, (0,), np.array([[0.5, 0.5], [0.5, 0.5]])),
        },
        learnable={0, 1},
    )
    cases = [Evidence({1: 0})] * 6 + [Evidence({1: 1})] * 4
    params = {0: np.array([[0.6, 0.4]]), 1: np.array([[0.7, 0.3], [0.2, 0.8]])}
    return net, cases, params


def test_closed_form_single_step():
    net, cases = observed_root_problem()
    problem = build_problem(net, cases)
    params, ll = em_step(problem, initial_params(net))
    assert np.allclose(params[0], [[0.3, 0.7]], atol=1e-12)


def test_fixed_point_unchanged():
    net, cases = observed_root_problem()
    problem = build_problem(net, cases)
    fixed = {0: np.array([[0.3, 0.7]])}
    params, _ = em_step(problem, fixed)
    assert np.max(np.abs(params[0] - fixed[0])) < 1e-12


def test_fully_observed_converges_in_one_iteration():
    net, cases = observed_root_problem()
    problem = build_problem(net, cases)
    trace = run_em(problem)
    assert trace.converged
    # log-likelihood is flat from iteration 1 on
    assert trace.log_likelihoods[1] == pytest.approx(trace.log_likelihoods[-1],
                                                     abs=1e-12)


def test_hidden_chain_matches_reference_per_iteration():
    net, cases, params = hidden_chain_problem()
    problem = build_problem(net, cases)
    trace = run_em(problem, {k: v.copy() for k, v in params.items()})
    _, ref_lls = em_reference(net, cases, {k: v.copy() for k, v in params.items()},
                              len(trace.log_likelihoods))
    assert np.max(np.abs(np.array(ref_lls) - np.array(trace.log_likelihoods))) < 1e-9


def test_limit_point_matches_reference():
    net, cases, params = hidden_chain_problem()
    problem = build_problem(net, cases, LearningOptions(max_iters=200, tol=1e-13))
    trace = run_em(problem, {k: v.copy() for k, v in params.items()})
    ref_params, _ = em_reference(net, cases,
                                 {k: v.copy() for k, v in params.items()}, 200)
    for c in sorted(net.learnable):
        assert np.max(np.abs(trace.params[c] - ref_params[c])) < 1e-6


def test_monotone_log_likelihood_on_random_problems():
    r = random.Random(0)
    for seed in range(20):
        net = random_network(4, seed, max_states=3, determinism=0.1,
                             learnable=(0,))
        net.learnable.add(0)
        observed = [v for v in net.live if v != 0]
        cases = []
        for _ in range(4):
            inst = forward_sample(net, r)
            cases.append(Evidence({v: inst[v] for v in observed}))
        problem = build_problem(net, cases, LearningOptions(max_iters=25))
        trace = run_em(problem, initial_params(net, seed=seed))
        diffs = np.diff(trace.log_likelihoods)
        assert (diffs >= -1e-9).all()
        for c in trace.params.values():
            assert np.allclose(c.sum(axis=1), 1.0, atol=1e-12)


def test_learnable_families_survive_pruning():
    # the learnable root would be barren under evidence on a sibling branch
    net = random_network(6, 11, determinism=0.0, learnable=(0,))
    net.learnable.add(0)
    cases = [Evidence({v: 0}) for v in net.live if v != 0][:2]
    problem = build_problem(net, cases)
    for cq in problem.circuits:
        assert 0 in cq.pruned_net.live


def test_zero_probability_case_named():
    net = BayesianNetwork(
        [Variable(0, "A", ("a1", "a2")), Variable(1, "B", ("b1", "b2"))],
        {
            0: Cpt(0, (), np.array([[0.5, 0.5]])),
            1: Cpt(1, (0,), np.array([[1.0, 0.0], [0.0, 1.0]])),
        },
        learnable={0},
    )
    # contradicts the deterministic copy
    with pytest.raises(InconsistentEvidenceError) as err:
        build_problem(net, [Evidence({0: 0, 1: 1})])
    assert "case 0" in str(err.value)


def test_interior_initialization_required():
    net, cases = observed_root_problem()
    with pytest.raises(ModelError):
        check_params(net, {0: np.array([[1.0, 0.0]])})


def test_gradient_ascent_improves():
    net, cases, params = hidden_chain_problem()
    problem = build_problem(net, cases, LearningOptions(max_iters=40))
    trace = run_gradient_ascent(problem, {k: v.copy() for k, v in params.items()},
                                rate=0.4)
    assert trace.log_likelihoods[-1] > trace.log_likelihoods[0]
    ref_params, _ = em_reference(net, cases,
                                 {k: v.copy() for k, v in params.items()}, 200)
    # heads toward the same stationary log-likelihood
    problem2 = build_problem(net, cases)
    _, ll_ref = em_step(problem2, ref_params)
    assert trace.log_likelihoods[-1] == pytest.approx(ll_ref, abs=1e-3)
