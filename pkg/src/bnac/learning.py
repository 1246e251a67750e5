"""Maximum-likelihood estimation of learnable CPTs over evidence cases.

Each case's circuit is compiled once, with its evidence baked in, and every
iteration re-evaluates those circuits under the current parameter values;
the offline compilation cost is never re-incurred.  The E-step reads family
posteriors off the circuit derivatives, the M-step normalizes expected
counts per parent row.

Learnable parameters must stay live circuit inputs, so learnable CPTs are
exempt from determinism refinements and their families are protected from
pruning; initialization at exactly 0 or 1 is rejected because it would erase
a parameter from the support.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InconsistentEvidenceError, ModelError
from .model import BayesianNetwork, Evidence
from .pipeline import CompiledQuery, PipelineOptions, compile_query


@dataclass
class LearningOptions:
    max_iters: int = 100
    tol: float = 1e-8
    edge_budget: int = 50_000_000


@dataclass
class LearningProblem:
    net: BayesianNetwork
    cases: list[Evidence]
    circuits: list[CompiledQuery]
    options: LearningOptions = field(default_factory=LearningOptions)


@dataclass
class EmTrace:
    log_likelihoods: list[float]
    params: dict[int, np.ndarray]
    converged: bool
    iter_seconds: list[float] = field(default_factory=list)


def _protected_vars(net: BayesianNetwork) -> tuple[int, ...]:
    keep: set[int] = set()
    for c in net.learnable:
        keep.add(c)
        keep.update(net.cpts[c].parents)
    return tuple(sorted(keep))


def build_problem(net: BayesianNetwork, cases: list[Evidence],
                  options: LearningOptions | None = None) -> LearningProblem:
    """Compile one circuit per case; learnable families survive pruning."""
    if not net.learnable:
        raise ModelError("no learnable CPTs declared")
    opts = options or LearningOptions()
    popts = PipelineOptions(query_vars=_protected_vars(net),
                            edge_budget=opts.edge_budget)
    circuits = []
    for i, case in enumerate(cases):
        cq = compile_query(net, case, popts)
        if cq.inconsistent:
            raise InconsistentEvidenceError(f"case {i} has probability zero")
        circuits.append(cq)
    return LearningProblem(net, list(cases), circuits, opts)


def initial_params(net: BayesianNetwork, seed: int | None = None
                   ) -> dict[int, np.ndarray]:
    """Uniform rows by default; a seeded random option for restart studies."""
    rng = np.random.default_rng(seed) if seed is not None else None
    out = {}
    for c in sorted(net.learnable):
        cpt = net.cpts[c]
        if rng is None:
            out[c] = np.full((cpt.n_rows, cpt.n_states), 1.0 / cpt.n_states)
        else:
            raw = rng.uniform(0.1, 1.0, size=(cpt.n_rows, cpt.n_states))
            out[c] = raw / raw.sum(axis=1, keepdims=True)
    return out


def check_params(net: BayesianNetwork, params: dict[int, np.ndarray]) -> None:
    for c in sorted(net.learnable):
        table = params[c]
        cpt = net.cpts[c]
        if table.shape != (cpt.n_rows, cpt.n_states):
            raise ModelError(f"parameter table for cpt {c} has wrong shape")
        if np.any(np.abs(table.sum(axis=1) - 1.0) > 1e-9):
            raise ModelError(f"parameter table for cpt {c} has unnormalized rows")
        if np.any(table <= 0.0) or np.any(table >= 1.0):
            raise ModelError(
                f"parameter table for cpt {c} touches 0 or 1; learnable "
                "parameters must start strictly inside (0, 1)"
            )


def em_step(problem: LearningProblem, params: dict[int, np.ndarray]
            ) -> tuple[dict[int, np.ndarray], float]:
    """One expectation-maximization update; returns new parameters and the
    total log-likelihood of the cases under the *input* parameters."""
    net = problem.net
    counts = {c: np.zeros_like(params[c]) for c in sorted(net.learnable)}
    loglik = 0.0
    for i, cq in enumerate(problem.circuits):
        res = cq.circuit.differentiate(params=params)
        if res.value <= 0.0:
            raise InconsistentEvidenceError(
                f"case {i} has probability zero under the current parameters"
            )
        loglik += float(np.log(res.value))
        for c in sorted(net.learnable):
            post = res.family_posterior(c, params)
            counts[c][:post.shape[0], :] += post
    new_params = {}
    for c, n in counts.items():
        table = np.array(params[c])
        row_tot = n.sum(axis=1)
        for r in range(table.shape[0]):
            if row_tot[r] > 0.0:
                table[r] = n[r] / row_tot[r]
        new_params[c] = table
    return new_params, loglik


def run_em(problem: LearningProblem,
           params: dict[int, np.ndarray] | None = None) -> EmTrace:
    """Iterate EM until the log-likelihood change drops under tolerance.

    Per-iteration cost is circuit re-evaluation only.  The recorded
    log-likelihood sequence is non-decreasing up to numerical slack.
    """
    net = problem.net
    if params is None:
        params = initial_params(net)
    check_params(net, params)
    opts = problem.options
    lls: list[float] = []
    secs: list[float] = []
    converged = False
    for _ in range(opts.max_iters):
        t0 = time.perf_counter()
        params_next, ll = em_step(problem, params)
        secs.append(time.perf_counter() - t0)
        if lls and abs(ll - lls[-1]) < opts.tol:
            lls.append(ll)
            params = params_next
            converged = True
            break
        lls.append(ll)
        params = params_next
    return EmTrace(lls, params, converged, secs)


# ---------------------------------------------------------------------------
# gradient ascent (alternative update; EM is the default path)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def gradient_step(problem: LearningProblem, logits: dict[int, np.ndarray],
                  rate: float = 0.5) -> tuple[dict[int, np.ndarray], float]:
    """Ascend the log-likelihood in softmax-reparameterized row space.

    Rows stay normalized by construction; returns updated logits and the
    log-likelihood at the input point.
    """
    net = problem.net
    params = {c: _softmax(z) for c, z in logits.items()}
    grads = {c: np.zeros_like(z) for c, z in logits.items()}
    loglik = 0.0
    for i, cq in enumerate(problem.circuits):
        res = cq.circuit.differentiate(params=params)
        if res.value <= 0.0:
            raise InconsistentEvidenceError(
                f"case {i} has probability zero under the current parameters"
            )
        loglik += float(np.log(res.value))
        for c in sorted(net.learnable):
            table = params[c]
            dll = np.zeros_like(table)
            for (cc, row, state), slot in cq.circuit.par_slot.items():
                if cc == c:
                    dll[row, state] = res.slot_partials[slot] / res.value
            # chain rule through the row softmax
            inner = (dll * table).sum(axis=1, keepdims=True)
            grads[c] += table * (dll - inner)
    return {c: logits[c] + rate * grads[c] for c in logits}, loglik


def run_gradient_ascent(problem: LearningProblem,
                        params: dict[int, np.ndarray] | None = None,
                        rate: float = 0.5) -> EmTrace:
    net = problem.net
    if params is None:
        params = initial_params(net)
    check_params(net, params)
    logits = {c: np.log(t) for c, t in params.items()}
    opts = problem.options
    lls: list[float] = []
    converged = False
    for _ in range(opts.max_iters):
        logits, ll = gradient_step(problem, logits, rate)
        if lls and abs(ll - lls[-1]) < opts.tol:
            lls.append(ll)
            converged = True
            break
        lls.append(ll)
    return EmTrace(lls, {c: _softmax(z) for c, z in logits.items()}, converged)
