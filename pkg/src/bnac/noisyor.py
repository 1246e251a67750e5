"""Two-level noisy-or diagnosis networks and their deterministic decomposition.

A noisy-or network has independent disease roots and feature leaves; a
present disease activates each of its features independently.  ``decompose``
replaces every disease-feature link with an activation pair: a root carrying
the activation probability and a deterministic conjunction of that root with
the disease; each feature is then the deterministic disjunction of its
activations.  Disjunctions over more than two inputs are built as cascades of
binary gates so tables and clauses stay constant-size per link regardless of
fan-in.  The joint over diseases and features is preserved exactly.

``quickscore`` is the classical two-level posterior algorithm: it iterates
over the power set of the positive findings (inclusion-exclusion), combining
per-disease products of negative-finding factors, and is exponential only in
the number of positive findings.  The subset loop is the measured evaluation
pass; per-disease negative-finding products are precomputed at construction.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import EnumerationBoundError, ModelError
from .model import BayesianNetwork, Cpt, Evidence, Variable

ABSENT, PRESENT = 0, 1
_STATES = ("absent", "present")


@dataclass
class NoisyOrNetwork:
    priors: np.ndarray                    # disease prior per disease
    n_features: int
    causes: list[list[int]]               # per feature, disease ids
    activation: list[np.ndarray]          # per feature, aligned with causes
    leak: np.ndarray | None = None        # per feature, optional

    @property
    def n_diseases(self) -> int:
        return len(self.priors)

    def check(self) -> None:
        if np.any(self.priors < 0) or np.any(self.priors > 1):
            raise ModelError("disease priors must lie in [0, 1]")
        if len(self.causes) != self.n_features or len(self.activation) != self.n_features:
            raise ModelError("per-feature cause lists are inconsistent")
        for j, (cs, ps) in enumerate(zip(self.causes, self.activation)):
            if len(cs) != len(ps):
                raise ModelError(f"feature {j}: causes and activations differ")
            for i in cs:
                if not 0 <= i < self.n_diseases:
                    raise ModelError(f"feature {j}: invalid disease id {i}")
            if np.any(ps < 0) or np.any(ps > 1):
                raise ModelError(f"feature {j}: activation outside [0, 1]")
        if self.leak is not None and len(self.leak) != self.n_features:
            raise ModelError("leak vector length mismatch")


@dataclass
class Findings:
    positive: frozenset[int]
    negative: frozenset[int]

    def __post_init__(self):
        if self.positive & self.negative:
            raise ModelError("a feature cannot be both positive and negative")


@dataclass
class NorIndex:
    disease_ids: list[int]
    feature_ids: list[int]


def _and_table() -> np.ndarray:
    t = np.zeros((4, 2))
    t[:, ABSENT] = 1.0
    t[3] = (0.0, 1.0)
    return t


def _or_table() -> np.ndarray:
    t = np.zeros((4, 2))
    t[:, PRESENT] = 1.0
    t[0] = (1.0, 0.0)
    return t


def _identity_table() -> np.ndarray:
    return np.array([[1.0, 0.0], [0.0, 1.0]])


def decompose(nor: NoisyOrNetwork) -> tuple[BayesianNetwork, NorIndex]:
    """Deterministic network whose disease/feature joint equals the noisy-or.

    Each link introduces an activation-probability root and a conjunction
    node (two nodes, three edges per link); features with several activations
    take them in through a cascade of binary disjunctions.
    """
    nor.check()
    variables: list[Variable] = []
    cpts: dict[int, Cpt] = {}

    def add(name: str, cpt_parents, table) -> int:
        vid = len(variables)
        variables.append(Variable(vid, name, _STATES))
        cpts[vid] = Cpt(vid, tuple(cpt_parents), np.asarray(table, dtype=float))
        return vid

    disease_ids = [
        add(f"d{i + 1}", (), [[1.0 - p, p]]) for i, p in enumerate(nor.priors)
    ]
    feature_ids: list[int] = []
    for j in range(nor.n_features):
        inputs: list[int] = []
        if nor.leak is not None:
            leak = float(nor.leak[j])
            inputs.append(add(f"l{j + 1}", (), [[1.0 - leak, leak]]))
        for i, p in zip(nor.causes[j], nor.activation[j]):
            c = add(f"c{i + 1}_{j + 1}", (), [[1.0 - float(p), float(p)]])
            inputs.append(add(f"a{i + 1}_{j + 1}", (disease_ids[i], c),
                              _and_table()))
        name = f"f{j + 1}"
        if not inputs:
            fid = add(name, (), [[1.0, 0.0]])
        elif len(inputs) == 1:
            fid = add(name, (inputs[0],), _identity_table())
        else:
            acc = inputs[0]
            for k, nxt in enumerate(inputs[1:-1], start=2):
                acc = add(f"o{j + 1}_{k}", (acc, nxt), _or_table())
            fid = add(name, (acc, inputs[-1]), _or_table())
        feature_ids.append(fid)
    return BayesianNetwork(variables, cpts), NorIndex(disease_ids, feature_ids)


def findings_evidence(index: NorIndex, findings: Findings) -> Evidence:
    assignments = {index.feature_ids[j]: PRESENT for j in sorted(findings.positive)}
    assignments.update(
        {index.feature_ids[j]: ABSENT for j in sorted(findings.negative)}
    )
    return Evidence(assignments)


def nor_joint_pr(nor: NoisyOrNetwork, disease_states, feature_states) -> float:
    """Closed-form joint of one full (diseases, features) instantiation."""
    pr = 1.0
    for i, d in enumerate(disease_states):
        p = float(nor.priors[i])
        pr *= p if d else 1.0 - p
    for j, f in enumerate(feature_states):
        q = 1.0
        if nor.leak is not None:
            q *= 1.0 - float(nor.leak[j])
        for i, p in zip(nor.causes[j], nor.activation[j]):
            if disease_states[i]:
                q *= 1.0 - float(p)
        pr *= q if not f else 1.0 - q
    return pr


# ---------------------------------------------------------------------------
# quickscore


@dataclass
class QuickscoreResult:
    posteriors: np.ndarray
    pr_evidence: float
    subset_count: int
    pass_seconds: float
    cancellation: float = 1.0   # sum of |terms| over |sum|; large is ill-conditioned


class QuickscoreEngine:
    """Inclusion-exclusion over subsets of the positive findings.

    Construction folds all negative findings into per-disease products; each
    ``run`` performs exactly 2^(number of positive findings) subset steps in
    Gray-code order, updating per-disease factors incrementally.
    """

    def __init__(self, nor: NoisyOrNetwork, findings: Findings,
                 m_plus_cap: int = 22):
        nor.check()
        self.nor = nor
        self.positive = sorted(findings.positive)
        self.negative = sorted(findings.negative)
        if len(self.positive) > m_plus_cap:
            raise EnumerationBoundError(
                f"{len(self.positive)} positive findings exceed the cap "
                f"{m_plus_cap}"
            )
        n = nor.n_diseases
        self.p = np.asarray(nor.priors, dtype=float)
        self.base_h = np.ones(n)
        self.base_leak = 1.0
        for j in self.negative:
            for i, a in zip(nor.causes[j], nor.activation[j]):
                self.base_h[i] *= 1.0 - float(a)
            if nor.leak is not None:
                self.base_leak *= 1.0 - float(nor.leak[j])
        # per positive feature: cause index array and (1 - activation) array
        self.pos_causes = [np.asarray(nor.causes[j], dtype=int)
                           for j in self.positive]
        self.pos_factors = [1.0 - np.asarray(nor.activation[j], dtype=float)
                            for j in self.positive]
        self.pos_leak = np.array(
            [1.0 - float(nor.leak[j]) if nor.leak is not None else 1.0
             for j in self.positive]
        )

    CANCELLATION_LIMIT = 1e6   # keeps ~10 significant digits in the sum

    def run(self) -> QuickscoreResult:
        """One evaluation pass; returns posteriors for every disease.

        The inclusion-exclusion sum is alternating; when the measured
        cancellation eats past the precision budget (or the sum degenerates),
        the pass is redone in extended precision so the returned values stay
        trustworthy.  Timing harnesses measure ``run_float_pass`` directly.
        """
        t0 = time.perf_counter()
        num, den, den_abs = self._float_pass()
        seconds = time.perf_counter() - t0
        cancellation = den_abs / abs(den) if den != 0.0 else float("inf")
        if den <= 0.0 or cancellation > self.CANCELLATION_LIMIT:
            result = self.run_exact()
            result.cancellation = cancellation
            return result
        return QuickscoreResult(num / den, den, 1 << len(self.positive),
                                seconds, cancellation)

    def run_float_pass(self) -> None:
        """The raw subset loop, for timing; makes no precision claims."""
        self._float_pass()

    def _float_pass(self):
        n = self.nor.n_diseases
        k = len(self.positive)
        p = self.p
        one_minus_p = 1.0 - p
        h = self.base_h.copy()
        leak = self.base_leak
        member = [False] * k
        sign = 1.0
        den = 0.0
        den_abs = 0.0
        num = np.zeros(n)
        for step in range(1 << k):
            if step:
                bit = (step & -step).bit_length() - 1
                causes, factors = self.pos_causes[bit], self.pos_factors[bit]
                if member[bit]:
                    h[causes] /= factors
                    leak /= self.pos_leak[bit]
                else:
                    h[causes] *= factors
                    leak *= self.pos_leak[bit]
                member[bit] = not member[bit]
                sign = -sign
            ph = p * h
            g = one_minus_p + ph
            total = leak * float(np.prod(g))
            den += sign * total
            den_abs += total
            if total != 0.0:
                num += (sign * total) * (ph / g)
            else:
                nz = g != 0.0
                if nz.all():
                    continue
                # a zero factor: contributions survive only for that disease
                idx = np.flatnonzero(~nz)
                if len(idx) == 1 and ph[idx[0]] != 0.0:
                    rest = leak * float(np.prod(g[nz]))
                    num[idx[0]] += sign * rest * ph[idx[0]]
        return num, den, den_abs

    def run_exact(self, digits: int = 60) -> QuickscoreResult:
        """The same subset sum in ``digits``-digit arithmetic.

        The alternating sum cancels catastrophically when many negative
        findings drive disease probabilities toward zero; this mode is the
        reference for value checks, while ``run`` is what gets timed.
        """
        import mpmath

        t0 = time.perf_counter()
        nor = self.nor
        n = nor.n_diseases
        k = len(self.positive)
        with mpmath.workdps(digits):
            one = mpmath.mpf(1)
            p = [mpmath.mpf(float(x)) for x in nor.priors]
            omp = [one - x for x in p]
            h = [mpmath.mpf(1)] * n
            leak = mpmath.mpf(1)
            for j in self.negative:
                for i, a in zip(nor.causes[j], nor.activation[j]):
                    h[i] *= one - mpmath.mpf(float(a))
                if nor.leak is not None:
                    leak *= one - mpmath.mpf(float(nor.leak[j]))
            pos_factors = [
                [one - mpmath.mpf(float(a)) for a in nor.activation[j]]
                for j in self.positive
            ]
            pos_leak = [
                one - mpmath.mpf(float(nor.leak[j]))
                if nor.leak is not None else one
                for j in self.positive
            ]
            member = [False] * k
            sign = 1
            den = mpmath.mpf(0)
            num = [mpmath.mpf(0)] * n
            for step in range(1 << k):
                if step:
                    bit = (step & -step).bit_length() - 1
                    causes = nor.causes[self.positive[bit]]
                    for i, factor in zip(causes, pos_factors[bit]):
                        h[i] = h[i] / factor if member[bit] else h[i] * factor
                    leak = (leak / pos_leak[bit] if member[bit]
                            else leak * pos_leak[bit])
                    member[bit] = not member[bit]
                    sign = -sign
                total = leak
                g = [None] * n
                for i in range(n):
                    g[i] = omp[i] + p[i] * h[i]
                    total *= g[i]
                den += sign * total
                if total != 0:
                    for i in range(n):
                        num[i] += sign * total * (p[i] * h[i]) / g[i]
            if den <= 0:
                raise ModelError("evidence probability is not positive")
            posteriors = np.array([float(x / den) for x in num])
            pr = float(den)
        return QuickscoreResult(posteriors, pr, 1 << k,
                                time.perf_counter() - t0)


def quickscore(nor: NoisyOrNetwork, findings: Findings,
               m_plus_cap: int = 22) -> QuickscoreResult:
    return QuickscoreEngine(nor, findings, m_plus_cap).run()


# ---------------------------------------------------------------------------
# random generator (fully determined by seed)


def _open_unit(rng: np.random.Generator, size) -> np.ndarray:
    return rng.uniform(np.nextafter(0.0, 1.0), 1.0, size=size)


def generate(n: int, m: int, causes_per_feature: int, m_plus: int,
             seed: int) -> tuple[NoisyOrNetwork, Findings]:
    """Random diagnosis instance: uniform priors and activations on (0, 1),
    causes drawn uniformly without replacement, positives chosen uniformly
    and every remaining feature negative."""
    if causes_per_feature > n:
        raise ModelError("more causes per feature than diseases")
    if m_plus > m:
        raise ModelError("more positive findings than features")
    rng = np.random.default_rng(seed)
    priors = _open_unit(rng, n)
    causes, activation = [], []
    for _ in range(m):
        picked = np.sort(rng.choice(n, size=causes_per_feature, replace=False))
        causes.append([int(x) for x in picked])
        activation.append(_open_unit(rng, causes_per_feature))
    positive = {int(x) for x in rng.choice(m, size=m_plus, replace=False)}
    negative = set(range(m)) - positive
    nor = NoisyOrNetwork(priors, m, causes, activation)
    return nor, Findings(frozenset(positive), frozenset(negative))


# ---------------------------------------------------------------------------
# context-specific-independence transform


def csi_transform(net: BayesianNetwork, child: int,
                  blocks: list[list[int]]) -> BayesianNetwork:
    """Insert a deterministic selector between a family's parents and child.

    ``blocks`` partitions the child CPT's parent rows; rows within a block
    must share an identical child distribution (checked to 1e-12).  The
    selector takes one state per block, its CPT mapping each parent row to
    its block, and the child is re-indexed by the selector alone.  The joint
    over the original variables is preserved.
    """
    cpt = net.cpts[child]
    if cpt.fixed_parents:
        raise ModelError("csi transform expects an unpruned family")
    seen: list[int] = []
    for block in blocks:
        if not block:
            raise ModelError("empty block in row partition")
        seen.extend(block)
        base = cpt.table[block[0]]
        for r in block[1:]:
            if np.max(np.abs(cpt.table[r] - base)) > 1e-12:
                raise ModelError(
                    f"rows {block[0]} and {r} of cpt {child} have different "
                    "child distributions"
                )
    if sorted(seen) != list(range(cpt.n_rows)):
        raise ModelError("blocks must partition the parent rows exactly")

    sel_id = len(net.variables)
    child_name = net.variables[child].name
    sel = Variable(sel_id, f"{child_name}_sel",
                   tuple(f"s{k + 1}" for k in range(len(blocks))))
    block_of = {r: k for k, block in enumerate(blocks) for r in block}
    sel_table = np.zeros((cpt.n_rows, len(blocks)))
    for r in range(cpt.n_rows):
        sel_table[r, block_of[r]] = 1.0
    child_table = np.stack([cpt.table[block[0]] for block in blocks])

    variables = list(net.variables) + [sel]
    cpts = dict(net.cpts)
    cpts[sel_id] = Cpt(sel_id, cpt.parents, sel_table)
    cpts[child] = Cpt(child, (sel_id,), child_table)
    return BayesianNetwork(variables, cpts, set(net.learnable))
