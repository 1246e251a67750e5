"""Line-oriented text formats for networks, evidence, and diagnosis models.

Network files:

    var <name> <state> <state> ...
    cpt <child> | <parent> ...
    <parent states...> : <prob per child state...>

Rows must appear in row-major parent order (first parent slowest), one line
per parent instantiation; a root CPT is ``cpt X |`` followed by a single
``: p1 p2 ...`` line.  Rows off by text rounding (up to 1e-6) are
renormalized; anything worse is an error.

Evidence files:

    X = x
    or X=x Y=y ...
    case <name>

``or`` lines add one disjunctive constraint each; ``case`` headers split a
file into named cases for estimation runs.

Diagnosis (noisy-or) files:

    disease <name> <prior>
    feature <name> [leak <p>]
    cause <disease> <feature> <activation>

Findings files hold ``positive <feature>`` / ``negative <feature>`` lines.
Blank lines and ``#`` comments are allowed everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParseError
from .model import (
    BayesianNetwork,
    Cpt,
    Evidence,
    Variable,
    normalize_rows,
    require_valid,
)
from .noisyor import Findings, NoisyOrNetwork


def _lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


# ---------------------------------------------------------------------------
# networks


def parse_network(text: str) -> BayesianNetwork:
    variables: list[Variable] = []
    by_name: dict[str, int] = {}
    cpts: dict[int, Cpt] = {}

    pending = None  # (child id, parent ids, rows collected, header line)

    def finish_pending():
        nonlocal pending
        if pending is None:
            return
        child, parents, rows, header_line = pending
        name = variables[child].name
        expected = 1
        for p in parents:
            expected *= variables[p].n_states
        if len(rows) != expected:
            raise ParseError(
                f"cpt {name!r} has {len(rows)} rows, expected {expected}",
                line=header_line,
            )
        try:
            table = normalize_rows(np.array(rows, dtype=float), f"cpt {name!r}")
        except Exception as exc:
            raise ParseError(str(exc), line=header_line) from None
        cpts[child] = Cpt(child, tuple(parents), table)
        pending = None

    def expect_states(parents, row_idx, given, lineno):
        # verify the row header matches the row-major instantiation
        sizes = [variables[p].n_states for p in parents]
        expect = []
        rem = row_idx
        for k in range(len(sizes) - 1, -1, -1):
            expect.append(rem % sizes[k])
            rem //= sizes[k]
        expect.reverse()
        for p, s_expect, s_given in zip(parents, expect, given):
            want = variables[p].states[s_expect]
            if s_given != want:
                raise ParseError(
                    f"row {row_idx} of cpt {variables[pending[0]].name!r} "
                    f"should start with {want!r} for parent "
                    f"{variables[p].name!r}, found {s_given!r}",
                    line=lineno,
                )

    saw_anything = False
    for lineno, line in _lines(text):
        saw_anything = True
        parts = line.split()
        if parts[0] == "var":
            finish_pending()
            if len(parts) < 3:
                raise ParseError("var needs a name and at least one state",
                                 line=lineno)
            name = parts[1]
            if name in by_name:
                raise ParseError(f"duplicate variable {name!r}", line=lineno)
            states = tuple(parts[2:])
            if len(set(states)) != len(states):
                raise ParseError(f"duplicate states for {name!r}", line=lineno)
            by_name[name] = len(variables)
            variables.append(Variable(len(variables), name, states))
        elif parts[0] == "cpt":
            finish_pending()
            body = line[len("cpt"):].strip()
            if "|" in body:
                child_part, parent_part = body.split("|", 1)
                parent_names = parent_part.split()
            else:
                child_part, parent_names = body, []
            child_name = child_part.strip()
            if child_name not in by_name:
                raise ParseError(f"unknown variable {child_name!r}", line=lineno)
            child = by_name[child_name]
            if child in cpts:
                raise ParseError(f"duplicate cpt for {child_name!r}", line=lineno)
            parents = []
            for pn in parent_names:
                if pn not in by_name:
                    raise ParseError(f"unknown parent {pn!r}", line=lineno)
                parents.append(by_name[pn])
            pending = (child, parents, [], lineno)
        elif ":" in line:
            if pending is None:
                raise ParseError("probability row outside a cpt block",
                                 line=lineno)
            child, parents, rows, header_line = pending
            left, right = line.split(":", 1)
            given = left.split()
            if len(given) != len(parents):
                raise ParseError(
                    f"row names {len(given)} parent states, cpt "
                    f"{variables[child].name!r} has {len(parents)} parents",
                    line=lineno,
                )
            expect_states(parents, len(rows), given, lineno)
            try:
                probs = [float(tok) for tok in right.split()]
            except ValueError as exc:
                raise ParseError(f"bad probability: {exc}", line=lineno) from None
            if len(probs) != variables[child].n_states:
                raise ParseError(
                    f"cpt {variables[child].name!r} rows need "
                    f"{variables[child].n_states} probabilities, found "
                    f"{len(probs)}",
                    line=lineno,
                )
            rows.append(probs)
        else:
            raise ParseError(f"unrecognized line {line!r}", line=lineno,
                             column=1)
    if not saw_anything:
        raise ParseError("empty network file", line=1, column=1)
    finish_pending()
    missing = [v.name for v in variables if v.id not in cpts]
    if missing:
        raise ParseError(f"variables without cpts: {', '.join(missing)}", line=1)
    return require_valid(BayesianNetwork(variables, cpts))


def write_network(net: BayesianNetwork) -> str:
    lines = []
    for v in net.variables:
        lines.append(f"var {v.name} " + " ".join(v.states))
    for vid in net.live:
        cpt = net.cpts[vid]
        parent_names = " ".join(net.variables[p].name for p in cpt.parents)
        lines.append(f"cpt {net.variables[vid].name} | {parent_names}".rstrip())
        for row, states in cpt.active_rows(net.domain):
            given = " ".join(
                net.variables[p].states[states[p]] for p in cpt.parents
            )
            probs = " ".join(repr(float(x)) for x in cpt.table[row])
            lines.append(f"{given} : {probs}" if given else f": {probs}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# evidence


def _parse_atom(tok: str, net: BayesianNetwork, lineno: int) -> tuple[int, int]:
    if "=" not in tok:
        raise ParseError(f"expected name=state, found {tok!r}", line=lineno)
    name, state = (s.strip() for s in tok.split("=", 1))
    try:
        var = net.var_named(name)
    except Exception:
        raise ParseError(f"unknown variable {name!r}", line=lineno) from None
    if state not in var.states:
        raise ParseError(f"variable {name!r} has no state {state!r}",
                         line=lineno)
    return var.id, var.states.index(state)


def _parse_evidence_lines(entries, net: BayesianNetwork) -> Evidence:
    ev = Evidence()
    for lineno, line in entries:
        if line.startswith("or "):
            atoms = [_parse_atom(tok, net, lineno) for tok in line[3:].split()]
            if not atoms:
                raise ParseError("empty constraint", line=lineno)
            ev.constraints.append(tuple(atoms))
        else:
            var, state = _parse_atom(line.replace(" ", ""), net, lineno)
            if var in ev.assignments and ev.assignments[var] != state:
                raise ParseError(
                    f"duplicate assignment for {net.variables[var].name!r}",
                    line=lineno,
                )
            ev.assignments[var] = state
    return ev


def parse_evidence(text: str, net: BayesianNetwork) -> Evidence:
    entries = list(_lines(text))
    if any(line.startswith("case ") for _, line in entries):
        raise ParseError("multi-case file passed where one case was expected",
                         line=next(l for l, t in entries if t.startswith("case ")))
    return _parse_evidence_lines(entries, net)


def parse_cases(text: str, net: BayesianNetwork) -> list[tuple[str, Evidence]]:
    """Split a ``case <name>`` sectioned file; headerless text is one case."""
    sections: list[tuple[str, list]] = []
    current: list = []
    name = None
    for lineno, line in _lines(text):
        if line.startswith("case "):
            if name is not None or current:
                sections.append((name or "case0", current))
            name = line[5:].strip() or f"case{len(sections)}"
            current = []
        else:
            current.append((lineno, line))
    sections.append((name or "case0", current))
    return [(n, _parse_evidence_lines(entries, net)) for n, entries in sections]


def write_evidence(ev: Evidence, net: BayesianNetwork) -> str:
    lines = []
    for var in sorted(ev.assignments):
        state = net.variables[var].states[ev.assignments[var]]
        lines.append(f"{net.variables[var].name} = {state}")
    for clause in ev.constraints:
        atoms = " ".join(
            f"{net.variables[v].name}={net.variables[v].states[s]}"
            for v, s in clause
        )
        lines.append(f"or {atoms}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# diagnosis models


@dataclass
class NorFile:
    nor: NoisyOrNetwork
    disease_names: list[str]
    feature_names: list[str]

    def disease_index(self, name: str) -> int:
        return self.disease_names.index(name)

    def feature_index(self, name: str) -> int:
        return self.feature_names.index(name)


def parse_nor(text: str) -> NorFile:
    disease_names: list[str] = []
    priors: list[float] = []
    feature_names: list[str] = []
    leaks: list[float] = []
    links: list[tuple[str, str, float, int]] = []
    for lineno, line in _lines(text):
        parts = line.split()
        if parts[0] == "disease" and len(parts) == 3:
            disease_names.append(parts[1])
            priors.append(float(parts[2]))
        elif parts[0] == "feature":
            if len(parts) == 2:
                feature_names.append(parts[1])
                leaks.append(0.0)
            elif len(parts) == 4 and parts[2] == "leak":
                feature_names.append(parts[1])
                leaks.append(float(parts[3]))
            else:
                raise ParseError("feature takes a name and optional leak",
                                 line=lineno)
        elif parts[0] == "cause" and len(parts) == 4:
            links.append((parts[1], parts[2], float(parts[3]), lineno))
        else:
            raise ParseError(f"unrecognized line {line!r}", line=lineno)
    if not feature_names and not disease_names:
        raise ParseError("empty diagnosis model", line=1)
    d_index = {n: i for i, n in enumerate(disease_names)}
    f_index = {n: i for i, n in enumerate(feature_names)}
    causes: list[list[int]] = [[] for _ in feature_names]
    acts: list[list[float]] = [[] for _ in feature_names]
    for dname, fname, p, lineno in links:
        if dname not in d_index:
            raise ParseError(f"unknown disease {dname!r}", line=lineno)
        if fname not in f_index:
            raise ParseError(f"unknown feature {fname!r}", line=lineno)
        causes[f_index[fname]].append(d_index[dname])
        acts[f_index[fname]].append(p)
    leak = np.array(leaks) if any(x > 0.0 for x in leaks) else None
    nor = NoisyOrNetwork(
        np.array(priors), len(feature_names), causes,
        [np.array(a) for a in acts], leak
    )
    nor.check()
    return NorFile(nor, disease_names, feature_names)


def write_nor(nor: NoisyOrNetwork, disease_names=None, feature_names=None) -> str:
    disease_names = disease_names or [f"d{i+1}" for i in range(nor.n_diseases)]
    feature_names = feature_names or [f"f{j+1}" for j in range(nor.n_features)]
    lines = [
        f"disease {n} {float(p)!r}" for n, p in zip(disease_names, nor.priors)
    ]
    for j, name in enumerate(feature_names):
        if nor.leak is not None and nor.leak[j] > 0.0:
            lines.append(f"feature {name} leak {float(nor.leak[j])!r}")
        else:
            lines.append(f"feature {name}")
    for j in range(nor.n_features):
        for i, p in zip(nor.causes[j], nor.activation[j]):
            lines.append(f"cause {disease_names[i]} {feature_names[j]} {float(p)!r}")
    return "\n".join(lines) + "\n"


def parse_findings(text: str, norfile: NorFile) -> Findings:
    pos, neg = set(), set()
    for lineno, line in _lines(text):
        parts = line.split()
        if len(parts) != 2 or parts[0] not in ("positive", "negative"):
            raise ParseError(f"unrecognized finding {line!r}", line=lineno)
        try:
            j = norfile.feature_index(parts[1])
        except ValueError:
            raise ParseError(f"unknown feature {parts[1]!r}", line=lineno) from None
        (pos if parts[0] == "positive" else neg).add(j)
    return Findings(frozenset(pos), frozenset(neg))


def write_findings(findings: Findings, feature_names) -> str:
    lines = [f"positive {feature_names[j]}" for j in sorted(findings.positive)]
    lines += [f"negative {feature_names[j]}" for j in sorted(findings.negative)]
    return "\n".join(lines) + "\n"
