"""Command-line interface.

Subcommands: compile, query, em, quickscore, gen, stats, bench.  All
randomness flows from ``--seed``; failures exit nonzero with a single
``error: <category>: <message>`` line on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import formats
from .circuit import from_ac_text, to_ac_text, zero_circuit
from .compiler import to_nnf_text
from .encoder import encode, to_dimacs
from .errors import BnacError
from .learning import LearningOptions, build_problem, initial_params, run_em
from .logic import simplify
from .model import BayesianNetwork, Evidence
from .noisyor import PRESENT, decompose, findings_evidence, generate, quickscore
from .pipeline import PipelineOptions, compile_query, network_cluster_size
from .pruning import classical_prune
from .reporting import (
    RunReport,
    render_sweep_figure,
    render_table,
    run_network_job,
    sweep_diagnosis,
    timed,
)


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load_net(args) -> BayesianNetwork:
    return formats.parse_network(_read(args.net))


def _load_evidence(args, net) -> Evidence:
    if getattr(args, "evidence", None):
        return formats.parse_evidence(_read(args.evidence), net)
    return Evidence()


def _query_var_ids(args, net) -> tuple[int, ...]:
    if not getattr(args, "query_vars", None):
        return ()
    return tuple(net.var_named(n.strip()).id
                 for n in args.query_vars.split(",") if n.strip())


def _pipeline_options(args, query_vars=()) -> PipelineOptions:
    return PipelineOptions(
        refinements=not getattr(args, "no_refinements", False),
        use_learned=not getattr(args, "no_learned_evidence", False),
        edge_budget=getattr(args, "node_budget", None) or 50_000_000,
        query_vars=query_vars,
    )


def cmd_compile(args) -> int:
    net = _load_net(args)
    ev = _load_evidence(args, net)
    qv = _query_var_ids(args, net)
    cq = compile_query(net, ev, _pipeline_options(args, qv))
    name = Path(args.net).stem
    if cq.inconsistent:
        circuit = zero_circuit(net, ev)
        print("status inconsistent-evidence")
        report = RunReport(name, cq.cluster_learned, cq.offline_seconds, 0)
        report.add_query("pr", 0.0, 0.0)
    else:
        circuit = cq.circuit
        online = timed(lambda: cq.pr(), min_seconds=0.005, max_repeats=50)
        report = RunReport(name, cq.cluster_learned, cq.offline_seconds,
                           cq.ac_edges)
        report.add_query("pr", online, cq.pr())
    if args.out:
        Path(args.out).write_text(to_ac_text(circuit), encoding="utf-8")
    if args.dimacs:
        pruned = cq.pruned_net if cq.pruned_net is not None else net
        Path(args.dimacs).write_text(
            to_dimacs(encode(pruned, ev,
                             refinements=not args.no_refinements)),
            encoding="utf-8",
        )
    if args.nnf and not cq.inconsistent:
        pruned = cq.pruned_net
        cnf = encode(pruned, ev, refinements=not args.no_refinements)
        res = simplify(cnf)
        from .compiler import compile_cnf

        graph, _ = compile_cnf(res.simplified)
        Path(args.nnf).write_text(to_nnf_text(graph), encoding="utf-8")
    _emit(render_table(report.rows(), fmt=args.format), args.report)
    return 0


def cmd_query(args) -> int:
    circuit = from_ac_text(_read(args.ac))
    extra = Evidence()
    if args.evidence:
        # reuse the evidence parser against the circuit's own vocabulary
        extra = formats.parse_evidence(_read(args.evidence),
                                       _VocabShim(circuit.variables))
    value = circuit.evaluate(extra)
    rows = [{"query": "pr", "value": repr(value)}]
    if value <= 0.0:
        rows[0]["status"] = "inconsistent-evidence"
        _emit(render_table(rows, fmt=args.format), args.out)
        return 0
    rows[0]["status"] = "ok"
    wanted = None
    if args.query_vars:
        wanted = {n.strip() for n in args.query_vars.split(",") if n.strip()}
    marg = circuit.marginals(extra)
    for var in circuit.live_vars:
        v = circuit.variables[var]
        if wanted is not None and v.name not in wanted:
            continue
        for s, p in enumerate(marg[var]):
            rows.append({
                "query": f"marginal {v.name}={v.states[s]}",
                "value": repr(float(p)),
                "status": "",
            })
    _emit(render_table(rows, ["query", "value", "status"], fmt=args.format),
          args.out)
    return 0


class _VocabShim:
    """Adapter exposing a variable vocabulary to the evidence parser."""

    def __init__(self, variables):
        self.variables = variables

    def var_named(self, name):
        for v in self.variables:
            if v.name == name:
                return v
        raise BnacError(f"unknown variable {name!r}")


def cmd_em(args) -> int:
    net = _load_net(args)
    if not args.learn:
        raise BnacError("em requires --learn with at least one CPT name")
    for name in args.learn.split(","):
        net.learnable.add(net.var_named(name.strip()).id)
    cases = [ev for _, ev in formats.parse_cases(_read(args.cases), net)]
    problem = build_problem(
        net, cases, LearningOptions(max_iters=args.max_iters, tol=args.tol)
    )
    params = initial_params(net, seed=args.seed)
    trace = run_em(problem, params)
    rows = [
        {"iter": i, "log_likelihood": repr(ll),
         "seconds": f"{trace.iter_seconds[i]:.6f}" if i < len(trace.iter_seconds) else ""}
        for i, ll in enumerate(trace.log_likelihoods)
    ]
    rows.append({"iter": "converged", "log_likelihood": str(trace.converged),
                 "seconds": ""})
    _emit(render_table(rows, ["iter", "log_likelihood", "seconds"],
                       fmt=args.format), args.report)
    if args.out:
        from .model import Cpt

        learned_net = BayesianNetwork(
            net.variables,
            {
                v: (Cpt(v, net.cpts[v].parents, trace.params[v])
                    if v in trace.params else net.cpts[v])
                for v in net.live
            },
            set(net.learnable),
        )
        Path(args.out).write_text(formats.write_network(learned_net),
                                  encoding="utf-8")
    return 0


def cmd_quickscore(args) -> int:
    norfile = formats.parse_nor(_read(args.nor))
    findings = formats.parse_findings(_read(args.findings), norfile)
    result = quickscore(norfile.nor, findings, m_plus_cap=args.m_plus_cap)
    rows = [
        {"disease": norfile.disease_names[i], "posterior": repr(float(p))}
        for i, p in enumerate(result.posteriors)
    ]
    if args.verify:
        net, idx = decompose(norfile.nor)
        ev = findings_evidence(idx, findings)
        cq = compile_query(net, ev, _pipeline_options(args))
        marg = cq.marginals()
        post = np.array([
            marg[idx.disease_ids[i]][PRESENT]
            for i in range(norfile.nor.n_diseases)
        ])
        delta = float(np.max(np.abs(post - result.posteriors)))
        rows.append({"disease": "max-delta-vs-circuit", "posterior": repr(delta)})
    _emit(render_table(rows, ["disease", "posterior"], fmt=args.format),
          args.out)
    return 0


def cmd_gen(args) -> int:
    nor, findings = generate(args.diseases, args.features, args.causes,
                             args.positive, args.seed)
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    dnames = [f"d{i+1}" for i in range(nor.n_diseases)]
    fnames = [f"f{j+1}" for j in range(nor.n_features)]
    Path(f"{prefix}.nor").write_text(
        formats.write_nor(nor, dnames, fnames), encoding="utf-8")
    Path(f"{prefix}.findings").write_text(
        formats.write_findings(findings, fnames), encoding="utf-8")
    made = [f"{prefix}.nor", f"{prefix}.findings"]
    if args.emit_bn:
        net, _ = decompose(nor)
        Path(f"{prefix}.net").write_text(formats.write_network(net),
                                         encoding="utf-8")
        made.append(f"{prefix}.net")
    print("wrote " + " ".join(made))
    return 0


def cmd_stats(args) -> int:
    net = _load_net(args)
    ev = _load_evidence(args, net)
    qv = _query_var_ids(args, net)
    rows = [{
        "stage": "original",
        "variables": len(net.live),
        "max_cluster": f"{network_cluster_size(net):.1f}",
    }]
    pruned, _ = classical_prune(net, ev, qv)
    rows.append({
        "stage": "classical-prune",
        "variables": len(pruned.live),
        "max_cluster": f"{network_cluster_size(pruned):.1f}",
    })
    cq = compile_query(net, ev, _pipeline_options(args, qv))
    if cq.inconsistent:
        rows.append({"stage": "learned-reprune", "variables": 0,
                     "max_cluster": "inconsistent-evidence"})
    else:
        rows.append({
            "stage": "learned-reprune",
            "variables": len(cq.pruned_net.live),
            "max_cluster": f"{cq.cluster_learned:.1f}",
        })
    _emit(render_table(rows, ["stage", "variables", "max_cluster"],
                       fmt=args.format), args.out)
    return 0


def cmd_bench(args) -> int:
    manifest = json.loads(_read(args.manifest))
    outdir = Path(args.out) if args.out else None
    if outdir:
        outdir.mkdir(parents=True, exist_ok=True)
    all_rows: list[dict] = []
    sweep_rows: list[dict] = []
    for job in manifest.get("runs", []):
        kind = job.get("kind")
        if kind == "noisyor-sweep":
            rows = sweep_diagnosis(
                job.get("diseases", 120), job.get("features", 400),
                job.get("causes", 11), job.get("m_plus", [0, 3, 6]),
                job.get("seeds", [args.seed]),
                verify_max_mplus=job.get("verify_max_mplus", 6),
                edge_budget=getattr(args, "node_budget", None) or 50_000_000,
            )
            for r in rows:
                r["job"] = job.get("name", "noisyor-sweep")
            sweep_rows.extend(rows)
            all_rows.extend(rows)
        elif kind == "network":
            net = formats.parse_network(_read(job["net"]))
            ev = Evidence()
            if job.get("evidence"):
                ev = formats.parse_evidence(_read(job["evidence"]), net)
            row = run_network_job(job.get("name", Path(job["net"]).stem), net,
                                  ev, _pipeline_options(args))
            row["job"] = row.pop("name")
            all_rows.append(row)
        else:
            raise BnacError(f"unknown bench job kind {kind!r}")
    columns = sorted({k for r in all_rows for k in r},
                     key=lambda c: (c != "job", c))
    table = render_table(all_rows, columns, fmt=args.format)
    if outdir:
        (outdir / "report.tsv").write_text(
            render_table(all_rows, columns, fmt="tsv"), encoding="utf-8")
        if sweep_rows:
            render_sweep_figure(sweep_rows, outdir / "report.png")
        sys.stdout.write(table)
    else:
        sys.stdout.write(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bnac",
        description="Compile Bayesian networks with evidence into arithmetic "
                    "circuits; query, estimate, and benchmark them.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, net=False, evidence=False, fmt=True):
        if net:
            p.add_argument("--net", required=True, help="network file")
        if evidence:
            p.add_argument("--evidence", help="evidence file")
        if fmt:
            p.add_argument("--format", choices=("text", "tsv"), default="text")

    p = sub.add_parser("compile", help="compile a network with evidence")
    common(p, net=True, evidence=True)
    p.add_argument("--query-vars", help="comma-separated variables kept for queries")
    p.add_argument("--out", help="write the circuit here")
    p.add_argument("--report", help="write the run report here")
    p.add_argument("--dimacs", help="dump the CNF encoding here")
    p.add_argument("--nnf", help="dump the compiled form here")
    p.add_argument("--node-budget", type=int)
    p.add_argument("--no-refinements", action="store_true")
    p.add_argument("--no-learned-evidence", action="store_true")
    p.set_defaults(fn=cmd_compile)

    p = sub.add_parser("query", help="evaluate a compiled circuit")
    p.add_argument("--ac", required=True, help="circuit file")
    p.add_argument("--evidence", help="extra evidence file")
    p.add_argument("--query-vars")
    p.add_argument("--out")
    p.add_argument("--format", choices=("text", "tsv"), default="text")
    p.set_defaults(fn=cmd_query)

    p = sub.add_parser("em", help="estimate learnable CPTs from cases")
    common(p, net=True)
    p.add_argument("--cases", required=True, help="multi-case evidence file")
    p.add_argument("--learn", required=True,
                   help="comma-separated learnable CPT names")
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=None,
                   help="seeded random initialization (default uniform)")
    p.add_argument("--out", help="write the learned network here")
    p.add_argument("--report", help="write the iteration trace here")
    p.set_defaults(fn=cmd_em)

    p = sub.add_parser("quickscore", help="two-level diagnosis posteriors")
    p.add_argument("--nor", required=True, help="diagnosis model file")
    p.add_argument("--findings", required=True)
    p.add_argument("--verify", action="store_true",
                   help="cross-check against the compiled route")
    p.add_argument("--m-plus-cap", type=int, default=22)
    p.add_argument("--out")
    p.add_argument("--format", choices=("text", "tsv"), default="text")
    p.add_argument("--no-refinements", action="store_true")
    p.add_argument("--no-learned-evidence", action="store_true")
    p.set_defaults(fn=cmd_quickscore)

    p = sub.add_parser("gen", help="generate a random diagnosis instance")
    p.add_argument("--diseases", type=int, default=600)
    p.add_argument("--features", type=int, default=4100)
    p.add_argument("--causes", type=int, default=11)
    p.add_argument("--positive", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output path prefix")
    p.add_argument("--emit-bn", action="store_true",
                   help="also write the decomposed network")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("stats", help="cluster sizes before/after pruning")
    common(p, net=True, evidence=True)
    p.add_argument("--query-vars")
    p.add_argument("--out")
    p.add_argument("--no-refinements", action="store_true")
    p.add_argument("--no-learned-evidence", action="store_true")
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("bench", help="run a manifest of benchmark jobs")
    p.add_argument("--manifest", required=True, help="json manifest file")
    p.add_argument("--out", help="directory for report.tsv and report.png")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("text", "tsv"), default="text")
    p.add_argument("--node-budget", type=int)
    p.add_argument("--no-refinements", action="store_true")
    p.add_argument("--no-learned-evidence", action="store_true")
    p.set_defaults(fn=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except BnacError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
