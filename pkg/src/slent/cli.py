"""Command-line entry point.

Subcommands:
  check PROBLEM       decide an entailment (VALID / INVALID)
  sat PROBLEM         antecedent satisfiability (SAT / UNSAT)
  oracle PROBLEM      bounded finite-model counterexample search
  prove-check PROOF   re-check a serialized proof (PROOF-OK / PROOF-REJECTED)

The first stdout line is always the machine-parsable verdict; detail lines
follow.  Exit codes: 0 = valid/sat/proof-ok, 1 = invalid/unsat/rejected,
2 = input error, 3 = resource limit.  The environment variable
SLID_STEP_BUDGET overrides the default proof-search step budget.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import proofcheck, prover, satcheck, semantics
from .parse import ParseError, Problem, WellFormednessError, parse_problem
from .syntax import DefEnv, PointsTo


EXIT_POSITIVE = 0
EXIT_NEGATIVE = 1
EXIT_INPUT = 2
EXIT_RESOURCE = 3


class _InputError(Exception):
    pass


def _read(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return f.read()
    except OSError as e:
        raise _InputError(f"cannot read {path}: {e.strerror}") from None


def _load_problem(path: str) -> Problem:
    try:
        return parse_problem(_read(path))
    except (ParseError, WellFormednessError) as e:
        raise _InputError(f"{path}: {e}") from None


def _step_budget(default: int = 200_000) -> int:
    raw = os.environ.get("SLID_STEP_BUDGET")
    if raw is None:
        return default
    try:
        v = int(raw)
        if v <= 0:
            raise ValueError
        return v
    except ValueError:
        raise _InputError(
            f"SLID_STEP_BUDGET must be a positive integer, got {raw!r}"
        ) from None


def _cmd_check(args) -> int:
    prob = _load_problem(args.problem)
    cfg = prover.Config(d_wand=args.dwand, strategy=args.strategy,
                        step_budget=_step_budget(), jobs=args.jobs)
    trace: list | None = [] if args.trace else None
    res = prover.decide(prob.env, prob.query, cfg, trace=trace)
    if trace is not None:
        for line in trace:
            print(line, file=sys.stderr)
    if isinstance(res, prover.ResourceExhausted):
        print("RESOURCE-LIMIT")
        print(f"step budget exhausted after {res.steps} steps")
        return EXIT_RESOURCE
    if isinstance(res, prover.Valid):
        print("VALID")
        if args.emit_proof:
            try:
                with open(args.emit_proof, "w", encoding="utf-8") as f:
                    f.write(proofcheck.serialize(res.proof))
            except OSError as e:
                raise _InputError(
                    f"cannot write {args.emit_proof}: {e.strerror}") from None
            print(f"proof written to {args.emit_proof}")
        return EXIT_POSITIVE
    print("INVALID")
    if res.witness is not None:
        print(semantics.render_model(res.witness.store, res.witness.heap))
    return EXIT_NEGATIVE


def _cmd_sat(args) -> int:
    prob = _load_problem(args.problem)
    sat = any(satcheck.check_sat(prob.env, case.ante)
              for case in proofcheck.classification_family(prob.query))
    if sat:
        print("SAT")
        return EXIT_POSITIVE
    print("UNSAT")
    return EXIT_NEGATIVE


def _cmd_oracle(args) -> int:
    prob = _load_problem(args.problem)
    try:
        res = semantics.oracle_entailment(prob.env, prob.query, args.max_cells,
                                          universe_extra=args.universe_extra)
    except semantics.ResourceLimit:
        print("RESOURCE-LIMIT")
        print("model enumeration budget exhausted")
        return EXIT_RESOURCE
    if isinstance(res, semantics.Counterexample):
        print("INVALID")
        print(semantics.render_model(res.store, res.heap))
        return EXIT_NEGATIVE
    print("VALID")
    print(f"no counterexample with at most {args.max_cells} cells")
    return EXIT_POSITIVE


def _proof_env(doc: proofcheck.ProofTree) -> DefEnv:
    """Fallback environment when no problem file accompanies the proof: no
    predicates, cell width read off the proof's points-to atoms."""
    n = 1
    for node in doc.nodes.values():
        for d in node.sequent.succ:
            for a in d.spatial:
                if isinstance(a.atom, PointsTo):
                    n = max(n, len(a.atom.contents))
        for a in node.sequent.ante.spatial:
            if isinstance(a.atom, PointsTo):
                n = max(n, len(a.atom.contents))
    return DefEnv(n, {})


def _cmd_prove_check(args) -> int:
    text = _read(args.proof)
    try:
        doc = proofcheck.deserialize(text)
    except proofcheck.MalformedProof as e:
        print("PROOF-REJECTED")
        print(str(e))
        return EXIT_NEGATIVE
    if args.problem is not None:
        env = _load_problem(args.problem).env
    else:
        env = _proof_env(doc)
    violations = proofcheck.check_proof(env, doc)
    if violations:
        print("PROOF-REJECTED")
        for v in violations:
            print(v)
        return EXIT_NEGATIVE
    print("PROOF-OK")
    return EXIT_POSITIVE


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="slent",
        description="entailment checking for symbolic heaps with inductive "
                    "definitions")
    sub = ap.add_subparsers(dest="command", required=True)

    chk = sub.add_parser("check", help="decide an entailment")
    chk.add_argument("problem", help="problem file")
    chk.add_argument("--dwand", type=int, default=None, metavar="N",
                     help="wand-chain depth bound (default: max arity)")
    chk.add_argument("--strategy", choices=("greedy", "exhaustive"),
                     default="exhaustive")
    chk.add_argument("--emit-proof", metavar="PATH", default=None,
                     help="write the proof document on VALID")
    chk.add_argument("--trace", action="store_true",
                     help="print proof-search steps to stderr")
    chk.add_argument("--jobs", type=int, default=1, metavar="N",
                     help="worker threads")
    chk.set_defaults(run=_cmd_check)

    sat = sub.add_parser("sat", help="antecedent satisfiability")
    sat.add_argument("problem", help="problem file")
    sat.set_defaults(run=_cmd_sat)

    orc = sub.add_parser("oracle", help="bounded countermodel search")
    orc.add_argument("problem", help="problem file")
    orc.add_argument("--max-cells", type=int, required=True, metavar="N",
                     help="maximum heap size to enumerate")
    orc.add_argument("--universe-extra", type=int, default=0, metavar="K",
                     help="extra unconstrained store variables")
    orc.add_argument("--jobs", type=int, default=1, metavar="N",
                     help="worker threads")
    orc.set_defaults(run=_cmd_oracle)

    pc = sub.add_parser("prove-check", help="re-check a serialized proof")
    pc.add_argument("proof", help="proof document (JSON)")
    pc.add_argument("problem", nargs="?", default=None,
                    help="problem file supplying the predicate definitions")
    pc.set_defaults(run=_cmd_prove_check)
    return ap


def main(argv=None) -> int:
    ap = _build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code not in (0, None) else 0
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_INPUT
    if getattr(args, "max_cells", 1) < 0:
        print("error: --max-cells must be non-negative", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.run(args)
    except _InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
