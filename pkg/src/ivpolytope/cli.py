"""Command-line surface: bounds, confidence intervals, falsification, oracle
audits, falsification-rate simulation, and matrix export.

Exit codes: 0 success, 2 model falsified by the data, 1 operational error
(parse or solver failure; a machine-readable error object goes to stderr).
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .core import Dims, drop_instrument, drop_treatment, empirical_distributions, load_dataset
from .errors import IvPolytopeError
from .inequalities import (
    count_inequalities,
    enumerate_full,
    filter_nonredundant,
    system_dense_csv,
    system_to_json,
    nonredundant_keep,
    iter_families,
)
from .bounds import falsify, parse_functional, plugin_bounds, simulate_falsification
from .inference import confidence_intervals

_FALSIFIED_EXIT = 2


def _parse_dims(text: str) -> Dims:
    parts = [int(v) for v in text.replace("x", ",").split(",") if v.strip()]
    if len(parts) != 3:
        raise IvPolytopeError("--dims expects Q,K,M")
    return Dims(*parts)


def _emit(records: list[dict], fields: list[str], fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(records, sort_keys=True, separators=(",", ":")))
        return
    if fmt == "csv":
        print(",".join(fields))
        for rec in records:
            print(",".join(_cell(rec.get(k)) for k in fields))
        return
    widths = {k: max(len(k), *(len(_cell(rec.get(k), table=True)) for rec in records)) for k in fields}
    print("  ".join(k.ljust(widths[k]) for k in fields))
    for rec in records:
        print("  ".join(_cell(rec.get(k), table=True).ljust(widths[k]) for k in fields))


def _cell(value, table: bool = False) -> str:
    if isinstance(value, float):
        return f"{value:.6g}" if table else repr(value)
    return str(value)


def _prepared_dataset(args):
    ds = load_dataset(args.input)
    if getattr(args, "drop_z", None):
        for level in args.drop_z:
            ds = drop_instrument(ds, level)
    if getattr(args, "drop_x", None):
        for level in args.drop_x:
            print(
                f"warning: --drop-x {level} selects on the treatment received; "
                "the instrumental-variable assumptions generally do not survive this",
                file=sys.stderr,
            )
            ds = drop_treatment(ds, level)
    return ds


def _system(dims: Dims, full: bool = False):
    sys_full = enumerate_full(dims)
    return sys_full if full else filter_nonredundant(sys_full)


def _cmd_bounds(args) -> int:
    ds = _prepared_dataset(args)
    sys_nr = _system(ds.dims)
    observed = empirical_distributions(ds)
    records = []
    falsified = False
    for spec in args.functional:
        f = parse_functional(spec, ds.dims, ds.labels)
        res = plugin_bounds(sys_nr, observed, f)
        falsified = falsified or res.status == "infeasible"
        records.append(
            {
                "functional": spec,
                "lower": res.lower,
                "upper": res.upper,
                "status": res.status,
            }
        )
    _emit(records, ["functional", "lower", "upper", "status"], args.format)
    return _FALSIFIED_EXIT if falsified else 0


def _cmd_ci(args) -> int:
    ds = _prepared_dataset(args)
    sys_nr = _system(ds.dims)
    fs = [parse_functional(spec, ds.dims, ds.labels) for spec in args.functional]
    intervals = confidence_intervals(
        sys_nr,
        ds,
        fs,
        args.alpha,
        max_cut_rounds=args.max_cut_rounds,
        tol_kl=args.tol_kl,
        tol_obj=args.tol_obj,
    )
    records = [
        {
            "functional": spec,
            "lower": ci.lower,
            "upper": ci.upper,
            "alpha": ci.alpha,
            "t_alpha": ci.t_alpha,
            "falsified": ci.falsified,
        }
        for spec, ci in zip(args.functional, intervals)
    ]
    _emit(records, ["functional", "lower", "upper", "alpha", "t_alpha", "falsified"], args.format)
    return _FALSIFIED_EXIT if any(ci.falsified for ci in intervals) else 0


def _cmd_falsify(args) -> int:
    ds = _prepared_dataset(args)
    sys_nr = _system(ds.dims)
    verdict = falsify(sys_nr, empirical_distributions(ds))
    _emit([{"status": verdict}], ["status"], args.format)
    return _FALSIFIED_EXIT if verdict == "infeasible" else 0


def _cmd_simulate(args) -> int:
    k, m = args.treatments, args.outcomes
    arm_counts = args.arms
    records = []
    for q in arm_counts:
        dims = Dims(q, k, m)
        prop = simulate_falsification(dims, args.draws, args.seed)
        records.append({"arms": q, "proportion": prop})
    _emit(records, ["arms", "proportion"], args.format)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("arms,proportion\n")
            for rec in records:
                fh.write(f"{rec['arms']},{rec['proportion']!r}\n")
    return 0


def _cmd_matrices(args) -> int:
    dims = _parse_dims(args.dims)
    sys_out = _system(dims, full=args.full)
    print(f"rows per arm: {len(sys_out.rows)}")
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as fh:
            json.dump(system_to_json(sys_out), fh, sort_keys=True, separators=(",", ":"))
    if args.dense_csv:
        with open(args.dense_csv, "w", encoding="utf-8") as fh:
            system_dense_csv(sys_out, fh)
    if not args.json_out and not args.dense_csv:
        print(json.dumps(system_to_json(sys_out), sort_keys=True, separators=(",", ":")))
    return 0


def _cmd_audit(args) -> int:
    from .core import index_roundtrip
    from .oracle import (
        build_coherence,
        enumerate_vertices,
        lp_redundancy_audit,
        certificate_redundant,
        vertex_consistency_report,
    )

    dims = _parse_dims(args.dims)
    checks: list[tuple[str, bool, str]] = []

    report = index_roundtrip(dims)
    checks.append(("index-roundtrip", report["ok"], f"{report['n_strata']} strata, {report['n_cells']} cells"))

    rel = build_coherence(dims)
    want_edges = dims.n_treatments * dims.n_strata
    checks.append(("coherence-edges", len(rel.edges) == want_edges, f"{len(rel.edges)} edges"))

    sys_full = enumerate_full(dims)
    sys_nr = filter_nonredundant(sys_full)
    total, kept = count_inequalities(dims)
    count_ok = (
        total == dims.n_instruments * len(sys_full.rows)
        and kept == dims.n_instruments * len(sys_nr.rows)
    )
    checks.append(("row-counts", count_ok, f"{len(sys_full.rows)} full / {len(sys_nr.rows)} kept per arm"))

    families = list(iter_families(dims))
    if len(families) <= args.max_families:
        agree = all(
            certificate_redundant(masks, dims) == (not nonredundant_keep(masks, dims.n_outcomes))
            for masks in families
        )
        checks.append(("certificate-equivalence", agree, f"{len(families)} families"))

    n_product_rows = dims.n_instruments * len(sys_nr.rows)
    if n_product_rows <= args.max_audit_rows:
        audit = lp_redundancy_audit(sys_nr)
        all_nr = all(entry["verdict"] == "nonredundant" for entry in audit)
        checks.append(("lp-audit", all_nr, f"{len(audit)} rows all non-redundant"))

    n_vertices = dims.n_strata * dims.n_treatments**dims.n_instruments
    if n_vertices <= args.max_vertices:
        vs = enumerate_vertices(dims)
        rep = vertex_consistency_report(sys_nr)
        ok = rep["all_vertices_feasible"] and rep["all_rows_facet_defining"]
        checks.append(("vertex-consistency", ok, f"{len(vs.vertices)} vertices, dim {rep['polytope_dim']}"))

    for name, ok, detail in checks:
        print(f"{'ok  ' if ok else 'FAIL'} {name}: {detail}")
    return 0 if all(ok for _, ok, _ in checks) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ivpolytope",
        description="Partial-identification bounds and finite-sample inference "
        "for categorical instrumental-variable models",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_io(p, functionals: bool):
        p.add_argument("input", help="dataset file (CSV with z,x,y,count header, or JSON)")
        if functionals:
            p.add_argument(
                "-f", "--functional", action="append", required=True,
                help="functional spec: ate(i,i',y) | marginal(i,y) | stratum(y1,...,yK) | raw([c0,...])",
            )
        p.add_argument("--drop-z", action="append", metavar="LEVEL",
                       help="discard one instrument arm (repeatable)")
        p.add_argument("--drop-x", action="append", metavar="LEVEL",
                       help="discard one treatment level (repeatable; prints a validity warning)")
        p.add_argument("--format", choices=("json", "table", "csv"), default="table")

    p_bounds = sub.add_parser("bounds", help="plug-in partial-identification bounds")
    add_io(p_bounds, functionals=True)
    p_bounds.set_defaults(func=_cmd_bounds)

    p_ci = sub.add_parser("ci", help="simultaneous finite-sample confidence intervals")
    add_io(p_ci, functionals=True)
    p_ci.add_argument("--alpha", type=float, default=0.05)
    p_ci.add_argument("--max-cut-rounds", type=int, default=500)
    p_ci.add_argument("--tol-kl", type=float, default=1e-7)
    p_ci.add_argument("--tol-obj", type=float, default=1e-6)
    p_ci.set_defaults(func=_cmd_ci)

    p_falsify = sub.add_parser("falsify", help="test whether the data falsify the IV model")
    add_io(p_falsify, functionals=False)
    p_falsify.set_defaults(func=_cmd_falsify)

    p_sim = sub.add_parser("simulate", help="falsification rate under flat-Dirichlet observed laws")
    p_sim.add_argument("--treatments", type=int, required=True)
    p_sim.add_argument("--outcomes", type=int, required=True)
    p_sim.add_argument("--arms", type=int, nargs="+", required=True,
                       help="instrument arm counts to sweep")
    p_sim.add_argument("--draws", type=int, default=1000)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--csv", help="write (arms, proportion) pairs to this path")
    p_sim.add_argument("--format", choices=("json", "table", "csv"), default="table")
    p_sim.set_defaults(func=_cmd_simulate)

    p_audit = sub.add_parser("audit", help="run the brute-force verification layer")
    p_audit.add_argument("--dims", required=True, help="Q,K,M")
    p_audit.add_argument("--max-families", type=int, default=400)
    p_audit.add_argument("--max-audit-rows", type=int, default=120)
    p_audit.add_argument("--max-vertices", type=int, default=64)
    p_audit.set_defaults(func=_cmd_audit)

    p_mat = sub.add_parser("matrices", help="export the inequality matrices")
    p_mat.add_argument("--dims", required=True, help="Q,K,M")
    p_mat.add_argument("--full", action="store_true", help="export before redundancy filtering")
    p_mat.add_argument("--json-out", help="write the JSON description to this path")
    p_mat.add_argument("--dense-csv", help="write the dense [-H'|H] block to this path")
    p_mat.set_defaults(func=_cmd_matrices)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IvPolytopeError as err:
        print(
            json.dumps({"error": type(err).__name__, "message": str(err)}, sort_keys=True),
            file=sys.stderr,
        )
        return 1
    except OSError as err:
        print(json.dumps({"error": "io", "message": str(err)}, sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
