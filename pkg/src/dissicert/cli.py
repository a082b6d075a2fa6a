"""Command-line front end: batch certification, rank analysis, synthetic data
generation, and model-side verification.

Exit codes: 0 certified/success, 2 not informative, 3 not certified,
4 undecided, 1 usage or I/O error.  Set DISSICERT_LOG=debug for verbose
logging.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from typing import Optional

import numpy as np

from . import certifier, datamat, lti_core, qdf, sdp

log = logging.getLogger("dissicert")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_INFORMATIVE = 2
EXIT_NOT_CERTIFIED = 3
EXIT_UNDECIDED = 4

_VERDICT_EXIT = {
    certifier.CERTIFIED: EXIT_OK,
    certifier.NOT_INFORMATIVE: EXIT_NOT_INFORMATIVE,
    certifier.NOT_CERTIFIED: EXIT_NOT_CERTIFIED,
    certifier.UNDECIDED: EXIT_UNDECIDED,
}


class UsageError(Exception):
    pass


def parse_trajectory_csv(path: str, m: int, p: int) -> lti_core.Trajectory:
    """Read a trajectory from CSV: one row per sample, inputs first.

    A single non-numeric first row is treated as a header and skipped.
    Malformed rows are reported with their line number.
    """
    q = m + p
    rows = []
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise UsageError(f"cannot open data file: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                values = [float(cell) for cell in row]
            except ValueError:
                if lineno == 1 and not rows:
                    continue  # header row
                raise UsageError(f"{path}:{lineno}: non-numeric field") from None
            if len(values) != q:
                raise UsageError(
                    f"{path}:{lineno}: expected {q} fields (m={m} inputs then "
                    f"p={p} outputs), got {len(values)}")
            rows.append(values)
    if not rows:
        raise UsageError(f"{path}: no data rows")
    return lti_core.Trajectory(np.asarray(rows), m, p)


def write_trajectory_csv(w: lti_core.Trajectory, path: Optional[str]) -> None:
    """Write a trajectory as CSV with 17 significant digits (lossless floats)."""
    header = [f"u{i + 1}" for i in range(w.m)] + [f"y{i + 1}" for i in range(w.p)]
    lines = [",".join(header)]
    for row in w.samples:
        lines.append(",".join(f"{v:.17g}" for v in row))
    text = "\n".join(lines) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _emit_json(payload: dict, path: Optional[str]) -> None:
    text = json.dumps(payload, indent=2) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _supply_from_args(args, m: int, p: int) -> qdf.SupplyRate:
    if args.supply == "custom":
        if not args.phi:
            raise UsageError("--supply custom requires --phi")
        return qdf.load_supply(args.phi)
    if args.phi:
        raise UsageError("--phi conflicts with a built-in --supply kind")
    if args.supply == "passivity":
        if m != p:
            raise UsageError("passivity requires as many outputs as inputs")
        return qdf.passivity_supply(m)
    if args.supply == "l2gain":
        if args.gamma is None:
            raise UsageError("--supply l2gain requires --gamma")
        return qdf.l2gain_supply(m, p, args.gamma)
    raise UsageError(f"unknown supply kind {args.supply!r}")


def _maybe_timestamp(payload: dict, args) -> dict:
    if not args.no_timestamp:
        payload["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    return payload


def _cmd_certify(args) -> int:
    for name in ("data", "m", "p", "lag_bound"):
        if getattr(args, name) is None:
            raise UsageError(f"certify requires --{name.replace('_', '-')}")
    w = parse_trajectory_csv(args.data, args.m, args.p)
    supply = _supply_from_args(args, args.m, args.p)
    prior = certifier.PriorKnowledge(args.m, args.p, args.lag_bound, args.nmin)
    solver = sdp.SolveOptions(feas_tol=args.feas_tol)
    opts = certifier.CertifyOptions(rank_rtol=args.rank_tol, solver=solver)
    report = certifier.certify(w, prior, supply, opts)
    payload = report.to_dict(include_timing=not args.no_timestamp)
    _emit_json(_maybe_timestamp(payload, args), args.out)
    return _VERDICT_EXIT[report.verdict]


def _cmd_analyze(args) -> int:
    for name in ("data", "m", "p", "lag_bound"):
        if getattr(args, name) is None:
            raise UsageError(f"analyze requires --{name.replace('_', '-')}")
    w = parse_trajectory_csv(args.data, args.m, args.p)
    est = datamat.estimate_complexity(w, args.m, args.lag_bound, args.rank_tol)
    payload = {
        "T": w.T,
        "q": w.q,
        "rank_profile": list(est.rank_profile),
        "n_min_hat": est.n_min_hat,
        "lag_hat": est.lag_hat,
        "trusted": est.trusted,
    }
    _emit_json(_maybe_timestamp(payload, args), args.out)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    if args.system:
        sys_model = lti_core.load_system(args.system)
    else:
        if args.m is None or args.p is None:
            raise UsageError("simulate needs --system or dimensions --m/--p (with --n)")
        sys_model = lti_core.random_controllable_system(
            args.n, args.m, args.p, args.seed)
    rng = np.random.default_rng(args.seed)
    u = rng.uniform(-args.amplitude, args.amplitude, (args.samples, sys_model.m))
    x0 = rng.uniform(-args.amplitude, args.amplitude, sys_model.n)
    run = lti_core.simulate(sys_model, x0, u)
    write_trajectory_csv(run.trajectory, args.out)
    return EXIT_OK


def _cmd_verify(args) -> int:
    if not args.system:
        raise UsageError("verify requires --system")
    sys_model = lti_core.load_system(args.system)
    supply = _supply_from_args(args, sys_model.m, sys_model.p)
    options = sdp.SolveOptions(feas_tol=args.feas_tol)
    P, res = lti_core.model_dissipativity_check(sys_model, supply, options,
                                                details=True)
    payload = {
        "feasible": P is not None,
        "status": res.status,
        "margins": [None if not np.isfinite(v) else float(v) for v in res.margins],
        "P": None if P is None else P.tolist(),
    }
    _emit_json(_maybe_timestamp(payload, args), args.out)
    if res.status == sdp.FEASIBLE:
        return EXIT_OK
    if res.status == sdp.INFEASIBLE:
        return EXIT_NOT_CERTIFIED
    return EXIT_UNDECIDED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dissicert",
        description="Certify dissipativity of an LTI system from input-output data.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--data", help="trajectory CSV (inputs first, outputs last)")
        sp.add_argument("--system", help="state-space JSON file")
        sp.add_argument("--supply", default="passivity",
                        choices=["passivity", "l2gain", "custom"])
        sp.add_argument("--gamma", type=float, help="gain bound for l2gain supply")
        sp.add_argument("--phi", help="custom supply JSON file")
        sp.add_argument("--m", type=int, help="number of inputs")
        sp.add_argument("--p", type=int, help="number of outputs")
        sp.add_argument("--lag-bound", dest="lag_bound", type=int,
                        help="upper bound L on the system lag")
        sp.add_argument("--nmin", type=int, default=None,
                        help="externally known minimal order (skips estimation)")
        sp.add_argument("--rank-tol", dest="rank_tol", type=float, default=1e-10,
                        help="relative singular-value cutoff for rank decisions")
        sp.add_argument("--feas-tol", dest="feas_tol", type=float, default=None,
                        help="solver feasibility tolerance (default 1e-7 scaled)")
        sp.add_argument("--out", default=None, help="output file (default stdout)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--no-timestamp", dest="no_timestamp", action="store_true",
                        help="omit timestamp/timing for byte-stable reports")

    sp = sub.add_parser("certify", help="run the data-driven certification pipeline")
    common(sp)
    sp.set_defaults(fn=_cmd_certify)

    sp = sub.add_parser("analyze", help="rank profile and complexity estimate only")
    common(sp)
    sp.set_defaults(fn=_cmd_analyze)

    sp = sub.add_parser("simulate", help="generate a trajectory CSV")
    common(sp)
    sp.add_argument("--n", type=int, default=2, help="state dimension for random systems")
    sp.add_argument("--samples", type=int, default=50, help="trajectory length")
    sp.add_argument("--amplitude", type=float, default=1.0,
                    help="uniform input amplitude")
    sp.set_defaults(fn=_cmd_simulate)

    sp = sub.add_parser("verify", help="model-based dissipativity check on a system file")
    common(sp)
    sp.set_defaults(fn=_cmd_verify)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("DISSICERT_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
