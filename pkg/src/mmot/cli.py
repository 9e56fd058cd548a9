"""Command line front-end.

    mmot run SCENARIO.json [--out DIR]
    mmot run SCENARIO_DIR/ [--out DIR] [--jobs N]
    mmot sweep SCENARIO.json --resolutions 8,16,32 [--out DIR]

Exit status: 0 success, 1 error, 2 a decomposition exceeded the observed twist
cardinality (verdict "inconsistent").
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .errors import MMOTError
from .scenario import dumps, load_scenario, run_pipeline, write_reports
from .twist import refinement_trend

EXIT_OK, EXIT_ERROR, EXIT_INCONSISTENT = 0, 1, 2
SWEEP_PIPELINE = ["solve", "splitting", "twist", "decompose", "verify"]
SWEEP_COLUMNS = ["resolution", "primal", "gap", "m_observed", "k",
                 "max_gradient_spread", "verdict"]


def _exit_for(summary) -> int:
    return EXIT_INCONSISTENT if summary.get("verdict") == "inconsistent" else EXIT_OK


def run_file(path, out=None) -> int:
    try:
        sc = load_scenario(path)
        out_dir = Path(out) if out else Path(sc.output or Path("runs") / sc.name)
        reports = run_pipeline(sc)
        write_reports(reports, out_dir)
    except MMOTError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    s = reports["summary"]
    print(f"{sc.name}: primal={s['primal']} gap={s['gap']} m_observed={s['m_observed']} "
          f"k={s['k']} verdict={s['verdict']} -> {out_dir}")
    return _exit_for(s)


def _run_job(args):
    return run_file(*args)


def run_dir(path, out=None, jobs=1) -> int:
    files = sorted(Path(path).glob("*.json"))
    if not files:
        print(f"error: no scenario files in {path}", file=sys.stderr)
        return EXIT_ERROR
    root = Path(out) if out else Path("runs")
    tasks = [(f, root / f.stem) for f in files]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            codes = list(pool.map(_run_job, tasks))
    else:
        codes = [run_file(*t) for t in tasks]
    if EXIT_ERROR in codes:
        return EXIT_ERROR
    return max(codes)


def sweep(path, resolutions, out=None) -> int:
    try:
        base = load_scenario(path)
        out_dir = Path(out) if out else Path(base.output or Path("runs") / base.name) / "sweep"
        rows = []
        for res in resolutions:
            sc = base.at_resolution(res)
            sc.pipeline = list(SWEEP_PIPELINE)
            reports = run_pipeline(sc)
            s = reports["summary"]
            rows.append({"resolution": res, "primal": s["primal"], "gap": s["gap"],
                         "m_observed": s["m_observed"], "k": s["k"],
                         "max_gradient_spread": reports["splitting"]["max_gradient_spread"],
                         "verdict": s["verdict"]})
    except MMOTError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out_dir.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    (out_dir / "sweep.csv").write_text(buf.getvalue())
    summary = {"name": base.name, "rows": rows,
               "m_trend": refinement_trend([r["m_observed"] for r in rows]),
               "tolerances": reports["summary"]["tolerances"] if rows else {}}
    (out_dir / "sweep.json").write_text(dumps(summary))
    for r in rows:
        print(" ".join(f"{c}={r[c]}" for c in SWEEP_COLUMNS))
    return EXIT_INCONSISTENT if any(r["verdict"] == "inconsistent" for r in rows) else EXIT_OK


def _resolutions(text):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad resolution list {text!r}")
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("resolutions must be positive integers")
    return vals


def build_parser():
    parser = argparse.ArgumentParser(prog="mmot", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a scenario file or every scenario in a directory")
    p_run.add_argument("scenario")
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--jobs", type=int, default=1)
    p_sweep = sub.add_parser("sweep", help="rerun a generator scenario across resolutions")
    p_sweep.add_argument("scenario")
    p_sweep.add_argument("--resolutions", type=_resolutions, required=True)
    p_sweep.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        if Path(args.scenario).is_dir():
            return run_dir(args.scenario, args.out, max(1, args.jobs))
        return run_file(args.scenario, args.out)
    return sweep(args.scenario, args.resolutions, args.out)


if __name__ == "__main__":
    sys.exit(main())
