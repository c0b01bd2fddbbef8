"""Command-line entry point.

Verbs:
  generate  build a synthetic cohort and write it to disk, nothing else
  run       execute a full experiment manifest into a run directory
  report    render result tables from one or more run directories
  ablate    replay the ablation suite against an existing run
  check     verify a run directory's stored metrics against its predictions

Remote credentials are read from an environment variable only (named in the
manifest, default CTGBENCH_API_KEY); there is no flag that accepts a key.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .errors import CtgBenchError
from .generate import generate_cohort
from .manifest import default_manifest, load_manifest
from .records import admit, save_cohort
from .report import render_report
from .runner import RunRecord, check_run, execute, rerun_ablations


def _load(args):
    if args.manifest is None:
        manifest = default_manifest()
    else:
        manifest = load_manifest(args.manifest)
    if args.seed is not None:
        manifest = replace(manifest, seeds=replace(manifest.seeds, global_seed=args.seed))
    if getattr(args, "out", None):
        manifest = replace(manifest, output_dir=str(args.out))
    return manifest


def _cmd_generate(args):
    manifest = _load(args)
    cohort = generate_cohort(manifest.cohort.generator_params(), manifest.cohort.n,
                             manifest.seeds.resolve("data"))
    out = Path(args.out or manifest.output_dir) / f"{manifest.name}-cohort"
    save_cohort(cohort, out)
    admitted = sum(1 for r in cohort if admit(r))
    print(f"wrote {len(cohort)} records ({admitted} admissible) to {out}")
    return 0


def _cmd_run(args):
    manifest = _load(args)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    record = execute(manifest, run_dir=args.run_dir, quiet=not args.verbose)
    print(f"run complete: {record.run_dir}")
    for model, conditions in record.metrics.items():
        for condition, entry in conditions.items():
            a = entry["auroc"]
            shown = "--" if a is None else f"{a:.3f}"
            print(f"  {model:24s} {condition:14s} auroc {shown}  acc {entry['accuracy']:.3f}")
    return 0


def _cmd_report(args):
    runs = [RunRecord.load(d) for d in args.run_dirs]
    doc = render_report(runs, fmt=args.format)
    if args.out:
        Path(args.out).write_text(doc)
        print(f"wrote {args.out}")
    else:
        print(doc, end="")
    return 0


def _cmd_ablate(args):
    manifest = None
    if args.manifest is not None:
        manifest = load_manifest(args.manifest)
    record = rerun_ablations(args.run_dir, manifest=manifest, quiet=not args.verbose)
    print(f"ablations updated: {record.run_dir}")
    return 0


def _cmd_check(args):
    problems = check_run(args.run_dir, tol=args.tol)
    if problems:
        for p in problems:
            print(f"FAIL {p}")
        return 1
    failed = Path(args.run_dir) / "FAILED.json"
    if failed.exists():
        info = json.loads(failed.read_text())
        print(f"FAIL run marked failed at stage {info.get('stage')}: {info.get('error')}")
        return 1
    print("ok: all stored metrics recompute from predictions")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="ctgbench",
                                     description="Synthetic cardiotocography outcome-classification benchmark.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_manifest_flags(p, with_out=True):
        p.add_argument("--manifest", "-m", default=None,
                       help="experiment manifest JSON (omit for the built-in desk default)")
        p.add_argument("--seed", type=int, default=None, help="override the manifest's global seed")
        if with_out:
            p.add_argument("--out", "-o", default=None, help="override the manifest's output directory")

    p = sub.add_parser("generate", help="generate a synthetic cohort and save it")
    add_manifest_flags(p)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("run", help="execute an experiment manifest")
    add_manifest_flags(p)
    p.add_argument("--run-dir", default=None, help="exact run directory (default: <output_dir>/<name>)")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel worker cap; execution is currently single-process, so this only validates")
    p.add_argument("--verbose", "-v", action="store_true", help="print per-stage progress")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("report", help="render tables from run directories")
    p.add_argument("run_dirs", nargs="+", help="one or more run directories")
    p.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    p.add_argument("--out", "-o", default=None, help="write to a file instead of stdout")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("ablate", help="re-run the ablation suite against an existing run")
    p.add_argument("--run-dir", required=True, help="run directory holding checkpoints and snapshot")
    p.add_argument("--manifest", "-m", default=None,
                   help="alternative manifest (default: the run's stored snapshot)")
    p.add_argument("--verbose", "-v", action="store_true")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("check", help="verify stored metrics against stored predictions")
    p.add_argument("run_dir", help="run directory to verify")
    p.add_argument("--tol", type=float, default=1e-12)
    p.set_defaults(func=_cmd_check)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CtgBenchError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
