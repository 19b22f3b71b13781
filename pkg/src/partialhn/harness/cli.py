"""Command line: ``partialhn run`` and ``partialhn report``.

Exit codes: 0 success, 2 contract or config violation, 3 missing artifact.
"""

from __future__ import annotations

import argparse
import logging
import sys
import traceback
from pathlib import Path

from ..numerics import ContractError
from .config import OUTPUT_ROOT_ENV, load_config
from .reports import emit_compression_table, emit_memory_table, plot_cosine, plot_experience_over_time, plot_matrix
from .run import run

EXIT_CONTRACT = 2
EXIT_MISSING = 3


def origin(exc: BaseException) -> str:
    """``module.operation`` of the innermost package frame that raised ``exc``."""
    where = "partialhn"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        module = frame.f_globals.get("__name__", "")
        if module.startswith("partialhn."):
            where = f"{module.removeprefix('partialhn.')}.{frame.f_code.co_name}"
    return where


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="partialhn", description="Continual learning with partial hypernetworks.")
    p.add_argument("-q", "--quiet", action="store_true", help="only print errors")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser(
        "run",
        allow_abbrev=False,
        help="train a strategy through a stream",
        description=f"Any config key can be overridden with --key value. Output goes to out_dir, "
        f"or to ${OUTPUT_ROOT_ENV}/<run name> (default root: ./runs).",
    )
    r.add_argument("--config", type=Path, help="key=value config file")

    rep = sub.add_parser("report", help="build tables or plots from a run directory")
    rep.add_argument("kind", choices=("memory", "compression", "plot"))
    rep.add_argument("--in", dest="dirs", type=Path, action="append", required=True, help="run directory (repeatable for plot)")
    rep.add_argument("--out", type=Path, help="output file (default: inside the first run directory)")
    return p


def _report(kind: str, dirs: list[Path], out: Path | None) -> list[Path]:
    for d in dirs:
        if not (d / "config.txt").is_file():
            raise FileNotFoundError(f"{d} has no config.txt")
    first = dirs[0]
    if kind in ("memory", "compression"):
        cfg = load_config(first / "config.txt")
        target = out or first / f"{kind}_table.csv"
        (emit_memory_table if kind == "memory" else emit_compression_table)(cfg, target)
        return [target]
    written = []
    for d in dirs:
        if not (d / "accuracy_matrix.csv").is_file():
            raise FileNotFoundError(f"{d} has no accuracy_matrix.csv")
    if len(dirs) == 1:
        written.append(plot_matrix(first / "accuracy_matrix.csv", out))
        if (first / "steps.jsonl").is_file():
            cos = plot_cosine(first / "steps.jsonl")
            if cos is not None:
                written.append(cos)
    else:
        runs = {d.name: d / "accuracy_matrix.csv" for d in dirs}
        written.append(plot_experience_over_time(runs, out or first / "experience1_comparison.svg"))
    return written


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    args, rest = parser.parse_known_args(argv)
    if args.command == "report" and rest:
        parser.error(f"unrecognised arguments: {' '.join(rest)}")
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(message)s")
    try:
        if args.command == "run":
            cfg = load_config(args.config, rest)
            artifacts = run(cfg)
            print(artifacts.out_dir)
        else:
            for path in _report(args.kind, args.dirs, args.out):
                print(path)
    except ContractError as exc:
        print(f"error in {origin(exc)}: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except FileNotFoundError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    return 0


if __name__ == "__main__":
    sys.exit(main())
