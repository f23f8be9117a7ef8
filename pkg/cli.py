"""
Command Line Interface

Thin adapters over the library. Text formats compose through pipes:

    kmerlimits generate --n 8 --m 2 --seed 7 | kmerlimits kmers --k 3
    kmerlimits kmers --k 5 --input sources.txt | kmerlimits solve --m 2 --n 14

Subcommands: generate, kmers, dump-graph, detect, solve, swap, bounds,
region, oracle.

EXIT CODES:
    0   success (solve: unique)
    1   solve: ambiguous
    2   solve: unknown (expansion cap reached)
    64  usage error
    65  data error (bad input, rejected parameters, nothing to report)
    70  internal invariant violated

Results go to stdout; logging goes to stderr. KMERLIMITS_LOG_LEVEL sets the
default level, --verbose switches to DEBUG.
"""

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from ambiguity import InvalidWitness, SWAPS, is_certificate
from core_model import (
    KmerSet,
    ParameterError,
    Params,
    SequenceFormatError,
    derive_params,
    derive_seed,
    extract_kmer_set,
    generate_sources,
    parse_sources,
)
from debruijn import StructureViolation, build_graph, dump_graph, label_multiplicities
from events import DETECTORS, EventKind
from experiment import ConfigError, ExperimentError, Measure, emit_csv, emit_svg_heatmap, load_config, run_grid
from reconstruct import Budget, PreconditionViolation, brute_force_oracle, enumerate_reconstructions
from theory import bounds_table, classify_region

VERSION = "0.1.0"

EXIT_OK = 0
EXIT_AMBIGUOUS = 1
EXIT_UNKNOWN = 2
EXIT_USAGE = 64
EXIT_DATA = 65
EXIT_INTERNAL = 70

LOG_LEVEL = os.environ.get("KMERLIMITS_LOG_LEVEL", "WARNING").upper()

logger = logging.getLogger("cli")


class CliArgumentParser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 64."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path, "r", encoding="utf-8") as f:
        return f.read()


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


# =============================================================================
# SUBCOMMANDS
# =============================================================================

def cmd_generate(args) -> int:
    if args.alpha is not None or args.beta is not None:
        if args.alpha is None or args.beta is None:
            raise ParameterError("--alpha and --beta go together")
        params = derive_params(args.n, args.alpha, args.beta)
    else:
        if args.m is None:
            raise ParameterError("either --m or --alpha/--beta is required")
        params = Params(n=args.n, m=args.m, k=2)
    sys.stdout.write(generate_sources(params, args.seed).to_text())
    return EXIT_OK


def cmd_kmers(args) -> int:
    sources = parse_sources(_read(args.input))
    sys.stdout.write(extract_kmer_set(sources, args.k).to_text())
    return EXIT_OK


def cmd_dump_graph(args) -> int:
    graph = build_graph(KmerSet.from_text(_read(args.input)))
    labels = None
    if args.m is not None:
        try:
            labels = label_multiplicities(graph, args.m)
        except StructureViolation as e:
            logger.warning(f"[Labeling] {e}")
    sys.stdout.write(dump_graph(graph, labels))
    return EXIT_OK


def cmd_detect(args) -> int:
    sources = parse_sources(_read(args.input))
    for name in args.events.split(","):
        try:
            kind = EventKind(name.strip().upper())
        except ValueError:
            raise ParameterError(f"unknown event {name!r}")
        witness = DETECTORS[kind](sources, args.k)
        if witness is None:
            record = {"kind": kind.value, "present": False}
        else:
            record = {**witness.to_dict(), "present": True}
        sys.stdout.write(json.dumps(record) + "\n")
    return EXIT_OK


def cmd_solve(args) -> int:
    y = KmerSet.from_text(_read(args.input))
    budget = Budget(max_solutions=args.max_solutions, max_expansions=args.max_expansions)
    result = enumerate_reconstructions(y, args.m, args.n, budget)

    blocks = ["".join(s + "\n" for s in sorted(solution.to_strings())) for solution in result.solutions]
    sys.stdout.write("\n".join(blocks))

    logger.info(f"[Solve] {len(result.solutions)} solution(s), {result.expansions} expansions, "
                f"stop={result.stop_reason.value}")
    if len(result.solutions) >= 2:
        return EXIT_AMBIGUOUS
    if not result.exhausted:
        return EXIT_UNKNOWN
    if not result.solutions:
        logger.error("[Solve] no source set produces this k-mer set")
        return EXIT_DATA
    return EXIT_OK


def cmd_swap(args) -> int:
    sources = parse_sources(_read(args.input))
    kind = EventKind(args.kind)
    witness = DETECTORS[kind](sources, args.k)
    if witness is None:
        logger.error(f"[Swap] no {kind.value} witness in the input")
        return EXIT_DATA
    alternative = SWAPS[kind](sources, witness, args.k)
    if not is_certificate(sources, alternative, args.k):
        logger.warning(f"[Swap] {witness.to_json()} reproduces the input multiset")
    sys.stderr.write(witness.to_json() + "\n")
    sys.stdout.write(alternative.to_text())
    return EXIT_OK


def cmd_bounds(args) -> int:
    if args.alpha is not None and args.beta is not None:
        params = derive_params(args.n, args.alpha, args.beta)
    elif args.m is not None and args.k is not None:
        params = Params(n=args.n, m=args.m, k=args.k)
    else:
        raise ParameterError("bounds needs --alpha/--beta or --m/--k")

    region = classify_region(params.effective_alpha, params.effective_beta)
    for name, value in bounds_table(params):
        sys.stdout.write(f"{name}\t{value:.6g}\n")
    sys.stdout.write(f"verdict\t{region.verdict.value}\n")
    sys.stdout.write(f"binding\t{region.binding_constraint}\n")
    sys.stdout.write(f"repeat_free\t{str(region.repeat_free).lower()}\n")
    return EXIT_OK


def cmd_region(args) -> int:
    config = load_config(args.config)
    if args.threads is not None:
        config.threads = args.threads
    reports = run_grid(config)
    _write(args.out_csv, emit_csv(reports))
    if args.out_svg:
        measure = Measure(args.measure) if args.measure else config.measures[0]
        _write(args.out_svg, emit_svg_heatmap(reports, measure))
    logger.info(f"[Region] wrote {len(reports)} cells to {args.out_csv}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    params = Params(n=args.n, m=args.m, k=args.k)
    agree = 0
    for t in range(args.instances):
        x = generate_sources(params, derive_seed(args.seed, t))
        y = extract_kmer_set(x, args.k)
        searched = set(enumerate_reconstructions(y, args.m, args.n, Budget.unbounded()).solutions)
        expected = set(brute_force_oracle(y, args.m, args.n))
        if searched == expected:
            agree += 1
        else:
            logger.error(f"[Oracle] instance {t} disagrees: {sorted(x.to_strings())}")
    sys.stdout.write(f"agreement {agree}/{args.instances}\n")
    return EXIT_OK if agree == args.instances else EXIT_INTERNAL


# =============================================================================
# PARSER
# =============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = CliArgumentParser(prog="kmerlimits", description="Multi-sequence reconstruction from (k+1)-mer sets")
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    parser.add_argument("--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="random source sequences")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("kmers", help="(k+1)-mer set of source sequences")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--input", default="-")
    p.set_defaults(handler=cmd_kmers)

    p = sub.add_parser("dump-graph", help="de Bruijn graph of a k-mer set")
    p.add_argument("--input", default="-")
    p.add_argument("--m", type=int, help="label multiplicities for m sources")
    p.set_defaults(handler=cmd_dump_graph)

    p = sub.add_parser("detect", help="repeat event witnesses as JSON lines")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--input", default="-")
    p.add_argument("--events", default="A,B,C,D,H")
    p.set_defaults(handler=cmd_detect)

    p = sub.add_parser("solve", help="enumerate source sets for a k-mer set")
    p.add_argument("--input", default="-")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--max-solutions", type=int, default=Budget().max_solutions)
    p.add_argument("--max-expansions", type=int, default=Budget().max_expansions)
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("swap", help="alternative source set from a D or H witness")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--kind", choices=["D", "H"], required=True)
    p.add_argument("--input", default="-")
    p.set_defaults(handler=cmd_swap)

    p = sub.add_parser("bounds", help="closed-form bounds for one parameter point")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--k", type=int)
    p.set_defaults(handler=cmd_bounds)

    p = sub.add_parser("region", help="Monte Carlo phase diagram")
    p.add_argument("--config", required=True)
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-svg")
    p.add_argument("--measure", help="measure drawn in the SVG (default: first configured)")
    p.add_argument("--threads", type=int)
    p.set_defaults(handler=cmd_region)

    p = sub.add_parser("oracle", help="cross-check the solver against brute force")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_oracle)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else getattr(logging, LOG_LEVEL, logging.WARNING),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )

    try:
        return args.handler(args)
    except (SequenceFormatError, ParameterError, ConfigError, PreconditionViolation,
            InvalidWitness, StructureViolation, OSError) as e:
        logger.error(f"[CLI] {args.command}: {e}")
        return EXIT_DATA
    except (AssertionError, ExperimentError) as e:
        logger.error(f"[CLI] internal error in {args.command}: {e}")
        return EXIT_INTERNAL
    except ValueError as e:
        logger.error(f"[CLI] {args.command}: {e}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
