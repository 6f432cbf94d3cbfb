"""Command-line interface.

Exit status: 0 for YES / CLOSE / true, 1 for NO / FAR / false, 2 for invalid
input, 3 when an internal invariant is violated.
"""
from __future__ import annotations

import argparse
import io
import os
import sys
from fractions import Fraction
from typing import Sequence, TextIO

import numpy as np

from . import core, generators
from .core import DecayParams, ProfileFormatError, Tolerances, as_rational
from .sampling import derive_seed
from .spacesaving import CounterTable
from .tester import TesterParams, Verdict, test_marginals, test_reference, test_two_streams

SEED_ENV = "FREQTEST_SEED"
EXIT_YES, EXIT_NO, EXIT_INPUT, EXIT_INVARIANT = 0, 1, 2, 3
MAX_ID = (1 << 64) - 1
CSV_HEADER = "row,seed,answer,failing_level,failing_z,yes_rate"


class InputError(ValueError):
    """Malformed input; reported with exit status 2."""


class InvariantViolation(RuntimeError):
    """An internal consistency check failed; exit status 3."""


# --- file formats -------------------------------------------------------------

def _parse_id(token: str, lineno: int) -> int:
    if not token.isdigit():
        raise InputError(f"line {lineno}: expected a decimal element id, got {token!r}")
    value = int(token)
    if value > MAX_ID:
        raise InputError(f"line {lineno}: element id {value} exceeds 64 bits")
    return value


def parse_stream(lines, tuples: bool = False):
    """One id per line, or comma-separated ids per line when ``tuples``."""
    out = []
    width = None
    for lineno, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text:
            continue
        if tuples:
            row = tuple(_parse_id(tok.strip(), lineno) for tok in text.split(","))
            if width is not None and len(row) != width:
                raise InputError(f"line {lineno}: expected {width} coordinates, got {len(row)}")
            width = len(row)
            out.append(row)
        else:
            out.append(_parse_id(text, lineno))
    return out if tuples else np.array(out, dtype=np.uint64)


def _open(path: str) -> TextIO:
    if path == "-":
        return sys.stdin
    try:
        return open(path, encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def read_stream(path: str, tuples: bool = False):
    fh = _open(path)
    try:
        return parse_stream(fh, tuples=tuples)
    except InputError as exc:
        raise InputError(f"{path}: {exc}") from None
    finally:
        if fh is not sys.stdin:
            fh.close()


def read_profile(path: str) -> core.FrequencyFunction:
    fh = _open(path)
    try:
        return core.parse_profile(fh)
    except ProfileFormatError as exc:
        raise InputError(f"{path}: {exc}") from None
    finally:
        if fh is not sys.stdin:
            fh.close()


def format_stream(stream) -> str:
    return "".join(f"{int(e)}\n" for e in stream)


# --- argument handling ----------------------------------------------------------

def _rational(text: str) -> Fraction:
    try:
        return as_rational(text)
    except (ValueError, TypeError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None


def _divisor(text: str) -> float | str:
    if text == "concentrated":
        return text
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'concentrated', got {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError("B must be positive")
    return value


def _coords(text: str) -> list[int]:
    try:
        coords = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated indices, got {text!r}") from None
    if not coords or min(coords) < 0:
        raise argparse.ArgumentTypeError(f"expected non-negative indices, got {text!r}")
    return coords


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise InputError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _add_tolerances(p: argparse.ArgumentParser, eps1: str = "0.3", eps2: str = "0.1") -> None:
    p.add_argument("--eps1", type=_rational, default=_rational(eps1), help="rank tolerance")
    p.add_argument("--eps2", type=_rational, default=_rational(eps2), help="count tolerance")


def _add_tester_flags(p: argparse.ArgumentParser) -> None:
    _add_tolerances(p)
    p.add_argument("--delta", type=_rational, default=Fraction(1, 10))
    p.add_argument("--gamma1", type=_rational, default=Fraction(2))
    p.add_argument("--gamma2", type=_rational, default=Fraction(5, 2))
    p.add_argument("--seed", type=int, default=None,
                   help=f"master seed (default: ${SEED_ENV} or 0)")
    p.add_argument("--B", type=_divisor, default=None,
                   help="sampling divisor: a number or 'concentrated'")
    p.add_argument("--k-mult", type=float, default=1.0, help="table size multiplier")
    p.add_argument("--n", type=int, default=None, help="declared universe size")
    p.add_argument("--explain", action="store_true", help="print the level schedule")
    p.add_argument("--out", default=None, help="write the report here instead of stdout")


def _params(args) -> TesterParams:
    seed = args.seed if args.seed is not None else _default_seed()
    try:
        return TesterParams(tol=Tolerances(args.eps1, args.eps2), delta=args.delta,
                            decay=DecayParams(args.gamma1, args.gamma2), B=args.B,
                            k_mult=args.k_mult, seed=seed)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="freqtest",
        description="Test stream frequency profiles under the relative Frechet distance.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test-ref", help="stream against a reference profile")
    p.add_argument("--stream", required=True, help="stream file, one id per line ('-' = stdin)")
    p.add_argument("--reference", required=True, help="profile file, one count per line")
    p.add_argument("--preflight", action="store_true",
                   help="also report whether the reference is half-stable and decreasing")
    _add_tester_flags(p)

    p = sub.add_parser("test-two", help="two streams against each other")
    p.add_argument("--stream", required=True)
    p.add_argument("--stream2", required=True)
    p.add_argument("--swap", action="store_true", help="use stream 2 as the reference side")
    _add_tester_flags(p)

    p = sub.add_parser("test-marginals", help="two projections of a tuple stream")
    p.add_argument("--stream", required=True, help="comma-separated tuples, one per line")
    p.add_argument("--proj1", type=_coords, required=True, help="0-based coordinates, e.g. 0,1")
    p.add_argument("--proj2", type=_coords, required=True)
    p.add_argument("--swap", action="store_true")
    _add_tester_flags(p)

    p = sub.add_parser("gen", help="generate profiles, streams and fixtures")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--dist", choices=["zipf", "uniform", "geometric"])
    src.add_argument("--reference", help="profile file to turn into a stream")
    src.add_argument("--fixture", choices=["index", "doublejump", "f0"])
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--N", type=int, default=100000)
    p.add_argument("--alpha", type=float, default=1.5)
    p.add_argument("--x", default=None, help="bit string for --fixture")
    p.add_argument("--y", type=int, default=None, help="index for --fixture")
    p.add_argument("--emit", choices=["stream", "profile"], default="stream")
    p.add_argument("--ordering", choices=list(generators.ORDERINGS), default="shuffled")
    p.add_argument("--far", action="store_true",
                   help="perturb the profile until it is far at (eps1, eps2)")
    _add_tolerances(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("oracle", help="exact checks on profiles")
    p.add_argument("check", choices=["frechet", "rectangle", "half-stable", "partition",
                                     "decreasing", "table"])
    p.add_argument("files", nargs="*", help="profile file(s); a stream file for 'table'")
    _add_tolerances(p)
    p.add_argument("--gamma1", type=_rational, default=Fraction(2))
    p.add_argument("--gamma2", type=_rational, default=Fraction(5, 2))
    p.add_argument("--K", type=int, default=16, help="table capacity for 'table'")
    p.add_argument("--out", default=None)

    p = sub.add_parser("experiment", help="repeat a tester over derived seeds, CSV out")
    p.add_argument("--reference", required=True, help="reference profile")
    p.add_argument("--profile", default=None,
                   help="profile the trial streams are drawn from (default: the reference)")
    p.add_argument("--mode", choices=["ref", "two"], default="ref",
                   help="'two' compares a reshuffled, relabelled stream of --reference "
                        "with a stream of --profile")
    p.add_argument("--trials", type=int, default=100)
    _add_tester_flags(p)
    return parser


# --- commands -------------------------------------------------------------------

def _check_verdict(verdict: Verdict) -> None:
    if (verdict.answer == "NO") != (verdict.failing_level is not None):
        raise InvariantViolation("NO verdict without a failing level (or the reverse)")
    if not verdict.corrector.is_monotone():
        raise InvariantViolation("corrector is not monotone")


def _report(verdict: Verdict, args) -> tuple[str, int]:
    _check_verdict(verdict)
    text = (verdict.schedule.explain() if args.explain else "") + verdict.render()
    return text, EXIT_YES if verdict.yes else EXIT_NO


def _preflight(f: core.FrequencyFunction, params: TesterParams) -> str:
    """Hypothesis checks on the reference; informational only."""
    stable = core.is_half_stable(f, params.tol)
    decreasing = core.is_decreasing(f, params.decay)
    return (f"preflight_half_stable={str(stable).lower()}\n"
            f"preflight_decreasing={str(decreasing).lower()}\n")


def _run_tester(args) -> tuple[str, int]:
    params = _params(args)
    try:
        if args.command == "test-ref":
            f = read_profile(args.reference)
            stream = read_stream(args.stream)
            verdict = test_reference(stream, f, params, n=args.n)
            if args.preflight:
                text, status = _report(verdict, args)
                return _preflight(f, params) + text, status
        elif args.command == "test-two":
            verdict = test_two_streams(read_stream(args.stream), read_stream(args.stream2),
                                       params, n=args.n, swap=args.swap)
        else:
            verdict = test_marginals(read_stream(args.stream, tuples=True), args.proj1,
                                     args.proj2, params, n=args.n, swap=args.swap)
    except InputError:
        raise
    except ValueError as exc:
        raise InputError(str(exc)) from None
    return _report(verdict, args)


def _run_gen(args) -> tuple[str, int]:
    seed = args.seed if args.seed is not None else _default_seed()
    try:
        if args.fixture:
            if args.fixture == "f0":
                return core.dump_profile(generators.f0_profile(args.n)), EXIT_YES
            if args.x is None or args.y is None:
                raise InputError("--fixture needs --x and --y")
            make = (generators.index_reduction_stream if args.fixture == "index"
                    else generators.double_jump_stream)
            stream = make(args.x, args.y)
            if args.emit == "profile":
                return core.dump_profile(core.frequency_of_stream(stream.tolist())), EXIT_YES
            return format_stream(stream), EXIT_YES
        if args.reference:
            profile = read_profile(args.reference)
        elif args.dist == "zipf":
            profile = generators.zipf_profile(args.n, args.N, args.alpha)
        elif args.dist == "uniform":
            profile = generators.uniform_profile(args.n, args.N)
        else:
            profile = generators.geometric_profile(args.n, args.N)
        header = ""
        if args.far:
            far = generators.perturb_far(profile, Tolerances(args.eps1, args.eps2))
            profile = far.profile
            header = "".join(f"# {line}\n" for line in far.transcript)
        if args.emit == "profile":
            return header + core.dump_profile(profile), EXIT_YES
        spec = generators.StreamSpec(profile, args.ordering, seed)
        return format_stream(generators.stream_from_profile(spec)), EXIT_YES
    except InputError:
        raise
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _need(files: Sequence[str], k: int, check: str) -> None:
    if len(files) != k:
        raise InputError(f"oracle {check} takes {k} file(s), got {len(files)}")


def _run_oracle(args) -> tuple[str, int]:
    tol = Tolerances(args.eps1, args.eps2)
    check = args.check
    out = io.StringIO()
    if check == "table":
        _need(args.files, 1, check)
        if args.K < 1:
            raise InputError("--K must be positive")
        stream = read_stream(args.files[0])
        table = CounterTable(args.K)
        table.extend(stream)
        exact = dict(core.ranked_elements(stream.tolist()))
        out.write(f"K={args.K}\nN={table.items_processed}\nc_K={table.min_counter()}\n")
        out.write("entries=element_id counter error exact\n")
        ok = True
        for entry in table.entries():
            occ = exact.get(entry.element, 0)
            ok &= entry.counter - entry.error <= occ <= entry.counter
            out.write(f"{entry.element} {entry.counter} {entry.error} {occ}\n")
        if not ok:
            raise InvariantViolation("a counter does not bracket the exact count")
        return out.getvalue(), EXIT_YES
    if check in ("frechet", "rectangle"):
        _need(args.files, 2, check)
        f, g = read_profile(args.files[0]), read_profile(args.files[1])
        if check == "frechet":
            coupling = core.find_coupling(f, g, tol)
            close = core.frechet_close(f, g, tol)
            if close != (coupling is not None):
                raise InvariantViolation("closeness and coupling search disagree")
            out.write(f"result={'CLOSE' if close else 'FAR'}\n")
            if coupling is not None:
                out.write("coupling=" + " ".join(f"{a}:{b}" for a, b in coupling) + "\n")
            else:
                rect = core.find_separating_rectangle(f, g, tol)
                out.write(f"rectangle={_fmt_rect(rect)}\n")
            return out.getvalue(), EXIT_YES if close else EXIT_NO
        rect = core.find_separating_rectangle(f, g, tol)
        out.write(f"rectangle={_fmt_rect(rect)}\n")
        if rect is not None:
            out.write(f"below={core.separation_side(f, g, rect)}\n")
        return out.getvalue(), EXIT_YES if rect is not None else EXIT_NO
    _need(args.files, 1, check)
    f = read_profile(args.files[0])
    if check == "half-stable":
        ok = core.is_half_stable(f, tol)
        out.write(f"half_stable={str(ok).lower()}\n")
    elif check == "partition":
        part = core.interval_partition(f, tol)
        ok = part is not None
        out.write("intervals=" + ("ABSENT" if part is None else
                                  " ".join(f"{lo}-{hi}" for lo, hi in part)) + "\n")
    else:
        ok = core.is_decreasing(f, DecayParams(args.gamma1, args.gamma2))
        out.write(f"decreasing={str(ok).lower()}\n")
    return out.getvalue(), EXIT_YES if ok else EXIT_NO


def _fmt_rect(rect) -> str:
    if rect is None:
        return "ABSENT"
    return f"x={rect.x} y={rect.y} eps1={rect.eps1} eps2={rect.eps2}"


def run_experiment(reference: core.FrequencyFunction, profile: core.FrequencyFunction,
                   params: TesterParams, trials: int, mode: str = "ref") -> str:
    """CSV: one row per trial plus an aggregate row with the exact YES fraction."""
    rows = [CSV_HEADER]
    yes = 0
    n = max(reference.n, profile.n)
    for trial in range(trials):
        seed = derive_seed(params.seed, trial)
        trial_params = params.with_seed(seed)
        if mode == "ref":
            stream = generators.stream_from_profile(generators.StreamSpec(profile, "shuffled", seed))
            verdict = test_reference(stream, reference, trial_params, n=n)
        else:
            ids = generators.random_ids(reference.n, derive_seed(seed, 1))
            s1 = generators.stream_from_profile(
                generators.StreamSpec(reference, "shuffled", derive_seed(seed, 2), ids))
            s2 = generators.stream_from_profile(
                generators.StreamSpec(profile, "shuffled", derive_seed(seed, 3)))
            verdict = test_two_streams(s1, s2, trial_params, n=n)
        _check_verdict(verdict)
        yes += verdict.yes
        fail = verdict.failure
        rows.append(f"{trial},{seed},{verdict.answer},"
                    f"{'' if fail is None else fail.i},{'' if fail is None else fail.z},")
    rows.append(f"aggregate,{params.seed},,,,{yes}/{trials}")
    return "\n".join(rows) + "\n"


def _run_experiment(args) -> tuple[str, int]:
    if args.trials < 1:
        raise InputError("--trials must be positive")
    params = _params(args)
    reference = read_profile(args.reference)
    profile = read_profile(args.profile) if args.profile else reference
    try:
        text = run_experiment(reference, profile, params, args.trials, args.mode)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    return text, EXIT_YES


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors (status 2) and --help (status 0)
        return int(exc.code or 0)
    try:
        if args.command in ("test-ref", "test-two", "test-marginals"):
            text, status = _run_tester(args)
        elif args.command == "gen":
            text, status = _run_gen(args)
        elif args.command == "oracle":
            text, status = _run_oracle(args)
        else:
            text, status = _run_experiment(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
