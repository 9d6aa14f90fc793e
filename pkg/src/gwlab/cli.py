"""Command-line front end.

Offspring-law syntax for ``--nu`` (whitespace is ignored)::

    law    := pairs | "poisson(" RATE ")" | "geometric(" P ")" | "delta(" K ")"
    pairs  := K ":" PROB ("," K ":" PROB)*

``K`` is a non-negative integer, probabilities must sum to 1 within 1e-12.
``geometric(p)`` has support {0, 1, ...} with P(k) = (1-p)^k p.

Exit codes: 0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import re
import sys

from . import analysis, couplings, exact
from .chain import ChainConfig, batch_simulate
from .rng import derive_seed
from .offspring import DEFAULT_CAP, OffspringLaw, delta, geometric, mean, poisson, two_point

_CALL = re.compile(r"^(poisson|geometric|delta)\((.*)\)$")


class LawSyntaxError(ValueError):
    pass


def parse_law(text: str) -> OffspringLaw:
    """Parse the ``--nu`` grammar into an OffspringLaw."""
    s = re.sub(r"\s+", "", text)
    if not s:
        raise LawSyntaxError("empty law")
    call = _CALL.match(s)
    try:
        if call:
            name, arg = call.groups()
            if name == "delta":
                k = int(arg)
                if k < 0:
                    raise LawSyntaxError("delta(k) needs k >= 0")
                return delta(k)
            value = float(arg)
            return poisson(value) if name == "poisson" else geometric(value)
        masses = {}
        for item in s.split(","):
            k_text, sep, p_text = item.partition(":")
            if not sep:
                raise LawSyntaxError(f"expected 'value:prob', got {item!r}")
            k = int(k_text)
            if k in masses:
                raise LawSyntaxError(f"support point {k} given twice")
            masses[k] = float(p_text)
    except LawSyntaxError:
        raise
    except ValueError as exc:
        raise LawSyntaxError(f"cannot parse {text!r}: {exc}") from None
    if any(p < 0 for p in masses.values()) or min(masses) < 0:
        raise LawSyntaxError("values and probabilities must be non-negative")
    total = sum(masses.values())
    if abs(total - 1.0) > 1e-12:
        raise LawSyntaxError(f"mass ≠ 1 (total {total!r})")
    return OffspringLaw.from_dict(masses)


def _law_arg(text: str) -> OffspringLaw:
    try:
        return parse_law(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _open_out(args):
    if args.out in (None, "-"):
        return sys.stdout, False
    return open(args.out, "w", newline=""), True


def _emit_rows(args, header, rows, summary: dict) -> None:
    fh, close = _open_out(args)
    try:
        if args.format == "json":
            summary = dict(summary, columns=list(header), rows=[list(r) for r in rows])
            fh.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        else:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
    finally:
        if close:
            fh.close()
    if args.format == "json":
        return
    # CSV output always comes with a JSON summary: --summary, a sidecar file, or stderr
    text = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    summary_path = getattr(args, "summary", None)
    if not summary_path and close:
        summary_path = args.out + ".summary.json"
    if summary_path:
        with open(summary_path, "w") as fh:
            fh.write(text)
    else:
        sys.stderr.write(text)


def _emit_json(args, payload: dict) -> None:
    fh, close = _open_out(args)
    try:
        fh.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    finally:
        if close:
            fh.close()


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    summary = {
        "command": "simulate",
        "law": analysis._law_tag(args.nu),
        "initial": args.init,
        "seed": args.seed,
    }
    if args.exact:
        m = mean(args.nu)
        curve = exact.extinction_curve(args.init, args.nu, args.horizon, args.cap)
        rows = [(t, 1.0 - b.value, args.init * m**t) for t, b in enumerate(curve)]
        summary["mode"] = "exact"
    else:
        cfg = ChainConfig(args.nu, args.init, args.horizon, seed=args.seed)
        stats = batch_simulate(cfg, args.runs, workers=args.threads)
        rows = [(t, stats.survival_fraction(t), stats.mean_pop(t)) for t in range(args.horizon + 1)]
        summary.update(mode="monte-carlo", stats=stats.to_dict())
    _emit_rows(args, ("t", "alive_fraction", "mean_pop"), rows, summary)
    return 0


def cmd_extinction(args) -> int:
    q = exact.extinction_probability(args.nu)
    rows = [
        (t, b.value, b.upper, b.tail)
        for t, b in enumerate(exact.extinction_curve(args.init, args.nu, args.horizon, args.cap))
    ]
    summary = {
        "command": "extinction",
        "law": analysis._law_tag(args.nu),
        "q": q,
        "q_powers": {str(n): q**n for n in range(1, args.init + 1)},
        "initial": args.init,
        "cap": args.cap,
    }
    if args.format == "text":
        print(f"q = {q:.6f}")
        for n in range(1, args.init + 1):
            print(f"q^{n} = {q**n:.17g}")
        print("t  P(tau<=t)  upper  tail_mass")
        for t, lo, hi, tail in rows:
            print(f"{t}  {lo:.17g}  {hi:.17g}  {tail:.3g}")
        return 0
    _emit_rows(args, ("t", "extinct_by_t", "extinct_by_t_upper", "tail_mass"), rows, summary)
    return 0


def cmd_criterion(args) -> int:
    if args.nu.mass_at(0) <= 0:
        print("warning: offspring law has no mass at 0; the criterion's hypothesis fails", file=sys.stderr)
    mode = "exact" if args.exact else args.mode
    cert = analysis.criterion_search(
        args.nu, args.nmax, args.tmax, args.runs, args.confidence, args.seed, mode, args.cap, args.threads
    )
    if args.format == "json":
        _emit_json(args, cert.to_dict())
        return 0
    p = cert.parameters
    how = "exact lower bound" if p["mode"] == "exact" else f"lower confidence bound ({args.confidence})"
    if cert.passed:
        print(f"witness N={p['N']} T={p['T']}: P^N(Y_T >= 2N) >= {cert.bound_value:.17g} ({how})")
    else:
        top = cert.provenance.get("max_upper", cert.provenance.get("max_estimate"))
        rel = "<=" if top <= 0.5 else ">"
        print(f"no witness <= ({args.nmax},{args.tmax}); max value {top:.17g} {rel} 0.5")
    return 0


def cmd_certificate(args) -> int:
    k = args.kind
    if k == "supercritical":
        cert = analysis.supercritical_certificate(args.nu, args.a, args.n, args.cap)
    elif k == "subcritical":
        cert = analysis.subcritical_decay_check(args.nu, args.init, args.horizon, args.cap)
    elif k == "lemma1":
        cert = analysis.lemma1_rate(args.nu, args.N, args.a, args.cap)
    elif k == "markov":
        cert = analysis.critical_markov_bound(args.nu, args.N, args.T, args.cap)
    else:
        cert = analysis.thinning_pipeline(args.nu, args.N, args.T, args.M, args.p, args.runs, args.seed, args.cap)
    _emit_json(args, cert.to_dict())
    return 0


def cmd_couple(args) -> int:
    summary = {"command": "couple", "construction": args.construction, "law": analysis._law_tag(args.nu),
               "runs": args.runs, "seed": args.seed, "horizon": args.horizon}
    violations = 0
    identical = 0
    lower_alive = 0
    example = None
    for i in range(args.runs):
        s = derive_seed(args.seed, i)
        try:
            if args.construction == "superposition":
                x, y, tot = couplings.couple_superposition(args.nu, args.horizon, s)
                path = {"x": x.sizes, "y": y.sizes, "sum": tot.sizes}
                alive = tot.tau is None
            else:
                if args.construction == "block":
                    cp = couplings.couple_block_minorant(args.nu, args.N, args.a, args.horizon, s)
                elif args.construction == "thinning":
                    cp = couplings.couple_thinning(args.nu, args.p, args.N, args.horizon, s)
                    identical += bool(cp.identical)
                else:
                    cp = couplings.couple_truncation(args.nu, args.M, args.horizon, s, args.init)
                path = {"upper": cp.upper.sizes, "lower": cp.lower.sizes, "relation": cp.relation}
                alive = cp.lower.tau is None
        except exact.InvariantViolation:
            violations += 1
            continue
        lower_alive += alive
        if example is None:
            example = dict(path, seed=s)
    summary.update({"violations": violations, "lower_alive_fraction": lower_alive / args.runs, "first_path": example})
    if args.construction == "thinning":
        summary["identical_fraction"] = identical / args.runs
    _emit_json(args, summary)
    return 1 if violations else 0


def _grid(lo: float, hi: float, step: float) -> list[float]:
    if step <= 0 or hi < lo:
        raise argparse.ArgumentTypeError("empty parameter range")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + j * step, 12) for j in range(n)]


def _family(name: str, m: float) -> OffspringLaw:
    if name == "two-point":
        if not 0 <= m <= 2:
            raise ValueError("two-point family needs 0 <= m <= 2")
        return two_point(1.0 - m / 2.0)
    if name == "poisson":
        return poisson(m)
    return geometric(1.0 / (1.0 + m))


def cmd_sweep(args) -> int:
    ms = _grid(args.m_min, args.m_max, args.m_step)
    laws = [(m, _family(args.family, m)) for m in ms]
    if args.exact:
        rows = []
        for m, law in laws:
            b = exact.extinction_by(1, law, args.horizon, args.cap)
            rows.append((m, 1.0 - b.value, 1.0 - b.upper, 1.0 - b.value))
    else:
        rows = analysis.survival_sweep(laws, args.horizon, args.runs, args.seed, args.confidence, args.threads)
    summary = {"command": "sweep", "family": args.family, "horizon": args.horizon, "runs": args.runs,
               "seed": args.seed, "confidence": args.confidence,
               "law_means": [mean(law) for _, law in laws]}
    _emit_rows(args, ("m", "survival_estimate", "ci_low", "ci_high"), rows, summary)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _default_seed() -> int:
    env = os.environ.get("GWLAB_SEED")
    try:
        return int(env) if env else 0
    except ValueError:
        return 0


def _add_common(p: argparse.ArgumentParser, with_nu: bool = True) -> None:
    if with_nu:
        p.add_argument("--nu", type=_law_arg, required=True, help="offspring law (see grammar below)")
    p.add_argument("--init", type=int, default=1, help="initial population size")
    p.add_argument("--horizon", type=int, default=50)
    p.add_argument("--runs", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=_default_seed(), help="master seed (env GWLAB_SEED)")
    p.add_argument("--threads", type=int, default=1, help="worker processes for Monte Carlo")
    p.add_argument("--cap", type=int, default=DEFAULT_CAP, help="support cap for exact laws")
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--exact", action="store_true", help="force exact (oracle) mode where available")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gwlab",
        description="Galton-Watson simulation, exact laws and survival certificates.",
        epilog=__doc__.split("\n\n", 1)[1],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Monte Carlo survival curve")
    _add_common(p)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--summary", help="write the JSON summary here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("extinction", help="extinction probability and P(tau <= t)")
    _add_common(p)
    p.add_argument("--format", choices=("text", "csv", "json"), default="text")
    p.set_defaults(func=cmd_extinction)

    p = sub.add_parser("criterion", help="search (N, T) with P^N(Y_T >= 2N) > 1/2")
    _add_common(p)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--nmax", type=int, default=64)
    p.add_argument("--tmax", type=int, default=64)
    p.add_argument("--confidence", type=float, default=0.99)
    p.add_argument("--mode", choices=("auto", "exact", "mc"), default="auto")
    p.set_defaults(func=cmd_criterion, cap=analysis.CRITERION_CAP)

    p = sub.add_parser("certificate", help="emit a JSON certificate")
    _add_common(p)
    p.add_argument("--kind", choices=("supercritical", "subcritical", "lemma1", "markov", "thinning"), required=True)
    p.add_argument("--a", type=float, default=2.0)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--N", type=int, default=1)
    p.add_argument("--T", type=int, default=1)
    p.add_argument("--M", type=int, default=16)
    p.add_argument("--p", type=float, default=0.9)
    p.add_argument("--format", choices=("json",), default="json")
    p.set_defaults(func=cmd_certificate)

    p = sub.add_parser("couple", help="run a coupling over many seeds")
    _add_common(p)
    p.add_argument("--construction", choices=("superposition", "block", "thinning", "truncation"), required=True)
    p.add_argument("--N", type=int, default=1)
    p.add_argument("--a", type=int, default=2)
    p.add_argument("--p", type=float, default=0.9)
    p.add_argument("--M", type=int, default=2)
    p.add_argument("--format", choices=("json",), default="json")
    p.set_defaults(func=cmd_couple)

    p = sub.add_parser("sweep", help="survival estimates across a mean-parameterised family")
    _add_common(p, with_nu=False)
    p.add_argument("--family", choices=("two-point", "poisson", "geometric"), default="two-point")
    p.add_argument("--m-min", type=float, default=0.5)
    p.add_argument("--m-max", type=float, default=1.5)
    p.add_argument("--m-step", type=float, default=0.05)
    p.add_argument("--confidence", type=float, default=0.95)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--summary", help="write the JSON summary here")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "sweep":
        try:
            _grid(args.m_min, args.m_max, args.m_step)
        except argparse.ArgumentTypeError as exc:
            parser.error(str(exc))
    try:
        return args.func(args)
    except (ValueError, ArithmeticError, RuntimeError, AssertionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
