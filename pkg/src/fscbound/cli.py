"""Command-line front end.

Exit codes: 0 success, 2 validation error, 3 infeasible budget,
4 solver non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bsc import BscExample, closed_form_upper_bound
from .channel import bsc_emission, load_channel, prune, with_emission
from .cycles import DEFAULT_MAX_CYCLES, enumerate_cycles, gamma_min
from .dual import upper_bound
from .errors import ChannelSpecError, ConvergenceError, CycleLimitError, InfeasibleBudgetError
from .lower import optimize_lower_bound
from .sweep import SweepConfig, emit_plotdata, run_sweep, scale_rates

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_NOCONV = 0, 2, 3, 4


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _emit(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _rate_factor(args) -> float:
    return math.log(2.0) if args.log_base == "e" else 1.0


def _chain(args):
    ch = load_channel(args.channel)
    if getattr(args, "p", None) is not None:
        ch = with_emission(ch, bsc_emission(args.p))
    return prune(ch)


def cmd_validate(args) -> int:
    ch = load_channel(args.channel)
    chain = prune(ch)
    _emit(args, f"ok: {len(ch.states)} states, {len(ch.actions)} actions, {len(ch.outputs)} outputs, "
                f"{len(chain.edges)} pruned edges\n")
    return EXIT_OK


def cmd_prune(args) -> int:
    chain = _chain(args)
    rows = [("from", "to", "action", "cost")]
    for i, j in zip(*np.nonzero(chain.adjacency)):
        rows.append((chain.states[i], chain.states[j], chain.action[i][j], repr(float(chain.cost[i, j]))))
    _emit(args, _csv(rows))
    return EXIT_OK


def cmd_cycles(args) -> int:
    chain = _chain(args)
    cycles = enumerate_cycles(chain, max_cycles=args.max_cycles)
    rows = [("states", "length", "avg_cost")]
    rows += [(" ".join(c.states), c.length, repr(c.avg_cost)) for c in cycles]
    _emit(args, _csv(rows))
    return EXIT_OK


def cmd_ub(args) -> int:
    chain = _chain(args)
    cycles = enumerate_cycles(chain, max_cycles=args.max_cycles)
    res = upper_bound(chain, cycles, args.gamma, tol=args.tol)
    f = _rate_factor(args)
    lines = [
        f"value,{res.value * f!r}",
        f"gap,{res.gap_estimate!r}",
        f"iterations,{res.iterations}",
        f"gamma_min,{gamma_min(cycles)!r}",
    ]
    lines += [f"mu,{' '.join(c.states)},{float(m)!r}" for c, m in zip(cycles, res.mu.mu)]
    q = res.q.q
    ch_outputs = load_channel(args.channel).outputs
    for a, y1 in enumerate(ch_outputs):
        for b, y2 in enumerate(ch_outputs):
            lines.append(f"q,{y1},{y2},{float(q[a, b])!r}")
    _emit(args, "\n".join(lines) + "\n")
    if not res.converged:
        logging.error("solver stopped with gap %.3g", res.gap_estimate)
        return EXIT_NOCONV
    return EXIT_OK


def cmd_bsc_ub(args) -> int:
    costs = tuple(_floats(args.costs))
    if len(costs) != 3:
        raise ChannelSpecError("--costs needs three values k11,k21,k12")
    res = closed_form_upper_bound(BscExample(args.p, costs, args.gamma))
    f = _rate_factor(args)
    _emit(args, f"value,{res.value * f!r}\nmu,{float(res.mu.mu[0])!r}\na,{res.extra['a']!r}\nb,{res.extra['b']!r}\n")
    return EXIT_OK


def cmd_lb(args) -> int:
    chain = _chain(args)
    res = optimize_lower_bound(chain, args.gamma, n_sim=args.nsim, restarts=args.restarts,
                               seed=args.seed, workers=args.workers)
    f = _rate_factor(args)
    lines = [f"rate,{res.value * f!r}", f"std_error,{res.std_error * f!r}", f"avg_cost,{res.avg_cost!r}"]
    for i, j in zip(*np.nonzero(res.source)):
        lines.append(f"P,{chain.states[i]},{chain.states[j]},{float(res.source[i, j])!r}")
    _emit(args, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_sweep(args) -> int:
    g = _floats(args.gamma_range)
    if len(g) != 3:
        raise ChannelSpecError("--gamma-range needs min,max,steps")
    cfg = SweepConfig(
        channel=args.channel,
        p_values=tuple(_floats(args.p)) if args.p else None,
        gamma_range=(g[0], g[1], int(g[2])),
        n_sim=args.nsim,
        restarts=args.restarts,
        seed=args.seed,
        workers=args.workers,
        output=args.out,
    )
    rows = scale_rates(run_sweep(cfg), _rate_factor(args))
    out = Path(args.out or "sweep.csv")
    for path in emit_plotdata(rows, out):
        print(path)
    if any(r.status == "not-converged" for r in rows):
        return EXIT_NOCONV
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--channel", help="channel description file (YAML or JSON)")
    common.add_argument("--out", help="output file (default: stdout; sweep.csv for sweeps)")
    common.add_argument("--seed", type=int, default=0, help="master RNG seed")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--log-base", choices=("2", "e"), default="2", help="units of reported rates")
    common.add_argument("--max-cycles", type=int, default=DEFAULT_MAX_CYCLES)
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="fscbound", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("validate", parents=[common], help="parse and validate a channel file")
    p = sub.add_parser("prune", parents=[common], help="list the pruned edges")
    p.add_argument("--p", type=float, help="replace the emissions by a BSC with this crossover")
    p = sub.add_parser("cycles", parents=[common], help="list elementary cycles as CSV")
    p.add_argument("--p", type=float, help=argparse.SUPPRESS)

    p = sub.add_parser("ub", parents=[common], help="dual-capacity upper bound")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--p", type=float, help="replace the emissions by a BSC with this crossover")

    p = sub.add_parser("bsc-ub", parents=[common], help="closed-form bound for the two-state BSC example")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--costs", default="2,3,4", help="k(s1|s1),k(s2|s1),k(s1|s2)")

    for name, helptext in (("lb", "simulation lower bound"), ("sweep", "bounds over a budget grid")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--nsim", type=int, default=100_000)
        p.add_argument("--restarts", type=int, default=8)
        if name == "lb":
            p.add_argument("--gamma", type=float, required=True)
            p.add_argument("--p", type=float, help="replace the emissions by a BSC with this crossover")
        else:
            p.add_argument("--p", help="comma-separated crossover probabilities (BSC mode)")
            p.add_argument("--gamma-range", default="2,3.5,20", help="min,max,steps")
    return ap


COMMANDS = {
    "validate": cmd_validate,
    "prune": cmd_prune,
    "cycles": cmd_cycles,
    "ub": cmd_ub,
    "bsc-ub": cmd_bsc_ub,
    "lb": cmd_lb,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command != "bsc-ub" and not args.channel:
        print(f"error: {args.command} needs --channel", file=sys.stderr)
        return EXIT_INVALID
    try:
        return COMMANDS[args.command](args)
    except InfeasibleBudgetError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConvergenceError as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    except (ChannelSpecError, CycleLimitError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
