"""Command-line entry point: ``python3 -m regnet <subcommand> ...``.

Exit codes: 0 success, 1 usage or missing input, 2 domain error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import netgraph
from .abstraction import AbstractionConfig, MicrogridAbstraction, build_abstraction
from .coordination import Gains, dac_step
from .errors import RegnetError
from .harness import TrackingResult, compare, load_scenario, run_tracking, write_outputs
from .market import RegulationBid, clear_market, make_bid
from .netio import load_network

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _emit(text: str, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")


def _need_file(path, parser):
    if not Path(path).is_file():
        raise UsageError(f"{parser.format_usage()}{parser.prog}: error: no such file: {path}")


def _seed(arg):
    if arg is not None:
        return arg
    env = os.environ.get("REGNET_SEED")
    if env is None:
        return None
    try:
        return int(env)
    except ValueError as exc:
        raise UsageError(f"REGNET_SEED must be an integer, got {env!r}") from exc


def cmd_abstract(a, p):
    _need_file(a.network, p)
    b = load_network(a.network)
    cfg = AbstractionConfig(grid_size=a.grid)
    abs_ = build_abstraction(b.net, b.cost, b.loads, a.eps_prime, a.eps, cfg)
    _emit(_dump(abs_.to_json()), a.out)


def cmd_bid(a, p):
    _need_file(a.abstraction, p)
    abs_ = MicrogridAbstraction.from_json(json.loads(Path(a.abstraction).read_text(encoding="utf-8")))
    bid = make_bid(abs_, None, a.k, a.aggregator, a.market)
    _emit(_dump(bid.to_json()), a.out)


def _read_bids(path):
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    items = d if isinstance(d, list) else [d]
    return [RegulationBid.from_json(x) for x in items]


def cmd_clear(a, p):
    bids = []
    for f in a.bids:
        _need_file(f, p)
        bids.extend(_read_bids(f))
    markets = {b.market for b in bids}
    if len(markets) != 1:
        raise UsageError("all bids passed to one 'clear' call must be for the same market")
    _emit(_dump(clear_market(bids, a.requirement).to_json()), a.out)


def cmd_track(a, p):
    _need_file(a.scenario, p)
    scn = load_scenario(a.scenario, _seed(a.seed))
    if a.dt is not None:
        scn.dt = a.dt
    if any(v is not None for v in (a.mu, a.mu2, a.nu, a.beta)):
        g = scn.gains
        scn.gains = Gains(a.mu or g.mu, a.mu2 or g.mu2, a.nu or g.nu, a.beta or g.beta)
    if a.grid is not None:
        scn.grid_size = a.grid
    if a.instants is not None:
        scn.instants = a.instants
    out = Path(a.out)
    trace = out / "trace" if (a.method == "proposed" and scn.trace_stride) else None
    res = run_tracking(scn, a.method, trace_dir=trace)
    write_outputs(out, res)
    print(f"{a.method}: {res.t.size} instants, total cost {res.total_cost:.6f} -> {out}")


def cmd_compare(a, p):
    _need_file(a.a, p)
    _need_file(a.b, p)
    cmp = compare(TrackingResult.from_csv(a.a), TrackingResult.from_csv(a.b))
    text = cmp.summary()
    if a.out:
        out = Path(a.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.txt").write_text(text, encoding="utf-8")
        cmp.to_csv(out / "residuals.csv")
    sys.stdout.write(text)


def cmd_demo(a, p):
    if a.n < 1:
        raise UsageError("--n must be at least 1")
    g = {"ring": lambda n: netgraph.ring(n), "directed-ring": lambda n: netgraph.ring(n, directed=True),
         "complete": netgraph.complete, "ring-chords": netgraph.ring_with_chords}[a.topology](a.n)
    L = netgraph.laplacian(g)
    seed = _seed(a.seed)
    u = np.arange(a.n, dtype=float) if seed is None else np.random.default_rng(seed).uniform(-1, 1, a.n)
    z = np.zeros(a.n)
    v = np.zeros(a.n)
    zero = np.zeros(a.n)
    stride = max(1, a.steps // 100)
    rows = []
    for k in range(1, a.steps + 1):
        z, v = dac_step(z, v, u, zero, L, a.nu, a.beta, a.dt)
        if k % stride == 0 or k == a.steps:
            rows.append([k, k * a.dt, *z, float(np.max(np.abs(z - u.mean())))])
    buf = [",".join(["step", "t"] + [f"z_{i + 1}" for i in range(a.n)] + ["max_err"])]
    buf += [",".join(str(r[0]) if j == 0 else repr(float(r[j])) for j in range(len(r))) for r in rows]
    _emit("\n".join(buf) + "\n", a.out)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="regnet", description="Microgrid regulation abstraction, bidding and tracking.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    s = sub.add_parser("abstract", help="capacity, ramp and cost abstraction of a network")
    s.add_argument("network")
    s.add_argument("--eps-prime", type=float, default=0.1)
    s.add_argument("--eps", type=float, default=0.1)
    s.add_argument("--grid", type=int, default=101)
    s.add_argument("--out")
    s.set_defaults(func=cmd_abstract, parser=s)
    s = sub.add_parser("bid", help="regulation bid from an abstraction")
    s.add_argument("abstraction")
    s.add_argument("--k", type=float, default=1.0)
    s.add_argument("--market", choices=("up", "down"), default="up")
    s.add_argument("--aggregator", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_bid, parser=s)
    s = sub.add_parser("clear", help="merit-order clearing of bid files")
    s.add_argument("bids", nargs="+")
    s.add_argument("--requirement", type=float, required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_clear, parser=s)
    s = sub.add_parser("track", help="track a regulation signal over a scenario")
    s.add_argument("scenario")
    s.add_argument("--method", choices=("proposed", "current"), required=True)
    s.add_argument("--out", default="out")
    s.add_argument("--seed", type=int)
    s.add_argument("--dt", type=float)
    s.add_argument("--mu", type=float)
    s.add_argument("--mu2", type=float)
    s.add_argument("--nu", type=float)
    s.add_argument("--beta", type=float)
    s.add_argument("--grid", type=int)
    s.add_argument("--instants", type=int)
    s.set_defaults(func=cmd_track, parser=s)
    s = sub.add_parser("compare", help="compare two tracking results")
    s.add_argument("a")
    s.add_argument("b")
    s.add_argument("--out")
    s.set_defaults(func=cmd_compare, parser=s)
    s = sub.add_parser("demo-consensus", help="dynamic average consensus on constant inputs")
    s.add_argument("--n", type=int, default=5)
    s.add_argument("--topology", choices=("ring", "directed-ring", "complete", "ring-chords"), default="ring")
    s.add_argument("--steps", type=int, default=20000)
    s.add_argument("--dt", type=float, default=1e-3)
    s.add_argument("--nu", type=float, default=1.0)
    s.add_argument("--beta", type=float, default=1.0)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_demo, parser=s)
    return p


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
        args.func(args, args.parser)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except RegnetError as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return EXIT_DOMAIN
    except Exception as exc:  # noqa: BLE001
        sys.stderr.write(f"internal error: {type(exc).__name__}: {exc}\n")
        return EXIT_INTERNAL
    return EXIT_OK


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
