"""Track a scenario with both methods and write results plus the comparison summary.

    python3 scripts/run_fleet.py data/fleet12_scenario.json --out out/fleet12
"""

import argparse
import time

from regnet.harness import compare, load_scenario, run_market, run_tracking, write_outputs


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("scenario")
    ap.add_argument("--out", default="out/fleet")
    ap.add_argument("--instants", type=int)
    a = ap.parse_args()

    scn = load_scenario(a.scenario)
    if a.instants is not None:
        scn.instants = a.instants
    t0 = time.perf_counter()
    market = run_market(scn)
    print(f"market cleared in {time.perf_counter() - t0:.1f} s; up price {market.up.clearing_price:.4g}, "
          f"down price {market.down.clearing_price:.4g}")
    results = {}
    for method in ("proposed", "current"):
        t0 = time.perf_counter()
        results[method] = run_tracking(scn, method, market)
        write_outputs(a.out, results[method])
        print(f"{method}: {time.perf_counter() - t0:.1f} s, total cost {results[method].total_cost:.6g}")
    print(compare(results["proposed"], results["current"]).summary(), end="")


if __name__ == "__main__":
    main()
