"""Distance to the centralized optimum after integrating the distributed dynamics.

Sweeps gains and step sizes on the two-aggregator examples and on a
12-aggregator instance at the paper-scale gains, printing one row per run.
"""

import itertools

import numpy as np

from regnet import netgraph
from regnet.coordination import (PAPER_GAINS, CoordinationProblem, Gains, QuadraticCosts, SolveConfig,
                                 centralized_oracle, solve_instant)


def pair(a, x_r, lo=-10.0, hi=10.0, gains=PAPER_GAINS):
    return CoordinationProblem(QuadraticCosts(a), x_r, np.full(2, lo), np.full(2, hi), netgraph.ring(2), gains)


def run(prob, dt, max_steps=200_000):
    r = solve_instant(prob, SolveConfig(dt=dt, max_steps=max_steps, tol=1e-5))
    err = float(np.max(np.abs(r.x - centralized_oracle(prob))))
    return r, err


def main():
    print("case  mu  mu2  nu  dt  steps  converged  max|x - x*|")
    cases = {"sym": ([1.0, 1.0], 2.0, -10.0, 10.0), "asym": ([1.0, 2.0], 3.0, -10.0, 10.0),
             "box": ([1.0, 1.0], 2.0, 0.0, 0.5)}
    for (name, (a, x_r, lo, hi)), (mu, mu2, nu), dt in itertools.product(
            cases.items(), [(5, 7, 400), (5, 5.5, 400), (10, 11, 400)], [1e-3, 5e-4]):
        r, err = run(pair(a, x_r, lo, hi, Gains(mu, mu2, nu, nu)), dt)
        print(f"{name:5s} {mu:4g} {mu2:4g} {nu:4g} {dt:7.0e} {r.steps:7d} {r.converged!s:5s} {err:.3e}")

    rng = np.random.default_rng(707)
    a = rng.uniform(0.002, 0.008, 12)
    for label, g in (("ring+chords", netgraph.ring_with_chords(12)), ("directed ring", netgraph.ring(12, directed=True))):
        p = CoordinationProblem(QuadraticCosts(a), 20000.0, np.full(12, -25000.0), np.full(12, 25000.0), g)
        r, err = run(p, 1e-3, 20000)
        print(f"12 aggregators, {label}: steps {r.steps}, procured {r.x.sum():.2f} of 20000, max|x - x*| {err:.1f}")


if __name__ == "__main__":
    main()
