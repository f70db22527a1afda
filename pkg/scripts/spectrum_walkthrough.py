"""Walk a weighted self-similar measure through its multifractal toolkit.

Prints the structure function T(q), the alpha range, selected Legendre
spectrum values with their optimal measures, and compares the analytic
peak against a coarse box-mass spectrum estimated from samples.
"""

import argparse

import numpy as np

from fractdim.ifs import SimilarityIFS, sample_points, symbolic_dimension
from fractdim.measures import BernoulliMeasure
from fractdim.dimest import coarse_spectrum
from fractdim.multifractal import (
    SpectrumProblem,
    T_derivative,
    alpha_range,
    legendre,
    optimal_measure,
    solve_T,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--weights", type=float, nargs="+", default=[0.25, 0.75])
    ap.add_argument("--ratios", type=float, nargs="+", default=[1 / 3, 1 / 3])
    ap.add_argument("--count", type=int, default=1_000_000)
    ap.add_argument("--level", type=int, default=10, help="coarse scale = gamma^level")
    ap.add_argument("--seed", type=int, default=23)
    args = ap.parse_args()

    problem = SpectrumProblem(args.weights, args.ratios)
    lo, hi = alpha_range(problem)
    print(f"similarity dimension s0 = {problem.similarity_dim:.12f}")
    print(f"alpha range             = [{lo:.12f}, {hi:.12f}]")
    print(f"T(0) = s0 check         = {solve_T(problem, 0.0):.12f}")
    print(f"T(1)                    = {solve_T(problem, 1.0):+.3e}")
    print()

    print(f"{'q':>6} {'T(q)':>14} {'alpha(q)':>14}")
    for q in (-4.0, -2.0, -1.0, 0.0, 0.5, 1.0, 2.0, 4.0):
        t = solve_T(problem, q)
        print(f"{q:>6.1f} {t:>14.8f} {-T_derivative(problem, q):>14.8f}")
    print()

    ifs = SimilarityIFS(
        ratios=np.array(args.ratios),
        translations=np.linspace(0.0, 1.0, len(args.ratios))[:, None]
        * (1.0 - np.array(args.ratios)[:, None]),
    )
    print(f"{'alpha':>10} {'T*(alpha)':>12} {'dim mu_alpha':>14}  optimal weights")
    for frac in (0.15, 0.35, 0.5, 0.65, 0.85):
        alpha = lo + frac * (hi - lo)
        f = legendre(problem, alpha)
        mu = optimal_measure(problem, alpha)
        dim = symbolic_dimension(BernoulliMeasure(mu.p), ifs).value
        ws = " ".join(f"{w:.4f}" for w in mu.p)
        print(f"{alpha:>10.6f} {f:>12.8f} {dim:>14.8f}  ({ws})")
    print()

    gamma = max(args.ratios)
    scale = gamma**args.level
    measure = BernoulliMeasure(args.weights)
    cloud = sample_points(
        ifs, measure, args.count, tol=scale / 20.0, seed=args.seed
    )
    spec = coarse_spectrum(cloud, scale, delta=0.1)
    alpha0 = -T_derivative(problem, 0.0)
    print(f"coarse spectrum at r = {scale:.3e} ({spec.occupied} boxes):")
    print(f"  peak f      {spec.peak_f:.4f}   analytic s0      {problem.similarity_dim:.4f}")
    print(f"  peak alpha  {spec.peak_alpha:.4f}   analytic alpha0  {alpha0:.4f}")


if __name__ == "__main__":
    main()
