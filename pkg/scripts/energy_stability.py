"""Largest per-step GL energy increase of convex splitting against C.

Runs the dense-basis iteration on random graphs and reports, for each C,
the worst energy rise and how many runs overflowed. With eps = 0.01 and
dt = 0.1 the wells u = +-1 are unstable fixed points of the pointwise
update unless C is large enough, which shows up as a sharp threshold.
"""

import argparse

import numpy as np

from glmeasure.glsolver import SolverParams, SpectralState, convex_split_step, dense_basis, initialize
from glmeasure.graph import GraphParams, build_dense_graph, gl_energy, symmetric_laplacian


def worst_rise(seed, C, eps, dt, steps):
    rng = np.random.default_rng(seed)
    S = int(rng.integers(64, 257))
    Z = rng.uniform(size=(S, 3))
    G = build_dense_graph(Z, GraphParams(0.1))
    Ls = symmetric_laplacian(G)
    basis = dense_basis(Ls)
    labels = np.zeros(S)
    idx = rng.choice(S, size=max(2, S // 10), replace=False)
    labels[idx] = np.where(Z[idx, 0] > 0.5, 1.0, -1.0)
    p = SolverParams(epsilon=eps, C=C, dt=dt)
    U = initialize(labels)
    state = SpectralState(basis, U, basis.eigenvectors.T @ U)
    e = [gl_energy(U, G, labels, eps, Ls)]
    with np.errstate(all="ignore"):
        for _ in range(steps):
            state = convex_split_step(state, labels, p)
            e.append(gl_energy(state.U, G, labels, eps, Ls))
    e = np.array(e)
    if not np.all(np.isfinite(e)):
        return np.inf
    return float(np.max(np.diff(e)))


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--eps", type=float, default=0.01)
    ap.add_argument("--dt", type=float, default=0.1)
    ap.add_argument("--steps", type=int, default=100)
    ap.add_argument("--runs", type=int, default=20)
    ap.add_argument("--C", type=float, nargs="+", default=[25, 50, 75, 90, 101, 150, 201, 301])
    args = ap.parse_args()

    print(f"{'C':>6} {'max rise':>11} {'overflowed':>10}  amplification at u=+-1")
    for C in args.C:
        rises = [worst_rise(s, C, args.eps, args.dt, args.steps) for s in range(args.runs)]
        finite = [r for r in rises if np.isfinite(r)]
        amp = (1 - 2 * args.dt / args.eps + C * args.dt) / (1 + C * args.dt)
        top = max(finite) if finite else float("nan")
        print(f"{C:6g} {top:11.3e} {len(rises) - len(finite):6d}/{args.runs}  {amp:+.3f}")


if __name__ == "__main__":
    main()
