"""GL and MBO accuracy on 64x64 two-class images over seeds and noise levels.

    python3 scripts/segmentation_accuracy.py --seeds 5 --noise 0 0.05 0.1
"""

import argparse
import time
import warnings

import numpy as np

from glmeasure.features import combined_features
from glmeasure.glsolver import SolverParams, run_gl, run_mbo
from glmeasure.nystrom import nystrom_decomposition
from glmeasure.synthetic import sample_labels, two_class_image


def one(seed, noise, size, sigma2, epsilon, frac):
    img, truth = two_class_image(size, seed, noise)
    labels = sample_labels(truth, frac, seed)
    F = combined_features(img, 1, "rgb+texture")
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        basis = nystrom_decomposition(F, int(round(0.05 * F.size)), sigma2, seed)
    p = SolverParams(epsilon=epsilon)
    gl = run_gl(basis, labels, p)
    mbo = run_mbo(basis, labels, p)
    t = truth.bits.ravel()
    return np.mean(gl.mask == t), np.mean(mbo.mask == t), np.mean(gl.mask == mbo.mask), time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--noise", type=float, nargs="+", default=[0.0, 0.05])
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--sigma2", type=float, default=1.0)
    ap.add_argument("--epsilon", type=float, default=1.0)
    ap.add_argument("--label-fraction", type=float, default=0.05)
    args = ap.parse_args()

    print(f"{'noise':>6} {'seed':>4} {'GL acc':>8} {'MBO acc':>8} {'agree':>8} {'time':>6}")
    for noise in args.noise:
        rows = []
        for seed in range(args.seeds):
            r = one(seed, noise, args.size, args.sigma2, args.epsilon, args.label_fraction)
            rows.append(r)
            print(f"{noise:6.3f} {seed:4d} {100 * r[0]:7.2f}% {100 * r[1]:7.2f}% {100 * r[2]:7.2f}% {r[3]:5.1f}s")
        m = np.mean(rows, axis=0)
        print(f"{noise:6.3f} mean {100 * m[0]:7.2f}% {100 * m[1]:7.2f}% {100 * m[2]:7.2f}%")


if __name__ == "__main__":
    main()
