"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from scanssc import autodiff as ad
from scanssc import kernels, synth, train
from scanssc.config import RunConfig


def cases(rng):
    xp = rng.normal(size=(18, 18, 6, 8))
    w = rng.normal(size=(3, 3, 3, 8, 8))
    g = rng.normal(size=(16, 16, 4, 8))
    pred = rng.integers(0, 20, size=(64, 64, 8))
    gt = rng.integers(0, 20, size=(64, 64, 8))
    xs = rng.normal(size=(10, 10, 4, 8))
    gs = rng.normal(size=(8, 8, 2, 8))
    cfg = RunConfig()
    labels = synth.generate("corridor", cfg.target_dims, 0)
    features, params = train.init_model(cfg)
    masks = train.build_masks(cfg)

    def step():
        tape = ad.Tape()
        x = tape.watch(features)
        total, _ = train.objective(cfg, labels, train.forward(x, params, masks, cfg))
        tape.gradient(total, [x])

    return {
        "conv3d_valid 8x8x2x8": lambda: kernels.conv3d_valid(xs, w),
        "conv3d grad input 8x8x2": lambda: kernels.conv3d_valid_grad_input(gs, w, xs.shape),
        "conv3d grad weight 8x8x2": lambda: kernels.conv3d_valid_grad_weight(xs, gs, 3),
        "conv3d_valid 16x16x4x8": lambda: kernels.conv3d_valid(xp, w),
        "conv3d grad input": lambda: kernels.conv3d_valid_grad_input(g, w, xp.shape),
        "conv3d grad weight": lambda: kernels.conv3d_valid_grad_weight(xp, g, 3),
        "axis_confusion 64x64x8": lambda: kernels.axis_confusion(pred, gt, 0, 20, 255),
        "toy train step": step,
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    fns = cases(rng)
    timings = {}
    for name in kernels.available():
        kernels.set_backend(name)
        for label, fn in fns.items():
            fn()  # warm up
            timings[(label, name)] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
    backends = kernels.available()
    print(f"{'kernel':<28}" + "".join(f"{b:>12}" for b in backends) + "     speedup")
    for label in fns:
        row = [timings[(label, b)] for b in backends]
        speed = ""
        if "cython" in backends:
            speed = f"{timings[(label, 'python')] / timings[(label, 'cython')]:10.2f}x"
        print(f"{label:<28}" + "".join(f"{t * 1e3:10.3f}ms" for t in row) + speed)
    kernels.set_backend("auto")


if __name__ == "__main__":
    main()
