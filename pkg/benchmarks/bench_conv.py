"""Time conv3d forward and backward on each available kernel backend.

    python3 benchmarks/bench_conv.py [--repeat 5] [--json out.json]

Shapes are the grouped 3x3x3 convolutions of the tiny network at the default
clip size (batch 8, 16 x 32 x 32 input), so the numbers track training cost.
"""
import argparse
import json
import os
import time

os.environ.setdefault("OMP_NUM_THREADS", "1")

import numpy as np

from btsnet import kernels
from btsnet.ops import Conv3dParams, conv3d
from btsnet.tensor import Tensor, dot

# (name, input shape, Cout, groups, stride, dilation)
CASES = [
    ("stem", (8, 3, 16, 32, 32), 8, 1, (1, 2, 2), (1, 1, 1)),
    ("s1 d1", (8, 8, 16, 16, 16), 8, 4, (1, 1, 1), (1, 1, 1)),
    ("s1 d4", (8, 8, 16, 16, 16), 8, 4, (1, 1, 1), (4, 4, 4)),
    ("s2 entry", (8, 16, 16, 16, 16), 16, 4, (2, 2, 2), (1, 1, 1)),
    ("s3 d(4,1,1)", (8, 32, 8, 8, 8), 32, 4, (1, 1, 1), (4, 1, 1)),
]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def run_case(shape, cout, groups, stride, dilation, repeat, rng):
    x = rng.uniform(-1, 1, shape)
    w = rng.uniform(-1, 1, (cout, shape[1] // groups, 3, 3, 3))
    pad = tuple(d for d in dilation)
    params = Conv3dParams(Tensor(w, requires_grad=True), None, stride, dilation, pad, groups)
    xt = Tensor(x, requires_grad=True)
    out = conv3d(xt, params)
    lw = rng.uniform(-1, 1, out.shape)

    def fwd():
        conv3d(Tensor(x), params)

    def fwd_bwd():
        xt.grad = params.weight.grad = None
        dot(conv3d(xt, params), lw).backward()

    t_fwd = best_of(fwd, repeat)
    t_both = best_of(fwd_bwd, repeat)
    return t_fwd, t_both - t_fwd, (out.data, xt.grad, params.weight.grad)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--json", default=None, help="also write results here")
    args = parser.parse_args()

    names = sorted(kernels.BACKENDS)
    results = []
    print(f"backends: {names}  (OMP_NUM_THREADS={os.environ['OMP_NUM_THREADS']})")
    print(f"{'case':<14}{'backend':<9}{'forward ms':>12}{'backward ms':>13}{'speedup':>9}")
    for name, shape, cout, groups, stride, dilation in CASES:
        row = {"case": name}
        outputs = {}
        for b in names:
            kernels.set_backend(b)
            fwd, bwd, outs = run_case(shape, cout, groups, stride, dilation, args.repeat, np.random.default_rng(0))
            row[b] = {"forward_s": fwd, "backward_s": bwd}
            outputs[b] = outs
        base = row["python"]["forward_s"] + row["python"]["backward_s"]
        for b in names:
            total = row[b]["forward_s"] + row[b]["backward_s"]
            print(f"{name:<14}{b:<9}{1e3 * row[b]['forward_s']:>12.1f}{1e3 * row[b]['backward_s']:>13.1f}"
                  f"{base / total:>8.2f}x")
        if len(names) > 1:
            diff = max(float(np.max(np.abs(a - c))) for a, c in zip(*outputs.values()))
            row["max_abs_diff"] = diff
        results.append(row)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
