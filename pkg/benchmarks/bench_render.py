"""Time the compiled and pure-Python compositing backends on synthetic scenes.

    python3 benchmarks/bench_render.py [--sizes 64,128,256] [--gaussians 500,5000] [--repeat 3]

Both backends get identical inputs; the script also reports the largest
absolute difference between their outputs.
"""

import argparse
import time

import numpy as np

from splatpipe import _kernels
from splatpipe.render import rasterize
from splatpipe.synth import SynthConfig, make_scene


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="64,128,256")
    ap.add_argument("--gaussians", default="500,5000")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    backends = sorted(_kernels.BACKENDS)
    if "compiled" not in backends:
        print("compiled extension not built; timing the python backend only")
    header = f"{'size':>6} {'gaussians':>10} " + " ".join(f"{b + ' [ms]':>15}" for b in backends)
    print(header + (f" {'speedup':>8} {'max diff':>9}" if len(backends) == 2 else ""))
    for size in map(int, args.sizes.split(",")):
        for n in map(int, args.gaussians.split(",")):
            scene = make_scene(SynthConfig(n_gaussians=n, n_views=2, width=size, height=size, n_variants=1))
            g, cam = scene.gaussians, scene.cameras[1]
            res = {}
            for b in backends:
                res[b] = best_of(lambda b=b: rasterize(g, cam, threads=args.threads, backend=b), args.repeat)
            row = f"{size:>6} {n:>10} " + " ".join(f"{res[b][0] * 1e3:>15.2f}" for b in backends)
            if len(backends) == 2:
                diff = np.abs(res["compiled"][1].color.values - res["python"][1].color.values).max()
                row += f" {res['python'][0] / res['compiled'][0]:>7.1f}x {diff:>9.1e}"
            print(row)


if __name__ == "__main__":
    main()
