"""Compare the compiled compositing kernel against the numpy fallback.

Renders the same random scene with both backends and reports per-frame
wall time plus the speedup.  The two outputs are also compared so a
regression in either kernel shows up here before it shows up in tests.

    python3 benchmarks/bench_splat.py --gaussians 20000 --size 512 --repeats 5
"""

import argparse
import math
import statistics
import time
from types import SimpleNamespace

import numpy as np

from gsrelight import splat
from gsrelight import _compositing_py
from gsrelight.demo import demo_camera


def make_scene(count: int, seed: int):
    rng = np.random.default_rng(seed)
    quats = rng.standard_normal((count, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    scene = SimpleNamespace(
        positions=rng.normal(0.0, 0.1, (count, 3)),
        rotations=quats,
        scales=np.exp(rng.normal(math.log(0.008), 0.4, (count, 3))),
        opacities=rng.uniform(0.05, 0.95, count),
    )
    colors = rng.uniform(0.0, 1.0, (count, 3))
    return scene, colors


def time_renders(scene, colors, camera, threads, repeats):
    times = []
    target = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        target, _ = splat.render(scene, colors, camera, threads=threads)
        times.append(time.perf_counter() - t0)
    return statistics.median(times), target


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--gaussians", type=int, default=20_000)
    parser.add_argument("--size", type=int, default=512, help="square image side")
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    scene, colors = make_scene(args.gaussians, args.seed)
    camera = demo_camera(args.size, args.size)

    backends = [("python", _compositing_py)]
    native = splat._backend
    if native.BACKEND == "compiled":
        backends.insert(0, ("compiled", native))
    else:
        print("compiled kernel unavailable; timing the fallback only")

    results = {}
    outputs = {}
    for name, module in backends:
        splat._backend = module
        try:
            seconds, target = time_renders(
                scene, colors, camera, args.threads, args.repeats
            )
        finally:
            splat._backend = native
        results[name] = seconds
        outputs[name] = target
        print(f"{name:>8}: {seconds * 1e3:8.1f} ms/frame "
              f"({args.gaussians} Gaussians, {args.size}x{args.size}, "
              f"threads={args.threads}, median of {args.repeats})")

    if len(results) == 2:
        print(f"speedup: {results['python'] / results['compiled']:.1f}x")
        a, b = outputs["compiled"].pixels, outputs["python"].pixels
        worst = float(np.abs(a - b).max())
        print(f"max abs pixel difference between backends: {worst:.3g}")
        if worst > 1e-10:
            print("WARNING: backends disagree beyond rounding")
            return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
