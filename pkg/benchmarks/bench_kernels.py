"""Compare the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 200]

Checks agreement first, then reports the median time per call and the
speedup. A final row times one IMEX step of the closed six-species model
with each backend.
"""

import argparse
import statistics
import time

import numpy as np

from envara_rds import _kernels
from envara_rds.models import closed_network
from envara_rds.params import Params


def _median_time(fn, repeat):
    fn()  # warm-up (triggers compilation for numba)
    samples = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t)
    return statistics.median(samples)


def cases(n):
    rng = np.random.default_rng(0)
    net = closed_network(Params(p1=1.3, p2=0.7, eps3=0.9))
    c = rng.uniform(0.5, 1.5, (6, n))
    args = (net.reactant_orders, net.product_orders, net.k_forward, net.k_backward)
    side = max(8, int(np.sqrt(n)))
    f2 = rng.random((6, side, side))
    r = np.array([0.5, 1.0, 2.0, 0.0, 0.0, 0.0])
    return {
        "laplacian_1d": (c, 0.01),
        "laplacian_2d": (f2, 0.01, 0.02),
        "mass_action_fluxes": (c,) + args,
        "mass_action_source": (c,) + args + (net.sigma,),
        "neumann_implicit_1d": (c, r),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--sizes", default="256,4096,65536")
    args = ap.parse_args()

    nb, npk = _kernels.numba_kernels, _kernels.numpy_kernels
    if nb is None:
        raise SystemExit("numba backend disabled (ENVARA_RDS_DISABLE_NUMBA set?) - nothing to compare")

    print(f"{'kernel':<22}{'n':>8}{'numpy [us]':>14}{'numba [us]':>14}{'speedup':>10}{'max diff':>12}")
    for n in (int(s) for s in args.sizes.split(",")):
        for name, inputs in cases(n).items():
            a, b = getattr(npk, name)(*inputs), getattr(nb, name)(*inputs)
            diff = max(float(np.max(np.abs(x - y))) for x, y in zip(np.atleast_1d(a), np.atleast_1d(b))) \
                if isinstance(a, tuple) else float(np.max(np.abs(a - b)))
            t_np = _median_time(lambda: getattr(npk, name)(*inputs), args.repeat)
            t_nb = _median_time(lambda: getattr(nb, name)(*inputs), args.repeat)
            print(f"{name:<22}{n:>8}{t_np * 1e6:>14.1f}{t_nb * 1e6:>14.1f}{t_np / t_nb:>10.1f}{diff:>12.1e}")


if __name__ == "__main__":
    main()
