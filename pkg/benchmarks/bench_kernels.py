"""Compare the compiled and pure-Python numerical kernels.

    python benchmarks/bench_kernels.py [--repeat 5]

Reports the best wall time of each kernel under both backends and checks that
their results agree.
"""

import argparse
import timeit

import numpy as np

from volterrom import _backend
from volterrom._pykernels import PRELU, TANH


def cases():
    rng = np.random.default_rng(0)
    u = np.radians(np.sin(0.3 * np.arange(4000) * 0.25))
    rates = np.array([0.3, 0.0455, 0.15])
    yield "lag_states_rk4 (n=4000)", lambda k: k.lag_states_rk4(u, 0.25, rates, 2)

    sizes = [3, 64, 64, 240]
    n = _backend.param_count(sizes)
    x = rng.normal(size=(45, 3))
    y = rng.normal(size=(45, 240))
    p0 = rng.uniform(-0.3, 0.3, n)
    order = rng.permutation(45)

    def epoch(k, act, batch):
        p, m, v = p0.copy(), np.zeros(n), np.zeros(n)
        k.mlp_train_epoch(p, m, v, 0, sizes, x, y, order, batch, act, 1e-4)
        return p

    yield "mlp epoch tanh, batch 1", lambda k: epoch(k, TANH, 1)
    yield "mlp epoch prelu, batch 8", lambda k: epoch(k, PRELU, 8)
    yield "mlp loss+grad (45 rows)", lambda k: k.mlp_loss_grad(p0, sizes, x, y, TANH)[1]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _backend.compiled is None:
        print("compiled extension not available; nothing to compare")
        return 1
    print(f"{'kernel':<28}{'python [ms]':>14}{'cython [ms]':>14}{'speedup':>10}{'max diff':>12}")
    for name, fn in cases():
        times = {}
        for label, mod in (("python", _backend.pure), ("cython", _backend.compiled)):
            times[label] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
        diff = np.max(np.abs(np.asarray(fn(_backend.pure)) - np.asarray(fn(_backend.compiled))))
        print(f"{name:<28}{1e3 * times['python']:>14.2f}{1e3 * times['cython']:>14.2f}"
              f"{times['python'] / times['cython']:>10.1f}{diff:>12.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
