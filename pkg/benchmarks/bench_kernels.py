"""Compare the numba and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat 200]

Reports median wall time per call for each hot kernel and one training
epoch, plus the largest disagreement between the two backends.
"""
import argparse
import timeit

import numpy as np

from disharmony import _accel, _kernels
from disharmony.model import AuxTaskSpec, ModelConfig, init_params
from disharmony.objective import HeadTerm, Objective
from disharmony.optimize import OptimState, TrainConfig, train_epoch
from disharmony.synthsites import SiteConfig, make_site


def setup():
    data = make_site(SiteConfig("bench", n=480), 0)
    model = ModelConfig(20)
    aux = [AuxTaskSpec("sex")]
    params = init_params(model, aux, 0)
    obj = Objective(model, params, [HeadTerm("primary", 1.0), HeadTerm("sex", 1.0)])
    rng = np.random.default_rng(0)
    X = rng.standard_normal((6, 20))
    T = np.stack([rng.integers(0, 2, 6), rng.integers(0, 2, 6)]).astype(np.float64)
    masks = np.ones((2, 6, model.feature_dim))
    P = rng.standard_normal((300, 20))
    Q = rng.standard_normal((300, 20)) + 0.5
    return data, params, obj, X, T, masks, P, Q


def cases(data, params, obj, X, T, masks, P, Q):
    n = params.values.size
    idx = np.arange(n)
    g = np.random.default_rng(1).standard_normal(n)
    segs = tuple(params.segments)
    train = TrainConfig()

    def adam():
        vals, m, v = params.values.copy(), np.zeros(n), np.zeros(n)
        _kernels.adam_update(vals, m, v, g, idx, 1, 1e-3, 0.9, 0.999, 1e-8)
        return vals

    def epoch():
        p, _, loss = train_epoch(params, data, obj.builder(train), segs, train,
                                 OptimState.fresh(n), 0)
        return p.values

    return {
        "net_loss_grad (B=6)": (lambda: obj.value_and_grad(params.values, X, T, masks)[1], 1.0),
        "adam_update": (adam, 1.0),
        "pairwise rbf 300x300": (lambda: _kernels.pairwise_kernel(P, Q, _kernels.RBF, 0.05), 1.0),
        "mmd2 unbiased 300x300": (lambda: np.array([_kernels.mmd2_unbiased(P, Q, _kernels.RBF, 0.05)]), 1.0),
        "train_epoch (480 rows)": (epoch, 0.02),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    if not _accel.HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    args_ = setup()
    results, outputs = {}, {}
    for name in ("numba", "numpy"):
        _accel.set_backend(name)
        for label, (fn, scale) in cases(*args_).items():
            fn()  # warm-up / compile
            reps = max(3, int(args.repeat * scale))
            times = timeit.repeat(fn, number=1, repeat=reps)
            results[(label, name)] = float(np.median(times))
            outputs[(label, name)] = fn()
    _accel.set_backend("numba")

    print(f"{'kernel':26s} {'numba':>11s} {'numpy':>11s} {'speedup':>8s} {'max |diff|':>11s}")
    for label in cases(*args_):
        a, b = results[(label, "numba")], results[(label, "numpy")]
        diff = float(np.max(np.abs(outputs[(label, "numba")] - outputs[(label, "numpy")])))
        print(f"{label:26s} {a * 1e6:9.1f}us {b * 1e6:9.1f}us {b / a:7.2f}x {diff:11.2e}")


if __name__ == "__main__":
    main()
