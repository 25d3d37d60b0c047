"""Benchmark the compiled backend against the numpy fallback.

Times the numerical hot kernels on workloads shaped like the evaluation
pipeline: SE Gram matrices and marginal-likelihood gradients at per-patient
sizes, pairwise distances and SMO training at cohort size, plus one full
per-patient GP fit through each backend.

Run:  python benchmarks/bench_backends.py
"""

import time

import numpy as np

from trendeq.backends import compiled_backend, pure


def timeit(fn, repeats, number=1):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(number):
            fn()
        best = min(best, (time.perf_counter() - t0) / number)
    return best


def bench_kernels(mod):
    rng = np.random.default_rng(0)
    x60 = np.sort(rng.uniform(30, 90, 60))
    d2 = (x60[:, None] - x60[None, :]) ** 2
    resid = rng.normal(0, 10, 60)
    z = (np.log(5.0), np.log(100.0), np.log(4.0))

    feats = rng.normal(size=(488, 54))
    q = rng.normal(size=(98, 54))

    n = 400
    xs = rng.normal(size=(n, 54))
    ys = np.where(xs[:, 0] + 0.8 * rng.normal(size=n) > 0, 1.0, -1.0)
    gram = np.exp(pure.sq_dists(xs, xs) / (-2.0 * 10.0 ** 2))

    return {
        "se_gram n=60": timeit(lambda: mod.se_gram(x60, 5.0, 100.0), 7, 200),
        "lml_value_grad n=60": timeit(
            lambda: mod.lml_value_grad(d2, resid, *z, 1e-9), 7, 50),
        "sq_dists 98x488 d=54": timeit(lambda: mod.sq_dists(q, feats), 7, 20),
        "smo_solve n=400": timeit(
            lambda: mod.smo_solve(gram, ys, 1.0, 1e-3, 100 * n), 3),
    }


def bench_fit(backend_name):
    """One representative patient fit, forcing the chosen backend."""
    from trendeq import backends, gpr
    from trendeq.timeseries import build_series

    impl = pure if backend_name == "pure" else compiled_backend()
    saved = (backends.se_gram, backends.se_cross, backends.sq_dists,
             backends.lml_value, backends.lml_value_grad, backends.smo_solve)
    try:
        backends.se_gram = impl.se_gram
        backends.se_cross = impl.se_cross
        backends.sq_dists = impl.sq_dists
        backends.lml_value = impl.lml_value
        backends.lml_value_grad = impl.lml_value_grad
        backends.smo_solve = impl.smo_solve
        rng = np.random.default_rng(1)
        x = np.sort(rng.uniform(50, 80, 40))
        y = 70 + rng.normal(0, 8, 40)
        series = build_series("bench", x.tolist(), y.tolist())
        return timeit(lambda: gpr.fit(series), 3)
    finally:
        (backends.se_gram, backends.se_cross, backends.sq_dists,
         backends.lml_value, backends.lml_value_grad, backends.smo_solve) = saved


def main():
    compiled = compiled_backend()
    print(f"compiled extension available: {compiled is not None}")
    rows = []
    pure_times = bench_kernels(pure)
    comp_times = bench_kernels(compiled) if compiled else {}
    for name, t_pure in pure_times.items():
        t_comp = comp_times.get(name)
        rows.append((name, t_pure, t_comp))
    rows.append(("gpr.fit n=40 (end to end)", bench_fit("pure"),
                 bench_fit("compiled") if compiled else None))

    width = max(len(r[0]) for r in rows)
    header = f"{'kernel':<{width}}  {'pure':>12}  {'compiled':>12}  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, t_pure, t_comp in rows:
        if t_comp is None:
            print(f"{name:<{width}}  {t_pure * 1e3:>10.3f}ms  {'n/a':>12}  {'':>8}")
        else:
            print(f"{name:<{width}}  {t_pure * 1e3:>10.3f}ms  "
                  f"{t_comp * 1e3:>10.3f}ms  {t_pure / t_comp:>7.1f}x")


if __name__ == "__main__":
    main()
