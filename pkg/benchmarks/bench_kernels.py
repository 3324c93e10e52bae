#!/usr/bin/env python3
"""Time the numba kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--grid 21] [--slow-time 100] [--freqs 25] [--repeat 5]

Both backends are imported side by side from usar._kernels; the numba
versions are called once before timing so compilation is excluded. Prints
the best-of-repeat wall time per kernel and the speed-up, then one full
batch gradient (accumulate_gradients) under each USAR_NUMBA setting, each
in a fresh interpreter.
"""

import argparse
import os
import subprocess
import sys
import textwrap
import timeit

import numpy as np

from usar import _kernels
from usar.geometry import ImagingGeometry


def cases(grid, slow_time, freqs, layers, seed=0):
    g = ImagingGeometry.circular(grid=(grid, grid), scene_extent=20.0 * grid,
                                 slow_time_samples=slow_time, frequency_samples=freqs)
    rng = np.random.default_rng(seed)
    M, N = g.M, g.N
    rx, px = g.receiver_path, g.pixels
    extra = np.zeros((g.S, M))
    F = _kernels.numpy_impl.phase_matrix(rx, g.frequencies, px, extra, g.c0, 1.0)
    Q = np.eye(M) - (1.0 / (3.0 * N)) * (F.conj().T @ F)
    rho = rng.uniform(size=M) * (rng.uniform(size=M) < 0.2)
    bias = rng.standard_normal(M) + 1j * rng.standard_normal(M)
    d = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    coef = rng.standard_normal((layers, M)) + 1j * rng.standard_normal((layers, M))
    rho_in = rng.uniform(size=(layers, M))
    active = rng.uniform(size=(layers, M)) < 0.5

    def gQ():
        return np.zeros((M, M), dtype=np.complex128)

    def gF():
        return np.zeros((N, M), dtype=np.complex128)

    return {
        "phase_matrix": lambda k: k.phase_matrix(rx, g.frequencies, px, extra, g.c0, 1.0),
        "layer": lambda k: k.layer(Q, rho, bias, 0.5, True, 1e-5),
        "add_outer": lambda k: k.add_outer(gF(), d, rho, 1.0),
        "add_layer_grads": lambda k: k.add_layer_grads(gQ(), gF(), coef, rho_in, coef, d,
                                                       active),
    }, (N, M)


_END_TO_END = textwrap.dedent("""
    import sys, timeit
    from usar.config import ExperimentConfig
    from usar.experiment import build_models, initial_params, make_training_data
    from usar.training import accumulate_gradients
    grid, S, W, L, T, repeat = map(int, sys.argv[1:])
    cfg = ExperimentConfig()
    g = cfg.geometry
    g.grid, g.scene_extent = (grid, grid), 20.0 * grid
    g.slow_time_samples, g.frequency_samples = S, W
    cfg.network.layers, cfg.network.alpha, cfg.network.lam = L, "auto", 1.0
    cfg.training.samples = T
    models = build_models(cfg)
    params = initial_params(cfg, models.true)
    _, ms = make_training_data(cfg, models.true, 0)
    accumulate_gradients(params, ms[:1])  # compile / warm up
    print(min(timeit.repeat(lambda: accumulate_gradients(params, ms), number=1,
                            repeat=repeat)))
""")


def end_to_end(args, flag):
    env = dict(os.environ, USAR_NUMBA=flag)
    argv = [str(v) for v in (args.grid, args.slow_time, args.freqs, args.layers,
                             args.samples, args.repeat)]
    out = subprocess.run([sys.executable, "-c", _END_TO_END, *argv], env=env, check=True,
                         capture_output=True, text=True)
    return float(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", type=int, default=21)
    ap.add_argument("--slow-time", type=int, default=100)
    ap.add_argument("--freqs", type=int, default=25)
    ap.add_argument("--layers", type=int, default=8)
    ap.add_argument("--samples", type=int, default=4, help="batch size for the end-to-end run")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _kernels.numba_impl is None:
        raise SystemExit("numba backend unavailable (USAR_NUMBA=0 or numba missing)")
    table, (N, M) = cases(args.grid, args.slow_time, args.freqs, args.layers)
    print(f"N={N} M={M} L={args.layers}, best of {args.repeat}")
    print(f"{'kernel':<16}{'numpy [ms]':>12}{'numba [ms]':>12}{'speed-up':>10}")
    for name, fn in table.items():
        fn(_kernels.numba_impl)  # compile
        t_np = min(timeit.repeat(lambda: fn(_kernels.numpy_impl), number=1, repeat=args.repeat))
        t_nb = min(timeit.repeat(lambda: fn(_kernels.numba_impl), number=1, repeat=args.repeat))
        print(f"{name:<16}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>10.1f}")
    t_np, t_nb = end_to_end(args, "0"), end_to_end(args, "1")
    label = f"gradients x{args.samples}"
    print(f"{label:<16}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>10.1f}")


if __name__ == "__main__":
    main()
