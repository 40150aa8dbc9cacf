"""Compare the compiled and pure-Python kernel backends.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Kernel timings call each backend module directly; the end-to-end timing
runs the delay network simulation in a subprocess per backend, switching
with the IMPULSIVE_ISS_PURE environment variable.
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from impulsive_iss import kernels
from impulsive_iss.bytecode import compile_flow
from impulsive_iss.ncs import NcsParams, build_model


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def kernel_cases(backend):
    rng = np.random.default_rng(0)
    model = build_model(NcsParams())
    flow = compile_flow(model)
    # rebuild the program for this backend from the compiled arrays
    p = flow.program
    prog = backend.make_program(np.asarray(p.ops, dtype=np.int32),
                                np.asarray(p.iarg, dtype=np.int32), np.asarray(p.farg),
                                np.asarray(p.starts, dtype=np.int32), p.max_stack)
    T = np.linspace(-0.03, 0.0, 31)
    X = np.tile([0.9, 0.3, 0.6], (T.size, 1))
    DX = np.zeros_like(X)
    U3 = np.zeros((3, 6))
    out = np.empty(3)
    times = np.sort(rng.uniform(0, 100, 2000))
    W = -np.log(rng.uniform(0.1, 2.0, (40, 40)))
    np.fill_diagonal(W, np.inf)

    def rk4():
        for _ in range(200):
            backend.rk4_step(prog, T, X, DX, T.size, 0.0, 1e-3, U3, out)

    def hermite():
        for q in np.linspace(-0.03, 0.0, 2000):
            backend.hermite_eval(T, X, DX, T.size, float(q), False, out)

    return {
        "rk4_step x200": rk4,
        "hermite_eval x2000": hermite,
        "adt_sweep k=2000": lambda: backend.adt_sweep(times, 0.0, 100.0, 0.1, -0.5, 0.05),
        "adt_pairs k=500": lambda: backend.adt_pairs(times[:500], 0.0, 100.0, 0.1, -0.5, 0.05,
                                                      False),
        "karp n=40": lambda: backend.karp(W),
    }


def end_to_end(pure):
    env = dict(os.environ)
    if pure:
        env["IMPULSIVE_ISS_PURE"] = "1"
    else:
        env.pop("IMPULSIVE_ISS_PURE", None)
    code = ("import time; from impulsive_iss.ncs import NcsParams, simulate_error_system;"
            "t=time.perf_counter(); simulate_error_system(NcsParams(horizon=2.0));"
            "print(time.perf_counter()-t)")
    res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    return float(res.stdout.strip())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    mods = kernels.backends()
    names = [m.BACKEND for m in mods]
    rows = {}
    for mod in mods:
        for case, fn in kernel_cases(mod).items():
            rows.setdefault(case, {})[mod.BACKEND] = best_of(fn, args.repeat)
    print(f"{'case':<22}" + "".join(f"{n:>12}" for n in names) + f"{'speedup':>10}")
    for case, vals in rows.items():
        line = f"{case:<22}" + "".join(f"{vals[n] * 1e3:>10.2f}ms" for n in names)
        if len(names) == 2:
            line += f"{vals['python'] / vals[names[0]]:>9.1f}x"
        print(line)
    if "cython" in names:
        fast, slow = end_to_end(False), end_to_end(True)
        print(f"{'ncs sim horizon 2':<22}{fast * 1e3:>10.2f}ms{slow * 1e3:>10.2f}ms"
              f"{slow / fast:>9.1f}x")
    else:
        print("compiled backend not built; only the Python timings are shown")


if __name__ == "__main__":
    main()
