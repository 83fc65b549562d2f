"""Times the numba kernels against their pure-numpy twins.

Run as a script: python benchmarks/bench_kernels.py [-L BITS] [-r REPEATS]
The first numba call of each kernel compiles it, so every kernel is
warmed up once before timing.  Representative sizes default to a 14-site
statevector and a 2000-point collapse prediction.
"""

import argparse
import time

import numpy as np

from monchain import kernels


def timeit(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def report(name, numpy_s, numba_s):
    ratio = numpy_s / numba_s if numba_s > 0 else float("inf")
    print(f"{name:28s} numpy {numpy_s * 1e3:9.3f} ms   numba {numba_s * 1e3:9.3f} ms   x{ratio:.1f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("-L", type=int, default=14, help="statevector sites")
    ap.add_argument("-r", "--repeats", type=int, default=7)
    args = ap.parse_args()

    rng = np.random.default_rng(42)
    L = args.L
    psi = rng.normal(size=1 << L) + 1j * rng.normal(size=1 << L)
    psi = np.ascontiguousarray(psi / np.linalg.norm(psi))
    gate = np.ascontiguousarray(np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))[0])

    print(f"statevector L={L} ({psi.size} amplitudes), repeats={args.repeats}, best-of timing")
    if kernels.USE_NUMBA:
        print("dispatch: numba (set MONCHAIN_NO_NUMBA=1 to force the numpy path)")
    else:
        print("dispatch: numpy (numba disabled or unavailable)")

    # gate sweep over every bond, in place on a scratch copy
    def gate_sweep(impl):
        work = psi.copy()
        for site in range(L - 1):
            impl(work, gate, site, L)

    gate_sweep(kernels.apply_gate_statevector_numba)  # compile
    report(
        "apply_gate (bond sweep)",
        timeit(lambda: gate_sweep(kernels.apply_gate_statevector_numpy), args.repeats),
        timeit(lambda: gate_sweep(kernels.apply_gate_statevector_numba), args.repeats),
    )

    kernels.z_profile_statevector_numba(psi, L)
    report(
        "z_profile",
        timeit(lambda: kernels.z_profile_statevector_numpy(psi, L), args.repeats),
        timeit(lambda: kernels.z_profile_statevector_numba(psi, L), args.repeats),
    )

    kernels.up_probability_statevector_numba(psi, L // 2, L)
    report(
        "up_probability",
        timeit(lambda: kernels.up_probability_statevector_numpy(psi, L // 2, L), args.repeats),
        timeit(lambda: kernels.up_probability_statevector_numba(psi, L // 2, L), args.repeats),
    )

    def project(impl):
        work = psi.copy()
        impl(work, L // 2, True, L)

    project(kernels.project_site_statevector_numba)
    report(
        "project_site",
        timeit(lambda: project(kernels.project_site_statevector_numpy), args.repeats),
        timeit(lambda: project(kernels.project_site_statevector_numba), args.repeats),
    )

    xb = np.sort(rng.uniform(-3.0, 3.0, size=500))
    yb = np.tanh(xb) + 0.01 * rng.normal(size=xb.size)
    vb = np.full(xb.size, 1e-4)
    xa = rng.uniform(-3.5, 3.5, size=2000)

    kernels.collapse_pair_predict_numba(xa, xb, yb, vb)
    report(
        "collapse_pair_predict",
        timeit(lambda: kernels.collapse_pair_predict_numpy(xa, xb, yb, vb), args.repeats),
        timeit(lambda: kernels.collapse_pair_predict_numba(xa, xb, yb, vb), args.repeats),
    )


if __name__ == "__main__":
    main()
