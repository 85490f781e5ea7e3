"""Time the compiled kernels against their pure-Python twins.

Run from the repository root after building the extension::

    python3 benchmarks/bench_kernels.py [--repeat 3]

Each kernel gets inputs shaped like the ones the library feeds it (one
mode of a 10 s walk at 1 kHz, a short direct integration, a 300-sample
SVM problem). Outputs of the two backends are compared before timing.
"""

import argparse
import time

import numpy as np

from gaitvib import kernels
from gaitvib.dynamics.beam import BeamModel
from gaitvib.dynamics.simulate import _step_matrices
from gaitvib.learning import rbf_kernel


def modal_case():
    beam = BeamModel()
    dt = 1e-3
    trans, g0, g1 = _step_matrices(float(beam.omegas[2]), beam.damping_ratios[0], dt)
    rng = np.random.default_rng(0)
    load = np.ascontiguousarray(np.cumsum(rng.normal(size=10_000)))
    return (trans, g0, g1, load, dt)


def newmark_case():
    ndof = 6
    rng = np.random.default_rng(1)
    mass = np.eye(ndof)
    stiffness = np.diag((2 * np.pi * np.array([11.0, 53, 80, 112, 165, 200])) ** 2)
    damping = 0.04 * np.sqrt(stiffness)
    n_sub, dt, gamma, beta = 10, 1e-4, 0.5, 0.25
    eff = stiffness + gamma / (beta * dt) * damping + mass / (beta * dt * dt)
    load = np.ascontiguousarray(rng.normal(size=(500, ndof)))
    accel0 = np.linalg.solve(mass, load[0])
    return (mass, damping, np.linalg.inv(eff), accel0, load, n_sub, dt, gamma, beta)


def smo_case():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(300, 6))
    y = np.where(x[:, 0] * x[:, 1] + 0.3 * rng.normal(size=300) > 0, 1.0, -1.0)
    return (np.ascontiguousarray(rbf_kernel(x, x, 1.0 / 6)), y, 10.0, 1e-6, 100_000)


CASES = {"modal_recurrence": modal_case, "newmark_integrate": newmark_case,
         "smo_solve": smo_case}


def best_time(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    opts = p.parse_args(argv)
    if kernels.compiled_backend is None:
        print("compiled extension not available; timing the Python backend only")
    print(f"{'kernel':<20}{'python [s]':>12}{'compiled [s]':>14}{'speedup':>10}")
    for name, make in CASES.items():
        args = make()
        py = getattr(kernels.python_backend, name)
        t_py = best_time(py, args, opts.repeat)
        if kernels.compiled_backend is None:
            print(f"{name:<20}{t_py:>12.4f}{'-':>14}{'-':>10}")
            continue
        cy = getattr(kernels.compiled_backend, name)
        a, b = py(*args), cy(*args)
        for u, v in zip(np.atleast_1d(a) if not isinstance(a, tuple) else a,
                        np.atleast_1d(b) if not isinstance(b, tuple) else b):
            np.testing.assert_allclose(np.asarray(v), np.asarray(u), rtol=1e-9, atol=1e-12)
        t_cy = best_time(cy, args, opts.repeat)
        print(f"{name:<20}{t_py:>12.4f}{t_cy:>14.4f}{t_py / t_cy:>9.0f}x")


if __name__ == "__main__":
    main()
