"""Time the compiled and pure-Python chain kernels on the same chains.

    python benchmarks/bench_kernels.py [--iterations N]

Both backends consume identical random buffers, so the script also checks
that they return identical draws.
"""

import argparse
import time

import numpy as np

from bremark.kernels import CChainKernel
from bremark.sampler import ObservedData, SamplerConfig, run
from bremark.simulate import StudyDesign, corrupt_bre, simulate_cjs, study_phi_groups


def mixing_data(seed):
    design = StudyDesign.mixing(seed)
    rng = np.random.default_rng(seed)
    truth = simulate_cjs(design.releases, design.theta1, rng)
    return ObservedData(4, corrupt_bre(truth, 0.5, rng).n)


def overwinter_data(seed):
    design = StudyDesign.overwinter(seed=seed)
    rng = np.random.default_rng(seed)
    truth = simulate_cjs(design.releases, design.theta1, rng)
    return ObservedData(10, corrupt_bre(truth, 6 / 9, rng).n)


def cases(iterations):
    yield "T=4 dynamic, theta fixed", mixing_data(1), dict(
        algorithm="dynamic", update_theta=False, init_phi=0.8, init_p=0.5, alpha=0.5)
    yield "T=4 fixed basis, theta fixed", mixing_data(1), dict(
        algorithm="fixed", update_theta=False, init_phi=0.8, init_p=0.5, alpha=0.5)
    yield "T=10 dynamic, theta updated", overwinter_data(2), dict(
        algorithm="dynamic", alpha=6 / 9, x_steps=10, phi_groups=study_phi_groups(10),
        init_phi=0.5, init_p=0.5)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--iterations", type=int, default=5000)
    args = ap.parse_args()
    if CChainKernel is None:
        raise SystemExit("compiled kernel not built; reinstall the package with Cython available")
    print(f"{'case':32s} {'python s':>10s} {'cython s':>10s} {'speedup':>8s} identical")
    for name, data, kw in cases(args.iterations):
        timings, results = {}, {}
        for backend in ("python", "cython"):
            cfg = SamplerConfig(iterations=args.iterations, burnin=args.iterations // 5,
                                seed=7, backend=backend, **kw)
            t0 = time.perf_counter()
            results[backend] = run(data, cfg)
            timings[backend] = time.perf_counter() - t0
        a, b = results["python"], results["cython"]
        same = (np.array_equal(a.theta, b.theta) and np.array_equal(a.x_hashes, b.x_hashes)
                and np.array_equal(a.log_joint, b.log_joint))
        print(f"{name:32s} {timings['python']:10.3f} {timings['cython']:10.3f} "
              f"{timings['python'] / timings['cython']:8.1f} {same}")


if __name__ == "__main__":
    main()
