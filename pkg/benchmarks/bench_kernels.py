"""Time the compiled kernels against the pure-Python fallback.

Run from the repository root after building the extension:

    python benchmarks/bench_kernels.py [--repeat 5]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from plate_homog._core import _fallback

try:
    from plate_homog._core import _kernels
except ImportError:
    _kernels = None


def svk_inputs(n: int, rng: np.random.Generator):
    F = np.eye(3) + 0.1 * rng.standard_normal((n, 3, 3))
    return np.ascontiguousarray(F), rng.uniform(0.5, 2.0, n), rng.uniform(0.0, 2.0, n)


def darboux_inputs(steps: int):
    s = np.linspace(0.0, 1.0, 2 * steps + 1)
    return 2.0 * np.cos(7 * s), 0.5 + np.sin(3 * s), 1.0 / steps, np.eye(3)


def best_of(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    rng = np.random.default_rng(0)

    cases = []
    for n in (1_000, 100_000):
        data = svk_inputs(n, rng)
        cases.append((f"svk_energy n={n}", data))
    for steps in (1_000, 20_000):
        cases.append((f"darboux_rk4 steps={steps}", darboux_inputs(steps)))

    print(f"{'kernel':28s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s} {'max diff':>9s}")
    for label, data in cases:
        name = label.split()[0]
        slow = getattr(_fallback, name)
        t_py = best_of(lambda: slow(*data), args.repeat)
        if _kernels is None:
            print(f"{label:28s} {1e3 * t_py:12.2f} {'n/a':>12s}")
            continue
        fast = getattr(_kernels, name)
        t_c = best_of(lambda: fast(*data), args.repeat)
        a, b = slow(*data), fast(*data)
        a = a[0] if isinstance(a, tuple) else a
        b = b[0] if isinstance(b, tuple) else b
        diff = float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
        print(f"{label:28s} {1e3 * t_py:12.2f} {1e3 * t_c:12.2f} {t_py / t_c:8.1f} {diff:9.1e}")


if __name__ == "__main__":
    main()
