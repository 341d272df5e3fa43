"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--events N] [--repeat R]

Inputs are synthetic, sorted like simulator output. Each kernel's outputs
are checked for equality across backends before timing.
"""
import argparse
import sys
import timeit

import numpy as np

from qkdnet import kernels


def inputs(n, seed):
    rng = np.random.default_rng(seed)
    times = np.sort(rng.uniform(0, n * 1e-4, n))
    pulses = 40 * n

    def side():
        sync = np.sort(rng.integers(0, pulses, n)).astype(np.int64)
        return sync, rng.integers(-1, 4, n).astype(np.int8), rng.integers(0, 192, n).astype(np.int64)

    return times, side(), side()


def cases(n, seed):
    times, (sa, oa, fa), (sb, ob, fb) = inputs(n, seed)
    # a shared subset so coincidences are not empty
    sb[: n // 4] = sa[: n // 4]
    order = np.argsort(sb, kind="stable")
    sb, ob, fb = sb[order], ob[order], fb[order]
    valid_a, valid_b = oa >= 0, ob >= 0
    return {
        "dead_time_filter": lambda m: m.dead_time_filter(times, 2e-5, -1.0),
        "pulse_coincidences": lambda m: m.pulse_coincidences(sa[valid_a], oa[valid_a],
                                                             sb[valid_b], ob[valid_b]),
        "pulse_histogram2d": lambda m: m.pulse_histogram2d(sa, fa, sb, fb, 192),
    }


def same(x, y):
    if isinstance(x, tuple):
        return all(same(a, b) for a, b in zip(x, y))
    return np.array_equal(np.asarray(x), np.asarray(y))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--events", type=int, default=200_000)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=1)
    args = p.parse_args(argv)

    backends = {"python": kernels.python_backend}
    if kernels.compiled_backend is not None:
        backends["compiled"] = kernels.compiled_backend
    else:
        print("compiled kernels not built; timing the fallback only", file=sys.stderr)

    print(f"{'kernel':<20} " + " ".join(f"{b + ' (ms)':>14}" for b in backends) + f" {'speedup':>8}")
    for name, fn in cases(args.events, args.seed).items():
        results = {b: fn(m) for b, m in backends.items()}
        if len(results) == 2 and not same(results["python"], results["compiled"]):
            raise SystemExit(f"{name}: backends disagree")
        ms = {b: 1e3 * min(timeit.repeat(lambda m=m: fn(m), number=1, repeat=args.repeat))
              for b, m in backends.items()}
        speed = ms["python"] / ms["compiled"] if "compiled" in ms else float("nan")
        print(f"{name:<20} " + " ".join(f"{v:>14.2f}" for v in ms.values()) + f" {speed:>7.1f}x")


if __name__ == "__main__":
    main()
