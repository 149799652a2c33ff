"""Arithmetic coder throughput: numba kernels vs the plain Python loops.

    python benchmarks/bench_coder.py --symbols 20000 --repeats 3
"""

import argparse
import time

import numpy as np

from edgeret import arith_coder as ac
from edgeret._accel import HAVE_NUMBA
from edgeret.entropy_model import GmmParams


def _best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _inputs(n, seed):
    params = GmmParams.from_natural([0.6, 0.4], [0.0, 3.0], [1.5, 4.0])
    table = ac.build_table(params)
    rng = np.random.default_rng(seed)
    p = table.probabilities()[:-1]
    q = rng.choice(np.arange(table.q_min, table.q_max + 1), size=n, p=p / p.sum())
    q[:: max(1, n // 50)] = 500  # a sprinkling of escapes
    slots = np.where((q >= table.q_min) & (q <= table.q_max), q - table.q_min, table.escape).astype(np.int64)
    return table, q.astype(np.int64), slots


def run(n, repeats, seed=0):
    table, q, slots = _inputs(n, seed)
    out = np.zeros(36 * n + 64, dtype=np.uint8)
    stream = ac.encode(q, table)
    bits = np.unpackbits(np.frombuffer(stream.data, dtype=np.uint8))[: stream.bit_count].astype(np.int64)
    s_out = np.zeros(n, dtype=np.int64)
    r_out = np.zeros(n, dtype=np.int64)

    impls = {"python": (ac._encode_kernel.py_func, ac._decode_kernel.py_func)}
    if HAVE_NUMBA:
        impls["numba"] = (ac._encode_kernel, ac._decode_kernel)
        impls["numba"][0](slots[:8], q[:8], table.cumulative, table.escape, out)  # compile
        impls["numba"][1](bits, stream.bit_count, 8, table.cumulative, table.escape, s_out, r_out)

    results = {}
    for name, (enc, dec) in impls.items():
        t_enc = _best_of(lambda: enc(slots, q, table.cumulative, table.escape, out), repeats)
        t_dec = _best_of(lambda: dec(bits, stream.bit_count, n, table.cumulative, table.escape, s_out, r_out),
                         repeats)
        results[name] = (t_enc, t_dec)
    return results, stream.bit_count / n


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--symbols", type=int, default=20000)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    results, bps = run(args.symbols, args.repeats, args.seed)
    print(f"{args.symbols} symbols, {bps:.3f} bits/symbol")
    print(f"{'backend':<8} {'encode Msym/s':>14} {'decode Msym/s':>14}")
    for name, (te, td) in results.items():
        print(f"{name:<8} {args.symbols / te / 1e6:>14.3f} {args.symbols / td / 1e6:>14.3f}")
    if "numba" in results:
        pe, pd = results["python"]
        ne, nd = results["numba"]
        print(f"speedup  encode x{pe / ne:.1f}  decode x{pd / nd:.1f}")


if __name__ == "__main__":
    main()
