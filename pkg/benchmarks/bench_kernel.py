"""Benchmark: compiled rewriting kernel vs the pure-Python fallback.

Micro level: normalization and substitution throughput over a random term
corpus, cold and warm caches. Macro level: a full bounded distinguishing
experiment per kernel, run in subprocesses so import-time selection applies.

Usage: python3 benchmarks/bench_kernel.py [--samples N] [--depth D]
"""

import argparse
import os
import random
import subprocess
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from utxsim import _kernel as pure                      # noqa: E402
from utxsim import terms as T                           # noqa: E402
from utxsim.concrete import random_term                 # noqa: E402

try:
    from utxsim import _kernel_c as compiled
except ImportError:
    compiled = None


def corpus(samples, depth):
    rng = random.Random("bench")
    names = [T.name(f"s{i}", "scalar") for i in range(6)]
    names += [T.name(f"d{i}") for i in range(4)]
    return [random_term(rng, rng.randrange(1, depth + 1), names)
            for _ in range(samples)]


def time_kernel(kernel, terms):
    kernel.clear_cache()
    t0 = time.perf_counter()
    for t in terms:
        kernel.normalize(t)
    cold = time.perf_counter() - t0
    t0 = time.perf_counter()
    for t in terms:
        kernel.normalize(t)
    warm = time.perf_counter() - t0
    env = {"x": T.gen()}
    t0 = time.perf_counter()
    for t in terms:
        kernel.subst_vars(t, env)
    subst = time.perf_counter() - t0
    return cold, warm, subst


def macro(env_extra):
    env = dict(os.environ, **env_extra)
    env["PYTHONPATH"] = os.path.join(os.path.dirname(__file__), "..", "src")
    code = ("import time,utxsim.terms as T,utxsim.checks as C;"
            "t0=time.perf_counter();"
            "r=C.run_suite('controls',seed=0,test_bound=6);"
            "print(f'{time.perf_counter()-t0:.3f} {T.KERNEL_BUILD}')")
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True, check=True)
    return out.stdout.strip()


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--samples", type=int, default=20000)
    ap.add_argument("--depth", type=int, default=7)
    args = ap.parse_args()
    terms = corpus(args.samples, args.depth)
    print(f"corpus: {len(terms)} random terms, depth <= {args.depth}\n")
    rows = [("pure", pure)]
    if compiled is not None:
        rows.append(("compiled", compiled))
    baseline = None
    for label, kernel in rows:
        cold, warm, subst = time_kernel(kernel, terms)
        if baseline is None:
            baseline = cold
        print(f"{label:>9}: normalize cold {cold*1e6/len(terms):8.2f} us/term"
              f"  warm {warm*1e6/len(terms):6.2f} us/term"
              f"  subst {subst*1e6/len(terms):6.2f} us/term"
              f"  speedup x{baseline/cold:.2f}")
    if compiled is None:
        print("\ncompiled kernel not built; run pip install -e . first")
        return
    print("\ncontrols suite end-to-end (seconds, kernel):")
    print("  " + macro({"UTXSIM_PURE": "1"}))
    print("  " + macro({}))


if __name__ == "__main__":
    main()
