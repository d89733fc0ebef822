"""Random honest scripts through both worlds, with a per-error tally.

    python3 scripts/run_differential.py --count 1000 --seed 2024
"""

import argparse
import collections
import time
import warnings

from prettiness import harness as hz
from prettiness.crypto_suite import Rng

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--count", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()
    warnings.simplefilter("ignore", UserWarning)  # small test keys

    root = Rng(args.seed)
    errors, ops, problems = collections.Counter(), collections.Counter(), []
    t = time.perf_counter()
    for k in range(args.count):
        script = hz.random_honest_script(root.fork(f"script/{k}"))
        result = hz.run_scenario(script, k)
        ops.update(ev["op"] for ev in script)
        errors.update(result.errors.values())
        problems += [(k, p) for p in hz.audit_honest(script, result)]
    dt = time.perf_counter() - t
    print(f"{args.count} scripts in {dt:.1f} s, {len(problems)} problems")
    print("events:", dict(ops.most_common()))
    print("failures:", dict(errors.most_common()))
    for k, p in problems[:20]:
        print(f"  script {k}: {p}")
