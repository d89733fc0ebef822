"""Regenerate the frozen Schnorr group constants in crypto_suite.

    python scripts/gen_groups.py
"""

import time

from prettiness.crypto_suite import Rng, generate_group

SPECS = [("schnorr-2048-256", 2048, 256, 20260101), ("schnorr-1024-160-test", 1024, 160, 20260102)]

if __name__ == "__main__":
    for name, pbits, qbits, seed in SPECS:
        t = time.perf_counter()
        grp = generate_group(name, pbits, qbits, Rng(seed))
        print(f"# {name}: seed={seed}, {time.perf_counter() - t:.1f}s")
        print(f"P = 0x{grp.p:x}\nQ = 0x{grp.q:x}\nG = 0x{grp.g:x}\n")
