"""Regenerates dot_norm_oracle.csv: k / ln(1 + tok) at 50 significant digits.

    python3 tests/data/gen/dot_norm_oracle.py > tests/data/dot_norm_oracle.csv
"""
import math
import random

from mpmath import mp, mpf, log, nstr

mp.dps = 60
rng = random.Random(20240501)

pairs = [(1, 1), (50, 1), (1, 10**6), (50, 10**6), (2, 10), (1, 2), (3, 3)]
while len(pairs) < 1000:
    k = rng.randint(1, 50)
    # Log-uniform token counts so small and large traces are both covered.
    tok = min(10**6, max(1, int(math.exp(rng.uniform(0.0, math.log(10**6 + 1))))))
    pairs.append((k, tok))

print("# k / ln(1 + tok), 50 significant digits (mpmath, 60-digit working precision)")
print("k,tok,dot_norm")
for k, tok in pairs:
    print(f"{k},{tok},{nstr(mpf(k) / log(1 + mpf(tok)), 50, strip_zeros=False)}")
