"""Monte Carlo oracle for the Haar mean of primitive ball counts in d = 2.

Samples lattices from the standard fundamental domain of the modular surface
with the hyperbolic measure dx dy / y^2 and counts primitive vectors (both
signs) of norm at most r.  Independent of the driftwalk package: it only
uses numpy, and it parametrises lattices by the upper half-plane instead of
by walks.

The lattice attached to tau = x + iy is y^(-1/2) (Z + tau Z) in C = R^2,
which has covolume 1.  The fundamental domain is |x| <= 1/2, |tau| >= 1, and
y is drawn from the Pareto density (sqrt(3)/2) / y^2 on [sqrt(3)/2, inf),
followed by rejection of |tau| < 1.

Usage: python scripts/siegel_reference.py [samples] [seed] [r]
"""

import sys
from math import gcd

import numpy as np


def sample_domain(rng, n):
    y0 = np.sqrt(3) / 2
    out_x, out_y, have = [], [], 0
    while have < n:
        x = rng.uniform(-0.5, 0.5, 2 * n)
        y = y0 / (1.0 - rng.random(2 * n))
        keep = x * x + y * y >= 1.0
        out_x.append(x[keep])
        out_y.append(y[keep])
        have += int(keep.sum())
    return np.concatenate(out_x)[:n], np.concatenate(out_y)[:n]


def primitive_count(x, y, r):
    """Count (m, n) with gcd 1 and |m + n tau|^2 / y <= r^2, both signs."""
    count = np.zeros(x.shape, dtype=np.int64)
    # |m + n tau|^2 >= n^2 y^2, so n^2 y <= r^2; and |m + n x| <= r sqrt(y).
    n_max = int(np.floor(r / np.sqrt(y.min())))
    m_max = int(np.ceil(r * np.sqrt(y.max()) + n_max * 0.5)) + 1
    for n in range(-n_max, n_max + 1):
        for m in range(-m_max, m_max + 1):
            if gcd(m, n) != 1:
                continue
            norm2 = ((m + n * x) ** 2 + (n * y) ** 2) / y
            count += norm2 <= r * r
    return count


def main(samples=4_000_000, seed=20240601, r=1.0, batch=200_000):
    rng = np.random.default_rng(seed)
    total = total2 = 0.0
    done = 0
    while done < samples:
        m = min(batch, samples - done)
        x, y = sample_domain(rng, m)
        # Above height r^2 only the two vectors +-1 can be short; this also keeps the loop bounds small.
        c = np.empty(m)
        tall = y > r * r + 1
        c[tall] = 2 * (1.0 / np.sqrt(y[tall]) <= r)
        c[~tall] = primitive_count(x[~tall], y[~tall], r)
        total += c.sum()
        total2 += (c * c).sum()
        done += m
    mean = total / samples
    se = np.sqrt((total2 / samples - mean**2) / samples)
    print(f"samples={samples} seed={seed} r={r:g}")
    print(f"mean={mean:.6f} stderr={se:.6f}")
    print(f"6 r^2 / pi = {6 * r * r / np.pi:.6f}")
    return mean, se


if __name__ == "__main__":
    args = sys.argv[1:]
    main(int(args[0]) if args else 4_000_000, int(args[1]) if len(args) > 1 else 20240601,
         float(args[2]) if len(args) > 2 else 1.0)
