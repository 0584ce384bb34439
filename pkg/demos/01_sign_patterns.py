"""The deterministic sign sequence and its pairwise cancellation structure.

Every quadrature node in this package is built from one reflected pair
``mu +- sigma * s_k``, where ``s_k`` is row ``k`` of a fixed, structured
sign table.  This script prints the table, shows how quickly each pair of
coordinates decorrelates, and verifies the headline guarantee: averaging
an aligned window of pairs kills every mixed second moment exactly.
"""

import numpy as np

from mfquad import exactness_period, full_period, sign_sequence

d = 8
n_show = 16
signs = sign_sequence(d, 0, n_show)

print(f"sign table, d = {d}, first {n_show} vectors (+ = +1, - = -1)")
print("  k |", " ".join(f"i={i}" for i in range(d)))
for k, row in enumerate(signs):
    cells = " ".join(" + " if v > 0 else " - " for v in row)
    print(f" {k:2d} | {cells}")

# Read the columns: coordinate 0 never flips, coordinate 1 alternates every
# step, coordinates 2-3 repeat every 4 steps, 4-7 every 8 -- each coordinate
# tracks the parity of the index bits selected by its own binary digits, and
# the whole table repeats after full_period(d) rows (see rows 8-15).

print("\nexactness periods (pairs needed before the product i1*i2 cancels)")
print(" i1, i2 | period")
for i1, i2 in [(0, 1), (0, 2), (1, 3), (2, 3), (3, 4), (6, 7)]:
    print(f"  {i1}, {i2:2d} | {exactness_period(i1, i2):4d}")
print(f"full period covering every pair at d={d}: {full_period(d)} pairs")

# The guarantee: within one aligned window of exactness_period(i1, i2)
# consecutive sign vectors, the empirical correlation of columns i1 and i2
# is exactly zero, so a quadrature built on that window integrates the
# cross term theta_i1 * theta_i2 with no error at all.

print("\nwindow-mean of s[:, i1] * s[:, i2] over one aligned period")
long_run = sign_sequence(d, 0, 3 * full_period(d))
for i1, i2 in [(0, 1), (2, 3), (3, 4), (6, 7)]:
    period = exactness_period(i1, i2)
    means = [
        float(np.mean(long_run[z * period : (z + 1) * period, i1]
                      * long_run[z * period : (z + 1) * period, i2]))
        for z in range(3)
    ]
    print(f"  pair ({i1},{i2}), period {period:2d}: windows -> {means}")

# Alignment matters whenever the two coordinates differ in more than one
# binary digit: pair (1, 2) has period 2, but a window straddling the
# aligned boundary catches two equal products and does not cancel.
period = exactness_period(1, 2)
shifted = long_run[1 : 1 + period, 1] * long_run[1 : 1 + period, 2]
print(f"\npair (1,2) shifted by one row (misaligned): mean = {shifted.mean():+.1f}")
print("alignment matters: the helpers in this package pick aligned starts for you.")
