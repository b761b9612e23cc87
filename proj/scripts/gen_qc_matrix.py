#!/usr/bin/env python3
"""Generates the default rate-1/2 quasi-cyclic parity-check matrix.

Base graph: 12 x 24, lift size Z = 54 (N = 1296, K = 648). The 12 information
columns have degree 3 with randomized circulant shifts; the 12 parity columns
form the usual dual-diagonal structure. Shifts are rejection-sampled so the
lifted graph has no 4-cycles (girth >= 6). Deterministic seed, so the shipped
matrix is reproducible.

Output format: "N K R" header, then one line per check row listing 0-based
variable indices.
"""

import random
import sys

Z = 54
ROWS, COLS = 12, 24
INFO_COLS = 12

def four_cycle_free(cols):
    """cols: per column, list of (row, shift). Checks the QC 4-cycle condition."""
    for c1 in range(len(cols)):
        for c2 in range(c1 + 1, len(cols)):
            shared = {}
            for r, s in cols[c1]:
                shared[r] = s
            for r, s in cols[c2]:
                if r in shared:
                    pass
            common = [(r, s1, dict(cols[c2])[r]) for r, s1 in cols[c1] if r in dict(cols[c2])]
            for i in range(len(common)):
                for j in range(i + 1, len(common)):
                    r1, a1, b1 = common[i]
                    r2, a2, b2 = common[j]
                    if (a1 - b1 - a2 + b2) % Z == 0:
                        return False
    return True

def main():
    rng = random.Random(20240811)
    while True:
        cols = []
        ok = True
        # Information columns: degree 3, distinct rows, random shifts.
        for c in range(INFO_COLS):
            for _ in range(200):
                rows = sorted(rng.sample(range(ROWS), 3))
                shifts = [rng.randrange(Z) for _ in range(3)]
                cand = cols + [list(zip(rows, shifts))]
                if four_cycle_free(cand):
                    cols = cand
                    break
            else:
                ok = False
                break
        if not ok:
            continue
        # Parity columns: first column degree 3 (rows 0, 6, 11), then the
        # dual diagonal with zero shifts.
        first = [(0, 1), (6, 0), (11, 1)]
        if not four_cycle_free(cols + [first]):
            continue
        cols.append(first)
        failed = False
        for j in range(1, ROWS):
            col = [(j - 1, 0), (j, 0)]
            if not four_cycle_free(cols + [col]):
                failed = True
                break
            cols.append(col)
        if failed:
            continue
        break

    # Expand the lift: check row = base_row * Z + z.
    checks = [[] for _ in range(ROWS * Z)]
    for c, entries in enumerate(cols):
        for r, s in entries:
            for z in range(Z):
                checks[r * Z + z].append(c * Z + (z + s) % Z)
    n = COLS * Z
    k = INFO_COLS * Z
    out = sys.stdout
    out.write(f"{n} {k} {len(checks)}\n")
    for row in checks:
        out.write(" ".join(str(v) for v in sorted(row)) + "\n")

if __name__ == "__main__":
    main()
