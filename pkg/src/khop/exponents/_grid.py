"""Exhaustive search over grid channels whose objective and constraint split over output columns.

A channel with ``a`` input rows and ``m`` output columns, entries k/G, is a
list of ``m`` columns. When both functionals are sums of per-column terms, the
terms are tabulated once over all (G+1)^a columns and every channel is scored
by ``m`` table lookups.
"""
import itertools

import numpy as np


def grid_columns(G, a):
    """All columns with entries k/G, row-major so that index = sum_y k_y (G+1)^y."""
    cols = np.array(list(itertools.product(range(G + 1), repeat=a)), dtype=float) / G
    return cols[:, ::-1]


def simplex_grid(steps, m):
    """All compositions of ``steps`` into ``m`` nonnegative parts, shape (S, m)."""
    out = []
    for cuts in itertools.combinations(range(steps + m - 1), m - 1):
        prev, row = -1, []
        for c in cuts:
            row.append(c - prev - 1)
            prev = c
        row.append(steps + m - 2 - prev)
        out.append(row)
    return np.array(out, dtype=np.int64)


def scan(phi_con, phi_obj, a, m, G, chunk_elems=2**21):
    """Yield (constraint, objective) arrays covering every grid channel up to column relabelling.

    Both functionals are invariant under permuting output labels, so the first
    row is restricted to sorted compositions.
    """
    grid = simplex_grid(G, m)
    first = grid[np.all(np.diff(grid, axis=1) <= 0, axis=1)]
    if a == 1:
        yield phi_con[first].sum(axis=1), phi_obj[first].sum(axis=1)
        return
    radix = (G + 1) ** np.arange(a)
    # phi[h + radix[a-1]*k] viewed as table[h, k]: head partial index h, last-row entry k
    tab_c = phi_con.reshape(G + 1, -1).T
    tab_o = phi_obj.reshape(G + 1, -1).T
    heads = [first * radix[0]]
    for y in range(1, a - 1):
        heads = [h + g * radix[y] for h in heads for g in grid]
    base = np.concatenate(heads)
    chunk = max(1, chunk_elems // len(grid))
    for lo in range(0, len(base), chunk):
        h = base[lo:lo + chunk]
        c = sum(tab_c[h[:, u]][:, grid[:, u]] for u in range(m)).ravel()
        o = sum(tab_o[h[:, u]][:, grid[:, u]] for u in range(m)).ravel()
        yield c, o
