"""Stretch a base table of n positions to cover n squared.

The first n indices return base rows untouched. Beyond that, index k splits
into digits (i, j) base n and blends the two rows unevenly. The uneven
blend is what keeps (i, j) and (j, i) distinct; the only unavoidable
repeats are the diagonal indices i*n+i, which blend a row with itself.
"""

import numpy as np

from mces import PositionalTable, enumerate_collisions, extended_position


def main() -> int:
    table = PositionalTable.gaussian(n=6, dim=8, seed=42)
    print(f"base table: {table.n} rows, reaches {table.max_positions} positions,"
          f" blend {table.blend}\n")

    for k in (0, 5, 6, 17, 35):
        vec = extended_position(table, k)
        i, j = divmod(k, table.n)
        note = "base row" if k < table.n else f"{table.blend}*row{i} + {1 - table.blend}*row{j}"
        print(f"  position {k:2d}: first coords [{vec[0]:+.3f} {vec[1]:+.3f} "
              f"{vec[2]:+.3f} ...]  ({note})")

    print("\nbitwise check: position k < n shares memory with the base table:",
          np.shares_memory(extended_position(table, 3), table.base))

    hits = enumerate_collisions(table)
    pairs = table.max_positions * (table.max_positions - 1) // 2
    print(f"\ncollision scan over all {pairs} pairs:")
    for k1, k2 in hits:
        i = k2 // table.n
        print(f"  {k1:2d} == {k2:2d}  (index {k2} is {i}*{table.n}+{i}, "
              f"the self-blend of row {i})")

    even = PositionalTable(base=table.base, blend=0.5)
    extra = [pair for pair in enumerate_collisions(even) if pair not in hits]
    print(f"\nan even 0.5 blend would add {len(extra)} more collisions "
          f"(every (i,j)/(j,i) swap), first few: {extra[:3]}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
