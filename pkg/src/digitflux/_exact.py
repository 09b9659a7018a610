"""Small exact linear algebra over ``Fraction`` (dense, Gaussian elimination)."""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

Matrix = list[list[Fraction]]


def to_fractions(a: Sequence[Sequence]) -> Matrix:
    return [[Fraction(x) for x in row] for row in a]


def rref(a: Matrix) -> tuple[Matrix, list[int]]:
    """Reduced row echelon form and pivot columns (input is not modified)."""
    m = [row[:] for row in a]
    rows = len(m)
    cols = len(m[0]) if rows else 0
    pivots: list[int] = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        piv = next((i for i in range(r, rows) if m[i][c] != 0), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        inv = 1 / m[r][c]
        m[r] = [x * inv for x in m[r]]
        for i in range(rows):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                ri = m[i]
                rr = m[r]
                m[i] = [x - f * y for x, y in zip(ri, rr)]
        pivots.append(c)
        r += 1
    return m, pivots


def solve(a: Matrix, b: Sequence[Fraction]) -> list[Fraction]:
    """Solve ``a x = b``; ``a`` must be square and non-singular."""
    n = len(a)
    aug = [list(row) + [Fraction(b[i])] for i, row in enumerate(a)]
    red, pivots = rref(aug)
    if pivots != list(range(n)):
        raise ZeroDivisionError("singular system")
    return [red[i][n] for i in range(n)]


def solve_consistent(a: Matrix, b: Sequence[Fraction]) -> list[Fraction]:
    """One solution of a possibly singular but consistent system.

    Free variables are set to zero.  Raises ``ValueError`` if inconsistent.
    """
    rows = len(a)
    cols = len(a[0]) if rows else 0
    aug = [list(row) + [Fraction(b[i])] for i, row in enumerate(a)]
    red, pivots = rref(aug)
    if cols in pivots:
        raise ValueError("inconsistent system")
    x = [Fraction(0)] * cols
    for i, c in enumerate(pivots):
        x[c] = red[i][cols]
    return x


def transpose(a: Matrix) -> Matrix:
    return [list(col) for col in zip(*a)]


def matvec(a: Matrix, v: Sequence[Fraction]) -> list[Fraction]:
    return [sum((x * y for x, y in zip(row, v)), Fraction(0)) for row in a]


def vecmat(v: Sequence[Fraction], a: Matrix) -> list[Fraction]:
    n = len(a[0]) if a else 0
    out = [Fraction(0)] * n
    for vi, row in zip(v, a):
        if vi:
            for j, x in enumerate(row):
                if x:
                    out[j] += vi * x
    return out


def dot(u: Sequence[Fraction], v: Sequence[Fraction]) -> Fraction:
    return sum((x * y for x, y in zip(u, v)), Fraction(0))
