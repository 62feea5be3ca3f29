"""Small exact linear algebra over Fraction, used by the algebraic modules.

Matrices are tuples of row tuples.  Vectors are row vectors throughout the
package: a lattice point is k @ basis + shift with k a row vector, so
vec_mat computes v * M.
"""

from __future__ import annotations

from fractions import Fraction

from .errors import DegenerateForm, DimensionMismatch


def as_matrix(rows) -> tuple:
    return tuple(tuple(Fraction(x) for x in row) for row in rows)


def identity(n: int) -> tuple:
    return tuple(
        tuple(Fraction(1) if i == j else Fraction(0) for j in range(n))
        for i in range(n)
    )


def transpose(m) -> tuple:
    return tuple(zip(*m))


def mat_mul(a, b) -> tuple:
    if len(a[0]) != len(b):
        raise DimensionMismatch("matrix product shape mismatch")
    bt = list(zip(*b))
    return tuple(
        tuple(sum(x * y for x, y in zip(row, col)) for col in bt) for row in a
    )


def vec_mat(v, m) -> tuple:
    if len(v) != len(m):
        raise DimensionMismatch("vector-matrix shape mismatch")
    return tuple(sum(v[i] * m[i][j] for i in range(len(v))) for j in range(len(m[0])))


def mat_vec(m, v) -> tuple:
    return tuple(sum(row[j] * v[j] for j in range(len(v))) for row in m)


def dot(u, v) -> Fraction:
    return sum(a * b for a, b in zip(u, v))


def scale(m, c) -> tuple:
    c = Fraction(c)
    return tuple(tuple(c * x for x in row) for row in m)


def det(m) -> Fraction:
    """Fraction Gaussian elimination with partial pivoting by exact nonzero."""
    n = len(m)
    a = [list(row) for row in m]
    result = Fraction(1)
    for col in range(n):
        pivot = None
        for r in range(col, n):
            if a[r][col] != 0:
                pivot = r
                break
        if pivot is None:
            return Fraction(0)
        if pivot != col:
            a[col], a[pivot] = a[pivot], a[col]
            result = -result
        result *= a[col][col]
        inv = 1 / a[col][col]
        for r in range(col + 1, n):
            if a[r][col] != 0:
                f = a[r][col] * inv
                for c in range(col, n):
                    a[r][c] -= f * a[col][c]
    return result


def inverse(m) -> tuple:
    n = len(m)
    a = [list(row) + list(identity(n)[i]) for i, row in enumerate(m)]
    for col in range(n):
        pivot = None
        for r in range(col, n):
            if a[r][col] != 0:
                pivot = r
                break
        if pivot is None:
            raise DegenerateForm("matrix is singular")
        a[col], a[pivot] = a[pivot], a[col]
        inv = 1 / a[col][col]
        a[col] = [x * inv for x in a[col]]
        for r in range(n):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
    return tuple(tuple(row[n:]) for row in a)


def solve_right_nullspace(rows) -> list:
    """Basis of {x : rows @ x^T = 0} for a list of row vectors, over Fraction."""
    if not rows:
        raise DimensionMismatch("empty system")
    n = len(rows[0])
    a = [list(r) for r in rows]
    m = len(a)
    pivots = []
    row = 0
    for col in range(n):
        piv = None
        for r in range(row, m):
            if a[r][col] != 0:
                piv = r
                break
        if piv is None:
            continue
        a[row], a[piv] = a[piv], a[row]
        inv = 1 / a[row][col]
        a[row] = [x * inv for x in a[row]]
        for r in range(m):
            if r != row and a[r][col] != 0:
                f = a[r][col]
                a[r] = [x - f * y for x, y in zip(a[r], a[row])]
        pivots.append(col)
        row += 1
        if row == m:
            break
    free = [c for c in range(n) if c not in pivots]
    basis = []
    for fc in free:
        v = [Fraction(0)] * n
        v[fc] = Fraction(1)
        for r, pc in enumerate(pivots):
            v[pc] = -a[r][fc]
        basis.append(tuple(v))
    return basis
