"""Exact rational sparse linear algebra.

Everything downstream (operator blocks, homology ranks, subspace
lattices) reduces to the primitives in this module: sparse matrices
over Q, fraction-free elimination, and subspaces stored in reduced
row-echelon form.  RREF is the unique canonical representative of a
row space, so Subspace equality is literal equality of bases and no
tolerance parameter exists anywhere.

Elimination first splits a matrix into connected components of its
support graph (rows/columns linked by nonzero entries).  The tensor
word bases built by the forms modules decompose into many small
components, which keeps exact elimination cheap.
"""

from __future__ import annotations

from fractions import Fraction
from math import gcd


class DimensionMismatch(ValueError):
    """Operands live in different ambient spaces."""


class InconsistentSystem(ValueError):
    """Right-hand side outside the column space."""


ZERO = Fraction(0)
ONE = Fraction(1)

# ---------------------------------------------------------------------------
# sparse matrices


class SparseMatrix:
    """Immutable sparse matrix over Q.

    Entries are kept in a dict {(row, col): Fraction} with no stored
    zeros; the canonical row-major entry tuple makes equality and
    hashing structural.
    """

    __slots__ = ("rows", "cols", "_d", "_entries", "_hash")

    def __init__(self, rows, cols, entries=()):
        assert rows >= 0 and cols >= 0
        d = {}
        items = entries.items() if isinstance(entries, dict) else entries
        for key, v in items:
            r, c = key
            if not (0 <= r < rows and 0 <= c < cols):
                raise DimensionMismatch(f"entry {key} outside {rows}x{cols}")
            v = Fraction(v)
            if v:
                d[r, c] = v
        self.rows = rows
        self.cols = cols
        self._d = d
        self._entries = None
        self._hash = None

    # -- construction helpers

    @staticmethod
    def identity(n):
        return SparseMatrix(n, n, {(i, i): ONE for i in range(n)})

    @staticmethod
    def zero(rows, cols):
        return SparseMatrix(rows, cols)

    @staticmethod
    def from_rows(rows_list, cols):
        d = {}
        for i, row in enumerate(rows_list):
            for c, v in row.items():
                if v:
                    d[i, c] = Fraction(v)
        return SparseMatrix(len(rows_list), cols, d)

    @staticmethod
    def from_columns(cols_list, rows):
        d = {}
        for j, col in enumerate(cols_list):
            for r, v in col.items():
                if v:
                    d[r, j] = Fraction(v)
        return SparseMatrix(rows, len(cols_list), d)

    # -- structural protocol

    @property
    def entries(self):
        if self._entries is None:
            self._entries = tuple(sorted(self._d.items()))
        return self._entries

    def __eq__(self, other):
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return (self.rows, self.cols) == (other.rows, other.cols) and self._d == other._d

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.rows, self.cols, self.entries))
        return self._hash

    def __repr__(self):
        return f"SparseMatrix({self.rows}x{self.cols}, nnz={len(self._d)})"

    def __getitem__(self, key):
        return self._d.get(key, ZERO)

    def is_zero(self):
        return not self._d

    def nnz(self):
        return len(self._d)

    def row_dicts(self):
        rows = [dict() for _ in range(self.rows)]
        for (r, c), v in self._d.items():
            rows[r][c] = v
        return rows

    def col_dicts(self):
        cols = [dict() for _ in range(self.cols)]
        for (r, c), v in self._d.items():
            cols[c][r] = v
        return cols

    # -- arithmetic

    def __add__(self, other):
        self._check_same_shape(other)
        d = dict(self._d)
        for k, v in other._d.items():
            w = d.get(k, ZERO) + v
            if w:
                d[k] = w
            else:
                d.pop(k, None)
        return SparseMatrix(self.rows, self.cols, d)

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return SparseMatrix(self.rows, self.cols, {k: -v for k, v in self._d.items()})

    def scale(self, a):
        a = Fraction(a)
        if not a:
            return SparseMatrix.zero(self.rows, self.cols)
        return SparseMatrix(self.rows, self.cols, {k: a * v for k, v in self._d.items()})

    def __mul__(self, other):
        if isinstance(other, SparseMatrix):
            if self.cols != other.rows:
                raise DimensionMismatch(f"{self.cols} vs {other.rows}")
            rows_b = [dict() for _ in range(other.rows)]
            for (r, c), v in other._d.items():
                rows_b[r][c] = v
            out = {}
            rows_a = [dict() for _ in range(self.rows)]
            for (r, c), v in self._d.items():
                rows_a[r][c] = v
            for i, ra in enumerate(rows_a):
                acc = {}
                for k, a in ra.items():
                    for j, b in rows_b[k].items():
                        w = acc.get(j, ZERO) + a * b
                        if w:
                            acc[j] = w
                        else:
                            del acc[j]
                for j, w in acc.items():
                    out[i, j] = w
            return SparseMatrix(self.rows, other.cols, out)
        return self.scale(other)

    __rmul__ = scale

    def transpose(self):
        return SparseMatrix(self.cols, self.rows, {(c, r): v for (r, c), v in self._d.items()})

    def apply(self, vec):
        """Matrix times column vector (vector = dict index -> Fraction)."""
        out = {}
        cols = vec.keys()
        rows = [dict() for _ in range(self.rows)]
        for (r, c), v in self._d.items():
            if c in cols:
                rows[r][c] = v
        for r, rd in enumerate(rows):
            s = ZERO
            for c, v in rd.items():
                s += v * vec[c]
            if s:
                out[r] = s
        return out

    def stack(self, other):
        """Rows of self on top of rows of other."""
        if self.cols != other.cols:
            raise DimensionMismatch(f"{self.cols} vs {other.cols}")
        d = dict(self._d)
        for (r, c), v in other._d.items():
            d[r + self.rows, c] = v
        return SparseMatrix(self.rows + other.rows, self.cols, d)

    def _check_same_shape(self, other):
        if (self.rows, self.cols) != (other.rows, other.cols):
            raise DimensionMismatch(f"{self.rows}x{self.cols} vs {other.rows}x{other.cols}")


# ---------------------------------------------------------------------------
# elimination core
#
# Rows are handled as primitive integer dicts {col: int}: multiply out
# denominators, divide by the content.  Row operations then stay in Z
# (fraction-free), with pivoting biased towards sparse rows and small
# entries.


def _primitive_int_row(row):
    den = 1
    for v in row.values():
        den = den * v.denominator // gcd(den, v.denominator)
    out = {}
    g = 0
    for c, v in row.items():
        n = int(v * den)
        if n:
            out[c] = n
            g = gcd(g, n)
    if g > 1:
        for c in out:
            out[c] //= g
    return out


def _column_components(rows):
    """Union-find over columns; returns list of row-index groups."""
    parent = {}

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for row in rows:
        it = iter(row)
        first = next(it, None)
        if first is None:
            continue
        if first not in parent:
            parent[first] = first
        a = find(first)
        for c in it:
            if c not in parent:
                parent[c] = c
            b = find(c)
            if a != b:
                parent[b] = a
    groups = {}
    for i, row in enumerate(rows):
        if not row:
            continue
        root = find(next(iter(row)))
        groups.setdefault(root, []).append(i)
    return list(groups.values())


def _eliminate_component(rows):
    """Gauss-Jordan on primitive integer rows; returns reduced rows.

    Pivots are chosen to limit fill-in (Markowitz-like score) with
    small-magnitude tie-breaking; the output spans the same row space
    with each pivot column hit by a single row.
    """
    rows = [dict(r) for r in rows]
    col_count = {}
    for r in rows:
        for c in r:
            col_count[c] = col_count.get(c, 0) + 1
    active = set(range(len(rows)))
    done = []
    while active:
        best = None
        for i in active:
            row = rows[i]
            if not row:
                continue
            rn = len(row) - 1
            for c, v in row.items():
                score = (rn * (col_count[c] - 1), v.bit_length(), c)
                if best is None or score < best[0]:
                    best = (score, i, c)
        if best is None:
            break
        _, pi, pc = best
        active.discard(pi)
        prow = rows[pi]
        pval = prow[pc]
        touched = [j for j in range(len(rows)) if j != pi and pc in rows[j]]
        for j in touched:
            row = rows[j]
            a = row[pc]
            for c in row:
                col_count[c] -= 1
            new = {}
            g = 0
            for c in set(row) | set(prow):
                w = pval * row.get(c, 0) - a * prow.get(c, 0)
                if w:
                    new[c] = w
                    g = gcd(g, w)
            if g > 1:
                for c in new:
                    new[c] //= g
            rows[j] = new
            for c in new:
                col_count[c] = col_count.get(c, 0) + 1
        done.append(pi)
    return [rows[i] for i in done if rows[i]]


def _canonical_rref(int_rows):
    """Textbook RREF over Q from independent integer rows."""
    work = [{c: Fraction(v) for c, v in r.items()} for r in int_rows if r]
    result = []
    pivots = []
    while work:
        lead = min(min(r) for r in work)
        pi = next(i for i, r in enumerate(work) if r.get(lead))
        prow = work.pop(pi)
        inv = ONE / prow[lead]
        prow = {c: v * inv for c, v in prow.items()}
        for rows_set in (work, result):
            for i, r in enumerate(rows_set):
                a = r.get(lead)
                if a:
                    new = dict(r)
                    for c, v in prow.items():
                        w = new.get(c, ZERO) - a * v
                        if w:
                            new[c] = w
                        else:
                            new.pop(c, None)
                    rows_set[i] = new
        result.append(prow)
        pivots.append(lead)
    order = sorted(range(len(result)), key=lambda i: pivots[i])
    return [pivots[i] for i in order], [result[i] for i in order]


def rref(m: SparseMatrix):
    """Reduced row-echelon form of the row space.

    Returns (pivot columns, rows as Fraction dicts), sorted by pivot.
    """
    int_rows = [_primitive_int_row(r) for r in m.row_dicts()]
    int_rows = [r for r in int_rows if r]
    reduced = []
    for group in _column_components(int_rows):
        reduced.extend(_eliminate_component([int_rows[i] for i in group]))
    return _canonical_rref(reduced)


def rank(m: SparseMatrix) -> int:
    return len(rref(m)[0])


# ---------------------------------------------------------------------------
# subspaces


class Subspace:
    """A subspace of Q^n held by its unique RREF basis (rows)."""

    __slots__ = ("ambient_dim", "pivots", "basis_rows")

    def __init__(self, ambient_dim, pivots, basis_rows):
        self.ambient_dim = ambient_dim
        self.pivots = tuple(pivots)
        self.basis_rows = tuple(
            tuple(sorted(r.items())) for r in basis_rows
        )
        for p, row in zip(self.pivots, self.basis_rows):
            assert row and row[0][0] == p and row[0][1] == 1

    @staticmethod
    def from_vectors(ambient_dim, vectors):
        m = SparseMatrix.from_rows(list(vectors), ambient_dim)
        pivots, rows = rref(m)
        return Subspace(ambient_dim, pivots, rows)

    @staticmethod
    def zero(ambient_dim):
        return Subspace(ambient_dim, (), ())

    @staticmethod
    def full(ambient_dim):
        return Subspace(
            ambient_dim, range(ambient_dim), [{i: ONE} for i in range(ambient_dim)]
        )

    @property
    def dim(self):
        return len(self.pivots)

    def basis_matrix(self) -> SparseMatrix:
        return SparseMatrix.from_rows([dict(r) for r in self.basis_rows], self.ambient_dim)

    def __eq__(self, other):
        if not isinstance(other, Subspace):
            return NotImplemented
        return (
            self.ambient_dim == other.ambient_dim
            and self.pivots == other.pivots
            and self.basis_rows == other.basis_rows
        )

    def __hash__(self):
        return hash((self.ambient_dim, self.pivots, self.basis_rows))

    def __repr__(self):
        return f"Subspace(dim={self.dim} in Q^{self.ambient_dim})"

    def reduce(self, vec):
        """Subtract the projection onto the basis rows; the remainder is
        zero iff vec lies in the subspace."""
        v = {c: Fraction(x) for c, x in vec.items() if x}
        for p, row in zip(self.pivots, self.basis_rows):
            a = v.get(p)
            if a:
                for c, w in row:
                    x = v.get(c, ZERO) - a * w
                    if x:
                        v[c] = x
                    else:
                        v.pop(c, None)
        return v

    def contains(self, vec) -> bool:
        return not self.reduce(vec)

    def contains_space(self, other) -> bool:
        self._check_ambient(other)
        return all(self.contains(dict(r)) for r in other.basis_rows)

    def coordinates(self, vec):
        """Coefficients of vec in the RREF basis; raises if outside."""
        v = {c: Fraction(x) for c, x in vec.items() if x}
        coords = {}
        for i, (p, row) in enumerate(zip(self.pivots, self.basis_rows)):
            a = v.get(p)
            if a:
                coords[i] = a
                for c, w in row:
                    x = v.get(c, ZERO) - a * w
                    if x:
                        v[c] = x
                    else:
                        v.pop(c, None)
        if v:
            raise InconsistentSystem("vector not in subspace")
        return coords

    def _check_ambient(self, other):
        if self.ambient_dim != other.ambient_dim:
            raise DimensionMismatch(
                f"ambient {self.ambient_dim} vs {other.ambient_dim}"
            )


def kernel_basis(m: SparseMatrix) -> Subspace:
    pivots, rows = rref(m)
    pivot_set = set(pivots)
    gens = []
    for f in range(m.cols):
        if f in pivot_set:
            continue
        v = {f: ONE}
        for p, row in zip(pivots, rows):
            a = row.get(f)
            if a:
                v[p] = -a
        gens.append(v)
    return Subspace.from_vectors(m.cols, gens)


def image_basis(m: SparseMatrix) -> Subspace:
    pivots, rows = rref(m.transpose())
    return Subspace(m.rows, pivots, rows)


def subspace_sum(a: Subspace, b: Subspace) -> Subspace:
    a._check_ambient(b)
    return Subspace.from_vectors(
        a.ambient_dim, [dict(r) for r in a.basis_rows + b.basis_rows]
    )


def subspace_intersect(a: Subspace, b: Subspace) -> Subspace:
    # Zassenhaus: RREF of [[v|v], [w|0]]; rows with zero left half carry
    # the intersection in their right half.
    a._check_ambient(b)
    n = a.ambient_dim
    gens = []
    for r in a.basis_rows:
        row = {}
        for c, v in r:
            row[c] = v
            row[c + n] = v
        gens.append(row)
    for r in b.basis_rows:
        gens.append({c: v for c, v in r})
    pivots, rows = rref(SparseMatrix.from_rows(gens, 2 * n))
    inter = []
    for p, row in zip(pivots, rows):
        if p >= n:
            inter.append({c - n: v for c, v in row.items()})
    return Subspace.from_vectors(n, inter)


def quotient_map(ambient_dim: int, sub: Subspace) -> SparseMatrix:
    """Canonical surjection Q^n -> Q^(n-dim sub) with kernel sub.

    Coordinates on the quotient are indexed by the non-pivot columns of
    sub; the map reduces a vector by the RREF rows and reads off those
    coordinates.
    """
    if sub.ambient_dim != ambient_dim:
        raise DimensionMismatch(f"{sub.ambient_dim} vs {ambient_dim}")
    pivot_set = set(sub.pivots)
    free = [c for c in range(ambient_dim) if c not in pivot_set]
    d = {}
    for j, f in enumerate(free):
        d[j, f] = ONE
        for p, row in zip(sub.pivots, sub.basis_rows):
            v = dict(row).get(f)
            if v:
                d[j, p] = -v
    return SparseMatrix(len(free), ambient_dim, d)


def quotient_section(ambient_dim: int, sub: Subspace) -> SparseMatrix:
    """Right inverse of quotient_map: unit vectors at non-pivot columns."""
    if sub.ambient_dim != ambient_dim:
        raise DimensionMismatch(f"{sub.ambient_dim} vs {ambient_dim}")
    pivot_set = set(sub.pivots)
    free = [c for c in range(ambient_dim) if c not in pivot_set]
    return SparseMatrix(ambient_dim, len(free), {(f, j): ONE for j, f in enumerate(free)})


def preimage(m: SparseMatrix, s: Subspace) -> Subspace:
    """{v : m v in s}."""
    if s.ambient_dim != m.rows:
        raise DimensionMismatch(f"{s.ambient_dim} vs {m.rows}")
    q = quotient_map(m.rows, s)
    return kernel_basis(q * m)


def solve_columns(m: SparseMatrix, b: SparseMatrix) -> SparseMatrix:
    """X with m X = b (free variables set to zero); raises if inconsistent."""
    if m.rows != b.rows:
        raise DimensionMismatch(f"{m.rows} vs {b.rows}")
    aug = SparseMatrix(
        m.rows,
        m.cols + b.cols,
        dict(list(m._d.items()) + [((r, c + m.cols), v) for (r, c), v in b._d.items()]),
    )
    pivots, rows = rref(aug)
    out = {}
    for p, row in zip(pivots, rows):
        if p >= m.cols:
            raise InconsistentSystem("rhs not in column space")
        for c, v in row.items():
            if c >= m.cols and v:
                out[p, c - m.cols] = v
    return SparseMatrix(m.cols, b.cols, out)
