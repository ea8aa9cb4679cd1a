"""Noncommutative differential forms, blockwise.

A form word is (a0, letters): a0 an algebra basis token (possibly the
unit) and letters a tuple of bar-basis tokens, standing for
a0 da1 ... dan.  Blocks are indexed by (de Rham degree n, weight w) and
carry deterministic ordered bases, so every operator is a concrete
sparse rational matrix.

Sign conventions (the mutation hooks exist so the test suite can prove
each one is load-bearing):
  b(alpha da)     = (-1)^{|alpha|} [alpha, a]
  kappa(alpha da) = (-1)^{|alpha|} da alpha
  i per its commutator-sum formula, degree -1
  [x, y]          = xy - (-1)^{|x||y|} yx
"""

from __future__ import annotations

from fractions import Fraction

from .exactla import (
    ONE,
    SparseMatrix,
    Subspace,
    image_basis,
    kernel_basis,
    quotient_map,
    quotient_section,
    solve_columns,
)
from .algebra import Algebra, add_into

MUTATIONS = ("kappa_sign", "i_sign", "koszul_sign", "action_sign")


class CapExceeded(ValueError):
    pass


class HarmonicFailure(RuntimeError):
    """The Fitting decomposition of Id-kappa failed to stabilize."""


# ---------------------------------------------------------------------------
# word-level calculus


def form_times_token(alg: Algebra, word, b):
    """Right multiplication (a0 da1 ... dan) * b, as an element dict."""
    a0, letters = word
    if not letters:
        return {(t, ()): c for t, c in alg.mult(a0, b).items()}
    last = letters[-1]
    head = (a0, letters[:-1])
    out = {}
    # alpha d(last) * b = alpha d(last*b) - (alpha*last) db
    for t, c in alg.mult(last, b).items():
        if not alg.is_unit(t):
            out[(a0, letters[:-1] + (t,))] = out.get((a0, letters[:-1] + (t,)), Fraction(0)) + c
    if not alg.is_unit(b):
        for w2, c in form_times_token(alg, head, last).items():
            a, ls = w2
            key = (a, ls + (b,))
            v = out.get(key, Fraction(0)) - c
            if v:
                out[key] = v
            else:
                out.pop(key, None)
    return {k: v for k, v in out.items() if v}


def form_mult(alg: Algebra, w1, w2):
    """Product of two form words."""
    b0, letters2 = w2
    out = {}
    for w, c in form_times_token(alg, w1, b0).items():
        a, ls = w
        add_into(out, {(a, ls + letters2): ONE}, c)
    return out


def form_mult_elems(alg, e1, e2):
    out = {}
    for w1, c1 in e1.items():
        for w2, c2 in e2.items():
            add_into(out, form_mult(alg, w1, w2), c1 * c2)
    return out


def apply_d(alg: Algebra, word):
    a0, letters = word
    if alg.is_unit(a0):
        return {}
    return {(alg.unit, (a0,) + letters): ONE}


def apply_b(alg: Algebra, word):
    a0, letters = word
    n = len(letters)
    if n == 0:
        return {}
    a = letters[-1]
    head = (a0, letters[:-1])
    sign = ONE if (n - 1) % 2 == 0 else -ONE
    out = {}
    add_into(out, form_times_token(alg, head, a), sign)
    for t, c in alg.mult(a, a0).items():
        add_into(out, {(t, letters[:-1]): ONE}, -sign * c)
    return out


def apply_kappa(alg: Algebra, word, kappa_sign=1):
    a0, letters = word
    n = len(letters)
    if n == 0:
        # degree 0 carries no alpha*da shape; kappa = Id - (bd + db) = Id there
        return {word: ONE}
    a = letters[-1]
    rest = letters[:-1]
    sign = ONE if (n - 1) % 2 == 0 else -ONE
    sign *= kappa_sign
    out = {}
    # (da) * (a0 da1 ... ) = d(a*a0) da1 ... - a d(a0) da1 ...
    for t, c in alg.mult(a, a0).items():
        if not alg.is_unit(t):
            add_into(out, {(alg.unit, (t,) + rest): ONE}, sign * c)
    if not alg.is_unit(a0):
        add_into(out, {(a, (a0,) + rest): ONE}, -sign)
    return out


def apply_i(alg: Algebra, word, i_sign=1):
    """The contraction's commutator-sum formula, degree -1."""
    a0, letters = word
    n = len(letters)
    out = {}
    for ell in range(1, n + 1):
        a = letters[ell - 1]
        # beta = d a_{ell+1} ... d a_n  a0  d a_1 ... d a_{ell-1}
        beta = {}
        tail = (alg.unit, letters[ell:])
        for w, c in form_times_token(alg, tail, a0).items():
            aa, ls = w
            beta[(aa, ls + letters[: ell - 1])] = c
        sign = -ONE if ((ell - 1) * (n - 1)) % 2 == 0 else ONE
        sign *= i_sign
        # [a, beta] = a*beta - beta*a  (a has degree zero)
        for w, c in beta.items():
            aa, ls = w
            for t, cc in alg.mult(a, aa).items():
                add_into(out, {(t, ls): ONE}, sign * c * cc)
            add_into(out, form_times_token(alg, w, a), -sign * c)
    return out


# ---------------------------------------------------------------------------
# blocks


class FormComponent:
    """The (degree, weight) block of Omega / Omegabar with its word basis."""

    def __init__(self, alg: Algebra, n, w, reduced=True):
        self.alg = alg
        self.n = n
        self.w = w
        self.reduced = reduced
        words = []
        for split in _compositions(w, n + 1):
            heads = alg.bar_basis(split[0]) if (reduced and n == 0) else alg.basis(split[0])
            letter_pools = [alg.bar_basis(wi) for wi in split[1:]]
            if any(not pool for pool in letter_pools):
                continue
            for a0 in heads:
                _extend_words(words, a0, letter_pools)
        words.sort(key=lambda wd: (alg.token_key(wd[0]), tuple(alg.token_key(t) for t in wd[1])))
        self.basis = words
        self.index = {wd: i for i, wd in enumerate(words)}

    @property
    def dim(self):
        return len(self.basis)

    def vector_of(self, elem):
        """Coordinates of an element dict; unit heads at degree 0 are
        dropped when the block is reduced."""
        out = {}
        for word, c in elem.items():
            if not c:
                continue
            i = self.index.get(word)
            if i is None:
                a0, letters = word
                if self.reduced and self.n == 0 and self.alg.is_unit(a0):
                    continue
                raise KeyError(f"word {word} outside block (n={self.n}, w={self.w})")
            out[i] = out.get(i, Fraction(0)) + c
        return {i: c for i, c in out.items() if c}

    def __repr__(self):
        return f"FormComponent(n={self.n}, w={self.w}, dim={self.dim})"


def _compositions(total, parts):
    if parts == 0:
        if total == 0:
            yield ()
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _extend_words(out, a0, pools):
    def rec(prefix, k):
        if k == len(pools):
            out.append((a0, prefix))
            return
        for t in pools[k]:
            rec(prefix + (t,), k + 1)

    rec((), 0)


class OperatorBlock:
    __slots__ = ("source", "target", "matrix", "name")

    def __init__(self, name, source, target, matrix):
        assert matrix.rows == target.dim and matrix.cols == source.dim, (
            name, matrix.rows, target.dim, matrix.cols, source.dim)
        self.name = name
        self.source = source
        self.target = target
        self.matrix = matrix


class DRComponent:
    """DRbar block: quotient of the form block by its commutator subspace."""

    def __init__(self, form: FormComponent, commutators: Subspace):
        self.form = form
        self.commutator_subspace = commutators
        self.quotient = quotient_map(form.dim, commutators)
        self.section = quotient_section(form.dim, commutators)
        self.dim = self.quotient.rows

    def project(self, vec):
        return self.quotient.apply(vec)


class FormsEngine:
    """Blockwise operator factory for one algebra.

    All blocks are memoized; mutations flip single sign conventions for
    the sensitivity suite.
    """

    def __init__(self, algebra: Algebra, mutations=frozenset()):
        self.alg = algebra
        unknown = set(mutations) - set(MUTATIONS)
        if unknown:
            raise ValueError(f"unknown mutations {sorted(unknown)}")
        self.mutations = frozenset(mutations)
        self._kappa_sign = -1 if "kappa_sign" in self.mutations else 1
        self._i_sign = -1 if "i_sign" in self.mutations else 1
        self._koszul = "koszul_sign" not in self.mutations
        self._cache = {}

    # -- components

    def component(self, n, w, reduced=True) -> FormComponent:
        if n < 0 or w < 0:
            return self._memo(("empty", n, w, reduced),
                              lambda: _EmptyComponent(self.alg, n, w, reduced))
        if w > self.alg.max_weight:
            raise CapExceeded(f"weight {w} above cap {self.alg.max_weight}")
        return self._memo(("comp", n, w, reduced),
                          lambda: FormComponent(self.alg, n, w, reduced))

    def dim(self, n, w):
        if n < 0 or w < 0:
            return 0
        return self.component(n, w).dim

    def _memo(self, key, thunk):
        if key not in self._cache:
            self._cache[key] = thunk()
        return self._cache[key]

    # -- word-local operator blocks

    def _block(self, name, n_src, w, n_tgt, func):
        def build():
            src = self.component(n_src, w)
            tgt = self.component(n_tgt, w)
            cols = []
            for word in src.basis:
                cols.append(tgt.vector_of(func(word)))
            return OperatorBlock(name, src, tgt,
                                 SparseMatrix.from_columns(cols, tgt.dim))
        return self._memo((name, n_src, w), build)

    def d_block(self, n, w) -> OperatorBlock:
        return self._block("d", n, w, n + 1, lambda wd: apply_d(self.alg, wd))

    def b_block(self, n, w) -> OperatorBlock:
        return self._block("b", n, w, n - 1, lambda wd: apply_b(self.alg, wd))

    def kappa_block(self, n, w) -> OperatorBlock:
        return self._block("kappa", n, w, n,
                           lambda wd: apply_kappa(self.alg, wd, self._kappa_sign))

    def i_block(self, n, w) -> OperatorBlock:
        return self._block("i", n, w, n - 1, lambda wd: apply_i(self.alg, wd, self._i_sign))

    def B_block(self, n, w) -> OperatorBlock:
        def build():
            d = self.d_block(n, w)
            kap = self.kappa_block(n + 1, w).matrix
            acc = SparseMatrix.identity(d.target.dim)
            total = SparseMatrix.zero(d.target.dim, d.target.dim)
            for _ in range(n + 1):
                total = total + acc
                acc = kap * acc
            return OperatorBlock("B", d.source, d.target, total * d.matrix)
        return self._memo(("B", n, w), build)

    def kappa_power_sum(self, n, w, upto) -> SparseMatrix:
        """Id + kappa + ... + kappa^(upto-1) on the (n, w) block."""
        kap = self.kappa_block(n, w).matrix
        acc = SparseMatrix.identity(kap.rows)
        total = SparseMatrix.zero(kap.rows, kap.cols)
        for _ in range(upto):
            total = total + acc
            acc = kap * acc
        return total

    # -- harmonic decomposition

    def harmonic_projectors(self, n, w):
        def build():
            kap = self.kappa_block(n, w).matrix
            dim = kap.rows
            ident = SparseMatrix.identity(dim)
            m = ident - kap
            power = m * m
            exponent = 2
            ker = kernel_basis(power)
            img = image_basis(power)
            while True:
                if exponent > dim + 2:
                    raise HarmonicFailure(
                        f"(Id-kappa)^N failed to stabilize on block (n={n}, w={w})")
                nxt = power * m
                ker2 = kernel_basis(nxt)
                img2 = image_basis(nxt)
                if (ker2.dim == ker.dim and img2.dim == img.dim
                        and ker.dim + img.dim == dim):
                    break
                power, ker, img = nxt, ker2, img2
                exponent += 1
            cols = [dict(r) for r in ker.basis_rows] + [dict(r) for r in img.basis_rows]
            change = SparseMatrix.from_columns(cols, dim)
            inv = solve_columns(change, ident)
            sel = SparseMatrix(dim, dim, {(i, i): ONE for i in range(ker.dim)})
            p = change * sel * inv
            comp = self.component(n, w)
            return (OperatorBlock("P", comp, comp, p),
                    OperatorBlock("Pperp", comp, comp, ident - p),
                    exponent, ker, img)
        return self._memo(("P", n, w), build)

    def P(self, n, w) -> SparseMatrix:
        return self.harmonic_projectors(n, w)[0].matrix

    def i_from_bNP(self, n, w) -> SparseMatrix:
        return self.b_block(n, w).matrix * self.P(n, w).scale(n)

    def B_from_NdP(self, n, w) -> SparseMatrix:
        return self.d_block(n, w).matrix.scale(n + 1) * self.P(n, w)

    # -- commutator subspaces and DR

    def commutator_subspace(self, n, w) -> Subspace:
        def build():
            tgt = self.component(n, w)
            gens = []
            for p in range(0, n // 2 + 1):
                q = n - p
                for w1 in range(0, w + 1):
                    w2 = w - w1
                    xs = self.component(p, w1, reduced=False).basis
                    ys = self.component(q, w2, reduced=False).basis
                    same = (p == q and w1 == w2)
                    if p == q and w1 > w2:
                        continue
                    for ix, x in enumerate(xs):
                        if p == 0 and self.alg.is_unit(x[0]) and not x[1]:
                            continue
                        for iy, y in enumerate(ys):
                            if same and iy < ix:
                                continue
                            if q == 0 and self.alg.is_unit(y[0]) and not y[1]:
                                continue
                            gens.append(tgt.vector_of(self._super_commutator(x, y, p, q)))
            return Subspace.from_vectors(tgt.dim, gens)
        return self._memo(("comm", n, w), build)

    def _super_commutator(self, x, y, p, q):
        out = {}
        add_into(out, form_mult(self.alg, x, y))
        sign = -ONE if (self._koszul and (p * q) % 2 == 1) else ONE
        add_into(out, form_mult(self.alg, y, x), -sign)
        return out

    def d_commutator_subspace(self, n, w) -> Subspace:
        """[d Omega, d Omega] inside the (n, w) block: commutators of
        basis words with unit head (the exact forms d(basis))."""
        def build():
            tgt = self.component(n, w)
            gens = []
            for p in range(1, n):
                q = n - p
                if p > q:
                    continue
                for w1 in range(0, w + 1):
                    w2 = w - w1
                    xs = [wd for wd in self.component(p, w1, reduced=False).basis
                          if self.alg.is_unit(wd[0])]
                    ys = [wd for wd in self.component(q, w2, reduced=False).basis
                          if self.alg.is_unit(wd[0])]
                    same = (p == q and w1 == w2)
                    for ix, x in enumerate(xs):
                        for iy, y in enumerate(ys):
                            if same and iy < ix:
                                continue
                            gens.append(tgt.vector_of(self._super_commutator(x, y, p, q)))
            return Subspace.from_vectors(tgt.dim, gens)
        return self._memo(("dcomm", n, w), build)

    def dr(self, n, w) -> DRComponent:
        return self._memo(("dr", n, w),
                          lambda: DRComponent(self.component(n, w),
                                              self.commutator_subspace(n, w)))

    def d_on_dr(self, n, w) -> SparseMatrix:
        def build():
            src = self.dr(n, w)
            tgt = self.dr(n + 1, w)
            d = self.d_block(n, w).matrix
            # d moves commutators to commutators, so this is well defined
            for row in src.commutator_subspace.basis_rows:
                img = d.apply(dict(row))
                assert tgt.commutator_subspace.contains(img), "d does not descend to DR"
            return tgt.quotient * d * src.section
        return self._memo(("d_dr", n, w), build)

    def i_on_dr(self, n, w) -> SparseMatrix:
        def build():
            src = self.dr(n, w)
            i = self.i_block(n, w).matrix
            for row in src.commutator_subspace.basis_rows:
                img = i.apply(dict(row))
                assert not img, "i does not annihilate commutators"
            return i * src.section
        return self._memo(("i_dr", n, w), build)


class _EmptyComponent(FormComponent):
    def __init__(self, alg, n, w, reduced):
        self.alg = alg
        self.n = n
        self.w = w
        self.reduced = reduced
        self.basis = []
        self.index = {}
