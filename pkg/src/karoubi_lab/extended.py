"""The extended complex DRbar_t, the Tsygan map, and extended cyclic
homology.

Omega_t is Omega A * k[t] (dt = 0); words are normal-form letter
strings over {algebra letters, d-letters, t-powers} with no two
adjacent algebra letters.  Its commutator quotient decomposes by
t-degree: a class with q >= 1 t's is a cyclic word
omega_1 t omega_2 t ... omega_q t, stored as the q-tuple of Omega-basis
words canonically rotated (lexicographically least, with Koszul signs
by de Rham degree); the q = 0 part is the ordinary DRbar.  Zero
classes (a rotation fixing the tuple with sign -1) are dropped from
bases.

All operators (d, i_t, d/dt, the Tsygan map) are computed on flattened
letter words, renormalized, and projected back to cyclic classes, so
each is an exact sparse matrix per (de Rham degree p, t-degree q,
weight w) block.
"""

from __future__ import annotations

import random
from fractions import Fraction
from math import factorial

from .exactla import (
    ONE,
    SparseMatrix,
    Subspace,
    image_basis,
    kernel_basis,
    quotient_map,
    rank,
    solve_columns,
)
from .algebra import add_into
from .cyclic import CyclicEngine, SubQuotient, homology, vec_add
from .forms import FormsEngine


# ---------------------------------------------------------------------------
# letter words: ('a', token) | ('d', token) | ('t', k)


def word_letters(alg, omega_word, with_t=True):
    a0, letters = omega_word
    out = []
    if not alg.is_unit(a0):
        out.append(("a", a0))
    out.extend(("d", l) for l in letters)
    if with_t:
        out.append(("t", 1))
    return out


def normalize_letters(alg, letters, coeff=ONE):
    """Rewrite to normal form: t-runs merged, no 'a' adjacent to a
    previous 'a' or 'd' ((du)v = d(uv) - u dv)."""
    out = {}
    stack = [(list(letters), coeff)]
    while stack:
        ls, c = stack.pop()
        if not c:
            continue
        pos = None
        for j in range(len(ls) - 1):
            k1, k2 = ls[j][0], ls[j + 1][0]
            if (k1 == "t" and k2 == "t") or (k1 in ("a", "d") and k2 == "a"):
                pos = j
                break
        if pos is None:
            key = tuple(ls)
            v = out.get(key, Fraction(0)) + c
            if v:
                out[key] = v
            else:
                out.pop(key, None)
            continue
        l1, l2 = ls[pos], ls[pos + 1]
        rest_pre, rest_post = ls[:pos], ls[pos + 2:]
        if l1[0] == "t":
            stack.append((rest_pre + [("t", l1[1] + l2[1])] + rest_post, c))
        elif l1[0] == "a":
            for t, cv in alg.mult(l1[1], l2[1]).items():
                mid = [] if alg.is_unit(t) else [("a", t)]
                stack.append((rest_pre + mid + rest_post, c * cv))
        else:
            # (d u) v = d(uv) - u dv
            for t, cv in alg.mult(l1[1], l2[1]).items():
                if not alg.is_unit(t):
                    stack.append((rest_pre + [("d", t)] + rest_post, c * cv))
            stack.append((rest_pre + [("a", l1[1]), ("d", l2[1])] + rest_post, -c))
    return out


def letters_degrees(letters):
    p = sum(1 for l in letters if l[0] == "d")
    q = sum(l[1] for l in letters if l[0] == "t")
    return p, q


class ExtEngine:
    """Blockwise operators on DRbar_t for one algebra."""

    def __init__(self, cyclic_engine: CyclicEngine):
        self.cy = cyclic_engine
        self.forms = cyclic_engine.forms
        self.alg = self.forms.alg
        self._cache = {}
        self._word_key_cache = {}

    def _memo(self, key, thunk):
        if key not in self._cache:
            self._cache[key] = thunk()
        return self._cache[key]

    # -- cyclic tuples

    def word_key(self, w):
        k = self._word_key_cache.get(w)
        if k is None:
            a0, ls = w
            k = (len(ls), self.alg.token_key(a0), tuple(self.alg.token_key(t) for t in ls))
            self._word_key_cache[w] = k
        return k

    def word_degree(self, w):
        return len(w[1])

    def cyclic_class(self, tup):
        """(canonical tuple, sign) or None if the class vanishes."""
        q = len(tup)
        degs = [self.word_degree(w) for w in tup]
        total = sum(degs)
        best = None
        cur = tup
        sign = 1
        for _ in range(q):
            if best is None or tuple(map(self.word_key, cur)) < best[0]:
                best = (tuple(map(self.word_key, cur)), cur, sign)
            dq = self.word_degree(cur[-1])
            s = -1 if (dq * (total - dq)) % 2 else 1
            cur = (cur[-1],) + cur[:-1]
            sign *= s
            if cur == tup and sign != 1:
                return None
        return best[1], best[2]

    def block(self, p, q, w) -> "ExtBlock":
        return self._memo(("block", p, q, w), lambda: ExtBlock(self, p, q, w))

    # -- class arithmetic

    def tuple_to_word(self, tup):
        out = []
        for om in tup:
            out.extend(word_letters(self.alg, om, with_t=True))
        return out

    def classes_of_letters(self, letters, coeff=ONE):
        """Normalize a letter word and express it in cyclic classes.

        Returns {('cyc', tuple): c} and {('dr', omega_word): c} parts.
        """
        out = {}
        for ls, c in normalize_letters(self.alg, letters, coeff).items():
            p, q = letters_degrees(ls)
            if q == 0:
                key = self._omega_of(ls)
                if key is not None:
                    v = out.get(("dr", key), Fraction(0)) + c
                    if v:
                        out["dr", key] = v
                    else:
                        out.pop(("dr", key), None)
                continue
            if ls[-1][0] != "t":
                # rotate the trailing segment to the front (Koszul sign)
                cut = len(ls)
                while cut > 0 and ls[cut - 1][0] != "t":
                    cut -= 1
                seg = list(ls[cut:])
                segdeg = sum(1 for l in seg if l[0] == "d")
                s = -1 if (segdeg * (p - segdeg)) % 2 else 1
                for k2, c2 in self.classes_of_letters(seg + list(ls[:cut]), c * s).items():
                    v = out.get(k2, Fraction(0)) + c2
                    if v:
                        out[k2] = v
                    else:
                        out.pop(k2, None)
                continue
            tup = self._split_word(ls)
            cc = self.cyclic_class(tup)
            if cc is None:
                continue
            rep, s = cc
            v = out.get(("cyc", rep), Fraction(0)) + c * s
            if v:
                out["cyc", rep] = v
            else:
                out.pop(("cyc", rep), None)
        return out

    def _omega_of(self, ls):
        """Letter word with no t into an Omega basis word; None if scalar."""
        if not ls:
            return None
        a0 = self.alg.unit
        start = 0
        if ls[0][0] == "a":
            a0 = ls[0][1]
            start = 1
        letters = []
        for l in ls[start:]:
            assert l[0] == "d", f"unnormalized word {ls}"
            letters.append(l[1])
        return (a0, tuple(letters))

    def _split_word(self, ls):
        """Letter word ending in t into its q-tuple of segments."""
        tup = []
        seg = []
        for l in ls:
            if l[0] == "t":
                tup.append(self._omega_of(seg) or (self.alg.unit, ()))
                tup.extend((self.alg.unit, ()) for _ in range(l[1] - 1))
                seg = []
            else:
                seg.append(l)
        assert not seg
        return tuple(tup)

    # -- derivations on letter words

    def _derive(self, letters, op):
        """Apply d / i_t / d/dt as a (super)derivation over the letters."""
        terms = []
        deg_before = 0
        for j, l in enumerate(letters):
            pre = list(letters[:j])
            post = list(letters[j + 1:])
            if op == "d" and l[0] == "a":
                sign = -1 if deg_before % 2 else 1
                terms.append((pre + [("d", l[1])] + post, Fraction(sign)))
            elif op == "it" and l[0] == "d":
                sign = -1 if deg_before % 2 else 1
                terms.append((pre + [("a", l[1]), ("t", 1)] + post, Fraction(sign)))
                terms.append((pre + [("t", 1), ("a", l[1])] + post, Fraction(-sign)))
            elif op == "ddt" and l[0] == "t":
                mid = [("t", l[1] - 1)] if l[1] > 1 else []
                terms.append((pre + mid + post, Fraction(l[1])))
            if l[0] == "d":
                deg_before += 1
        return terms

    def apply_op_to_tuple(self, tup, op):
        letters = self.tuple_to_word(tup)
        out = {}
        for ls, c in self._derive(letters, op):
            for k, v in self.classes_of_letters(ls, c).items():
                vv = out.get(k, Fraction(0)) + v
                if vv:
                    out[k] = vv
                else:
                    out.pop(k, None)
        return out

    def apply_op_to_omega(self, omega_word, op):
        letters = word_letters(self.alg, omega_word, with_t=False)
        out = {}
        for ls, c in self._derive(letters, op):
            for k, v in self.classes_of_letters(ls, c).items():
                vv = out.get(k, Fraction(0)) + v
                if vv:
                    out[k] = vv
                else:
                    out.pop(k, None)
        return out

    # -- operator blocks

    def _collect(self, classes, p_tgt, q_tgt, w):
        """Coordinates of a class dict in the (p_tgt, q_tgt, w) block."""
        blk = self.block(p_tgt, q_tgt, w)
        vec = {}
        dr_vec = {}
        for key, c in classes.items():
            kind, payload = key
            if kind == "cyc":
                pk, qk = self._tuple_degrees(payload)
                assert (pk, qk) == (p_tgt, q_tgt), (pk, qk, p_tgt, q_tgt)
                idx = blk.index.get(payload)
                if idx is None:
                    # only the pure-t classes (killed in the reduced DR_t)
                    # may be missing from the basis
                    assert all(self.alg.is_unit(a) and not ls for a, ls in payload)
                    continue
                vec[idx] = vec.get(idx, Fraction(0)) + c
            else:
                assert q_tgt == 0
                add_into(dr_vec, {payload: ONE}, c)
        if q_tgt == 0 and dr_vec:
            comp = self.forms.component(p_tgt, w)
            proj = self.forms.dr(p_tgt, w).project(comp.vector_of(dr_vec))
            for i, c in proj.items():
                vec[i] = vec.get(i, Fraction(0)) + c
        return {i: c for i, c in vec.items() if c}

    def _tuple_degrees(self, tup):
        return (sum(self.word_degree(wd) for wd in tup), len(tup))

    def d_ext(self, p, q, w) -> SparseMatrix:
        def build():
            if q == 0:
                return self.forms.d_on_dr(p, w)
            src = self.block(p, q, w)
            tgt = self.block(p + 1, q, w)
            cols = [self._collect(self.apply_op_to_tuple(t, "d"), p + 1, q, w)
                    for t in src.basis]
            return SparseMatrix.from_columns(cols, tgt.dim)
        return self._memo(("d_ext", p, q, w), build)

    def it_ext(self, p, q, w) -> SparseMatrix:
        def build():
            tgt = self.block(p - 1, q + 1, w)
            if q == 0:
                dr = self.forms.dr(p, w)
                comp = self.forms.component(p, w)
                cols = []
                for j in range(dr.dim):
                    lift = dr.section.apply({j: ONE})
                    acc = {}
                    for i, c in lift.items():
                        word = comp.basis[i]
                        for k, v in self.apply_op_to_omega(word, "it").items():
                            vv = acc.get(k, Fraction(0)) + c * v
                            if vv:
                                acc[k] = vv
                            else:
                                acc.pop(k, None)
                    cols.append(self._collect(acc, p - 1, q + 1, w))
                return SparseMatrix.from_columns(cols, tgt.dim)
            src = self.block(p, q, w)
            cols = [self._collect(self.apply_op_to_tuple(t, "it"), p - 1, q + 1, w)
                    for t in src.basis]
            return SparseMatrix.from_columns(cols, tgt.dim)
        return self._memo(("it_ext", p, q, w), build)

    def ddt_ext(self, p, q, w) -> SparseMatrix:
        def build():
            src = self.block(p, q, w)
            tgt = self.block(p, q - 1, w)
            if q == 0:
                return SparseMatrix.zero(0, src.dim)
            cols = [self._collect(self.apply_op_to_tuple(t, "ddt"), p, q - 1, w)
                    for t in src.basis]
            return SparseMatrix.from_columns(cols, tgt.dim)
        return self._memo(("ddt_ext", p, q, w), build)

    def iota(self, p, w) -> SparseMatrix:
        """DRbar_t^{p,1} -> Omegabar^p: [(omega)] -> omega."""
        def build():
            src = self.block(p, 1, w)
            comp = self.forms.component(p, w)
            cols = []
            for tup in src.basis:
                assert len(tup) == 1
                cols.append(comp.vector_of({tup[0]: ONE}))
            return SparseMatrix.from_columns(cols, comp.dim)
        return self._memo(("iota", p, w), build)

    # -- the Tsygan map

    def tsygan(self, n, w, q) -> SparseMatrix:
        """t-degree-q part of E on Omegabar^n(w), coefficients
        1/(q+n)!."""
        def build():
            src = self.forms.component(n, w)
            tgt = self.block(n, q, w)
            coeff = Fraction(1, factorial(q + n))
            cols = []
            for a0, letters in src.basis:
                acc = {}
                for ks in _compositions(q, n + 1):
                    ls = []
                    if not self.alg.is_unit(a0):
                        ls.append(("a", a0))
                    if ks[0]:
                        ls.append(("t", ks[0]))
                    for l, k in zip(letters, ks[1:]):
                        ls.append(("d", l))
                        if k:
                            ls.append(("t", k))
                    for key, v in self.classes_of_letters(ls, coeff).items():
                        vv = acc.get(key, Fraction(0)) + v
                        if vv:
                            acc[key] = vv
                        else:
                            acc.pop(key, None)
                cols.append(self._collect(acc, n, q, w))
            return SparseMatrix.from_columns(cols, tgt.dim)
        return self._memo(("E", n, w, q), build)

    def centralize_t(self, p, q, w) -> SparseMatrix:
        """c_t: DRbar_t^{p,q} -> DRbar^p, multiply the segments out."""
        def build():
            from .forms import form_mult_elems
            src = self.block(p, q, w)
            dr = self.forms.dr(p, w)
            comp = self.forms.component(p, w)
            if q == 0:
                return SparseMatrix.identity(src.dim)
            cols = []
            for tup in src.basis:
                elem = {tup[0]: ONE}
                for om in tup[1:]:
                    elem = form_mult_elems(self.alg, elem, {om: ONE})
                cols.append(dr.project(comp.vector_of(elem)))
            return SparseMatrix.from_columns(cols, dr.dim)
        return self._memo(("ct", p, q, w), build)


def drt_plus_acyclic_report(ext: ExtEngine, w, p_cap, q_cap):
    """(DRbar_t^+, d) acyclic per block, and the mod-t projection an
    isomorphism on d-homology (rank identities)."""
    checks = {}
    for q in range(1, q_cap + 1):
        for p in range(0, p_cap + 1):
            dim = ext.block(p, q, w).dim
            r_in = rank(ext.d_ext(p - 1, q, w)) if p >= 1 else 0
            r_out = rank(ext.d_ext(p, q, w))
            checks[f"acyclic_p{p}_q{q}"] = (r_in + r_out == dim)
    # mod-t iso on d-homology: total H at each p equals the q=0 part
    for p in range(0, p_cap + 1):
        total = 0
        for q in range(0, q_cap + 1):
            dim = ext.block(p, q, w).dim
            r_in = rank(ext.d_ext(p - 1, q, w)) if p >= 1 else 0
            r_out = rank(ext.d_ext(p, q, w))
            total += dim - r_in - r_out
        hd = ext.cy.hd_dim(p, w)
        checks[f"mod_t_iso_p{p}"] = (total == hd)
    return checks


class ExtBlock:
    """Basis of DRbar_t^{p,q}(w): canonical cyclic tuples for q >= 1,
    DR quotient coordinates for q = 0."""

    def __init__(self, ext: ExtEngine, p, q, w):
        self.ext = ext
        self.p = p
        self.q = q
        self.w = w
        if p < 0 or q < 0 or w < 0:
            self.basis = []
            self.index = {}
            self.dim = 0
            return
        if q == 0:
            self.basis = None
            self.index = None
            self.dim = ext.forms.dr(p, w).dim
            return
        seen = {}
        for tup in self._tuples(p, q, w):
            cc = ext.cyclic_class(tup)
            if cc is None:
                continue
            rep, _ = cc
            seen[rep] = True
        basis = sorted(seen, key=lambda t: tuple(map(ext.word_key, t)))
        # drop the pure-t classes (all segments scalar): they span k[t]
        basis = [t for t in basis
                 if not all(ext.alg.is_unit(a) and not ls for a, ls in t)]
        self.basis = basis
        self.index = {t: i for i, t in enumerate(basis)}
        self.dim = len(basis)

    def _tuples(self, p, q, w):
        ext = self.ext
        forms = ext.forms

        def rec(slots_left, p_left, w_left, acc):
            if slots_left == 0:
                if p_left == 0 and w_left == 0:
                    yield tuple(acc)
                return
            for dp in range(p_left + 1):
                for dw in range(w_left + 1):
                    comp = forms.component(dp, dw, reduced=False)
                    for wd in comp.basis:
                        acc.append(wd)
                        yield from rec(slots_left - 1, p_left - dp, w_left - dw, acc)
                        acc.pop()

        yield from rec(q, p, w, [])


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


# ---------------------------------------------------------------------------
# quotient-by-d complexes and the heq comparison


class ExtQuotient:
    """DRbar_t^{p,q} / im(d), with the induced i_t."""

    def __init__(self, ext: ExtEngine, p, q, w):
        self.ext = ext
        self.p = p
        self.q = q
        self.w = w
        dim = ext.block(p, q, w).dim
        sub = image_basis(ext.d_ext(p - 1, q, w))
        self.sub = sub
        self.q_map = quotient_map(dim, sub)
        from .exactla import quotient_section
        self.sec = quotient_section(dim, sub)
        self.dim = self.q_map.rows

    def project(self, vec):
        return self.q_map.apply(vec)


class HeqChecker:
    """Bijectivity of E^q on both homologies, per (n, q, weight)."""

    def __init__(self, ext: ExtEngine):
        self.ext = ext
        self.cy = ext.cy
        self._cache = {}

    def _memo(self, key, thunk):
        if key not in self._cache:
            self._cache[key] = thunk()
        return self._cache[key]

    def drt_homology(self, n, q, w) -> SubQuotient:
        ext = self.ext
        return self._memo(("h", n, q, w), lambda: homology(
            ext.it_ext(n, q, w), ext.it_ext(n + 1, q - 1, w)))

    def quotient(self, p, q, w) -> ExtQuotient:
        return self._memo(("q", p, q, w), lambda: ExtQuotient(self.ext, p, q, w))

    def it_mod_d(self, p, q, w) -> SparseMatrix:
        def build():
            src = self.quotient(p, q, w)
            tgt = self.quotient(p - 1, q + 1, w)
            it = self.ext.it_ext(p, q, w)
            for row in src.sub.basis_rows:
                assert tgt.sub.contains(it.apply(dict(row))), "i_t not defined mod d"
            return tgt.q_map * it * src.sec
        return self._memo(("itq", p, q, w), build)

    def drt_mod_d_homology(self, n, q, w) -> SubQuotient:
        return self._memo(("hq", n, q, w), lambda: homology(
            self.it_mod_d(n, q, w), self.it_mod_d(n + 1, q - 1, w)))

    def check(self, q, n, w):
        """E^q bijective on HH and on HC-type homology; d^q/dt^q E^q = E^0."""
        ext = self.ext
        cy = self.cy
        checks = {}
        E = ext.tsygan(n, w, q)
        # route 1: H(Omegabar, b) -> H(DRbar_t, i_t)^{n,q}
        hh = cy.hh_oracle(n, w)
        tgt = self.drt_homology(n, q, w)
        m1 = hh.map_to(tgt, lambda v: E.apply(v))
        checks["hh_bijective"] = hh.dim == tgt.dim and _bij(m1)
        # route 2: H(Omegabar/B, b) -> H(DRbar_t/d DRbar_t, i_t)^{n,q}
        src2 = cy.hc_cq(n, w)
        tgt2 = self.drt_mod_d_homology(n, q, w)
        lift = cy.omega_mod_B(n, w)
        proj = self.quotient(n, q, w)

        def go(vec):
            return proj.project(E.apply(lift.lift(vec)))
        m2 = src2.map_to(tgt2, go)
        checks["hc_bijective"] = src2.dim == tgt2.dim and _bij(m2)
        # d^q/dt^q . E^q = E^0
        acc = E
        for j in range(q, 0, -1):
            acc = ext.ddt_ext(n, j, w) * acc
        checks["ddt_chain"] = acc == ext.tsygan(n, w, 0)
        return checks


def _bij(m: SparseMatrix) -> bool:
    return m.rows == m.cols and rank(m) == m.rows


# ---------------------------------------------------------------------------
# extended cyclic homology windows


class EhcWindow:
    """Homological-degree-ell piece of internal degree k of
    (DRbar_t (x) {R or ((u))}, i_t - u d) at one weight."""

    def __init__(self, ext: ExtEngine, ell, k, w, support="R"):
        assert support in ("R", "per")
        self.ext = ext
        self.ell = ell
        self.k = k
        self.w = w
        self.support = support
        bound = w  # connected graded: de Rham degree <= weight
        rs = []
        for r in range(-(bound + 2), ell // 2 + 1):
            p = ell - 2 * r
            q = k - ell + r
            if p < 0 or p > bound or q < 0:
                continue
            if support == "R" and r < 0:
                continue
            rs.append(r)
        self.rs = rs
        self.blocks = {r: ext.block(ell - 2 * r, k - ell + r, w) for r in rs}
        self.offsets = {}
        off = 0
        for r in rs:
            self.offsets[r] = off
            off += self.blocks[r].dim
        self.dim = off

    def inject(self, r, vec):
        off = self.offsets.get(r)
        if off is None:
            if any(vec.values()):
                raise KeyError(f"component u^{-r} absent")
            return {}
        return {off + i: c for i, c in vec.items()}

    def component_of(self, vec, r):
        off = self.offsets.get(r)
        if off is None:
            return {}
        d = self.blocks[r].dim
        return {i - off: c for i, c in vec.items() if off <= i < off + d}

    def differential_to(self, target: "EhcWindow") -> SparseMatrix:
        assert target.ell == self.ell - 1 and target.k == self.k
        ext = self.ext
        entries = {}
        for r in self.rs:
            p = self.ell - 2 * r
            q = self.k - self.ell + r
            src_off = self.offsets[r]
            it = ext.it_ext(p, q, w := self.w)
            if r in target.offsets:
                toff = target.offsets[r]
                for (i, j), v in it.entries:
                    entries[toff + i, src_off + j] = v
            else:
                assert it.is_zero()
            d = ext.d_ext(p, q, w)
            r2 = r - 1
            if r2 in target.offsets:
                toff = target.offsets[r2]
                for (i, j), v in d.entries:
                    key = (toff + i, src_off + j)
                    entries[key] = entries.get(key, Fraction(0)) - v
            else:
                if not (self.support == "R" and r2 < 0):
                    assert d.is_zero()
        return SparseMatrix(target.dim, self.dim, entries)

    def homology(self) -> SubQuotient:
        below = EhcWindow(self.ext, self.ell - 1, self.k, self.w, self.support)
        above = EhcWindow(self.ext, self.ell + 1, self.k, self.w, self.support)
        return homology(self.differential_to(below), above.differential_to(self))


class ExtDSection:
    """Canonical echelon section of d on the positive-t-degree part."""

    def __init__(self, ext: ExtEngine, p, q, w, perturb_seed=None):
        assert q >= 1, "sections live on DRbar_t^+"
        self.ext = ext
        self.p = p
        self.q = q
        self.w = w
        d = ext.d_ext(p - 1, q, w)
        self.d = d
        self.im = image_basis(d)
        rhs = SparseMatrix.from_columns([dict(r) for r in self.im.basis_rows], d.rows)
        self.s0 = solve_columns(d, rhs)
        self.perturb = None
        if perturb_seed is not None:
            ker = kernel_basis(d)
            rng = random.Random(perturb_seed)
            cols = []
            for _ in range(self.im.dim):
                col = {}
                for row in ker.basis_rows:
                    c = rng.randrange(-2, 3)
                    if c:
                        col = vec_add(col, dict(row), Fraction(c))
                cols.append(col)
            self.perturb = cols

    def apply(self, yvec):
        coords = self.im.coordinates(yvec)
        x = self.s0.apply(coords)
        if self.perturb is not None:
            for i, c in coords.items():
                x = vec_add(x, self.perturb[i], c)
        return x


class EhcEngine:
    """The weight decomposition of extended cyclic homology, with the
    projections pi_m / pi_-, their series inverses, and the completed
    periodic comparison."""

    def __init__(self, ext: ExtEngine):
        self.ext = ext
        self.cy = ext.cy
        self.heq = HeqChecker(ext)
        self._cache = {}
        self._sections = {}

    def _memo(self, key, thunk):
        if key not in self._cache:
            self._cache[key] = thunk()
        return self._cache[key]

    def window(self, ell, m, w, support="R") -> EhcWindow:
        return self._memo(("win", ell, m, w, support),
                          lambda: EhcWindow(self.ext, ell, ell - m, w, support))

    def ehc_homology(self, ell, m, w) -> SubQuotient:
        return self._memo(("ehc", ell, m, w),
                          lambda: self.window(ell, m, w).homology())

    def ehc_dim(self, ell, m, w) -> int:
        return self.ehc_homology(ell, m, w).dim

    def section(self, p, q, w, perturb_seed=None) -> ExtDSection:
        key = ("sec", p, q, w, perturb_seed)
        if key not in self._sections:
            self._sections[key] = ExtDSection(self.ext, p, q, w, perturb_seed)
        return self._sections[key]

    # -- pi_m (m > 0) and its inverse

    def pi_m(self, ell, m, w) -> SparseMatrix:
        """EHC_ell(A, m) -> HD_{ell-2m}: the u^{-m} coefficient mod t."""
        assert m > 0
        h = self.ehc_homology(ell, m, w)
        hd = self.cy.hd_model(ell - 2 * m, w)
        win = self.window(ell, m, w)
        return SparseMatrix.from_columns(
            [hd.class_of(win.component_of(h.rep(j), m)) for j in range(h.dim)],
            hd.dim)

    def inverse_series_m(self, f_vec, ell, m, w, perturb_seed=None):
        """HD_{ell-2m} cycle -> EHC_ell(A, m) window cycle,
        sum_k u^{-(m+k)} (dsec i_t)^k f."""
        win = self.window(ell, m, w)
        out = win.inject(m, f_vec)
        cur = f_vec
        p, q, r = ell - 2 * m, 0, m
        while True:
            iv = self.ext.it_ext(p, q, w).apply(cur) if q >= 1 else \
                self.ext.it_ext(p, 0, w).apply(cur)
            if not iv:
                break
            cur = self.section(p - 1, q + 1, w, perturb_seed).apply(iv)
            p, q, r = p - 2, q + 1, r + 1
            out = vec_add(out, win.inject(r, cur))
        return out

    # -- pi_- (m <= 0) and its inverse

    def pi_minus(self, ell, m, w) -> SparseMatrix:
        """EHC_ell(A, m) -> H(DRbar_t/d, i_t)^{ell,-m}: f_0 mod im d."""
        assert m <= 0
        h = self.ehc_homology(ell, m, w)
        tgt = self.heq.drt_mod_d_homology(ell, -m, w)
        win = self.window(ell, m, w)
        proj = self.heq.quotient(ell, -m, w)
        return SparseMatrix.from_columns(
            [tgt.class_of(proj.project(win.component_of(h.rep(j), 0)))
             for j in range(h.dim)],
            tgt.dim)

    def inverse_series_minus(self, f_vec, ell, m, w, perturb_seed=None):
        """ker(i_t mod d) representative -> EHC window cycle."""
        win = self.window(ell, m, w)
        out = win.inject(0, f_vec)
        cur = f_vec
        p, q, r = ell, -m, 0
        while True:
            iv = self.ext.it_ext(p, q, w).apply(cur)
            if not iv:
                break
            cur = self.section(p - 1, q + 1, w, perturb_seed).apply(iv)
            p, q, r = p - 2, q + 1, r + 1
            out = vec_add(out, win.inject(r, cur))
        return out

    # -- reports

    def qq_report(self, ell, w, m_range=None):
        """Eq-style weight table: EHC_ell(A,m) vs HD_{ell-2m} / HC_ell / 0."""
        checks = {}
        if m_range is None:
            m_range = range(-2, ell // 2 + 3)
        for m in m_range:
            dim = self.ehc_dim(ell, m, w)
            if m > ell // 2:
                checks[f"m={m}_vanishes"] = dim == 0
            elif m > 0:
                checks[f"m={m}_HD"] = dim == self.cy.hd_dim(ell - 2 * m, w)
            else:
                checks[f"m={m}_HC"] = dim == self.cy.hc_dim(ell, w)
        return checks

    def pi_report(self, ell, m, w):
        """pi bijective; inverse series a two-sided inverse; section
        independence; for m <= 0 the pidiag square commutes."""
        checks = {}
        h = self.ehc_homology(ell, m, w)
        if m > 0:
            pi = self.pi_m(ell, m, w)
            hd = self.cy.hd_model(ell - 2 * m, w)
            checks["pi_bijective"] = h.dim == hd.dim and _bij(pi)
            inv = SparseMatrix.from_columns(
                [h.class_of(self.inverse_series_m(hd.rep(j), ell, m, w))
                 for j in range(hd.dim)], h.dim)
            checks["pi_inv_right"] = pi * inv == SparseMatrix.identity(hd.dim)
            checks["pi_inv_left"] = inv * pi == SparseMatrix.identity(h.dim)
            if hd.dim:
                inv2 = SparseMatrix.from_columns(
                    [h.class_of(self.inverse_series_m(hd.rep(j), ell, m, w,
                                                      perturb_seed=7))
                     for j in range(hd.dim)], h.dim)
                checks["section_independence"] = inv2 == inv
        else:
            pi = self.pi_minus(ell, m, w)
            tgt = self.heq.drt_mod_d_homology(ell, -m, w)
            checks["pi_bijective"] = h.dim == tgt.dim and _bij(pi)
            inv = self._pi_minus_inverse(ell, m, w)
            checks["pi_inv_right"] = pi * inv == SparseMatrix.identity(tgt.dim)
            checks["pi_inv_left"] = inv * pi == SparseMatrix.identity(h.dim)
            if tgt.dim:
                inv2 = self._pi_minus_inverse(ell, m, w, perturb_seed=7)
                checks["section_independence"] = inv2 == inv
            checks["pidiag_commutes"] = self._pidiag(ell, m, w)
        return checks

    def _pi_minus_inverse(self, ell, m, w, perturb_seed=None) -> SparseMatrix:
        h = self.ehc_homology(ell, m, w)
        tgt = self.heq.drt_mod_d_homology(ell, -m, w)
        proj = self.heq.quotient(ell, -m, w)
        cols = []
        for j in range(tgt.dim):
            qvec = tgt.rep(j)          # coords in the mod-d quotient
            lift = proj.sec.apply(qvec)  # coords in the block
            cols.append(h.class_of(self.inverse_series_minus(lift, ell, m, w,
                                                             perturb_seed)))
        return SparseMatrix.from_columns(cols, h.dim)

    def _pidiag(self, ell, m, w) -> bool:
        """w_{ell-m} . E followed by pi_- equals E^{-m} after the
        Cuntz-Quillen projection, on HC classes."""
        cy = self.cy
        ext = self.ext
        hc = cy.hc_oracle(ell, w)
        hcwin = cy.hc_window(ell, w)
        ehc_h = self.ehc_homology(ell, m, w)
        win = self.window(ell, m, w)
        tgt = self.heq.drt_mod_d_homology(ell, -m, w)
        proj = self.heq.quotient(ell, -m, w)
        lift = cy.omega_mod_B(ell, w)

        ok = True
        for j in range(hc.dim):
            rep = hc.rep(j)
            # top: w_{ell-m} E into the EHC window, then pi_-
            acc = {}
            for r in win.rs:
                fr = hcwin.component_of(rep, r)
                if not fr:
                    continue
                q = r - m
                E = ext.tsygan(ell - 2 * r, w, q)
                acc = vec_add(acc, win.inject(r, E.apply(fr)))
            left = tgt.class_of(proj.project(win.component_of(acc, 0)))
            # bottom: CQ projection then E^{-m}
            f0 = hcwin.component_of(rep, 0)
            cqv = cy.omega_mod_B(ell, w).project(f0)
            E2 = ext.tsygan(ell, w, -m)
            right = tgt.class_of(proj.project(E2.apply(lift.lift(cqv))))
            ok = ok and left == right
        return ok

    # -- completed periodic comparison

    def ext_per_report(self, ell, w):
        """EHCper^ of internal degree k maps isomorphically onto
        HD_{2k-ell} under the mod-t projection, for every k."""
        checks = {}
        bound = w
        for k in range((ell + 1) // 2, (ell + bound) // 2 + 1):
            p0 = 2 * k - ell
            if p0 < 0 or p0 > bound:
                continue
            win = EhcWindow(self.ext, ell, k, w, support="per")
            below = EhcWindow(self.ext, ell - 1, k, w, support="per")
            above = EhcWindow(self.ext, ell + 1, k, w, support="per")
            h = homology(win.differential_to(below), above.differential_to(win))
            hd = self.cy.hd_model(p0, w)
            r0 = ell - k
            cols = []
            for j in range(h.dim):
                f0 = win.component_of(h.rep(j), r0)
                cols.append(hd.class_of(f0))
            m = SparseMatrix.from_columns(cols, hd.dim)
            checks[f"k={k}"] = h.dim == hd.dim and _bij(m)
        return checks


# ---------------------------------------------------------------------------
# square-zero filtration comparison


def square_zero_gr_report(ext: ExtEngine, ext_prime: ExtEngine, p, q, w):
    """gr of the A-letter filtration of DRbar_t(A) vs DRbar_t(A'),
    as dimension equality per layer.

    For q >= 1 the cyclic relations are letter-homogeneous so the
    layers count basis tuples; at q = 0 the commutator relations merge
    letters and the filtration is computed as growing image subspaces.
    """

    def letters_of(tup):
        return sum(len(ls) + (0 if ext.alg.is_unit(a0) else 1) for a0, ls in tup)

    def layer_counts(engine):
        eng_ext = engine
        block = eng_ext.block(p, q, w)
        counts = {}
        if q >= 1:
            for tup in block.basis:
                m = sum(len(ls) + (0 if eng_ext.alg.is_unit(a0) else 1)
                        for a0, ls in tup)
                counts[m] = counts.get(m, 0) + 1
            return counts
        dr = eng_ext.forms.dr(p, w)
        comp = eng_ext.forms.component(p, w)
        by_count = {}
        for i, (a0, ls) in enumerate(comp.basis):
            m = len(ls) + (0 if eng_ext.alg.is_unit(a0) else 1)
            by_count.setdefault(m, []).append(i)
        prev_dim = 0
        gens = []
        for m in sorted(by_count):
            gens.extend({i: ONE} for i in by_count[m])
            filt = Subspace.from_vectors(
                dr.dim, [dr.project(g) for g in gens])
            if filt.dim != prev_dim:
                counts[m] = filt.dim - prev_dim
            prev_dim = filt.dim
        return counts

    return layer_counts(ext), layer_counts(ext_prime)
