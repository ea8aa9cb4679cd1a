"""Hochschild, cyclic, periodic/negative and Karoubi-de Rham homology.

Every theory is computed per (homological degree, weight) block, by
more than one route, and the comparison maps between routes are built
as explicit matrices and checked to be bijections on homology, not
just dimension counts.

Window conventions for the u-complexes: an element of homological
degree ell is sum_r f_r u^{-r} with f_r of form degree ell - 2r
(|u| = -2).  Support 'R' keeps r >= 0 (u acts nilpotently: terms
pushed to r = -1 vanish), 'neg' keeps r <= 0 (power series), 'per'
keeps every r.  For a connected graded algebra the blocks of fixed
weight are finite because form degree is bounded by weight.
"""

from __future__ import annotations

import random
from fractions import Fraction

from .exactla import (
    ONE,
    SparseMatrix,
    Subspace,
    image_basis,
    kernel_basis,
    preimage,
    quotient_map,
    quotient_section,
    solve_columns,
)
from .forms import FormsEngine


class RouteDisagreement(AssertionError):
    """Two routes to the same homology group disagreed."""


class NotConnectedGraded(ValueError):
    """u-windows need a weight bound on the form degree."""


def vec_add(a, b, coeff=ONE):
    out = dict(a)
    for k, v in b.items():
        w = out.get(k, 0) + coeff * v
        if w:
            out[k] = w
        else:
            out.pop(k, None)
    return out


# ---------------------------------------------------------------------------
# subquotients with chosen representatives


class SubQuotient:
    """Z/B for subspaces B <= Z of an ambient coordinate space.

    Carries a representative basis (section of the quotient) so that
    maps between subquotients can be realized as matrices.
    """

    def __init__(self, Z: Subspace, B: Subspace):
        assert Z.ambient_dim == B.ambient_dim
        assert Z.contains_space(B), "boundaries not inside cycles"
        self.Z = Z
        self.B = B
        b_in_z = Subspace.from_vectors(
            Z.dim, [Z.coordinates(dict(r)) for r in B.basis_rows])
        self.q = quotient_map(Z.dim, b_in_z)
        self.sec = quotient_section(Z.dim, b_in_z)
        self.dim = self.q.rows

    def class_of(self, vec):
        """Coordinates of an ambient cycle in the quotient basis."""
        return self.q.apply(self.Z.coordinates(vec))

    def rep(self, j):
        """Ambient representative of the j-th basis class."""
        zc = self.sec.apply({j: ONE})
        out = {}
        for i, c in zc.items():
            out = vec_add(out, dict(self.Z.basis_rows[i]), c)
        return out

    def reps(self):
        return [self.rep(j) for j in range(self.dim)]

    def map_to(self, target, func, name="map") -> SparseMatrix:
        """Matrix of vec -> func(vec) on classes; func acts on ambient
        representatives and must send classes to classes."""
        cols = []
        for j in range(self.dim):
            img = func(self.rep(j))
            cols.append(target.class_of(img))
        return SparseMatrix.from_columns(cols, target.dim)


def homology(d_out: SparseMatrix, d_in: SparseMatrix) -> SubQuotient:
    """ker(d_out)/im(d_in) on the common ambient space."""
    assert d_out.cols == d_in.rows
    return SubQuotient(kernel_basis(d_out), image_basis(d_in))


class QuotientSpace:
    """Ambient/W with canonical section; a SubQuotient with Z full."""

    def __init__(self, ambient_dim, sub: Subspace):
        self.q = quotient_map(ambient_dim, sub)
        self.sec = quotient_section(ambient_dim, sub)
        self.dim = self.q.rows
        self.sub = sub

    def project(self, vec):
        return self.q.apply(vec)

    def lift(self, coords):
        return self.sec.apply(coords)


# ---------------------------------------------------------------------------
# u-windows


class UWindow:
    """Fixed (degree, weight) block of (Omegabar x {R,[[u]],((u))}, D)."""

    def __init__(self, engine: FormsEngine, ell, w, support, mode,
                 degree_bound=None):
        assert support in ("R", "neg", "per") and mode in ("bB", "id")
        self.engine = engine
        self.ell = ell
        self.w = w
        self.support = support
        self.mode = mode
        bound = degree_bound if degree_bound is not None else _degree_bound(engine, w)
        self.bound = bound
        rs = []
        for r in range(-(bound + 2), ell // 2 + 1):
            p = ell - 2 * r
            if p < 0 or p > bound:
                continue
            if support == "R" and r < 0:
                continue
            if support == "neg" and r > 0:
                continue
            rs.append(r)
        self.rs = rs
        self.comps = {r: engine.component(ell - 2 * r, w) for r in rs}
        self.offsets = {}
        off = 0
        for r in rs:
            self.offsets[r] = off
            off += self.comps[r].dim
        self.dim = off

    def inject(self, r, vec):
        off = self.offsets.get(r)
        if off is None:
            if any(v for v in vec.values()):
                raise KeyError(f"component u^{-r} absent from window")
            return {}
        return {off + i: c for i, c in vec.items()}

    def component_of(self, vec, r):
        off = self.offsets.get(r)
        if off is None:
            return {}
        dim = self.comps[r].dim
        return {i - off: c for i, c in vec.items() if off <= i < off + dim}

    def differential_to(self, target: "UWindow") -> SparseMatrix:
        """The degree -1 differential (b - uB or i - ud) into the
        degree ell-1 window of the same support."""
        assert target.ell == self.ell - 1 and target.support == self.support
        eng = self.engine
        entries = {}
        for r in self.rs:
            p = self.ell - 2 * r
            src_off = self.offsets[r]
            if self.mode == "bB":
                stay = eng.b_block(p, self.w).matrix
                move = eng.B_block(p, self.w).matrix
            else:
                stay = eng.i_block(p, self.w).matrix
                move = eng.d_block(p, self.w).matrix
            # 'stay' lands at the same r, 'move' at r-1 with a minus sign
            if r in target.offsets:
                toff = target.offsets[r]
                for (i, j), v in stay.entries:
                    entries[toff + i, src_off + j] = v
            else:
                assert stay.is_zero() or (self.support == "R" and r - 0 < 0)
            r2 = r - 1
            if r2 in target.offsets:
                toff = target.offsets[r2]
                for (i, j), v in move.entries:
                    entries[toff + i, src_off + j] = entries.get((toff + i, src_off + j), Fraction(0)) - v
            else:
                # the pushed term must die for a reason: killed by u in R,
                # or its target block is empty
                if not (self.support == "R" and r2 < 0):
                    assert move.is_zero()
        return SparseMatrix(target.dim, self.dim, entries)

    def homology(self) -> SubQuotient:
        below = UWindow(self.engine, self.ell - 1, self.w, self.support,
                        self.mode, self.bound)
        above = UWindow(self.engine, self.ell + 1, self.w, self.support,
                        self.mode, self.bound)
        return homology(self.differential_to(below), above.differential_to(self))

    def restrict_harmonic(self, part):
        """Basis matrices of the P/Pperp sub-window (part in {'P','Pperp'})."""
        cols = []
        for r in self.rs:
            p = self.ell - 2 * r
            proj = self.engine.harmonic_projectors(p, self.w)[0 if part == "P" else 1].matrix
            sub = image_basis(proj)
            for row in sub.basis_rows:
                cols.append(self.inject(r, dict(row)))
        return cols


def _degree_bound(engine: FormsEngine, w):
    alg = engine.alg
    if alg.kind == "presented":
        graded = all(wt >= 1 for wt in alg.gen_weights)
    else:
        graded = all(wt >= 1 for t, wt in enumerate(alg.sc_weights) if t != 0)
    if not graded:
        raise NotConnectedGraded(
            f"{alg.name}: not connected graded; pass an explicit degree bound "
            "(results would be truncated)")
    return w


# ---------------------------------------------------------------------------
# sections of d


class DSection:
    """Canonical section of d: Omegabar^(p-1) -> Omegabar^p on its image.

    Built from the echelon solve with free variables zero; if harmonic
    is set the section is corrected to respect the P/Pperp splitting
    (d commutes with P, so the two restrictions patch).
    """

    def __init__(self, engine: FormsEngine, p, w, harmonic=True, perturb_seed=None):
        self.engine = engine
        self.p = p
        self.w = w
        d = engine.d_block(p - 1, w).matrix
        self.d = d
        self.im = image_basis(d)
        rhs = SparseMatrix.from_columns([dict(r) for r in self.im.basis_rows], d.rows)
        self.s0 = solve_columns(d, rhs)
        self.harmonic = harmonic
        if harmonic:
            self.Psrc = engine.P(p - 1, w)
            self.Ptgt = engine.P(p, w)
        self.perturb = None
        if perturb_seed is not None:
            ker = kernel_basis(d)
            rng = random.Random(perturb_seed)
            pert_cols = []
            for _ in range(self.im.dim):
                col = {}
                for row in ker.basis_rows:
                    c = rng.randrange(-2, 3)
                    if c:
                        col = vec_add(col, dict(row), Fraction(c))
                pert_cols.append(col)
            self.perturb = pert_cols

    def _solve_raw(self, yvec):
        coords = self.im.coordinates(yvec)
        return self.s0.apply(coords)

    def apply(self, yvec):
        """x with d x = y, for y in im(d)."""
        if not self.harmonic:
            x = self._solve_raw(yvec)
        else:
            y_h = self.Ptgt.apply(yvec)
            y_a = vec_add(yvec, y_h, -ONE)
            x = vec_add(self.Psrc.apply(self._solve_raw(y_h)),
                        vec_add(self._solve_raw(y_a),
                                self.Psrc.apply(self._solve_raw(y_a)), -ONE))
        if self.perturb is not None:
            for i, c in self.im.coordinates(yvec).items():
                x = vec_add(x, self.perturb[i], c)
        return x


# ---------------------------------------------------------------------------
# the homology theories


class CyclicEngine:
    """All per-(degree, weight) homology models for one algebra."""

    def __init__(self, engine: FormsEngine):
        self.forms = engine
        self.alg = engine.alg
        self._cache = {}

    def _memo(self, key, thunk):
        if key not in self._cache:
            self._cache[key] = thunk()
        return self._cache[key]

    # -- quotient targets used by the DR models

    def omega_mod_d(self, p, w) -> QuotientSpace:
        return self._memo(("omega_mod_d", p, w), lambda: QuotientSpace(
            self.forms.dim(p, w), image_basis(self.forms.d_block(p - 1, w).matrix)))

    def dr_mod_d(self, p, w) -> QuotientSpace:
        def build():
            dr = self.forms.dr(p, w)
            return QuotientSpace(dr.dim, image_basis(self.forms.d_on_dr(p - 1, w)))
        return self._memo(("dr_mod_d", p, w), build)

    # -- Hochschild homology

    def hh_model(self, n, w) -> SubQuotient:
        """ker(i: DRbar^n -> Omegabar^(n-1)), classes are the vectors."""
        def build():
            dr = self.forms.dr(n, w)
            ker = kernel_basis(self.forms.i_on_dr(n, w))
            return SubQuotient(ker, Subspace.zero(dr.dim))
        return self._memo(("hh_model", n, w), build)

    def hh_oracle(self, n, w) -> SubQuotient:
        def build():
            b_out = self.forms.b_block(n, w).matrix
            b_in = self.forms.b_block(n + 1, w).matrix
            return homology(b_out, b_in)
        return self._memo(("hh_oracle", n, w), build)

    def hh_dim(self, n, w) -> int:
        oracle = self.hh_oracle(n, w)
        model = self.hh_model(n, w)
        cmp = oracle.map_to(model, lambda v: self.forms.dr(n, w).project(v))
        if not (oracle.dim == model.dim and _is_bijection(cmp)):
            raise RouteDisagreement(
                f"HH_{n}(w={w}): oracle dim {oracle.dim}, ker(i) dim {model.dim}")
        return oracle.dim

    # -- cyclic homology

    def hc_window(self, ell, w) -> UWindow:
        return self._memo(("hc_window", ell, w),
                          lambda: UWindow(self.forms, ell, w, "R", "bB"))

    def hc_oracle(self, ell, w) -> SubQuotient:
        return self._memo(("hc_oracle", ell, w),
                          lambda: self.hc_window(ell, w).homology())

    def omega_mod_B(self, p, w) -> QuotientSpace:
        def build():
            B_in = self.forms.B_block(p - 1, w).matrix
            return QuotientSpace(self.forms.dim(p, w), image_basis(B_in))
        return self._memo(("omega_mod_B", p, w), build)

    def b_mod_B(self, p, w) -> SparseMatrix:
        """b induced on Omegabar/B Omegabar."""
        def build():
            if p < 0:
                return SparseMatrix.zero(0, 0)
            src = self.omega_mod_B(p, w)
            if p == 0:
                return SparseMatrix.zero(0, src.dim)
            tgt = self.omega_mod_B(p - 1, w)
            b = self.forms.b_block(p, w).matrix
            for row in src.sub.basis_rows:
                assert tgt.sub.contains(b.apply(dict(row))), "b not defined mod B"
            return tgt.q * b * src.sec
        return self._memo(("b_mod_B", p, w), build)

    def hc_cq(self, ell, w) -> SubQuotient:
        """Cuntz-Quillen route: H(Omegabar/B Omegabar, b)."""
        return self._memo(("hc_cq", ell, w),
                          lambda: homology(self.b_mod_B(ell, w), self.b_mod_B(ell + 1, w)))

    def hc_dr_model(self, ell, w) -> SubQuotient:
        """ker(i: DR^ell/dDR -> Omega^(ell-1)/dOmega) as a subquotient
        of DRbar^ell."""
        def build():
            dr = self.forms.dr(ell, w)
            tgt = self.omega_mod_d(ell - 1, w)
            m = tgt.q * self.forms.i_on_dr(ell, w)
            Z = kernel_basis(m)
            Bnd = image_basis(self.forms.d_on_dr(ell - 1, w))
            return SubQuotient(Z, Bnd)
        return self._memo(("hc_dr_model", ell, w), build)

    def hc_dim(self, ell, w) -> int:
        oracle = self.hc_oracle(ell, w)
        window = self.hc_window(ell, w)
        cq = self.hc_cq(ell, w)
        drm = self.hc_dr_model(ell, w)

        def to_cq(vec):
            f0 = window.component_of(vec, 0)
            p = ell
            B_in = self.forms.B_block(p - 1, w).matrix
            q = QuotientSpace(self.forms.dim(p, w), image_basis(B_in))
            return q.project(f0)

        def to_dr(vec):
            f0 = window.component_of(vec, 0)
            return self.forms.dr(ell, w).project(f0)

        m1 = oracle.map_to(cq, to_cq)
        m2 = oracle.map_to(drm, to_dr)
        ok = (oracle.dim == cq.dim == drm.dim
              and _is_bijection(m1) and _is_bijection(m2))
        if not ok:
            raise RouteDisagreement(
                f"HC_{ell}(w={w}): dims oracle={oracle.dim} cq={cq.dim} dr={drm.dim}")
        return oracle.dim

    # -- Karoubi-de Rham

    def hd_model(self, n, w) -> SubQuotient:
        def build():
            return homology(self.forms.d_on_dr(n, w), self.forms.d_on_dr(n - 1, w))
        return self._memo(("hd_model", n, w), build)

    def hd_dim(self, n, w) -> int:
        return self.hd_model(n, w).dim

    # -- periodic and negative

    def per_dims(self, ell, w):
        a = UWindow(self.forms, ell, w, "per", "bB").homology().dim
        b = UWindow(self.forms, ell, w, "per", "id").homology().dim
        if a != b:
            raise RouteDisagreement(f"HCper_{ell}(w={w}): {a} vs {b}")
        return a

    def neg_dims(self, ell, w):
        a = UWindow(self.forms, ell, w, "neg", "bB").homology().dim
        h = UWindow(self.forms, ell, w, "neg", "id")
        hh = h.homology()
        dcomm = self.forms.d_commutator_subspace(ell, w)
        cols = []
        for row in dcomm.basis_rows:
            vec = h.inject(0, dict(row))
            cols.append(hh.class_of(vec))
        incl = SparseMatrix.from_columns(cols, hh.dim)
        from .exactla import rank as _rank
        rk = _rank(incl)
        if rk != dcomm.dim:
            raise RouteDisagreement(
                f"HCneg_{ell}(w={w}): [dO,dO] inclusion not injective")
        b = hh.dim - dcomm.dim
        if a != b:
            raise RouteDisagreement(f"HCneg_{ell}(w={w}): {a} vs {b}")
        return a

    def cyclic_via_id(self, ell, w) -> int:
        """HC via (Omegabar x R, i - ud) / [dOmega, dOmega]."""
        win = UWindow(self.forms, ell, w, "R", "id")
        hh = win.homology()
        dcomm = self.forms.d_commutator_subspace(ell + 1, w)
        if dcomm.dim == 0:
            return hh.dim
        sec = DSection(self.forms, ell + 1, w, harmonic=True)
        cols = []
        for row in dcomm.basis_rows:
            vec = self._series_include(win, sec, dict(row))
            cols.append(hh.class_of(vec))
        incl = SparseMatrix.from_columns(cols, hh.dim)
        from .exactla import rank as _rank
        if _rank(incl) != dcomm.dim:
            raise RouteDisagreement(
                f"HC-(i-ud)_{ell}(w={w}): series inclusion not injective")
        return hh.dim - dcomm.dim

    def _series_include(self, win: UWindow, sec: DSection, f):
        """f in [dO,dO]^(ell+1) -> sum_k u^-k (dsec i)^k (dsec f)."""
        out = {}
        sections = {}
        cur = sec.apply(f)
        p = win.ell
        r = 0
        while cur:
            out = vec_add(out, win.inject(r, cur))
            iv = self.forms.i_block(p, win.w).matrix.apply(cur)
            if not iv:
                break
            key = p - 1
            if key not in sections:
                sections[key] = DSection(self.forms, key, win.w, harmonic=True)
            cur = sections[key].apply(iv)
            p -= 2
            r += 1
        return out

    def perneg_report(self, ell, w):
        per = self.per_dims(ell, w)
        neg = self.neg_dims(ell, w)
        hc_id = self.cyclic_via_id(ell, w)
        hc = self.hc_dim(ell, w)
        if hc_id != hc:
            raise RouteDisagreement(
                f"HC_{ell}(w={w}) via (i-ud): {hc_id} vs {hc}")
        return {"per": per, "neg": neg, "hc": hc}

    def antiharmonic_acyclic(self, ell, w) -> bool:
        """(Pperp Omegabar, b) and the three Pperp u-complexes are acyclic."""
        eng = self.forms
        # plain b-complex restricted to Pperp
        ok = True
        for support, mode in ((None, "b"), ("R", "bB"), ("neg", "bB"), ("per", "bB")):
            if support is None:
                subs = {}
                for p in (ell - 1, ell, ell + 1):
                    if p < 0:
                        subs[p] = None
                        continue
                    subs[p] = image_basis(eng.harmonic_projectors(p, w)[1].matrix)

                def restricted_b(p):
                    if p < 0 or subs[p] is None:
                        return SparseMatrix.zero(0, 0)
                    src = subs[p]
                    tgt = subs.get(p - 1)
                    b = eng.b_block(p, w).matrix
                    cols = []
                    for row in src.basis_rows:
                        img = b.apply(dict(row))
                        cols.append({} if tgt is None else tgt.coordinates(img))
                    return SparseMatrix.from_columns(cols, 0 if tgt is None else tgt.dim)

                h = homology(restricted_b(ell), restricted_b(ell + 1))
                ok = ok and h.dim == 0
            else:
                win = UWindow(eng, ell, w, support, mode)
                below = UWindow(eng, ell - 1, w, support, mode)
                above = UWindow(eng, ell + 1, w, support, mode)
                sub = Subspace.from_vectors(win.dim, win.restrict_harmonic("Pperp"))
                sub_b = Subspace.from_vectors(below.dim, below.restrict_harmonic("Pperp"))
                sub_a = Subspace.from_vectors(above.dim, above.restrict_harmonic("Pperp"))
                d_out_full = win.differential_to(below)
                d_in_full = above.differential_to(win)

                def restrict(m, src_sub, tgt_sub):
                    cols = []
                    for row in src_sub.basis_rows:
                        cols.append(tgt_sub.coordinates(m.apply(dict(row))))
                    return SparseMatrix.from_columns(cols, tgt_sub.dim)

                h = homology(restrict(d_out_full, sub, sub_b),
                             restrict(d_in_full, sub_a, sub))
                ok = ok and h.dim == 0
        return ok

    def d_section(self, p, w) -> "DSection":
        """Harmonic-respecting canonical section of d into degree p."""
        return self._memo(("dsec", p, w), lambda: DSection(self.forms, p, w, harmonic=True))

    # -- Connes exact sequence

    def connes_report(self, n, w):
        """Exactness of 0 -> HD_n -> HC_n -> HH_{n+1} -> HC_{n+1} -> HD_{n-1} -> 0."""
        m = ConnesMaps(self, n, w)
        checks = {}
        checks["S2_injective"] = _rank_of(m.S2) == m.hd_n.dim
        checks["B_S2_zero"] = (m.B * m.S2).is_zero()
        checks["exact_at_HC_n"] = _rank_of(m.S2) + _rank_of(m.B) == m.hc_n.dim
        checks["I_B_zero"] = (m.I * m.B).is_zero()
        checks["exact_at_HH"] = _rank_of(m.B) + _rank_of(m.I) == m.hh_n1.dim
        checks["S1_I_zero"] = (m.S1 * m.I).is_zero()
        checks["exact_at_HC_n1"] = _rank_of(m.I) + _rank_of(m.S1) == m.hc_n1.dim
        checks["S1_surjective"] = _rank_of(m.S1) == m.hd_nm.dim
        checks["kerB_is_HD"] = image_basis(m.S2) == kernel_basis(m.B)
        dims = {
            "HD_n": m.hd_n.dim, "HC_n": m.hc_n.dim, "HH_n+1": m.hh_n1.dim,
            "HC_n+1": m.hc_n1.dim, "HD_n-1": m.hd_nm.dim,
        }
        return {"checks": checks, "dims": dims, "maps": m}

    # -- the three-row diagram

    def neg_id_window(self, ell, w) -> UWindow:
        return self._memo(("negwin", ell, w),
                          lambda: UWindow(self.forms, ell, w, "neg", "id"))

    def per_id_window(self, ell, w) -> UWindow:
        return self._memo(("perwin", ell, w),
                          lambda: UWindow(self.forms, ell, w, "per", "id"))

    def neg_id_homology(self, ell, w) -> SubQuotient:
        def build():
            win = self.neg_id_window(ell, w)
            below = UWindow(self.forms, ell - 1, w, "neg", "id", win.bound)
            above = UWindow(self.forms, ell + 1, w, "neg", "id", win.bound)
            return homology(win.differential_to(below), above.differential_to(win))
        return self._memo(("neghom", ell, w), build)

    def per_id_homology(self, ell, w) -> SubQuotient:
        def build():
            win = self.per_id_window(ell, w)
            below = UWindow(self.forms, ell - 1, w, "per", "id", win.bound)
            above = UWindow(self.forms, ell + 1, w, "per", "id", win.bound)
            return homology(win.differential_to(below), above.differential_to(win))
        return self._memo(("perhom", ell, w), build)

    def hcneg_model(self, ell, w):
        """HCneg_ell as H(neg window, i-ud) / [dO,dO] (constant terms)."""
        def build():
            win = self.neg_id_window(ell, w)
            h = self.neg_id_homology(ell, w)
            dcomm = self.forms.d_commutator_subspace(ell, w)
            cls = [h.class_of(win.inject(0, dict(r))) for r in dcomm.basis_rows]
            return _QuotientOfSQ(h, cls)
        return self._memo(("hcneg", ell, w), build)

    def zn_space(self, n, w) -> Subspace:
        """Z_n = {f in the [[u]] window : (i - ud) f independent of u}."""
        def build():
            win = self.neg_id_window(n, w)
            below = UWindow(self.forms, n - 1, w, "neg", "id", win.bound)
            d = win.differential_to(below)
            const = Subspace.from_vectors(
                below.dim,
                [{below.offsets[0] + i: ONE} for i in range(below.comps[0].dim)]
                if 0 in below.offsets else [])
            return preimage(d, const)
        return self._memo(("zn", n, w), build)

    def hd_prime(self, n, w) -> Subspace:
        """Image of Z_n -> HD_n, f |-> class of (f_0)_nat."""
        def build():
            hd = self.hd_model(n, w)
            win = self.neg_id_window(n, w)
            dr = self.forms.dr(n, w)
            vecs = []
            for row in self.zn_space(n, w).basis_rows:
                f0 = win.component_of(dict(row), 0)
                vecs.append(hd.class_of(dr.project(f0)))
            return Subspace.from_vectors(hd.dim, vecs)
        return self._memo(("hdprime", n, w), build)

    def hh_prime(self, n, w) -> Subspace:
        """Image of H(Omegabar[[u]], i-ud) -> HH_n, f |-> (f_0)_nat."""
        def build():
            hh = self.hh_model(n, w)
            win = self.neg_id_window(n, w)
            dr = self.forms.dr(n, w)
            h = self.neg_id_homology(n, w)
            vecs = []
            for j in range(h.dim):
                f0 = win.component_of(h.rep(j), 0)
                vecs.append(hh.class_of(dr.project(f0)))
            return Subspace.from_vectors(hh.dim, vecs)
        return self._memo(("hhprime", n, w), build)

    def bigdiag_report(self, n, w):
        """Commutativity and exactness of the three-row diagram at (n, w)."""
        f = self.forms
        checks = {}
        con = self.connes_report(n, w)
        checks["bottom_row"] = all(con["checks"].values())
        cm = con["maps"]

        hh_n = self.hh_model(n, w)
        hh_n1 = self.hh_model(n + 1, w)
        hh_nm = self.hh_model(n - 1, w)
        hc_n1b = self.hc_dr_model(n + 1, w)
        hd_nm = self.hd_model(n - 1, w)
        hd_n = self.hd_model(n, w)
        hcneg_p = self.hcneg_model(n + 1, w)
        hcneg_m = self.hcneg_model(n - 1, w)
        per_p = self.per_id_homology(n + 1, w)
        per_m = self.per_id_homology(n - 1, w)
        hhp_n = self.hh_prime(n, w)
        hhp_nm = self.hh_prime(n - 1, w)
        hdp_n = self.hd_prime(n, w)
        hdp_nm = self.hd_prime(n - 1, w)

        win_p = self.neg_id_window(n + 1, w)
        win_m = self.neg_id_window(n - 1, w)
        perwin_p = self.per_id_window(n + 1, w)
        perwin_m = self.per_id_window(n - 1, w)

        def dr_proj(p):
            return self.forms.dr(p, w).project

        # B-: HH_n -> HCneg_{n+1}, f |-> class of df at u^0
        def Bminus(vec):
            x = f.dr(n, w).section.apply(vec)
            dx = f.d_block(n, w).matrix.apply(x)
            return hcneg_p.class_of(win_p.inject(0, dx))
        Bm = _matrix_of(hh_n.reps(), Bminus, hcneg_p.dim)

        # B': HC_n -> HCneg_{n+1}
        def Bprime(vec):
            x = f.dr(n, w).section.apply(vec)
            dx = f.d_block(n, w).matrix.apply(x)
            return hcneg_p.class_of(win_p.inject(0, dx))
        Bp = _matrix_of(cm.hc_n.reps(), Bprime, hcneg_p.dim)

        # S-: HCneg_{n+1} -> HCneg_{n-1}, multiplication by u
        def u_shift_neg(vec):
            out = {}
            for r in win_p.rs:
                comp = win_p.component_of(vec, r)
                if comp:
                    out.update(win_m.inject(r - 1, comp))
            return hcneg_m.class_of(out)
        Sm = _matrix_of(hcneg_p.sq_reps(), u_shift_neg, hcneg_m.dim)

        # p-: HCneg_m -> HCper_m (inclusion of windows)
        def incl_neg_per(win_src, win_tgt, per_h):
            def go(vec):
                out = {}
                for r in win_src.rs:
                    comp = win_src.component_of(vec, r)
                    if comp:
                        out.update(win_tgt.inject(r, comp))
                return per_h.class_of(out)
            return go
        Pm_p = _matrix_of(hcneg_p.sq_reps(), incl_neg_per(win_p, perwin_p, per_p), per_p.dim)
        Pm_m = _matrix_of(hcneg_m.sq_reps(), incl_neg_per(win_m, perwin_m, per_m), per_m.dim)

        # u-shift on per homology: HCper_{n+1} -> HCper_{n-1}
        def u_shift_per(vec):
            out = {}
            for r in perwin_p.rs:
                comp = perwin_p.component_of(vec, r)
                if comp:
                    out.update(perwin_m.inject(r - 1, comp))
            return per_m.class_of(out)
        U = _matrix_of(per_p.reps(), u_shift_per, per_m.dim)

        # I-: HCneg_ell -> HH_ell, f -> (f_0)_nat
        def Iminus(win_src, hh_tgt, p):
            def go(vec):
                return hh_tgt.class_of(dr_proj(p)(win_src.component_of(vec, 0)))
            return go
        Im_p = _matrix_of(hcneg_p.sq_reps(), Iminus(win_p, hh_n1, n + 1), hh_n1.dim)
        Im_m = _matrix_of(hcneg_m.sq_reps(), Iminus(win_m, hh_nm, n - 1), hh_nm.dim)

        # p1: HCper_ell -> HD_ell coords (image must be HD'), f -> (f_0)_nat
        def p1(perwin, hd_tgt, p):
            def go(vec):
                return hd_tgt.class_of(dr_proj(p)(perwin.component_of(vec, 0)))
            return go
        P1_m = _matrix_of(per_m.reps(), p1(perwin_m, hd_nm, n - 1), hd_nm.dim)

        # p: HCper_{n+1} -> HC_{n+1}, f -> (f_0)_nat
        P_vert = _matrix_of(per_p.reps(),
                            lambda vec: hc_n1b.class_of(dr_proj(n + 1)(perwin_p.component_of(vec, 0))),
                            hc_n1b.dim)

        # J: HH'_m -> HD_m (on HH'-basis, expressed in HD coords)
        def J_matrix(hhp, hh_model, hd_model):
            cols = []
            for row in hhp.basis_rows:
                vec = {}
                for i, c in dict(row).items():
                    vec = vec_add(vec, hh_model.rep(i), c)
                cols.append(hd_model.class_of(vec))
            return SparseMatrix.from_columns(cols, hd_model.dim)
        Jn = J_matrix(hhp_n, hh_n, hd_n)

        # top row exactness
        checks["top_ker_Bminus"] = kernel_basis(Bm) == hhp_n
        checks["top_imB_kerS"] = image_basis(Bm) == kernel_basis(Sm)
        checks["top_imS_kerI"] = image_basis(Sm) == kernel_basis(Im_m)
        checks["top_I_onto_HHprime"] = image_basis(Im_m) == hhp_nm

        # middle row exactness
        def p2_matrix(hdp, hd_model, hc_model):
            cols = []
            for row in hdp.basis_rows:
                vec = {}
                for i, c in dict(row).items():
                    vec = vec_add(vec, hd_model.rep(i), c)
                cols.append(hc_model.class_of(vec))
            return SparseMatrix.from_columns(cols, hc_model.dim)
        P2 = p2_matrix(hdp_n, hd_n, cm.hc_n)
        checks["mid_p2_injective"] = _rank_of(P2) == hdp_n.dim
        checks["mid_imp2_kerBprime"] = image_basis(P2) == kernel_basis(Bp)
        checks["mid_imBprime_kerpminus"] = image_basis(Bp) == kernel_basis(Pm_p)
        checks["mid_u_impminus_kerp1"] = (
            image_basis(U * Pm_p) == kernel_basis(P1_m))
        checks["mid_p1_onto_HDprime"] = image_basis(P1_m) == hdp_nm

        # squares; square (1) is I(incl(x)) = p2(J(x)) in HC_n coordinates
        In = _matrix_of(hh_n.reps(), lambda v: cm.hc_n.class_of(v), cm.hc_n.dim)
        lhs_cols = []
        rhs_cols = []
        for row in hhp_n.basis_rows:
            coords = dict(row)
            lhs_cols.append(In.apply(coords))
            vec = {}
            for i, c in Jn.apply(coords).items():
                vec = vec_add(vec, hd_n.rep(i), c)
            rhs_cols.append(cm.hc_n.class_of(vec))
        checks["sq_J_p2_I"] = lhs_cols == rhs_cols

        checks["sq_Bminus_BprimeI"] = Bm == Bp * In
        checks["sq_Iminus_Bprime_B"] = Im_p * Bp == cm.B
        checks["sq_pminus_Sminus_u"] = Pm_m * Sm == U * Pm_p
        # (5) on representatives: J(I-(f)) = p1(p-(f))
        JIm = _matrix_of(
            hcneg_m.sq_reps(),
            lambda vec: hd_nm.class_of(dr_proj(n - 1)(win_m.component_of(vec, 0))),
            hd_nm.dim)
        checks["sq_J_Iminus_p1_pminus"] = JIm == P1_m * Pm_m
        checks["sq_S1_p"] = cm.S1 * P_vert == P1_m * U
        # periodicity: (S2 S1) . p = p . u on the ((u))-model
        P_vert_m = _matrix_of(per_m.reps(),
                              lambda vec: self.hc_dr_model(n - 1, w).class_of(
                                  dr_proj(n - 1)(perwin_m.component_of(vec, 0))),
                              self.hc_dr_model(n - 1, w).dim)
        checks["periodicity_u"] = (ConnesMaps(self, n - 1, w).S2 * cm.S1) * P_vert == P_vert_m * U

        dims = {
            "HCneg_n+1": hcneg_p.dim, "HCneg_n-1": hcneg_m.dim,
            "HCper_n+1": per_p.dim, "HCper_n-1": per_m.dim,
            "HH'_n": hhp_n.dim, "HH'_n-1": hhp_nm.dim,
            "HD'_n": hdp_n.dim, "HD'_n-1": hdp_nm.dim,
        }
        return {"checks": checks, "dims": dims}


class _QuotientOfSQ:
    """Quotient of a SubQuotient by extra classes given in its coords."""

    def __init__(self, sq: SubQuotient, extra_coord_vectors):
        self.sq = sq
        sub = Subspace.from_vectors(sq.dim, extra_coord_vectors)
        self.q = quotient_map(sq.dim, sub)
        self.sec = quotient_section(sq.dim, sub)
        self.dim = self.q.rows

    def class_of(self, vec):
        return self.q.apply(self.sq.class_of(vec))

    def sq_reps(self):
        out = []
        for j in range(self.dim):
            coords = self.sec.apply({j: ONE})
            vec = {}
            for i, c in coords.items():
                vec = vec_add(vec, self.sq.rep(i), c)
            out.append(vec)
        return out


def _rank_of(m: SparseMatrix) -> int:
    from .exactla import rank as _rank
    return _rank(m)


def _matrix_of(reps, func, target_dim) -> SparseMatrix:
    return SparseMatrix.from_columns([func(r) for r in reps], target_dim)


def _is_bijection(m: SparseMatrix) -> bool:
    from .exactla import rank as _rank
    return m.rows == m.cols and _rank(m) == m.rows


# ---------------------------------------------------------------------------
# Connes exact sequence and the three-row diagram


class ConnesMaps:
    """The maps of the five-term sequence at (n, w), realized as
    matrices on the ker(i)-model homology bases."""

    def __init__(self, ce: "CyclicEngine", n, w):
        self.ce = ce
        self.n = n
        self.w = w
        self.hd_n = ce.hd_model(n, w)
        self.hc_n = ce.hc_dr_model(n, w)
        self.hh_n1 = ce.hh_model(n + 1, w)
        self.hc_n1 = ce.hc_dr_model(n + 1, w)
        self.hd_nm = ce.hd_model(n - 1, w)

        self.S2 = self.hd_n.map_to(self.hc_n, lambda v: v)
        self.B = self.hc_n.map_to(self.hh_n1, lambda v: self._d_dr(n, v))
        self.I = self.hh_n1.map_to(self.hc_n1, lambda v: v)
        self.S1 = self.hc_n1.map_to(self.hd_nm, lambda v: self._dbar_inv_i(n + 1, v))

    def _d_dr(self, p, v):
        return self.ce.forms.d_on_dr(p, self.w).apply(v)

    def _dbar_inv_i(self, p, v):
        """(dbar^{-1} i f)_nat for f in the DR model at degree p."""
        f = self.ce.forms
        y = f.i_on_dr(p, self.w).apply(v)
        x = self.ce.d_section(p - 1, self.w).apply(y)
        return f.dr(p - 2, self.w).project(x)
