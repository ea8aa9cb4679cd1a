"""Input algebras A = k (+) Abar.

Two kinds of descriptions are supported: finite multiplication tables
(structure constants) and weighted presentations with rewriting rules.
A rule maps one word (the largest in degree-lex order) to a linear
combination of strictly smaller words of the same weight, so rewriting
terminates; confluence is checked, never assumed.  Every enumeration is
per weight and complete below the loaded cap.

Basis words are tokens: tuples of generator indices for presented
algebras (() is the unit), plain ints for structure constants (0 is
the unit).
"""

from __future__ import annotations

from fractions import Fraction

from .exactla import ONE


class SpecFormatError(ValueError):
    pass


class WeightCapExceeded(ValueError):
    pass


class RewriteBudgetExceeded(RuntimeError):
    pass


class ConfluenceError(ValueError):
    pass


# ---------------------------------------------------------------------------
# element helpers (dict token -> Fraction)


def add_into(acc, elem, coeff=ONE):
    for t, v in elem.items():
        w = acc.get(t, 0) + coeff * v
        if w:
            acc[t] = w
        else:
            acc.pop(t, None)
    return acc


def scaled(elem, coeff):
    if not coeff:
        return {}
    return {t: coeff * v for t, v in elem.items()}


# ---------------------------------------------------------------------------
# declarative spec


class AlgebraSpec:
    """Parsed description; load() turns it into a queryable Algebra."""

    def __init__(self, name, kind, generators=None, relations=None,
                 basis_names=None, basis_weights=None, table=None):
        self.name = name
        self.kind = kind
        if kind == "presented":
            self.generators = list(generators or [])
            self.relations = list(relations or [])
            seen = set()
            for g, w in self.generators:
                if g in seen:
                    raise SpecFormatError(f"duplicate generator {g!r}")
                if not (isinstance(w, int) and w >= 1):
                    raise SpecFormatError(f"generator {g!r} needs a positive integer weight")
                seen.add(g)
        elif kind == "structure_constants":
            self.basis_names = list(basis_names or [])
            if not self.basis_names:
                raise SpecFormatError("structure_constants needs a nonempty basis")
            self.basis_weights = list(basis_weights if basis_weights is not None
                                      else [0] * len(self.basis_names))
            if len(self.basis_weights) != len(self.basis_names):
                raise SpecFormatError("weights length differs from basis length")
            if self.basis_weights[0] != 0:
                raise SpecFormatError("unit (first basis element) must have weight 0")
            self.table = dict(table or {})
        else:
            raise SpecFormatError(f"unknown kind {kind!r}")

    def load(self, max_weight):
        return Algebra(self, max_weight)


# ---------------------------------------------------------------------------
# loaded algebra


class Algebra:
    def __init__(self, spec: AlgebraSpec, max_weight: int, rewrite_budget: int = 200000):
        assert max_weight >= 0
        self.spec = spec
        self.name = spec.name
        self.kind = spec.kind
        self.max_weight = max_weight
        self.rewrite_budget = rewrite_budget
        self._basis_cache = {}
        self._nf_cache = {}
        if spec.kind == "presented":
            self.gen_names = [g for g, _ in spec.generators]
            self.gen_weights = [w for _, w in spec.generators]
            self._gen_index = {g: i for i, g in enumerate(self.gen_names)}
            self.rules = self._compile_rules(spec.relations)
            self.unit = ()
        else:
            self._init_structure_constants()
            self.unit = 0

    # -- presented kind ----------------------------------------------------

    def word_weight(self, word):
        return sum(self.gen_weights[i] for i in word)

    def order_key(self, word):
        return (self.word_weight(word), len(word), word)

    def _compile_rules(self, relations):
        rules = {}
        for lhs, rhs in relations:
            lhs = tuple(lhs)
            if not lhs:
                raise SpecFormatError("empty rule left-hand side")
            lw = self.word_weight(lhs)
            rhs = {tuple(w): Fraction(c) for w, c in rhs.items() if c}
            for w in rhs:
                if self.word_weight(w) != lw:
                    raise SpecFormatError(
                        f"rule {self._fmt(lhs)} is not weight-homogeneous")
                if not self.order_key(w) < self.order_key(lhs):
                    raise SpecFormatError(
                        f"rule {self._fmt(lhs)}: rhs word {self._fmt(w)} does not precede it")
            if lhs in rules:
                raise SpecFormatError(f"duplicate rule for {self._fmt(lhs)}")
            rules[lhs] = rhs
        return rules

    def _fmt(self, word):
        if self.kind == "presented":
            return " ".join(self.gen_names[i] for i in word) if word else "1"
        return self.spec.basis_names[word]

    def _find_redex(self, word):
        for pos in range(len(word)):
            for lhs in self._rules_sorted:
                if word[pos:pos + len(lhs)] == lhs:
                    return pos, lhs
        return None

    @property
    def _rules_sorted(self):
        try:
            return self._rules_sorted_cache
        except AttributeError:
            self._rules_sorted_cache = sorted(self.rules, key=self.order_key)
            return self._rules_sorted_cache

    def _nf_presented(self, word):
        word = tuple(word)
        cached = self._nf_cache.get(word)
        if cached is not None:
            return cached
        budget = self.rewrite_budget
        result = {}
        stack = [(word, ONE)]
        while stack:
            w, coeff = stack.pop()
            hit = self._nf_cache.get(w)
            if hit is not None:
                add_into(result, hit, coeff)
                continue
            redex = self._find_redex(w)
            if redex is None:
                add_into(result, {w: ONE}, coeff)
                continue
            budget -= 1
            if budget <= 0:
                raise RewriteBudgetExceeded(
                    f"rewriting of {self._fmt(word)} exceeded the step budget")
            pos, lhs = redex
            for r, c in self.rules[lhs].items():
                stack.append((w[:pos] + r + w[pos + len(lhs):], coeff * c))
        self._nf_cache[word] = result
        return result

    # -- structure constants kind -------------------------------------------

    def _init_structure_constants(self):
        spec = self.spec
        n = len(spec.basis_names)
        self.sc_weights = list(spec.basis_weights)
        self.sc_table = {}
        name_index = {b: i for i, b in enumerate(spec.basis_names)}
        for (a, b), combo in spec.table.items():
            ia, ib = name_index.get(a), name_index.get(b)
            if ia is None or ib is None:
                raise SpecFormatError(f"table entry {a!r}*{b!r} uses unknown basis names")
            elem = {}
            for namek, c in combo.items():
                ik = name_index.get(namek)
                if ik is None:
                    raise SpecFormatError(f"table value uses unknown basis name {namek!r}")
                if c:
                    elem[ik] = Fraction(c)
            self.sc_table[ia, ib] = elem
        w = self.sc_weights
        for (ia, ib), elem in self.sc_table.items():
            for ik in elem:
                if w[ik] != w[ia] + w[ib]:
                    raise SpecFormatError("multiplication table is not weight-homogeneous")
        # unit law and associativity are cheap to check exhaustively
        for i in range(n):
            if self._mult_sc(0, i) != {i: ONE} or self._mult_sc(i, 0) != {i: ONE}:
                raise SpecFormatError("first basis element does not multiply as the unit")
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    left = {}
                    for t, c in self._mult_sc(i, j).items():
                        add_into(left, self._mult_sc(t, k), c)
                    right = {}
                    for t, c in self._mult_sc(j, k).items():
                        add_into(right, self._mult_sc(i, t), c)
                    if left != right:
                        raise SpecFormatError(
                            f"associativity fails at "
                            f"({spec.basis_names[i]},{spec.basis_names[j]},{spec.basis_names[k]})")

    def _mult_sc(self, i, j):
        if i == 0:
            return {j: ONE}
        if j == 0:
            return {i: ONE}
        return dict(self.sc_table.get((i, j), {}))

    # -- common API ----------------------------------------------------------

    def weight(self, token):
        if self.kind == "presented":
            return self.word_weight(token)
        return self.sc_weights[token]

    def token_key(self, token):
        if self.kind == "presented":
            return self.order_key(token)
        return (self.sc_weights[token], token)

    def is_unit(self, token):
        return token == self.unit

    def basis(self, w):
        """Ordered (degree-lex) basis tokens of weight w."""
        if w > self.max_weight:
            raise WeightCapExceeded(f"weight {w} above cap {self.max_weight}")
        cached = self._basis_cache.get(w)
        if cached is not None:
            return cached
        if self.kind == "structure_constants":
            out = [i for i, wt in enumerate(self.sc_weights) if wt == w]
            out.sort(key=self.token_key)
        else:
            out = sorted(self._enumerate_words(w), key=self.order_key)
        self._basis_cache[w] = out
        return out

    def bar_basis(self, w):
        return [t for t in self.basis(w) if not self.is_unit(t)]

    def _enumerate_words(self, w):
        if w == 0:
            return [()]
        out = []
        minw = min(self.gen_weights) if self.gen_weights else None
        if minw is None:
            return out

        def extend(word, left):
            if left == 0:
                out.append(word)
                return
            if left < minw:
                return
            for i, gw in enumerate(self.gen_weights):
                if gw <= left:
                    nxt = word + (i,)
                    if self._tail_irreducible(nxt):
                        extend(nxt, left - gw)

        extend((), w)
        return out

    def _tail_irreducible(self, word):
        for lhs in self.rules:
            if len(lhs) <= len(word) and word[-len(lhs):] == lhs:
                return False
        return True

    def normal_form(self, word):
        """Normal form of a product of generators (or basis tokens).

        Presented kind: fixed point of the rewrite system.  Structure
        constants: fold the table left to right.
        """
        if self.kind == "presented":
            idx = []
            for g in word:
                if isinstance(g, str):
                    if g not in self._gen_index:
                        raise SpecFormatError(f"unknown generator {g!r}")
                    idx.append(self._gen_index[g])
                else:
                    idx.append(g)
            idx = tuple(idx)
            if self.word_weight(idx) > self.max_weight:
                raise WeightCapExceeded(
                    f"word weight {self.word_weight(idx)} above cap {self.max_weight}")
            return self._nf_presented(idx)
        acc = {0: ONE}
        for t in word:
            nxt = {}
            for a, c in acc.items():
                add_into(nxt, self._mult_sc(a, t), c)
            acc = nxt
        return acc

    def mult(self, t1, t2):
        """Product of two basis tokens as an element dict."""
        if self.kind == "presented":
            return self._nf_presented(t1 + t2)
        return self._mult_sc(t1, t2)

    def mult_elems(self, e1, e2):
        out = {}
        for a, ca in e1.items():
            for b, cb in e2.items():
                add_into(out, self.mult(a, b), ca * cb)
        return out

    def bar(self, elem):
        """Project an element to Abar coordinates (drop the unit)."""
        return {t: c for t, c in elem.items() if not self.is_unit(t)}

    # -- verification --------------------------------------------------------

    def check_confluence(self):
        """Resolve all rule overlaps below the cap.

        Returns a report dict; failures list the offending critical
        pairs instead of raising.
        """
        if self.kind != "presented":
            return {"kind": self.kind, "confluent": True, "failures": [], "overlaps": 0}
        failures = []
        overlaps = 0
        rules = list(self.rules.items())
        for l1, r1 in rules:
            for l2, r2 in rules:
                # proper overlap: a suffix of l1 is a prefix of l2
                for k in range(1, min(len(l1), len(l2))):
                    if l1[-k:] == l2[:k]:
                        word = l1 + l2[k:]
                        if self.word_weight(word) > self.max_weight:
                            continue
                        overlaps += 1
                        a = self._reduce_once_at(word, 0, l1, r1)
                        b = self._reduce_once_at(word, len(l1) - k, l2, r2)
                        if self._nf_elem(a) != self._nf_elem(b):
                            failures.append((self._fmt(l1), self._fmt(l2), self._fmt(word)))
                # containment: l2 inside l1
                if l1 != l2:
                    for pos in range(len(l1) - len(l2) + 1):
                        if l1[pos:pos + len(l2)] == l2:
                            if self.word_weight(l1) > self.max_weight:
                                continue
                            overlaps += 1
                            a = self._reduce_once_at(l1, 0, l1, r1)
                            b = self._reduce_once_at(l1, pos, l2, r2)
                            if self._nf_elem(a) != self._nf_elem(b):
                                failures.append((self._fmt(l1), self._fmt(l2), self._fmt(l1)))
        return {
            "kind": self.kind,
            "confluent": not failures,
            "failures": failures,
            "overlaps": overlaps,
        }

    def _reduce_once_at(self, word, pos, lhs, rhs):
        return {word[:pos] + r + word[pos + len(lhs):]: c for r, c in rhs.items()}

    def _nf_elem(self, elem):
        out = {}
        for w, c in elem.items():
            add_into(out, self._nf_presented(w), c)
        return out


# ---------------------------------------------------------------------------
# derived algebras


def square_zero_extension(algebra: Algebra) -> Algebra:
    """A' = Abar (+) k with all products of non-unit elements set to 0.

    Tabulated per weight below the cap; closed because bar products
    vanish, so no product ever leaves the tabulated range.
    """
    names = ["1"]
    weights = [0]
    for w in range(algebra.max_weight + 1):
        for t in algebra.bar_basis(w):
            names.append(f"b{len(names)}_" + str(algebra.token_key(t)))
            weights.append(w)
    table = {}
    for a in names[1:]:
        for b in names[1:]:
            table[a, b] = {}
    spec = AlgebraSpec(algebra.name + "_sq0", "structure_constants",
                       basis_names=names, basis_weights=weights, table=table)
    return spec.load(algebra.max_weight)


def abelianization(algebra: Algebra) -> Algebra:
    """A/[A,A] for presented algebras: adds gh -> hg rules (g later in
    the generator order), then re-checks confluence below the cap."""
    if algebra.kind != "presented":
        raise SpecFormatError("abelianization needs a presented algebra")
    relations = [(lhs, rhs) for lhs, rhs in algebra.rules.items()]
    have = set(algebra.rules)
    ngen = len(algebra.gen_names)
    for i in range(ngen):
        for j in range(i):
            lhs = (i, j)
            if lhs not in have:
                relations.append((lhs, {(j, i): ONE}))
    spec = AlgebraSpec(algebra.name + "_ab", "presented",
                       generators=list(zip(algebra.gen_names, algebra.gen_weights)),
                       relations=relations)
    out = spec.load(algebra.max_weight)
    report = out.check_confluence()
    if not report["confluent"]:
        raise ConfluenceError(
            f"abelianization of {algebra.name} is not confluent at cap; "
            f"first failing critical pair: {report['failures'][0]}")
    return out


def abelianization_map(algebra: Algebra, target: Algebra):
    """token -> element of the abelianized algebra."""
    def phi(token):
        return target.normal_form(token)
    return phi


# ---------------------------------------------------------------------------
# spec file format


_ALLOWED_SECTIONS = {"algebra", "generators", "relations", "basis", "table"}


def parse_combination(text, unit_name="1"):
    """Parse "3/2 x y - y x + 1" into {word-tuple-of-names: Fraction}."""
    text = text.strip()
    if text == "0":
        return {}
    terms = []
    cur = ""
    sign = 1
    # split on top-level + and -, keeping "-" attached to fractions like 3/-2 out
    first = True
    for tok in text.replace("+", " + ").replace("-", " - ").split():
        if tok == "+":
            if cur.strip():
                terms.append((sign, cur))
            cur, sign, first = "", 1, False
            continue
        if tok == "-":
            if cur.strip():
                terms.append((sign, cur))
            cur, sign, first = "", -1, False
            continue
        cur += " " + tok
    if cur.strip():
        terms.append((sign, cur))
    out = {}
    for sign, term in terms:
        parts = term.split()
        coeff = Fraction(sign)
        if parts and _looks_rational(parts[0]):
            coeff *= Fraction(parts[0])
            parts = parts[1:]
        if parts == [unit_name]:
            word = ()
        else:
            if unit_name in parts:
                parts = [p for p in parts if p != unit_name]
            word = tuple(parts)
        if coeff:
            out[word] = out.get(word, Fraction(0)) + coeff
    return {w: c for w, c in out.items() if c}


def _looks_rational(tok):
    body = tok[1:] if tok[:1] in "+-" else tok
    if "/" in body:
        a, _, b = body.partition("/")
        return a.isdigit() and b.isdigit()
    return body.isdigit()


def parse_spec_text(text, source="<string>") -> AlgebraSpec:
    """Parse the declarative algebra format (grammar in README)."""
    section = None
    data = {"algebra": {}, "generators": [], "relations": [], "basis": {}, "table": {}}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[["):
            if not line.endswith("]]"):
                raise SpecFormatError(f"{source}:{lineno}: bad section header")
            name = line[2:-2].strip()
            if name not in ("generators", "relations"):
                raise SpecFormatError(f"{source}:{lineno}: unknown section [[{name}]]")
            data[name].append({})
            section = ("list", name)
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise SpecFormatError(f"{source}:{lineno}: bad section header")
            name = line[1:-1].strip()
            if name not in ("algebra", "basis", "table"):
                raise SpecFormatError(f"{source}:{lineno}: unknown section [{name}]")
            section = ("dict", name)
            continue
        if "=" not in line:
            raise SpecFormatError(f"{source}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if section is None:
            raise SpecFormatError(f"{source}:{lineno}: key outside any section")
        mode, name = section
        if key.startswith('"') and key.endswith('"'):
            key = key[1:-1]
        parsed = _parse_value(value, source, lineno)
        if mode == "list":
            data[name][-1][key] = parsed
        else:
            data[name][key] = parsed
    return _build_spec(data, source)


def _parse_value(value, source, lineno):
    if value.startswith('"') and value.endswith('"') and len(value) >= 2:
        return value[1:-1]
    if value.startswith("["):
        if not value.endswith("]"):
            raise SpecFormatError(f"{source}:{lineno}: unterminated array")
        inner = value[1:-1].strip()
        if not inner:
            return []
        items = [x.strip() for x in inner.split(",")]
        return [_parse_value(x, source, lineno) for x in items]
    try:
        return int(value)
    except ValueError:
        raise SpecFormatError(f"{source}:{lineno}: cannot parse value {value!r}")


def _build_spec(data, source):
    alg = data["algebra"]
    extra = set(alg) - {"name", "kind"}
    if extra:
        raise SpecFormatError(f"{source}: unknown [algebra] keys {sorted(extra)}")
    name = alg.get("name")
    kind = alg.get("kind")
    if not name or not kind:
        raise SpecFormatError(f"{source}: [algebra] needs name and kind")
    if kind == "presented":
        if data["basis"] or data["table"]:
            raise SpecFormatError(f"{source}: presented spec cannot carry [basis]/[table]")
        gens = []
        for g in data["generators"]:
            extra = set(g) - {"name", "weight"}
            if extra:
                raise SpecFormatError(f"{source}: unknown generator keys {sorted(extra)}")
            gens.append((g["name"], g["weight"]))
        gen_names = [g for g, _ in gens]
        relations = []
        for r in data["relations"]:
            extra = set(r) - {"rule"}
            if extra:
                raise SpecFormatError(f"{source}: unknown relation keys {sorted(extra)}")
            lhs_text, eq, rhs_text = r["rule"].partition("=")
            if not eq:
                raise SpecFormatError(f"{source}: relation must be 'word = combination'")
            lhs_names = tuple(lhs_text.split())
            rhs = parse_combination(rhs_text)
            idx = {g: i for i, g in enumerate(gen_names)}
            try:
                lhs = tuple(idx[g] for g in lhs_names)
                rhs_idx = {tuple(idx[g] for g in w): c for w, c in rhs.items()}
            except KeyError as e:
                raise SpecFormatError(f"{source}: unknown generator {e.args[0]!r} in relation")
            relations.append((lhs, rhs_idx))
        return AlgebraSpec(name, "presented", generators=gens, relations=relations)
    if kind == "structure_constants":
        if data["generators"] or data["relations"]:
            raise SpecFormatError(
                f"{source}: structure_constants spec cannot carry generators/relations")
        basis = data["basis"]
        extra = set(basis) - {"names", "weights"}
        if extra:
            raise SpecFormatError(f"{source}: unknown [basis] keys {sorted(extra)}")
        names = basis.get("names")
        if not names:
            raise SpecFormatError(f"{source}: [basis] needs names")
        weights = basis.get("weights", [0] * len(names))
        table = {}
        for key, combo_text in data["table"].items():
            pair = tuple(key.split())
            if len(pair) != 2:
                raise SpecFormatError(f"{source}: table key {key!r} must be two basis names")
            combo = parse_combination(combo_text, unit_name=names[0])
            flat = {}
            for w, c in combo.items():
                if w == ():
                    flat[names[0]] = c
                elif len(w) == 1:
                    flat[w[0]] = c
                else:
                    raise SpecFormatError(
                        f"{source}: table value {combo_text!r} must be linear in basis names")
            table[pair] = flat
        return AlgebraSpec(name, "structure_constants",
                           basis_names=names, basis_weights=weights, table=table)
    raise SpecFormatError(f"{source}: unknown kind {kind!r}")


def parse_spec_file(path) -> AlgebraSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_spec_text(fh.read(), source=str(path))


# ---------------------------------------------------------------------------
# built-in test algebras


def _builtin_specs():
    k = AlgebraSpec("ALG_K", "structure_constants", basis_names=["1"], basis_weights=[0])
    dual = AlgebraSpec("ALG_DUAL", "presented",
                       generators=[("tau", 1)], relations=[((0, 0), {})])
    poly = AlgebraSpec("ALG_POLY", "presented", generators=[("x", 1)], relations=[])
    trunc3 = AlgebraSpec("ALG_TRUNC3", "presented",
                         generators=[("x", 1)], relations=[((0, 0, 0), {})])
    free2 = AlgebraSpec("ALG_FREE2", "presented",
                        generators=[("x", 1), ("y", 1)], relations=[])
    comm2 = AlgebraSpec("ALG_COMM2", "presented",
                        generators=[("x", 1), ("y", 1)],
                        relations=[((1, 0), {(0, 1): ONE})])
    return {s.name: s for s in (k, dual, poly, trunc3, free2, comm2)}


BUILTIN_SPECS = _builtin_specs()


def builtin(name: str, max_weight: int) -> Algebra:
    if name not in BUILTIN_SPECS:
        raise SpecFormatError(f"unknown builtin algebra {name!r}")
    return BUILTIN_SPECS[name].load(max_weight)
