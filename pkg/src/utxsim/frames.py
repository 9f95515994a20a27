"""Attacker knowledge: frames, deduction, and bounded static equivalence.

A frame is the attacker's view of a run: the set of restricted (secret)
names plus an ordered binding of aliases to the messages observed on the
network. A recipe is a term the attacker can build: its leaves are frame
aliases (variables), public constants, and non-restricted names.

saturate() closes a frame under destructor analysis (splitting tuples,
opening encryptions whose key is derivable, stripping signatures whose
verification key is derivable), generalizing the building-block
normalization used in the protocol's proofs to arbitrary frames.

derive() finds a minimal-size recipe for a target by composing saturated
building blocks with constructors; it is sound (returned recipes evaluate
to the target) and complete only up to the size bound.

static_equiv() enumerates candidate recipes breadth-first from saturated
building blocks, evaluates each in both frames, and maintains a partial
bijection between the two value spaces; the first inconsistency is a
distinguishing equality test. A pass is a bounded guarantee, never a proof.

Frames are immutable values and every operation here is pure, so searches
over different frames can run in parallel; within one search, enumeration
order (and therefore the first witness) is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import terms as T
from .terms import Term

DERIVE_BOUND = 8
TEST_BOUND = 6
SATURATE_KEY_BOUND = 6
POOL_CAP = 6000
ALIAS_PREFIX = "w"


class DomainMismatch(Exception):
    pass


@dataclass(frozen=True)
class Frame:
    restricted: frozenset = frozenset()
    bindings: tuple = ()

    def subst(self) -> dict:
        return dict(self.bindings)

    def domain(self) -> list[str]:
        return [a for a, _ in self.bindings]

    def image(self, alias: str) -> Term:
        return dict(self.bindings)[alias]


def empty_frame() -> Frame:
    return Frame()


def restrict(f: Frame, names) -> Frame:
    ids = {n[1] if isinstance(n, tuple) else n for n in names}
    return Frame(f.restricted | ids, f.bindings)


def extend(f: Frame, t: Term) -> tuple[Frame, str]:
    """Record a protocol output; returns the new frame and the fresh alias."""
    alias = f"{ALIAS_PREFIX}{len(f.bindings)}"
    img = T.normalize(t)
    return Frame(f.restricted, f.bindings + ((alias, img),)), alias


def recipe_ok(f: Frame, recipe: Term) -> bool:
    """A valid recipe references only bound aliases and public names."""
    if not T.free_vars(recipe) <= set(f.domain()):
        return False
    return all(n[1] not in f.restricted for n in T.free_names(recipe))


def recipe_value(f: Frame, recipe: Term) -> Term:
    val = T.apply(f.subst(), recipe)
    if T.free_vars(val):
        raise KeyError(f"recipe references unbound aliases: {T.to_text(recipe)}")
    return val


# -- saturation -------------------------------------------------------------

@dataclass
class Saturated:
    frame: Frame
    entries: list = field(default_factory=list)   # ordered (recipe, image)
    index: dict = field(default_factory=dict)     # image -> first recipe

    def add(self, recipe: Term, image: Term) -> bool:
        if image in self.index:
            return False
        self.index[image] = recipe
        self.entries.append((recipe, image))
        return True

    def is_public_atom(self, t: Term) -> bool:
        op = t[0]
        if op == T.GEN or op == T.CONST:
            return True
        return op == T.NAME and t[1] not in self.frame.restricted


def saturate(f: Frame, key_bound: int = SATURATE_KEY_BOUND) -> Saturated:
    """Destructor closure of the frame, to fixpoint."""
    sat = Saturated(f)
    for alias, img in f.bindings:
        sat.add(T.var(alias), img)
    changed = True
    while changed:
        changed = False
        for recipe, img in list(sat.entries):
            op = img[0]
            if op == T.TUP:
                for i, item in enumerate(img[1]):
                    changed |= sat.add(T.proj(i + 1, recipe), item)
            elif op == T.ENC:
                key = _derive(sat, img[2], key_bound)
                if key is not None:
                    changed |= sat.add(T.dec(key, recipe), img[1])
            elif op == T.SIG:
                vk = _derive(sat, T.normalize(T.pk(img[1])), key_bound)
                if vk is not None:
                    changed |= sat.add(T.check(vk, recipe), img[2])
            elif op == T.SIGV:
                vk = _derive(sat, T.normalize(T.pkv(img[1])), key_bound)
                if vk is not None:
                    changed |= sat.add(T.checkv(vk, recipe), img[2])
            elif op == T.SMULT and img[2][0] == T.SIGV:
                vk = _derive(sat, T.normalize(T.pkv(img[2][1])), key_bound)
                if vk is not None:
                    stripped = T.normalize(T.smult(img[1], img[2][2]))
                    changed |= sat.add(T.checkv(vk, recipe), stripped)
    return sat


# -- deduction --------------------------------------------------------------

_PENDING = object()


def derive(f, target: Term, size_bound: int = DERIVE_BOUND):
    """Recipe for target over the (saturated) frame, or None within the
    bound. Sound; complete only up to size_bound constructor applications."""
    sat = f if isinstance(f, Saturated) else saturate(f)
    target = T.normalize(target)
    if T.free_vars(target):
        return None
    found = _derive(sat, target, size_bound)
    return found


def _derive(sat: Saturated, target: Term, bound: int):
    memo: dict = {}
    best = _cost(sat, target, memo)
    if best is None or best[0] > bound:
        return None
    return best[1]


def _cost(sat: Saturated, t: Term, memo: dict):
    if t in memo:
        got = memo[t]
        return None if got is _PENDING else got
    memo[t] = _PENDING
    best = None
    hit = sat.index.get(t)
    if hit is not None:
        best = (0, hit)
    elif sat.is_public_atom(t):
        best = (0, t)
    if best is None:
        best = _compose(sat, t, memo)
    memo[t] = best
    return best


def _add_costs(sat, parts, memo, base_recipe_builder):
    total = 1
    recipes = []
    for p in parts:
        sub = _cost(sat, p, memo)
        if sub is None:
            return None
        total += sub[0]
        recipes.append(sub[1])
    return (total, base_recipe_builder(recipes))


def _compose(sat: Saturated, t: Term, memo: dict):
    op = t[0]
    if op in (T.HASH, T.PK, T.PKV):
        return _add_costs(sat, [t[1]], memo, lambda r: (op, r[0]))
    if op in (T.ENC, T.SIG, T.SIGV, T.DEC, T.CHECK, T.CHECKV):
        return _add_costs(sat, [t[1], t[2]], memo,
                          lambda r: (op, r[0], r[1]))
    if op == T.PROJ:
        return _add_costs(sat, [t[2]], memo, lambda r: (T.PROJ, t[1], r[0]))
    if op == T.TUP:
        return _add_costs(sat, list(t[1]), memo,
                          lambda r: (T.TUP, tuple(r)))
    if op == T.MULT:
        return _mult_cost(sat, t[1], memo)
    if op == T.SMULT:
        return _smult_cost(sat, t, memo)
    return None


def _mult_cost(sat: Saturated, factors: tuple, memo: dict):
    """Cover the factor multiset by known product blocks and single factors;
    one product application joins the parts."""
    cover = _cover(sat, tuple(factors), memo)
    if cover is None:
        return None
    cost, parts = cover
    if len(parts) == 1:
        return (cost, parts[0])
    return (cost + 1, (T.MULT, tuple(parts)))


def _cover(sat: Saturated, factors: tuple, memo: dict):
    if not factors:
        return (0, [])
    first = factors[0]
    options = []
    # units from the saturated index that contain the first factor
    for img, recipe in sat.index.items():
        if img[0] != T.MULT:
            continue
        unit = list(img[1])
        if first not in unit:
            continue
        rest = list(factors)
        ok = True
        for u in unit:
            if u in rest:
                rest.remove(u)
            else:
                ok = False
                break
        if ok:
            tail = _cover(sat, tuple(rest), memo)
            if tail is not None:
                options.append((tail[0], [recipe] + tail[1]))
    sub = _cost(sat, first, memo)
    if sub is not None:
        tail = _cover(sat, factors[1:], memo)
        if tail is not None:
            options.append((sub[0] + tail[0], [sub[1]] + tail[1]))
    if not options:
        return None
    return min(options, key=lambda o: o[0])


def _smult_cost(sat: Saturated, t: Term, memo: dict):
    scalar, point = t[1], t[2]
    options = []
    direct = _add_costs(sat, [scalar, point], memo, lambda r: (T.SMULT, r[0], r[1]))
    if direct is not None:
        options.append(direct)
    # rebase on a known blinded block with the same point: [rest]([s2]p)
    want = list(T.m_factors(scalar))
    for img, recipe in sat.index.items():
        if img[0] != T.SMULT or img[2] != point:
            continue
        rest = list(want)
        ok = True
        for u in T.m_factors(img[1]):
            if u in rest:
                rest.remove(u)
            else:
                ok = False
                break
        if not ok or not rest:
            continue
        rest_cost = (_cost(sat, rest[0], memo) if len(rest) == 1
                     else _mult_cost(sat, tuple(sorted(rest)), memo))
        if rest_cost is not None:
            options.append((1 + rest_cost[0], (T.SMULT, rest_cost[1], recipe)))
    if not options:
        return None
    return min(options, key=lambda o: o[0])


# -- bounded static equivalence ----------------------------------------------

@dataclass
class Equivalent:
    bound: int
    tests: int

    def __bool__(self):
        return True


@dataclass
class Distinguished:
    left: Term
    right: Term
    side: str     # which world satisfies the equality: "first" or "second"
    tests: int

    def __bool__(self):
        return False

    def describe(self) -> str:
        return (f"{T.to_text(self.left)} = {T.to_text(self.right)} "
                f"holds in the {self.side} frame only")


_UNARY = (T.HASH, T.PK, T.PKV)
# destructor probes first: they reduce and collide, constructors mint fresh
_BINARY = (T.DEC, T.CHECK, T.CHECKV, T.ENC, T.SMULT, T.MULT, T.TUP, T.SIG, T.SIGV)


class _Bijection:
    """Partial bijection between the two frames' value spaces; recipes whose
    images break it witness a distinguishing test. Every candidate is
    tested; the pool cap only limits which recipes feed further levels."""

    def __init__(self, fa, fb, pool_cap):
        self.fa, self.fb = fa, fb
        self.sub_a, self.sub_b = fa.subst(), fb.subst()
        self.pool_cap = pool_cap
        self.by_a: dict = {}
        self.by_b: dict = {}
        self.pool: list = []     # (recipe, size, img_a, img_b)
        self.fresh: list = []    # admissions since the last level cut
        self.tests = 0

    def admit(self, recipe: Term, size: int):
        try:
            ia = T.apply(self.sub_a, recipe)
            ib = T.apply(self.sub_b, recipe)
        except T.MalformedTerm:
            return None
        if T.free_vars(ia) or T.free_vars(ib):
            return None
        self.tests += 1
        got = self.by_a.get(ia)
        if got is not None:
            r0, ib0 = got
            if ib0 != ib:
                return Distinguished(r0, recipe, "first", self.tests)
            return None
        got = self.by_b.get(ib)
        if got is not None:
            r0, _ = got
            return Distinguished(r0, recipe, "second", self.tests)
        self.by_a[ia] = (recipe, ib)
        self.by_b[ib] = (recipe, ia)
        # pool only composition material: small recipes and destructor
        # applications that reduced somewhere. Composites of fresh
        # constructor images distinguish nothing their parts do not, except
        # through a later reduction, and reductions re-enter here.
        op = recipe[0]
        useful = size <= 1 or (
            op in (T.DEC, T.PROJ, T.CHECK, T.CHECKV)
            and (ia[0] != op or ib[0] != op))
        if useful and len(self.pool) < self.pool_cap:
            entry = (recipe, size, ia, ib)
            self.pool.append(entry)
            self.fresh.append(entry)
        return None

    def cut_level(self):
        fresh, self.fresh = self.fresh, []
        return fresh


def _seed_recipes(sa: Saturated, sb: Saturated):
    """Deterministic level-0 candidates: constants, public names, months and
    the saturated building blocks of both frames."""
    seeds = [T.gen()]
    seeds += [T.const(t) for t in T.CONST_TAGS if t != "mm"]
    months = set()
    pub_names = set()
    restricted = sa.frame.restricted | sb.frame.restricted
    for _, img in sa.entries + sb.entries:
        stack = [img]
        while stack:
            x = stack.pop()
            if x[0] == T.CONST and x[1] == "mm":
                months.add(x[2])
            elif x[0] == T.NAME and x[1] not in restricted:
                pub_names.add(x)
            elif x[0] in (T.MULT, T.TUP):
                stack.extend(x[1])
            elif x[0] == T.PROJ:
                stack.append(x[2])
            elif x[0] in (T.HASH, T.PK, T.PKV):
                stack.append(x[1])
            elif x[0] >= T.MULT:
                stack.extend((x[1], x[2]))
    seeds += [T.mm(k) for k in sorted(months)]
    seeds += sorted(pub_names)
    for recipe, _ in sa.entries:
        seeds.append(recipe)
    for recipe, _ in sb.entries:
        seeds.append(recipe)
    return seeds


def static_equiv(fa: Frame, fb: Frame, test_bound: int = TEST_BOUND,
                 pool_cap: int = POOL_CAP):
    """Bounded distinguisher search between two frames with equal domains."""
    if fa.domain() != fb.domain():
        raise DomainMismatch(
            f"alias domains differ: {fa.domain()} vs {fb.domain()}")
    sa, sb = saturate(fa), saturate(fb)
    bij = _Bijection(fa, fb, pool_cap)

    for r in _seed_recipes(sa, sb):
        verdict = bij.admit(r, 1)
        if verdict is not None:
            return verdict

    # decryptability probes: enc(dec(k, u), k) = u tests made explicit
    enc_rooted = [(r, s) for (r, s, ia, ib) in list(bij.pool)
                  if ia[0] == T.ENC or ib[0] == T.ENC]
    keys = list(bij.pool)
    for er, es in enc_rooted:
        for kr, ks, _, _ in keys:
            size = es + 2 * ks + 2
            if size > test_bound + 3:
                continue
            verdict = bij.admit(T.enc(T.dec(kr, er), kr), size)
            if verdict is not None:
                return verdict

    frontier = bij.cut_level()
    while frontier:
        for r, s, _, _ in frontier:
            if s + 1 > test_bound:
                continue
            for op in _UNARY:
                verdict = bij.admit((op, r), s + 1)
                if verdict is not None:
                    return verdict
            for i in range(1, 5):
                verdict = bij.admit((T.PROJ, i, r), s + 1)
                if verdict is not None:
                    return verdict
        base = list(bij.pool)
        for r1, s1, _, _ in frontier:
            for r2, s2, _, _ in base:
                size = s1 + s2 + 1
                if size > test_bound:
                    continue
                for op in _BINARY:
                    if op == T.MULT:   # commutative, one direction enough
                        combos = ((T.MULT, (r1, r2)),)
                    elif op == T.TUP:
                        combos = ((T.TUP, (r1, r2)), (T.TUP, (r2, r1)))
                    else:
                        combos = ((op, r1, r2), (op, r2, r1))
                    for cand in combos:
                        verdict = bij.admit(cand, size)
                        if verdict is not None:
                            return verdict
        frontier = bij.cut_level()
    return Equivalent(test_bound, bij.tests)
