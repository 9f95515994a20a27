"""Rewriting kernel for the message algebra (pure-Python reference).

A term is a nested tuple whose first element is an integer opcode. Every
opcode has a fixed field signature, so plain tuple comparison is a total
order on terms; that order is what makes multiplication canonical.

    (GEN,)                    group generator
    (CONST, tag, k)           protocol constant; k is the month index for
                              tag "mm" and -1 otherwise
    (NAME, id, sort)          fresh name; sort is "scalar" or "data"
    (VAR, id)                 variable / frame alias
    (MULT, (f1, ..., fn))     scalar product, flattened, factors sorted
    (SMULT, s, p)             point multiplication [s]p
    (HASH, m) (ENC, m, k) (TUP, (m1, ..., mn))
    (PK, k) (SIG, k, m) (PKV, k) (SIGV, k, m)
    (CHECK, vk, s) (CHECKV, vk, s) (PROJ, i, m) (DEC, k, m)

normalize() computes the canonical form: destructors reduced where their
constructor matches, products flattened and sorted, and scalars hoisted so
that a point multiplication never nests and a blindable signature carries a
blinding-free body.  The result of normalize() is a fixpoint; callers may
rely on structural equality of normal forms coinciding with equality in the
message theory.

This module is mirrored by the compiled extension _kernel_c; keep the two
implementations in lockstep (tests diff them).
"""

GEN = 0
CONST = 1
NAME = 2
VAR = 3
MULT = 4
SMULT = 5
HASH = 6
ENC = 7
TUP = 8
PK = 9
SIG = 10
PKV = 11
SIGV = 12
CHECK = 13
CHECKV = 14
PROJ = 15
DEC = 16


class MalformedTerm(Exception):
    """Raised for structurally ill-formed terms (tuple arity < 2, projection
    index < 1, unknown opcode)."""


_memo = {}


def clear_cache():
    _memo.clear()


def cache_size():
    return len(_memo)


def m_factors(t):
    """Multiset of scalar factors of a normalized term (itself if atomic)."""
    return t[1] if t[0] == MULT else (t,)


def mult_of(factors):
    """Canonical product of already-normalized, m-atomic factors."""
    if len(factors) == 1:
        return factors[0]
    return (MULT, tuple(sorted(factors)))


def normalize(t):
    r = _memo.get(t)
    if r is None:
        r = _normalize(t)
        _memo[t] = r
    return r


def _normalize(t):
    op = t[0]
    if op <= VAR:
        return t
    if op == MULT:
        fs = []
        for f in t[1]:
            nf = normalize(f)
            if nf[0] == MULT:
                fs.extend(nf[1])
            else:
                fs.append(nf)
        if len(fs) < 2:
            raise MalformedTerm("product needs at least two factors")
        return (MULT, tuple(sorted(fs)))
    if op == SMULT:
        s = normalize(t[1])
        p = normalize(t[2])
        if p[0] != SMULT:
            return (SMULT, s, p)
        fs = list(m_factors(s))
        while p[0] == SMULT:
            fs.extend(m_factors(p[1]))
            p = p[2]
        return (SMULT, mult_of(fs), p)
    if op == HASH:
        return (HASH, normalize(t[1]))
    if op == ENC:
        return (ENC, normalize(t[1]), normalize(t[2]))
    if op == TUP:
        if len(t[1]) < 2:
            raise MalformedTerm("tuple needs at least two items")
        return (TUP, tuple(normalize(x) for x in t[1]))
    if op == PK:
        return (PK, normalize(t[1]))
    if op == PKV:
        return (PKV, normalize(t[1]))
    if op == SIG:
        return (SIG, normalize(t[1]), normalize(t[2]))
    if op == SIGV:
        k = normalize(t[1])
        m = normalize(t[2])
        if m[0] == SMULT:
            # blinding commutes with the signature: scalar moves outside
            return (SMULT, m[1], (SIGV, k, m[2]))
        return (SIGV, k, m)
    if op == CHECK:
        vk = normalize(t[1])
        s = normalize(t[2])
        if vk[0] == PK and s[0] == SIG and s[1] == vk[1]:
            return s[2]
        return (CHECK, vk, s)
    if op == CHECKV:
        vk = normalize(t[1])
        s = normalize(t[2])
        if vk[0] == PKV:
            if s[0] == SIGV and s[1] == vk[1]:
                return s[2]
            if s[0] == SMULT and s[2][0] == SIGV and s[2][1] == vk[1]:
                # verification of a blinded signature reveals the blinded body
                return (SMULT, s[1], s[2][2])
        return (CHECKV, vk, s)
    if op == PROJ:
        if t[1] < 1:
            raise MalformedTerm("projection index must be positive")
        b = normalize(t[2])
        if b[0] == TUP and t[1] <= len(b[1]):
            return b[1][t[1] - 1]
        return (PROJ, t[1], b)
    if op == DEC:
        k = normalize(t[1])
        b = normalize(t[2])
        if b[0] == ENC and b[2] == k:
            return b[1]
        return (DEC, k, b)
    raise MalformedTerm("unknown opcode %r" % (op,))


def subst_vars(t, env):
    """Replace variables per env (id -> term); no normalization."""
    op = t[0]
    if op == VAR:
        return env.get(t[1], t)
    if op <= NAME:
        return t
    if op == MULT or op == TUP:
        return (op, tuple(subst_vars(x, env) for x in t[1]))
    if op == PROJ:
        return (PROJ, t[1], subst_vars(t[2], env))
    if op == HASH or op == PK or op == PKV:
        return (op, subst_vars(t[1], env))
    return (op, subst_vars(t[1], env), subst_vars(t[2], env))


def free_names(t):
    """All NAME nodes occurring in t."""
    out = set()
    stack = [t]
    while stack:
        x = stack.pop()
        op = x[0]
        if op == NAME:
            out.add(x)
        elif op == MULT or op == TUP:
            stack.extend(x[1])
        elif op == PROJ:
            stack.append(x[2])
        elif op == HASH or op == PK or op == PKV:
            stack.append(x[1])
        elif op >= MULT:
            stack.append(x[1])
            stack.append(x[2])
    return out


def free_vars(t):
    """All variable ids occurring in t."""
    out = set()
    stack = [t]
    while stack:
        x = stack.pop()
        op = x[0]
        if op == VAR:
            out.add(x[1])
        elif op == MULT or op == TUP:
            stack.extend(x[1])
        elif op == PROJ:
            stack.append(x[2])
        elif op == HASH or op == PK or op == PKV:
            stack.append(x[1])
        elif op >= MULT:
            stack.append(x[1])
            stack.append(x[2])
    return out
