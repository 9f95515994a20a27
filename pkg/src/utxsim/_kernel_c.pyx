# cython: language_level=3, boundscheck=False
"""Compiled twin of _kernel.py; keep the algorithms in lockstep.

Same tuple term representation, same normal forms. The speedup comes from
C-level dispatch and call overhead, not a different data layout, so the two
kernels are interchangeable and differential-tested against each other.
"""

cdef enum:
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
    pass


cdef dict _memo = {}


def clear_cache():
    _memo.clear()


def cache_size():
    return len(_memo)


def m_factors(tuple t):
    return t[1] if <int> t[0] == MULT else (t,)


def mult_of(factors):
    if len(factors) == 1:
        return factors[0]
    return (MULT, tuple(sorted(factors)))


cpdef tuple normalize(tuple t):
    r = _memo.get(t)
    if r is None:
        r = _normalize(t)
        _memo[t] = r
    return <tuple> r


cdef tuple _normalize(tuple t):
    cdef int op = <int> t[0]
    cdef tuple s, p, k, m, vk, b, nf
    cdef list fs
    if op <= VAR:
        return t
    if op == MULT:
        fs = []
        for f in <tuple> t[1]:
            nf = normalize(<tuple> f)
            if <int> nf[0] == MULT:
                fs.extend(<tuple> nf[1])
            else:
                fs.append(nf)
        if len(fs) < 2:
            raise MalformedTerm("product needs at least two factors")
        return (MULT, tuple(sorted(fs)))
    if op == SMULT:
        s = normalize(<tuple> t[1])
        p = normalize(<tuple> t[2])
        if <int> p[0] != SMULT:
            return (SMULT, s, p)
        fs = list(m_factors(s))
        while <int> p[0] == SMULT:
            fs.extend(m_factors(<tuple> p[1]))
            p = <tuple> p[2]
        return (SMULT, mult_of(fs), p)
    if op == HASH:
        return (HASH, normalize(<tuple> t[1]))
    if op == ENC:
        return (ENC, normalize(<tuple> t[1]), normalize(<tuple> t[2]))
    if op == TUP:
        if len(<tuple> t[1]) < 2:
            raise MalformedTerm("tuple needs at least two items")
        return (TUP, tuple([normalize(<tuple> x) for x in <tuple> t[1]]))
    if op == PK:
        return (PK, normalize(<tuple> t[1]))
    if op == PKV:
        return (PKV, normalize(<tuple> t[1]))
    if op == SIG:
        return (SIG, normalize(<tuple> t[1]), normalize(<tuple> t[2]))
    if op == SIGV:
        k = normalize(<tuple> t[1])
        m = normalize(<tuple> t[2])
        if <int> m[0] == SMULT:
            return (SMULT, m[1], (SIGV, k, m[2]))
        return (SIGV, k, m)
    if op == CHECK:
        vk = normalize(<tuple> t[1])
        s = normalize(<tuple> t[2])
        if <int> vk[0] == PK and <int> s[0] == SIG and s[1] == vk[1]:
            return <tuple> s[2]
        return (CHECK, vk, s)
    if op == CHECKV:
        vk = normalize(<tuple> t[1])
        s = normalize(<tuple> t[2])
        if <int> vk[0] == PKV:
            if <int> s[0] == SIGV and s[1] == vk[1]:
                return <tuple> s[2]
            if <int> s[0] == SMULT and <int> (<tuple> s[2])[0] == SIGV \
                    and (<tuple> s[2])[1] == vk[1]:
                return (SMULT, s[1], (<tuple> s[2])[2])
        return (CHECKV, vk, s)
    if op == PROJ:
        if <int> t[1] < 1:
            raise MalformedTerm("projection index must be positive")
        b = normalize(<tuple> t[2])
        if <int> b[0] == TUP and <int> t[1] <= len(<tuple> b[1]):
            return <tuple> (<tuple> b[1])[<int> t[1] - 1]
        return (PROJ, t[1], b)
    if op == DEC:
        k = normalize(<tuple> t[1])
        b = normalize(<tuple> t[2])
        if <int> b[0] == ENC and b[2] == k:
            return <tuple> b[1]
        return (DEC, k, b)
    raise MalformedTerm("unknown opcode %r" % (op,))


cpdef tuple subst_vars(tuple t, dict env):
    cdef int op = <int> t[0]
    if op == VAR:
        return <tuple> env.get(t[1], t)
    if op <= NAME:
        return t
    if op == MULT or op == TUP:
        return (t[0], tuple([subst_vars(<tuple> x, env) for x in <tuple> t[1]]))
    if op == PROJ:
        return (PROJ, t[1], subst_vars(<tuple> t[2], env))
    if op == HASH or op == PK or op == PKV:
        return (t[0], subst_vars(<tuple> t[1], env))
    return (t[0], subst_vars(<tuple> t[1], env), subst_vars(<tuple> t[2], env))


def free_names(tuple t):
    cdef set out = set()
    cdef list stack = [t]
    cdef tuple x
    cdef int op
    while stack:
        x = <tuple> stack.pop()
        op = <int> x[0]
        if op == NAME:
            out.add(x)
        elif op == MULT or op == TUP:
            stack.extend(<tuple> x[1])
        elif op == PROJ:
            stack.append(x[2])
        elif op == HASH or op == PK or op == PKV:
            stack.append(x[1])
        elif op >= MULT:
            stack.append(x[1])
            stack.append(x[2])
    return out


def free_vars(tuple t):
    cdef set out = set()
    cdef list stack = [t]
    cdef tuple x
    cdef int op
    while stack:
        x = <tuple> stack.pop()
        op = <int> x[0]
        if op == VAR:
            out.add(x[1])
        elif op == MULT or op == TUP:
            stack.extend(<tuple> x[1])
        elif op == PROJ:
            stack.append(x[2])
        elif op == HASH or op == PK or op == PKV:
            stack.append(x[1])
        elif op >= MULT:
            stack.append(x[1])
            stack.append(x[2])
    return out
