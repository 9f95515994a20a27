"""Message algebra tests: worked examples, the rewrite-order oracle, and
structural properties of normal forms."""

import random

import pytest
from hypothesis import given, settings, strategies as st

import utxsim.terms as T
from utxsim.concrete import random_term

A = T.name("a", "scalar")
B = T.name("b", "scalar")
C = T.name("c", "scalar")
TT = T.name("t", "scalar")
CHI = T.name("chi", "scalar")
K = T.name("k")
K2 = T.name("k2")
M = T.name("m")
G = T.gen()

NAME_POOL = [A, B, C, TT, CHI, K, K2, M]


# -- worked examples -------------------------------------------------------

def test_decrypt_with_matching_key():
    assert T.equal_mod_E(T.dec(K, T.enc(M, K)), M)


def test_blinding_accumulates_into_one_product():
    got = T.normalize(T.smult(A, T.smult(B, G)))
    assert got == (T.SMULT, (T.MULT, tuple(sorted((A, B)))), G)


def test_terminal_verification_of_blinded_signature():
    pc = T.name("pc")
    got = T.checkv(T.pkv(CHI), T.smult(A, T.sigv(CHI, pc)))
    assert T.equal_mod_E(got, T.smult(A, pc))


def test_blinded_signature_on_group_point():
    # verifying [a]vsig(chi, [c]g) yields [a·c]g
    e = T.checkv(T.pkv(CHI), T.smult(A, T.sigv(CHI, T.smult(C, G))))
    assert T.equal_mod_E(e, T.smult(T.mult(A, C), G))


def test_decrypt_with_wrong_key_is_stuck():
    got = T.normalize(T.dec(K2, T.enc(M, K)))
    assert got[0] == T.DEC
    assert T.is_stuck(got)


def test_product_commutes():
    assert T.equal_mod_E(T.mult(A, B), T.mult(B, A))


def test_session_key_agreement():
    lhs = T.h(T.smult(T.mult(A, C), T.smult(TT, G)))
    rhs = T.h(T.smult(TT, T.smult(A, T.smult(C, G))))
    assert T.equal_mod_E(lhs, rhs)


def test_hash_is_free():
    assert not T.equal_mod_E(T.h(M), M)


def test_apply_substitution():
    x = T.var("x")
    assert T.apply({"x": G}, T.smult(A, x)) == T.normalize(T.smult(A, G))
    assert T.apply({}, T.smult(A, T.smult(B, G))) == T.normalize(
        T.smult(A, T.smult(B, G)))
    assert T.apply({"x": T.enc(M, K)}, T.dec(K, x)) == M


def test_free_names():
    assert T.free_names(G) == set()
    assert T.free_names(T.mult(A, C)) == {A, C}
    pan = T.name("PAN")
    assert T.free_names(T.enc(pan, T.h(K))) == {pan, K}


def test_malformed():
    with pytest.raises(T.MalformedTerm):
        T.tup(M)
    with pytest.raises(T.MalformedTerm):
        T.proj(0, M)
    with pytest.raises(T.MalformedTerm):
        T.normalize((T.TUP, (M,)))


def test_out_of_range_projection_is_stuck():
    got = T.normalize(T.proj(3, T.tup(A, B)))
    assert got[0] == T.PROJ


# -- independent oracle: one-step rewriting in random order ----------------
#
# The oriented rule set below is applied at randomly chosen redex positions
# until no rule applies anywhere; the result must agree with normalize().

def _rewrite_root(t):
    op = t[0]
    if op == T.DEC and t[2][0] == T.ENC and t[2][2] == t[1]:
        return t[2][1]
    if op == T.PROJ and t[2][0] == T.TUP and 1 <= t[1] <= len(t[2][1]):
        return t[2][1][t[1] - 1]
    if op == T.CHECK and t[1][0] == T.PK and t[2][0] == T.SIG \
            and t[1][1] == t[2][1]:
        return t[2][2]
    if op == T.CHECKV and t[1][0] == T.PKV:
        if t[2][0] == T.SIGV and t[2][1] == t[1][1]:
            return t[2][2]
        if t[2][0] == T.SMULT and t[2][2][0] == T.SIGV \
                and t[2][2][1] == t[1][1]:
            return (T.SMULT, t[2][1], t[2][2][2])
    if op == T.SMULT and t[2][0] == T.SMULT:
        return (T.SMULT, (T.MULT, (t[1], t[2][1])), t[2][2])
    if op == T.SIGV and t[2][0] == T.SMULT:
        return (T.SMULT, t[2][1], (T.SIGV, t[1], t[2][2]))
    if op == T.MULT:
        if any(f[0] == T.MULT for f in t[1]):
            flat = []
            for f in t[1]:
                flat.extend(f[1] if f[0] == T.MULT else (f,))
            return (T.MULT, tuple(flat))
        if list(t[1]) != sorted(t[1]):
            return (T.MULT, tuple(sorted(t[1])))
    return None


def _children(t):
    op = t[0]
    if op in (T.MULT, T.TUP):
        return list(t[1])
    if op in (T.HASH, T.PK, T.PKV):
        return [t[1]]
    if op == T.PROJ:
        return [t[2]]
    if op >= T.MULT:
        return [t[1], t[2]]
    return []


def _replace_child(t, i, new):
    op = t[0]
    if op in (T.MULT, T.TUP):
        items = list(t[1])
        items[i] = new
        return (op, tuple(items))
    if op in (T.HASH, T.PK, T.PKV):
        return (op, new)
    if op == T.PROJ:
        return (T.PROJ, t[1], new)
    return (op, new, t[2]) if i == 0 else (op, t[1], new)


def _redexes(t, path=()):
    found = []
    if _rewrite_root(t) is not None:
        found.append(path)
    for i, ch in enumerate(_children(t)):
        found.extend(_redexes(ch, path + (i,)))
    return found


def _apply_at(t, path):
    if not path:
        return _rewrite_root(t)
    ch = _children(t)[path[0]]
    return _replace_child(t, path[0], _apply_at(ch, path[1:]))


def rewrite_random_order(t, rng, max_steps=3000):
    for _ in range(max_steps):
        spots = _redexes(t)
        if not spots:
            return t
        t = _apply_at(t, rng.choice(spots))
    raise AssertionError("rewriting did not terminate")


@pytest.mark.parametrize("seed", range(8))
def test_normalize_matches_random_order_rewriting(seed):
    rng = random.Random(f"order{seed}")
    for _ in range(250):
        t = random_term(rng, rng.randrange(1, 7), NAME_POOL)
        expect = rewrite_random_order(t, rng)
        assert T.normalize(t) == expect, T.to_text(t)


# -- properties ------------------------------------------------------------

depths = st.integers(min_value=1, max_value=8)


@given(depths, st.integers())
@settings(max_examples=300, deadline=None)
def test_normalize_idempotent(depth, seed):
    t = random_term(random.Random(seed), depth, NAME_POOL)
    n = T.normalize(t)
    assert T.normalize(n) == n


@given(depths, st.integers())
@settings(max_examples=300, deadline=None)
def test_text_roundtrip_on_normal_forms(depth, seed):
    n = T.normalize(random_term(random.Random(seed), depth, NAME_POOL))
    assert T.parse(T.to_text(n)) == n


@given(depths, st.integers())
@settings(max_examples=200, deadline=None)
def test_normal_form_shape_invariants(depth, seed):
    n = T.normalize(random_term(random.Random(seed), depth, NAME_POOL))
    _assert_shape(n)


def _assert_shape(t):
    op = t[0]
    if op == T.MULT:
        assert len(t[1]) >= 2
        assert list(t[1]) == sorted(t[1])
        for f in t[1]:
            assert f[0] != T.MULT
    if op == T.SMULT:
        point = t[2]
        assert point[0] != T.SMULT
        if point[0] == T.SIGV:
            assert point[2][0] != T.SMULT
    if op == T.SIGV:
        assert t[2][0] != T.SMULT
    for ch in _children(t):
        _assert_shape(ch)


@given(st.integers(), st.integers())
@settings(max_examples=200, deadline=None)
def test_integrity_decryption_requires_equal_keys(seed, seed2):
    rng = random.Random(f"{seed}.{seed2}")
    k1 = random_term(rng, 3, NAME_POOL, allow_destructors=False)
    k2 = random_term(rng, 3, NAME_POOL, allow_destructors=False)
    body = random_term(rng, 3, NAME_POOL, allow_destructors=False)
    reduced = T.normalize(T.dec(k2, T.enc(body, k1)))
    if T.equal_mod_E(k1, k2):
        assert reduced == T.normalize(body)
    else:
        assert reduced[0] == T.DEC


def test_pure_and_compiled_kernels_agree():
    from utxsim import _kernel as pure
    if T.KERNEL_BUILD != "compiled":
        pytest.skip("compiled kernel not built")
    rng = random.Random("twin")
    for _ in range(500):
        t = random_term(rng, rng.randrange(1, 8), NAME_POOL)
        assert T.normalize(t) == pure.normalize(t)
