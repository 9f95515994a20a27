"""Issuance/provisioning tests and a hand-wired honest session across the
three role machines (no attacker, no harness)."""

import pytest

import utxsim.frames as F
import utxsim.roles as R
import utxsim.setup_phase as S
import utxsim.terms as T


def world(horizon=3, issue_month=1, mode="onhi", term_month=1, **card_flags):
    fresh = T.FreshNames()
    auth = S.make_authority(fresh, horizon=horizon)
    cred = S.make_bank_credential(auth, fresh)
    card = S.issue_card(auth, fresh, issue_month, card_id="c0", **card_flags)
    term = S.provision_terminal(cred, auth, fresh, term_month, mode, "t0")
    bank = R.BankAgent(bank_id="b0", b_t=cred.b_t)
    bank.register_card(card)
    return fresh, auth, cred, card, term, bank


# -- setup ---------------------------------------------------------------------

def test_two_cards_share_no_names():
    fresh = T.FreshNames()
    auth = S.make_authority(fresh, horizon=3)
    c1 = S.issue_card(auth, fresh, 1)
    c2 = S.issue_card(auth, fresh, 1)
    own1 = {c1.c, c1.pan, c1.pin, c1.mk}
    own2 = {c2.c, c2.pan, c2.pin, c2.mk}
    assert not own1 & own2


def test_issued_card_certificates_verify():
    _, auth, _, card, _, _ = world()
    for m, cert in card.certs.items():
        assert T.equal_mod_E(T.checkv(auth.month_vk(m), cert), card.pk_c)


def test_horizon_guard():
    fresh = T.FreshNames()
    auth = S.make_authority(fresh, horizon=3)
    with pytest.raises(S.HorizonExceeded):
        S.issue_card(auth, fresh, 3)


def test_terminal_provisioning():
    fresh = T.FreshNames()
    auth = S.make_authority(fresh, horizon=3)
    cred = S.make_bank_credential(auth, fresh)
    t1 = S.provision_terminal(cred, auth, fresh, 1, "lo")
    t2 = S.provision_terminal(cred, auth, fresh, 1, "lo")
    assert t1.kbt != t2.kbt
    assert T.equal_mod_E(T.check(auth.vk(), T.proj(2, t1.crt)), T.proj(1, t1.crt))
    with pytest.raises(S.NoCertForMonth):
        S.provision_terminal(cred, auth, fresh, 9, "lo")


def test_bulletin_publishes_released_keys_only():
    fresh = T.FreshNames()
    auth = S.make_authority(fresh, horizon=3)
    frame = F.restrict(F.empty_frame(), auth.secret_names())
    frame, aliases = S.publish_bulletin(auth, frame, current_month=0)
    assert len(aliases) == 2  # generic key + month 0
    assert F.derive(frame, auth.month_vk(0), 1) is not None
    assert F.derive(frame, auth.month_vk(1), 4) is None


def test_setup_keeps_secrets_out_of_frame():
    fresh = T.FreshNames()
    auth = S.make_authority(fresh, horizon=3)
    cred = S.make_bank_credential(auth, fresh)
    card = S.issue_card(auth, fresh, 1)
    frame = F.restrict(F.empty_frame(),
                       auth.secret_names() + cred.secret_names()
                       + card.secret_names())
    frame, _ = S.publish_bulletin(auth, frame, 1)
    for secret in [card.c, card.pin, card.mk, cred.b_t, auth.s, auth.chi[1]]:
        assert F.derive(frame, secret, 4) is None


# -- honest session, hand-wired -------------------------------------------------

def run_honest(mode, wrong_pin=False, term_month=1, issue_month=1,
               horizon=3, bank_override=None, **card_flags):
    fresh, auth, cred, card, term, bank = world(
        horizon=horizon, issue_month=issue_month, mode=mode,
        term_month=term_month, **card_flags)
    if bank_override:
        bank_override(bank)
    card.begin_session("s0")
    term.session_id = "s0"
    events, aborts, outputs = [], [], []

    def step(res):
        events.extend(res.events)
        if res.abort:
            aborts.append(res.abort)
        outputs.extend(res.outputs)
        return res

    r = step(terminal_step_auto(term, None, fresh))              # z1
    r = step(R.card_step(card, r.outputs[0], fresh))             # z2
    r = step(R.terminal_step(term, r.outputs[0], fresh))         # crt
    r = step(R.card_step(card, r.outputs[0], fresh))             # blinded cert
    pin = (T.name("badpin") if wrong_pin else card.pin)
    r = step(R.terminal_step(term, r.outputs[0], fresh, user_pin=pin))
    if r.abort:
        return events, aborts, outputs, card, term, bank
    r = step(R.card_step(card, r.outputs[0], fresh))             # cryptogram
    r = step(R.terminal_step(term, r.outputs[0], fresh))         # bank request
    req = r.outputs[-1]
    r = step(R.bank_step(bank, term.kbt, req, "s0"))
    if r.abort:
        return events, aborts, outputs, card, term, bank
    r = step(R.terminal_step(term, r.outputs[0], fresh))         # auth
    return events, aborts, outputs, card, term, bank


def terminal_step_auto(term, incoming, fresh):
    return R.terminal_step(term, incoming, fresh)


@pytest.mark.parametrize("mode", ["onhi", "offhi", "lo"])
def test_honest_run_completes(mode):
    events, aborts, outputs, card, term, bank = run_honest(mode)
    assert not aborts
    assert outputs.count(T.AUTH) == (2 if mode == "offhi" else 1)
    tags = [e.tag for e in events]
    for tag in ("CRunB", "CRun", "TComC", "TRunBC", "BComC", "BRunT",
                "BComTC", "TComBC", "TAccept"):
        assert tag in tags, tag
    assert card.stage == "C7" and term.stage == 11


def test_honest_keys_agree():
    _, aborts, _, card, term, _ = run_honest("lo")
    assert not aborts
    assert card.k_c == term.k_t


def test_wrong_pin_offline_rejected_by_bank():
    events, aborts, outputs, *_ = run_honest("offhi", wrong_pin=True)
    tags = [e.tag for e in events]
    assert "BReject" in tags
    assert T.AUTH not in outputs
    assert aborts == ["BankReject"]


def test_wrong_pin_online_rejected_by_bank():
    events, aborts, outputs, *_ = run_honest("onhi", wrong_pin=True)
    assert "BReject" in [e.tag for e in events]
    assert T.AUTH not in outputs


def test_previous_month_accepted_pointer_untouched():
    events, aborts, _, card, *_ = run_honest("lo", term_month=0, issue_month=1)
    assert not aborts
    assert card.pointer == 1


def test_next_month_advances_pointer():
    events, aborts, _, card, *_ = run_honest("lo", term_month=2, issue_month=1)
    assert not aborts
    assert card.pointer == 2


def test_stale_month_aborts():
    fresh, auth, cred, card, term, bank = world(
        horizon=4, issue_month=3, mode="lo", term_month=1)
    card.begin_session("s0")
    r = R.terminal_step(term, None, fresh)
    r = R.card_step(card, r.outputs[0], fresh)
    r = R.terminal_step(term, r.outputs[0], fresh)
    r = R.card_step(card, r.outputs[0], fresh)
    assert r.abort == "StaleMonth"


def test_garbage_input_aborts_card():
    fresh, auth, cred, card, term, bank = world()
    card.begin_session("s0")
    R.card_step(card, T.gen(), fresh)
    r = R.card_step(card, T.gen(), fresh)  # not decryptable at C3
    assert r.abort == "MalformedInput"


def test_replay_rejected_by_uniqueness_log():
    fresh, auth, cred, card, term, bank = world(mode="lo")
    card.begin_session("s0")
    term.session_id = "s0"
    r = R.terminal_step(term, None, fresh)
    r = R.card_step(card, r.outputs[0], fresh)
    r = R.terminal_step(term, r.outputs[0], fresh)
    r = R.card_step(card, r.outputs[0], fresh)
    r = R.terminal_step(term, r.outputs[0], fresh)
    r = R.card_step(card, r.outputs[0], fresh)
    r = R.terminal_step(term, r.outputs[0], fresh)
    req = r.outputs[-1]
    first = R.bank_step(bank, term.kbt, req, "s0")
    assert first.abort is None
    second = R.bank_step(bank, term.kbt, req, "s1")
    assert second.abort == "Replay"
    bank.replay_check = False
    third = R.bank_step(bank, term.kbt, req, "s2")
    assert third.abort is None


def test_card_never_leaks_secrets_in_clear():
    # the unblinded public key, PAN, PIN and master key only ever travel
    # inside an encryption body; blinded products are fine in the clear
    events, aborts, outputs, card, term, bank = run_honest("offhi")
    protected = {T.normalize(p) for p in
                 (card.pk_c, card.pan, card.pin, card.mk, card.c)}

    def exposed(t):
        if t in protected:
            return True
        op = t[0]
        if op == T.ENC:
            return exposed(t[2])  # key position only; the body is covered
        if op == T.MULT:
            return False          # products are the blinding mechanism
        if op == T.TUP:
            return any(exposed(k) for k in t[1])
        if op in (T.HASH, T.PK, T.PKV):
            return exposed(t[1])
        if op == T.PROJ:
            return exposed(t[2])
        if op >= T.MULT:
            return exposed(t[1]) or exposed(t[2])
        return False

    for out in outputs:
        assert not exposed(T.normalize(out)), T.to_text(out)


# -- multi-month window ----------------------------------------------------------

def mm_world():
    fresh = T.FreshNames()
    auth = S.make_authority(fresh, horizon=3)
    cred = S.make_bank_credential(auth, fresh)
    card = S.issue_card_multimonth(auth, fresh, (0, 1, 2), card_id="c0")
    bank = R.BankAgent(bank_id="b0", b_t=cred.b_t)
    bank.register_card(card)
    return fresh, auth, cred, card, bank


def probe_month(fresh, auth, cred, card, month, sid):
    term = S.provision_terminal(cred, auth, fresh, month, "lo", f"t{sid}")
    card.begin_session(f"s{sid}")
    term.session_id = f"s{sid}"
    r = R.terminal_step(term, None, fresh)
    r = R.card_step(card, r.outputs[0], fresh)
    r = R.terminal_step(term, r.outputs[0], fresh)
    return R.card_step(card, r.outputs[0], fresh)


def test_window_card_answers_middle_month_without_shift():
    fresh, auth, cred, card, _ = mm_world()
    r = probe_month(fresh, auth, cred, card, 1, 0)
    assert r.abort is None
    assert card.window == (0, 1, 2)


def test_window_shifts_on_newest_month():
    fresh, auth, cred, card, _ = mm_world()
    r = probe_month(fresh, auth, cred, card, 2, 0)
    assert r.abort is None
    assert card.window == (1, 2, 3)
    r = probe_month(fresh, auth, cred, card, 0, 1)
    assert r.abort == "StaleMonth"


def test_event_arity_schema():
    with pytest.raises(AssertionError):
        R.Event("TComC", (T.gen(),), "s", "r")


def test_blinding_scalar_fresh_per_session():
    fresh, auth, cred, card, term, bank = world(mode="lo")
    card.begin_session("s0")
    r = R.terminal_step(term, None, fresh)
    R.card_step(card, r.outputs[0], fresh)
    first_a = card.a
    card.begin_session("s1")
    term2 = S.provision_terminal(cred, auth, fresh, 1, "lo", "t1")
    r = R.terminal_step(term2, None, fresh)
    R.card_step(card, r.outputs[0], fresh)
    assert card.a != first_a


def test_card_step_multimonth_contract():
    fresh = T.FreshNames()
    auth = S.make_authority(fresh, horizon=3)
    plain = S.issue_card(auth, fresh, 1)
    with pytest.raises(ValueError):
        R.card_step_multimonth(plain, T.gen(), fresh)
    windowed = S.issue_card_multimonth(auth, fresh, (0, 1, 2))
    windowed.begin_session("s0")
    res = R.card_step_multimonth(windowed, T.smult(fresh.scalar("t"), T.gen()),
                                 fresh)
    assert res.outputs and res.abort is None
