"""Card, terminal and bank state machines.

Each role is a deterministic step function over an explicit state: feed it
the next incoming message (a normal-form term), get back outputs, emitted
events, and possibly an abort. Stages carry the conventional labels
(C1..C7, TONH1..11, TOFH1..11, TLO1..10, B1..B4) so traces can cite exact
protocol positions.

Control roles for the key-establishment baselines (linkable blinded DH and
its unlinkable truncation) are provided as flags on the card/terminal
states; their message framing beyond the handshake is this engine's
reconstruction, see README.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import terms as T
from .terms import Term

CARD_ABORTS = ("MalformedInput", "BadCertificate", "StaleMonth")
EVENT_ARITY = {
    "TComC": 6, "TRunBC": 7, "TComBC": 8, "TAccept": 2,
    "CRunB": 1, "CRun": 6,
    "BComC": 1, "BRunT": 2, "BComTC": 1, "BReject": 2,
}


@dataclass(frozen=True)
class Event:
    tag: str
    args: tuple
    session_id: str
    role_id: str

    def __post_init__(self):
        assert len(self.args) == EVENT_ARITY[self.tag], self.tag


@dataclass
class StepResult:
    outputs: list = field(default_factory=list)
    events: list = field(default_factory=list)
    abort: Optional[str] = None
    done: bool = False


def _fail(reason: str) -> StepResult:
    return StepResult(abort=reason)


def _tuple_items(t: Term, arity: int):
    if t[0] != T.TUP or len(t[1]) != arity:
        return None
    return t[1]


# -- card --------------------------------------------------------------------

@dataclass
class CardState:
    card_id: str
    c: Term
    pk_c: Term
    pan: Term
    pin: Term
    mk: Term
    certs: dict                      # month index -> blindable signature
    pointer: int
    authority_vk: Term               # generic verification key
    window: Optional[tuple] = None   # sliding 3-month window (multi-month card)
    contactless_only: bool = False
    bdh: bool = False
    truncate_after_validity: bool = False
    stage: str = "C1"
    session_id: str = ""
    # per-session values
    a: Optional[Term] = None
    z1: Optional[Term] = None
    z2: Optional[Term] = None
    k_c: Optional[Term] = None
    y_b: Optional[Term] = None
    month: Optional[int] = None
    m_msg: Optional[Term] = None
    emc: Optional[Term] = None
    k_cb: Optional[Term] = None
    ac: Optional[Term] = None

    def begin_session(self, session_id: str) -> None:
        self.stage = "C1"
        self.session_id = session_id
        self.a = self.z1 = self.z2 = self.k_c = self.y_b = None
        self.month = self.m_msg = self.emc = self.k_cb = self.ac = None

    def secret_names(self):
        return [self.c, self.pan, self.pin, self.mk]


def card_step(s: CardState, incoming: Term, fresh: T.FreshNames) -> StepResult:
    incoming = T.normalize(incoming)
    if s.stage == "C1":
        return _card_handshake(s, incoming, fresh)
    if s.stage == "C3":
        return _card_show_month(s, incoming, fresh)
    if s.stage == "C5":
        return _card_cryptogram(s, incoming)
    return _fail("MalformedInput")


def _card_handshake(s: CardState, z1: Term, fresh: T.FreshNames) -> StepResult:
    s.z1 = z1
    s.a = fresh.scalar("a")
    s.z2 = T.normalize(T.smult(s.a, s.pk_c))
    s.k_c = T.normalize(T.h(T.smult(T.mult(s.a, s.c), z1)))
    if s.bdh:
        # linkable baseline: the signed public key leaves the card unblinded
        month = s.window[0] if s.window else s.pointer
        payload = T.normalize(T.enc(T.tup(s.pk_c, s.certs[month]), s.k_c))
        s.stage = "C7"
        return StepResult(outputs=[s.z2, payload], done=True)
    s.stage = "C3"
    return StepResult(outputs=[s.z2])


def _card_show_month(s: CardState, m: Term, fresh: T.FreshNames) -> StepResult:
    dm = T.normalize(T.dec(s.k_c, m))
    parts = _tuple_items(dm, 2)
    if parts is None:
        return _fail("MalformedInput")
    mc, mc_s = parts
    inner = _tuple_items(mc, 2)
    if inner is None:
        return _fail("MalformedInput")
    month_term, y_b = inner
    k = T.month_index(month_term)
    if k is None:
        return _fail("MalformedInput")
    if T.normalize(T.check(s.authority_vk, mc_s)) != mc:
        return _fail("BadCertificate")
    outcome = _month_decision(s, k, fresh)
    if outcome is not None:
        return _fail(outcome)
    s.y_b = y_b
    s.month = k
    s.m_msg = m
    s.emc = T.normalize(T.enc(T.tup(s.z2, T.smult(s.a, s.certs[k])), s.k_c))
    if s.truncate_after_validity:
        s.stage = "C7"
        return StepResult(outputs=[s.emc], done=True)
    s.stage = "C5"
    return StepResult(outputs=[s.emc])


def card_step_multimonth(s: CardState, incoming: Term,
                         fresh: T.FreshNames) -> StepResult:
    """card_step for cards with the sliding three-month window; same
    contract, window shifts replace the pointer rule."""
    if s.window is None:
        raise ValueError("card has no month window; use card_step")
    return card_step(s, incoming, fresh)


def _month_decision(s: CardState, k: int, fresh: T.FreshNames):
    """Pointer / window bookkeeping; returns an abort reason or None."""
    if s.window is not None:
        if k not in s.window:
            return "StaleMonth" if k < s.window[0] else "BadCertificate"
        if k == s.window[-1]:
            # answering the newest month invalidates the oldest one
            nxt = k + 1
            if nxt not in s.certs:
                chi = fresh.scalar("chiw")
                s.certs[nxt] = T.normalize(T.sigv(chi, s.pk_c))
            s.window = (s.window[1], s.window[2], nxt)
        return None
    if k == s.pointer or k == s.pointer - 1:
        pass
    elif k > s.pointer:
        if k not in s.certs:
            return "BadCertificate"
        s.pointer = k
    else:
        return "StaleMonth"
    if k not in s.certs:
        return "BadCertificate"
    return None


def _card_cryptogram(s: CardState, x: Term) -> StepResult:
    dx = T.normalize(T.dec(s.k_c, x))
    parts = _tuple_items(dx, 2)
    if parts is None:
        return _fail("MalformedInput")
    tx, upin = parts
    if s.contactless_only and upin != T.BOT:
        return _fail("MalformedInput")
    if upin == T.BOT:
        ac, flag = T.tup(s.a, s.pan, tx), T.BOT
    elif upin == s.pin:
        ac, flag = T.tup(s.a, s.pan, tx, T.OK), T.OK
    else:
        ac, flag = T.tup(s.a, s.pan, tx, T.NO), T.NO
    k_cb = T.h(T.smult(T.mult(s.a, s.c), s.y_b))
    s.k_cb = T.normalize(k_cb)
    s.ac = T.normalize(ac)
    ehac = T.normalize(T.enc(T.tup(ac, T.h(T.tup(ac, s.mk))), k_cb))
    eac = T.normalize(T.enc(T.tup(ehac, flag, tx), s.k_c))
    events = [
        Event("CRunB", (ehac,), s.session_id, s.card_id),
        Event("CRun", (s.z1, s.z2, s.m_msg, s.emc, x, eac),
              s.session_id, s.card_id),
    ]
    s.stage = "C7"
    return StepResult(outputs=[eac], events=events, done=True)


# -- terminal ------------------------------------------------------------------

_STAGE_LABEL = {
    "onhi": dict(zip((1, 2, 4, 7, 9, 11), (1, 2, 4, 7, 9, 11))),
    "offhi": dict(zip((1, 2, 4, 7, 9, 11), (1, 2, 4, 7, 9, 11))),
    "lo": dict(zip((1, 2, 4, 7, 9, 11), (1, 2, 4, 6, 8, 10))),
}
_STAGE_PREFIX = {"onhi": "TONH", "offhi": "TOFH", "lo": "TLO"}


@dataclass
class TerminalState:
    terminal_id: str
    mode: str                        # onhi | offhi | lo
    pk_mm: Term                      # month verification key
    crt: Term                        # bank certificate for its month
    kbt: Term
    month: int
    checks_month_cert: bool = True
    bdh: bool = False
    truncate_after_validity: bool = False
    stage: int = 1
    session_id: str = ""
    # per-session values
    t: Optional[Term] = None
    tx: Optional[Term] = None
    z1: Optional[Term] = None
    z2: Optional[Term] = None
    k_t: Optional[Term] = None
    upin: Optional[Term] = None
    ec: Optional[Term] = None
    n_msg: Optional[Term] = None
    etx: Optional[Term] = None
    y_msg: Optional[Term] = None
    req: Optional[Term] = None

    def stage_label(self) -> str:
        return f"{_STAGE_PREFIX[self.mode]}{_STAGE_LABEL[self.mode][self.stage]}"

    def wants_pin(self) -> bool:
        return self.mode in ("onhi", "offhi") and self.stage == 4


def terminal_step(s: TerminalState, incoming: Optional[Term],
                  fresh: T.FreshNames, user_pin: Optional[Term] = None) -> StepResult:
    if s.stage == 1:
        txdata = fresh.data("TXdata")
        s.tx = T.normalize(T.tup(txdata, T.HI if s.mode != "lo" else T.LO))
        s.t = fresh.scalar("t")
        s.z1 = T.normalize(T.smult(s.t, T.gen()))
        s.stage = 2
        return StepResult(outputs=[s.z1])
    incoming = T.normalize(incoming)
    if s.stage == 2:
        s.z2 = incoming
        s.k_t = T.normalize(T.h(T.smult(s.t, s.z2)))
        s.stage = 4
        if s.bdh:
            # the linkable baseline sends no certificate; it awaits the
            # card's signed key directly
            return StepResult()
        s.ec = T.normalize(T.enc(s.crt, s.k_t))
        return StepResult(outputs=[s.ec])
    if s.stage == 4:
        return _terminal_validity(s, incoming, user_pin)
    if s.stage == 7:
        return _terminal_forward_cryptogram(s, incoming)
    if s.stage == 9:
        return _terminal_bank_reply(s, incoming)
    return _fail("MalformedInput")


def _terminal_validity(s: TerminalState, n: Term, user_pin) -> StepResult:
    dn = T.normalize(T.dec(s.k_t, n))
    parts = _tuple_items(dn, 2)
    if parts is None:
        return _fail("MalformedInput")
    b, b_s = parts
    if s.checks_month_cert:
        if T.normalize(T.checkv(s.pk_mm, b_s)) != b:
            return _fail("BadMonthCert")
        # binding the pair to the handshake key defeats replayed pairs; the
        # linkable baseline never had this check
        if not s.bdh and b != s.z2:
            return _fail("BadMonthCert")
    s.n_msg = n
    if s.bdh or s.truncate_after_validity:
        s.stage = 11
        return StepResult(done=True)
    if s.mode in ("onhi", "offhi"):
        if user_pin is None:
            raise ValueError("hi-value terminal needs a PIN at this stage")
        s.upin = T.normalize(user_pin)
    card_pin_slot = s.upin if s.mode == "offhi" else T.BOT
    s.etx = T.normalize(T.enc(T.tup(s.tx, card_pin_slot), s.k_t))
    s.stage = 7
    return StepResult(outputs=[s.etx])


def _terminal_forward_cryptogram(s: TerminalState, y: Term) -> StepResult:
    dy = T.normalize(T.dec(s.k_t, y))
    parts = _tuple_items(dy, 3)
    if parts is None:
        return _fail("MalformedInput")
    ehac, pin_v, tx = parts
    if tx != s.tx:
        return _fail("TxMismatch")
    s.y_msg = y
    events = [Event("TComC", (s.z1, s.z2, s.ec, s.n_msg, s.etx, y),
                    s.session_id, s.terminal_id)]
    outputs = []
    if s.mode == "offhi" and pin_v == T.OK:
        outputs.append(T.AUTH)       # offline authorisation before upload
    bank_pin_slot = s.upin if s.mode == "onhi" else T.BOT
    s.req = T.normalize(T.enc(T.tup(s.tx, s.z2, ehac, bank_pin_slot), s.kbt))
    events.append(Event("TRunBC", (s.req, s.z1, s.z2, s.ec, s.n_msg, s.etx, y),
                        s.session_id, s.terminal_id))
    outputs.append(s.req)
    s.stage = 9
    return StepResult(outputs=outputs, events=events)


def _terminal_bank_reply(s: TerminalState, r: Term) -> StepResult:
    dr = T.normalize(T.dec(s.kbt, r))
    parts = _tuple_items(dr, 2)
    if parts is None:
        return _fail("MalformedInput")
    tx, rtype = parts
    if tx != s.tx:
        return _fail("TxMismatch")
    events = [Event("TComBC",
                    (s.req, r, s.z1, s.z2, s.ec, s.n_msg, s.etx, s.y_msg),
                    s.session_id, s.terminal_id)]
    if rtype != T.ACCEPT:
        res = _fail("BankReject")
        res.events = events
        return res
    events.append(Event("TAccept", (s.kbt, s.tx), s.session_id, s.terminal_id))
    s.stage = 11
    return StepResult(outputs=[T.AUTH], events=events, done=True)


# -- bank ----------------------------------------------------------------------

@dataclass
class BankAgent:
    """The merged acquiring/issuing bank: card database, per-terminal shared
    keys, and the transaction-uniqueness log."""

    bank_id: str
    b_t: Term
    db: dict = field(default_factory=dict)          # PAN term -> (pin, mk, pk_c)
    replay_check: bool = True
    replay_log: set = field(default_factory=set)

    def register_card(self, card: CardState) -> None:
        self.db[T.normalize(card.pan)] = (card.pin, card.mk, card.pk_c)


def bank_step(bank: BankAgent, kbt: Term, x: Term, session_id: str) -> StepResult:
    """One full request: the internal database read is not a network step,
    so a single call walks B1 through B4."""
    x = T.normalize(x)
    dx = T.normalize(T.dec(kbt, x))
    parts = _tuple_items(dx, 4)
    if parts is None:
        return _fail("MalformedInput")
    tx_req, z2, ehac, upin = parts
    k_bc = T.h(T.smult(bank.b_t, z2))
    dac = T.normalize(T.dec(k_bc, ehac))
    parts = _tuple_items(dac, 2)
    if parts is None:
        return _fail("MalformedInput")
    ac, ac_hmac = parts
    if ac[0] != T.TUP or len(ac[1]) not in (3, 4):
        return _fail("MalformedInput")
    x_a, pan, tx = ac[1][0], ac[1][1], ac[1][2]
    pin_v = ac[1][3] if len(ac[1]) == 4 else None
    entry = bank.db.get(pan)
    if entry is None:
        return _fail("UnknownPAN")
    pin, mk, pk_c = entry
    if T.normalize(T.h(T.tup(ac, mk))) != ac_hmac:
        return _fail("BadMac")
    if tx != tx_req:
        return _fail("TxMismatch")
    if T.normalize(T.smult(x_a, pk_c)) != z2:
        return _fail("BadBlinding")
    uniq = (pan, tx, x_a)
    if bank.replay_check and uniq in bank.replay_log:
        return _fail("Replay")
    bank.replay_log.add(uniq)
    tx_parts = _tuple_items(tx_req, 2)
    if tx_parts is None:
        return _fail("MalformedInput")
    tx_type = tx_parts[1]
    if tx_type == T.LO:
        verdict = T.ACCEPT
    elif tx_type == T.HI:
        verdict = T.ACCEPT if (pin_v == T.OK or upin == pin) else T.REJECT
    else:
        return _fail("MalformedInput")
    reply = T.normalize(T.enc(T.tup(tx_req, verdict), kbt))
    events = []
    if verdict == T.REJECT:
        events.append(Event("BReject", (kbt, tx_req), session_id, bank.bank_id))
    events += [
        Event("BComC", (ehac,), session_id, bank.bank_id),
        Event("BRunT", (x, reply), session_id, bank.bank_id),
        Event("BComTC", (x,), session_id, bank.bank_id),
    ]
    return StepResult(outputs=[reply], events=events, done=True)
