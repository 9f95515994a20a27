"""Attacker programs driving the harness.

A strategy sees only public structure (session stages, pending alias ids,
output counts) and yields one action per decision, so the same program runs
identically in the real and ideal worlds as long as observable behaviour
stays aligned. Strategies never branch on message contents.

The catalog covers the honest forwarder, message replays against terminal
and bank, certificate harvesting with a fake card, the fake-terminal
interrogator (which is also the active adversary for the key-establishment
baselines), month probing, leaked-key card forgery, leaked-PIN probing,
reflection, message dropping and a seeded fuzzer.
"""

from __future__ import annotations

import random

from . import harness as H
from . import terms as T


# -- honest pump ----------------------------------------------------------------

class Pump:
    """Forwards messages along their natural routes, one action per call.

    Pairs terminal session i with a card session per the scenario schedule;
    sessions of one physical card run back to back.
    """

    name = "passive"

    def __init__(self, sc: H.Scenario):
        self.sc = sc
        self.schedule = list(sc.resolved_schedule())
        self.card_sid_of_pair: dict = {}
        self.pair_of_card_sid: dict = {}
        self.dropped: set = set()

    # subclass hooks
    def intercept(self, obs):
        return None

    def decide(self, obs):
        return self.intercept(obs) or self._start(obs) or self._route(obs)

    def _start(self, obs):
        if obs.terminals_started < len(self.schedule):
            return H.StartTerminal(self.schedule[obs.terminals_started][1])
        busy = {v.card_idx for v in obs.sessions
                if v.kind == "card" and v.alive()}
        n_card_sessions = sum(1 for v in obs.sessions if v.kind == "card")
        for pair, (card_idx, _) in enumerate(self.schedule):
            if pair in self.card_sid_of_pair or card_idx in busy:
                continue
            term = obs.session(f"T{pair}")
            if term is None or not term.alive():
                continue
            sid = f"C{n_card_sessions}"
            self.card_sid_of_pair[pair] = sid
            self.pair_of_card_sid[sid] = pair
            return H.StartCard(card_idx)
        return None

    def _route_one(self, obs, view, alias, hint):
        if (view.sid, alias) in self.dropped:
            return None
        if hint == "to_bank":
            return H.DeliverBank(view.sid, T.var(alias), source_alias=alias)
        if view.kind == "terminal" and hint == "to_terminal":
            if not view.alive():
                return None
            return H.Deliver(view.sid, T.var(alias), source_alias=alias)
        if view.kind == "terminal":
            pair = int(view.sid[1:])
            target = obs.session(self.card_sid_of_pair.get(pair, ""))
        else:
            pair = self.pair_of_card_sid.get(view.sid)
            target = obs.session(f"T{pair}") if pair is not None else None
        if target is None or not target.alive():
            return None
        return H.Deliver(target.sid, T.var(alias), source_alias=alias)

    def _route(self, obs):
        for view in obs.sessions:
            for alias, hint in view.pending:
                act = self._route_one(obs, view, alias, hint)
                if act is not None:
                    return act
        return None


class DropSome(Pump):
    """Honest forwarding that silently discards every k-th message."""

    name = "drop"

    def __init__(self, sc):
        super().__init__(sc)
        self.k = max(2, sc.strategy_arg or 3)
        self.seen = 0

    def _route_one(self, obs, view, alias, hint):
        act = super()._route_one(obs, view, alias, hint)
        if act is None:
            return None
        self.seen += 1
        if self.seen % self.k == 0:
            self.dropped.add((view.sid, alias))
            return None
        return act


class ReplayBankRequest(Pump):
    """Forwards honestly, then submits the first bank request a second time."""

    name = "replay_bank_request"

    def __init__(self, sc):
        super().__init__(sc)
        self.first_req = None
        self.replayed = False

    def _route_one(self, obs, view, alias, hint):
        act = super()._route_one(obs, view, alias, hint)
        if isinstance(act, H.DeliverBank) and self.first_req is None:
            self.first_req = (act.terminal_sid, alias)
        return act

    def decide(self, obs):
        act = super().decide(obs)
        if act is None and self.first_req and not self.replayed:
            self.replayed = True
            tsid, alias = self.first_req
            return H.DeliverBank(tsid, T.var(alias))
        return act


class ReplayCardReply(Pump):
    """Re-delivers session 0's blinded-certificate message into the next
    terminal session (stale ciphertext; honest terminals reject it)."""

    name = "replay_card_reply"

    def __init__(self, sc):
        super().__init__(sc)
        self.stash = None
        self.replayed = False

    def _route_one(self, obs, view, alias, hint):
        act = super()._route_one(obs, view, alias, hint)
        if (act is not None and view.kind == "card" and view.sid == "C0"
                and self.stash is None and view.stage == "C5"):
            self.stash = alias
        return act

    def decide(self, obs):
        if not self.replayed and self.stash:
            t1 = obs.session("T1")
            if t1 is not None and t1.alive() and t1.stage.endswith("4"):
                self.replayed = True
                return H.Deliver("T1", T.var(self.stash))
        return super().decide(obs)


class Reflect(Pump):
    """Answers a card's handshake with another card's blinded key."""

    name = "reflect"

    def __init__(self, sc):
        super().__init__(sc)
        self.z2_seen = None
        self.reflected = False

    def _route_one(self, obs, view, alias, hint):
        act = super()._route_one(obs, view, alias, hint)
        if view.kind == "card" and self.z2_seen is None:
            self.z2_seen = alias
        return act

    def decide(self, obs):
        if not self.reflected and self.z2_seen:
            for v in obs.sessions:
                if v.kind == "card" and v.alive() and v.stage == "C1":
                    self.reflected = True
                    return H.Deliver(v.sid, T.var(self.z2_seen))
        return super().decide(obs)


class Fuzzer(Pump):
    """Honest pump with a seeded budget of drops, replays and recipe
    injections assembled from frame aliases and the attacker's own names."""

    name = "fuzzer"

    def __init__(self, sc):
        super().__init__(sc)
        self.rng = random.Random(f"fuzz.{sc.seed}.{sc.strategy_arg}")
        self.budget = 4
        self.own = T.FreshNames()

    def _random_recipe(self, obs, depth=2):
        n_aliases = len(obs.outputs)
        choice = self.rng.randrange(5 if n_aliases else 4)
        if depth <= 0 or choice == 0:
            return self.own.data("atk")
        if choice == 1:
            return T.gen()
        if choice == 2:
            return T.tup(self._random_recipe(obs, depth - 1),
                         self._random_recipe(obs, depth - 1))
        if choice == 3:
            return T.enc(self._random_recipe(obs, depth - 1),
                         self._random_recipe(obs, depth - 1))
        return T.var(obs.outputs[self.rng.randrange(n_aliases)][1])

    def intercept(self, obs):
        if self.budget <= 0 or self.rng.random() > 0.18:
            return None
        live = [v for v in obs.sessions if v.alive()
                and not (v.kind == "terminal" and v.stage.endswith("1"))]
        if not live:
            return None
        self.budget -= 1
        target = live[self.rng.randrange(len(live))]
        kind = self.rng.randrange(3)
        if kind == 0 and obs.outputs:
            actor, alias = obs.outputs[self.rng.randrange(len(obs.outputs))]
            return H.Deliver(target.sid, T.var(alias))
        if kind == 1 and target.pending:
            alias, _ = target.pending[0]
            self.dropped.add((target.sid, alias))
            return None
        return H.Deliver(target.sid, self._random_recipe(obs))


# -- scripted attacks -------------------------------------------------------------

class Scripted:
    """Imperative attack scripts: a generator yields actions and reads the
    newest observation from self.obs after every yield."""

    name = "scripted"

    def __init__(self, sc: H.Scenario):
        self.sc = sc
        self.obs = None
        self.own = T.FreshNames()
        self._gen = self.script()

    def decide(self, obs):
        self.obs = obs
        return next(self._gen, None)

    # helpers ----------------------------------------------------------

    def outputs_of(self, actor):
        return [alias for a, alias in self.obs.outputs if a == actor]

    def last_output(self, actor):
        outs = self.outputs_of(actor)
        return outs[-1] if outs else None

    def session_key(self, scalar, peer_alias):
        """h([n]X): the session key after a handshake we played with our own
        scalar n against the peer's point X."""
        return T.h(T.smult(scalar, T.var(peer_alias)))

    def harvest_crt(self):
        """Fake card against an honest terminal: its certificate message
        decrypts under a key we control. Yields actions; leaves the recipes
        in self.crt_recipe."""
        tid = f"T{self.obs.terminals_started}"
        yield H.StartTerminal(0)
        z1 = self.last_output(tid)
        n = self.own.scalar("atkn")
        yield H.Deliver(tid, T.smult(n, T.gen()))
        ec = self.last_output(tid)
        self.crt_recipe = T.dec(self.session_key(n, z1), T.var(ec))

    def script(self):
        return iter(())


class Harvest(Scripted):
    """Certificate harvesting and nothing else; the knowledge stays in the
    frame for later analysis."""

    name = "harvest"

    def script(self):
        yield from self.harvest_crt()


class ProbeCards(Scripted):
    """Fake terminal interrogating each scheduled card session: handshake
    with our own scalar, replay of a harvested certificate, then transaction
    details. Doubles as the active adversary for the key-establishment
    baselines (which stop early on their own)."""

    name = "probe_cards"
    pin_slot = None     # term delivered in the PIN position, default none

    def script(self):
        harvest_needed = self.sc.protocol != "utxl"
        if harvest_needed and self.sc.protocol != "bdh":
            yield from self.harvest_crt()
        elif self.sc.protocol == "utxl":
            self.crt_recipe = T.var(self.outputs_of("bulletin")[-1])
        n_cards = 0
        for card_idx, _ in self.sc.resolved_schedule():
            sid = f"C{n_cards}"
            n_cards += 1
            yield H.StartCard(card_idx)
            n = self.own.scalar("atkn")
            yield H.Deliver(sid, T.smult(n, T.gen()))
            if self.obs.session(sid).done:
                continue            # linkable baseline card is already done
            z2 = self.last_output(sid)
            key = self.session_key(n, z2)
            yield H.Deliver(sid, T.enc(self.crt_recipe, key))
            view = self.obs.session(sid)
            if view.aborted or view.done:
                continue
            tx = T.tup(self.own.data("atktx"), T.LO)
            slot = self.pin_slot if self.pin_slot is not None else T.BOT
            yield H.Deliver(sid, T.enc(T.tup(tx, slot), key))


class PinProbe(ProbeCards):
    """Leaked-PIN tracking probe: interrogates cards with the published PIN
    instead of the empty slot; only contact-capable worlds answer."""

    name = "pin_probe"

    def script(self):
        pins = self.outputs_of("opin0")
        if pins:
            self.pin_slot = T.var(pins[0])
        yield from super().script()


class MonthProbe(Scripted):
    """Presents a chosen month's certificate to a card and watches whether
    the session survives the window check."""

    name = "month_probe"

    def script(self):
        yield from self.harvest_crt()
        yield H.StartCard(0)
        n = self.own.scalar("atkn")
        yield H.Deliver("C0", T.smult(n, T.gen()))
        z2 = self.last_output("C0")
        yield H.Deliver("C0", T.enc(self.crt_recipe, self.session_key(n, z2)))


class ChiFakeCard(Scripted):
    """With a leaked month signing key the attacker mints a card of its own
    and walks an honest terminal to its commit point."""

    name = "chi_fake_card"

    def script(self):
        chi = T.var(self.outputs_of("bulletin")[-1])   # the leaked key
        c_f = self.own.scalar("atkc")
        a_f = self.own.scalar("atka")
        pk_f = T.smult(c_f, T.gen())
        tid = "T0"
        yield H.StartTerminal(0)
        z1 = self.last_output(tid)
        z2 = T.smult(a_f, pk_f)
        yield H.Deliver(tid, z2)
        key = T.h(T.smult(T.mult(a_f, c_f), T.var(z1)))
        pair = T.tup(z2, T.smult(a_f, T.sigv(chi, pk_f)))
        yield H.Deliver(tid, T.enc(pair, key))
        etx = self.last_output(tid)
        tx = T.proj(1, T.dec(key, T.var(etx)))
        fake = T.enc(T.tup(self.own.data("atkblob"), T.BOT, tx), key)
        yield H.Deliver(tid, fake)
        req = self.last_output(tid)
        yield H.DeliverBank(tid, T.var(req), source_alias=req)


class FakeCardCertReplay(Scripted):
    """Two-phase §fake-card attack: interrogate an honest card as a fake
    terminal, then replay its blinded certificate pair and cryptogram shell
    to a terminal that skips certificate verification."""

    name = "fake_card_cert_replay"

    def script(self):
        yield from self.harvest_crt()
        # phase 1: fake terminal drains an honest card
        yield H.StartCard(0)
        n1 = self.own.scalar("atkn")
        yield H.Deliver("C0", T.smult(n1, T.gen()))
        z2 = self.last_output("C0")
        k1 = self.session_key(n1, z2)
        yield H.Deliver("C0", T.enc(self.crt_recipe, k1))
        emc = self.last_output("C0")
        pair = T.dec(k1, T.var(emc))
        b_old, bs_old = T.proj(1, pair), T.proj(2, pair)
        tx_f = T.tup(self.own.data("atktx"), T.LO)
        yield H.Deliver("C0", T.enc(T.tup(tx_f, T.BOT), k1))
        eac = self.last_output("C0")
        opened = T.dec(k1, T.var(eac))
        ehac_old, flag_old = T.proj(1, opened), T.proj(2, opened)
        # phase 2: fake card built from the replayed pair
        tid = f"T{self.obs.terminals_started}"
        yield H.StartTerminal(1 if len(self.sc.terminals) > 1 else 0)
        z1 = self.last_output(tid)
        n2 = self.own.scalar("atkn")
        yield H.Deliver(tid, T.smult(n2, T.gen()))
        kt = self.session_key(n2, z1)
        yield H.Deliver(tid, T.enc(T.tup(b_old, bs_old), kt))
        view = self.obs.session(tid)
        if view.aborted:
            return                  # honest terminal caught the replay
        etx = self.last_output(tid)
        tx1 = T.proj(1, T.dec(kt, T.var(etx)))
        yield H.Deliver(tid, T.enc(T.tup(ehac_old, flag_old, tx1), kt))
        req = self.last_output(tid)
        yield H.DeliverBank(tid, T.var(req), source_alias=req)


_CATALOG = {
    cls.name: cls
    for cls in (Pump, DropSome, ReplayBankRequest, ReplayCardReply, Reflect,
                Fuzzer, Harvest, ProbeCards, PinProbe, MonthProbe,
                ChiFakeCard, FakeCardCertReplay)
}


def builtin_strategies():
    """Name -> one-line description of every attacker program."""
    return {name: (cls.__doc__ or "").strip().splitlines()[0]
            for name, cls in _CATALOG.items()}


def make_strategy(sc: H.Scenario):
    try:
        cls = _CATALOG[sc.strategy]
    except KeyError:
        raise H.ScenarioInvalid(f"unknown strategy {sc.strategy!r}") from None
    return cls(sc)
