"""Attacker-mediated network: scenario execution and trace production.

Every message crosses the attacker, who is also the scheduler: a strategy
program observes public structure only (session kinds, stage labels, alias
identifiers, abort/done flags) and decides to start sessions, forward or
drop held messages, or inject recipes built from the frame. Injections are
validated against the frame, so the attacker is never omniscient.

Worlds: "real" lets a card run any number of sessions; "ideal" spawns a
disposable fresh card per session (with the card database and, in leaked-PIN
worlds, the public PIN supply mirrored), which is the comparison target for
unlinkability experiments. Sessions of one physical card are sequential, as
on real hardware.

Determinism: a (scenario, seed) pair fixes the trace byte-for-byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from . import frames, roles, setup_phase
from . import terms as T
from .terms import Term


class ScenarioInvalid(Exception):
    pass


class StrategyError(Exception):
    """An attacker program tried an action the model forbids."""


class AlignmentFailure(Exception):
    """Observable behaviour diverged between the paired worlds; reported as
    a distinguishing outcome, with the offending step."""

    def __init__(self, step, detail=""):
        super().__init__(f"worlds diverge at observable step {step}: {detail}")
        self.step = step


@dataclass(frozen=True)
class Options:
    replay_check: bool = True
    terminal_checks_month_cert: bool = True
    chi_leaked: Optional[int] = None
    pin_leaked: bool = False
    contact: bool = True
    wrong_pin_sessions: tuple = ()


@dataclass(frozen=True)
class Scenario:
    protocol: str = "utx"            # utx | utx_multimonth | utxl | bdh | ubdh
    world: str = "real"
    cards: int = 1
    issue_months: tuple = ()
    card_windows: tuple = ()         # multi-month window per card
    terminals: tuple = (("onhi", None),)
    schedule: tuple = ()             # (card_idx, terminal_cfg_idx) per session
    sessions: int = 1
    strategy: str = "passive"
    strategy_arg: int = 0
    options: Options = Options()
    seed: int = 0
    current_month: int = 1
    horizon: int = 3
    max_steps: int = 600

    def resolved_schedule(self):
        if self.schedule:
            return self.schedule
        return tuple((i % max(self.cards, 1), i % len(self.terminals))
                     for i in range(self.sessions))

    def validate(self):
        if self.protocol not in ("utx", "utx_multimonth", "utxl", "bdh", "ubdh"):
            raise ScenarioInvalid(f"unknown protocol {self.protocol}")
        if self.world not in ("real", "ideal"):
            raise ScenarioInvalid(f"unknown world {self.world}")
        if self.protocol == "utxl" and any(m != "lo" for m, _ in self.terminals):
            raise ScenarioInvalid("low-value worlds admit lo terminals only")
        for cidx, tidx in self.resolved_schedule():
            if not (0 <= cidx < self.cards and 0 <= tidx < len(self.terminals)):
                raise ScenarioInvalid("schedule references unknown card/terminal")


@dataclass(frozen=True)
class TraceRecord:
    idx: int
    kind: str        # start | deliver | output | event | abort
    actor: str
    text: str
    alias: str = ""


@dataclass
class Trace:
    scenario: Scenario
    records: list = field(default_factory=list)
    events: list = field(default_factory=list)
    aborts: list = field(default_factory=list)      # (session_id, reason)
    frame: frames.Frame = field(default_factory=frames.empty_frame)
    secrets: list = field(default_factory=list)     # (label, term) targets

    def observable_shape(self):
        """World-independent skeleton used for paired-run alignment: kinds,
        actors and alias names, never term contents or abort reasons."""
        return [(r.kind, r.actor, r.alias) for r in self.records
                if r.kind in ("start", "deliver", "output", "abort")]

    def to_lines(self):
        sc = self.scenario
        yield (f"SCEN protocol={sc.protocol} world={sc.world} seed={sc.seed} "
               f"cards={sc.cards} sessions={sc.sessions} strategy={sc.strategy}")
        yield "REST " + " ".join(sorted(self.frame.restricted))
        for alias, img in self.frame.bindings:
            yield f"BIND {alias} {T.to_text(img)}"
        for r in self.records:
            yield f"REC {r.idx}|{r.kind}|{r.actor}|{r.alias}|{r.text}"
        for e in self.events:
            args = " ".join(T.to_text(a) for a in e.args)
            yield f"EV {e.tag} {e.session_id} {e.role_id} {args}"
        for sid, reason in self.aborts:
            yield f"ABORT {sid} {reason}"
        for label, t in self.secrets:
            yield f"TARGET {label} {T.to_text(t)}"

    def dump(self) -> str:
        return "\n".join(self.to_lines()) + "\n"


def parse_trace(text: str) -> Trace:
    """Rebuild events/aborts/frame from a dumped trace; this is everything
    the property checkers consume."""
    tr = Trace(scenario=Scenario())
    restricted: frozenset = frozenset()
    bindings = []
    for line in text.splitlines():
        if not line.strip():
            continue
        head, _, rest = line.partition(" ")
        if head == "REST":
            restricted = frozenset(rest.split())
        elif head == "BIND":
            alias, _, img = rest.partition(" ")
            bindings.append((alias, T.parse(img)))
        elif head == "EV":
            tag, args, sid, role = _split_event(rest)
            tr.events.append(roles.Event(tag, args, sid, role))
        elif head == "ABORT":
            sid, _, reason = rest.partition(" ")
            tr.aborts.append((sid, reason))
        elif head == "TARGET":
            label, _, t = rest.partition(" ")
            tr.secrets.append((label, T.parse(t)))
        elif head == "REC":
            idx, kind, actor, alias, text_ = rest.split("|", 4)
            tr.records.append(TraceRecord(int(idx), kind, actor, text_, alias))
    tr.frame = frames.Frame(restricted, tuple(bindings))
    return tr


def _split_event(rest: str):
    tag, _, rest = rest.partition(" ")
    sid, _, rest = rest.partition(" ")
    role, _, argtext = rest.partition(" ")
    args = []
    toks = argtext.split()
    pos = 0
    while pos < len(toks):
        depth, start = 0, pos
        while pos < len(toks):
            depth += toks[pos].count("(") - toks[pos].count(")")
            pos += 1
            if depth == 0:
                break
        args.append(T.parse(" ".join(toks[start:pos])))
    return tag, tuple(args), sid, role


# -- actions an attacker program may take --------------------------------------

@dataclass(frozen=True)
class StartCard:
    card_idx: int


@dataclass(frozen=True)
class StartTerminal:
    cfg_idx: int


@dataclass(frozen=True)
class Deliver:
    sid: str
    recipe: Term
    source_alias: str = ""        # set when forwarding a held output verbatim


@dataclass(frozen=True)
class DeliverBank:
    terminal_sid: str
    recipe: Term
    source_alias: str = ""


# -- live session handles --------------------------------------------------------

@dataclass
class _Session:
    sid: str
    kind: str                      # card | terminal
    state: object
    card_idx: int = -1
    cfg_idx: int = -1
    pending: list = field(default_factory=list)   # (alias, routing hint)
    aborted: str = ""
    done: bool = False
    wired_card: str = ""           # card session that answered the handshake

    def alive(self) -> bool:
        return not self.done and not self.aborted


@dataclass(frozen=True)
class SessionView:
    sid: str
    kind: str
    mode: str
    stage: str
    pending: tuple                 # (alias, routing hint) pairs
    aborted: bool
    done: bool
    card_idx: int = -1

    def alive(self) -> bool:
        return not self.done and not self.aborted


@dataclass(frozen=True)
class Obs:
    step: int
    sessions: tuple
    cards_started: tuple
    terminals_started: int
    outputs: tuple = ()            # full (actor, alias) output log

    def session(self, sid):
        for s in self.sessions:
            if s.sid == sid:
                return s
        return None


class _SysFresh(T.FreshNames):
    """Name source for honest agents: everything it mints is restricted."""

    def __init__(self, restricted: set):
        super().__init__()
        self._restricted = restricted

    def _mint(self, hint, sort):
        n = super()._mint(hint, sort)
        self._restricted.add(n[1])
        return n


class Runner:
    """One world executing one scenario under one attacker program."""

    def __init__(self, scenario: Scenario):
        scenario.validate()
        self.sc = scenario
        self.restricted: set = set()
        self.fresh = _SysFresh(self.restricted)
        self.bindings: list = []
        self.trace = Trace(scenario=scenario)
        self.sessions: dict = {}
        self.session_order: list = []
        self.n_cards_started: dict = {}
        self.n_card_sessions = 0
        self.n_terms = 0
        self.n_bank_requests = 0
        self._idx = 0
        self._spawn_queue: dict = {}
        self._build_world()

    # -- construction ------------------------------------------------------

    def _restrict(self, names):
        for n in names:
            self.restricted.add(n[1])

    def _build_world(self):
        sc = self.sc
        self.auth = setup_phase.make_authority(self.fresh, sc.horizon)
        self.cred = setup_phase.make_bank_credential(self.auth, self.fresh)
        self._restrict(self.auth.secret_names())
        self._restrict(self.cred.secret_names())
        self.bank = roles.BankAgent(
            bank_id="bank", b_t=self.cred.b_t,
            replay_check=sc.options.replay_check)
        self.cards = [self._mint_card(i) for i in range(sc.cards)]
        # odometers let the ideal world mirror the month position a
        # multi-session card would have reached, without cross-world peeking
        self.odometer = [self._card_position(c) for c in self.cards]
        fr = frames.Frame()
        fr, _ = setup_phase.publish_bulletin(self.auth, fr, sc.current_month)
        for alias, img in fr.bindings:
            self.bindings.append((alias, img))
            self._record("output", "bulletin", T.to_text(img), alias)
        if sc.options.chi_leaked is not None:
            self._publish(self.auth.chi[sc.options.chi_leaked], "bulletin")
        if sc.protocol == "utxl":
            # low-value worlds hand the attacker every terminal ingredient
            self._publish(self.cred.crt_by_month[sc.current_month], "bulletin")
        if sc.options.pin_leaked:
            for i in range(sc.cards):
                if sc.world == "ideal":
                    card = self._mint_card(i, position=self.odometer[i])
                    card.card_id = f"card{i}.0"
                    self._spawn_queue[i] = card
                    self._publish(card.pin, f"opin{i}")
                else:
                    self._publish(self.cards[i].pin, f"opin{i}")

    def _card_position(self, card):
        return card.window if card.window is not None else card.pointer

    def _card_flags(self):
        sc = self.sc
        flags = {}
        if sc.protocol == "utxl" and not sc.options.contact:
            flags["contactless_only"] = True
        if sc.protocol == "bdh":
            flags["bdh"] = True
        if sc.protocol == "ubdh":
            flags["truncate_after_validity"] = True
        return flags

    def _mint_card(self, idx: int, position=None) -> roles.CardState:
        sc = self.sc
        flags = self._card_flags()
        if sc.protocol == "utx_multimonth":
            window = position or (
                tuple(sc.card_windows[idx]) if idx < len(sc.card_windows)
                else (max(sc.current_month - 1, 0), sc.current_month,
                      sc.current_month + 1))
            card = setup_phase.issue_card_multimonth(
                self.auth, self.fresh, window, card_id=f"card{idx}", **flags)
        else:
            month = (position if position is not None else
                     (sc.issue_months[idx] if idx < len(sc.issue_months)
                      else sc.current_month))
            card = setup_phase.issue_card(
                self.auth, self.fresh, month, card_id=f"card{idx}", **flags)
        self._restrict(card.secret_names())
        self.bank.register_card(card)
        for label, t in (("pin", card.pin), ("mk", card.mk), ("c", card.c)):
            self.trace.secrets.append((f"{card.card_id}.{label}", t))
        return card

    # -- frame and trace plumbing --------------------------------------------

    def frame(self) -> frames.Frame:
        return frames.Frame(frozenset(self.restricted), tuple(self.bindings))

    def _publish(self, t: Term, actor: str) -> str:
        img = T.normalize(t)
        alias = f"{frames.ALIAS_PREFIX}{len(self.bindings)}"
        self.bindings.append((alias, img))
        self._record("output", actor, T.to_text(img), alias)
        return alias

    def _record(self, kind, actor, text, alias=""):
        self.trace.records.append(
            TraceRecord(self._idx, kind, actor, text, alias))
        self._idx += 1

    # -- observation ------------------------------------------------------------

    def observe(self, step: int) -> Obs:
        views = []
        for sid in self.session_order:
            s = self.sessions[sid]
            stage = (s.state.stage if s.kind == "card"
                     else s.state.stage_label())
            views.append(SessionView(
                sid=sid, kind=s.kind, mode=getattr(s.state, "mode", ""),
                stage=str(stage), pending=tuple(s.pending),
                aborted=bool(s.aborted), done=s.done, card_idx=s.card_idx))
        started = tuple(self.n_cards_started.get(i, 0)
                        for i in range(self.sc.cards))
        outputs = tuple((r.actor, r.alias) for r in self.trace.records
                        if r.kind == "output")
        return Obs(step=step, sessions=tuple(views),
                   cards_started=started, terminals_started=self.n_terms,
                   outputs=outputs)

    # -- actions ------------------------------------------------------------------

    def apply(self, action) -> None:
        if isinstance(action, StartCard):
            self._start_card(action.card_idx)
        elif isinstance(action, StartTerminal):
            self._start_terminal(action.cfg_idx)
        elif isinstance(action, Deliver):
            self._deliver(action)
        elif isinstance(action, DeliverBank):
            self._deliver_bank(action)
        else:
            raise StrategyError(f"unknown action {action!r}")

    def _start_card(self, idx: int) -> None:
        if not 0 <= idx < self.sc.cards:
            raise StrategyError("no such card")
        n = self.n_cards_started.get(idx, 0)
        if self.sc.world == "ideal":
            card = self._spawn_queue.pop(idx, None)
            if card is None:
                card = self._mint_card(idx, position=self.odometer[idx])
                card.card_id = f"card{idx}.{n}"
        else:
            card = self.cards[idx]
            if any(s.kind == "card" and s.card_idx == idx and s.alive()
                   for s in self.sessions.values()):
                raise StrategyError("card already mid-session")
        self.n_cards_started[idx] = n + 1
        sid = f"C{self.n_card_sessions}"
        self.n_card_sessions += 1
        card.begin_session(sid)
        self.sessions[sid] = _Session(sid=sid, kind="card", state=card,
                                      card_idx=idx)
        self.session_order.append(sid)
        ch = self.fresh.data("chc")
        self.restricted.add(ch[1])
        self._record("start", sid, f"card idx={idx}")
        self._publish(ch, sid)

    def _start_terminal(self, cfg_idx: int) -> None:
        if not 0 <= cfg_idx < len(self.sc.terminals):
            raise StrategyError("no such terminal config")
        mode, month = self.sc.terminals[cfg_idx]
        month = self.sc.current_month if month is None else month
        sid = f"T{self.n_terms}"
        self.n_terms += 1
        flags = {}
        if not self.sc.options.terminal_checks_month_cert:
            flags["checks_month_cert"] = False
        if self.sc.protocol == "bdh":
            flags["bdh"] = True
        if self.sc.protocol == "ubdh":
            flags["truncate_after_validity"] = True
        term = setup_phase.provision_terminal(
            self.cred, self.auth, self.fresh, month, mode,
            terminal_id=sid, **flags)
        self.restricted.add(term.kbt[1])
        term.session_id = sid
        sess = _Session(sid=sid, kind="terminal", state=term, cfg_idx=cfg_idx)
        self.sessions[sid] = sess
        self.session_order.append(sid)
        ch = self.fresh.data("cht")
        self.restricted.add(ch[1])
        self._record("start", sid, f"terminal {mode} month={month}")
        self._publish(ch, sid)
        self._absorb(sess, roles.terminal_step(term, None, self.fresh))

    def _value_of(self, recipe: Term) -> Term:
        f = self.frame()
        if not frames.recipe_ok(f, recipe):
            raise StrategyError(f"recipe not constructible: {T.to_text(recipe)}")
        return frames.recipe_value(f, recipe)

    def _consume_pending(self, alias: str) -> None:
        for sess in self.sessions.values():
            for i, (a, _) in enumerate(sess.pending):
                if a == alias:
                    sess.pending.pop(i)
                    return

    def _alias_origin(self, alias: str):
        for rec in self.trace.records:
            if rec.kind == "output" and rec.alias == alias:
                return self.sessions.get(rec.actor)
        return None

    def _deliver(self, action: Deliver) -> None:
        sess = self.sessions.get(action.sid)
        if sess is None or not sess.alive():
            raise StrategyError(f"no live session {action.sid}")
        value = self._value_of(action.recipe)
        if action.source_alias:
            self._consume_pending(action.source_alias)
            if sess.kind == "terminal" and sess.state.stage == 2:
                origin = self._alias_origin(action.source_alias)
                if origin is not None and origin.kind == "card":
                    sess.wired_card = origin.sid
        self._record("deliver", action.sid, T.to_text(action.recipe),
                     action.source_alias)
        if sess.kind == "card":
            res = roles.card_step(sess.state, value, self.fresh)
            self.odometer[sess.card_idx] = self._card_position(sess.state)
            if res.done and sess.state.k_cb is not None:
                self.trace.secrets.append((f"{sess.sid}.k_cb", sess.state.k_cb))
                self.trace.secrets.append((f"{sess.sid}.ac", sess.state.ac))
        else:
            user_pin = None
            if sess.state.wants_pin():
                user_pin = self._user_pin(sess)
            res = roles.terminal_step(sess.state, value, self.fresh,
                                      user_pin=user_pin)
        self._absorb(sess, res)

    def _user_pin(self, sess: _Session) -> Term:
        """PIN entry models a conscious purchase: the pad reads the real PIN
        only when the handshake reply came from an honest card; a decoy name
        otherwise. Scenario-selected sessions mistype."""
        ordinal = int(sess.sid[1:])
        if ordinal in self.sc.options.wrong_pin_sessions:
            return self.fresh.data("wrongpin")
        if sess.wired_card:
            return self.sessions[sess.wired_card].state.pin
        return self.fresh.data("decoypin")

    def _deliver_bank(self, action: DeliverBank) -> None:
        term = self.sessions.get(action.terminal_sid)
        if term is None or term.kind != "terminal":
            raise StrategyError("bank endpoint needs a terminal session")
        value = self._value_of(action.recipe)
        if action.source_alias:
            self._consume_pending(action.source_alias)
        sid = f"B{self.n_bank_requests}.{action.terminal_sid}"
        self.n_bank_requests += 1
        self._record("deliver", sid, T.to_text(action.recipe),
                     action.source_alias)
        res = roles.bank_step(self.bank, term.state.kbt, value, sid)
        for e in res.events:
            self.trace.events.append(e)
            self._record("event", sid, e.tag)
        for out in res.outputs:
            alias = self._publish(out, sid)
            term.pending.append((alias, "to_terminal"))
        if res.abort:
            self.trace.aborts.append((sid, res.abort))
            self._record("abort", sid, res.abort)

    def _absorb(self, sess: _Session, res: roles.StepResult) -> None:
        for e in res.events:
            self.trace.events.append(e)
            self._record("event", sess.sid, e.tag)
        hint = "to_terminal" if sess.kind == "card" else "to_card"
        for out in res.outputs:
            out = T.normalize(out)
            alias = self._publish(out, sess.sid)
            if out == T.AUTH:
                continue             # a verdict signal, not a protocol message
            if (sess.kind == "terminal" and sess.state.stage == 9
                    and sess.state.req is not None and out == sess.state.req):
                sess.pending.append((alias, "to_bank"))
            else:
                sess.pending.append((alias, hint))
        if res.abort:
            sess.aborted = res.abort
            self.trace.aborts.append((sess.sid, res.abort))
            self._record("abort", sess.sid, res.abort)
        if res.done:
            sess.done = True

    def finish(self) -> Trace:
        self.trace.frame = self.frame()
        return self.trace


def run_scenario(sc: Scenario) -> Trace:
    runner = Runner(sc)
    strategy = make_strategy(sc)
    for step in range(sc.max_steps):
        action = strategy.decide(runner.observe(step))
        if action is None:
            break
        runner.apply(action)
    return runner.finish()


def run_paired(sc: Scenario):
    """Run the same scenario and attacker program in both worlds; returns
    (real, ideal) traces with aligned frames, or raises AlignmentFailure
    (itself a distinguishing signal)."""
    real = run_scenario(replace(sc, world="real"))
    ideal = run_scenario(replace(sc, world="ideal"))
    sa, sb = real.observable_shape(), ideal.observable_shape()
    for i, (x, y) in enumerate(zip(sa, sb)):
        if x != y:
            raise AlignmentFailure(i, f"{x} vs {y}")
    if len(sa) != len(sb):
        raise AlignmentFailure(min(len(sa), len(sb)), "shape length mismatch")
    return real, ideal


def make_strategy(sc: Scenario):
    from .strategies import make_strategy as factory
    return factory(sc)


def builtin_strategies():
    from .strategies import builtin_strategies as catalog
    return catalog()
