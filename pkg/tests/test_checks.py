"""Verdict-layer tests: correspondence matching (with a counting oracle for
injectivity), secrecy, distinguishing, and the suite wiring."""

import random

import utxsim.checks as C
import utxsim.frames as F
import utxsim.harness as H
import utxsim.terms as T
from utxsim.roles import Event


def scn(**kw):
    opts = kw.pop("options", {})
    if isinstance(opts, dict):
        opts = H.Options(**opts)
    return H.Scenario(options=opts, **kw)


def _trace_with(events):
    tr = H.Trace(scenario=H.Scenario())
    tr.events = events
    return tr


def counting_oracle(trace, corr):
    """Independent injectivity check for single-obligation correspondences:
    commits may not outnumber matching runs for any argument vector."""
    assert len(corr.obligations) == 1
    runs: dict = {}
    for e in trace.events:
        if e.tag == corr.obligations[0][0]:
            key = e.args[:len(corr.trigger[1])]
            runs[key] = runs.get(key, 0) + 1
    for e in trace.events:
        if e.tag == corr.trigger[0]:
            key = e.args
            if runs.get(key, 0) <= 0:
                return "violated"
            runs[key] -= 1
    return "holds"


def test_empty_trace_vacuously_holds():
    tr = _trace_with([])
    for v in C.check_all_agreements(tr):
        assert v.status == "holds"


def test_honest_trace_satisfies_all_four():
    tr = H.run_scenario(scn(terminals=(("onhi", None),), strategy="passive"))
    for v in C.check_all_agreements(tr):
        assert v.status == "holds", v.line()


def test_agreement_is_interleaving_insensitive():
    tr = H.run_scenario(scn(cards=2, sessions=2, strategy="passive",
                            terminals=(("lo", None), ("offhi", None))))
    verdicts = [v.status for v in C.check_all_agreements(tr)]
    rng = random.Random(3)
    for _ in range(5):
        shuffled = list(tr.events)
        rng.shuffle(shuffled)
        tr2 = _trace_with(shuffled)
        assert [v.status for v in C.check_all_agreements(tr2)] == verdicts


def test_missing_run_event_is_reported():
    g = T.normalize(T.gen())
    args6 = (g,) * 6
    tr = _trace_with([Event("TComC", args6, "T0", "T0")])
    v = C.check_agreement(tr, C.CORRESPONDENCES[0])
    assert v.status == "violated"
    assert "TComC" in v.witness


def test_injectivity_two_commits_one_run():
    g = T.normalize(T.gen())
    args6 = (g,) * 6
    events = [Event("CRun", args6, "C0", "card0"),
              Event("TComC", args6, "T0", "T0"),
              Event("TComC", args6, "T1", "T1")]
    tr = _trace_with(events)
    v = C.check_agreement(tr, C.CORRESPONDENCES[0])
    assert v.status == "violated"
    assert counting_oracle(tr, C.CORRESPONDENCES[0]) == "violated"
    # one commit per run is fine
    tr2 = _trace_with(events[:2])
    assert C.check_agreement(tr2, C.CORRESPONDENCES[0]).status == "holds"
    assert counting_oracle(tr2, C.CORRESPONDENCES[0]) == "holds"


def test_replay_without_uniqueness_breaks_bank_injectivity():
    tr = H.run_scenario(scn(terminals=(("lo", None),),
                            strategy="replay_bank_request",
                            options=dict(replay_check=False)))
    v = C.check_agreement(tr, C.CORRESPONDENCES[2])
    assert v.status == "violated"
    # oracle: BComTC commits outnumber TRunBC runs on the replayed request
    commits = {}
    runs = {}
    for e in tr.events:
        if e.tag == "BComTC":
            commits[e.args[0]] = commits.get(e.args[0], 0) + 1
        if e.tag == "TRunBC":
            runs[e.args[0]] = runs.get(e.args[0], 0) + 1
    assert any(commits[k] > runs.get(k, 0) for k in commits)


def test_shared_existentials_across_obligations():
    # BComTC must find one TRunBC and one CRun agreeing on the same tail
    g = T.normalize(T.gen())
    x = T.normalize(T.h(T.gen()))
    tail_a = (g,) * 6
    tail_b = (x,) * 6
    ev = [Event("TRunBC", (x,) + tail_a, "T0", "T0"),
          Event("CRun", tail_b, "C0", "card0"),
          Event("BComTC", (x,), "B0", "bank")]
    v = C.check_agreement(_trace_with(ev), C.CORRESPONDENCES[2])
    assert v.status == "violated"        # tails disagree
    ev[1] = Event("CRun", tail_a, "C0", "card0")
    v = C.check_agreement(_trace_with(ev), C.CORRESPONDENCES[2])
    assert v.status == "holds"


def test_secrecy_honest_and_leaky():
    tr = H.run_scenario(scn(terminals=(("onhi", None),), strategy="passive"))
    assert C.check_secrecy(tr.frame, tr.secrets).status == "holds"
    leaky = H.run_scenario(scn(protocol="utxl", terminals=(("lo", None),),
                               strategy="passive",
                               options=dict(pin_leaked=True, contact=False)))
    v = C.check_secrecy(leaky.frame, leaky.secrets)
    assert v.status == "violated"
    assert ".pin<-?w" in v.witness      # the published alias is the recipe


def test_distinguish_is_symmetric():
    sc = scn(protocol="bdh", sessions=2, schedule=((0, 0), (0, 0)),
             terminals=(("lo", None),), strategy="probe_cards",
             options=dict(replay_check=False))
    real, ideal = H.run_paired(sc)
    a = C.distinguish(real, ideal, test_bound=4)
    b = C.distinguish(ideal, real, test_bound=4)
    assert a.status == b.status == "violated"


def test_distinguish_verdict_witness_replays():
    sc = scn(protocol="bdh", sessions=2, schedule=((0, 0), (0, 0)),
             terminals=(("lo", None),), strategy="probe_cards",
             options=dict(replay_check=False))
    real, ideal = H.run_paired(sc)
    verdict = F.static_equiv(real.frame, ideal.frame, test_bound=4)
    assert not bool(verdict)
    ra = T.apply(real.frame.subst(), verdict.left)
    rb = T.apply(real.frame.subst(), verdict.right)
    ia = T.apply(ideal.frame.subst(), verdict.left)
    ib = T.apply(ideal.frame.subst(), verdict.right)
    assert (ra == rb) != (ia == ib)


def test_run_suite_unknown_name():
    import pytest
    with pytest.raises(ValueError):
        C.run_suite("nonsense")


def test_suite_report_rendering():
    rep = C.Report("demo")
    rep.add(C.Verdict("x", "holds"), "holds")
    rep.add(C.Verdict("y", "violated", "w"), "holds")
    lines = list(rep.render())
    assert lines[0] == "CHECK x holds"
    assert "expected holds" in lines[1]
    assert lines[-1] == "SUITE demo FAIL"
    assert not rep.ok()
