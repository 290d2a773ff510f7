import math

import pytest

from specedge.errors import ProtocolError
from specedge.experiment import load_config
from specedge.models import SyntheticModel, SyntheticParams, VocabConfig
from specedge.protocol import ArRequest, ExitOutput
from specedge.queues import ServerQueue
from specedge.server import (ServerCore, dispatch_final, listener_handle, priority_score,
                             sender_drain)
from specedge.specdec import DraftBatch, VerifyResult, draft


def model(L=4, beta=(0.3, 0.6, 0.9)):
    return SyntheticModel(SyntheticParams(42, VocabConfig(32), L, 0.8, beta))


def test_priority_score():
    assert priority_score(VerifyResult(2, (1, 2, 3), (0.2, 0.9, 0.4))) == 0.9
    assert priority_score(VerifyResult(0, (1,), (0.25,))) == 0.25


def test_reference_round1_sends():
    cfg = load_config("configs/reference.cfg")
    m = SyntheticModel(cfg.params(42))
    outs = ServerCore(m, cfg.prompt).handle(draft(m, cfg.prompt, 4, round_id=1))
    got = [(o.exit_index, o.accepted, round(o.score, 6)) for o in outs]
    assert got == [(1, 0, 0.044831), (2, 0, 0.063925), (3, 0, 0.090381), (4, 0, 0.12631),
                   (5, 0, 0.173792), (6, 0, 0.234336), (7, 0, 0.308106), (8, 0, 0.393175)]
    w = math.exp(3 * 2 / 8)
    assert outs[1].score == pytest.approx(w / (w + 31))
    assert outs[-1].isfinal and not any(o.isfinal for o in outs[:-1])


def test_listener_single_exit_sends_only_final():
    m = model(L=1, beta=())
    sent = []
    q = ServerQueue()
    listener_handle(ServerCore(m, (1, 2)), q, sent.append, draft(m, (1, 2), 4, round_id=1))
    assert len(sent) == 1 and sent[0].isfinal


def test_sender_pops_by_score():
    q = ServerQueue("priority")
    sent = []
    q.push("low", 0.3)
    q.push("high", 0.8)
    assert sender_drain(q, sent.append) == 2
    assert sent == ["high", "low"]
    q = ServerQueue("fifo")
    q.push("a", 0.3)
    q.push("b", 0.8)
    sender_drain(q, sent.append)
    assert sent[2:] == ["a", "b"]


def test_final_discards_unsent():
    q = ServerQueue()
    sent = []
    q.push("x", 0.1)
    q.push("y", 0.2)
    final = ExitOutput(1, 4, 0, (1,), 0.9, True)
    assert dispatch_final(q, sent.append, final) == 2
    assert q.discarded == 2 and sent == [final] and len(q) == 0


def test_listener_streams_with_sender_between_exits():
    m = model()
    q = ServerQueue("priority")
    sent = []
    listener_handle(ServerCore(m, (1, 2)), q, sent.append, draft(m, (1, 2), 4, round_id=1),
                    exit_delay=lambda i: sender_drain(q, sent.append))
    assert [o.exit_index for o in sent] == [1, 2, 3, 4] and q.discarded == 0


def test_round_and_prefix_checks():
    m = model()
    s = ServerCore(m, (1, 2))
    with pytest.raises(ProtocolError):
        s.handle(draft(m, (1, 2), 4, round_id=2))
    with pytest.raises(ProtocolError):
        s.handle(DraftBatch(1, 5, (1, 2)))
    with pytest.raises(ProtocolError):
        s.handle(DraftBatch(1, 2, ()))
    outs = s.handle(draft(m, (1, 2), 4, round_id=1))
    assert len(s.prefix) == 2 + len(outs[-1].tokens)


def test_sd_mode_verifies_final_only():
    m = model()
    outs = ServerCore(m, (1, 2), stream_exits=False).handle(draft(m, (1, 2), 4, round_id=1))
    assert len(outs) == 1 and outs[0].exit_index == 4


def test_ar_generation():
    m = model()
    out = ServerCore(m, (1, 2)).generate_ar(ArRequest(1, 10))
    assert out.tokens == tuple(m.greedy_rollout((1, 2), 10)) and out.isfinal
    stoch = ServerCore(m, (1, 2), mode="stochastic")
    assert stoch.generate_ar(ArRequest(1, 10)) == ServerCore(m, (1, 2), mode="stochastic").generate_ar(
        ArRequest(1, 10))
    with pytest.raises(ProtocolError):
        ServerCore(m, (1, 2)).generate_ar(ArRequest(1, 0))
