import pytest

import prf_oracle as oracle
from specedge.client import (ClientConfig, ClientCore, PreDraftCache, cache_lookup, pre_draft,
                             receiver_ingest)
from specedge.errors import DomainError, ProtocolError
from specedge.experiment import load_config
from specedge.models import SyntheticModel, SyntheticParams, VocabConfig
from specedge.protocol import ExitOutput
from specedge.server import ServerCore
from specedge.specdec import DraftBatch

REF = "configs/reference.cfg"


def core(**kw):
    params = SyntheticParams(42, VocabConfig(32), 4, 0.8, (0.3, 0.6, 0.9))
    return ClientCore(ClientConfig(**kw), SyntheticModel(params), (1, 2, 3))


def exit_msg(rnd, i, tokens, score=0.5, final=False):
    return ExitOutput(rnd, i, len(tokens) - 1, tuple(tokens), score, final)


def test_cache_semantics():
    cache = PreDraftCache()
    entry = DraftBatch(0, 5, (1, 2, 3, 4))
    assert cache.insert([12, 7], entry, cache.generation)
    assert cache_lookup(cache, [12, 7]) is entry
    assert cache_lookup(cache, [12, 8]) is None
    cache.reset()
    assert cache_lookup(cache, [12, 7]) is None
    assert not cache.insert([12, 7], entry, 0)  # stale generation


def test_ingest_routes_messages():
    c = core()
    c.first_batch()
    assert receiver_ingest(c, exit_msg(1, 1, [4])) == "queued"
    assert len(c.queue) == 1
    assert c.ingest(exit_msg(1, 4, [4, 5], final=True)) == "final"
    assert len(c.queue) == 1 and c.final is not None
    c.on_final()
    assert c.ingest(exit_msg(1, 2, [9])) == "stale"
    assert c.metrics.stale_drops == 1 and len(c.queue) == 0
    with pytest.raises(ProtocolError):
        c.ingest(exit_msg(5, 1, [9]))


def test_duplicate_exit_outputs_draft_once():
    c = core()
    c.first_batch()
    c.ingest(exit_msg(1, 1, [4, 6]))
    c.ingest(exit_msg(1, 2, [4, 6]))
    job = c.next_job()
    assert c.next_job() is None
    c.finish_job(job, c.run_job(job))
    c.ingest(exit_msg(1, 3, [4, 6]))
    assert c.next_job() is None
    assert c.metrics.predraft_calls == 1


def test_full_agreement_exit_guarantees_hit():
    c = core()
    batch = c.first_batch()
    server = ServerCore(c.model, (1, 2, 3))
    outs = server.handle(batch)
    final = outs[-1]
    c.ingest(exit_msg(1, 3, final.tokens))  # an exit that agrees with the final
    job = c.next_job()
    c.finish_job(job, c.run_job(job))
    c.ingest(final)
    outcome = c.on_final()
    assert outcome.hit and outcome.batch.round_id == 2
    assert c.metrics.cache_hits == 1 and c.metrics.cache_misses == 1


def test_reset_isolates_rounds():
    c = core()
    c.first_batch()
    c.ingest(exit_msg(1, 1, [4]))
    job = c.next_job()
    entry = c.run_job(job)
    c.ingest(exit_msg(1, 4, [7], final=True))
    c.on_final()
    assert not c.finish_job(job, entry)  # finished after the reset
    assert c.metrics.predraft_discards == 1 and len(c.cache) == 0


def test_predraft_disabled_never_hits():
    c = core(predraft=False)
    c.first_batch()
    c.ingest(exit_msg(1, 1, [4]))
    assert c.next_job() is None


def test_one_round_when_n_is_small():
    c = core(n=1)
    c.first_batch()
    c.ingest(exit_msg(1, 4, [3, 3], final=True))
    assert c.on_final().done and c.metrics.rounds == 1


def test_final_round_mismatch_and_missing():
    c = core()
    with pytest.raises(ProtocolError):
        c.on_final()


def test_reference_exit2_cached_entry():
    cfg = load_config(REF)
    model = SyntheticModel(cfg.params(42))
    c = ClientCore(cfg.client_config(42), model, cfg.prompt)
    outs = ServerCore(model, cfg.prompt).handle(c.first_batch())
    e2 = outs[1]
    assert e2.tokens == (17,)
    entry = pre_draft(model, cfg.prompt, e2, 4)
    assert entry.tokens == (20, 4, 21, 7)
    assert list(entry.tokens) == oracle.greedy_draft(42, 32, 0.8, [1, 2, 3, 17], 4)


def test_config_validation():
    with pytest.raises(DomainError):
        ClientConfig(gamma=0)
    with pytest.raises(DomainError):
        ClientConfig(worker_threads=-1)
    with pytest.raises(DomainError):
        ClientConfig(verify_mode="stochastic", payload="compact")
