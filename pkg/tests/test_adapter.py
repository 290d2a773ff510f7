import io
import json
import sys

from specedge.adapter import AdapterModel, serve_adapter
from specedge.experiment import load_config, run_seed
from specedge.models import SyntheticModel

REF = "configs/reference.cfg"


def test_serve_adapter_protocol():
    cfg = load_config(REF)
    model = SyntheticModel(cfg.params(42))
    reqs = [{"op": "draft", "prefix": [1, 2, 3], "gamma": 4},
            {"op": "verify", "prefix": [1, 2, 3], "draft": [16, 19, 31, 0], "exit": 2},
            {"op": "nope"},
            {"op": "draft", "prefix": [999], "gamma": 1}]
    out = io.StringIO()
    n = serve_adapter(model, io.StringIO("\n".join(json.dumps(r) for r in reqs) + "\n"), out)
    replies = [json.loads(line) for line in out.getvalue().splitlines()]
    assert n == 4
    assert replies[0]["tokens"] == [16, 19, 31, 0]
    assert replies[1]["accepted"] == 0 and replies[1]["next"] == 17
    assert "error" in replies[2] and "error" in replies[3]


def test_adapter_backed_run_matches_sim():
    cfg = load_config(REF, n=40)
    cmd = f"{sys.executable} -m specedge adapter --config {REF}"
    via_adapter = run_seed(load_config(REF, n=40, adapter=cmd), 42)
    assert via_adapter.tokens == run_seed(cfg, 42).tokens


def test_adapter_model_rollout():
    cfg = load_config(REF)
    m = AdapterModel([sys.executable, "-m", "specedge", "adapter", "--config", REF], cfg.vocab,
                     cfg.exits)
    try:
        tokens, _ = m.rollout([1, 2, 3], 5)
    finally:
        m.close()
    assert tokens == SyntheticModel(cfg.params(42)).greedy_rollout([1, 2, 3], 5)
