"""Speculative edge-cloud decoding with early-exit pre-drafting.

A small draft model on the device proposes tokens; a target model with
several early exits verifies them in the cloud. Early-exit outputs stream
back ahead of the final verification so the device can draft the next batch
before it is needed.
"""

from .analytics import (LatencyParams, PricingRow, RunMetrics, cost_cloud_ar, cost_cloud_sd,
                        cost_edge_sd, expected_tau_greedy, heatmap_grid, latency_ar,
                        latency_fsd, latency_sd, metrics_finalize, speedup_projection)
from .client import ClientConfig, ClientCore, PreDraftCache, cache_lookup, pre_draft
from .errors import (ConfigError, DecodeError, DomainError, ExactnessError, ProtocolError,
                     ScenarioError, SessionError)
from .kernels import BACKEND
from .models import (SyntheticModel, SyntheticParams, TokenSeq, VocabConfig, confidence,
                     draft_distribution, target_distribution)
from .protocol import ExitOutput, decode_frame, encode_frame
from .queues import ClientQueue, ServerQueue, queue_pop
from .server import ServerCore, listener_handle, priority_score, sender_drain
from .simulation import Scenario, SimChannel, VirtualClock, sim_run, sim_send
from .specdec import (DraftBatch, VerifyResult, draft, residual_distribution, verify_all_exits,
                      verify_greedy, verify_stochastic)

__all__ = [
    "LatencyParams", "PricingRow", "RunMetrics", "cost_cloud_ar", "cost_cloud_sd",
    "cost_edge_sd", "expected_tau_greedy", "heatmap_grid", "latency_ar", "latency_fsd",
    "latency_sd", "metrics_finalize", "speedup_projection", "ClientConfig", "ClientCore",
    "PreDraftCache", "cache_lookup", "pre_draft", "ConfigError", "DecodeError", "DomainError",
    "ExactnessError", "ProtocolError", "ScenarioError", "SessionError", "BACKEND",
    "SyntheticModel", "SyntheticParams", "TokenSeq", "VocabConfig", "confidence",
    "draft_distribution", "target_distribution", "ExitOutput", "decode_frame", "encode_frame",
    "ClientQueue", "ServerQueue", "queue_pop", "ServerCore", "listener_handle",
    "priority_score", "sender_drain", "Scenario", "SimChannel", "VirtualClock", "sim_run",
    "sim_send", "DraftBatch", "VerifyResult", "draft", "residual_distribution",
    "verify_all_exits", "verify_greedy", "verify_stochastic",
]

__version__ = "0.1.0"
