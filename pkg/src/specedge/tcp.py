"""Real socket transport: a threaded client and a single-session server.

The client runs a receiver thread, ``worker_threads`` pre-draft workers and a
coordinator (the caller's thread). The server runs the listener in its session
thread and a sender thread draining the early-exit queue. Optional latency
injection sleeps for the modelled compute times (T_p, T_q, T_r); network time
is whatever the socket takes.
"""

from __future__ import annotations

import logging
import socket
import threading
import time
from dataclasses import dataclass

from .client import ClientConfig, ClientCore, RoundRecord
from .errors import DecodeError, ProtocolError, SessionError
from .protocol import (PROTOCOL_VERSION, ArRequest, End, Error, ExitOutput, Hello,
                       encode_frame, read_frame)
from .queues import ServerQueue
from .server import ServerCore, listener_handle, sender_drain
from .specdec import DraftBatch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Injected:
    """Compute latencies (ms) to sleep for; all zero means run flat out."""

    T_p: float = 0.0
    T_q: float = 0.0
    T_r: float = 0.0


def _sleep_ms(ms: float) -> None:
    if ms > 0:
        time.sleep(ms / 1000.0)


class FramedSocket:
    """Frame-at-a-time reads and atomic frame writes over a stream socket."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self._wlock = threading.Lock()
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    @classmethod
    def connect(cls, host: str, port: int, timeout: float = 10.0) -> "FramedSocket":
        sock = socket.create_connection((host, port), timeout=timeout)
        sock.settimeout(None)
        return cls(sock)

    def send(self, msg) -> None:
        data = encode_frame(msg)
        try:
            with self._wlock:
                self.sock.sendall(data)
        except OSError as exc:
            raise SessionError(f"send failed: {exc}") from exc

    def _recv_exact(self, n: int):
        chunks = []
        got = 0
        while got < n:
            try:
                chunk = self.sock.recv(n - got)
            except OSError as exc:
                raise SessionError(f"recv failed: {exc}") from exc
            if not chunk:
                if got == 0:
                    return None
                raise DecodeError("connection closed mid-frame")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def recv(self):
        return read_frame(self._recv_exact)

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


# ---------------------------------------------------------------------------
# server


class SessionServer:
    """Serves one client session at a time."""

    def __init__(self, model, host: str = "127.0.0.1", port: int = 0, mode: str = "greedy",
                 server_queue: str = "priority", stream_exits: bool = True,
                 inject: Injected | None = None):
        self.model = model
        self.mode = mode
        self.server_queue = server_queue
        self.stream_exits = stream_exits
        self.inject = inject or Injected()
        self.listener = socket.create_server((host, port))
        self.address = self.listener.getsockname()[:2]
        self.last_core: ServerCore | None = None
        self.last_discards = 0

    def close(self) -> None:
        self.listener.close()

    def serve_one(self) -> ServerCore | None:
        conn, _ = self.listener.accept()
        return self.handle(FramedSocket(conn))

    def serve_forever(self) -> None:
        while True:
            self.serve_one()

    def handle(self, conn: FramedSocket) -> ServerCore | None:
        L = self.model.num_exits
        stop = threading.Event()
        queue = ServerQueue(self.server_queue)
        sender = None
        core = None
        try:
            hello = conn.recv()
            if not isinstance(hello, Hello):
                raise ProtocolError("expected HELLO")
            if hello.version != PROTOCOL_VERSION or hello.vocab != self.model.vocab or hello.num_exits != L:
                raise ProtocolError(
                    f"incompatible peer: version={hello.version} vocab={hello.vocab} exits={hello.num_exits}")
            conn.send(Hello(PROTOCOL_VERSION, self.model.vocab, L, hello.gamma))
            core = ServerCore(self.model, hello.prompt, self.mode, self.stream_exits)
            self.last_core = core

            def drain():
                while not stop.is_set():
                    queue.wait(lambda: len(queue) > 0 or stop.is_set(), timeout=0.5)
                    sender_drain(queue, conn.send)

            sender = threading.Thread(target=drain, name="sender", daemon=True)
            sender.start()

            seg = self.inject.T_q / L

            def exit_delay(i):
                _sleep_ms(seg)

            while True:
                msg = conn.recv()
                if msg is None or isinstance(msg, End):
                    break
                if isinstance(msg, DraftBatch):
                    listener_handle(core, queue, conn.send, msg, exit_delay if seg > 0 else None)
                elif isinstance(msg, ArRequest):
                    _sleep_ms(msg.n * self.inject.T_q)
                    conn.send(core.generate_ar(msg))
                else:
                    raise ProtocolError(f"unexpected {type(msg).__name__} from client")
        except (ProtocolError, ValueError) as exc:
            log.warning("session aborted: %s", exc)
            rnd = core.last_round + 1 if core else 0
            try:
                conn.send(Error(rnd, str(exc)))
            except SessionError:
                pass
        except SessionError as exc:
            log.warning("session lost: %s", exc)
        finally:
            stop.set()
            with queue.cond:
                queue.cond.notify_all()
            if sender is not None:
                sender.join(timeout=2)
            self.last_discards = queue.discarded
            conn.close()
        return core


# ---------------------------------------------------------------------------
# client


@dataclass
class ClientRun:
    tokens: list[int]
    core: ClientCore
    wall_ms: float

    @property
    def metrics(self):
        return self.core.metrics

    @property
    def rounds(self) -> list[RoundRecord]:
        return self.core.records


def _handshake(session: FramedSocket, model, gamma: int, prompt) -> None:
    session.send(Hello(PROTOCOL_VERSION, model.vocab, model.num_exits, gamma, tuple(prompt)))
    reply = session.recv()
    if isinstance(reply, Error):
        raise ProtocolError(f"server refused session: {reply.reason}")
    if not isinstance(reply, Hello):
        raise ProtocolError("expected HELLO reply")


def client_generate(config: ClientConfig, model, session: FramedSocket, initial_prefix,
                    inject: Injected | None = None) -> ClientRun:
    """Run the full draft/verify loop against a connected server."""
    inject = inject or Injected()
    core = ClientCore(config, model, initial_prefix)
    cond = threading.Condition()
    state = {"error": None, "stop": False}
    draft_ms = config.gamma * inject.T_p

    def fail(exc):
        with cond:
            if state["error"] is None:
                state["error"] = exc
            cond.notify_all()

    def receiver():
        try:
            while True:
                msg = session.recv()
                with cond:
                    if state["stop"]:
                        return
                if msg is None:
                    raise SessionError("server closed the connection")
                if isinstance(msg, Error):
                    raise ProtocolError(f"server error in round {msg.round_id}: {msg.reason}")
                if not isinstance(msg, ExitOutput):
                    raise ProtocolError(f"unexpected {type(msg).__name__} from server")
                with cond:
                    core.ingest(msg)
                    cond.notify_all()
        except Exception as exc:  # surfaced to the coordinator
            with cond:
                if state["stop"]:
                    return
            fail(exc)

    def worker():
        while True:
            with cond:
                while True:
                    if state["stop"]:
                        return
                    job = core.next_job()
                    if job is not None:
                        break
                    cond.wait()
            entry = core.run_job(job)
            _sleep_ms(draft_ms)
            with cond:
                core.finish_job(job, entry)
                cond.notify_all()

    _handshake(session, model, config.gamma, initial_prefix)
    t0 = time.perf_counter()
    threads = [threading.Thread(target=receiver, name="receiver", daemon=True)]
    threads += [threading.Thread(target=worker, name=f"predraft-{k}", daemon=True)
                for k in range(config.worker_threads if config.predraft else 0)]
    for t in threads:
        t.start()
    try:
        with cond:
            batch = core.first_batch()
        _sleep_ms(draft_ms)
        session.send(batch)
        while True:
            with cond:
                while core.final is None and state["error"] is None:
                    cond.wait()
                if state["error"] is not None:
                    raise state["error"]
                outcome = core.on_final()
                cond.notify_all()
            if outcome.done:
                break
            _sleep_ms(inject.T_r if outcome.hit else draft_ms)
            session.send(outcome.batch)
        wall = (time.perf_counter() - t0) * 1000.0
        with cond:
            state["stop"] = True
            cond.notify_all()
        session.send(End(core.round_id))
    except SessionError as exc:
        raise SessionError(str(exc), core.output) from exc
    except ProtocolError as exc:
        raise SessionError(f"protocol failure: {exc}", core.output) from exc
    finally:
        with cond:
            state["stop"] = True
            cond.notify_all()
        for t in threads[1:]:
            t.join(timeout=5)
    return ClientRun(list(core.output), core, wall)


def ar_generate(config: ClientConfig, model, session: FramedSocket, initial_prefix,
                inject: Injected | None = None) -> ClientRun:
    """Cloud autoregressive baseline: one request, one response of ``n`` tokens."""
    core = ClientCore(config, model, initial_prefix)
    _handshake(session, model, config.gamma, initial_prefix)
    t0 = time.perf_counter()
    session.send(ArRequest(1, config.n))
    msg = session.recv()
    if isinstance(msg, Error):
        raise SessionError(f"server error: {msg.reason}")
    if not isinstance(msg, ExitOutput) or not msg.isfinal:
        raise SessionError("expected a final output")
    wall = (time.perf_counter() - t0) * 1000.0
    session.send(End(1))
    core.output.extend(msg.tokens)
    core.metrics.rounds = 1
    core.metrics.tokens_emitted = len(msg.tokens)
    core.records.append(RoundRecord(1, msg.accepted, len(msg.tokens)))
    return ClientRun(list(core.output), core, wall)
