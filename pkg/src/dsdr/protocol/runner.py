"""Drive a full master/worker exchange over a chosen transport."""

from __future__ import annotations

import enum
import threading
import time
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .. import errors
from ..core import Method, SdrEstimate, Slicing
from ..errors import ConfigError, DsdrError, ProtocolViolation, TransportFailure
from . import messages as wire
from .approx import Aggregation, FixedK, VarianceThreshold, approx_local, approx_master, choose_k, worker_scatter
from .edsir import edsir_finalize, edsir_master_round1, edsir_pool, edsir_worker_round1, edsir_worker_round2
from .ledger import DOWN, UP, CommLedger
from .transport import TcpListener, inproc_pair, tcp_connect


class ProtocolMode(str, enum.Enum):
    EXACT = "exact"
    APPROX_HOMOGENEOUS = "approx-homo"
    APPROX_HETEROGENEOUS = "approx-hetero"


class Transport(str, enum.Enum):
    INPROC = "inproc"
    TCP = "tcp"


@dataclass(frozen=True)
class ProtocolPlan:
    mode: ProtocolMode
    method: Method = Method.SIR
    H: int = 10
    krule: FixedK | VarianceThreshold = FixedK(1)
    kg_rule: FixedK | VarianceThreshold = FixedK(1)
    aggregation: Aggregation = Aggregation.SPECTRUM
    pool_scatter: bool = False
    slicing: Slicing | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", ProtocolMode(self.mode))
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "aggregation", Aggregation(self.aggregation))
        if self.mode is ProtocolMode.EXACT and self.method is not Method.SIR:
            raise ConfigError("exact mode is only defined for SIR")
        if self.H < 2:
            raise ConfigError("H must be at least 2")

    @property
    def pre_round(self) -> bool:
        return self.mode is not ProtocolMode.APPROX_HOMOGENEOUS

    @property
    def sends_scatter(self) -> bool:
        return self.mode is ProtocolMode.APPROX_HETEROGENEOUS and self.pool_scatter


@dataclass
class Timing:
    """Compute seconds per round: each worker's, and the master's."""

    worker: dict[str, dict[int, float]] = field(default_factory=lambda: defaultdict(dict))
    master: dict[str, float] = field(default_factory=lambda: defaultdict(float))
    wall: float = 0.0

    @property
    def simulated_parallel(self) -> float:
        """Workers of a round run side by side, so a round costs its slowest worker."""
        workers = sum(max(per.values()) for per in self.worker.values() if per)
        return workers + sum(self.master.values())

    @property
    def worker_phase(self) -> float:
        return sum(max(per.values()) for per in self.worker.values() if per)


@dataclass
class ProtocolResult:
    estimate: SdrEstimate
    ledger: CommLedger
    timing: Timing


class _Clock:
    """Times compute sections; with ``exclusive`` they never overlap, so wall time is per-task."""

    def __init__(self, timing: Timing, exclusive: bool):
        self.timing = timing
        self.lock = threading.Lock() if exclusive else None
        self.guard = threading.Lock()

    def worker(self, round_name, wid, fn, *args, **kw):
        if self.lock:
            self.lock.acquire()
        try:
            t0 = time.perf_counter()
            out = fn(*args, **kw)
            dt = time.perf_counter() - t0
        finally:
            if self.lock:
                self.lock.release()
        with self.guard:
            self.timing.worker[round_name][wid] = dt
        return out

    def master(self, round_name, fn, *args, **kw):
        t0 = time.perf_counter()
        out = fn(*args, **kw)
        self.timing.master[round_name] += time.perf_counter() - t0
        return out


def _expect(frame, offset, kind):
    msg = wire.decode(frame, offset)
    if not isinstance(msg, kind):
        raise ProtocolViolation(f"expected {kind.__name__}, got {type(msg).__name__}")
    return msg


def _worker_main(channel, shard, wid, plan: ProtocolPlan, clock: _Clock):
    try:
        b = None
        if plan.pre_round:
            channel.send(wire.encode(clock.worker("round1", wid, edsir_worker_round1, shard, wid)))
            offset = channel.received
            b = _expect(channel.recv(), offset, wire.Broadcast1)
        if plan.mode is ProtocolMode.EXACT:
            channel.send(wire.encode(clock.worker("round2", wid, edsir_worker_round2, shard, b, wid)))
            return
        payload = clock.worker("eigen", wid, approx_local, shard, plan.method, plan.H, plan.krule, b, wid, plan.slicing)
        channel.send(wire.encode(payload))
        if plan.sends_scatter:
            channel.send(wire.encode(clock.worker("scatter", wid, worker_scatter, shard, b, wid)))
    except TransportFailure:
        # the master is gone or hung up on us; nothing left to report to
        return
    except Exception as exc:  # reported to the master, which re-raises it
        try:
            channel.send(wire.encode(wire.ErrorMsg(wid, f"{type(exc).__name__}: {exc}")))
        except TransportFailure:
            pass


def _remote_error(msg: wire.ErrorMsg) -> DsdrError:
    name, _, text = msg.message.partition(": ")
    cls = getattr(errors, name, None)
    if isinstance(cls, type) and issubclass(cls, DsdrError) and cls not in (errors.ParseError, errors.TransportFailure):
        try:
            return cls(f"worker {msg.worker_id}: {text}")
        except TypeError:
            pass
    return ProtocolViolation(f"worker {msg.worker_id} failed: {msg.message}")


class _Master:
    def __init__(self, channels, plan: ProtocolPlan, ledger: CommLedger, clock: _Clock):
        self.channels = channels
        self.plan = plan
        self.ledger = ledger
        self.clock = clock
        self.ids = [None] * len(channels)

    def gather(self, round_name, kind):
        out = []
        for i, ch in enumerate(self.channels):
            offset = ch.received
            frame = ch.recv()
            msg = wire.decode(frame, offset)
            self.ledger.record(UP, round_name, msg, msg.worker_id, len(frame) - wire.HEADER_BYTES)
            if isinstance(msg, wire.ErrorMsg):
                raise _remote_error(msg)
            if not isinstance(msg, kind):
                raise ProtocolViolation(f"{round_name}: expected {kind.__name__}, got {type(msg).__name__}")
            if self.ids[i] is None:
                self.ids[i] = msg.worker_id
            elif self.ids[i] != msg.worker_id:
                raise ProtocolViolation(f"worker id changed from {self.ids[i]} to {msg.worker_id} on one link")
            out.append(msg)
        return out

    def broadcast(self, round_name, msg):
        frame = wire.encode(msg)
        for i, ch in enumerate(self.channels):
            ch.send(frame)
            self.ledger.record(DOWN, round_name, msg, self.ids[i], len(frame) - wire.HEADER_BYTES)

    def run(self) -> SdrEstimate:
        plan = self.plan
        if plan.pre_round:
            r1 = self.gather("round1", wire.Round1Msg)
            b = self.clock.master("round1", edsir_master_round1, r1, plan.H)
            self.broadcast("broadcast1", b)
        if plan.mode is ProtocolMode.EXACT:
            r2 = self.gather("round2", wire.Round2Msg)
            return self.clock.master("round2", self._finalize_exact, r2)
        payloads = self.gather("eigen", wire.EigenPayload)
        scatters = self.gather("scatter", wire.ScatterMsg) if plan.sends_scatter else None
        return self.clock.master("eigen", approx_master, payloads, plan.kg_rule, plan.aggregation, scatters)

    def _finalize_exact(self, msgs):
        rule = self.plan.kg_rule
        if isinstance(rule, FixedK):
            K = rule.K
        else:
            K = choose_k(np.linalg.eigvalsh(edsir_pool(msgs).kernel)[::-1], rule)
        return edsir_finalize(msgs, K)


def run_protocol(shards, mode, method=Method.SIR, H: int = 10, krule=FixedK(1), kg_rule=FixedK(1),
                 aggregation=Aggregation.SPECTRUM, transport=Transport.INPROC, *, port: int = 0,
                 host: str = "127.0.0.1", pool_scatter: bool = False, slicing=None,
                 simulate_parallel: bool = True, timeout: float = 60.0) -> ProtocolResult:
    """Run one distributed estimation over ``shards`` (worker ``s`` gets id ``s``).

    ``simulate_parallel`` serializes compute sections so per-worker wall times
    are not inflated by contention; ``Timing.simulated_parallel`` then charges
    each round its slowest worker.
    """
    plan = ProtocolPlan(ProtocolMode(mode), Method(method), H, krule, kg_rule, aggregation, pool_scatter, slicing)
    shards = list(shards)
    if not shards:
        raise ConfigError("need at least one shard")
    transport = Transport(transport)
    ledger = CommLedger()
    timing = Timing()
    clock = _Clock(timing, simulate_parallel)
    t0 = time.perf_counter()

    threads, master_ends, listener = [], [], None
    try:
        if transport is Transport.INPROC:
            for wid, shard in enumerate(shards):
                m_end, w_end = inproc_pair(timeout)
                master_ends.append(m_end)
                threads.append(threading.Thread(target=_worker_main, args=(w_end, shard, wid, plan, clock), daemon=True))
            for t in threads:
                t.start()
        else:
            listener = TcpListener(host, port, backlog=len(shards), timeout=timeout)

            def tcp_worker(shard, wid):
                try:
                    ch = tcp_connect(listener.host, listener.port, timeout)
                except TransportFailure:
                    return
                try:
                    _worker_main(ch, shard, wid, plan, clock)
                    # hold the link open until the master hangs up
                    try:
                        ch.recv()
                    except TransportFailure:
                        pass
                finally:
                    ch.close()

            for wid, shard in enumerate(shards):
                threads.append(threading.Thread(target=tcp_worker, args=(shard, wid), daemon=True))
            for t in threads:
                t.start()
            master_ends = [listener.accept() for _ in shards]
        estimate = _Master(master_ends, plan, ledger, clock).run()
    finally:
        for ch in master_ends:
            ch.close()
        if listener is not None:
            listener.close()
        for t in threads:
            t.join(timeout)
    timing.wall = time.perf_counter() - t0
    return ProtocolResult(estimate, ledger, timing)
