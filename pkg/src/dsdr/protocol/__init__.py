"""Distributed estimation: wire messages, transports, and the master/worker exchange."""

from .approx import Aggregation, FixedK, VarianceThreshold, aggregate_payloads, approx_local, approx_master, choose_k, local_kernel
from .edsir import edsir_finalize, edsir_master_round1, edsir_pool, edsir_worker_round1, edsir_worker_round2
from .ledger import CommLedger, approx_scalars, round1_scalars, round2_scalars, scatter_scalars
from .messages import Broadcast1, EigenPayload, ErrorMsg, Round1Msg, Round2Msg, ScatterMsg, decode, encode
from .runner import ProtocolMode, ProtocolResult, Transport, run_protocol

__all__ = [
    "Aggregation", "FixedK", "VarianceThreshold", "aggregate_payloads", "approx_local", "approx_master",
    "choose_k", "local_kernel", "edsir_finalize", "edsir_master_round1", "edsir_pool", "edsir_worker_round1",
    "edsir_worker_round2", "CommLedger", "approx_scalars", "round1_scalars", "round2_scalars",
    "scatter_scalars", "Broadcast1", "EigenPayload", "ErrorMsg", "Round1Msg", "Round2Msg", "ScatterMsg",
    "decode", "encode", "ProtocolMode", "ProtocolResult", "Transport", "run_protocol",
]
