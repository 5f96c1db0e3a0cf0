"""Communication-cost accounting."""

from __future__ import annotations

import threading
from collections import defaultdict
from dataclasses import dataclass

from .messages import HEADER_BYTES

UP = "up"
DOWN = "down"


@dataclass(frozen=True)
class LedgerRecord:
    direction: str
    round: str
    msg_type: str
    worker_id: int
    payload_bytes: int
    scalars: int

    @property
    def frame_bytes(self) -> int:
        return self.payload_bytes + HEADER_BYTES


class CommLedger:
    """Every frame that crossed the worker/master boundary, with per-round totals."""

    def __init__(self):
        self.records: list[LedgerRecord] = []
        self._lock = threading.Lock()

    def record(self, direction, round_name, msg, worker_id, payload_bytes):
        rec = LedgerRecord(direction, round_name, type(msg).__name__, int(worker_id), int(payload_bytes), msg.scalar_count())
        with self._lock:
            self.records.append(rec)
        return rec

    def totals(self) -> dict[tuple[str, str], dict[str, int]]:
        out = defaultdict(lambda: {"messages": 0, "bytes": 0, "scalars": 0})
        for r in self.records:
            t = out[(r.direction, r.round)]
            t["messages"] += 1
            t["bytes"] += r.frame_bytes
            t["scalars"] += r.scalars
        return dict(out)

    def scalars(self, direction=None, round_name=None) -> int:
        return sum(r.scalars for r in self._select(direction, round_name))

    def bytes(self, direction=None, round_name=None) -> int:
        return sum(r.frame_bytes for r in self._select(direction, round_name))

    @property
    def bytes_up(self) -> int:
        return self.bytes(UP)

    @property
    def bytes_down(self) -> int:
        return self.bytes(DOWN)

    def _select(self, direction, round_name):
        return [r for r in self.records
                if (direction is None or r.direction == direction)
                and (round_name is None or r.round == round_name)]

    def __len__(self):
        return len(self.records)


def round1_scalars(S: int, p: int) -> int:
    return S * (p + 3)


def round2_scalars(S: int, p: int, H: int) -> int:
    return S * (2 + H + H * p + p * p)


def approx_scalars(ks, p: int) -> int:
    return sum(3 + k + k * p for k in ks)


def scatter_scalars(S: int, p: int) -> int:
    return S * (2 + p * p)
