"""Simulation outcome record and its text/CSV renderings."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

from ..crypto import Digest
from .config import TICKS_PER_SECOND

REPORT_FORMAT = "powchain-report/1"
SAFE_DEPTH = 6


@dataclass
class TxRecord:
    index: int
    sender: int
    receiver: int
    amount: int
    fee: int
    submit_tick: int
    txid: Digest | None = None
    status: str = "pending"
    depth1_tick: int | None = None
    depth6_tick: int | None = None
    max_confirmations: int = 0
    final_confirmations: int = 0

    def observe(self, confirmations: int, now: int) -> None:
        self.max_confirmations = max(self.max_confirmations, confirmations)
        if confirmations >= 1 and self.depth1_tick is None:
            self.depth1_tick = now
        if confirmations >= SAFE_DEPTH and self.depth6_tick is None:
            self.depth6_tick = now

    @property
    def reverted(self) -> bool:
        """Seen confirmed by the receiver, then gone from its tip chain."""
        return self.max_confirmations >= 1 and self.final_confirmations == 0

    def _elapsed(self, tick: int | None) -> float | None:
        return None if tick is None else (tick - self.submit_tick) / TICKS_PER_SECOND

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "txid": self.txid.hex() if self.txid else None,
            "from": self.sender,
            "to": self.receiver,
            "amount": self.amount,
            "fee": self.fee,
            "status": self.status,
            "submit_time": self.submit_tick / TICKS_PER_SECOND,
            "time_to_depth1": self._elapsed(self.depth1_tick),
            "time_to_depth6": self._elapsed(self.depth6_tick),
            "max_confirmations": self.max_confirmations,
            "final_confirmations": self.final_confirmations,
            "reverted": self.reverted,
        }


CSV_COLUMNS = ["index", "txid", "from", "to", "amount", "fee", "status", "submit_time",
               "time_to_depth1", "time_to_depth6", "max_confirmations", "final_confirmations",
               "reverted"]


@dataclass
class SimReport:
    config_digest: str
    seed: int
    end_time: float
    settled: bool
    tips: list[str]
    heights: list[int]
    blocks_mined: list[int]
    fork_count: int
    reorg_count: int
    max_reorg_depth: int
    orphaned_blocks: int
    buffered_out_of_order: int
    dropped_transactions: int
    rejected_blocks: int
    transactions: list[TxRecord] = field(default_factory=list)
    attack: dict | None = None
    event_count: int = 0
    event_log_digest: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["transactions"] = [t.to_dict() for t in self.transactions]
        return {"format": REPORT_FORMAT, **d}

    def to_text(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for t in self.transactions:
            row = t.to_dict()
            writer.writerow({k: "" if row[k] is None else row[k] for k in CSV_COLUMNS})
        return buf.getvalue()
