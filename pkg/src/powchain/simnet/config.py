"""Scenario description for the network simulator and its YAML file form."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .. import HASH_ALGORITHM
from ..miner import MAX_DIFFICULTY_BITS

CONFIG_FORMAT = "powchain-sim/1"
TICKS_PER_SECOND = 1000


class InvalidConfig(ValueError):
    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass(frozen=True)
class Latency:
    model: str = "fixed"  # "fixed" | "uniform"
    value: float = 0.0
    min: float = 0.0
    max: float = 0.0


@dataclass(frozen=True)
class Partition:
    start: float
    end: float
    group: tuple[int, ...]  # one side; the complement is the other


@dataclass(frozen=True)
class Payment:
    time: float
    sender: int
    receiver: int
    amount: int
    fee: int = 1


@dataclass(frozen=True)
class AttackerSpec:
    """Withhold a private branch double-spending workload item ``payment``.

    The branch is published once it is longer than the public chain and the
    payment sits at depth >= ``confirmations`` there. The attacker abandons
    the attempt when the public chain leads by ``give_up_lead`` blocks.
    """

    node: int
    payment: int
    confirmations: int = 1
    give_up_lead: int | None = None
    stop_when_resolved: bool = False


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    node_count: int = 1
    hash_shares: tuple[float, ...] = ()
    mean_block_interval: float = 600.0
    latency: Latency = field(default_factory=Latency)
    partitions: tuple[Partition, ...] = ()
    block_reward: int = 50
    difficulty_bits: int = 12
    mining_mode: str = "poisson"  # "poisson" | "real_pow"
    duration: float = 6000.0
    workload: tuple[Payment, ...] = ()
    genesis_owner: int | None = 0
    max_block_txs: int = 1000
    settle_limit: float = 60000.0
    attacker: AttackerSpec | None = None

    def __post_init__(self) -> None:
        if not self.hash_shares:
            object.__setattr__(self, "hash_shares", tuple([1.0 / self.node_count] * self.node_count)
                               if self.node_count >= 1 else ())
        self.validate()

    def validate(self) -> None:
        if not 0 <= self.seed < 1 << 64:
            raise InvalidConfig("seed", "must be a 64-bit unsigned integer")
        if self.node_count < 1:
            raise InvalidConfig("node_count", "must be at least 1")
        if len(self.hash_shares) != self.node_count:
            raise InvalidConfig("hash_shares", f"expected {self.node_count} weights")
        if any(s < 0 or not math.isfinite(s) for s in self.hash_shares):
            raise InvalidConfig("hash_shares", "weights must be non-negative")
        if abs(sum(self.hash_shares) - 1.0) > 1e-9:
            raise InvalidConfig("hash_shares", "weights must sum to 1")
        if not self.mean_block_interval > 0:
            raise InvalidConfig("mean_block_interval", "must be positive")
        if not self.duration > 0:
            raise InvalidConfig("duration", "must be positive")
        lat = self.latency
        if lat.model == "fixed":
            if lat.value < 0:
                raise InvalidConfig("latency", "fixed latency must be non-negative")
        elif lat.model == "uniform":
            if not 0 <= lat.min <= lat.max:
                raise InvalidConfig("latency", "uniform needs 0 <= min <= max")
        else:
            raise InvalidConfig("latency", f"unknown model {lat.model!r}")
        for i, p in enumerate(self.partitions):
            if not 0 <= p.start < p.end:
                raise InvalidConfig(f"partitions[{i}]", "needs 0 <= start < end")
            if not p.group or any(not 0 <= n < self.node_count for n in p.group):
                raise InvalidConfig(f"partitions[{i}]", "group must list valid node indices")
        if self.block_reward < 1:
            raise InvalidConfig("block_reward", "must be at least 1")
        if not 0 <= self.difficulty_bits <= MAX_DIFFICULTY_BITS:
            raise InvalidConfig("difficulty_bits", f"must be in [0, {MAX_DIFFICULTY_BITS}]")
        if self.mining_mode not in ("poisson", "real_pow"):
            raise InvalidConfig("mining_mode", "must be 'poisson' or 'real_pow'")
        for i, w in enumerate(self.workload):
            if not 0 <= w.time < self.duration:
                raise InvalidConfig(f"workload[{i}]", "time must lie in [0, duration)")
            if not (0 <= w.sender < self.node_count and 0 <= w.receiver < self.node_count):
                raise InvalidConfig(f"workload[{i}]", "unknown node")
            if w.amount < 1 or w.fee < 0:
                raise InvalidConfig(f"workload[{i}]", "amount must be positive and fee non-negative")
        if self.genesis_owner is not None and not 0 <= self.genesis_owner < self.node_count:
            raise InvalidConfig("genesis_owner", "unknown node")
        if self.max_block_txs < 0:
            raise InvalidConfig("max_block_txs", "must be non-negative")
        if self.settle_limit < 0:
            raise InvalidConfig("settle_limit", "must be non-negative")
        a = self.attacker
        if a is not None:
            if not 0 <= a.node < self.node_count:
                raise InvalidConfig("attacker.node", "unknown node")
            if not 0 <= a.payment < len(self.workload):
                raise InvalidConfig("attacker.payment", "must index a workload item")
            if self.workload[a.payment].sender != a.node:
                raise InvalidConfig("attacker.payment", "payment must be sent by the attacker")
            if a.confirmations < 0:
                raise InvalidConfig("attacker.confirmations", "must be non-negative")

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hash_shares"] = list(self.hash_shares)
        d["partitions"] = [dict(p, group=list(p["group"])) for p in d["partitions"]]
        d["workload"] = [
            {"time": w.time, "from": w.sender, "to": w.receiver, "amount": w.amount, "fee": w.fee}
            for w in self.workload
        ]
        return {"format": CONFIG_FORMAT, "hash": HASH_ALGORITHM, **d}

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    @classmethod
    def from_dict(cls, raw: dict) -> "SimConfig":
        raw = dict(raw)
        fmt = raw.pop("format", None)
        if fmt != CONFIG_FORMAT:
            raise InvalidConfig("format", f"expected {CONFIG_FORMAT!r}, got {fmt!r}")
        algo = raw.pop("hash", None)
        if algo != HASH_ALGORITHM:
            raise InvalidConfig("hash", f"only {HASH_ALGORITHM!r} is supported")
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise InvalidConfig(sorted(unknown)[0], "unknown field")
        kw = dict(raw)
        try:
            if "hash_shares" in kw:
                kw["hash_shares"] = tuple(float(s) for s in kw["hash_shares"])
            if "latency" in kw:
                kw["latency"] = Latency(**kw["latency"])
            if "partitions" in kw:
                kw["partitions"] = tuple(
                    Partition(p["start"], p["end"], tuple(p["group"])) for p in kw["partitions"] or ()
                )
            if "workload" in kw:
                kw["workload"] = tuple(
                    Payment(w["time"], w["from"], w["to"], w["amount"], w.get("fee", 1))
                    for w in kw["workload"] or ()
                )
            if kw.get("attacker") is not None:
                kw["attacker"] = AttackerSpec(**kw["attacker"])
        except (TypeError, KeyError) as exc:
            raise InvalidConfig("config", f"malformed entry: {exc}") from exc
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path) -> "SimConfig":
        with open(path) as fh:
            raw = yaml.safe_load(fh)
        if not isinstance(raw, dict):
            raise InvalidConfig("config", "top level must be a mapping")
        return cls.from_dict(raw)

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))


def seconds_to_ticks(seconds: float) -> int:
    return round(seconds * TICKS_PER_SECOND)
