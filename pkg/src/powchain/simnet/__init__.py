"""Deterministic network simulator for the ledger."""
from .config import AttackerSpec, InvalidConfig, Latency, Partition, Payment, SimConfig
from .engine import (
    BlockBroadcast,
    MineSuccess,
    PartitionHeal,
    SimEvent,
    Simulation,
    SubmitPayment,
    TxBroadcast,
    run,
    simulate,
)
from .report import SimReport, TxRecord
