"""Seeded discrete-event simulation of a network of mining nodes.

Time is an integer tick count (milliseconds). Events are ordered by
(time, sequence number), where the sequence number is assigned when the
event is created; this makes first-seen fork choice well defined.
"""
from __future__ import annotations

import hashlib
import heapq
import itertools
import math
from collections import defaultdict
from concurrent.futures import Executor
from dataclasses import dataclass, field

import numpy as np

from ..crypto import Digest
from ..ledger.chain import ChainStore, TipUpdate, audit
from ..ledger.errors import UnknownOutpoint, UnknownParent, ValidationError
from ..ledger.model import GENESIS_KEY, Block, Transaction, TxOutput, coinbase, make_block
from ..miner import Mempool, MiningJob, assemble_template, mine
from .config import TICKS_PER_SECOND, SimConfig, seconds_to_ticks
from .report import SimReport, TxRecord
from .wallet import InsufficientFunds, Wallet

DEFERRED_LIMIT = 1000


# -- event payloads --------------------------------------------------------

@dataclass(frozen=True)
class TxBroadcast:
    tx: Transaction
    origin: int


@dataclass(frozen=True)
class BlockBroadcast:
    block: Block
    origin: int


@dataclass(frozen=True)
class MineSuccess:
    node: int
    job: int = 0
    block: Block | None = None  # pre-ground block in real_pow mode


@dataclass(frozen=True)
class SubmitPayment:
    index: int


@dataclass(frozen=True)
class PartitionHeal:
    index: int


@dataclass(order=True)
class SimEvent:
    time: int
    seq: int
    destination: int = field(compare=False)
    payload: object = field(compare=False)

    def log_line(self) -> str:
        p = self.payload
        if isinstance(p, TxBroadcast):
            kind, ident = "tx", p.tx.txid.hex()
        elif isinstance(p, BlockBroadcast):
            kind, ident = "block", p.block.digest.hex()
        elif isinstance(p, MineSuccess):
            kind, ident = "mine", p.block.digest.hex() if p.block is not None else str(p.job)
        elif isinstance(p, SubmitPayment):
            kind, ident = "submit", str(p.index)
        else:
            kind, ident = "heal", str(p.index)
        return f"{self.time} {self.seq} {kind} {self.destination} {ident}"


# -- node state ------------------------------------------------------------

@dataclass
class AttackState:
    base: Digest
    private_tip: Digest
    conflict: Transaction
    conflict_fee: int
    payment_txid: Digest
    private: set = field(default_factory=set)
    published: bool = False
    abandoned: bool = False
    publish_time: int | None = None


@dataclass
class NodeState:
    index: int
    store: ChainStore
    mempool: Mempool
    wallet: Wallet
    mining_key: bytes
    share: float
    deferred: list = field(default_factory=list)
    job: int = 0
    job_parent: Digest | None = None
    blocks_mined: int = 0
    attack: AttackState | None = None

    @property
    def withholding(self) -> bool:
        a = self.attack
        return a is not None and not a.published and not a.abandoned

    def mining_parent(self) -> Digest:
        return self.attack.private_tip if self.withholding else self.store.tip


class Simulation:
    """One simulated network. ``run()`` drives the event loop; ``step()``
    processes a single event and returns the follow-up events it schedules."""

    def __init__(self, config: SimConfig, *, workers: int = 1, executor: Executor | None = None,
                 keep_log: bool = False):
        self.config = config
        self.workers = workers
        self.executor = executor
        self.rng = np.random.default_rng(config.seed)
        self.now = 0
        self.duration = seconds_to_ticks(config.duration)
        self.interval_ticks = config.mean_block_interval * TICKS_PER_SECOND
        self.difficulty = config.difficulty_bits if config.mining_mode == "real_pow" else 0
        self._seq = itertools.count()
        self.queue: list[SimEvent] = []
        self.blocks_in_flight = 0
        self.link_queues: dict[tuple[int, int], list] = defaultdict(list)
        self.log_hash = hashlib.sha256()
        self.log: list[str] | None = [] if keep_log else None
        self.event_count = 0
        self.mined: dict[Digest, tuple[int, int]] = {}  # digest -> (height, miner)
        self.reorgs: list[tuple[int, int, int]] = []  # (time, node, depth)
        self.orphans_buffered = 0
        self.dropped_txs = 0
        self.rejected_blocks = 0
        self.records: list[TxRecord] = []
        self.record_by_txid: dict[Digest, TxRecord] = {}
        self.settled = False
        self.nodes = [self._make_node(i) for i in range(config.node_count)]

    def _make_node(self, i: int) -> NodeState:
        wallet = Wallet(self.config.seed, i)
        key = wallet.fresh().public_key
        if self.config.genesis_owner == i:
            wallet.add(GENESIS_KEY)
        store = ChainStore(difficulty_bits=self.difficulty, reward=self.config.block_reward)
        return NodeState(i, store, Mempool(), wallet, key, self.config.hash_shares[i])

    @property
    def honest(self) -> list[NodeState]:
        a = self.config.attacker
        return [n for n in self.nodes if a is None or n.index != a.node]

    # -- scheduling ------------------------------------------------------

    def event(self, time: int, destination: int, payload) -> SimEvent:
        return SimEvent(time, next(self._seq), destination, payload)

    def push(self, ev: SimEvent) -> None:
        if isinstance(ev.payload, BlockBroadcast):
            self.blocks_in_flight += 1
        heapq.heappush(self.queue, ev)

    def _latency(self) -> int:
        lat = self.config.latency
        if lat.model == "fixed":
            return seconds_to_ticks(lat.value)
        return seconds_to_ticks(float(self.rng.uniform(lat.min, lat.max)))

    def _blocked(self, a: int, b: int, t: int) -> bool:
        for p in self.config.partitions:
            if seconds_to_ticks(p.start) <= t < seconds_to_ticks(p.end):
                if (a in p.group) != (b in p.group):
                    return True
        return False

    def broadcast(self, origin: int, payload) -> list[SimEvent]:
        out = []
        for n in self.nodes:
            if n.index == origin:
                continue
            if self._blocked(origin, n.index, self.now):
                self.link_queues[(origin, n.index)].append(payload)
            else:
                out.append(self.event(self.now + self._latency(), n.index, payload))
        return out

    def _next_poisson(self, node: NodeState) -> list[SimEvent]:
        if node.share <= 0:
            return []
        wait = self.rng.exponential(self.interval_ticks / node.share)
        return [self.event(self.now + max(1, math.ceil(wait)), node.index, MineSuccess(node.index))]

    def _start_job(self, node: NodeState, force: bool = False) -> list[SimEvent]:
        """real_pow: grind a block on the node's mining parent now and schedule
        its discovery after the simulated time those hashes take."""
        parent = node.mining_parent()
        if node.share <= 0 or (parent == node.job_parent and not force):
            return []
        node.job += 1
        node.job_parent = parent
        template = self._template(node)
        outcome = mine(MiningJob(template.header), self.difficulty,
                       workers=self.workers, executor=self.executor)
        block = template.with_nonce(outcome.found)
        hash_rate = node.share * (2 ** self.difficulty) / self.interval_ticks
        delay = max(1, math.ceil(outcome.trials / hash_rate))
        return [self.event(self.now + delay, node.index, MineSuccess(node.index, node.job, block))]

    def _template(self, node: NodeState) -> Block:
        cfg = self.config
        if not node.withholding:
            return assemble_template(node.mempool, node.store, cfg.block_reward, node.mining_key,
                                     cfg.max_block_txs)
        a = node.attack
        parent = node.store.blocks[a.private_tip]
        txs, fee = [], 0
        if a.conflict.txid not in {tx.txid for b in node.store.branch(a.private_tip, a.base)
                                   for tx in b.transactions}:
            txs, fee = [a.conflict], a.conflict_fee
        cb = coinbase(cfg.block_reward + fee, node.mining_key, parent.height + 1)
        return make_block(parent.digest, parent.height + 1, [cb, *txs], self.difficulty)

    # -- event handling --------------------------------------------------

    def step(self, ev: SimEvent) -> list[SimEvent]:
        self.now = ev.time
        p = ev.payload
        if isinstance(p, BlockBroadcast):
            return self._on_block(self.nodes[ev.destination], p.block)
        if isinstance(p, TxBroadcast):
            return self._on_tx(self.nodes[ev.destination], p.tx)
        if isinstance(p, MineSuccess):
            return self._on_mine(self.nodes[ev.destination], p)
        if isinstance(p, SubmitPayment):
            return self._on_submit(p.index)
        if isinstance(p, PartitionHeal):
            return self._on_heal()
        raise TypeError(f"unknown payload {p!r}")

    def _on_tx(self, node: NodeState, tx: Transaction) -> list[SimEvent]:
        try:
            node.mempool.submit(tx, node.store.utxo)
        except UnknownOutpoint:
            # Probably funded by a block this node has not seen yet.
            if len(node.deferred) < DEFERRED_LIMIT and tx not in node.deferred:
                node.deferred.append(tx)
        except ValidationError:
            self.dropped_txs += 1
        return []

    def _on_block(self, node: NodeState, block: Block) -> list[SimEvent]:
        try:
            update = node.store.apply_block(block)
        except UnknownParent:
            self.orphans_buffered += 1
            return []
        except ValidationError:
            self.rejected_blocks += 1
            return []
        return self._after_update(node, update)

    def _on_mine(self, node: NodeState, p: MineSuccess) -> list[SimEvent]:
        if self.config.mining_mode == "real_pow":
            if p.job != node.job:
                return []  # stale: the node moved on before this search finished
            block = p.block
            follow: list[SimEvent] = []
        else:
            block = self._template(node)
            follow = self._next_poisson(node)
        update = node.store.apply_block(block)
        node.blocks_mined += 1
        self.mined[block.digest] = (block.height, node.index)
        if node.withholding:
            a = node.attack
            a.private_tip = block.digest
            a.private.add(block.digest)
        else:
            follow += self.broadcast(node.index, BlockBroadcast(block, node.index))
        return follow + self._after_update(node, update)

    def _after_update(self, node: NodeState, update: TipUpdate) -> list[SimEvent]:
        out: list[SimEvent] = []
        if update.kind != "unchanged":
            if update.kind == "reorganized":
                self.reorgs.append((self.now, node.index, update.reorg_depth))
            node.mempool.resync(node.store.utxo, update)
            if node.deferred:
                retry, node.deferred = node.deferred, []
                for tx in retry:
                    self._on_tx(node, tx)
            self._track_confirmations(node)
        if node.attack is not None and node.withholding:
            out += self._check_attack(node)
        if self.config.mining_mode == "real_pow":
            out += self._start_job(node)
        return out

    def _track_confirmations(self, node: NodeState) -> None:
        for rec in self.records:
            if rec.receiver != node.index or rec.txid is None:
                continue
            c = node.store.confirmations(rec.txid)
            rec.observe(c, self.now)

    def _on_submit(self, index: int) -> list[SimEvent]:
        cfg = self.config
        w = cfg.workload[index]
        sender = self.nodes[w.sender]
        recipient = self.nodes[w.receiver].wallet.fresh().public_key
        rec = TxRecord(index, w.sender, w.receiver, w.amount, w.fee, self.now)
        self.records.append(rec)
        try:
            tx = sender.wallet.build_payment(sender.store.utxo, sender.mempool, recipient, w.amount, w.fee)
        except InsufficientFunds:
            rec.status = "unfunded"
            return []
        rec.txid = tx.txid
        rec.status = "submitted"
        self.record_by_txid[tx.txid] = rec
        out: list[SimEvent] = []
        a = cfg.attacker
        if a is not None and index == a.payment:
            out += self._start_attack(sender, tx)
        else:
            sender.mempool.submit(tx, sender.store.utxo)
            self._track_confirmations(self.nodes[w.receiver])
        out += self.broadcast(sender.index, TxBroadcast(tx, sender.index))
        return out

    def _on_heal(self) -> list[SimEvent]:
        out = []
        for (a, b), pending in sorted(self.link_queues.items()):
            if pending and not self._blocked(a, b, self.now):
                self.link_queues[(a, b)] = []
                for payload in pending:
                    out.append(self.event(self.now + self._latency(), b, payload))
        return out

    # -- attacker --------------------------------------------------------

    def _start_attack(self, node: NodeState, payment: Transaction) -> list[SimEvent]:
        total_in = sum(node.store.utxo.get(i.outpoint).amount for i in payment.inputs)
        fee = self.config.workload[self.config.attacker.payment].fee
        conflict = node.wallet.sign(Transaction(
            tuple(i.__class__(i.source_txid, i.source_index, i.spender_key) for i in payment.inputs),
            (TxOutput(total_in - fee, node.wallet.fresh().public_key),),
        ))
        tip = node.store.tip
        node.attack = AttackState(tip, tip, conflict, fee, payment.txid)
        if self.config.mining_mode == "real_pow":
            return self._start_job(node, force=True)
        return []

    def _public_tip(self, node: NodeState) -> Block:
        store, a = node.store, node.attack
        best = store.blocks[a.base]
        for d in store.leaves():
            b = store.blocks[d]
            while b.digest in a.private:
                b = store.blocks[b.prev_digest]
            if b.height > best.height or (b.height == best.height and store.arrival[b.digest] < store.arrival[best.digest]):
                best = b
        return best

    def _check_attack(self, node: NodeState) -> list[SimEvent]:
        a, store = node.attack, node.store
        spec = self.config.attacker
        public = self._public_tip(node)
        private_height = store.blocks[a.private_tip].height
        depth = 0
        b = public
        while b.height > store.blocks[a.base].height:
            if any(tx.txid == a.payment_txid for tx in b.transactions):
                depth = public.height - b.height + 1
                break
            b = store.blocks[b.prev_digest]
        if private_height > public.height and depth >= spec.confirmations:
            a.published = True
            a.publish_time = self.now
            out = []
            for block in store.branch(a.private_tip, a.base):
                out += self.broadcast(node.index, BlockBroadcast(block, node.index))
            node.mempool.resync(store.utxo)
            return out
        if spec.give_up_lead is not None and public.height - private_height >= spec.give_up_lead:
            a.abandoned = True
            node.mempool.resync(store.utxo)
        return []

    def attack_resolved(self) -> bool:
        a = self.config.attacker
        if a is None:
            return False
        state = self.nodes[a.node].attack
        if state is None:
            return False
        return state.abandoned or (state.published and self.blocks_in_flight == 0)

    # -- main loop -------------------------------------------------------

    def converged(self) -> bool:
        if self.blocks_in_flight or any(self.link_queues.values()):
            return False
        tips = {n.store.tip for n in self.honest}
        return len(tips) == 1

    def initial_events(self) -> list[SimEvent]:
        cfg = self.config
        out = []
        for i, w in enumerate(cfg.workload):
            out.append(self.event(seconds_to_ticks(w.time), w.sender, SubmitPayment(i)))
        for i, p in enumerate(cfg.partitions):
            out.append(self.event(seconds_to_ticks(p.end), -1, PartitionHeal(i)))
        for node in self.nodes:
            if cfg.mining_mode == "poisson":
                out += self._next_poisson(node)
            else:
                out += self._start_job(node)
        return out

    def run(self) -> SimReport:
        """Process events up to ``duration``; then keep going (up to
        ``settle_limit`` more seconds) until honest nodes agree on one tip."""
        cfg = self.config
        hard_stop = self.duration + seconds_to_ticks(cfg.settle_limit)
        for ev in self.initial_events():
            self.push(ev)
        while self.queue:
            ev = self.queue[0]
            if ev.time > self.duration:
                if self.converged():
                    self.settled = True
                    break
                if ev.time > hard_stop:
                    break
            heapq.heappop(self.queue)
            if isinstance(ev.payload, BlockBroadcast):
                self.blocks_in_flight -= 1
            line = ev.log_line()
            self.log_hash.update(line.encode() + b"\n")
            if self.log is not None:
                self.log.append(line)
            self.event_count += 1
            for follow in self.step(ev):
                self.push(follow)
            if cfg.attacker is not None and cfg.attacker.stop_when_resolved and self.attack_resolved():
                self.settled = self.converged()
                break
        else:
            self.settled = self.converged()
        return self.report()

    def report(self) -> SimReport:
        for rec in self.records:
            if rec.txid is not None:
                rec.final_confirmations = self.nodes[rec.receiver].store.confirmations(rec.txid)
        reference = self.honest[0].store if self.honest else self.nodes[0].store
        heights: dict[int, int] = defaultdict(int)
        for h, _ in self.mined.values():
            heights[h] += 1
        stale = sum(1 for d in self.mined if not reference.on_main_chain(d))
        attack = None
        if self.config.attacker is not None:
            st = self.nodes[self.config.attacker.node].attack
            attack = {
                "started": st is not None,
                "published": bool(st and st.published),
                "abandoned": bool(st and st.abandoned),
                "publish_time": None if st is None or st.publish_time is None
                else st.publish_time / TICKS_PER_SECOND,
                "private_blocks": len(st.private) if st else 0,
            }
        return SimReport(
            config_digest=self.config.digest(),
            seed=self.config.seed,
            end_time=self.now / TICKS_PER_SECOND,
            settled=self.settled,
            tips=[n.store.tip.hex() for n in self.nodes],
            heights=[n.store.height for n in self.nodes],
            blocks_mined=[n.blocks_mined for n in self.nodes],
            fork_count=sum(1 for c in heights.values() if c > 1),
            reorg_count=len(self.reorgs),
            max_reorg_depth=max((d for _, _, d in self.reorgs), default=0),
            orphaned_blocks=stale,
            buffered_out_of_order=self.orphans_buffered,
            dropped_transactions=self.dropped_txs,
            rejected_blocks=self.rejected_blocks + sum(n.store.rejected for n in self.nodes),
            transactions=self.records,
            attack=attack,
            event_count=self.event_count,
            event_log_digest=self.log_hash.hexdigest(),
        )

    def audit_nodes(self) -> dict[int, list[str]]:
        return {n.index: audit(n.store) for n in self.nodes}


def run(config: SimConfig, *, workers: int = 1, keep_log: bool = False) -> SimReport:
    """Run one scenario to completion and return its report."""
    return simulate(config, workers=workers, keep_log=keep_log).report()


def simulate(config: SimConfig, *, workers: int = 1, keep_log: bool = False) -> Simulation:
    """Like ``run`` but return the finished ``Simulation`` for inspection."""
    if workers > 1 and config.mining_mode == "real_pow":
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            sim = Simulation(config, workers=workers, executor=pool, keep_log=keep_log)
            sim.run()
            return sim
    sim = Simulation(config, workers=workers, keep_log=keep_log)
    sim.run()
    return sim
