"""Double-spend races: closed form, Monte Carlo, and full network simulation.

The race is the simple step model: every new block is the attacker's with
probability ``q`` and the honest network's otherwise. The attacker starts
``z`` blocks behind and succeeds on drawing level.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .simnet.config import AttackerSpec, InvalidConfig, Latency, Payment, SimConfig
from .simnet.engine import simulate

MODES = ("analytic", "monte_carlo", "full_sim")
# Walks whose remaining catch-up chance falls below this are scored as failures.
ABANDON_PROBABILITY = 1e-12
CSV_COLUMNS = ["q", "z", "trials", "successes", "estimate", "std_err", "analytic"]


def catchup_probability(q: float, z: int) -> float:
    """Chance an attacker ``z`` blocks behind ever draws level.

    1 when ``q >= 1/2``, else ``(q / (1 - q)) ** z``.
    """
    if not 0 <= q < 1:
        raise ValueError("q must lie in [0, 1)")
    if z < 0 or int(z) != z:
        raise ValueError("z must be a non-negative integer")
    if q >= 0.5:
        return 1.0
    return (q / (1 - q)) ** z


def abandon_lead(q: float) -> int | None:
    """Deficit at which catching up is less likely than ``ABANDON_PROBABILITY``."""
    if q >= 0.5:
        return None
    if q == 0:
        return 1
    return math.ceil(math.log(ABANDON_PROBABILITY) / math.log(q / (1 - q)))


@dataclass(frozen=True)
class AttackConfig:
    q: float
    z: int
    trials: int = 10_000
    seed: int = 0
    max_race_length: int = 10_000
    mode: str = "monte_carlo"

    def __post_init__(self) -> None:
        if not 0 <= self.q < 1:
            raise InvalidConfig("q", "attacker share must lie in [0, 1)")
        if self.z < 0:
            raise InvalidConfig("z", "confirmation depth must be non-negative")
        if self.trials < 1:
            raise InvalidConfig("trials", "need at least one trial")
        if self.max_race_length < 1:
            raise InvalidConfig("max_race_length", "must be positive")
        if self.mode not in MODES:
            raise InvalidConfig("mode", f"must be one of {', '.join(MODES)}")


@dataclass(frozen=True)
class AttackReport:
    q: float
    z: int
    mode: str
    trials: int
    successes: int
    estimate: float
    std_err: float
    analytic: float
    races: int
    mean_race_length: float
    truncated: int = 0

    def row(self) -> dict:
        return {
            "q": self.q,
            "z": self.z,
            "trials": self.trials,
            "successes": self.successes,
            "estimate": f"{self.estimate:.6g}",
            "std_err": f"{self.std_err:.6g}",
            "analytic": f"{self.analytic:.6g}",
        }


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, trial]))


def trial_seed(seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed, trial]).generate_state(1, np.uint64)[0])


def race(rng: np.random.Generator, q: float, z: int, max_steps: int,
         give_up: int | None) -> tuple[str, int]:
    """Run one race; return (outcome, steps) with outcome in
    {"success", "failure", "truncated"}."""
    if z <= 0:
        return "success", 0
    deficit, steps, chunk = z, 0, 64
    while steps < max_steps:
        n = min(chunk, max_steps - steps)
        moves = np.where(rng.random(n) < q, -1, 1)
        path = deficit + np.cumsum(moves)
        hit = np.flatnonzero(path <= 0)
        lost = np.flatnonzero(path >= z + give_up) if give_up is not None else hit[:0]
        first_hit = hit[0] if hit.size else n
        first_lost = lost[0] if lost.size else n
        if first_hit < n and first_hit < first_lost:
            return "success", steps + int(first_hit) + 1
        if first_lost < n:
            return "failure", steps + int(first_lost) + 1
        deficit = int(path[-1])
        steps += n
        chunk = min(chunk * 2, 4096)
    return ("truncated" if q >= 0.5 else "failure"), steps


def _race_block(q: float, z: int, seed: int, start: int, stop: int, max_steps: int) -> tuple[int, int, int]:
    give_up = abandon_lead(q)
    successes = truncated = total_steps = 0
    for t in range(start, stop):
        outcome, steps = race(trial_rng(seed, t), q, z, max_steps, give_up)
        total_steps += steps
        if outcome == "success":
            successes += 1
        elif outcome == "truncated":
            truncated += 1
    return successes, truncated, total_steps


def _blocks(trials: int, workers: int) -> list[tuple[int, int]]:
    size = math.ceil(trials / workers)
    return [(lo, min(lo + size, trials)) for lo in range(0, trials, size)]


def _full_sim_trial(cfg: AttackConfig, t: int) -> tuple[bool, int]:
    sim = simulate(full_sim_scenario(cfg, trial_seed(cfg.seed, t)))
    rec = sim.records[0]
    rec.final_confirmations = sim.nodes[0].store.confirmations(rec.txid) if rec.txid else 0
    state = sim.nodes[2].attack
    ok = bool(state and state.published) and rec.final_confirmations == 0 \
        and rec.max_confirmations >= max(cfg.z, 1)
    return ok, len(state.private) if state else 0


def full_sim_scenario(cfg: AttackConfig, seed: int) -> SimConfig:
    """Victim (node 0) and one more honest node share 1 - q; node 2 is the
    attacker, owns the genesis coins, and pays the victim 30 at t = 1 s
    while secretly mining a branch that sends the same coins back to itself."""
    honest = (1 - cfg.q) / 2
    interval = 600.0
    return SimConfig(
        seed=seed,
        node_count=3,
        hash_shares=(honest, honest, cfg.q),
        mean_block_interval=interval,
        latency=Latency("uniform", min=0.5, max=2.0),
        block_reward=50,
        mining_mode="poisson",
        duration=interval * cfg.max_race_length,
        workload=(Payment(1.0, 2, 0, 30, 1),),
        genesis_owner=2,
        settle_limit=0.0,
        attacker=AttackerSpec(node=2, payment=0, confirmations=cfg.z,
                              give_up_lead=abandon_lead(cfg.q), stop_when_resolved=True),
    )


def run_attack(config: AttackConfig, *, workers: int = 1) -> AttackReport:
    """Estimate the double-spend success probability for ``config``.

    Each trial draws from its own generator seeded by (seed, trial index), so
    the result does not depend on ``workers``.
    """
    analytic = catchup_probability(config.q, config.z)
    if config.mode == "analytic":
        return AttackReport(config.q, config.z, "analytic", config.trials, 0, analytic, 0.0,
                            analytic, 0, 0.0)
    n = config.trials
    if config.mode == "monte_carlo":
        blocks = _blocks(n, max(1, workers))
        args = [(config.q, config.z, config.seed, lo, hi, config.max_race_length) for lo, hi in blocks]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(_race_block, *zip(*args)))
        else:
            parts = [_race_block(*a) for a in args]
        successes = sum(p[0] for p in parts)
        truncated = sum(p[1] for p in parts)
        steps = sum(p[2] for p in parts)
    else:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_full_sim_trial, [config] * n, range(n)))
        else:
            results = [_full_sim_trial(config, t) for t in range(n)]
        successes = sum(ok for ok, _ in results)
        truncated = 0
        steps = sum(s for _, s in results)
    p = successes / n
    return AttackReport(config.q, config.z, config.mode, n, successes, p,
                        math.sqrt(p * (1 - p) / n), analytic, n, steps / n, truncated)


def sweep(qs, zs, *, trials: int, seed: int = 0, mode: str = "monte_carlo",
          max_race_length: int = 10_000, workers: int = 1) -> list[AttackReport]:
    return [
        run_attack(AttackConfig(q, z, trials, seed, max_race_length, mode), workers=workers)
        for q in qs
        for z in zs
    ]


def to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(r.row())
    return buf.getvalue()


def render_table(reports) -> str:
    rows = [CSV_COLUMNS] + [[str(r.row()[c]) for c in CSV_COLUMNS] for r in reports]
    widths = [max(len(row[i]) for row in rows) for i in range(len(CSV_COLUMNS))]
    lines = ["  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
