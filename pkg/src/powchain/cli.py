"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 validation failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import attacklab, crypto
from .ledger import ChainVerificationError
from .ledger.blockfile import StoreFormatError, dump_block, load_blocks, verify_store, write_chain
from .simnet import InvalidConfig, SimConfig, simulate

WORKSPACE_ENV = "POWCHAIN_WORKSPACE"
EXIT_OK, EXIT_USAGE, EXIT_INVALID = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def workspace() -> Path:
    return Path(os.environ.get(WORKSPACE_ENV, "."))


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    """``1,2,5`` or ``1-6`` (inclusive)."""
    out = []
    try:
        for part in text.split(","):
            if "-" in part:
                lo, hi = part.split("-")
                out.extend(range(int(lo), int(hi) + 1))
            elif part:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers or ranges, got {text!r}")
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="powchain", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    kg = sub.add_parser("keygen", help="create a key pair and append it to a key file")
    kg.add_argument("--seed", help="hex seed for a reproducible key")
    kg.add_argument("--out", type=Path, help=f"key file (default: ${WORKSPACE_ENV}/wallet.keys)")

    sim = sub.add_parser("sim", help="network simulation")
    sim_sub = sim.add_subparsers(dest="action", required=True, parser_class=_Parser)
    run = sim_sub.add_parser("run", help="run a scenario config")
    run.add_argument("config", type=Path)
    run.add_argument("--out", type=Path, help="output directory (default: workspace)")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--event-log", action="store_true", help="also write the full event log")

    att = sub.add_parser("attack", help="double-spend experiments")
    att_sub = att.add_subparsers(dest="action", required=True, parser_class=_Parser)
    sw = att_sub.add_parser("sweep", help="success probability over a q x z grid")
    sw.add_argument("--q", type=_floats, required=True, help="attacker shares, e.g. 0.1,0.3")
    sw.add_argument("--z", type=_ints, required=True, help="confirmation depths, e.g. 1-6")
    sw.add_argument("--trials", type=int, default=10_000)
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("--mode", choices=attacklab.MODES, default="monte_carlo")
    sw.add_argument("--max-race-length", type=int, default=10_000)
    sw.add_argument("--workers", type=int, default=1)
    sw.add_argument("--csv", type=Path, help="also write the table as CSV")

    ch = sub.add_parser("chain", help="block store tools")
    ch_sub = ch.add_subparsers(dest="action", required=True, parser_class=_Parser)
    ins = ch_sub.add_parser("inspect", help="decode and print a block store")
    ins.add_argument("store", type=Path)
    which = ins.add_mutually_exclusive_group()
    which.add_argument("--block", help="hex digest of one block")
    which.add_argument("--tx", help="hex txid of one transaction")
    ver = ch_sub.add_parser("verify", help="replay the whole store from genesis")
    ver.add_argument("store", type=Path)

    demo = sub.add_parser("demo", help="scripted scenarios")
    demo_sub = demo.add_subparsers(dest="action", required=True, parser_class=_Parser)
    wt = demo_sub.add_parser("walkthrough", help="Alice pays Bob 30 coins")
    wt.add_argument("--difficulty", type=int, default=12)
    wt.add_argument("--out", type=Path, help="write the resulting chain to this store")
    return p


def cmd_keygen(args, out) -> int:
    seed = None
    if args.seed is not None:
        try:
            seed = bytes.fromhex(args.seed)
        except ValueError:
            raise UsageError("--seed must be hex")
    kp = crypto.generate_keypair(seed)
    path = args.out or workspace() / "wallet.keys"
    path.parent.mkdir(parents=True, exist_ok=True)
    crypto.write_key_file(path, [kp])
    print(kp.public_hex, file=out)
    return EXIT_OK


def cmd_sim_run(args, out) -> int:
    try:
        config = SimConfig.load(args.config)
    except InvalidConfig as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        raise UsageError(str(exc))
    sim = simulate(config, workers=args.workers, keep_log=args.event_log)
    report = sim.report()
    dest = args.out or workspace()
    dest.mkdir(parents=True, exist_ok=True)
    text = report.to_text()
    (dest / "report.txt").write_text(text)
    (dest / "confirmations.csv").write_text(report.to_csv())
    reference = sim.honest[0].store
    write_chain(dest / "chain.blk", reference.main_chain(),
                difficulty_bits=reference.difficulty_bits, reward=reference.reward)
    if sim.log is not None:
        (dest / "events.log").write_text("\n".join(sim.log) + "\n")
    out.write(text)
    problems = {n: p for n, p in sim.audit_nodes().items() if p}
    if problems:
        for node, items in problems.items():
            for item in items:
                print(f"node {node}: {item}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def cmd_attack_sweep(args, out) -> int:
    try:
        reports = attacklab.sweep(args.q, args.z, trials=args.trials, seed=args.seed, mode=args.mode,
                                  max_race_length=args.max_race_length, workers=args.workers)
    except InvalidConfig as exc:
        raise UsageError(str(exc))
    out.write(attacklab.render_table(reports))
    if args.csv:
        args.csv.write_text(attacklab.to_csv(reports))
    return EXIT_OK


def cmd_chain_inspect(args, out) -> int:
    try:
        header, blocks = load_blocks(args.store)
    except (OSError, StoreFormatError, ValueError) as exc:
        print(f"cannot read store: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.block:
        for b in blocks:
            if b.digest.hex() == args.block.lower():
                out.write(dump_block(b) + "\n")
                return EXIT_OK
        print(f"no block {args.block}", file=sys.stderr)
        return EXIT_INVALID
    if args.tx:
        tip_height = blocks[-1].height if blocks else 0
        for b in blocks:
            for tx in b.transactions:
                if tx.txid.hex() == args.tx.lower():
                    info = {"block": b.digest.hex(), "height": b.height,
                            "confirmations": tip_height - b.height + 1, **tx.to_dict()}
                    out.write(json.dumps(info, indent=2) + "\n")
                    return EXIT_OK
        print(f"no transaction {args.tx}", file=sys.stderr)
        return EXIT_INVALID
    summary = {
        "version": header.version,
        "difficulty_bits": header.difficulty_bits,
        "block_reward": header.reward,
        "blocks": [
            {"height": b.height, "digest": b.digest.hex(), "transactions": len(b.transactions)}
            for b in blocks
        ],
    }
    out.write(json.dumps(summary, indent=2) + "\n")
    return EXIT_OK


def cmd_chain_verify(args, out) -> int:
    try:
        header, blocks, utxo = verify_store(args.store)
    except ChainVerificationError as exc:
        print(f"FAILED {exc}", file=out)
        return EXIT_INVALID
    except (OSError, StoreFormatError) as exc:
        print(f"FAILED cannot read store: {exc}", file=out)
        return EXIT_INVALID
    print(f"OK {len(blocks)} blocks, tip {blocks[-1].digest.hex()}, "
          f"{len(utxo)} unspent outputs worth {utxo.total_value()}", file=out)
    return EXIT_OK


def cmd_demo_walkthrough(args, out) -> int:
    from .demo import walkthrough

    if not 0 <= args.difficulty <= 24:
        raise UsageError("--difficulty must be in [0, 24] for the demo")
    w = walkthrough(args.difficulty)
    for line in w.lines:
        print(line, file=out)
    if args.out:
        write_chain(args.out, w.store.main_chain(), difficulty_bits=args.difficulty, reward=w.store.reward)
        print(f"chain written to {args.out}", file=out)
    return EXIT_OK


COMMANDS = {
    ("keygen", None): cmd_keygen,
    ("sim", "run"): cmd_sim_run,
    ("attack", "sweep"): cmd_attack_sweep,
    ("chain", "inspect"): cmd_chain_inspect,
    ("chain", "verify"): cmd_chain_verify,
    ("demo", "walkthrough"): cmd_demo_walkthrough,
}


def main(argv: list[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handler = COMMANDS[(args.command, getattr(args, "action", None))]
    try:
        return handler(args, out)
    except UsageError as exc:
        print(f"powchain: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
