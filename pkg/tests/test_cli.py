import io
import json
import os
from pathlib import Path

import pytest

from powchain import crypto
from powchain.cli import main
from powchain.ledger.blockfile import iter_records, load_blocks

ROOT = Path(__file__).resolve().parents[1]
GOLDEN = Path(__file__).parent / "golden"


def cli(*argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], out)
    return code, out.getvalue()


@pytest.fixture(autouse=True)
def workspace(tmp_path, monkeypatch):
    monkeypatch.setenv("POWCHAIN_WORKSPACE", str(tmp_path / "ws"))
    return tmp_path / "ws"


@pytest.fixture
def demo_store(tmp_path):
    path = tmp_path / "demo.blk"
    code, _ = cli("demo", "walkthrough", "--difficulty", 8, "--out", path)
    assert code == 0
    return path


class TestGolden:
    def test_walkthrough(self):
        code, text = cli("demo", "walkthrough", "--difficulty", 8)
        assert code == 0
        assert text == (GOLDEN / "walkthrough_d8.txt").read_text()

    def test_sweep(self):
        code, text = cli("attack", "sweep", "--q", "0.1,0.3", "--z", "1-3", "--trials", 2000,
                         "--seed", 5)
        assert code == 0 and text == (GOLDEN / "sweep.txt").read_text()

    def test_keygen(self, tmp_path):
        code, text = cli("keygen", "--seed", "00ff", "--out", tmp_path / "k.keys")
        assert code == 0 and text == (GOLDEN / "keygen_00ff.txt").read_text()


def test_walkthrough_stages():
    code, text = cli("demo", "walkthrough", "--difficulty", 4)
    assert code == 0
    assert "ownership proof verified: True" in text
    assert "accepted into mempool" in text
    assert text.rstrip().endswith("Payment confirmed at depth 6; Bob hands over the bike")


def test_keygen_default_location(workspace):
    code, text = cli("keygen")
    assert code == 0
    keys = crypto.read_key_file(workspace / "wallet.keys")
    assert keys[0].public_hex == text.strip()
    assert os.stat(workspace / "wallet.keys").st_mode & 0o077 == 0


def test_keygen_appends(tmp_path):
    path = tmp_path / "k.keys"
    cli("keygen", "--seed", "01", "--out", path)
    cli("keygen", "--seed", "02", "--out", path)
    assert len(crypto.read_key_file(path)) == 2


def test_keygen_bad_seed():
    assert cli("keygen", "--seed", "xyz")[0] == 1


class TestChain:
    def test_verify_ok(self, demo_store):
        code, text = cli("chain", "verify", demo_store)
        assert code == 0 and text.startswith("OK 9 blocks")

    def test_verify_flipped_byte(self, demo_store):
        data = bytearray(demo_store.read_bytes())
        rec = list(iter_records(bytes(data)))[3]
        _, blocks = load_blocks(demo_store)
        data[rec.offset + 4 + 20] ^= 0x40
        demo_store.write_bytes(bytes(data))
        code, text = cli("chain", "verify", demo_store)
        assert code == 2
        assert text.startswith("FAILED block #3") and blocks[3].digest.hex() in text

    def test_inspect_summary(self, demo_store):
        code, text = cli("chain", "inspect", demo_store)
        info = json.loads(text)
        assert code == 0 and len(info["blocks"]) == 9 and info["difficulty_bits"] == 8

    def test_inspect_block_and_tx(self, demo_store):
        _, blocks = load_blocks(demo_store)
        b = blocks[3]
        code, text = cli("chain", "inspect", demo_store, "--block", b.digest.hex())
        assert code == 0 and json.loads(text)["height"] == 3
        tx = b.transactions[1]
        code, text = cli("chain", "inspect", demo_store, "--tx", tx.txid.hex())
        info = json.loads(text)
        assert code == 0 and info["confirmations"] == 6 and info["block"] == b.digest.hex()

    def test_inspect_missing(self, demo_store):
        assert cli("chain", "inspect", demo_store, "--block", "00" * 32)[0] == 2

    def test_verify_not_a_store(self, tmp_path):
        p = tmp_path / "junk.blk"
        p.write_bytes(b"hello")
        assert cli("chain", "verify", p)[0] == 2


class TestSimRun:
    @pytest.mark.parametrize("name", ["partition.yaml", "real_pow.yaml"])
    def test_sample_configs(self, tmp_path, name):
        out = tmp_path / "out"
        code, text = cli("sim", "run", ROOT / "configs" / name, "--out", out, "--event-log")
        assert code == 0
        report = json.loads(text)
        assert report["settled"] and len(set(report["tips"])) == 1
        for f in ("report.txt", "confirmations.csv", "chain.blk", "chain.blk.idx", "events.log"):
            assert (out / f).exists()
        assert cli("chain", "verify", out / "chain.blk")[0] == 0
        assert len((out / "events.log").read_text().splitlines()) == report["event_count"]

    def test_invalid_config_exit_2(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("format: powchain-sim/1\nhash: sha256\nnode_count: 0\n")
        assert cli("sim", "run", p)[0] == 2

    def test_missing_config_exit_1(self, tmp_path):
        assert cli("sim", "run", tmp_path / "nope.yaml")[0] == 1

    def test_default_output_in_workspace(self, workspace):
        assert cli("sim", "run", ROOT / "configs" / "partition.yaml")[0] == 0
        assert (workspace / "report.txt").exists()


class TestUsage:
    @pytest.mark.parametrize("argv", [
        [], ["frobnicate"], ["attack", "sweep", "--q", "0.1"], ["keygen", "--bogus"],
        ["attack", "sweep", "--q", "a", "--z", "1"], ["demo", "walkthrough", "--difficulty", "30"],
        ["attack", "sweep", "--q", "1.5", "--z", "1", "--trials", "10"],
    ])
    def test_exit_1(self, argv, capsys):
        assert cli(*argv)[0] == 1
        assert capsys.readouterr().err

    def test_help_exits_0(self):
        assert cli("--help")[0] == 0


def test_attack_csv(tmp_path):
    p = tmp_path / "t.csv"
    code, _ = cli("attack", "sweep", "--q", "0.2", "--z", "1,2", "--trials", 100, "--csv", p)
    assert code == 0
    assert p.read_text().splitlines()[0] == "q,z,trials,successes,estimate,std_err,analytic"
