import json

import pytest

from phonevote.cli import main

CONFIG = {"n_voters": 40, "corpus_size": 50, "replications": 3, "n_authorities": 2, "seeds": {"master": 9}}


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(CONFIG))
    return p


def test_run_and_report(config, tmp_path, capsys):
    out = tmp_path / "r.jsonl"
    assert main(["run", "--config", str(config), "--out", str(out)]) == 0
    rows = [json.loads(x) for x in out.read_text().splitlines()]
    assert [r["replication"] for r in rows] == [0, 1, 2]
    capsys.readouterr()
    assert main(["report", "--in", str(out)]) == 0
    text = capsys.readouterr().out
    assert "replications: 3" in text and "flips: 0" in text
    assert "commitments: all verified" in text


def test_run_is_byte_identical(config, tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    main(["run", "--config", str(config), "--out", str(a)])
    main(["run", "--config", str(config), "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_sweep_writes_jsonl_and_csv(config, tmp_path):
    out = tmp_path / "s.jsonl"
    assert main(["sweep", "--config", str(config), "--axis", "eer", "--values", "0.01,0.2",
                 "--out", str(out), "--replications", "2"]) == 0
    assert len(out.read_text().splitlines()) == 2
    csv = (tmp_path / "s.csv").read_text().splitlines()
    assert csv[0] == "axis_value,flip_prob,flip_se,mean_cost,detect_prob"
    assert len(csv) == 3


def test_commit_then_verify(capsys):
    assert main(["commit", "--payload", "312.500000"]) == 0
    rec = json.loads(capsys.readouterr().out)
    args = ["verify-commit", "--digest", rec["digest"], "--nonce", rec["nonce"]]
    assert main(args + ["--payload", "312.500000"]) == 0
    assert capsys.readouterr().out.strip() == "valid"
    assert main(args + ["--payload", "312.500001"]) == 1
    assert capsys.readouterr().out.strip() == "invalid"
    assert main(args[:2] + ["zz", "--nonce", rec["nonce"], "--payload", "x"]) == 2


def test_count_domain_is_separate(capsys):
    main(["commit", "--payload", "p", "--domain", "count"])
    rec = json.loads(capsys.readouterr().out)
    assert rec["domain"] == "count"
    assert main(["verify-commit", "--digest", rec["digest"], "--nonce", rec["nonce"], "--payload", "p"]) == 1


def test_bad_config_exits_2(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"eer": 2, "nope": 1}))
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "eer" in err and "nope" in err


def test_report_missing_or_corrupt(tmp_path, capsys):
    assert main(["report", "--in", str(tmp_path / "missing.jsonl")]) == 2
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json\n")
    assert main(["report", "--in", str(bad)]) == 2
    assert "bad.jsonl:1" in capsys.readouterr().err
