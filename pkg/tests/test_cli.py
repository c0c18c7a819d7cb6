import json

import pytest

from steinchi import bounds, io
from steinchi.cli import main
from steinchi.statcore import RankMatrix


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_stat_examples(tmp_path, capsys):
    ranks = tmp_path / "ranks.csv"
    ranks.write_text("t1,t2,t3\n1,2,3\n")
    assert run(capsys, "stat", "--ranks", str(ranks))[:2] == (0, "friedman=2.0\n")
    assert run(capsys, "stat", "--cells", "3,1", "--probs", "0.5,0.5", "--lam", "1")[:2] == (0, "pd=1.0\n")
    code, out, _ = run(capsys, "stat", "--cells", "3,1", "--lam", "0")
    assert code == 0 and out.startswith("pd=1.046496")
    counts = tmp_path / "counts.csv"
    counts.write_text("1,0\n1,0\n0,1\n1,0\n")
    assert run(capsys, "stat", "--counts", str(counts), "--probs", "0.5,0.5")[:2] == (0, "pearson=1.0\n")


def test_stat_parse_error(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2,3\n1,x,3\n")
    code, _, err = run(capsys, "stat", "--ranks", str(bad))
    assert code == 2 and "row 2" in err
    assert run(capsys, "stat", "--ranks", str(tmp_path / "missing.csv"))[0] == 2
    with pytest.raises(SystemExit) as exc:
        main(["nonsense"])
    assert exc.value.code == 2


def test_read_ranks_header(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("a,b\n2,1\n1,2\n")
    assert isinstance(io.read_ranks(path), RankMatrix)


def test_cov_moments_dist_bound(tmp_path, capsys):
    code, out, _ = run(capsys, "cov", "--r", "3")
    assert code == 0 and "2/3,-1/3,-1/3" in out
    code, out, _ = run(capsys, "moments", "--r", "3", "--n", "2")
    assert code == 0 and "E W^4 (n=2),1,1" in out
    code, out, _ = run(capsys, "dist", "--r", "2", "--n", "2")
    assert code == 0 and out.splitlines() == ["value,probability", "0,0.5", "2,0.5"]
    code, out, _ = run(capsys, "bound", "--r", "3", "--n", "100", "--out", str(tmp_path))
    assert code == 0 and "393550.65" in out
    assert (tmp_path / "bound.csv").exists()
    assert run(capsys, "bound", "--which", "zero_third", "--model", "pearson", "--probs", "0.25,0.75")[0] == 2


def test_resource_cap_exit(capsys):
    assert run(capsys, "dist", "--r", "5", "--n", "512")[0] == 3


def _config(tmp_path, body):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(body))
    return str(path)


def test_rate_synthetic_fixture(tmp_path, capsys):
    cfg = _config(tmp_path, {"deltas": [[n, 7 / n] for n in (8, 16, 32, 64, 128)], "beta_window": [0.8, 1.2]})
    code, out, _ = run(capsys, "rate", "--config", cfg, "--out", str(tmp_path / "o"))
    assert code == 0 and out.startswith("beta=1.000 ")
    assert (tmp_path / "o" / "rate.csv").read_text().startswith("n,delta,stderr,bound\n")
    assert (tmp_path / "o" / "rate.dat").read_text().startswith("# n delta stderr bound\n")


def test_rate_window_gate(tmp_path, capsys):
    cfg = _config(tmp_path, {"deltas": [[n, 3 / n**0.5] for n in (8, 16, 32)], "beta_window": [0.8, 1.2]})
    assert run(capsys, "rate", "--config", cfg)[0] == 1


def test_rate_friedman_exact(tmp_path, capsys):
    cfg = _config(tmp_path, {"model": {"kind": "rank", "r": 3}, "statistic": "friedman",
                             "test_function": "sine:a=0.5", "n_grid": [8, 16, 32, 64, 128],
                             "beta_window": [0.8, 1.2]})
    code, out, _ = run(capsys, "rate", "--config", cfg, "--out", str(tmp_path / "o"))
    assert code == 0
    beta = float(out.split()[0].split("=")[1])
    assert 0.8 <= beta <= 1.2


def test_rate_deterministic(tmp_path, capsys):
    cfg = _config(tmp_path, {"model": {"kind": "pearson", "probs": [0.3, 0.7]}, "statistic": {"pd": 2},
                             "test_function": "sine:a=0.5", "n_grid": [10, 20, 40], "mode": "mc",
                             "reps": 5000, "seed": 11, "workers": 2})
    run(capsys, "rate", "--config", cfg, "--out", str(tmp_path / "a"))
    run(capsys, "rate", "--config", cfg, "--out", str(tmp_path / "b"))
    assert (tmp_path / "a" / "rate.csv").read_bytes() == (tmp_path / "b" / "rate.csv").read_bytes()


def test_rate_bad_config(tmp_path, capsys):
    cfg = _config(tmp_path, {"model": {"kind": "rank"}, "statistic": "friedman"})
    code, _, err = run(capsys, "rate", "--config", cfg)
    assert code == 2 and "config" in err


def test_stein_check(capsys):
    code, out, _ = run(capsys, "stein-check", "--points=-1,0,1.5")
    assert code == 0 and "residual" in out


def test_verify_suites(tmp_path, capsys):
    code, out, _ = run(capsys, "verify", "covariance", "--out", str(tmp_path))
    assert code == 0 and out.startswith("[PASS]  1")
    assert (tmp_path / "verify.csv").read_text().startswith("criterion,title,passed")
    assert run(capsys, "verify", "moments")[0] == 0


def test_verify_negative_control(monkeypatch, capsys):
    monkeypatch.setattr(bounds, "FRIEDMAN_CONSTANT", 10795)
    code, out, err = run(capsys, "verify", "bounds")
    assert code == 1
    assert "[FAIL]  5" in out and "5 (" in err
