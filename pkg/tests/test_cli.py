import json

import numpy as np
import pytest

from expdesign.cli import main
from expdesign.criteria import Criterion, evaluate
from expdesign.fileio import read_pool, write_pool


@pytest.fixture
def pool3(tmp_path, rng):
    path = tmp_path / "pool.csv"
    write_pool(path, rng.standard_normal((600, 3)))
    return path


def test_select_theory(pool3, tmp_path):
    out = tmp_path / "d.json"
    rc = main(["select", "--criterion", "A", "--k", "240", "--b", "1", "--epsilon", "0.25",
               "--mode", "theory", "--pool", str(pool3), "--out", str(out)])
    assert rc == 0
    d = json.loads(out.read_text())
    assert set(d) == {"counts", "k", "b", "criterion", "objective", "relaxation_objective",
                      "ratio", "lambda_min_whitened", "mode", "alpha"}
    assert d["ratio"] <= 2.5 and sum(d["counts"]) == 240
    X = read_pool(pool3)
    assert evaluate(Criterion("A"), (X.T * np.array(d["counts"])) @ X) == pytest.approx(d["objective"])


def test_relax_round_equals_select(pool3, tmp_path):
    a, b, pi = tmp_path / "a.json", tmp_path / "b.json", tmp_path / "pi.json"
    common = ["--criterion", "D", "--pool", str(pool3)]
    assert main(["select", *common, "--k", "240", "--out", str(a)]) == 0
    assert main(["relax", *common, "--k", "240", "--out", str(pi)]) == 0
    assert set(json.loads(pi.read_text())) == {"weights", "k", "b"}
    assert main(["round", *common, "--pi", str(pi), "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_exit_codes(pool3, tmp_path, capsys):
    rc = main(["select", "--criterion", "A", "--k", "10", "--mode", "theory", "--pool", str(pool3)])
    assert rc == 2
    assert "5p/eps^2" in capsys.readouterr().err
    assert main(["select", "--criterion", "A", "--k", "10", "--bogus", "--pool", str(pool3)]) == 1
    assert main(["select", "--criterion", "Q", "--k", "10", "--pool", str(pool3)]) == 1
    assert main(["select", "--criterion", "A", "--k", "10", "--pool", str(tmp_path / "no.csv")]) == 1
    assert main(["relax", "--criterion", "A", "--k", "5000", "--pool", str(pool3)]) == 1


def test_t_fast_path_and_bayes(pool3, tmp_path):
    out = tmp_path / "t.json"
    assert main(["select", "--criterion", "T", "--k", "7", "--pool", str(pool3), "--out", str(out)]) == 0
    assert json.loads(out.read_text())["ratio"] == 1.0
    assert main(["select", "--criterion", "A", "--prior-lambda", "1", "--noise-sigma", "2",
                 "--k", "7", "--mode", "practical", "--pool", str(pool3), "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert d["bayes"] == {"prior_lambda": 1.0, "noise_sigma": 2.0}


def test_gen_baseline_bench(tmp_path, capsys):
    pool = tmp_path / "g.csv"
    assert main(["gen", "--n", "30", "--p", "4", "--seed", "2", "--out", str(pool)]) == 0
    X = read_pool(pool)
    assert X.shape == (30, 4)
    for m in ("uniform", "weighted", "fedorov", "greedy"):
        out = tmp_path / f"{m}.json"
        assert main(["baseline", "--method", m, "--criterion", "A", "--k", "6",
                     "--pool", str(pool), "--out", str(out)]) == 0
        assert sum(json.loads(out.read_text())["counts"]) == 6
    small = tmp_path / "s.csv"
    write_pool(small, X[:8])
    assert main(["baseline", "--method", "brute", "--criterion", "E", "--k", "4", "--b", "2",
                 "--pool", str(small)]) == 0
    capsys.readouterr()
    assert main(["bench", "--n", "20", "--p", "4", "--k", "5", "--criteria", "A",
                 "--methods", "UNIFORM", "SWAPPING", "--seeds", "0", "1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "method,criterion,n,p,k,objective,runtime_s,seed" and len(lines) == 5


def test_pool_header_detection(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("1.5,2\n3,4\n")
    assert read_pool(p).shape == (2, 2)
    p.write_text("a,b\n1.5,2\n3,4\n")
    assert read_pool(p).tolist() == [[1.5, 2.0], [3.0, 4.0]]
    p.write_text("a,b\n1,x\n")
    with pytest.raises(ValueError):
        read_pool(p)
