import subprocess
import sys

import numpy as np
import pytest

from eigenmodel.cli import main
from eigenmodel.data import load_edge_list


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


@pytest.fixture
def genesis(tmp_path):
    assert main(["ingest-genesis", "--out-dir", str(tmp_path / "g")]) == 0
    return tmp_path / "g" / "genesis.tsv"


def test_ingest_genesis(genesis):
    Y = load_edge_list(genesis)
    assert Y.n == 154
    manifest = (genesis.parent / "run-manifest.txt").read_text()
    assert "vocabulary 154" in manifest


def test_ingest_custom_text(tmp_path):
    src = tmp_path / "t.txt"
    src.write_text("1:1 God said, God said\n")
    assert main(["ingest-genesis", str(src), "--out-dir", str(tmp_path)]) == 0
    Y = load_edge_list(tmp_path / "genesis.tsv")
    assert Y.labels == ("god", "said", ",")
    assert Y.get(0, 1) == 2


def test_lcc(tmp_path):
    edges = tmp_path / "e.tsv"
    edges.write_text("a\tb\nb\tc\nc\td\ne\tf\n")
    assert main(["lcc", str(edges), "--out-dir", str(tmp_path)]) == 0
    assert load_edge_list(tmp_path / "lcc.tsv").labels == ("a", "b", "c", "d")


FIT = ["--model", "eigen", "--k", "2", "--iterations", "60", "--burn", "20", "--thin", "5"]


def test_fit_is_deterministic(tmp_path, genesis):
    for d in ("a", "b"):
        assert main(["fit", "--data", str(genesis), *FIT, "--out-dir", str(tmp_path / d)]) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    assert sorted(_files(a)) == ["fitted.tsv", "run-manifest.txt", "trace.csv"]
    fa, fb = _files(a), _files(b)
    for name in ("fitted.tsv", "trace.csv"):
        assert fa[name] == fb[name]


def test_cv_writes_outputs_and_is_deterministic(tmp_path):
    assert main(["simulate", "--model", "class", "--n", "16", "--k", "2", "--seed", "3",
                 "--out-dir", str(tmp_path / "s")]) == 0
    data = tmp_path / "s" / "simulated.tsv"
    args = ["cv", "--data", str(data), "--model", "class", "--k", "2", "--iterations", "60",
            "--burn", "20", "--thin", "4", "--folds", "3", "--seed", "1"]
    assert main(args + ["--out-dir", str(tmp_path / "c1")]) == 0
    assert main(args + ["--jobs", "2", "--out-dir", str(tmp_path / "c2")]) == 0
    a, b = _files(tmp_path / "c1"), _files(tmp_path / "c2")
    assert {"predictions.tsv", "roc.tsv", "auc_table.csv", "run-manifest.txt"} <= set(a)
    for name in ("predictions.tsv", "roc.tsv", "auc_table.csv"):
        assert a[name] == b[name]
    assert a["auc_table.csv"].decode().startswith("K,simulated/class\n2,")


def test_simulate_outputs(tmp_path):
    assert main(["simulate", "--model", "dist", "--n", "12", "--k", "2",
                 "--threshold", "-1", "--threshold", "0.5", "--out-dir", str(tmp_path)]) == 0
    Y = load_edge_list(tmp_path / "simulated.tsv")
    assert Y.n == 12 and Y.value_levels.max() <= 2
    rows = (tmp_path / "latent.tsv").read_text().splitlines()
    assert rows[0] == "node\tu1\tu2" and len(rows) == 13


def test_check_theory_exit_status(tmp_path, capsys):
    assert main(["check-theory", "--restarts", "60", "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 7
    assert (tmp_path / "theory_report.txt").read_text() == out


def test_usage_errors_exit_1(tmp_path, genesis):
    with pytest.raises(SystemExit) as e:
        main(["fit", "--bogus"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main(["fit", "--data", str(genesis), "--model", "blob", "--k", "2"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main([])
    assert e.value.code == 1
    assert main(["fit", "--data", str(genesis), "--model", "eigen", "--k", "2",
                 "--iterations", "10", "--burn", "10", "--out-dir", str(tmp_path)]) == 1


def test_data_errors_exit_2(tmp_path):
    assert main(["fit", "--data", str(tmp_path / "missing.tsv"), "--model", "eigen",
                 "--k", "2", "--out-dir", str(tmp_path)]) == 2
    bad = tmp_path / "bad.tsv"
    bad.write_text("a\ta\t1\n")
    assert main(["lcc", str(bad), "--out-dir", str(tmp_path)]) == 2


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "eigenmodel.cli", "simulate", "--model", "eigen",
                        "--n", "5", "--k", "1", "--out-dir", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert np.loadtxt(tmp_path / "simulated.tsv", dtype=str).shape == (10, 3)
