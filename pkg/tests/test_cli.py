import subprocess
import sys

import pytest

from firstvisit.cli import main

RUN_CONFIG = """
[space]
kind = circle

[map]
kind = rotation

[centers]
generator = cantor_embedding
interval = 0.0,1.0
depth = 2

[schedule]
family = harmonic
c = 0.1

[targets]
regime = nowhere_dense

[run]
scales = 5
horizon = 20000
samples = 10
sampler = seeded_uniform
threshold = 2
seed = 7
"""

CLUSTER_CONFIG = """
[space]
kind = circle

[map]
kind = rotation

[centers]
generator = rank_cluster
x = 0.37
delta = 0.08
rank = 1
branching = 3

[schedule]
family = geometric
c = 1.0
q = 0.5

[targets]
regime = countable

[run]
scales = 10
horizon = 100000
samples = 5
sampler = seeded_uniform
threshold = 2
seed = 42
"""

DENSE_CONFIG = """
[space]
kind = circle

[map]
kind = rotation

[centers]
generator = dense_interval
interval = 0.0,0.3
count = 400

[schedule]
family = harmonic
c = 1.0

[targets]
regime = somewhere_dense

[run]
scales = 3
horizon = 1000
samples = 0
sampler = seeded_uniform
threshold = 2
seed = 5
"""


@pytest.fixture
def run_config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(RUN_CONFIG, encoding="utf-8")
    return str(path)


@pytest.fixture
def cluster_config(tmp_path):
    path = tmp_path / "cluster.cfg"
    path.write_text(CLUSTER_CONFIG, encoding="utf-8")
    return str(path)


@pytest.fixture
def dense_config(tmp_path):
    path = tmp_path / "dense.cfg"
    path.write_text(DENSE_CONFIG, encoding="utf-8")
    return str(path)


class TestRunCommand:
    def test_run_writes_outputs(self, run_config, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["run", run_config, "--out", str(out)]) == 0
        captured = capsys.readouterr().out
        assert "fraction indecisive" in captured
        for name in (
            "centers.txt",
            "certificate.csv",
            "trace.csv",
            "classification.csv",
            "histogram.csv",
            "summary.txt",
        ):
            assert (out / name).exists()

    def test_seed_override_changes_hash(self, run_config, tmp_path, capsys):
        main(["run", run_config, "--out", str(tmp_path / "a")])
        first = capsys.readouterr().out.splitlines()[0]
        main(["run", run_config, "--out", str(tmp_path / "b"), "--seed", "8"])
        second = capsys.readouterr().out.splitlines()[0]
        assert first != second

    def test_missing_config_is_io_error(self, tmp_path):
        assert main(["run", str(tmp_path / "nope.cfg")]) == 3

    def test_bad_config_is_config_error(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("[space]\nkind = circle\n", encoding="utf-8")
        assert main(["run", str(path)]) == 1


class TestVerifyCommand:
    def test_verify_passing_family(self, cluster_config, capsys):
        assert main(["verify", cluster_config]) == 0
        out = capsys.readouterr().out
        assert "passed True" in out

    def test_verify_dense_reports_violations(self, dense_config, capsys):
        assert main(["verify", dense_config]) == 0
        out = capsys.readouterr().out
        assert "passed False" in out
        assert "first violation" in out


class TestWitnessCommand:
    def test_open_witness_for_satellite(self, cluster_config, capsys):
        code = main([
            "witness", cluster_config, "--center", "2", "--m", "1",
            "--n-max", "60", "--samples", "100",
        ])
        assert code == 0
        assert "open witness" in capsys.readouterr().out

    def test_boundary_witness_for_root(self, cluster_config, capsys):
        code = main([
            "witness", cluster_config, "--center", "1", "--m", "1",
            "--n-max", "60", "--samples", "100", "--witnesses", "4",
        ])
        assert code == 0
        assert "boundary witnesses" in capsys.readouterr().out


class TestCollapseCommand:
    def test_interior_center_coverage(self, dense_config, capsys):
        code = main([
            "collapse", dense_config, "--center", "17", "--n", "100",
            "--grid-eps", "1e-5",
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "sibling coverage" in out
        assert float(out.rsplit(":", 1)[1]) > 0.5


class TestConstructCommand:
    def test_construct_emits_parseable_table(self, cluster_config, tmp_path):
        out = tmp_path / "centers.txt"
        assert main(["construct", cluster_config, "--out", str(out)]) == 0
        from firstvisit.derived import centers_from_table

        sc = centers_from_table(out.read_text(encoding="utf-8"))
        assert len(sc.points) == 4


class TestSelftest:
    def test_selftest_passes(self, capsys):
        assert main(["selftest"]) == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out
        assert out.count("PASS") >= 5


class TestConsoleScript:
    def test_entry_point_help(self):
        proc = subprocess.run(
            [sys.executable, "-m", "firstvisit.cli", "--help"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert "selftest" in proc.stdout
