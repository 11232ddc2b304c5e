import os
import textwrap

import numpy as np
import pytest

from kinetic_chaos import read_csv, RunManifest
from kinetic_chaos.cli import main
from kinetic_chaos.config import ExperimentConfig, ConfigError


BASE = """
[experiment]
id = demo
d = 2
ell = 20
N_list = 8
times = 0.25
M = 120
seed = 3
s_max = 1

[density]
kind = gaussian-product
a = 1.0
b = 1.0

[cutoff]
R = 3.0
alpha = 0.05
y = 0.1
theta = 0.3
n = 2

[window]
bins = 2

[reference]
m = 100

[pseudo]
flavor = boltzmann
s = 1
samples = 100

[scan]
s = 3
t = 1.0
m = 2000
eta_list = 0.05 0.1
theta_list = 0.3 0.5
"""


@pytest.fixture
def config_path(tmp_path):
    p = tmp_path / "demo.cfg"
    p.write_text(textwrap.dedent(BASE))
    return p


def _out(tmp_path):
    return tmp_path / "out"


def test_config_parsing(config_path):
    cfg = ExperimentConfig.from_file(config_path)
    assert cfg.experiment_id == "demo"
    assert cfg.N_list == [8] and cfg.ell == 20.0
    simcfg = cfg.sim_config(8)
    assert simcfg.epsilon == pytest.approx(1.0 / 160.0)
    cut = cfg.cutoff(simcfg.epsilon)
    assert cut.R == 3.0 and cut.n == 2
    assert cut.eta == pytest.approx(simcfg.epsilon ** 0.5)
    assert len(cfg.config_hash()) == 64
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(config_path.parent / "missing.cfg")


def test_simulate_outputs_and_determinism(config_path, tmp_path):
    out = _out(tmp_path)
    argv = ["simulate", "--config", str(config_path), "--out", str(out)]
    assert main(argv) == 0
    csv = out / "demo_marginals.csv"
    header, rows = read_csv(csv)
    assert header[:3] == ["N", "s", "t"]
    assert csv.read_text().startswith("# schema=1\n")
    assert rows
    man = RunManifest.read(out / "demo_manifest.txt")
    assert man.seed == 3 and man.version
    first = csv.read_bytes()
    assert main(argv) == 0
    assert csv.read_bytes() == first  # byte-identical rerun
    # a different seed changes the numbers
    assert main(argv + ["--seed", "4"]) == 0
    assert csv.read_bytes() != first


def test_simulate_empty_times_is_config_error(config_path, tmp_path):
    text = config_path.read_text().replace("times = 0.25", "times =")
    bad = config_path.parent / "bad.cfg"
    bad.write_text(text)
    assert main(["simulate", "--config", str(bad),
                 "--out", str(_out(tmp_path))]) == 2


def test_missing_config_flag_value(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.cfg"),
                 "--out", str(tmp_path)]) == 2


def test_partition_command(config_path, tmp_path):
    out = _out(tmp_path)
    assert main(["partition", "--config", str(config_path),
                 "--out", str(out)]) == 0
    header, rows = read_csv(out / "demo_partition.csv")
    assert header == ["s", "value", "stderr", "samples"]
    assert len(rows) == 8
    assert float(rows[0][1]) == 1.0  # one particle is always admissible
    vals = [float(r[1]) for r in rows]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_pseudo_command(config_path, tmp_path):
    out = _out(tmp_path)
    assert main(["pseudo", "--config", str(config_path),
                 "--out", str(out)]) == 0
    header, rows = read_csv(out / "demo_pseudo.csv")
    assert header[0] == "flavor" and rows[0][0] == "boltzmann"
    assert rows[-1][2] == "total"
    depths = [r[2] for r in rows[:-1]]
    assert depths == [str(k) for k in range(len(depths))]


def test_badset_scan_command(config_path, tmp_path):
    out = _out(tmp_path)
    assert main(["badset-scan", "--config", str(config_path),
                 "--out", str(out)]) == 0
    header, rows = read_csv(out / "demo_badset.csv")
    assert "fit_eta_exponent" in header and "skipped" in header
    assert len(rows) == 4  # 2 etas x 2 thetas
    k = header.index("skipped")
    assert all(r[k] == "0" for r in rows)


def test_converge_command(config_path, tmp_path):
    out = _out(tmp_path)
    assert main(["converge", "--config", str(config_path),
                 "--out", str(out)]) == 0
    header, rows = read_csv(out / "demo_convergence.csv")
    assert header == ["N", "s", "t", "error", "stderr", "count"]
    assert rows and all(float(r[3]) >= 0 for r in rows)


def test_workers_env_variable(config_path, tmp_path, monkeypatch):
    out = _out(tmp_path)
    argv = ["simulate", "--config", str(config_path), "--out", str(out)]
    assert main(argv) == 0
    first = (out / "demo_marginals.csv").read_bytes()
    monkeypatch.setenv("KINETIC_CHAOS_WORKERS", "2")
    assert main(argv) == 0
    assert (out / "demo_marginals.csv").read_bytes() == first
    monkeypatch.setenv("KINETIC_CHAOS_WORKERS", "soup")
    assert main(argv) == 2


def test_verify_suites(capsys):
    assert main(["verify", "all"]) == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l]
    assert lines and all(l.startswith("PASS") for l in lines)
    assert main(["verify", "collision"]) == 0
    out = capsys.readouterr().out
    assert "collision-involution" in out


def test_verify_unknown_suite(capsys):
    assert main(["verify", "made-up"]) == 2
    err = capsys.readouterr().err
    assert "available" in err
