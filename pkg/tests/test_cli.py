"""CLI surface: subcommands, TOML configs, emitted files."""

import numpy as np
import pytest

from subfem.cli import main
from subfem.special import MlParams, mittag_leffler


def test_ml_eval(capsys):
    assert main(["ml-eval", "--alpha", "0.6", "--beta", "1.0",
                 "--x", "-2.0"]) == 0
    out = capsys.readouterr().out.strip()
    assert float(out) == pytest.approx(
        mittag_leffler(MlParams(0.6, 1.0), -2.0), rel=1e-15)


def test_weights_stdout(capsys):
    assert main(["weights", "--k", "1", "--beta", "0.5", "--n", "3"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "j,omega"
    vals = [float(line.split(",")[1]) for line in lines[1:]]
    assert vals == pytest.approx([1.0, -0.5, -0.125, -0.0625])


def test_weights_csv(tmp_path):
    out = tmp_path / "w.csv"
    main(["weights", "--k", "2", "--beta", "0.6", "--n", "8",
          "--csv", str(out)])
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 10


def test_solve_subcommand(tmp_path):
    cfg = tmp_path / "solve.toml"
    cfg.write_text(f"""
[problem]
alpha = 0.6
T = 0.5
m = 1
k = 2
initial = {{kind = "point", x0 = [0.5001, 0.5001]}}

[discretization]
r = 2
h = 0.125
tau = 0.0625
strategy = "dirac_corrected"

[output]
csv = "{tmp_path}/probes.csv"
vtk = "{tmp_path}/final.vtk"
probes = [[0.3, 0.4], [0.7, 0.2]]
""")
    assert main(["solve", "--config", str(cfg)]) == 0
    lines = (tmp_path / "probes.csv").read_text().splitlines()
    assert lines[0].startswith("t,")
    assert len(lines) == 9              # 8 steps, t=0 excluded for m>=1
    assert (tmp_path / "final.vtk").exists()
    vals = np.array([[float(x) for x in line.split(",")]
                     for line in lines[1:]])
    assert np.all(np.isfinite(vals))


def test_converge_time_subcommand(tmp_path, capsys):
    cfg = tmp_path / "time.toml"
    cfg.write_text(f"""
[problem]
alpha = 0.6
T = 1.0
m = 1
k = 2
initial = {{kind = "point", x0 = [0.5001, 0.5001]}}

[discretization]
r = 1

[study]
kind = "time"
ladder = [0.125, 0.0625, 0.03125]
h_ref = 0.125
label = "cli smoke"

[output]
csv = "{tmp_path}/t.csv"
figure = "{tmp_path}/t.png"
""")
    assert main(["converge-time", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "orders" in out
    assert (tmp_path / "t.csv").exists()
    assert (tmp_path / "t.png").exists()


def test_converge_space_subcommand(tmp_path):
    cfg = tmp_path / "space.toml"
    cfg.write_text(f"""
[problem]
alpha = 1.0
T = 0.125
m = 0
k = 4
initial = {{kind = "point", x0 = [0.5001, 0.5001]}}

[discretization]
r = 1

[study]
kind = "space"
ladder = [0.125, 0.0625, 0.03125]
tau_ref = 0.0078125
oracle = true
cauchy = false
truncation = 32
label = "cli control"

[output]
markdown = "{tmp_path}/s.md"
""")
    assert main(["converge-space", "--config", str(cfg)]) == 0
    text = (tmp_path / "s.md").read_text()
    assert "E_oracle" in text
