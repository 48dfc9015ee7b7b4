import subprocess
import sys

import pytest

from twosite.cli import main, parse_config
from twosite.io import read_kv_file, read_table


def test_parse_mc_flags():
    cmd, args = parse_config(["mc", "--n0", "1000000", "--kappa", "0.29", "--t-end", "8", "--seed", "7"])
    assert cmd == "mc"
    assert (args.n0, args.n1, args.kappa, args.t_end, args.seed) == (1000000, 0, 0.29, 8.0, 7)


def test_parse_moments():
    cmd, args = parse_config(["moments", "--lambda", "0", "--kappa", "0.3"])
    assert cmd == "moments" and args.lam == 0.0 and args.kappa == 0.3


def test_single_monomer_exit_1(capsys, tmp_path):
    assert main(["mc", "--n0", "1", "--n1", "0", "--out", str(tmp_path / "m.csv")]) == 1
    assert "need at least two monomers" in capsys.readouterr().err


def test_usage_errors_exit_1(capsys):
    assert main([]) == 1
    assert main(["mc", "--bogus"]) == 1
    assert main(["mc", "--n0", "abc"]) == 1


def test_help_exit_0(capsys):
    assert main(["mc", "--help"]) == 0
    assert "default" in capsys.readouterr().out


def test_config_file_and_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("n0 = 500\nkappa = 0.7\nt-end = 1.5\nseed = 3\n")
    _, args = parse_config(["mc", "--config", str(cfg), "--kappa", "0.2"])
    assert (args.n0, args.kappa, args.t_end, args.seed) == (500, 0.2, 1.5, 3)


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("n0 = 500\nflux = 2\n")
    assert main(["mc", "--config", str(cfg)]) == 1
    assert "unknown key" in capsys.readouterr().err


def test_config_lambda_key(tmp_path):
    cfg = tmp_path / "m.cfg"
    cfg.write_text("lambda = 0.5\nkappa = 0.3\n")
    _, args = parse_config(["moments", "--config", str(cfg)])
    assert args.lam == 0.5


def test_mc_outputs_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    argv = ["mc", "--n0", "3000", "--n1", "1000", "--kappa", "0.4", "--t-end", "2", "--dt", "0.25", "--seed", "9"]
    assert main(argv + ["--out", str(a)]) == 0
    assert main(argv + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a_gel.csv").read_bytes() == (tmp_path / "b_gel.csv").read_bytes()
    man = read_kv_file(tmp_path / "a.csv.manifest")
    assert man["rng"] == "numpy.random.Philox"
    assert man["seeds"] == "9"
    assert "output.a.csv" in man and "output.a_gel.csv" in man
    header, rows = read_table(a)
    assert header[0] == "t" and len(rows) == 2 * 9


def test_mc_replicas(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["mc", "--n0", "500", "--t-end", "1", "--dt", "0.5", "--replicas", "3", "--out", str(out)]) == 0
    header, rows = read_table(out)
    assert "sigma_hat_mean" in header and "sigma_hat_se" in header
    _, gel = read_table(tmp_path / "r_gel.csv")
    assert [r[1] for r in gel] == ["0", "1", "2"]


def test_ode_moments_meanfield_postgel(tmp_path):
    assert main(["ode", "--b", "2", "--t-end", "1", "--dt", "0.5", "--out", str(tmp_path / "o.csv")]) == 0
    header, rows = read_table(tmp_path / "o.csv")
    assert header[:5] == ["t", "site", "mass", "sigma", "c_b0"]
    assert float(rows[-2][5]) == pytest.approx(0.367879441171, rel=1e-7)

    assert main(["moments", "--out", str(tmp_path / "m.csv")]) == 0
    assert float(read_kv_file(tmp_path / "m.csv.manifest")["t_gel_hat"]) == pytest.approx(1.0, abs=1e-6)

    assert main(["meanfield", "--t-max", "2", "--dt", "1", "--out", str(tmp_path / "f.csv")]) == 0
    _, rows = read_table(tmp_path / "f.csv")
    assert rows[1][2] == "inf"
    assert main(["meanfield", "--grid", "--t-max", "2", "--dt", "1", "--dx", "0.5",
                 "--out", str(tmp_path / "g.csv")]) == 0
    assert read_table(tmp_path / "g.csv")[0] == ["t", "x", "u"]

    assert main(["postgel", "--b", "16", "--kappa", "1", "--t-end", "2", "--dt", "0.5", "--seed", "1",
                 "--out", str(tmp_path / "p.csv")]) == 0
    assert read_table(tmp_path / "p_jumps.csv")[0] == ["t", "site", "mass"]


def test_compare_cli(tmp_path, capsys):
    out = tmp_path / "c.csv"
    assert main(["compare", "--n", "20000", "--lambda", "0.5", "--kappa", "0.3", "--t-frac", "0.7",
                 "--b", "128", "--out", str(out)]) == 0
    header, rows = read_table(out)
    assert header == ["t", "site", "deviation", "c_b0", "t_gel_hat"] and len(rows) == 2
    assert main(["compare", "--n", "20000", "--lambda", "0.5", "--kappa", "0.3", "--times", "1.8",
                 "--out", str(out)]) == 1
    assert "gelation" in capsys.readouterr().err


def test_plot_cli(tmp_path, capsys):
    csv_path = tmp_path / "m.csv"
    assert main(["mc", "--n0", "300", "--t-end", "1", "--dt", "0.5", "--out", str(csv_path)]) == 0
    assert main(["plot", "--csv", str(csv_path), "--columns", "sigma_hat", "--out", str(tmp_path / "p.svg")]) == 0
    assert main(["plot", "--csv", str(csv_path), "--columns", "nope", "--out", str(tmp_path / "p.svg")]) == 1
    # site 1 starts empty, so its mass fraction is zero
    assert main(["plot", "--csv", str(csv_path), "--columns", "mass_frac", "--logy",
                 "--out", str(tmp_path / "p.svg")]) == 1
    assert "log" in capsys.readouterr().err


def test_runtime_error_exit_2(tmp_path):
    assert main(["mc", "--n0", "1000", "--max-events", "5", "--out", str(tmp_path / "x.csv")]) == 2


def test_console_script_entry():
    r = subprocess.run([sys.executable, "-m", "twosite.cli", "mc", "--n0", "1"], capture_output=True, text=True)
    assert r.returncode == 1
    assert "need at least two monomers" in r.stderr
