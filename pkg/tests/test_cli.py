import csv
import io
import json
from pathlib import Path

import pytest

from mvinsurer.cli import main

BASE = Path(__file__).resolve().parents[1] / "scenarios" / "base.cfg"


def write_cfg(tmp_path, **changes):
    lines = []
    for line in BASE.read_text().splitlines():
        key = line.split("=")[0].strip()
        if key in changes:
            if changes[key] is None:
                continue
            line = f"{key} = {changes[key]}"
        lines.append(line)
    path = tmp_path / "s.cfg"
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_strategy_output(capsys):
    assert main(["strategy", "--config", str(BASE), "--s", "1"]) == 0
    out, err = capsys.readouterr()
    table = {r["strategy"]: r for r in rows(out)}
    assert float(table["tc"]["pi"]) == pytest.approx(0.32, rel=1e-11)
    assert float(table["tc"]["L"]) == pytest.approx(1.0526315789, rel=1e-9)
    assert "kappa3 = 0.109810526316" in err


def test_global_flags_before_subcommand(tmp_path, capsys):
    out = tmp_path / "o.csv"
    assert main(["--config", str(BASE), "--out", str(out), "strategy"]) == 0
    assert out.read_text().startswith("strategy,pi,L\n")


def test_missing_key_is_usage_error(tmp_path, capsys):
    assert main(["strategy", "--config", write_cfg(tmp_path, sigma=None)]) == 1
    assert "sigma" in capsys.readouterr().err


def test_missing_config_file(capsys):
    assert main(["strategy", "--config", "/nonexistent.cfg"]) == 1
    assert main(["strategy"]) == 1


def test_theta_zero_rejected(tmp_path, capsys):
    assert main(["strategy", "--config", write_cfg(tmp_path, theta=0)]) == 2
    assert "theta must be positive" in capsys.readouterr().err


def test_degenerate_scenario_exit_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path, beta=0, **{"lambda": 0})
    assert main(["strategy", "--config", cfg]) == 2
    assert main(["verify", "--config", cfg]) == 2
    assert "DegenerateModel" in capsys.readouterr().err


def test_ruin_warning(tmp_path, capsys):
    assert main(["strategy", "--config", write_cfg(tmp_path, p=0.1)]) == 0
    assert "ruin occurs for sure" in capsys.readouterr().err


def test_frontier(capsys):
    assert main(["frontier", "--config", str(BASE), "--means", "1.02,1.05,1.1"]) == 0
    table = rows(capsys.readouterr().out)
    assert list(table[0]) == ["mean", "variance_tc", "variance_pre", "sml_slope"]
    for r in table:
        assert float(r["variance_pre"]) < float(r["variance_tc"])


def test_frontier_descending_grid_rejected(capsys):
    assert main(["frontier", "--config", str(BASE), "--means", "1.1,1.05"]) == 1
    assert main(["frontier", "--config", str(BASE), "--means", "0.9,1.05"]) == 2


def test_sweep_expected_value_premium(capsys):
    args = ["sweep", "--config", str(BASE), "--param", "lambda", "--values", "0.1,0.2", "--premium", "evp"]
    assert main(args) == 0
    table = rows(capsys.readouterr().out)
    assert float(table[0]["p"]) == pytest.approx(0.154, rel=1e-11)
    assert float(table[0]["L_star_theta_2"]) > float(table[1]["L_star_theta_2"])


def test_sweep_rho_grid(capsys):
    args = ["sweep", "--config", str(BASE), "--param", "rho", "--grid", "-0.9", "0.9", "7",
            "--thetas", "1,2", "--precommit"]
    assert main(args) == 0
    table = rows(capsys.readouterr().out)
    assert len(table) == 7 and "pi_pre_theta_1" in table[0]
    assert main(["sweep", "--config", str(BASE), "--param", "gamma", "--values", "1,2"]) == 1


def test_simulate_and_determinism(tmp_path, capsys):
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    common = ["simulate", "--config", str(BASE), "--paths", "4000", "--steps", "50", "--seed", "9"]
    assert main(common + ["--out", str(out1)]) == 0
    assert main(common + ["--out", str(out2), "--workers", "3"]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    table = {r["statistic"]: r for r in rows(out1.read_text())}
    assert table["mean"]["reference"] and table["n_effective"]["estimate"] == "4000"


def test_simulate_requires_targets(capsys):
    assert main(["simulate", "--config", str(BASE), "--strategy", "aux", "--paths", "10"]) == 1
    assert main(["simulate", "--config", str(BASE), "--strategy", "pre-target", "--paths", "10"]) == 1
    assert main(["simulate", "--config", str(BASE), "--strategy", "pre-target", "--m", "0.5", "--paths", "10"]) == 2


def test_compare(capsys):
    assert main(["compare", "--config", str(BASE)]) == 0
    table = {r["quantity"]: r for r in rows(capsys.readouterr().out)}
    assert all(r["precommitment_larger"] == "pass" for r in table.values())


def test_verify_report(tmp_path, capsys):
    out = tmp_path / "r.json"
    code = main(["verify", "--config", str(BASE), "--out", str(out)])
    report = json.loads(out.read_text())
    failed = [ch["name"] for ch in report["checks"] if not ch["passed"]]
    # only the sign-table cells contradicted by the closed forms fail
    assert code == 3 and not report["passed"]
    assert failed and all(name.startswith("signs.") for name in failed)
    first = out.read_bytes()
    main(["verify", "--config", str(BASE), "--out", str(out)])
    assert out.read_bytes() == first


def test_bad_usage(capsys):
    assert main([]) == 1
    assert main(["nope"]) == 1
    assert main(["--help"]) == 0
