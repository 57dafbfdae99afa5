import csv
import io
import json
import math
import subprocess
import sys

import pytest

from hetrate import analytic
from hetrate.cli import EXIT_DOMAIN, EXIT_OK, EXIT_USAGE, main
from hetrate.config import (
    BUNDLED,
    ConfigError,
    dump_config,
    load_config,
    network_from_dict,
    network_to_dict,
)
from hetrate.model import ValidationError


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


# --- configs ---------------------------------------------------------------------


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_configs_are_valid(name):
    net = load_config(name)
    assert net.alpha == 4.0
    assert net.bandwidth_hz == 1e7


def test_fig2a_config_parameters():
    n = load_config("fig2a")
    assert n.tiers[1].power_db - n.tiers[0].power_db == -23.0
    assert n.tiers[1].density == pytest.approx(5 * n.tiers[0].density)
    assert n.ue_density == pytest.approx(10 * n.tiers[0].density)
    assert [t.bias_db for t in n.tiers] == [0.0, 5.0]
    assert [t.shadowing.sigma_db for t in n.tiers] == [4.0, 8.0]


def test_config_round_trip():
    for name in BUNDLED:
        n = load_config(name)
        assert network_from_dict(json.loads(dump_config(n))) == n
        assert network_from_dict(network_to_dict(n)) == n


def test_config_alpha_two_rejected():
    d = network_to_dict(load_config("fig2a"))
    d["alpha"] = 2.0
    with pytest.raises(ValidationError) as info:
        network_from_dict(d)
    assert any(v.startswith("alpha:") for v in info.value.violations)


def test_config_missing_tiers_rejected():
    d = network_to_dict(load_config("fig2a"))
    del d["tiers"]
    with pytest.raises(ValidationError) as info:
        network_from_dict(d)
    assert any(v.startswith("tiers:") for v in info.value.violations)


def test_config_collects_every_problem():
    d = {
        "alpha": "four",
        "ue_density": 1e-5,
        "tiers": [{"power_db": 43, "density": -1, "shadowing": {"type": "rayleigh"}}],
    }
    with pytest.raises(ValidationError) as info:
        network_from_dict(d)
    fields = {v.split(":")[0] for v in info.value.violations}
    assert {"alpha", "bandwidth_hz", "tiers[0].density", "tiers[0].shadowing.type"} <= fields


def test_config_bad_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{\n  \"alpha\": 4,\n}")
    with pytest.raises(ConfigError, match="line 3"):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


# --- commands ---------------------------------------------------------------------


def test_validate_ok(capsys):
    code, out, _ = run_cli(capsys, "validate", "--config", "fig2a")
    assert code == EXIT_OK
    assert out.strip() == "ok"


def test_validate_reports_violations(capsys, tmp_path):
    d = network_to_dict(load_config("fig2a"))
    d["alpha"] = 2.0
    p = tmp_path / "c.json"
    p.write_text(json.dumps(d))
    code, _, err = run_cli(capsys, "validate", "--config", str(p))
    assert code == EXIT_DOMAIN
    assert "alpha must exceed 2" in err


def test_unknown_command_is_usage_error(capsys):
    code, _, err = run_cli(capsys, "frobnicate")
    assert code == EXIT_USAGE
    assert "usage" in err.lower()


def test_missing_config_is_domain_error(capsys, tmp_path):
    code, _, err = run_cli(capsys, "selection", "--config", str(tmp_path / "nope.json"))
    assert code == EXIT_DOMAIN
    assert err


def test_ratecov_three_points(capsys, tmp_path):
    out = tmp_path / "r.csv"
    code, _, _ = run_cli(
        capsys, "ratecov", "--config", "fig2a", "--tmin", "1e4", "--tmax", "1e6", "--points", "3", "--out", str(out)
    )
    assert code == EXIT_OK
    lines = out.read_text().splitlines()
    assert len(lines) == 4
    assert lines[0] == "rate_bps,coverage,per_tier_contribution,truncation_bound,coverage_mean_load"
    r = rows(out.read_text())
    net = load_config("fig2a")
    for row in r:
        ref = analytic.rate_coverage(net, float(row["rate_bps"]))
        assert float(row["coverage"]) == pytest.approx(ref.coverage, rel=1e-11)
        parts = [float(x) for x in row["per_tier_contribution"].split(";")]
        assert sum(parts) == pytest.approx(ref.coverage, rel=1e-11)
        assert row["coverage_mean_load"] == ""


def test_ratecov_mean_load_column(capsys):
    code, out, _ = run_cli(capsys, "ratecov", "--config", "fig2a", "--points", "2", "--mean-load")
    assert code == EXIT_OK
    for row in rows(out):
        assert 0.0 <= float(row["coverage_mean_load"]) <= 1.0


def test_ratecov_default_grid(capsys):
    code, out, _ = run_cli(capsys, "ratecov", "--config", "fig2a")
    r = rows(out)
    assert len(r) == 50
    assert float(r[0]["rate_bps"]) == pytest.approx(1e4)
    assert float(r[-1]["rate_bps"]) == pytest.approx(1e7)


def test_sirccdf_single_tier(capsys):
    code, out, _ = run_cli(capsys, "sirccdf", "--config", "single_tier", "--thresholds-db", "0")
    r = rows(out)
    assert code == EXIT_OK and len(r) == 1
    assert float(r[0]["ccdf"]) == pytest.approx(1 / (1 + math.pi / 4), abs=1e-11)


def test_loadpmf(capsys):
    code, out, _ = run_cli(capsys, "loadpmf", "--config", "fig1a", "--tier", "2", "--n-max", "10")
    r = rows(out)
    assert code == EXIT_OK and len(r) == 10
    assert {row["tier"] for row in r} == {"2"}
    assert float(r[-1]["cdf"]) + float(r[-1]["truncation_mass"]) == pytest.approx(1.0, abs=1e-9)


def test_selection_command(capsys):
    code, out, _ = run_cli(capsys, "selection", "--config", "fig1b")
    r = rows(out)
    assert sum(float(x["selection_probability"]) for x in r) == pytest.approx(1.0, abs=1e-11)


def test_bad_tier_is_domain_error(capsys):
    code, _, err = run_cli(capsys, "loadpmf", "--config", "fig1a", "--tier", "3")
    assert code == EXIT_DOMAIN


def test_percentile_sweep(capsys):
    code, out, _ = run_cli(
        capsys, "percentile", "--config", "fig2b", "--bias-tier", "2", "--bias-min", "0", "--bias-max", "2"
    )
    r = rows(out)
    assert code == EXIT_OK and len(r) == 3
    assert [float(x["bias_db"]) for x in r] == [0.0, 1.0, 2.0]


def test_optbias_single_row(capsys):
    code, out, _ = run_cli(capsys, "optbias", "--config", "fig2b", "--bias-min", "0", "--bias-max", "12")
    lines = out.splitlines()
    assert code == EXIT_OK
    assert lines[0] == "tier,p,bias_db,percentile_rate,endpoint_flag"
    assert len(lines) == 2
    row = rows(out)[0]
    assert row["endpoint_flag"] in ("0", "1")
    assert 0 < float(row["bias_db"]) < 12


def test_equivalent_command(capsys):
    code, out, _ = run_cli(capsys, "equivalent", "--config", "fig1b")
    eq = network_from_dict(json.loads(out))
    orig = load_config("fig1b")
    assert eq.tiers[1].power_db - orig.tiers[1].power_db == pytest.approx(3.683, abs=2e-3)
    assert all(t.shadowing.gain == 1.0 for t in eq.tiers)
    for rate in [1e5, 1e6]:
        assert analytic.rate_coverage(eq, rate).coverage == pytest.approx(
            analytic.rate_coverage(orig, rate).coverage, abs=1e-12
        )


@pytest.mark.parametrize("estimator", ["selection", "sir", "load", "rate"])
def test_simulate_byte_identical(capsys, tmp_path, estimator):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        code, _, _ = run_cli(
            capsys, "simulate", "--config", "fig1a", "--estimator", estimator,
            "--realizations", "40", "--seed", "7", "--out", str(p),
        )
        assert code == EXIT_OK
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert rows(paths[0].read_text())[0]["estimator"] == estimator


def test_simulate_rate_default_grid(capsys):
    code, out, _ = run_cli(capsys, "simulate", "--config", "fig2a", "--estimator", "rate", "--realizations", "20")
    assert len(rows(out)) == 20


def test_console_script_entry_point():
    res = subprocess.run(
        [sys.executable, "-m", "hetrate.cli", "selection", "--config", "single_tier"],
        capture_output=True, text=True,
    )
    assert res.returncode == 0
    assert res.stdout.splitlines()[0] == "tier,selection_probability,effective_density,mean_load"
