import json
from pathlib import Path

import jsonschema
import numpy as np
import pytest
from referencing import Registry, Resource

from jumpwave.artifacts import read_csv, sha256
from jumpwave.cli import main
from jumpwave.reference import merton_series_call
from jumpwave.scenario import get_scenario

SCHEMAS = Path(__file__).resolve().parents[1] / "docs" / "schemas"

TINY = """\
[DEFAULT]
r = 0.05
sigma = 0.2
strike = 100
maturity = 1
lam = 0.05
mu_j = -0.05
sigma_j = 0.15
s_min = 40
s_max = 250
jx_max = 4
jt_max = 1
n_collocation = 256
n_terminal = 64
n_boundary = 32
adam1_epochs = 20
adam2_epochs = 10
lbfgs_max_iter = 200
risk_paths = 2000
"""

SIX = ["low_jump_intensity", "baseline", "high_volatility", "high_interest_rate", "crash_scenario",
       "high_jump_intensity"]


def scenario_file(tmp_path, sections, extra="", name="tiny.ini"):
    p = tmp_path / name
    p.write_text(TINY + extra + "".join(f"\n[scenario.{s}]\n{body}" for s, body in sections))
    return p


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def csv_rows(text):
    lines = [ln for ln in text.strip().splitlines() if ln]
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


@pytest.fixture(scope="module")
def tiny_fit(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    ini = scenario_file(base, [("tiny", "")])
    assert main(["--scenario-file", str(ini), "--out", str(base / "runs"), "fit", "--id", "tiny"]) == 0
    return {"ini": ini, "dir": base / "runs" / "tiny", "base": base}


def validator(name):
    registry = Registry().with_resources(
        (p.name, Resource.from_contents(json.loads(p.read_text()))) for p in SCHEMAS.glob("*.json"))
    schema = json.loads((SCHEMAS / f"{name}.schema.json").read_text())
    return jsonschema.Draft202012Validator(schema, registry=registry)


def test_price_series_default_probes(capsys):
    code, out, _ = run(capsys, "price", "--method", "series")
    header, rows = csv_rows(out)
    assert code == 0 and header == ["spot", "time_years", "price", "method"]
    assert [(float(r[0]), float(r[1])) for r in rows] == [(90.0, 0.75), (100.0, 0.5), (110.0, 0.25),
                                                          (150.0, 0.75)]
    assert all(r[3] == "series" for r in rows)


def test_price_bs_equals_series_without_jumps(tmp_path, capsys):
    ini = scenario_file(tmp_path, [("nojump", "lam = 0\n")])
    _, bs, _ = run(capsys, "--scenario-file", ini, "--id", "nojump", "price", "--method", "bs")
    _, se, _ = run(capsys, "--scenario-file", ini, "--id", "nojump", "price", "--method", "series")
    a = np.array([float(r[2]) for r in csv_rows(bs)[1]])
    b = np.array([float(r[2]) for r in csv_rows(se)[1]])
    assert np.max(np.abs(a - b)) <= 1e-12


def test_price_with_solution_and_reference(tiny_fit, capsys, tmp_path):
    dest = tmp_path / "p.csv"
    code, _, _ = run(capsys, "--scenario-file", tiny_fit["ini"], "--id", "tiny", "price",
                     "--solution", tiny_fit["dir"], "--method", "series", "--csv", dest)
    header, rows = read_csv(dest)
    params = get_scenario("tiny", tiny_fit["ini"]).params
    assert code == 0 and header[-2:] == ["abs_error", "rel_error_pct"]
    for r in rows:
        price, ref = float(r[2]), float(r[4])
        assert float(r[6]) == pytest.approx(abs(price - ref))
        assert float(r[7]) == pytest.approx(100 * abs(price - ref) / ref)
        assert ref == pytest.approx(merton_series_call(params, float(r[0]), 1.0 - float(r[1])))


def test_price_out_of_domain(tiny_fit, capsys):
    code, out, err = run(capsys, "price", "--solution", tiny_fit["dir"], "--probe", "100:0.5",
                         "--probe", "300:0.5")
    _, rows = csv_rows(out)
    assert code == 1
    assert rows[0][2] != "ERROR:out_of_domain" and rows[1][2] == "ERROR:out_of_domain"
    assert "300" in err


def test_price_needs_a_source(capsys):
    code, _, err = run(capsys, "price")
    assert code == 1 and "--solution" in err


def test_malformed_scenario_exit_code(tmp_path, capsys):
    bad = scenario_file(tmp_path, [("x", "sigma = oops\n")])
    code, _, err = run(capsys, "--scenario-file", bad, "--out", tmp_path, "fit", "--id", "x")
    assert code == 1 and "tiny.ini:" in err and "sigma" in err


def test_divergence_exit_code(tmp_path, capsys):
    ini = scenario_file(tmp_path, [("boom", "adam1_lr = 1e200\n")])
    code, _, err = run(capsys, "--scenario-file", ini, "--out", tmp_path, "fit", "--id", "boom")
    assert code == 2 and "diverged" in err


def test_fit_outputs_and_manifest(tiny_fit):
    d = tiny_fit["dir"]
    manifest = json.loads((d / "manifest.json").read_text())
    for name, digest in manifest["files"].items():
        assert sha256(d / name) == digest
    expected = {"solution.json", "train_report.json", "scenario.json", "loss_history.csv", "probes.csv",
                "price_surface.csv", "benchmark_surface.csv", "error_surface.csv", "greeks.csv",
                "risk.json", "risk.csv"}
    assert expected <= set(manifest["files"])
    assert "seconds" not in (d / "train_report.json").read_text()


def test_fit_is_byte_identical(tiny_fit, tmp_path):
    assert main(["--scenario-file", str(tiny_fit["ini"]), "--out", str(tmp_path), "fit", "--id", "tiny"]) == 0
    assert (tmp_path / "tiny" / "manifest.json").read_bytes() == (tiny_fit["dir"] / "manifest.json").read_bytes()


def test_env_out_directory(tiny_fit, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("JUMPWAVE_OUT", str(tmp_path / "envout"))
    code, _, _ = run(capsys, "--scenario-file", tiny_fit["ini"], "risk", "--id", "tiny",
                     "--pricer", "series", "--paths", "500")
    assert code == 0 and (tmp_path / "envout" / "tiny" / "risk.json").exists()


def test_json_artifacts_validate(tiny_fit):
    d = tiny_fit["dir"]
    for name in ("train_report", "risk", "manifest", "solution", "scenario"):
        validator(name).validate(json.loads((d / f"{name}.json").read_text()))


def test_plot_data(tiny_fit, tmp_path, capsys):
    out = tmp_path / "plots"
    code, _, _ = run(capsys, "--out", out, "plot-data", "--solution", tiny_fit["dir"] / "solution.json",
                     "--grid", "50x50")
    assert code == 0
    h_p, price = read_csv(out / "price_surface.csv")
    h_b, bench = read_csv(out / "benchmark_surface.csv")
    h_e, err = read_csv(out / "error_surface.csv")
    assert len(price) == len(bench) == len(err) == 2500
    assert h_p[:2] == h_b[:2] == h_e[:2] == ["spot", "time_years"]
    p = np.array(price, dtype=float)
    b = np.array(bench, dtype=float)
    e = np.array(err, dtype=float)
    assert np.array_equal(p[:, :2], e[:, :2])
    assert np.allclose(e[:, 2], np.abs(p[:, 2] - b[:, 2]), rtol=1e-12, atol=1e-12)
    report = json.loads((tiny_fit["dir"] / "train_report.json").read_text())
    epochs = sum(s["epochs"] for s in report["stages"].values())
    _, hist = read_csv(out / "loss_history.csv")
    assert len(hist) == epochs
    validator("manifest").validate(json.loads((out / "manifest.json").read_text()))


def test_plot_data_per_day_and_missing_solution(tiny_fit, tmp_path, capsys):
    out = tmp_path / "pd"
    assert run(capsys, "--out", out, "plot-data", "--solution", tiny_fit["dir"], "--per-day")[0] == 0
    header, _ = read_csv(out / "greeks.csv")
    assert header[-1] == "theta_per_day"
    code, _, err = run(capsys, "--out", out, "plot-data", "--solution", tmp_path / "missing.json")
    assert code == 1 and "not found" in err


def test_risk_with_surrogate(tiny_fit, tmp_path, capsys):
    code, out, _ = run(capsys, "--scenario-file", tiny_fit["ini"], "--out", tmp_path, "risk", "--id", "tiny",
                       "--solution", tiny_fit["dir"], "--paths", "1000")
    header, rows = csv_rows(out)
    assert code == 0 and rows[0][0] == "tiny"
    assert float(rows[0][3]) >= float(rows[0][2])
    assert run(capsys, "--scenario-file", tiny_fit["ini"], "risk", "--id", "tiny")[0] == 1


def test_table_six_scenarios(tmp_path, capsys):
    ini = scenario_file(tmp_path, [(s, "") for s in SIX])
    out = tmp_path / "table"
    code, stdout, _ = run(capsys, "--scenario-file", ini, "--out", out, "table", "--pinn-file")
    assert code == 0
    header, rows = read_csv(out / "comparison.csv")
    assert len(rows) == 24 and header[-2:] == ["pinn_price", "pinn_rel_error_pct"]
    assert all(r[header.index("status")] == "ok" for r in rows)
    first = rows[0]
    pinn, series = float(first[-2]), float(first[header.index("series_price")])
    assert pinn == 2.9206 and float(first[-1]) == pytest.approx(100 * abs(pinn - series) / series)
    rh, risk_rows = read_csv(out / "risk.csv")
    assert len(risk_rows) == 6
    for r in risk_rows:
        assert float(r[rh.index("cvar99")]) >= float(r[rh.index("var99")])
    validator("risk_table").validate(json.loads((out / "risk.json").read_text()))
    assert len(stdout.strip().splitlines()) == 6


def test_table_parallel_matches_serial(tmp_path, capsys):
    ini = scenario_file(tmp_path, [("tiny_a", ""), ("tiny_b", "lam = 0.5\n")])
    serial, parallel = tmp_path / "s", tmp_path / "p"
    assert run(capsys, "--scenario-file", ini, "--out", serial, "table")[0] == 0
    assert run(capsys, "--scenario-file", ini, "--out", parallel, "--threads", "2", "table")[0] == 0
    for name in ("comparison.csv", "risk.csv", "risk.json", "tiny_a/manifest.json", "tiny_b/solution.json"):
        assert (serial / name).read_bytes() == (parallel / name).read_bytes(), name


def test_table_records_failures(tmp_path, capsys):
    ini = scenario_file(tmp_path, [("good", ""), ("boom", "adam1_lr = 1e200\n")])
    out = tmp_path / "t"
    code, _, err = run(capsys, "--scenario-file", ini, "--out", out, "table")
    assert code == 2 and "boom" in err
    failures = json.loads((out / "failures.json").read_text())
    validator("failures").validate(failures)
    assert failures["boom"]["status"] == "diverged" and "good" not in failures
    _, rows = read_csv(out / "comparison.csv")
    assert sum(r[-1] == "ok" for r in rows) == 4 and sum(r[-1] == "diverged" for r in rows) == 4


def test_table_only_filter(tmp_path, capsys):
    ini = scenario_file(tmp_path, [("tiny_a", ""), ("tiny_b", "")])
    out = tmp_path / "t"
    assert run(capsys, "--scenario-file", ini, "--out", out, "table", "--only", "tiny_b")[0] == 0
    _, rows = read_csv(out / "comparison.csv")
    assert {r[0] for r in rows} == {"tiny_b"}
    code, _, err = run(capsys, "--scenario-file", ini, "--out", out, "table", "--only", "nope")
    assert code == 1 and "nope" in err


def test_figures_are_rendered(tiny_fit, tmp_path, capsys):
    code, _, _ = run(capsys, "--scenario-file", tiny_fit["ini"], "--out", tmp_path, "fit", "--id", "tiny",
                     "--figures")
    d = tmp_path / "tiny"
    pngs = sorted(p.name for p in d.glob("*.png"))
    assert code == 0 and {"price_surface.png", "error_surface.png", "greeks.png", "loss_history.png",
                          "loss_distribution.png"} <= set(pngs)
    assert all((d / p).read_bytes()[:8] == b"\x89PNG\r\n\x1a\n" for p in pngs)
    assert set(pngs) <= set(json.loads((d / "manifest.json").read_text())["files"])


def test_bad_flags(capsys):
    with pytest.raises(SystemExit):
        main(["--threads", "0", "price", "--method", "bs"])
    with pytest.raises(SystemExit):
        main(["fit", "--grid", "fifty"])
