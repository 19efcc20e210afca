import json

import pytest

from fracbc.cli import EXIT_CONFIG, EXIT_OK, RunConfig, ConfigError, main


@pytest.fixture
def out(tmp_path):
    return tmp_path / "run"


def test_solve_writes_snapshots(out):
    code = main(["solve", "--alpha", "1.5", "--bc", "DD", "--n", "16", "--t", "0.5",
                 "--initial", "delta@0", "--times", "0.1,0.25", "--out", str(out)])
    assert code == EXIT_OK
    mass = (out / "mass.csv").read_text().splitlines()
    assert mass[0] == "t,mass,norm" and len(mass) == 4
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest) >= {"config", "seed", "artifact_version", "files"}
    assert "solution.csv" in manifest["files"]


def test_manifest_round_trip(out, tmp_path):
    main(["simulate", "--alpha", "1.4", "--bc", "NN", "--n", "8", "--t", "0.3", "--paths", "300",
          "--seed", "5", "--out", str(out)])
    again = tmp_path / "again"
    assert main(["simulate", "--config", str(out / "manifest.json"), "--out", str(again)]) == 0
    assert (out / "histogram.csv").read_bytes() == (again / "histogram.csv").read_bytes()


def test_verify_suite(out):
    assert main(["verify", "--suite", "theta", "--alpha", "1.5", "--out", str(out)]) == EXIT_OK
    report = json.loads((out / "verify.json").read_text())
    assert report and all(r["pass"] for r in report)


def test_compare_reports_z(out):
    code = main(["compare", "--alpha", "1.5", "--bc", "NN", "--n", "16", "--paths", "20000",
                 "--t", "0.5", "--out", str(out)])
    summary = json.loads((out / "compare.json").read_text())
    assert summary[0]["measured"] >= 0
    assert code == (EXIT_OK if summary[0]["pass"] else 1)
    assert (out / "compare_NN.csv").read_text().startswith("x,pde_density,mc_density")


def test_build_matrix(out):
    assert main(["build-matrix", "--alpha", "1.5", "--bc", "all", "--n", "6", "--out", str(out)]) == 0
    assert (out / "matrix_NsN.json").exists()


def test_plot_option(out):
    main(["solve", "--n", "8", "--plot", "--out", str(out)])
    assert (out / "solution.png").stat().st_size > 0


@pytest.mark.parametrize("args", [
    ["solve", "--alpha", "2.5"],
    ["solve", "--bc", "QQ"],
    ["solve", "--n", "1", "--alpha", "0.5"],
    ["verify", "--suite", "nothing"],
    ["solve", "--initial", "gauss"],
    ["solve", "--bc", "all"],
])
def test_config_errors(args, out, capsys):
    assert main(args + ["--out", str(out)]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_errors_are_aggregated(tmp_path):
    with pytest.raises(ConfigError) as exc:
        RunConfig("solve", alpha=3.0, bc="XY", n=0, output_dir=str(tmp_path)).validate()
    assert len(exc.value.problems) == 3


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("FRACBC_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["build-matrix", "--n", "4"]) == 0
    assert (tmp_path / "env" / "manifest.json").exists()
