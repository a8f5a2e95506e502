import json

import pytest
import yaml

from freefock.cli import load_config, main, run_compare
from freefock.errors import ConfigError

BASE_CONFIG = {
    "model": {
        "kind": "oscillator",
        "omega": 1.0,
        "dt": 0.15,
        "T": 8,
        "lambda": 0.02,
        "q": 0.0,
        "forcing": 0.3,
        "x0_mean": 0.4,
        "v0_mean": 0.1,
        "interaction_rows": "interior",
    },
    "truncation": {"L": 4},
    "solver": {"method": "perturb", "order": 2},
    "oracle": {
        "mean": [0.4, 0.1],
        "cov": [[0.04, 0.0], [0.0, 0.01]],
        "samples": 8000,
        "seed": 42,
        "max_order": 4,
    },
    "compare": {"words": "level1_interior", "sigma": 3.0, "abs_slack": 1e-6, "rows": "equation"},
}

ALGEBRA_CONFIG = {
    "model": {
        "kind": "oscillator",
        "omega": 1.0,
        "dt": 0.3,
        "T": 5,
        "lambda": 0.05,
        "q": 0.3,
        "forcing": 0.4,
        "x0_mean": 0.3,
        "v0_mean": 0.1,
        "interaction_rows": "all",
    },
    "truncation": {"L": 3},
}


def write_config(tmp_path, doc, name="exp.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc))
    return str(path)


class TestConfig:
    def test_loads(self, tmp_path):
        path = write_config(tmp_path, BASE_CONFIG)
        doc = load_config(path)
        assert doc["model"]["kind"] == "oscillator"

    def test_malformed_names_offending_key(self, tmp_path):
        bad = {"model": {"kind": "oscillator", "T": 2}, "truncation": {"L": 3}}
        path = write_config(tmp_path, bad)
        with pytest.raises(ConfigError) as info:
            load_config(path)
        assert "model.T" in str(info.value)

    def test_unknown_key_rejected(self, tmp_path):
        bad = {"model": {"kind": "oscillator"}, "truncation": {"L": 2}, "bogus": 1}
        path = write_config(tmp_path, bad)
        with pytest.raises(ConfigError):
            load_config(path)

    def test_malformed_exit_code(self, tmp_path, capsys):
        bad = {"model": {"kind": "oscillator", "T": 2}, "truncation": {"L": 3}}
        path = write_config(tmp_path, bad)
        assert main(["model", "validate", "--config", path]) == 1
        assert "model.T" in capsys.readouterr().err


class TestModelValidate:
    def test_validate_writes_json(self, tmp_path, capsys):
        path = write_config(tmp_path, ALGEBRA_CONFIG)
        out = tmp_path / "diag.json"
        assert main(["model", "validate", "--config", path, "--json", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["ok"] is True
        assert doc["green_residual"] <= 1e-10
        assert "green's function" in capsys.readouterr().out


class TestAlgebraCheck:
    def test_default_catalog_passes(self, tmp_path):
        path = write_config(tmp_path, ALGEBRA_CONFIG)
        out = tmp_path / "alg.json"
        assert main(["algebra", "check", "--config", path, "--json", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["ok"] is True
        assert all(r["pass"] is not False for r in doc["identities"])

    def test_zero_source_marked_skipped(self, tmp_path):
        cfg = json.loads(json.dumps(ALGEBRA_CONFIG))
        cfg["model"]["forcing"] = 0.0
        cfg["model"]["x0_mean"] = 0.0
        cfg["model"]["v0_mean"] = 0.0
        path = write_config(tmp_path, cfg)
        out = tmp_path / "alg.json"
        assert main(["algebra", "check", "--config", path, "--json", str(out)]) == 0
        doc = json.loads(out.read_text())
        skipped = {r["id"]: r["skipped_reason"] for r in doc["identities"] if r["skipped_reason"]}
        assert "left_inverse_source" in skipped

    def test_resonant_deformation_surfaced(self, tmp_path):
        cfg = json.loads(json.dumps(ALGEBRA_CONFIG))
        cfg["model"]["q"] = 1.0  # local kernel: 1 + O(z) = (1-q)^2 = 0
        path = write_config(tmp_path, cfg)
        out = tmp_path / "alg.json"
        assert main(["algebra", "check", "--config", path, "--json", str(out)]) == 0
        doc = json.loads(out.read_text())
        by_id = {r["id"]: r for r in doc["identities"]}
        assert by_id["deformed_right_inverse"]["skipped_reason"]
        assert by_id["right_inverse_interaction"]["pass"] is True


class TestSolve:
    def test_solve_outputs(self, tmp_path):
        path = write_config(tmp_path, BASE_CONFIG)
        outdir = tmp_path / "out"
        assert main(["solve", "--config", path, "--out", str(outdir)]) == 0
        report = json.loads((outdir / "run_solve.json").read_text())
        assert report["method"] == "perturbation"
        csv_text = (outdir / "run_correlations.csv").read_text()
        assert csv_text.splitlines()[0] == "word,value"

    @pytest.mark.parametrize("method", ["triangular", "closed", "rational"])
    def test_other_methods_run(self, tmp_path, method):
        cfg = json.loads(json.dumps(BASE_CONFIG))
        cfg["model"]["interaction_rows"] = "all"
        cfg["solver"] = {"method": method}
        if method == "rational":
            cfg["solver"]["lambda"] = 0.03
        if method == "closed":
            cfg["truncation"]["L"] = 3  # materialized route; stay inside the budget
        path = write_config(tmp_path, cfg)
        outdir = tmp_path / "out"
        assert main(["solve", "--config", path, "--out", str(outdir)]) == 0

    def test_lambda_flag_overrides_model_coupling(self, tmp_path):
        cfg = json.loads(json.dumps(BASE_CONFIG))
        path = write_config(tmp_path, cfg)
        outdir = tmp_path / "out"
        assert main(["solve", "--config", path, "--lambda", "0.0", "--order", "3",
                     "--out", str(outdir)]) == 0
        report = json.loads((outdir / "run_solve.json").read_text())
        # with the coupling zeroed the series collapses to the free solution,
        # whose residual is pure Green's-function float noise
        assert all(v <= 1e-12 for v in report["residual"]["per_level"].values())

    def test_oracle_seed_mode(self, tmp_path):
        cfg = json.loads(json.dumps(BASE_CONFIG))
        cfg["solver"]["seed_mode"] = "oracle"
        cfg["oracle"]["samples"] = 2000
        path = write_config(tmp_path, cfg)
        outdir = tmp_path / "out"
        assert main(["solve", "--config", path, "--out", str(outdir)]) == 0
        report = json.loads((outdir / "run_solve.json").read_text())
        assert report["manifest"]["seed_mode"] == "oracle"


class TestOracleRun:
    def test_outputs_and_manifest(self, tmp_path):
        path = write_config(tmp_path, BASE_CONFIG)
        outdir = tmp_path / "out"
        assert main(["oracle", "run", "--config", path, "--samples", "500",
                     "--max-order", "2", "--out", str(outdir)]) == 0
        lines = (outdir / "run_mtcf.csv").read_text().splitlines()
        assert lines[0] == "word,value,stderr"
        manifest = json.loads((outdir / "run_manifest.json").read_text())
        assert manifest["samples"] == 500
        assert manifest["seed"] == 42
        assert "integrator" in manifest
        # byte determinism forbids wall-clock fields
        assert "runtime" not in manifest

    def test_smear_flag(self, tmp_path):
        path = write_config(tmp_path, BASE_CONFIG)
        outdir = tmp_path / "out"
        assert main(["oracle", "run", "--config", path, "--samples", "200",
                     "--max-order", "1", "--smear", "0:0.5,1:0.5", "--out", str(outdir)]) == 0


class TestCompare:
    def test_passes_and_exit_zero(self, tmp_path):
        path = write_config(tmp_path, BASE_CONFIG)
        outdir = tmp_path / "out"
        assert main(["compare", "--config", path, "--out", str(outdir)]) == 0
        doc = json.loads((outdir / "run_compare.json").read_text())
        assert doc["pass"] is True
        assert all(c["pass"] for c in doc["comparisons"])
        assert all(v["pass"] for v in doc["residual_checks"].values())

    def test_failure_gives_exit_two(self, tmp_path):
        cfg = json.loads(json.dumps(BASE_CONFIG))
        # order-0 series ignores the interaction entirely; with a tiny
        # tolerance and no slack the comparison must fail
        cfg["solver"]["order"] = 0
        cfg["model"]["lambda"] = 0.4
        cfg["compare"]["sigma"] = 0.001
        cfg["compare"]["abs_slack"] = 0.0
        path = write_config(tmp_path, cfg)
        outdir = tmp_path / "out"
        assert main(["compare", "--config", path, "--out", str(outdir)]) == 2

    def test_byte_identical_reruns(self, tmp_path):
        path = write_config(tmp_path, BASE_CONFIG)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["compare", "--config", path, "--out", str(out1)]) == 0
        assert main(["compare", "--config", path, "--out", str(out2)]) == 0
        assert (out1 / "run_compare.json").read_bytes() == (out2 / "run_compare.json").read_bytes()
        assert (out1 / "run_compare.csv").read_bytes() == (out2 / "run_compare.csv").read_bytes()

    def test_run_compare_api(self, tmp_path):
        report, ok = run_compare(json.loads(json.dumps(BASE_CONFIG)))
        assert ok
        assert report["max_delta_over_stderr"] <= 3.0
