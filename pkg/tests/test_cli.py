import json

import numpy as np
import pytest
from click.testing import CliRunner

from sgwinv.cli import (
    CONFIG_SCHEMA,
    build_sweep_config,
    load_config,
    main,
    resolve_run_dir,
)
from sgwinv.errors import ConfigError
from sgwinv.matio import read_matrix, write_matrix
from sgwinv.runio import RECORD_FIELDS, read_manifest, read_records

TINY_CONFIG = {
    "mesh": {"icosphere": {"subdivisions": 1, "radius": 0.1}},
    "forward": {"n_sensors": 12, "noise_condition": 4.0},
    "sweep": {"sizes": {"small": 3, "large": 8}, "n_patches": 2, "psnr": 4.0, "L": 16},
    "solvers": [{"name": "mne"}, {"name": "mce", "max_iters": 300}],
    "master_seed": 7,
}


def write_config(path, document=TINY_CONFIG, **overrides):
    document = {**document, **overrides}
    path.write_text(json.dumps(document, indent=2) + "\n")
    return path


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def config_path(workdir):
    return write_config(workdir / "config.json")


@pytest.fixture(scope="module")
def sweep_run(workdir, config_path):
    """One completed sweep, shared by the read-only assertions below."""
    out = workdir / "sweep-run"
    result = CliRunner().invoke(
        main,
        ["sweep", "--config", str(config_path), "--out", str(out), "--threads", "1"],
    )
    assert result.exit_code == 0, result.output
    return out


def invoke(*args):
    return CliRunner().invoke(main, [str(a) for a in args])


class TestConfigLoading:
    def test_valid_document_passes_schema(self, config_path):
        document = load_config(config_path)
        assert document["sweep"]["n_patches"] == 2

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("not json {")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_config(path)

    def test_schema_violation_names_the_path(self, tmp_path):
        path = write_config(
            tmp_path / "bad.json", mesh={"icosphere": {"subdivisions": 9}}
        )
        with pytest.raises(ConfigError, match="subdivisions"):
            load_config(path)

    def test_unknown_top_level_key_rejected(self, tmp_path):
        path = write_config(tmp_path / "bad.json", typo_section={})
        with pytest.raises(ConfigError):
            load_config(path)

    def test_mesh_needs_exactly_one_source(self, tmp_path):
        path = write_config(
            tmp_path / "bad.json",
            mesh={"icosphere": {"subdivisions": 1}, "file": "x.off"},
        )
        with pytest.raises(ConfigError):
            load_config(path)

    def test_unknown_solver_rejected(self, config_path):
        document = load_config(config_path)
        document["solvers"] = [{"name": "magic"}]
        with pytest.raises(ConfigError, match="unknown solver"):
            build_sweep_config(document)

    def test_sweep_section_required_for_sweeps(self, config_path):
        document = {k: v for k, v in load_config(config_path).items() if k != "sweep"}
        with pytest.raises(ConfigError, match="sweep"):
            build_sweep_config(document)

    def test_solver_lambda_key_maps_through(self, config_path):
        document = load_config(config_path)
        document["solvers"] = [{"name": "mce", "lambda": 0.5, "max_iters": 10}]
        config = build_sweep_config(document)
        assert config.solvers[0].config.lambda_ == 0.5

    def test_schema_is_valid_draft07(self):
        import jsonschema

        jsonschema.Draft7Validator.check_schema(CONFIG_SCHEMA)


class TestExitCodes:
    def test_config_error_exits_2(self, tmp_path):
        path = write_config(
            tmp_path / "bad.json", mesh={"icosphere": {"subdivisions": 9}}
        )
        result = invoke("mesh-info", "--config", path)
        assert result.exit_code == 2
        assert "error:" in result.output

    def test_missing_config_exits_2(self, tmp_path):
        result = invoke("mesh-info", "--config", tmp_path / "nope.json")
        assert result.exit_code == 2

    def test_missing_records_exits_4(self, tmp_path):
        result = invoke("report", "--run", tmp_path / "empty")
        assert result.exit_code == 4
        assert "no records found" in result.output

    def test_solve_without_scenarios_exits_4(self, workdir, config_path):
        out = workdir / "no-scenarios"
        out.mkdir()
        (out / "config.json").write_text(config_path.read_text())
        result = invoke("solve", "--run", out)
        assert result.exit_code == 4
        assert "no scenarios" in result.output

    def test_corrupt_scenario_exits_3(self, workdir, config_path):
        out = workdir / "corrupt-run"
        result = invoke("simulate", "--config", config_path, "--out", out)
        assert result.exit_code == 0, result.output
        path = out / "scenarios" / "small-0000" / "S_sim.mtx"
        write_matrix(path, 2.0 * read_matrix(path))
        result = invoke("solve", "--run", out)
        assert result.exit_code == 3


class TestMeshInfo:
    def test_reports_counts(self, config_path):
        result = invoke("mesh-info", "--config", config_path)
        assert result.exit_code == 0
        assert "42" in result.output
        assert "euler characteristic" in result.output

    def test_reads_off_file(self, tmp_path):
        off = tmp_path / "tetra.off"
        off.write_text(
            "OFF\n4 4 6\n"
            "0 0 0\n1 0 0\n0 1 0\n0 0 1\n"
            "3 0 1 2\n3 0 1 3\n3 0 2 3\n3 1 2 3\n"
        )
        path = write_config(tmp_path / "config.json", mesh={"file": str(off)})
        result = invoke("mesh-info", "--config", path)
        assert result.exit_code == 0, result.output
        assert "4" in result.output

    def test_missing_mesh_file_exits_2(self, tmp_path):
        path = write_config(tmp_path / "config.json", mesh={"file": "gone.off"})
        result = invoke("mesh-info", "--config", path)
        assert result.exit_code == 2


class TestDiagnoseFrame:
    def test_reports_bounds_and_quality(self, workdir, config_path):
        out = workdir / "diag"
        result = invoke("diagnose-frame", "--config", config_path, "--out", out)
        assert result.exit_code == 0, result.output
        values = {}
        for line in result.output.splitlines():
            if len(line.split()) >= 2:
                parts = line.rsplit(None, 1)
                values[parts[0].strip()] = parts[1]
        assert abs(float(values["sqrt(A)"]) - 0.708) < 0.01
        assert abs(float(values["sqrt(B)"]) - 1.390) < 0.01
        assert abs(float(values["quality factor Q"]) - 1.379) < 0.01

    def test_writes_kernel_curve_table(self, workdir, config_path):
        # depends on the previous test having populated workdir/diag
        out = workdir / "diag"
        if not (out / "kernel-curves.csv").exists():
            invoke("diagnose-frame", "--config", config_path, "--out", out)
        with open(out / "kernel-curves.csv") as fh:
            header = fh.readline().strip()
        assert header == "lambda,h,g1,g2,g3"
        table = np.loadtxt(out / "kernel-curves.csv", delimiter=",", skiprows=1)
        assert table.shape == (512, 5)
        assert table[0, 0] == 0.0
        # h dominates at dc, wavelets vanish there
        assert table[0, 1] > 0
        np.testing.assert_allclose(table[0, 2:], 0.0, atol=1e-12)


class TestSweep:
    def test_run_layout(self, sweep_run):
        for rel in (
            "manifest.json",
            "config.json",
            "metrics/records.csv",
            "metrics/aggregates.json",
            "metrics/aggregates.csv",
            "metrics/tables.txt",
            "scenarios/small-0000/Z_sim.mtx",
            "estimates/small-0000/mne.mtx",
        ):
            assert (sweep_run / rel).exists(), rel

    def test_manifest_contents(self, sweep_run):
        manifest = read_manifest(sweep_run)
        assert manifest["master_seed"] == 7
        assert len(manifest["config_sha256"]) == 64
        assert manifest["version"]

    def test_record_count_and_order(self, sweep_run):
        records = read_records(sweep_run)
        assert len(records) == 8
        key = [(r["size"], r["index"], r["solver"]) for r in records]
        assert key == [
            (size, index, solver)
            for size in ("small", "large")
            for index in (0, 1)
            for solver in ("mne", "mce")
        ]

    def test_stored_config_preserves_size_order(self, sweep_run):
        stored = json.loads((sweep_run / "config.json").read_text())
        assert list(stored["sweep"]["sizes"]) == ["small", "large"]

    def test_tables_rendered(self, sweep_run):
        tables = (sweep_run / "metrics" / "tables.txt").read_text()
        assert "normalized spatial dispersion" in tables
        assert "solver=mne" in tables

    def test_aggregate_csv_layout(self, sweep_run):
        lines = (sweep_run / "metrics" / "aggregates.csv").read_text().splitlines()
        assert lines[0] == "size,solver,metric,n,mean,median,std,iqd"
        # 2 sizes x 2 solvers x 3 metrics
        assert len(lines) == 1 + 12


class TestPipelineEquivalence:
    def test_split_pipeline_matches_sweep(self, workdir, config_path, sweep_run):
        out = workdir / "split-run"
        for args in (
            ["simulate", "--config", config_path, "--out", out],
            ["solve", "--run", out],
            ["report", "--run", out],
        ):
            result = invoke(*args)
            assert result.exit_code == 0, result.output
        ours = (out / "metrics" / "records.csv").read_bytes()
        theirs = (sweep_run / "metrics" / "records.csv").read_bytes()
        assert ours == theirs

    def test_rerun_with_same_seed_is_bit_identical(self, workdir, config_path, sweep_run):
        out = workdir / "rerun"
        result = invoke(
            "sweep", "--config", config_path, "--out", out, "--threads", "1"
        )
        assert result.exit_code == 0, result.output
        assert (out / "metrics" / "records.csv").read_bytes() == (
            sweep_run / "metrics" / "records.csv"
        ).read_bytes()

    def test_seed_flag_changes_the_draw(self, workdir, config_path, sweep_run):
        out = workdir / "seed8"
        result = invoke(
            "sweep", "--config", config_path, "--seed", 8, "--out", out,
            "--threads", "1",
        )
        assert result.exit_code == 0, result.output
        assert read_manifest(out)["master_seed"] == 8
        assert (out / "metrics" / "records.csv").read_bytes() != (
            sweep_run / "metrics" / "records.csv"
        ).read_bytes()

    def test_report_idempotent(self, sweep_run):
        metrics = sweep_run / "metrics"
        before = {
            name: (metrics / name).read_bytes()
            for name in ("aggregates.json", "aggregates.csv", "tables.txt")
        }
        result = invoke("report", "--run", sweep_run)
        assert result.exit_code == 0
        for name, blob in before.items():
            assert (metrics / name).read_bytes() == blob

    def test_solve_config_override_changes_solvers(self, workdir, config_path):
        out = workdir / "override-run"
        result = invoke("simulate", "--config", config_path, "--out", out)
        assert result.exit_code == 0, result.output
        alt = write_config(workdir / "mne-only.json", solvers=[{"name": "mne"}])
        result = invoke("solve", "--run", out, "--config", alt)
        assert result.exit_code == 0, result.output
        records = read_records(out)
        assert {r["solver"] for r in records} == {"mne"}
        assert len(records) == 4


class TestOutputRoot:
    def test_env_var_sets_default_root(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SGWINV_OUT", str(tmp_path / "roots"))
        path = write_config(tmp_path / "config.json")
        result = invoke("simulate", "--config", path)
        assert result.exit_code == 0, result.output
        runs = list((tmp_path / "roots").iterdir())
        assert len(runs) == 1
        assert runs[0].name.startswith("run-")
        assert runs[0].name.endswith("-s7")

    def test_run_dir_name_depends_on_config_not_key_order(self):
        document = {"mesh": {"icosphere": {"subdivisions": 1}}, "master_seed": 0}
        shuffled = {"master_seed": 0, "mesh": {"icosphere": {"subdivisions": 1}}}
        assert resolve_run_dir(None, document, 0) == resolve_run_dir(
            None, shuffled, 0
        )

    def test_record_header_matches_field_tuple(self, sweep_run):
        header = (
            (sweep_run / "metrics" / "records.csv").read_text().splitlines()[0]
        )
        assert header == ",".join(RECORD_FIELDS)
