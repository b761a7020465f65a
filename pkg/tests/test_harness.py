import hashlib
import json
import os

import numpy as np
import pytest

from dmaloc import ConfigError, dbm_to_mw
from dmaloc.cli import main as cli_main
from dmaloc.config import (
    apply_overrides,
    build_scenario,
    default_config_dict,
    load_config_tree,
    load_scenario,
)
from dmaloc.harness import (
    CSV_HEADER,
    ExperimentResult,
    emit,
    geometry_for_diagonal,
    run_fig2,
    run_fig3,
    run_fig4,
)

TINY_FIG2 = [
    "trials=3",
    "sweeps.p_max_dbm=[0.0,20.0]",
    "solvers=[projection,random]",
    "codebook.n_ranges=5",
    "codebook.n_azimuths=5",
    "pilots.t=16",
    "grid.r_step=0.05",
    "grid.phi_step_deg=3",
]


def file_hash(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


class TestConfig:
    def test_scale_presets_differ(self):
        desk = default_config_dict("desk")
        full = default_config_dict("full")
        assert desk["geom"]["n_e"] == 32 and full["geom"]["n_e"] == 256
        assert desk["trials"] == 50 and full["trials"] == 300
        assert full["radio"]["bandwidth"] == 150e3

    def test_unknown_scale(self):
        with pytest.raises(ConfigError):
            default_config_dict("huge")

    def test_overrides_nested_and_lists(self):
        tree = default_config_dict("desk")
        out = apply_overrides(
            tree, ["radio.f_c=100.0e9", "ues.1.r=0.5", "solvers=[greedy]", "solver.distinct=true"]
        )
        assert out["radio"]["f_c"] == 100.0e9
        assert out["ues"][1]["r"] == 0.5
        assert out["solvers"] == ["greedy"]
        assert out["solver"]["distinct"] is True

    def test_bad_override(self):
        with pytest.raises(ConfigError):
            apply_overrides(default_config_dict("desk"), ["no_equals_sign"])
        with pytest.raises(ConfigError):
            apply_overrides(default_config_dict("desk"), ["ues.9.r=1.0"])

    def test_invalid_values_rejected(self):
        with pytest.raises(ConfigError):
            build_scenario(apply_overrides(default_config_dict("desk"), ["radio.f_c=-1.0"]))
        with pytest.raises(ConfigError):
            build_scenario(apply_overrides(default_config_dict("desk"), ["pilots.t=2"]))

    def test_file_roundtrip_yaml_and_json(self, tmp_path):
        tree = default_config_dict("desk")
        tree["master_seed"] = 999
        ypath = tmp_path / "conf.yaml"
        import yaml

        ypath.write_text(yaml.safe_dump(tree))
        assert load_config_tree(str(ypath))["master_seed"] == 999
        jpath = tmp_path / "conf.json"
        jpath.write_text(json.dumps(tree))
        assert load_config_tree(str(jpath))["master_seed"] == 999

    def test_noise_floor_from_bandwidth(self):
        cfg = load_scenario(scale="full")
        assert 10 * np.log10(cfg.radio.noise_power) == pytest.approx(-122.239, abs=0.001)

    def test_geometry_derived_from_wavelength(self):
        cfg = load_scenario()
        lam = cfg.radio.wavelength
        assert cfg.geom.d_rf == pytest.approx(lam / 2)
        assert cfg.geom.d_e == pytest.approx(lam / 5)
        assert cfg.geom.beta_wg == pytest.approx(2 * np.pi / lam)

    def test_config_hash_stable(self):
        a = load_scenario()
        b = load_scenario()
        assert a.config_hash() == b.config_hash()
        c = load_scenario(overrides=["master_seed=1"])
        assert c.config_hash() != a.config_hash()


class TestGeometryForDiagonal:
    def test_square_aspect(self):
        cfg = load_scenario()
        geom = geometry_for_diagonal(cfg, 0.4, cfg.radio.wavelength / 5, False)
        ext_x = (geom.n_rf - 1) * geom.d_rf
        ext_z = (geom.n_e - 1) * geom.d_e
        assert ext_x == pytest.approx(0.4 / np.sqrt(2), rel=1e-12)
        assert ext_z == pytest.approx(0.4 / np.sqrt(2), rel=0.02)
        assert geom.diagonal_length == pytest.approx(0.4, rel=0.02)

    def test_identity_waveguide(self):
        cfg = load_scenario()
        geom = geometry_for_diagonal(cfg, 0.4, cfg.radio.wavelength / 2, True)
        assert geom.alpha_wg == 0.0 and geom.beta_wg == 0.0


@pytest.fixture(scope="module")
def fig2_result():
    return run_fig2(load_scenario(overrides=TINY_FIG2))


class TestRunFig2:
    @pytest.fixture
    def result(self, fig2_result):
        return fig2_result

    def test_records_sorted_and_complete(self, result):
        recs = result.sorted_records()
        assert recs == result.records
        metrics = {(r["solver"], r["metric"]) for r in recs}
        for solver in ("projection", "random"):
            for metric in ("rmse", "peb", "crb", "trace_bound", "objective"):
                assert (solver, metric) in metrics

    def test_bound_relation(self, result):
        for solver in ("projection", "random"):
            crb = dict(result.values(solver, "crb"))
            tb = dict(result.values(solver, "trace_bound"))
            for sweep in crb:
                assert crb[sweep] >= tb[sweep] - 1e-12 * abs(crb[sweep])

    def test_peb_power_law(self, result):
        pebs = result.values("projection", "peb")
        prods = [v * np.sqrt(dbm_to_mw(p)) for p, v in pebs]
        assert max(prods) - min(prods) <= 1e-9 * prods[0]

    def test_thread_independence(self):
        a = run_fig2(load_scenario(overrides=TINY_FIG2))
        b = run_fig2(load_scenario(overrides=TINY_FIG2 + ["threads=2"]))
        sa = [{k: r[k] for k in ("sweep", "solver", "metric", "value")} for r in a.sorted_records()]
        sb = [{k: r[k] for k in ("sweep", "solver", "metric", "value")} for r in b.sorted_records()]
        assert sa == sb


class TestRunFig3:
    def test_structure_and_labels(self):
        result = run_fig3(
            load_scenario(
                overrides=[
                    "sweeps.diagonals=[0.35,0.45]",
                    "sweeps.fig3_solvers=[projection]",
                    "codebook.n_ranges=5",
                    "codebook.n_azimuths=5",
                ]
            )
        )
        solvers = {r["solver"] for r in result.records}
        assert {"dma:projection", "hbf:projection", "dma:best", "hbf:best", "dma", "hbf"} <= solvers
        for rec in result.records:
            if rec["metric"] == "peb":
                assert np.isfinite(rec["value"]) and rec["value"] > 0


class TestRunFig4:
    def test_maps_and_reproducibility(self):
        overrides = [
            "pilots.t=16",
            "codebook.n_ranges=5",
            "codebook.n_azimuths=5",
            "sweeps.map_r_step=0.3",
            "sweeps.map_phi_step_deg=30",
        ]
        a = run_fig4(load_scenario(overrides=overrides))
        b = run_fig4(load_scenario(overrides=overrides))
        assert set(a.maps) == {"fig4_map_projection", "fig4_map_greedy"}
        for name in a.maps:
            ma, mb = a.maps[name], b.maps[name]
            grid = ma.grid
            assert ma.errors.shape == (grid.ranges.size, grid.azimuths.size)
            assert np.array_equal(ma.errors, mb.errors, equal_nan=True)
            finite = ma.errors[np.isfinite(ma.errors)]
            assert np.all(finite >= 0)


class TestEmit:
    def test_csv_contract_and_determinism(self, tmp_path):
        result = run_fig2(load_scenario(overrides=TINY_FIG2))
        d1, d2 = tmp_path / "a", tmp_path / "b"
        emit(result, "csv", str(d1))
        emit(result, "csv", str(d2))
        csv1, csv2 = d1 / "results.csv", d2 / "results.csv"
        assert csv1.read_text().splitlines()[0] == CSV_HEADER
        assert file_hash(csv1) == file_hash(csv2)
        sidecar = json.loads((d1 / "config.json").read_text())
        assert {"config", "provenance", "timing", "notices"} <= set(sidecar)
        assert sidecar["provenance"]["master_seed"] == 20260810

    def test_empty_result_header_only(self, tmp_path):
        result = ExperimentResult(records=[], config={}, provenance={})
        (path,) = [p for p in emit(result, "csv", str(tmp_path / "empty")) if p.endswith(".csv")]
        assert open(path).read() == CSV_HEADER + "\n"

    def test_map_long_format(self, tmp_path):
        result = run_fig4(
            load_scenario(
                overrides=[
                    "pilots.t=16",
                    "codebook.n_ranges=4",
                    "codebook.n_azimuths=4",
                    "sweeps.map_r_step=0.3",
                    "sweeps.map_phi_step_deg=30",
                ]
            )
        )
        files = emit(result, "csv", str(tmp_path / "fig4"))
        map_files = [f for f in files if "fig4_map" in f]
        assert len(map_files) == 2
        lines = open(map_files[0]).read().splitlines()
        assert lines[0] == "r,phi,error"
        grid = result.maps["fig4_map_projection"].grid
        assert len(lines) == 1 + grid.ranges.size * grid.azimuths.size

    def test_json_mode(self, tmp_path):
        result = run_fig2(load_scenario(overrides=TINY_FIG2))
        (path,) = emit(result, "json", str(tmp_path / "j"))
        doc = json.loads(open(path).read())
        assert doc["records"] == result.sorted_records()

    def test_bad_format(self, tmp_path):
        with pytest.raises(ConfigError):
            emit(ExperimentResult(records=[], config={}, provenance={}), "xml", str(tmp_path))

    def test_config_roundtrip_reproduces_results(self, tmp_path):
        result = run_fig2(load_scenario(overrides=TINY_FIG2))
        out = tmp_path / "run1"
        emit(result, "csv", str(out))
        saved = json.loads((out / "config.json").read_text())["config"]
        conf_path = tmp_path / "replay.json"
        conf_path.write_text(json.dumps(saved))
        replay = run_fig2(load_scenario(path=str(conf_path)))
        out2 = tmp_path / "run2"
        emit(replay, "csv", str(out2))
        assert file_hash(out / "results.csv") == file_hash(out2 / "results.csv")


class TestCli:
    def test_codebook_command(self, tmp_path):
        out = tmp_path / "cb.json"
        rc = cli_main(["codebook", "--out", str(out), "--set", "codebook.n_ranges=4",
                       "--set", "codebook.n_azimuths=4"])
        assert rc == 0
        doc = json.loads(out.read_text())
        assert doc["bits"] == 3 and len(doc["vectors"]) >= 1

    def test_design_command(self, tmp_path, capsys):
        rc = cli_main(["design", "--solver", "greedy", "--set", "codebook.n_ranges=4",
                       "--set", "codebook.n_azimuths=4"])
        assert rc == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["solver"] == "greedy"
        assert len(doc["weights"]) == 4

    def test_peb_command(self, capsys):
        rc = cli_main(["peb", "--set", "codebook.n_ranges=4", "--set", "codebook.n_azimuths=4"])
        assert rc == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["peb"] > 0 and doc["crb"] >= doc["trace_bound"]

    def test_fig2_writes_outputs(self, tmp_path):
        args = ["fig2", "--out", str(tmp_path / "f2")]
        for o in TINY_FIG2:
            args += ["--set", o]
        rc = cli_main(args)
        assert rc == 0
        assert (tmp_path / "f2" / "results.csv").exists()
        assert (tmp_path / "f2" / "config.json").exists()

    def test_config_error_exit_code(self):
        assert cli_main(["peb", "--set", "radio.f_c=-5.0"]) == 2
        assert cli_main(["peb", "--set", "not-an-assignment"]) == 2

    def test_numerical_failure_exit_code(self):
        # single strip, single element: azimuth unobservable, Fisher singular
        rc = cli_main([
            "peb", "--set", "geom.n_rf=1", "--set", "geom.n_e=1",
            "--set", "codebook.n_ranges=2", "--set", "codebook.n_azimuths=2",
        ])
        assert rc == 3

    def test_seed_and_solver_flags(self, tmp_path):
        out = tmp_path / "flags"
        args = ["fig2", "--out", str(out), "--seed", "42", "--solver", "projection", "--format", "json"]
        for o in TINY_FIG2:
            args += ["--set", o]
        rc = cli_main(args)
        assert rc == 0
        doc = json.loads((out / "results.json").read_text())
        assert doc["provenance"]["master_seed"] == 42
        assert {r["solver"] for r in doc["records"]} == {"projection"}
