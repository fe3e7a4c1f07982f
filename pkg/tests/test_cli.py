"""End-to-end CLI behavior: bundles, audits, exit codes, config precedence."""

import json
import sys
import types

import pytest

from fairlens.cli import main

SYNTH_ARGS = [
    "synth",
    "--seed", "7",
    "--patients", "80",
    "--chapters", "5",
    "--groups-per-chapter", "6",
    "--fine-per-group", "4",
]


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    out = tmp_path_factory.mktemp("bundle")
    code = main(SYNTH_ARGS + ["--out", str(out)])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def audited(bundle, tmp_path_factory):
    """A stored report over the bundle with a fast explain budget."""
    tmp = tmp_path_factory.mktemp("audited")
    config = {
        "seed": 5,
        "inspect_top": 2,
        "explain": {"n_samples": 120, "max_instances": 4},
    }
    config_path = tmp / "audit.json"
    config_path.write_text(json.dumps(config), encoding="utf-8")
    report_path = tmp / "report.json"
    store = tmp / "store"
    code = main([
        "audit",
        "--data", str(bundle),
        "--config", str(config_path),
        "--out", str(report_path),
        "--store", str(store),
    ])
    assert code == 0
    payload = json.loads(report_path.read_text(encoding="utf-8"))
    return bundle, report_path, store, payload


class TestSynth:
    def test_bundle_files_and_manifest(self, bundle, capsys):
        for name in ("patients.jsonl", "schema.json", "group_map.csv", "ontology.tsv"):
            assert (bundle / name).exists(), name
        # 5 chapters x 6 groups = 30 grouped codes, 4 fine each.
        lines = (bundle / "group_map.csv").read_text(encoding="utf-8").splitlines()
        assert len(lines) == 1 + 30 * 4

    def test_deterministic_bundles(self, bundle, tmp_path, capsys):
        again = tmp_path / "again"
        assert main(SYNTH_ARGS + ["--out", str(again)]) == 0
        capsys.readouterr()
        assert (again / "patients.jsonl").read_bytes() == (
            bundle / "patients.jsonl"
        ).read_bytes()

    def test_missing_seed_is_usage_error(self, tmp_path, capsys):
        assert main(["synth", "--out", str(tmp_path / "x"), "--patients", "10"]) == 1
        assert "requires --seed" in capsys.readouterr().err

    def test_unknown_flag_exits_one(self, capsys):
        assert main(["synth", "--frobnicate"]) == 1

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        assert "synth" in capsys.readouterr().out


class TestAudit:
    def test_report_written_and_stored(self, audited, capsys):
        _, report_path, store, payload = audited
        assert payload["ranking"], "ranked groups expected"
        assert (store / f"{payload['id']}.json").exists()
        stored = json.loads(
            (store / f"{payload['id']}.json").read_text(encoding="utf-8")
        )
        assert stored["id"] == payload["id"]
        # Paths recorded for later on-demand recomputation.
        assert payload["metadata"]["paths"]["patients"].endswith("patients.jsonl")

    def test_flag_overrides_config(self, audited, tmp_path, capsys):
        bundle, _, _, payload = audited
        config = tmp_path / "c.json"
        config.write_text(json.dumps({"seed": 5, "min_group_size": 10}), encoding="utf-8")
        out = tmp_path / "r.json"
        code = main([
            "audit", "--data", str(bundle), "--config", str(config),
            "--min-group-size", "40", "--out", str(out),
        ])
        assert code == 0
        written = json.loads(out.read_text(encoding="utf-8"))
        assert written["metadata"]["config"]["min_group_size"] == 40
        for row in written["excluded"]:
            assert row["size"] < 40

    def test_requires_a_sink(self, audited, capsys):
        bundle = audited[0]
        assert main(["audit", "--data", str(bundle), "--seed", "5"]) == 1
        assert "--out and/or --store" in capsys.readouterr().err

    def test_requires_a_seed(self, audited, tmp_path, capsys):
        bundle = audited[0]
        out = tmp_path / "r.json"
        assert main(["audit", "--data", str(bundle), "--out", str(out)]) == 1
        assert "--seed" in capsys.readouterr().err

    def test_missing_bundle_is_data_error(self, tmp_path, capsys):
        out = tmp_path / "r.json"
        code = main([
            "audit", "--data", str(tmp_path / "nope"), "--seed", "1",
            "--out", str(out),
        ])
        assert code == 2

    def test_bad_metric_is_usage_error(self, audited, tmp_path, capsys):
        bundle = audited[0]
        code = main([
            "audit", "--data", str(bundle), "--seed", "1",
            "--metric", "emd", "--out", str(tmp_path / "r.json"),
        ])
        assert code == 1

    def test_unreachable_blackbox_exits_three(self, audited, tmp_path, capsys):
        bundle = audited[0]
        code = main([
            "audit", "--data", str(bundle), "--seed", "1",
            "--blackbox", "http://127.0.0.1:9/predict",
            "--out", str(tmp_path / "r.json"),
        ])
        assert code == 3
        assert "black-box error" in capsys.readouterr().err


class TestInspect:
    def test_cached_inspection_prints(self, audited, capsys):
        _, report_path, _, payload = audited
        gid = payload["ranking"][0]["group"]
        assert gid in payload["inspections"]
        assert main(["inspect", "--report", str(report_path), "--group", gid]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["group"] == gid
        assert out["entries"]

    def test_on_demand_inspection_updates_report(self, audited, capsys):
        bundle, report_path, _, payload = audited
        gid = payload["ranking"][3]["group"]  # beyond inspect_top=2
        assert gid not in payload["inspections"]
        code = main([
            "inspect", "--report", str(report_path), "--group", gid,
            "--data", str(bundle),
        ])
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert out["group"] == gid
        updated = json.loads(report_path.read_text(encoding="utf-8"))
        assert updated["inspections"][gid] == out
        assert updated["id"] == payload["id"]  # cache does not move the id

    def test_unknown_group_exits_two(self, audited, capsys):
        _, report_path, _, _ = audited
        assert main([
            "inspect", "--report", str(report_path), "--group", "gender=Martian",
        ]) == 2


class TestExplain:
    def test_on_demand_explain_updates_report(self, audited, capsys):
        bundle, report_path, _, payload = audited
        gid = payload["ranking"][0]["group"]
        code_token = payload["inspections"][gid]["top_over"][0]["code"]
        code = main([
            "explain", "--report", str(report_path), "--group", gid,
            "--code", code_token, "--data", str(bundle),
        ])
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert out["code"] == code_token
        assert out["drivers"]
        updated = json.loads(report_path.read_text(encoding="utf-8"))
        assert updated["explanations"][f"{gid}|{code_token}|over"] == out
        # Second call replays the cache byte-for-byte.
        assert main([
            "explain", "--report", str(report_path), "--group", gid,
            "--code", code_token, "--data", str(bundle),
        ]) == 0
        assert json.loads(capsys.readouterr().out) == out

    def test_unknown_group_exits_two(self, audited, capsys):
        bundle, report_path, _, _ = audited
        assert main([
            "explain", "--report", str(report_path), "--group", "gender=Martian",
            "--code", "G01", "--data", str(bundle),
        ]) == 2


class TestServe:
    def test_empty_store_exits_two(self, tmp_path, capsys):
        assert main(["serve", "--store", str(tmp_path / "empty")]) == 2
        assert "holds no reports" in capsys.readouterr().err

    def test_serve_wires_uvicorn(self, audited, monkeypatch, capsys):
        _, _, store, _ = audited
        calls = {}

        def fake_run(app, **kwargs):
            calls["app"] = app
            calls.update(kwargs)

        monkeypatch.setitem(
            sys.modules, "uvicorn", types.SimpleNamespace(run=fake_run)
        )
        assert main(["serve", "--store", str(store), "--port", "9100"]) == 0
        assert calls["port"] == 9100
        assert calls["host"] == "127.0.0.1"
        assert any(r.path == "/reports" for r in calls["app"].routes)

    def test_missing_ui_dir_exits_two(self, audited, monkeypatch, capsys):
        _, _, store, _ = audited
        monkeypatch.setitem(
            sys.modules, "uvicorn", types.SimpleNamespace(run=lambda *a, **k: None)
        )
        assert main([
            "serve", "--store", str(store), "--ui", "/nonexistent/ui",
        ]) == 2


class TestConvert:
    def test_csv_round_trip(self, bundle, tmp_path, capsys):
        csv_path = tmp_path / "patients.csv"
        csv_path.write_text(
            "patient_id,gender,ethnicity,age,insurance,codes\n"
            'p1,Female,White,30,Medicare,"G01.0;G02.1|G01.0"\n',
            encoding="utf-8",
        )
        out = tmp_path / "patients.jsonl"
        code = main([
            "convert", "--csv", str(csv_path),
            "--schema", str(bundle / "schema.json"), "--out", str(out),
        ])
        assert code == 0
        manifest = json.loads(capsys.readouterr().out)
        assert manifest["patients"] == 1
        record = json.loads(out.read_text(encoding="utf-8").splitlines()[0])
        assert record["patient_id"] == "p1"
        assert record["attributes"]["age_group"] == "25-45"  # raw age binned
        assert len(record["history"]) == 2

    def test_missing_csv_exits_two(self, bundle, tmp_path, capsys):
        assert main([
            "convert", "--csv", str(tmp_path / "nope.csv"),
            "--schema", str(bundle / "schema.json"),
            "--out", str(tmp_path / "o.jsonl"),
        ]) == 2
