"""Regenerate the UI test fixtures: a data bundle, a stored report whose
scatter covers the full 432-group lattice, and one warmed explanation.

Natural sampling leaves rare attribute cells empty at fixture scale, so the
generated patients' attributes are reassigned round-robin over all 150 base
cells; every lattice group then has at least one instance and min_group_size=1
ranks all 432. Attribute reassignment is valid because the frequency mock
predicts from visit history only.

Run from the repository root:  python3 frontend/scripts/make_fixtures.py
"""

import itertools
import json
import shutil
import subprocess
import sys
from dataclasses import replace
from pathlib import Path

from fairlens.data_model import dump_patients
from fairlens.synth import GeneratorConfig, default_schema, generate, make_vocabularies

FIXTURES = Path(__file__).resolve().parent.parent / "test" / "fixtures"


def main() -> int:
    bundle = FIXTURES / "bundle"
    store = FIXTURES / "store"
    for path in (bundle, store):
        shutil.rmtree(path, ignore_errors=True)
        path.mkdir(parents=True)

    schema = default_schema()
    group_map, onto = make_vocabularies()
    patients = generate(GeneratorConfig(seed=99, n_patients=600), schema, group_map)
    cells = list(itertools.product(*(schema.values(a) for a in schema.attributes)))
    patients = [
        replace(p, attributes=dict(zip(schema.attributes, cells[i % len(cells)])))
        for i, p in enumerate(patients)
    ]

    dump_patients(patients, bundle / "patients.jsonl")
    group_map.to_csv(bundle / "group_map.csv")
    onto.to_tsv(bundle / "ontology.tsv")
    with open(bundle / "schema.json", "w", encoding="utf-8") as fh:
        json.dump(schema.to_json(), fh, indent=1)  # key order = attribute order

    config = {
        "seed": 31,
        "min_group_size": 1,
        "inspect_top": 3,
        # Small budget so the live round-trip test stays fast if it ever
        # recomputes; the committed fixture replays from cache.
        "explain": {"n_samples": 200, "max_instances": 10},
    }
    config_path = FIXTURES / "audit_config.json"
    config_path.write_text(json.dumps(config, indent=1), encoding="utf-8")

    run(
        "audit",
        "--data", str(bundle),
        "--config", str(config_path),
        "--blackbox", "mock:frequency",
        "--store", str(store),
    )

    (report_path,) = store.glob("*.json")
    report = json.loads(report_path.read_text(encoding="utf-8"))
    n_scatter = len(report["scatter"])
    if n_scatter != 432:
        raise SystemExit(f"fixture scatter has {n_scatter} groups, wanted 432")

    # Warm one explanation for the live round-trip test: first ranked group
    # whose top over-diagnosed code explains cleanly.
    chosen = None
    for row in report["ranking"]:
        inspection = report["inspections"].get(row["group"])
        if not inspection or not inspection["top_over"]:
            continue
        code = inspection["top_over"][0]["code"]
        proc = run(
            "explain",
            "--report", str(report_path),
            "--group", row["group"],
            "--code", code,
            "--direction", "over",
            "--data", str(bundle),
            check=False,
        )
        if proc.returncode == 0:
            chosen = {"group": row["group"], "code": code, "direction": "over"}
            break
    if chosen is None:
        raise SystemExit("no ranked group produced a cached explanation")

    report = json.loads(report_path.read_text(encoding="utf-8"))
    key = f"{chosen['group']}|{chosen['code']}|{chosen['direction']}"
    assert key in report["explanations"], key
    meta = {"report_id": report["id"], "explained": chosen, "explanation_key": key}
    (FIXTURES / "meta.json").write_text(json.dumps(meta, indent=1), encoding="utf-8")
    print(f"fixtures ready: report {report['id']}, explanation {key}")
    return 0


def run(*args: str, check: bool = True) -> subprocess.CompletedProcess:
    proc = subprocess.run(
        [sys.executable, "-m", "fairlens", *args], capture_output=True, text=True
    )
    if check and proc.returncode != 0:
        raise SystemExit(f"fairlens {args[0]} failed:\n{proc.stderr}")
    return proc


if __name__ == "__main__":
    raise SystemExit(main())
