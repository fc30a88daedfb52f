import json
import math

import numpy as np
import pandas as pd
import pytest

from fairness_ssat import cli
from fairness_ssat.report import CrossCheck
from fairness_ssat.sdimacs import format_sdimacs, parse_sdimacs
from fairness_ssat.ssat_core import evaluate_reference
from tests.oracles import random_formula

OLDER_GROUP = """p cnf 4 3
r 0.41 1 0
r 0.93 2 0
r 0.09 3 0
e 4 0
-1 2 0
1 3 0
4 0
"""


def verify_args(bundle, *extra):
    return [
        "verify",
        "--data", str(bundle["data"]),
        "--schema", str(bundle["schema"]),
        "--model", str(bundle["model"]),
        *extra,
    ]


@pytest.fixture
def people_bundle(tmp_path):
    """Three-valued race and binary sex, one numeric score, and a tree over all three."""
    rng = np.random.default_rng(11)
    rows = 400
    frame = pd.DataFrame({
        "race": rng.choice(["Asian", "Colour", "White"], size=rows),
        "sex": rng.choice(["female", "male"], size=rows),
        "score": rng.uniform(0, 10, size=rows).round(2),
    })
    frame["y"] = ((frame["score"] > 5) ^ (rng.random(rows) < 0.2)).astype(int)
    schema = {
        "label": "y",
        "attributes": [
            {"name": "race", "kind": "categorical", "protected": True},
            {"name": "sex", "kind": "categorical", "protected": True, "binary": True, "categories": ["male", "female"]},
            {"name": "score", "kind": "numeric"},
        ],
    }
    model = {
        "type": "tree",
        "root": {
            "attribute": "score",
            "threshold": 5.0,
            "true": {"attribute": "race", "category": "White", "true": {"label": 1},
                     "false": {"attribute": "sex", "category": "male", "true": {"label": 1}, "false": {"label": 0}}},
            "false": {"label": 0},
        },
    }
    paths = {"data": tmp_path / "people.csv", "schema": tmp_path / "schema.json", "model": tmp_path / "model.json"}
    frame.to_csv(paths["data"], index=False)
    paths["schema"].write_text(json.dumps(schema))
    paths["model"].write_text(json.dumps(model))
    return paths


def test_samplesize(capsys):
    code = cli.main(["samplesize", "--n", "2", "--m", "16", "--epsilon0", repr(math.e), "--delta", repr(1 / math.e)])
    assert code == 0
    assert capsys.readouterr().out == "9\n"


def test_samplesize_rejects_bad_epsilon(capsys):
    assert cli.main(["samplesize", "--n", "2", "--m", "16", "--epsilon0", "1.0"]) == 1


def test_solve_prints_probability_and_witness(tmp_path, capsys):
    path = tmp_path / "older.sdimacs"
    path.write_text(OLDER_GROUP)
    assert cli.main(["solve", str(path)]) == 0
    assert capsys.readouterr().out == "0.434400000\nw 4 0\n"


def test_solve_true_instance(tmp_path, capsys):
    path = tmp_path / "true.sdimacs"
    path.write_text("p cnf 0 0\n")
    assert cli.main(["solve", str(path)]) == 0
    assert capsys.readouterr().out == "1.000000000\n"


def test_solve_matches_reference(tmp_path, capsys, rng):
    for index in range(10):
        formula = random_formula(rng, max_vars=12)
        path = tmp_path / f"random{index}.sdimacs"
        path.write_text(format_sdimacs(formula))
        assert cli.main(["solve", str(path)]) == 0
        fast = capsys.readouterr().out.splitlines()[0]
        assert cli.main(["solve", "--reference", str(path)]) == 0
        slow = capsys.readouterr().out.splitlines()[0]
        assert fast == slow == f"{float(evaluate_reference(parse_sdimacs(path.read_text()))):.9f}"


def test_solve_parse_error(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "bad.sdimacs").write_text("p cnf 2 1\n1 3 0\n")
    assert cli.main(["solve", "bad.sdimacs"]) == 1
    assert "bad.sdimacs:2:3" in capsys.readouterr().err


def test_encode_health_tree(health_bundle, capsys):
    assert cli.main(["encode", "--schema", str(health_bundle["schema"]), "--model", str(health_bundle["model"])]) == 0
    out = capsys.readouterr().out
    assert "c 1 age=40_and_over [protected]" in out
    assert "c 2 fitness>=0.61" in out
    positive, negative = out.split("c negative class")
    assert "p cnf 4 2\n-2 3 0\n2 4 0\n" in positive
    assert "(direct)" in negative
    assert "-2 -3 0" in negative and "2 -4 0" in negative


def test_encode_single_leaf_and_implications(health_bundle, tmp_path, capsys):
    leaf = tmp_path / "leaf.json"
    leaf.write_text('{"type": "tree", "root": {"label": 1}}')
    assert cli.main(["encode", "--schema", str(health_bundle["schema"]), "--model", str(leaf),
                     "--data", str(health_bundle["data"])]) == 0
    out = capsys.readouterr().out
    assert "p cnf 9 0\n" in out

    assert cli.main(["encode", "--schema", str(health_bundle["schema"]), "--model", str(health_bundle["model"]),
                     "--bin-implications"]) == 0
    out = capsys.readouterr().out
    assert "-4 3 0" in out
    assert "(tseitin)" in out


def test_verify_health_bundle(health_bundle, tmp_path, capsys):
    out = tmp_path / "report.json"
    assert cli.main(verify_args(health_bundle, "--out", str(out))) == 0
    report = json.loads(out.read_text())
    assert report["mode"] == "enum"
    assert 0.24 <= report["metrics"]["di"] <= 0.28
    assert 0.51 <= report["metrics"]["sp"] <= 0.56
    assert report["favored"]["group"] == {"age": "under_40"}
    assert report["sample_size"]["sufficient"] is True
    assert capsys.readouterr().out == ""


def test_verify_is_byte_identical_across_runs(health_bundle, capsys):
    assert cli.main(verify_args(health_bundle, "--metrics", "di,sp,eo")) == 0
    first = capsys.readouterr().out
    assert cli.main(verify_args(health_bundle, "--metrics", "di,sp,eo", "--jobs", "2")) == 0
    second = capsys.readouterr().out
    assert first == second
    assert json.loads(first)["metrics"]["eo"]["eo"] >= 0


def test_verify_both_modes_with_one_hot_groups(people_bundle, capsys):
    assert cli.main(verify_args(people_bundle, "--mode", "both")) == 0
    bundle = json.loads(capsys.readouterr().out)
    assert bundle["cross_check"]["agrees"] is True
    conditional = bundle["reports"][0]
    assert len(conditional["groups"]) + len(conditional["skipped_groups"]) == 6
    learned = bundle["reports"][2]
    assert learned["favored"]["group"]["race"] in ("Asian", "Colour", "White")


def test_verify_reports_cross_check_failure(people_bundle, monkeypatch, capsys):
    def disagree(enumerated, learned, tolerance=1e-6):
        return CrossCheck(enum_max=1, enum_min=0, learn_max=0.5, learn_min=0.5, tolerance=tolerance, agrees=False)

    monkeypatch.setattr("fairness_ssat.verifier.cross_check", disagree)
    assert cli.main(verify_args(people_bundle, "--mode", "both")) == 2


def test_verify_mode_from_environment(health_bundle, monkeypatch, capsys):
    monkeypatch.setenv("FAIRNESS_SSAT_MODE", "learn")
    assert cli.main(verify_args(health_bundle)) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["mode"] == "learn"
    assert report["metrics"]["di"] == pytest.approx(1.0)


def test_verify_annotations_and_probability_dump(health_bundle, tmp_path, capsys):
    dump = tmp_path / "probs.json"
    assert cli.main(verify_args(health_bundle, "--empirical", "--timings", "--dump-probs", str(dump))) == 0
    report = json.loads(capsys.readouterr().out)
    assert len(report["empirical"]["groups"]) == 2
    assert report["stats"]["wall_time_seconds"] >= 0
    tables = json.loads(dump.read_text())
    assert [table["context"] for table in tables] == ["age=40_and_over", "age=under_40"]


def test_verify_constant_classifier(health_bundle, tmp_path, capsys):
    model = tmp_path / "always.json"
    model.write_text('{"type": "cnf", "clauses": []}')
    args = verify_args(health_bundle)
    args[args.index("--model") + 1] = str(model)
    assert cli.main(args) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["metrics"] == {"di": 1.0, "sp": 0.0}


@pytest.mark.parametrize(
    "argv",
    [
        ["verify", "--schema", "s.json", "--model", "m.json"],
        ["verify", "--no-such-flag"],
        ["frobnicate"],
        ["verify", "--data", "missing.csv", "--schema", "missing.json", "--model", "missing.json"],
        ["verify", "--data", "d.csv", "--schema", "s.json", "--model", "m.json", "--metrics", "di,xx"],
    ],
)
def test_usage_errors(argv, capsys):
    assert cli.main(argv) == 1


def test_verify_without_protected_attribute(health_bundle, tmp_path, capsys):
    schema = json.loads(health_bundle["schema"].read_text())
    schema["attributes"][0]["protected"] = False
    path = tmp_path / "schema.json"
    path.write_text(json.dumps(schema))
    args = verify_args(health_bundle)
    args[args.index("--schema") + 1] = str(path)
    assert cli.main(args) == 1
    assert cli.main(args + ["--protected", "age"]) == 0


def test_generate(tmp_path, capsys):
    assert cli.main(["generate", "--out", str(tmp_path / "bundle"), "--rows", "50", "--seed", "3"]) == 0
    written = capsys.readouterr().out.split()
    assert [path.rsplit("/", 1)[-1] for path in written] == ["data.csv", "schema.json", "model.json"]
    assert len(pd.read_csv(written[0])) == 50


def test_verify_rejects_ragged_csv_row(health_bundle, tmp_path, monkeypatch, capsys):
    lines = health_bundle["data"].read_text().splitlines(keepends=True)
    lines[3] = lines[3].rstrip("\n") + ",extra\n"
    (tmp_path / "ragged.csv").write_text("".join(lines))
    monkeypatch.chdir(tmp_path)
    args = verify_args(health_bundle)
    args[args.index("--data") + 1] = "ragged.csv"
    assert cli.main(args) == 1
    assert "ragged.csv:4" in capsys.readouterr().err


def test_verify_rejects_invalid_utf8(health_bundle, tmp_path, monkeypatch, capsys):
    data = health_bundle["data"].read_bytes().split(b"\n")
    data[2] = b"\xff" + data[2]
    (tmp_path / "latin.csv").write_bytes(b"\n".join(data))
    monkeypatch.chdir(tmp_path)
    args = verify_args(health_bundle)
    args[args.index("--data") + 1] = "latin.csv"
    assert cli.main(args) == 1
    assert "latin.csv:3:1" in capsys.readouterr().err


def test_solve_rejects_invalid_utf8(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "bytes.sdimacs").write_bytes(b"p cnf 1 1\nr 0.5 1 0\n1 \xfe0\n")
    assert cli.main(["solve", "bytes.sdimacs"]) == 1
    assert "bytes.sdimacs:3:3" in capsys.readouterr().err


def random_bundle(directory, seed):
    """Random categorical protected attributes, numeric features and a tree over both."""
    rng = np.random.default_rng(seed)
    rows = 120
    frame = pd.DataFrame({"y": rng.integers(0, 2, size=rows)})
    attributes = []
    splits = []
    for index in range(int(rng.integers(1, 3))):
        name = f"p{index}"
        categories = [f"c{k}" for k in range(int(rng.integers(2, 4)))]
        frame[name] = rng.choice(categories, size=rows)
        attributes.append({"name": name, "kind": "categorical", "protected": True})
        splits.append({"attribute": name, "category": str(rng.choice(categories))})
    for index in range(int(rng.integers(1, 4))):
        name = f"x{index}"
        frame[name] = rng.uniform(0, 1, size=rows).round(3)
        attributes.append({"name": name, "kind": "numeric"})
        splits.append({"attribute": name, "threshold": round(float(rng.uniform(0.2, 0.8)), 2)})

    def grow(available, depth):
        if depth == 0 or not available or rng.random() < 0.2:
            return {"label": int(rng.integers(0, 2))}
        pick = int(rng.integers(len(available)))
        rest = available[:pick] + available[pick + 1:]
        return {**available[pick], "true": grow(rest, depth - 1), "false": grow(rest, depth - 1)}

    paths = {"data": directory / "data.csv", "schema": directory / "schema.json", "model": directory / "model.json"}
    frame.to_csv(paths["data"], index=False)
    paths["schema"].write_text(json.dumps({"label": "y", "attributes": attributes}))
    paths["model"].write_text(json.dumps({"type": "tree", "root": grow(splits, 4)}))
    return paths


@pytest.mark.parametrize("seed", range(8))
def test_verify_both_modes_agree_on_random_bundles(seed, tmp_path, capsys):
    assert cli.main(verify_args(random_bundle(tmp_path, seed), "--mode", "both")) == 0
    assert json.loads(capsys.readouterr().out)["cross_check"]["agrees"] is True
