import json
import math

import numpy as np
import pytest

from stripfold import output
from stripfold.continuation import EquilibriumRecord, Event, Sample, SweepRow
from stripfold.paths import AssessmentReport
from stripfold.scenarios import Scenario


@pytest.fixture
def record():
    mesh = Scenario(nx=6, nz=2).mesh()
    rng = np.random.default_rng(3)
    rec = EquilibriumRecord(completed=True)
    regimes = ["static"] * 5 + ["dynamic"] * 3 + ["static"] * 4
    for k, reg in enumerate(regimes):
        rec.samples.append(
            Sample(k / 11, rng.standard_normal(mesh.n_dofs) * 1e-3, 1.0 / (k + 1), rng.standard_normal(2), 0.1 * k, reg, 0.01 * k)
        )
    rec.events = [Event("critical_point", 0.4, {"kind": "limit", "bracket": (0.39, 0.41)}), Event("ground_touch", 0.41, {"node": np.int64(7)})]
    return mesh, rec


def test_samples_round_trip(tmp_path, record):
    mesh, rec = record
    output.write_samples(rec, tmp_path / "s.csv")
    back = output.read_samples(tmp_path / "s.csv")
    np.testing.assert_array_equal(back["lambda"], rec.lambdas)
    np.testing.assert_array_equal(back["mu_min"], rec.mu)
    np.testing.assert_array_equal(back["reaction_z"], [s.reaction[1] for s in rec.samples])
    assert back["regime"] == [s.regime for s in rec.samples]


def test_snapshot_selection_keeps_regime_changes(tmp_path, record):
    mesh, rec = record
    idx = output.snapshot_indices(rec, 10)
    assert idx == [0, 4, 5, 7, 8, 10, 11]
    output.write_snapshots(rec, mesh, tmp_path / "snap.csv", 10)
    snaps = output.read_snapshots(tmp_path / "snap.csv")
    assert sorted(snaps) == idx
    np.testing.assert_array_equal(snaps[7]["u"].ravel(), rec.samples[7].u)
    np.testing.assert_array_equal(snaps[7]["X"], mesh.nodes)
    assert snaps[7]["regime"] == "dynamic"


def test_events_round_trip(tmp_path, record):
    _, rec = record
    output.write_events(rec, tmp_path / "e.jsonl")
    ev = output.read_events(tmp_path / "e.jsonl")
    assert [e["type"] for e in ev] == ["critical_point", "ground_touch"]
    assert ev[0]["data"]["bracket"] == [0.39, 0.41] and ev[1]["data"]["node"] == 7


def test_colors(record):
    _, rec = record
    c = output.sample_colors(rec)
    assert c[:5] == [output.GREY] * 5 and c[5:8] == [output.RED] * 3 and c[8:] == [output.GREEN] * 4


def test_svg_files(tmp_path, record):
    mesh, rec = record
    output.svg_trace(rec, mesh, tmp_path / "t.svg")
    output.svg_assessment(rec, mesh, tmp_path / "a.svg", touch_x=0.01)
    t = (tmp_path / "t.svg").read_text()
    a = (tmp_path / "a.svg").read_text()
    assert t.startswith("<svg") and output.RED in t and output.GREEN in t
    assert output.BLACK in a and output.MAGENTA in a


def test_sweep_and_summary_round_trip(tmp_path):
    rows = [SweepRow(100.0, 0.05, 0.2731, "ok", 0.6), SweepRow(100.0, 0.06, math.nan, "prepare_failed: x")]
    output.write_sweep(rows, tmp_path / "sw.csv")
    back = output.read_sweep(tmp_path / "sw.csv")
    assert back[0] == {"eta_b": 100.0, "z": 0.05, "lambda_c": 0.2731, "status": "ok"}
    assert math.isnan(back[1]["lambda_c"])
    reps = [AssessmentReport("tri", 0.1, 0.05, 1, True), AssessmentReport("circ", 0.1, 0.12, 0, False, message="m")]
    output.write_summary(reps, tmp_path / "sum.csv")
    s = output.read_summary(tmp_path / "sum.csv")
    assert s[0]["error"] == pytest.approx(-0.05) and s[1]["completed"] is False
    output.write_report(reps[0], tmp_path / "r.json")
    assert output.read_report(tmp_path / "r.json")["achieved_touch"] == 0.05


def test_manifest_digests(tmp_path):
    f = tmp_path / "a.txt"
    f.write_text("hello")
    m = output.write_manifest(tmp_path, {"k": 1.0}, "abc", "0.1", [f], "t0", "t1", "trace", 0)
    doc = json.loads(m.read_text())
    assert doc["files"] == {"a.txt": output.file_digest(f)}
    assert output.verify_manifest(m) == []
    f.write_text("changed")
    assert output.verify_manifest(m) == ["a.txt"]


def test_bad_headers(tmp_path):
    (tmp_path / "x.csv").write_text("a,b\n1,2\n")
    for reader in (output.read_samples, output.read_sweep, output.read_summary, output.read_snapshots):
        with pytest.raises(ValueError):
            reader(tmp_path / "x.csv")
