import numpy as np
import pytest

import robust_batches as rb
from robust_batches.cli import main
from robust_batches.io import FileFormatError, read_batches, read_json, write_batches
from robust_batches.simulate import SpikeAttack, UniformTarget


def test_batch_file_roundtrip(tmp_path):
    coll = rb.build_collection(UniformTarget(0, 1), SpikeAttack(1.0, 0.5), 6, 10, 0.3, 1)
    path = tmp_path / "batches.jsonl"
    write_batches(coll, path)
    loaded = read_batches(path)
    assert loaded.truth == coll.truth
    for a, b in zip(coll.batches, loaded.batches):
        np.testing.assert_array_equal(a.samples, b.samples)


def test_labeled_file_roundtrip(tmp_path):
    target = rb.parse_target("labeled:0,0.5,1|0.5,0.5|0.8,0.2")
    coll = rb.build_collection(target, None, 4, 6, 0.0, 2)
    path = tmp_path / "labeled.jsonl"
    write_batches(coll, path)
    loaded = read_batches(path)
    for a, b in zip(coll.batches, loaded.batches):
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.y, b.y)


def test_read_rejects_nan(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"n": 2, "m": 1}\n{"id": 0, "samples": [1.0, NaN]}\n')
    with pytest.raises(FileFormatError, match="NaN"):
        read_batches(path)


def test_read_rejects_wrong_counts(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"n": 3, "m": 1}\n{"id": 0, "samples": [1.0, 2.0]}\n')
    with pytest.raises(FileFormatError, match="expected n=3"):
        read_batches(path)
    path.write_text('{"n": 2, "m": 2}\n{"id": 0, "samples": [1.0, 2.0]}\n')
    with pytest.raises(FileFormatError, match="m=2"):
        read_batches(path)
    path.write_text('{"m": 2}\n')
    with pytest.raises(FileFormatError, match="missing 'n'"):
        read_batches(path)


def test_cli_simulate_clean_eval_flow(tmp_path):
    batches = tmp_path / "batches.jsonl"
    report = tmp_path / "report.json"
    metrics_out = tmp_path / "metrics.json"
    retained = tmp_path / "retained.jsonl"
    assert main([
        "simulate", "--target", "uniform:0,1", "--attack", "mean_shift:1.0@0.45,0.55",
        "--m", "80", "--n", "100", "--beta", "0.2", "--seed", "5", "--out", str(batches),
    ]) == 0
    assert main([
        "clean", "--input", str(batches), "--k", "2", "--beta", "0.2", "--seed", "5",
        "--trigger", "5", "--stop", "4", "--target", "uniform:0,1",
        "--out", str(report), "--retained", str(retained),
    ]) == 0
    rep = read_json(report)
    assert rep["cleaning"]["fk_after"] <= rep["cleaning"]["fk_before"]
    assert rep["cleaning"]["retention_good"] == 1.0
    kept = read_batches(retained)
    assert kept.m == len(rep["cleaning"]["retained_ids"])
    assert main([
        "eval", "--input", str(batches), "--report", str(report),
        "--target", "uniform:0,1", "--out", str(metrics_out),
    ]) == 0
    mets = read_json(metrics_out)
    assert mets["metrics"]["retention_good"] == 1.0


def test_cli_estimate_and_classify(tmp_path):
    batches = tmp_path / "b.jsonl"
    main([
        "simulate", "--target", "hist:0,0.5,1|0.75,0.25", "--attack", "none",
        "--m", "60", "--n", "50", "--beta", "0", "--seed", "3", "--out", str(batches),
    ])
    fit_out = tmp_path / "fit.json"
    rc = main([
        "estimate", "--input", str(batches), "--t", "2", "--d", "0", "--beta", "0",
        "--seed", "3", "--target", "hist:0,0.5,1|0.75,0.25",
        "--out", str(tmp_path / "est.json"), "--fit-out", str(fit_out),
    ])
    assert rc == 0
    fit = rb.PiecewisePolynomial.from_dict(read_json(fit_out))
    assert fit.t <= 2
    est = read_json(tmp_path / "est.json")
    assert est["tv_to_target"] < 0.1

    labeled = tmp_path / "l.jsonl"
    main([
        "simulate", "--target", "labeled:0,0.5,1|0.5,0.5|0.9,0.1", "--attack", "none",
        "--m", "40", "--n", "60", "--beta", "0", "--seed", "4", "--out", str(labeled),
    ])
    rc = main([
        "classify", "--input", str(labeled), "--k", "1", "--beta", "0", "--seed", "4",
        "--target", "labeled:0,0.5,1|0.5,0.5|0.9,0.1", "--out", str(tmp_path / "cls.json"),
    ])
    assert rc == 0
    cls = read_json(tmp_path / "cls.json")
    assert cls["classification"]["excess_risk"] < 0.05


def test_cli_beta_guard_exits_2(tmp_path, capsys):
    batches = tmp_path / "b.jsonl"
    main([
        "simulate", "--target", "uniform:0,1", "--attack", "none",
        "--m", "4", "--n", "5", "--beta", "0", "--seed", "0", "--out", str(batches),
    ])
    rc = main([
        "clean", "--input", str(batches), "--k", "1", "--beta", "0.5", "--seed", "0",
        "--out", str(tmp_path / "r.json"),
    ])
    assert rc == 2
    assert "0.4" in capsys.readouterr().err


def test_cli_malformed_input_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"n": 2, "m": 1}\n{"id": 0}\n')
    rc = main(["clean", "--input", str(bad), "--k", "1", "--beta", "0.2",
               "--out", str(tmp_path / "r.json")])
    assert rc == 2
    assert "samples" in capsys.readouterr().err


def test_cli_unknown_flag_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["clean", "--frobnicate", "1"])
    assert exc.value.code == 2


def test_cli_selftest():
    assert main(["selftest", "--seed", "1"]) == 0


def test_cli_reports_byte_identical_across_threads(tmp_path):
    batches = tmp_path / "b.jsonl"
    main([
        "simulate", "--target", "uniform:0,1", "--attack", "mean_shift:1.0@0.4,0.6",
        "--m", "60", "--n", "100", "--beta", "0.2", "--seed", "9", "--out", str(batches),
    ])
    report = tmp_path / "report.json"
    outs = []
    for threads in (1, 4):
        rc = main([
            "clean", "--input", str(batches), "--k", "2", "--beta", "0.2", "--seed", "9",
            "--trigger", "5", "--stop", "4", "--threads", str(threads),
            "--out", str(report),
        ])
        assert rc == 0
        outs.append(report.read_bytes())
    # reports embed flags but not --threads, so the bytes must match
    assert outs[0] == outs[1]
    assert b'"threads"' not in outs[0]


def test_cli_threads_env_fallback(monkeypatch):
    from robust_batches.cli import _default_threads

    monkeypatch.setenv("ROBUST_BATCHES_THREADS", "3")
    assert _default_threads() == 3
    monkeypatch.setenv("ROBUST_BATCHES_THREADS", "zero")
    with pytest.raises(rb.UsageError):
        _default_threads()
    monkeypatch.delenv("ROBUST_BATCHES_THREADS")
    assert _default_threads() >= 1


def test_cli_eval_subset_corruption_report(tmp_path):
    batches = tmp_path / "b.jsonl"
    report = tmp_path / "r.json"
    main([
        "simulate", "--target", "uniform:0,1", "--attack", "spike:1.0@0.5",
        "--m", "50", "--n", "100", "--beta", "0.2", "--seed", "2", "--out", str(batches),
    ])
    main([
        "clean", "--input", str(batches), "--k", "2", "--beta", "0.2", "--seed", "2",
        "--trigger", "5", "--stop", "4", "--out", str(report),
    ])
    out = tmp_path / "eval.json"
    rc = main([
        "eval", "--input", str(batches), "--report", str(report),
        "--subset", "1,2,3", "--out", str(out),
    ])
    assert rc == 0
    data = read_json(out)
    assert data["corruption"]["subset"] == [1, 2, 3]
    assert data["corruption"]["total"] >= 0
    assert len(data["corruption"]["per_batch_scores"]) == 50


def test_cli_csv_export(tmp_path):
    batches = tmp_path / "b.jsonl"
    main([
        "simulate", "--target", "uniform:0,1", "--attack", "none",
        "--m", "4", "--n", "10", "--beta", "0", "--seed", "0", "--out", str(batches),
    ])
    rc = main([
        "clean", "--input", str(batches), "--k", "1", "--beta", "0", "--seed", "0",
        "--format", "csv", "--out", str(tmp_path / "r.csv"),
    ])
    assert rc == 0
    text = (tmp_path / "r.csv").read_text()
    assert text.startswith("key,value")
    assert "cleaning.retained_ids" in text
