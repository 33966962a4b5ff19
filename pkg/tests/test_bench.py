import csv
import io

import numpy as np
import pytest

from sbmimo.bench import (CSV_HEADER, PRINTED, BerRecord, SweepConfig, format_table1, lm_local_minima_qubo,
                          parse_snr, records_to_csv, run_cell, run_sweep, run_table1, snr_grid, toy_local_minima)
from sbmimo.channel import ComplexDims
from sbmimo.detectors import parse_detector
import sbmimo.bench as bench


def small_cfg(**kw):
    base = dict(dims=ComplexDims(2, 2), snr_db=(0.0, 5.0, 10.0, 15.0, 20.0),
                detectors=(parse_detector("mmse"), parse_detector("lm-sb:10")),
                min_bits=400, max_trials=300, seed=7)
    base.update(kw)
    return SweepConfig(**base)


def test_snr_grid():
    assert snr_grid(0, 20, 2) == tuple(float(v) for v in range(0, 21, 2))
    assert snr_grid(0, 1, 0.1)[-1] == 1.0 and len(snr_grid(0, 1, 0.1)) == 11
    assert parse_snr("5") == (5.0,)
    for bad in ("1:2", "a:b:c", "3:1:1", "0:1:0"):
        with pytest.raises(ValueError):
            parse_snr(bad)


def test_config_validation():
    with pytest.raises(ValueError):
        small_cfg(snr_db=())
    with pytest.raises(ValueError):
        small_cfg(min_bits=0)
    with pytest.raises(ValueError):
        small_cfg(channel="awgn")
    with pytest.raises(ValueError):
        small_cfg(dims=ComplexDims(2, 3), channel="identity")


def test_record_arithmetic():
    r = BerRecord(10.0, "mmse", 5, 160, 4, 1)
    assert r.ber == 4 / 160
    assert r.row() == ("10.0", "mmse", "5", "160", "4", "0.025", "1")


def test_sweep_csv_structure(tmp_path):
    out = tmp_path / "o.csv"
    recs = run_sweep(small_cfg(out=str(out)))
    text = out.read_text()
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == CSV_HEADER and len(rows) == 11
    assert text.endswith("\n")
    for r in recs:
        assert 0.0 <= r.ber <= 1.0 and r.total_bits == 4 * r.trials
        assert r.trials == 300 or (r.total_bits >= 400 and r.bit_errors >= 100)


def test_sweep_is_reproducible():
    assert records_to_csv(run_sweep(small_cfg())) == records_to_csv(run_sweep(small_cfg()))
    assert records_to_csv(run_sweep(small_cfg())) != records_to_csv(run_sweep(small_cfg(seed=8)))


def test_sweep_independent_of_chunking(monkeypatch):
    cfg = small_cfg(max_trials=200)
    ref = run_sweep(cfg)
    monkeypatch.setattr(bench, "CHUNK", 7)
    assert run_sweep(cfg) == ref


def test_sweep_independent_of_workers():
    cfg = small_cfg(snr_db=(0.0, 10.0))
    assert records_to_csv(run_sweep(cfg, workers=1)) == records_to_csv(run_sweep(cfg, workers=3))


def test_identity_channel_is_error_free():
    cfg = small_cfg(channel="identity", snr_db=(120.0,), min_bits=1000, max_trials=250,
                    detectors=tuple(parse_detector(n) for n in ("mmse", "ml-sb", "g-sb", "lm-sb")))
    assert all(r.bit_errors == 0 for r in run_sweep(cfg))


def test_stopping_rule_needs_errors_and_bits():
    r = run_cell(small_cfg(snr_db=(0.0,), min_bits=40, max_trials=10_000), 0, 0)
    assert r.bit_errors >= 100 and r.total_bits >= 40 and r.trials < 10_000
    capped = run_cell(small_cfg(snr_db=(0.0,), min_bits=10**9, max_trials=50), 0, 0)
    assert capped.trials == 50 and capped.total_bits == 200


def test_table1_ml_column():
    t = run_table1()
    f_ml = t.computed["f_ML"]
    assert f_ml[0] == pytest.approx(0.645, abs=1e-12)
    assert f_ml[2] == pytest.approx(5.545, abs=1e-12)
    assert t.minima["f_ML"] == [(1, 1, 1), (-1, -1, -1)]
    assert t.deviation("f_ML").shape == (8,)


def test_table1_minima():
    t = run_table1()
    assert t.minima["f_G"] == [(1, 1, 1), (-1, -1, -1)]
    assert t.lm_scan[1e-3] == [(1, 1, 1)]
    for lam in (1.0, 0.1, 1e-3, 1e-6):
        assert toy_local_minima("f_LM", lam=lam) == lm_local_minima_qubo(lam)


def test_table1_text():
    text = format_table1(run_table1())
    assert "f_ML single-flip local minima: [+1,+1,+1], [-1,-1,-1]" in text
    assert text.count("\n") > 10
    assert all(k in text for k in PRINTED)
