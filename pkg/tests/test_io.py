from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from qloss.coherence import fit_series, synthetic_series
from qloss.errors import IngestError
from qloss.io import (
    DEVICE_COLUMNS,
    bundled_devices,
    bundled_path,
    ingest_devices,
    ingest_traces,
    read_jj_data,
    read_rb_data,
    write_devices,
    write_jj_data,
    write_manifest,
    write_rb_data,
    write_table,
)
from qloss.jjstats import synthetic_arrays
from qloss.lossbudget import DESIGNS, QubitDevice
from qloss.rb import RBDataset

HEADER = ",".join(DEVICE_COLUMNS)
GOOD = "Q1,TM,wet,20k,50.0,5.0,3.0,0.1,10"


def _device_file(tmp_path, *rows, header=HEADER):
    p = tmp_path / "devices.csv"
    p.write_text("\n".join((header,) + rows) + "\n")
    return p


def _trace_file(path, t, y):
    write_table(path, ("time_us", "population"), zip(t.tolist(), y.tolist()))


def test_bundled_table():
    devices = bundled_devices()
    assert len(devices) == 19
    assert sum(d.is_resonator for d in devices) == 4
    a1 = next(d for d in devices if d.name == "A1")
    assert (a1.t1_mean, a1.t1_sd, a1.frequency) == (64.8, 9.4, 2.974)
    d1 = next(d for d in devices if d.name == "D1")
    assert d1.measurement_count == 218


def test_header_only_file(tmp_path):
    assert ingest_devices(_device_file(tmp_path)) == []


def test_negative_frequency_names_row(tmp_path):
    p = _device_file(tmp_path, GOOD, "Q2,TM,wet,20k,50.0,5.0,-3.0,0.1,10")
    with pytest.raises(IngestError, match=r"row 3 \(Q2\)"):
        ingest_devices(p)


def test_missing_column(tmp_path):
    header = HEADER.replace(",freq_ghz", "")
    p = _device_file(tmp_path, "Q1,TM,wet,20k,50.0,5.0,0.1,10", header=header)
    with pytest.raises(IngestError, match="freq_ghz"):
        ingest_devices(p)


def test_non_numeric_field(tmp_path):
    p = _device_file(tmp_path, GOOD.replace("50.0", "fifty"))
    with pytest.raises(IngestError, match=r"row 2.*t1_mean_us"):
        ingest_devices(p)


def test_duplicate_name(tmp_path):
    p = _device_file(tmp_path, GOOD, GOOD)
    with pytest.raises(IngestError, match=r"row 3.*duplicate.*row 2"):
        ingest_devices(p)


def test_ragged_row(tmp_path):
    with pytest.raises(IngestError):
        ingest_devices(_device_file(tmp_path, GOOD + ",extra"))


_finite = dict(allow_nan=False, allow_infinity=False)
device_st = st.builds(
    QubitDevice,
    name=st.text("ABCDQRxyz0123456789_-", min_size=1, max_size=8),
    design=st.sampled_from(DESIGNS),
    etch=st.sampled_from(["wet", "dry"]),
    resistivity=st.sampled_from(["20k", "5k", "high"]),
    t1_mean=st.floats(1e-3, 1e4, **_finite),
    t1_sd=st.floats(0, 1e3, **_finite),
    frequency=st.floats(1e-2, 20, **_finite),
    junction_area=st.none() | st.floats(1e-3, 1.0, **_finite),
    measurement_count=st.integers(1, 1000),
    die=st.text("ABCD0123", max_size=4),
    span_days=st.none() | st.floats(0, 100, **_finite),
    junction_area_measured=st.booleans(),
)


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(devices=st.lists(device_st, max_size=6, unique_by=lambda d: d.name))
def test_device_round_trip(tmp_path, devices):
    p = tmp_path / "rt.csv"
    write_devices(devices, p)
    assert ingest_devices(p) == devices


def test_bundled_round_trip(tmp_path):
    p = tmp_path / "copy.csv"
    write_devices(bundled_devices(), p)
    assert ingest_devices(p) == bundled_devices()
    assert bundled_path("devices.csv").exists()


def test_manifest_of_three(tmp_path):
    t = np.linspace(0, 200, 40)
    rows = []
    for i, kind in enumerate(("T1", "Ramsey", "Echo")):
        s = synthetic_series(kind, 50.0 + 10 * i, t, A=0.5 if kind == "Ramsey" else 1.0,
                             B=0.5 if kind == "Ramsey" else 0.0, detuning_mhz=0.1 if kind == "Ramsey" else 0.0)
        _trace_file(tmp_path / f"tr{i}.csv", t, s.populations)
        rows.append((f"q{i}", kind, f"tr{i}.csv", "Q"))
    write_manifest(rows, tmp_path / "manifest.csv")
    entries = ingest_traces(tmp_path / "manifest.csv")
    assert [(e.label, e.kind, e.device) for e in entries] == [("q0", "T1", "Q"), ("q1", "Ramsey", "Q"),
                                                                ("q2", "Echo", "Q")]
    np.testing.assert_allclose(entries[0].series.times, t)


def test_one_column_trace_rejected(tmp_path):
    (tmp_path / "bad.csv").write_text("time_us\n0\n1\n2\n3\n")
    write_manifest([("x", "T1", "bad.csv", "")], tmp_path / "m.csv")
    with pytest.raises(IngestError, match="columns"):
        ingest_traces(tmp_path / "m.csv")


def test_non_monotonic_trace_names_file(tmp_path):
    _trace_file(tmp_path / "jumbled.csv", np.array([0.0, 2, 1, 3, 4]), np.array([1, 0.8, 0.9, 0.6, 0.5]))
    write_manifest([("x", "T1", "jumbled.csv", "")], tmp_path / "m.csv")
    with pytest.raises(IngestError, match="jumbled.csv"):
        ingest_traces(tmp_path / "m.csv")


def test_unknown_kind_rejected(tmp_path):
    _trace_file(tmp_path / "a.csv", np.arange(5.0), np.linspace(1, 0.5, 5))
    write_manifest([("x", "Rabi", "a.csv", "")], tmp_path / "m.csv")
    with pytest.raises(IngestError, match="kind"):
        ingest_traces(tmp_path / "m.csv")


def test_batch_of_218(tmp_path):
    t = np.linspace(0, 300, 30)
    rng = np.random.default_rng(218)
    truth = rng.normal(58.0, 13.2, 218).clip(20, None)
    rows = []
    for i, T in enumerate(truth):
        s = synthetic_series("T1", T, t, noise=0.01, seed=i)
        _trace_file(tmp_path / f"d1_{i:03d}.csv", t, s.populations)
        rows.append((f"D1-{i}", "T1", f"d1_{i:03d}.csv", "D1"))
    write_manifest(rows, tmp_path / "manifest.csv")
    entries = ingest_traces(tmp_path / "manifest.csv")
    fits = [fit_series(e.series, e.kind) for e in entries]
    assert len(fits) == 218
    assert np.median(np.abs(np.array([f.T for f in fits]) / truth - 1)) < 0.05


def test_rb_file_round_trip(tmp_path):
    data = RBDataset(np.array([1, 10, 100, 1000]), np.array([0.99, 0.98, 0.9, 0.6]),
                     np.array([0.01, 0.02, 0.03, 0.05]), 80)
    write_rb_data(data, tmp_path / "rb.csv")
    back = read_rb_data(tmp_path / "rb.csv")
    np.testing.assert_array_equal(back.lengths, data.lengths)
    np.testing.assert_array_equal(back.fidelities, data.fidelities)
    np.testing.assert_array_equal(back.sds, data.sds)
    (tmp_path / "bad.csv").write_text("length,mean_fidelity,sd\n1,0.9,0.01\n0.5,0.8,0.01\n")
    with pytest.raises(IngestError, match="bad.csv"):
        read_rb_data(tmp_path / "bad.csv")


def test_jj_file_round_trip(tmp_path):
    arrays = synthetic_arrays([0.03, 0.06, 0.09, 0.125], 2.63e-5, 1.3, 0.0, seed=4)
    write_jj_data(arrays, tmp_path / "jj.csv")
    assert read_jj_data(tmp_path / "jj.csv") == arrays
    (tmp_path / "neg.csv").write_text("area_um2,resistance_ohm,group_label\n0.05,-3,x\n")
    with pytest.raises(IngestError, match="row 2"):
        read_jj_data(tmp_path / "neg.csv")
