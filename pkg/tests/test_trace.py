import hashlib

import numpy as np
import pytest

from sizely.trace import (
    GIB,
    SyntheticSpec,
    TaskTypeSpec,
    TraceParseError,
    filter_dataset,
    generate_synthetic,
    parse_machines,
    parse_trace,
    validate,
    write_machines,
    write_trace,
)

from conftest import GB, MB, make_dataset, make_record

HEADER = "task_id,task_type,machine,input_size_bytes,peak_mem_bytes,runtime_seconds,preset_mem_bytes,submit_index"


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n")
    return path


def test_parse_well_formed_rows_in_order(tmp_path):
    p = write_lines(tmp_path / "t.csv", [
        HEADER,
        "a,foo,m0,100,200,10,500,0",
        "b,foo,m0,150,250,11,500,1",
        "c,bar,m0,200,300,12,600,2",
    ])
    ds = parse_trace(p)
    assert [r.task_id for r in ds.records] == ["a", "b", "c"]
    assert ds.records[0].peak_mem == 200
    assert ds.records[2].task_type == "bar"
    assert "m0" in ds.machines


def test_parse_zero_peak_names_row(tmp_path):
    p = write_lines(tmp_path / "t.csv", [HEADER, "a,foo,m0,100,0,10,500,0"])
    with pytest.raises(TraceParseError, match="line 2"):
        parse_trace(p)


def test_parse_duplicate_task_id(tmp_path):
    p = write_lines(tmp_path / "t.csv", [
        HEADER,
        "a,foo,m0,100,200,10,500,0",
        "a,foo,m0,100,210,10,500,1",
    ])
    with pytest.raises(TraceParseError, match="duplicate task_id"):
        parse_trace(p)


def test_parse_shuffled_submit_index_resorts(tmp_path, rng):
    # oracle: an independent sort of the same rows
    rows = [(f"t{i}", i, 100.0 + i) for i in range(10)]
    shuffled = list(rows)
    rng.shuffle(shuffled)
    p = write_lines(tmp_path / "t.csv", [HEADER] + [
        f"{tid},foo,m0,100,{peak},10,500,{idx}" for tid, idx, peak in shuffled
    ])
    ds = parse_trace(p)
    expected = sorted(shuffled, key=lambda row: row[1])
    assert [r.task_id for r in ds.records] == [row[0] for row in expected]
    assert [r.submit_index for r in ds.records] == list(range(10))


def test_parse_without_submit_index_uses_row_order(tmp_path):
    p = write_lines(tmp_path / "t.csv", [
        HEADER.rsplit(",", 1)[0],
        "a,foo,m0,100,200,10,500",
        "b,foo,m0,110,210,10,500",
    ])
    ds = parse_trace(p)
    assert [r.submit_index for r in ds.records] == [0, 1]


def test_parse_rejects_bad_header(tmp_path):
    p = write_lines(tmp_path / "t.csv", ["task,type", "a,b"])
    with pytest.raises(TraceParseError, match="header"):
        parse_trace(p)


def test_round_trip_identity(tmp_path):
    ds = generate_synthetic(SyntheticSpec(
        task_types=(
            TaskTypeSpec("a", "linear", base_mem=1 * GB, slope=1.5, noise_sigma=0.1,
                         instance_count=17, input_range=(10 * MB, 2 * GB),
                         runtime_range=(5, 50), preset_multiplier=2.0),
            TaskTypeSpec("b", "constant", base_mem=3 * GB, instance_count=9,
                         input_range=(1 * MB, 2 * MB), runtime_range=(5, 9)),
        ),
        seed=5,
    ))
    trace_p = tmp_path / "t.csv"
    mach_p = tmp_path / "m.csv"
    write_trace(ds, trace_p)
    write_machines(ds, mach_p)
    again = parse_trace(trace_p, machines_path=mach_p)
    assert again.records == ds.records
    assert again.machines == ds.machines


def test_generate_same_seed_bit_identical(tmp_path):
    spec = SyntheticSpec(
        task_types=(TaskTypeSpec("a", "linear", base_mem=1 * GB, slope=2.0,
                                 noise_sigma=0.2, instance_count=40,
                                 input_range=(1 * MB, 1 * GB), runtime_range=(1, 100)),),
        seed=99,
    )
    digests = []
    for name in ("one.csv", "two.csv"):
        ds = generate_synthetic(spec)
        p = tmp_path / name
        write_trace(ds, p)
        digests.append(hashlib.sha256(p.read_bytes()).hexdigest())
    assert digests[0] == digests[1]


def test_generate_different_seed_differs():
    spec = lambda s: SyntheticSpec(
        task_types=(TaskTypeSpec("a", "linear", base_mem=1 * GB, slope=2.0,
                                 noise_sigma=0.2, instance_count=10,
                                 input_range=(1 * MB, 1 * GB), runtime_range=(1, 100)),),
        seed=s,
    )
    a = generate_synthetic(spec(1))
    b = generate_synthetic(spec(2))
    assert a.records != b.records


def test_noiseless_linear_formula_exact():
    spec = SyntheticSpec(
        task_types=(TaskTypeSpec("a", "linear", base_mem=100 * MB, slope=1.0,
                                 noise_sigma=0.0, instance_count=25,
                                 input_range=(100 * MB, 100 * MB),
                                 runtime_range=(10, 20)),),
        seed=3,
    )
    ds = generate_synthetic(spec)
    for r in ds.records:
        assert r.peak_mem == 100 * MB + 1.0 * r.input_size
        assert r.peak_mem == 200 * MB  # fixed input of 100MB


def test_constant_relation_ignores_input():
    spec = SyntheticSpec(
        task_types=(TaskTypeSpec("c", "constant", base_mem=1 * GB,
                                 instance_count=10, input_range=(1, 10 * GB),
                                 runtime_range=(10, 20)),),
        seed=3,
    )
    ds = generate_synthetic(spec)
    assert all(r.peak_mem == 1 * GB for r in ds.records)


def test_step_relation_levels():
    spec = SyntheticSpec(
        task_types=(TaskTypeSpec("s", "step", base_mem=1 * GB,
                                 instance_count=50, input_range=(0, 100),
                                 runtime_range=(10, 20)),),
        seed=3,
    )
    ds = generate_synthetic(spec)
    for r in ds.records:
        expected = 2 * GB if r.input_size > 50 else 1 * GB
        assert r.peak_mem == expected


def test_generated_peaks_positive_even_with_heavy_noise():
    spec = SyntheticSpec(
        task_types=(TaskTypeSpec("n", "linear", base_mem=1 * MB, slope=1.0,
                                 noise_sigma=2.0, instance_count=500,
                                 input_range=(1 * MB, 1 * GB),
                                 runtime_range=(1, 2)),),
        seed=11,
    )
    ds = generate_synthetic(spec)
    assert all(r.peak_mem > 0 for r in ds.records)
    assert validate(ds) == []


def test_validate_clean_dataset():
    ds = make_dataset([make_record(i) for i in range(5)])
    assert validate(ds) == []


def test_validate_unknown_machine():
    ds = make_dataset([make_record(0)])
    bad = make_record(1, machine="ghost")
    broken = type(ds)(records=ds.records + (bad,), machines=ds.machines)
    msgs = validate(broken)
    assert len(msgs) == 1 and "unknown machine" in msgs[0]


def test_validate_peak_over_capacity():
    ds = make_dataset([make_record(0, peak_mem=4 * GB)], capacity=2 * GB)
    msgs = validate(ds)
    assert len(msgs) == 1 and "exceeds capacity" in msgs[0]


def test_validate_duplicate_submit_index():
    from dataclasses import replace

    a = make_record(0)
    b = replace(make_record(1), submit_index=0)
    msgs = validate(make_dataset([a, b]))
    assert any("duplicate submit_index" in m for m in msgs)


def test_filter_dataset():
    records = [make_record(i, task_type="big", runtime=100.0) for i in range(5)]
    records += [make_record(i + 5, task_type="tiny", runtime=1.0) for i in range(2)]
    ds = make_dataset(records)
    assert len(filter_dataset(ds, min_runtime=10).records) == 5
    assert len(filter_dataset(ds, min_instances=3).records) == 5
    assert len(filter_dataset(ds).records) == 7


def test_machine_file_round_trip(tmp_path):
    ds = make_dataset([make_record(0)], capacity=64 * GIB)
    p = tmp_path / "m.csv"
    write_machines(ds, p)
    assert parse_machines(p) == ds.machines
