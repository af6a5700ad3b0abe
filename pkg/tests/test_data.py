import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gazeconv.data import (FoldPlan, GazeSample, GazeSequence, augment, crop_random, format_sanitation_report,
                           from_input_tensor, integrate_deltas, load_csv, load_directory, make_batches, make_folds,
                           subject_from_path, to_delta_tensor, to_input_tensor, write_csv)
from gazeconv.errors import ConfigurationError, DataFormatError, LengthError, ShapeError
from gazeconv.schedule import StepSchedule
from gazeconv.tensor import Tensor


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


# --- CSV ingest ---------------------------------------------------------------


def test_load_csv_with_header_and_labels(tmp_path):
    path = write(tmp_path, "p07_trial1.csv", "t_ms,x_px,y_px,label\n0,10,20,0\n4,12,21,1\n8,15,22,1\n")
    seq = load_csv(path)
    assert seq.subject_id == "p07"
    np.testing.assert_array_equal(seq.t, [0, 4, 8])
    np.testing.assert_array_equal(seq.labels, [0, 1, 1])
    assert seq[1] == GazeSample(4.0, 12.0, 21.0, 1)


def test_load_csv_headerless_unlabelled(tmp_path):
    seq = load_csv(write(tmp_path, "a.csv", "0,1,2\n1,3,4\n"))
    assert seq.labels is None and len(seq) == 2


def test_nan_is_zeroed_and_reported(tmp_path):
    seq = load_csv(write(tmp_path, "a.csv", "0,1,2\n1,nan,4\n2,5,inf\n"))
    assert seq.x[1] == 0.0 and seq.y[2] == 0.0
    np.testing.assert_array_equal(seq.flagged, [False, True, True])
    report = format_sanitation_report(seq)
    assert report.splitlines()[0].startswith("1 ") and report.splitlines()[1].startswith("2 ")


def test_decreasing_timestamps_name_the_row(tmp_path):
    with pytest.raises(DataFormatError, match="row 2"):
        load_csv(write(tmp_path, "a.csv", "t,x,y\n0,1,1\n5,1,1\n3,1,1\n"))


def test_empty_and_bad_label_files(tmp_path):
    with pytest.raises(DataFormatError):
        load_csv(write(tmp_path, "a.csv", ""))
    with pytest.raises(DataFormatError, match="row 0"):
        load_csv(write(tmp_path, "b.csv", "0,1,1,7\n"))
    with pytest.raises(DataFormatError, match="row 1"):
        load_csv(write(tmp_path, "c.csv", "0,1,1\n1,x,1\n"))


def test_named_schema(tmp_path):
    path = write(tmp_path, "a.csv", "gx,gy,time\n1,2,0\n3,4,10\n")
    seq = load_csv(path, schema={"t": "time", "x": "gx", "y": "gy"})
    np.testing.assert_array_equal(seq.x, [1, 3])
    np.testing.assert_array_equal(seq.t, [0, 10])


def test_write_then_load_round_trip(tmp_path, rng):
    seq = GazeSequence("s1", np.arange(6) * 2.5, rng.normal(500, 50, 6), rng.normal(500, 50, 6),
                       rng.integers(0, 5, 6))
    write_csv(seq, tmp_path / "s1_x.csv")
    back = load_csv(tmp_path / "s1_x.csv")
    np.testing.assert_array_equal(back.x, seq.x)
    np.testing.assert_array_equal(back.y, seq.y)
    np.testing.assert_array_equal(back.labels, seq.labels)
    assert [s.subject_id for s in load_directory(tmp_path)] == ["s1"]


def test_subject_from_path():
    assert subject_from_path("/a/b/s12_rec3.csv") == "s12"
    assert subject_from_path("plain.csv") == "plain"


def test_sequence_validation():
    with pytest.raises(LengthError):
        GazeSequence("s", [], [], [])
    with pytest.raises(ShapeError):
        GazeSequence("s", [0, 1], [0], [0, 1])


# --- encodings ------------------------------------------------------------------


def test_input_tensor_scaling_and_channel_order():
    seq = GazeSequence("s", [0.0, 10.0], [100.0, 200.0], [300.0, 400.0])
    t = to_input_tensor(seq)
    np.testing.assert_array_equal(t.values, [[1.0, 2.0], [3.0, 4.0], [0.0, 0.1]])
    back = from_input_tensor(t)
    np.testing.assert_allclose(back.x, seq.x)


@given(st.integers(0, 2**32 - 1), st.integers(2, 50))
def test_delta_round_trip(seed, n):
    r = np.random.default_rng(seed)
    seq = GazeSequence("s", np.cumsum(r.uniform(1, 5, n)), r.uniform(0, 1000, n), r.uniform(0, 1000, n))
    back = integrate_deltas(to_delta_tensor(seq), seq[0])
    np.testing.assert_allclose(back.x, seq.x, atol=1e-9)
    np.testing.assert_allclose(back.y, seq.y, atol=1e-9)
    np.testing.assert_allclose(back.t, seq.t, atol=1e-9)


def test_delta_needs_two_samples():
    with pytest.raises(LengthError):
        to_delta_tensor(GazeSequence("s", [0.0], [0.0], [0.0]))


# --- augmentation, crops, batches ---------------------------------------------


def test_augment_disabled_is_identity(rng):
    t = Tensor(rng.normal(size=(3, 20)))
    np.testing.assert_array_equal(augment(t, rng, False, False).values, t.values)


@given(st.integers(0, 2**32 - 1))
def test_augment_bounds(seed):
    r = np.random.default_rng(seed)
    base = np.stack([r.uniform(1, 10, 30), r.uniform(1, 10, 30), np.arange(30.0)])
    jittered = augment(Tensor(base), r, True, False).values
    ratio = jittered[:2] / base[:2]
    assert np.all(np.abs(ratio - 1) <= 0.02 + 1e-12)
    np.testing.assert_array_equal(jittered[2], base[2])
    shifted = augment(Tensor(base), r, False, True).values
    offset = shifted[:2] - base[:2]
    spread = base[:2].max(axis=1) - base[:2].min(axis=1)
    assert np.allclose(offset, offset[:, :1])
    assert np.all(np.abs(offset[:, 0]) <= 0.1 * spread + 1e-12)


@given(st.integers(0, 2**32 - 1), st.integers(2, 200))
def test_crop_random_length(seed, h):
    r = np.random.default_rng(seed)
    x = np.arange(3 * h, dtype=float).reshape(3, h)
    out = crop_random(Tensor(x), r, 0.5).values
    assert math.ceil(0.5 * h) <= out.shape[1] <= h
    start = int(out[0, 0])
    np.testing.assert_array_equal(out, x[:, start:start + out.shape[1]])


def test_make_batches_equal_heights(rng):
    items = [Tensor(np.zeros((3, h))) for h in [4, 8, 4, 4, 8, 12, 4]]
    batches = make_batches(items, rng, 2)
    assert sum(len(b) for b in batches) == len(items)
    assert all(len({t.height for t in b}) == 1 and len(b) <= 2 for b in batches)
    with pytest.raises(ConfigurationError):
        make_batches(items, rng, 0)


# --- folds -------------------------------------------------------------------------


def _seqs(subjects):
    return [GazeSequence(s, [0.0], [0.0], [0.0]) for s in subjects]


@given(st.integers(0, 2**32 - 1), st.integers(4, 30))
def test_folds_partition_subjects(seed, n):
    seqs = _seqs([f"s{i}" for i in range(n)] * 2)
    plan = make_folds(seqs, 4, np.random.default_rng(seed))
    sizes = [len(plan.subjects(f)) for f in range(4)]
    assert sum(sizes) == n and max(sizes) - min(sizes) <= 1
    assert FoldPlan.from_text(plan.to_text(), 4) == plan


def test_folds_need_enough_subjects():
    with pytest.raises(ConfigurationError):
        make_folds(_seqs(["a", "b", "c"]), 4)


# --- schedules ----------------------------------------------------------------------


def test_segmentation_schedule_trace():
    s = StepSchedule(1e-2, 0.1, 500)
    assert [s.lr_at(e) for e in (1, 500, 501, 1001, 2500)] == pytest.approx([1e-2, 1e-2, 1e-3, 1e-4, 1e-6])
    assert s.num_segments == 5 and s.total_epochs == 2500


def test_warmup_schedule_trace():
    s = StepSchedule(1e-3, 0.1, 1000, 1e-6, warmup_lr=1e-4, warmup_epochs=100)
    assert s.lr_at(100) == 1e-4 and s.lr_at(101) == 1e-3 and s.lr_at(1001) == pytest.approx(1e-4)
    assert s.total_epochs == 4000
    assert len(list(s)) == 4000


@pytest.mark.parametrize("kwargs", [dict(base_lr=0), dict(base_lr=1e-2, decay_factor=1.0),
                                    dict(base_lr=1e-2, decay_every=0), dict(base_lr=1e-2, stop_lr=1.0),
                                    dict(base_lr=1e-2, warmup_epochs=5)])
def test_schedule_validation(kwargs):
    with pytest.raises(ConfigurationError):
        StepSchedule(**kwargs)
