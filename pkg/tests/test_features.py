import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from idt.errors import BadFeatureName, OutOfRange
from idt.features import (
    FeatureId,
    FeatureTable,
    feature_id_of,
    feature_index,
    parse_feature_name,
)

SHAPE = (10, 10, 128)


def test_paper_style_names():
    assert parse_feature_name("6_5_9") == FeatureId(6, 5, 9)
    assert parse_feature_name("0_0_0") == FeatureId(0, 0, 0)
    assert parse_feature_name("0_0_20") == FeatureId(0, 0, 20)


@pytest.mark.parametrize("bad", ["", "1_2", "a_b_c", "1_2_3_4", "-1_0_0", "1.5_0_0"])
def test_bad_names_raise(bad):
    with pytest.raises(BadFeatureName):
        parse_feature_name(bad)


def test_index_arithmetic():
    assert feature_index(FeatureId(0, 0, 0), SHAPE) == 0
    # 6*1280 + 5*128 + 9
    assert feature_index(FeatureId(6, 5, 9), SHAPE) == 8329


def test_out_of_range():
    with pytest.raises(OutOfRange):
        feature_index(FeatureId(10, 0, 0), SHAPE)
    with pytest.raises(OutOfRange):
        feature_id_of(12800, SHAPE)


def test_full_round_trip():
    for i in range(SHAPE[0] * SHAPE[1] * SHAPE[2]):
        assert feature_index(feature_id_of(i, SHAPE), SHAPE) == i


@given(
    h=st.integers(1, 12),
    w=st.integers(1, 12),
    c=st.integers(1, 64),
    data=st.data(),
)
def test_bijection_property(h, w, c, data):
    shape = (h, w, c)
    row = data.draw(st.integers(0, h - 1))
    col = data.draw(st.integers(0, w - 1))
    ch = data.draw(st.integers(0, c - 1))
    fid = FeatureId(row, col, ch)
    assert feature_id_of(feature_index(fid, shape), shape) == fid
    assert parse_feature_name(fid.name) == fid


def test_table_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    t = FeatureTable(
        rng.uniform(size=(6, 12)).astype(np.float32),
        rng.integers(0, 2, size=6),
        "4M",
        (2, 2, 3),
        ["a", "b"],
        paths=[f"p{i}.png" for i in range(6)],
        splits=["train"] * 4 + ["test"] * 2,
    )
    path = tmp_path / "feats.npz"
    t.save(path)
    back = FeatureTable.load(path)
    assert np.array_equal(back.X, t.X)
    assert np.array_equal(back.y, t.y)
    assert back.layer_shape == (2, 2, 3)
    assert back.class_order == ["a", "b"]
    assert back.paths == t.paths
    assert len(back.subset("test")) == 2
