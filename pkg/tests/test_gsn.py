import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import square_pixels
from spikedx.dataset import OmicsDataset, gen_synthetic
from spikedx.errors import DimensionMismatch, EmptyInput, ZeroVarianceFeature
from spikedx.gsn import (
    FeatureLayout,
    FeatureStats,
    GsnConfig,
    GsnEncoder,
    GsnImage,
    SomGrid,
    assign_layout,
    fit_feature_stats,
    glyph_params,
    layout_to_pixels,
    quantization_error,
    rasterize_glyphs,
    read_layout,
    read_pbm,
    render_gsn,
    som_inputs,
    train_som,
    write_layout,
    write_pbm,
)


# --- SOM --------------------------------------------------------------------


def test_som_one_node_converges_to_mean():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((100, 3))
    som = train_som(x, (1, 1), 200, 0.05, np.random.default_rng(1))
    assert np.abs(som.node_weights[0] - x.mean(axis=0)).max() <= 1e-2


def test_som_identical_rows_zero_error():
    x = np.tile([[0.3, -1.0, 2.0]], (12, 1))
    som = train_som(x, (3, 2), 5, 0.05, np.random.default_rng(0))
    assert som.final_qe <= 1e-9


def test_som_two_clusters_match_two_means():
    from sklearn.cluster import KMeans

    sep = 5.0
    rng = np.random.default_rng(4)
    x = np.vstack([rng.standard_normal((40, 2)) * 0.5, rng.standard_normal((40, 2)) * 0.5 + [sep, 0]])
    som = train_som(x, (2, 1), 20, 0.05, np.random.default_rng(5))
    km = KMeans(2, n_init=10, random_state=0).fit(x).cluster_centers_
    w = som.node_weights
    err = min(
        max(np.linalg.norm(w[0] - km[0]), np.linalg.norm(w[1] - km[1])),
        max(np.linalg.norm(w[0] - km[1]), np.linalg.norm(w[1] - km[0])),
    )
    assert err <= 0.1 * sep


def test_som_deterministic_and_shape():
    x = np.random.default_rng(0).standard_normal((9, 4))
    a = train_som(x, (3, 2), 5, 0.05, np.random.default_rng(7))
    b = train_som(x, (3, 2), 5, 0.05, np.random.default_rng(7))
    np.testing.assert_array_equal(a.node_weights, b.node_weights)
    assert a.node_weights.shape == (6, 4) and a.epochs_trained == 5


def test_som_empty_input():
    with pytest.raises(EmptyInput):
        train_som(np.zeros((0, 3)), (2, 2), 1, 0.05, np.random.default_rng(0))


@settings(max_examples=25, deadline=None)
@given(
    st.integers(20, 120), st.integers(4, 20), st.integers(2, 16), st.floats(0.0, 4.0),
    st.integers(1, 6), st.integers(1, 5), st.integers(1, 10), st.integers(0, 2**31),
)
def test_som_quantization_error_never_rises_on_feature_profiles(n_maj, n_min, n_feat, sep, gw, gh, epochs, seed):
    d = gen_synthetic(n_maj, n_min, n_feat, sep, np.random.default_rng(seed))
    x = som_inputs(d, fit_feature_stats(d))
    som = train_som(x, (gw, gh), epochs, 0.05, np.random.default_rng(seed + 1))
    assert som.final_qe <= som.initial_qe
    assert som.final_qe == pytest.approx(quantization_error(som, x))


# --- layout -----------------------------------------------------------------


def test_assign_layout_exact_match_and_collisions():
    som = SomGrid(3, 2, np.arange(12, dtype=float).reshape(6, 2))
    x = np.array([[6.0, 7.0], [6.0, 7.0], [0.0, 1.0]])
    lay = assign_layout(som, x, ["a", "b", "c"])
    assert lay.coords.tolist() == [[0, 1], [0, 1], [0, 0]]


def test_assign_layout_tie_goes_to_lower_index():
    som = SomGrid(2, 1, np.array([[0.0], [2.0]]))
    assert assign_layout(som, np.array([[1.0]])).coords.tolist() == [[0, 0]]


def test_assign_layout_dimension_mismatch():
    som = SomGrid(2, 1, np.zeros((2, 3)))
    with pytest.raises(DimensionMismatch):
        assign_layout(som, np.zeros((1, 2)))


def test_layout_round_trip(tmp_path):
    lay = FeatureLayout(np.array([[0, 1], [2, 0]]), (3, 2), ["g1", "g2"])
    write_layout(lay, tmp_path / "l.csv")
    back = read_layout(tmp_path / "l.csv", (3, 2))
    assert back.feature_names == lay.feature_names
    np.testing.assert_array_equal(back.coords, lay.coords)


# --- glyph parameters -------------------------------------------------------


def _one_feature(values):
    values = np.asarray(values, dtype=float)[:, None]
    return OmicsDataset([f"s{i}" for i in range(len(values))], values, ["g"], np.zeros(len(values), dtype=int), 2)


def test_glyph_params_examples():
    stats = FeatureStats(np.array([10.0]), np.array([2.0]))
    p = glyph_params(_one_feature([10.0, 3.0, 13.0]), (3.0, 11.0), stats)
    assert p.sizes[:, 0].tolist() == pytest.approx([7.0, 3.0, 9.0])
    assert p.rotations[:, 0].tolist() == pytest.approx([90.0, 0.0, 135.0])


def test_glyph_params_zero_variance():
    with pytest.raises(ZeroVarianceFeature):
        glyph_params(_one_feature([1.0]), (3, 11), FeatureStats(np.array([1.0]), np.array([0.0])))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20))
def test_glyph_params_ranges(values):
    stats = FeatureStats(np.array([0.0]), np.array([7.0]))
    p = glyph_params(_one_feature(values), (2.0, 12.0), stats)
    assert np.all((p.sizes >= 2.0) & (p.sizes <= 12.0))
    assert np.all((p.rotations >= 0.0) & (p.rotations < 180.0))


# --- rendering --------------------------------------------------------------


def test_size3_diamond_is_plus_shape():
    lay = FeatureLayout(np.array([[0, 0]]), (1, 1))
    img = render_gsn(lay, [3.0], [0.0], (11, 11))
    ys, xs = np.nonzero(img.pixels)
    assert sorted(zip(xs.tolist(), ys.tolist())) == [(4, 5), (5, 4), (5, 5), (5, 6), (6, 5)]
    np.testing.assert_array_equal(img.pixels.astype(bool), square_pixels(5.5, 5.5, 3.0, 0.0, 11, 11))


def test_rotation_180_equals_0():
    lay = FeatureLayout(np.array([[0, 0], [2, 1]]), (3, 2))
    a = render_gsn(lay, [9.0, 14.0], [0.0, 30.0], (40, 30))
    b = render_gsn(lay, [9.0, 14.0], [180.0, 210.0], (40, 30))
    np.testing.assert_array_equal(a.pixels, b.pixels)


def test_zero_features_black():
    lay = FeatureLayout(np.zeros((0, 2), dtype=int), (2, 2))
    img = render_gsn(lay, [], [], (16, 8))
    assert img.pixels.shape == (8, 16) and not img.pixels.any()


def test_rasterizer_matches_oracle_random_glyphs():
    rng = np.random.default_rng(11)
    w, h = 24, 20
    for _ in range(50):
        cx, cy = rng.uniform(0, w), rng.uniform(0, h)
        size, rot = rng.uniform(0.5, 14.0), rng.uniform(0, 360)
        got = rasterize_glyphs([[cx, cy]], [size], [rot], (w, h))
        np.testing.assert_array_equal(got, square_pixels(cx, cy, size, rot, w, h))


def test_layout_to_pixels_centres_inside_margin():
    lay = FeatureLayout(np.array([[x, y] for x in range(6) for y in range(4)]), (6, 4))
    margin = 16.0
    c = layout_to_pixels(lay, (176, 128), margin)
    assert np.all(c - 0.5 == np.floor(c - 0.5))  # pixel centres
    assert c[:, 0].min() >= margin and c[:, 0].max() <= 176 - margin
    assert c[:, 1].min() >= margin and c[:, 1].max() <= 128 - margin


def test_default_encoder_never_clips(caplog):
    d = gen_synthetic(40, 10, 11, 2.0, np.random.default_rng(0))
    enc = GsnEncoder(GsnConfig()).fit(d, np.random.default_rng(1))
    imgs = enc.transform(d)
    assert imgs.shape == (50, 128, 176) and set(np.unique(imgs)) <= {0, 1}
    assert "clipped" not in caplog.text


def test_encoder_fixed_layout_skips_som():
    d = gen_synthetic(20, 10, 3, 2.0, np.random.default_rng(0))
    lay = FeatureLayout(np.array([[0, 0], [5, 3], [2, 2]]), (6, 4), d.feature_names)
    enc = GsnEncoder().fit(d, np.random.default_rng(0), layout=lay)
    assert enc.som is None and enc.layout is lay


def test_pbm_round_trip(tmp_path):
    px = (np.random.default_rng(0).random((7, 40)) < 0.3).astype(np.uint8)
    write_pbm(GsnImage(40, 7, px), tmp_path / "x.pbm")
    back = read_pbm(tmp_path / "x.pbm")
    np.testing.assert_array_equal(back.pixels, px)
