import numpy as np
import pytest

from idt.bestchannel import (
    BestChannelMap,
    MosaicStyle,
    best_channel_map,
    render_best_channel_image,
    tile_side,
)
from idt.errors import MissingVisualization
from idt.featviz import FeatureImage, VizCache, VizParams


def oracle_best_map(fmap):
    """Triple loop argmax with explicit lowest-index tie-breaking."""
    h, w, c = fmap.shape
    channels = np.zeros((h, w), dtype=int)
    acts = np.zeros((h, w))
    for r in range(h):
        for col in range(w):
            best_ch, best_v = 0, fmap[r, col, 0]
            for k in range(1, c):
                if fmap[r, col, k] > best_v:
                    best_ch, best_v = k, fmap[r, col, k]
            channels[r, col] = best_ch
            acts[r, col] = best_v
    return channels, acts


def fill_cache(channels, size=10) -> VizCache:
    cache = VizCache()
    rng = np.random.default_rng(0)
    for ch in channels:
        cache.put(
            FeatureImage(
                pixels=rng.uniform(size=(size, size, 3)),
                layer_name="L",
                channel=int(ch),
                objective_initial=0.0,
                objective_final=1.0,
                dead=False,
                params=VizParams(steps=1),
            )
        )
    return cache


class TestBestChannelMap:
    def test_uniform_map_ties_to_channel_zero(self):
        fmap = np.ones((3, 4, 5))
        bmap = best_channel_map(fmap, "L")
        assert np.all(bmap.channels == 0)
        assert np.all(bmap.activations == 1.0)

    def test_hand_built_2x2x3(self):
        fmap = np.zeros((2, 2, 3))
        fmap[0, 0] = [1, 3, 2]
        fmap[0, 1] = [5, 0, 0]
        fmap[1, 0] = [0, 0, 7]
        fmap[1, 1] = [2, 2, 1]  # tie between 0 and 1 -> 0
        bmap = best_channel_map(fmap, "L")
        want_ch, want_act = oracle_best_map(fmap)
        assert np.array_equal(bmap.channels, want_ch)
        assert np.array_equal(bmap.activations, want_act)
        assert bmap.channels[1, 1] == 0

    def test_one_hot_peak(self):
        fmap = np.zeros((3, 3, 9))
        fmap[1, 0, 7] = 5.0
        bmap = best_channel_map(fmap, "L")
        assert bmap.channels[1, 0] == 7
        assert bmap.activations[1, 0] == 5.0

    def test_matches_oracle_on_random_tensors(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            h = int(rng.integers(1, 17))
            w = int(rng.integers(1, 17))
            c = int(rng.integers(1, 65))
            fmap = rng.uniform(size=(h, w, c)).astype(np.float32)
            # sprinkle exact ties to exercise the tie-break
            if c > 1 and h * w > 1:
                fmap[0, 0, :] = 0.5
            bmap = best_channel_map(fmap, "L")
            want_ch, want_act = oracle_best_map(fmap)
            assert np.array_equal(bmap.channels, want_ch)
            assert np.array_equal(bmap.activations, want_act)

    def test_json_round_trip(self, tmp_path):
        fmap = np.random.default_rng(1).uniform(size=(4, 5, 6))
        bmap = best_channel_map(fmap, "4M")
        bmap.save(tmp_path / "map.json")
        import json

        with open(tmp_path / "map.json") as f:
            back = BestChannelMap.from_dict(json.load(f))
        assert np.array_equal(back.channels, bmap.channels)
        assert np.allclose(back.activations, bmap.activations)
        assert back.layer_name == "4M"


class TestMosaic:
    def test_tile_side_monotone(self):
        style = MosaicStyle(slot=64)
        acts = np.linspace(0, 3, 20)
        sides = [tile_side(a, 0.0, 3.0, style) for a in acts]
        assert all(b >= a for a, b in zip(sides, sides[1:]))
        assert sides[0] == round(64 * 0.15)
        assert sides[-1] == 64

    def test_equal_activations_equal_tiles(self):
        fmap = np.full((3, 3, 2), 2.0)
        bmap = best_channel_map(fmap, "L")
        style = MosaicStyle(slot=16, label=False)
        img = render_best_channel_image(bmap, fill_cache([0]), style)
        assert img.shape == (48, 48, 3)
        tiles = [img[r * 16 : (r + 1) * 16, c * 16 : (c + 1) * 16] for r in range(3) for c in range(3)]
        for t in tiles[1:]:
            assert np.array_equal(t, tiles[0])

    def test_larger_activation_larger_tile(self):
        bmap = BestChannelMap(
            "L",
            channels=np.zeros((1, 2), dtype=int),
            activations=np.array([[1.0, 3.0]]),
        )
        style = MosaicStyle(slot=32, label=False)
        img = render_best_channel_image(bmap, fill_cache([0]), style)
        # background is (16,16,16): count non-background pixels per slot
        left = (img[:, :32] != 16).any(axis=2).sum()
        right = (img[:, 32:] != 16).any(axis=2).sum()
        assert right > left

    def test_10x10_slots(self):
        rng = np.random.default_rng(3)
        fmap = rng.uniform(size=(10, 10, 4))
        bmap = best_channel_map(fmap, "L")
        img = render_best_channel_image(bmap, fill_cache(range(4)), MosaicStyle(slot=20))
        assert img.shape == (200, 200, 3)

    def test_missing_visualization_raises(self):
        fmap = np.ones((2, 2, 3))
        bmap = best_channel_map(fmap, "L")
        with pytest.raises(MissingVisualization):
            render_best_channel_image(bmap, VizCache(), MosaicStyle(slot=16))

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        fmap = rng.uniform(size=(4, 4, 3))
        bmap = best_channel_map(fmap, "L")
        cache = fill_cache(range(3))
        a = render_best_channel_image(bmap, cache, MosaicStyle(slot=24))
        b = render_best_channel_image(bmap, cache, MosaicStyle(slot=24))
        assert np.array_equal(a, b)

    def test_background_blend(self):
        # cell (0,0) has the low activation, so its slot corner shows background
        bmap = BestChannelMap(
            "L",
            channels=np.zeros((2, 2), dtype=int),
            activations=np.array([[0.0, 1.0], [1.0, 1.0]]),
        )
        bg = np.full((32, 32, 3), 255, dtype=np.uint8)
        style = MosaicStyle(slot=16, label=False, background=bg, background_opacity=0.5)
        img = render_best_channel_image(bmap, fill_cache([0]), style)
        # blend of canvas 16 and background 255 at half opacity
        assert 120 < img[0, 0].mean() < 150
