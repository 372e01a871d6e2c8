"""Counter-based streams and block splitting."""

import numpy as np

import streams


class TestStreams:
    def test_same_key_same_draws(self):
        a = streams.stream(7, streams.SIM, 3, streams.XI).standard_normal(10)
        b = streams.stream(7, streams.SIM, 3, streams.XI).standard_normal(10)
        np.testing.assert_array_equal(a, b)

    def test_keys_are_independent(self):
        n = 200_000
        xi = streams.stream(7, streams.SIM, 0, streams.XI).standard_normal(n)
        eta = streams.stream(7, streams.SIM, 0, streams.ETA).standard_normal(n)
        assert abs(np.mean(xi * eta)) < 4.0 / np.sqrt(n)

    def test_derived_seeds_differ(self):
        seeds = {streams.derive_seed(1, gap) for gap in (1, 2, 4, 10, 20)}
        assert len(seeds) == 5
        assert streams.derive_seed(1, 5) == streams.derive_seed(1, 5)

    def test_label_key_is_stable(self):
        assert streams.label_key("is-em-c0") == streams.label_key("is-em-c0")
        assert streams.label_key("is-em-c0") != streams.label_key("is-em-noc0")
        assert streams.label_key("123456789") == 0xCBF43926


class TestNormalStream:
    def test_chunking_does_not_change_draws(self):
        one = streams.NormalStream(streams.stream(3, streams.DATA, 0), 2, chunk=4)
        other = streams.NormalStream(streams.stream(3, streams.DATA, 0), 2, chunk=4)
        pieces = np.concatenate([one.take(3), one.take(5), one.take(1)])
        np.testing.assert_array_equal(pieces, other.take(9))

    def test_zero_width(self):
        ns = streams.NormalStream(streams.stream(3, streams.DATA, 0), 0, chunk=8)
        assert ns.take(5).shape == (5, 0)


class TestBlocks:
    def test_blocks_cover_range(self):
        blocks = streams.split_blocks(10, 3)
        assert [len(b) for b in blocks] == [4, 3, 3]
        assert [i for b in blocks for i in b] == list(range(10))

    def test_more_parts_than_items(self):
        assert len(streams.split_blocks(2, 8)) == 2
        assert streams.split_blocks(0, 4) == []

    def test_map_blocks_keeps_order(self):
        out = streams.map_blocks(lambda b: list(b), 11, workers=4)
        assert [i for part in out for i in part] == list(range(11))
