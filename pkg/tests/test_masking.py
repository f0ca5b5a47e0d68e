import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffimpute.errors import DataError
from diffimpute.masking import (
    apply_mask,
    block_mask,
    generate_mask,
    hybrid_mask,
    load_mask_csv,
    point_mask,
    save_mask_csv,
)


def zero_runs(column):
    """(start, length) of maximal zero runs in one channel."""
    runs, start = [], None
    for t, v in enumerate(column):
        if v == 0 and start is None:
            start = t
        elif v != 0 and start is not None:
            runs.append((start, t - start))
            start = None
    if start is not None:
        runs.append((start, len(column) - start))
    return runs


class TestPointMask:
    def test_rate_zero_all_observed(self):
        m = point_mask(10, 4, 0.0, np.random.default_rng(0))
        np.testing.assert_array_equal(m, 1.0)

    def test_rate_one_rejected(self):
        with pytest.raises(ValueError):
            point_mask(10, 4, 1.0, np.random.default_rng(0))

    def test_empirical_rate_over_1e6_cells(self):
        m = point_mask(1000, 1000, 0.1, np.random.default_rng(42))
        missing = 1.0 - m.mean()
        assert 0.095 <= missing <= 0.105

    def test_all_missing_draw_is_retried_then_fails(self):
        class AlwaysMissing:
            def random(self, shape):
                return np.zeros(shape)

        with pytest.raises(DataError):
            point_mask(2, 2, 0.9, AlwaysMissing())

    def test_binary_values_only(self):
        m = point_mask(50, 7, 0.3, np.random.default_rng(1))
        assert set(np.unique(m)) <= {0.0, 1.0}

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_seed_reproducibility(self, seed):
        a = point_mask(24, 5, 0.2, np.random.default_rng(seed))
        b = point_mask(24, 5, 0.2, np.random.default_rng(seed))
        np.testing.assert_array_equal(a, b)


class TestBlockMask:
    def test_no_failures_degenerates_to_point(self):
        seed = 99
        a = block_mask(48, 13, np.random.default_rng(seed), point_rate=0.05,
                       failure_prob=0.0)
        b = point_mask(48, 13, 0.05, np.random.default_rng(seed))
        np.testing.assert_array_equal(a, b)

    def test_failure_runs_within_bounds_unless_truncated(self):
        # point component off so every zero run is failure-attributable;
        # at L=48 an interior run contains a complete failure (>= 12) and
        # cannot exceed the window, so lengths stay in [12, 48].
        rng = np.random.default_rng(3)
        seen = 0
        for _ in range(400):
            m = block_mask(48, 13, rng, point_rate=0.0, failure_prob=0.01)
            for d in range(13):
                for start, length in zero_runs(m[:, d]):
                    seen += 1
                    if start == 0 or start + length == 48:
                        assert length <= 48
                    else:
                        assert 12 <= length <= 48
        assert seen > 100

    def test_run_length_mean(self):
        rng = np.random.default_rng(4)
        lengths = rng.integers(12, 49, size=200_000)
        assert abs(lengths.mean() - 30.0) < 0.1  # E[S] = (12+48)/2

    def test_missing_fraction_matches_coverage_oracle(self):
        # closed-form per-cell survival: point survival times the product of
        # "no failure started at u <= t covering t" over u, vs Monte Carlo
        L, D = 48, 13
        q, p = 0.0015, 0.05
        s_min, s_max = 12, 48
        span = s_max - s_min + 1

        def tail(k):  # P(S >= k)
            if k <= s_min:
                return 1.0
            if k > s_max:
                return 0.0
            return (s_max - k + 1) / span

        survive = np.empty(L)
        for t in range(L):
            prob = 1.0 - p
            for u in range(t + 1):
                prob *= 1.0 - q * tail(t - u + 1)
            survive[t] = prob
        expected_missing = 1.0 - survive.mean()

        rng = np.random.default_rng(5)
        total = 0.0
        n_masks = 10_000
        for _ in range(n_masks):
            m = block_mask(L, D, rng, point_rate=p, failure_prob=q)
            total += 1.0 - m.mean()
        observed = total / n_masks
        assert observed == pytest.approx(expected_missing, rel=0.05)

    def test_rejects_bad_run_bounds(self):
        with pytest.raises(ValueError):
            block_mask(48, 2, np.random.default_rng(0), run_min=0)
        with pytest.raises(ValueError):
            block_mask(48, 2, np.random.default_rng(0), run_min=10, run_max=5)


class TestHybridMask:
    def test_delegates_to_point_on_low_coin(self):
        seed = 7
        rng = np.random.default_rng(seed)
        mirror = np.random.default_rng(seed)
        coin = mirror.random()
        expected = (
            point_mask(48, 4, 0.1, mirror)
            if coin < 0.5
            else block_mask(48, 4, mirror)
        )
        np.testing.assert_array_equal(hybrid_mask(48, 4, rng), expected)

    def test_strategy_frequencies(self):
        rng = np.random.default_rng(8)
        point_like = 0
        n = 10_000
        for _ in range(n):
            mirror_state = rng.bit_generator.state
            coin_rng = np.random.default_rng()
            coin_rng.bit_generator.state = mirror_state
            if coin_rng.random() < 0.5:
                point_like += 1
            hybrid_mask(12, 2, rng)
        assert 0.48 <= point_like / n <= 0.52


class TestApplyAndIO:
    def test_all_ones_identity(self):
        x = np.random.default_rng(9).standard_normal((6, 3))
        known, m = apply_mask(x, np.ones_like(x))
        np.testing.assert_array_equal(known, x)

    def test_all_zeros(self):
        x = np.random.default_rng(10).standard_normal((6, 3))
        known, _ = apply_mask(x, np.zeros_like(x))
        np.testing.assert_array_equal(known, 0.0)

    def test_elementwise_product(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((5, 4))
        m = (rng.random((5, 4)) > 0.5).astype(float)
        known, _ = apply_mask(x, m)
        np.testing.assert_array_equal(known, x * m)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            apply_mask(np.zeros((3, 2)), np.zeros((2, 3)))

    def test_csv_round_trip(self, tmp_path):
        m = point_mask(20, 3, 0.25, np.random.default_rng(12))
        path = tmp_path / "mask.csv"
        save_mask_csv(path, m, ["a", "b", "c"])
        np.testing.assert_array_equal(load_mask_csv(path), m)

    def test_csv_rejects_non_binary(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,0\n2,0\n")
        with pytest.raises(DataError):
            load_mask_csv(path)

    def test_csv_rejects_ragged(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("a,b\n1,0\n1\n")
        with pytest.raises(DataError):
            load_mask_csv(path)

    def test_generate_mask_dispatch(self):
        rng = np.random.default_rng(13)
        assert generate_mask("point", 8, 2, rng, rate=0.1).shape == (8, 2)
        assert generate_mask("block", 48, 2, rng).shape == (48, 2)
        assert generate_mask("hybrid", 48, 2, rng).shape == (48, 2)
        with pytest.raises(ValueError):
            generate_mask("nope", 8, 2, rng)
