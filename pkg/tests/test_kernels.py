"""Two-engine agreement and edge behavior of the numeric kernels."""

import os
import subprocess
import sys

import numpy as np
import pytest

import demandstack.kernels as kernels


def _instances(seed=0, count=30):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        n = int(rng.integers(3, 120))
        x = np.round(rng.normal(size=n), 2)  # duplicates on purpose
        y = rng.normal(size=n)
        out.append((x, y))
    return out


class TestEngineAgreement:
    """The compiled and plain-numpy engines must agree numerically."""

    @pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba unavailable")
    def test_split_scan_engines_agree(self):
        for x, y in _instances(1):
            for min_leaf in (1, 2, 5):
                vr_nb, t_nb = kernels._numeric_split_scan_nb(x, y, min_leaf)
                vr_np, t_np = kernels._numeric_split_scan_np(x, y, min_leaf)
                if vr_np < 0.0:
                    assert vr_nb < 0.0
                    continue
                assert vr_nb == pytest.approx(vr_np, abs=1e-10)
                assert t_nb == pytest.approx(t_np, abs=0.0)

    @pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba unavailable")
    def test_grouped_variance_engines_agree(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            n = int(rng.integers(2, 200))
            g = int(rng.integers(1, 8))
            codes = rng.integers(0, g, size=n)
            y = rng.normal(size=n)
            a = kernels._grouped_within_variance_nb(codes, y, g)
            b = kernels._grouped_within_variance_np(codes, y, g)
            assert a == pytest.approx(b, abs=1e-12)

    @pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba unavailable")
    def test_enet_engines_agree(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            n, p = 40, 5
            X = np.asfortranarray(rng.normal(size=(n, p)))
            y = rng.normal(size=n)
            losses_a = np.empty(500)
            losses_b = np.empty(500)
            ba, b0a, sa, ca = kernels._enet_cd_nb(X, y, 0.1, 0.05, True, 500, 1e-10, losses_a)
            bb, b0b, sb, cb = kernels._enet_cd_np(X, y, 0.1, 0.05, True, 500, 1e-10, losses_b)
            assert np.allclose(ba, bb, atol=1e-8)
            assert b0a == pytest.approx(b0b, abs=1e-8)
            assert ca == cb


class TestSplitScanEdges:
    def test_constant_feature_has_no_split(self):
        x = np.ones(10)
        y = np.arange(10.0)
        vr, _ = kernels.numeric_split_scan(x, y, 1)
        assert vr < 0.0

    def test_min_leaf_can_forbid_all_splits(self):
        x = np.array([1.0, 2.0])
        y = np.array([0.0, 1.0])
        vr, _ = kernels.numeric_split_scan(x, y, 2)
        assert vr < 0.0

    def test_two_point_split(self):
        x = np.array([1.0, 2.0])
        y = np.array([0.0, 4.0])
        vr, t = kernels.numeric_split_scan(x, y, 1)
        # total variance 4.0, both children pure
        assert vr == pytest.approx(4.0, abs=1e-12)
        assert t == pytest.approx(1.5, abs=0.0)

    def test_threshold_is_midpoint_of_distinct_values(self):
        x = np.array([1.0, 1.0, 5.0, 5.0])
        y = np.array([0.0, 0.0, 1.0, 1.0])
        vr, t = kernels.numeric_split_scan(x, y, 1)
        assert t == pytest.approx(3.0, abs=0.0)
        assert vr == pytest.approx(0.25, abs=1e-12)

    def test_equal_reduction_prefers_smaller_threshold(self):
        # symmetric instance: thresholds 1.5 and 3.5 tie exactly
        x = np.array([1.0, 2.0, 3.0, 4.0])
        y = np.array([0.0, 1.0, 1.0, 0.0])
        _, t = kernels.numeric_split_scan(x, y, 1)
        assert t == pytest.approx(1.5, abs=0.0)

    def test_adjacent_float_midpoint_pins_left(self):
        # 0.5*(lo+hi) rounds to hi here; an unpinned threshold would route
        # every row left and empty the other side
        lo = np.nextafter(1.0, 0.0)
        x = np.array([lo, lo, 1.0, 1.0])
        y = np.array([0.0, 0.0, 1.0, 1.0])
        assert 0.5 * (lo + 1.0) == 1.0
        engines = [kernels._numeric_split_scan_np, kernels.numeric_split_scan]
        if kernels.HAVE_NUMBA:
            engines.append(kernels._numeric_split_scan_nb)
        for fn in engines:
            vr, t = fn(x, y, 1)
            assert vr == pytest.approx(0.25, abs=1e-12)
            assert t == lo
            assert np.sum(x <= t) == 2 and np.sum(x > t) == 2


class TestGroupedVariance:
    def test_matches_direct_two_group_computation(self):
        codes = np.array([0, 0, 1], dtype=np.int64)
        y = np.array([0.0, 2.0, 5.0])
        # group 0 variance 1.0 with weight 2/3, group 1 pure
        got = kernels.grouped_within_variance(codes, y, 2)
        assert got == pytest.approx(2.0 / 3.0, abs=1e-12)

    def test_single_group_equals_population_variance(self):
        rng = np.random.default_rng(4)
        y = rng.normal(size=50)
        got = kernels.grouped_within_variance(np.zeros(50, dtype=np.int64), y, 1)
        assert got == pytest.approx(float(np.mean((y - y.mean()) ** 2)), abs=1e-12)


class TestEnvironmentFlag:
    def test_disable_flag_selects_numpy_engine(self):
        code = (
            "import demandstack.kernels as k;"
            "assert not k.USE_NUMBA;"
            "assert k.numeric_split_scan is k._numeric_split_scan_np;"
            "assert k.enet_cd is k._enet_cd_np;"
            "print('ok')"
        )
        env = dict(os.environ, **{kernels.DISABLE_ENV: "1"})
        out = subprocess.run(
            [sys.executable, "-c", code], env=env, capture_output=True, text=True
        )
        assert out.returncode == 0, out.stderr
        assert out.stdout.strip() == "ok"
