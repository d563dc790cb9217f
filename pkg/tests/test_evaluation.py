import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import t as student_t

from stereosal.evaluation import (
    METRICS,
    FixationSet,
    MetricReport,
    NegativePool,
    all_metrics,
    auc_judd,
    auc_shuffled,
    average_ranks,
    build_report,
    center_map,
    chance_map,
    density_from_points,
    display_view,
    emd,
    emd_grid,
    evaluate,
    fixation_density,
    histogram_match,
    infinite_humans_scores,
    kld,
    load_fixations,
    mean_ci,
    metric,
    nss,
    one_human_scores,
    pcc,
    postprocess,
    save_fixations,
    sim,
    split_half_reliability,
    ttest_p,
    tune_postprocess,
)
from stereosal.evaluation.fixations import fixation_map
from stereosal.evaluation.metrics import as_distribution, auc_mann_whitney, downsample_mass
from stereosal.geometry import ViewingGeometry

from helpers import centre_biased_points, lp_emd


class TestFixationSet:
    def test_csv_roundtrip(self, tmp_path):
        fx = FixationSet(["a", "b"], [0, 3], [1.5, 2.0], [3.25, 4.0], [10.0, 20.0])
        save_fixations(tmp_path / "f.csv", fx)
        back = load_fixations(tmp_path / "f.csv")
        assert back.subjects == ["a", "b"] and back.frames == [0, 3]
        np.testing.assert_allclose(back.points(), fx.points())

    def test_missing_column(self, tmp_path):
        (tmp_path / "f.csv").write_text("subject,frame,x\n")
        with pytest.raises(ValueError, match="missing"):
            load_fixations(tmp_path / "f.csv")

    def test_select(self):
        fx = FixationSet(["a", "b", "a"], [0, 0, 1], [1, 2, 3], [1, 2, 3], [0, 0, 0])
        assert len(fx.select(frame=0)) == 2
        assert len(fx.select(exclude_subjects=["a"])) == 1
        assert fx.points(1).tolist() == [[3.0, 3.0]]

    def test_bounds(self):
        fx = FixationSet.from_points([[10, 3]])
        with pytest.raises(ValueError, match="outside"):
            fx.check_bounds(8, 8)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            FixationSet(["a"], [0, 1], [1], [1], [1])


class TestDensity:
    def test_single_fixation_peak(self):
        d = density_from_points([[30, 20]], (41, 61), 5.0)
        assert np.unravel_index(d.argmax(), d.shape) == (20, 30)
        assert d.sum() == pytest.approx(1.0)

    def test_two_fixations_mass(self):
        d = density_from_points([[40, 50], [210, 57]], (110, 260), 8.0)
        assert d[:, :125].sum() == pytest.approx(0.5, abs=1e-6)
        assert d[:, 125:].sum() == pytest.approx(0.5, abs=1e-6)

    def test_sigma_is_one_degree(self):
        g = ViewingGeometry()
        assert g.pixels_per_degree == pytest.approx(60, abs=1)
        # points are in the analysed frame's pixels; sigma follows its resolution
        fx = FixationSet.from_points([[96, 54]])
        small = fixation_density(fx, 0, g, (108, 192))
        ref = density_from_points([[96, 54]], (108, 192), g.pixels_per_degree / 10)
        np.testing.assert_allclose(small, ref)

    def test_no_fixations(self, caplog):
        with caplog.at_level(logging.WARNING):
            d = density_from_points(np.zeros((0, 2)), (5, 5), 2.0)
        assert not d.any() and "no fixations" in caplog.text

    def test_display_view(self):
        d = density_from_points([[5, 5]], (11, 11), 2.0)
        v = display_view(d)
        assert v.max() == 1.0 and not display_view(np.zeros((3, 3))).any()

    def test_fixation_map_rounding(self):
        m = fixation_map([[1.6, 0.2], [-3, 9]], (4, 4))
        assert m[0, 2] and m[3, 0] and m.sum() == 2


class TestMetricIdentities:
    def test_self_comparison(self, rng):
        m = density_from_points(rng.uniform(0, 39, (6, 2)), (40, 40), 3.0)
        assert pcc(m, m) == 1.0
        assert kld(m, m) == 0.0
        assert sim(m, m) == pytest.approx(1.0, abs=1e-12)
        assert emd(m, m) == 0.0

    def test_chance_auc(self):
        r = np.random.default_rng(7)
        sal = chance_map((200, 200), r)
        pts = r.uniform(0, 199, (1000, 2))
        assert auc_judd(sal, pts) == pytest.approx(0.5, abs=0.02)

    def test_nss_planted(self, rng):
        sal = rng.normal(size=(50, 50))
        sal = (sal - sal.mean()) / sal.std()
        sal[10, 10] = sal[20, 30] = 2.0
        sal = (sal - sal.mean()) / sal.std()
        z = sal[10, 10]
        assert nss(sal, [[10, 10], [30, 20]]) == pytest.approx(z, abs=1e-9)
        shifted = 3.5 * sal + 1.0
        assert nss(shifted, [[10, 10], [30, 20]]) == pytest.approx(z, abs=1e-9)

    def test_nss_exact_two(self):
        # 5-pixel map with values chosen so one pixel has z = 2
        v = np.array([[2.0, -0.5, -0.5, -0.5, -0.5]])
        v = (v - v.mean()) / v.std()
        target = 2.0 * v.std() + v.mean()
        sal = np.array([[target, *v[0, 1:]]])
        zs = (sal - sal.mean()) / sal.std()
        assert nss(sal, [[0, 0]]) == pytest.approx(zs[0, 0], abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.floats(0.1, 10), st.floats(-5, 5))
    def test_nss_affine_invariant(self, seed, a, b):
        r = np.random.default_rng(seed)
        sal = r.random((12, 12))
        pts = r.uniform(0, 11, (5, 2))
        assert nss(a * sal + b, pts) == pytest.approx(nss(sal, pts), abs=1e-9)

    def test_nss_constant_map(self):
        assert nss(np.ones((4, 4)), [[1, 1]]) == 0.0

    def test_pcc_constant(self, rng):
        assert pcc(np.ones((3, 3)), rng.random((3, 3))) == 0.0

    def test_kld_direction(self):
        gt = np.array([[0.5, 0.5, 0.0]])
        sal = np.array([[0.25, 0.25, 0.5]])
        assert kld(sal, gt) == pytest.approx(np.log(2))
        assert kld(gt, sal) > 10  # the other direction hits the epsilon floor

    def test_as_distribution(self):
        np.testing.assert_allclose(as_distribution(np.zeros((2, 2))), 0.25)
        with pytest.raises(ValueError):
            as_distribution(-np.ones((2, 2)))

    def test_ranges(self, rng):
        sal = rng.random((30, 30))
        gt = density_from_points(rng.uniform(0, 29, (5, 2)), (30, 30), 2.0)
        pts = rng.uniform(0, 29, (5, 2))
        s = all_metrics(sal, gt, pts, rng.uniform(0, 29, (5, 2)))
        assert 0 <= s["AUC"] <= 1 and 0 <= s["sAUC"] <= 1 and 0 <= s["SIM"] <= 1
        assert s["KLD"] >= 0 and s["EMD"] >= 0 and -1 <= s["PCC"] <= 1

    def test_undefined_metrics_nan(self, rng):
        sal = rng.random((5, 5))
        assert math.isnan(metric(sal, None, np.zeros((0, 2)), "AUC"))
        assert math.isnan(metric(sal, None, [[1, 1]], "sAUC"))
        assert math.isnan(metric(sal, np.zeros((5, 5)), [[1, 1]], "PCC"))
        with pytest.raises(ValueError):
            metric(sal, sal, [[1, 1]], "XYZ")

    def test_gt_beats_random(self, rng):
        pts = centre_biased_points(rng, 30, (60, 80))
        gt = density_from_points(pts, (60, 80), 3.0)
        assert auc_judd(gt, pts) >= auc_judd(rng.random((60, 80)), pts)


class TestAUC:
    def test_perfect_map(self):
        sal = np.zeros((10, 10))
        sal[2, 3] = sal[7, 8] = 1.0
        assert auc_judd(sal, [[3, 2], [8, 7]]) == pytest.approx(1.0)

    def test_brute_force_roc(self, rng):
        sal = np.round(rng.random((12, 12)), 1)  # plenty of ties
        pts = rng.integers(0, 12, (20, 2)).astype(float)
        fixated = fixation_map(pts, sal.shape)
        tps, fps = [0.0], [0.0]
        for t in sorted(set(sal[fixated].tolist()), reverse=True):
            tps.append((sal[fixated] >= t).mean())
            fps.append((sal[~fixated] >= t).mean())
        tps.append(1.0)
        fps.append(1.0)
        area = sum((fps[i + 1] - fps[i]) * (tps[i + 1] + tps[i]) / 2 for i in range(len(tps) - 1))
        assert auc_judd(sal, pts) == pytest.approx(area, abs=1e-12)

    def test_tied_fixations_not_counted_as_false_positives(self):
        sal = np.zeros((10, 10))
        sal[2, 3] = sal[7, 8] = 1.0
        sal[5, 5] = 0.5
        assert auc_judd(sal, [[3, 2], [8, 7]]) == pytest.approx(1.0)

    def test_mann_whitney(self):
        assert auc_mann_whitney([2, 3], [1, 1]) == 1.0
        assert auc_mann_whitney([1], [1]) == 0.5

    def test_shuffled_auc_cancels_centre_bias(self):
        r = np.random.default_rng(3)
        shape = (90, 160)
        c = center_map(shape)
        pos = centre_biased_points(r, 1000, shape)
        neg = centre_biased_points(r, 1000, shape)
        assert auc_judd(c, pos) > 0.6
        assert auc_shuffled(c, pos, neg) == pytest.approx(0.5, abs=0.05)


class TestEMD:
    @pytest.mark.parametrize("side", [2, 3, 4, 5])
    def test_matches_linear_program(self, side):
        r = np.random.default_rng(side)
        for _ in range(25):
            p, q = r.random((side, side)), r.random((side, side))
            assert emd_grid(p, q) == pytest.approx(lp_emd(p, q), abs=1e-9)

    def test_moving_a_point(self):
        p = np.zeros((4, 4))
        q = np.zeros((4, 4))
        p[0, 0] = q[3, 3] = 1.0
        assert emd_grid(p, q) == pytest.approx(3 * math.sqrt(2))

    def test_downsample_preserves_mass(self, rng):
        m = rng.random((70, 45))
        d = downsample_mass(m, 32)
        assert d.shape == (32, 32) and d.sum() == pytest.approx(m.sum())

    def test_downsample_small_map_untouched(self, rng):
        m = rng.random((5, 6))
        np.testing.assert_allclose(downsample_mass(m, 32), m)


class TestBaselines:
    def test_chance_pcc_near_zero(self):
        r = np.random.default_rng(11)
        gt = density_from_points(r.uniform(0, 63, (10, 2)), (64, 64), 4.0)
        vals = [pcc(chance_map((64, 64), r), gt) for _ in range(1000)]
        assert np.mean(vals) == pytest.approx(0.0, abs=0.02)

    def test_center_map(self):
        c = center_map((21, 31))
        assert c[10, 15] == 1.0 and c.min() == 0.0
        with pytest.raises(ValueError):
            center_map((5, 5), sigma=0)

    def test_one_human_matches_infinite_when_subjects_agree(self):
        g = ViewingGeometry().scaled_to(64, 36)
        pts = [[20, 10], [40, 25]]
        fx = FixationSet(["a", "a", "b", "b", "c", "c"], [0] * 6, [p[0] for p in pts] * 3,
                         [p[1] for p in pts] * 3, [0] * 6)
        one = one_human_scores(fx, 0, g, (36, 64))
        inf = infinite_humans_scores(fx, 0, g, (36, 64))
        for m in ("PCC", "SIM", "KLD", "EMD", "AUC", "NSS"):
            assert one[m] == pytest.approx(inf[m], abs=1e-9)

    def test_single_subject_unavailable(self):
        g = ViewingGeometry().scaled_to(64, 36)
        fx = FixationSet.from_points([[5, 5]])
        assert all(math.isnan(v) for v in one_human_scores(fx, 0, g, (36, 64)).values())
        assert all(math.isnan(v) for v in infinite_humans_scores(fx, 0, g, (36, 64)).values())
        assert math.isnan(split_half_reliability(fx, 0, g, (36, 64)))

    def test_split_half_reliability(self):
        g = ViewingGeometry().scaled_to(64, 36)
        fx = FixationSet(list("abcd"), [0] * 4, [20, 20, 21, 20], [10, 10, 10, 11], [0] * 4)
        r = split_half_reliability(fx, 0, g, (36, 64))
        assert 0.9 < r <= 1.0


class TestPostprocess:
    def test_identity(self, rng):
        s = rng.random((8, 8))
        np.testing.assert_array_equal(postprocess(s, 0, 0), s)

    def test_full_center(self, rng):
        np.testing.assert_array_equal(postprocess(rng.random((9, 9)), 1.0, 5.0), center_map((9, 9)))

    def test_formula(self, rng):
        from stereosal.imaging import gaussian_blur
        s = rng.random((20, 20))
        mixed = 0.7 * gaussian_blur(s, 2.0) + 0.3 * center_map((20, 20))
        np.testing.assert_allclose(postprocess(s, 0.3, 2.0), (mixed - mixed.min()) / np.ptp(mixed))

    def test_weight_range(self, rng):
        with pytest.raises(ValueError):
            postprocess(rng.random((3, 3)), 1.5, 0)

    def test_tuning_picks_center_bias(self):
        r = np.random.default_rng(5)
        shape = (45, 80)
        maps = [r.random(shape) for _ in range(4)]
        fix = [centre_biased_points(r, 30, shape, 0.08) for _ in range(4)]
        w, s, auc = tune_postprocess(maps, fix, weights=(0.0, 0.1, 0.3, 0.5), sigmas=(0.0, 2.0))
        assert w > 0 and auc > 0.6

    def test_tuning_input_check(self):
        with pytest.raises(ValueError):
            tune_postprocess([], [])


class TestHistogramMatch:
    def test_identity(self, rng):
        s = rng.random((10, 10))
        np.testing.assert_array_equal(histogram_match(s, s), s)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_order_and_histogram(self, seed):
        r = np.random.default_rng(seed)
        s, ref = r.random((16, 16)), r.random((16, 16)) ** 3
        out = histogram_match(s, ref)
        np.testing.assert_array_equal(np.argsort(out.ravel(), kind="stable"), np.argsort(s.ravel(), kind="stable"))
        h_out, _ = np.histogram(out, 256, (0, 1))
        h_ref, _ = np.histogram(ref, 256, (0, 1))
        assert np.abs(h_out - h_ref).max() <= 1

    def test_unequal_sizes_quantiles(self, rng):
        out = histogram_match(rng.random((10, 10)), np.linspace(0, 1, 7)[None])
        assert out.min() >= 0 and out.max() <= 1


class TestStats:
    def test_mean_ci_oracle(self):
        v = np.array([1.0, 2.0, 4.0, 7.0])
        m, half = mean_ci(v)
        lo, hi = student_t.interval(0.95, 3, loc=v.mean(), scale=v.std(ddof=1) / 2)
        assert m == pytest.approx(3.5) and half == pytest.approx((hi - lo) / 2)

    def test_single_value_ci_missing(self):
        m, half = mean_ci([0.4])
        assert m == 0.4 and math.isnan(half)

    def test_identical_samples(self):
        assert ttest_p([0.1, 0.2, 0.3], [0.3, 0.1, 0.2]) == 1.0

    def test_disjoint_samples(self):
        assert ttest_p([10.0, 10.1, 10.2, 9.9, 10.05], [1.0, 1.1, 0.9, 1.05, 0.95]) < 0.001

    def test_too_few(self):
        assert math.isnan(ttest_p([1.0], [2.0, 3.0]))

    def test_average_ranks(self):
        means = {
            "best": {"sAUC": 0.8, "KLD": 1.0, "NSS": 2.0},
            "mid": {"sAUC": 0.7, "KLD": 1.5, "NSS": 1.0},
            "low": {"sAUC": 0.6, "KLD": 2.0, "NSS": 0.5},
        }
        r = average_ranks(means)
        assert r == {"best": 1.0, "mid": 2.0, "low": 3.0}

    def test_kld_ranked_ascending(self):
        r = average_ranks({"a": {"sAUC": 0.5, "KLD": 0.1, "NSS": 1}, "b": {"sAUC": 0.5, "KLD": 0.9, "NSS": 1}})
        assert r["a"] < r["b"]

    def test_report(self, tmp_path):
        pv = {"m1": {m: [0.5, 0.6, 0.7] for m in METRICS}, "m2": {m: [0.1, 0.2, 0.3] for m in METRICS}}
        rep = build_report(pv, ["v1", "v2", "v3"])
        assert isinstance(rep, MetricReport)
        rep.to_csv(tmp_path / "r.csv")
        header = (tmp_path / "r.csv").read_text().splitlines()[0].split(",")
        assert header[0] == "model" and all(m in header for m in METRICS)
        assert len(list(rep.pvalue_rows())) == len(METRICS)
        assert "m1" in rep.format_table()


class TestHarness:
    def _data(self):
        r = np.random.default_rng(0)
        shape = (36, 64)
        fixations, preds = {}, {"good": {}, "flat": {}}
        for v in ("a", "b", "c"):
            rows = []
            for f in range(3):
                for s in range(4):
                    x, y = centre_biased_points(r, 1, shape, 0.05)[0]
                    rows.append((f"s{s}", f, x + 15 if v == "a" else x - 15, y, 0.0))
            subj, fr, xs, ys, ts = zip(*rows)
            fixations[v] = FixationSet(subj, fr, xs, ys, ts)
            g = ViewingGeometry().scaled_to(64, 36)
            preds["good"][v] = {f: display_view(fixation_density(fixations[v], f, g, shape)) for f in range(3)}
            preds["flat"][v] = {f: np.full(shape, 0.5) for f in range(3)}
        return fixations, preds, {v: shape for v in fixations}

    def test_report_shape(self):
        fx, preds, shapes = self._data()
        rep = evaluate(preds, fx, ViewingGeometry(), shapes, seed=1)
        assert rep.models == ["good", "flat", "chance", "center", "one_human", "infinite_humans"]
        assert all(len(rep.per_video["good"][m]) == 3 for m in METRICS)
        assert rep.means["good"]["NSS"] > rep.means["chance"]["NSS"]
        assert rep.ranks["good"] < rep.ranks["chance"]
        assert "split_half_pcc" in rep.extras

    def test_deterministic(self):
        fx, preds, shapes = self._data()
        a = evaluate(preds, fx, ViewingGeometry(), shapes, seed=2)
        b = evaluate(preds, fx, ViewingGeometry(), shapes, seed=2)
        assert a.means == b.means

    def test_negative_pool_excludes_video(self):
        fx = {"a": FixationSet.from_points([[0, 0]]), "b": FixationSet.from_points([[9, 9]])}
        pool = NegativePool(fx, {"a": (10, 10), "b": (10, 10)})
        pts = pool.sample("a", 5, (20, 20), np.random.default_rng(0))
        np.testing.assert_allclose(pts, [[19, 19]] * 5)
