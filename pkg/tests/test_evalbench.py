import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rxdet import (
    Mask,
    RngSpec,
    bench_detector,
    grid_search,
    roc_auc,
    summarize_bench,
)
from rxdet.errors import DataError
from rxdet.evalbench import write_bench_csv
from rxdet.raster import Raster
from rxdet.synthgen import generate_injected_patchwork
from rxdet.raster import extract_mask_patches, extract_patches


def pairwise_auc_oracle(scores, labels):
    """Exhaustive Mann-Whitney with ties counted 1/2."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    pos = scores[labels]
    neg = scores[~labels]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


class TestRocAuc:
    def test_perfect_separation(self):
        assert roc_auc([1, 2, 3, 4], [False, False, True, True]).auc == 1.0

    def test_inverted_separation(self):
        assert roc_auc([1, 2, 3, 4], [True, True, False, False]).auc == 0.0

    def test_tied_scores_quarter(self):
        r = roc_auc([1.0, 1.0, 2.0], [False, True, False])
        assert r.auc == pytest.approx(0.25)
        assert r.auc == pytest.approx(pairwise_auc_oracle([1, 1, 2], [0, 1, 0]))

    def test_matches_exhaustive_oracle(self, gen):
        for trial in range(20):
            k = int(gen.integers(5, 200))
            scores = gen.integers(0, 12, size=k).astype(float)  # heavy ties
            labels = gen.random(k) < 0.4
            if labels.all() or not labels.any():
                continue
            assert roc_auc(scores, labels).auc == pytest.approx(
                pairwise_auc_oracle(scores, labels), abs=1e-12
            )

    def test_curve_endpoints_and_monotonicity(self, gen):
        scores = gen.normal(size=300)
        labels = gen.random(300) < 0.3
        r = roc_auc(scores, labels)
        assert r.fpr[0] == 0.0 and r.tpr[0] == 0.0
        assert r.fpr[-1] == 1.0 and r.tpr[-1] == 1.0
        assert (np.diff(r.fpr) >= 0).all() and (np.diff(r.tpr) >= 0).all()
        assert r.thresholds.shape[0] == r.fpr.shape[0] - 1
        assert (np.diff(r.thresholds) < 0).all()

    def test_negation_identity(self, gen):
        scores = gen.integers(0, 6, size=80).astype(float)
        labels = gen.random(80) < 0.5
        if labels.all() or not labels.any():
            labels[0] = True
            labels[1] = False
        assert roc_auc(-scores, labels).auc == pytest.approx(
            1.0 - roc_auc(scores, labels).auc, abs=1e-12
        )

    def test_single_class_rejected(self):
        with pytest.raises(DataError):
            roc_auc([1.0, 2.0], [True, True])

    def test_mask_accepted_as_labels(self):
        mask = Mask(height=1, width=4, labels=np.array([0, 0, 1, 1], dtype=bool))
        assert roc_auc([1, 2, 3, 4], mask).auc == 1.0

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            roc_auc([1.0], [True, False])


@settings(max_examples=30, deadline=None)
@given(
    st.lists(st.integers(min_value=0, max_value=8), min_size=4, max_size=60),
    st.integers(min_value=0, max_value=2**30),
)
def test_roc_invariant_under_increasing_transform(score_ints, seed):
    gen = np.random.default_rng(seed)
    scores = np.asarray(score_ints, dtype=float)
    labels = gen.random(len(scores)) < 0.5
    if labels.all() or not labels.any():
        return
    base = roc_auc(scores, labels)
    squashed = roc_auc(np.exp(scores / 4.0) + 7.0, labels)
    assert squashed.auc == base.auc
    assert np.array_equal(squashed.fpr, base.fpr)
    assert np.array_equal(squashed.tpr, base.tpr)


class TestBench:
    def test_records_per_phase_and_no_rx_transform(self, gen):
        X = gen.normal(size=(400, 2))
        records = bench_detector("rx", X, repeats=3, rng=RngSpec(seed=0))
        phases = {}
        for r in records:
            phases.setdefault(r.phase, []).append(r)
        assert set(phases) == {"covariance", "inversion", "detection"}
        assert all(len(v) == 3 for v in phases.values())
        assert all(r.wall_seconds >= 0 for r in records)

    def test_krx_and_rrx_phases(self, gen):
        X = gen.normal(size=(300, 2))
        kr = bench_detector("krx", X, N=50, sigma=1.0, repeats=2, rng=RngSpec(seed=0))
        rr = bench_detector("rrx", X, D=16, sigma=1.0, repeats=2, rng=RngSpec(seed=0))
        for recs in (kr, rr):
            assert {r.phase for r in recs} == {"transform", "covariance", "inversion", "detection"}
        assert {r.param for r in kr} == {50}
        assert {r.param for r in rr} == {16}

    def test_summarize_median(self):
        from rxdet.evalbench import BenchRecord

        records = [
            BenchRecord("rx", "detection", w, 10, 2, None) for w in (0.5, 0.1, 0.3)
        ]
        assert summarize_bench(records)[("rx", "detection", None)] == pytest.approx(0.3)

    def test_csv_format(self, tmp_path, gen):
        X = gen.normal(size=(100, 2))
        records = bench_detector("rrx", X, D=8, sigma=1.0, repeats=1, rng=RngSpec(seed=0))
        p = tmp_path / "bench.csv"
        write_bench_csv(records, p)
        lines = p.read_text().splitlines()
        assert lines[0] == "method,phase,n,d,param,wall_seconds"
        assert len(lines) == 1 + len(records)
        assert lines[1].startswith("rrx,transform,100,2,8,")

    def test_unknown_method(self, gen):
        with pytest.raises(DataError):
            bench_detector("pca", gen.normal(size=(10, 2)))

    @pytest.mark.slow
    def test_timings_monotone_in_n(self):
        rng = RngSpec(seed=0)
        meds = []
        for n in (1_000, 10_000, 100_000):
            X = rng.child(n).generator().standard_normal((n, 2))
            records = bench_detector("rrx", X, D=50, sigma=1.0, repeats=3, rng=rng)
            s = summarize_bench(records)
            meds.append(
                s[("rrx", "transform", 50)]
                + s[("rrx", "covariance", 50)]
                + s[("rrx", "detection", 50)]
            )
        # allow one inversion at the small end from timer noise
        flips = sum(1 for a, b in zip(meds, meds[1:]) if b <= a)
        assert flips <= 1
        assert meds[2] > meds[1]


def make_patch_split(seed=3):
    raster, mask, grid = generate_injected_patchwork(
        patch_rows=2, patch_cols=2, patch_h=25, patch_w=25, bands=4,
        anomaly_fraction=0.01, rng=RngSpec(seed=seed),
    )
    patches = extract_patches(raster, grid)
    masks = extract_mask_patches(mask, grid)
    train, val = [], []
    for (r, c, tag), p, m in zip(grid.assignments, patches, masks):
        (train if tag == "train" else val).append((p, m))
    return train, val


class TestGridSearch:
    def test_singleton_grid(self):
        train, val = make_patch_split()
        res = grid_search(train, val, "rrx", [1e-3], [1.0], RngSpec(seed=0), D=16)
        assert res.mean_val_auc.shape == (1, 1)
        assert res.best == (1e-3, 1.0)

    def test_duplicate_values_identical_columns(self):
        train, val = make_patch_split()
        res = grid_search(train, val, "rrx", [1e-3], [1.0, 1.0], RngSpec(seed=0), D=16)
        assert res.mean_val_auc[0, 0] == res.mean_val_auc[0, 1]

    def test_deterministic(self):
        train, val = make_patch_split()
        a = grid_search(train, val, "rrx", [1e-3, 1e-1], [0.5, 2.0], RngSpec(seed=1), D=16)
        b = grid_search(train, val, "rrx", [1e-3, 1e-1], [0.5, 2.0], RngSpec(seed=1), D=16)
        assert np.array_equal(a.mean_val_auc, b.mean_val_auc)
        assert a.best == b.best

    def test_tie_break_smaller_lambda_then_c(self):
        from rxdet.evalbench import GridSearchResult

        # force ties via duplicated values: identical cells tie exactly
        train, val = make_patch_split()
        res = grid_search(train, val, "rrx", [1e-2, 1e-2], [2.0, 2.0], RngSpec(seed=0), D=8)
        assert res.best == (1e-2, 2.0)

    def test_krx_method(self):
        train, val = make_patch_split()
        res = grid_search(train, val, "krx", [1e-2], [1.0], RngSpec(seed=0), N=100)
        assert 0.0 <= res.mean_val_auc[0, 0] <= 1.0

    def test_validation(self):
        train, val = make_patch_split()
        with pytest.raises(DataError):
            grid_search(train, val, "rx", [1e-2], [1.0])
        with pytest.raises(DataError):
            grid_search(train, val, "rrx", [], [1.0])
        with pytest.raises(DataError):
            grid_search([], val, "rrx", [1e-2], [1.0])
