import json
import math

import numpy as np
import pytest

from catenc.benchmark import (BenchConfig, format_table, median_improvements, paired_ttest,
                              run_cv, run_sim_sweep)
from catenc.dataset import CategoryIndex, DataWarning, Dataset, stratified_kfold
from catenc.encoders import EncoderSpec, fit_encoder
from catenc.learners import LearnerSpec
from catenc.synthgen import SynthConfig, gen_dataset


def t_two_sided_p_simpson(t, df, n_points=200_001):
    """Independent tail integral of the t density: Simpson on u = |t| + s/(1-s)."""
    c = math.gamma((df + 1) / 2) / (math.sqrt(df * math.pi) * math.gamma(df / 2))
    s = np.linspace(0.0, 1.0, n_points)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = abs(t) + s / (1.0 - s)
        integrand = c * (1.0 + u * u / df) ** (-(df + 1) / 2) / (1.0 - s) ** 2
    integrand[-1] = 0.0  # the density tail beats the substitution jacobian for df > 1
    h = s[1] - s[0]
    return 2.0 * h / 3.0 * (integrand[0] + 4 * integrand[1:-1:2].sum()
                            + 2 * integrand[2:-2:2].sum())


def noise_dataset(n=120, p=3, m=6, seed=0):
    rng = np.random.default_rng(seed)
    g = np.concatenate([np.arange(m), rng.integers(0, m, size=n - m)])
    return Dataset(x=rng.normal(size=(n, p)), g=g, y=rng.normal(size=n), m=m,
                   labels=CategoryIndex.from_labels([f"c{i}" for i in range(m)]))


class TestPairedTtest:
    def test_identical_samples_convention(self):
        assert paired_ttest([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == (0.0, 1.0)

    def test_hand_golden_d123(self):
        # d = (1,2,3): mean 2, sd 1, t = 2*sqrt(3); for df=2 the tail has the
        # closed form 1 - t/sqrt(2 + t^2) = 1 - 2*sqrt(3)/sqrt(14)
        t, p = paired_ttest([2.0, 4.0, 6.0], [1.0, 2.0, 3.0])
        assert t == pytest.approx(2 * math.sqrt(3), abs=1e-12)
        assert p == pytest.approx(1 - 2 * math.sqrt(3) / math.sqrt(14), abs=1e-12)
        assert p == pytest.approx(0.0741799002274486, abs=1e-12)

    @pytest.mark.parametrize("df", [3, 9, 199])
    @pytest.mark.parametrize("tval", [0.31, 1.1, 2.5])
    def test_quadrature_oracle(self, df, tval):
        # differences with unit sd and mean tval/sqrt(n) hit the t exactly
        n = df + 1
        d = np.zeros(n)
        d[0] = 1.0
        d -= d.mean()
        d /= d.std(ddof=1)
        d += tval / math.sqrt(n)
        base = np.linspace(0.0, 1.0, n)
        t, p = paired_ttest(base + d, base)
        assert t == pytest.approx(tval, rel=1e-12)
        assert abs(p - t_two_sided_p_simpson(t, df)) < 1e-9

    def test_constant_nonzero_difference(self):
        with pytest.warns(DataWarning, match="constant"):
            t, p = paired_ttest([2.0, 3.0, 4.0], [1.0, 2.0, 3.0])
        assert math.isinf(t) and t > 0
        assert p == 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            paired_ttest([1.0], [2.0])
        with pytest.raises(ValueError):
            paired_ttest([1.0, 2.0], [1.0, 2.0, 3.0])


class TestRunCv:
    def test_onehot_only_self_comparison(self):
        ds = noise_dataset()
        cfg = BenchConfig(encoders=(EncoderSpec("onehot"),), learner=LearnerSpec("ridge"),
                          k_folds=4, seed=1)
        report = run_cv(ds, cfg)
        res = report.result("onehot")
        assert res.improvement_pct == 0.0
        assert res.t_stat == 0.0 and res.p_value == 1.0

    def test_baseline_added_when_missing(self):
        cfg = BenchConfig(encoders=(EncoderSpec("means"),), learner=LearnerSpec("ridge"))
        assert cfg.encoders[0].kind == "onehot"

    def test_pairing_fold_vectors_equal_length(self):
        ds = noise_dataset(seed=3)
        cfg = BenchConfig(encoders=(EncoderSpec("onehot"), EncoderSpec("means"),
                                    EncoderSpec("fisher")),
                          learner=LearnerSpec("ridge"), k_folds=3, seed=2)
        report = run_cv(ds, cfg)
        lengths = {len(r.mse_folds) for r in report.results}
        assert lengths == {3}

    def test_no_leakage_from_test_rows(self):
        # changing test-fold rows (x and y) must not move any fitted psi
        ds = noise_dataset(n=60, seed=4)
        plan = stratified_kfold(ds, 3, seed=5)
        train_rows = plan.train_rows(0)
        test_rows = plan.test_rows(0)
        x2 = ds.x.copy()
        y2 = ds.y.copy()
        x2[test_rows] += 100.0
        y2[test_rows] -= 50.0
        ds2 = Dataset(x=x2, g=ds.g, y=y2, m=ds.m, labels=ds.labels)
        from catenc.dataset import subset
        for kind in ("means", "lowrank_svd", "fisher", "mnl"):
            spec = EncoderSpec(kind, k=2 if kind == "lowrank_svd" else None)
            a = fit_encoder(subset(ds, train_rows), spec)
            b = fit_encoder(subset(ds2, train_rows), spec)
            np.testing.assert_array_equal(a.psi, b.psi)

    def test_deterministic_reports(self):
        ds = noise_dataset(seed=6)
        cfg = BenchConfig(encoders=(EncoderSpec("onehot"), EncoderSpec("means")),
                          learner=LearnerSpec("forest", n_trees=4), k_folds=3, seed=7)
        a = json.dumps(run_cv(ds, cfg).to_jsonable(), sort_keys=True)
        b = json.dumps(run_cv(ds, cfg).to_jsonable(), sort_keys=True)
        assert a == b

    def test_unfittable_encoder_skipped(self):
        ds = noise_dataset(n=40, m=2, seed=8)
        # pca rank above M on tiny training folds is impossible to satisfy
        cfg = BenchConfig(encoders=(EncoderSpec("onehot"), EncoderSpec("pca", k=30)),
                          learner=LearnerSpec("ridge"), k_folds=2, seed=0)
        report = run_cv(ds, cfg)
        res = report.result("pca")
        assert res.skipped and "out of range" in res.reason
        assert not report.result("onehot").skipped

    def test_rank_selection_records_choices(self):
        cfg_s = SynthConfig(n=400, p=4, m=8, k_latent=2, p_assign=0.95, noise_sd=0.2,
                            outcome="linear", seed=9)
        ds, _ = gen_dataset(cfg_s)
        cfg = BenchConfig(encoders=(EncoderSpec("onehot"), EncoderSpec("lowrank_svd")),
                          learner=LearnerSpec("ridge"), k_folds=3, rank_grid=(1, 2, 4),
                          seed=10)
        report = run_cv(ds, cfg)
        ranks = report.result("lowrank_svd").chosen_ranks
        assert len(ranks) == 3
        assert all(r in (1, 2, 4) for r in ranks)

    def test_duplicate_kinds_get_distinct_names(self):
        ds = noise_dataset(seed=11)
        cfg = BenchConfig(encoders=(EncoderSpec("onehot"), EncoderSpec("permutation", seed=1),
                                    EncoderSpec("permutation", seed=2)),
                          learner=LearnerSpec("ridge"), k_folds=2, seed=0)
        names = [r.name for r in run_cv(ds, cfg).results]
        assert names == ["onehot", "permutation", "permutation_2"]


class TestSimSweep:
    def grid(self):
        return [SynthConfig(n=150, p=3, m=6, k_latent=2, p_assign=0.9, noise_sd=0.5,
                            outcome="linear", seed=0),
                SynthConfig(n=150, p=3, m=6, k_latent=1, p_assign=0.9, noise_sd=0.5,
                            outcome="linear", seed=0)]

    def bench(self, n_seeds=1):
        return BenchConfig(encoders=(EncoderSpec("onehot"), EncoderSpec("means")),
                           learner=LearnerSpec("ridge"), k_folds=2, n_seeds=n_seeds, seed=1)

    def test_single_seed_one_report_per_config(self):
        reports = run_sim_sweep(self.grid(), self.bench())
        assert len(reports) == 2
        assert [r.metadata["grid_index"] for r in reports] == [0, 1]

    def test_seed_times_config_cells(self):
        reports = run_sim_sweep(self.grid(), self.bench(n_seeds=2))
        assert len(reports) == 4
        cells = [(r.metadata["grid_index"], r.metadata["seed_index"]) for r in reports]
        assert cells == [(0, 0), (0, 1), (1, 0), (1, 1)]

    def test_failed_cell_recorded_not_fatal(self):
        bad = SynthConfig(n=4, p=2, m=6, k_latent=2, p_assign=0.9, noise_sd=0.5,
                          outcome="linear", seed=0)  # n < m cannot cover categories
        reports = run_sim_sweep([bad] + self.grid(), self.bench())
        assert reports[0].error and "cover" in reports[0].error
        assert reports[1].error is None

    def test_parallel_matches_serial(self):
        serial = run_sim_sweep(self.grid(), self.bench(n_seeds=2), jobs=1)
        parallel = run_sim_sweep(self.grid(), self.bench(n_seeds=2), jobs=2)
        a = json.dumps([r.to_jsonable() for r in serial], sort_keys=True)
        b = json.dumps([r.to_jsonable() for r in parallel], sort_keys=True)
        assert a == b

    def test_median_improvements_shape(self):
        med = median_improvements(run_sim_sweep(self.grid(), self.bench(n_seeds=2)))
        assert set(med) == {"onehot", "means"}
        assert med["onehot"] == 0.0

    def test_single_latent_state_is_a_near_tie(self):
        # no latent structure to exploit: improvements shrink to the small
        # parameter-count residual (compare the 20%+ seen with real structure)
        bench = BenchConfig(encoders=(EncoderSpec("onehot"), EncoderSpec("means"),
                                      EncoderSpec("fisher")),
                            learner=LearnerSpec("ridge"), k_folds=4, n_seeds=10, seed=0)
        grid = [SynthConfig(n=600, p=4, m=8, k_latent=1, p_assign=0.9, noise_sd=1.0,
                            outcome="linear", seed=50)]
        med = median_improvements(run_sim_sweep(grid, bench))
        assert all(abs(v) < 3.0 for v in med.values())

    def test_improvement_grows_with_latent_count(self):
        bench = BenchConfig(encoders=(EncoderSpec("onehot"), EncoderSpec("means"),
                                      EncoderSpec("mnl", lam=1.0)),
                            learner=LearnerSpec("forest", n_trees=20, seed=0),
                            k_folds=3, n_seeds=6, seed=0)
        meds = {}
        for k in (2, 10):
            grid = [SynthConfig(n=1500, p=5, m=20, k_latent=k, p_assign=0.9, noise_sd=1.0,
                                outcome="group_linear", seed=777 * k)]
            meds[k] = median_improvements(run_sim_sweep(grid, bench))
        assert meds[10]["means"] >= meds[2]["means"]
        assert meds[10]["mnl"] >= meds[2]["mnl"]
        assert meds[10]["means"] > 0 and meds[10]["mnl"] > 0


class TestFormatTable:
    def test_alignment(self):
        text = format_table([("a", 1.0), ("bcd", 22.5)], ("name", "value"))
        lines = text.splitlines()
        assert lines[0].startswith("name")
        assert len(lines) == 4
