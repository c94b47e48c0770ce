"""Cross-validated scoring of encoders against the one-hot baseline.

Every encoder inside a fold sees exactly the same train/test rows and learner
seed, so fold-wise MSE differences are paired and a paired t-test applies.
Encoders are always fit on the training split alone; test-fold categories the
training split never saw go through the fitted encoding's fallback row, which
keeps the MSE denominators identical across encoders.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import betainc

from . import learners
from .dataset import DataWarning, Dataset, stratified_kfold, subset
from .encoders import RANK_KINDS, EncoderSpec, fit_encoder, transform
from .learners import LearnerSpec
from .synthgen import SynthConfig, gen_dataset

DEFAULT_RANK_GRID = (1, 2, 4, 8)


@dataclass(frozen=True)
class BenchConfig:
    encoders: tuple
    learner: LearnerSpec
    k_folds: int = 4
    n_seeds: int = 20
    rank_grid: tuple = DEFAULT_RANK_GRID
    seed: int = 0

    def __post_init__(self):
        if self.k_folds < 2:
            raise ValueError("k_folds must be >= 2")
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be >= 1")
        encoders = tuple(self.encoders)
        if not any(spec.kind == "onehot" for spec in encoders):
            encoders = (EncoderSpec("onehot"),) + encoders  # baseline is mandatory
        object.__setattr__(self, "encoders", encoders)
        object.__setattr__(self, "rank_grid", tuple(self.rank_grid))


@dataclass(frozen=True)
class EncoderResult:
    name: str
    spec: EncoderSpec
    mse_folds: tuple
    mean_mse: float
    improvement_pct: float
    t_stat: float
    p_value: float
    skipped: bool = False
    reason: str = ""
    chosen_ranks: tuple = ()

    def to_jsonable(self) -> dict:
        return {
            "name": self.name,
            "kind": self.spec.kind,
            "k": self.spec.k,
            "lambda": self.spec.lam,
            "seed": self.spec.seed,
            "mse_folds": list(self.mse_folds),
            "mean_mse": self.mean_mse,
            "improvement_pct": self.improvement_pct,
            "t": self.t_stat,
            "p": self.p_value,
            "skipped": self.skipped,
            "reason": self.reason,
            "chosen_ranks": list(self.chosen_ranks),
        }


@dataclass(frozen=True)
class BenchReport:
    results: tuple
    metadata: dict = field(default_factory=dict)

    @property
    def error(self) -> str | None:
        return self.metadata.get("error")

    def result(self, name: str) -> EncoderResult:
        for res in self.results:
            if res.name == name:
                return res
        raise KeyError(name)

    def to_jsonable(self) -> dict:
        return {"metadata": self.metadata,
                "results": [r.to_jsonable() for r in self.results]}

    def csv_rows(self):
        yield ("encoder", "mean_mse", "improvement_pct", "t", "p")
        for r in self.results:
            if r.skipped:
                yield (r.name, "", "", "", "")
            else:
                yield (r.name, repr(r.mean_mse), repr(r.improvement_pct),
                       repr(r.t_stat), repr(r.p_value))


def paired_ttest(a, b):
    """Classic paired t-test on d = a - b; two-sided p from the regularized
    incomplete beta. Identical samples return (0, 1) by convention; zero
    variance with a nonzero mean returns p = 0 and warns."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be equal-length vectors")
    n = a.size
    if n < 2:
        raise ValueError("need at least two pairs")
    d = a - b
    if not d.any():
        return 0.0, 1.0
    mean = d.mean()
    sd = d.std(ddof=1)
    if sd == 0.0:
        warnings.warn("paired differences are constant and nonzero; p = 0 by convention",
                      DataWarning)
        return math.copysign(math.inf, mean), 0.0
    t = mean / (sd / math.sqrt(n))
    df = n - 1
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return float(t), p


def _encoder_names(specs) -> list[str]:
    names, seen = [], {}
    for spec in specs:
        count = seen.get(spec.kind, 0)
        seen[spec.kind] = count + 1
        names.append(spec.kind if count == 0 else f"{spec.kind}_{count + 1}")
    return names


def _fit_and_score(train_ds, test_ds, spec, learner_spec):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DataWarning)  # fallback rows are expected here
        enc = fit_encoder(train_ds, spec)
        f_train = transform(train_ds, enc)
        f_test = transform(test_ds, enc)
    model = learners.fit(learner_spec, f_train, train_ds.y)
    pred = learners.predict(model, f_test)
    return float(np.mean((pred - test_ds.y) ** 2))


def _select_rank(train_ds, spec, cfg: BenchConfig, fold: int) -> int:
    bound = train_ds.m if spec.kind == "pca" else min(train_ds.p, train_ds.m)
    candidates = sorted({k for k in cfg.rank_grid if 1 <= k <= bound}) or [1]
    if len(candidates) == 1:
        return candidates[0]
    inner_k = min(3, train_ds.n)
    plan = stratified_kfold(train_ds, inner_k, cfg.seed + 7919 * (fold + 1))
    scores = []
    for cand in candidates:
        mses = []
        for inner in range(inner_k):
            sub_train = subset(train_ds, plan.train_rows(inner))
            sub_test = subset(train_ds, plan.test_rows(inner))
            inner_learner = replace(cfg.learner, seed=cfg.learner.seed + inner)
            mses.append(_fit_and_score(sub_train, sub_test, replace(spec, k=cand),
                                       inner_learner))
        scores.append(float(np.mean(mses)))
    return candidates[int(np.argmin(scores))]  # argmin keeps the smaller k on ties


def run_cv(ds: Dataset, cfg: BenchConfig) -> BenchReport:
    """Stratified k-fold benchmark of every encoder in the config."""
    plan = stratified_kfold(ds, cfg.k_folds, cfg.seed)
    names = _encoder_names(cfg.encoders)

    folds = []
    for fold in range(cfg.k_folds):
        train_ds = subset(ds, plan.train_rows(fold))
        test_ds = subset(ds, plan.test_rows(fold))
        folds.append((train_ds, test_ds))

    mse_by_name: dict[str, list] = {}
    ranks_by_name: dict[str, list] = {}
    failures: dict[str, str] = {}
    for name, spec in zip(names, cfg.encoders):
        mses, ranks = [], []
        try:
            for fold, (train_ds, test_ds) in enumerate(folds):
                fit_spec = spec
                if spec.kind in RANK_KINDS and spec.k is None:
                    k = _select_rank(train_ds, spec, cfg, fold)
                    ranks.append(k)
                    fit_spec = replace(spec, k=k)
                learner_spec = replace(cfg.learner, seed=cfg.learner.seed + fold)
                mses.append(_fit_and_score(train_ds, test_ds, fit_spec, learner_spec))
        except ValueError as exc:
            failures[name] = str(exc)
            continue
        mse_by_name[name] = mses
        ranks_by_name[name] = ranks

    baseline_name = names[[s.kind for s in cfg.encoders].index("onehot")]
    if baseline_name in failures:
        raise ValueError(f"one-hot baseline failed: {failures[baseline_name]}")
    base_mses = mse_by_name[baseline_name]
    base_mean = float(np.mean(base_mses))

    results = []
    for name, spec in zip(names, cfg.encoders):
        if name in failures:
            results.append(EncoderResult(name=name, spec=spec, mse_folds=(),
                                         mean_mse=math.nan, improvement_pct=math.nan,
                                         t_stat=math.nan, p_value=math.nan,
                                         skipped=True, reason=failures[name]))
            continue
        mses = mse_by_name[name]
        mean_mse = float(np.mean(mses))
        t, p = paired_ttest(mses, base_mses)
        results.append(EncoderResult(
            name=name, spec=spec, mse_folds=tuple(mses), mean_mse=mean_mse,
            improvement_pct=100.0 * (base_mean - mean_mse) / base_mean,
            t_stat=t, p_value=p, chosen_ranks=tuple(ranks_by_name[name])))
    metadata = {
        "k_folds": cfg.k_folds,
        "seed": cfg.seed,
        "learner": cfg.learner.kind,
        "learner_seed": cfg.learner.seed,
        "n_rows": ds.n,
        "n_features": ds.p,
        "n_categories": ds.m,
    }
    return BenchReport(results=tuple(results), metadata=metadata)


def _sweep_cell(args):
    grid_index, seed_index, synth_cfg, bench_cfg = args
    cell_cfg = replace(synth_cfg, seed=synth_cfg.seed + seed_index)
    meta = {"grid_index": grid_index, "seed_index": seed_index,
            "synth_seed": cell_cfg.seed, "outcome": cell_cfg.outcome,
            "k_latent": cell_cfg.k_latent, "m": cell_cfg.m, "n": cell_cfg.n}
    try:
        ds, _ = gen_dataset(cell_cfg)
        report = run_cv(ds, bench_cfg)
    except Exception as exc:  # keep the sweep going; the cell records its failure
        return BenchReport(results=(), metadata={**meta, "error": str(exc)})
    return BenchReport(results=report.results, metadata={**meta, **report.metadata})


def run_sim_sweep(cfg_grid, bench: BenchConfig, jobs: int = 1):
    """One BenchReport per (synthetic config, seed index) cell.

    Cells are independent; with jobs > 1 they run in a process pool and the
    output order is still (grid, seed) regardless of completion order.
    """
    cells = [(gi, si, cfg, bench)
             for gi, cfg in enumerate(cfg_grid)
             for si in range(bench.n_seeds)]
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_sweep_cell, cells))
    else:
        reports = [_sweep_cell(cell) for cell in cells]
    return reports


def median_improvements(reports) -> dict[str, float]:
    """Median improvement over one-hot per encoder, across non-failed cells."""
    per_encoder: dict[str, list] = {}
    for report in reports:
        if report.error:
            continue
        for res in report.results:
            if not res.skipped:
                per_encoder.setdefault(res.name, []).append(res.improvement_pct)
    return {name: float(np.median(vals)) for name, vals in per_encoder.items()}


def format_table(rows, header) -> str:
    cells = [tuple(header)] + [tuple(str(c) for c in row) for row in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    lines = []
    for irow, row in enumerate(cells):
        lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(row)).rstrip())
        if irow == 0:
            lines.append("  ".join("-" * widths[i] for i in range(len(header))))
    return "\n".join(lines)
