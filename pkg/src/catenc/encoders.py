"""Fit and apply category encodings.

Learned encoders (means, low-rank, sparse low-rank, PCA, NMF, multinomial
logit, SVM) distill the continuous features seen with each category into a
compact per-category vector; the classic contrast, permutation and Fisher
codings only need the category order or the outcome means. Every fit returns
a FittedEncoding: an M-by-k lookup table plus a fallback row for categories
that only show up at transform time.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from . import numerics
from .dataset import CategoryIndex, DataWarning, Dataset, group_stats

LEARNED_KINDS = ("means", "lowrank_svd", "sparse_lowrank", "pca", "nmf", "mnl", "svm")
CONTRAST_KINDS = ("onehot", "deviation", "difference", "helmert", "cumulative")
ORDINAL_KINDS = ("permutation", "multiperm", "fisher")
KINDS = LEARNED_KINDS + CONTRAST_KINDS + ORDINAL_KINDS

RANK_KINDS = ("lowrank_svd", "sparse_lowrank", "pca", "nmf")


@dataclass(frozen=True)
class EncoderSpec:
    """What to fit: the encoder kind plus its (optional) rank/regularization/seed."""

    kind: str
    k: int | None = None
    lam: float | None = None
    seed: int = 0
    scale: bool = True
    center: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown encoder kind {self.kind!r}; valid: {', '.join(KINDS)}")
        if self.k is not None and self.k < 1:
            raise ValueError("rank k must be >= 1")


@dataclass(frozen=True)
class FittedEncoding:
    """Per-category representation rows psi (M,k_out) plus an unseen-category fallback."""

    psi: np.ndarray
    fallback: np.ndarray
    spec: EncoderSpec
    labels: CategoryIndex
    n_features: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.psi).all() or not np.isfinite(self.fallback).all():
            raise ValueError("encoding contains non-finite entries")
        if self.psi.ndim != 2 or self.psi.shape[1] < 1:
            raise ValueError("psi must be M-by-k with k >= 1")

    @property
    def k_out(self) -> int:
        return self.psi.shape[1]


def default_rank(ds: Dataset) -> int:
    return min(ds.p, ds.m, 8)


def _check_rank(k: int, bound: int):
    if not 1 <= k <= bound:
        raise ValueError(f"rank k={k} out of range [1, {bound}]")


def _centered_group_means(ds: Dataset, center: bool):
    z = group_stats(ds).means.T.copy()  # M x p
    if center:
        z -= z.mean(axis=0)
    return z


def fit_means(ds: Dataset) -> FittedEncoding:
    """Each category becomes the mean feature vector of its rows."""
    psi = group_stats(ds).means.T.copy()
    return FittedEncoding(psi=psi, fallback=ds.x.mean(axis=0),
                          spec=EncoderSpec("means"), labels=ds.labels, n_features=ds.p)


def fit_lowrank_svd(ds: Dataset, k: int, scale: bool = True, center: bool = True) -> FittedEncoding:
    """Leading left singular directions of the (centered) group-means matrix."""
    _check_rank(k, min(ds.p, ds.m))
    res = numerics.svd(_centered_group_means(ds, center))
    psi = res.u[:, :k] * (res.d[:k] if scale else 1.0)
    psi = numerics.fix_signs(psi)
    spec = EncoderSpec("lowrank_svd", k=k, scale=scale, center=center)
    return FittedEncoding(psi=psi, fallback=np.zeros(k), spec=spec, labels=ds.labels,
                          n_features=ds.p, meta={"singular_values": res.d[:k].tolist()})


def fit_sparse_lowrank(ds: Dataset, k: int, lambda1: float, scale: bool = True,
                       center: bool = True) -> FittedEncoding:
    """Group means projected onto sparse-PCA loadings; lambda1=0 recovers fit_lowrank_svd."""
    _check_rank(k, min(ds.p, ds.m))
    z = _centered_group_means(ds, center)
    loadings = numerics.sparse_pca(z, k, lambda1)
    psi = z @ loadings
    if not scale:
        norms = np.linalg.norm(psi, axis=0)
        psi = np.divide(psi, norms, out=np.zeros_like(psi), where=norms > 0)
    psi = numerics.fix_signs(psi)
    degenerate = bool((np.linalg.norm(loadings, axis=0) == 0).any())
    if degenerate:
        warnings.warn("sparse low-rank encoding has an all-zero component", DataWarning)
    spec = EncoderSpec("sparse_lowrank", k=k, lam=lambda1, scale=scale, center=center)
    return FittedEncoding(psi=psi, fallback=np.zeros(k), spec=spec, labels=ds.labels,
                          n_features=ds.p, meta={"loadings": loadings, "degenerate": degenerate})


def fit_pca(ds: Dataset, k: int, scale: bool = True, center: bool = True) -> FittedEncoding:
    """Eigenvectors of the M-by-M covariance of (centered) group-mean rows.

    Component j is scaled by the square root of its eigenvalue so distances
    between category rows reflect explained variance.
    """
    _check_rank(k, ds.m)
    z = _centered_group_means(ds, center)
    cov = z @ z.T / ds.p
    vecs, vals = numerics.eig_sym(cov)
    vals = np.maximum(vals[:k], 0.0)
    psi = vecs[:, :k] * (np.sqrt(vals) if scale else 1.0)
    spec = EncoderSpec("pca", k=k, scale=scale, center=center)
    return FittedEncoding(psi=psi, fallback=np.zeros(k), spec=spec, labels=ds.labels,
                          n_features=ds.p, meta={"eigenvalues": vals.tolist()})


def fit_nmf(ds: Dataset, k: int, seed: int = 0, tol: float = 1e-9,
            max_iter: int = 500) -> FittedEncoding:
    """Nonnegative factorization of the per-category feature-sum matrix.

    Features are shifted by their global minimum first so the sums are
    nonnegative; the shift is kept in the metadata.
    """
    _check_rank(k, min(ds.p, ds.m))
    shift = ds.x.min(axis=0)
    shifted = ds.x - shift
    sums = np.zeros((ds.m, ds.p))
    np.add.at(sums, ds.g, shifted)
    res = numerics.nmf(sums, k, tol=tol, max_iter=max_iter, seed=seed)
    psi = res.w.copy()
    spec = EncoderSpec("nmf", k=k, seed=seed)
    return FittedEncoding(psi=psi, fallback=psi.mean(axis=0), spec=spec, labels=ds.labels,
                          n_features=ds.p,
                          meta={"shift": shift, "final_loss": float(res.objective_trace[-1])})


def fit_mnl_encoding(ds: Dataset, lambda2: float = 1.0, max_iter: int = 150) -> FittedEncoding:
    """Category rows are the fitted multinomial-logit coefficients (intercept last).

    The stopping rule is scaled for encoding use: mean-gradient 1e-4 or
    `max_iter` sweeps, whichever comes first; the representation stabilizes
    long before full convergence.
    """
    if ds.m < 2:
        raise ValueError("mnl encoding needs at least two categories")
    model = numerics.fit_mnl(ds.x, ds.g, lambda2=lambda2, tol=1e-4 * ds.n, max_iter=max_iter)
    spec = EncoderSpec("mnl", lam=lambda2)
    return FittedEncoding(psi=model.beta.copy(), fallback=np.zeros(ds.p + 1), spec=spec,
                          labels=ds.labels, n_features=ds.p,
                          meta={"converged": model.converged,
                                "final_grad_norm": model.final_grad_norm})


def fit_svm_encoding(ds: Dataset, c_reg: float = 1.0, seed: int = 0) -> FittedEncoding:
    """Category rows are the one-vs-rest separator coefficients (w_g, b_g)."""
    if ds.m < 2:
        raise ValueError("svm encoding needs at least two categories")
    model = numerics.fit_svm_ovr(ds.x, ds.g, c_reg=c_reg, seed=seed)
    psi = np.column_stack([model.w, model.b])
    spec = EncoderSpec("svm", lam=c_reg, seed=seed)
    return FittedEncoding(psi=psi, fallback=np.zeros(ds.p + 1), spec=spec,
                          labels=ds.labels, n_features=ds.p)


def contrast_matrix(kind: str, m: int) -> np.ndarray:
    """Closed-form M-by-(M-1) contrast codes in category-id order.

    Built in exact rational arithmetic, converted to float at the end.
    """
    if m < 2:
        raise ValueError("contrast codings need at least two categories")
    mat = [[Fraction(0)] * (m - 1) for _ in range(m)]
    if kind == "onehot":
        for i in range(1, m):
            mat[i][i - 1] = Fraction(1)
    elif kind == "deviation":
        for i in range(m - 1):
            mat[i][i] = Fraction(1)
        mat[m - 1] = [Fraction(-1)] * (m - 1)
    elif kind == "difference":
        # column j compares level j+1 against the mean of levels 1..j
        for j in range(1, m):
            for i in range(j):
                mat[i][j - 1] = Fraction(-1, j + 1)
            mat[j][j - 1] = Fraction(j, j + 1)
    elif kind == "helmert":
        # column j compares level j against the mean of the later levels
        for j in range(1, m):
            mat[j - 1][j - 1] = Fraction(m - j, m - j + 1)
            for i in range(j, m):
                mat[i][j - 1] = Fraction(-1, m - j + 1)
    elif kind == "cumulative":
        # column j splits levels 1..j from levels j+1..M
        for j in range(1, m):
            for i in range(m):
                mat[i][j - 1] = Fraction(m - j, m) if i < j else Fraction(-j, m)
    else:
        raise ValueError(f"unknown contrast kind {kind!r}")
    return np.array([[float(v) for v in row] for row in mat])


def fit_contrast(ds: Dataset, kind: str) -> FittedEncoding:
    psi = contrast_matrix(kind, ds.m)
    return FittedEncoding(psi=psi, fallback=np.zeros(ds.m - 1), spec=EncoderSpec(kind),
                          labels=ds.labels, n_features=ds.p)


def fit_permutation(ds: Dataset, n_columns: int = 1, seed: int = 0) -> FittedEncoding:
    """Each column is an independent random permutation of the codes 1..M."""
    if n_columns < 1:
        raise ValueError("n_columns must be >= 1")
    rng = np.random.default_rng(seed)
    psi = np.column_stack([rng.permutation(ds.m) + 1 for _ in range(n_columns)]).astype(float)
    kind = "permutation" if n_columns == 1 else "multiperm"
    fallback = np.full(n_columns, (ds.m + 1) / 2.0)
    return FittedEncoding(psi=psi, fallback=fallback, spec=EncoderSpec(kind, seed=seed),
                          labels=ds.labels, n_features=ds.p, meta={"n_columns": n_columns})


def fit_fisher(ds: Dataset) -> FittedEncoding:
    """Single ordinal column: the ascending rank of each category's mean outcome."""
    y_means = group_stats(ds).y_means
    order = np.lexsort((np.arange(ds.m), y_means))  # ties break by category id
    ranks = np.empty(ds.m)
    ranks[order] = np.arange(1, ds.m + 1)
    return FittedEncoding(psi=ranks[:, None], fallback=np.array([(ds.m + 1) / 2.0]),
                          spec=EncoderSpec("fisher"), labels=ds.labels, n_features=ds.p)


def fit_encoder(ds: Dataset, spec: EncoderSpec) -> FittedEncoding:
    """Dispatch a spec to the right fit function, filling in defaults."""
    kind = spec.kind
    if kind in RANK_KINDS:
        k = spec.k if spec.k is not None else default_rank(ds)
        if kind == "lowrank_svd":
            fitted = fit_lowrank_svd(ds, k, scale=spec.scale, center=spec.center)
        elif kind == "sparse_lowrank":
            lam = spec.lam if spec.lam is not None else 0.1
            fitted = fit_sparse_lowrank(ds, k, lam, scale=spec.scale, center=spec.center)
        elif kind == "pca":
            fitted = fit_pca(ds, k, scale=spec.scale, center=spec.center)
        else:
            fitted = fit_nmf(ds, k, seed=spec.seed)
    elif kind == "means":
        fitted = fit_means(ds)
    elif kind == "mnl":
        fitted = fit_mnl_encoding(ds, lambda2=spec.lam if spec.lam is not None else 1.0)
    elif kind == "svm":
        fitted = fit_svm_encoding(ds, c_reg=spec.lam if spec.lam is not None else 1.0,
                                  seed=spec.seed)
    elif kind in CONTRAST_KINDS:
        fitted = fit_contrast(ds, kind)
    elif kind == "permutation":
        fitted = fit_permutation(ds, 1, seed=spec.seed)
    elif kind == "multiperm":
        fitted = fit_permutation(ds, 4, seed=spec.seed)
    else:
        fitted = fit_fisher(ds)
    return replace(fitted, spec=replace(fitted.spec, seed=spec.seed))


def transform(ds: Dataset, enc: FittedEncoding) -> np.ndarray:
    """Append each row's category representation to its features.

    Categories unknown to the fitted encoding get the fallback row; the count
    of such rows is reported through a DataWarning.
    """
    if ds.p != enc.n_features:
        raise ValueError(f"dataset has {ds.p} features but the encoding was fit on {enc.n_features}")
    lookup = np.array([enc.labels.label_to_id.get(lab, -1) for lab in ds.labels.id_to_label])
    ids = lookup[ds.g]
    unseen = ids < 0
    rows = enc.psi[np.where(unseen, 0, ids)]
    if unseen.any():
        rows = rows.copy()
        rows[unseen] = enc.fallback
        warnings.warn(f"{int(unseen.sum())} row(s) have categories unseen at fit time; "
                      "fallback encoding used", DataWarning)
    return np.column_stack([ds.x, rows])


def encoded_column_names(enc: FittedEncoding) -> list[str]:
    return [f"{enc.spec.kind}_{j + 1}" for j in range(enc.k_out)]
