"""Linear-algebra and optimization kernels behind the encoders.

Factorizations delegate to LAPACK (via numpy) and are wrapped with a fixed
sign convention so downstream encoding matrices are reproducible. The
iterative solvers (NMF, sparse PCA, multinomial logit, linear SVM) are written
out in full because their update rules are part of the contract.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .dataset import DataWarning

_EPS = 1e-12


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD factors with descending singular values."""

    u: np.ndarray
    d: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class NmfResult:
    w: np.ndarray
    h: np.ndarray
    objective_trace: np.ndarray


@dataclass(frozen=True)
class MnlModel:
    """Multinomial-logit coefficients, one row per category, intercept last.

    Row 0 (the reference category) is identically zero so the softmax
    parameterization is identified.
    """

    beta: np.ndarray
    lambda2: float
    converged: bool
    final_grad_norm: float

    def probabilities(self, x: np.ndarray) -> np.ndarray:
        z = np.column_stack([x, np.ones(x.shape[0])]) @ self.beta.T
        z -= z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class SvmModel:
    w: np.ndarray
    b: np.ndarray
    c_reg: float


def fix_signs(u: np.ndarray, *coupled: np.ndarray):
    """Flip columns so each column's largest-magnitude entry is positive.

    `coupled` matrices (e.g. the matching right factors) get the same flips.
    """
    flips = np.ones(u.shape[1])
    for j in range(u.shape[1]):
        i = int(np.argmax(np.abs(u[:, j])))
        if u[i, j] < 0:
            flips[j] = -1.0
    u = u * flips
    out = [u]
    for mat in coupled:
        out.append(mat * flips)
    return out[0] if not coupled else tuple(out)


def svd(a: np.ndarray) -> SvdResult:
    """Thin SVD with descending singular values and the package sign convention."""
    a = np.asarray(a, dtype=np.float64)
    if not np.isfinite(a).all():
        raise ValueError("svd input contains non-finite entries")
    u, d, vt = np.linalg.svd(a, full_matrices=False)
    u, v = fix_signs(u, vt.T)
    return SvdResult(u=u, d=d, v=v)


def eig_sym(c: np.ndarray, tol: float = 1e-10):
    """Eigendecomposition of a symmetric matrix.

    Returns (eigenvectors, eigenvalues) with eigenvalues descending and the
    same sign convention as `svd`.
    """
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError("eig_sym expects a square matrix")
    if np.abs(c - c.T).max(initial=0.0) > tol:
        raise ValueError("matrix is not symmetric within tolerance")
    vals, vecs = np.linalg.eigh(c)
    order = np.argsort(vals)[::-1]
    return fix_signs(vecs[:, order]), vals[order]


def nmf(a: np.ndarray, k: int, tol: float = 1e-9, max_iter: int = 500, seed: int = 0) -> NmfResult:
    """Multiplicative-update NMF of a nonnegative matrix under Frobenius loss.

    Factors start from seeded uniform(0.1, 1.1) noise; iteration stops when
    the relative loss change drops below `tol` or after `max_iter` sweeps.
    """
    a = np.asarray(a, dtype=np.float64)
    if (a < 0).any():
        raise ValueError("nmf requires a nonnegative matrix")
    r, c = a.shape
    if not 1 <= k <= min(r, c):
        raise ValueError(f"rank k={k} must be in [1, {min(r, c)}]")
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.1, 1.1, size=(r, k))
    h = rng.uniform(0.1, 1.1, size=(k, c))

    trace = [np.linalg.norm(a - w @ h)]
    for _ in range(max_iter):
        h *= (w.T @ a) / (w.T @ w @ h + _EPS)
        w *= (a @ h.T) / (w @ (h @ h.T) + _EPS)
        loss = np.linalg.norm(a - w @ h)
        prev = trace[-1]
        trace.append(loss)
        if prev - loss < tol * max(prev, _EPS):
            break
    return NmfResult(w=w, h=h, objective_trace=np.asarray(trace))


def soft_threshold(x: np.ndarray, t: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def sparse_pca(a: np.ndarray, k: int, lambda1: float, max_iter: int = 200) -> np.ndarray:
    """Sparse loadings (c,k): alternate a soft-thresholded regression step on
    the loadings with a Procrustes re-orthogonalization.

    The ridge part of the penalty is fixed small (1e-4). Nonzero columns come
    back unit-norm; a fully shrunk column is left at zero and flagged with a
    DataWarning. At lambda1 = 0 the loadings reduce to the leading right
    singular directions.
    """
    a = np.asarray(a, dtype=np.float64)
    if not 1 <= k <= min(a.shape):
        raise ValueError(f"rank k={k} must be in [1, {min(a.shape)}]")
    if lambda1 < 0:
        raise ValueError("lambda1 must be >= 0")
    gram = a.T @ a
    alpha = svd(a).v[:, :k]
    loadings = alpha.copy()
    for _ in range(max_iter):
        prev = loadings.copy()
        loadings = soft_threshold(gram @ alpha, lambda1) / (1.0 + 1e-4)
        norms = np.linalg.norm(loadings, axis=0)
        nz = norms > 0
        loadings[:, nz] /= norms[nz]
        # Procrustes step keeps the score directions orthonormal.
        proj = gram @ loadings
        pu, _, pvt = np.linalg.svd(proj, full_matrices=False)
        alpha = pu @ pvt
        if np.abs(loadings - prev).max() < 1e-10:
            break
    if (np.linalg.norm(loadings, axis=0) == 0).any():
        warnings.warn("sparse_pca: lambda1 shrank at least one loadings column to zero", DataWarning)
    return fix_signs(loadings)


def _mnl_loglik_probs(beta, x_aug, g):
    """Softmax log-likelihood and fitted probabilities, minimal allocations."""
    n = x_aug.shape[0]
    z = x_aug @ beta.T
    zg = z[np.arange(n), g]
    zmax = z.max(axis=1)
    np.subtract(z, zmax[:, None], out=z)
    np.exp(z, out=z)
    norm = z.sum(axis=1)
    loglik = float((zg - zmax - np.log(norm)).sum())
    z /= norm[:, None]
    return loglik, z


def _class_feature_sums(x_aug, g, m):
    sums = np.zeros((m, x_aug.shape[1]))
    np.add.at(sums, g, x_aug)
    return sums


def _mnl_grad(beta, probs, x_aug, class_sums, lambda2):
    grad = class_sums - probs.T @ x_aug - lambda2 * beta
    grad[0, :] = 0.0  # reference row never moves
    return grad


def mnl_value_and_grad(beta: np.ndarray, x_aug: np.ndarray, g: np.ndarray, lambda2: float):
    """Penalized log-likelihood and its gradient for the softmax model.

    `beta` is M-by-(p+1) with the reference row 0 held at zero; the gradient
    for that row is returned as zero so it never moves.
    """
    loglik, probs = _mnl_loglik_probs(beta, x_aug, g)
    value = loglik - 0.5 * lambda2 * float((beta * beta).sum())
    class_sums = _class_feature_sums(x_aug, g, beta.shape[0])
    return value, _mnl_grad(beta, probs, x_aug, class_sums, lambda2)


def fit_mnl(x: np.ndarray, g: np.ndarray, lambda2: float, tol: float = 1e-6,
            max_iter: int = 500) -> MnlModel:
    """Fit the softmax model by full-batch gradient ascent with backtracking.

    Features are standardized internally and the coefficients mapped back to
    the original scale. Convergence means the gradient max-norm (on the
    standardized problem) fell below `tol`.
    """
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(g, dtype=np.int64)
    if not np.isfinite(x).all():
        raise ValueError("non-finite features")
    if lambda2 <= 0:
        raise ValueError("lambda2 must be > 0")
    m = int(g.max()) + 1
    if m < 2:
        raise ValueError("multinomial logit needs at least two categories")

    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd[sd == 0] = 1.0
    x_aug = np.column_stack([(x - mu) / sd, np.ones(x.shape[0])])
    class_sums = _class_feature_sums(x_aug, g, m)

    def value_probs(b):
        loglik, probs = _mnl_loglik_probs(b, x_aug, g)
        return loglik - 0.5 * lambda2 * float((b * b).sum()), probs

    beta = np.zeros((m, x.shape[1] + 1))
    value, probs = value_probs(beta)
    grad = _mnl_grad(beta, probs, x_aug, class_sums, lambda2)
    grad_norm = np.abs(grad).max()
    converged = grad_norm < tol
    step = 1.0 / max(1.0, x.shape[0])
    for _ in range(max_iter):
        if converged:
            break
        gsq = float((grad * grad).sum())
        step = min(step * 2.0, 1.0)
        while step > 1e-18:
            cand = beta + step * grad
            cand_value, cand_probs = value_probs(cand)
            if cand_value >= value + 1e-4 * step * gsq:
                break
            step *= 0.5
        else:
            break
        beta, value = cand, cand_value
        grad = _mnl_grad(beta, cand_probs, x_aug, class_sums, lambda2)
        grad_norm = np.abs(grad).max()
        converged = grad_norm < tol

    # Map back to the raw feature scale; row 0 stays exactly zero.
    out = np.zeros_like(beta)
    out[:, :-1] = beta[:, :-1] / sd
    out[:, -1] = beta[:, -1] - (beta[:, :-1] * (mu / sd)).sum(axis=1)
    return MnlModel(beta=out, lambda2=lambda2, converged=bool(converged),
                    final_grad_norm=float(grad_norm))


def _svm_objective(w, b, x, t, c_reg):
    margin = np.maximum(0.0, 1.0 - t * (x @ w + b))
    return 0.5 * (w @ w) + c_reg * np.mean(margin * margin)


def fit_svm_ovr(x: np.ndarray, g: np.ndarray, c_reg: float, epochs: int = 200,
                seed: int = 0) -> SvmModel:
    """One-vs-rest linear SVMs with squared hinge loss.

    Full-batch gradient descent on 0.5*||w||^2 + c_reg * mean(hinge^2), step
    schedule eta0/(1 + epoch/10) with halving whenever an epoch would increase
    the objective. The loss term is a mean, so duplicating every row leaves
    the fit unchanged.
    """
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(g, dtype=np.int64)
    m = int(g.max()) + 1
    if m < 2:
        raise ValueError("one-vs-rest SVM needs at least two categories")
    n, p = x.shape
    rng = np.random.default_rng(seed)
    ws = np.empty((m, p))
    bs = np.empty(m)
    for cat in range(m):
        t = np.where(g == cat, 1.0, -1.0)
        w = rng.uniform(-0.01, 0.01, size=p)
        b = 0.0
        obj = _svm_objective(w, b, x, t, c_reg)
        for epoch in range(epochs):
            margin = np.maximum(0.0, 1.0 - t * (x @ w + b))
            coeff = -2.0 * c_reg * margin * t / n
            grad_w = w + coeff @ x
            grad_b = coeff.sum()
            step = 1.0 / (1.0 + epoch / 10.0)
            while step > 1e-16:
                new_w = w - step * grad_w
                new_b = b - step * grad_b
                new_obj = _svm_objective(new_w, new_b, x, t, c_reg)
                if new_obj <= obj:
                    break
                step *= 0.5
            else:
                break
            w, b, obj = new_w, new_b, new_obj
        ws[cat] = w
        bs[cat] = b
    return SvmModel(w=ws, b=bs, c_reg=c_reg)


def ridge_solve(a: np.ndarray, y: np.ndarray, lambda2: float) -> np.ndarray:
    """Solve (A^T A + lambda2 I) w = A^T y via Cholesky."""
    a = np.asarray(a, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    gram = a.T @ a + lambda2 * np.eye(a.shape[1])
    rhs = a.T @ y
    try:
        cho = scipy.linalg.cho_factor(gram)
    except np.linalg.LinAlgError as exc:
        raise ValueError("normal equations are singular; use lambda2 > 0") from exc
    if lambda2 == 0:
        pivots = np.abs(np.diag(cho[0]))
        if pivots.min() <= 1e-7 * pivots.max():
            raise ValueError("normal equations are singular; use lambda2 > 0")
    return scipy.linalg.cho_solve(cho, rhs)
