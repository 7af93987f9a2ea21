"""Regularized linear canonical correlation analysis for two paired views.

Fitting whitens each view with the inverse square root of its regularized
covariance and takes the SVD of the whitened cross-covariance. Projections map
either view into the shared space; scoring is the cosine of the projected
vectors, optionally with coordinates weighted by a power of the canonical
correlations.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DataValidationError, FvmFormatError, NumericalError, ShapeMismatchError
from .matrix_io import check_matrix, matrix_to_bytes, read_matrix_block
from .mixtures import parse_container_header
from .retrieval import evaluate_annotation, evaluate_search

DEFAULT_REG_GRID = tuple(float(v) for v in np.logspace(-4.0, 2.0, 13))


@dataclass(frozen=True)
class CcaConfig:
    """reg is added to both view covariances; reg_y overrides the Y side.
    r defaults to min(p, q, n - 1)."""

    reg: float = 0.0
    reg_y: float | None = None
    r: int | None = None

    def __post_init__(self):
        if self.reg < 0 or (self.reg_y is not None and self.reg_y < 0):
            raise DataValidationError("regularization must be >= 0")
        if self.r is not None and self.r < 1:
            raise DataValidationError("r must be >= 1")


@dataclass(frozen=True)
class CcaModel:
    mean_x: np.ndarray
    mean_y: np.ndarray
    proj_x: np.ndarray
    proj_y: np.ndarray
    correlations: np.ndarray

    def __post_init__(self):
        arrays = {}
        for name in ("mean_x", "mean_y", "proj_x", "proj_y", "correlations"):
            a = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.isfinite(a).all():
                raise DataValidationError(f"{name} contains non-finite values")
            arrays[name] = a
            object.__setattr__(self, name, a)
        r = arrays["correlations"].size
        if arrays["correlations"].ndim != 1 or r < 1:
            raise DataValidationError("correlations must be a non-empty 1-D vector")
        corr = arrays["correlations"]
        if (corr < 0).any() or (corr > 1.0 + 1e-6).any():
            raise DataValidationError("correlations must lie in [0, 1] up to rounding")
        if (np.diff(corr) > 1e-10).any():
            raise DataValidationError("correlations must be sorted descending")
        if arrays["proj_x"].shape != (r, arrays["mean_x"].size) or arrays["proj_y"].shape != (
            r,
            arrays["mean_y"].size,
        ):
            raise DataValidationError("projection shapes do not match means and correlations")

    @property
    def p(self) -> int:
        return self.mean_x.size

    @property
    def q(self) -> int:
        return self.mean_y.size

    @property
    def r(self) -> int:
        return self.correlations.size


def _inv_sqrt_psd(C, name):
    vals, vecs = np.linalg.eigh(C)
    floor = max(float(vals[-1]), 0.0) * C.shape[0] * np.finfo(np.float64).eps
    keep = vals > floor
    if not keep.any():
        raise NumericalError(f"{name} has no positive eigenvalues")
    return (vecs[:, keep] * vals[keep] ** -0.5) @ vecs[:, keep].T


def cca_fit(X, Y, config: CcaConfig = CcaConfig()) -> CcaModel:
    """Fit on paired rows; correlations come back in descending order.

    With reg = 0 the computation falls back to a pseudo-inverse square root
    on rank-deficient covariances, so correlations can exceed 1 by rounding
    only; any reg > 0 strictly shrinks them below 1.
    """
    X = check_matrix(X, "X")
    Y = check_matrix(Y, "Y")
    if X.shape[0] != Y.shape[0]:
        raise ShapeMismatchError(f"X has {X.shape[0]} rows, Y has {Y.shape[0]}")
    n = X.shape[0]
    if n < 2:
        raise DataValidationError("CCA needs at least 2 paired rows")
    p, q = X.shape[1], Y.shape[1]
    r = config.r if config.r is not None else min(p, q, n - 1)
    if r > min(p, q):
        raise DataValidationError(f"r must be <= min(p, q) = {min(p, q)}, got {r}")

    mean_x = X.mean(axis=0)
    mean_y = Y.mean(axis=0)
    Xc = X - mean_x
    Yc = Y - mean_y
    reg_y = config.reg if config.reg_y is None else config.reg_y
    Cxx = Xc.T @ Xc / (n - 1) + config.reg * np.eye(p)
    Cyy = Yc.T @ Yc / (n - 1) + reg_y * np.eye(q)
    Cxy = Xc.T @ Yc / (n - 1)
    isx = _inv_sqrt_psd(Cxx, "X covariance")
    isy = _inv_sqrt_psd(Cyy, "Y covariance")
    U, svals, Vt = np.linalg.svd(isx @ Cxy @ isy)
    proj_x = (isx @ U[:, :r]).T
    proj_y = (isy @ Vt[:r].T).T
    return CcaModel(mean_x, mean_y, proj_x, proj_y, svals[:r])


def project(model: CcaModel, side: str, M) -> np.ndarray:
    """Map rows of M into the shared space; accepts zero-row matrices."""
    if side not in ("x", "y"):
        raise DataValidationError(f"side must be 'x' or 'y', got {side!r}")
    a = np.asarray(M, dtype=np.float64)
    if a.ndim != 2:
        raise DataValidationError("M must be 2-D")
    mean, proj, width = (
        (model.mean_x, model.proj_x, model.p) if side == "x" else (model.mean_y, model.proj_y, model.q)
    )
    if a.shape[1] != width:
        raise ShapeMismatchError(f"M has {a.shape[1]} columns, side {side!r} expects {width}")
    if a.size and not np.isfinite(a).all():
        raise DataValidationError("M contains non-finite values")
    return (a - mean) @ proj.T


def _weighting(correlations, weight_exp):
    if weight_exp < 0:
        raise DataValidationError("weight_exp must be >= 0")
    if weight_exp == 0.0:
        return None
    if correlations is None:
        raise DataValidationError("weight_exp > 0 needs the canonical correlations")
    w = np.asarray(correlations, dtype=np.float64) ** weight_exp
    if not np.isfinite(w).all():
        raise DataValidationError("correlation weights are not finite")
    return w


def similarity(u, v, correlations=None, weight_exp: float = 0.0) -> float:
    """Cosine of the two projected vectors after correlation weighting.

    Either vector being zero (no direction) gives -inf so it sorts behind
    every real match.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim != 1 or u.shape != v.shape:
        raise ShapeMismatchError("u and v must be 1-D vectors of equal length")
    if not (np.isfinite(u).all() and np.isfinite(v).all()):
        raise DataValidationError("u and v must be finite")
    w = _weighting(correlations, weight_exp)
    if w is not None:
        if w.shape != u.shape:
            raise ShapeMismatchError("correlations must match the vector length")
        u = u * w
        v = v * w
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return float("-inf")
    return float(u @ v / (nu * nv))


def make_scorer(correlations=None, weight_exp: float = 0.0):
    """Batched counterpart of similarity for use with retrieval.rank."""
    w = _weighting(correlations, weight_exp)

    def scorer(Q, C):
        q = np.asarray(Q, dtype=np.float64)
        c = np.asarray(C, dtype=np.float64)
        if w is not None:
            if q.shape[1] != w.size:
                raise ShapeMismatchError("correlations must match the vector length")
            q = q * w
            c = c * w
        qn = np.linalg.norm(q, axis=1)
        cn = np.linalg.norm(c, axis=1)
        scores = (q / np.where(qn > 0, qn, 1.0)[:, None]) @ (
            c / np.where(cn > 0, cn, 1.0)[:, None]
        ).T
        scores[qn == 0, :] = -np.inf
        scores[:, cn == 0] = -np.inf
        return scores

    return scorer


def tune_reg(X, Y, score_fn, grid=None, config: CcaConfig = CcaConfig()):
    """Fit one model per grid value and keep the best-scoring one.

    score_fn maps a fitted CcaModel to a validation score (higher is better);
    ties keep the smaller regularizer. Returns (model, reg, table) where
    table lists (reg, score) pairs in grid order.
    """
    values = DEFAULT_REG_GRID if grid is None else tuple(float(g) for g in grid)
    if not values:
        raise DataValidationError("the regularization grid must not be empty")
    best = None
    table = []
    for reg in values:
        model = cca_fit(X, Y, replace(config, reg=reg, reg_y=None))
        score = float(score_fn(model))
        table.append((reg, score))
        if best is None or score > best[2]:
            best = (model, reg, score)
    return best[0], best[1], table


def validation_recall_scorer(
    val_images,
    image_ids,
    val_sentences,
    sentence_ids,
    manifest,
    task: str = "annotation",
    weight_exp: float = 0.0,
    k: int = 1,
):
    """score_fn for tune_reg: recall@k of a retrieval task on held-out pairs.

    The x side carries image vectors, the y side sentence vectors.
    """
    if task not in ("annotation", "search"):
        raise DataValidationError(f"task must be 'annotation' or 'search', got {task!r}")

    def score(model: CcaModel) -> float:
        px = project(model, "x", val_images)
        py = project(model, "y", val_sentences)
        scorer = make_scorer(model.correlations, weight_exp)
        if task == "annotation":
            metrics = evaluate_annotation(px, image_ids, py, sentence_ids, manifest, scorer)
        else:
            metrics = evaluate_search(py, sentence_ids, px, image_ids, manifest, scorer)
        return metrics.recall_at[k]

    return score


def save_cca(model: CcaModel, path) -> None:
    header = f"HGLMM-CCA v1 p={model.p} q={model.q} r={model.r}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(matrix_to_bytes(model.mean_x[None, :]))
        fh.write(matrix_to_bytes(model.mean_y[None, :]))
        fh.write(matrix_to_bytes(model.proj_x))
        fh.write(matrix_to_bytes(model.proj_y))
        fh.write(matrix_to_bytes(model.correlations[None, :]))


def load_cca(path) -> CcaModel:
    with open(path, "rb") as fh:
        fields = parse_container_header(fh.readline(), "HGLMM-CCA", str(path))
        try:
            p, q, r = int(fields["p"]), int(fields["q"]), int(fields["r"])
        except (KeyError, ValueError) as exc:
            raise FvmFormatError(f"{path}: missing or bad p/q/r header fields") from exc
        mean_x = read_matrix_block(fh, str(path))
        mean_y = read_matrix_block(fh, str(path))
        proj_x = read_matrix_block(fh, str(path))
        proj_y = read_matrix_block(fh, str(path))
        correlations = read_matrix_block(fh, str(path))
        shapes = (mean_x.shape, mean_y.shape, proj_x.shape, proj_y.shape, correlations.shape)
        if shapes != ((1, p), (1, q), (r, p), (r, q), (1, r)):
            raise FvmFormatError(f"{path}: block shapes do not match the header")
        if fh.read(1):
            raise FvmFormatError(f"{path}: trailing bytes after CCA blocks")
    return CcaModel(mean_x.ravel(), mean_y.ravel(), proj_x, proj_y, correlations.ravel())
