"""Linear decorrelating transforms: PCA and ICA.

Both produce a LinearTransform (centering vector plus projection matrix)
applied as (X - mean) @ weights.T. ICA runs the symmetric fixed-point
iteration with the tanh contrast on PCA-whitened data; with out_dim equal to
the input dimension it is a rotation of the whitened space, so no information
is discarded.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataValidationError, FvmFormatError, NumericalError, ShapeMismatchError
from .matrix_io import check_matrix, matrix_to_bytes, read_matrix_block
from .mixtures import parse_container_header


@dataclass(frozen=True)
class LinearTransform:
    mean: np.ndarray
    weights: np.ndarray
    kind: str
    converged: bool = True

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if mean.ndim != 1 or weights.ndim != 2 or weights.shape[1] != mean.size:
            raise DataValidationError("weights must be (out_dim, in_dim) with matching mean")
        if not (np.isfinite(mean).all() and np.isfinite(weights).all()):
            raise DataValidationError("transform parameters must be finite")
        if weights.shape[0] > weights.shape[1]:
            raise DataValidationError("out_dim must not exceed in_dim")
        if self.kind not in ("pca", "ica"):
            raise DataValidationError(f"unknown transform kind {self.kind!r}")
        if self.kind == "pca":
            gram = weights @ weights.T
            if np.abs(gram - np.eye(weights.shape[0])).max() > 1e-8:
                raise DataValidationError("pca rows must be orthonormal")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "weights", weights)

    @property
    def in_dim(self) -> int:
        return self.mean.size

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


def apply_transform(transform: LinearTransform, X) -> np.ndarray:
    X = check_matrix(X, "X")
    if X.shape[1] != transform.in_dim:
        raise ShapeMismatchError(
            f"X has {X.shape[1]} columns, transform expects {transform.in_dim}"
        )
    return (X - transform.mean) @ transform.weights.T


def _spectral_decomposition(X, out_dim, name):
    if X.shape[0] < 2:
        raise DataValidationError(f"{name} needs at least 2 rows")
    if not 1 <= out_dim <= X.shape[1]:
        raise DataValidationError(f"out_dim must lie in [1, {X.shape[1]}], got {out_dim}")
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (X.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    eigvals = eigvals[::-1]
    eigvecs = eigvecs[:, ::-1]
    floor = max(float(eigvals[0]), 0.0) * X.shape[1] * np.finfo(np.float64).eps
    rank = int((eigvals > floor).sum())
    if out_dim > rank:
        raise NumericalError(
            f"{name}: requested {out_dim} components but the data has numerical rank {rank}"
        )
    return mean, centered, eigvals[:out_dim], eigvecs[:, :out_dim]


def _fix_row_signs(weights):
    # make each row's largest-magnitude entry positive
    peak = np.take_along_axis(weights, np.abs(weights).argmax(axis=1)[:, None], axis=1)
    return weights * np.where(peak < 0, -1.0, 1.0)


def pca_fit(X, out_dim: int) -> LinearTransform:
    """Top out_dim principal directions, rows orthonormal, variance-ordered."""
    X = check_matrix(X, "X")
    mean, _, _, eigvecs = _spectral_decomposition(X, out_dim, "pca_fit")
    return LinearTransform(mean, _fix_row_signs(eigvecs.T), "pca")


def _sym_decorrelate(W):
    vals, vecs = np.linalg.eigh(W @ W.T)
    if vals[0] <= 0:
        raise NumericalError("degenerate unmixing matrix during ICA iteration")
    return (vecs * vals**-0.5) @ vecs.T @ W


def ica_fit(X, out_dim: int, seed: int = 0, max_iter: int = 500, tol: float = 1e-6) -> LinearTransform:
    """Symmetric fixed-point ICA with the tanh contrast.

    PCA-whitens to out_dim, then iterates W <- E[z g(Wz)] - E[g'(Wz)] W with
    symmetric decorrelation after every update, starting from a seeded random
    rotation. Convergence is reached when every row's direction is stable
    within tol; if max_iter passes first, the transform is returned with
    converged=False and a warning.
    """
    X = check_matrix(X, "X")
    if max_iter < 1:
        raise DataValidationError("max_iter must be >= 1")
    if tol <= 0:
        raise DataValidationError("tol must be > 0")
    mean, centered, eigvals, eigvecs = _spectral_decomposition(X, out_dim, "ica_fit")
    whiten = (eigvecs / np.sqrt(eigvals)).T
    Z = centered @ whiten.T

    rng = np.random.default_rng(seed)
    W, _ = np.linalg.qr(rng.standard_normal((out_dim, out_dim)))
    W = _sym_decorrelate(W)
    converged = False
    n = Z.shape[0]
    for _ in range(max_iter):
        G = np.tanh(Z @ W.T)
        W_new = (G.T @ Z) / n - (1.0 - G * G).mean(axis=0)[:, None] * W
        W_new = _sym_decorrelate(W_new)
        drift = float(np.abs(np.abs(np.einsum("ij,ij->i", W_new, W)) - 1.0).max())
        W = W_new
        if drift < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"ICA did not converge within {max_iter} iterations", RuntimeWarning)
    return LinearTransform(mean, _fix_row_signs(W @ whiten), "ica", converged)


def save_transform(transform: LinearTransform, path) -> None:
    header = (
        f"HGLMM-TRANSFORM v1 kind={transform.kind} "
        f"in={transform.in_dim} out={transform.out_dim}\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(matrix_to_bytes(transform.mean[None, :]))
        fh.write(matrix_to_bytes(transform.weights))


def load_transform(path) -> LinearTransform:
    with open(path, "rb") as fh:
        fields = parse_container_header(fh.readline(), "HGLMM-TRANSFORM", str(path))
        kind = fields.get("kind")
        try:
            in_dim, out_dim = int(fields["in"]), int(fields["out"])
        except (KeyError, ValueError) as exc:
            raise FvmFormatError(f"{path}: missing or bad in/out header fields") from exc
        mean = read_matrix_block(fh, str(path))
        weights = read_matrix_block(fh, str(path))
        if mean.shape != (1, in_dim) or weights.shape != (out_dim, in_dim):
            raise FvmFormatError(f"{path}: block shapes do not match the header")
        if fh.read(1):
            raise FvmFormatError(f"{path}: trailing bytes after transform blocks")
    return LinearTransform(mean.ravel(), weights, kind)
