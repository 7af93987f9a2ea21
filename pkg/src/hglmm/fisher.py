"""Fisher vector encoding of descriptor sets under a fitted mixture.

A set of descriptors is summarized by the gradient of its log-likelihood with
respect to the component location and scale parameters. Vectors are laid out
interleaved: entry 2*(k*D + d) is the location gradient of component k,
dimension d, and entry 2*(k*D + d) + 1 the matching scale gradient, for a
fixed length of 2*K*D regardless of family.

The gradient helpers are shared with the hybrid family so that a hybrid model
with branch selectors all 0 (all 1) encodes exactly like the embedded Gaussian
(Laplacian) model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataValidationError, ShapeMismatchError
from .matrix_io import DescriptorSetIndex, check_matrix
from .mixtures import GmmModel, HglmmModel, LmmModel, MixtureModel, e_step
from .parallel import map_items


@dataclass(frozen=True)
class EncodeConfig:
    """Normalization settings applied on top of the raw gradient."""

    alpha: float = 0.5
    apply_fim: bool = True
    apply_l2: bool = True

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise DataValidationError("alpha must lie in [0, 1]")


@dataclass(frozen=True)
class FimDiagonal:
    """Diagonal Fisher information approximation for a reference set size."""

    values: np.ndarray
    n_ref: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size < 2:
            raise DataValidationError("values must be a 1-D vector of length 2*K*D")
        if not np.isfinite(v).all() or (v <= 0).any():
            raise DataValidationError("Fisher information entries must be finite and positive")
        object.__setattr__(self, "values", v)


def _interleave(loc, scale):
    return np.stack([loc, scale], axis=-1).reshape(-1)


def _gaussian_grads(X, T, mu, sigma, colsum):
    k_comp = mu.shape[0]
    loc = np.empty_like(mu)
    scale = np.empty_like(mu)
    for k in range(k_comp):
        diff = X - mu[k]
        loc[k] = (T[:, k] @ diff) / (sigma[k] * sigma[k])
        scale[k] = (T[:, k] @ (diff * diff)) / sigma[k] ** 3 - colsum[k] / sigma[k]
    return loc, scale


def _laplacian_grads(X, T, m, s, colsum):
    k_comp = m.shape[0]
    loc = np.empty_like(m)
    scale = np.empty_like(m)
    for k in range(k_comp):
        diff = X - m[k]
        sgn = np.where(diff > 0, 1.0, -1.0)
        loc[k] = (T[:, k] @ sgn) / s[k]
        scale[k] = (T[:, k] @ np.abs(diff)) / (s[k] * s[k]) - colsum[k] / s[k]
    return loc, scale


def fv_raw(X_set, model: MixtureModel) -> np.ndarray:
    """Unnormalized log-likelihood gradient of the set, length 2*K*D.

    Location gradients: sum_i T_ik (x - mu) / sigma^2 (Gaussian) or
    sum_i T_ik sign(x - m) / s (Laplacian, sign(0) = -1). Scale gradients:
    sum_i T_ik ((x - mu)^2 / sigma^3 - 1 / sigma), respectively
    sum_i T_ik (|x - m| / s^2 - 1 / s). Hybrid components dispatch per
    dimension on the branch selector.
    """
    X = check_matrix(X_set, "X_set")
    if X.shape[1] != model.D:
        raise ShapeMismatchError(f"X_set has {X.shape[1]} columns, model expects {model.D}")
    T, _ = e_step(X, model)
    colsum = T.sum(axis=0)
    if isinstance(model, GmmModel):
        loc, scale = _gaussian_grads(X, T, model.mu, model.sigma, colsum)
    elif isinstance(model, LmmModel):
        loc, scale = _laplacian_grads(X, T, model.m, model.s, colsum)
    else:
        g_loc, g_scale = _gaussian_grads(X, T, model.mu, model.sigma, colsum)
        l_loc, l_scale = _laplacian_grads(X, T, model.m, model.s, colsum)
        loc = np.where(model.b == 1.0, l_loc, g_loc)
        scale = np.where(model.b == 1.0, l_scale, g_scale)
    return _interleave(loc, scale)


def fim_diagonal(model: MixtureModel, n_ref: int) -> FimDiagonal:
    """Closed-form diagonal Fisher information for a set of n_ref descriptors.

    Per component k and dimension d: location entry n_ref * tau_k / sigma^2
    and scale entry 2 * n_ref * tau_k / sigma^2 for a Gaussian dimension;
    both entries n_ref * tau_k / s^2 for a Laplacian dimension.
    """
    if n_ref < 1:
        raise DataValidationError("n_ref must be >= 1")
    w = float(n_ref) * model.tau[:, None]
    if isinstance(model, GmmModel):
        loc = w / (model.sigma * model.sigma)
        scale = 2.0 * loc
    elif isinstance(model, LmmModel):
        loc = w / (model.s * model.s)
        scale = loc
    else:
        g = w / (model.sigma * model.sigma)
        l = w / (model.s * model.s)
        loc = np.where(model.b == 1.0, l, g)
        scale = np.where(model.b == 1.0, l, 2.0 * g)
    return FimDiagonal(_interleave(loc, scale), n_ref)


def power_normalize(v, alpha: float) -> np.ndarray:
    """Signed power compression sign(v) |v|^alpha; alpha = 1 is the identity."""
    v = _check_vector(v, "v")
    if not 0.0 <= alpha <= 1.0:
        raise DataValidationError("alpha must lie in [0, 1]")
    if alpha == 1.0:
        return v.copy()
    return np.sign(v) * np.abs(v) ** alpha


def l2_normalize(v) -> np.ndarray:
    """Scale to unit Euclidean norm; the zero vector is returned unchanged."""
    v = _check_vector(v, "v")
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        return v.copy()
    return v / norm


def _check_vector(v, name):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise DataValidationError(f"{name} must be a 1-D vector")
    if not np.isfinite(v).all():
        raise DataValidationError(f"{name} contains non-finite values")
    return v


def encode(X_set, model: MixtureModel, config: EncodeConfig = EncodeConfig()) -> np.ndarray:
    """Normalized Fisher vector of one descriptor set.

    Pipeline: raw gradient, then elementwise division by the square root of
    the diagonal Fisher information (n_ref = set size), then signed power
    compression, then L2 normalization.
    """
    X = check_matrix(X_set, "X_set")
    v = fv_raw(X, model)
    if config.apply_fim:
        v = v / np.sqrt(fim_diagonal(model, X.shape[0]).values)
    v = power_normalize(v, config.alpha)
    if config.apply_l2:
        v = l2_normalize(v)
    return v


def mean_pool(X_set) -> np.ndarray:
    """Column means of the set; the baseline pooled representation."""
    X = check_matrix(X_set, "X_set")
    return X.mean(axis=0)


def fuse_concat(*vectors) -> np.ndarray:
    """Concatenate encoded vectors (e.g. two family encodings of one set)."""
    parts = []
    for v in vectors:
        v = np.asarray(v, dtype=np.float64)
        if v.ndim != 1:
            raise DataValidationError("fuse_concat takes 1-D vectors")
        if not np.isfinite(v).all():
            raise DataValidationError("fused vectors must be finite")
        parts.append(v)
    if not parts:
        raise DataValidationError("fuse_concat needs at least one vector")
    return np.concatenate(parts)


def encode_sets(
    X,
    index: DescriptorSetIndex,
    model: MixtureModel,
    config: EncodeConfig = EncodeConfig(),
    threads: int = 1,
) -> np.ndarray:
    """Encode every set of the index into one row, in index order."""
    X = check_matrix(X, "X")
    spans = [(begin, end) for _, begin, end in index.entries]
    for begin, end in spans:
        if end > X.shape[0]:
            raise ShapeMismatchError(f"set range [{begin}, {end}) exceeds {X.shape[0]} rows")
    rows = map_items(lambda span: encode(X[span[0] : span[1]], model, config), spans, threads)
    return np.vstack(rows)
