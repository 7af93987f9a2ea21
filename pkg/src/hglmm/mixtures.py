"""Diagonal Gaussian, Laplacian and hybrid mixture models fitted by EM.

All density work happens in the log domain, per dimension, with log-sum-exp
across components. The per-dimension term helpers are shared between the pure
families and the hybrid family: a hybrid component whose branch selectors are
all 0 (all 1) evaluates, updates and differentiates exactly like the Gaussian
(Laplacian) it embeds, bit for bit.

Row reductions in the M-step accumulate over fixed-size chunks in chunk order,
so results do not depend on the worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from .errors import DataValidationError, FvmFormatError, ShapeMismatchError
from .matrix_io import check_matrix, matrix_to_bytes, read_matrix_block
from .parallel import map_chunks

FAMILIES = ("gmm", "lmm", "hglmm")

DEFAULT_SCALE_FLOOR = 1e-6
DEAD_COMPONENT_TOL = 1e-10

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# model types


def _init_mixture_fields(model, param_names):
    k = None
    tau = np.asarray(model.tau, dtype=np.float64)
    if tau.ndim != 1 or tau.size < 1:
        raise DataValidationError("tau must be a 1-D vector with K >= 1")
    if not np.isfinite(tau).all() or (tau <= 0).any():
        raise DataValidationError("tau entries must be finite and strictly positive")
    if abs(float(tau.sum()) - 1.0) > 1e-12:
        raise DataValidationError(f"tau must sum to 1 within 1e-12, got {tau.sum()!r}")
    k = tau.size
    object.__setattr__(model, "tau", tau)
    for name in param_names:
        a = np.asarray(getattr(model, name), dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != k or a.shape[1] < 1:
            raise DataValidationError(f"{name} must have shape (K, D) with K={k}")
        if not np.isfinite(a).all():
            raise DataValidationError(f"{name} contains non-finite values")
        object.__setattr__(model, name, a)


def _check_scales(a, name):
    if (a <= 0).any():
        raise DataValidationError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class GmmModel:
    """Weighted mixture of diagonal-covariance Gaussians."""

    tau: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray

    family: ClassVar[str] = "gmm"

    def __post_init__(self):
        _init_mixture_fields(self, ("mu", "sigma"))
        _check_scales(self.sigma, "sigma")

    @property
    def K(self) -> int:
        return self.tau.size

    @property
    def D(self) -> int:
        return self.mu.shape[1]


@dataclass(frozen=True)
class LmmModel:
    """Weighted mixture of diagonal multivariate Laplacians."""

    tau: np.ndarray
    m: np.ndarray
    s: np.ndarray

    family: ClassVar[str] = "lmm"

    def __post_init__(self):
        _init_mixture_fields(self, ("m", "s"))
        _check_scales(self.s, "s")

    @property
    def K(self) -> int:
        return self.tau.size

    @property
    def D(self) -> int:
        return self.m.shape[1]


@dataclass(frozen=True)
class HglmmModel:
    """Hybrid mixture: each (component, dimension) is Gaussian or Laplacian.

    b holds the branch selectors as 0.0 (Gaussian) / 1.0 (Laplacian); the
    M-step keeps them strictly binary, so the hybrid density is normalized.
    """

    tau: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    m: np.ndarray
    s: np.ndarray
    b: np.ndarray

    family: ClassVar[str] = "hglmm"

    def __post_init__(self):
        _init_mixture_fields(self, ("mu", "sigma", "m", "s", "b"))
        _check_scales(self.sigma, "sigma")
        _check_scales(self.s, "s")
        if not np.all((self.b == 0.0) | (self.b == 1.0)):
            raise DataValidationError("branch selectors b must be exactly 0 or 1")

    @property
    def K(self) -> int:
        return self.tau.size

    @property
    def D(self) -> int:
        return self.mu.shape[1]


MixtureModel = GmmModel | LmmModel | HglmmModel


@dataclass(frozen=True)
class FitConfig:
    """EM settings; the defaults are the toolkit-wide defaults."""

    K: int
    max_iters: int = 100
    rel_tol: float = 1e-6
    seed: int = 0
    scale_floor: float = DEFAULT_SCALE_FLOOR
    restarts: int = 1

    def __post_init__(self):
        if self.K < 1:
            raise DataValidationError("K must be >= 1")
        if self.max_iters < 1:
            raise DataValidationError("max_iters must be >= 1")
        if self.rel_tol < 0:
            raise DataValidationError("rel_tol must be >= 0")
        if self.scale_floor <= 0:
            raise DataValidationError("scale_floor must be > 0")
        if self.restarts < 1:
            raise DataValidationError("restarts must be >= 1")


@dataclass(frozen=True)
class FitReport:
    log_likelihood_trace: np.ndarray
    iterations_run: int
    converged: bool


# ---------------------------------------------------------------------------
# log densities


def _gaussian_terms(X, mu_k, sigma_k):
    """Per-dimension Gaussian log-density terms, shape (N, D)."""
    z = (X - mu_k) / sigma_k
    return -(_LOG_SQRT_2PI + np.log(sigma_k)) - 0.5 * z * z


def _laplacian_terms(X, m_k, s_k):
    """Per-dimension Laplacian log-density terms, shape (N, D)."""
    return -np.log(2.0 * s_k) - np.abs(X - m_k) / s_k


def _component_terms(X, model, k):
    if isinstance(model, GmmModel):
        return _gaussian_terms(X, model.mu[k], model.sigma[k])
    if isinstance(model, LmmModel):
        return _laplacian_terms(X, model.m[k], model.s[k])
    return np.where(
        model.b[k] == 1.0,
        _laplacian_terms(X, model.m[k], model.s[k]),
        _gaussian_terms(X, model.mu[k], model.sigma[k]),
    )


def _validate_point(x, params):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise DataValidationError("x must be a 1-D vector")
    out = [x]
    for name, value in params:
        a = np.asarray(value, dtype=np.float64)
        if a.shape != x.shape:
            raise ShapeMismatchError(f"{name} has shape {a.shape}, expected {x.shape}")
        if not np.isfinite(a).all():
            raise DataValidationError(f"{name} contains non-finite values")
        out.append(a)
    if not np.isfinite(x).all():
        raise DataValidationError("x contains non-finite values")
    return out


def log_pdf_gaussian(x, mu, sigma) -> float:
    """log N(x; mu, diag(sigma^2)) = sum_d [-log(sqrt(2 pi) sigma_d) - (x_d-mu_d)^2 / (2 sigma_d^2)]."""
    x, mu, sigma = _validate_point(x, [("mu", mu), ("sigma", sigma)])
    if (sigma <= 0).any():
        raise DataValidationError("sigma must be strictly positive")
    return float(_gaussian_terms(x[None, :], mu, sigma).sum())


def log_pdf_laplacian(x, m, s) -> float:
    """log Laplace(x; m, s) = sum_d [-log(2 s_d) - |x_d - m_d| / s_d]."""
    x, m, s = _validate_point(x, [("m", m), ("s", s)])
    if (s <= 0).any():
        raise DataValidationError("s must be strictly positive")
    return float(_laplacian_terms(x[None, :], m, s).sum())


def log_pdf_hybrid(x, mu, sigma, m, s, b) -> float:
    """Per-dimension blend: Laplacian term where b_d = 1, Gaussian where b_d = 0."""
    x, mu, sigma, m, s, b = _validate_point(
        x, [("mu", mu), ("sigma", sigma), ("m", m), ("s", s), ("b", b)]
    )
    if (sigma <= 0).any() or (s <= 0).any():
        raise DataValidationError("scales must be strictly positive")
    if not np.all((b == 0.0) | (b == 1.0)):
        raise DataValidationError("b must be exactly 0 or 1 per dimension")
    terms = np.where(
        b == 1.0,
        _laplacian_terms(x[None, :], m, s),
        _gaussian_terms(x[None, :], mu, sigma),
    )
    return float(terms.sum())


# ---------------------------------------------------------------------------
# E-step


def e_step(X, model: MixtureModel, threads: int = 1):
    """Posterior responsibilities and per-sample log-likelihoods.

    Returns (T, lls): T is row-stochastic (N, K); lls[i] is
    log sum_k tau_k f(x_i; component k), so lls.sum() is the data
    log-likelihood. Evaluated in chunks; chunk boundaries are fixed so the
    result does not depend on the worker count.
    """
    X = check_matrix(X, "X")
    if X.shape[1] != model.D:
        raise ShapeMismatchError(f"X has {X.shape[1]} columns, model expects {model.D}")
    n, k_comp = X.shape[0], model.K
    resp = np.empty((n, k_comp))
    lls = np.empty(n)
    log_tau = np.log(model.tau)

    def work(begin, end):
        block = X[begin:end]
        log_dens = np.empty((end - begin, k_comp))
        for k in range(k_comp):
            log_dens[:, k] = _component_terms(block, model, k).sum(axis=1)
        log_dens += log_tau
        top = log_dens.max(axis=1)
        ex = np.exp(log_dens - top[:, None])
        norm = ex.sum(axis=1)
        lls[begin:end] = top + np.log(norm)
        resp[begin:end] = ex / norm[:, None]

    map_chunks(work, n, threads)
    return resp, lls


def total_log_likelihood(X, model: MixtureModel, threads: int = 1) -> float:
    """sum_i log sum_k tau_k f(x_i; component k), log-sum-exp stable."""
    _, lls = e_step(X, model, threads=threads)
    return float(lls.sum())


# ---------------------------------------------------------------------------
# weighted median


def weighted_median(values, weights) -> float:
    """Smallest sample value minimizing sum_i w_i |values_i - v|.

    The minimizer of the weighted-L1 objective always lies on a sample value;
    among tied minimizers the smallest is returned.
    """
    v = np.asarray(values, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if v.ndim != 1 or v.size < 1 or w.shape != v.shape:
        raise DataValidationError("values and weights must be equal-length 1-D vectors")
    if not (np.isfinite(v).all() and np.isfinite(w).all()):
        raise DataValidationError("values and weights must be finite")
    if (w < 0).any():
        raise DataValidationError("weights must be non-negative")
    order = np.argsort(v, kind="stable")
    return _median_from_sorted(v[order], w[order])


def _median_from_sorted(xs, ws) -> float:
    cw = np.cumsum(ws)
    total = cw[-1]
    if total <= 0:
        raise DataValidationError("weights must not all be zero")
    j = int(np.argmax(cw >= 0.5 * total))
    return float(xs[j])


def _column_weighted_medians(X, T, order):
    """Weighted median of every column of X under every column of T.

    order is the per-column stable argsort of X. Matches weighted_median
    bitwise: same cumulative sums, same tie rule.
    """
    n, d_dim = X.shape
    k_comp = T.shape[1]
    med = np.empty((k_comp, d_dim))
    for d in range(d_dim):
        idx = order[:, d]
        cw = np.cumsum(T[idx, :], axis=0)
        j = np.argmax(cw >= 0.5 * cw[-1, :], axis=0)
        med[:, d] = X[idx[j], d]
    return med


# ---------------------------------------------------------------------------
# M-step

# Chunked accumulators: partial sums are combined in chunk order so the
# outcome is identical for any worker count.


def _chunk_colsums(T, threads):
    parts = map_chunks(lambda b, e: T[b:e].sum(axis=0), T.shape[0], threads)
    out = parts[0].copy()
    for p in parts[1:]:
        out += p
    return out


def _chunk_weighted_sum(X, T, threads):
    parts = map_chunks(lambda b, e: T[b:e].T @ X[b:e], X.shape[0], threads)
    out = parts[0].copy()
    for p in parts[1:]:
        out += p
    return out


def _chunk_weighted_dev(X, T, centers, threads, absolute):
    k_comp = T.shape[1]

    def work(begin, end):
        xb, tb = X[begin:end], T[begin:end]
        out = np.empty((k_comp, X.shape[1]))
        for k in range(k_comp):
            dev = xb - centers[k]
            if absolute:
                np.abs(dev, out=dev)
            else:
                dev *= dev
            out[k] = tb[:, k] @ dev
        return out

    parts = map_chunks(work, X.shape[0], threads)
    out = parts[0].copy()
    for p in parts[1:]:
        out += p
    return out


def _validate_step_inputs(X, T):
    X = check_matrix(X, "X")
    t = np.asarray(T, dtype=np.float64)
    if t.ndim != 2 or t.shape[1] < 1:
        raise DataValidationError("T must be a 2-D responsibility matrix")
    if t.shape[0] != X.shape[0]:
        raise ShapeMismatchError(f"T has {t.shape[0]} rows, X has {X.shape[0]}")
    if not np.isfinite(t).all() or (t < 0).any():
        raise DataValidationError("T entries must be finite and non-negative")
    return X, t


def _mixture_weights(colsum, dead, n_rows):
    tau = colsum / colsum.sum()
    if dead.any():
        # reseeded components get a small positive weight
        tau = np.where(dead, 1.0 / n_rows, tau)
        tau = tau / tau.sum()
    return tau


def _global_std(X):
    return X.std(axis=0)


def _global_abs_dev(X):
    med = np.median(X, axis=0)
    return np.abs(X - med).mean(axis=0)


def _gaussian_params(X, T, colsum, dead, repl_rows, scale_floor, threads):
    safe = np.where(dead, 1.0, colsum)
    mu = _chunk_weighted_sum(X, T, threads) / safe[:, None]
    if dead.any():
        mu[dead] = X[repl_rows]
    sqdev = _chunk_weighted_dev(X, T, mu, threads, absolute=False)
    sigma = np.sqrt(sqdev / safe[:, None])
    if dead.any():
        sigma[dead] = _global_std(X)
    np.maximum(sigma, scale_floor, out=sigma)
    return mu, sigma, sqdev


def _laplacian_params(X, T, colsum, dead, repl_rows, scale_floor, threads, order=None):
    if order is None:
        order = np.argsort(X, axis=0, kind="stable")
    m = _column_weighted_medians(X, T, order)
    if dead.any():
        m[dead] = X[repl_rows]
    absdev = _chunk_weighted_dev(X, T, m, threads, absolute=True)
    safe = np.where(dead, 1.0, colsum)
    s = absdev / safe[:, None]
    if dead.any():
        s[dead] = _global_abs_dev(X)
    np.maximum(s, scale_floor, out=s)
    return m, s, absdev


def _select_branches(colsum, sqdev, sigma, absdev, s):
    """Per-(k, d) branch choice: Laplacian iff its expected complete-data
    log-likelihood contribution strictly exceeds the Gaussian one; ties go
    Gaussian."""
    lap = -colsum[:, None] * np.log(2.0 * s) - absdev / s
    gau = -colsum[:, None] * (_LOG_SQRT_2PI + np.log(sigma)) - sqdev / (2.0 * sigma * sigma)
    return (lap > gau).astype(np.float64)


def _dead_components(X, T, rng, threads):
    colsum = _chunk_colsums(T, threads)
    dead = colsum < DEAD_COMPONENT_TOL
    repl_rows = None
    if dead.any():
        if rng is None:
            rng = np.random.default_rng(0)
        repl_rows = rng.integers(0, X.shape[0], size=int(dead.sum()))
    return colsum, dead, repl_rows


def m_step_gmm(X, T, scale_floor: float = DEFAULT_SCALE_FLOOR, rng=None, threads: int = 1) -> GmmModel:
    """Weights from responsibility mass; means and standard deviations as
    responsibility-weighted statistics, scales floored at scale_floor.

    Components with responsibility mass below 1e-10 are reseeded at a random
    training sample with global column scales.
    """
    X, T = _validate_step_inputs(X, T)
    colsum, dead, repl = _dead_components(X, T, rng, threads)
    tau = _mixture_weights(colsum, dead, X.shape[0])
    mu, sigma, _ = _gaussian_params(X, T, colsum, dead, repl, scale_floor, threads)
    return GmmModel(tau, mu, sigma)


def m_step_lmm(X, T, scale_floor: float = DEFAULT_SCALE_FLOOR, rng=None, threads: int = 1) -> LmmModel:
    """Locations are per-column weighted medians; scales are weighted mean
    absolute deviations about the new locations, floored at scale_floor."""
    X, T = _validate_step_inputs(X, T)
    colsum, dead, repl = _dead_components(X, T, rng, threads)
    tau = _mixture_weights(colsum, dead, X.shape[0])
    m, s, _ = _laplacian_params(X, T, colsum, dead, repl, scale_floor, threads)
    return LmmModel(tau, m, s)


def m_step_hglmm(X, T, scale_floor: float = DEFAULT_SCALE_FLOOR, rng=None, threads: int = 1) -> HglmmModel:
    """Updates both parameter branches with the shared Gaussian/Laplacian
    statistics, then picks b per (k, d) by comparing the two branch scores
    evaluated at the new (floored) parameters."""
    X, T = _validate_step_inputs(X, T)
    colsum, dead, repl = _dead_components(X, T, rng, threads)
    tau = _mixture_weights(colsum, dead, X.shape[0])
    mu, sigma, sqdev = _gaussian_params(X, T, colsum, dead, repl, scale_floor, threads)
    m, s, absdev = _laplacian_params(X, T, colsum, dead, repl, scale_floor, threads)
    b = _select_branches(colsum, sqdev, sigma, absdev, s)
    return HglmmModel(tau, mu, sigma, m, s, b)


_M_STEPS = {"gmm": m_step_gmm, "lmm": m_step_lmm, "hglmm": m_step_hglmm}


# ---------------------------------------------------------------------------
# initialization and fitting


def _restart_rng(seed, restart):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(restart,)))


def _sq_distances_to(X, center):
    d = X - center
    return np.einsum("nd,nd->n", d, d)


def _kmeanspp_centers(X, k_comp, rng):
    n = X.shape[0]
    centers = np.empty((k_comp, X.shape[1]))
    centers[0] = X[int(rng.integers(n))]
    d2 = _sq_distances_to(X, centers[0])
    for k in range(1, k_comp):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[k] = X[idx]
        np.minimum(d2, _sq_distances_to(X, centers[k]), out=d2)
    return centers


def _hard_assignment(X, centers):
    # ||x - c||^2 expanded so memory stays O(N K)
    cross = X @ centers.T
    c2 = np.einsum("kd,kd->k", centers, centers)
    d2 = c2[None, :] - 2.0 * cross
    return np.argmin(d2, axis=1)


def init_model(X, config: FitConfig, family: str) -> MixtureModel:
    """k-means++ seeding plus one hard-assignment statistics pass.

    Matches the initial model of fit_em's first restart for the same config.
    """
    return _init_with_rng(check_matrix(X, "X"), config, family, _restart_rng(config.seed, 0))


def _init_with_rng(X, config, family, rng):
    if family not in FAMILIES:
        raise DataValidationError(f"unknown family {family!r}, expected one of {FAMILIES}")
    n, k_comp = X.shape[0], config.K
    if n < k_comp:
        raise DataValidationError(f"need at least K={k_comp} samples, got {n}")
    centers = _kmeanspp_centers(X, k_comp, rng)
    labels = _hard_assignment(X, centers)
    T = np.zeros((n, k_comp))
    T[np.arange(n), labels] = 1.0

    colsum, dead, repl = _dead_components(X, T, rng, threads=1)
    counts = np.bincount(labels, minlength=k_comp).astype(np.float64)
    tau = counts / n
    tau = np.maximum(tau, 1.0 / (2.0 * n * k_comp))
    tau = tau / tau.sum()

    mu, sigma, sqdev = _gaussian_params(X, T, colsum, dead, repl, config.scale_floor, threads=1)
    if family == "gmm":
        return GmmModel(tau, mu, sigma)
    m, s, absdev = _laplacian_params(X, T, colsum, dead, repl, config.scale_floor, threads=1)
    if family == "lmm":
        return LmmModel(tau, m, s)
    b = _select_branches(colsum, sqdev, sigma, absdev, s)
    return HglmmModel(tau, mu, sigma, m, s, b)


def fit_em(X, config: FitConfig, family: str, threads: int = 1):
    """Fit a mixture by EM; returns (model, FitReport).

    Runs config.restarts independent EM runs (seeded deterministically from
    config.seed) and keeps the one with the highest final log-likelihood.
    The trace holds the initial log-likelihood followed by one entry per E+M
    pass; it is non-decreasing up to noise except across a dead-component
    reseed.
    """
    X = check_matrix(X, "X")
    if family not in FAMILIES:
        raise DataValidationError(f"unknown family {family!r}, expected one of {FAMILIES}")
    if X.shape[0] < config.K:
        raise DataValidationError(f"need at least K={config.K} samples, got {X.shape[0]}")

    best = None
    for restart in range(config.restarts):
        rng = _restart_rng(config.seed, restart)
        model = _init_with_rng(X, config, family, rng)
        resp, lls = e_step(X, model, threads=threads)
        ll = float(lls.sum())
        trace = [ll]
        converged = False
        iterations = 0
        for _ in range(config.max_iters):
            model = _M_STEPS[family](X, resp, config.scale_floor, rng, threads)
            resp, lls = e_step(X, model, threads=threads)
            new_ll = float(lls.sum())
            trace.append(new_ll)
            iterations += 1
            denom = max(abs(ll), abs(new_ll), np.finfo(np.float64).tiny)
            improved = (new_ll - ll) / denom
            ll = new_ll
            if improved < config.rel_tol:
                converged = True
                break
        report = FitReport(np.asarray(trace), iterations, converged)
        if best is None or ll > best[2]:
            best = (model, report, ll)
    return best[0], best[1]


# ---------------------------------------------------------------------------
# serialization

_MODEL_CLASSES = {"gmm": GmmModel, "lmm": LmmModel, "hglmm": HglmmModel}
_MODEL_BLOCKS = {
    "gmm": ("mu", "sigma"),
    "lmm": ("m", "s"),
    "hglmm": ("mu", "sigma", "m", "s", "b"),
}


def parse_container_header(line: bytes, tag: str, name: str) -> dict[str, str]:
    try:
        text = line.decode("ascii").rstrip("\n")
    except UnicodeDecodeError as exc:
        raise FvmFormatError(f"{name}: header is not ASCII") from exc
    tokens = text.split(" ")
    if len(tokens) < 2 or tokens[0] != tag or tokens[1] != "v1":
        raise FvmFormatError(f"{name}: expected '{tag} v1 ...' header, got {text!r}")
    fields = {}
    for token in tokens[2:]:
        if "=" not in token:
            raise FvmFormatError(f"{name}: bad header token {token!r}")
        key, value = token.split("=", 1)
        fields[key] = value
    return fields


def save_model(model: MixtureModel, path) -> None:
    """Header line plus FVM1 blocks: tau, then the family's parameter
    matrices in fixed order (hglmm: mu, sigma, m, s, b as 0.0/1.0)."""
    header = f"HGLMM-MODEL v1 family={model.family} K={model.K} D={model.D}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(matrix_to_bytes(model.tau[None, :]))
        for block in _MODEL_BLOCKS[model.family]:
            fh.write(matrix_to_bytes(getattr(model, block)))


def load_model(path) -> MixtureModel:
    with open(path, "rb") as fh:
        fields = parse_container_header(fh.readline(), "HGLMM-MODEL", str(path))
        family = fields.get("family")
        if family not in _MODEL_CLASSES:
            raise FvmFormatError(f"{path}: unknown family {family!r}")
        try:
            k_comp, d_dim = int(fields["K"]), int(fields["D"])
        except (KeyError, ValueError) as exc:
            raise FvmFormatError(f"{path}: missing or bad K/D header fields") from exc
        tau = read_matrix_block(fh, str(path))
        if tau.shape != (1, k_comp):
            raise FvmFormatError(f"{path}: tau block has shape {tau.shape}, expected (1, {k_comp})")
        blocks = {}
        for name in _MODEL_BLOCKS[family]:
            block = read_matrix_block(fh, str(path))
            if block.shape != (k_comp, d_dim):
                raise FvmFormatError(
                    f"{path}: block {name} has shape {block.shape}, expected ({k_comp}, {d_dim})"
                )
            blocks[name] = block
        if fh.read(1):
            raise FvmFormatError(f"{path}: trailing bytes after model blocks")
    return _MODEL_CLASSES[family](tau.ravel(), **blocks)
