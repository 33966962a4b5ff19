"""QUBO instances for MIMO detection.

The energy is ``E(s) = s^T J s + h^T s`` with ``J`` symmetric and zero on the
diagonal. Three detection objectives map onto it:

* ML: ``f_ML(x) = 1/2 ||y - Hx||^2``
* LMMSE-guided: ``f_G(x) = f_ML(x) + lambda_g/2 ||x - x_LMMSE||^2``
* Levenberg-Marquardt: ``f_LM(x) = 1/2 x^T U H x - (U y)^T x`` with
  ``U = H^T (H H^T + lambda I)^-1``

Builders accept a single channel ``(M, N)`` or a stack ``(..., M, N)``; the
leading axes are carried through to ``J`` and ``h``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum

import numpy as np


@dataclass(frozen=True)
class QuboInstance:
    """Couplings ``J`` and fields ``h``; leading axes index independent instances."""

    J: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        J = as_float(self.J)
        h = as_float(self.h)
        if J.ndim < 2 or J.shape[-1] != J.shape[-2]:
            raise ValueError(f"J must be square, got shape {J.shape}")
        if h.ndim < 1 or h.shape[-1] != J.shape[-1]:
            raise ValueError(f"h shape {h.shape} does not match J shape {J.shape}")
        # a shared J may carry a batch of fields
        np.broadcast_shapes(J.shape[:-2], h.shape[:-1])
        if np.any(np.diagonal(J, axis1=-2, axis2=-1) != 0):
            raise ValueError("J must have a zero diagonal")
        if not np.array_equal(J, np.swapaxes(J, -1, -2)):
            raise ValueError("J must be symmetric")
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "h", h)

    @property
    def n(self) -> int:
        return self.J.shape[-1]


@dataclass(frozen=True)
class LmConfig:
    lam: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"LM regularizer must be > 0, got {self.lam}")


@dataclass(frozen=True)
class GConfig:
    lambda_g: float = 0.5
    sigma_w2: float = 1.0

    def __post_init__(self):
        if self.lambda_g < 0:
            raise ValueError(f"lambda_g must be >= 0, got {self.lambda_g}")


class Objective(str, Enum):
    ML = "ml"
    G = "g"
    LM = "lm"


def as_float(x) -> np.ndarray:
    """Float array; extended precision input stays extended (used by finite-difference checks)."""
    x = np.asarray(x)
    return x.astype(np.longdouble if x.dtype == np.longdouble else np.float64, copy=False)


def _matvec(A, x):
    return np.matmul(A, x[..., None])[..., 0]


def _symmetrize(P):
    # kills rounding asymmetry from the matrix products
    return 0.5 * (P + np.swapaxes(P, -1, -2))


def _zero_diag(P):
    n = P.shape[-1]
    return P * (1.0 - np.eye(n))


def energy(q: QuboInstance, sigma) -> np.ndarray:
    """``sigma^T J sigma + h^T sigma``; ``sigma`` may be continuous and batched."""
    sigma = as_float(sigma)
    if sigma.shape[-1] != q.n:
        raise ValueError(f"spin vector length {sigma.shape[-1]} != {q.n}")
    return np.sum(sigma * _matvec(q.J, sigma), axis=-1) + np.sum(q.h * sigma, axis=-1)


def lmmse_solution(H, y, reg: float) -> np.ndarray:
    """``H^T (H H^T + reg I)^-1 y``."""
    H = as_float(H)
    y = as_float(y)
    if reg < 0:
        raise ValueError(f"reg must be >= 0, got {reg}")
    G = np.matmul(H, np.swapaxes(H, -1, -2)) + reg * np.eye(H.shape[-2])
    try:
        z = solve(G, y[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("H H^T + reg I is singular") from exc
    return _matvec(np.swapaxes(H, -1, -2), z)


def lm_matrix(H, lam: float) -> np.ndarray:
    """``U_lambda = H^T (H H^T + lam I)^-1``."""
    H = as_float(H)
    G = np.matmul(H, np.swapaxes(H, -1, -2)) + lam * np.eye(H.shape[-2])
    # G is symmetric, so U = (G^-1 H)^T
    return np.swapaxes(solve(G, H), -1, -2)


def solve(G, B):
    """``G^-1 B``, keeping extended precision when ``G`` carries it."""
    if G.dtype != np.longdouble:
        return np.linalg.solve(G, B)
    # LAPACK has no extended precision: refine a double solution
    G64 = G.astype(np.float64)
    X = np.linalg.solve(G64, B.astype(np.float64)).astype(np.longdouble)
    for _ in range(3):
        X = X + np.linalg.solve(G64, (B - np.matmul(G, X)).astype(np.float64))
    return X


def objective(kind, H, y, x, config=None) -> np.ndarray:
    """Evaluate ``f_ML``, ``f_G`` or ``f_LM`` at ``x`` (which may be batched)."""
    kind = Objective(kind)
    H = as_float(H)
    y = as_float(y)
    x = as_float(x)
    if x.shape[-1] != H.shape[-1]:
        raise ValueError(f"x length {x.shape[-1]} != channel input dimension {H.shape[-1]}")
    if kind is Objective.LM:
        cfg = config if config is not None else LmConfig()
        U = lm_matrix(H, cfg.lam)
        UH = np.matmul(U, H)
        return 0.5 * np.sum(x * _matvec(UH, x), axis=-1) - np.sum(_matvec(U, y) * x, axis=-1)
    f_ml = 0.5 * np.sum((y - _matvec(H, x)) ** 2, axis=-1)
    if kind is Objective.ML:
        return f_ml
    cfg = config if config is not None else GConfig()
    x_l = lmmse_solution(H, y, cfg.sigma_w2)
    return f_ml + 0.5 * cfg.lambda_g * np.sum((x - x_l) ** 2, axis=-1)


def build_ml(H, y) -> QuboInstance:
    H = as_float(H)
    y = as_float(y)
    if y.shape[-1] != H.shape[-2]:
        raise ValueError(f"y length {y.shape[-1]} != channel output dimension {H.shape[-2]}")
    Ht = np.swapaxes(H, -1, -2)
    return QuboInstance(_zero_diag(_symmetrize(np.matmul(Ht, H))), -2.0 * _matvec(Ht, y))


def build_g(H, y, cfg: GConfig) -> QuboInstance:
    ml = build_ml(H, y)
    if cfg.lambda_g == 0:
        return ml
    x_l = lmmse_solution(H, y, cfg.sigma_w2)
    # the lambda_g * I quadratic term is diagonal and drops out of J
    return QuboInstance(ml.J, ml.h - 2.0 * cfg.lambda_g * x_l)


def build_lm(H, y, cfg: LmConfig) -> QuboInstance:
    H = as_float(H)
    y = as_float(y)
    if y.shape[-1] != H.shape[-2]:
        raise ValueError(f"y length {y.shape[-1]} != channel output dimension {H.shape[-2]}")
    U = lm_matrix(H, cfg.lam)
    return QuboInstance(_zero_diag(_symmetrize(np.matmul(U, H))), -2.0 * _matvec(U, y))


def build(kind, H, y, config=None) -> QuboInstance:
    kind = Objective(kind)
    if kind is Objective.ML:
        return build_ml(H, y)
    if kind is Objective.G:
        return build_g(H, y, config if config is not None else GConfig())
    return build_lm(H, y, config if config is not None else LmConfig())


def flip_changes(q: QuboInstance, x) -> np.ndarray:
    """Energy change caused by flipping each coordinate of a +-1 vector."""
    x = as_float(x)
    if not np.all(np.abs(x) == 1):
        raise ValueError("x must have entries in {+1, -1}")
    if x.shape[-1] != q.n:
        raise ValueError(f"spin vector length {x.shape[-1]} != {q.n}")
    return -2.0 * x * (2.0 * _matvec(q.J, x) + q.h)


def is_local_min(q: QuboInstance, x) -> np.ndarray:
    """True where no single flip lowers the energy."""
    return np.all(flip_changes(q, x) >= 0, axis=-1)


def compute_c0(q: QuboInstance, uncoupled=None) -> np.ndarray:
    """Coupling scale ``2 sqrt((n - 1) / sum_ij J_ij^2)``; batched over leading axes.

    An all-zero ``J`` has no scale. That raises unless ``uncoupled`` gives a
    value to use instead (the spins are then independent and any positive
    scale leads to the same minimizer).
    """
    s = np.sum(q.J ** 2, axis=(-2, -1))
    zero = s <= 0
    if np.any(zero):
        if uncoupled is None:
            raise ValueError("all-zero coupling matrix; c0 is undefined")
        return np.where(zero, uncoupled, 2.0 * np.sqrt((q.n - 1) / np.where(zero, 1.0, s)))
    return 2.0 * np.sqrt((q.n - 1) / s)


def all_spins(n: int) -> np.ndarray:
    """Every vector in {+1,-1}^n, shape ``(2**n, n)``."""
    return np.array(list(itertools.product((1.0, -1.0), repeat=n)))


def single_flip_minima(values: dict) -> list:
    """Local minima of a function given as ``{spin tuple: value}`` on the full hypercube."""
    minima = []
    for s, v in values.items():
        neighbours = (s[:i] + (-s[i],) + s[i + 1:] for i in range(len(s)))
        if all(values[t] >= v for t in neighbours):
            minima.append(s)
    return minima
