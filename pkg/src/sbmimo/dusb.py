"""Differentiable unfolded SB (DU-LM-SB) and its reverse-mode gradient.

Each of the ``T`` unrolled layers does::

    xt = x + D_k y
    xf = phi_s(xt; Lambda)
    yt = y - D_k [(1 - a_k) xf + eta c0 (J xf + w h)]
    x  = xf
    y  = yt * (1 - psi_s(xt; A, B))

with ``a_k = sum_{l<=k} D_l / sum_l D_l`` and ``(J, h)`` the LM instance for
the trainable regularizer ``lambda``. ``phi_s`` and ``psi_s`` are smooth
stand-ins for the wall clip and the momentum reset. As in the default SB
step, the force is evaluated at the bounded position with ``w = 1/2``;
``DuFixed(force_at_clipped=False)`` evaluates it at the raw ``xt`` instead.

Gradients are taken with respect to ``(D_0..D_{T-1}, eta, lambda)``. The
``lambda`` path runs through ``J``, ``h`` and ``c0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.special import expit

from .channel import ComplexDims, noise_variance_from_snr, real_embedding_matrix
from .qubo import LmConfig, as_float, build_lm, compute_c0, solve
from .sb import INIT_MOMENTUM_SCALE, SbState

DELTA_MIN = 1e-3
LAMBDA_MIN = 1e-3


@dataclass
class DuParams:
    deltas: np.ndarray
    eta: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        self.deltas = as_float(self.deltas).reshape(-1).copy()
        self.eta = as_float(self.eta)[()]
        self.lam = as_float(self.lam)[()]
        if self.deltas.size < 1:
            raise ValueError("need at least one step size")
        if np.any(self.deltas <= 0):
            raise ValueError("step sizes must be positive")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")

    @classmethod
    def initial(cls, T: int) -> "DuParams":
        return cls(deltas=np.ones(T), eta=1.0, lam=1.0)

    @property
    def T(self) -> int:
        return self.deltas.size

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.deltas, [self.eta, self.lam]])

    @classmethod
    def from_vector(cls, v) -> "DuParams":
        v = as_float(v)
        return cls(deltas=v[:-2], eta=v[-2], lam=v[-1])

    def project(self) -> "DuParams":
        return DuParams(np.maximum(self.deltas, DELTA_MIN), self.eta, max(self.lam, LAMBDA_MIN))

    def copy(self) -> "DuParams":
        return DuParams(self.deltas.copy(), self.eta, self.lam)


@dataclass(frozen=True)
class DuFixed:
    Lambda: float = 10.0
    A: float = 100.0
    B: float = 1.01
    h_weight: float = 0.5
    force_at_clipped: bool = True

    def __post_init__(self):
        if not self.Lambda > 0:
            raise ValueError(f"Lambda must be positive, got {self.Lambda}")
        if not self.A > 0:
            raise ValueError(f"A must be positive, got {self.A}")
        if self.B < 1:
            raise ValueError(f"B must be >= 1, got {self.B}")


@dataclass
class DuGrad:
    deltas: np.ndarray
    eta: float
    lam: float

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.deltas, [self.eta, self.lam]])


@dataclass
class DuTrace:
    H: np.ndarray
    Y: np.ndarray
    params: DuParams
    fixed: DuFixed
    J: np.ndarray
    h: np.ndarray
    c0: float
    a: np.ndarray
    x0: np.ndarray
    y0: np.ndarray
    y_in: List[np.ndarray] = field(default_factory=list)
    xt: List[np.ndarray] = field(default_factory=list)
    yt: List[np.ndarray] = field(default_factory=list)
    g: List[np.ndarray] = field(default_factory=list)
    x_out: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.xt)


def swish(u):
    return u * expit(u)


def _swish_grad(u):
    s = expit(u)
    return s + u * s * (1.0 - s)


def phi_s(x, Lambda: float = 10.0):
    """Smooth clip to [-1, 1]; computed as ``sign(x) * g(|x|)`` so it is exactly odd."""
    x = as_float(x)
    r = np.abs(x)
    g = (swish(Lambda * (r + 1.0)) - swish(Lambda * (r - 1.0))) / Lambda - 1.0
    return np.sign(x) * g


def phi_s_grad(x, Lambda: float = 10.0):
    r = np.abs(as_float(x))
    return _swish_grad(Lambda * (r + 1.0)) - _swish_grad(Lambda * (r - 1.0))


def psi_s(x, A: float = 100.0, B: float = 1.01):
    """Smooth square well: ~0 inside ``|x| < B``, ~1 outside."""
    return expit(A * (np.abs(as_float(x)) - B))


def psi_s_grad(x, A: float = 100.0, B: float = 1.01):
    x = as_float(x)
    s = expit(A * (np.abs(x) - B))
    return A * s * (1.0 - s) * np.sign(x)


def step_schedule(deltas) -> np.ndarray:
    """Normalized cumulative step sizes; the last entry is exactly 1."""
    cs = np.cumsum(deltas)
    return cs / cs[-1]


UNCOUPLED_C0 = 1.0


def lm_instance(H, Y, lam: float):
    """LM instance and its ``c0`` for received vectors ``Y``; ``c0 = 1`` when ``J = 0``."""
    q = build_lm(H, Y, LmConfig(lam))
    return q, compute_c0(q, uncoupled=UNCOUPLED_C0)


def du_forward(H, Y, params: DuParams, fixed: DuFixed, init: SbState):
    """Run the unrolled dynamics; returns ``(x(T), trace)``.

    ``Y`` may be a single received vector or a batch ``(B, M)``. ``H`` is
    either shared ``(M, N)`` or one channel per sample ``(B, M, N)``.
    """
    H = as_float(H)
    Y = as_float(Y)
    q, c0 = lm_instance(H, Y, params.lam)
    J, h = q.J, q.h
    x = as_float(init.x)
    y = as_float(init.y)
    if x.shape[-1] != J.shape[-1] or y.shape != x.shape:
        raise ValueError(f"initial state shape {x.shape} does not match n={J.shape[-1]}")
    a = step_schedule(params.deltas)
    K = params.eta * np.asarray(c0)
    K = K[..., None] if K.ndim else K
    w = fixed.h_weight

    trace = DuTrace(H=H, Y=Y, params=params.copy(), fixed=fixed, J=J, h=h, c0=c0, a=a, x0=x, y0=y)
    for k in range(params.T):
        d = params.deltas[k]
        xt = x + d * y
        x = phi_s(xt, fixed.Lambda)
        xf = x if fixed.force_at_clipped else xt
        g = np.matmul(J, xf[..., None])[..., 0] + w * h
        yt = y - d * ((1.0 - a[k]) * xf + K * g)
        trace.y_in.append(y)
        trace.xt.append(xt)
        trace.yt.append(yt)
        trace.g.append(g)
        y = yt * (1.0 - psi_s(xt, fixed.A, fixed.B))
    trace.x_out = x
    return x, trace


def du_backward(trace: DuTrace, loss_grad) -> DuGrad:
    """Reverse-mode gradient of a scalar loss given ``dL/dx(T)``.

    Needs a trace from a shared-channel forward pass. Per-sample
    contributions are reduced by numpy sums over the batch axis in index
    order, so the result does not depend on how the batch was assembled.
    """
    dtype = trace.J.dtype
    xbar = np.asarray(loss_grad).astype(dtype)
    if trace.x_out is None or xbar.shape != trace.x_out.shape:
        raise ValueError(f"loss gradient shape {xbar.shape} does not match trace output")
    if trace.H.ndim != 2:
        raise ValueError("backward pass requires one channel shared by the batch")
    p, fx = trace.params, trace.fixed
    T, n = p.T, trace.J.shape[-1]
    J, c0, a = trace.J, trace.c0, trace.a
    K = p.eta * c0
    w = fx.h_weight

    ybar = np.zeros_like(xbar)
    d_deltas = np.zeros(T, dtype=dtype)
    d_a = np.zeros(T, dtype=dtype)
    d_K = dtype.type(0)
    d_J = np.zeros((n, n), dtype=dtype)
    d_h = np.zeros_like(trace.h)

    for k in range(T - 1, -1, -1):
        d = p.deltas[k]
        xt, yt, g, y_in = trace.xt[k], trace.yt[k], trace.g[k], trace.y_in[k]
        psi = psi_s(xt, fx.A, fx.B)
        dphi = phi_s_grad(xt, fx.Lambda)
        xf = phi_s(xt, fx.Lambda) if fx.force_at_clipped else xt
        yt_bar = ybar * (1.0 - psi)
        xt_bar = xbar * dphi - ybar * yt * psi_s_grad(xt, fx.A, fx.B)

        # yt = y - d [(1 - a) xf + K g],  g = J xf + w h
        g_bar = -d * K * yt_bar
        xf_bar = -d * (1.0 - a[k]) * yt_bar + g_bar @ J
        xt_bar = xt_bar + (xf_bar * dphi if fx.force_at_clipped else xf_bar)
        d_deltas[k] -= np.sum(yt_bar * ((1.0 - a[k]) * xf + K * g))
        d_a[k] += d * np.sum(yt_bar * xf)
        d_K -= d * np.sum(yt_bar * g)
        d_J += _outer_sum(g_bar, xf)
        d_h += w * g_bar
        y_prev_bar = yt_bar

        # xt = x + d y
        d_deltas[k] += np.sum(xt_bar * y_in)
        xbar = xt_bar
        ybar = y_prev_bar + d * xt_bar

    # a_k = cs_k / cs_{T-1}
    cs = np.cumsum(p.deltas)
    total = cs[-1]
    d_deltas += np.cumsum(d_a[::-1])[::-1] / total - np.dot(d_a, cs) / total ** 2

    d_eta = d_K * c0
    d_c0 = d_K * p.eta
    s = np.sum(J ** 2)
    if s > 0:
        d_J = d_J - d_c0 * c0 / s * J
    d_lam = _lambda_chain(trace.H, trace.Y, p.lam, d_J, d_h)
    return DuGrad(deltas=d_deltas, eta=d_eta, lam=d_lam)


def _outer_sum(u, v):
    """``sum_b u_b v_b^T`` for batched vectors, ``u v^T`` for single ones."""
    if u.ndim == 1:
        return np.outer(u, v)
    u2 = u.reshape(-1, u.shape[-1])
    v2 = v.reshape(-1, v.shape[-1])
    return u2.T @ v2


def _lambda_chain(H, Y, lam, d_J, d_h):
    # dP/dlam = -Z^T Z and dh/dlam = 2 Z^T G^-1 y, with G = H H^T + lam I, Z = G^-1 H
    M = H.shape[0]
    G = H @ H.T + lam * np.eye(M)
    Z = solve(G, H)
    dP = -(Z.T @ Z)
    off = 1.0 - np.eye(dP.shape[0])
    # J = sym(P) with zero diagonal; only off-diagonal entries of d_J reach P
    total = np.sum(d_J * off * dP)
    Ginv_y = solve(G, Y.reshape(-1, M).T).T
    dh = 2.0 * Ginv_y @ Z
    return total + np.sum(d_h.reshape(-1, dh.shape[-1]) * dh)


def mse_loss_grad(x_out, x_true):
    """MSE over every component and its gradient with respect to ``x_out``."""
    x_out = as_float(x_out)
    x_true = as_float(x_true)
    if x_out.shape != x_true.shape:
        raise ValueError(f"shape mismatch: {x_out.shape} vs {x_true.shape}")
    diff = x_out - x_true
    return np.mean(diff ** 2), 2.0 * diff / diff.size


def random_init(shape, rng) -> SbState:
    return SbState(x=np.zeros(shape), y=rng.uniform(-INIT_MOMENTUM_SCALE, INIT_MOMENTUM_SCALE, size=shape))


def ridders_derivative(f, h0: float, con: float = 1.6, ntab: int = 12):
    """Derivative of the scalar map ``f`` at 0 by Richardson-extrapolated central differences.

    Steps shrink geometrically from ``h0``; the tableau entry with the
    smallest internal error estimate wins. Returns ``(estimate, error)``.
    """
    dtype = np.asarray(f(0.0)).dtype
    tab = np.empty((ntab, ntab), dtype=dtype)
    h = dtype.type(h0)
    con2 = con * con
    tab[0, 0] = (f(h) - f(-h)) / (2 * h)
    best, err = tab[0, 0], np.inf
    for i in range(1, ntab):
        h = h / con
        tab[0, i] = (f(h) - f(-h)) / (2 * h)
        fac = con2
        for j in range(1, i + 1):
            tab[j, i] = (tab[j - 1, i] * fac - tab[j - 1, i - 1]) / (fac - 1)
            fac *= con2
            e = max(abs(tab[j, i] - tab[j - 1, i]), abs(tab[j, i] - tab[j - 1, i - 1]))
            if e <= err:
                err, best = e, tab[j, i]
        # higher orders got worse: rounding has taken over
        if abs(tab[i, i] - tab[i - 1, i - 1]) >= 2 * err:
            break
    return best, err


def grad_check(seed: int = 0, n: int = 8, T: int = 5, batch: int = 4, snr_db: float = 10.0,
               fixed: Optional[DuFixed] = None, h0: float = 1e-7, extended: bool = True) -> dict:
    """Compare ``du_backward`` with finite differences on a random instance.

    ``n`` is the real dimension ``N = 2 n_t`` (square channel). Parameters
    are drawn around the training initialization so every term is active.
    The unrolled map is stiff near the walls, so the reference derivative is
    a Richardson-extrapolated central difference starting at step ``h0``,
    evaluated in extended precision unless ``extended=False``.

    Returns the maximum relative error per parameter group plus both
    gradient vectors.
    """
    if n % 2:
        raise ValueError(f"n must be even, got {n}")
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    fixed = fixed or DuFixed()
    rng = np.random.default_rng(seed)
    dims = ComplexDims(n // 2, n // 2)
    Hc = (rng.standard_normal((dims.n_r, dims.n_t)) + 1j * rng.standard_normal((dims.n_r, dims.n_t))) * np.sqrt(0.5)
    H = real_embedding_matrix(Hc)
    x_true = 2.0 * rng.integers(0, 2, size=(batch, n)) - 1.0
    s2 = noise_variance_from_snr(snr_db, n)
    Y = x_true @ H.T + rng.standard_normal((batch, dims.M)) * np.sqrt(s2 / 2)
    params = DuParams(deltas=rng.uniform(0.5, 1.5, T), eta=rng.uniform(0.5, 1.5), lam=rng.uniform(0.3, 2.0))
    init = random_init((batch, n), rng)

    out, trace = du_forward(H, Y, params, fixed, init)
    _, dl = mse_loss_grad(out, x_true)
    analytic = du_backward(trace, dl).as_vector()

    wide = np.longdouble if extended else np.float64
    Hw, Yw, xw = H.astype(wide), Y.astype(wide), x_true.astype(wide)
    init_w = SbState(x=init.x.astype(wide), y=init.y.astype(wide))
    v0 = params.as_vector().astype(wide)

    def loss_along(i):
        def f(t):
            v = v0.copy()
            v[i] += t
            o, _ = du_forward(Hw, Yw, DuParams.from_vector(v), fixed, init_w)
            return mse_loss_grad(o, xw)[0]
        return f

    numeric = np.array([float(ridders_derivative(loss_along(i), h0)[0]) for i in range(v0.size)])

    groups = {"deltas": slice(0, T), "eta": slice(T, T + 1), "lambda": slice(T + 1, T + 2)}
    report = {name: relative_error(analytic[sl], numeric[sl]) for name, sl in groups.items()}
    report["max"] = max(report[name] for name in groups)
    report["analytic"] = analytic
    report["numeric"] = numeric
    return report


GRAD_FLOOR = 1e-6


def relative_error(a, b, floor: float = GRAD_FLOOR) -> float:
    """Max of ``|a - b| / max(|a|, |b|, floor)``.

    Components below ``floor`` in magnitude are compared in absolute terms;
    saturated trajectories produce gradients at roundoff level.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / scale))
