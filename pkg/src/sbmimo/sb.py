"""Discrete ballistic simulated bifurcation.

One step of the Euler scheme::

    x(k+1) = x(k) + D y(k)
    y(k+1) = y(k) - D [(1 - a_k) x' + c0 (J x' + w h)],   a_k = k / T

followed by the wall rule: any coordinate with ``|x_i| > 1`` is put back on
the wall ``sign(x_i)`` and its momentum is zeroed.

By default ``x'`` is the freshly updated (and wall-clipped) position and
``w = 1/2``, so the force is half the gradient of ``E(x) = x^T J x + h^T x``
and wall-stable points are exactly the single-flip local minima of ``E``.
``semi_implicit=False, h_weight=1`` gives the explicit form with ``x' = x(k)``
and field ``J x + h``.

All routines broadcast over leading batch axes: ``J`` may be ``(n, n)`` or
``(..., n, n)`` and states ``(..., n)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .qubo import QuboInstance, compute_c0

INIT_MOMENTUM_SCALE = 0.1


@dataclass(frozen=True)
class SbConfig:
    T: int = 50
    delta: float = 1.0
    c0: Optional[float] = None
    semi_implicit: bool = True
    h_weight: float = 0.5

    def __post_init__(self):
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if self.c0 is not None and not self.c0 > 0:
            raise ValueError(f"c0 must be > 0, got {self.c0}")


@dataclass(frozen=True)
class SbState:
    x: np.ndarray
    y: np.ndarray
    k: int = 0


def init_state(n: int, rng: np.random.Generator, size=()) -> SbState:
    """Zero position, momentum uniform on [-0.1, 0.1]."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    shape = (*size, n)
    y = rng.uniform(-INIT_MOMENTUM_SCALE, INIT_MOMENTUM_SCALE, size=shape)
    return SbState(x=np.zeros(shape), y=y, k=0)


def schedule(k: int, T: int) -> float:
    return k / T


def _c0_column(c0):
    c0 = np.asarray(c0)
    return c0[..., None] if c0.ndim else c0


def local_field(q: QuboInstance, x, h_weight: float = 1.0) -> np.ndarray:
    """``J x + h_weight * h``."""
    return np.matmul(q.J, x[..., None])[..., 0] + h_weight * q.h


def sb_step(q: QuboInstance, s: SbState, cfg: SbConfig, *, c0=None, delta=None, a=None) -> SbState:
    """Advance one Euler step.

    ``delta`` and ``a`` override the configured step size and the ``k / T``
    schedule, which lets callers drive a variable-step trajectory.
    """
    if s.k >= cfg.T and (delta is None or a is None):
        raise ValueError(f"state already at k={s.k} >= T={cfg.T}")
    if c0 is None:
        c0 = cfg.c0 if cfg.c0 is not None else compute_c0(q)
    c0 = _c0_column(c0)
    d = cfg.delta if delta is None else delta
    a_k = schedule(s.k, cfg.T) if a is None else a

    x_new = s.x + d * s.y
    wall = np.abs(x_new) > 1.0
    x_new = np.where(wall, np.sign(x_new), x_new)
    x_force = x_new if cfg.semi_implicit else s.x
    y_new = s.y - d * ((1.0 - a_k) * x_force + c0 * local_field(q, x_force, cfg.h_weight))
    y_new = np.where(wall, 0.0, y_new)
    return SbState(x=x_new, y=y_new, k=s.k + 1)


def hard_sign(x) -> np.ndarray:
    """Elementwise sign with ``sign(0) = +1``."""
    return np.where(np.asarray(x) >= 0, 1.0, -1.0)


def sb_evolve(q: QuboInstance, cfg: SbConfig, state: SbState, c0=None) -> SbState:
    """Run the remaining steps from ``state`` up to ``k = T``."""
    if c0 is None:
        c0 = cfg.c0 if cfg.c0 is not None else compute_c0(q)
    while state.k < cfg.T:
        state = sb_step(q, state, cfg, c0=c0)
    return state


def sb_run(q: QuboInstance, cfg: SbConfig, rng: np.random.Generator, c0=None) -> np.ndarray:
    """Run ``T`` steps from a random start and return the +-1 decision.

    A stacked instance (``J`` of shape ``(B, n, n)``) runs ``B`` independent
    solvers; ``rng`` then supplies all ``B`` initial momenta in one draw.
    """
    state = init_state(q.n, rng, size=q.J.shape[:-2])
    return hard_sign(sb_evolve(q, cfg, state, c0=c0).x)
