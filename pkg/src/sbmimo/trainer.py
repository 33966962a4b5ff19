"""Supervised training of the unfolded detector's parameters.

Every update draws one channel, a batch of transmitted vectors sharing it
and one SNR from the configured range, runs the unrolled dynamics, and takes
an Adam step on the MSE between the continuous output and the true symbols.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from .channel import ComplexDims, RealChannel, noise_variance_from_snr, realize_channel
from .dusb import DELTA_MIN, LAMBDA_MIN, DuFixed, DuParams, du_backward, du_forward, mse_loss_grad, random_init

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    T: int = 10
    batch_size: int = 2000
    num_updates: int = 1000
    learning_rate: float = 2e-4
    dims: ComplexDims = field(default_factory=lambda: ComplexDims(16, 16))
    snr_range_db: Tuple[float, float] = (0.0, 30.0)
    seed: int = 0
    fixed: DuFixed = field(default_factory=DuFixed)

    def __post_init__(self):
        if self.T < 1 or self.batch_size < 1:
            raise ValueError(f"T and batch_size must be positive, got T={self.T}, batch_size={self.batch_size}")
        if self.num_updates < 0:
            raise ValueError(f"num_updates must be >= 0, got {self.num_updates}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        lo, hi = self.snr_range_db
        if lo > hi:
            raise ValueError(f"empty SNR range {self.snr_range_db}")
        object.__setattr__(self, "snr_range_db", (float(lo), float(hi)))


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(m=np.zeros(size), v=np.zeros(size))


@dataclass(frozen=True)
class Batch:
    """``batch_size`` samples sharing one channel: ``Y = X H^T + W``."""

    channel: RealChannel
    X: np.ndarray
    Y: np.ndarray
    snr_db: float
    sigma_w2: float

    def __len__(self):
        return self.X.shape[0]


def mse_loss(x_out, x_true) -> float:
    """Mean squared difference over every component of the batch."""
    return float(mse_loss_grad(x_out, x_true)[0])


def make_batch(cfg: TrainConfig, rng: np.random.Generator) -> Batch:
    """Draw order: SNR, channel, symbols, noise."""
    snr_db = float(rng.uniform(*cfg.snr_range_db))
    sigma_w2 = noise_variance_from_snr(snr_db, cfg.dims.N)
    channel = realize_channel(cfg.dims, rng)
    X = 2.0 * rng.integers(0, 2, size=(cfg.batch_size, cfg.dims.N)).astype(np.float64) - 1.0
    W = rng.standard_normal((cfg.batch_size, cfg.dims.M)) * math.sqrt(sigma_w2 / 2.0)
    return Batch(channel=channel, X=X, Y=X @ channel.H.T + W, snr_db=snr_db, sigma_w2=sigma_w2)


def adam_step(state: AdamState, params: DuParams, grads, learning_rate: float) -> Tuple[AdamState, DuParams]:
    """Bias-corrected Adam update followed by the positivity projection."""
    g = np.asarray(grads.as_vector() if hasattr(grads, "as_vector") else grads, dtype=np.float64)
    theta = params.as_vector()
    if g.shape != theta.shape or state.m.shape != theta.shape:
        raise ValueError(f"shape mismatch: params {theta.shape}, grads {g.shape}, moments {state.m.shape}")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    theta = theta - learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = AdamState(m=m, v=v, t=t, beta1=state.beta1, beta2=state.beta2, eps=state.eps)
    # project before building DuParams, which rejects non-positive values
    theta[:-2] = np.maximum(theta[:-2], DELTA_MIN)
    theta[-1] = max(theta[-1], LAMBDA_MIN)
    return new_state, DuParams.from_vector(theta)


def update_rng(seed: int, k: int) -> np.random.Generator:
    """Independent stream for update ``k``; makes training restartable at any step."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))


def batch_loss_and_grad(params: DuParams, batch: Batch, fixed: DuFixed, rng: np.random.Generator):
    init = random_init(batch.X.shape, rng)
    out, trace = du_forward(batch.channel.H, batch.Y, params, fixed, init)
    loss, dl = mse_loss_grad(out, batch.X)
    return float(loss), du_backward(trace, dl)


def train(cfg: TrainConfig, params: DuParams = None) -> Tuple[DuParams, List[float]]:
    """Run ``cfg.num_updates`` Adam steps from the standard initialization."""
    params = params.copy() if params is not None else DuParams.initial(cfg.T)
    if params.T != cfg.T:
        raise ValueError(f"initial params have T={params.T}, config has T={cfg.T}")
    state = AdamState.zeros(params.T + 2)
    history: List[float] = []
    for k in range(cfg.num_updates):
        rng = update_rng(cfg.seed, k)
        batch = make_batch(cfg, rng)
        loss, grads = batch_loss_and_grad(params, batch, cfg.fixed, rng)
        g = grads.as_vector()
        if not (math.isfinite(loss) and np.all(np.isfinite(g))):
            raise FloatingPointError(
                f"non-finite loss or gradient at update {k}: loss={loss}, snr={batch.snr_db:.2f} dB, "
                f"deltas={params.deltas.tolist()}, eta={float(params.eta)}, lambda={float(params.lam)}")
        state, params = adam_step(state, params, grads, cfg.learning_rate)
        history.append(loss)
        if (k + 1) % 100 == 0:
            log.info("update %d/%d loss %.6f", k + 1, cfg.num_updates, loss)
    return params, history


def heldout_loss(params: DuParams, cfg: TrainConfig, seed: int, num_batches: int = 1) -> float:
    """Mean training loss over fresh batches drawn from a separate seed."""
    losses = []
    for k in range(num_batches):
        rng = update_rng(seed, k)
        batch = make_batch(cfg, rng)
        init = random_init(batch.X.shape, rng)
        out, _ = du_forward(batch.channel.H, batch.Y, params, cfg.fixed, init)
        losses.append(mse_loss(out, batch.X))
    return float(np.mean(losses))


class ParamsFileError(ValueError):
    pass


def save_params(params: DuParams, path, fixed: DuFixed = None, training: dict = None) -> None:
    """Write the JSON parameter file; floats keep their exact binary value."""
    fixed = fixed or DuFixed()
    doc = {
        "format_version": FORMAT_VERSION,
        "T": params.T,
        "deltas": [float(d) for d in params.deltas],
        "eta": float(params.eta),
        "lambda": float(params.lam),
        "fixed": {"Lambda": fixed.Lambda, "A": fixed.A, "B": fixed.B},
        "training": training or {},
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def training_metadata(cfg: TrainConfig, history: Sequence[float]) -> dict:
    return {
        "seed": cfg.seed,
        "dims": asdict(cfg.dims),
        "snr_range_db": list(cfg.snr_range_db),
        "num_updates": cfg.num_updates,
        "batch_size": cfg.batch_size,
        "final_loss": float(history[-1]) if len(history) else None,
    }


def load_params(path) -> Tuple[DuParams, DuFixed, dict]:
    """Read a parameter file written by :func:`save_params`."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParamsFileError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ParamsFileError(f"{path}: top level must be an object")
    missing = [k for k in ("format_version", "T", "deltas", "eta", "lambda", "fixed") if k not in doc]
    if missing:
        raise ParamsFileError(f"{path}: missing field(s) {', '.join(missing)}")
    if doc["format_version"] != FORMAT_VERSION:
        raise ParamsFileError(f"{path}: format_version {doc['format_version']} is not supported "
                              f"(expected {FORMAT_VERSION})")
    deltas = doc["deltas"]
    if not isinstance(deltas, list) or len(deltas) != doc["T"]:
        raise ParamsFileError(f"{path}: deltas must be a list of length T={doc['T']}")
    fx = doc["fixed"]
    try:
        fixed = DuFixed(Lambda=float(fx["Lambda"]), A=float(fx["A"]), B=float(fx["B"]))
        params = DuParams(deltas=np.array(deltas, dtype=np.float64), eta=float(doc["eta"]), lam=float(doc["lambda"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParamsFileError(f"{path}: invalid parameter values ({exc})") from exc
    return params, fixed, doc.get("training", {})
