"""Hard-decision MIMO detectors and bit error ratio.

The functional core is :func:`detect_batch`, which takes explicit initial
momenta so callers control every random draw. :func:`detect` wraps it for a
single :class:`~sbmimo.channel.MimoSample`, and the estimator classes give a
scikit-learn style interface (``fit`` / ``predict`` / ``decision_function``).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .channel import MimoSample
from .dusb import UNCOUPLED_C0, DuFixed, DuParams, du_forward
from .qubo import GConfig, LmConfig, build_g, build_lm, build_ml, compute_c0, lmmse_solution
from .sb import INIT_MOMENTUM_SCALE, SbConfig, SbState, hard_sign, sb_evolve


class DetectorKind(str, Enum):
    MMSE = "mmse"
    ML_SB = "ml-sb"
    G_SB = "g-sb"
    LM_SB = "lm-sb"
    DU_LM_SB = "du-lm-sb"


SB_KINDS = (DetectorKind.ML_SB, DetectorKind.G_SB, DetectorKind.LM_SB)


@dataclass(frozen=True)
class DetectorSpec:
    """What to run. ``params`` (or ``params_file``) is required for DU-LM-SB.

    ``mmse_reg`` overrides the MMSE regularizer, which defaults to the
    sample's noise variance.
    """

    kind: DetectorKind
    T: int = 50
    lam: float = 1.0
    lambda_g: float = 0.5
    params_file: Optional[str] = None
    params: Optional[DuParams] = None
    fixed: DuFixed = DuFixed()
    mmse_reg: Optional[float] = None
    label: Optional[str] = None

    def __post_init__(self):
        kind = DetectorKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind in SB_KINDS and self.T < 1:
            raise ValueError(f"T must be >= 1 for {kind.value}, got {self.T}")
        if kind is DetectorKind.LM_SB and not self.lam > 0:
            raise ValueError(f"lambda must be > 0, got {self.lam}")
        if kind is DetectorKind.G_SB and self.lambda_g < 0:
            raise ValueError(f"lambda_g must be >= 0, got {self.lambda_g}")
        if kind is DetectorKind.DU_LM_SB and self.params is None:
            if self.params_file is None:
                raise ValueError("du-lm-sb needs a trained parameter file")
            from .trainer import load_params
            params, fixed, _ = load_params(self.params_file)
            object.__setattr__(self, "params", params)
            object.__setattr__(self, "fixed", fixed)
        if kind is DetectorKind.DU_LM_SB:
            object.__setattr__(self, "T", self.params.T)
        if self.mmse_reg is not None and self.mmse_reg < 0:
            raise ValueError(f"mmse_reg must be >= 0, got {self.mmse_reg}")

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.kind in SB_KINDS or self.kind is DetectorKind.DU_LM_SB:
            return f"{self.kind.value}:{self.T}"
        return self.kind.value

    @property
    def uses_rng(self) -> bool:
        return self.kind is not DetectorKind.MMSE


def parse_detector(text: str, *, T: Optional[int] = None, lam: float = 1.0, lambda_g: float = 0.5,
                   params_file: Optional[str] = None) -> DetectorSpec:
    """``name[:T]``, for example ``lm-sb:10``. ``T`` defaults to 50 for SB kinds."""
    name, _, t_text = text.partition(":")
    try:
        kind = DetectorKind(name.strip().lower())
    except ValueError:
        valid = ", ".join(k.value for k in DetectorKind)
        raise ValueError(f"unknown detector {name!r}; expected one of {valid}") from None
    if t_text:
        if kind not in SB_KINDS:
            raise ValueError(f"{kind.value} does not take an iteration count")
        try:
            T = int(t_text)
        except ValueError:
            raise ValueError(f"bad iteration count in {text!r}") from None
    return DetectorSpec(kind=kind, T=T if T is not None else 50, lam=lam, lambda_g=lambda_g,
                        params_file=params_file if kind is DetectorKind.DU_LM_SB else None)


def hard_decision(x) -> np.ndarray:
    """Elementwise sign with ``sign(0) = +1``."""
    return hard_sign(x)


def ber(decisions, truth) -> float:
    """Fraction of differing components."""
    d = np.asarray(decisions)
    t = np.asarray(truth)
    if d.shape != t.shape:
        raise ValueError(f"shape mismatch: {d.shape} vs {t.shape}")
    if d.size == 0:
        raise ValueError("empty input")
    return float(np.count_nonzero(d != t) / d.size)


def bit_errors(decisions, truth) -> np.ndarray:
    """Per-vector error counts along the last axis."""
    return np.count_nonzero(np.asarray(decisions) != np.asarray(truth), axis=-1)


def draw_momenta(rng: np.random.Generator, n: int) -> np.ndarray:
    """The one draw an SB-type detector makes per detection."""
    return rng.uniform(-INIT_MOMENTUM_SCALE, INIT_MOMENTUM_SCALE, size=n)


def soft_output(spec: DetectorSpec, H, Y, sigma_w2, init_y=None) -> np.ndarray:
    """Continuous detector output before thresholding.

    ``H`` is ``(M, N)`` or ``(B, M, N)``; ``Y`` is ``(M,)`` or ``(B, M)``;
    ``init_y`` holds the initial momenta with the shape of the output.
    """
    H = np.asarray(H, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape[-1] != H.shape[-2]:
        raise ValueError(f"received length {Y.shape[-1]} != channel output dimension {H.shape[-2]}")
    if spec.kind is DetectorKind.MMSE:
        reg = sigma_w2 if spec.mmse_reg is None else spec.mmse_reg
        return lmmse_solution(H, Y, reg)
    if init_y is None:
        raise ValueError(f"{spec.kind.value} needs initial momenta")
    init = SbState(x=np.zeros_like(init_y), y=np.asarray(init_y, dtype=np.float64))
    if spec.kind is DetectorKind.DU_LM_SB:
        out, _ = du_forward(H, Y, spec.params, spec.fixed, init)
        return out
    if spec.kind is DetectorKind.ML_SB:
        q = build_ml(H, Y)
    elif spec.kind is DetectorKind.G_SB:
        q = build_g(H, Y, GConfig(lambda_g=spec.lambda_g, sigma_w2=sigma_w2))
    else:
        q = build_lm(H, Y, LmConfig(spec.lam))
    return sb_evolve(q, SbConfig(T=spec.T), init, c0=compute_c0(q, uncoupled=UNCOUPLED_C0)).x


def detect_batch(spec: DetectorSpec, H, Y, sigma_w2, init_y=None) -> np.ndarray:
    return hard_decision(soft_output(spec, H, Y, sigma_w2, init_y))


def detect(spec: DetectorSpec, sample: MimoSample, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Hard decision for one sample. SB-type detectors draw their momenta from ``rng``."""
    if spec.uses_rng and rng is None:
        raise ValueError(f"{spec.kind.value} needs a random generator")
    init_y = draw_momenta(rng, sample.channel.N) if spec.uses_rng else None
    return detect_batch(spec, sample.channel.H, sample.y, sample.sigma_w2, init_y)


class _DetectorEstimator(BaseEstimator):
    """Shared ``predict`` plumbing; subclasses provide :meth:`_spec`.

    ``Y`` is ``(n_samples, M)`` received vectors and ``H`` either one
    ``(M, N)`` channel or one per sample ``(n_samples, M, N)``.
    """

    def fit(self, Y=None, X=None, H=None):
        self.spec_ = self._spec()
        return self

    def _validate(self, Y, H):
        Y = np.asarray(Y, dtype=np.float64)
        H = np.asarray(H, dtype=np.float64)
        if Y.ndim != 2:
            raise ValueError(f"Y must be 2-D (n_samples, M), got shape {Y.shape}")
        if H.ndim not in (2, 3):
            raise ValueError(f"H must be (M, N) or (n_samples, M, N), got shape {H.shape}")
        if H.ndim == 3 and H.shape[0] != Y.shape[0]:
            raise ValueError(f"{H.shape[0]} channels for {Y.shape[0]} samples")
        if H.shape[-2] != Y.shape[1]:
            raise ValueError(f"Y has {Y.shape[1]} columns, channel has {H.shape[-2]} outputs")
        if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(H))):
            raise ValueError("inputs contain NaN or infinity")
        return Y, H

    def decision_function(self, Y, H, noise_var=1.0):
        check_is_fitted(self, "spec_")
        Y, H = self._validate(Y, H)
        init_y = None
        if self.spec_.uses_rng:
            rng = np.random.default_rng(getattr(self, "random_state", None))
            init_y = np.stack([draw_momenta(rng, H.shape[-1]) for _ in range(Y.shape[0])])
        return soft_output(self.spec_, H, Y, noise_var, init_y)

    def predict(self, Y, H, noise_var=1.0):
        return hard_decision(self.decision_function(Y, H, noise_var))

    def score(self, Y, X, H, noise_var=1.0):
        """One minus the bit error ratio."""
        return 1.0 - ber(self.predict(Y, H, noise_var), np.asarray(X))


class MMSEDetector(_DetectorEstimator):
    """Linear MMSE detector; ``reg=None`` uses the noise variance passed to ``predict``."""

    def __init__(self, reg=None):
        self.reg = reg

    def _spec(self):
        return DetectorSpec(kind=DetectorKind.MMSE, mmse_reg=self.reg)


class SBDetector(_DetectorEstimator):
    def __init__(self, objective="lm", T=50, lam=1.0, lambda_g=0.5, random_state=None):
        self.objective = objective
        self.T = T
        self.lam = lam
        self.lambda_g = lambda_g
        self.random_state = random_state

    def _spec(self):
        kinds = {"ml": DetectorKind.ML_SB, "g": DetectorKind.G_SB, "lm": DetectorKind.LM_SB}
        if self.objective not in kinds:
            raise ValueError(f"objective must be one of {sorted(kinds)}, got {self.objective!r}")
        return DetectorSpec(kind=kinds[self.objective], T=self.T, lam=self.lam, lambda_g=self.lambda_g)


class DULMSBDetector(_DetectorEstimator):
    """Unfolded LM-SB detector.

    ``fit`` loads ``params_file`` when given, otherwise trains with
    ``train_config`` (a :class:`~sbmimo.trainer.TrainConfig`) on synthetic data.
    """

    def __init__(self, params_file=None, train_config=None, random_state=None):
        self.params_file = params_file
        self.train_config = train_config
        self.random_state = random_state

    def fit(self, Y=None, X=None, H=None):
        from .trainer import TrainConfig, load_params, train
        if self.params_file is not None:
            self.params_, self.fixed_, _ = load_params(self.params_file)
            self.loss_history_ = []
        else:
            cfg = self.train_config if self.train_config is not None else TrainConfig()
            self.params_, self.loss_history_ = train(cfg)
            self.fixed_ = cfg.fixed
        self.spec_ = self._spec()
        return self

    def _spec(self):
        return DetectorSpec(kind=DetectorKind.DU_LM_SB, params=self.params_, fixed=self.fixed_)
