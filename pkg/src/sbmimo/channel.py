"""Rayleigh-fading MIMO channel in its real-valued embedding.

A complex system ``y~ = H~ x~ + w~`` with ``n_t`` transmit and ``n_r`` receive
antennas is carried as the real system ``y = H x + w`` of size
``M x N = 2 n_r x 2 n_t`` where::

    H = [[Re H~, -Im H~],
         [Im H~,  Re H~]]

QPSK symbols become independent +-1 entries of ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ComplexDims:
    n_t: int
    n_r: int

    def __post_init__(self):
        if int(self.n_t) < 1 or int(self.n_r) < 1:
            raise ValueError(f"antenna counts must be >= 1, got {self.n_t}x{self.n_r}")

    @property
    def N(self) -> int:
        return 2 * self.n_t

    @property
    def M(self) -> int:
        return 2 * self.n_r


@dataclass(frozen=True)
class RealChannel:
    """Real ``M x N`` channel matrix with the complex block structure."""

    H: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.H, dtype=np.float64)
        if H.ndim != 2:
            raise ValueError(f"channel matrix must be 2-D, got shape {H.shape}")
        object.__setattr__(self, "H", H)

    @property
    def M(self) -> int:
        return self.H.shape[0]

    @property
    def N(self) -> int:
        return self.H.shape[1]

    @classmethod
    def from_complex(cls, Hc) -> "RealChannel":
        return cls(real_embedding_matrix(Hc))

    def has_block_structure(self) -> bool:
        """Exact check of the two block identities of the embedding."""
        M, N = self.H.shape
        if M % 2 or N % 2:
            return False
        m, n = M // 2, N // 2
        tl, tr = self.H[:m, :n], self.H[:m, n:]
        bl, br = self.H[m:, :n], self.H[m:, n:]
        return bool(np.array_equal(tl, br) and np.array_equal(tr, -bl))


@dataclass(frozen=True)
class MimoSample:
    x_true: np.ndarray
    y: np.ndarray
    channel: RealChannel
    sigma_w2: float


def real_embedding_matrix(Hc) -> np.ndarray:
    """Map a complex matrix (or a stack of them) to its real block form."""
    Hc = np.asarray(Hc, dtype=np.complex128)
    top = np.concatenate([Hc.real, -Hc.imag], axis=-1)
    bottom = np.concatenate([Hc.imag, Hc.real], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def real_embedding_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.complex128)
    return np.concatenate([v.real, v.imag], axis=-1)


def realize_channel(dims: ComplexDims, rng: np.random.Generator) -> RealChannel:
    """Draw i.i.d. CN(0, 1) entries and return the real embedding."""
    return RealChannel(real_embedding_matrix(_complex_gaussian(rng, (dims.n_r, dims.n_t))))


def _complex_gaussian(rng, shape) -> np.ndarray:
    parts = rng.standard_normal((2, *shape)) * np.sqrt(0.5)
    return parts[0] + 1j * parts[1]


def sample_qpsk(n: int, rng: np.random.Generator) -> np.ndarray:
    """Equiprobable +-1 vector of length ``n``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return 2.0 * rng.integers(0, 2, size=n).astype(np.float64) - 1.0


def noise_variance_from_snr(snr_db: float, n_scale: int) -> float:
    """Complex noise variance for ``SNR = 10 log10(n_scale / sigma_w2)``."""
    if n_scale < 1:
        raise ValueError(f"n_scale must be >= 1, got {n_scale}")
    return n_scale * 10.0 ** (-snr_db / 10.0)


def transmit(channel: RealChannel, x, sigma_w2: float, rng: np.random.Generator) -> MimoSample:
    """Send ``x`` through ``channel``; each real noise component has variance ``sigma_w2 / 2``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (channel.N,):
        raise ValueError(f"x must have shape ({channel.N},), got {x.shape}")
    if sigma_w2 < 0:
        raise ValueError(f"sigma_w2 must be >= 0, got {sigma_w2}")
    w = rng.standard_normal(channel.M) * np.sqrt(sigma_w2 / 2.0)
    return MimoSample(x_true=x, y=channel.H @ x + w, channel=channel, sigma_w2=float(sigma_w2))
