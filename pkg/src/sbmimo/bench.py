"""BER-versus-SNR Monte Carlo sweeps and the three-variable toy table.

Each trial draws, from its own generator, a channel, a symbol vector, the
noise and (for SB-type detectors) the initial momenta, in that order. The
generator for trial ``t`` of detector ``d`` at SNR index ``s`` is seeded
with ``SeedSequence(seed, spawn_key=(s, d, t))``, so any trial can be
reproduced on its own and results do not depend on how work is split up.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .channel import ComplexDims, noise_variance_from_snr, realize_channel
from .detectors import DetectorSpec, bit_errors, detect_batch, draw_momenta
from .qubo import GConfig, LmConfig, Objective, all_spins, build_lm, flip_changes, objective, single_flip_minima

CSV_HEADER = ("snr_db", "detector", "trials", "total_bits", "bit_errors", "ber", "seed")
MIN_ERRORS = 100
CHUNK = 512


@dataclass(frozen=True)
class SweepConfig:
    dims: ComplexDims
    snr_db: Tuple[float, ...]
    detectors: Tuple[DetectorSpec, ...]
    min_bits: int = 100_000
    max_trials: int = 100_000
    seed: int = 0
    out: Optional[str] = None
    min_errors: int = MIN_ERRORS
    channel: str = "rayleigh"
    n_scale: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        object.__setattr__(self, "detectors", tuple(self.detectors))
        if not self.snr_db:
            raise ValueError("empty SNR grid")
        if not self.detectors:
            raise ValueError("no detectors given")
        if self.min_bits < 1 or self.max_trials < 1 or self.min_errors < 0:
            raise ValueError("min_bits and max_trials must be >= 1 and min_errors >= 0")
        if self.channel not in ("rayleigh", "identity"):
            raise ValueError(f"channel must be 'rayleigh' or 'identity', got {self.channel!r}")
        if self.channel == "identity" and self.dims.n_t != self.dims.n_r:
            raise ValueError("identity channel needs n_t == n_r")


@dataclass(frozen=True)
class BerRecord:
    snr_db: float
    detector: str
    trials: int
    total_bits: int
    bit_errors: int
    seed: int

    @property
    def ber(self) -> float:
        return self.bit_errors / self.total_bits

    def row(self) -> Tuple[str, ...]:
        return (repr(self.snr_db), self.detector, str(self.trials), str(self.total_bits),
                str(self.bit_errors), repr(self.ber), str(self.seed))


def snr_grid(lo: float, hi: float, step: float) -> Tuple[float, ...]:
    """Inclusive grid ``lo, lo + step, ..., <= hi``."""
    if step <= 0:
        raise ValueError(f"step must be > 0, got {step}")
    if lo > hi:
        raise ValueError(f"min {lo} exceeds max {hi}")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return tuple(round(lo + i * step, 10) for i in range(count))


def parse_snr(text: str) -> Tuple[float, ...]:
    """``min:max:step`` or a single value."""
    parts = text.split(":")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise ValueError(f"bad SNR spec {text!r}; expected min:max:step") from None
    if len(values) == 1:
        return (values[0],)
    if len(values) != 3:
        raise ValueError(f"bad SNR spec {text!r}; expected min:max:step")
    return snr_grid(*values)


def trial_rng(seed: int, snr_idx: int, det_idx: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(snr_idx, det_idx, trial)))


def _draw_trials(cfg: SweepConfig, spec: DetectorSpec, sigma_w2: float, snr_idx: int, det_idx: int,
                 start: int, stop: int):
    dims = cfg.dims
    n = stop - start
    H = np.empty((n, dims.M, dims.N))
    X = np.empty((n, dims.N))
    Y = np.empty((n, dims.M))
    init_y = np.empty((n, dims.N)) if spec.uses_rng else None
    eye = np.eye(dims.M)
    for i in range(n):
        rng = trial_rng(cfg.seed, snr_idx, det_idx, start + i)
        H[i] = eye if cfg.channel == "identity" else realize_channel(dims, rng).H
        X[i] = 2.0 * rng.integers(0, 2, size=dims.N) - 1.0
        Y[i] = H[i] @ X[i] + rng.standard_normal(dims.M) * math.sqrt(sigma_w2 / 2.0)
        if init_y is not None:
            init_y[i] = draw_momenta(rng, dims.N)
    return H, X, Y, init_y


def run_cell(cfg: SweepConfig, snr_idx: int, det_idx: int) -> BerRecord:
    """Simulate one (SNR, detector) point under the stopping rule.

    Trials are simulated in chunks but the rule is applied trial by trial,
    so the chunk size never changes the result.
    """
    spec = cfg.detectors[det_idx]
    snr = cfg.snr_db[snr_idx]
    sigma_w2 = noise_variance_from_snr(snr, cfg.n_scale or cfg.dims.N)
    N = cfg.dims.N
    trials = errors = 0
    while trials < cfg.max_trials:
        stop = min(trials + CHUNK, cfg.max_trials)
        H, X, Y, init_y = _draw_trials(cfg, spec, sigma_w2, snr_idx, det_idx, trials, stop)
        per_trial = bit_errors(detect_batch(spec, H, Y, sigma_w2, init_y), X)
        cum_errors = errors + np.cumsum(per_trial)
        cum_bits = N * np.arange(trials + 1, stop + 1)
        done = np.nonzero((cum_bits >= cfg.min_bits) & (cum_errors >= cfg.min_errors))[0]
        if done.size:
            k = done[0]
            return BerRecord(snr, spec.name, trials + k + 1, int(cum_bits[k]), int(cum_errors[k]), cfg.seed)
        trials, errors = stop, int(cum_errors[-1])
    return BerRecord(snr, spec.name, trials, trials * N, errors, cfg.seed)


def _run_cell_star(args):
    return run_cell(*args)


def run_sweep(cfg: SweepConfig, workers: int = 1) -> List[BerRecord]:
    """All (SNR, detector) points in SNR-major order; writes ``cfg.out`` when set."""
    jobs = [(cfg, s, d) for s in range(len(cfg.snr_db)) for d in range(len(cfg.detectors))]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_cell_star, jobs))
    else:
        records = [run_cell(*job) for job in jobs]
    if cfg.out:
        Path(cfg.out).write_text(records_to_csv(records))
    return records


def records_to_csv(records: Sequence[BerRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in records:
        writer.writerow(r.row())
    return buf.getvalue()


# The real-valued 3x3 toy system and the printed table of objective values
TOY_H = np.array([[0.8, -0.6, -0.6],
                  [-0.6, 1.5, -0.5],
                  [-0.6, -0.5, 1.2]])
TOY_Y = np.array([-0.8, -0.3, -0.7])
TOY_SPINS = ((1, 1, 1), (-1, 1, 1), (1, -1, 1), (1, 1, -1), (-1, -1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, -1))
PRINTED = {
    "f_ML": (0.65, 4.53, 5.55, 4.01, 5.10, 4.95, 4.20, 0.91),
    "f_G": (3.91, 11.9, 14.2, 10.6, 13.6, 13.0, 11.4, 5.23),
    "f_LM": (-61.8, -8.90, -27.7, -22.2, 24.2, 11.0, 29.5, 61.8),
}
TABLE_LAMBDA_G = 1.0
TABLE_LAMBDA = 1.0
# regularizer of the LMMSE estimate inside f_G for the toy system
TABLE_G_SIGMA_W2 = 1.0
LM_SCAN = (1.0, 0.1, 0.01, 1e-3, 1e-6)


@dataclass
class Table1:
    spins: Tuple[Tuple[int, ...], ...]
    computed: Dict[str, np.ndarray]
    printed: Dict[str, Tuple[float, ...]]
    minima: Dict[str, List[Tuple[int, ...]]]
    lam: float
    lambda_g: float
    lm_scan: Dict[float, List[Tuple[int, ...]]] = field(default_factory=dict)

    def deviation(self, column: str) -> np.ndarray:
        return np.abs(self.computed[column] - np.asarray(self.printed[column]))


def toy_objectives(lam: float = TABLE_LAMBDA, lambda_g: float = TABLE_LAMBDA_G,
                   sigma_w2: float = TABLE_G_SIGMA_W2) -> Dict[str, np.ndarray]:
    X = np.array(TOY_SPINS, dtype=np.float64)
    return {
        "f_ML": objective(Objective.ML, TOY_H, TOY_Y, X),
        "f_G": objective(Objective.G, TOY_H, TOY_Y, X, GConfig(lambda_g=lambda_g, sigma_w2=sigma_w2)),
        "f_LM": objective(Objective.LM, TOY_H, TOY_Y, X, LmConfig(lam)),
    }


def toy_local_minima(column: str, lam: float = TABLE_LAMBDA, lambda_g: float = TABLE_LAMBDA_G):
    """Single-flip local minima of one toy objective over the whole cube."""
    spins = [tuple(int(v) for v in s) for s in all_spins(3)]
    X = np.array(spins, dtype=np.float64)
    kind = {"f_ML": Objective.ML, "f_G": Objective.G, "f_LM": Objective.LM}[column]
    config = {"f_ML": None, "f_G": GConfig(lambda_g=lambda_g, sigma_w2=TABLE_G_SIGMA_W2),
              "f_LM": LmConfig(lam)}[column]
    values = objective(kind, TOY_H, TOY_Y, X, config)
    return sorted(single_flip_minima(dict(zip(spins, values.tolist()))), reverse=True)


def lm_local_minima_qubo(lam: float) -> List[Tuple[int, ...]]:
    """Same question answered through the LM QUBO's flip energies."""
    q = build_lm(TOY_H, TOY_Y, LmConfig(lam))
    spins = all_spins(3)
    ok = np.all(flip_changes(q, spins) >= 0, axis=-1)
    return sorted((tuple(int(v) for v in s) for s in spins[ok]), reverse=True)


def run_table1(lam: float = TABLE_LAMBDA, lambda_g: float = TABLE_LAMBDA_G) -> Table1:
    return Table1(
        spins=TOY_SPINS,
        computed=toy_objectives(lam, lambda_g),
        printed=PRINTED,
        minima={c: toy_local_minima(c, lam, lambda_g) for c in PRINTED},
        lam=lam,
        lambda_g=lambda_g,
        lm_scan={lm: toy_local_minima("f_LM", lm, lambda_g) for lm in LM_SCAN},
    )


def _spin_label(s) -> str:
    return "[" + ",".join(f"{v:+d}" for v in s) + "]"


def format_table1(t: Table1) -> str:
    cols = list(PRINTED)
    head = f"{'x':<12}" + "".join(f"{c + ' calc':>12}{c + ' table':>12}{'|dev|':>9}" for c in cols)
    lines = [f"toy objectives, lambda_g={t.lambda_g:g}, lambda={t.lam:g}", head, "-" * len(head)]
    devs = {c: t.deviation(c) for c in cols}
    for i, s in enumerate(t.spins):
        cells = "".join(f"{t.computed[c][i]:>12.4f}{t.printed[c][i]:>12.4g}{devs[c][i]:>9.3f}" for c in cols)
        lines.append(f"{_spin_label(s):<12}{cells}")
    lines.append("")
    for c in cols:
        mins = ", ".join(_spin_label(m) for m in t.minima[c]) or "none"
        lines.append(f"{c} single-flip local minima: {mins}")
    for lm, ms in t.lm_scan.items():
        lines.append(f"f_LM local minima at lambda={lm:g}: " + ", ".join(_spin_label(m) for m in ms))
    return "\n".join(lines) + "\n"
