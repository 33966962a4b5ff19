"""Command-line entry point: ``sbmimo {sweep,train,gradcheck,table1}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

import numpy as np

from .bench import SweepConfig, format_table1, parse_snr, records_to_csv, run_sweep, run_table1
from .channel import ComplexDims
from .detectors import parse_detector
from .dusb import grad_check
from .trainer import TrainConfig, save_params, train, training_metadata


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _range(text):
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected low:high, got {text!r}") from None
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sbmimo", description="Simulated-bifurcation MIMO detection toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sweep", help="BER versus SNR Monte Carlo sweep, written as CSV")
    s.add_argument("--nt", type=_positive_int, default=16, help="transmit antennas (default 16)")
    s.add_argument("--nr", type=_positive_int, default=16, help="receive antennas (default 16)")
    s.add_argument("--snr", type=parse_snr, default=parse_snr("0:20:2"), metavar="MIN:MAX:STEP",
                   help="SNR grid in dB, inclusive (default 0:20:2)")
    s.add_argument("--detector", action="append", metavar="NAME[:T]",
                   help="mmse, ml-sb, g-sb, lm-sb or du-lm-sb; repeatable. An SB name may carry its "
                        "own iteration count, e.g. lm-sb:10 (default: mmse)")
    s.add_argument("--t-iters", type=_positive_int, default=50, help="SB iterations when no :T is given (default 50)")
    s.add_argument("--lambda", dest="lam", type=float, default=1.0, help="LM regularizer (default 1)")
    s.add_argument("--lambda-g", type=float, default=0.5, help="G-SB weight (default 0.5)")
    s.add_argument("--min-bits", type=_positive_int, default=100_000, help="minimum bits per point (default 1e5)")
    s.add_argument("--min-errors", type=int, default=100, help="minimum bit errors per point (default 100)")
    s.add_argument("--max-trials", type=_positive_int, default=100_000, help="trial cap per point (default 1e5)")
    s.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    s.add_argument("--params", help="trained parameter file for du-lm-sb")
    s.add_argument("--channel", choices=("rayleigh", "identity"), default="rayleigh",
                   help="channel model (default rayleigh)")
    s.add_argument("--n-scale", type=_positive_int, help="SNR normalization n (default 2*nt)")
    s.add_argument("--out", help="CSV output path (default: stdout)")
    s.add_argument("--workers", type=_positive_int, default=1, help="worker processes (default 1)")

    t = sub.add_parser("train", help="train the unfolded detector and save its parameters")
    t.add_argument("--nt", type=_positive_int, default=16)
    t.add_argument("--nr", type=_positive_int, default=16)
    t.add_argument("--t-iters", type=_positive_int, default=10, help="unfolded depth (default 10)")
    t.add_argument("--updates", type=int, default=1000, help="optimizer steps (default 1000)")
    t.add_argument("--batch-size", type=_positive_int, default=2000, help="mini-batch size (default 2000)")
    t.add_argument("--lr", type=float, default=2e-4, help="Adam learning rate (default 2e-4)")
    t.add_argument("--snr-range", type=_range, default=(0.0, 30.0), metavar="LOW:HIGH",
                   help="training SNR range in dB (default 0:30)")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--params-out", required=True, help="JSON file for the trained parameters")
    t.add_argument("--loss-out", help="optional CSV of the per-update training loss")

    g = sub.add_parser("gradcheck", help="compare analytic and finite-difference gradients")
    g.add_argument("--n", type=_positive_int, default=8, help="real dimension 2*nt (default 8)")
    g.add_argument("--t-iters", type=_positive_int, default=5, help="unfolded depth (default 5)")
    g.add_argument("--trials", type=_positive_int, default=10, help="random instances (default 10)")
    g.add_argument("--seed", type=int, default=0, help="first instance seed (default 0)")
    g.add_argument("--tol", type=float, default=1e-4, help="pass threshold on relative error (default 1e-4)")

    tb = sub.add_parser("table1", help="objective values of the three-variable toy system")
    tb.add_argument("--lambda", dest="lam", type=float, default=1.0, help="LM regularizer (default 1)")
    tb.add_argument("--lambda-g", type=float, default=1.0, help="G weight (default 1)")
    tb.add_argument("--json", action="store_true", help="print machine-readable JSON instead of a table")
    return p


def _cmd_sweep(a) -> int:
    names = a.detector or ["mmse"]
    specs = [parse_detector(n, T=a.t_iters, lam=a.lam, lambda_g=a.lambda_g, params_file=a.params) for n in names]
    cfg = SweepConfig(dims=ComplexDims(a.nt, a.nr), snr_db=a.snr, detectors=specs, min_bits=a.min_bits,
                      max_trials=a.max_trials, seed=a.seed, out=a.out, min_errors=a.min_errors,
                      channel=a.channel, n_scale=a.n_scale)
    records = run_sweep(cfg, workers=a.workers)
    if not a.out:
        sys.stdout.write(records_to_csv(records))
    return 0


def _cmd_train(a) -> int:
    cfg = TrainConfig(T=a.t_iters, batch_size=a.batch_size, num_updates=a.updates, learning_rate=a.lr,
                      dims=ComplexDims(a.nt, a.nr), snr_range_db=a.snr_range, seed=a.seed)
    params, history = train(cfg)
    save_params(params, a.params_out, cfg.fixed, training_metadata(cfg, history))
    if a.loss_out:
        with open(a.loss_out, "w") as f:
            f.write("update,loss\n")
            f.writelines(f"{k},{loss!r}\n" for k, loss in enumerate(history))
    print(f"saved {a.params_out}: eta={float(params.eta):.6g} lambda={float(params.lam):.6g} "
          f"deltas={np.array2string(params.deltas, precision=4)}")
    return 0


def _cmd_gradcheck(a) -> int:
    if a.n % 2:
        raise ValueError(f"--n must be even, got {a.n}")
    start = time.perf_counter()
    worst = 0.0
    for seed in range(a.seed, a.seed + a.trials):
        r = grad_check(seed=seed, n=a.n, T=a.t_iters)
        worst = max(worst, r["max"])
        print(f"seed {seed}: deltas {r['deltas']:.2e} eta {r['eta']:.2e} lambda {r['lambda']:.2e}")
    ok = worst <= a.tol
    print(f"max relative error {worst:.3e} over {a.trials} instances "
          f"({time.perf_counter() - start:.1f} s): {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def _cmd_table1(a) -> int:
    t = run_table1(lam=a.lam, lambda_g=a.lambda_g)
    if a.json:
        doc = {
            "lambda": t.lam,
            "lambda_g": t.lambda_g,
            "rows": [{"x": list(s), **{c: {"computed": float(t.computed[c][i]), "printed": t.printed[c][i],
                                           "abs_dev": float(t.deviation(c)[i])} for c in t.printed}}
                     for i, s in enumerate(t.spins)],
            "local_minima": {c: [list(m) for m in ms] for c, ms in t.minima.items()},
            "f_LM_local_minima_by_lambda": {repr(lm): [list(m) for m in ms] for lm, ms in t.lm_scan.items()},
        }
        print(json.dumps(doc, indent=2))
    else:
        sys.stdout.write(format_table1(t))
    return 0


COMMANDS = {"sweep": _cmd_sweep, "train": _cmd_train, "gradcheck": _cmd_gradcheck, "table1": _cmd_table1}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError, FloatingPointError) as exc:
        print(f"sbmimo {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
