"""Simulated-bifurcation MIMO detection with a Levenberg-Marquardt objective and deep unfolding."""

from .channel import ComplexDims, MimoSample, RealChannel, realize_channel, sample_qpsk, transmit
from .detectors import DetectorKind, DetectorSpec, DULMSBDetector, MMSEDetector, SBDetector, ber, detect
from .dusb import DuFixed, DuParams, du_backward, du_forward, grad_check
from .qubo import QuboInstance, build_g, build_lm, build_ml, compute_c0, energy, is_local_min
from .sb import SbConfig, sb_run
from .trainer import TrainConfig, load_params, save_params, train

__all__ = [
    "ComplexDims", "MimoSample", "RealChannel", "realize_channel", "sample_qpsk", "transmit",
    "DetectorKind", "DetectorSpec", "DULMSBDetector", "MMSEDetector", "SBDetector", "ber", "detect",
    "DuFixed", "DuParams", "du_backward", "du_forward", "grad_check",
    "QuboInstance", "build_g", "build_lm", "build_ml", "compute_c0", "energy", "is_local_min",
    "SbConfig", "sb_run",
    "TrainConfig", "load_params", "save_params", "train",
]
__version__ = "0.1.0"
