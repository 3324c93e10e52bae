"""Fixed-parameter ISTA / IHTA reconstructions.

These run the same layer as the encoder with ``Q = I - alpha F^H F`` and
``tau = alpha * lam``; IHTA uses the exact hard threshold (``c = 0``).
"""

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .encoder import EncoderParams, Penalty, compute_bias, layer_step
from .geometry import spectral_norm_sq
from .scenes import Measurement

log = logging.getLogger(__name__)

__all__ = ["BaselineConfig", "BaselineResult", "run_baseline", "objective"]


@dataclass
class BaselineConfig:
    alpha: float
    lam: float
    penalty: Penalty = Penalty.L1
    iterations: int = 100
    check_step: bool = True

    def __post_init__(self):
        self.penalty = Penalty.parse(self.penalty)
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")


@dataclass(eq=False)
class BaselineResult:
    rho: np.ndarray
    trace: list  # (iteration, data_term, penalty_term, objective)

    CSV_FIELDS = ("iteration", "data_term", "penalty_term", "objective")


def objective(F, rho, d, lam, penalty):
    """``0.5 ||F rho - d||^2 + lam * Phi(rho)``, returned as its three parts."""
    r = F.entries @ rho - d
    data_term = 0.5 * float(np.vdot(r, r).real)
    if Penalty.parse(penalty) is Penalty.L1:
        pen = float(np.sum(np.abs(rho)))
    else:
        pen = float(np.count_nonzero(rho))
    return data_term, lam * pen, data_term + lam * pen


def run_baseline(F, d, config):
    """Iterate the proximal layer ``config.iterations`` times from zero.

    The returned image is the raw final iterate (not sup-normalised).
    """
    data = d.data if isinstance(d, Measurement) else np.asarray(d, dtype=np.complex128)
    if data.shape != (F.N,):
        raise ValueError(f"measurement has length {data.size}, model expects {F.N}")
    if config.check_step:
        bound = spectral_norm_sq(F, iterations=50)
        if bound > 0 and config.alpha * bound > 1.0 + 1e-9:
            warnings.warn(f"alpha={config.alpha:.3g} exceeds 1/||F||^2={1 / bound:.3g}; "
                          "descent is not guaranteed", RuntimeWarning, stacklevel=2)
    A = F.entries
    Q = np.eye(F.M, dtype=np.complex128) - config.alpha * (A.conj().T @ A)
    c = 0.0 if config.penalty is Penalty.L0 else 1e-5
    params = EncoderParams(F, Q, config.alpha * config.lam, config.alpha,
                           config.penalty, config.iterations, c, config.lam)
    bias = compute_bias(params, data)
    rho = np.zeros(F.M)
    trace = []
    for it in range(1, config.iterations + 1):
        rho, _, _ = layer_step(params, rho, bias)
        trace.append((it, *objective(F, rho, data, config.lam, config.penalty)))
    return BaselineResult(rho, trace)
