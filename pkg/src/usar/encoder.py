"""Recurrent proximal-gradient encoder.

Each layer forms ``z = Q rho + b`` with the per-sample bias
``b = alpha F^H d`` and returns the thresholded magnitude of ``z``. The final
representation is sup-normalised.
"""

import enum
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .geometry import ForwardModel
from .scenes import Measurement

__all__ = [
    "Penalty",
    "EncoderParams",
    "LayerCache",
    "init_params",
    "soft_threshold",
    "hard_threshold",
    "layer_step",
    "forward_propagate",
]

DEFAULT_C = 1e-5


class Penalty(str, enum.Enum):
    L1 = "l1"
    L0 = "l0"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"penalty must be 'l1' or 'l0', got {value!r}") from None


@dataclass(eq=False)
class EncoderParams:
    """Trainable network state.

    ``F`` is shared by encoder and decoder. ``tau`` is the learned threshold
    parameter: the activation level is ``tau`` for L1 and ``sqrt(tau)`` for
    L0. ``alpha`` is fixed. ``lam`` records the regulariser the threshold was
    initialised from and is carried only as metadata.
    """

    F: ForwardModel
    Q: np.ndarray
    tau: float
    alpha: float
    penalty: Penalty = Penalty.L1
    layers: int = 16
    c: float = DEFAULT_C
    lam: float = float("nan")

    def __post_init__(self):
        self.penalty = Penalty.parse(self.penalty)
        self.Q = np.ascontiguousarray(self.Q, dtype=np.complex128)
        self.tau = float(self.tau)
        self.alpha = float(self.alpha)
        self.layers = int(self.layers)
        if self.Q.shape != (self.F.M, self.F.M):
            raise ValueError(f"Q has shape {self.Q.shape}, expected {(self.F.M, self.F.M)}")
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not 0 <= self.c < 1:
            raise ValueError("c must lie in [0, 1)")
        if self.layers < 1:
            raise ValueError("layers must be >= 1")

    @property
    def level(self):
        return self.tau if self.penalty is Penalty.L1 else float(np.sqrt(self.tau))

    def copy(self):
        return EncoderParams(self.F.copy(), self.Q.copy(), self.tau, self.alpha,
                             self.penalty, self.layers, self.c, self.lam)


def init_params(F, alpha, lam, penalty=Penalty.L1, layers=16, c=DEFAULT_C):
    """Initialise ``Q = I - alpha F^H F`` and ``tau = alpha * lam`` from ``F``."""
    A = F.entries
    Q = np.eye(F.M, dtype=np.complex128) - alpha * (A.conj().T @ A)
    return EncoderParams(F, Q, alpha * lam, alpha, penalty, layers, c, lam)


@dataclass(eq=False)
class LayerCache:
    """Everything backpropagation reads from one forward pass.

    ``rho[k]`` is the representation after layer ``k`` (``rho[0] = 0``);
    ``z[k-1]``, ``magnitude[k-1]`` and ``active[k-1]`` belong to layer ``k``.
    """

    bias: np.ndarray
    rho: np.ndarray
    z: np.ndarray
    magnitude: np.ndarray
    active: np.ndarray
    sup: float
    argmax: int
    rho_star: np.ndarray
    degenerate: bool

    @property
    def layers(self):
        return self.z.shape[0]


def soft_threshold(z, tau):
    z = np.asarray(z)
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    return np.maximum(np.abs(z) - tau, 0.0)


def hard_threshold(z, tau, c=DEFAULT_C):
    """Hard threshold at level ``sqrt(tau)``; ``c = 0`` passes ``|z|`` through."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    mag = np.abs(np.asarray(z))
    level = np.sqrt(tau)
    step = (mag - level > 0).astype(np.float64)
    return np.maximum(mag - level, 0.0) + (1.0 - c) * level * step


def _as_data(d):
    return d.data if isinstance(d, Measurement) else np.asarray(d, dtype=np.complex128)


def compute_bias(params, d):
    return params.alpha * params.F.adjoint(_as_data(d))


def layer_step(params, rho_prev, bias):
    """One proximal layer; returns ``(rho_next, z, active)``."""
    rho_next, z, _, active = _layer(params, rho_prev, bias)
    return rho_next, z, active


def _layer(params, rho_prev, bias):
    rho_prev = np.ascontiguousarray(rho_prev, dtype=np.float64)
    bias = np.ascontiguousarray(bias, dtype=np.complex128)
    M = params.F.M
    if rho_prev.shape != (M,) or bias.shape != (M,):
        raise ValueError(f"layer inputs must have length {M}")
    return _kernels.layer(params.Q, rho_prev, bias, params.level,
                          params.penalty is Penalty.L0, params.c)


def forward_propagate(params, d):
    """Run all layers from ``rho^0 = 0`` and sup-normalise the output.

    Returns ``(rho_star, cache)``. An all-zero final layer yields
    ``rho_star = 0`` with ``cache.degenerate`` set.
    """
    data = _as_data(d)
    if data.shape != (params.F.N,):
        raise ValueError(f"measurement has length {data.size}, model expects {params.F.N}")
    M, L = params.F.M, params.layers
    bias = compute_bias(params, data)
    rho = np.zeros((L + 1, M))
    z = np.empty((L, M), dtype=np.complex128)
    mag = np.empty((L, M))
    active = np.empty((L, M), dtype=bool)
    for k in range(L):
        rho[k + 1], z[k], mag[k], active[k] = _layer(params, rho[k], bias)
    final = rho[L]
    argmax = int(np.argmax(final))
    sup = float(final[argmax])
    degenerate = sup == 0.0
    rho_star = np.zeros(M) if degenerate else final / sup
    cache = LayerCache(bias, rho, z, mag, active, sup, argmax, rho_star, degenerate)
    return rho_star, cache
