"""Unsupervised auto-encoder training by projected batch gradient descent.

Gradients follow the closed-form per-layer expressions summed over layers
(truncated backpropagation through time): every layer is driven by the same
output-side vector ``g = J^T 2 Re{F^H (d* - d)}`` where ``J`` is the Jacobian
of the sup-normalisation. They are therefore not the exact derivative of the
loss; see :mod:`usar.oracle` for a finite-difference comparison.
"""

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .encoder import EncoderParams, Penalty, forward_propagate
from .geometry import ForwardModel
from .scenes import Measurement

log = logging.getLogger(__name__)

__all__ = [
    "NumericalError",
    "TrainConfig",
    "GradientBundle",
    "EpochRecord",
    "TrainResult",
    "OpCounter",
    "mismatch",
    "grad_rho_star",
    "grad_Q_layer",
    "grad_F_layer",
    "grad_tau_total",
    "sample_gradients",
    "accumulate_gradients",
    "project_F",
    "project_tau",
    "train",
]


class NumericalError(RuntimeError):
    """Non-finite value encountered during training."""


@dataclass
class TrainConfig:
    epochs: int = 7
    eta_Q: float = 1e-9
    eta_F: float = 1e-5
    eta_tau: float = 1e-14
    early_stop: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if min(self.eta_Q, self.eta_F, self.eta_tau) < 0:
            raise ValueError("learning rates must be nonnegative")

    def rates(self, epoch):
        """Learning rates decayed as ``eta_0 / (1 + epoch)``."""
        s = 1.0 + epoch
        return self.eta_Q / s, self.eta_F / s, self.eta_tau / s


@dataclass(eq=False)
class GradientBundle:
    grad_Q: np.ndarray
    grad_F: np.ndarray
    grad_tau: float
    losses: np.ndarray
    data_mismatch: np.ndarray
    used: int
    skipped: list = field(default_factory=list)


@dataclass
class EpochRecord:
    epoch: int
    avg_L_d: float
    eta_Q: float
    eta_F: float
    eta_tau: float
    tau: float
    wall_seconds: float

    CSV_FIELDS = ("epoch", "avg_L_d", "eta_Q", "eta_F", "eta_tau", "tau", "wall_seconds")

    def row(self):
        return [self.epoch, repr(self.avg_L_d), repr(self.eta_Q), repr(self.eta_F),
                repr(self.eta_tau), repr(self.tau), f"{self.wall_seconds:.6f}"]


@dataclass(eq=False)
class TrainResult:
    params: object
    history: list
    best_epoch: int
    stopped_early: bool


class OpCounter:
    """Tally of complex multiplications performed by the gradient path."""

    def __init__(self):
        self.counts = {}

    def add(self, key, n):
        self.counts[key] = self.counts.get(key, 0) + int(n)

    @property
    def total(self):
        return sum(self.counts.values())


def _data(d):
    return d.data if isinstance(d, Measurement) else np.asarray(d, dtype=np.complex128)


def mismatch(d_star, d):
    """Squared l2 distance between synthesized and measured data."""
    a, b = _data(d_star), _data(d)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    r = a - b
    return float(np.vdot(r, r).real)


def grad_rho_star(cache, F, d, d_star=None):
    """Output-side gradient through the sup-normalisation.

    Returns a zero vector for a degenerate (all-zero) forward pass.
    """
    M = cache.rho.shape[1]
    if cache.degenerate:
        return np.zeros(M)
    A = F.entries if isinstance(F, ForwardModel) else F
    if d_star is None:
        d_star = A @ cache.rho_star
    g = 2.0 * (A.conj().T @ (d_star - _data(d))).real
    # (g - e_argmax * (rho*)^T g) / a; rho*[argmax] is exactly 1, so M = 1 gives exactly 0
    out = g.copy()
    out[cache.argmax] -= cache.rho_star @ g
    return out / cache.sup


def _phase(z):
    mag = np.abs(z)
    return np.divide(z, mag, out=np.zeros_like(z), where=mag > 0)


def _layer_coefficients(cache, grad_rs, alpha):
    """Per-layer row factors for the Q and F gradients, zero off the active sets."""
    ph = _phase(cache.z)
    sel = cache.active * (grad_rs / 2.0)[None, :]
    return sel * ph, alpha * sel * ph.conj()


def grad_Q_layer(cache, k, grad_rs):
    """Layer ``k`` (1-based) contribution to the Q gradient."""
    if not 1 <= k <= cache.layers:
        raise IndexError(f"layer {k} outside [1, {cache.layers}]")
    coef = cache.active[k - 1] * (grad_rs / 2.0) * _phase(cache.z[k - 1])
    return np.outer(coef, cache.rho[k - 1])


def grad_F_layer(cache, k, grad_rs, d, alpha):
    """Layer ``k`` (1-based) contribution to the F gradient."""
    if not 1 <= k <= cache.layers:
        raise IndexError(f"layer {k} outside [1, {cache.layers}]")
    coef = alpha * cache.active[k - 1] * (grad_rs / 2.0) * _phase(cache.z[k - 1]).conj()
    return np.outer(_data(d), coef)


def grad_tau_total(cache, grad_rs, penalty, c=1e-5):
    total = -float(np.sum(cache.active * grad_rs[None, :]))
    if Penalty.parse(penalty) is Penalty.L0:
        total *= c
    return total


def sample_gradients(params, d, grad_Q, grad_F, counter=None, sample=0):
    """Add one sample's gradient to the buffers.

    Returns ``(loss, L_d, grad_tau, degenerate)``; buffers are untouched for a
    degenerate sample.
    """
    data = _data(d)
    A = params.F.entries
    N, M, L = params.F.N, params.F.M, params.layers
    rho_star, cache = forward_propagate(params, data)
    d_star = A @ rho_star
    resid = d_star - data
    loss = float(np.vdot(resid, resid).real)
    dnorm = float(np.vdot(data, data).real)
    L_d = loss / dnorm if dnorm > 0 else math.nan
    if counter is not None:
        counter.add("bias", N * M)
        counter.add("layers", L * M * M)
        counter.add("synthesize", N * M)
    if cache.degenerate:
        return loss, L_d, 0.0, True
    g = grad_rho_star(cache, params.F, data, d_star)
    if not np.all(np.isfinite(g)):
        raise NumericalError(f"non-finite output gradient for sample {sample}")
    coef_q, coef_f = _layer_coefficients(cache, g, params.alpha)
    bad = ~np.isfinite(coef_q).all(axis=1)
    if bad.any():
        raise NumericalError(
            f"non-finite gradient for sample {sample}, layer {int(np.argmax(bad)) + 1}")
    _kernels.add_outer(grad_F, resid, rho_star, 1.0)
    _kernels.add_layer_grads(grad_Q, grad_F, coef_q, cache.rho[:-1], coef_f, data,
                             cache.active)
    g_tau = grad_tau_total(cache, g, params.penalty, params.c)
    if counter is not None:
        n_active = int(cache.active.sum())
        counter.add("backproject_residual", N * M)
        counter.add("normalization", 2 * M)
        counter.add("decoder_outer", N * M)
        counter.add("layer_Q", n_active * M)
        counter.add("layer_F", n_active * N)
    return loss, L_d, g_tau, False


def accumulate_gradients(params, measurements, counter=None):
    """Batch-averaged gradients over every non-degenerate sample."""
    ms = list(measurements)
    if not ms:
        raise ValueError("empty training set")
    grad_Q = np.zeros_like(params.Q)
    grad_F = np.zeros_like(params.F.entries)
    grad_tau = 0.0
    losses, lds, skipped = [], [], []
    for n, d in enumerate(ms):
        loss, L_d, g_tau, degen = sample_gradients(params, d, grad_Q, grad_F, counter, n)
        losses.append(loss)
        lds.append(L_d)
        if degen:
            skipped.append(n)
        else:
            grad_tau += g_tau
    used = len(ms) - len(skipped)
    if used == 0:
        raise NumericalError("every training sample produced an all-zero representation")
    if skipped:
        log.warning("skipped %d degenerate sample(s) %s; averaging over %d",
                    len(skipped), skipped, used)
    grad_Q /= used
    grad_F /= used
    grad_tau /= used
    if not (np.isfinite(grad_tau) and np.isfinite(grad_Q).all() and np.isfinite(grad_F).all()):
        raise NumericalError("non-finite accumulated gradient")
    return GradientBundle(grad_Q, grad_F, grad_tau, np.array(losses), np.array(lds),
                          used, skipped)


def project_F(F_raw, kappa=1.0):
    """Map every entry onto the circle of radius ``kappa``; zeros go to ``kappa``."""
    return ForwardModel(_project_inplace(np.array(F_raw, dtype=np.complex128), kappa), kappa)


def _project_inplace(A, kappa):
    # one real temporary; same ufunc loops as kappa * (A / |A|)
    mag = np.abs(A)
    np.divide(A, mag, out=A, where=mag > 0)
    A *= kappa
    A[mag == 0] = kappa
    return A


def _snapshot(p):
    return EncoderParams(p.F, p.Q, p.tau, p.alpha, p.penalty, p.layers, p.c, p.lam)


def project_tau(tau_raw):
    return max(float(tau_raw), 0.0)


def _evaluate(params, measurements):
    lds = []
    for d in measurements:
        data = _data(d)
        rho_star, _ = forward_propagate(params, data)
        r = params.F.entries @ rho_star - data
        lds.append(float(np.vdot(r, r).real / np.vdot(data, data).real))
    return float(np.mean(lds))


def train(params, training_set, config=None, on_epoch=None):
    """Projected batch gradient descent on (F, Q, tau).

    The history has one row per evaluated parameter set, starting with the
    initialisation (epoch 0). Training stops after the first epoch whose
    average normalised data mismatch is not lower than the previous one, and
    the parameters with the lowest average mismatch are returned.
    ``on_epoch(epoch, params)`` is called after every parameter update.
    """
    config = config or TrainConfig()
    measurements = list(training_set)
    # snapshots are shallow: updates rebind F, Q and tau, never write in place,
    # so at full scale only one extra N x M matrix (the gradient) is live
    current = _snapshot(params)
    best, best_ld, best_epoch = _snapshot(current), math.inf, 0
    history = []
    prev = math.inf
    stopped = False
    t0 = time.perf_counter()
    for epoch in range(config.epochs + 1):
        eta_Q, eta_F, eta_tau = config.rates(epoch)
        last = epoch == config.epochs
        if last:
            avg = _evaluate(current, measurements)
            bundle = None
        else:
            bundle = accumulate_gradients(current, measurements)
            avg = float(np.mean(bundle.data_mismatch))
        if not np.isfinite(avg):
            raise NumericalError(f"non-finite average data mismatch at epoch {epoch}")
        history.append(EpochRecord(epoch, avg, eta_Q, eta_F, eta_tau, current.tau,
                                   time.perf_counter() - t0))
        log.info("epoch %d: avg L_d %.6g tau %.6g", epoch, avg, current.tau)
        if avg < best_ld:
            best, best_ld, best_epoch = _snapshot(current), avg, epoch
        if last:
            break
        if config.early_stop and epoch > 0 and avg >= prev:
            stopped = True
            break
        prev = avg
        # a zero rate leaves its parameter bit-identical (no re-projection)
        if eta_Q > 0:
            current.Q = current.Q - eta_Q * bundle.grad_Q
        if eta_F > 0:
            raw = bundle.grad_F  # consumed: F - eta g formed in the gradient buffer
            raw *= -eta_F
            raw += current.F.entries
            current.F = ForwardModel(_project_inplace(raw, current.F.kappa), current.F.kappa)
        if eta_tau > 0:
            current.tau = project_tau(current.tau - eta_tau * bundle.grad_tau)
        if on_epoch is not None:
            on_epoch(epoch + 1, current)
    return TrainResult(best, history, best_epoch, stopped)
