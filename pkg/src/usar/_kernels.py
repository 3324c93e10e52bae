"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is picked once at import time. Set ``USAR_NUMBA=0`` to force the
numpy implementations (also used automatically when numba is missing).
``USAR_THREADS`` caps the numba worker pool.

Every kernel exists twice with identical signatures, in the ``numpy_impl``
and ``numba_impl`` namespaces; the module-level names dispatch to the active
one. Kernels that accumulate write into caller-owned buffers.
"""

import os
import warnings
from types import SimpleNamespace

import numpy as np


def _env_flag(name, default=True):
    raw = os.environ.get(name)
    if raw is None:
        return default
    return raw.strip().lower() not in ("0", "false", "no", "off", "")


# ---------------------------------------------------------------------------
# numpy reference path
# ---------------------------------------------------------------------------

def _np_phase_matrix(receivers, omegas, pixels, extra, c0, kappa):
    diff = receivers[:, None, :] - pixels[None, :, :]
    rng = np.sqrt(np.sum(diff * diff, axis=2)) + extra
    S, M = rng.shape
    W = omegas.shape[0]
    out = np.empty((S * W, M), dtype=np.complex128)
    for j in range(S):
        phase = np.outer(omegas / c0, rng[j])
        out[j * W:(j + 1) * W] = kappa * np.exp(-1j * phase)
    return out


def _np_layer(Q, rho_prev, bias, level, hard, c):
    z = Q @ rho_prev + bias
    mag = np.abs(z)
    active = mag > level
    if hard:
        rho = np.maximum(mag - level, 0.0) + (1.0 - c) * level * active
    else:
        rho = np.maximum(mag - level, 0.0)
    rho = np.where(active, rho, 0.0)
    return rho, z, mag, active


def _np_add_outer(acc, u, v, scale):
    acc += scale * np.outer(u, v)


def _np_add_layer_grads(grad_Q, grad_F, coef_q, rho_in, coef_f, d, active):
    L = coef_q.shape[0]
    for k in range(L):
        if not active[k].any():
            continue
        grad_Q += np.outer(coef_q[k], rho_in[k])
        grad_F += np.outer(d, coef_f[k])


numpy_impl = SimpleNamespace(
    phase_matrix=_np_phase_matrix,
    layer=_np_layer,
    add_outer=_np_add_outer,
    add_layer_grads=_np_add_layer_grads,
    name="numpy",
)


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

def _build_numba():
    import numba
    from numba import njit, prange

    # an outdated system TBB is skipped in favour of omp/workqueue; the notice is noise
    warnings.filterwarnings("ignore", message="The TBB threading layer requires")
    threads = os.environ.get("USAR_THREADS")
    if threads:
        numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))

    @njit(parallel=True, cache=True)
    def phase_matrix(receivers, omegas, pixels, extra, c0, kappa):
        S = receivers.shape[0]
        M = pixels.shape[0]
        W = omegas.shape[0]
        out = np.empty((S * W, M), dtype=np.complex128)
        for j in prange(S):
            for m in range(M):
                dx = receivers[j, 0] - pixels[m, 0]
                dy = receivers[j, 1] - pixels[m, 1]
                dz = receivers[j, 2] - pixels[m, 2]
                r = np.sqrt(dx * dx + dy * dy + dz * dz) + extra[j, m]
                for w in range(W):
                    ph = (omegas[w] / c0) * r
                    out[j * W + w, m] = kappa * (np.cos(ph) - 1j * np.sin(ph))
        return out

    @njit(cache=True)
    def layer(Q, rho_prev, bias, level, hard, c):
        M = Q.shape[0]
        z = np.empty(M, dtype=np.complex128)
        mag = np.empty(M)
        rho = np.zeros(M)
        active = np.zeros(M, dtype=np.bool_)
        for i in range(M):
            acc = bias[i]
            for j in range(M):
                if rho_prev[j] != 0.0:
                    acc += Q[i, j] * rho_prev[j]
            z[i] = acc
            a = np.abs(acc)
            mag[i] = a
            if a > level:
                active[i] = True
                if hard:
                    rho[i] = (a - level) + (1.0 - c) * level
                else:
                    rho[i] = a - level
        return rho, z, mag, active

    @njit(parallel=True, cache=True)
    def add_outer(acc, u, v, scale):
        N = u.shape[0]
        M = v.shape[0]
        for n in prange(N):
            su = scale * u[n]
            for m in range(M):
                acc[n, m] += su * v[m]

    @njit(parallel=True, cache=True)
    def add_layer_grads(grad_Q, grad_F, coef_q, rho_in, coef_f, d, active):
        L, M = coef_q.shape
        N = d.shape[0]
        for i in prange(M):
            for k in range(L):
                if active[k, i]:
                    cq = coef_q[k, i]
                    for j in range(M):
                        grad_Q[i, j] += cq * rho_in[k, j]
        for n in prange(N):
            dn = d[n]
            for k in range(L):
                for i in range(M):
                    if active[k, i]:
                        grad_F[n, i] += dn * coef_f[k, i]

    return SimpleNamespace(
        phase_matrix=phase_matrix,
        layer=layer,
        add_outer=add_outer,
        add_layer_grads=add_layer_grads,
        name="numba",
    )


numba_impl = None
if _env_flag("USAR_NUMBA", True):
    try:
        numba_impl = _build_numba()
    except ImportError:  # pragma: no cover - numba is a declared dependency
        numba_impl = None

_active = numba_impl if numba_impl is not None else numpy_impl

BACKEND = _active.name
phase_matrix = _active.phase_matrix
layer = _active.layer
add_outer = _active.add_outer
add_layer_grads = _active.add_layer_grads
