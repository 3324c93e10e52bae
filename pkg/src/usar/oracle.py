"""Reference gradients for checking the vectorised training path.

Nothing here imports from :mod:`usar.training` or :mod:`usar._kernels`:
:func:`naive_gradients` re-derives the forward pass and the per-layer
gradient expressions with plain Python loops over scalars, and
:func:`finite_diff_loss_grad` differentiates the true loss numerically.
Both are meant for tiny problems only.
"""

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["OracleGradients", "naive_forward", "naive_gradients",
           "finite_diff_loss_grad", "FiniteDiffReport", "compare_to_finite_diff"]


@dataclass(eq=False)
class OracleGradients:
    grad_Q: np.ndarray
    grad_F: np.ndarray
    grad_tau: float
    losses: list
    used: int


def _level(tau, penalty):
    return tau if penalty == "l1" else math.sqrt(tau)


def _activate(mag, level, penalty, c):
    if not mag > level:
        return 0.0
    if penalty == "l1":
        return mag - level
    return (mag - level) + (1.0 - c) * level


def naive_forward(F, Q, tau, alpha, penalty, layers, c, d):
    """Scalar-loop forward pass; returns a dict of per-layer quantities."""
    N, M = len(F), len(F[0])
    level = _level(tau, penalty)
    bias = []
    for i in range(M):
        acc = 0j
        for n in range(N):
            acc += F[n][i].conjugate() * d[n]
        bias.append(alpha * acc)
    rho = [[0.0] * M]
    zs, actives = [], []
    for _ in range(layers):
        prev = rho[-1]
        z, act, nxt = [], [], []
        for i in range(M):
            acc = bias[i]
            for j in range(M):
                acc += Q[i][j] * prev[j]
            mag = abs(acc)
            z.append(acc)
            act.append(mag > level)
            nxt.append(_activate(mag, level, penalty, c))
        zs.append(z)
        actives.append(act)
        rho.append(nxt)
    last = rho[-1]
    sup, arg = 0.0, 0
    for i, v in enumerate(last):
        if v > sup:
            sup, arg = v, i
    rho_star = [v / sup for v in last] if sup > 0 else [0.0] * M
    d_star = []
    for n in range(N):
        acc = 0j
        for i in range(M):
            acc += F[n][i] * rho_star[i]
        d_star.append(acc)
    return dict(rho=rho, z=zs, active=actives, sup=sup, argmax=arg,
                rho_star=rho_star, d_star=d_star)


def _to_lists(A):
    return [[complex(v) for v in row] for row in np.asarray(A)]


def naive_gradients(params, measurements):
    """Batch-averaged gradients computed one scalar at a time."""
    F = _to_lists(params.F.entries)
    Q = _to_lists(params.Q)
    penalty = params.penalty.value
    N, M, L = len(F), len(F[0]), params.layers
    gQ = [[0j] * M for _ in range(M)]
    gF = [[0j] * M for _ in range(N)]
    g_tau = 0.0
    used = 0
    losses = []
    for meas in measurements:
        raw = meas.data if hasattr(meas, "data") else meas
        d = [complex(v) for v in np.asarray(raw).ravel()]
        fw = naive_forward(F, Q, params.tau, params.alpha, penalty, L, params.c, d)
        r = [fw["d_star"][n] - d[n] for n in range(N)]
        losses.append(sum(abs(v) ** 2 for v in r))
        if fw["sup"] == 0.0:
            continue
        used += 1
        # 2 Re{F^H r}
        h = []
        for i in range(M):
            acc = 0j
            for n in range(N):
                acc += F[n][i].conjugate() * r[n]
            h.append(2.0 * acc.real)
        a = fw["sup"]
        rho_L = fw["rho"][L]
        g = []
        for i in range(M):
            v = h[i] / a
            if i == fw["argmax"]:
                dot = 0.0
                for j in range(M):
                    dot += rho_L[j] * h[j]
                v -= dot / (a * a)
            g.append(v)
        for n in range(N):
            for i in range(M):
                gF[n][i] += r[n] * fw["rho_star"][i]
        for k in range(1, L + 1):
            z = fw["z"][k - 1]
            act = fw["active"][k - 1]
            rho_in = fw["rho"][k - 1]
            for i in range(M):
                if not act[i]:
                    continue
                unit = z[i] / abs(z[i])
                for j in range(M):
                    gQ[i][j] += (g[i] / 2.0) * unit * rho_in[j]
                for n in range(N):
                    gF[n][i] += (params.alpha * g[i] / 2.0) * unit.conjugate() * d[n]
                g_tau += -g[i] * (params.c if penalty == "l0" else 1.0)
    if used == 0:
        raise ValueError("all samples degenerate")
    scale = 1.0 / used
    return OracleGradients(
        np.array(gQ, dtype=np.complex128) * scale,
        np.array(gF, dtype=np.complex128) * scale,
        g_tau * scale, losses, used)


def _true_loss(F, Q, tau, alpha, penalty, layers, c, d):
    fw = naive_forward(F, Q, tau, alpha, penalty, layers, c, d)
    return sum(abs(fw["d_star"][n] - d[n]) ** 2 for n in range(len(d))), fw


@dataclass(eq=False)
class FiniteDiffReport:
    grad_Q: np.ndarray
    grad_F: np.ndarray
    grad_tau: float
    flagged: int


def _near_kink(fw, level, tol):
    if fw["sup"] == 0.0:
        return True
    for z in fw["z"]:
        for v in z:
            if abs(abs(v) - level) < tol:
                return True
    last = sorted(fw["rho"][-1], reverse=True)
    return len(last) > 1 and last[0] - last[1] < tol


def finite_diff_loss_grad(params, d, h=1e-6):
    """Central differences of ``||F rho*(F, Q, tau) - d||^2``.

    Complex parameters are reported in the conjugate-Wirtinger convention
    ``(dl/dx + i dl/dy) / 2`` so they compare directly with the update
    directions used for training. ``flagged`` counts perturbations that
    crossed a threshold boundary or an argmax tie.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    F = _to_lists(params.F.entries)
    Q = _to_lists(params.Q)
    penalty = params.penalty.value
    raw = d.data if hasattr(d, "data") else d
    dd = [complex(v) for v in np.asarray(raw).ravel()]
    args = (params.alpha, penalty, params.layers, params.c, dd)
    level = _level(params.tau, penalty)
    flagged = 0
    _, base = _true_loss(F, Q, params.tau, *args)

    def signature(fw):
        return (tuple(tuple(a) for a in fw["active"]), fw["argmax"])

    base_sig = signature(base)

    def central(fplus, fminus):
        nonlocal flagged
        lp, fp = fplus
        lm, fm = fminus
        if signature(fp) != base_sig or signature(fm) != base_sig:
            flagged += 1
        return (lp - lm) / (2 * h)

    def wirtinger(mat, i, j, which):
        out = 0j
        for step, weight in ((h, 1.0), (1j * h, 1j)):
            orig = mat[i][j]
            mat[i][j] = orig + step
            plus = _true_loss(*which(), params.tau, *args)
            mat[i][j] = orig - step
            minus = _true_loss(*which(), params.tau, *args)
            mat[i][j] = orig
            out += weight * central(plus, minus)
        return out / 2

    gQ = np.zeros((len(Q), len(Q)), dtype=np.complex128)
    for i in range(len(Q)):
        for j in range(len(Q)):
            gQ[i, j] = wirtinger(Q, i, j, lambda: (F, Q))
    gF = np.zeros((len(F), len(F[0])), dtype=np.complex128)
    for i in range(len(F)):
        for j in range(len(F[0])):
            gF[i, j] = wirtinger(F, i, j, lambda: (F, Q))
    tp = _true_loss(F, Q, params.tau + h, *args)
    tm = _true_loss(F, Q, max(params.tau - h, 0.0), *args)
    g_tau = (tp[0] - tm[0]) / (params.tau + h - max(params.tau - h, 0.0))
    if _near_kink(base, level, 10 * h):
        flagged += 1
    return FiniteDiffReport(gQ, gF, float(g_tau), flagged)


def compare_to_finite_diff(analytic, numeric):
    """Relative deviation per parameter block (diagnostic only)."""
    def rel(a, b):
        nb = np.linalg.norm(b)
        return float(np.linalg.norm(a - b) / nb) if nb > 0 else float(np.linalg.norm(a))

    return {
        "Q": rel(analytic.grad_Q, numeric.grad_Q),
        "F": rel(analytic.grad_F, numeric.grad_F),
        "tau": rel(np.array([analytic.grad_tau]), np.array([numeric.grad_tau])),
        "flagged": numeric.flagged,
    }
