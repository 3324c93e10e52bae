"""Figures of merit and noise-realisation evaluation."""

from dataclasses import dataclass, field

import numpy as np

from .geometry import ForwardModel
from .scenes import Measurement, add_noise, synthesize

__all__ = [
    "data_mismatch",
    "image_error",
    "contrast",
    "sup_normalize",
    "MetricsReport",
    "noise_realizations",
    "evaluate",
    "sweep",
]


def _vec(x):
    return x.data if isinstance(x, Measurement) else np.asarray(x)


def data_mismatch(F, rho_star, d):
    """``||F rho* - d||^2 / ||d||^2``."""
    data = _vec(d)
    A = F.entries if isinstance(F, ForwardModel) else np.asarray(F)
    dn = float(np.vdot(data, data).real)
    if dn == 0:
        raise ValueError("data mismatch undefined for an all-zero measurement")
    r = A @ np.asarray(rho_star, dtype=np.float64) - data
    return float(np.vdot(r, r).real) / dn


def image_error(rho_star, rho_true):
    """``||rho* - rho||^2 / ||rho||^2``."""
    a = np.asarray(rho_star, dtype=np.float64)
    b = np.asarray(getattr(rho_true, "reflectivity", rho_true), dtype=np.float64)
    nb = float(b @ b)
    if nb == 0:
        raise ValueError("image error undefined for an all-zero ground truth")
    r = a - b
    return float(r @ r) / nb


def contrast(rho_star, foreground):
    """Squared foreground/background mean gap over background variance.

    Uses population statistics. Returns ``None`` when the background variance
    is zero (contrast undefined); a ratio beyond float range gives ``inf``.
    """
    img = np.asarray(rho_star, dtype=np.float64).ravel()
    fg = np.asarray(foreground, dtype=bool).ravel()
    if fg.shape != img.shape:
        raise ValueError("mask and image sizes differ")
    f, b = img[fg], img[~fg]
    if f.size == 0 or b.size == 0:
        raise ValueError("foreground and background must both be nonempty")
    if b.size < 2:
        raise ValueError("background needs at least two pixels")
    var = float(np.var(b))
    if var == 0.0:
        return None
    with np.errstate(over="ignore"):
        return float((f.mean() - b.mean()) ** 2 / var)


def sup_normalize(rho):
    rho = np.abs(np.asarray(rho, dtype=np.float64))
    m = rho.max() if rho.size else 0.0
    return rho / m if m > 0 else np.zeros_like(rho)


@dataclass
class MetricsReport:
    L_d: list = field(default_factory=list)
    L_rho: list = field(default_factory=list)
    C_rho: list = field(default_factory=list)  # None marks undefined contrast

    CSV_FIELDS = ("realization", "L_d", "L_rho", "C_rho")

    def add(self, L_d, L_rho, C_rho):
        self.L_d.append(L_d)
        self.L_rho.append(L_rho)
        self.C_rho.append(C_rho)

    @property
    def realizations(self):
        return len(self.L_rho)

    @property
    def mean_L_d(self):
        return float(np.mean(self.L_d))

    @property
    def mean_L_rho(self):
        return float(np.mean(self.L_rho))

    @property
    def undefined_contrast(self):
        return sum(c is None for c in self.C_rho)

    @property
    def mean_C_rho(self):
        """Mean over realisations with defined contrast; ``None`` if there are none."""
        vals = [c for c in self.C_rho if c is not None]
        return float(np.mean(vals)) if vals else None

    def rows(self):
        fmt = lambda v: "undefined" if v is None else repr(float(v))  # noqa: E731
        out = [[i, fmt(a), fmt(b), fmt(c)]
               for i, (a, b, c) in enumerate(zip(self.L_d, self.L_rho, self.C_rho))]
        out.append(["mean", fmt(self.mean_L_d), fmt(self.mean_L_rho), fmt(self.mean_C_rho)])
        return out


def noise_realizations(F_true, phantom, snr_db=50.0, realizations=20, seed=0):
    """Independent noisy copies of the phantom's data, seeds ``seed + r``."""
    clean = synthesize(F_true, phantom)
    return [add_noise(clean, snr_db, seed + r) for r in range(realizations)]


def evaluate(reconstruct, phantom, measurements, decoder):
    """Score ``reconstruct(d) -> image`` on every measurement.

    Images are sup-normalised before scoring; ``decoder`` is the forward model
    the method believes in and is used for the data-domain mismatch.
    """
    report = MetricsReport()
    mask = phantom.support
    for d in measurements:
        img = sup_normalize(reconstruct(d))
        report.add(data_mismatch(decoder, img, d),
                   image_error(img, phantom),
                   contrast(img, mask))
    return report


SWEEP_KINDS = ("lambda", "depth", "training_size")
SWEEP_FIELDS = ("value", "mean_L_rho", "mean_C_rho", "mean_L_d")


def sweep(kind, values, base_config, seed=0, runner=None):
    """Train and evaluate once per value; rows come back in input order."""
    if kind not in SWEEP_KINDS:
        raise ValueError(f"sweep kind must be one of {SWEEP_KINDS}, got {kind!r}")
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    if runner is None:
        from .experiment import run_experiment as runner
    rows = []
    for v in values:
        cfg = base_config.with_sweep_value(kind, v)
        report = runner(cfg, seed=seed).report
        rows.append((v, report.mean_L_rho, report.mean_C_rho, report.mean_L_d))
    return rows
