"""End-to-end experiment: simulate, initialise, train, evaluate.

Seeds: the training scenes use ``default_rng([seed, 0])``; test noise
realisation ``r`` uses a base seed drawn from ``SeedSequence([seed, 1])``
plus ``r``. Everything downstream of the config and seed is deterministic.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .baselines import BaselineConfig, run_baseline
from .encoder import forward_propagate, init_params
from .geometry import ImagingGeometry, build_forward_model, init_unknown_model, spectral_norm_sq
from .metrics import evaluate, noise_realizations
from .scenes import Measurement, add_noise, gen_phantom, gen_training_scene, synthesize
from .training import TrainConfig, train

log = logging.getLogger(__name__)

__all__ = ["REFERENCE_PHANTOM", "METHODS", "Models", "ExperimentResult", "build_geometry",
           "build_models", "resolve_alpha", "initial_params", "make_phantom",
           "make_training_data", "make_test_data", "run_experiment"]

# rectangles (row, col, h, w) on the 31x31 reference grid
REFERENCE_PHANTOM = ((8, 8, 6, 4), (18, 18, 3, 3), (21, 5, 2, 6))
METHODS = ("dl", "ista", "ihta", "untrained")


@dataclass(eq=False)
class Models:
    geometry: ImagingGeometry
    true: object   # ForwardModel used to simulate data
    init: object   # ForwardModel the network and baselines start from


@dataclass(eq=False)
class ExperimentResult:
    report: object
    params: object = None
    train_result: object = None
    models: Models = None


def build_geometry(cfg):
    g = cfg.geometry
    return ImagingGeometry.circular(
        grid=g.grid, scene_extent=g.scene_extent, radius=g.radius, height=g.height,
        slow_time_samples=g.slow_time_samples, aperture=g.aperture,
        frequency_samples=g.frequency_samples, center_frequency=g.center_frequency,
        bandwidth=g.bandwidth, transmitter=g.transmitter)


def build_models(cfg):
    geom = build_geometry(cfg)
    true = build_forward_model(geom)
    init = true if cfg.geometry.transmitter_known else init_unknown_model(geom)
    return Models(geom, true, init)


def resolve_alpha(cfg, F):
    a = cfg.network.alpha
    return 1.0 / spectral_norm_sq(F, 200) if a == "auto" else float(a)


def initial_params(cfg, F):
    n = cfg.network
    return init_params(F, resolve_alpha(cfg, F), n.lam, n.penalty, n.layers, n.c)


def make_phantom(cfg):
    grid = cfg.geometry.grid
    spec = cfg.evaluation.phantom
    if spec is None:
        rows, cols = grid
        spec = []
        for r, c, h, w in REFERENCE_PHANTOM:
            r2, c2 = round(r * rows / 31), round(c * cols / 31)
            h2, w2 = max(1, round(h * rows / 31)), max(1, round(w * cols / 31))
            spec.append((min(r2, rows - h2), min(c2, cols - w2), h2, w2))
    return gen_phantom(grid, spec)


def make_training_data(cfg, F_true, seed):
    """``(scenes, measurements)`` for ``cfg.training.samples`` random scenes."""
    rng = np.random.default_rng([seed, 0])
    snr = cfg.training.snr_db
    scenes, ms = [], []
    for t in range(cfg.training.samples):
        scene = gen_training_scene(cfg.geometry.grid, rng)
        d = synthesize(F_true, scene)
        if snr is not None:
            d = add_noise(d, snr, int(rng.integers(2**63)))
        scenes.append(scene)
        ms.append(d if isinstance(d, Measurement) else Measurement(d))
    return scenes, ms


def noise_seed(seed):
    return int(np.random.SeedSequence([seed, 1]).generate_state(1, np.uint32)[0])


def make_test_data(cfg, F_true, seed, realizations=None):
    phantom = make_phantom(cfg)
    R = cfg.evaluation.realizations if realizations is None else realizations
    return phantom, noise_realizations(F_true, phantom, cfg.evaluation.snr_db, R,
                                       noise_seed(seed))


def _baseline_reconstructor(cfg, F, penalty):
    base = BaselineConfig(alpha=resolve_alpha(cfg, F), lam=cfg.network.lam, penalty=penalty,
                          iterations=cfg.evaluation.baseline_iterations, check_step=False)
    return lambda d: run_baseline(F, d, base).rho


def run_experiment(cfg, seed=None, method="dl", realizations=None, models=None):
    """Run one method under ``cfg`` and score it on the noisy phantom data.

    ``dl`` trains the encoder; ``untrained`` evaluates the initialisation;
    ``ista``/``ihta`` run the fixed-parameter baselines on the initial model.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    seed = cfg.training.seed if seed is None else seed
    models = models or build_models(cfg)
    phantom, tests = make_test_data(cfg, models.true, seed, realizations)
    if method in ("ista", "ihta"):
        rec = _baseline_reconstructor(cfg, models.init, "l1" if method == "ista" else "l0")
        report = evaluate(rec, phantom, tests, models.init)
        return ExperimentResult(report, models=models)
    params = initial_params(cfg, models.init)
    result = None
    if method == "dl":
        _, train_ms = make_training_data(cfg, models.true, seed)
        t = cfg.training
        result = train(params, train_ms, TrainConfig(t.epochs, t.eta_Q, t.eta_F, t.eta_tau,
                                                     t.early_stop))
        params = result.params
    report = evaluate(lambda d: forward_propagate(params, d)[0], phantom, tests, params.F)
    log.info("%s: mean L_rho %.4g, mean C_rho %s", method, report.mean_L_rho,
             report.mean_C_rho)
    return ExperimentResult(report, params, result, models)
