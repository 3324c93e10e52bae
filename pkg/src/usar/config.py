"""Experiment configuration (YAML).

A config file has four optional sections; omitted keys take the reference
values of the 31x31 experiment::

    geometry:
      grid: [31, 31]
      scene_extent: 620.0          # metres, square scene
      radius: 7000.0
      height: 6500.0
      slow_time_samples: 400
      aperture: [0.0, 6.283185307179586]
      frequency_samples: 100
      center_frequency: 760.0e6
      bandwidth: 8.0e6
      transmitter: [11200.0, 11200.0, 6500.0]   # used to simulate data
      transmitter_known: false                  # false: start from F0
    network:
      layers: 16
      penalty: l0
      alpha: 1.0e-6                # or "auto" for 1/||F||^2
      lambda: 30.0
      c: 1.0e-5
    training:
      epochs: 7
      eta_Q: 1.0e-9
      eta_F: 1.0e-5
      eta_tau: 1.0e-14
      samples: 25
      seed: 0
      early_stop: true
      snr_db: null                 # training data noise-free by default
    evaluation:
      phantom: null                # [[row, col, h, w], ...], a scene file, or
                                   # null for the reference rectangles
      snr_db: 50.0
      realizations: 20
      baseline_iterations: 100

Unknown keys and malformed values raise :class:`ConfigError` naming the file
line.
"""

import copy
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace

import yaml

__all__ = ["ConfigError", "GeometryConfig", "NetworkConfig", "TrainingConfig",
           "EvaluationConfig", "ExperimentConfig", "load_config", "parse_config"]


class ConfigError(ValueError):
    pass


@dataclass
class GeometryConfig:
    grid: tuple = (31, 31)
    scene_extent: float = 620.0
    radius: float = 7000.0
    height: float = 6500.0
    slow_time_samples: int = 400
    aperture: tuple = (0.0, 2 * math.pi)
    frequency_samples: int = 100
    center_frequency: float = 760e6
    bandwidth: float = 8e6
    transmitter: tuple = (11200.0, 11200.0, 6500.0)
    transmitter_known: bool = False


@dataclass
class NetworkConfig:
    layers: int = 16
    penalty: str = "l0"
    alpha: object = 1e-6  # float or "auto"
    lam: float = 30.0
    c: float = 1e-5


@dataclass
class TrainingConfig:
    epochs: int = 7
    eta_Q: float = 1e-9
    eta_F: float = 1e-5
    eta_tau: float = 1e-14
    samples: int = 25
    seed: int = 0
    early_stop: bool = True
    snr_db: object = None


@dataclass
class EvaluationConfig:
    phantom: object = None  # None: reference rectangles scaled to the grid
    snr_db: float = 50.0
    realizations: int = 20
    baseline_iterations: int = 100


@dataclass
class ExperimentConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)

    def to_dict(self):
        out = asdict(self)
        out["network"]["lambda"] = out["network"].pop("lam")
        return _plain(out)

    def digest(self):
        """SHA-256 of the canonical JSON form."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def dump(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def with_overrides(self, penalty=None, layers=None, lam=None):
        cfg = copy.deepcopy(self)
        if penalty is not None:
            cfg.network.penalty = _penalty(penalty, "penalty")
        if layers is not None:
            cfg.network.layers = _positive_int(layers, "layers")
        if lam is not None:
            cfg.network.lam = _nonneg_float(lam, "lambda")
        return cfg

    def with_sweep_value(self, kind, value):
        if kind == "lambda":
            return self.with_overrides(lam=value)
        if kind == "depth":
            return self.with_overrides(layers=value)
        if kind == "training_size":
            cfg = copy.deepcopy(self)
            cfg.training = replace(cfg.training, samples=_positive_int(value, "samples"))
            return cfg
        raise ConfigError(f"unknown sweep kind {kind!r}")


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


# value parsers: raise ValueError with a short reason, located by the caller

def _float(v, name):
    if isinstance(v, bool):
        raise ValueError(f"{name} must be a number")
    try:
        out = float(v)  # PyYAML reads 1e-9 (no dot) as a string
    except (TypeError, ValueError):
        raise ValueError(f"{name} must be a number, got {v!r}") from None
    if not math.isfinite(out):
        raise ValueError(f"{name} must be finite")
    return out


def _pos_float(v, name):
    out = _float(v, name)
    if out <= 0:
        raise ValueError(f"{name} must be positive")
    return out


def _nonneg_float(v, name):
    out = _float(v, name)
    if out < 0:
        raise ValueError(f"{name} must be nonnegative")
    return out


def _int(v, name):
    if isinstance(v, bool) or not isinstance(v, int):
        if isinstance(v, str) and v.strip().lstrip("-").isdigit():
            return int(v)
        raise ValueError(f"{name} must be an integer, got {v!r}")
    return v


def _positive_int(v, name):
    out = _int(v, name)
    if out < 1:
        raise ValueError(f"{name} must be >= 1")
    return out


def _nonneg_int(v, name):
    out = _int(v, name)
    if out < 0:
        raise ValueError(f"{name} must be >= 0")
    return out


def _bool(v, name):
    if not isinstance(v, bool):
        raise ValueError(f"{name} must be true or false")
    return v


def _vec(n, item):
    def parse(v, name):
        if not isinstance(v, (list, tuple)) or len(v) != n:
            raise ValueError(f"{name} must be a list of {n} values")
        return tuple(item(x, name) for x in v)
    return parse


def _penalty(v, name):
    s = str(v).lower()
    if s not in ("l1", "l0"):
        raise ValueError(f"{name} must be l1 or l0, got {v!r}")
    return s


def _alpha(v, name):
    if isinstance(v, str) and v.strip().lower() == "auto":
        return "auto"
    return _pos_float(v, name)


def _snr(v, name):
    if v is None:
        return None
    if isinstance(v, str) and v.strip().lower() in ("inf", "none", "null"):
        return None
    return _float(v, name)


def _phantom(v, name):
    if v is None or isinstance(v, str):
        return v
    if not isinstance(v, (list, tuple)):
        raise ValueError(f"{name} must be a scene-file path or a list of [row, col, h, w]")
    return tuple(_vec(4, _nonneg_int)(r, name) for r in v)


_SCHEMA = {
    "geometry": (GeometryConfig, {
        "grid": ("grid", _vec(2, _positive_int)),
        "scene_extent": ("scene_extent", _pos_float),
        "radius": ("radius", _pos_float),
        "height": ("height", _float),
        "slow_time_samples": ("slow_time_samples", _positive_int),
        "aperture": ("aperture", _vec(2, _float)),
        "frequency_samples": ("frequency_samples", _positive_int),
        "center_frequency": ("center_frequency", _pos_float),
        "bandwidth": ("bandwidth", _nonneg_float),
        "transmitter": ("transmitter", _vec(3, _float)),
        "transmitter_known": ("transmitter_known", _bool),
    }),
    "network": (NetworkConfig, {
        "layers": ("layers", _positive_int),
        "penalty": ("penalty", _penalty),
        "alpha": ("alpha", _alpha),
        "lambda": ("lam", _nonneg_float),
        "c": ("c", _nonneg_float),
    }),
    "training": (TrainingConfig, {
        "epochs": ("epochs", _positive_int),
        "eta_Q": ("eta_Q", _nonneg_float),
        "eta_F": ("eta_F", _nonneg_float),
        "eta_tau": ("eta_tau", _nonneg_float),
        "samples": ("samples", _positive_int),
        "seed": ("seed", _nonneg_int),
        "early_stop": ("early_stop", _bool),
        "snr_db": ("snr_db", _snr),
    }),
    "evaluation": (EvaluationConfig, {
        "phantom": ("phantom", _phantom),
        "snr_db": ("snr_db", _float),
        "realizations": ("realizations", _positive_int),
        "baseline_iterations": ("baseline_iterations", _positive_int),
    }),
}


def _where(source, node):
    return f"{source}:{node.start_mark.line + 1}"


def parse_config(text, source="<config>"):
    """Parse YAML text into a validated :class:`ExperimentConfig`."""
    loader = yaml.SafeLoader(text)
    try:
        root = loader.get_single_node()
        if root is None:
            return ExperimentConfig()
        data = loader.construct_document(root)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f":{mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"{source}{line}: {getattr(exc, 'problem', None) or exc}") from None
    finally:
        loader.dispose()
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError(f"{_where(source, root)}: top level must be a mapping")
    sections = {}
    for knode, vnode in root.value:
        key = knode.value
        if key not in _SCHEMA:
            raise ConfigError(f"{_where(source, knode)}: unknown section {key!r} "
                              f"(expected one of {', '.join(_SCHEMA)})")
        cls, spec = _SCHEMA[key]
        if vnode.tag == "tag:yaml.org,2002:null":
            sections[key] = cls()
            continue
        if not isinstance(vnode, yaml.MappingNode):
            raise ConfigError(f"{_where(source, vnode)}: section {key!r} must be a mapping")
        values = {}
        raw = data[key]
        for fk, fv in vnode.value:
            name = fk.value
            if name not in spec:
                raise ConfigError(f"{_where(source, fk)}: unknown key {name!r} in {key!r} "
                                  f"(allowed: {', '.join(spec)})")
            attr, parser = spec[name]
            try:
                values[attr] = parser(raw[name], name)
            except ValueError as exc:
                raise ConfigError(f"{_where(source, fv)}: {key}.{exc}") from None
        sections[key] = cls(**values)
    cfg = ExperimentConfig(**sections)
    _check(cfg, source)
    return cfg


def _check(cfg, source):
    g = cfg.geometry
    if g.center_frequency - g.bandwidth / 2 <= 0:
        raise ConfigError(f"{source}: geometry: lowest frequency must be positive")
    if g.aperture[1] <= g.aperture[0]:
        raise ConfigError(f"{source}: geometry.aperture must be increasing")


def load_config(path=None):
    """Read a config file; ``None`` gives the defaults."""
    if path is None:
        return ExperimentConfig()
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(text, str(path))

