"""Scenes, simulated measurements and the noise model."""

from dataclasses import dataclass, field

import numpy as np

from .geometry import ForwardModel

__all__ = [
    "Scene",
    "Measurement",
    "TrainingSet",
    "placement_margin",
    "gen_training_scene",
    "gen_phantom",
    "synthesize",
    "add_noise",
]

MAX_TARGET_SIDE = 6


@dataclass(eq=False)
class Scene:
    """Real reflectivity on a pixel grid, flattened row-major."""

    reflectivity: np.ndarray
    grid: tuple

    def __post_init__(self):
        self.grid = tuple(int(g) for g in self.grid)
        self.reflectivity = np.asarray(self.reflectivity, dtype=np.float64).ravel()
        if self.reflectivity.size != self.grid[0] * self.grid[1]:
            raise ValueError(
                f"reflectivity has {self.reflectivity.size} entries, grid {self.grid} "
                f"needs {self.grid[0] * self.grid[1]}")
        if np.any(self.reflectivity < 0) or np.any(self.reflectivity > 1) \
                or not np.all(np.isfinite(self.reflectivity)):
            raise ValueError("scene reflectivity must lie in [0, 1]")

    @property
    def image(self):
        return self.reflectivity.reshape(self.grid)

    @property
    def support(self):
        return self.reflectivity > 0

    def __eq__(self, other):
        return (isinstance(other, Scene) and self.grid == other.grid
                and np.array_equal(self.reflectivity, other.reflectivity))


@dataclass(eq=False)
class Measurement:
    """Complex data vector plus the provenance of any added noise."""

    data: np.ndarray
    snr_db: float = None
    seed: int = None

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.complex128).ravel()

    @property
    def N(self):
        return self.data.size


@dataclass
class TrainingSet:
    """Measurements for unsupervised training.

    ``scenes`` is kept for diagnostics only; training never reads it.
    """

    measurements: list
    scenes: list = field(default_factory=list)

    def __post_init__(self):
        sizes = {m.N for m in self.measurements}
        if len(sizes) > 1:
            raise ValueError(f"training measurements disagree on N: {sorted(sizes)}")

    def __len__(self):
        return len(self.measurements)

    def __iter__(self):
        return iter(self.measurements)


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def placement_margin(n):
    """Border width excluded from target placement for an ``n``-pixel side.

    Equals 3 for the 31-pixel reference grid and scales proportionally.
    """
    if n >= 31:
        return 3
    return int(np.floor(3 * n / 31 + 0.5))


def gen_training_scene(grid=(31, 31), seed=None):
    """One random axis-aligned rectangle of ones on a zero background.

    Width and height are uniform integers in ``[1, 6]``; the rectangle lies
    entirely inside the 1-indexed window ``[margin, n - margin]`` on each axis.
    """
    rng = _rng(seed)
    rows, cols = grid
    spans = []
    for n in (rows, cols):
        m = placement_margin(n)
        lo, hi = max(m, 1) - 1, n - m - 1  # 0-indexed inclusive window
        if hi < lo:
            raise ValueError(f"grid {grid} too small to place a target")
        spans.append((lo, hi))
    (rlo, rhi), (clo, chi) = spans
    h = int(rng.integers(1, MAX_TARGET_SIDE + 1))
    w = int(rng.integers(1, MAX_TARGET_SIDE + 1))
    h = min(h, rhi - rlo + 1)
    w = min(w, chi - clo + 1)
    r0 = int(rng.integers(rlo, rhi - h + 2))
    c0 = int(rng.integers(clo, chi - w + 2))
    img = np.zeros((rows, cols))
    img[r0:r0 + h, c0:c0 + w] = 1.0
    return Scene(img.ravel(), (rows, cols))


def gen_phantom(grid, spec=()):
    """Binary test scene from rectangles ``(row, col, height, width)``.

    ``spec`` may also be a path to a scene file, which is read as-is.
    """
    from . import io as _io

    if isinstance(spec, (str, bytes)) or hasattr(spec, "__fspath__"):
        scene = _io.read_scene(spec)
        if scene.grid != tuple(grid):
            raise ValueError(f"scene file grid {scene.grid} does not match {tuple(grid)}")
        return scene
    rows, cols = grid
    img = np.zeros((rows, cols))
    for rect in spec:
        r, c, h, w = (int(v) for v in rect)
        if h < 1 or w < 1 or r < 0 or c < 0 or r + h > rows or c + w > cols:
            raise ValueError(f"rectangle {tuple(rect)} does not fit grid {tuple(grid)}")
        img[r:r + h, c:c + w] = 1.0
    return Scene(img.ravel(), (rows, cols))


def synthesize(F, scene):
    """Noiseless data ``F rho``."""
    A = F.entries if isinstance(F, ForwardModel) else np.asarray(F)
    rho = scene.reflectivity if isinstance(scene, Scene) else np.asarray(scene, dtype=float)
    if A.shape[1] != rho.size:
        raise ValueError(f"forward model has {A.shape[1]} columns, scene has {rho.size} pixels")
    return Measurement(A @ rho)


def add_noise(d, snr_db, seed=None):
    """Circular complex white Gaussian noise at ``snr_db`` of mean signal power.

    ``snr_db = inf`` (or ``None``) returns the input unchanged.
    """
    data = d.data if isinstance(d, Measurement) else np.asarray(d, dtype=np.complex128)
    if snr_db is None or np.isposinf(snr_db):
        return Measurement(data.copy(), None if snr_db is None else float(snr_db), seed)
    power = np.vdot(data, data).real / data.size
    if power == 0:
        raise ValueError("cannot set a finite SNR on an all-zero measurement")
    sigma2 = power / 10 ** (snr_db / 10)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(data.size) + 1j * rng.standard_normal(data.size)
    return Measurement(data + np.sqrt(sigma2 / 2) * noise, float(snr_db), seed)
