"""Bistatic passive SAR geometry and the discretized forward operator.

Rows of a forward matrix are flattened (slow-time, frequency) pairs in
slow-time-major order: row ``j * W + w`` holds receiver sample ``j`` at
frequency ``w``. Columns are row-major flattened pixels of a flat scene.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels

C0 = 299_792_458.0

__all__ = [
    "C0",
    "ImagingGeometry",
    "ForwardModel",
    "TransmitterUnknownError",
    "bistatic_range",
    "build_forward_model",
    "init_unknown_model",
    "spectral_norm_sq",
]


class TransmitterUnknownError(ValueError):
    """Raised when an operation needs the transmitter location and it is absent."""

    def __init__(self, msg="transmitter unknown; use init_unknown_model"):
        super().__init__(msg)


@dataclass(frozen=True, eq=False)
class ImagingGeometry:
    """Flat-scene imaging geometry with a moving receiver.

    Parameters
    ----------
    scene_extent : (float, float)
        Side lengths in metres along x1 (columns) and x2 (rows); the scene
        origin is at its centre.
    grid : (int, int)
        Pixel counts ``(rows, cols)``.
    receiver_path : array (S, 3)
        Receiver position per slow-time sample, metres.
    frequencies : array (W,)
        Angular frequencies in rad/s.
    transmitter : array (3,) or None
        Stationary transmitter position; ``None`` when unknown.
    c0 : float
        Propagation speed in m/s.
    """

    scene_extent: tuple
    grid: tuple
    receiver_path: np.ndarray
    frequencies: np.ndarray
    transmitter: np.ndarray = None
    c0: float = C0
    _pixels: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        rx = np.atleast_2d(np.asarray(self.receiver_path, dtype=np.float64))
        om = np.atleast_1d(np.asarray(self.frequencies, dtype=np.float64))
        rows, cols = (int(g) for g in self.grid)
        ex, ey = (float(e) for e in np.broadcast_to(self.scene_extent, (2,)))
        if rows < 1 or cols < 1:
            raise ValueError(f"grid must be positive, got {self.grid}")
        if rx.shape[0] < 1 or rx.shape[1] != 3:
            raise ValueError(f"receiver_path must be (S, 3) with S >= 1, got {rx.shape}")
        if not np.all(np.isfinite(rx)):
            raise ValueError("receiver positions must be finite")
        if om.size < 1 or not np.all(om > 0):
            raise ValueError("frequencies must be non-empty and strictly positive")
        if not self.c0 > 0:
            raise ValueError("c0 must be positive")
        tx = self.transmitter
        if tx is not None:
            tx = np.asarray(tx, dtype=np.float64).reshape(3)
            if not np.all(np.isfinite(tx)):
                raise ValueError("transmitter position must be finite")
        set_ = object.__setattr__
        set_(self, "receiver_path", rx)
        set_(self, "frequencies", om)
        set_(self, "grid", (rows, cols))
        set_(self, "scene_extent", (ex, ey))
        set_(self, "transmitter", tx)
        set_(self, "_pixels", self._pixel_positions())

    @classmethod
    def circular(cls, grid=(31, 31), scene_extent=620.0, radius=7000.0,
                 height=6500.0, slow_time_samples=400, aperture=(0.0, 2 * np.pi),
                 frequency_samples=100, center_frequency=760e6, bandwidth=8e6,
                 transmitter=(11200.0, 11200.0, 6500.0), c0=C0):
        """Circular receiver trajectory over a flat scene (DVB-T-like band).

        Slow-time samples are ``s1 + j (s2 - s1) / S`` for ``j < S`` so that a
        full circle does not duplicate its endpoint.
        """
        s1, s2 = aperture
        s = s1 + (s2 - s1) * np.arange(slow_time_samples) / slow_time_samples
        rx = np.stack([radius * np.cos(s), radius * np.sin(s),
                       np.full_like(s, height)], axis=1)
        f_lo = center_frequency - bandwidth / 2
        f_hi = center_frequency + bandwidth / 2
        if frequency_samples == 1:
            freqs = np.array([center_frequency])
        else:
            freqs = np.linspace(f_lo, f_hi, frequency_samples)
        return cls(scene_extent=(scene_extent, scene_extent), grid=grid,
                   receiver_path=rx, frequencies=2 * np.pi * freqs,
                   transmitter=transmitter, c0=c0)

    def without_transmitter(self):
        return ImagingGeometry(self.scene_extent, self.grid, self.receiver_path,
                               self.frequencies, None, self.c0)

    @property
    def S(self):
        return self.receiver_path.shape[0]

    @property
    def W(self):
        return self.frequencies.shape[0]

    @property
    def M(self):
        return self.grid[0] * self.grid[1]

    @property
    def N(self):
        return self.S * self.W

    @property
    def pixel_spacing(self):
        rows, cols = self.grid
        return self.scene_extent[0] / cols, self.scene_extent[1] / rows

    @property
    def pixels(self):
        """(M, 3) pixel centres, row-major, on the z = 0 plane."""
        return self._pixels

    def _pixel_positions(self):
        rows, cols = self.grid
        dx, dy = self.scene_extent[0] / cols, self.scene_extent[1] / rows
        r, c = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
        x1 = (c - (cols - 1) / 2) * dx
        x2 = ((rows - 1) / 2 - r) * dy
        return np.stack([x1.ravel(), x2.ravel(), np.zeros(rows * cols)], axis=1)

    def pixel_index(self, pixel):
        """Flat column index for ``(row, col)`` or an int already flat."""
        if np.ndim(pixel) == 0:
            m = int(pixel)
        else:
            r, c = pixel
            rows, cols = self.grid
            if not (0 <= r < rows and 0 <= c < cols):
                raise IndexError(f"pixel {pixel} outside grid {self.grid}")
            m = int(r) * cols + int(c)
        if not 0 <= m < self.M:
            raise IndexError(f"pixel index {m} outside [0, {self.M})")
        return m


@dataclass(eq=False)
class ForwardModel:
    """Dense complex forward matrix with constant-modulus entries."""

    entries: np.ndarray
    kappa: float = 1.0

    def __post_init__(self):
        self.entries = np.ascontiguousarray(self.entries, dtype=np.complex128)
        if self.entries.ndim != 2:
            raise ValueError("forward model entries must be a 2-D matrix")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")

    @property
    def shape(self):
        return self.entries.shape

    @property
    def N(self):
        return self.entries.shape[0]

    @property
    def M(self):
        return self.entries.shape[1]

    def modulus_error(self):
        # row blocks keep the temporaries small for full-scale matrices
        step = max(1, (1 << 22) // max(self.M, 1))
        return max((float(np.max(np.abs(np.abs(self.entries[i:i + step]) - self.kappa)))
                    for i in range(0, self.N, step)), default=0.0)

    def check_modulus(self, tol=1e-12):
        err = self.modulus_error()
        if err > tol:
            raise ValueError(f"forward model modulus deviates from kappa by {err:.3e}")

    def __matmul__(self, x):
        return self.entries @ x

    def adjoint(self, y):
        return self.entries.conj().T @ y

    def copy(self):
        return ForwardModel(self.entries.copy(), self.kappa)


def bistatic_range(geometry, s_index, pixel):
    """Transmitter-scatterer-receiver path length in metres."""
    if geometry.transmitter is None:
        raise TransmitterUnknownError()
    if not 0 <= s_index < geometry.S:
        raise IndexError(f"slow-time index {s_index} outside [0, {geometry.S})")
    x = geometry.pixels[geometry.pixel_index(pixel)]
    return float(np.linalg.norm(geometry.transmitter - x)
                 + np.linalg.norm(geometry.receiver_path[s_index] - x))


def _transmitter_leg(geometry):
    d = geometry.pixels - geometry.transmitter[None, :]
    return np.sqrt(np.sum(d * d, axis=1))


def _assemble(geometry, extra, kappa):
    extra = np.ascontiguousarray(np.broadcast_to(extra, (geometry.S, geometry.M)),
                                 dtype=np.float64)
    F = _kernels.phase_matrix(geometry.receiver_path, geometry.frequencies,
                              geometry.pixels, extra, float(geometry.c0), float(kappa))
    return ForwardModel(F, kappa)


def build_forward_model(geometry, kappa=1.0):
    """Forward matrix of the full bistatic geometry (transmitter known)."""
    if geometry.transmitter is None:
        raise TransmitterUnknownError()
    return _assemble(geometry, _transmitter_leg(geometry)[None, :], kappa)


def init_unknown_model(geometry, phi_T=None, kappa=1.0):
    """Forward matrix with the transmitter leg replaced by ``phi_T``.

    ``phi_T`` may be ``None`` (zero offset), an ``(S, M)`` or ``(M,)`` array of
    metres, or a callable ``phi_T(receiver_path, pixels) -> (S, M)``.
    """
    if phi_T is None:
        extra = np.zeros((geometry.S, geometry.M))
    elif callable(phi_T):
        extra = np.asarray(phi_T(geometry.receiver_path, geometry.pixels), dtype=np.float64)
    else:
        extra = np.asarray(phi_T, dtype=np.float64)
    return _assemble(geometry, extra, kappa)


def spectral_norm_sq(F, iterations=100, seed=0):
    """Largest eigenvalue of ``F^H F`` by power iteration.

    Returns the Rayleigh quotient after ``iterations`` multiplications by
    ``F^H F``; for a PSD operator this sequence is nondecreasing.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    A = F.entries if isinstance(F, ForwardModel) else np.asarray(F)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(A.shape[1]) + 1j * rng.standard_normal(A.shape[1])
    x /= np.linalg.norm(x)
    for _ in range(iterations):
        y = A.conj().T @ (A @ x)
        ny = np.linalg.norm(y)
        if ny == 0:
            return 0.0
        x = y / ny
    Ax = A @ x
    return float(np.vdot(Ax, Ax).real)
