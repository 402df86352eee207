"""Single-photon counting rates and synthetic phase-scanned frame stacks.

The far-field and near-field counting rates are closed forms derived from
the double-Gaussian model: scanning the interferometric phase produces a
sinusoidal rate at every camera column, whose local fringe visibility is
the edge-spread function of the knife edge,

    rate_ff = 1 + V_ff(x) cos(phi),   V_ff = (F_ff/2) [1 - erf(u_k)]
    rate_nf = 1 + V_nf(x) cos(phi),   V_nf = (F_nf/2) [1 + erf(u_r)]

with u_k = sqrt(2) pi sigma_+ (x - x_edge) / (f_c lambda_s) and
u_r = sqrt(2) lambda_s (x - x_edge) / (M_S (lambda_i + lambda_s) sigma_-).
Signs are for ``blocked_side="below"`` and flip for "above".

Frame synthesis is Poisson shot noise on the expected image, with optional
rounded Gaussian read noise and nominal-phase jitter.  Every frame draws
from its own counter-addressed random substream
(``SeedSequence(seed, spawn_key=(frame_index,))``), so frames can be
generated in any order, or in parallel, with identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .physics import KnifeEdge, OpticalConfig, derive_widths

__all__ = [
    "CameraSpec",
    "PhaseScan",
    "GaussianEnvelope",
    "SceneSpec",
    "FrameStack",
    "MIN_PHASES",
    "edge_image_position",
    "visibility_ff",
    "visibility_nf",
    "counting_rate_ff",
    "counting_rate_nf",
    "expected_image",
    "simulate_stack",
    "simulate_frame",
    "scan_phases",
]

MIN_PHASES = 8          # below this the per-pixel sinusoid fit is under-determined
SATURATION = 65535      # 16-bit count ceiling
_PHASE_STREAM_KEY = 2 ** 32 - 1   # substream index reserved for phase jitter

_MODES = ("ff", "nf")


@dataclass(frozen=True)
class CameraSpec:
    """Pixel grid and count statistics of the detector.

    ``origin_offset`` is the camera-plane coordinate of the center of pixel
    (0, 0); it applies to both axes (x = offset + col * pitch,
    y = offset + row * pitch).  ``None`` centers the grid on the origin.
    """

    width: int = 128
    height: int = 128
    pixel_pitch: float = 20e-6
    origin_offset: float | None = None
    mean_counts: float = 200.0
    readout_sigma: float = 0.0
    dark_rate: float = 0.0

    def __post_init__(self):
        if self.width < 8 or self.height < 8:
            raise ValueError("camera must be at least 8x8 pixels")
        if not self.pixel_pitch > 0:
            raise ValueError("pixel_pitch must be positive")
        if not self.mean_counts >= 0:
            raise ValueError("mean_counts must be nonnegative")
        if self.readout_sigma < 0 or self.dark_rate < 0:
            raise ValueError("readout_sigma and dark_rate must be nonnegative")
        if self.origin_offset is None:
            centered = -0.5 * (self.width - 1) * self.pixel_pitch
            object.__setattr__(self, "origin_offset", centered)

    def x_coords(self) -> np.ndarray:
        return self.origin_offset + self.pixel_pitch * np.arange(self.width)

    def y_coords(self) -> np.ndarray:
        return self.origin_offset + self.pixel_pitch * np.arange(self.height)


def scan_phases(n_phases: int = 360, cycles: float = 1.0) -> np.ndarray:
    """Uniform phase samples over [0, 2 pi cycles)."""
    return 2.0 * math.pi * cycles * np.arange(n_phases) / n_phases


@dataclass(frozen=True)
class PhaseScan:
    """Ordered interferometric phase values, with optional Gaussian jitter.

    ``phases`` are the nominal (recorded) values; when ``jitter_sigma > 0``
    the simulation perturbs the true phase of each frame while the nominal
    tag is kept, modeling an imperfectly calibrated phase stepper.
    """

    phases: np.ndarray
    jitter_sigma: float = 0.0

    def __post_init__(self):
        phases = np.asarray(self.phases, dtype=float)
        if phases.ndim != 1:
            raise ValueError("phases must be a 1-D sequence")
        if len(phases) < MIN_PHASES:
            raise ValueError(
                f"phase scan needs at least {MIN_PHASES} frames, got {len(phases)}")
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be nonnegative")
        object.__setattr__(self, "phases", phases)

    @classmethod
    def uniform(cls, n_phases: int = 360, cycles: float = 1.0,
                jitter_sigma: float = 0.0) -> "PhaseScan":
        return cls(phases=scan_phases(n_phases, cycles), jitter_sigma=jitter_sigma)

    def __len__(self) -> int:
        return len(self.phases)


@dataclass(frozen=True)
class GaussianEnvelope:
    """Gaussian intensity envelope exp(-2 r^2 / waist^2) multiplying the mean image."""

    center: tuple[float, float] = (0.0, 0.0)
    waist: float = 1e-3

    def __post_init__(self):
        if not self.waist > 0:
            raise ValueError("envelope waist must be positive")

    def __call__(self, x, y):
        cx, cy = self.center
        return np.exp(-2.0 * ((x - cx) ** 2 + (y - cy) ** 2) / self.waist ** 2)


@dataclass(frozen=True)
class SceneSpec:
    """What the camera looks at: configuration, knife edge, and imaging mode."""

    mode: str = "ff"
    cfg: OpticalConfig = field(default_factory=OpticalConfig)
    edge: KnifeEdge = field(default_factory=KnifeEdge)
    envelope: GaussianEnvelope | None = None

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")


@dataclass(eq=False)
class FrameStack:
    """Phase-tagged stack of photon-count frames plus acquisition metadata.

    ``frames`` has shape (n_phases, height, width), dtype uint16; counts
    exceeding the 16-bit ceiling are saturated at acquisition and counted
    in ``n_saturated``.
    """

    camera: CameraSpec
    scan: PhaseScan
    frames: np.ndarray
    seed: int
    scene: SceneSpec
    n_saturated: int = 0

    def __post_init__(self):
        frames = np.asarray(self.frames)
        expected = (len(self.scan), self.camera.height, self.camera.width)
        if frames.shape != expected:
            raise ValueError(
                f"frames shape {frames.shape} does not match scan/camera {expected}")
        if frames.dtype != np.uint16:
            if frames.min() < 0 or frames.max() > SATURATION:
                raise ValueError("counts must lie in [0, 65535]")
            frames = frames.astype(np.uint16)
        self.frames = frames


# ---------------------------------------------------------------------------
# Counting rates
# ---------------------------------------------------------------------------

def edge_image_position(cfg: OpticalConfig, edge: KnifeEdge, mode: str) -> float:
    """Camera-plane coordinate where the knife edge appears.

    Far field: the object plane is a Fourier plane, so the edge maps through
    momentum anticorrelation and the (inverting) lens pair to
    ``-(lambda_s/lambda_i) * edge_position``.  Near field: plain imaging,
    ``mag_signal * edge_position / mag_idler``.
    """
    if mode == "ff":
        return -(cfg.lambda_s / cfg.lambda_i) * edge.edge_position
    if mode == "nf":
        return cfg.mag_signal * edge.edge_position / cfg.mag_idler
    raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")


def visibility_ff(cfg: OpticalConfig, x_c, edge: KnifeEdge | None = None):
    """Far-field fringe visibility (edge-spread function) at camera coordinate x_c."""
    if edge is None:
        edge = KnifeEdge()
    x_img = edge_image_position(cfg, edge, "ff")
    sp = derive_widths(cfg).sigma_plus
    arg = (math.sqrt(2.0) * math.pi * sp / (cfg.focal_length * cfg.lambda_s)) \
        * (np.asarray(x_c, dtype=float) - x_img)
    sign = 1.0 if edge.blocked_side == "below" else -1.0
    return 0.5 * cfg.f_ff * (1.0 - sign * erf(arg))


def visibility_nf(cfg: OpticalConfig, x_c, edge: KnifeEdge | None = None):
    """Near-field fringe visibility (edge-spread function) at camera coordinate x_c."""
    if edge is None:
        edge = KnifeEdge()
    x_img = edge_image_position(cfg, edge, "nf")
    sm = derive_widths(cfg).sigma_minus
    arg = (math.sqrt(2.0) * cfg.lambda_s
           / (cfg.mag_signal * (cfg.lambda_i + cfg.lambda_s) * sm)) \
        * (np.asarray(x_c, dtype=float) - x_img)
    sign = 1.0 if edge.blocked_side == "below" else -1.0
    return 0.5 * cfg.f_nf * (1.0 + sign * erf(arg))


def counting_rate_ff(cfg: OpticalConfig, x_c, phi_in, edge: KnifeEdge | None = None):
    """Normalized far-field counting rate 1 + V_ff(x_c) cos(phi_in)."""
    return 1.0 + visibility_ff(cfg, x_c, edge) * np.cos(phi_in)


def counting_rate_nf(cfg: OpticalConfig, x_c, phi_in, edge: KnifeEdge | None = None):
    """Normalized near-field counting rate 1 + V_nf(x_c) cos(phi_in)."""
    return 1.0 + visibility_nf(cfg, x_c, edge) * np.cos(phi_in)


def _rate_row(scene: SceneSpec, x: np.ndarray, phi_in: float) -> np.ndarray:
    if scene.mode == "ff":
        return counting_rate_ff(scene.cfg, x, phi_in, scene.edge)
    return counting_rate_nf(scene.cfg, x, phi_in, scene.edge)


def expected_image(scene: SceneSpec, camera: CameraSpec, phi_in: float) -> np.ndarray:
    """Mean count image at interferometric phase ``phi_in``.

    mean_counts * envelope(x, y) * rate(x, phi_in) + dark_rate, evaluated
    at pixel centers.  The rate does not depend on y, so without an
    envelope every row is identical.
    """
    x = camera.x_coords()
    rate = _rate_row(scene, x, phi_in)
    img = np.broadcast_to(rate, (camera.height, camera.width))
    if scene.envelope is not None:
        y = camera.y_coords()
        img = img * scene.envelope(x[np.newaxis, :], y[:, np.newaxis])
    return camera.mean_counts * img + camera.dark_rate


# ---------------------------------------------------------------------------
# Noisy frame synthesis
# ---------------------------------------------------------------------------

def _frame_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _phase_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(_PHASE_STREAM_KEY,)))


def _true_phases(scan: PhaseScan, seed: int) -> np.ndarray:
    if scan.jitter_sigma == 0.0:
        return scan.phases
    jitter = _phase_rng(seed).normal(0.0, scan.jitter_sigma, size=len(scan))
    return scan.phases + jitter


def simulate_frame(scene: SceneSpec, camera: CameraSpec, phi_true: float,
                   seed: int, index: int) -> tuple[np.ndarray, int]:
    """One noisy frame from its own addressed substream.

    Returns ``(counts_uint16, n_saturated)``.  Poisson shot noise on the
    expected image, then rounded Gaussian read noise, clamped at 0 and
    saturated at 65535.
    """
    mean = expected_image(scene, camera, phi_true)
    rng = _frame_rng(seed, index)
    counts = rng.poisson(mean).astype(np.int64)
    if camera.readout_sigma > 0.0:
        counts += np.rint(rng.normal(0.0, camera.readout_sigma,
                                     size=counts.shape)).astype(np.int64)
    np.maximum(counts, 0, out=counts)
    n_sat = int(np.count_nonzero(counts > SATURATION))
    np.minimum(counts, SATURATION, out=counts)
    return counts.astype(np.uint16), n_sat


def simulate_stack(scene: SceneSpec, camera: CameraSpec, scan: PhaseScan,
                   seed: int) -> FrameStack:
    """Synthesize a full phase-scanned stack, deterministic in ``seed``.

    Identical (scene, camera, scan, seed) always yield an identical stack;
    each frame's noise comes from substream ``spawn_key=(frame_index,)``,
    independent of the order frames are generated in.
    """
    if len(scan) >= _PHASE_STREAM_KEY:
        raise ValueError("scan too long for the substream address space")
    phis = _true_phases(scan, seed)
    frames = np.empty((len(scan), camera.height, camera.width), dtype=np.uint16)
    n_saturated = 0
    for i, phi in enumerate(phis):
        frames[i], n_sat = simulate_frame(scene, camera, phi, seed, i)
        n_saturated += n_sat
    return FrameStack(camera=camera, scan=scan, frames=frames, seed=seed,
                      scene=scene, n_saturated=n_saturated)
