"""Frame-stack serialization and run-configuration parsing.

Stack file layout (all little-endian):

    offset  size            field
    0       4               magic "ICFS"
    4       4  uint32       format version (currently 1)
    8       4  uint32       width  [pixels]
    12      4  uint32       height [pixels]
    16      4  uint32       n_frames
    20      8  float64      pixel_pitch   [m]
    28      8  float64      origin_offset [m]
    36      8  uint64       seed
    44      8*n  float64    phase values [rad]
    ...     2*n*h*w uint16  frames, row-major, frame-major

Counts above 65535 are saturated on write and the saturation count is
recorded in the sidecar.  A sibling text document (``<path>.meta``) echoes
the full run configuration in ``key = value`` form so a stack file plus its
sidecar reconstruct the originating :class:`FrameStack` exactly.

Run configuration files are plain ``key = value`` text (``#`` comments,
blank lines allowed): lengths in meters, angles in radians, unknown keys
rejected.  Every parse error names the offending key and line.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .physics import KnifeEdge, OpticalConfig
from .simulate import (
    SATURATION,
    CameraSpec,
    FrameStack,
    GaussianEnvelope,
    PhaseScan,
    SceneSpec,
)

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "ConfigError",
    "StackFormatError",
    "RunConfig",
    "parse_run_config",
    "read_run_config",
    "render_run_config",
    "write_stack",
    "read_stack",
]

MAGIC = b"ICFS"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIIddQ")


class ConfigError(ValueError):
    """Configuration parse/validation failure, carrying key and line number."""

    def __init__(self, message: str, key: str | None = None,
                 line: int | None = None):
        loc = ""
        if key is not None:
            loc += f" (key '{key}'"
            loc += f", line {line})" if line is not None else ")"
        elif line is not None:
            loc += f" (line {line})"
        super().__init__(message + loc)
        self.key = key
        self.line = line


class StackFormatError(ValueError):
    """Malformed stack file, carrying the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    """Everything needed to simulate one acquisition."""

    cfg: OpticalConfig = field(default_factory=OpticalConfig)
    camera: CameraSpec = field(default_factory=CameraSpec)
    mode: str = "ff"
    edge: KnifeEdge = field(default_factory=KnifeEdge)
    envelope: GaussianEnvelope | None = None
    n_phases: int = 360
    cycles: float = 1.0
    jitter_sigma: float = 0.0

    def scene(self) -> SceneSpec:
        return SceneSpec(mode=self.mode, cfg=self.cfg, edge=self.edge,
                         envelope=self.envelope)

    def scan(self) -> PhaseScan:
        return PhaseScan.uniform(self.n_phases, self.cycles, self.jitter_sigma)

    def with_mode(self, mode: str) -> "RunConfig":
        return replace(self, mode=mode)


def _parse_float(raw: str, key: str, line: int) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"expected a number, got {raw!r}", key, line) from None


def _parse_int(raw: str, key: str, line: int) -> int:
    try:
        return int(raw, 0)
    except ValueError:
        raise ConfigError(f"expected an integer, got {raw!r}", key, line) from None


def _parse_choice(raw: str, choices: tuple, key: str, line: int) -> str:
    if raw not in choices:
        raise ConfigError(f"expected one of {choices}, got {raw!r}", key, line)
    return raw


_FLOAT_KEYS = {
    "optics.lambda_p": ("cfg", "lambda_p"),
    "optics.lambda_s": ("cfg", "lambda_s"),
    "optics.lambda_i": ("cfg", "lambda_i"),
    "optics.crystal_length": ("cfg", "crystal_length"),
    "optics.pump_waist": ("cfg", "pump_waist"),
    "optics.focal_length": ("cfg", "focal_length"),
    "optics.mag_signal": ("cfg", "mag_signal"),
    "optics.mag_idler": ("cfg", "mag_idler"),
    "optics.f_ff": ("cfg", "f_ff"),
    "optics.f_nf": ("cfg", "f_nf"),
    "camera.pixel_pitch": ("camera", "pixel_pitch"),
    "camera.origin_offset": ("camera", "origin_offset"),
    "camera.mean_counts": ("camera", "mean_counts"),
    "camera.readout_sigma": ("camera", "readout_sigma"),
    "camera.dark_rate": ("camera", "dark_rate"),
    "edge.position": ("edge", "edge_position"),
    "envelope.center_x": ("envelope", "center_x"),
    "envelope.center_y": ("envelope", "center_y"),
    "envelope.waist": ("envelope", "waist"),
    "scan.cycles": ("scan", "cycles"),
    "scan.jitter_sigma": ("scan", "jitter_sigma"),
}
_INT_KEYS = {
    "camera.width": ("camera", "width"),
    "camera.height": ("camera", "height"),
    "scan.n_phases": ("scan", "n_phases"),
}
_CHOICE_KEYS = {
    "scene.mode": (("ff", "nf"), ("scene", "mode")),
    "edge.blocked_side": (("below", "above"), ("edge", "blocked_side")),
}
KNOWN_KEYS = frozenset(_FLOAT_KEYS) | frozenset(_INT_KEYS) | frozenset(_CHOICE_KEYS)


def parse_run_config(text: str) -> RunConfig:
    """Parse a ``key = value`` configuration document into a :class:`RunConfig`."""
    values: dict[str, object] = {}
    lines: dict[str, int] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        stripped = raw_line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected 'key = value', got {stripped!r}",
                              line=lineno)
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError("unknown configuration key", key, lineno)
        if key in values:
            raise ConfigError("duplicate configuration key", key, lineno)
        lines[key] = lineno
        if key in _FLOAT_KEYS:
            values[key] = _parse_float(raw, key, lineno)
        elif key in _INT_KEYS:
            values[key] = _parse_int(raw, key, lineno)
        else:
            choices, _ = _CHOICE_KEYS[key]
            values[key] = _parse_choice(raw, choices, key, lineno)

    def group(prefix: str) -> dict[str, object]:
        out = {}
        for key, val in values.items():
            section, _, name = key.partition(".")
            if section == prefix:
                out[name] = val
        return out

    try:
        cfg = OpticalConfig(**group("optics"))
        camera = CameraSpec(**group("camera"))
        edge_kwargs = group("edge")
        if "position" in edge_kwargs:
            edge_kwargs["edge_position"] = edge_kwargs.pop("position")
        edge = KnifeEdge(**edge_kwargs)
        env_kwargs = group("envelope")
        envelope = None
        if env_kwargs:
            envelope = GaussianEnvelope(
                center=(float(env_kwargs.get("center_x", 0.0)),
                        float(env_kwargs.get("center_y", 0.0))),
                waist=float(env_kwargs.get("waist", 1e-3)))
        scan_kwargs = group("scan")
        run = RunConfig(
            cfg=cfg,
            camera=camera,
            mode=str(values.get("scene.mode", "ff")),
            edge=edge,
            envelope=envelope,
            n_phases=int(scan_kwargs.get("n_phases", 360)),
            cycles=float(scan_kwargs.get("cycles", 1.0)),
            jitter_sigma=float(scan_kwargs.get("jitter_sigma", 0.0)),
        )
        run.scan()   # validates n_phases >= 8 and jitter_sigma >= 0
        return run
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def read_run_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_run_config(fh.read())


def render_run_config(run: RunConfig, extra: dict[str, object] | None = None) -> str:
    """Serialize a :class:`RunConfig` back to its textual form."""
    pairs = [
        ("scene.mode", run.mode),
        ("optics.lambda_p", run.cfg.lambda_p),
        ("optics.lambda_s", run.cfg.lambda_s),
        ("optics.lambda_i", run.cfg.lambda_i),
        ("optics.crystal_length", run.cfg.crystal_length),
        ("optics.pump_waist", run.cfg.pump_waist),
        ("optics.focal_length", run.cfg.focal_length),
        ("optics.mag_signal", run.cfg.mag_signal),
        ("optics.mag_idler", run.cfg.mag_idler),
        ("optics.f_ff", run.cfg.f_ff),
        ("optics.f_nf", run.cfg.f_nf),
        ("camera.width", run.camera.width),
        ("camera.height", run.camera.height),
        ("camera.pixel_pitch", run.camera.pixel_pitch),
        ("camera.origin_offset", run.camera.origin_offset),
        ("camera.mean_counts", run.camera.mean_counts),
        ("camera.readout_sigma", run.camera.readout_sigma),
        ("camera.dark_rate", run.camera.dark_rate),
        ("scan.n_phases", run.n_phases),
        ("scan.cycles", run.cycles),
        ("scan.jitter_sigma", run.jitter_sigma),
        ("edge.position", run.edge.edge_position),
        ("edge.blocked_side", run.edge.blocked_side),
    ]
    if run.envelope is not None:
        pairs += [
            ("envelope.center_x", run.envelope.center[0]),
            ("envelope.center_y", run.envelope.center[1]),
            ("envelope.waist", run.envelope.waist),
        ]
    out = ["# icfringe run configuration"]
    out += [f"{key} = {value!r}" if isinstance(value, float)
            else f"{key} = {value}" for key, value in pairs]
    if extra:
        out.append("")
        out += [f"# {key} = {value}" for key, value in extra.items()]
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Binary stack files
# ---------------------------------------------------------------------------

def _sidecar_path(path) -> str:
    return f"{path}.meta"


def write_stack(stack: FrameStack, path) -> int:
    """Write a stack file plus its metadata sidecar.

    Returns the number of saturated counts (pixels clipped to 65535 either
    at acquisition or at write time).
    """
    frames = stack.frames
    n_sat_write = int(np.count_nonzero(frames > SATURATION))
    frames16 = np.minimum(frames, SATURATION).astype("<u2")
    n_frames, height, width = frames.shape
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, width, height, n_frames,
                          stack.camera.pixel_pitch, stack.camera.origin_offset,
                          stack.seed)
    phases = np.asarray(stack.scan.phases, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(phases.tobytes())
        fh.write(frames16.tobytes())
    n_saturated = stack.n_saturated + n_sat_write
    cycles = _infer_cycles(stack.scan.phases)
    run = RunConfig(
        cfg=stack.scene.cfg,
        camera=stack.camera,
        mode=stack.scene.mode,
        edge=stack.scene.edge,
        envelope=stack.scene.envelope,
        n_phases=len(stack.scan),
        cycles=cycles if math.isfinite(cycles) else 1.0,
        jitter_sigma=stack.scan.jitter_sigma,
    )
    meta = render_run_config(run)
    meta += f"seed = {stack.seed}\n"
    meta += f"stack.n_saturated = {n_saturated}\n"
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        fh.write(meta)
    return n_saturated


def _infer_cycles(phases: np.ndarray) -> float:
    """Cycle count if the phases are a uniform [0, 2 pi cycles) grid, else nan."""
    n = len(phases)
    if n < 2:
        return float("nan")
    step = phases[1] - phases[0]
    uniform = np.allclose(np.diff(phases), step, rtol=0, atol=1e-12)
    if uniform and phases[0] == 0.0:
        return float(step * n / (2.0 * math.pi))
    return float("nan")


def _read_exact(fh, n: int, what: str, offset: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise StackFormatError(
            f"truncated file: expected {n} bytes of {what}, got {len(data)}",
            offset)
    return data


def read_stack(path) -> FrameStack:
    """Read a stack file and its sidecar back into a :class:`FrameStack`."""
    with open(path, "rb") as fh:
        offset = 0
        raw = _read_exact(fh, _HEADER.size, "header", offset)
        magic, version, width, height, n_frames, pitch, origin, seed = \
            _HEADER.unpack(raw)
        if magic != MAGIC:
            raise StackFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
        if version != FORMAT_VERSION:
            raise StackFormatError(f"unsupported format version {version}", 4)
        offset = _HEADER.size
        phase_bytes = _read_exact(fh, 8 * n_frames, "phase values", offset)
        phases = np.frombuffer(phase_bytes, dtype="<f8").copy()
        offset += 8 * n_frames
        frame_bytes = _read_exact(fh, 2 * n_frames * height * width,
                                  "frame data", offset)
        trailing = fh.read(1)
        if trailing:
            raise StackFormatError(
                "trailing bytes after declared payload",
                offset + 2 * n_frames * height * width)
    frames = np.frombuffer(frame_bytes, dtype="<u2").reshape(
        n_frames, height, width).astype(np.uint16)

    meta_path = _sidecar_path(path)
    try:
        with open(meta_path, "r", encoding="utf-8") as fh:
            meta_text = fh.read()
    except FileNotFoundError:
        raise ConfigError(f"missing metadata sidecar {meta_path}") from None
    meta_lines = []
    n_saturated = 0
    meta_seed = seed
    for line in meta_text.splitlines():
        stripped = line.strip()
        if stripped.startswith("stack.n_saturated"):
            n_saturated = int(stripped.split("=")[1])
        elif stripped.startswith("seed"):
            meta_seed = int(stripped.split("=")[1])
        else:
            meta_lines.append(line)
    run = parse_run_config("\n".join(meta_lines))
    if meta_seed != seed:
        raise ConfigError(
            f"sidecar seed {meta_seed} does not match stack seed {seed}")
    if (run.camera.width, run.camera.height) != (width, height):
        raise ConfigError("sidecar camera geometry does not match stack header")
    scan = PhaseScan(phases=phases, jitter_sigma=run.jitter_sigma)
    return FrameStack(camera=run.camera, scan=scan, frames=frames, seed=seed,
                      scene=run.scene(), n_saturated=n_saturated)
