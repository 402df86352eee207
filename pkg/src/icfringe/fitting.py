"""Fringe and edge-spread-function fitting.

The analysis chain mirrors the measurement procedure: fit a sinusoid
``a (1 + v cos(phi - phi0))`` to every pixel's phase series (linear least
squares in the basis {1, cos, sin} -- exactly solvable, no iteration),
assemble the per-pixel visibilities into a map, average a band of pixel
rows into a 1-D cross-section, and fit the cross-section with the
edge-spread model

    V(x) = (V_max / 2) (1 -/+ erf((x - x0) / D))

(``sign="falling"`` uses the minus branch).  The width ``D`` is the inverse
coefficient of the erf argument; the visibility rises from 24% to 76% of
its plateau over the distance ``2 erfinv(0.52) D ~= 0.99886 D``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf as _scipy_erf
from scipy.special import erfinv as _scipy_erfinv

from .simulate import MIN_PHASES, FrameStack

__all__ = [
    "SinusoidFit",
    "VisibilityMap",
    "EsfProfile",
    "EsfFit",
    "EsfFitError",
    "erf_eval",
    "fit_sinusoid",
    "fit_sinusoid_grid",
    "build_visibility_map",
    "best_band_center",
    "extract_cross_section",
    "infer_esf_sign",
    "fit_esf",
    "rise_width_24_76",
    "RISE_FRACTION_LOW",
    "RISE_FRACTION_HIGH",
]

_SIGNS = ("falling", "rising")
RISE_FRACTION_LOW = 0.24
RISE_FRACTION_HIGH = 0.76

DEFAULT_COUNT_FLOOR = 1.0   # minimum fitted offset for a pixel to count as valid


def erf_eval(x):
    """Error function, accurate to better than 1e-10 over |x| <= 6."""
    return _scipy_erf(x)


@dataclass(frozen=True)
class SinusoidFit:
    """Result of fitting a (1, cos, sin) model to one pixel's phase series.

    ``visibility = amplitude / offset``; it is not clamped, so values above
    1 survive and signal pathological data.  ``valid`` is False for
    under-determined designs or nonpositive offsets.
    """

    offset: float
    amplitude: float
    phase: float
    visibility: float
    rms_residual: float
    valid: bool


def _design_matrix(phases: np.ndarray) -> np.ndarray:
    return np.column_stack(
        (np.ones_like(phases), np.cos(phases), np.sin(phases)))


def _design_ok(phases: np.ndarray) -> bool:
    if len(phases) < MIN_PHASES:
        return False
    a = _design_matrix(phases)
    sv = np.linalg.svd(a, compute_uv=False)
    return sv[-1] > 1e-10 * sv[0]


def fit_sinusoid(phases, counts) -> SinusoidFit:
    """Least-squares sinusoid fit of one phase series.

    The model a + b cos(phi - phi0) is linear in (a, b cos phi0, b sin phi0),
    so the fit is exact on noiseless sinusoidal data.
    """
    phases = np.asarray(phases, dtype=float)
    counts = np.asarray(counts, dtype=float)
    if phases.shape != counts.shape or phases.ndim != 1:
        raise ValueError("phases and counts must be 1-D arrays of equal length")
    if not _design_ok(phases):
        return SinusoidFit(float("nan"), float("nan"), float("nan"),
                           float("nan"), float("nan"), valid=False)
    a = _design_matrix(phases)
    coef, *_ = np.linalg.lstsq(a, counts, rcond=None)
    resid = a @ coef - counts
    offset = float(coef[0])
    amplitude = float(np.hypot(coef[1], coef[2]))
    phase = float(np.arctan2(coef[2], coef[1]))
    valid = offset > 0.0
    visibility = amplitude / offset if valid else float("nan")
    rms = float(np.sqrt(np.mean(resid ** 2)))
    return SinusoidFit(offset, amplitude, phase, visibility, rms, valid)


def fit_sinusoid_grid(phases: np.ndarray, frames: np.ndarray,
                      count_floor: float = DEFAULT_COUNT_FLOOR):
    """Vectorized sinusoid fit of every pixel in a (n, H, W) stack.

    Returns (offset, amplitude, phase, visibility, rms, valid) arrays of
    shape (H, W).  Pixels whose fitted offset falls below ``count_floor``
    are marked invalid.
    """
    phases = np.asarray(phases, dtype=float)
    frames = np.asarray(frames, dtype=float)
    n, h, w = frames.shape
    if len(phases) != n:
        raise ValueError("frame count does not match phase count")
    if not _design_ok(phases):
        nanmap = np.full((h, w), np.nan)
        return (nanmap, nanmap.copy(), nanmap.copy(), nanmap.copy(),
                nanmap.copy(), np.zeros((h, w), dtype=bool))
    a = _design_matrix(phases)
    y = frames.reshape(n, h * w)
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = a @ coef - y
    offset = coef[0].reshape(h, w)
    amplitude = np.hypot(coef[1], coef[2]).reshape(h, w)
    phase = np.arctan2(coef[2], coef[1]).reshape(h, w)
    rms = np.sqrt(np.mean(resid ** 2, axis=0)).reshape(h, w)
    valid = offset > count_floor
    with np.errstate(divide="ignore", invalid="ignore"):
        visibility = np.where(valid, amplitude / offset, np.nan)
    return offset, amplitude, phase, visibility, rms, valid


@dataclass(eq=False)
class VisibilityMap:
    """Per-pixel sinusoid-fit results over a frame stack.

    Struct-of-arrays layout; all arrays share the stack's (H, W) shape.
    ``x`` holds the camera-plane x coordinate of each column.
    """

    offset: np.ndarray
    amplitude: np.ndarray
    phase: np.ndarray
    visibility: np.ndarray
    rms_residual: np.ndarray
    valid: np.ndarray
    x: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.offset.shape

    def fit_at(self, row: int, col: int) -> SinusoidFit:
        return SinusoidFit(
            offset=float(self.offset[row, col]),
            amplitude=float(self.amplitude[row, col]),
            phase=float(self.phase[row, col]),
            visibility=float(self.visibility[row, col]),
            rms_residual=float(self.rms_residual[row, col]),
            valid=bool(self.valid[row, col]),
        )


def build_visibility_map(stack: FrameStack,
                         count_floor: float = DEFAULT_COUNT_FLOOR) -> VisibilityMap:
    """Fit every pixel of a frame stack and assemble the visibility map."""
    offset, amplitude, phase, visibility, rms, valid = fit_sinusoid_grid(
        stack.scan.phases, stack.frames, count_floor)
    return VisibilityMap(offset, amplitude, phase, visibility, rms, valid,
                         x=stack.camera.x_coords())


@dataclass(eq=False)
class EsfProfile:
    """Cross-section of a visibility map: column-wise band average.

    ``x`` is strictly increasing; columns without any valid pixel in the
    band are dropped.
    """

    x: np.ndarray
    visibility: np.ndarray
    std: np.ndarray
    rows_averaged: int


def best_band_center(vmap: VisibilityMap, rows: int = 20) -> int:
    """Center row of the ``rows``-row band with the highest mean visibility."""
    h = vmap.shape[0]
    if not 1 <= rows <= h:
        raise ValueError("rows must lie in [1, height]")
    vis = np.where(vmap.valid, vmap.visibility, np.nan)
    row_mean = np.nanmean(
        np.where(np.isnan(vis), 0.0, vis), axis=1)
    # zero-filled mean penalizes rows with many invalid pixels
    window = np.convolve(row_mean, np.ones(rows) / rows, mode="valid")
    start = int(np.argmax(window))
    return start + rows // 2


def extract_cross_section(vmap: VisibilityMap, band_center_row: int,
                          rows: int = 20) -> EsfProfile:
    """Column-wise mean and std of visibility over a band of pixel rows."""
    if rows < 1:
        raise ValueError("rows must be >= 1")
    h, w = vmap.shape
    start = band_center_row - rows // 2
    stop = start + rows
    if start < 0 or stop > h:
        raise ValueError(
            f"band rows [{start}, {stop}) fall outside the image of height {h}")
    band = vmap.visibility[start:stop]
    mask = vmap.valid[start:stop]
    if not mask.any():
        raise ValueError("band contains no valid pixels")
    n_valid = mask.sum(axis=0)
    band_filled = np.where(mask, band, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = band_filled.sum(axis=0) / n_valid
        var = np.where(mask, (band - mean) ** 2, 0.0).sum(axis=0) / n_valid
    keep = n_valid > 0
    return EsfProfile(
        x=vmap.x[keep],
        visibility=mean[keep],
        std=np.sqrt(var[keep]),
        rows_averaged=rows,
    )


# ---------------------------------------------------------------------------
# Edge-spread-function fit
# ---------------------------------------------------------------------------

class EsfFitError(ValueError):
    """Raised when a profile cannot support an edge-spread fit."""


@dataclass(eq=False)
class EsfFit:
    """Fitted edge-spread model (V_max / 2)(1 -/+ erf((x - x0) / D)).

    ``covariance`` is the 3x3 covariance of (v_max, x0, width) from the
    residual variance and the Gauss-Newton quadratic model at the solution.
    """

    v_max: float
    x0: float
    width: float
    sign: str
    covariance: np.ndarray
    converged: bool
    n_iterations: int
    rms_residual: float

    @property
    def width_sigma(self) -> float:
        return float(np.sqrt(self.covariance[2, 2]))


def _esf_model(x, v_max, x0, width, s):
    u = (x - x0) / width
    return 0.5 * v_max * (1.0 + s * erf_eval(u))


def _esf_jacobian(x, v_max, x0, width, s):
    u = (x - x0) / width
    g = np.exp(-u * u) / math.sqrt(math.pi)    # d erf(u)/du / 2
    j = np.empty((len(x), 3))
    j[:, 0] = 0.5 * (1.0 + s * erf_eval(u))
    j[:, 1] = -v_max * s * g / width
    j[:, 2] = -v_max * s * g * u / width
    return j


def _crossing(x, v, level, rising: bool):
    """First x where the profile crosses ``level``, linearly interpolated."""
    above = v >= level if rising else v <= level
    idx = np.flatnonzero(above)
    if len(idx) == 0 or idx[0] == 0:
        return None
    i = idx[0]
    v0, v1 = v[i - 1], v[i]
    if v1 == v0:
        return float(x[i])
    t = (level - v0) / (v1 - v0)
    return float(x[i - 1] + t * (x[i] - x[i - 1]))


def _initial_guess(x, v, sign: str):
    rising = sign == "rising"
    n = len(x)
    n_plateau = max(3, n // 4)
    open_slice = slice(n - n_plateau, n) if rising else slice(0, n_plateau)
    v_max0 = float(np.mean(v[open_slice]))
    if not v_max0 > 0:
        raise EsfFitError("open-side plateau is not positive; no transition to fit")
    lo = _crossing(x, v, RISE_FRACTION_LOW * v_max0, rising)
    hi = _crossing(x, v, RISE_FRACTION_HIGH * v_max0, rising)
    x0 = _crossing(x, v, 0.5 * v_max0, rising)
    if lo is None or hi is None or x0 is None or hi == lo:
        raise EsfFitError("profile has no 24%-76% transition; cannot fit an edge")
    rise = abs(hi - lo)
    width0 = rise / (2.0 * float(_scipy_erfinv(RISE_FRACTION_HIGH - RISE_FRACTION_LOW)))
    n_low = int(np.sum(x < min(lo, hi)))
    n_high = int(np.sum(x > max(lo, hi)))
    if n_low < 3 or n_high < 3:
        raise EsfFitError(
            f"profile must span both plateaus (>=3 columns each side of the "
            f"transition; got {n_low} below and {n_high} above)")
    return v_max0, x0, width0


def fit_esf(profile: EsfProfile, sign: str, weighted: bool = False,
            max_iterations: int = 200) -> EsfFit:
    """Levenberg-Marquardt fit of the erf edge-spread model to a profile.

    Starting values come from the open-side plateau mean, the half-maximum
    crossing, and the empirical 24%-76% rise.  Convergence requires a
    relative parameter step below 1e-10 or a gradient infinity-norm below
    1e-12 within ``max_iterations``; otherwise the last iterate is returned
    with ``converged=False``.  With ``weighted=True`` residuals are scaled
    by 1/std (columns with zero std fall back to the median std).
    """
    if sign not in _SIGNS:
        raise ValueError(f"sign must be one of {_SIGNS}, got {sign!r}")
    x = np.asarray(profile.x, dtype=float)
    v = np.asarray(profile.visibility, dtype=float)
    if len(x) < 7:
        raise EsfFitError("profile too short for a 3-parameter edge fit")
    s = 1.0 if sign == "rising" else -1.0

    if weighted:
        std = np.asarray(profile.std, dtype=float).copy()
        fallback = np.median(std[std > 0]) if (std > 0).any() else 1.0
        std[std <= 0] = fallback
        wgt = 1.0 / std
    else:
        wgt = np.ones_like(v)

    p = np.array(_initial_guess(x, v, sign))
    scale = np.array([max(abs(p[0]), 1e-12),
                      max(abs(p[2]), abs(p[1]), 1e-12),
                      max(abs(p[2]), 1e-12)])
    step_tol, grad_tol = 1e-10, 1e-12

    def residuals(params):
        return wgt * (_esf_model(x, *params, s) - v)

    r = residuals(p)
    cost = 0.5 * float(r @ r)
    lam = 1e-3
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iterations + 1):
        j = wgt[:, None] * _esf_jacobian(x, *p, s)
        g = j.T @ r
        if np.max(np.abs(g)) < grad_tol:
            converged = True
            break
        jtj = j.T @ j
        accepted = False
        while lam < 1e15:
            aug = jtj + lam * np.diag(np.diag(jtj))
            try:
                delta = np.linalg.solve(aug, -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            p_new = p + delta
            if p_new[2] <= 0 or p_new[0] <= 0:
                lam *= 10.0
                continue
            r_new = residuals(p_new)
            cost_new = 0.5 * float(r_new @ r_new)
            if cost_new <= cost:
                p, r, cost = p_new, r_new, cost_new
                lam = max(lam / 10.0, 1e-15)
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            break
        if np.max(np.abs(delta) / scale) < step_tol:
            converged = True
            break

    j = wgt[:, None] * _esf_jacobian(x, *p, s)
    dof = len(x) - 3
    if dof > 0:
        resid_var = float(r @ r) / dof
        try:
            covariance = resid_var * np.linalg.inv(j.T @ j)
        except np.linalg.LinAlgError:
            covariance = np.full((3, 3), np.nan)
    else:
        covariance = np.full((3, 3), np.nan)
    return EsfFit(
        v_max=float(p[0]),
        x0=float(p[1]),
        width=float(p[2]),
        sign=sign,
        covariance=covariance,
        converged=converged,
        n_iterations=n_iter,
        rms_residual=float(np.sqrt(np.mean((r / wgt) ** 2))),
    )


def infer_esf_sign(profile: EsfProfile) -> str:
    """Guess the transition direction from the two profile ends."""
    n = len(profile.visibility)
    k = max(3, n // 4)
    return "rising" if (np.mean(profile.visibility[-k:])
                        > np.mean(profile.visibility[:k])) else "falling"


def rise_width_24_76(fit: EsfFit) -> float:
    """Distance over which the fitted visibility rises from 24% to 76% of its plateau.

    Equals 2 erfinv(0.52) * D ~= 0.99886 D, i.e. essentially the width D
    itself (D is exactly the 23.98%-76.02% rise distance).
    """
    return 2.0 * float(_scipy_erfinv(RISE_FRACTION_HIGH - RISE_FRACTION_LOW)) * fit.width
