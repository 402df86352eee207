"""Brute-force quadrature cross-checks of every closed form.

Each function here recomputes a quantity that ``physics``/``simulate``
provide in closed form, by direct numerical integration of the Gaussian
densities:

* conditional variances, as second central moments of the conditional
  densities;
* the sum/difference variances of the MGVT test, as moments of the full
  joint densities (integrated in decorrelated sum/difference coordinates,
  where the Gaussians are axis-aligned at any aspect ratio);
* the counting rates, as object-transmission integrals against the
  densities, split at the knife edge so the discontinuity costs no
  accuracy;
* density normalizations.

Quadrature defaults to 256-point Gauss-Legendre per dimension over +/- 8
envelope sigmas; the trapezoid rule is available as a second, independent
rule.  Grids must cover at least 6 sigma of the integrand's envelope or a
:class:`GridCoverageError` is raised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .physics import (
    KnifeEdge,
    OpticalConfig,
    conditional_momentum_pair_pdf,
    conditional_position_pair_pdf,
    derive_widths,
    knife_edge_transmission,
    momentum_pair_pdf,
    position_pair_pdf,
)
from .simulate import edge_image_position

__all__ = [
    "QuadratureGrid",
    "GridCoverageError",
    "numeric_cond_var_momentum",
    "numeric_cond_var_position",
    "numeric_mgvt_variances",
    "numeric_counting_rate_ff",
    "numeric_counting_rate_nf",
    "normalization_check",
    "momentum_envelope",
    "position_envelope",
    "momentum_sum_diff_density",
    "position_diff_sum_density",
    "CheckResult",
    "CHECK_NAMES",
    "run_check",
    "run_suite",
]

_RULES = ("trapezoid", "gauss_legendre")
DEFAULT_POINTS = 256
DEFAULT_SPAN_SIGMA = 8.0
MIN_COVERAGE_SIGMA = 6.0


class GridCoverageError(ValueError):
    """Grid bounds do not cover the required span of the integrand envelope."""


@dataclass(frozen=True)
class QuadratureGrid:
    """Tensor-product quadrature grid: per-dimension bounds, points, rule."""

    bounds: tuple[tuple[float, float], ...]
    points: int = DEFAULT_POINTS
    rule: str = "gauss_legendre"

    def __post_init__(self):
        if self.points < 64:
            raise ValueError("quadrature needs at least 64 points per dimension")
        if self.rule not in _RULES:
            raise ValueError(f"rule must be one of {_RULES}, got {self.rule!r}")
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        for lo, hi in bounds:
            if not hi > lo:
                raise ValueError("each bound must satisfy lo < hi")
        object.__setattr__(self, "bounds", bounds)

    @classmethod
    def centered(cls, centers, sigmas, span_sigma: float = DEFAULT_SPAN_SIGMA,
                 points: int = DEFAULT_POINTS,
                 rule: str = "gauss_legendre") -> "QuadratureGrid":
        bounds = tuple(
            (c - span_sigma * s, c + span_sigma * s)
            for c, s in zip(np.atleast_1d(centers), np.atleast_1d(sigmas)))
        return cls(bounds=bounds, points=points, rule=rule)

    @property
    def ndim(self) -> int:
        return len(self.bounds)

    def nodes_weights(self, dim: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.bounds[dim]
        if self.rule == "gauss_legendre":
            t, w = leggauss(self.points)
            half = 0.5 * (hi - lo)
            return lo + half * (t + 1.0), half * w
        x = np.linspace(lo, hi, self.points)
        w = np.full(self.points, x[1] - x[0])
        w[0] *= 0.5
        w[-1] *= 0.5
        return x, w

    def require_coverage(self, dim: int, center: float, sigma: float) -> None:
        lo, hi = self.bounds[dim]
        need_lo = center - MIN_COVERAGE_SIGMA * sigma
        need_hi = center + MIN_COVERAGE_SIGMA * sigma
        if lo > need_lo or hi < need_hi:
            raise GridCoverageError(
                f"grid dimension {dim} spans [{lo:g}, {hi:g}] but the integrand "
                f"envelope needs [{need_lo:g}, {need_hi:g}] "
                f"({MIN_COVERAGE_SIGMA:g} sigma coverage)")


# ---------------------------------------------------------------------------
# Envelope helpers (centers and widths used only to place/validate grids)
# ---------------------------------------------------------------------------

def momentum_envelope(cfg: OpticalConfig, k_sx: float) -> tuple[float, float]:
    """(center, sigma) of the conditional idler momentum distribution."""
    w = derive_widths(cfg)
    r = cfg.wavelength_ratio
    prec = w.sigma_plus ** 2 + r ** 2 * w.sigma_minus ** 2
    return -(w.sigma_plus ** 2 - r * w.sigma_minus ** 2) * k_sx / prec, prec ** -0.5


def position_envelope(cfg: OpticalConfig, x_s: float) -> tuple[float, float]:
    """(center, sigma) of the conditional idler position distribution."""
    w = derive_widths(cfg)
    r = cfg.wavelength_ratio
    sp2, sm2 = w.sigma_plus ** 2, w.sigma_minus ** 2
    var = ((1.0 + r) / 2.0) ** 2 * sp2 * sm2 / (sp2 + sm2)
    return (sp2 - r * sm2) * x_s / (sp2 + sm2), math.sqrt(var)


def _moments_1d(f, grid: QuadratureGrid):
    x, w = grid.nodes_weights(0)
    p = f(x)
    m0 = float(w @ p)
    m1 = float(w @ (x * p))
    m2 = float(w @ (x * x * p))
    return m0, m1, m2


# ---------------------------------------------------------------------------
# Conditional variances
# ---------------------------------------------------------------------------

def numeric_cond_var_momentum(cfg: OpticalConfig, k_sx: float = 0.0,
                              grid: QuadratureGrid | None = None,
                              **grid_opts) -> float:
    """Conditional momentum variance by 1-D quadrature of the conditional density."""
    center, sigma = momentum_envelope(cfg, k_sx)
    if grid is None:
        grid = QuadratureGrid.centered([center], [sigma], **grid_opts)
    grid.require_coverage(0, center, sigma)
    m0, m1, m2 = _moments_1d(
        lambda k: conditional_momentum_pair_pdf(cfg, k, k_sx), grid)
    return m2 / m0 - (m1 / m0) ** 2


def numeric_cond_var_position(cfg: OpticalConfig, x_s: float = 0.0,
                              grid: QuadratureGrid | None = None,
                              **grid_opts) -> float:
    """Conditional position variance by 1-D quadrature of the conditional density."""
    center, sigma = position_envelope(cfg, x_s)
    if grid is None:
        grid = QuadratureGrid.centered([center], [sigma], **grid_opts)
    grid.require_coverage(0, center, sigma)
    m0, m1, m2 = _moments_1d(
        lambda xi: conditional_position_pair_pdf(cfg, xi, x_s), grid)
    return m2 / m0 - (m1 / m0) ** 2


# ---------------------------------------------------------------------------
# MGVT variances
# ---------------------------------------------------------------------------

def momentum_sum_diff_density(cfg: OpticalConfig):
    """Full momentum pair density in decorrelated (sum, diff) coordinates.

    Returns ``(f, (sigma_sum, sigma_diff))`` where ``f(u, v)`` is the
    density of u = k_s + k_i and v = k_s - r k_i (Jacobian included), an
    axis-aligned Gaussian product at any sigma ratio.
    """
    w = derive_widths(cfg)
    r = cfg.wavelength_ratio

    def f(u, v):
        k_s = (r * u + v) / (1.0 + r)
        k_i = (u - v) / (1.0 + r)
        return momentum_pair_pdf(cfg, k_s, k_i, "full") / (1.0 + r)

    return f, (1.0 / w.sigma_plus, 1.0 / w.sigma_minus)


def position_diff_sum_density(cfg: OpticalConfig):
    """Full position pair density in decorrelated (diff, sum) coordinates.

    Returns ``(f, (sigma_diff, sigma_sum))`` where ``f(b, a)`` is the
    density of b = x_s - x_i and a = x_i + r x_s (Jacobian included).
    """
    w = derive_widths(cfg)
    r = cfg.wavelength_ratio

    def f(b, a):
        x_s = (a + b) / (1.0 + r)
        x_i = (a - r * b) / (1.0 + r)
        return position_pair_pdf(cfg, x_s, x_i, "full") / (1.0 + r)

    return f, (w.sigma_minus * (1.0 + r) / 2.0, w.sigma_plus * (1.0 + r) / 2.0)


def numeric_mgvt_variances(cfg: OpticalConfig,
                           momentum_grid: QuadratureGrid | None = None,
                           position_grid: QuadratureGrid | None = None,
                           **grid_opts) -> tuple[float, float]:
    """Variances of (k_sx + k_ix) and (x_s - x_i) by 2-D quadrature.

    Integrates the full joint pair densities in sum/difference coordinates
    (Jacobian included), where both Gaussian factors are axis-aligned at
    any aspect ratio; dimension 0 of each grid is the variable whose
    variance is taken (momentum sum, position difference).
    """
    f_k, sig_k = momentum_sum_diff_density(cfg)
    f_x, sig_x = position_diff_sum_density(cfg)
    grid_k = momentum_grid or QuadratureGrid.centered([0.0, 0.0], sig_k,
                                                      **grid_opts)
    grid_x = position_grid or QuadratureGrid.centered([0.0, 0.0], sig_x,
                                                      **grid_opts)

    def var_of_first(f, grid2, sigmas):
        grid2.require_coverage(0, 0.0, sigmas[0])
        grid2.require_coverage(1, 0.0, sigmas[1])
        x0, w0 = grid2.nodes_weights(0)
        x1, w1 = grid2.nodes_weights(1)
        u = x0[:, None]
        v = x1[None, :]
        p = f(u, v)
        ww = w0[:, None] * w1[None, :]
        m0 = float(np.sum(ww * p))
        m1 = float(np.sum(ww * u * p))
        m2 = float(np.sum(ww * u * u * p))
        return m2 / m0 - (m1 / m0) ** 2

    var_k_plus = var_of_first(f_k, grid_k, sig_k)
    var_x_minus = var_of_first(f_x, grid_x, sig_x)
    return var_k_plus, var_x_minus


# ---------------------------------------------------------------------------
# Counting rates
# ---------------------------------------------------------------------------

def _split_bounds(lo: float, hi: float, cut: float):
    """Subintervals of [lo, hi] on each side of ``cut`` (empty ones dropped)."""
    pieces = []
    if cut <= lo or cut >= hi:
        pieces.append((lo, hi))
    else:
        pieces.append((lo, cut))
        pieces.append((cut, hi))
    return pieces


def _rate_quadrature(density, transmission, f_factor, phi_in,
                     grid: QuadratureGrid, cut: float) -> float:
    lo, hi = grid.bounds[0]
    num = 0.0
    den = 0.0
    for plo, phi_b in _split_bounds(lo, hi, cut):
        sub = QuadratureGrid(bounds=((plo, phi_b),), points=grid.points,
                             rule=grid.rule)
        x, w = sub.nodes_weights(0)
        p = density(x)
        t = transmission(x)
        den += float(w @ p)
        num += float(w @ (p * (1.0 + f_factor * np.abs(t) * math.cos(phi_in))))
    return num / den


def numeric_counting_rate_ff(cfg: OpticalConfig, x_c: float, phi_in: float,
                             edge: KnifeEdge | None = None,
                             grid: QuadratureGrid | None = None,
                             **grid_opts) -> float:
    """Far-field rate by integrating the transmission against the momentum density.

    The idler momentum maps onto the object plane via
    ``x_o = lambda_i f k_ix / (2 pi)`` (one focal length for all arms), and
    the result is normalized so the no-object rate is 1.
    """
    if edge is None:
        edge = KnifeEdge()
    k_sx = 2.0 * math.pi * x_c / (cfg.lambda_s * cfg.focal_length)
    center, sigma = momentum_envelope(cfg, k_sx)
    if grid is None:
        grid = QuadratureGrid.centered([center], [sigma], **grid_opts)
    grid.require_coverage(0, center, sigma)
    k_to_x = cfg.lambda_i * cfg.focal_length / (2.0 * math.pi)
    k_edge = edge.edge_position / k_to_x
    return _rate_quadrature(
        density=lambda k: momentum_pair_pdf(cfg, k_sx, k, "approx"),
        transmission=lambda k: knife_edge_transmission(k * k_to_x, edge),
        f_factor=cfg.f_ff, phi_in=phi_in, grid=grid, cut=k_edge)


def numeric_counting_rate_nf(cfg: OpticalConfig, x_c: float, phi_in: float,
                             edge: KnifeEdge | None = None,
                             grid: QuadratureGrid | None = None,
                             **grid_opts) -> float:
    """Near-field rate by integrating the transmission against the position density.

    Camera and object planes map onto the source plane via the arm
    magnifications: x_s = x_c / M_S and x_o = M_I x_i.
    """
    if edge is None:
        edge = KnifeEdge()
    x_s = x_c / cfg.mag_signal
    center, sigma = position_envelope(cfg, x_s)
    if grid is None:
        grid = QuadratureGrid.centered([center], [sigma], **grid_opts)
    grid.require_coverage(0, center, sigma)
    x_i_edge = edge.edge_position / cfg.mag_idler
    return _rate_quadrature(
        density=lambda xi: position_pair_pdf(cfg, x_s, xi, "approx"),
        transmission=lambda xi: knife_edge_transmission(xi * cfg.mag_idler, edge),
        f_factor=cfg.f_nf, phi_in=phi_in, grid=grid, cut=x_i_edge)


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

def normalization_check(pdf, grid: QuadratureGrid) -> float:
    """|integral of pdf over the grid - 1| for a 1-D or 2-D density handle."""
    if grid.ndim == 1:
        x, w = grid.nodes_weights(0)
        return abs(float(w @ pdf(x)) - 1.0)
    if grid.ndim == 2:
        x0, w0 = grid.nodes_weights(0)
        x1, w1 = grid.nodes_weights(1)
        p = pdf(x0[:, None], x1[None, :])
        return abs(float(np.sum(w0[:, None] * w1[None, :] * p)) - 1.0)
    raise ValueError("normalization_check supports 1-D and 2-D grids only")


# ---------------------------------------------------------------------------
# Closed-form vs quadrature check suite
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    """Outcome of one closed-form/quadrature comparison."""

    name: str
    error: float
    tolerance: float
    passed: bool
    note: str = ""


CHECK_NAMES = (
    "rate_ff",
    "rate_nf",
    "cond_var_momentum",
    "cond_var_position",
    "mgvt",
    "norm_momentum_full",
    "norm_position_full",
    "norm_momentum_approx",
    "norm_position_approx",
    "norm_cond_momentum",
    "norm_cond_position",
)

DEFAULT_TOLERANCES = {name: 1e-6 for name in CHECK_NAMES}


def _rel_err(a: float, b: float) -> float:
    return abs(a - b) / abs(b)


def _rate_sample_points(cfg: OpticalConfig, mode: str, n: int = 20):
    """Deterministic (x_c, phi) sample points spanning the edge transition."""
    w = derive_widths(cfg)
    if mode == "ff":
        d = cfg.focal_length * cfg.lambda_s / (math.sqrt(2.0) * math.pi * w.sigma_plus)
    else:
        d = (cfg.mag_signal * (cfg.lambda_i + cfg.lambda_s) * w.sigma_minus
             / (math.sqrt(2.0) * cfg.lambda_s))
    rng = np.random.default_rng(20240 if mode == "ff" else 20241)
    x = rng.uniform(-3.0 * d, 3.0 * d, n)
    phi = rng.uniform(0.0, 2.0 * math.pi, n)
    return x, phi


def run_check(name: str, cfg: OpticalConfig, tolerance: float | None = None,
              **grid_opts) -> CheckResult:
    """Run one named closed-form/quadrature comparison."""
    from .simulate import counting_rate_ff, counting_rate_nf
    from .physics import cond_var_momentum, cond_var_position, mgvt_variances

    if name not in CHECK_NAMES:
        raise ValueError(f"unknown check {name!r}; known: {CHECK_NAMES}")
    tol = DEFAULT_TOLERANCES[name] if tolerance is None else tolerance
    try:
        if name == "rate_ff":
            x, phi = _rate_sample_points(cfg, "ff")
            err = max(abs(numeric_counting_rate_ff(cfg, xi, pi, **grid_opts)
                          - counting_rate_ff(cfg, xi, pi))
                      for xi, pi in zip(x, phi))
            note = "max |numeric - closed| over 20 (x, phi) points"
        elif name == "rate_nf":
            x, phi = _rate_sample_points(cfg, "nf")
            err = max(abs(numeric_counting_rate_nf(cfg, xi, pi, **grid_opts)
                          - counting_rate_nf(cfg, xi, pi))
                      for xi, pi in zip(x, phi))
            note = "max |numeric - closed| over 20 (x, phi) points"
        elif name == "cond_var_momentum":
            closed = cond_var_momentum(cfg, "exact")
            err = max(_rel_err(numeric_cond_var_momentum(cfg, ks, **grid_opts),
                               closed)
                      for ks in _sample_conditionals(cfg, "momentum"))
            note = "max relative error over 3 conditioning values"
        elif name == "cond_var_position":
            closed = cond_var_position(cfg, "exact")
            err = max(_rel_err(numeric_cond_var_position(cfg, xs, **grid_opts),
                               closed)
                      for xs in _sample_conditionals(cfg, "position"))
            note = "max relative error over 3 conditioning values"
        elif name == "mgvt":
            vk, vx = mgvt_variances(cfg)
            nk, nx = numeric_mgvt_variances(cfg, **grid_opts)
            err = max(_rel_err(nk, vk), _rel_err(nx, vx))
            note = "max relative error over both variances"
        elif name == "norm_momentum_full":
            f, sig = momentum_sum_diff_density(cfg)
            grid = QuadratureGrid.centered([0.0, 0.0], sig, **grid_opts)
            grid.require_coverage(0, 0.0, sig[0])
            grid.require_coverage(1, 0.0, sig[1])
            err = normalization_check(f, grid)
            note = "|integral - 1| in sum/diff coordinates"
        elif name == "norm_position_full":
            f, sig = position_diff_sum_density(cfg)
            grid = QuadratureGrid.centered([0.0, 0.0], sig, **grid_opts)
            grid.require_coverage(0, 0.0, sig[0])
            grid.require_coverage(1, 0.0, sig[1])
            err = normalization_check(f, grid)
            note = "|integral - 1| in diff/sum coordinates"
        elif name == "norm_momentum_approx":
            w = derive_widths(cfg)
            k_s = 0.37 / w.sigma_plus
            sig = 1.0 / w.sigma_plus
            grid = QuadratureGrid.centered([-k_s], [sig], **grid_opts)
            grid.require_coverage(0, -k_s, sig)
            err = normalization_check(
                lambda k: momentum_pair_pdf(cfg, k_s, k, "approx"), grid)
            note = "|integral over retained sum coordinate - 1|"
        elif name == "norm_position_approx":
            w = derive_widths(cfg)
            r = cfg.wavelength_ratio
            x_s = 0.8 * w.sigma_minus
            sig = w.sigma_minus * (1.0 + r) / 2.0
            grid = QuadratureGrid.centered([x_s], [sig], **grid_opts)
            grid.require_coverage(0, x_s, sig)
            err = normalization_check(
                lambda xi: position_pair_pdf(cfg, x_s, xi, "approx"), grid)
            note = "|integral over retained difference coordinate - 1|"
        elif name == "norm_cond_momentum":
            w = derive_widths(cfg)
            ks = (0.3 / w.sigma_plus, -0.1 / w.sigma_plus)
            centers_sigmas = [momentum_envelope(cfg, k) for k in ks]
            grid = QuadratureGrid.centered(
                [c for c, _ in centers_sigmas], [s for _, s in centers_sigmas],
                **grid_opts)
            for dim, (c, s) in enumerate(centers_sigmas):
                grid.require_coverage(dim, c, s)
            err = normalization_check(
                lambda kx, ky: (conditional_momentum_pair_pdf(cfg, kx, ks[0])
                                * conditional_momentum_pair_pdf(cfg, ky, ks[1])),
                grid)
            note = "|integral of conditional over both idler components - 1|"
        elif name == "norm_cond_position":
            w = derive_widths(cfg)
            xs = (0.5 * w.sigma_minus, -0.2 * w.sigma_minus)
            centers_sigmas = [position_envelope(cfg, x) for x in xs]
            grid = QuadratureGrid.centered(
                [c for c, _ in centers_sigmas], [s for _, s in centers_sigmas],
                **grid_opts)
            for dim, (c, s) in enumerate(centers_sigmas):
                grid.require_coverage(dim, c, s)
            err = normalization_check(
                lambda xa, xb: (conditional_position_pair_pdf(cfg, xa, xs[0])
                                * conditional_position_pair_pdf(cfg, xb, xs[1])),
                grid)
            note = "|integral of conditional over both idler components - 1|"
        else:   # pragma: no cover - guarded above
            raise AssertionError(name)
    except (GridCoverageError, ValueError) as exc:
        return CheckResult(name=name, error=float("nan"), tolerance=tol,
                           passed=False, note=str(exc))
    return CheckResult(name=name, error=float(err), tolerance=tol,
                       passed=bool(err <= tol), note=note)


def _sample_conditionals(cfg: OpticalConfig, space: str):
    w = derive_widths(cfg)
    if space == "momentum":
        scale = 1.0 / w.sigma_plus
    else:
        scale = w.sigma_minus
    return (0.0, 0.7 * scale, -1.3 * scale)


def run_suite(cfg: OpticalConfig, checks=CHECK_NAMES,
              tolerances: dict[str, float] | None = None,
              **grid_opts) -> list[CheckResult]:
    """Run a set of named checks and return their results."""
    tolerances = tolerances or {}
    return [run_check(name, cfg, tolerances.get(name), **grid_opts)
            for name in checks]
