"""Double-Gaussian twin-photon correlation model.

The photon pair produced in a thin nonlinear crystal is described by two
Gaussian correlation widths:

* ``sigma_plus`` -- width of the transverse-momentum *sum* distribution,
  equal to the pump waist ``w_p``;
* ``sigma_minus`` -- width of the transverse-position *difference*
  distribution, ``sqrt(L * lambda_p * lambda_s / (2 pi lambda_i))``.

Everything in this module is a pure closed-form function of an
:class:`OpticalConfig`: joint and conditional probability densities in
momentum and position space, the conditional variances entering the EPR
product, the sum/difference variances entering the MGVT product, and the
binary knife-edge transmission.

The knife edge varies only along x, so the analysis axis is x throughout;
variances are returned per transverse component.  All densities factorize
into identical x and y axis-pair factors, exposed as ``*_pair_pdf``
functions (the 2-vector forms are products of two axis factors).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "OpticalConfig",
    "CorrelationWidths",
    "KnifeEdge",
    "derive_widths",
    "joint_momentum_pdf",
    "joint_position_pdf",
    "momentum_pair_pdf",
    "position_pair_pdf",
    "conditional_momentum_pdf",
    "conditional_position_pdf",
    "conditional_momentum_pair_pdf",
    "conditional_position_pair_pdf",
    "cond_var_momentum",
    "cond_var_position",
    "mgvt_variances",
    "knife_edge_transmission",
]

_FORMS_PDF = ("full", "approx")
_FORMS_VAR = ("exact", "approx")
_BLOCKED_SIDES = ("below", "above")


@dataclass(frozen=True)
class OpticalConfig:
    """Physical parameters of the nonlinear interferometer.

    Lengths are in meters.  ``f_ff`` and ``f_nf`` are the idler
    transmission/alignment factors in [0, 1] for the far-field and
    near-field configurations (1 = lossless idler path).  Energy
    conservation between the three wavelengths is *not* enforced; the
    degenerate case ``lambda_s = lambda_i = 2 lambda_p`` is the default.
    """

    lambda_p: float = 405e-9       # pump wavelength
    lambda_s: float = 810e-9       # signal wavelength
    lambda_i: float = 810e-9       # idler wavelength
    crystal_length: float = 2e-3   # L
    pump_waist: float = 108e-6     # w_p
    focal_length: float = 0.2      # f_c, far-field lens
    mag_signal: float = 1.0        # M_S, signal-arm imaging magnification
    mag_idler: float = 1.0         # M_I, idler-arm imaging magnification
    f_ff: float = 0.3              # far-field idler transmission factor
    f_nf: float = 0.07             # near-field idler transmission factor

    def __post_init__(self):
        for name in ("lambda_p", "lambda_s", "lambda_i", "crystal_length",
                     "pump_waist", "focal_length"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        for name in ("mag_signal", "mag_idler"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        for name in ("f_ff", "f_nf"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {val}")

    @property
    def wavelength_ratio(self) -> float:
        """lambda_i / lambda_s, the ratio appearing in all non-degenerate formulas."""
        return self.lambda_i / self.lambda_s


@dataclass(frozen=True)
class CorrelationWidths:
    """Gaussian correlation widths (sigma_plus = pump waist; sigma_minus from crystal length)."""

    sigma_plus: float
    sigma_minus: float


@dataclass(frozen=True)
class KnifeEdge:
    """Absorptive half-plane object on the idler object plane.

    ``blocked_side`` selects which side of ``edge_position`` has zero
    transmission; the boundary point itself always transmits.
    """

    edge_position: float = 0.0
    blocked_side: str = "below"

    def __post_init__(self):
        if self.blocked_side not in _BLOCKED_SIDES:
            raise ValueError(
                f"blocked_side must be one of {_BLOCKED_SIDES}, got {self.blocked_side!r}")


def derive_widths(cfg: OpticalConfig) -> CorrelationWidths:
    """Correlation widths of the double-Gaussian model for a given configuration."""
    sigma_minus = math.sqrt(
        cfg.crystal_length * cfg.lambda_p * cfg.lambda_s / (2.0 * math.pi * cfg.lambda_i))
    return CorrelationWidths(sigma_plus=cfg.pump_waist, sigma_minus=sigma_minus)


def _check_form(form: str, allowed: tuple) -> None:
    if form not in allowed:
        raise ValueError(f"form must be one of {allowed}, got {form!r}")


# ---------------------------------------------------------------------------
# Per-axis-pair densities (the x and y factors of the full 2-vector densities)
# ---------------------------------------------------------------------------

def momentum_pair_pdf(cfg: OpticalConfig, k_sx, k_ix, form: str = "full"):
    """Joint density of one transverse-momentum component pair (k_sx, k_ix).

    The full form is the normalized double Gaussian

        N exp[-sigma_+^2 (k_s + k_i)^2 / 2] exp[-sigma_-^2 (k_s - r k_i)^2 / 2],

    with r = lambda_i/lambda_s and N = sigma_+ sigma_- (1 + r) / (2 pi).
    The approx form keeps only the (much narrower) sum Gaussian, normalized
    over the retained sum coordinate: its integral over k_ix at fixed k_sx
    (and vice versa) is exactly 1.
    """
    _check_form(form, _FORMS_PDF)
    w = derive_widths(cfg)
    sp, sm = w.sigma_plus, w.sigma_minus
    r = cfg.wavelength_ratio
    k_sx = np.asarray(k_sx, dtype=float)
    k_ix = np.asarray(k_ix, dtype=float)
    sum_exp = np.exp(-0.5 * sp ** 2 * (k_sx + k_ix) ** 2)
    if form == "approx":
        return sp / math.sqrt(2.0 * math.pi) * sum_exp
    diff_exp = np.exp(-0.5 * sm ** 2 * (k_sx - r * k_ix) ** 2)
    norm = sp * sm * (1.0 + r) / (2.0 * math.pi)
    return norm * sum_exp * diff_exp


def position_pair_pdf(cfg: OpticalConfig, x_s, x_i, form: str = "full"):
    """Joint density of one transverse-position component pair (x_s, x_i).

    Full form:

        N exp[-2 (x_i + r x_s)^2 / (sigma_+^2 (1+r)^2)]
          exp[-2 (x_s - x_i)^2 / (sigma_-^2 (1+r)^2)],

    N = 2 / (pi sigma_+ sigma_- (1 + r)).  The approx form keeps only the
    difference Gaussian, normalized over the retained difference
    coordinate (unit integral over x_i at fixed x_s).
    """
    _check_form(form, _FORMS_PDF)
    w = derive_widths(cfg)
    sp, sm = w.sigma_plus, w.sigma_minus
    r = cfg.wavelength_ratio
    x_s = np.asarray(x_s, dtype=float)
    x_i = np.asarray(x_i, dtype=float)
    opr2 = (1.0 + r) ** 2
    diff_exp = np.exp(-2.0 * (x_s - x_i) ** 2 / (sm ** 2 * opr2))
    if form == "approx":
        return math.sqrt(2.0 / math.pi) / (sm * (1.0 + r)) * diff_exp
    sum_exp = np.exp(-2.0 * (x_i + r * x_s) ** 2 / (sp ** 2 * opr2))
    norm = 2.0 / (math.pi * sp * sm * (1.0 + r))
    return norm * sum_exp * diff_exp


def conditional_momentum_pair_pdf(cfg: OpticalConfig, k_ix, k_sx):
    """Conditional density of one idler momentum component given the signal one.

    Gaussian with mean -(sigma_+^2 - r sigma_-^2) k_sx / (sigma_+^2 + r^2 sigma_-^2)
    and variance 1 / (sigma_+^2 + r^2 sigma_-^2); obtained from the full joint
    density by completing the square.
    """
    w = derive_widths(cfg)
    sp2, sm2 = w.sigma_plus ** 2, w.sigma_minus ** 2
    r = cfg.wavelength_ratio
    k_ix = np.asarray(k_ix, dtype=float)
    k_sx = np.asarray(k_sx, dtype=float)
    prec = sp2 + r ** 2 * sm2          # inverse variance
    mean = -(sp2 - r * sm2) * k_sx / prec
    return np.sqrt(prec / (2.0 * math.pi)) * np.exp(-0.5 * prec * (k_ix - mean) ** 2)


def conditional_position_pair_pdf(cfg: OpticalConfig, x_i, x_s):
    """Conditional density of one idler position component given the signal one.

    Gaussian with mean (sigma_+^2 - r sigma_-^2) x_s / (sigma_+^2 + sigma_-^2)
    and variance [(1+r)/2]^2 sigma_+^2 sigma_-^2 / (sigma_+^2 + sigma_-^2).
    """
    w = derive_widths(cfg)
    sp2, sm2 = w.sigma_plus ** 2, w.sigma_minus ** 2
    r = cfg.wavelength_ratio
    x_i = np.asarray(x_i, dtype=float)
    x_s = np.asarray(x_s, dtype=float)
    var = ((1.0 + r) / 2.0) ** 2 * sp2 * sm2 / (sp2 + sm2)
    mean = (sp2 - r * sm2) * x_s / (sp2 + sm2)
    return np.exp(-0.5 * (x_i - mean) ** 2 / var) / np.sqrt(2.0 * math.pi * var)


# ---------------------------------------------------------------------------
# 2-vector densities (products of the two axis-pair factors)
# ---------------------------------------------------------------------------

def _split_xy(vec):
    arr = np.asarray(vec, dtype=float)
    if arr.shape[-1] != 2:
        raise ValueError("transverse vectors must have a trailing dimension of 2")
    return arr[..., 0], arr[..., 1]


def joint_momentum_pdf(cfg: OpticalConfig, k_s, k_i, form: str = "full"):
    """Joint momentum density for 2-vectors ``k_s``, ``k_i`` (arrays with trailing dim 2)."""
    ksx, ksy = _split_xy(k_s)
    kix, kiy = _split_xy(k_i)
    return (momentum_pair_pdf(cfg, ksx, kix, form)
            * momentum_pair_pdf(cfg, ksy, kiy, form))


def joint_position_pdf(cfg: OpticalConfig, rho_s, rho_i, form: str = "full"):
    """Joint position density for 2-vectors ``rho_s``, ``rho_i``."""
    xs, ys = _split_xy(rho_s)
    xi, yi = _split_xy(rho_i)
    return (position_pair_pdf(cfg, xs, xi, form)
            * position_pair_pdf(cfg, ys, yi, form))


def conditional_momentum_pdf(cfg: OpticalConfig, k_i, k_s):
    """Conditional momentum density P(k_i | k_s) for 2-vectors."""
    kix, kiy = _split_xy(k_i)
    ksx, ksy = _split_xy(k_s)
    return (conditional_momentum_pair_pdf(cfg, kix, ksx)
            * conditional_momentum_pair_pdf(cfg, kiy, ksy))


def conditional_position_pdf(cfg: OpticalConfig, rho_i, rho_s):
    """Conditional position density P(rho_i | rho_s) for 2-vectors."""
    xi, yi = _split_xy(rho_i)
    xs, ys = _split_xy(rho_s)
    return (conditional_position_pair_pdf(cfg, xi, xs)
            * conditional_position_pair_pdf(cfg, yi, ys))


# ---------------------------------------------------------------------------
# Conditional and sum/difference variances (per transverse component)
# ---------------------------------------------------------------------------

def cond_var_momentum(cfg: OpticalConfig, form: str = "exact") -> float:
    """Conditional variance of one idler momentum component given the signal one.

    exact:  1 / (sigma_+^2 + (lambda_i/lambda_s)^2 sigma_-^2)
    approx: 1 / sigma_+^2
    """
    _check_form(form, _FORMS_VAR)
    w = derive_widths(cfg)
    if form == "approx":
        return 1.0 / w.sigma_plus ** 2
    r = cfg.wavelength_ratio
    return 1.0 / (w.sigma_plus ** 2 + r ** 2 * w.sigma_minus ** 2)


def cond_var_position(cfg: OpticalConfig, form: str = "exact") -> float:
    """Conditional variance of one idler position component given the signal one.

    exact:  [(1+r)/2]^2 sigma_+^2 sigma_-^2 / (sigma_+^2 + sigma_-^2)
    approx: [(1+r)/2]^2 sigma_-^2
    """
    _check_form(form, _FORMS_VAR)
    w = derive_widths(cfg)
    r = cfg.wavelength_ratio
    coef = ((1.0 + r) / 2.0) ** 2
    if form == "approx":
        return coef * w.sigma_minus ** 2
    sp2, sm2 = w.sigma_plus ** 2, w.sigma_minus ** 2
    return coef * sp2 * sm2 / (sp2 + sm2)


def mgvt_variances(cfg: OpticalConfig) -> tuple[float, float]:
    """Variances of the momentum sum and position difference, per component.

    Returns ``(var_k_plus, var_x_minus)`` with

        var_k_plus  = 1 / sigma_+^2
        var_x_minus = [(1+r)/2]^2 sigma_-^2

    These use identical expressions to the approx conditional variances, so
    the MGVT product equals the approx EPR product bit for bit.
    """
    w = derive_widths(cfg)
    r = cfg.wavelength_ratio
    var_k_plus = 1.0 / w.sigma_plus ** 2
    var_x_minus = ((1.0 + r) / 2.0) ** 2 * w.sigma_minus ** 2
    return var_k_plus, var_x_minus


def knife_edge_transmission(x_o, edge: KnifeEdge):
    """Binary amplitude transmission of the knife edge at object coordinate ``x_o``.

    Exactly 0 on the blocked side of ``edge.edge_position`` and exactly 1 on
    the open side; the boundary point transmits.
    """
    x_o = np.asarray(x_o, dtype=float)
    if edge.blocked_side == "below":
        open_mask = x_o >= edge.edge_position
    else:
        open_mask = x_o <= edge.edge_position
    result = np.where(open_mask, 1.0, 0.0)
    if result.ndim == 0:
        return float(result)
    return result
