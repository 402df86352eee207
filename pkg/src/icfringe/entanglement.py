"""Entanglement certification from measured edge-spread widths.

The fitted widths of the momentum-space and position-space edge-spread
functions determine the correlation widths,

    sigma_+ = f_c lambda_s / (sqrt(2) pi D_k)
    sigma_- = sqrt(2) lambda_s D_rho / (M_S (lambda_i + lambda_s))

and the conditional-variance products

    EPR:  var(x_i | x_s) var(k_ix | k_sx) = pi^2 D_rho^2 D_k^2 / (f_c^2 lambda_s^2 M_S^2)
    MGVT: var(K_x+) var(X_-)             = same expression.

A product below 1/4 violates the EPR bound; below 1 it violates the MGVT
separability bound; either violation certifies position-momentum
entanglement.  Both verdicts use strict inequalities and depend only on
the product value, never on its uncertainty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .physics import OpticalConfig

__all__ = [
    "EPR_THRESHOLD",
    "MGVT_THRESHOLD",
    "UncertainValue",
    "WidthMeasurement",
    "EntanglementReport",
    "sigma_plus_from_Dk",
    "sigma_minus_from_Drho",
    "propagate_uncertainty",
    "epr_product",
    "mgvt_product",
    "build_report",
]

EPR_THRESHOLD = 0.25
MGVT_THRESHOLD = 1.0

_SPACES = ("momentum", "position")


@dataclass(frozen=True)
class UncertainValue:
    """A scalar with a 1-sigma uncertainty."""

    value: float
    sigma: float

    def __iter__(self):
        yield self.value
        yield self.sigma


@dataclass(frozen=True)
class WidthMeasurement:
    """Edge-spread width D with 1-sigma uncertainty, tagged by measurement space."""

    width: float
    sigma: float
    space: str

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("width must be strictly positive")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.space not in _SPACES:
            raise ValueError(f"space must be one of {_SPACES}, got {self.space!r}")


def sigma_plus_from_Dk(d_k: WidthMeasurement, cfg: OpticalConfig) -> UncertainValue:
    """Momentum-sum correlation width from the far-field ESF width."""
    if d_k.space != "momentum":
        raise ValueError("sigma_plus requires a momentum-space width")
    value = cfg.focal_length * cfg.lambda_s / (math.sqrt(2.0) * math.pi * d_k.width)
    return UncertainValue(value, value * d_k.sigma / d_k.width)


def sigma_minus_from_Drho(d_rho: WidthMeasurement, cfg: OpticalConfig) -> UncertainValue:
    """Position-difference correlation width from the near-field ESF width."""
    if d_rho.space != "position":
        raise ValueError("sigma_minus requires a position-space width")
    value = (math.sqrt(2.0) * cfg.lambda_s * d_rho.width
             / (cfg.mag_signal * (cfg.lambda_i + cfg.lambda_s)))
    return UncertainValue(value, value * d_rho.sigma / d_rho.width)


def propagate_uncertainty(d_k: WidthMeasurement, d_rho: WidthMeasurement) -> float:
    """First-order relative uncertainty of the width product D_k^2 D_rho^2."""
    if d_k.width <= 0 or d_rho.width <= 0:
        raise ValueError("widths must be strictly positive")
    return 2.0 * math.hypot(d_k.sigma / d_k.width, d_rho.sigma / d_rho.width)


def _width_product(d_k: WidthMeasurement, d_rho: WidthMeasurement,
                   cfg: OpticalConfig) -> UncertainValue:
    if {d_k.space, d_rho.space} != {"momentum", "position"}:
        raise ValueError("need one momentum-space and one position-space width")
    if d_k.space != "momentum":
        d_k, d_rho = d_rho, d_k
    value = (math.pi ** 2 / (cfg.focal_length ** 2 * cfg.lambda_s ** 2
                             * cfg.mag_signal ** 2)
             * d_rho.width ** 2 * d_k.width ** 2)
    return UncertainValue(value, value * propagate_uncertainty(d_k, d_rho))


def epr_product(d_k: WidthMeasurement, d_rho: WidthMeasurement,
                cfg: OpticalConfig) -> UncertainValue:
    """Product of the position and momentum conditional variances (EPR test)."""
    return _width_product(d_k, d_rho, cfg)


def mgvt_product(d_k: WidthMeasurement, d_rho: WidthMeasurement,
                 cfg: OpticalConfig) -> UncertainValue:
    """Product of the momentum-sum and position-difference variances (MGVT test).

    Numerically identical to :func:`epr_product`; only the threshold differs.
    """
    return _width_product(d_k, d_rho, cfg)


def _margin(threshold: float, product: UncertainValue) -> float:
    """Distance below the threshold in units of the propagated sigma."""
    if product.sigma > 0:
        return (threshold - product.value) / product.sigma
    return math.inf if product.value < threshold else -math.inf


@dataclass(frozen=True)
class EntanglementReport:
    """Full certification result: width estimates, products, and verdicts."""

    d_k: WidthMeasurement
    d_rho: WidthMeasurement
    cfg: OpticalConfig
    sigma_plus: UncertainValue
    sigma_minus: UncertainValue
    epr_product: UncertainValue
    mgvt_product: UncertainValue
    epr_violated: bool
    mgvt_violated: bool
    epr_margin_sigma: float
    mgvt_margin_sigma: float
    reference_product: UncertainValue | None = None
    differs_from_reference: bool = False
    overlaps_reference_1sigma: bool | None = None


def build_report(d_k: WidthMeasurement, d_rho: WidthMeasurement,
                 cfg: OpticalConfig,
                 reference: UncertainValue | None = None) -> EntanglementReport:
    """Assemble the entanglement report from two width measurements.

    ``reference`` is an optional externally published product to compare
    against: the report flags any difference in the point values (rounded
    inputs rarely reproduce a published product exactly) and records
    whether the two 1-sigma intervals overlap.
    """
    if d_k.space != "momentum":
        d_k, d_rho = d_rho, d_k
    product = _width_product(d_k, d_rho, cfg)
    differs = False
    overlaps = None
    if reference is not None:
        differs = not math.isclose(product.value, reference.value,
                                   rel_tol=1e-12, abs_tol=0.0)
        overlaps = (abs(product.value - reference.value)
                    <= product.sigma + reference.sigma)
    return EntanglementReport(
        d_k=d_k,
        d_rho=d_rho,
        cfg=cfg,
        sigma_plus=sigma_plus_from_Dk(d_k, cfg),
        sigma_minus=sigma_minus_from_Drho(d_rho, cfg),
        epr_product=product,
        mgvt_product=product,
        epr_violated=product.value < EPR_THRESHOLD,
        mgvt_violated=product.value < MGVT_THRESHOLD,
        epr_margin_sigma=_margin(EPR_THRESHOLD, product),
        mgvt_margin_sigma=_margin(MGVT_THRESHOLD, product),
        reference_product=reference,
        differs_from_reference=differs,
        overlaps_reference_1sigma=overlaps,
    )
