"""Scenario parameters and the free-space SNR arithmetic.

All SNR bookkeeping is done on the normalized statistic ``sum(1 / d_i**2)``
(units 1/m^2).  Multiplying by ``alpha * P_t / N_0`` gives the actual SNR, so a
receiver decodes when the statistic reaches ``1 / r**2`` and detects a single
transmitter when it lies within ``R``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Iterable, Optional

import numpy as np

__all__ = [
    "InvalidParameterError",
    "DegenerateModelError",
    "ScenarioParams",
    "SnrStatistic",
    "combined_snr_statistic",
    "ranges_from_thresholds",
    "thresholds_from_ranges",
    "decode_test",
    "detect_test",
]

# Normalized combined SNR, 1/m^2.
SnrStatistic = float


class InvalidParameterError(ValueError):
    """A parameter or input violates a model precondition."""


class DegenerateModelError(ArithmeticError):
    """The closed-form model is singular at the requested point."""


def combined_snr_statistic(distances: Iterable[float]) -> SnrStatistic:
    """Maximal-ratio-combined SNR statistic of a set of transmitters.

    Parameters
    ----------
    distances : iterable of float
        Transmitter-receiver distances in metres, each strictly positive.

    Returns
    -------
    float
        ``sum(1 / d**2)``; zero for an empty set.
    """
    d = np.asarray(list(distances) if not isinstance(distances, np.ndarray) else distances,
                   dtype=float)
    if d.size == 0:
        return 0.0
    if not np.all(d > 0) or not np.all(np.isfinite(d)):
        raise InvalidParameterError("distances must be finite and strictly positive")
    return float(np.sum(1.0 / (d * d)))


def ranges_from_thresholds(alpha_pt_over_n0: float, gamma_dec: float,
                           gamma_det: float) -> tuple[float, float]:
    """Convert SNR thresholds into the transmission and detection ranges.

    Under free-space loss a single transmitter at distance ``d`` produces
    ``alpha_pt_over_n0 / d**2``, so ``r = sqrt(c / gamma_dec)`` and
    ``R = sqrt(c / gamma_det)``.
    """
    for name, value in (("alpha_pt_over_n0", alpha_pt_over_n0),
                        ("gamma_dec", gamma_dec), ("gamma_det", gamma_det)):
        if not (value > 0 and math.isfinite(value)):
            raise InvalidParameterError(f"requires {name} > 0")
    if gamma_det > gamma_dec:
        raise InvalidParameterError("requires gamma_det <= gamma_dec")
    return math.sqrt(alpha_pt_over_n0 / gamma_dec), math.sqrt(alpha_pt_over_n0 / gamma_det)


def thresholds_from_ranges(alpha_pt_over_n0: float, r: float,
                           R: float) -> tuple[float, float]:
    """Inverse of :func:`ranges_from_thresholds`: ``(gamma_dec, gamma_det)``."""
    if not (alpha_pt_over_n0 > 0 and r > 0 and R > 0):
        raise InvalidParameterError("requires alpha_pt_over_n0, r, R > 0")
    return alpha_pt_over_n0 / (r * r), alpha_pt_over_n0 / (R * R)


def decode_test(s: SnrStatistic, r: float) -> bool:
    """True iff the combined statistic reaches the single-link threshold ``1/r**2``."""
    if not r > 0:
        raise InvalidParameterError("requires r > 0")
    return s >= 1.0 / (r * r)


def detect_test(d: float, R: float) -> bool:
    """True iff a single transmitter at distance ``d`` is detectable."""
    return d <= R


@dataclass(frozen=True)
class ScenarioParams:
    """Model parameters of one highway scenario, SI units throughout.

    Attributes
    ----------
    lambda_r, lambda_f : float
        Poisson densities (vehicles/m) of the reverse (westbound) and forward
        (eastbound) lanes.
    v : float
        Ground speed of every vehicle (m/s).
    r, R : float
        Transmission (decode) and detection ranges (m), ``0 < r < R``.
    tau : float
        Slot duration (s).
    """

    lambda_r: float = 0.005
    lambda_f: float = 0.005
    v: float = 25.0
    r: float = 200.0
    R: float = 600.0
    tau: float = 0.025
    alpha_pt_over_n0: Optional[float] = None
    gamma_dec: Optional[float] = None
    gamma_det: Optional[float] = None

    def __post_init__(self):
        raw = (self.alpha_pt_over_n0, self.gamma_dec, self.gamma_det)
        if any(x is not None for x in raw):
            if any(x is None for x in raw):
                raise InvalidParameterError(
                    "alpha_pt_over_n0, gamma_dec and gamma_det must be given together")
            r, R = ranges_from_thresholds(*raw)
            object.__setattr__(self, "r", r)
            object.__setattr__(self, "R", R)
        # v == 0 is a legal simulation input (frozen traffic); the analytic
        # model and the CLI call validate() without the allowance.
        self.validate(allow_zero_speed=True)

    @classmethod
    def from_thresholds(cls, alpha_pt_over_n0: float, gamma_dec: float,
                        gamma_det: float, **kwargs) -> "ScenarioParams":
        return cls(alpha_pt_over_n0=alpha_pt_over_n0, gamma_dec=gamma_dec,
                   gamma_det=gamma_det, **kwargs)

    def validate(self, *, allow_zero_speed: bool = False) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None and not math.isfinite(value):
                raise InvalidParameterError(f"requires finite {f.name}")
        if self.lambda_r < 0:
            raise InvalidParameterError("requires lambda_r >= 0")
        if self.lambda_f < 0:
            raise InvalidParameterError("requires lambda_f >= 0")
        if not self.r > 0:
            raise InvalidParameterError("requires r > 0")
        if not self.R > self.r:
            raise InvalidParameterError("requires R > r")
        if not self.tau > 0:
            raise InvalidParameterError("requires tau > 0")
        if self.v < 0 or (self.v == 0 and not allow_zero_speed):
            raise InvalidParameterError("requires v > 0")

    @property
    def lam(self) -> float:
        """Total density ``lambda_r + lambda_f``."""
        return self.lambda_r + self.lambda_f

    @property
    def relative_speed(self) -> float:
        """Forward-lane speed in the reverse-lane frame, ``2 v``."""
        return 2.0 * self.v

    def require_traffic(self) -> None:
        if not self.lam > 0:
            raise InvalidParameterError("requires lambda_r + lambda_f > 0")

    def with_(self, **changes) -> "ScenarioParams":
        """Copy with fields replaced (raw thresholds are dropped)."""
        base = dict(alpha_pt_over_n0=None, gamma_dec=None, gamma_det=None)
        base.update(changes)
        return replace(self, **base)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}
