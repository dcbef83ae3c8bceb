"""Closed-form information propagation speed (IPS) model.

The propagation is a renewal reward process alternating between PROPAGATE
(itself PROP_I hopping slots and PROP_II carry phases) and STOP.  Everything
here is a pure function of :class:`~vmimo_highway.core.ScenarioParams`; the two
Monte-Carlo oracles take explicit seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .core import DegenerateModelError, InvalidParameterError, ScenarioParams

__all__ = [
    "normal_cdf",
    "blocking_argument",
    "blocking_probability",
    "mc_blocking_probability",
    "TransitionProbs",
    "transition_probabilities",
    "expected_stop_time",
    "prop2_expectations",
    "expected_max_hop",
    "mc_expected_max_hop",
    "propagate_expectations",
    "RenewalExpectations",
    "renewal_expectations",
    "ips_vmimo",
    "ips_conventional",
    "ips_from_parts",
    "AnalyticReport",
    "analytic_report",
    "AsymptoticsReport",
    "asymptotics_report",
    "cubic_fit_r2",
]

# Below this, 1/p_b is replaced by the rearranged (multiplied-through) form.
_PB_REARRANGE = 1e-12


def normal_cdf(x: float) -> float:
    """Standard normal CDF through the complementary error function."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def _check_ranges(r: float, R: float) -> None:
    if not r > 0:
        raise InvalidParameterError("requires r > 0")
    if not R > r:
        raise InvalidParameterError("requires R > r")


def blocking_argument(lam: float, r: float, R: float) -> float:
    """Argument ``(1/r**2 - mu) / sigma`` of the normal CDF in the blocking probability."""
    if not lam > 0:
        raise InvalidParameterError("requires lambda > 0")
    _check_ranges(r, R)
    mu = lam * (1.0 / r - 1.0 / R)
    sigma = math.sqrt(lam / 3.0 * (1.0 / r**3 - 1.0 / R**3))
    return (1.0 / r**2 - mu) / sigma


def blocking_probability(lam: float, r: float, R: float) -> float:
    """Probability that no uninformed vehicle ahead can decode in a slot.

    ``exp(-lam r)`` is the chance that nobody sits within ``r`` of the head; the
    second factor is a Gaussian approximation to the chance that the combined
    SNR from the ``Poisson(lam (R - r))`` transmitters in ``(x_u - R, x_u - r)``
    stays below threshold.

    Parameters
    ----------
    lam : float
        Total vehicle density (vehicles/m), ``> 0``.
    r, R : float
        Transmission and detection range, ``0 < r < R``.
    """
    return math.exp(-lam * r) * normal_cdf(blocking_argument(lam, r, R))


def mc_blocking_probability(lam: float, r: float, R: float, n_samples: int,
                            seed: int, *, chunk: int = 200_000) -> tuple[float, float]:
    """Monte-Carlo estimate of :func:`blocking_probability` without the normal approximation.

    Draws ``N ~ Poisson(lam (R - r))`` transmitters uniform on ``(r, R)``,
    estimates ``Pr{sum 1/d**2 < 1/r**2}`` and scales by ``exp(-lam r)``.

    Returns
    -------
    (estimate, stderr)
    """
    if n_samples < 1:
        raise InvalidParameterError("requires n_samples >= 1")
    if not lam > 0:
        raise InvalidParameterError("requires lambda > 0")
    _check_ranges(r, R)
    rng = np.random.default_rng(seed)
    thr = 1.0 / (r * r)
    blocked = 0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        counts = rng.poisson(lam * (R - r), size=m)
        d = rng.uniform(r, R, size=int(counts.sum()))
        owner = np.repeat(np.arange(m), counts)
        stat = np.bincount(owner, weights=1.0 / (d * d), minlength=m)
        blocked += int(np.count_nonzero(stat < thr))
        done += m
    scale = math.exp(-lam * r)
    p = blocked / n_samples
    return scale * p, scale * math.sqrt(p * (1.0 - p) / n_samples)


@dataclass(frozen=True)
class TransitionProbs:
    """Per-slot PROP_I transition probabilities and PROP_I exit probabilities."""

    p_b: float
    p_f: float
    p_r: float
    sigma1: float
    sigma2: float


def transition_probabilities(lambda_r: float, lambda_f: float, p_b: float) -> TransitionProbs:
    """Split the non-blocked mass in proportion to the lane densities.

    ``sigma1`` (exit to PROP_II) equals ``p_r``; ``sigma2 = 1 - sigma1`` (exit
    to STOP).
    """
    if lambda_r < 0 or lambda_f < 0:
        raise InvalidParameterError("requires lambda_r >= 0 and lambda_f >= 0")
    lam = lambda_r + lambda_f
    if not lam > 0:
        raise InvalidParameterError("requires lambda_r + lambda_f > 0")
    if not 0.0 <= p_b <= 1.0:
        raise InvalidParameterError("requires 0 <= p_b <= 1")
    p_f = (1.0 - p_b) * lambda_f / lam
    p_r = (1.0 - p_b) * lambda_r / lam
    return TransitionProbs(p_b=p_b, p_f=p_f, p_r=p_r, sigma1=p_r, sigma2=1.0 - p_r)


def _check_lam_v(lam: float, v: float) -> None:
    if not lam > 0:
        raise InvalidParameterError("requires lambda > 0")
    if not v > 0:
        raise InvalidParameterError("requires v > 0")


def expected_stop_time(lam: float, v: float) -> float:
    """Worst-case mean STOP duration ``1 / (2 v lam)``."""
    _check_lam_v(lam, v)
    return 1.0 / (2.0 * v * lam)


def prop2_expectations(lam: float, v: float) -> tuple[float, float]:
    """Mean PROP_II duration and distance: ``(1/(2 v lam), 1/lam)``."""
    _check_lam_v(lam, v)
    d = 1.0 / lam
    return d / (2.0 * v), d


def expected_max_hop(lam: float, r: float, R: float) -> float:
    """Mean one-slot head displacement ``lam r^2 R / (lam r^2 + R)``."""
    if not lam > 0:
        raise InvalidParameterError("requires lambda > 0")
    _check_ranges(r, R)
    a = lam * r * r
    return a * R / (a + R)


def _poisson_rows(rng, lam, lo, hi, m):
    """``m`` independent Poisson samples on ``(lo, hi)``, padded with NaN, sorted per row."""
    counts = rng.poisson(lam * (hi - lo), size=m)
    width = max(int(counts.max(initial=0)), 1)
    x = rng.uniform(lo, hi, size=(m, width))
    x[np.arange(width)[None, :] >= counts[:, None]] = np.nan
    x.sort(axis=1)  # NaN sorts last
    return x


def mc_expected_max_hop(lam: float, r: float, R: float, n_samples: int, seed: int,
                        *, construction: Literal["cloud", "chained"] = "cloud",
                        chunk: int = 5000) -> tuple[float, float]:
    """Monte-Carlo mean of the one-slot head displacement.

    ``construction="cloud"`` places the head at the front of a fully informed
    Poisson cloud (density ``lam``) and lets each uninformed vehicle ahead
    combine every informed signal within ``R``; the displacement is the
    farthest decoder.  ``construction="chained"`` starts from a lone informed
    head and informs vehicles left to right, each new decoder joining the
    combination for farther receivers; receivers must lie within ``R`` of the
    head.  Slots with no decoder contribute zero.

    Returns
    -------
    (estimate, stderr)
    """
    if n_samples < 1:
        raise InvalidParameterError("requires n_samples >= 1")
    if not lam > 0:
        raise InvalidParameterError("requires lambda > 0")
    _check_ranges(r, R)
    if construction not in ("cloud", "chained"):
        raise InvalidParameterError(f"unknown construction {construction!r}")
    rng = np.random.default_rng(seed)
    thr = 1.0 / (r * r)
    hops = np.empty(n_samples)
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        ahead = _poisson_rows(rng, lam, 0.0, R, m)
        with np.errstate(invalid="ignore", divide="ignore"):
            stat = 1.0 / ahead**2
            if construction == "cloud":
                cloud = -_poisson_rows(rng, lam, 0.0, R, m)
                d = ahead[:, :, None] - cloud[:, None, :]
                stat = stat + np.where(d <= R, 1.0 / d**2, 0.0).sum(axis=2)
                ok = stat >= thr
            else:
                d = ahead[:, :, None] - ahead[:, None, :]
                lower = np.tril(np.ones(d.shape[1:], dtype=bool), k=-1)
                stat = stat + np.where((d <= R) & lower, 1.0 / d**2, 0.0).sum(axis=2)
                ok = np.cumprod(stat >= thr, axis=1).astype(bool)
        best = np.where(ok, ahead, 0.0).max(axis=1)
        hops[done:done + m] = np.nan_to_num(best)
        done += m
    se = hops.std(ddof=1) / math.sqrt(n_samples) if n_samples > 1 else float("nan")
    return float(hops.mean()), float(se)


def _sigma1_or_raise(sigma1: float) -> None:
    if not sigma1 > 0:
        raise DegenerateModelError(
            "sigma1 = 0 (no reverse-lane traffic or certain blocking): the renewal "
            "model has no PROP_II exit and the IPS expression is singular")


def propagate_expectations(lambda_r: float, lambda_f: float, v: float, r: float,
                           R: float, tau: float) -> tuple[float, float]:
    """Mean PROPAGATE duration and distance per renewal cycle.

    With ``A = sigma2/sigma1 + sigma1``::

        E[T_prop] = A tau / p_b + (sigma2/sigma1) / (2 v lam)
        E[D_prop] = A hop / p_b + (sigma2/sigma1) / lam
    """
    lam = lambda_r + lambda_f
    _check_lam_v(lam, v)
    if not tau > 0:
        raise InvalidParameterError("requires tau > 0")
    p_b = blocking_probability(lam, r, R)
    tp = transition_probabilities(lambda_r, lambda_f, p_b)
    _sigma1_or_raise(tp.sigma1)
    if p_b == 0.0:
        raise DegenerateModelError("p_b underflows to 0; PROPAGATE never ends")
    ratio = tp.sigma2 / tp.sigma1
    a = ratio + tp.sigma1
    hop = expected_max_hop(lam, r, R)
    return a * tau / p_b + ratio / (2.0 * v * lam), a * hop / p_b + ratio / lam


@dataclass(frozen=True)
class RenewalExpectations:
    e_t_stop: float
    e_t_prop2: float
    e_d_prop2: float
    e_d_mprop: float
    e_t_prop: float
    e_d_prop: float


def renewal_expectations(params: ScenarioParams) -> RenewalExpectations:
    p = params
    p.validate()
    p.require_traffic()
    t2, d2 = prop2_expectations(p.lam, p.v)
    tp, dp = propagate_expectations(p.lambda_r, p.lambda_f, p.v, p.r, p.R, p.tau)
    return RenewalExpectations(
        e_t_stop=expected_stop_time(p.lam, p.v), e_t_prop2=t2, e_d_prop2=d2,
        e_d_mprop=expected_max_hop(p.lam, p.r, p.R), e_t_prop=tp, e_d_prop=dp)


def ips_from_parts(p_b: float, sigma1: float, hop: float, lam: float, v: float,
                   tau: float) -> float:
    """Long-run reward rate of the renewal chain given its ingredients.

    Shared by both schemes: the virtual-MIMO model feeds the Gaussian blocking
    probability and the combined hop, conventional flooding feeds
    ``exp(-lam r)`` and ``r``.
    """
    _sigma1_or_raise(sigma1)
    sigma2 = 1.0 - sigma1
    ratio = sigma2 / sigma1
    a = ratio + sigma1
    carry_d = ratio / lam
    carry_t = (1.0 / sigma1) / (2.0 * v * lam)
    if p_b < _PB_REARRANGE:
        return (a * hop + p_b * carry_d) / (a * tau + p_b * carry_t)
    return (a * hop / p_b + carry_d) / (a * tau / p_b + carry_t)


def _prepare(params: ScenarioParams) -> ScenarioParams:
    params.validate()
    params.require_traffic()
    if not params.lambda_r > 0:
        raise DegenerateModelError(
            "lambda_r = 0 gives sigma1 = 0; the renewal IPS expression is singular")
    return params


def ips_vmimo(params: ScenarioParams) -> float:
    """IPS (m/s, reverse-lane frame) of the signal-combining broadcast scheme."""
    p = _prepare(params)
    lam = p.lam
    p_b = blocking_probability(lam, p.r, p.R)
    sigma1 = transition_probabilities(p.lambda_r, p.lambda_f, p_b).sigma1
    return ips_from_parts(p_b, sigma1, expected_max_hop(lam, p.r, p.R), lam, p.v, p.tau)


def ips_conventional(params: ScenarioParams) -> float:
    """IPS (m/s) of single-link flooding: hop ``r``, blocking ``exp(-lam r)``."""
    p = _prepare(params)
    lam = p.lam
    p_b = math.exp(-lam * p.r)
    sigma1 = (p.lambda_r / lam) * (1.0 - p_b)
    return ips_from_parts(p_b, sigma1, p.r, lam, p.v, p.tau)


@dataclass(frozen=True)
class AnalyticReport:
    params: ScenarioParams
    transition: TransitionProbs
    expectations: RenewalExpectations
    ips_vmimo: float
    ips_conventional: float
    gain: float

    def rows(self) -> list[tuple[str, float]]:
        t, e = self.transition, self.expectations
        return [
            ("p_b", t.p_b), ("p_f", t.p_f), ("p_r", t.p_r),
            ("sigma1", t.sigma1), ("sigma2", t.sigma2),
            ("e_t_stop", e.e_t_stop), ("e_t_prop2", e.e_t_prop2),
            ("e_d_prop2", e.e_d_prop2), ("e_d_mprop", e.e_d_mprop),
            ("e_t_prop", e.e_t_prop), ("e_d_prop", e.e_d_prop),
            ("ips_vmimo", self.ips_vmimo), ("ips_conventional", self.ips_conventional),
            ("gain", self.gain),
        ]


def analytic_report(params: ScenarioParams) -> AnalyticReport:
    p = _prepare(params)
    p_b = blocking_probability(p.lam, p.r, p.R)
    vm = ips_vmimo(p)
    conv = ips_conventional(p)
    return AnalyticReport(
        params=p,
        transition=transition_probabilities(p.lambda_r, p.lambda_f, p_b),
        expectations=renewal_expectations(p),
        ips_vmimo=vm, ips_conventional=conv, gain=vm / conv)


@dataclass(frozen=True)
class AsymptoticsReport:
    """Limits and regime approximations of the closed-form IPS.

    ``low_density_limit`` is the exact ``lam -> 0`` limit of the closed form,
    ``2 v sigma2 -> 2 v`` (the carried-beacon speed in the reverse-lane frame).
    """

    low_density_limit: float
    high_density_approx: float
    high_density_limit: float
    zero_speed_limit: float
    infinite_speed_limit: float
    gain_high_density_approx: float
    gain_limit: float


def asymptotics_report(params: ScenarioParams) -> AsymptoticsReport:
    p = _prepare(params)
    lam, r, R, tau = p.lam, p.r, p.R, p.tau
    hop = expected_max_hop(lam, r, R)
    p_b = blocking_probability(lam, r, R)
    sigma1 = transition_probabilities(p.lambda_r, p.lambda_f, p_b).sigma1
    _sigma1_or_raise(sigma1)
    ratio = (1.0 - sigma1) / sigma1
    a = ratio + sigma1
    # carry term of the v -> inf limit, written without 1/p_b
    carry = p_b * (ratio / lam) / (a * tau)
    return AsymptoticsReport(
        low_density_limit=2.0 * p.v,
        high_density_approx=hop / tau,
        high_density_limit=R / tau,
        zero_speed_limit=0.0,
        infinite_speed_limit=hop / tau + carry,
        gain_high_density_approx=lam * r * R / (lam * r * r + R),
        gain_limit=R / r,
    )


def cubic_fit_r2(lams: Sequence[float], ips: Sequence[float], offset: float = 0.0) -> float:
    """Coefficient of determination of a least-squares fit ``ips - offset ~ a lam^3 + b``."""
    x = np.asarray(lams, dtype=float) ** 3
    y = np.asarray(ips, dtype=float) - offset
    design = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0
    return 1.0 - float(np.sum(resid**2)) / ss_tot
