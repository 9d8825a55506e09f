"""Mechanism-level Renyi-DP accounting.

Builds per-order epsilon curves for the supported mechanisms, composes them
additively, converts to (epsilon, delta) guarantees, calibrates noise by
bisection, and compares balanced iteration subsampling against Poisson
subsampling.

Curve provenance per order:

* ``"exact"`` -- closed form (plain Gaussian, Poisson-subsampled Gaussian).
* ``"tight"`` -- exact forward divergence paired with the reverse bound.
* ``"loose"`` -- overlap-count forward bound paired with the reverse bound
  (either requested explicitly or forced by the enumeration cost guard).

A ``PoissonGaussian`` curve is per iteration; pass the iteration count to
``compose`` (or the ``count`` arguments elsewhere) to account a full run.  A
``Bis`` curve already covers all ``T`` iterations jointly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

import numpy as np
from scipy.special import logsumexp

from .rdp_math import (
    MixtureFamily,
    epsilon_loose_curve,
    epsilon_tight,
    forward_exact_k1_curve,
    log_comb,
    reverse_bound_curve,
    validate_order,
)

__all__ = [
    "Bis",
    "BisPoissonComparison",
    "CalibrationBracketError",
    "CalibrationResult",
    "CompositionPlan",
    "DEFAULT_ORDERS",
    "DpGuarantee",
    "DropoutSplit",
    "Gaussian",
    "MechanismSpec",
    "MixtureSplit",
    "ModelSplit",
    "PartialSplit",
    "PoissonGaussian",
    "RdpCurve",
    "bis_epoch_composition",
    "calibrate_sigma",
    "compare_bis_poisson",
    "compose",
    "mechanism_label",
    "rdp_curve",
    "scale_curve",
    "to_delta",
    "to_dp",
]

DEFAULT_ORDERS = tuple(range(2, 101))

_PROVENANCE_RANK = {"exact": 0, "tight": 1, "loose": 2}


class CalibrationBracketError(ValueError):
    """The sigma bracket does not enclose the calibration target."""


def _check_clip_noise(c: float, sigma: float) -> None:
    if c < 0:
        raise ValueError(f"clipping norm must be nonnegative, got {c}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")


@dataclass(frozen=True)
class Gaussian:
    """One release of a sum with l2 sensitivity c plus N(0, sigma^2 I) noise."""

    c: float
    sigma: float

    def __post_init__(self):
        _check_clip_noise(self.c, self.sigma)


@dataclass(frozen=True)
class PoissonGaussian:
    """Gaussian release where each sample joins independently with rate gamma.

    The curve is per iteration; compose with the iteration count.
    """

    c: float
    sigma: float
    gamma: float

    def __post_init__(self):
        _check_clip_noise(self.c, self.sigma)
        if not 0 < self.gamma <= 1:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")


@dataclass(frozen=True)
class ModelSplit:
    """Each sample updates one of d disjoint parameter blocks, chosen uniformly."""

    d: int
    c: float
    sigma: float

    def __post_init__(self):
        _check_clip_noise(self.c, self.sigma)
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")


@dataclass(frozen=True)
class MixtureSplit:
    """Probabilistic mixture of disjoint d-way splits; same bound as ModelSplit."""

    d: int
    c: float
    sigma: float

    def __post_init__(self):
        _check_clip_noise(self.c, self.sigma)
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")


@dataclass(frozen=True)
class DropoutSplit:
    """Rate-0.5 dropout on hidden units; accounted as a 2-way model split."""

    c: float
    sigma: float

    def __post_init__(self):
        _check_clip_noise(self.c, self.sigma)


@dataclass(frozen=True)
class PartialSplit:
    """d-way split of part of the model plus a non-split remainder.

    The two parts carry separate clipping norms and their per-order epsilons
    add (sequential-composition property).
    """

    c_split: float
    c_nonsplit: float
    d: int
    sigma: float

    def __post_init__(self):
        _check_clip_noise(self.c_split, self.sigma)
        if self.c_nonsplit < 0:
            raise ValueError(f"c_nonsplit must be nonnegative, got {self.c_nonsplit}")
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")


@dataclass(frozen=True)
class Bis:
    """Balanced iteration subsampling: each sample joins exactly k of T iterations.

    The curve covers the whole T-iteration run jointly.
    """

    T: int
    k: int
    c: float
    sigma: float

    def __post_init__(self):
        _check_clip_noise(self.c, self.sigma)
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if not 1 <= self.k <= self.T:
            raise ValueError(f"k must satisfy 1 <= k <= T, got k={self.k}, T={self.T}")


MechanismSpec = Union[Gaussian, PoissonGaussian, ModelSplit, MixtureSplit, DropoutSplit, PartialSplit, Bis]


def mechanism_label(spec: MechanismSpec) -> str:
    """Canonical short label used for CSV rows and log lines."""
    if isinstance(spec, Gaussian):
        return f"gaussian(c={spec.c:g},sigma={spec.sigma:g})"
    if isinstance(spec, PoissonGaussian):
        return f"poisson-gaussian(c={spec.c:g},sigma={spec.sigma:g},gamma={spec.gamma:g})"
    if isinstance(spec, ModelSplit):
        return f"model-split(d={spec.d},c={spec.c:g},sigma={spec.sigma:g})"
    if isinstance(spec, MixtureSplit):
        return f"mixture-split(d={spec.d},c={spec.c:g},sigma={spec.sigma:g})"
    if isinstance(spec, DropoutSplit):
        return f"dropout-split(c={spec.c:g},sigma={spec.sigma:g})"
    if isinstance(spec, PartialSplit):
        return (
            f"partial-split(d={spec.d},c_split={spec.c_split:g},"
            f"c_nonsplit={spec.c_nonsplit:g},sigma={spec.sigma:g})"
        )
    if isinstance(spec, Bis):
        return f"bis(T={spec.T},k={spec.k},c={spec.c:g},sigma={spec.sigma:g})"
    raise TypeError(f"unknown mechanism spec {spec!r}")


@dataclass(frozen=True)
class RdpCurve:
    """Per-order epsilon values; the unit of composition."""

    orders: tuple
    epsilons: np.ndarray
    provenance: tuple

    def __post_init__(self):
        orders = tuple(validate_order(a) for a in self.orders)
        eps = np.asarray(self.epsilons, dtype=float)
        prov = tuple(self.provenance)
        object.__setattr__(self, "orders", orders)
        object.__setattr__(self, "epsilons", eps)
        object.__setattr__(self, "provenance", prov)
        if not (len(orders) == len(eps) == len(prov)):
            raise ValueError("orders, epsilons, provenance must have equal lengths")
        if len(orders) == 0:
            raise ValueError("curve must contain at least one order")
        if np.any(eps < 0):
            raise ValueError("epsilons must be nonnegative")


@dataclass(frozen=True)
class DpGuarantee:
    epsilon: float
    delta: float
    achieving_order: int

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")


@dataclass(frozen=True)
class CompositionPlan:
    """Mechanisms to run sequentially, each with a repetition count."""

    items: tuple  # of (MechanismSpec, count)

    def __post_init__(self):
        items = tuple((spec, int(count)) for spec, count in self.items)
        object.__setattr__(self, "items", items)
        if not items:
            raise ValueError("composition plan must be nonempty")
        for _, count in items:
            if count < 1:
                raise ValueError(f"counts must be >= 1, got {count}")


def _poisson_gaussian_curve(spec: PoissonGaussian, orders) -> np.ndarray:
    """Per-iteration epsilon of the Poisson-subsampled Gaussian mechanism.

    (1/(alpha-1)) log{ (1-gamma)^(alpha-1) (alpha gamma - gamma + 1)
        + sum_{l=2..alpha} C(alpha,l) (1-gamma)^(alpha-l) gamma^l
          exp(l(l-1) c^2/(2 sigma^2)) }
    with the l=0,1 terms folded into the leading product.  Everything runs
    in log space so alpha=100 with c/sigma up to 10 cannot overflow.
    """
    theta = spec.c**2 / (2.0 * spec.sigma**2)
    log_g = math.log(spec.gamma)
    one_minus = 1.0 - spec.gamma
    eps = np.empty(len(orders))
    for i, alpha in enumerate(orders):
        a = validate_order(alpha)
        l = np.arange(2, a + 1)
        terms = log_comb(a, l) + l * log_g + theta * l * (l - 1)
        if one_minus > 0:
            terms = terms + (a - l) * math.log(one_minus)
            lead = (a - 1) * math.log(one_minus) + math.log1p(spec.gamma * (a - 1))
            all_terms = np.append(terms, lead)
        else:
            all_terms = terms[l == a]  # gamma = 1: only the full-overlap term survives
        eps[i] = logsumexp(all_terms) / (a - 1)
    return np.maximum(eps, 0.0)


def _split_family_curve(family: MixtureFamily, orders, mode: str):
    if mode == "loose":
        eps = epsilon_loose_curve(family, orders)
        return eps, ["loose"] * len(eps)
    if mode != "tight":
        raise ValueError(f"mode must be 'tight' or 'loose', got {mode!r}")
    rev = reverse_bound_curve(family, orders)
    if family.k == 1:
        fwd = forward_exact_k1_curve(family.d, family.c, family.sigma, orders)
        return np.maximum(fwd, rev), ["tight"] * len(rev)
    eps = np.empty(len(rev))
    prov = []
    for i, alpha in enumerate(orders):
        tight = epsilon_tight(family, alpha)
        eps[i] = tight.epsilon
        prov.append("tight" if tight.exact_forward else "loose")
    return eps, prov


def rdp_curve(spec: MechanismSpec, orders=DEFAULT_ORDERS, mode: str = "tight") -> RdpCurve:
    """Per-order epsilon curve for one mechanism.

    ``mode`` selects the forward path for split/subsampling mechanisms;
    closed-form mechanisms ignore it.  Cost-guard degradations appear in the
    per-order provenance rather than as failures.
    """
    orders = tuple(validate_order(a) for a in orders)
    if mode not in ("tight", "loose"):
        raise ValueError(f"mode must be 'tight' or 'loose', got {mode!r}")
    if isinstance(spec, Gaussian):
        a = np.array(orders, dtype=float)
        eps = a * spec.c**2 / (2.0 * spec.sigma**2)
        return RdpCurve(orders, eps, ("exact",) * len(orders))
    if isinstance(spec, PoissonGaussian):
        return RdpCurve(orders, _poisson_gaussian_curve(spec, orders), ("exact",) * len(orders))
    if isinstance(spec, (ModelSplit, MixtureSplit)):
        family = MixtureFamily(d=spec.d, k=1, c=spec.c, sigma=spec.sigma)
        eps, prov = _split_family_curve(family, orders, mode)
        return RdpCurve(orders, eps, tuple(prov))
    if isinstance(spec, DropoutSplit):
        return rdp_curve(ModelSplit(d=2, c=spec.c, sigma=spec.sigma), orders, mode)
    if isinstance(spec, PartialSplit):
        split = rdp_curve(ModelSplit(d=spec.d, c=spec.c_split, sigma=spec.sigma), orders, mode)
        a = np.array(orders, dtype=float)
        nonsplit_eps = a * spec.c_nonsplit**2 / (2.0 * spec.sigma**2)
        return RdpCurve(orders, split.epsilons + nonsplit_eps, split.provenance)
    if isinstance(spec, Bis):
        family = MixtureFamily(d=spec.T, k=spec.k, c=spec.c, sigma=spec.sigma)
        eps, prov = _split_family_curve(family, orders, mode)
        return RdpCurve(orders, eps, tuple(prov))
    raise TypeError(f"unknown mechanism spec {spec!r}")


def _merge_provenance(tags) -> str:
    return max(tags, key=lambda t: _PROVENANCE_RANK[t])


def compose(plan: CompositionPlan, orders=DEFAULT_ORDERS, mode: str = "tight") -> RdpCurve:
    """Pointwise epsilon sum over the plan, weighted by counts."""
    orders = tuple(validate_order(a) for a in orders)
    total = np.zeros(len(orders))
    prov = [["exact"] for _ in orders]
    for spec, count in plan.items:
        curve = rdp_curve(spec, orders, mode)
        total += count * curve.epsilons
        for i, tag in enumerate(curve.provenance):
            prov[i].append(tag)
    return RdpCurve(orders, total, tuple(_merge_provenance(tags) for tags in prov))


def scale_curve(curve: RdpCurve, count: int) -> RdpCurve:
    """count sequential runs of the mechanism behind ``curve``."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    return RdpCurve(curve.orders, count * curve.epsilons, curve.provenance)


def to_dp(curve: RdpCurve, delta: float) -> DpGuarantee:
    """Best (epsilon, delta) over the order grid.

    epsilon = min over alpha of eps(alpha) + log(1/delta)/(alpha - 1); ties
    break to the smallest order.
    """
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    a = np.array(curve.orders, dtype=float)
    candidates = curve.epsilons + math.log(1.0 / delta) / (a - 1.0)
    idx = int(np.argmin(candidates))  # argmin returns the first minimum
    return DpGuarantee(float(candidates[idx]), delta, curve.orders[idx])


def to_delta(curve: RdpCurve, epsilon: float) -> float:
    """Smallest grid-achievable delta at a fixed epsilon budget.

    delta = min over alpha of exp((alpha - 1)(eps(alpha) - epsilon)),
    clamped to at most 1.  May underflow to 0 for very strong guarantees.
    """
    if epsilon < 0:
        raise ValueError(f"epsilon must be nonnegative, got {epsilon}")
    a = np.array(curve.orders, dtype=float)
    log_delta = np.min((a - 1.0) * (curve.epsilons - epsilon))
    return float(math.exp(min(log_delta, 0.0)))


@dataclass(frozen=True)
class CalibrationResult:
    sigma: float
    achieved_epsilon: float
    target_epsilon: float
    delta: float
    iterations: int
    bracket_lo: float
    bracket_hi: float


def _clip_scale(spec: MechanismSpec) -> float:
    if isinstance(spec, PartialSplit):
        return max(spec.c_split, spec.c_nonsplit)
    return spec.c


def calibrate_sigma(
    template: MechanismSpec,
    count: int,
    target_epsilon: float,
    delta: float,
    orders=DEFAULT_ORDERS,
    mode: str = "tight",
    rel_tol: float = 1e-4,
    max_iter: int = 200,
) -> CalibrationResult:
    """Bisection for the noise meeting a (target_epsilon, delta) goal.

    ``template``'s sigma field is ignored and replaced by the probe value;
    ``count`` sequential runs are accounted.  Searches sigma in
    [1e-3 c, 1e3 c] (c = the template's clipping scale), stopping when the
    achieved epsilon is within rel_tol of the target or after max_iter
    rounds; the result always satisfies achieved <= target.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if target_epsilon <= 0:
        raise ValueError(f"target epsilon must be positive, got {target_epsilon}")
    c = _clip_scale(template)
    if c <= 0:
        raise ValueError("cannot calibrate a mechanism with zero clipping norm")

    def achieved(sigma: float) -> float:
        curve = scale_curve(rdp_curve(replace(template, sigma=sigma), orders, mode), count)
        return to_dp(curve, delta).epsilon

    lo, hi = 1e-3 * c, 1e3 * c
    eps_lo, eps_hi = achieved(lo), achieved(hi)
    if not (eps_hi <= target_epsilon <= eps_lo):
        raise CalibrationBracketError(
            f"target epsilon {target_epsilon} not bracketed: "
            f"epsilon({lo:g}) = {eps_lo:g}, epsilon({hi:g}) = {eps_hi:g}"
        )
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        mid = 0.5 * (lo + hi)
        eps_mid = achieved(mid)
        if eps_mid <= target_epsilon:
            hi, eps_hi = mid, eps_mid
            if target_epsilon - eps_mid <= rel_tol * target_epsilon:
                break
        else:
            lo = mid
    return CalibrationResult(
        sigma=hi,
        achieved_epsilon=eps_hi,
        target_epsilon=target_epsilon,
        delta=delta,
        iterations=iterations,
        bracket_lo=1e-3 * c,
        bracket_hi=1e3 * c,
    )


def bis_epoch_composition(
    T_epoch: int, k_epoch: int, n_epochs: int, c: float, sigma: float, orders=DEFAULT_ORDERS, mode: str = "tight"
) -> RdpCurve:
    """n_epochs sequential balanced-subsampling runs of T_epoch iterations each.

    Pointwise at least as large as the joint Bis(T_epoch*n_epochs,
    k_epoch*n_epochs) curve: organizing iterations into epochs removes
    randomness.
    """
    if n_epochs < 1:
        raise ValueError(f"n_epochs must be >= 1, got {n_epochs}")
    return scale_curve(rdp_curve(Bis(T=T_epoch, k=k_epoch, c=c, sigma=sigma), orders, mode), n_epochs)


@dataclass(frozen=True)
class BisPoissonComparison:
    """Per-order epsilons for Bis(T,k) vs T-fold Poisson at gamma=k/T."""

    T: int
    k: int
    c: float
    sigma: float
    orders: tuple
    eps_bis_tight: np.ndarray
    eps_bis_loose: np.ndarray
    eps_poisson: np.ndarray
    provenance_tight: tuple

    @property
    def tight_below_poisson(self) -> bool:
        return bool(np.all(self.eps_bis_tight <= self.eps_poisson))

    @property
    def loose_below_poisson(self) -> bool:
        return bool(np.all(self.eps_bis_loose <= self.eps_poisson))

    @property
    def max_rel_gap_tight(self) -> float:
        return float(np.max(np.abs(self.eps_bis_tight - self.eps_poisson) / self.eps_poisson))

    def poisson_over_tight_ratio(self, alpha: int) -> float:
        idx = self.orders.index(validate_order(alpha))
        return float(self.eps_poisson[idx] / self.eps_bis_tight[idx])


def compare_bis_poisson(T: int, k: int, c: float, sigma: float, orders=DEFAULT_ORDERS) -> BisPoissonComparison:
    """Side-by-side curves for the two subsampling schemes at matched rates."""
    orders = tuple(validate_order(a) for a in orders)
    bis_spec = Bis(T=T, k=k, c=c, sigma=sigma)
    tight = rdp_curve(bis_spec, orders, mode="tight")
    loose = rdp_curve(bis_spec, orders, mode="loose")
    poisson = scale_curve(rdp_curve(PoissonGaussian(c=c, sigma=sigma, gamma=k / T), orders), T)
    return BisPoissonComparison(
        T=T,
        k=k,
        c=c,
        sigma=sigma,
        orders=orders,
        eps_bis_tight=tight.epsilons,
        eps_bis_loose=loose.epsilons,
        eps_poisson=poisson.epsilons,
        provenance_tight=tight.provenance,
    )
