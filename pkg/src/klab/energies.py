"""Scalar functionals along trajectories and the closed-form decay envelopes.

The decay envelopes (``phi``, ``psi``, ``z_eps``) are implemented from their
closed forms rather than by integrating their defining ODEs: they serve as
reference curves in ratio tests, so quadrature error in them would contaminate
every measurement that divides by them.  The exponents are evaluated with
``expm1``/``log1p`` so that small-``t`` values stay accurate to a few ulp,
which matters when they feed log-linear regression.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .spectral import SpectralOperator, as_vector, sobolev_norm_sq

__all__ = [
    "weight_integral",
    "growth_integral",
    "phi",
    "psi",
    "z_eps",
    "parabolic_bound_rhs",
    "gamma_rate",
    "LyapunovParams",
    "decay_params",
    "perturbation_params",
    "EnergySample",
    "gamma_eps",
    "gamma_r",
    "gamma_c",
    "energy_E",
    "energy_F",
    "energy_G",
    "energy_script_E",
    "energy_script_F",
    "energy_script_G",
    "optimality_H",
    "equivalence_constants",
]

# Below this distance from p = 1 the exponent ((1+t)^(1-p) - 1)/(1-p) is
# evaluated by its limit log(1+t); the two branches agree to ~1e-6 relative
# at the threshold for t up to 1e3.
DEGENERATE_P = 1e-12


def weight_integral(p: float, t: float) -> float:
    """Integral of the damping weight: ``int_0^t (1+s)^(-p) ds``.

    Closed form ``((1+t)^(1-p) - 1)/(1-p)`` for ``p < 1``, continuously
    routed to ``log(1+t)`` when ``1-p`` is below the degeneracy threshold.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    q = 1.0 - p
    if q < DEGENERATE_P:
        return math.log1p(t)
    return math.expm1(q * math.log1p(t)) / q


def growth_integral(p: float, t: float) -> float:
    """``(1+t)^(1+p) - 1``, the exponent core of the parabolic envelopes."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return math.expm1((1.0 + p) * math.log1p(t))


def phi(beta: float, p: float, t: float) -> float:
    """Canonical decay envelope: solution of ``P' = -beta (1+t)^(-p) P``, ``P(0) = 1``.

    Closed form ``exp(-beta ((1+t)^(1-p) - 1)/(1-p))`` for ``p < 1`` and
    ``(1+t)^(-beta)`` at ``p = 1``.  Strictly decreasing, ``phi(beta, p, 0) = 1``.
    """
    if beta <= 0:
        raise ValueError("beta must be > 0")
    return math.exp(-beta * weight_integral(p, t))


def psi(alpha: float, p: float, t: float) -> float:
    """Parabolic-regime envelope ``exp(-alpha ((1+t)^(1+p) - 1))``; ``psi(alpha, p, 0) = 1``."""
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    return math.exp(-alpha * growth_integral(p, t))


def z_eps(eps: float, p: float, t: float) -> float:
    """Corrector kernel: solution of ``eps z' + (1+t)^(-p) z = 0``, ``z(0) = 1``.

    Equals ``exp(-((1+t)^(1-p) - 1)/(eps (1-p)))`` for ``p < 1`` and
    ``(1+t)^(-1/eps)`` at ``p = 1``; always in ``(0, 1]``.
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    return math.exp(-weight_integral(p, t) / eps)


def gamma_rate(mu: float, nu: float, p: float) -> float:
    """Decay-rate constant ``2 mu nu / (1+p)`` of the limit problem's sharp bound."""
    if mu <= 0 or nu <= 0:
        raise ValueError("mu and nu must be > 0")
    return 2.0 * mu * nu / (1.0 + p)


def parabolic_bound_rhs(t: float, p: float, mu: float, nu: float, C: float) -> float:
    """Right-hand side ``C exp(-(2 mu nu/(1+p)) (1+t)^(1+p))`` of the pointwise parabolic bound."""
    if C <= 0:
        raise ValueError("C must be > 0")
    g = gamma_rate(mu, nu, p)
    return C * math.exp(-g * math.exp((1.0 + p) * math.log1p(t)))


@dataclass(frozen=True)
class LyapunovParams:
    """Parameters of the weighted quadratic forms used by the decay monitors.

    ``sigma`` is only meaningful for the perturbation-energy variants and is
    ``None`` for the plain decay case.  Instances are built through
    :func:`decay_params` / :func:`perturbation_params`, which encode the
    admissibility conditions; building by hand is possible but unchecked
    beyond basic positivity.
    """

    beta: float
    p: float
    delta: float
    T: float
    sigma: float | None = None

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if self.delta <= 0:
            raise ValueError("delta must be > 0")
        if self.T < 0:
            raise ValueError("T must be >= 0")
        if self.sigma is not None and self.sigma <= 0:
            raise ValueError("sigma must be > 0 when present")


def decay_params(beta: float, p: float, mu: float, nu: float) -> LyapunovParams:
    """Lyapunov parameters for the decay monitors.

    For ``p = 0`` requires ``beta < 2 mu nu`` and uses
    ``delta = 2 (beta+1) nu / (2 mu nu - beta)`` with ``T = 0``; for ``p > 0``
    uses ``delta = (beta+2)/mu`` and the smallest ``T >= 0`` with
    ``(1+T)^(2p) >= delta beta / (2 nu)``.
    """
    if beta <= 0:
        raise ValueError("beta must be > 0")
    if p == 0.0:
        if beta >= 2.0 * mu * nu:
            raise ValueError(
                f"p=0 requires beta < 2*mu*nu (got beta={beta}, 2*mu*nu={2.0 * mu * nu})"
            )
        delta = 2.0 * (beta + 1.0) * nu / (2.0 * mu * nu - beta)
        return LyapunovParams(beta, p, delta, 0.0)
    delta = (beta + 2.0) / mu
    T = max(0.0, (delta * beta / (2.0 * nu)) ** (1.0 / (2.0 * p)) - 1.0)
    return LyapunovParams(beta, p, delta, T)


def perturbation_params(beta: float, p: float, mu: float, nu: float) -> LyapunovParams:
    """Lyapunov parameters for the remainder (perturbation) monitors.

    ``p = 0``: ``delta = 4 (beta+1) nu / (2 mu nu - beta)``,
    ``sigma = mu nu - beta/2``, ``T = 0`` (requires ``beta < 2 mu nu``).
    ``p > 0``: ``delta = (beta+2)/mu``, ``sigma = 1`` and the smallest
    ``T >= 0`` with ``(1+T)^(2p) >= delta (beta+sigma) / (2 nu)``.
    """
    if beta <= 0:
        raise ValueError("beta must be > 0")
    if p == 0.0:
        if beta >= 2.0 * mu * nu:
            raise ValueError(
                f"p=0 requires beta < 2*mu*nu (got beta={beta}, 2*mu*nu={2.0 * mu * nu})"
            )
        delta = 4.0 * (beta + 1.0) * nu / (2.0 * mu * nu - beta)
        sigma = mu * nu - beta / 2.0
        return LyapunovParams(beta, p, delta, 0.0, sigma)
    delta = (beta + 2.0) / mu
    sigma = 1.0
    T = max(0.0, (delta * (beta + sigma) / (2.0 * nu)) ** (1.0 / (2.0 * p)) - 1.0)
    return LyapunovParams(beta, p, delta, T, sigma)


@dataclass(frozen=True)
class EnergySample:
    """A named scalar functional value at one sample time."""

    t: float
    value: float
    name: str

    def __post_init__(self) -> None:
        if not math.isfinite(self.t) or self.t < 0:
            raise ValueError("t must be finite and >= 0")
        if not math.isfinite(self.value):
            raise ValueError("value must be finite")
        if self.name.startswith("gamma") and self.value < 0:
            raise ValueError("gamma-family samples are sums of squares, got a negative value")


def gamma_eps(state, eps: float, op: SpectralOperator) -> float:
    """Full second-order energy ``|u|^2 + |A^(1/2)u|^2 + |Au|^2 + |u'|^2 + eps |A^(1/2)u'|^2``."""
    u, v = state.u, state.v
    return (
        sobolev_norm_sq(op, u, 0.0)
        + sobolev_norm_sq(op, u, 0.5)
        + sobolev_norm_sq(op, u, 1.0)
        + sobolev_norm_sq(op, v, 0.0)
        + eps * sobolev_norm_sq(op, v, 0.5)
    )


def gamma_r(rho, rprime, eps: float, op: SpectralOperator) -> float:
    """Remainder energy ``|rho|^2 + |A^(1/2)rho|^2 + eps |r'|^2``."""
    return (
        sobolev_norm_sq(op, rho, 0.0)
        + sobolev_norm_sq(op, rho, 0.5)
        + eps * sobolev_norm_sq(op, rprime, 0.0)
    )


def gamma_c(rho, rprime, eps: float, op: SpectralOperator) -> float:
    """Stronger remainder energy ``|rho|^2 + |A^(1/2)rho|^2 + |Arho|^2 + |r'|^2 + eps |A^(1/2)r'|^2``."""
    return (
        sobolev_norm_sq(op, rho, 0.0)
        + sobolev_norm_sq(op, rho, 0.5)
        + sobolev_norm_sq(op, rho, 1.0)
        + sobolev_norm_sq(op, rprime, 0.0)
        + eps * sobolev_norm_sq(op, rprime, 0.5)
    )


def energy_E(state, eps: float, c_val: float, op: SpectralOperator) -> float:
    """Coefficient-weighted first energy ``eps |u'|^2 / c + |A^(1/2)u|^2``."""
    return eps * sobolev_norm_sq(op, state.v, 0.0) / c_val + sobolev_norm_sq(
        op, state.u, 0.5
    )


def energy_F(
    state, eps: float, c_val: float, op: SpectralOperator, lp: LyapunovParams
) -> float:
    """Lyapunov functional: ``energy_E`` plus the weighted cross and mass terms.

    ``E + eps delta (1+t)^(-p) <u', u> + (delta/2) (1+t)^(-2p) |u|^2``; may go
    negative for large ``eps``, which the sandwich check reports rather than
    forbids.
    """
    u = as_vector(state.u, op)
    v = as_vector(state.v, op)
    w = (1.0 + state.t) ** (-lp.p)
    return (
        energy_E(state, eps, c_val, op)
        + eps * lp.delta * w * float(v @ u)
        + 0.5 * lp.delta * w * w * float(u @ u)
    )


def energy_G(state) -> float:
    """Kinetic term ``|u'|^2`` alone."""
    v = as_vector(state.v)
    return float(v @ v)


def energy_script_E(rho, rprime, eps: float, c_val: float, op: SpectralOperator) -> float:
    """Remainder counterpart of ``energy_E``: ``eps |r'|^2 / c + |A^(1/2)rho|^2``."""
    return eps * sobolev_norm_sq(op, rprime, 0.0) / c_val + sobolev_norm_sq(
        op, rho, 0.5
    )


def energy_script_F(
    rho,
    rprime,
    t: float,
    eps: float,
    c_val: float,
    op: SpectralOperator,
    lp: LyapunovParams,
) -> float:
    """Remainder counterpart of ``energy_F`` built with the perturbation-case parameters."""
    rho = as_vector(rho, op)
    rprime = as_vector(rprime, op)
    w = (1.0 + t) ** (-lp.p)
    return (
        energy_script_E(rho, rprime, eps, c_val, op)
        + eps * lp.delta * w * float(rprime @ rho)
        + 0.5 * lp.delta * w * w * float(rho @ rho)
    )


def energy_script_G(rprime) -> float:
    """Remainder kinetic term ``|r'|^2``."""
    r = as_vector(rprime)
    return float(r @ r)


def optimality_H(
    state, eps: float, c_val: float, phi_val: float, op: SpectralOperator
) -> float:
    """Ratio ``(eps |u'|^2 / c + |A^(1/2)u|^2) / phi_val`` whose divergence witnesses optimality."""
    if phi_val <= 0:
        raise ValueError("phi_val must be > 0")
    return energy_E(state, eps, c_val, op) / phi_val


def equivalence_constants(mu: float, c_sup: float) -> tuple[float, float, float]:
    """Sandwich constants tying ``energy_E``/``energy_F`` to ``eps|u'|^2 + |A^(1/2)u|^2``.

    Returns ``(k_lower_E, k_upper_E, k_lower_F)`` with
    ``k_lower_E = min(1/c_sup, 1)``, ``k_upper_E = max(1/mu, 1)`` and
    ``k_lower_F = min(1/(2 c_sup), 1/2)``; ``c_sup`` is the measured supremum
    of the run's coefficient trace (the run is the only witness for it).
    """
    if mu <= 0 or c_sup <= 0:
        raise ValueError("mu and c_sup must be > 0")
    return (
        min(1.0 / c_sup, 1.0),
        max(1.0 / mu, 1.0),
        min(1.0 / (2.0 * c_sup), 0.5),
    )
