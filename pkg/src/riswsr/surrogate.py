"""Concave surrogate construction for the lifted weighted sum rate.

Around an expansion point Phi_bar, the weighted sum of finite-blocklength
rates is minorized by a concave function that is exact at Phi_bar.  The
capacity part uses a logarithmic minorant driven by the square root (one
antenna) or the plain ratio (several antennas) of the signal trace; the
dispersion penalty uses a tangent of the square root followed by a
quadratic-over-linear overestimate, with the denominator linearized in
the multi-antenna case.

The result is returned as a `SurrogateBundle`: a constant, one folded
linear term, and lists of structured concave/convex pieces.  The bundle
is both directly evaluable in numpy (for monotonicity and consistency
checks) and consumable by the conic backend, which maps each piece onto
second-order cone constraints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from riswsr.estimation import EstimateSet
from riswsr.fblr import FblrParams

__all__ = [
    "DegenerateExpansionError",
    "SqrtTerm",
    "QuadTerm",
    "QolTerm",
    "SurrogateBundle",
    "expand_single_antenna",
    "expand_multi_antenna",
    "expand_objective",
]

LN2 = math.log(2.0)

# relative floor on the linearized denominator of the penalty overestimate;
# keeps the restricted subproblem inside the region where the bound holds
DEN_FLOOR_FRACTION = 1e-8


class DegenerateExpansionError(RuntimeError):
    """Expansion point gives a vanishing signal term for some sensor.

    The logarithmic minorant needs a strictly positive signal trace at the
    expansion point; callers should restart from a different RIS vector.
    """


@dataclass(frozen=True)
class SqrtTerm:
    """coeff * sqrt(tr(matrix Phi)); concave for PSD matrix."""

    coeff: float
    matrix: np.ndarray


@dataclass(frozen=True)
class QuadTerm:
    """Convex quadratic entering the objective with a minus sign.

    value = coeff * ( sum_r tr(A_r Phi)^2 + sum_c |tr(B_c Phi)|^2
                      + ||F Phi||_F^2 )

    A_r are Hermitian (real traces), B_c arbitrary, F rectangular.
    """

    coeff: float
    real_trace_mats: np.ndarray   # (R, L, L)
    cplx_trace_mats: np.ndarray   # (C, L, L)
    frob_factor: np.ndarray       # (K, L); may have zero rows


@dataclass(frozen=True)
class QolTerm:
    """Quadratic-over-linear piece entering the objective with a minus sign.

    value = coeff * (num_const^2 + tr(num_matrix Phi)^2)
                  / (den_const + tr(den_matrix Phi))

    subject to the denominator staying at or above `den_floor`.
    """

    coeff: float
    num_const: float
    num_matrix: np.ndarray
    den_const: float
    den_matrix: np.ndarray
    den_floor: float


@dataclass(frozen=True)
class SurrogateBundle:
    """Concave minorant of the weighted sum rate around one expansion point."""

    num_ris: int
    constant: float
    linear: np.ndarray
    sqrt_terms: tuple
    quad_terms: tuple
    qol_terms: tuple

    def structure(self):
        """Shape signature; bundles with equal signatures share one solver template."""
        quads = tuple(
            (q.real_trace_mats.shape[0], q.cplx_trace_mats.shape[0], q.frob_factor.shape[0])
            for q in self.quad_terms
        )
        return (self.num_ris, len(self.sqrt_terms), quads, len(self.qol_terms))

    def evaluate(self, Phi) -> float:
        """Surrogate value at Phi; -inf where a guarded denominator closes."""
        Phi = np.asarray(Phi, dtype=complex)
        val = self.constant + float(np.trace(self.linear @ Phi).real)
        for t in self.sqrt_terms:
            arg = float(np.trace(t.matrix @ Phi).real)
            val += t.coeff * math.sqrt(max(arg, 0.0))
        for q in self.quad_terms:
            acc = float(np.sum(np.real(np.trace(q.real_trace_mats @ Phi, axis1=1, axis2=2)) ** 2))
            if q.cplx_trace_mats.shape[0]:
                acc += float(np.sum(np.abs(np.trace(q.cplx_trace_mats @ Phi, axis1=1, axis2=2)) ** 2))
            if q.frob_factor.shape[0]:
                acc += float(np.linalg.norm(q.frob_factor @ Phi) ** 2)
            val -= q.coeff * acc
        for t in self.qol_terms:
            num = t.num_const**2 + float(np.trace(t.num_matrix @ Phi).real) ** 2
            if t.coeff * num == 0.0:
                continue
            den = t.den_const + float(np.trace(t.den_matrix @ Phi).real)
            if den <= 0.0:
                return -np.inf
            val -= t.coeff * num / den
        return val


def _hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def _real_trace(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.trace(a @ b).real)


def _check_signal(x_bar: float, gram_trace: float, phi_trace: float, sensor: int):
    thresh = 1e-14 * max(1.0, gram_trace * phi_trace)
    if x_bar <= thresh:
        raise DegenerateExpansionError(
            f"signal trace vanished for sensor {sensor} at the expansion point"
        )


def expand_single_antenna(
    estimates: EstimateSet,
    params: FblrParams,
    weights,
    Phi_bar: np.ndarray,
) -> SurrogateBundle:
    """Bundle for a single-antenna CN, built on the linear-fractional SINR."""
    if estimates.num_antennas != 1:
        raise ValueError("single-antenna expansion needs K == 1")
    L = estimates.num_ris
    Phi_bar = np.asarray(Phi_bar, dtype=complex)
    weights = np.asarray(weights, dtype=float)
    p = estimates.tx_power_w
    sigma2 = estimates.noise_power
    c_err = float(np.real(estimates.interference_cov[0, 0]))
    rows = estimates.matrices()[:, 0, :]
    grams = [p[i] * np.outer(rows[i].conj(), rows[i]) for i in range(estimates.num_sensors)]
    total = c_err * np.eye(L) + sum(grams)

    constant = 0.0
    linear = np.zeros((L, L), dtype=complex)
    sqrt_terms = []
    qol_terms = []
    phi_trace = float(np.trace(Phi_bar).real)
    for i in range(estimates.num_sensors):
        own = grams[i]
        x_bar = _real_trace(own, Phi_bar)
        _check_signal(x_bar, float(np.trace(own).real), phi_trace, i)
        b_bar = sigma2 + _real_trace(total, Phi_bar)
        y_bar = b_bar - x_bar
        rho_bar = x_bar / y_bar
        cap_bar = math.log2(1.0 + rho_bar)
        d_bar = math.sqrt(2.0 * x_bar / b_bar)
        w = weights[i]
        a = float(params.penalty[i])

        constant += w * (cap_bar - (rho_bar / LN2) * (1.0 + sigma2 / b_bar))
        constant -= w * a * 0.5 * d_bar
        sqrt_terms.append(
            SqrtTerm(coeff=w * 2.0 * rho_bar / (LN2 * math.sqrt(x_bar)), matrix=own)
        )
        linear -= w * (rho_bar / (LN2 * b_bar)) * total
        # Fold the coefficient into the numerator data.  Near a nulled
        # sensor the raw coefficient grows like x_bar**-1.5 and wrecks the
        # conic solver's scaling; the square root keeps parameters tame.
        root = math.sqrt(w * a * 0.5 / (d_bar * x_bar))
        qol_terms.append(
            QolTerm(
                coeff=1.0,
                num_const=root * x_bar,
                num_matrix=root * own,
                den_const=sigma2,
                den_matrix=total,
                den_floor=0.0,
            )
        )
    return SurrogateBundle(
        num_ris=L,
        constant=constant,
        linear=_hermitize(linear),
        sqrt_terms=tuple(sqrt_terms),
        quad_terms=(),
        qol_terms=tuple(qol_terms),
    )


def expand_multi_antenna(
    estimates: EstimateSet,
    params: FblrParams,
    weights,
    Phi_bar: np.ndarray,
) -> SurrogateBundle:
    """Bundle for a multi-antenna CN, built on the quadratic-fractional SINR."""
    L = estimates.num_ris
    m = estimates.num_sensors
    Phi_bar = np.asarray(Phi_bar, dtype=complex)
    weights = np.asarray(weights, dtype=float)
    p = estimates.tx_power_w
    sigma2 = estimates.noise_power
    eff = estimates.matrices()

    evals, evecs = np.linalg.eigh(estimates.interference_cov)
    cov_root = (evecs * np.sqrt(np.clip(evals, 0.0, None))) @ evecs.conj().T

    phi_trace = float(np.trace(Phi_bar).real)
    constant = 0.0
    linear = np.zeros((L, L), dtype=complex)
    quad_terms = []
    qol_terms = []
    for i in range(m):
        own = _hermitize(eff[i].conj().T @ eff[i])
        x_bar = _real_trace(own, Phi_bar)
        _check_signal(x_bar, float(np.trace(own).real), phi_trace, i)
        others = [j for j in range(m) if j != i]
        cross = [eff[i].conj().T @ eff[j] for j in others]
        frob = cov_root @ eff[i]
        lam = _hermitize(frob.conj().T @ frob)

        cross_tr = np.array([np.trace(xm @ Phi_bar) for xm in cross])
        s_bar = p[i] * x_bar**2
        noise_bar = sigma2 * x_bar
        err_bar = float(np.linalg.norm(frob @ Phi_bar) ** 2)
        intf_bar = float(np.dot(p[others], np.abs(cross_tr) ** 2)) if others else 0.0
        t_bar = s_bar + noise_bar + err_bar + intf_bar
        rho_bar = s_bar / (t_bar - s_bar)
        cap_bar = math.log2(1.0 + rho_bar)
        d_bar = math.sqrt(2.0 * s_bar / t_bar)
        kappa = rho_bar / (LN2 * t_bar)
        w = weights[i]
        a = float(params.penalty[i])

        # capacity minorant: exact at Phi_bar, concave everywhere
        constant += w * (cap_bar - rho_bar / LN2)
        linear += w * (2.0 * rho_bar / (LN2 * x_bar) - kappa * sigma2) * own
        # Same coefficient folding as the single-antenna branch: keep the
        # cone data on comparable scales even when kappa is extreme.
        qroot = math.sqrt(w * kappa)
        quad_terms.append(
            QuadTerm(
                coeff=1.0,
                real_trace_mats=np.asarray([qroot * math.sqrt(p[i]) * own]),
                cplx_trace_mats=np.asarray(
                    [qroot * math.sqrt(pj) * xm for pj, xm in zip(p[others], cross)]
                ).reshape(len(others), L, L),
                frob_factor=qroot * frob,
            )
        )

        # penalty overestimate: tangent of the root, then the total-power
        # denominator replaced by its tangent plane (an underestimate, so
        # the ratio stays an overestimate while the denominator is positive)
        grad = (
            (2.0 * p[i] * x_bar + sigma2) * own
            + lam @ Phi_bar
            + Phi_bar @ lam
        )
        for pj, xm, tr_val in zip(p[others], cross, cross_tr):
            grad = grad + 2.0 * pj * tr_val * xm.conj().T
        den_matrix = _hermitize(grad)
        den_const = t_bar - _real_trace(den_matrix, Phi_bar)
        constant -= w * a * 0.5 * d_bar
        root = math.sqrt(w * a * p[i] / d_bar)
        qol_terms.append(
            QolTerm(
                coeff=1.0,
                num_const=0.0,
                num_matrix=root * own,
                den_const=den_const,
                den_matrix=den_matrix,
                den_floor=DEN_FLOOR_FRACTION * t_bar,
            )
        )
    return SurrogateBundle(
        num_ris=L,
        constant=constant,
        linear=_hermitize(linear),
        sqrt_terms=(),
        quad_terms=tuple(quad_terms),
        qol_terms=tuple(qol_terms),
    )


def expand_objective(
    estimates: EstimateSet,
    params: FblrParams,
    weights,
    Phi_bar: np.ndarray,
) -> SurrogateBundle:
    """Build the surrogate matching the CN antenna count."""
    if estimates.num_antennas == 1:
        return expand_single_antenna(estimates, params, weights, Phi_bar)
    return expand_multi_antenna(estimates, params, weights, Phi_bar)
