"""BDF generating functions, fractional-power convolution quadrature
weights, and scalar convolution-quadrature evolutions.

The weights of delta(zeta)^beta are produced by the power recurrence on
polynomial coefficients (O(kN) work); a radius-scaled DFT evaluation is
kept alongside as an independent test oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from subfem.errors import BranchCutError, UnsupportedOrderError
from subfem.special import MlParams, mittag_leffler, reciprocal_gamma


@dataclass(frozen=True)
class BdfGen:
    """Generating polynomial of the k-step BDF method,
    delta(zeta) = sum_{j=1}^k (1/j)(1 - zeta)^j, stored by
    increasing powers of zeta."""

    k: int
    coeffs: tuple

    def __call__(self, zeta):
        """Evaluate delta(zeta) (scalar or array, real or complex)."""
        acc = np.zeros_like(np.asarray(zeta, dtype=complex))
        for c in reversed(self.coeffs):
            acc = acc * zeta + c
        return acc


@dataclass(frozen=True)
class CqWeights:
    """Coefficients omega_j in delta(zeta)^beta = sum_j omega_j zeta^j.

    The tau^(-beta) scale of delta_tau(zeta)^beta is applied by callers.
    """

    k: int
    beta: float
    omega: np.ndarray
    tau: float = 1.0


def bdf_gen(k: int) -> BdfGen:
    """Exact expansion of the BDF-k generating polynomial."""
    if not 1 <= k <= 6:
        raise UnsupportedOrderError(f"BDF order {k} outside 1..6")
    coeffs = [Fraction(0)] * (k + 1)
    # (1 - zeta)^j expanded with binomial coefficients, accumulated over j.
    binom = [[Fraction(1)]]
    for _ in range(k):
        prev = binom[-1]
        binom.append([Fraction(1)]
                     + [prev[i] + prev[i + 1] for i in range(len(prev) - 1)]
                     + [Fraction(1)])
    for j in range(1, k + 1):
        for i in range(j + 1):
            coeffs[i] += Fraction(1, j) * binom[j][i] * (-1) ** i
    return BdfGen(k, tuple(float(c) for c in coeffs))


def cq_weights(gen: BdfGen, beta: float, n: int) -> CqWeights:
    """Weights omega_0..omega_n of delta(zeta)^beta by the power
    recurrence  omega_m = (1/(m c_0)) sum_j ((beta+1) j - m) c_j omega_{m-j}."""
    if n < 0:
        raise ValueError("n must be >= 0")
    c = np.asarray(gen.coeffs)
    k = gen.k
    omega = np.empty(n + 1)
    omega[0] = c[0] ** beta
    for m in range(1, n + 1):
        jmax = min(m, k)
        j = np.arange(1, jmax + 1)
        omega[m] = np.dot(((beta + 1.0) * j - m) * c[1:jmax + 1],
                          omega[m - j]) / (m * c[0])
    return CqWeights(k=k, beta=beta, omega=omega)


def _cq_weights_dft(gen: BdfGen, beta: float, n: int,
                    oversample: int = 16) -> np.ndarray:
    """Test oracle: weights recovered from samples of delta(zeta)^beta on
    the circle |zeta| = rho by an inverse FFT.

    rho is set so rho^n = 1e-3, balancing the rho^(-j) roundoff blowup
    against aliasing; accuracy is ~1e-11 relative to the weight scale.
    """
    rho = 1e-3 ** (1.0 / max(n, 1))
    q = 1 << int(np.ceil(np.log2(max(oversample * (n + 1), 64))))
    zeta = rho * np.exp(2j * np.pi * np.arange(q) / q)
    samples = gen(zeta) ** beta
    # Power-series coefficients come from the forward transform here:
    # c_j rho^j = (1/q) sum_m f(zeta_m) exp(-2 pi i j m / q).
    coeff = np.fft.fft(samples)[: n + 1] / q
    return (coeff.real / rho ** np.arange(n + 1))


def scalar_regular_step(k: int, alpha: float, m: int, lam: float, tau: float,
                        n_steps: int, v0: float) -> np.ndarray:
    """Scalar analog of the regular-part time stepping scheme with the
    elliptic operator replaced by lam > 0:

        tau^-alpha sum_{j<=n} omega_j^(alpha) U^{n-j} + lam U^n
            = (-1)^m tau^-(1+m)alpha omega_n^((1+m)alpha-1) lam^-m v0,

    for n = 0..n_steps.  Returns the trajectory U^0..U^N."""
    gen = bdf_gen(k)
    w_a = cq_weights(gen, alpha, n_steps).omega
    w_r = cq_weights(gen, (1.0 + m) * alpha - 1.0, n_steps).omega
    sign = -1.0 if m % 2 else 1.0
    s_rhs = sign * tau ** (-(1.0 + m) * alpha) * lam ** (-m) * v0
    ta = tau ** -alpha
    u = np.zeros(n_steps + 1)
    diag = ta * w_a[0] + lam
    for n in range(n_steps + 1):
        hist = np.dot(w_a[1:n + 1], u[n - 1::-1]) if n else 0.0
        u[n] = (s_rhs * w_r[n] - ta * hist) / diag
    return u


def scalar_regular_exact(alpha: float, m: int, lam: float, t: float) -> float:
    """Closed form of the scalar regular part,
    E_{alpha,1}(-lam t^alpha) - sum_{j=1}^m (-1)^{j+1} t^-j*alpha
    / (Gamma(1-j*alpha) lam^j)."""
    val = mittag_leffler(MlParams(alpha, 1.0), -lam * t ** alpha)
    for j in range(1, m + 1):
        val -= (-1.0) ** (j + 1) * t ** (-j * alpha) \
            * reciprocal_gamma(1.0 - j * alpha) / lam ** j
    return val


def suggested_radius(n: int, n_quad: int) -> float:
    """Circle radius balancing rho^(-n) roundoff amplification against
    rho^q aliasing for coefficient extraction: rho = eps^(1/q)."""
    return float((1e-16) ** (1.0 / max(n_quad, 2 * (n + 1))))


def _check_branch(vals: np.ndarray) -> None:
    bad = (vals.real < 0.0) & (np.abs(vals.imag) <= 1e-14 * np.abs(vals.real))
    if np.any(bad):
        raise BranchCutError(
            "delta_tau(zeta) touches the negative real axis; "
            "principal-branch powers are unreliable for this radius")


def cauchy_integral_scalar(k: int, alpha: float, m: int, lam: float,
                           tau: float, n: int, rho: float = 0.5,
                           n_quad: int | None = None, v0: float = 1.0) -> float:
    """Independent oracle for scalar_regular_step: evaluates

        U^n = (1/2 pi i) oint_{|zeta|=rho} zeta^(-n-1) Utilde(zeta) d zeta,
        Utilde = (-1)^m tau^-1 delta_tau^((1+m)alpha-1)
                 (delta_tau^alpha + lam)^-1 lam^-m v0,

    by the trapezoidal rule on the circle.

    The default point count is 8(n+1) with a floor of 64; the aliasing
    error scales like rho^q, so the floor keeps small-n evaluations at
    ~1e-19 relative for the default rho."""
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must be in (0, 1)")
    q = n_quad if n_quad is not None else max(8 * (n + 1), 64)
    if q < 2 * (n + 1):
        raise ValueError("need at least 2(n+1) quadrature points")
    gen = bdf_gen(k)
    theta = 2.0 * np.pi * np.arange(q) / q
    zeta = rho * np.exp(1j * theta)
    delta_tau = gen(zeta) / tau
    _check_branch(delta_tau)
    sign = -1.0 if m % 2 else 1.0
    util = (sign / tau) * delta_tau ** ((1.0 + m) * alpha - 1.0) \
        / (delta_tau ** alpha + lam) * lam ** (-m) * v0
    vals = util * np.exp(-1j * n * theta)
    return float(vals.mean().real / rho ** n)
