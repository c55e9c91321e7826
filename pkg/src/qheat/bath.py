"""Harmonic-bath kernel models.

Each reservoir is a collection of Brownian-oscillator modes attached to the
system's dissipative operators.  This module provides the closed-form
response kernel and spectral density of a single mode, the thermal
(temperature-dependent) correlation function as an exponential series, the
absorptive/emissive split of the response kernel, and the static coupling
matrix.

Conventions (used consistently across the package, hbar = k_B = 1, every
energy in units of the system coupling V):

* half-line transforms are ``f~(w) = int_0^inf dt e^{i w t} f(t)``;
* the spectral density is the imaginary part of the transformed response
  kernel, ``J(w) = Im phi~(w)``, an odd function of ``w``;
* the thermal correlation function is
  ``c(t) = (1/pi) int dw e^{-i w t} J(w) / (1 - e^{-beta w})``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BrownianMode",
    "ReservoirSpec",
    "ExpSeries",
    "phi_tilde",
    "spectral_density",
    "response_kernel",
    "kernel_poles",
    "bose_occupation",
    "pade_bose_decomposition",
    "matsubara_bose_decomposition",
    "thermal_correlation_series",
    "phi_sigma",
    "phi_sigma_series",
    "eta_matrix",
    "reservoir_phi_tilde",
]

_DEGENERATE_RTOL = 1e-12


@dataclass(frozen=True)
class BrownianMode:
    """One Brownian-oscillator bath mode.

    Parameters
    ----------
    eta : float
        Coupling strength (energy units); ``phi~(0) = eta``.
    omega0 : float
        Oscillator frequency.
    zeta : float
        Damping rate.  ``zeta**2 > 4*omega0**2`` is the overdamped branch,
        ``<`` the underdamped one; the degenerate double pole is rejected.
    """

    eta: float
    omega0: float
    zeta: float

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")
        if self.omega0 <= 0:
            raise ValueError(f"omega0 must be > 0, got {self.omega0}")
        if self.zeta <= 0:
            raise ValueError(f"zeta must be > 0, got {self.zeta}")


@dataclass(frozen=True)
class ReservoirSpec:
    """One thermal reservoir: inverse temperature plus its bath modes.

    ``modes`` maps a system dissipative-mode index ``u`` to the
    :class:`BrownianMode` this reservoir attaches there.  Mode indices must
    be distinct (enforced by the dict) and non-negative.
    """

    label: str
    beta: float
    modes: dict[int, BrownianMode] = field(default_factory=dict)

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        for u in self.modes:
            if not isinstance(u, (int, np.integer)) or u < 0:
                raise ValueError(f"mode index must be a non-negative int, got {u!r}")


@dataclass
class ExpSeries:
    """Exponential series ``sum_k a_k exp(-gamma_k t)`` for ``t >= 0``.

    ``remainder`` is the weight of a truncated delta-like tail; it is kept
    for bookkeeping and is zero everywhere in this package.
    """

    terms: list[tuple[complex, complex]]
    remainder: float = 0.0

    def __post_init__(self):
        for a, g in self.terms:
            if np.real(g) <= 0:
                raise ValueError(f"decay rates must have Re > 0, got {g}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape, dtype=complex)
        for a, g in self.terms:
            out += a * np.exp(-g * t)
        return out if out.shape else complex(out)

    def conjugate(self) -> "ExpSeries":
        """Series of ``conj(f(t))`` for real ``t >= 0``."""
        return ExpSeries([(np.conj(a), np.conj(g)) for a, g in self.terms],
                         self.remainder)

    def derivative(self) -> "ExpSeries":
        """Term-by-term analytic time derivative."""
        return ExpSeries([(-a * g, g) for a, g in self.terms], 0.0)

    def scaled(self, factor: complex) -> "ExpSeries":
        return ExpSeries([(factor * a, g) for a, g in self.terms], self.remainder)

    def truncated(self, drop_tol: float) -> "ExpSeries":
        """Drop terms with ``|a_k| <= drop_tol * sum_j |a_j|``."""
        total = sum(abs(a) for a, _ in self.terms)
        kept = [(a, g) for a, g in self.terms if abs(a) > drop_tol * total]
        return ExpSeries(kept, self.remainder)


def _as_mode(mode: BrownianMode) -> BrownianMode:
    if not isinstance(mode, BrownianMode):
        raise TypeError(f"expected BrownianMode, got {type(mode).__name__}")
    return mode


def phi_tilde(mode: BrownianMode, omega):
    """Half-line transform of the response kernel,
    ``eta * omega0**2 / (omega0**2 - w**2 - i*w*zeta)``.

    Analytic in the upper half-plane; accepts scalar or array ``omega``.
    """
    m = _as_mode(mode)
    w = np.asarray(omega, dtype=complex)
    out = m.eta * m.omega0**2 / (m.omega0**2 - w**2 - 1j * w * m.zeta)
    return out if out.shape else complex(out)


def spectral_density(mode: BrownianMode, omega):
    """``J(w) = Im phi~(w)``, odd in ``w`` and non-negative for ``w >= 0``."""
    m = _as_mode(mode)
    w = np.asarray(omega, dtype=float)
    out = m.eta * m.omega0**2 * m.zeta * w / ((m.omega0**2 - w**2) ** 2
                                              + (m.zeta * w) ** 2)
    return out if out.shape else float(out)


def _spectral_density_cont(mode: BrownianMode, z):
    # rational continuation of J to complex argument (used at series poles)
    return (mode.eta * mode.omega0**2 * mode.zeta * z
            / ((mode.omega0**2 - z**2) ** 2 + (mode.zeta * z) ** 2))


def kernel_poles(mode: BrownianMode) -> tuple[complex, complex]:
    """The two lower-half-plane poles of the continued ``phi~``.

    Roots of ``w**2 + i*zeta*w - omega0**2``; overdamped modes give two
    purely imaginary poles ``-i*gamma_-+/``, underdamped ones a conjugate
    pair ``+-w_R - i*zeta/2``.  The critically damped double pole is
    rejected.
    """
    m = _as_mode(mode)
    disc = 4 * m.omega0**2 - m.zeta**2
    if abs(disc) <= _DEGENERATE_RTOL * 4 * m.omega0**2:
        raise ValueError(
            f"degenerate Brownian mode (zeta**2 == 4*omega0**2, zeta={m.zeta}, "
            f"omega0={m.omega0}): double pole not supported")
    root = np.lib.scimath.sqrt(complex(disc))
    return (complex((-1j * m.zeta + root) / 2), complex((-1j * m.zeta - root) / 2))


def response_kernel(mode: BrownianMode, t):
    """Response kernel ``phi(t)`` for ``t >= 0`` in closed form.

    Overdamped: ``eta*omega0**2*(exp(-g_- t) - exp(-g_+ t))/(g_+ - g_-)``
    with ``g_-+ = zeta/2 -+ sqrt(zeta**2/4 - omega0**2)``; underdamped: the
    same two-pole expression, which reduces to a damped sinusoid.
    """
    m = _as_mode(mode)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("response_kernel is defined for t >= 0")
    w1, w2 = kernel_poles(m)
    g1, g2 = 1j * w1, 1j * w2
    amp = m.eta * m.omega0**2 / (g2 - g1)
    out = np.real(amp * (np.exp(-g1 * t) - np.exp(-g2 * t)))
    return out if out.shape else float(out)


def bose_occupation(beta: float, omega):
    """Bose function ``1/(e^{beta*w} - 1)``.

    Negative for ``w < 0`` (``n(-w) = -(1 + n(w))``).  Exactly ``w == 0``
    is a domain error; callers needing the ``w -> 0`` limit use
    ``w*n -> 1/beta``.
    """
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    w = np.asarray(omega, dtype=float)
    if np.any(w == 0.0):
        raise ValueError("bose_occupation diverges at omega = 0")
    with np.errstate(over="ignore"):
        out = 1.0 / np.expm1(beta * w)
    out = np.where(np.isfinite(out), out, 0.0)
    return out if out.shape else float(out)


def _bose_weight(beta: float, z: complex) -> complex:
    # 1/(1 - e^{-beta z}) at complex argument
    return 1.0 / -np.expm1(-beta * complex(z))


def pade_bose_decomposition(n: int) -> tuple[np.ndarray, np.ndarray]:
    """[N-1/N] Pade decomposition of ``1/(1 - e^{-x})``.

    Returns ``(kappa, xi)`` such that
    ``1/(1-e^{-x}) ~= 1/x + 1/2 + sum_j 2*kappa_j*x/(x**2 + xi_j**2)``,
    poles on the imaginary axis at ``x = -+ i*xi_j`` with residue
    ``kappa_j``.  Pole locations come from inverse eigenvalues of the
    standard symmetric tridiagonal matrices.
    """
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if n == 0:
        return np.zeros(0), np.zeros(0)
    sub = 1.0 / np.sqrt((2 * np.arange(2 * n - 1) + 3) * (2 * np.arange(2 * n - 1) + 5))
    ev = np.sort(np.linalg.eigvalsh(np.diag(sub, -1) + np.diag(sub, 1)))[::-1]
    xi = 2.0 / ev[:n]
    xi2 = xi**2
    if n == 1:
        return np.array([0.5 * n * (2 * n + 3)]), xi
    subp = 1.0 / np.sqrt((2 * np.arange(2 * n - 2) + 5) * (2 * np.arange(2 * n - 2) + 7))
    evp = np.sort(np.linalg.eigvalsh(np.diag(subp, -1) + np.diag(subp, 1)))[::-1]
    chi2 = (2.0 / evp[: n - 1]) ** 2
    kappa = np.zeros(n)
    pre = 0.5 * n * (2 * n + 3)
    for j in range(n):
        r = pre
        if j < n - 1:
            r *= (chi2[j] - xi2[j]) / (xi2[n - 1] - xi2[j])
        for k in range(n - 1):
            if k != j:
                r *= (chi2[k] - xi2[j]) / (xi2[k] - xi2[j])
        kappa[j] = r
    return kappa, xi


def matsubara_bose_decomposition(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Plain Matsubara expansion: ``xi_j = 2*pi*j`` with unit weights."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    return np.ones(n), 2 * np.pi * np.arange(1, n + 1)


def thermal_correlation_series(mode: BrownianMode, beta: float, n_pade: int,
                               scheme: str = "pade") -> ExpSeries:
    """Exponential decomposition of the thermal correlation function.

    ``c(t) = <F(t)F(0)>`` is closed by residues in the lower half-plane:
    the two kernel poles weighted by the Bose function, plus ``n_pade``
    Bose-function poles weighted by the (continued) spectral density.
    ``-2*Im c(t)`` reproduces :func:`response_kernel` identically; the
    antisymmetric part carries no temperature dependence.

    ``scheme`` selects the Bose decomposition: ``"pade"`` ([N-1/N],
    default) or ``"matsubara"`` (for cross-checking).
    """
    m = _as_mode(mode)
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    if m.eta == 0.0:
        return ExpSeries([])
    w1, w2 = kernel_poles(m)
    terms = []
    for wp, wo in ((w1, w2), (w2, w1)):
        res_phi = -m.eta * m.omega0**2 / (wp - wo)
        terms.append((-res_phi * _bose_weight(beta, wp), 1j * wp))
    if scheme == "pade":
        kappa, xi = pade_bose_decomposition(n_pade)
    elif scheme == "matsubara":
        kappa, xi = matsubara_bose_decomposition(n_pade)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    kernel_rates = [1j * w1, 1j * w2]
    for kj, xj in zip(kappa, xi):
        g = xj / beta
        for gk in kernel_rates:
            if abs(g - gk) <= 1e-10 * abs(g):
                raise ValueError(
                    f"Bose pole at rate {g} collides with a kernel pole at {gk}; "
                    f"perturb beta or the mode parameters")
        a = -2j * (kj / beta) * _spectral_density_cont(m, -1j * g)
        terms.append((complex(a), complex(g)))
    return ExpSeries(terms)


def phi_sigma_series(mode: BrownianMode, beta: float, sigma: str,
                     n_pade: int = 24) -> ExpSeries:
    """Exponential series of the absorptive/emissive kernel components.

    The split of ``phi`` fixed by the canonical-ensemble constraints is
    ``phi^+(t) = -i*conj(c(t))`` and ``phi^-(t) = +i*c(t)`` with ``c`` the
    thermal correlation function; their sum recovers ``phi`` exactly and
    their difference is the symmetrized (coth-weighted) transform.
    """
    c = thermal_correlation_series(mode, beta, n_pade)
    if sigma == "+":
        return c.conjugate().scaled(-1j)
    if sigma == "-":
        return c.scaled(1j)
    raise ValueError(f"sigma must be '+' or '-', got {sigma!r}")


def phi_sigma(mode: BrownianMode, beta: float, t, sigma: str, n_pade: int = 24):
    """Evaluate ``phi^sigma(t)`` for ``t >= 0`` (via the exponential series)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("phi_sigma is defined for t >= 0")
    if not isinstance(mode, BrownianMode):
        raise TypeError(f"expected BrownianMode, got {type(mode).__name__}")
    if mode.eta == 0.0:
        out = np.zeros(t.shape, dtype=complex)
        return out if out.shape else 0j
    return phi_sigma_series(mode, beta, sigma, n_pade)(t)


def eta_matrix(reservoir: ReservoirSpec, n_modes: int | None = None) -> np.ndarray:
    """Static coupling matrix ``eta_uv = int_0^inf phi_uv(t) dt = phi~_uv(0)``.

    Diagonal for the Brownian model: ``eta_uu = eta`` of the mode attached
    at ``u``, zero elsewhere.  ``n_modes`` sizes the matrix; by default the
    largest attached index + 1.
    """
    if n_modes is None:
        n_modes = max(reservoir.modes, default=-1) + 1
    out = np.zeros((n_modes, n_modes))
    for u, m in reservoir.modes.items():
        if u >= n_modes:
            raise ValueError(f"mode index {u} out of range for n_modes={n_modes}")
        out[u, u] = m.eta
    return out


def reservoir_phi_tilde(reservoir: ReservoirSpec, omega, n_modes: int | None = None
                        ) -> np.ndarray:
    """Matrix-valued ``phi~^alpha(w)`` over mode indices, shape ``(nw, m, m)``.

    Diagonal in the Brownian model; rows/columns of unattached modes are
    zero.
    """
    if n_modes is None:
        n_modes = max(reservoir.modes, default=-1) + 1
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    out = np.zeros((w.size, n_modes, n_modes), dtype=complex)
    for u, m in reservoir.modes.items():
        if u >= n_modes:
            raise ValueError(f"mode index {u} out of range for n_modes={n_modes}")
        out[:, u, u] = phi_tilde(m, w)
    return out
