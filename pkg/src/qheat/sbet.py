"""Input-output relations and the three heat-current evaluators.

The entangled system--bath response spectra are exact matrix maps of the
local-system response through the bare bath kernel:

    chi~^{alpha S}(w) = -phi~^alpha(w) chi~^{SS}(w)
    chi~^{S alpha}(w) = -chi~^{SS}(w) phi~^alpha(w)
    chi~^{alpha alpha'}(w) = phi~^alpha chi~^{SS} phi~^{alpha'}
                             + delta_{alpha alpha'} phi~^alpha

Heat currents (positive = heat leaving the reservoir into the system):

* direct        -- first-tier dissipaton readout, sum_k (-gamma_k)
                   tr(Q_u rho^{(1)}_k) over the reservoir's channels;
* indirect_freq -- (2/pi) sum_uv int dw [w/(e^{beta w}-1)] J_uv(w) C_vu(w);
* indirect_time -- -2 Re sum_uv int_0^inf dtau dphi^{+}_uv/dtau
                   <Q_v(0) Q_u(tau)>, with the kernel derivative taken
                   analytically on its exponential series.

The two indirect routes are analytically equivalent; their numerical gap
measures transform/quadrature error only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from .bath import ReservoirSpec, eta_matrix, phi_sigma_series, reservoir_phi_tilde, spectral_density
from .heom import HierarchyState, bath_mode_expectation, expectation
from .spectra import Spectrum, TimeSeries

__all__ = [
    "HeatCurrentReport",
    "ExpectationCheck",
    "QuadratureError",
    "chi_cross_spectrum",
    "chi_bath_bath_spectrum",
    "expectation_relation_check",
    "heat_current_indirect",
    "heat_current_timedomain",
    "heat_current_direct",
]

IMAG_RESIDUE_TOL = 1e-6
QUADRATURE_DRIFT_TOL = 5e-3


class QuadratureError(RuntimeError):
    """Frequency quadrature is unresolved or left a complex residue."""


@dataclass
class HeatCurrentReport:
    """One heat-current evaluation with its numerical diagnostics."""

    reservoir: str
    value: float
    method: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError(f"non-finite heat current {self.value}")
        if self.method not in ("direct", "indirect_freq", "indirect_time"):
            raise ValueError(f"unknown method tag {self.method!r}")


@dataclass
class ExpectationCheck:
    """Both sides of the static input-output relation for one (alpha, u)."""

    reservoir: str
    mode: int
    first_tier: complex
    eta_route: complex
    rel_gap: float


def _phi_matrix(reservoir: ReservoirSpec, w: np.ndarray, n_modes: int) -> np.ndarray:
    return reservoir_phi_tilde(reservoir, w, n_modes=n_modes)


def chi_cross_spectrum(chi_ss: Spectrum, reservoir: ReservoirSpec,
                       side: str = "bath-first") -> Spectrum:
    """Entangled system--bath response from the local one.

    ``side="bath-first"`` gives ``chi~^{alpha S} = -phi~^alpha chi~^SS``,
    ``side="system-first"`` gives ``chi~^{S alpha} = -chi~^SS phi~^alpha``.
    """
    if chi_ss.values.ndim != 3:
        raise ValueError("chi_cross_spectrum needs a matrix-valued spectrum")
    n_modes = chi_ss.values.shape[1]
    phi = _phi_matrix(reservoir, chi_ss.w, n_modes)
    if side == "bath-first":
        vals = -np.einsum("wij,wjk->wik", phi, chi_ss.values)
    elif side == "system-first":
        vals = -np.einsum("wij,wjk->wik", chi_ss.values, phi)
    else:
        raise ValueError(f"side must be 'bath-first' or 'system-first', got {side!r}")
    return Spectrum(chi_ss.w, vals)


def chi_bath_bath_spectrum(chi_ss: Spectrum, res_a: ReservoirSpec,
                           res_b: ReservoirSpec) -> Spectrum:
    """Bath--bath response ``phi~^a chi~^SS phi~^b + delta_ab phi~^a``."""
    if chi_ss.values.ndim != 3:
        raise ValueError("chi_bath_bath_spectrum needs a matrix-valued spectrum")
    n_modes = chi_ss.values.shape[1]
    phi_a = _phi_matrix(res_a, chi_ss.w, n_modes)
    phi_b = _phi_matrix(res_b, chi_ss.w, n_modes)
    vals = np.einsum("wij,wjk,wkl->wil", phi_a, chi_ss.values, phi_b)
    if res_a.label == res_b.label:
        vals = vals + phi_a
    return Spectrum(chi_ss.w, vals)


def expectation_relation_check(ss: HierarchyState,
                               reservoirs: list[ReservoirSpec]
                               ) -> list[ExpectationCheck]:
    """Compare ``<F_{alpha u}>`` read from the first tier against
    ``-sum_v eta_uv <Q_v>`` for every attached (reservoir, mode)."""
    system = ss.model.system
    n_modes = len(system.modes)
    q_exp = np.array([expectation(ss, Q) for Q in system.modes])
    out = []
    for res in reservoirs:
        eta = eta_matrix(res, n_modes=n_modes)
        for u in sorted(res.modes):
            lhs = bath_mode_expectation(ss, res.label, u)
            rhs = complex(-(eta[u] @ q_exp))
            scale = max(abs(lhs), abs(rhs), 1e-12)
            out.append(ExpectationCheck(res.label, u, lhs, rhs,
                                        abs(lhs - rhs) / scale))
    return out


def _current_kernel(reservoir: ReservoirSpec, w: np.ndarray, n_modes: int
                    ) -> np.ndarray:
    """``w/(e^{beta w} - 1) * J_uv(w)`` with the ``w -> 0`` limit built in."""
    kern = np.zeros((w.size, n_modes, n_modes))
    nz = w != 0.0
    with np.errstate(over="ignore"):
        bose_w = np.where(nz, w / np.expm1(reservoir.beta * np.where(nz, w, 1.0)),
                          1.0 / reservoir.beta)
    bose_w = np.where(np.isfinite(bose_w), bose_w, 0.0)
    for u, mode in reservoir.modes.items():
        kern[:, u, u] = bose_w * spectral_density(mode, w)   # J(0) = 0
    return kern


def heat_current_indirect(C: Spectrum, reservoir: ReservoirSpec
                          ) -> HeatCurrentReport:
    """Frequency-domain (input-output / NEGF) heat current from the
    steady-state correlation spectrum ``C_vu(w)``.

    Composite-Simpson quadrature over the spectrum grid.  Raises if
    doubling the grid spacing moves the result by more than 0.5 % or if
    the imaginary residue exceeds ``1e-6``.
    """
    if C.values.ndim != 3:
        raise ValueError("heat_current_indirect needs a matrix-valued spectrum")
    w = C.w
    n_modes = C.values.shape[1]
    kern = _current_kernel(reservoir, w, n_modes)
    integrand = (2.0 / np.pi) * np.einsum("wuv,wvu->w", kern, C.values)
    value = complex(simpson(integrand, x=w))
    coarse = complex(simpson(integrand[::2], x=w[::2]))
    scale = max(abs(value), 1e-3)
    drift = abs(value - coarse) / scale
    if drift > QUADRATURE_DRIFT_TOL:
        raise QuadratureError(
            f"heat-current quadrature unresolved: doubling the grid spacing "
            f"moves the result by {drift:.2%} (> {QUADRATURE_DRIFT_TOL:.1%})")
    if abs(value.imag) > IMAG_RESIDUE_TOL:
        raise QuadratureError(
            f"imaginary residue {value.imag:.3e} above {IMAG_RESIDUE_TOL:g}")
    return HeatCurrentReport(
        reservoir.label, float(value.real), "indirect_freq",
        diagnostics={"imag_residue": value.imag, "grid_drift": drift,
                     "dw": float(w[1] - w[0])})


def heat_current_timedomain(S: TimeSeries, reservoir: ReservoirSpec,
                            n_pade: int = 24,
                            decay_tol: float = 1e-6) -> HeatCurrentReport:
    """Time-domain heat current
    ``-2 Re sum_uv int_0^inf dtau dphi^{+}_uv/dtau <Q_v(0) Q_u(tau)>``.

    ``S`` is the raw (plateau included) correlation matrix ``S_vu(t)``;
    the needed ``<Q_v(0) Q_u(tau)> = conj(S_uv(tau))`` at stationarity.
    The kernel derivative is evaluated analytically on the exponential
    series of ``phi^+`` (no numerical differentiation).
    """
    if S.values.ndim != 3:
        raise ValueError("heat_current_timedomain needs a matrix-valued series")
    t = S.t
    total = 0.0 + 0.0j
    tail_rel = 0.0
    for u, mode in reservoir.modes.items():
        dphi = phi_sigma_series(mode, reservoir.beta, "+", n_pade).derivative()(t)
        backward = np.conj(S.values[:, u, u])
        integrand = dphi * backward
        peak = np.max(np.abs(integrand))
        if peak > 0:
            tail = abs(integrand[-1]) / peak
            tail_rel = max(tail_rel, tail)
            if tail > decay_tol:
                raise QuadratureError(
                    f"time-domain current integrand for mode {u} has not "
                    f"decayed: tail {tail:.2e} of peak (> {decay_tol:g})")
        total += np.trapezoid(integrand, t)
    value = -2.0 * total
    return HeatCurrentReport(
        reservoir.label, float(value.real), "indirect_time",
        diagnostics={"imag_residue": float(value.imag),
                     "integrand_tail": tail_rel, "n_pade": n_pade})


def heat_current_direct(ss: HierarchyState, reservoir: ReservoirSpec | str
                        ) -> HeatCurrentReport:
    """First-tier dissipaton evaluation of the heat current.

    Each channel of the reservoir decays at its own rate ``gamma_k``, so
    ``<Q_u dF_{alpha u}/dt> = sum_k (-gamma_k) tr(Q_u rho^{(1)}_k)``.
    The imaginary part is discarded and must stay below
    ``1e-6 * max(|J|, 1e-3)``.
    """
    label = reservoir.label if isinstance(reservoir, ReservoirSpec) else reservoir
    model = ss.model
    total = 0.0 + 0.0j
    matched = False
    for k, chan in enumerate(model.channels):
        if chan.reservoir != label:
            continue
        matched = True
        i = model.first_tier[k]
        if i >= 0:
            Q = model.system.modes[chan.mode]
            total += (-chan.gamma) * np.trace(Q @ ss.ados[i])
    if not matched and model.n_channels:
        raise ValueError(f"no hierarchy channels belong to reservoir {label!r}")
    scale = max(abs(total.real), 1e-3)
    if abs(total.imag) > IMAG_RESIDUE_TOL * scale:
        raise QuadratureError(
            f"direct current imaginary part {total.imag:.3e} above "
            f"{IMAG_RESIDUE_TOL:g} * {scale:g}")
    return HeatCurrentReport(
        label, float(total.real), "direct",
        diagnostics={"imag_residue": float(total.imag), "tier": model.tier})
