"""Hierarchy construction, propagation and steady states.

The coupled system+bath dynamics is represented by a hierarchy of auxiliary
density operators (ADOs) indexed by occupation numbers of the exponential
bath components ("dissipaton channels").  Level 0 is the physical reduced
density matrix; the first tier carries the system--bath correlations that
the heat-current and input-output checks read out.

Equations of motion (unscaled ADOs, hard truncation above the tier):

    d rho_n / dt = -i [H, rho_n] - (sum_k n_k gamma_k) rho_n
                   - i sum_k [Q_{u(k)}, rho_{n+e_k}]
                   - i sum_k n_k (a_k Q_{u(k)} rho_{n-e_k}
                                  - abar_k rho_{n-e_k} Q_{u(k)})

where ``a_k`` is the amplitude of channel ``k`` in ``<F(t)F(0)>`` and
``abar_k`` the amplitude of ``exp(-gamma_k t)`` in the conjugate series
``<F(0)F(t)>`` (channels are paired by conjugate rates).  In this
convention a first-tier ADO equals ``tr_B[f_k rho_total]``, so first-tier
traces directly give hybrid bath-mode expectations.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb

import numpy as np
from numba import njit, prange

from .bath import ExpSeries

__all__ = [
    "SystemSpec",
    "DissipatonChannel",
    "ADOIndex",
    "HierarchyModel",
    "HierarchyState",
    "build_hierarchy",
    "channels_from_series",
    "rhs",
    "propagate",
    "steady_state",
    "expectation",
    "bath_mode_expectation",
    "build_liouvillian",
    "ConvergenceError",
    "DivergenceError",
]

HERMITICITY_TOL = 1e-12
RK4_STABILITY_BOUND = 2.5
DIVERGENCE_NORM = 1e6


class ConvergenceError(RuntimeError):
    """Steady-state iteration did not reach the requested residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DivergenceError(RuntimeError):
    """Propagation blew past the divergence guard."""


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """System Hamiltonian and dissipative-mode operators.

    ``hamiltonian`` and every entry of ``modes`` must be Hermitian d x d
    matrices; ``dim >= 2``.
    """

    dim: int
    hamiltonian: np.ndarray
    modes: tuple[np.ndarray, ...]

    def __init__(self, hamiltonian, modes):
        H = np.asarray(hamiltonian, dtype=complex)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValueError(f"hamiltonian must be square, got shape {H.shape}")
        d = H.shape[0]
        if d < 2:
            raise ValueError(f"dim must be >= 2, got {d}")
        if np.max(np.abs(H - H.conj().T)) > HERMITICITY_TOL:
            raise ValueError("hamiltonian is not Hermitian to 1e-12")
        Qs = []
        for i, Q in enumerate(modes):
            Q = np.asarray(Q, dtype=complex)
            if Q.shape != (d, d):
                raise ValueError(f"mode {i} has shape {Q.shape}, expected {(d, d)}")
            if np.max(np.abs(Q - Q.conj().T)) > HERMITICITY_TOL:
                raise ValueError(f"mode {i} is not Hermitian to 1e-12")
            Qs.append(Q)
        object.__setattr__(self, "dim", d)
        object.__setattr__(self, "hamiltonian", H)
        object.__setattr__(self, "modes", tuple(Qs))

    def __eq__(self, other):
        if not isinstance(other, SystemSpec):
            return NotImplemented
        return (self.dim == other.dim
                and np.array_equal(self.hamiltonian, other.hamiltonian)
                and len(self.modes) == len(other.modes)
                and all(np.array_equal(a, b)
                        for a, b in zip(self.modes, other.modes)))


@dataclass(frozen=True)
class DissipatonChannel:
    """One exponential component of one hybrid bath mode.

    ``a`` is its amplitude in the forward correlation series, ``a_bar``
    the amplitude of the same decay rate in the conjugate (backward)
    series.
    """

    reservoir: str
    mode: int
    a: complex
    gamma: complex
    a_bar: complex

    def __post_init__(self):
        if np.real(self.gamma) <= 0:
            raise ValueError(f"channel rate must have Re > 0, got {self.gamma}")


@dataclass(frozen=True)
class ADOIndex:
    """Occupation numbers, one per dissipaton channel."""

    occupation: tuple[int, ...]

    def __post_init__(self):
        if any(n < 0 for n in self.occupation):
            raise ValueError("occupation counts must be non-negative")

    def level(self) -> int:
        return sum(self.occupation)


def channels_from_series(reservoir: str, mode: int, series: ExpSeries,
                         rate_match_tol: float = 1e-8) -> list[DissipatonChannel]:
    """Turn one exponential correlation series into hierarchy channels.

    The backward amplitude of each channel is the conjugate of the
    amplitude at the conjugate rate, so the channel set must be closed
    under rate conjugation (real rates pair with themselves).
    """
    terms = series.terms
    chans = []
    for a, g in terms:
        partner = None
        for a2, g2 in terms:
            if abs(g2 - np.conj(g)) <= rate_match_tol * max(abs(g), 1.0):
                partner = a2
                break
        if partner is None:
            raise ValueError(
                f"series for ({reservoir}, {mode}) has no conjugate partner for "
                f"rate {g}; cannot close the hierarchy")
        chans.append(DissipatonChannel(reservoir, mode, complex(a), complex(g),
                                       complex(np.conj(partner))))
    return chans


class HierarchyModel:
    """Immutable hierarchy layout plus the equation-of-motion tables.

    Exposes O(1) neighbor lookups through precomputed index tables
    (``up_index``/``down_index``) mapping ADO ``i`` and channel ``k`` to
    the ADO with ``n_k`` raised/lowered (-1 where absent).
    """

    def __init__(self, system: SystemSpec, channels: list[DissipatonChannel],
                 tier: int, ado_cap: int = 2_000_000):
        if tier < 0:
            raise ValueError(f"tier must be >= 0, got {tier}")
        self.system = system
        self.channels = list(channels)
        self.tier = tier
        K = len(self.channels)
        n_expected = comb(K + tier, tier)
        if n_expected > ado_cap:
            raise ValueError(
                f"hierarchy with {K} channels at tier {tier} needs {n_expected} "
                f"ADOs, above the cap {ado_cap}; lower the tier, drop weak "
                f"channels, or raise ado_cap")

        occ = np.zeros((n_expected, K), dtype=np.int16)
        pos = 0
        index = {}
        for total in range(tier + 1):
            for c in itertools.combinations_with_replacement(range(K), total):
                for j in c:
                    occ[pos, j] += 1
                index[occ[pos].tobytes()] = pos
                pos += 1
        assert pos == n_expected
        self.n_ado = n_expected
        self.occupations = occ
        self._index = index

        up = np.full((self.n_ado, K), -1, dtype=np.int64)
        dn = np.full((self.n_ado, K), -1, dtype=np.int64)
        for i in range(self.n_ado):
            o = occ[i]
            level = int(o.sum())
            for k in range(K):
                if level < tier:
                    o[k] += 1
                    up[i, k] = index[o.tobytes()]
                    o[k] -= 1
                if o[k] > 0:
                    o[k] -= 1
                    dn[i, k] = index[o.tobytes()]
                    o[k] += 1
        self.up_index = up
        self.down_index = dn

        self.gamma = np.array([c.gamma for c in self.channels], dtype=complex)
        self.amp = np.array([c.a for c in self.channels], dtype=complex)
        self.amp_bar = np.array([c.a_bar for c in self.channels], dtype=complex)
        self.mode_of = np.array([c.mode for c in self.channels], dtype=np.int64)
        for c in self.channels:
            if not 0 <= c.mode < len(system.modes):
                raise ValueError(f"channel refers to mode {c.mode}, but the system "
                                 f"has {len(system.modes)} dissipative modes")
        self._Qop = np.array([system.modes[u] for u in self.mode_of]
                             ) if K else np.zeros((0, system.dim, system.dim),
                                                  dtype=complex)
        self._occ_float = occ.astype(np.float64)
        self.damping = (self._occ_float @ self.gamma if K
                        else np.zeros(self.n_ado, dtype=complex))
        # first_tier[k]: ADO index of occupation e_k (-1 at tier 0)
        self.first_tier = self.up_index[0].copy() if self.n_ado else np.zeros(0, np.int64)

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    def ado_id(self, occupation) -> int:
        if isinstance(occupation, ADOIndex):
            occupation = occupation.occupation
        key = np.asarray(occupation, dtype=np.int16).tobytes()
        if key not in self._index:
            raise KeyError(f"no ADO with occupation {tuple(occupation)}")
        return self._index[key]

    def zero_state(self) -> "HierarchyState":
        d = self.system.dim
        return HierarchyState(self, np.zeros((self.n_ado, d, d), dtype=complex))

    def initial_state(self, rho0=None) -> "HierarchyState":
        """Factorized initial condition: ``rho0`` at level 0, zeros above
        (maximally mixed by default)."""
        d = self.system.dim
        state = self.zero_state()
        if rho0 is None:
            rho0 = np.eye(d) / d
        rho0 = np.asarray(rho0, dtype=complex)
        if rho0.shape != (d, d):
            raise ValueError(f"rho0 must be {d}x{d}, got {rho0.shape}")
        state.ados[0] = rho0
        return state

    def rate_bound(self) -> float:
        """Crude spectral-radius proxy for the generator (stability checks)."""
        h_norm = np.linalg.norm(self.system.hamiltonian, 2)
        damp_max = float(np.max(self.damping.real)) if self.n_ado else 0.0
        coup = 0.0
        if self.n_channels:
            q_norms = np.array([np.linalg.norm(Q, 2) for Q in self._Qop])
            coup = 2.0 * self.tier * float(
                np.max(np.sqrt(np.abs(self.amp)) * q_norms, initial=0.0))
        return 2.0 * h_norm + damp_max + coup

    def apply_rhs(self, ados: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        if out is None:
            out = np.empty_like(ados)
        _rhs_kernel(ados, self.system.hamiltonian, self._Qop, self.up_index,
                    self.down_index, self._occ_float,
                    self.damping, self.amp, self.amp_bar, out)
        return out


@dataclass
class HierarchyState:
    """All ADOs of one hierarchy, as an ``(n_ado, d, d)`` complex array."""

    model: HierarchyModel
    ados: np.ndarray

    @property
    def rho(self) -> np.ndarray:
        """Level-0 matrix (the reduced density matrix for physical states)."""
        return self.ados[0]

    def __getitem__(self, occupation) -> np.ndarray:
        return self.ados[self.model.ado_id(occupation)]

    def copy(self) -> "HierarchyState":
        return HierarchyState(self.model, self.ados.copy())

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.ados))) if self.ados.size else 0.0


@njit(parallel=True, cache=True)
def _rhs_kernel(ados, H, Qop, up, dn, occ, damp, amp, amp_bar, out):
    n, d, _ = ados.shape
    K = Qop.shape[0]
    for i in prange(n):
        for r in range(d):
            for c in range(d):
                acc = -damp[i] * ados[i, r, c]
                for m in range(d):
                    acc += -1j * (H[r, m] * ados[i, m, c] - ados[i, r, m] * H[m, c])
                out[i, r, c] = acc
        for k in range(K):
            j = up[i, k]
            if j >= 0:
                for r in range(d):
                    for c in range(d):
                        acc = 0.0j
                        for m in range(d):
                            acc += (Qop[k, r, m] * ados[j, m, c]
                                    - ados[j, r, m] * Qop[k, m, c])
                        out[i, r, c] += -1j * acc
            j = dn[i, k]
            if j >= 0:
                nk = occ[i, k]
                for r in range(d):
                    for c in range(d):
                        acc = 0.0j
                        for m in range(d):
                            acc += (amp[k] * Qop[k, r, m] * ados[j, m, c]
                                    - amp_bar[k] * ados[j, r, m] * Qop[k, m, c])
                        out[i, r, c] += -1j * nk * acc


def build_hierarchy(system: SystemSpec, channels: list[DissipatonChannel],
                    tier: int, ado_cap: int = 2_000_000) -> HierarchyModel:
    """Enumerate all ADO indices with total occupation <= ``tier``."""
    return HierarchyModel(system, channels, tier, ado_cap=ado_cap)


def rhs(model: HierarchyModel, state: HierarchyState) -> HierarchyState:
    """Time derivative of a hierarchy state."""
    return HierarchyState(model, model.apply_rhs(state.ados))


def stable_step(model: HierarchyModel, dt: float) -> float:
    """Largest step <= ``dt`` satisfying the RK4 stability bound."""
    bound = model.rate_bound()
    if bound <= 0:
        return dt
    return min(dt, RK4_STABILITY_BOUND / bound)


def propagate(model: HierarchyModel, state: HierarchyState, dt: float,
              n_steps: int, record=None, record_every: int = 1,
              _guard_every: int = 200) -> HierarchyState:
    """Classical RK4 propagation by ``n_steps`` steps of size ``dt``.

    ``record(step, ados)`` is called after every ``record_every``-th step.
    Raises if ``dt`` violates the stability bound or if any ADO norm
    passes the divergence guard.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    bound = model.rate_bound()
    if dt * bound > RK4_STABILITY_BOUND:
        raise ValueError(
            f"dt={dt} exceeds the RK4 stability bound for this hierarchy "
            f"(rate bound {bound:.3g}); use dt <= {RK4_STABILITY_BOUND / bound:.3g}")
    ados = state.ados.copy()
    k1 = np.empty_like(ados)
    k2 = np.empty_like(ados)
    k3 = np.empty_like(ados)
    k4 = np.empty_like(ados)
    for step in range(1, n_steps + 1):
        model.apply_rhs(ados, k1)
        model.apply_rhs(ados + (0.5 * dt) * k1, k2)
        model.apply_rhs(ados + (0.5 * dt) * k2, k3)
        model.apply_rhs(ados + dt * k3, k4)
        ados += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if step % _guard_every == 0 and np.max(np.abs(ados)) > DIVERGENCE_NORM:
            raise DivergenceError(
                f"ADO norm exceeded {DIVERGENCE_NORM:g} at step {step}")
        if record is not None and step % record_every == 0:
            record(step, ados)
    return HierarchyState(model, ados)


def steady_state(model: HierarchyModel, initial: HierarchyState | None = None,
                 tol: float = 1e-8, dt: float = 0.01, t_max: float = 600.0,
                 check_every: int = 100, method: str = "propagate"
                 ) -> HierarchyState:
    """Stationary hierarchy state with ``||rhs||_max <= tol * ||state||_max``.

    Default is long-time propagation with stagnation detection; ``method=
    "solve"`` uses a sparse direct null-space solve with the unit-trace
    constraint replacing one row.
    """
    if tol <= 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    if method == "solve":
        return _steady_state_solve(model, tol)
    if method != "propagate":
        raise ValueError(f"unknown steady-state method {method!r}")

    state = model.initial_state() if initial is None else initial.copy()
    dt = stable_step(model, dt)
    t = 0.0
    history: list[float] = []
    residual = np.inf
    while t < t_max:
        state = propagate(model, state, dt, check_every)
        t += dt * check_every
        residual = float(np.max(np.abs(model.apply_rhs(state.ados)))) / state.max_abs()
        if residual <= tol:
            return state
        history.append(residual)
        if len(history) >= 4 and history[-1] > 0.98 * history[-4]:
            raise ConvergenceError(
                f"steady-state residual stagnated at {residual:.3e} "
                f"(tol {tol:.1e}) after t={t:.1f}", residual=residual)
    raise ConvergenceError(
        f"steady state not reached by t={t_max}: residual {residual:.3e} "
        f"(tol {tol:.1e})", residual=residual)


def _steady_state_solve(model: HierarchyModel, tol: float) -> HierarchyState:
    from scipy.sparse.linalg import splu

    d = model.system.dim
    n = model.n_ado
    L = build_liouvillian(model).tolil()
    # replace the (ado 0, element 00) row with the unit-trace constraint
    row = np.zeros(n * d * d)
    for i in range(d):
        row[i * d + i] = 1.0
    L[0, :] = row
    b = np.zeros(n * d * d, dtype=complex)
    b[0] = 1.0
    x = splu(L.tocsc()).solve(b)
    ados = np.ascontiguousarray(x.reshape(n, d, d))
    state = HierarchyState(model, ados)
    resid = np.max(np.abs(model.apply_rhs(ados))) / state.max_abs()
    if resid > max(tol, 1e3 * np.finfo(float).eps) * 10:
        raise ConvergenceError(
            f"direct solve left residual {resid:.3e} above tol {tol:.1e}",
            residual=float(resid))
    return state


def build_liouvillian(model: HierarchyModel):
    """Sparse CSR matrix of the hierarchy generator over flattened states."""
    import scipy.sparse as sp

    d = model.system.dim
    eye = np.eye(d)
    H = model.system.hamiltonian
    blocks_rows = []
    blocks_cols = []
    blocks_vals = []

    def add_block(i, j, B):
        B = sp.coo_matrix(B)
        blocks_rows.append(B.row + i * d * d)
        blocks_cols.append(B.col + j * d * d)
        blocks_vals.append(B.data)

    comm_H = -1j * (np.kron(H, eye) - np.kron(eye, H.T))
    for i in range(model.n_ado):
        add_block(i, i, comm_H - model.damping[i] * np.eye(d * d))
    for k in range(model.n_channels):
        Q = model._Qop[k]
        comm_Q = -1j * (np.kron(Q, eye) - np.kron(eye, Q.T))
        for i in range(model.n_ado):
            j = model.up_index[i, k]
            if j >= 0:
                add_block(i, j, comm_Q)
            j = model.down_index[i, k]
            if j >= 0:
                nk = float(model.occupations[i, k])
                add_block(i, j, -1j * nk * (model.amp[k] * np.kron(Q, eye)
                                            - model.amp_bar[k] * np.kron(eye, Q.T)))
    n = model.n_ado * d * d
    return sp.csr_matrix(
        (np.concatenate(blocks_vals),
         (np.concatenate(blocks_rows), np.concatenate(blocks_cols))),
        shape=(n, n))


def expectation(state: HierarchyState, operator) -> complex:
    """``trace(operator @ rho)`` against the level-0 matrix."""
    op = np.asarray(operator, dtype=complex)
    d = state.model.system.dim
    if op.shape != (d, d):
        raise ValueError(f"operator must be {d}x{d}, got {op.shape}")
    return complex(np.trace(op @ state.rho))


def bath_mode_expectation(state: HierarchyState, reservoir: str, mode: int) -> complex:
    """``<F_{alpha u}>`` from the first tier: sum of level-1 ADO traces over
    the channels of ``(reservoir, mode)``."""
    model = state.model
    total = 0.0 + 0.0j
    for k, chan in enumerate(model.channels):
        if chan.reservoir == reservoir and chan.mode == mode:
            i = model.first_tier[k]
            if i >= 0:
                total += np.trace(state.ados[i])
    return complex(total)
