"""Steady-state two-time correlation functions and their spectra.

Correlation trajectories use the regression property of the hierarchy: a
system operator applied to every ADO of a stationary hierarchy state is a
valid (generally non-Hermitian) hierarchy vector, and forward propagation
of that vector yields ``S_vu(t) = <Q_v(t) Q_u(0)>`` as the level-0 trace
against ``Q_v``.

Negative times are never propagated; full-line transforms fold the
``t < 0`` half through the stationarity identity
``<Q_v(-t) Q_u(0)> = conj(<Q_u(t) Q_v(0)>)``.

Half-line transforms require the series to have decayed; subtract the
disconnected plateau ``<Q_v><Q_u>`` (see :func:`connected_part`) before
transforming raw correlation data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .heom import HierarchyState, propagate, stable_step

__all__ = [
    "TimeSeries",
    "Spectrum",
    "InsufficientDecayError",
    "correlation_trajectory",
    "correlation_matrix",
    "connected_part",
    "half_fourier",
    "c_spectrum",
    "chi_ss_spectrum",
    "commutator_spectrum",
]

DECAY_TOL = 1e-6


class InsufficientDecayError(RuntimeError):
    """Time series has not decayed by the end of the grid."""


@dataclass
class TimeSeries:
    """Complex samples on a uniform time grid starting at zero.

    ``values`` has shape ``(nt,)`` or ``(nt, m, m)`` for matrix-valued
    series indexed ``[t, v, u]``.
    """

    t: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if self.t.ndim != 1 or self.t.size < 2:
            raise ValueError("time grid must be 1-D with at least two points")
        if self.t[0] != 0.0:
            raise ValueError("time grid must start at 0")
        steps = np.diff(self.t)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise ValueError("time grid must be uniform")
        if self.values.shape[0] != self.t.size:
            raise ValueError("values and time grid lengths differ")

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])


@dataclass
class Spectrum:
    """Complex samples on a strictly increasing frequency grid.

    ``values`` has shape ``(nw,)`` or ``(nw, m, m)`` indexed ``[w, v, u]``.
    """

    w: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if self.w.ndim != 1 or np.any(np.diff(self.w) <= 0):
            raise ValueError("frequency grid must be strictly increasing")
        if self.values.shape[0] != self.w.size:
            raise ValueError("values and frequency grid lengths differ")


def _left_applied(state: HierarchyState, op: np.ndarray) -> np.ndarray:
    return np.einsum("rm,nmc->nrc", op, state.ados)


def _right_applied(state: HierarchyState, op: np.ndarray) -> np.ndarray:
    return np.einsum("nrm,mc->nrc", state.ados, op)


def correlation_matrix(ss: HierarchyState, t_grid, rows=None, columns=None,
                       side: str = "left") -> TimeSeries:
    """Correlations ``S_vu(t) = <Q_v(t) Q_u(0)>`` on ``t_grid``.

    One hierarchy propagation per column ``u`` (rows are read off for
    free).  ``side="right"`` instead applies ``Q_u`` from the right,
    producing ``<Q_u(0) Q_v(t)>`` (the adjoint construction used for
    conjugation checks).

    ``ss`` must be a converged steady state for the result to be a
    stationary correlation function.
    """
    model = ss.model
    Qs = model.system.modes
    rows = list(range(len(Qs))) if rows is None else list(rows)
    columns = list(range(len(Qs))) if columns is None else list(columns)
    t = np.asarray(t_grid, dtype=float)
    if t[0] != 0.0:
        raise ValueError("correlation grids must start at t = 0")
    dt_grid = t[1] - t[0]
    dt = stable_step(model, dt_grid)
    substeps = max(1, int(np.ceil(dt_grid / dt - 1e-12)))
    dt = dt_grid / substeps

    out = np.empty((t.size, len(rows), len(columns)), dtype=complex)
    row_ops = [Qs[v] for v in rows]
    for col, u in enumerate(columns):
        if side == "left":
            b0 = _left_applied(ss, Qs[u])
        elif side == "right":
            b0 = _right_applied(ss, Qs[u])
        else:
            raise ValueError(f"side must be 'left' or 'right', got {side!r}")
        traces = out[:, :, col]
        for row, Q in enumerate(row_ops):
            traces[0, row] = np.trace(Q @ b0[0])

        def record(step, ados, traces=traces):
            idx = step // substeps
            for row, Q in enumerate(row_ops):
                traces[idx, row] = np.trace(Q @ ados[0])

        propagate(model, HierarchyState(model, b0), dt, substeps * (t.size - 1),
                  record=record, record_every=substeps)
    return TimeSeries(t, out)


def correlation_trajectory(ss: HierarchyState, u: int, v: int, t_grid,
                           side: str = "left") -> TimeSeries:
    """Single-pair trajectory ``S_vu(t) = <Q_v(t) Q_u(0)>``."""
    mat = correlation_matrix(ss, t_grid, rows=[v], columns=[u], side=side)
    return TimeSeries(mat.t, mat.values[:, 0, 0])


def connected_part(series: TimeSeries, plateau) -> TimeSeries:
    """Subtract the disconnected long-time plateau ``<Q_v><Q_u>``.

    The subtracted weight reappears in full-line spectra as a delta at
    ``w = 0``; consumers whose kernels vanish there (heat-current
    quadrature) may ignore it.
    """
    plateau = np.asarray(plateau, dtype=complex)
    return TimeSeries(series.t, series.values - plateau)


def half_fourier(series: TimeSeries, w_grid, decay_tol: float = DECAY_TOL
                 ) -> Spectrum:
    """Trapezoidal ``int_0^inf dt e^{i w t} f(t)`` on the series grid.

    Requires the tail to have decayed to ``decay_tol`` of the peak
    magnitude, otherwise the horizon is too short and the transform would
    be polluted by truncation ringing.
    """
    w = np.asarray(w_grid, dtype=float)
    vals = series.values
    flat = vals.reshape(vals.shape[0], -1)
    peak = np.max(np.abs(flat))
    tail = np.max(np.abs(flat[-1]))
    if peak > 0 and tail > decay_tol * peak:
        raise InsufficientDecayError(
            f"series tail {tail:.3e} above {decay_tol:g} of peak {peak:.3e}; "
            f"extend the time horizon")
    dt = series.dt
    weights = np.full(series.t.size, dt)
    weights[0] = weights[-1] = 0.5 * dt
    out = np.empty((w.size,) + flat.shape[1:], dtype=complex)
    chunk = max(1, int(4e6 // series.t.size))
    for i in range(0, w.size, chunk):
        phases = np.exp(1j * np.outer(w[i:i + chunk], series.t)) * weights
        out[i:i + chunk] = phases @ flat
    return Spectrum(w, out.reshape((w.size,) + vals.shape[1:]))


def c_spectrum(series: TimeSeries, w_grid) -> Spectrum:
    """Full-line correlation spectrum
    ``C_vu(w) = (1/2) int dt e^{i w t} <Q_v(t) Q_u(0)>``.

    ``series`` holds the decayed (connected) ``S_vu(t)`` for ``t >= 0``;
    the negative-time half is folded in via the stationarity conjugation
    identity, giving ``C = (S~ + S~^dagger)/2`` per frequency.  The result
    is Hermitian over ``(v, u)`` by construction.
    """
    if series.values.ndim != 3:
        raise ValueError("c_spectrum needs a matrix-valued series")
    F = half_fourier(series, w_grid).values
    C = 0.5 * (F + np.conj(np.swapaxes(F, 1, 2)))
    return Spectrum(np.asarray(w_grid, dtype=float), C)


def chi_ss_spectrum(series: TimeSeries, w_grid) -> Spectrum:
    """Local-system response spectrum, half-line transform of
    ``chi_uv(t) = i <[Q_u(t), Q_v(0)]> = -2 Im <Q_u(t) Q_v(0)>``.

    ``series`` is the raw (or connected; the plateau is real and drops
    out) correlation matrix ``S_vu(t)``.
    """
    if series.values.ndim != 3:
        raise ValueError("chi_ss_spectrum needs a matrix-valued series")
    # chi[t, a, b] = -2 Im S[t, a, b], elementwise in the (a, b) pair
    chi_t = TimeSeries(series.t, -2.0 * series.values.imag)
    return half_fourier(chi_t, w_grid)


def commutator_spectrum(C: Spectrum) -> Spectrum:
    """Full-line commutator transform
    ``X_uv(w) = int dt e^{i w t} <[Q_u(t), Q_v(0)]> = 2 C_uv(w) - 2 C_vu(-w)``.

    Needs a symmetric frequency grid; at equilibrium this equals
    ``2 (1 - e^{-beta w}) C_uv(w)`` (detailed balance).
    """
    w = C.w
    if not np.allclose(w, -w[::-1], rtol=0, atol=1e-12 * max(1.0, w[-1])):
        raise ValueError("commutator_spectrum needs a symmetric frequency grid")
    vals = C.values
    if vals.ndim != 3:
        raise ValueError("commutator_spectrum needs a matrix-valued spectrum")
    mirrored = np.swapaxes(vals[::-1], 1, 2)
    return Spectrum(w, 2.0 * vals - 2.0 * mirrored)
