"""Heat kernel construction by frozen-coefficient correction series.

The kernel is built as p = q + q (x) Phi with Phi = sum_n F^(x)n, where q
is the frozen-coefficient density, F the correction driver and (x) the
space-time convolution

    (phi1 (x) phi2)(t,x,y) = int_0^t int phi1(t-s,x,z) phi2(s,z,y) dz ds.

Discretization notes.  Fields live on a coarse periodic z-lattice (a
power-of-two sublattice of the fine density lattice); the passive output
index y runs over a sublattice of the coarse lattice (y_slice), which the
series recursion F^(x)(n+1) = F (x) F^(x)n preserves.  Transition-type
factors concentrate on the moving diagonal at scale s^{1/alpha}, which
drops below the coarse spacing for small times, so the z-contraction is
hybrid: a coarse trapezoid away from the diagonal plus a fine-lattice
window around it.  Window values of analytic factors come from a frozen-
coefficient expansion of the symbol (exact at the anchor, second order in
the kernel variation); stored series terms carry a near-diagonal mass
channel with fitted power-law extrapolation below their resolution floor.
The time integral uses geometric panels anchored on a shared node family
(so symbol work is cached across output times), graded into both
endpoints; times below the FFT alias floor go through a fitted singular
model ("sliver") or the identity limit for q-like factors.  Floors,
sliver shares and convergence data land in the run logs; the
refinement-stability criteria are the guard.
"""

from __future__ import annotations

import math
import os
import time as _time
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError, ConvergenceFailure
from .model import ModelSpec, RhoWeight, eval_rho
from .quadrature import gauss_rule
from .report import BoundReport
from .symbol import symbol_matrix, _part_symbol_1d, _detect_part_kind

_WORKERS = min(8, os.cpu_count() or 1)

__all__ = [
    "ParametrixRun",
    "Workspace",
    "MeshField",
    "AnalyticFactor",
    "CompositeFactor",
    "ConvControls",
    "build_q",
    "build_phi",
    "build_p",
    "build_gradp",
    "space_time_convolve",
    "chapman_kolmogorov_residual",
    "check_heat_kernel_bounds",
    "near_diagonal_lower_bound",
    "rho_factor",
]


class Workspace:
    """Fine/coarse lattices, symbol tables and field builders (d=1).

    sigma_res is the alias floor of the fine FFT; sigma_mid = (2.5 dz)^alpha
    is the spike floor below which the coarse lattice cannot resolve the
    moving diagonal.
    """

    def __init__(self, spec: ModelSpec, extent: float = 40.0, n_x: int | None = None,
                 n_z: int | None = None, y_stride: int = 4, window_cells: int = 4):
        if spec.dim != 1:
            raise ConfigurationError("the correction-series pipeline is 1-d")
        if spec.separable is None:
            raise ConfigurationError("the series pipeline needs separable kernel parts")
        self.spec = spec
        a = spec.alpha
        self.n_x = n_x if n_x is not None else (8192 if a <= 1.25 else 4096)
        self.n_z = n_z if n_z is not None else 512
        if self.n_x % self.n_z:
            raise ConfigurationError("coarse lattice must divide the fine lattice")
        if self.n_z % y_stride:
            raise ConfigurationError("y_stride must divide the coarse lattice")
        self.extent = float(extent)
        self.stride = self.n_x // self.n_z
        self.y_stride = y_stride
        self.dx = self.extent / self.n_x
        self.dz = self.extent / self.n_z
        self.xf = -self.extent / 2 + self.dx * np.arange(self.n_x)
        self.xc = self.xf[:: self.stride]
        self.y_idx = np.arange(0, self.n_z, y_stride)
        self.n_y = self.y_idx.size
        self.yc = self.xc[self.y_idx]
        self.u = 2 * np.pi * np.fft.fftfreq(self.n_x, d=self.dx)

        self.PSI = symbol_matrix(spec, self.xc, self.u)
        self.parts = []
        for part in spec.separable:
            _detect_part_kind(part)
            if part.g_is_constant:
                continue
            psi_p = _part_symbol_1d(part, self.u, a)
            if psi_p is None:
                raise ConfigurationError("series pipeline needs closed-form component symbols")
            self.parts.append({
                "psi": psi_p,
                "psi_neg": _part_symbol_1d(part, -self.u, a),
                "g": np.array([part.g(x) for x in self.xc]),
                "g_fine": np.array([part.g(x) for x in self.xf]),
            })

        rep = float(np.min(self.PSI.real[:, self.n_x // 2]))
        self.sigma_res = 20.7 / max(rep, 1e-300)
        self.sigma_mid = (2.5 * self.dz) ** a
        self.window_cells = window_cells
        wf = window_cells * self.stride + self.stride // 2
        self._w_off = np.arange(-wf, wf + 1)
        self._w = self.dx * self._w_off
        self._w_wts = np.full(self._w.size, self.dx)
        self._w_wts[0] *= 0.5
        self._w_wts[-1] *= 0.5
        i = np.arange(self.n_z)
        self.IDX = ((i[None, :] - i[:, None]) * self.stride + self.n_x // 2) % self.n_x
        d = np.abs(self.xc[None, :] - self.xc[:, None])
        d = np.minimum(d, self.extent - d)
        self.offdiag = d > (window_cells + 0.4) * self.dz
        self._rows_all = np.arange(self.n_z)[:, None]
        self._w_idx = (self._w_off[None, :] + self.n_x // 2) % self.n_x
        self._w_idx_neg = (-self._w_off[None, :] + self.n_x // 2) % self.n_x
        self._cache: dict = {}
        self._fhat_cache: dict = {}
        self._matrix_cache: dict = {}

    # -- caching helpers ----------------------------------------------------

    def _cached(self, store: dict, key, builder, budget_entries: int):
        if key not in store:
            if len(store) >= budget_entries:
                store.clear()
            store[key] = builder()
        return store[key]

    def synth(self, rows: np.ndarray) -> np.ndarray:
        """Rows of lattice values from rows of characteristic spectra."""
        out = sfft.fft(rows, axis=-1, workers=_WORKERS).real
        return np.roll(out, self.n_x // 2, axis=-1) / self.extent

    def fhat(self, sigma: float, rows=None) -> np.ndarray:
        """exp(-sigma psi^z) on the live spectral band; rows=None -> all z."""
        key = ("fhat", sigma)

        def build():
            live = sigma * np.min(self.PSI.real, axis=0) < 46.0
            out = np.zeros_like(self.PSI)
            out[:, live] = np.exp(-sigma * self.PSI[:, live])
            return out

        cap = max(3, int(5e8 / (self.n_z * self.n_x * 16)))
        full = self._cached(self._fhat_cache, key, build, cap)
        return full if rows is None else full[rows]

    def interior_mask(self, cols=None) -> np.ndarray:
        """Pairs with torus separation and positions inside the safe band."""
        xc2 = self.xc if cols is None else self.xc[cols]
        d = np.abs(xc2[None, :] - self.xc[:, None])
        d = np.minimum(d, self.extent - d)
        pos = (np.abs(self.xc) <= 0.42 * self.extent)[:, None] & (np.abs(xc2) <= 0.42 * self.extent)[None, :]
        return (d <= 0.375 * self.extent) & pos

    def torus_diff(self, cols=None) -> np.ndarray:
        xc2 = self.xc if cols is None else self.xc[cols]
        d = xc2[None, :] - self.xc[:, None]
        return (d + self.extent / 2) % self.extent - self.extent / 2

    # -- coarse field matrices -----------------------------------------------

    def q_matrix(self, sigma: float, cols=None) -> np.ndarray:
        """Q[i,j] = q(sigma, x_i, z_j) = f^{z_j}(z_j - x_i)."""
        def build():
            sel = cols if cols is not None else slice(None)
            rows = self.synth(self.fhat(sigma, rows=None if cols is None else cols))
            idx = self.IDX[:, sel] if cols is not None else self.IDX
            return np.take_along_axis(rows, idx.T, axis=1).T

        return self._cached(self._matrix_cache, ("q", sigma, _ck(cols)), build, self._mat_budget())

    def gradq_matrix(self, sigma: float, cols=None) -> np.ndarray:
        """d/dx q(sigma, x, z) = -(f^z)'(z - x)."""
        def build():
            sel = cols if cols is not None else slice(None)
            fh = self.fhat(sigma, rows=None if cols is None else cols)
            rows = self.synth(fh * (-1j * self.u)[None, :])
            idx = self.IDX[:, sel] if cols is not None else self.IDX
            return -np.take_along_axis(rows, idx.T, axis=1).T

        return self._cached(self._matrix_cache, ("gq", sigma, _ck(cols)), build, self._mat_budget())

    def F_matrix(self, sigma: float, cols=None) -> np.ndarray:
        """F[i,j] = (A - A^{z_j}) q(sigma,.,z_j)(x_i) with exact per-z symbols."""
        def build():
            sel = cols if cols is not None else slice(None)
            n_c = self.n_z if cols is None else len(cols)
            out = np.zeros((self.n_z, n_c))
            fh = self.fhat(sigma, rows=None if cols is None else cols)
            idx = self.IDX[:, sel] if cols is not None else self.IDX
            for part in self.parts:
                rows = self.synth(fh * (-part["psi_neg"])[None, :])
                B = np.take_along_axis(rows, idx.T, axis=1).T
                out += (part["g"][:, None] - part["g"][sel][None, :]) * B
            return out

        return self._cached(self._matrix_cache, ("F", sigma, _ck(cols)), build, self._mat_budget())

    def gradF_matrix(self, sigma: float, cols=None) -> np.ndarray:
        """d/dx F(sigma, x, z) by the product rule on the separable form."""
        def build():
            sel = cols if cols is not None else slice(None)
            n_c = self.n_z if cols is None else len(cols)
            out = np.zeros((self.n_z, n_c))
            fh = self.fhat(sigma, rows=None if cols is None else cols)
            idx = self.IDX[:, sel] if cols is not None else self.IDX
            for part in self.parts:
                rows = self.synth(fh * (-part["psi_neg"])[None, :])
                B = np.take_along_axis(rows, idx.T, axis=1).T
                rowsd = self.synth(fh * (part["psi_neg"] * 1j * self.u)[None, :])
                Bd = -np.take_along_axis(rowsd, idx.T, axis=1).T
                gp = np.gradient(part["g"], self.dz)
                out += gp[:, None] * B + (part["g"][:, None] - part["g"][sel][None, :]) * Bd
            return out

        return self._cached(self._matrix_cache, ("gF", sigma, _ck(cols)), build, self._mat_budget())

    def _mat_budget(self) -> int:
        return max(8, int(4e8 / (self.n_z * self.n_y * 8)))

    # -- fine-window cores ------------------------------------------------------

    def _delta_g(self, anchors) -> list[np.ndarray]:
        key = ("dg", _ck(anchors))

        def build():
            sel = anchors if anchors is not None else np.arange(self.n_z)
            out = []
            for part in self.parts:
                idx = (sel[:, None] * self.stride + self._w_off[None, :]) % self.n_x
                out.append(part["g_fine"][idx] - part["g"][sel][:, None])
            return out

        return self._cached(self._cache, key, build, 600)

    def _expansion(self, sigma: float, mult, anchors) -> np.ndarray:
        """Frozen-coefficient expansion of synth[mult e^{-s psi^{x_a+w}}](w)."""
        sel = anchors if anchors is not None else np.arange(self.n_z)
        fh = self.fhat(sigma, rows=sel)
        base = fh if mult is None else fh * mult[None, :]
        dg = self._delta_g(anchors)
        rows_idx = np.arange(len(sel))[:, None]
        order2 = sigma > 0.1 * self.sigma_mid
        out = self.synth(base)[rows_idx, self._w_idx]
        for pi, part in enumerate(self.parts):
            a1 = self.synth(base * (sigma * part["psi"])[None, :])[rows_idx, self._w_idx]
            out = out - dg[pi] * a1
        if order2:
            for pi, pa in enumerate(self.parts):
                for qi, pb in enumerate(self.parts):
                    m2 = 0.5 * sigma * sigma * pa["psi"] * pb["psi"]
                    a2 = self.synth(base * m2[None, :])[rows_idx, self._w_idx]
                    out = out + dg[pi] * dg[qi] * a2
        return out

    def window_first(self, sigma: float, kind: str) -> np.ndarray:
        """field(sigma, x_a, x_a + w) on the fine window, all coarse anchors."""
        def build():
            anchors = None
            dg = self._delta_g(anchors)
            if kind == "q":
                return self._expansion(sigma, None, anchors)
            if kind == "gq":
                return -self._expansion(sigma, -1j * self.u, anchors)
            if kind == "F":
                vals = np.zeros((self.n_z, self._w.size))
                for pi, part in enumerate(self.parts):
                    vals += (-dg[pi]) * self._expansion(sigma, -part["psi_neg"], anchors)
                return vals
            if kind == "gF":
                vals = np.zeros((self.n_z, self._w.size))
                for pi, part in enumerate(self.parts):
                    b0 = self._expansion(sigma, -part["psi_neg"], anchors)
                    b0d = -self._expansion(sigma, part["psi_neg"] * 1j * self.u, anchors)
                    gp = np.gradient(part["g_fine"], self.dx)[::self.stride][:, None]
                    vals += gp * b0 + (-dg[pi]) * b0d
                return vals
            raise ConfigurationError(f"unknown window kind {kind}")

        return self._cached(self._cache, ("w1", kind, sigma), build, 600)

    def window_second(self, s: float, kind: str, cols=None) -> np.ndarray:
        """field(s, y_a + v, y_a) on the fine window (exact at the anchors)."""
        def build():
            sel = cols if cols is not None else np.arange(self.n_z)
            rows_idx = np.arange(len(sel))[:, None]
            fh = self.fhat(s, rows=sel)
            if kind == "q":
                return self.synth(fh)[rows_idx, self._w_idx_neg]
            if kind == "gq":
                rows = self.synth(fh * (-1j * self.u)[None, :])
                return -rows[rows_idx, self._w_idx_neg]
            if kind == "F":
                dg = self._delta_g(sel)
                vals = np.zeros((len(sel), self._w.size))
                for pi, part in enumerate(self.parts):
                    rows = self.synth(fh * (-part["psi_neg"])[None, :])
                    vals += dg[pi] * rows[rows_idx, self._w_idx_neg]
                return vals
            raise ConfigurationError(f"no second-slot window for kind {kind}")

        return self._cached(self._cache, ("w2", kind, s, _ck(cols)), build, 600)


def _ck(cols) -> str:
    if cols is None:
        return "all"
    return f"sub{len(cols)}"


def _roll_weights(ws: Workspace, core: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Regroup fine-window quadrature onto coarse cells (linear interp)."""
    s = ws.stride
    m = ws._w_off
    k_lo = np.floor_divide(m, s)
    frac = (m - k_lo * s) / s
    kmin, kmax = int(k_lo.min()), int(k_lo.max()) + 1
    ks = np.arange(kmin, kmax + 1)
    G = np.zeros((core.shape[0], ks.size))
    base = core * ws._w_wts[None, :]
    for mi in range(m.size):
        G[:, k_lo[mi] - kmin] += base[:, mi] * (1.0 - frac[mi])
        G[:, k_lo[mi] - kmin + 1] += base[:, mi] * frac[mi]
    return ks, G


# ---------------------------------------------------------------------------
# factors


class AnalyticFactor:
    """Convolution factor evaluable at any positive time from the workspace.

    exponent p declares the time singularity sup_z |phi(s)| ~ s^{p-1};
    delta_like factors tend to the identity as s -> 0 (q-like).  b_fine /
    b_coarse multiply the factor by a drift weight in its first argument.
    """

    def __init__(self, ws: Workspace, kind: str, exponent: float, delta_like: bool = False,
                 b_coarse: np.ndarray | None = None, b_fine: np.ndarray | None = None):
        self.ws = ws
        self.kind = kind
        self.exponent = exponent
        self.delta_like = delta_like
        self.b_coarse = b_coarse
        self.b_fine = b_fine

    def coarse(self, s: float, cols=None) -> np.ndarray:
        ws = self.ws
        M = {"q": ws.q_matrix, "gq": ws.gradq_matrix, "F": ws.F_matrix,
             "gF": ws.gradF_matrix}[self.kind](s, cols)
        if self.b_coarse is not None:
            M = self.b_coarse[:, None] * M
        return M

    def window(self, s: float, slot: int, cols=None) -> np.ndarray:
        ws = self.ws
        vals = ws.window_first(s, self.kind) if slot == 1 else ws.window_second(s, self.kind, cols)
        if self.b_fine is not None:
            sel = np.arange(ws.n_z) if slot == 1 else (cols if cols is not None else np.arange(ws.n_z))
            idx = (sel[:, None] * ws.stride + ws._w_off[None, :]) % ws.n_x
            vals = vals * self.b_fine[idx]
        return vals

    def floor(self) -> float:
        return self.ws.sigma_res

    def spiky_below(self) -> float:
        return self.ws.sigma_mid


class MeshField:
    """Field on a graded time mesh of coarse matrices (n_z rows x cols).

    cols is either the y_slice (series terms) or the full lattice (the
    correction part of p used by the drift stage).  Interpolation factors
    out the declared singular power; below the mesh the regular part
    follows the envelope power s^p and the near-diagonal window is carried
    by a fitted mass channel.
    """

    def __init__(self, ws: Workspace, times: np.ndarray, values: np.ndarray, exponent: float,
                 full: bool = False, mass_exponent: float | None = None):
        self.ws = ws
        self.times = np.asarray(times, dtype=float)
        self.values = values
        self.exponent = exponent
        self.full = full
        self.mass_exponent = exponent if mass_exponent is None else mass_exponent
        self.delta_like = False
        self._col_of_row = None
        if not full:
            # row index of each column's diagonal position
            self._diag_rows = ws.y_idx
        else:
            self._diag_rows = np.arange(ws.n_z)
        self._fit_mass()

    def _window_mass(self, V: np.ndarray, axis_rows: bool) -> np.ndarray:
        """Near-diagonal window mass per column (axis_rows=False) or per row."""
        ws = self.ws
        if not axis_rows:
            cols = np.arange(V.shape[1])
            rows = self._diag_rows
            out = np.zeros(V.shape[1])
            for off in range(-ws.window_cells, ws.window_cells + 1):
                cell = ws.dz if abs(off) < ws.window_cells else 0.75 * ws.dz
                out += V[(rows + off) % ws.n_z, cols] * cell
        else:
            if not self.full:
                raise ConfigurationError("row mass needs a full-column field")
            rows = np.arange(V.shape[0])
            out = np.zeros(V.shape[0])
            for off in range(-ws.window_cells, ws.window_cells + 1):
                cell = ws.dz if abs(off) < ws.window_cells else 0.75 * ws.dz
                out += V[rows, (rows + off) % V.shape[1]] * cell
        return out

    def _fit_mass(self):
        ws = self.ws
        ok = self.times >= ws.sigma_mid
        if ok.sum() < 2:
            ok = np.zeros_like(ok)
            ok[-min(3, len(self.times)):] = True
        idx = np.flatnonzero(ok)
        self._anchor_t = self.times[idx]
        self._anchor_mu = np.stack([self._window_mass(self.values[k], False) for k in idx])
        tpow = self._anchor_t[:, None] ** self.mass_exponent
        self._mu_coef = np.mean(self._anchor_mu / tpow, axis=0)

    def mu(self, s: float) -> np.ndarray:
        ti = self._anchor_t
        if s >= ti[0]:
            k = min(max(int(np.searchsorted(ti, s)), 1), len(ti) - 1)
            w = (s - ti[k - 1]) / (ti[k] - ti[k - 1])
            return (1 - w) * self._anchor_mu[k - 1] + w * self._anchor_mu[k]
        return self._mu_coef * s ** self.mass_exponent

    def eval(self, s: float) -> np.ndarray:
        t, p = self.times, self.exponent
        if s <= t[0]:
            return self.values[0] * (s / t[0]) ** p
        if s >= t[-1]:
            return self.values[-1] * (s / t[-1]) ** (p - 1.0)
        k = int(np.searchsorted(t, s))
        h0 = self.values[k - 1] * t[k - 1] ** (1 - p)
        h1 = self.values[k] * t[k] ** (1 - p)
        w = (s - t[k - 1]) / (t[k] - t[k - 1])
        return ((1 - w) * h0 + w * h1) * s ** (p - 1.0)

    def offdiag_mask(self) -> np.ndarray:
        ws = self.ws
        cols = None if self.full else ws.y_idx
        d = np.abs((ws.xc if cols is None else ws.xc[cols])[None, :] - ws.xc[:, None])
        d = np.minimum(d, ws.extent - d)
        return d > (ws.window_cells + 0.4) * ws.dz

    def floor(self) -> float:
        return 0.0

    def spiky_below(self) -> float:
        return self.ws.sigma_mid


class CompositeFactor:
    """Sum of convolution factors."""

    def __init__(self, parts: list):
        self.parts = parts
        self.exponent = min(p.exponent for p in parts)
        self.delta_like = any(getattr(p, "delta_like", False) for p in parts)


# ---------------------------------------------------------------------------
# contraction engine


def _contract(ws: Workspace, phi1, s1: float, phi2, s2: float, cols) -> np.ndarray:
    """int phi1(s1, x, z) phi2(s2, z, y) dz for y over `cols` (None = full)."""
    if isinstance(phi1, CompositeFactor):
        return sum(_contract(ws, p, s1, phi2, s2, cols) for p in phi1.parts)
    if isinstance(phi2, CompositeFactor):
        return sum(_contract(ws, phi1, s1, p, s2, cols) for p in phi2.parts)

    spiky1 = s1 < phi1.spiky_below()
    spiky2 = s2 < phi2.spiky_below()
    M1 = phi1.eval(s1) if isinstance(phi1, MeshField) else phi1.coarse(s1)
    M2 = _slot2_matrix(ws, phi2, s2, cols)
    if not spiky1 and not spiky2:
        return (M1 @ M2) * ws.dz

    A1 = M1 * ws.offdiag if spiky1 else M1
    if spiky2:
        mask2 = phi2.offdiag_mask() if isinstance(phi2, MeshField) else ws.interior_spike_mask(cols)
        A2 = M2 * mask2
    else:
        A2 = M2
    out = (A1 @ A2) * ws.dz
    if spiky1:
        out += _window_term_1(ws, phi1, s1, M2)
    if spiky2:
        out += _window_term_2(ws, phi2, s2, M1, cols)
    return out


def _spike_mask(ws: Workspace, cols) -> np.ndarray:
    xc2 = ws.xc if cols is None else ws.xc[cols]
    d = np.abs(xc2[None, :] - ws.xc[:, None])
    d = np.minimum(d, ws.extent - d)
    return d > (ws.window_cells + 0.4) * ws.dz


Workspace.interior_spike_mask = lambda self, cols=None: _spike_mask(self, cols)


def _slot2_matrix(ws: Workspace, phi2, s: float, cols) -> np.ndarray:
    if isinstance(phi2, MeshField):
        V = phi2.eval(s)
        if cols is None and not phi2.full:
            raise ConfigurationError("sliced mesh field cannot serve a full-column contraction")
        if cols is not None and phi2.full:
            return V[:, cols]
        return V
    return phi2.coarse(s, cols)


def _window_term_1(ws: Workspace, phi1, s1: float, M2: np.ndarray) -> np.ndarray:
    """Fine-window part around z ~ x (first slot spike)."""
    if isinstance(phi1, MeshField):
        if not phi1.full:
            raise ConfigurationError("sliced mesh field cannot take the first slot")
        mu_row = phi1._window_mass(phi1.eval(s1), axis_rows=True)
        return mu_row[:, None] * M2
    core = phi1.window(s1, slot=1)
    ks, G = _roll_weights(ws, core)
    out = np.zeros((ws.n_z, M2.shape[1]))
    for ki, k in enumerate(ks):
        out += G[:, ki][:, None] * np.roll(M2, -int(k), axis=0)
    return out


def _window_term_2(ws: Workspace, phi2, s2: float, M1: np.ndarray, cols) -> np.ndarray:
    """Fine-window part around z ~ y (second slot spike)."""
    if isinstance(phi2, MeshField):
        mu = phi2.mu(s2)
        if phi2.full:
            if cols is not None:
                return M1[:, cols] * mu[cols][None, :]
            return M1 * mu[None, :]
        return M1[:, ws.y_idx] * mu[None, :]
    core = phi2.window(s2, slot=2, cols=cols)
    cols_eff = cols if cols is not None else np.arange(ws.n_z)
    ks, G = _roll_weights(ws, core)
    out = np.zeros((ws.n_z, len(cols_eff)))
    for ki, k in enumerate(ks):
        out += M1[:, (cols_eff + int(k)) % ws.n_z] * G[:, ki][None, :]
    return out


# ---------------------------------------------------------------------------
# time quadrature


@dataclass
class ConvControls:
    panel_ratio: float = 4.0
    gauss: int = 4
    fit_nodes: tuple[float, ...] = (1.0, 2.0, 4.0)
    sliver_nu: float | None = None


def _floor_of(phi) -> float:
    if isinstance(phi, CompositeFactor):
        return max(_floor_of(p) for p in phi.parts)
    return phi.floor()


def _is_delta(phi) -> bool:
    return getattr(phi, "delta_like", False)


def _coarse_any(ws, phi, s: float, cols) -> np.ndarray:
    if isinstance(phi, CompositeFactor):
        return sum(_coarse_any(ws, p, s, cols) for p in phi.parts)
    return _slot2_matrix(ws, phi, s, cols)


def _lead_eval_any(ws, phi, s: float) -> np.ndarray:
    if isinstance(phi, CompositeFactor):
        return sum(_lead_eval_any(ws, p, s) for p in phi.parts)
    return phi.eval(s) if isinstance(phi, MeshField) else phi.coarse(s)


def _integrand(ws: Workspace, phi1, phi2, t: float, xi: float, first_side: bool, cols) -> np.ndarray:
    sigma, s = (xi, t - xi) if first_side else (t - xi, xi)
    if _is_delta(phi1) and sigma < _floor_of(phi1):
        return _coarse_any(ws, phi2, s, cols)
    if _is_delta(phi2) and s < _floor_of(phi2):
        M1 = _lead_eval_any(ws, phi1, sigma)
        return M1[:, cols] if cols is not None else M1
    return _contract(ws, phi1, sigma, phi2, s, cols)


def _half_side(ws: Workspace, phi1, phi2, t: float, first_side: bool, ctl: ConvControls,
               cols, log: dict | None) -> np.ndarray:
    half = t / 2.0
    lead = phi1 if first_side else phi2
    p = lead.exponent
    delta_like = _is_delta(lead)
    is_mesh = isinstance(lead, MeshField) or (
        isinstance(lead, CompositeFactor) and all(isinstance(q, MeshField) for q in lead.parts))
    floor = _floor_of(lead)
    wants_sliver = floor > 0 and not delta_like and not is_mesh
    if wants_sliver or delta_like:
        lo = min(floor, 0.5 * half)
    else:
        # mesh lead: the sub-mesh model is integrated with a one-node rule
        lo = min(ws.sigma_res, 0.5 * half)
    needs_sliver = wants_sliver and lo >= floor * 0.999

    x_g, w_g = gauss_rule(ctl.gauss)
    anchor = floor if floor > 0 else max(ws.sigma_res, 1e-8)
    k_lo = math.floor(math.log(max(lo / anchor, 1e-300)) / math.log(ctl.panel_ratio) + 1e-12)
    fam = anchor * ctl.panel_ratio ** np.arange(k_lo, 64)
    fam = fam[(fam > lo * (1 + 1e-12)) & (fam < half * (1 - 1e-12))]
    edges = np.concatenate([[lo], fam, [half]])

    n_c = ws.n_z if cols is None else len(cols)
    out = np.zeros((ws.n_z, n_c))
    for a, b in zip(edges[:-1], edges[1:]):
        mid, rad = 0.5 * (a + b), 0.5 * (b - a)
        for xg, wg in zip(x_g, w_g):
            out += (rad * wg) * _integrand(ws, phi1, phi2, t, mid + rad * xg, first_side, cols)

    if delta_like:
        out += lo * _integrand(ws, phi1, phi2, t, 0.5 * lo, first_side, cols)
    elif is_mesh:
        # generalized one-node rule exact for s^{p-1} x smooth
        node = lo * p / (p + 1.0)
        weight = (lo ** p / p) / max(node ** (p - 1.0), 1e-300)
        out += weight * _integrand(ws, phi1, phi2, t, node, first_side, cols)
    elif needs_sliver:
        nodes = np.array(ctl.fit_nodes) * lo
        nodes = nodes[nodes <= half]
        vals = [_integrand(ws, phi1, phi2, t, xi, first_side, cols) for xi in nodes]
        nu = ctl.sliver_nu if ctl.sliver_nu is not None else max(p, 0.25)
        H = np.stack([v * xi ** (1.0 - p) for v, xi in zip(vals, nodes)])
        if len(nodes) >= 2:
            A = np.stack([np.ones(len(nodes)), nodes ** nu], axis=1)
            coef = np.linalg.solve(A.T @ A, np.tensordot(A, H, axes=(0, 0)).reshape(2, -1))
            coef = coef.reshape(2, ws.n_z, n_c)
            sliver = coef[0] * lo ** p / p + coef[1] * lo ** (p + nu) / (p + nu)
        else:
            sliver = H[0] * lo ** p / p
        out += sliver
        if log is not None:
            share = float(np.max(np.abs(sliver))) / max(float(np.max(np.abs(out))), 1e-300)
            log.setdefault("sliver_share", []).append(share)
    return out


def _convolve_at(ws: Workspace, phi1, phi2, t: float, ctl: ConvControls,
                 cols, log: dict | None = None) -> np.ndarray:
    return (_half_side(ws, phi1, phi2, t, True, ctl, cols, log)
            + _half_side(ws, phi1, phi2, t, False, ctl, cols, log))


def space_time_convolve(ws: Workspace, phi1, phi2, t: float,
                        controls: ConvControls | None = None,
                        cols: np.ndarray | None = None,
                        log: dict | None = None) -> np.ndarray:
    """(phi1 (x) phi2)(t) on the coarse lattice (public engine wrapper)."""
    return _convolve_at(ws, phi1, phi2, t, controls or ConvControls(), cols, log)


def rho_factor(ws: Workspace, gamma: float, beta: float):
    """Envelope weight rho(s, x-z) as a convolution factor (closed form)."""

    class _Rho:
        exponent = (gamma + beta) / ws.spec.alpha
        delta_like = False
        b_fine = None
        b_coarse = None

        def coarse(self, s: float, cols=None) -> np.ndarray:
            return eval_rho(RhoWeight(gamma, beta), s, ws.torus_diff(cols), ws.spec)

        def eval(self, s: float) -> np.ndarray:
            return self.coarse(s)

        def window(self, s: float, slot: int) -> np.ndarray:
            arg = ws._w if slot == 1 else -ws._w
            row = eval_rho(RhoWeight(gamma, beta), s, arg, ws.spec)
            n_anchor = ws.n_z if slot == 1 else ws.n_y
            return np.broadcast_to(row, (n_anchor, row.size)).copy()

        def floor(self) -> float:
            return 0.0

        def spiky_below(self) -> float:
            return ws.sigma_mid

    return _Rho()


# ---------------------------------------------------------------------------
# run container and public operations


@dataclass
class ParametrixRun:
    """Configuration plus intermediate series state for one kernel build.

    The default extent is a multiple of 2 pi so the shipped trigonometric
    kernel coefficients are exactly periodic on the torus (no seam jump).
    """

    spec: ModelSpec
    extent: float = 14.0 * math.pi
    n_x: int | None = None
    n_z: int | None = None
    y_stride: int = 4
    n_max: int = 8
    tail_tol: float = 5e-3
    mesh_count: int = 12
    output_times: tuple[float, ...] = (0.25, 0.5, 1.0)
    controls: ConvControls = field(default_factory=ConvControls)
    ws: Workspace | None = None
    terms: list = field(default_factory=list)
    phi_tail: MeshField | None = None
    p_matrices: dict = field(default_factory=dict)
    gradp_matrices: dict = field(default_factory=dict)
    convergence_log: list = field(default_factory=list)
    engine_log: dict = field(default_factory=dict)

    def workspace(self) -> Workspace:
        if self.ws is None:
            self.ws = Workspace(self.spec, self.extent, self.n_x, self.n_z, self.y_stride)
        return self.ws

    def mesh_times(self) -> np.ndarray:
        ws = self.workspace()
        T = max(self.output_times)
        g = max(2.0, self.spec.alpha / self.spec.theta_hat)
        t_lo = max(4 * ws.sigma_res, ws.sigma_mid / 8.0)
        j = np.arange(1, self.mesh_count + 1, dtype=float)
        mesh = t_lo + (T - t_lo) * (j / self.mesh_count) ** g
        return np.unique(np.concatenate([[t_lo], mesh, np.asarray(self.output_times)]))


def build_q(run: ParametrixRun) -> dict[float, np.ndarray]:
    """q(t,x,y) = f^y(y-x) on (coarse x, y_slice) at the output times."""
    ws = run.workspace()
    return {t: ws.q_matrix(t, ws.y_idx) for t in run.output_times}


def build_phi(run: ParametrixRun):
    """Correction series Phi = sum_n F^(x)n with geometric tail control.

    F^(x)(n+1) = F (x) F^(x)n keeps the analytic driver in the slot whose
    small-time spike must be exact; stops when the geometric tail estimate
    drops below tail_tol relative to the first term's norm.
    """
    ws = run.workspace()
    spec = run.spec
    if not ws.parts or spec.kappa2 == 0:
        run.convergence_log = [{"n": 1, "sup_norm": 0.0, "ratio": 0.0, "tail_estimate": 0.0}]
        run.phi_tail = None
        return AnalyticFactor(ws, "F", exponent=1.0), run.convergence_log

    th = spec.theta_hat
    F = AnalyticFactor(ws, "F", exponent=th / spec.alpha)
    mesh = run.mesh_times()
    T = max(run.output_times)
    i_T = int(np.argmin(np.abs(mesh - T)))
    norm_mask = ws.interior_mask(ws.y_idx)
    f_norm = float(np.max(np.abs(ws.F_matrix(T, ws.y_idx))[norm_mask]))

    run.terms = []
    run.convergence_log = [{"n": 1, "sup_norm": f_norm, "ratio": float("nan"), "tail_estimate": float("inf")}]
    prev: object = F
    prev_norm = f_norm
    phi_sum = None
    converged = False
    for n in range(2, run.n_max + 2):
        t_term = _time.time()
        vals = np.stack([
            _convolve_at(ws, F, prev, t, run.controls, ws.y_idx, run.engine_log) for t in mesh
        ])
        fld = MeshField(ws, mesh, vals, exponent=(n * th) / spec.alpha)
        run.terms.append(fld)
        nrm = float(np.max(np.abs(vals[i_T])[norm_mask]))
        ratio = nrm / prev_norm
        tail = nrm * ratio / max(1.0 - ratio, 1e-9) if ratio < 1 else float("inf")
        run.convergence_log.append({"n": n, "sup_norm": nrm, "ratio": ratio, "tail_estimate": tail,
                                    "seconds": round(_time.time() - t_term, 2)})
        phi_sum = fld if phi_sum is None else MeshField(
            ws, mesh, phi_sum.values + fld.values, exponent=(2 * th) / spec.alpha)
        prev, prev_norm = fld, nrm
        if tail <= run.tail_tol * f_norm:
            converged = True
            break
    if not converged:
        raise ConvergenceFailure(
            f"correction series not contracting by n_max={run.n_max}: {run.convergence_log}")
    run.phi_tail = phi_sum
    return CompositeFactor([F, phi_sum]), run.convergence_log


def _phi_factor(run: ParametrixRun):
    ws = run.workspace()
    F = AnalyticFactor(ws, "F", exponent=run.spec.theta_hat / run.spec.alpha)
    if run.phi_tail is None:
        return [F]
    return [F, run.phi_tail]


def build_p(run: ParametrixRun, times=None, cols="y") -> dict[float, np.ndarray]:
    """p = q + q (x) Phi at the output times; matrices (coarse x, y_slice)."""
    ws = run.workspace()
    spec = run.spec
    need_series = bool(ws.parts) and spec.kappa2 > 0
    if need_series and not run.convergence_log:
        build_phi(run)
    q_like = AnalyticFactor(ws, "q", exponent=1.0, delta_like=True)
    col_idx = ws.y_idx if cols == "y" else None
    out = {}
    for t in (times if times is not None else run.output_times):
        P = ws.q_matrix(t, col_idx).copy()
        if need_series:
            for phi_part in _phi_factor(run):
                P += _convolve_at(ws, q_like, phi_part, t, run.controls, col_idx, run.engine_log)
        out[t] = P
    if times is None and cols == "y":
        run.p_matrices = out
    return out


def build_gradp(run: ParametrixRun, times=None, cols="y") -> dict[float, np.ndarray]:
    """d/dx p(t,x,y): gradient of the frozen part plus gradient convolutions."""
    ws = run.workspace()
    spec = run.spec
    need_series = bool(ws.parts) and spec.kappa2 > 0
    if need_series and not run.convergence_log:
        build_phi(run)
    gq = AnalyticFactor(ws, "gq", exponent=1.0 - 1.0 / spec.alpha)
    col_idx = ws.y_idx if cols == "y" else None
    out = {}
    for t in (times if times is not None else run.output_times):
        G = ws.gradq_matrix(t, col_idx).copy()
        if need_series:
            for phi_part in _phi_factor(run):
                G += _convolve_at(ws, gq, phi_part, t, run.controls, col_idx, run.engine_log)
        out[t] = G
    if times is None and cols == "y":
        run.gradp_matrices = out
    return out


# ---------------------------------------------------------------------------
# validation operations


def chapman_kolmogorov_residual(run: ParametrixRun, s: float, t: float) -> float:
    """sup interior |int p(s,x,z) p(t,z,y) dz - p(s+t,x,y)| * (s+t)^{d/alpha}.

    The z-integral runs over the y_slice lattice; its spacing keeps the
    spectral aliasing of the product far below the residual tolerance for
    the shipped grids.
    """
    P = run.p_matrices
    for node in (s, t, s + t):
        if node not in P:
            raise ConfigurationError(f"p not built at time {node}")
    ws = run.workspace()
    dz_y = ws.dz * ws.y_stride
    conv = (P[s] @ P[t][ws.y_idx, :]) * dz_y
    resid = np.abs(conv - P[s + t])
    mask = ws.interior_mask(ws.y_idx)
    return float(np.max(resid[mask])) * (s + t) ** (run.spec.dim / run.spec.alpha)


def check_heat_kernel_bounds(run: ParametrixRun, gradient: bool = True) -> list[BoundReport]:
    """Two-sided envelope ratios for p, and for its gradient when alpha > 1."""
    ws = run.workspace()
    spec = run.spec
    mask = ws.interior_mask(ws.y_idx)
    d = ws.torus_diff(ws.y_idx)
    dm = np.maximum(np.abs(d), 0.25 * ws.dz)
    sup_r, inf_r = -np.inf, np.inf
    for t, P in run.p_matrices.items():
        env = np.minimum(t * dm ** (-1.0 - spec.alpha), t ** (-1.0 / spec.alpha))
        r = P[mask] / env[mask]
        sup_r = max(sup_r, float(np.max(r)))
        inf_r = min(inf_r, float(np.min(r)))
    reports = [BoundReport(
        inequality="Theorem 1",
        constants={"sup_ratio": sup_r, "inf_ratio": inf_r},
        status="pass" if np.isfinite(sup_r) and inf_r > 0 else "fail",
        notes="two-sided envelope ratios of the drift-free kernel",
    )]
    if gradient and spec.alpha > 1 and run.gradp_matrices:
        best = 0.0
        for t, G in run.gradp_matrices.items():
            env = t ** (-1.0 / spec.alpha) * eval_rho(RhoWeight(spec.alpha, 0.0), t, d, spec)
            best = max(best, float(np.max(np.abs(G)[mask] / env[mask])))
        reports.append(BoundReport(
            inequality="grad on p",
            constants={"sup_ratio": best},
            status="pass" if np.isfinite(best) else "fail",
        ))
    return reports


def near_diagonal_lower_bound(run: ParametrixRun) -> BoundReport:
    """inf of p * t^{d/alpha} over |x-y| <= t^{1/alpha}."""
    ws = run.workspace()
    d = np.abs(ws.torus_diff(ws.y_idx))
    worst = np.inf
    for t, P in run.p_matrices.items():
        sel = d <= t ** (1.0 / run.spec.alpha)
        worst = min(worst, float(np.min(P[sel])) * t ** (run.spec.dim / run.spec.alpha))
    return BoundReport(
        inequality="esti: lower bound p(t,x,y)",
        constants={"C34": worst},
        status="pass" if worst > 0 else "fail",
    )
