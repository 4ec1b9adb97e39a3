"""Frozen-coefficient densities by Fourier inversion on a periodic lattice.

f_t(x) = (2 pi)^{-d} int e^{-i u.x} e^{-t psi(u)} du is synthesized by FFT
from the frozen symbol; gradients are spectral.  The lattice computes the
periodized density, so the heavy power tail wraps: the wrap mass is
estimated from the measured boundary amplitude and recorded, and every
bound report excludes an outer band of width L/8.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError
from .model import ModelSpec, RhoWeight, eval_rho
from .report import BoundReport, emit_csv
from .symbol import eval_symbol, symbol_table

__all__ = [
    "SpaceTimeGrid",
    "DensityField",
    "invert_density",
    "unwrap_density",
    "lattice_convolve",
    "spectral_gradient",
    "density_gradient",
    "check_density_bounds",
    "check_holder_in_y",
    "check_time_scaling",
    "check_semigroup",
    "check_continuity_bound",
    "tail_amplitudes",
    "read_binary_field",
]

RINGING_TOL = 1e-8
MASS_TOL = 1e-6


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Periodic spatial lattice paired with positive time nodes.

    The lattice covers [-L/2, L/2) with n_x points per axis (power of two);
    the frequency lattice is its FFT dual.  `grading` is the exponent used
    when the grid spawns graded time meshes downstream.
    """

    dim: int
    extent: float
    n_x: int
    time_nodes: tuple[float, ...]
    grading: float = 2.0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigurationError("grid dim must be 1 or 2")
        if self.n_x < 4 or (self.n_x & (self.n_x - 1)) != 0:
            raise ConfigurationError("n_x must be a power of two >= 4")
        t = np.asarray(self.time_nodes, dtype=float)
        if t.size == 0 or np.any(t <= 0) or np.any(np.diff(t) <= 0):
            raise ConfigurationError("time_nodes must be strictly increasing and positive")
        object.__setattr__(self, "time_nodes", tuple(float(v) for v in t))

    @property
    def dx(self) -> float:
        return self.extent / self.n_x

    @property
    def t_min(self) -> float:
        return self.time_nodes[0]

    @property
    def t_max(self) -> float:
        return self.time_nodes[-1]

    def x_lattice(self) -> np.ndarray:
        return -self.extent / 2 + self.dx * np.arange(self.n_x)

    def u_lattice(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.n_x, d=self.dx)

    def resolves(self, spec: ModelSpec) -> tuple[bool, str]:
        need_dx = self.t_min ** (1.0 / spec.alpha) / 8.0
        need_l = 40.0 * self.t_max ** (1.0 / spec.alpha)
        if self.dx > need_dx:
            return False, f"dx={self.dx:.4g} exceeds t_min^(1/alpha)/8={need_dx:.4g}"
        if self.extent < need_l:
            return False, f"extent={self.extent:.4g} below 40*T^(1/alpha)={need_l:.4g}"
        return True, ""

    def interior_mask(self) -> np.ndarray:
        x = self.x_lattice()
        if self.dim == 1:
            return np.abs(x) <= 0.375 * self.extent
        xx, yy = np.meshgrid(x, x, indexing="ij")
        return np.maximum(np.abs(xx), np.abs(yy)) <= 0.375 * self.extent


@dataclass
class DensityField:
    """Gridded space-time values of one of the pipeline's functions."""

    grid: SpaceTimeGrid
    base_point: object
    values: np.ndarray
    kind: str
    mass_deficit: np.ndarray = field(default_factory=lambda: np.zeros(0))
    wrap_mass: np.ndarray = field(default_factory=lambda: np.zeros(0))
    min_value: float = 0.0
    spectra: np.ndarray | None = None

    def slice_at(self, t: float) -> np.ndarray:
        nodes = np.asarray(self.grid.time_nodes)
        i = int(np.argmin(np.abs(nodes - t)))
        if abs(nodes[i] - t) > 1e-12 * max(1.0, t):
            raise ConfigurationError(f"time {t} is not a grid node")
        return self.values[i]

    def to_csv(self, path) -> None:
        x = self.grid.x_lattice()
        if self.grid.dim == 1:
            rows = (
                (t, float(x[j]), float(self.values[i, j]))
                for i, t in enumerate(self.grid.time_nodes)
                for j in range(self.grid.n_x)
            )
            emit_csv(rows, header=("t", "x", "value"), path=path)
        else:
            rows = (
                (t, float(x[j]), float(x[k]), float(self.values[i, j, k]))
                for i, t in enumerate(self.grid.time_nodes)
                for j in range(self.grid.n_x)
                for k in range(self.grid.n_x)
            )
            emit_csv(rows, header=("t", "x1", "x2", "value"), path=path)

    def to_binary(self, path) -> None:
        """Compact table: magic 'STKD', version, dim, n_x, L, n_t, times, row-major float64."""
        with open(path, "wb") as fh:
            fh.write(b"STKD")
            fh.write(struct.pack("<III", 1, self.grid.dim, self.grid.n_x))
            fh.write(struct.pack("<d", self.grid.extent))
            fh.write(struct.pack("<I", len(self.grid.time_nodes)))
            np.asarray(self.grid.time_nodes, dtype="<f8").tofile(fh)
            np.ascontiguousarray(self.values, dtype="<f8").tofile(fh)


def read_binary_field(path) -> tuple[SpaceTimeGrid, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(4) != b"STKD":
            raise ConfigurationError("bad magic in binary field file")
        version, dim, n_x = struct.unpack("<III", fh.read(12))
        if version != 1:
            raise ConfigurationError(f"unsupported binary field version {version}")
        (extent,) = struct.unpack("<d", fh.read(8))
        (n_t,) = struct.unpack("<I", fh.read(4))
        times = np.fromfile(fh, dtype="<f8", count=n_t)
        values = np.fromfile(fh, dtype="<f8")
    grid = SpaceTimeGrid(dim=dim, extent=extent, n_x=n_x, time_nodes=tuple(times))
    shape = (n_t, n_x) if dim == 1 else (n_t, n_x, n_x)
    return grid, values.reshape(shape)


# ---------------------------------------------------------------------------
# synthesis


def _synthesize_1d(phi: np.ndarray, grid: SpaceTimeGrid) -> np.ndarray:
    """Lattice values of (2 pi)^{-1} int e^{-iux} phi(u) du from FFT-ordered phi."""
    k = np.rint(np.fft.fftfreq(grid.n_x) * grid.n_x).astype(int)
    sign = np.where(k % 2 == 0, 1.0, -1.0)
    return np.fft.fft(phi * sign).real / grid.extent


def _synthesize_2d(phi: np.ndarray, grid: SpaceTimeGrid) -> np.ndarray:
    k = np.rint(np.fft.fftfreq(grid.n_x) * grid.n_x).astype(int)
    sign = np.where(k % 2 == 0, 1.0, -1.0)
    ph = phi * sign[:, None] * sign[None, :]
    return np.fft.fft2(ph).real / grid.extent ** 2


def _isotropic_symbol_constant(spec: ModelSpec) -> float:
    """A with psi(u) = c(y) A |u|^alpha for h-independent kernels in d=2."""
    from .model import make_preset_spec
    from .symbol import _quadrature_symbol

    ref = make_preset_spec("constant", alpha=spec.alpha, dim=2)
    return float(_quadrature_symbol(ref, np.zeros(2), np.array([1.0, 0.0]), 1e-5).real)


def frozen_symbol_lattice(spec: ModelSpec, y, grid: SpaceTimeGrid) -> np.ndarray:
    """psi_y on the FFT-dual lattice (1-d array for d=1, 2-d for d=2)."""
    if spec.dim == 1:
        return symbol_table(spec, y, grid.u_lattice())
    if spec.separable is not None and all(p.w_is_constant for p in spec.separable):
        amp = sum(p.g(y) for p in spec.separable)
        a2 = _isotropic_symbol_constant(spec)
        u = grid.u_lattice()
        mag = np.sqrt(u[:, None] ** 2 + u[None, :] ** 2)
        return amp * a2 * mag ** spec.alpha + 0j
    raise ConfigurationError(
        "d=2 density inversion needs an h-independent kernel preset; "
        "evaluate the symbol pointwise for general 2-d kernels"
    )


def invert_density(spec: ModelSpec, y, grid: SpaceTimeGrid, check_grid: bool = True) -> DensityField:
    """Density of the frozen-coefficient process at each time node.

    Preconditions: validated spec; the grid resolves the smallest time and
    holds the largest (dx <= t_min^{1/alpha}/8, L >= 40 T^{1/alpha}).
    Mass deficits and wrap-around estimates are recorded per node.
    """
    if check_grid:
        ok, why = grid.resolves(spec)
        if not ok:
            raise ConfigurationError(f"unresolved grid: {why}")
    psi = frozen_symbol_lattice(spec, y, grid)
    n_t = len(grid.time_nodes)
    shape = (n_t, grid.n_x) if spec.dim == 1 else (n_t, grid.n_x, grid.n_x)
    values = np.empty(shape)
    mass = np.empty(n_t)
    wrap = np.empty(n_t)
    for i, t in enumerate(grid.time_nodes):
        phi = np.exp(-t * psi)
        f = _synthesize_1d(phi, grid) if spec.dim == 1 else _synthesize_2d(phi, grid)
        values[i] = f
        cell = grid.dx ** spec.dim
        mass[i] = 1.0 - float(np.sum(f) * cell)
        wrap[i] = _wrap_mass_estimate(f, grid, spec, t)
    mn = float(values.min())
    if mn < -RINGING_TOL:
        raise ConfigurationError(f"density ringing below tolerance: min={mn:.3e}")
    return DensityField(
        grid=grid, base_point=y, values=values, kind="frozen_density",
        mass_deficit=mass, wrap_mass=wrap, min_value=mn,
    )


def _wrap_mass_estimate(f: np.ndarray, grid: SpaceTimeGrid, spec: ModelSpec, t: float) -> float:
    """Tail mass beyond L/2 inferred by matching a power tail at 3L/8."""
    x_b = 0.375 * grid.extent
    if spec.dim == 1:
        x = grid.x_lattice()
        j = int(np.argmin(np.abs(x - x_b)))
        amp = 0.5 * (f[j] + f[grid.n_x - 1 - j]) * x_b ** (1 + spec.alpha)
        return float(2 * amp * (grid.extent / 2) ** (-spec.alpha) / spec.alpha)
    x = grid.x_lattice()
    j = int(np.argmin(np.abs(x - x_b)))
    mid = grid.n_x // 2
    amp = f[j, mid] * x_b ** (2 + spec.alpha)
    return float(2 * np.pi * amp * (grid.extent / 2) ** (-spec.alpha) / spec.alpha)


def tail_amplitudes(values: np.ndarray, grid: SpaceTimeGrid, spec: ModelSpec, t: float,
                    at: float = 0.5) -> tuple[float, float]:
    """(amp+, amp-) with f(x) ~ t * amp / |x|^{1+alpha} fitted at |x| = at*L/2."""
    x = grid.x_lattice()
    xb = at * grid.extent / 2
    jp = int(np.argmin(np.abs(x - xb)))
    jm = int(np.argmin(np.abs(x + xb)))
    scale = xb ** (1 + spec.alpha) / t
    return float(values[jp] * scale), float(values[jm] * scale)


def _image_model(x: np.ndarray, L: float, t: float, alpha: float, amp_p: float, amp_m: float,
                 m_max: int = 32) -> np.ndarray:
    out = np.zeros_like(x)
    for m in range(1, m_max + 1):
        out += t * amp_m / np.abs(x - m * L) ** (1 + alpha)   # image of the left tail
        out += t * amp_p / np.abs(x + m * L) ** (1 + alpha)   # image of the right tail
    return out


def unwrap_density(spec: ModelSpec, y, grid: SpaceTimeGrid) -> DensityField:
    """Density with periodization images subtracted (d=1).

    A companion inversion at doubled extent supplies tail amplitudes fitted
    where its own wrap is weak; the power-tail images of the original
    lattice are then removed analytically.  Two fit iterations make the
    amplitude self-consistent.
    """
    if grid.dim != 1:
        raise ConfigurationError("unwrap_density is 1-d")
    fld = invert_density(spec, y, grid, check_grid=False)
    big = SpaceTimeGrid(1, 2 * grid.extent, 2 * grid.n_x, grid.time_nodes, grid.grading)
    companion = invert_density(spec, y, big, check_grid=False)
    xb = big.x_lattice()
    x = grid.x_lattice()
    out = np.empty_like(fld.values)
    for i, t in enumerate(grid.time_nodes):
        comp = companion.values[i].copy()
        amp_p = amp_m = 0.0
        for _ in range(4):
            corr = comp - _image_model(xb, big.extent, t, spec.alpha, amp_p, amp_m)
            amp_p, amp_m = tail_amplitudes(corr, big, spec, t)
        out[i] = fld.values[i] - _image_model(x, grid.extent, t, spec.alpha, amp_p, amp_m)
    return DensityField(
        grid=grid, base_point=y, values=out, kind="frozen_density",
        mass_deficit=fld.mass_deficit, wrap_mass=fld.wrap_mass, min_value=float(out.min()),
    )


def spectral_gradient(values: np.ndarray, grid: SpaceTimeGrid, axis: int = 0) -> np.ndarray:
    """Spectral x-derivative of lattice values (any real lattice function)."""
    u = 2 * np.pi * np.fft.fftfreq(grid.n_x, d=grid.dx)
    if values.ndim == 1:
        return np.fft.ifft(np.fft.fft(values) * (1j * u)).real
    if grid.dim == 1:
        return np.fft.ifft(np.fft.fft(values, axis=-1) * (1j * u), axis=-1).real
    fa = np.fft.fft(values, axis=axis - 2 if values.ndim > 2 else axis)
    shape = [1] * values.ndim
    shape[axis - 2 if values.ndim > 2 else axis] = grid.n_x
    return np.fft.ifft(fa * (1j * u).reshape(shape), axis=axis - 2 if values.ndim > 2 else axis).real


def density_gradient(fld: DensityField) -> DensityField:
    """Spectral spatial gradient of a frozen density (one field per axis in d=1)."""
    if fld.kind not in ("frozen_density", "q", "p", "l"):
        raise ConfigurationError("gradient expects a density-like field")
    grad = np.stack([spectral_gradient(fld.values[i], fld.grid) for i in range(len(fld.grid.time_nodes))])
    return DensityField(
        grid=fld.grid, base_point=fld.base_point, values=grad,
        kind="gradient", mass_deficit=np.zeros(len(fld.grid.time_nodes)),
    )


# ---------------------------------------------------------------------------
# checks


def check_density_bounds(fld: DensityField, spec: ModelSpec, refine: bool = True) -> BoundReport:
    """Two-sided envelope ratios sup/inf of f / [t (t^{1/alpha}+|x|)^{-d-alpha}].

    Measured over the interior lattice (outer band of width L/8 excluded);
    pass requires positive finite ratios, stable under doubling n_x.
    """
    if fld.kind != "frozen_density":
        raise ConfigurationError("bounds check expects a frozen density field")
    if fld.min_value < -RINGING_TOL:
        raise ConfigurationError("negative density beyond ringing tolerance")

    def ratios(grid: SpaceTimeGrid) -> tuple[float, float, dict]:
        if grid.dim == 1:
            field = unwrap_density(spec, fld.base_point, grid)
        else:
            field = invert_density(spec, fld.base_point, grid, check_grid=False)
        mask = grid.interior_mask()
        x = grid.x_lattice()
        sup_r, inf_r, wit = -np.inf, np.inf, {}
        for i, t in enumerate(grid.time_nodes):
            env = eval_rho(RhoWeight(spec.alpha, 0.0), t, x if grid.dim == 1 else _mesh(x), spec)
            r = field.values[i][mask] / env[mask]
            if r.max() > sup_r:
                sup_r = float(r.max())
            if r.min() < inf_r:
                inf_r = float(r.min())
                wit = {"t": t}
        return sup_r, inf_r, wit

    sup_r, inf_r, wit = ratios(fld.grid)
    delta = None
    if refine:
        g = fld.grid
        fine = SpaceTimeGrid(g.dim, g.extent, g.n_x * 2, g.time_nodes, g.grading)
        sup2, inf2, _ = ratios(fine)
        delta = max(abs(sup2 - sup_r) / abs(sup_r), abs(inf2 - inf_r) / max(abs(inf_r), 1e-300))
        sup_r, inf_r = sup2, inf2
    ok = np.isfinite(sup_r) and inf_r > 0 and (delta is None or delta <= 0.05)
    return BoundReport(
        inequality="upperbound:f_t",
        constants={"sup_ratio": sup_r, "inf_ratio": inf_r},
        stability_delta=delta,
        status="pass" if ok else "fail",
        witness=wit,
        notes="lower clause: lower esti for f_t; wrap images subtracted",
    )


def _mesh(x):
    xx, yy = np.meshgrid(x, x, indexing="ij")
    return np.stack([xx, yy], axis=-1)


def check_holder_in_y(
    spec: ModelSpec, y, y2, grid: SpaceTimeGrid, gamma: float | None = None, refine: bool = True
) -> BoundReport:
    """Empirical constant of the frozen-point continuity bound.

    sup over interior lattice and time nodes of
    |f^y - f^y2| / ((|y-y2|^theta ^ 1)(rho_alpha^0 + rho_{alpha-gamma}^gamma)).
    gamma defaults to theta_hat/2 and must lie in (0, alpha/4).
    """
    if np.all(np.asarray(y) == np.asarray(y2)):
        raise DomainError("base points must differ")
    if gamma is None:
        gamma = spec.theta_hat / 2.0
    if not 0 < gamma < spec.alpha / 4:
        raise DomainError("gamma must lie in (0, alpha/4)")

    def constant(g: SpaceTimeGrid) -> float:
        f1 = invert_density(spec, y, g)
        f2 = invert_density(spec, y2, g)
        mask = g.interior_mask()
        x = g.x_lattice() if g.dim == 1 else _mesh(g.x_lattice())
        dy = float(np.linalg.norm(np.atleast_1d(np.asarray(y, dtype=float) - np.asarray(y2, dtype=float))))
        best = 0.0
        for i, t in enumerate(g.time_nodes):
            env = eval_rho(RhoWeight(spec.alpha, 0.0), t, x, spec) + eval_rho(
                RhoWeight(spec.alpha - gamma, gamma), t, x, spec
            )
            num = np.abs(f1.values[i] - f2.values[i])[mask]
            best = max(best, float(np.max(num / (min(dy ** spec.theta, 1.0) * env[mask]))))
        return best

    c = constant(grid)
    delta = None
    if refine:
        fine = SpaceTimeGrid(grid.dim, grid.extent, 2 * grid.n_x, grid.time_nodes, grid.grading)
        c2 = constant(fine)
        delta = abs(c2 - c) / max(c, 1e-300)
        c = c2
    ok = np.isfinite(c) and (delta is None or delta <= 0.05)
    return BoundReport(
        inequality="esti:f_t_differof_y_y'",
        constants={"C24": c},
        stability_delta=delta,
        status="pass" if ok else "fail",
        witness={"gamma": gamma},
    )


def check_time_scaling(spec: ModelSpec, grid: SpaceTimeGrid, y=0.0, t_fracs=(0.25, 0.5)) -> BoundReport:
    """Self-similarity residual f_t(x) vs t^{-d/alpha} f_1(t^{-1/alpha} x).

    Exact for kernels constant in h; measured as a relative sup over the
    interior by building f_1 on the dilated lattice so points match exactly.
    """
    a, d = spec.alpha, spec.dim
    T = grid.t_max
    worst = 0.0
    for frac in t_fracs:
        t = frac * T
        g_t = SpaceTimeGrid(d, grid.extent, grid.n_x, (t,), grid.grading)
        f_t = invert_density(spec, y, g_t, check_grid=False)
        lam = t ** (-1.0 / a)
        g_1 = SpaceTimeGrid(d, grid.extent * lam, grid.n_x, (1.0,), grid.grading)
        f_1 = invert_density(spec, y, g_1, check_grid=False)
        mask = g_t.interior_mask()
        lhs = f_t.values[0][mask]
        rhs = (lam ** d) * f_1.values[0][mask]
        worst = max(worst, float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(lhs))))
    return BoundReport(
        inequality="Rescaling",
        constants={"sup_rel_residual": worst},
        status="pass" if worst <= 1e-6 else "fail",
        witness={"t_fracs": list(t_fracs)},
        notes="frozen-density self-similarity",
    )


def lattice_convolve(a: np.ndarray, b: np.ndarray, grid: SpaceTimeGrid) -> np.ndarray:
    """Circular convolution sum_j a(x_j) b(x_k - x_j) dx on the offset lattice.

    The lattice origin sits at index n/2, so the plain FFT convolution
    picks up an alternating phase.
    """
    k = np.rint(np.fft.fftfreq(grid.n_x) * grid.n_x).astype(int)
    sign = np.where(k % 2 == 0, 1.0, -1.0)
    return np.fft.ifft(np.fft.fft(a) * np.fft.fft(b) * sign).real * grid.dx


def check_semigroup(fld: DensityField, s_idx: int, t_idx: int, sum_idx: int) -> float:
    """Sup-norm interior residual of f_s * f_t = f_{s+t} (discrete convolution)."""
    g = fld.grid
    if g.dim != 1:
        raise ConfigurationError("semigroup check is 1-d")
    conv = lattice_convolve(fld.values[s_idx], fld.values[t_idx], g)
    mask = g.interior_mask()
    return float(np.max(np.abs(conv - fld.values[sum_idx])[mask]))


def check_continuity_bound(fld: DensityField, spec: ModelSpec, shifts=(1, 3, 17, 64)) -> BoundReport:
    """Empirical constant of |f_t(x)-f_t(x')| <= C ((t^{-1/a}|x-x'|)^1)(rho+rho')."""
    g = fld.grid
    x = g.x_lattice()
    mask = g.interior_mask()
    best = 0.0
    for i, t in enumerate(g.time_nodes):
        f = fld.values[i]
        env0 = eval_rho(RhoWeight(spec.alpha, 0.0), t, x, spec)
        for k in shifts:
            df = np.abs(f - np.roll(f, -k))
            envs = env0 + np.roll(env0, -k)
            fac = min(t ** (-1 / spec.alpha) * k * g.dx, 1.0)
            inner = mask & np.roll(mask, -k)
            best = max(best, float(np.max(df[inner] / (fac * envs[inner]))))
    return BoundReport(
        inequality="Coro 1, eq",
        constants={"C17": best},
        status="pass" if np.isfinite(best) else "fail",
        witness={"shifts": list(shifts)},
    )
