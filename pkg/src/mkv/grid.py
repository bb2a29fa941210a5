"""Periodic grids, discrete fields and the spectral toolkit shared by all modules.

The whole package discretizes R^d by the torus [-L, L)^d sampled on a uniform
grid of N points per axis.  Fourier transforms follow the continuous
convention ``F f(xi) = int f(x) exp(-i xi.x) dx`` approximated by the trapezoid
rule, so that convolution of two fields is the product of their transforms and
``F f(0)`` is the integral of ``f``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft

MAX_POINTS = 1 << 24


class GridError(ValueError):
    """Grid construction or grid compatibility failure."""


class ResolutionError(ValueError):
    """A field or kernel is not resolved by the grid."""

    def __init__(self, message: str, minimal_n: int | None = None):
        super().__init__(message)
        self.minimal_n = minimal_n


def fft_workers() -> int:
    """Thread cap for transforms, read from ``MKV_THREADS`` (absent means auto)."""
    raw = os.environ.get("MKV_THREADS", "").strip()
    if not raw:
        return -1
    try:
        return max(1, int(raw))
    except ValueError:
        return -1


@dataclass(frozen=True)
class GridSpec:
    d: int
    L: float
    N: int

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise GridError(f"dimension must be 1, 2 or 3, got {self.d}")
        if not self.L > 0:
            raise GridError(f"half width L must be positive, got {self.L}")
        if self.N < 16 or self.N & (self.N - 1):
            raise GridError(f"points per dimension must be a power of two >= 16, got {self.N}")
        if self.N**self.d > MAX_POINTS:
            raise GridError(f"grid of {self.N}^{self.d} points exceeds the memory budget")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @property
    def nyquist(self) -> float:
        return np.pi / self.h

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.N)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.axis] * self.d), indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c**2 for c in self.coords))

    # spectral layout: full axes first, half spectrum on the last axis (rfftn)
    @cached_property
    def spectral_shape(self) -> tuple[int, ...]:
        return (self.N,) * (self.d - 1) + (self.N // 2 + 1,)

    @cached_property
    def freqs(self) -> tuple[np.ndarray, ...]:
        full = 2.0 * np.pi * sfft.fftfreq(self.N, self.h)
        half = 2.0 * np.pi * sfft.rfftfreq(self.N, self.h)
        axes = [full] * (self.d - 1) + [half]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    @cached_property
    def deriv_freqs(self) -> tuple[np.ndarray, ...]:
        # Nyquist mode zeroed so odd multipliers map real fields to real fields
        out = []
        for k in self.freqs:
            k = k.copy()
            k[np.isclose(np.abs(k), self.nyquist)] = 0.0
            out.append(k)
        return tuple(out)

    @cached_property
    def freq_norm(self) -> np.ndarray:
        return np.sqrt(sum(k**2 for k in self.freqs))

    @cached_property
    def _phase(self) -> np.ndarray:
        # grid starts at -L: shifting to the origin multiplies mode k by (-1)^k
        full = (-1.0) ** np.arange(self.N)
        half = (-1.0) ** np.arange(self.N // 2 + 1)
        axes = [full] * (self.d - 1) + [half]
        return np.prod(np.meshgrid(*axes, indexing="ij"), axis=0)

    def fourier(self, values: np.ndarray) -> np.ndarray:
        """Continuous-convention transform of grid samples (last ``d`` axes)."""
        axes = tuple(range(-self.d, 0))
        return sfft.rfftn(values, axes=axes, workers=fft_workers()) * (self._phase * self.cell_volume)

    def inverse(self, spectrum: np.ndarray) -> np.ndarray:
        axes = tuple(range(-self.d, 0))
        return sfft.irfftn(
            spectrum * (self._phase / self.cell_volume), s=self.shape, axes=axes, workers=fft_workers()
        )

    def integrate(self, values: np.ndarray) -> float | np.ndarray:
        axes = tuple(range(-self.d, 0))
        return np.sum(values, axis=axes) * self.cell_volume

    def lp_norm(self, values: np.ndarray, ell: float) -> float:
        """Discrete L^ell norm; ``ell = inf`` is the max norm."""
        if np.isinf(ell):
            return float(np.max(np.abs(values)))
        return float((np.sum(np.abs(values) ** ell) * self.cell_volume) ** (1.0 / ell))

    def check_same(self, other: "GridSpec") -> None:
        if self != other:
            raise GridError(f"grid mismatch: {self} vs {other}")


def _check_values(values: np.ndarray, shape: tuple[int, ...], what: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != shape:
        raise GridError(f"{what} has shape {values.shape}, expected {shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what} contains non-finite values")
    return values


@dataclass
class ScalarField:
    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = _check_values(self.values, self.grid.shape, "scalar field")

    def integral(self) -> float:
        return float(self.grid.integrate(self.values))

    def norm(self, ell: float = 1.0) -> float:
        return self.grid.lp_norm(self.values, ell)

    def __mul__(self, scale: float) -> "ScalarField":
        return ScalarField(self.grid, self.values * scale)

    __rmul__ = __mul__

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        self.grid.check_same(other.grid)
        return ScalarField(self.grid, self.values - other.values)

    def __add__(self, other: "ScalarField") -> "ScalarField":
        self.grid.check_same(other.grid)
        return ScalarField(self.grid, self.values + other.values)


@dataclass
class VectorField:
    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = _check_values(self.values, (self.grid.d,) + self.grid.shape, "vector field")

    def component(self, i: int) -> ScalarField:
        return ScalarField(self.grid, self.values[i])

    def sup_norm(self) -> float:
        return float(np.max(np.sqrt(np.sum(self.values**2, axis=0))))

    def __mul__(self, scale: float) -> "VectorField":
        return VectorField(self.grid, self.values * scale)

    __rmul__ = __mul__

    def __sub__(self, other: "VectorField") -> "VectorField":
        self.grid.check_same(other.grid)
        return VectorField(self.grid, self.values - other.values)


def convolve(a: np.ndarray, b: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Spectral convolution on the torus; leading axes broadcast."""
    return grid.inverse(grid.fourier(a) * grid.fourier(b))


def gradient(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    spec = grid.fourier(values)
    return np.stack([grid.inverse(1j * k * spec) for k in grid.deriv_freqs])


def divergence(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    spec = grid.fourier(values)
    return grid.inverse(sum(1j * k * spec[i] for i, k in enumerate(grid.deriv_freqs)))


def gaussian_multiplier(grid: GridSpec, width: float) -> np.ndarray:
    """Fourier transform of the centred Gaussian with per-axis standard deviation ``width``."""
    return np.exp(-0.5 * width**2 * grid.freq_norm**2)


# --- CSV serialization -------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_field_csv(path: str | Path, fld: ScalarField | VectorField) -> None:
    grid = fld.grid
    coord_cols = [f"x{i + 1}" for i in range(grid.d)]
    if isinstance(fld, VectorField):
        value_cols = [f"v{i + 1}" for i in range(grid.d)]
        data = [v.ravel() for v in fld.values]
    else:
        value_cols = ["value"]
        data = [fld.values.ravel()]
    coords = [c.ravel() for c in grid.coords]
    lines = [",".join(coord_cols + value_cols)]
    for row in zip(*coords, *data):
        lines.append(",".join(_fmt(x) for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_field_csv(path: str | Path) -> ScalarField | VectorField:
    """Read a field CSV written by :func:`write_field_csv` and rebuild its grid."""
    text = Path(path).read_text().splitlines()
    if not text:
        raise GridError(f"{path}: empty field file")
    header = [c.strip() for c in text[0].split(",")]
    d = sum(1 for c in header if c.startswith("x"))
    if d == 0 or header[:d] != [f"x{i + 1}" for i in range(d)]:
        raise GridError(f"{path}: header must start with x1..xd, got {header}")
    data = np.loadtxt(text[1:], delimiter=",", ndmin=2)
    if data.shape[1] != len(header):
        raise GridError(f"{path}: rows have {data.shape[1]} columns, header has {len(header)}")
    n_rows = data.shape[0]
    N = int(round(n_rows ** (1.0 / d)))
    if N**d != n_rows:
        raise GridError(f"{path}: {n_rows} rows is not a full {d}-d grid")
    axis = np.unique(data[:, 0])
    if axis.size != N:
        raise GridError(f"{path}: x1 has {axis.size} distinct values, expected {N}")
    L = -axis[0]
    grid = GridSpec(d, float(L), N)
    if not np.allclose(axis, grid.axis, rtol=0, atol=1e-9 * max(1.0, L)):
        raise GridError(f"{path}: coordinates are not the uniform grid on [-L, L)")
    vals = data[:, d:]
    if header[d:] == ["value"]:
        return ScalarField(grid, vals[:, 0].reshape(grid.shape))
    if header[d:] == [f"v{i + 1}" for i in range(d)]:
        return VectorField(grid, np.stack([vals[:, i].reshape(grid.shape) for i in range(d)]))
    raise GridError(f"{path}: unrecognized value columns {header[d:]}")
