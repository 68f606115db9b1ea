"""Impedance spectra of the Rs + (Rp || Cp) circuit and their fitting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .io import read_csv, write_csv

SPECTRUM_HEADER = ("freq_hz", "z_real_ohm", "z_imag_ohm")


class FitError(RuntimeError):
    """Fitter gave up; carries the best parameters found so far."""

    def __init__(self, message: str, params: CircuitParams | None = None, residual: float = math.nan):
        self.params = params
        self.residual = residual
        super().__init__(message)


class UnidentifiableError(FitError):
    """Spectrum carries no reactive information, Cp cannot be determined."""


@dataclass(frozen=True)
class CircuitParams:
    rs: float  # ohm
    rp: float  # ohm
    cp: float  # F

    def __post_init__(self) -> None:
        if not (self.rs > 0 and self.rp > 0 and self.cp > 0):
            raise ValueError(f"circuit parameters must be positive: {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.rs, self.rp, self.cp])


@dataclass(frozen=True)
class FrequencyGrid:
    frequencies: np.ndarray
    points_per_decade: int

    def __post_init__(self) -> None:
        f = np.asarray(self.frequencies, dtype=float)
        _check_frequencies(f)
        object.__setattr__(self, "frequencies", f)


def log_grid(f_max: float = 1e6, f_min: float = 1.0, points_per_decade: int = 10) -> FrequencyGrid:
    """Descending logarithmic grid, both ends included."""
    if not (f_max > f_min > 0) or points_per_decade < 1:
        raise ValueError("need f_max > f_min > 0 and points_per_decade >= 1")
    n = int(round(math.log10(f_max / f_min) * points_per_decade)) + 1
    return FrequencyGrid(np.logspace(math.log10(f_max), math.log10(f_min), n), points_per_decade)


def _check_frequencies(f: np.ndarray) -> None:
    if f.ndim != 1 or f.size == 0:
        raise ValueError("frequencies must be a non-empty 1-D list")
    if np.any(f <= 0) or not np.all(np.isfinite(f)):
        raise ValueError("frequencies must be positive and finite")
    if f.size > 1:
        d = np.diff(f)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("frequencies must be strictly monotone")


@dataclass(frozen=True)
class ImpedanceSpectrum:
    frequencies: np.ndarray  # Hz
    z: np.ndarray  # complex ohm
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        f = np.asarray(self.frequencies, dtype=float)
        z = np.asarray(self.z, dtype=complex)
        _check_frequencies(f)
        if z.shape != f.shape:
            raise ValueError("impedance and frequency arrays differ in length")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "z", z)

    def __len__(self) -> int:
        return self.frequencies.size

    def scaled(self, k: float) -> ImpedanceSpectrum:
        return ImpedanceSpectrum(self.frequencies, self.z * k, dict(self.metadata))


def impedance(params: CircuitParams, frequencies) -> np.ndarray:
    w = 2 * np.pi * np.asarray(frequencies, dtype=float)
    return params.rs + params.rp / (1 + 1j * w * params.rp * params.cp)


def simulate_spectrum(params: CircuitParams, grid: FrequencyGrid, metadata: dict | None = None) -> ImpedanceSpectrum:
    return ImpedanceSpectrum(grid.frequencies, impedance(params, grid.frequencies), dict(metadata or {}))


def add_noise(spectrum: ImpedanceSpectrum, rel_sigma: float, rng: np.random.Generator) -> ImpedanceSpectrum:
    """Independent multiplicative Gaussian noise on the real and imaginary parts."""
    n = len(spectrum)
    re = spectrum.z.real * (1 + rel_sigma * rng.standard_normal(n))
    im = spectrum.z.imag * (1 + rel_sigma * rng.standard_normal(n))
    return ImpedanceSpectrum(spectrum.frequencies, re + 1j * im, dict(spectrum.metadata))


def bode(spectrum: ImpedanceSpectrum) -> tuple[np.ndarray, np.ndarray]:
    """Modulus (ohm) and phase (degrees) at each grid frequency."""
    return np.abs(spectrum.z), np.degrees(np.arctan2(spectrum.z.imag, spectrum.z.real))


def nyquist(spectrum: ImpedanceSpectrum) -> tuple[np.ndarray, np.ndarray]:
    return spectrum.z.real.copy(), -spectrum.z.imag


def slope_in_band(spectrum: ImpedanceSpectrum, f_lo: float, f_hi: float) -> float:
    """Least-squares slope of log10|Z| against log10 f over ``[f_lo, f_hi]``."""
    f = spectrum.frequencies
    mask = (f >= f_lo) & (f <= f_hi)
    if mask.sum() < 3:
        raise ValueError(f"band [{f_lo}, {f_hi}] Hz holds {int(mask.sum())} points, need >= 3")
    x = np.log10(f[mask])
    y = np.log10(np.abs(spectrum.z[mask]))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


@dataclass
class FitResult:
    params: CircuitParams
    residual: float  # rms relative misfit
    iterations: int
    history: list[float]  # objective at each accepted iterate, starting point first


def initial_guess(spectrum: ImpedanceSpectrum) -> CircuitParams:
    f = spectrum.frequencies
    mod = np.abs(spectrum.z)
    rs = float(mod[np.argmax(f)])
    total = float(mod[np.argmin(f)])
    rp = total - rs
    if rp <= 0:
        rp = rs
    f_apex = float(f[np.argmin(spectrum.z.imag)])
    cp = 1.0 / (2 * np.pi * f_apex * rp)
    return CircuitParams(rs, rp, cp)


def _residuals(logp: np.ndarray, w: np.ndarray, zd: np.ndarray, weight: np.ndarray):
    rs, rp, cp = np.exp(logp)
    denom = 1 + 1j * w * rp * cp
    zm = rs + rp / denom
    diff = (zm - zd) * weight
    r = np.concatenate([diff.real, diff.imag])
    # derivatives with respect to log-parameters
    d_rs = np.full_like(zd, rs)
    d_rp = rp / denom**2
    d_cp = -1j * w * rp**2 * cp / denom**2
    cols = [d * weight for d in (d_rs, d_rp, d_cp)]
    jac = np.column_stack([np.concatenate([c.real, c.imag]) for c in cols])
    return r, jac


def fit_circuit(
    spectrum: ImpedanceSpectrum,
    guess: CircuitParams | None = None,
    max_iter: int = 200,
    xtol: float = 1e-9,
) -> FitResult:
    """Relative-weighted complex least squares for (Rs, Rp, Cp).

    Levenberg-Marquardt on log-parameters. Converges when the largest
    log-parameter step (i.e. relative change) drops below ``xtol``.
    """
    f = spectrum.frequencies
    if len(spectrum) < 6 or math.log10(f.max() / f.min()) < 2 - 1e-12:
        raise ValueError("fit needs >= 6 points spanning >= 2 decades")
    zd = spectrum.z
    mod = np.abs(zd)
    if np.any(mod == 0):
        raise ValueError("spectrum contains zero impedance")
    if np.max(np.abs(zd.imag) / mod) < 1e-12:
        raise UnidentifiableError("spectrum is purely real; Cp is unidentifiable")
    if guess is None:
        guess = initial_guess(spectrum)

    w = 2 * np.pi * f
    weight = 1.0 / mod
    x = np.log(guess.as_array())
    r, jac = _residuals(x, w, zd, weight)
    cost = float(r @ r)
    history = [cost]
    lam = 1e-3
    n = len(spectrum)

    for it in range(1, max_iter + 1):
        jtj = jac.T @ jac
        g = jac.T @ r
        a = jtj + lam * np.diag(np.diag(jtj))
        try:
            step = np.linalg.solve(a, -g)
        except np.linalg.LinAlgError:
            lam *= 10
            continue
        small = float(np.max(np.abs(step))) < xtol
        with np.errstate(over="ignore", invalid="ignore"):
            r_new, jac_new = _residuals(x + step, w, zd, weight)
            cost_new = float(r_new @ r_new)
        # non-finite trial costs are rejected like any uphill step
        if cost_new < cost:
            x, r, jac, cost = x + step, r_new, jac_new, cost_new
            history.append(cost)
            lam = max(lam / 10, 1e-15)
        else:
            lam *= 10
        if small or cost == 0.0 or lam > 1e16:
            p = np.exp(x)
            return FitResult(CircuitParams(*p), math.sqrt(cost / n), it, history)

    p = np.exp(x)
    raise FitError(
        f"no convergence within {max_iter} iterations",
        CircuitParams(*p),
        math.sqrt(cost / n),
    )


def write_spectrum(path: Path, spectrum: ImpedanceSpectrum) -> Path:
    rows = zip(spectrum.frequencies, spectrum.z.real, spectrum.z.imag)
    return write_csv(Path(path), SPECTRUM_HEADER, rows, spectrum.metadata)


def read_spectrum(path: Path) -> ImpedanceSpectrum:
    metadata, rows = read_csv(Path(path), SPECTRUM_HEADER)
    data = np.array(rows, dtype=float)
    return ImpedanceSpectrum(data[:, 0], data[:, 1] + 1j * data[:, 2], metadata)
