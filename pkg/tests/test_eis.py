import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oectsim.eis import (
    CircuitParams,
    FitError,
    ImpedanceSpectrum,
    UnidentifiableError,
    add_noise,
    bode,
    fit_circuit,
    impedance,
    initial_guess,
    log_grid,
    nyquist,
    read_spectrum,
    simulate_spectrum,
    slope_in_band,
    write_spectrum,
)
from oectsim.growth import EpCondition, apply_ep_step
from oectsim.io import DataFormatError

GRID = log_grid()
TRUE = CircuitParams(500.0, 1e7, 10e-9)


def rel_err(fit: CircuitParams, true: CircuitParams) -> float:
    return float(np.max(np.abs(fit.as_array() / true.as_array() - 1)))


def test_default_grid():
    f = GRID.frequencies
    assert len(f) == 61
    assert f[0] == pytest.approx(1e6) and f[-1] == pytest.approx(1.0)
    assert np.allclose(np.diff(np.log10(f)), -0.1)


def test_impedance_limits():
    # Rs + Rp at DC, Rs at infinite frequency
    assert impedance(TRUE, 1e-12) == pytest.approx(TRUE.rs + TRUE.rp, rel=1e-12)
    assert impedance(TRUE, 1e15).real == pytest.approx(TRUE.rs, rel=1e-6)


def test_apex_at_corner_frequency():
    fc = 1 / (2 * math.pi * TRUE.rp * TRUE.cp)
    z = impedance(TRUE, fc)
    # -Im(Z) peaks at Rp/2 on the semicircle
    assert -z.imag == pytest.approx(TRUE.rp / 2, rel=1e-12)
    assert z.real == pytest.approx(TRUE.rs + TRUE.rp / 2, rel=1e-12)


def test_bode_and_nyquist():
    s = simulate_spectrum(TRUE, GRID)
    mod, phase = bode(s)
    re, mim = nyquist(s)
    assert np.allclose(mod, np.hypot(re, mim))
    assert np.all(phase <= 0) and np.all(phase > -90)
    assert np.all(mim >= 0)


def test_slope_regions():
    s = simulate_spectrum(TRUE, GRID)
    assert -1.0 <= slope_in_band(s, 10, 1e3) <= -0.8
    assert abs(slope_in_band(s, 3e5, 1e6)) < 0.05  # Rs plateau


def test_slope_needs_points():
    with pytest.raises(ValueError):
        slope_in_band(simulate_spectrum(TRUE, GRID), 10, 12)


@settings(max_examples=60, deadline=None)
@given(
    rs=st.floats(10, 1e4),
    rp=st.floats(1e4, 1e9),
    cp=st.floats(1e-10, 1e-6),
)
def test_kramers_kronig_lite(rs, rp, cp):
    s = simulate_spectrum(CircuitParams(rs, rp, cp), GRID)
    assert np.all(s.z.imag <= 0)
    mod = np.abs(s.z)  # grid descends in f, so |Z| must not decrease along it
    assert np.all(np.diff(mod) >= -1e-12 * mod[:-1])


def test_initial_guess_is_close():
    g = initial_guess(simulate_spectrum(TRUE, GRID))
    assert rel_err(g, TRUE) < 0.3


@pytest.mark.parametrize(
    "rs, rp, cp",
    list(itertools.product([50.0, 500.0, 5000.0], [1e5, 1e6, 1e7], [1e-9, 1e-8, 1e-7])),
)
def test_noiseless_round_trip(rs, rp, cp):
    true = CircuitParams(rs, rp, cp)
    res = fit_circuit(simulate_spectrum(true, GRID))
    assert rel_err(res.params, true) < 1e-3
    assert res.residual < 1e-9


def test_fit_from_poor_guess():
    res = fit_circuit(simulate_spectrum(TRUE, GRID), guess=CircuitParams(5e3, 1e5, 1e-6))
    assert rel_err(res.params, TRUE) < 1e-6


def test_noisy_fit_p95():
    s = simulate_spectrum(TRUE, GRID)
    errs = [
        rel_err(fit_circuit(add_noise(s, 0.02, np.random.default_rng(seed))).params, TRUE)
        for seed in range(100)
    ]
    assert np.percentile(errs, 95) <= 0.05


def test_history_monotone():
    noisy = add_noise(simulate_spectrum(TRUE, GRID), 0.02, np.random.default_rng(3))
    res = fit_circuit(noisy, guess=CircuitParams(100.0, 1e6, 1e-7))
    h = np.array(res.history)
    assert len(h) >= 2
    assert np.all(np.diff(h) < 0)
    assert res.residual == pytest.approx(math.sqrt(h[-1] / len(noisy)))


def test_fit_idempotence():
    first = fit_circuit(simulate_spectrum(TRUE, GRID)).params
    second = fit_circuit(simulate_spectrum(first, GRID)).params
    assert rel_err(second, first) < 1e-6


@pytest.mark.parametrize("k", [1e-3, 0.5, 7.0, 1e4])
def test_scale_invariance(k):
    noisy = add_noise(simulate_spectrum(TRUE, GRID), 0.01, np.random.default_rng(11))
    a = fit_circuit(noisy).params
    b = fit_circuit(noisy.scaled(k)).params
    assert b.rs == pytest.approx(k * a.rs, rel=1e-6)
    assert b.rp == pytest.approx(k * a.rp, rel=1e-6)
    assert b.cp == pytest.approx(a.cp / k, rel=1e-6)


def test_sequential_ep_raises_fitted_cp(cfg, device, model):
    # each recorded EP step adds capacitive volume; the fit must see it
    state = device
    previous = 0.0
    rng = np.random.default_rng(0)
    for _ in range(4):
        state = apply_ep_step(state, EpCondition(0.7, 1.8), model, rng)
        s = add_noise(simulate_spectrum(cfg.circuit_for(state), GRID), 0.01, rng)
        cp = fit_circuit(s).params.cp
        assert cp > previous
        previous = cp


def test_all_real_spectrum_unidentifiable():
    f = GRID.frequencies
    s = ImpedanceSpectrum(f, np.full(f.shape, 1e3 + 0j))
    with pytest.raises(UnidentifiableError):
        fit_circuit(s)
    assert issubclass(UnidentifiableError, FitError)


def test_budget_exhaustion_raises_fit_error():
    noisy = add_noise(simulate_spectrum(TRUE, GRID), 0.02, np.random.default_rng(5))
    with pytest.raises(FitError) as info:
        fit_circuit(noisy, guess=CircuitParams(1.0, 1.0, 1.0), max_iter=2)
    assert info.value.params is not None


@pytest.mark.parametrize(
    "f",
    [np.logspace(3, 0, 5), np.logspace(1, 0, 10)],
)
def test_insufficient_grid(f):
    with pytest.raises(ValueError):
        fit_circuit(ImpedanceSpectrum(f, impedance(TRUE, f)))


def test_invalid_params():
    with pytest.raises(ValueError):
        CircuitParams(-1.0, 1e6, 1e-8)
    with pytest.raises(ValueError):
        ImpedanceSpectrum(np.array([1.0, 1.0, 2.0]), np.ones(3, complex))


def test_csv_round_trip(tmp_path):
    s = simulate_spectrum(TRUE, GRID, {"v_dc": 0.1, "v_ac": 0.02})
    path = write_spectrum(tmp_path / "s.csv", s)
    back = read_spectrum(path)
    assert np.allclose(back.frequencies, s.frequencies, rtol=1e-8)
    assert np.allclose(back.z, s.z, rtol=1e-8)
    assert back.metadata["v_dc"] == "0.1"
    assert path.read_text().splitlines()[2] == "freq_hz,z_real_ohm,z_imag_ohm"


def test_read_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("freq_hz,z_real_ohm,z_imag_ohm\n")
    with pytest.raises(DataFormatError):
        read_spectrum(p)
    p.write_text("freq_hz,z_real_ohm,z_imag_ohm\n1,2,3\n4,five,6\n")
    with pytest.raises(DataFormatError, match="line 3"):
        read_spectrum(p)
