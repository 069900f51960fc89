import math

import numpy as np
import pytest
from scipy import integrate

from spingas import (
    CellGeometry,
    FieldSpec,
    FlatSpectrum,
    ProbeProfile,
    SpinStatistics,
    WallGasSpec,
    build_basis,
    mode_evolution,
    noise_content,
    noise_covariance,
    spin_noise_spectrum,
    squeezing_decay,
    uniform_radial_weights,
)
from spingas.dynamics import (
    half_squeezing_time,
    spectrum_from_weights,
    squeezing_decay_from_weights,
)

CYL = CellGeometry.cylindrical(1.0, 3.0)
BUFFER_WALL = WallGasSpec(D=1.0, lam=0.5e-4, N=1.0)
COATED_WALL = WallGasSpec(D=3e3, lam=0.1, N=1e6)


@pytest.fixture(scope="module")
def buffer_basis():
    return build_basis(CYL, BUFFER_WALL, (60, 60), warn_validity=False)


@pytest.fixture(scope="module")
def coated_basis():
    return build_basis(CYL, COATED_WALL, (40, 40), warn_validity=False)


class TestModeEvolution:
    def test_t_zero(self):
        assert mode_evolution(1 + 2j, 3.0, 5.0, 0.0) == 1 + 2j
        assert noise_covariance(3.0, 0.0) == 0.0

    def test_long_time(self):
        assert abs(mode_evolution(1.0, 2.0, 0.0, 100.0)) < 1e-80
        assert noise_covariance(2.0, 100.0) == pytest.approx(1.0)

    def test_half_life_point(self):
        t = math.log(2.0)
        assert abs(mode_evolution(1.0, 1.0, 0.0, t)) == pytest.approx(0.5, rel=1e-12)
        assert noise_covariance(1.0, t) == pytest.approx(0.75, rel=1e-12)

    def test_vacuum_variance_closure(self):
        # decayed squeezing plus accumulated noise keeps vacuum at 1/4
        for gamma, t in [(0.5, 0.3), (2.0, 1.7), (10.0, 0.01)]:
            coherent = 0.25 * abs(mode_evolution(1.0, gamma, 0.0, t)) ** 2
            noise = 0.25 * noise_covariance(gamma, t)
            assert coherent + noise == pytest.approx(0.25, rel=1e-12)

    def test_rejects_negative_time(self):
        with pytest.raises(ValueError):
            mode_evolution(1.0, 1.0, 0.0, -1.0)


class TestSpectrum:
    def test_peak_at_f0(self, buffer_basis):
        field = FieldSpec(f0=300.0)
        fgrid = np.linspace(-1000, 1600, 2601)
        spec = spin_noise_spectrum(buffer_basis, ProbeProfile(w0=0.1), field, SpinStatistics(), fgrid)
        assert fgrid[np.argmax(spec.Sxx)] == pytest.approx(300.0)

    def test_shift_covariance(self, buffer_basis):
        probe = ProbeProfile(w0=0.1)
        stats = SpinStatistics()
        f0 = 123.0
        base = np.linspace(-500, 500, 401)
        s0 = spin_noise_spectrum(buffer_basis, probe, FieldSpec(f0=0.0), stats, base)
        s1 = spin_noise_spectrum(buffer_basis, probe, FieldSpec(f0=f0), stats, base + f0)
        assert np.max(np.abs(s0.Sxx - s1.Sxx)) < 1e-12

    def test_total_power_integral(self, buffer_basis):
        spec = spin_noise_spectrum(
            buffer_basis, ProbeProfile(w0=0.1), FieldSpec(f0=0.0), SpinStatistics(),
            np.linspace(-100, 100, 51),
        )
        w, g = spec.weights, spec.gammas

        def s(f):
            return float((w / 4 * 2 * g / (g**2 + 4 * math.pi**2 * f**2)).sum())

        val, _ = integrate.quad(s, -np.inf, np.inf, limit=400)
        assert val == pytest.approx(spec.total_power, rel=1e-6)

    def test_single_lorentzian_zeta(self):
        spec = spectrum_from_weights(
            [1.0], [7.0], FieldSpec(0.0), SpinStatistics(), np.linspace(-50, 50, 101),
            gamma_ref=7.0,
        )
        assert noise_content(spec) == pytest.approx(0.5, abs=1e-6)

    def test_statistics_factor(self):
        assert SpinStatistics(polarized=True).p_factor == 1.0
        assert SpinStatistics(polarized=False, S=0.5).p_factor == pytest.approx(1.0)
        assert SpinStatistics(polarized=False, S=1.5).p_factor == pytest.approx(5.0 / 3.0)

    def test_flat_spectrum_raises(self):
        spec = spectrum_from_weights(
            [1.0], [1e4], FieldSpec(0.0), SpinStatistics(), np.linspace(-1, 1, 11), gamma_ref=1e4
        )
        with pytest.raises(FlatSpectrum):
            noise_content(spec)

    def test_zero_rate_mode_rejected(self):
        with pytest.raises(ValueError):
            spectrum_from_weights(
                [1.0], [0.0], FieldSpec(0.0), SpinStatistics(), np.linspace(-1, 1, 11), gamma_ref=1.0
            )

    def test_zeta_buffer_exceeds_coated(self, buffer_basis, coated_basis):
        stats = SpinStatistics()
        probe = ProbeProfile(w0=0.1)
        fg = np.linspace(-5e6, 5e6, 101)
        zb = spin_noise_spectrum(buffer_basis, probe, FieldSpec(0.0), stats, fg).zeta
        zc = spin_noise_spectrum(coated_basis, probe, FieldSpec(0.0), stats, fg).zeta
        assert zb > zc

    def test_csv_and_summary(self, buffer_basis, tmp_path):
        spec = spin_noise_spectrum(
            buffer_basis, ProbeProfile(w0=0.1), FieldSpec(0.0), SpinStatistics(),
            np.linspace(-500, 500, 101),
        )
        p = tmp_path / "s.csv"
        spec.to_csv(p)
        lines = p.read_text().strip().splitlines()
        assert lines[0] == "f_hz,Sxx_per_hz,Sxx_ref_per_hz"
        assert len(lines) == 102
        spec.save_summary(tmp_path / "s.json")
        assert (tmp_path / "s.json").stat().st_size > 0


class TestSqueezing:
    def test_monotone_nondecreasing(self, buffer_basis):
        res = squeezing_decay(buffer_basis, ProbeProfile(w0=0.1), 0.05, np.linspace(0, 2, 400))
        assert np.all(np.diff(res.variance) >= -1e-15)

    def test_antisqueezed_decreases(self):
        res = squeezing_decay_from_weights([1.0], [2.0], 0.9, np.linspace(0, 3, 50))
        assert np.all(np.diff(res.variance) <= 1e-15)
        assert res.variance[-1] == pytest.approx(0.25, abs=1e-4)

    def test_endpoints_complete_basis(self, coated_basis):
        res = squeezing_decay(coated_basis, ProbeProfile(w0=1e4), 0.05, np.array([0.0, 1e6]))
        assert res.variance[0] == pytest.approx(0.05, abs=1e-6)
        assert res.variance[1] == pytest.approx(0.25, abs=1e-6)

    def test_lifetime_grows_with_waist(self, buffer_basis):
        lifetimes = []
        for w0 in (0.1, 0.2, 0.4, 0.8):
            res = squeezing_decay(buffer_basis, ProbeProfile(w0=w0), 0.05, np.linspace(0, 1, 10))
            lifetimes.append(half_squeezing_time(res.weights, res.gammas, 0.05))
        assert all(a < b for a, b in zip(lifetimes, lifetimes[1:]))

    def test_reference_curve(self, buffer_basis):
        res = squeezing_decay(buffer_basis, ProbeProfile(w0=0.4), 0.05, np.linspace(0, 0.1, 11))
        gref = math.pi**2 * 1.0 / 0.4**2
        expect = 0.05 * np.exp(-2 * gref * res.tgrid) + (1 - np.exp(-2 * gref * res.tgrid)) / 4
        assert np.allclose(res.variance_ref, expect, rtol=1e-12)

    def test_uniform_radial_weights_parseval(self):
        w, g = uniform_radial_weights(CYL, BUFFER_WALL, 400)
        assert np.all(np.diff(g) > 0)
        assert 0.999 < w.sum() <= 1.0 + 1e-12

    def test_uniform_radial_weights_dirichlet_values(self):
        # flat profile on the Dirichlet disk basis carries weight 4/x_nu^2
        from scipy.special import jn_zeros

        w, _ = uniform_radial_weights(CYL, WallGasSpec.dirichlet_limit(1.0, 1e-5), 3)
        x = jn_zeros(0, 3)
        assert np.allclose(w, 4.0 / x**2, rtol=1e-9)

    def test_fig3d_truncation_convergence(self):
        x2 = 0.25 * 10 ** (-2.5)
        tw = 1.0 / math.pi**2
        tg = np.linspace(0, 30 * tw, 300)
        traces = []
        for n in (500, 1000):
            w, g = uniform_radial_weights(CYL, BUFFER_WALL, n)
            traces.append(squeezing_decay_from_weights(w, g, x2, tg).variance)
        assert np.max(np.abs(traces[0] - traces[1])) < 1e-3

    def test_rejects_nonpositive_variance(self):
        with pytest.raises(ValueError):
            squeezing_decay_from_weights([1.0], [1.0], 0.0, np.linspace(0, 1, 5))
