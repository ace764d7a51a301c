import numpy as np
import pytest

from dgp.fields import Boundary, Field, Grid, GridError, SpectralField, fft2, ifft2, resample_spectral
from dgp.rng import RngStream


def periodic(n):
    return Grid(n, n, Boundary.PERIODIC)


class TestGrid:
    def test_minimum_size(self):
        with pytest.raises(GridError):
            Grid(3, 8)
        with pytest.raises(GridError):
            Grid(8, 2)

    def test_spacing_conventions(self):
        assert Grid(8, 8, Boundary.PERIODIC).hx == 1 / 8
        assert Grid(9, 9, Boundary.DIRICHLET_ZERO).hx == 1 / 8
        g = Grid(5, 5, Boundary.NEUMANN)
        assert g.xs()[-1] == pytest.approx(1.0)

    def test_periodic_points_exclude_one(self):
        g = periodic(8)
        assert g.xs()[-1] == pytest.approx(7 / 8)


class TestField:
    def test_rejects_nonfinite(self):
        vals = np.zeros((8, 8, 1))
        vals[3, 3, 0] = np.nan
        with pytest.raises(ValueError, match="finite"):
            Field(periodic(8), vals)

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            Field(periodic(8), np.zeros((4, 8, 1)))

    def test_values_are_locked(self):
        f = Field.constant(periodic(8), 2.0)
        with pytest.raises(ValueError):
            f.values[0, 0, 0] = 1.0


class TestFft:
    def test_constant_field_dc_only(self):
        c = 3.25
        s = fft2(Field.constant(periodic(4), c))
        coeffs = s.coeffs[:, :, 0]
        assert coeffs[0, 0] == pytest.approx(16 * c, abs=1e-12)
        rest = coeffs.copy()
        rest[0, 0] = 0
        assert np.abs(rest).max() < 1e-12

    def test_cosine_two_conjugate_modes(self):
        g = periodic(8)
        x = g.xs()[None, :].repeat(8, axis=0)
        s = fft2(Field(g, np.cos(2 * np.pi * x)))
        coeffs = s.coeffs[:, :, 0]
        # k = (1, 0) and (7, 0): forward sum evaluates to 32 at each
        assert coeffs[0, 1] == pytest.approx(32.0, abs=1e-10)
        assert coeffs[0, 7] == pytest.approx(32.0, abs=1e-10)
        mask = np.ones_like(coeffs, dtype=bool)
        mask[0, 1] = mask[0, 7] = False
        assert np.abs(coeffs[mask]).max() < 1e-10

    def test_parseval(self):
        rng = RngStream(3)
        f = Field(periodic(16), rng.standard_normal((16, 16, 1)))
        s = fft2(f)
        lhs = (f.values**2).sum()
        rhs = (np.abs(s.coeffs) ** 2).sum() / 256
        assert lhs == pytest.approx(rhs, rel=1e-10)

    @pytest.mark.parametrize("n", [4, 5, 8, 16, 33, 64])
    def test_roundtrip_identity(self, n):
        rng = RngStream(n)
        f = Field(Grid(n, n), rng.standard_normal((n, n, 2)))
        back = ifft2(fft2(f))
        assert np.abs(back.values - f.values).max() < 1e-12

    def test_rejects_nonperiodic(self):
        f = Field.constant(Grid(8, 8, Boundary.DIRICHLET_ZERO), 1.0)
        with pytest.raises(GridError):
            fft2(f)

    def test_ifft2_rejects_non_hermitian(self):
        coeffs = np.zeros((8, 8, 1), dtype=complex)
        coeffs[1, 1, 0] = 1.0  # no conjugate partner
        with pytest.raises(ValueError, match="Hermitian"):
            ifft2(SpectralField(periodic(8), coeffs))


class TestResample:
    def test_constant_upsample(self):
        f = Field.constant(periodic(8), 1.7)
        up = resample_spectral(f, periodic(16))
        assert np.abs(up.values - 1.7).max() < 1e-12

    def test_cosine_matches_analytic(self):
        g8, g16 = periodic(8), periodic(16)
        f = Field(g8, np.cos(2 * np.pi * g8.xs())[None, :].repeat(8, axis=0))
        up = resample_spectral(f, g16)
        want = np.cos(2 * np.pi * g16.xs())[None, :].repeat(16, axis=0)
        assert np.abs(up.values[:, :, 0] - want).max() < 1e-10

    def test_band_limited_roundtrip(self):
        # band-limit |k| < 4 so 16 -> 8 -> 16 is the identity
        rng = RngStream(11)
        raw = rng.standard_normal((16, 16))
        m = np.fft.fftfreq(16, 1 / 16)
        keep = (np.abs(m)[None, :] < 4) & (np.abs(m)[:, None] < 4)
        f = Field(periodic(16), np.fft.ifft2(np.where(keep, np.fft.fft2(raw), 0)).real)
        down = resample_spectral(f, periodic(8))
        back = resample_spectral(down, periodic(16))
        assert np.abs(back.values - f.values).max() < 1e-10

    def test_downsample_preserves_coincident_points(self):
        g16, g8 = periodic(16), periodic(8)
        x = g16.xs()[None, :].repeat(16, axis=0)
        y = g16.ys()[:, None].repeat(16, axis=1)
        f = Field(g16, np.cos(2 * np.pi * x) + 0.5 * np.sin(2 * np.pi * (x + y)))
        down = resample_spectral(f, g8)
        assert np.abs(down.values - f.values[::2, ::2]).max() < 1e-10

    def test_rejects_nonperiodic(self):
        f = Field.constant(Grid(8, 8, Boundary.NEUMANN), 1.0)
        with pytest.raises(GridError):
            resample_spectral(f, periodic(16))
