import numpy as np
import pytest

from mcrecon.errors import (
    InvalidDimensionError,
    InvalidParameterError,
    MalformedDatasetError,
)
from mcrecon.numerics import (
    channels_to_complex,
    complex_to_channels,
    derive_rng,
    fft2,
    gaussian_complex,
    ifft2,
    load_image,
    make_rng,
    save_image,
)

from conftest import dft_matrix_2d


class TestFFT:
    def test_zeros_map_to_zeros(self):
        out = fft2(np.zeros((4, 4), dtype=complex))
        assert np.all(out == 0)

    def test_single_pixel_identity(self):
        c = 3.0 - 2.0j
        out = fft2(np.array([[c]]))
        assert out.shape == (1, 1)
        assert out[0, 0] == pytest.approx(c)

    def test_two_by_two_hand_computed(self):
        # Unitary 2D DFT of a unit impulse at the origin: every output
        # coefficient equals 1/sqrt(4).
        out = fft2(np.array([[1.0, 0.0], [0.0, 0.0]]))
        assert np.allclose(out, 0.5 * np.ones((2, 2)), atol=1e-15)

    def test_ifft2_of_flat_spectrum(self):
        out = ifft2(0.5 * np.ones((2, 2), dtype=complex))
        expected = np.array([[1.0, 0.0], [0.0, 0.0]])
        assert np.allclose(out, expected, atol=1e-15)

    def test_roundtrip_random(self, rng):
        x = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
        back = ifft2(fft2(x))
        assert np.linalg.norm(back - x) <= 1e-10 * np.linalg.norm(x)

    def test_matches_explicit_matrix_oracle(self, rng):
        h, w = 4, 8
        mat = dft_matrix_2d(h, w)
        for _ in range(5):
            x = rng.standard_normal((h, w)) + 1j * rng.standard_normal((h, w))
            via_matrix = (mat @ x.ravel()).reshape(h, w)
            assert np.allclose(fft2(x), via_matrix, atol=1e-12)

    def test_parseval(self, rng):
        for _ in range(100):
            x = rng.standard_normal((8, 4)) + 1j * rng.standard_normal((8, 4))
            ratio = np.linalg.norm(fft2(x)) / np.linalg.norm(x)
            assert abs(ratio - 1.0) <= 1e-10

    def test_adjointness(self, rng):
        for _ in range(50):
            x = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
            y = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
            lhs = np.vdot(y, fft2(x))
            rhs = np.vdot(ifft2(y), x)
            bound = 1e-10 * np.linalg.norm(x) * np.linalg.norm(y)
            assert abs(lhs - rhs) <= bound

    def test_zero_dimension_rejected(self):
        with pytest.raises(InvalidDimensionError):
            fft2(np.zeros((0, 4)))

    def test_non_power_of_two_rejected(self):
        with pytest.raises(InvalidDimensionError):
            fft2(np.zeros((3, 4)))

    def test_non_2d_rejected(self):
        with pytest.raises(InvalidDimensionError):
            ifft2(np.zeros(8))


class TestGaussianComplex:
    def test_zero_std_gives_zeros(self):
        out = gaussian_complex(make_rng(0), (4, 4), 0.0)
        assert np.all(out == 0)

    def test_negative_std_rejected(self):
        with pytest.raises(InvalidParameterError):
            gaussian_complex(make_rng(0), (4, 4), -1.0)

    def test_unit_power(self):
        # E|entry|^2 = 1; one million draws pins the mean within 3 sigma.
        out = gaussian_complex(make_rng(7), (1024, 1024), 1.0)
        power = np.mean(np.abs(out) ** 2)
        assert 0.99 <= power <= 1.01

    def test_real_imag_split(self):
        out = gaussian_complex(make_rng(11), (512, 512), 2.0)
        assert np.var(out.real) == pytest.approx(2.0, rel=0.05)
        assert np.var(out.imag) == pytest.approx(2.0, rel=0.05)

    def test_same_seed_identical(self):
        a = gaussian_complex(make_rng(42), (8, 8), 1.5)
        b = gaussian_complex(make_rng(42), (8, 8), 1.5)
        assert np.array_equal(a, b)

    def test_streams_reproducible_across_draw_types(self):
        r1, r2 = make_rng(3), make_rng(3)
        assert np.array_equal(r1.standard_normal(10), r2.standard_normal(10))
        assert np.array_equal(r1.integers(0, 100, 5), r2.integers(0, 100, 5))
        assert np.array_equal(
            gaussian_complex(r1, (4, 4), 1.0), gaussian_complex(r2, (4, 4), 1.0)
        )

    def test_derived_streams_differ_by_key(self):
        a = derive_rng(5, 0).standard_normal(4)
        b = derive_rng(5, 1).standard_normal(4)
        c = derive_rng(5, 0).standard_normal(4)
        assert not np.array_equal(a, b)
        assert np.array_equal(a, c)


class TestChannels:
    def test_roundtrip(self, rng):
        x1 = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        x2 = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        stack = complex_to_channels(x1, x2)
        assert stack.shape == (4, 4, 4)
        back1, back2 = channels_to_complex(stack)
        assert np.array_equal(back1, x1)
        assert np.array_equal(back2, x2)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(InvalidDimensionError):
            complex_to_channels(np.zeros((2, 2)), np.zeros((4, 4)))

    def test_odd_channel_count_rejected(self):
        with pytest.raises(InvalidDimensionError):
            channels_to_complex(np.zeros((3, 2, 2)))


class TestImageIO:
    def test_roundtrip_bit_exact(self, rng, tmp_path):
        img = rng.standard_normal((8, 16)) + 1j * rng.standard_normal((8, 16))
        path = tmp_path / "img.cimg"
        save_image(img, path)
        back = load_image(path)
        assert np.array_equal(back, img)

    def test_header_size(self, rng, tmp_path):
        img = np.ones((2, 2), dtype=complex)
        path = tmp_path / "img.cimg"
        save_image(img, path)
        assert path.stat().st_size == 16 + 2 * 2 * 16

    def test_truncated_rejected(self, tmp_path):
        path = tmp_path / "img.cimg"
        save_image(np.ones((4, 4), dtype=complex), path)
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(MalformedDatasetError):
            load_image(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "img.cimg"
        path.write_bytes(b"XXXX" + bytes(12))
        with pytest.raises(MalformedDatasetError):
            load_image(path)
