import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trdopen import rdp
from trdopen import radar_sim as rs

from conftest import single_scatterer_signal


def random_complex(rng, n):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def test_fft_constant_and_impulse():
    np.testing.assert_allclose(rdp.fft([1, 1, 1, 1]), [4, 0, 0, 0], atol=1e-15)
    np.testing.assert_allclose(rdp.fft([1, 0, 0, 0]), [1, 1, 1, 1], atol=1e-15)


def test_fft_matches_naive_dft_256(rng):
    x = random_complex(rng, 256)
    ref = rdp.naive_dft(x)
    assert np.abs(rdp.fft(x) - ref).max() / np.abs(ref).max() < 1e-10


def test_naive_dft_oracle_agrees_with_numpy(rng):
    # the oracle itself is checked against an unrelated implementation
    x = random_complex(rng, 64)
    np.testing.assert_allclose(rdp.naive_dft(x), np.fft.fft(x), atol=1e-10)


@pytest.mark.parametrize("n", [3, 6, 12, 0])
def test_fft_rejects_non_power_of_two(n):
    with pytest.raises(ValueError):
        rdp.fft(np.ones(n))


def test_fft_length_one():
    np.testing.assert_array_equal(rdp.fft([2.5]), [2.5])


def test_fft_batched_along_axis(rng):
    x = random_complex(rng, 3 * 16 * 5).reshape(3, 16, 5)
    got = rdp.fft(x, axis=1)
    for i in range(3):
        for j in range(5):
            np.testing.assert_allclose(got[i, :, j], rdp.naive_dft(x[i, :, j]), atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 8), st.integers(0, 2**32 - 1))
def test_fft_parseval_and_inverse(log_n, seed):
    rng = np.random.default_rng(seed)
    x = random_complex(rng, 2 ** log_n)
    X = rdp.fft(x)
    e_time = np.sum(np.abs(x) ** 2)
    assert abs(np.sum(np.abs(X) ** 2) - x.size * e_time) <= 1e-9 * x.size * e_time
    back = rdp.ifft(X)
    assert np.abs(back - x).max() <= 1e-10 * np.abs(x).max()
    assert np.abs(rdp.fft(rdp.ifft(x)) - x).max() <= 1e-10 * np.abs(x).max()


def _ramp_raw(m, n, t):
    p = rs.RadarParams(samples_per_chirp=m, chirps_per_frame=n, frames=t)
    return rs.RawSignal(np.arange(m * n * t).astype(np.complex128), p)


def test_slice_and_frame_index():
    frames = rdp.slice_and_frame(_ramp_raw(4, 2, 2))
    assert frames.shape == (2, 2, 4)
    assert frames[1, 0, 3] == 11


def test_slice_and_frame_round_trip():
    raw = _ramp_raw(8, 4, 2)
    np.testing.assert_array_equal(rdp.slice_and_frame(raw).reshape(-1), raw.samples)


def test_slice_and_frame_single_nonzero():
    p = rs.RadarParams(samples_per_chirp=4, chirps_per_frame=4, frames=4)
    samples = np.zeros(64, dtype=complex)
    samples[37] = 1
    frames = rdp.slice_and_frame(rs.RawSignal(samples, p))
    expected = (37 // 16, (37 % 16) // 4, 37 % 4)
    assert expected == (2, 1, 1)
    assert list(zip(*np.nonzero(frames))) == [expected]


def test_slice_and_frame_length_mismatch():
    p = rs.RadarParams(samples_per_chirp=4, chirps_per_frame=2, frames=2)

    class Fake:
        params = p
        samples = np.zeros(15)

    with pytest.raises(ValueError):
        rdp.slice_and_frame(Fake())


def test_clutter_filter_disabled_is_identity(rng):
    x = rng.standard_normal((2, 4, 8)) + 0j
    assert rdp.clutter_filter(x, enabled=False) is x


def test_clutter_filter_removes_identical_chirps(rng):
    chirp = random_complex(rng, 8)
    frames = np.broadcast_to(chirp, (3, 4, 8)).copy()
    np.testing.assert_allclose(rdp.clutter_filter(frames), 0, atol=1e-15)


def test_clutter_filter_zero_slow_time_mean(rng):
    x = random_complex(rng, 3 * 5 * 8).reshape(3, 5, 8)
    y = rdp.clutter_filter(x)
    assert np.abs(y.mean(axis=1)).max() < 1e-12


def test_range_doppler_zero_signal(params):
    raw = rs.RawSignal(np.zeros(params.num_samples, dtype=complex), params)
    cube = rdp.range_doppler_process(raw)
    assert cube.shape == (params.frames, params.samples_per_chirp, params.chirps_per_frame)
    assert not cube.any()


def test_range_doppler_static_peak(params):
    r = 3.0
    cube = rdp.range_doppler_process(single_scatterer_signal(params, r))
    for t in range(params.frames):
        assert np.unravel_index(cube[t].argmax(), cube[t].shape) == \
            (params.range_bin(r), params.chirps_per_frame // 2)


@pytest.mark.parametrize("v", [1.5, 4.0, 9.0])
def test_range_doppler_moving_peak(params, v):
    cube = rdp.range_doppler_process(single_scatterer_signal(params, 2.5, v))
    offset = round(params.doppler_frequency(v) * params.chirps_per_frame * params.chirp_duration_s)
    for t in range(params.frames):
        n_peak = np.unravel_index(cube[t].argmax(), cube[t].shape)[1]
        assert abs(n_peak - (params.chirps_per_frame // 2 + offset)) <= 1


def test_range_doppler_gain_keeps_argmax(params, rng):
    raw = single_scatterer_signal(params, 4.0, 2.0, noise_std=0.3)
    scaled = rs.RawSignal(raw.samples * 2.7, params)
    a = rdp.range_doppler_process(raw)
    b = rdp.range_doppler_process(scaled)
    assert a.argmax() == b.argmax()
    # log(1 + g|X|) is monotone in |X|: ordering of entries is preserved
    np.testing.assert_array_equal(np.argsort(a, axis=None), np.argsort(b, axis=None))


def test_spectrogram_zero(params):
    raw = rs.RawSignal(np.zeros(params.num_samples, dtype=complex), params)
    assert not rdp.spectrogram(raw, 32, 16).any()


def test_spectrogram_shape_and_errors(params):
    raw = single_scatterer_signal(params, 2.0)
    slow = params.chirps_per_frame * params.frames
    assert rdp.spectrogram(raw, 32, 16).shape == ((slow - 32) // 16 + 1, 32)
    with pytest.raises(ValueError):
        rdp.spectrogram(raw, 2 * slow, 1)
    with pytest.raises(ValueError):
        rdp.spectrogram(raw, 24, 8)
    with pytest.raises(ValueError):
        rdp.spectrogram(raw, 32, 0)


def test_spectrogram_peak_matches_trd(params):
    raw = single_scatterer_signal(params, 3.3, 3.0)
    cube = rdp.range_doppler_process(raw)
    trd_bin = np.unravel_index(cube[0].argmax(), cube[0].shape)[1]
    spec = rdp.spectrogram(raw, params.chirps_per_frame, params.chirps_per_frame // 2)
    assert np.all(np.abs(spec.argmax(axis=1) - trd_bin) <= 1)


def test_spectrogram_frame_hop_equals_range_summed_rd(params, rng):
    raw = single_scatterer_signal(params, 3.0, -2.0, noise_std=0.5)
    n = params.chirps_per_frame
    spec = rdp.spectrogram(raw, n, n)
    rd = rdp.range_doppler_magnitude(raw)
    np.testing.assert_allclose(spec, np.log1p(rd.sum(axis=1)), rtol=1e-12)


def _peaks(column, rel=0.5):
    lin = np.expm1(column)
    return {int(i) for i in np.flatnonzero(lin > rel * lin.max())}


def test_spectrogram_two_tone_union(params):
    a = single_scatterer_signal(params, 2.0, 2.0)
    b = single_scatterer_signal(params, 6.0, -4.0)
    both = rs.RawSignal(a.samples + b.samples, params)
    n = params.chirps_per_frame
    sa, sb, sab = (rdp.spectrogram(x, n, n) for x in (a, b, both))
    for col in range(sab.shape[0]):
        pa = int(sa[col].argmax())
        pb = int(sb[col].argmax())
        assert {pa, pb} <= _peaks(sab[col])
        assert _peaks(sab[col]) <= _peaks(sa[col]) | _peaks(sb[col])


def test_crop_offsets_paper_counts():
    assert rdp.crop_offsets(400, 64, 6) == [(i * 336) // 5 for i in range(6)]
    assert rdp.crop_offsets(400, 64, 6) == [0, 67, 134, 201, 268, 336]


def test_crop_single_is_identity(rng):
    cube = rng.random((64, 4, 4))
    (only,) = rdp.crop_cube(cube, 64, 1)
    np.testing.assert_array_equal(only, cube)


def test_crop_two_halves(rng):
    cube = rng.random((16, 2, 2))
    assert rdp.crop_offsets(16, 8, 2) == [0, 8]
    a, b = rdp.crop_cube(cube, 8, 2)
    np.testing.assert_array_equal(np.concatenate([a, b]), cube)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.integers(1, 8))
def test_crops_equal_brute_force_slices(frames, crop_len, count):
    cube = np.arange(frames * 6, dtype=float).reshape(frames, 2, 3)
    if crop_len > frames:
        with pytest.raises(ValueError):
            rdp.crop_cube(cube, crop_len, count)
        return
    crops = rdp.crop_cube(cube, crop_len, count)
    assert len(crops) == count
    for i, c in enumerate(crops):
        start = 0 if count == 1 else (i * (frames - crop_len)) // (count - 1)
        np.testing.assert_array_equal(c, cube[start:start + crop_len])


def test_crop_rejects_bad_args():
    with pytest.raises(ValueError):
        rdp.crop_offsets(10, 11, 2)
    with pytest.raises(ValueError):
        rdp.crop_offsets(10, 5, 0)
