"""Spectrogram bank, residual composition, and waveform rendering."""

import numpy as np
import pytest

from foleygen.containers import checkpoint_save
from foleygen.dsp import (
    MODE_POWER,
    MODE_SQRT_MAGNITUDE,
    AudioClip,
    StftParams,
    normalized_cross_correlation,
    spectrogram_of,
)
from foleygen.errors import (
    AlignmentError,
    BankError,
    InvalidArgument,
    ShapeError,
)
from foleygen.rng import stream
from foleygen.synthesis import (
    ClassSpectrogramBank,
    align_frames,
    alignment_matrix,
    bank_load,
    bank_save,
    build_bank,
    compose_spectrogram,
    extract_residual,
    resample_frames,
    robust_energy,
    robust_loss_scalar,
    synthesize_waveform,
)

PARAMS = StftParams(fft_size=64, window_size=64, hop_size=32)  # 33 bins
RATE = 8000


def tone(freq, seconds=0.25, rate=RATE, amp=0.5):
    t = np.arange(int(seconds * rate)) / rate
    return AudioClip(amp * np.sin(2 * np.pi * freq * t), rate)


def small_bank(num_frames=6, seed=0):
    bases = stream(seed, "bank").random((3, num_frames, PARAMS.num_bins))
    return ClassSpectrogramBank(("bell", "drip", "hum"), bases, (2, 3, 1),
                                PARAMS, RATE)


class TestBank:
    def test_properties(self):
        bank = small_bank(num_frames=5)
        assert bank.num_frames == 5
        assert bank.num_bins == 33
        assert bank.clip_counts == (2, 3, 1)

    def test_base_lookup(self):
        bank = small_bank()
        np.testing.assert_array_equal(bank.base_for("drip"), bank.bases[1])
        with pytest.raises(BankError):
            bank.base_for("siren")

    def test_rank_checked(self):
        with pytest.raises(ShapeError):
            ClassSpectrogramBank(("a",), np.zeros((4, 33)), (1,), PARAMS, RATE)

    def test_bin_count_checked(self):
        with pytest.raises(ShapeError):
            ClassSpectrogramBank(("a",), np.zeros((1, 4, 8)), (1,), PARAMS,
                                 RATE)

    def test_negative_bases_rejected(self):
        bases = np.zeros((1, 4, 33))
        bases[0, 2, 5] = -0.1
        with pytest.raises(InvalidArgument):
            ClassSpectrogramBank(("a",), bases, (1,), PARAMS, RATE)

    def test_counts_length_checked(self):
        with pytest.raises(InvalidArgument):
            ClassSpectrogramBank(("a", "b"), np.zeros((2, 4, 33)), (1,),
                                 PARAMS, RATE)


class TestAlignmentMatrix:
    def test_identity_when_sizes_match(self):
        np.testing.assert_allclose(alignment_matrix(5, 5), np.eye(5),
                                   atol=1e-12)

    def test_corners_and_convexity(self):
        m = alignment_matrix(4, 9)
        assert m.shape == (9, 4)
        np.testing.assert_allclose(m[0], [1, 0, 0, 0], atol=1e-12)
        np.testing.assert_allclose(m[-1], [0, 0, 0, 1], atol=1e-12)
        np.testing.assert_allclose(m.sum(axis=1), 1.0, atol=1e-12)
        assert m.min() >= 0

    def test_single_source_broadcasts(self):
        m = alignment_matrix(1, 6)
        np.testing.assert_array_equal(m, np.ones((6, 1)))

    def test_downsampling_keeps_endpoints(self):
        m = alignment_matrix(9, 3)
        ramp = np.arange(9.0).reshape(9, 1)
        np.testing.assert_allclose(m @ ramp, [[0.0], [4.0], [8.0]],
                                   atol=1e-12)

    def test_validation(self):
        with pytest.raises(InvalidArgument):
            alignment_matrix(0, 3)
        with pytest.raises(InvalidArgument):
            alignment_matrix(3, 0)


class TestAlignFrames:
    def test_same_length_returns_copy(self):
        rows = stream(1, "af").random((4, 3))
        out = align_frames(rows, 4)
        np.testing.assert_array_equal(out, rows)
        assert out is not rows

    def test_constant_rows_preserved(self):
        rows = np.tile([2.0, -1.0, 0.5], (3, 1))
        out = align_frames(rows, 11)
        np.testing.assert_allclose(out, np.tile([2.0, -1.0, 0.5], (11, 1)),
                                   atol=1e-12)

    def test_linear_ramp_exact(self):
        # linear interpolation reproduces affine sequences exactly
        rows = np.linspace(0.0, 5.0, 6).reshape(6, 1)
        out = align_frames(rows, 16)
        np.testing.assert_allclose(out[:, 0], np.linspace(0.0, 5.0, 16),
                                   atol=1e-12)

    def test_validation(self):
        with pytest.raises(InvalidArgument):
            align_frames(np.zeros((0, 3)), 4)
        with pytest.raises(InvalidArgument):
            align_frames(np.zeros(5), 4)

    def test_resample_alias(self):
        rows = stream(2, "af").random((3, 4))
        np.testing.assert_array_equal(resample_frames(rows, 7),
                                      align_frames(rows, 7))


class TestBuildBank:
    def clips(self):
        return {
            "hum": [tone(250), tone(500)],
            "bell": [tone(1000)],
        }

    def test_average_matches_hand_computation(self):
        bank = build_bank(self.clips(), PARAMS, target_frames=10)
        assert bank.class_names == ("bell", "hum")  # sorted default
        assert bank.clip_counts == (1, 2)
        acc = np.zeros((10, PARAMS.num_bins))
        for clip in self.clips()["hum"]:
            spec = spectrogram_of(clip, PARAMS, MODE_SQRT_MAGNITUDE)
            acc += resample_frames(spec.frames, 10)
        np.testing.assert_allclose(bank.base_for("hum"), acc / 2, atol=1e-12)

    def test_rate_taken_from_clips(self):
        bank = build_bank(self.clips(), PARAMS, 10)
        assert bank.sample_rate == RATE

    def test_explicit_class_order(self):
        bank = build_bank(self.clips(), PARAMS, 10,
                          class_names=("hum", "bell"))
        assert bank.class_names == ("hum", "bell")

    def test_empty_class_rejected(self):
        with pytest.raises(BankError):
            build_bank({"hum": []}, PARAMS, 10)
        with pytest.raises(BankError):
            build_bank(self.clips(), PARAMS, 10,
                       class_names=("hum", "missing"))

    def test_target_frames_validated(self):
        with pytest.raises(InvalidArgument):
            build_bank(self.clips(), PARAMS, 0)


class TestResidualComposition:
    def test_extract_is_difference(self):
        bank = small_bank()
        spec = stream(3, "rc").random((6, 33))
        res = extract_residual(spec, "bell", bank)
        np.testing.assert_allclose(res, spec - bank.base_for("bell"),
                                   atol=1e-12)

    def test_extract_accepts_spectrogram_object(self):
        clip = tone(500)
        spec = spectrogram_of(clip, PARAMS, MODE_SQRT_MAGNITUDE)
        bank = build_bank({"hum": [clip]}, PARAMS, spec.frames.shape[0])
        res = extract_residual(spec, "hum", bank)
        np.testing.assert_allclose(res, 0.0, atol=1e-12)

    def test_extract_shape_mismatch(self):
        bank = small_bank(num_frames=6)
        with pytest.raises(AlignmentError):
            extract_residual(np.zeros((5, 33)), "bell", bank)

    def test_compose_inverts_extract(self):
        bank = small_bank()
        spec = stream(4, "rc").random((6, 33))  # nonnegative
        res = extract_residual(spec, "hum", bank)
        back = compose_spectrogram(res, "hum", bank)
        np.testing.assert_allclose(back.frames, spec, atol=1e-12)
        assert back.mode == MODE_SQRT_MAGNITUDE
        assert back.sample_rate == RATE

    def test_compose_clamps_at_zero(self):
        bank = small_bank()
        res = -bank.base_for("drip") - 1.0
        out = compose_spectrogram(res, "drip", bank)
        np.testing.assert_array_equal(out.frames, 0.0)

    def test_compose_without_residual_copies_base(self):
        bank = small_bank()
        out = compose_spectrogram(None, "bell", bank)
        np.testing.assert_array_equal(out.frames, bank.base_for("bell"))
        out.frames[0, 0] += 1.0
        assert bank.bases[0, 0, 0] != out.frames[0, 0]

    def test_compose_shape_mismatch(self):
        bank = small_bank()
        with pytest.raises(AlignmentError):
            compose_spectrogram(np.zeros((4, 33)), "bell", bank)


class TestRobustLoss:
    def test_scalar_closed_form(self):
        assert robust_loss_scalar(0.0) == pytest.approx(0.0, abs=1e-15)
        assert robust_loss_scalar(2.0, alpha=1.0) == pytest.approx(
            np.log(5.0), rel=1e-12)
        assert robust_loss_scalar(3.0, alpha=0.5) == pytest.approx(
            np.log(9.5), rel=1e-12)

    def test_energy_matches_per_frame_scalars(self):
        pred = stream(5, "rl").random((4, 6))
        target = stream(6, "rl").random((4, 6))
        norms = np.linalg.norm(pred - target, axis=1)
        expected = sum(robust_loss_scalar(g) for g in norms)
        assert robust_energy(pred, target) == pytest.approx(expected,
                                                            rel=1e-12)

    def test_validation(self):
        with pytest.raises(InvalidArgument):
            robust_loss_scalar(1.0, alpha=0.0)
        with pytest.raises(InvalidArgument):
            robust_energy(np.zeros((2, 2)), np.zeros((2, 2)), alpha=-1.0)
        with pytest.raises(ShapeError):
            robust_energy(np.zeros((2, 2)), np.zeros((3, 2)))


class TestSynthesizeWaveform:
    def test_tone_round_trip(self):
        clip = tone(500, seconds=0.5)
        spec = spectrogram_of(clip, PARAMS, MODE_SQRT_MAGNITUDE)
        out = synthesize_waveform(spec, PARAMS)
        assert out.sample_rate == RATE
        score = normalized_cross_correlation(out, clip)
        assert score > 0.95

    def test_peak_normalized(self):
        clip = tone(500, amp=0.05)
        spec = spectrogram_of(clip, PARAMS, MODE_SQRT_MAGNITUDE)
        out = synthesize_waveform(spec, PARAMS)
        assert np.max(np.abs(out.samples)) == pytest.approx(0.9, abs=1e-9)

    def test_silent_input_stays_silent(self):
        clip = AudioClip(np.zeros(4096), RATE)
        spec = spectrogram_of(clip, PARAMS, MODE_SQRT_MAGNITUDE)
        out = synthesize_waveform(spec, PARAMS)
        np.testing.assert_array_equal(out.samples, 0.0)

    def test_other_modes_coerced(self):
        clip = tone(750)
        sqrt_spec = spectrogram_of(clip, PARAMS, MODE_SQRT_MAGNITUDE)
        power_spec = spectrogram_of(clip, PARAMS, MODE_POWER)
        a = synthesize_waveform(sqrt_spec, PARAMS)
        b = synthesize_waveform(power_spec, PARAMS)
        np.testing.assert_allclose(a.samples, b.samples, atol=1e-9)


class TestBankContainer:
    def test_round_trip(self, tmp_path):
        bank = small_bank(seed=7)
        path = tmp_path / "bank.bin"
        bank_save(bank, path)
        loaded = bank_load(path)
        assert loaded.class_names == bank.class_names
        assert loaded.clip_counts == bank.clip_counts
        assert loaded.sample_rate == bank.sample_rate
        assert loaded.params == bank.params
        np.testing.assert_array_equal(loaded.bases, bank.bases)

    def test_rewrite_is_byte_identical(self, tmp_path):
        bank = small_bank(seed=8)
        a = tmp_path / "a.bin"
        b = tmp_path / "b.bin"
        bank_save(bank, a)
        bank_save(bank, b)
        assert a.read_bytes() == b.read_bytes()

    def test_wrong_kind_rejected(self, tmp_path):
        path = tmp_path / "model.bin"
        checkpoint_save(path, {"w": np.zeros(3)}, "x = 1\n", seed=0,
                        kind="model")
        with pytest.raises(InvalidArgument):
            bank_load(path)
