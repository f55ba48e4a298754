"""Run configuration: INI round trip, validation, component views."""

import dataclasses

import pytest

from foleygen.config import RunConfig, profile
from foleygen.errors import ConfigError


class TestDefaults:
    def test_desk_profile_is_default(self):
        assert profile("desk") == RunConfig()

    def test_full_profile_scales_up(self):
        full = profile("full")
        assert full.sample_rate == 44100
        assert full.num_fast_cells == 4
        assert full.interpolation_factor == 7
        assert full.num_bins == 513

    def test_unknown_profile(self):
        with pytest.raises(ConfigError, match="unknown profile"):
            profile("cluster")

    def test_num_bins(self):
        assert RunConfig().num_bins == 129


class TestValidation:
    def test_frame_expansion_vocabulary(self):
        with pytest.raises(ConfigError):
            RunConfig(frame_expansion="pad")

    def test_alpha_positive(self):
        with pytest.raises(ConfigError):
            RunConfig(alpha=0.0)

    def test_lambda_nonnegative(self):
        with pytest.raises(ConfigError):
            RunConfig(lambda_residual=-0.5)

    def test_schedule_positive(self):
        with pytest.raises(ConfigError):
            RunConfig(learning_rate=0.0)
        with pytest.raises(ConfigError):
            RunConfig(epochs=0)
        with pytest.raises(ConfigError):
            RunConfig(batch_size=0)

    def test_component_errors_surface_at_build(self):
        # sub-config validation runs inside RunConfig construction
        with pytest.raises(ConfigError):
            RunConfig(num_fast_cells=1)
        with pytest.raises(ConfigError):
            RunConfig(max_scale=9, relation_frames=8)


class TestComponentViews:
    def test_stft_params(self):
        p = RunConfig().stft_params()
        assert (p.fft_size, p.window_size, p.hop_size) == (256, 256, 128)

    def test_encoder_config(self):
        cfg = RunConfig(encoder_input=32, stage_channels=(8, 16),
                        output_dim=24).encoder_config()
        assert cfg.input_size == (32, 32)
        assert cfg.stage_channels == (8, 16)
        assert cfg.output_dim == 24

    def test_fslstm_config_residual_tracks_bins(self):
        cfg = RunConfig(fft_size=512, window_size=512,
                        hop_size=256).fslstm_config()
        assert cfg.residual_dim == 257

    def test_trn_config_seed_threaded(self):
        cfg = RunConfig(seed=9).trn_config()
        assert cfg.subset_seed == 9
        assert cfg.num_frames == 8


class TestTextFormat:
    def test_round_trip_preserves_everything(self):
        cfg = RunConfig(sample_rate=16000, stage_channels=(4, 8, 12),
                        zoneout_prob=0.15, arch="simple", seed=7)
        assert RunConfig.from_text(cfg.to_text()) == cfg

    def test_full_profile_round_trip(self):
        cfg = profile("full")
        assert RunConfig.from_text(cfg.to_text()) == cfg

    def test_text_is_diffable_ini(self):
        text = RunConfig().to_text()
        assert "[audio]" in text
        assert "sample_rate = 8000" in text
        assert "stage_channels = 16,32" in text

    def test_partial_text_fills_defaults(self):
        cfg = RunConfig.from_text("[train]\nseed = 42\n")
        assert cfg.seed == 42
        assert cfg.epochs == RunConfig().epochs

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError, match="unknown config section"):
            RunConfig.from_text("[cloud]\nx = 1\n")

    def test_misplaced_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            RunConfig.from_text("[audio]\nseed = 3\n")

    def test_bad_value_reports_key(self):
        with pytest.raises(ConfigError, match="hop_size"):
            RunConfig.from_text("[audio]\nhop_size = tiny\n")

    def test_bad_syntax(self):
        with pytest.raises(ConfigError, match="syntax"):
            RunConfig.from_text("hop_size = 128\n")  # key before any section

    def test_every_field_serialized(self):
        # a field missing from the section map would silently stop
        # round-tripping; catch that at test time
        cfg = RunConfig()
        text = cfg.to_text()
        for f in dataclasses.fields(RunConfig):
            assert f"{f.name} = " in text, f.name


class TestFileRoundTrip:
    def test_save_and_load(self, tmp_path):
        cfg = RunConfig(seed=11, fps=24.0)
        path = tmp_path / "run.ini"
        cfg.save(path)
        assert RunConfig.load(path) == cfg

    def test_saved_file_is_ascii(self, tmp_path):
        path = tmp_path / "run.ini"
        RunConfig().save(path)
        path.read_text(encoding="ascii")
