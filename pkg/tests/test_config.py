"""Flat key = value scenario configuration."""

import dataclasses

import pytest

import tunnelgraph.config as config
from tunnelgraph.config import ScenarioConfig, format_config, parse_config
from tunnelgraph.optimizer import NUMERIC
from tunnelgraph.sync import DataError, PLANAR


class TestDefaults:
    def test_empty_text_gives_documented_defaults(self):
        cfg = parse_config("")
        assert cfg == ScenarioConfig()
        assert cfg.trajectory.straight_length == 100.0
        assert cfg.trajectory.speed == 0.5
        assert cfg.trajectory.turn_rate_deg == 30.0
        assert cfg.layout.count == 4
        assert cfg.layout.spacing == 18.0
        assert cfg.lateral_offset == 1.2
        assert cfg.detection.max_range == 6.0
        assert cfg.detection.max_bearing_deg == 50.0
        assert cfg.detection.rate == 2.0
        assert cfg.sources == ("dvso", "wheel")
        assert cfg.noise["dvso"].trans_per_frame == 0.00148
        assert cfg.noise["dvso"].rot_deg_per_frame == 0.043
        assert cfg.noise["wheel"].trans_per_frame == 0.00018
        assert cfg.noise["wheel"].rot_deg_per_frame == 0.002
        assert cfg.noise["wheel"].dof_mode == PLANAR

    def test_comments_and_blank_lines_ignored(self):
        cfg = parse_config("# a comment\n\n   \nseed = 4  # trailing\n")
        assert cfg.seed == 4


class TestOverrides:
    def test_scalars_and_lists(self):
        cfg = parse_config(
            "seed = 9\n"
            "sources = wheel\n"
            "trajectory.straight_length = 42.5\n"
            "trajectory.return_leg = false\n"
            "landmark.count = 7\n"
            "landmark.spacing = 3.25\n"
            "landmark.lateral_offset = 0.8\n"
            "detection.sigma_trans = 0.001\n"
            "solver.max_iterations = 17\n"
            "solver.jacobian_mode = numeric\n"
            "graph.position_only = true\n"
        )
        assert cfg.seed == 9
        assert cfg.sources == ("wheel",)
        assert cfg.trajectory.straight_length == 42.5
        assert not cfg.trajectory.return_leg
        assert cfg.layout.count == 7 and cfg.layout.spacing == 3.25
        assert cfg.lateral_offset == 0.8
        assert cfg.detection.sigma_trans == 0.001
        assert cfg.solver.max_iterations == 17
        assert cfg.solver.jacobian_mode == NUMERIC
        assert cfg.position_only

    def test_custom_source_requires_noise_keys(self):
        with pytest.raises(DataError) as err:
            parse_config("sources = sonar\n")
        assert "sonar" in str(err.value)
        cfg = parse_config(
            "sources = sonar\n"
            "noise.sonar.frame_rate = 4\n"
            "noise.sonar.trans_per_frame = 0.01\n"
            "noise.sonar.rot_deg_per_frame = 0.5\n"
        )
        assert cfg.noise["sonar"].frame_rate == 4.0
        assert cfg.noise["sonar"].trans_per_frame == 0.01

    def test_custom_source_missing_field_named(self):
        with pytest.raises(DataError) as err:
            parse_config(
                "sources = sonar\n"
                "noise.sonar.frame_rate = 4\n"
                "noise.sonar.trans_per_frame = 0.01\n"
            )
        assert "noise.sonar.rot_deg_per_frame" in str(err.value)

    def test_preset_noise_partial_override(self):
        cfg = parse_config("noise.dvso.trans_per_frame = 0.005\n")
        assert cfg.noise["dvso"].trans_per_frame == 0.005
        assert cfg.noise["dvso"].rot_deg_per_frame == 0.043

    def test_axis_scale_three_floats(self):
        cfg = parse_config("sources = lidar\nnoise.lidar.axis_scale = 50 1 1\n")
        assert cfg.noise["lidar"].axis_scale == (50.0, 1.0, 1.0)
        with pytest.raises(DataError):
            parse_config("noise.dvso.axis_scale = 1 2\n")


class TestErrors:
    def test_unknown_key_is_named_with_line(self):
        with pytest.raises(DataError) as err:
            parse_config("seed = 1\nnot.a.key = 3\n")
        msg = str(err.value)
        assert "not.a.key" in msg and "line 2" in msg

    def test_range_violation_names_key(self):
        for text, key in [
            ("landmark.spacing = -1", "landmark.spacing"),
            ("landmark.count = 0", "landmark.count"),
            ("trajectory.speed = 0", "trajectory.speed"),
            ("detection.max_range = -2", "detection.max_range"),
            ("noise.dvso.trans_per_frame = -0.1", "noise.dvso.trans_per_frame"),
            ("solver.max_iterations = 0", "solver.max_iterations"),
        ]:
            with pytest.raises(DataError) as err:
                parse_config(text + "\n")
            assert key in str(err.value), text

    def test_type_error_names_line(self):
        with pytest.raises(DataError) as err:
            parse_config("landmark.count = many\n")
        assert "line 1" in str(err.value)

    def test_duplicate_key_rejected(self):
        with pytest.raises(DataError) as err:
            parse_config("seed = 1\nseed = 2\n")
        assert "duplicate" in str(err.value)

    def test_missing_equals_sign(self):
        with pytest.raises(DataError) as err:
            parse_config("seed 5\n")
        assert "line 1" in str(err.value)


class TestRoundTrip:
    def test_default_round_trip(self):
        cfg = parse_config("")
        assert parse_config(format_config(cfg)) == cfg

    def test_custom_round_trip(self):
        text = (
            "seed = 12\n"
            "sources = dvso lidar\n"
            "trajectory.straight_length = 55.5\n"
            "trajectory.turn_angle_deg = -180\n"
            "noise.lidar.axis_scale = 50 1 1\n"
            "detection.sigma_rot_deg = 0.15\n"
            "solver.huber_delta = 1.25\n"
            "graph.position_only = true\n"
        )
        cfg = parse_config(text)
        echoed = format_config(cfg)
        assert parse_config(echoed) == cfg
        # a second echo is textually stable
        assert format_config(parse_config(echoed)) == echoed

    def test_seed_override_survives(self):
        cfg = parse_config("seed = 3\n")
        replaced = dataclasses.replace(cfg, seed=99)
        assert parse_config(format_config(replaced)).seed == 99
