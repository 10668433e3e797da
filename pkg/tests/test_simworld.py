import math

import numpy as np
import pytest

from drivebench.simworld import (
    Actor,
    ControlCommand,
    EgoState,
    Pose,
    ScriptSegment,
    Weather,
    WorldState,
    sense,
    step_actors,
    step_dynamics,
    wrap_angle,
)


def ego_at(x=0.0, y=0.0, psi=0.0, v=0.0):
    return EgoState(pose=Pose(x, y, psi), v=v)


class TestWrapAngle:
    def test_in_range_untouched(self):
        assert wrap_angle(0.5) == 0.5

    def test_above_pi(self):
        assert wrap_angle(3.2) == pytest.approx(3.2 - 2 * math.pi)

    def test_boundary_maps_to_positive_pi(self):
        assert wrap_angle(math.pi) == pytest.approx(math.pi)
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)


class TestStepDynamics:
    def test_straight_coast(self):
        ego = ego_at(v=10.0)
        out = step_dynamics(ego, ControlCommand(0.0, 0.0), 1.0, 0.1)
        assert out.pose.x == pytest.approx(1.0)
        assert out.pose.y == 0.0
        assert out.pose.psi == 0.0
        assert out.v == 10.0

    def test_no_reverse(self):
        ego = ego_at(v=0.0)
        out = step_dynamics(ego, ControlCommand(-1.0, 0.3), 1.0, 0.1)
        assert out.v == 0.0

    def test_heading_rate_matches_bicycle_model(self):
        # (v / L) * tan(delta) * dt evaluated directly.
        ego = ego_at(v=10.0)
        out = step_dynamics(ego, ControlCommand(0.0, 0.1), 1.0, 0.1, wheelbase=2.8)
        expected = (10.0 / 2.8) * math.tan(0.1) * 0.1
        assert out.pose.psi == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.03584, abs=1e-5)

    def test_friction_scales_acceleration(self):
        ego = ego_at(v=10.0)
        out = step_dynamics(ego, ControlCommand(2.0, 0.0), 0.5, 0.1)
        assert out.v == pytest.approx(10.0 + 0.5 * 2.0 * 0.1)

    def test_non_positive_dt_rejected(self):
        with pytest.raises(ValueError):
            step_dynamics(ego_at(), ControlCommand(0.0, 0.0), 1.0, 0.0)

    def test_energy_free_kinematics(self):
        # No accel, no steer: speed and heading constant over many steps.
        ego = ego_at(psi=0.7, v=8.0)
        for _ in range(500):
            ego = step_dynamics(ego, ControlCommand(0.0, 0.0), 0.3, 0.01)
        assert ego.v == pytest.approx(8.0)
        assert ego.pose.psi == pytest.approx(0.7)

    def test_wrap_stays_in_range_under_constant_left_turn(self):
        ego = ego_at(v=5.0)
        for _ in range(5000):
            ego = step_dynamics(ego, ControlCommand(0.0, 0.4), 1.0, 0.01)
            assert -math.pi < ego.pose.psi <= math.pi


class TestActors:
    def test_constant_velocity(self):
        actor = Actor("a", "car", Pose(0, 0, 0), v=2.0)
        (out,) = step_actors([actor], 1.0)
        assert out.pose.x == pytest.approx(2.0)

    def test_empty_list(self):
        assert step_actors([], 0.5) == ()

    def test_script_straddling_switch_integrates_piecewise(self):
        # v=1 until t=5, then v=3: over [0, 6] the hand integral is 5 + 3.
        actor = Actor(
            "a",
            "car",
            Pose(0, 0, 0),
            v=1.0,
            script=(ScriptSegment(0.0, 1.0, 0.0), ScriptSegment(5.0, 3.0, 0.0)),
        )
        (out,) = step_actors([actor], 6.0)
        assert out.pose.x == pytest.approx(8.0)
        assert out.v == 3.0

    def test_many_small_steps_match_one_big_step(self):
        script = (ScriptSegment(0.0, 1.0, 0.0), ScriptSegment(0.55, 4.0, 0.5))
        one = Actor("a", "car", Pose(0, 0, 0), v=1.0, script=script)
        many = one
        (one,) = step_actors([one], 1.0)
        for _ in range(100):
            (many,) = step_actors([many], 0.01)
        assert many.pose.x == pytest.approx(one.pose.x, abs=1e-9)
        assert many.pose.y == pytest.approx(one.pose.y, abs=1e-9)

    def test_holds_last_segment_past_script_end(self):
        actor = Actor("a", "car", Pose(0, 0, 0), v=1.0, script=(ScriptSegment(1.0, 2.0, 0.0),))
        (out,) = step_actors([actor], 10.0)
        assert out.pose.x == pytest.approx(1.0 + 9.0 * 2.0)

    def test_script_times_must_increase(self):
        with pytest.raises(ValueError):
            Actor(
                "a", "car", Pose(0, 0, 0), v=1.0,
                script=(ScriptSegment(1.0, 2.0, 0.0), ScriptSegment(1.0, 1.0, 0.0)),
            )


def clear_weather(**overrides):
    return Weather.preset("clear", **overrides)


class TestSense:
    def world_with(self, *positions, t=0.0):
        actors = tuple(
            Actor(f"a{i}", "car", Pose(x, y, 0.0), v=0.0)
            for i, (x, y) in enumerate(positions)
        )
        return WorldState(actors=actors, weather=clear_weather(), t_virtual=t)

    def test_identity_weather_returns_ground_truth(self):
        world = self.world_with((20.0, 1.0), (40.0, -2.0))
        frame = sense(world, ego_at(), clear_weather(), np.random.default_rng(0))
        assert len(frame.truth_objects) == 2
        assert frame.truth_objects[0].rel_x == pytest.approx(20.0)
        assert frame.truth_objects[0].rel_y == pytest.approx(1.0)

    def test_full_dropout_empties_frame(self):
        world = self.world_with((20.0, 0.0))
        weather = clear_weather(dropout_p=1.0)
        frame = sense(world, ego_at(), weather, np.random.default_rng(0))
        assert frame.truth_objects == ()

    def test_dropout_count_in_binomial_interval(self):
        # p=0.5, 1000 trials: 99.9% interval computed ahead of the test.
        world = self.world_with((20.0, 0.0))
        weather = clear_weather(dropout_p=0.5)
        rng = np.random.default_rng(123)
        kept = sum(
            len(sense(world, ego_at(), weather, rng).truth_objects) for _ in range(1000)
        )
        assert 440 <= kept <= 560

    def test_visibility_bound_is_sound(self):
        weather = clear_weather(visibility=30.0)
        world = self.world_with((29.0, 0.0), (31.0, 0.0), (120.0, 3.0))
        frame = sense(world, ego_at(), weather, np.random.default_rng(0))
        assert len(frame.truth_objects) == 1
        assert math.hypot(frame.truth_objects[0].rel_x, frame.truth_objects[0].rel_y) <= 30.0

    def test_rear_objects_outside_fov(self):
        world = self.world_with((-10.0, 0.0), (10.0, 0.0))
        frame = sense(world, ego_at(), clear_weather(), np.random.default_rng(0))
        assert len(frame.truth_objects) == 1
        assert frame.truth_objects[0].rel_x > 0

    def test_equal_seeds_reproduce_frames(self):
        world = self.world_with((20.0, 1.0), (15.0, -3.0))
        weather = clear_weather(dropout_p=0.3, pos_noise_sigma=0.5)
        a = sense(world, ego_at(), weather, np.random.default_rng(99))
        b = sense(world, ego_at(), weather, np.random.default_rng(99))
        assert a == b

    def test_frame_tag_carries_weather_hint(self):
        world = WorldState(actors=(), weather=Weather.preset("snow"), t_virtual=1.5)
        frame = sense(world, ego_at(), Weather.preset("snow"), np.random.default_rng(0))
        assert "snow" in frame.frame_tag.split("|")


class TestWeatherValidation:
    def test_presets_valid(self):
        for kind in ("clear", "rain", "snow", "fog"):
            Weather.preset(kind)

    @pytest.mark.parametrize(
        "overrides",
        [
            {"dropout_p": 1.5},
            {"friction": 0.0},
            {"friction": 1.2},
            {"visibility": 0.0},
            {"pos_noise_sigma": -0.1},
        ],
    )
    def test_bad_fields_rejected(self, overrides):
        with pytest.raises(ValueError):
            clear_weather(**overrides)
