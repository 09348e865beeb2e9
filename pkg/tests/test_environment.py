import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qnav.environment import (
    LIDAR_DIRECTIONS,
    Action,
    DrivingEnv,
    EnvConfig,
    WorldState,
    lidar_rays,
    render_frames,
    reset,
    step,
)
from qnav.errors import ConfigError, StepAfterDone
from qnav.fusion import DEFAULT_DIMS, Modality

QUIET = EnvConfig(obstacle_density=0.0, weather_factor=0.0)


def world(grid, lane=1, position=0, speed=1, config=QUIET):
    grid = np.asarray(grid, dtype=bool)
    config = dataclasses.replace(config, lanes=grid.shape[0], length=grid.shape[1])
    return WorldState(config, grid, lane, position, speed, rng_seed=0)


def march(grid, lane, position, direction, max_range):
    """Independent ray march: step cell by cell until an obstacle or the grid edge."""
    dl, dp = direction
    lanes, length = grid.shape
    for k in range(1, max_range + 1):
        l, p = lane + k * dl, position + k * dp
        if not (0 <= l < lanes and 0 <= p < length):
            return 1.0
        if grid[l, p]:
            return k / max_range
    return 1.0


def frames_equal(a, b):
    return all(x.modality == y.modality and x.timestamp_us == y.timestamp_us and np.array_equal(x.values, y.values)
               for x, y in zip(a, b))


class TestReset:
    def test_deterministic(self):
        a, b = reset(EnvConfig(), 17), reset(EnvConfig(), 17)
        assert np.array_equal(a.state.grid, b.state.grid)
        assert frames_equal(a.frames, b.frames)
        assert (a.reward, a.done) == (b.reward, b.done)

    def test_seeds_differ(self):
        assert not np.array_equal(reset(EnvConfig(), 1).state.grid, reset(EnvConfig(), 2).state.grid)

    def test_frame_shapes(self):
        frames = reset(EnvConfig(), 0).frames
        assert [f.modality for f in frames] == list(Modality)
        assert {f.modality: f.values.size for f in frames} == DEFAULT_DIMS

    @pytest.mark.parametrize("field,value", [("obstacle_density", 0.5), ("lanes", 2), ("length", 5),
                                             ("weather_factor", 1.5), ("start_speed", 3)])
    def test_invalid_config(self, field, value):
        with pytest.raises(ConfigError, match=field):
            reset(dataclasses.replace(EnvConfig(), **{field: value}), 0)

    def test_safe_zone_and_goal_row_clear(self):
        for seed in range(20):
            grid = reset(EnvConfig(obstacle_density=0.3), seed).state.grid
            assert not grid[:, :4].any() and not grid[:, -1].any()


class TestStep:
    def test_keep_lane_reward(self):
        result = step(reset(QUIET, 0).state, Action.KEEP_LANE)
        assert result.reward == pytest.approx(0.9)
        assert not result.done

    def test_collision(self):
        grid = np.zeros((3, 30), dtype=bool)
        grid[1, 1] = True
        result = step(world(grid), Action.KEEP_LANE)
        assert result.collision and result.done
        assert result.reward == pytest.approx(-20 - 0.1)

    def test_steer_into_obstacle(self):
        grid = np.zeros((3, 30), dtype=bool)
        grid[0, 0] = True
        result = step(world(grid), Action.STEER_LEFT)
        assert result.collision and result.cells_advanced == 0

    def test_goal(self):
        result = step(world(np.zeros((3, 30), dtype=bool), position=28), Action.KEEP_LANE)
        assert result.goal_reached and result.done
        assert result.reward == pytest.approx(1 + 50 - 0.1)

    def test_speed_two_hits_second_cell(self):
        grid = np.zeros((3, 30), dtype=bool)
        grid[1, 2] = True
        result = step(world(grid, speed=1), Action.ACCELERATE)
        assert result.collision and result.cells_advanced == 1
        assert result.reward == pytest.approx(1 - 20 - 0.1)

    def test_step_after_done(self):
        result = step(world(np.zeros((3, 30), dtype=bool), position=28), Action.KEEP_LANE)
        with pytest.raises(StepAfterDone):
            step(result.state, Action.KEEP_LANE)

    def test_lane_and_speed_clamped(self):
        state = world(np.zeros((3, 30), dtype=bool), lane=0, speed=0)
        after = step(state, Action.STEER_LEFT).state
        assert after.lane == 0
        assert step(after, Action.BRAKE).state.speed == 0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.lists(st.sampled_from(list(Action)), min_size=1, max_size=80))
    def test_empty_road_never_collides(self, seed, actions):
        result = reset(dataclasses.replace(EnvConfig(), obstacle_density=0.0), seed)
        for a in actions:
            if result.done:
                break
            result = step(result.state, a)
            assert not result.collision

    def test_wrapper_matches_functions(self):
        env = DrivingEnv(EnvConfig())
        first = env.reset(3)
        second = env.step(Action.ACCELERATE)
        expected = step(reset(EnvConfig(), 3).state, Action.ACCELERATE)
        assert frames_equal(first.frames, reset(EnvConfig(), 3).frames)
        assert frames_equal(second.frames, expected.frames) and second.reward == expected.reward


class TestSensors:
    def test_empty_grid_lidar_all_clear(self):
        frames = render_frames(world(np.zeros((3, 30), dtype=bool), position=10))
        np.testing.assert_array_equal(frames[Modality.LIDAR].values, np.ones(8))

    def test_adjacent_obstacle(self):
        grid = np.zeros((3, 30), dtype=bool)
        grid[1, 11] = True
        rays = lidar_rays(world(grid, position=10))
        assert rays[0] == 1 / QUIET.lidar_range

    def test_lidar_matches_ray_march(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            grid = rng.random((3, 20)) < 0.3
            lane, pos = int(rng.integers(3)), int(rng.integers(20))
            rays = lidar_rays(world(grid, lane=lane, position=pos))
            expected = [march(grid, lane, pos, d, QUIET.lidar_range) for d in LIDAR_DIRECTIONS]
            np.testing.assert_array_equal(rays, expected)

    def test_noise_free_without_weather(self):
        a = reset(dataclasses.replace(EnvConfig(), weather_factor=0.0), 5).frames
        b = reset(dataclasses.replace(EnvConfig(), weather_factor=0.0), 5).frames
        assert frames_equal(a, b)
        assert a[Modality.WEATHER].values[1] == 0.0
        gps = a[Modality.GPS].values
        np.testing.assert_array_equal(gps, [0.5, 0.0, 0.5])

    def test_render_is_pure(self):
        result = step(reset(EnvConfig(), 4).state, Action.KEEP_LANE)
        assert frames_equal(result.frames, render_frames(result.state))

    def test_noise_scales_with_weather(self):
        def spread(weather):
            config = dataclasses.replace(EnvConfig(), obstacle_density=0.0, weather_factor=weather)
            state = reset(config, 0).state
            deltas = []
            for t in range(50):
                noisy = render_frames(dataclasses.replace(state, step_index=t))
                deltas.append(noisy[Modality.GPS].values - [0.5, 0.0, 0.5])
            return np.std(np.concatenate(deltas))

        assert spread(0.2) < spread(1.0)

    def test_camera_off_road_reads_occupied(self):
        frames = render_frames(world(np.zeros((3, 30), dtype=bool), lane=0, position=5))
        camera = frames[Modality.CAMERA].values
        np.testing.assert_array_equal(camera, [0, 0, 0, 0, 1, 1, 0, 0])

    def test_radar_reports_nearest_obstacle(self):
        grid = np.zeros((3, 30), dtype=bool)
        grid[1, 5] = True
        radar = render_frames(world(grid, position=1, speed=2))[Modality.RADAR].values
        np.testing.assert_allclose(radar, [1.0, 4 / 16, 0.0, 1.0])

    def test_timestamps_follow_ticks(self):
        result = reset(EnvConfig(), 0)
        result = step(result.state, Action.KEEP_LANE)
        assert all(f.timestamp_us == 50_000 for f in result.frames)
