import numpy as np
import pytest

from src.cascade_tracker import CascadeTracker, run_sequence, step, TrackerState
from src.core_model import ConfigError, InvalidInputError, TrackerConfig, TrackState
from src.io_formats import format_results
from src.neighbor_graph import init_model
from src.synth_harness import ScenarioSpec, generate_scenario

from conftest import make_box, make_detection, unit

DIM = 8
N_WALKERS = 5


def walker_frame(frame, corrupt_first=False):
    """Cinco co-walkers estáticos separados 60 px; el primero puede llegar corrupto"""
    dets = []
    for i in range(N_WALKERS):
        emb = unit(DIM, i)
        if i == 0 and corrupt_first:
            emb = 0.8 * unit(DIM, 0) + 0.6 * unit(DIM, 5)
        dets.append(make_detection(frame, make_box(60.0 * i, 0.0), emb))
    return dets


def rescue_frames():
    return [walker_frame(f) for f in range(1, 11)] + [walker_frame(11, corrupt_first=True)]


def ids(outputs):
    return [tid for tid, _ in outputs]


class TestStep:
    def test_empty_input_is_noop(self):
        tracker = CascadeTracker(TrackerConfig(second_round=False))
        assert tracker.step([]) == []
        assert tracker.state.frame == 1 and tracker.state.tracks == []

    def test_cold_start_assigns_sequential_ids(self):
        outputs = run_sequence(TrackerConfig(second_round=False), None, [walker_frame(1)[:3]])
        assert ids(outputs[0]) == [1, 2, 3]

    def test_perfect_match_keeps_id(self):
        frames = [[make_detection(f, make_box(100, 100), unit(DIM, 0))] for f in (1, 2)]
        outputs = run_sequence(TrackerConfig(second_round=False), None, frames)
        assert ids(outputs[1]) == [1]

    def test_round_two_rescues_corrupted_detection(self):
        config = TrackerConfig(tau2=0.7, embedding_dim=DIM)
        tracker = CascadeTracker(config, init_model(config.layer_dims(), 0))
        outputs = tracker.run(rescue_frames())
        last = tracker.frame_stats[-1]
        assert last.tau1_demoted == 1
        assert last.round2_kept == 1
        assert ids(outputs[-1]) == [1, 2, 3, 4, 5]
        assert tracker.state.next_id == N_WALKERS + 1

    def test_baseline_spawns_new_id_for_corrupted_detection(self):
        tracker = CascadeTracker(TrackerConfig(second_round=False))
        outputs = tracker.run(rescue_frames())
        assert ids(outputs[-1]) == [2, 3, 4, 5, 6]
        assert tracker.state.track_by_id(1).age_since_update == 1

    def test_k_zero_falls_back_to_raw_cosine(self):
        tracker = CascadeTracker(TrackerConfig(tau2=0.7, K=0))
        outputs = tracker.run(rescue_frames())
        stats = tracker.stats
        assert stats.round2_pairs == 1
        assert stats.graph_dropped == stats.round2_pairs
        assert ids(outputs[-1]) == [1, 2, 3, 4, 5]

    def test_unreachable_tau2_keeps_round_one_behaviour(self):
        config = TrackerConfig(tau2=1.0, embedding_dim=DIM)
        full = CascadeTracker(config, init_model(config.layer_dims(), 0)).run(rescue_frames())
        baseline = CascadeTracker(TrackerConfig(second_round=False)).run(rescue_frames())
        assert format_results(full) == format_results(baseline)

    def test_gated_pair_is_not_matched(self):
        frames = [[make_detection(1, make_box(0, 0), unit(DIM, 0))],
                  [make_detection(2, make_box(600, 0), unit(DIM, 0))]]
        outputs = run_sequence(TrackerConfig(second_round=False), None, frames)
        assert ids(outputs[1]) == [2]

    def test_round_two_respects_motion_gate(self):
        # El embedding llega limpio pero la caja salta 600 px fuera de la puerta
        far = [make_detection(11, make_box(0, 600), unit(DIM, 0))] + walker_frame(11)[1:]
        config = TrackerConfig(tau2=0.7, embedding_dim=DIM)
        tracker = CascadeTracker(config, init_model(config.layer_dims(), 0))
        outputs = tracker.run([walker_frame(f) for f in range(1, 11)] + [far])
        last = tracker.frame_stats[-1]
        assert last.round2_pairs == 0 and last.round2_kept == 0
        assert ids(outputs[-1]) == [2, 3, 4, 5, 6]
        assert tracker.state.track_by_id(1).state is TrackState.LOST

    def test_low_confidence_dropped(self):
        det = make_detection(1, make_box(0, 0), unit(DIM, 0), confidence=0.3)
        assert run_sequence(TrackerConfig(second_round=False), None, [[det]]) == [[]]

    def test_frame_regression_rejected(self):
        tracker = CascadeTracker(TrackerConfig(second_round=False))
        with pytest.raises(InvalidInputError):
            tracker.step([make_detection(2, make_box(0, 0), unit(DIM, 0))])

    def test_dimension_mismatch_rejected(self):
        tracker = CascadeTracker(TrackerConfig(second_round=False, embedding_dim=4))
        with pytest.raises(InvalidInputError):
            tracker.step([make_detection(1, make_box(0, 0), np.ones(3))])

    def test_second_round_needs_model(self):
        with pytest.raises(ConfigError):
            CascadeTracker(TrackerConfig())

    def test_module_level_step(self):
        state = TrackerState(config=TrackerConfig(second_round=False))
        state, outputs = step(state, walker_frame(1))
        assert state.frame == 1 and ids(outputs) == [1, 2, 3, 4, 5]
        state, outputs = step(state, walker_frame(2))
        assert state.frame == 2 and ids(outputs) == [1, 2, 3, 4, 5]


class TestLifecycle:
    def test_lost_track_is_reidentified(self):
        det = lambda f: [make_detection(f, make_box(50, 50), unit(DIM, 2))]
        frames = [det(1), det(2), [], [], [], det(6)]
        outputs = run_sequence(TrackerConfig(second_round=False), None, frames)
        assert outputs[2] == [] and ids(outputs[5]) == [1]

    def test_lost_track_rescued_by_round_two(self):
        config = TrackerConfig(tau2=0.7, embedding_dim=DIM)
        tracker = CascadeTracker(config, init_model(config.layer_dims(), 0))
        frames = ([walker_frame(f) for f in range(1, 11)]
                  + [walker_frame(11)[1:], walker_frame(12, corrupt_first=True)])
        outputs = tracker.run(frames)
        assert ids(outputs[-2]) == [2, 3, 4, 5]
        last = tracker.frame_stats[-1]
        assert last.tau1_demoted == 1 and last.round2_kept == 1
        assert ids(outputs[-1]) == [1, 2, 3, 4, 5]
        assert tracker.state.track_by_id(1).state is TrackState.ACTIVE
        assert tracker.state.next_id == N_WALKERS + 1

    def test_track_removed_after_max_age(self):
        tracker = CascadeTracker(TrackerConfig(second_round=False, max_age=2))
        tracker.run([[make_detection(1, make_box(0, 0), unit(DIM, 0))], [], [], []])
        assert tracker.state.tracks == []
        assert tracker.stats.tracks_removed == 1
        assert [s.tracks_removed for s in tracker.frame_stats] == [0, 0, 0, 1]


class TestSequence:
    def test_straight_line_keeps_single_id(self):
        frames = [[make_detection(f, make_box(10 + 2.0 * f, 50 + 0.5 * f), unit(DIM, 3))]
                  for f in range(1, 101)]
        outputs = run_sequence(TrackerConfig(second_round=False), None, frames)
        assert {tid for out in outputs for tid, _ in out} == {1}

    def test_deterministic(self):
        config = TrackerConfig(tau2=0.7, embedding_dim=DIM)
        first = run_sequence(config, init_model(config.layer_dims(), 3), rescue_frames())
        second = run_sequence(config, init_model(config.layer_dims(), 3), rescue_frames())
        assert format_results(first) == format_results(second)

    def test_new_ids_equal_unmatched_detections(self):
        spec = ScenarioSpec(seed=4, n_groups=2, group_size=3, frames=120, embedding_dim=16,
                            corruption=0.9, dropout=0.2, occlusions_per_target=1, occlusion_length=10)
        scenario = generate_scenario(spec)
        tracker = CascadeTracker(TrackerConfig(second_round=False))
        outputs = tracker.run(scenario.detections.frames)
        seen = set()
        for out, stats in zip(outputs, tracker.frame_stats):
            new_ids = {tid for tid, _ in out} - seen
            assert len(new_ids) == stats.tracks_created
            seen |= new_ids
