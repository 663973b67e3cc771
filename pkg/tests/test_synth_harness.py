import numpy as np
import pytest

from src.core_model import ConfigError, TrackerConfig
from src.neighbor_graph import gcn_forward
from src.synth_harness import (
    TABLE_COLUMNS,
    WARMUP_FRAMES,
    ScenarioSpec,
    ablation_run,
    ablation_sweep,
    default_variants,
    fit_graph_model,
    generate,
    generate_scenario,
    summarize_sweep,
    training_graphs,
)


def max_cosines(prev_dets, dets):
    prev = np.array([d.embedding for d in prev_dets])
    cur = np.array([d.embedding for d in dets])
    return (cur @ prev.T).max(axis=1)


class TestGenerate:
    def test_deterministic(self):
        spec = ScenarioSpec(seed=7, frames=60, corruption=0.5, dropout=0.3, occlusions_per_target=1,
                            occlusion_length=5)
        assert generate(spec) == generate(spec)

    def test_different_seeds_differ(self):
        a = generate(ScenarioSpec(seed=1, frames=30))
        b = generate(ScenarioSpec(seed=2, frames=30))
        assert a[1] != b[1]

    def test_clean_embeddings_are_stable(self):
        scenario = generate_scenario(ScenarioSpec(seed=3, frames=40))
        frames = scenario.detections.frames
        for prev, cur in zip(frames, frames[1:]):
            assert np.all(max_cosines(prev, cur) >= 0.999)

    def test_embeddings_unit_norm(self):
        scenario = generate_scenario(ScenarioSpec(seed=3, frames=20, corruption=0.9,
                                                  occlusion_windows={"1": [[5, 10]]}))
        for dets in scenario.detections.frames:
            for det in dets:
                assert np.linalg.norm(det.embedding) == pytest.approx(1.0)

    def test_ground_truth_contiguous(self):
        spec = ScenarioSpec(seed=0, n_groups=2, group_size=3, frames=50)
        gt = generate_scenario(spec).ground_truth
        for _, rows in gt.groupby("id"):
            assert list(rows["frame"]) == list(range(1, 51))
            steps = np.diff(rows["left"].to_numpy())
            assert np.all(np.abs(steps) <= spec.speed + 1e-9)

    def test_detections_near_ground_truth(self):
        spec = ScenarioSpec(seed=5, frames=30)
        scenario = generate_scenario(spec)
        gt = scenario.ground_truth
        for frame, dets in enumerate(scenario.detections.frames, start=1):
            rows = gt[gt["frame"] == frame][["left", "top"]].to_numpy()
            for det in dets:
                offsets = np.abs(rows - [det.box.left, det.box.top]).max(axis=1)
                assert offsets.min() <= spec.box_jitter + 1e-9

    def test_nearest_neighbors_are_groupmates(self):
        spec = ScenarioSpec(seed=2, n_groups=3, group_size=5, frames=10)
        gt = generate_scenario(spec).ground_truth
        rows = gt[gt["frame"] == 5]
        centers = rows[["left", "top"]].to_numpy()
        group = (rows["id"].to_numpy() - 1) // spec.group_size
        for i in range(len(rows)):
            dist = np.linalg.norm(centers - centers[i], axis=1)
            nearest = [j for j in np.argsort(dist, kind="stable") if j != i][:4]
            assert all(group[j] == group[i] for j in nearest)

    def test_dropout_only_inside_windows(self):
        spec = ScenarioSpec(seed=1, frames=40, dropout=1.0, occlusion_windows={"2": [[10, 14]]})
        scenario = generate_scenario(spec)
        counts = [len(dets) for dets in scenario.detections.frames]
        assert counts[8] == spec.n_targets
        assert all(counts[f - 1] == spec.n_targets - 1 for f in range(10, 15))
        assert counts[14] == spec.n_targets

    def test_header_name(self):
        scenario = generate_scenario(ScenarioSpec(seed=11, frames=5, embedding_dim=6))
        assert scenario.detections.name == "synth-11"
        assert scenario.detections.dim == 6


class TestOcclusionWindows:
    def test_one_occluded_member_per_group(self):
        spec = ScenarioSpec(seed=9, occlusions_per_target=1, occlusion_length=15)
        scenario = generate_scenario(spec)
        assert sum(len(w) for w in scenario.windows.values()) == spec.n_targets
        for g in range(spec.n_groups):
            members = range(g * spec.group_size + 1, (g + 1) * spec.group_size + 1)
            for frame in range(1, spec.frames + 1):
                assert sum(scenario.occluded(t, frame) for t in members) <= 1

    def test_windows_inside_sequence(self):
        spec = ScenarioSpec(seed=4, occlusions_per_target=1)
        for intervals in generate_scenario(spec).windows.values():
            for start, end in intervals:
                assert 1 <= start <= end <= spec.frames
                assert end - start + 1 == spec.occlusion_length

    def test_short_sequence_allows_overlap(self):
        spec = ScenarioSpec(seed=7, frames=60, occlusions_per_target=1, occlusion_length=5)
        windows = generate_scenario(spec).windows
        assert sorted(windows) == list(range(1, spec.n_targets + 1))
        for intervals in windows.values():
            assert len(intervals) == 1
            for start, end in intervals:
                assert WARMUP_FRAMES < start <= end <= spec.frames
                assert end - start + 1 == spec.occlusion_length

    def test_warmup_shrinks_for_very_short_sequences(self):
        spec = ScenarioSpec(seed=1, frames=12, occlusions_per_target=2, occlusion_length=10)
        for intervals in generate_scenario(spec).windows.values():
            for start, end in intervals:
                assert 1 <= start <= 3 and end <= spec.frames

    def test_window_longer_than_sequence(self):
        with pytest.raises(ConfigError) as excinfo:
            generate_scenario(ScenarioSpec(frames=10, occlusions_per_target=1, occlusion_length=11))
        assert excinfo.value.field == "occlusion_length"

    def test_explicit_windows(self):
        spec = ScenarioSpec(occlusion_windows={"3": [[30, 40]]})
        assert spec.occlusion_windows == {3: [(30, 40)]}
        assert generate_scenario(spec.replace(frames=50)).occluded(3, 35)

    def test_explicit_window_out_of_range(self):
        with pytest.raises(ConfigError):
            ScenarioSpec(occlusion_windows={"99": [[1, 2]]})


class TestScenarioSpec:
    def test_unknown_key(self):
        with pytest.raises(ConfigError) as excinfo:
            ScenarioSpec.from_dict({"seed": 1, "colour": "red"})
        assert excinfo.value.field == "colour"

    def test_invalid_corruption(self):
        with pytest.raises(ConfigError):
            ScenarioSpec(corruption=1.5)

    def test_replace(self):
        spec = ScenarioSpec(seed=1).replace(seed=2)
        assert spec.seed == 2 and spec.frames == 200


class TestFitGraphModel:
    SPEC = ScenarioSpec(seed=0, group_size=4, embedding_dim=8, corruption=0.9)
    CONFIG = TrackerConfig(gcn_layer_dims=[8, 16, 16, 2048])

    def test_training_pairs_share_label(self):
        graphs, labels = training_graphs(self.SPEC, self.CONFIG, n_pairs=3, seed=1)
        assert len(graphs) == len(labels) == 6
        for i in range(0, 6, 2):
            np.testing.assert_array_equal(labels[i], labels[i + 1])
            assert labels[i].shape == (2048,) and labels[i].min() > 0
            assert graphs[i].n_real_neighbors == 3 and graphs[i].n_nodes == 5

    def test_corrupted_target_only_in_detection_graph(self):
        graphs, _ = training_graphs(self.SPEC, self.CONFIG, n_pairs=4, seed=2)
        for track_graph, det_graph in zip(graphs[::2], graphs[1::2]):
            clean = track_graph.features[0] @ det_graph.features[0]
            mates = track_graph.features[1:4] @ det_graph.features[1:4].T
            assert clean < 0.95
            assert np.all(np.diag(mates) > 0.99)

    def test_graph_dropped_rejected(self):
        with pytest.raises(ConfigError):
            training_graphs(self.SPEC, TrackerConfig(K=0), n_pairs=1)

    def test_fit_reduces_loss(self):
        model, history = fit_graph_model(self.SPEC, self.CONFIG, seed=0, n_pairs=8, n_steps=60, step=0.1)
        assert model.dims == [8, 16, 16, 2048]
        assert len(history) == 61
        assert history[-1] < history[0]

    def test_fit_is_deterministic(self):
        a, _ = fit_graph_model(self.SPEC, self.CONFIG, seed=3, n_pairs=2, n_steps=5)
        b, _ = fit_graph_model(self.SPEC, self.CONFIG, seed=3, n_pairs=2, n_steps=5)
        graphs, _ = training_graphs(self.SPEC, self.CONFIG, n_pairs=1, seed=4)
        np.testing.assert_array_equal(gcn_forward(graphs[0], a), gcn_forward(graphs[0], b))

    def test_dims_must_match_scenario(self):
        with pytest.raises(ConfigError):
            fit_graph_model(self.SPEC, TrackerConfig(gcn_layer_dims=[4, 8, 2048]), n_steps=1)


class TestAblation:
    def test_clean_scenario_is_perfect_for_all_variants(self):
        table = ablation_run(ScenarioSpec(seed=0, frames=80))
        assert list(table.index) == ["full", "strict", "baseline"]
        for col in TABLE_COLUMNS:
            assert col in table.columns
        assert (table["IDS"] == 0).all()
        assert (table["MOTA"] >= 0.99).all()

    def test_sweep_shape_and_medians(self):
        spec = ScenarioSpec(n_groups=1, group_size=3, frames=40)
        sweep = ablation_sweep(spec, default_variants(), seeds=[0, 1])
        assert len(sweep) == 6
        assert set(sweep["variant"]) == {"full", "strict", "baseline"}
        summary = summarize_sweep(sweep)
        assert list(summary.columns) == TABLE_COLUMNS
        assert list(summary.index) == ["full", "strict", "baseline"]

    def test_empty_variants_rejected(self):
        with pytest.raises(ConfigError):
            ablation_run(ScenarioSpec(frames=10), {})

    def test_fitted_model_used_for_its_variant(self):
        spec = ScenarioSpec(seed=2, n_groups=2, group_size=3, frames=40, embedding_dim=4,
                            corruption=0.9, occlusion_windows={"1": [[25, 30]]})
        config = TrackerConfig(gcn_layer_dims=[4, 8, 16, 2048])
        model, _ = fit_graph_model(spec, config, n_pairs=4, n_steps=3)
        variants = {"strict": config, "baseline": TrackerConfig(second_round=False)}
        table = ablation_run(spec, variants, models={"strict": model})
        assert list(table.index) == ["strict", "baseline"]

    def test_model_for_unknown_variant_rejected(self):
        model, _ = fit_graph_model(ScenarioSpec(embedding_dim=4),
                                   TrackerConfig(gcn_layer_dims=[4, 8, 2048]), n_pairs=1, n_steps=1)
        with pytest.raises(ConfigError):
            ablation_run(ScenarioSpec(frames=10, embedding_dim=4), default_variants(), models={"other": model})

    @pytest.mark.slow
    def test_neighbor_cascade_beats_baseline_under_occlusion(self):
        spec = ScenarioSpec(corruption=0.9, occlusions_per_target=1)
        variants = default_variants()
        del variants["strict"]
        sweep = ablation_sweep(spec, variants, seeds=range(20))
        medians = summarize_sweep(sweep)
        assert medians.loc["full", "IDS"] <= 0.8 * medians.loc["baseline", "IDS"]
        assert medians.loc["full", "IDF1"] > medians.loc["baseline", "IDF1"]
