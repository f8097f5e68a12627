import json
import os

import numpy as np
import pytest

from pde4dvar import ConfigError, ConfigNotFoundError, build_grid
from pde4dvar.config import (
    ExperimentConfig,
    load_config,
    parse,
    save_config,
    serialize,
)
from pde4dvar.twin import (
    build_problem,
    export_results,
    export_vector,
    generate_truth,
    load_vector,
    resolve_observation_nodes,
    run_assimilation,
    truth_field,
)


def base_config_dict(**overrides):
    raw = {
        "grid": {"dim": 1, "n": 16},
        "time": {"t_final": 0.1, "n_steps": 20},
        "diffusion": {"constant": 1.0},
        "nonlinearity": {"kind": "zero"},
        "observations": {"count": 5, "stride": 4, "noise_sigma": 0.0, "seed": 0},
        "covariance": {"variant": "scaled_identity", "alpha": 1.0},
        "background": {"kind": "truth"},
        "constraint": {"radius": 10.0, "beta": 6.5},
        "truth": {"kind": "sine_modes", "modes": [{"k": [1], "amplitude": 1.0}]},
        "optimizer": {"max_iters": 100, "kkt_tol": 1e-9, "init": "zero"},
        "ssc": {"enabled": False},
    }
    raw.update(overrides)
    return raw


def base_config(**overrides):
    return ExperimentConfig.from_dict(base_config_dict(**overrides))


class TestConfigParsing:
    def test_round_trip_identity(self):
        cfg = base_config()
        assert parse(serialize(cfg)) == cfg
        # and a second serialize gives identical text
        assert serialize(parse(serialize(cfg))) == serialize(cfg)

    def test_round_trip_all_variants(self):
        variants = [
            base_config_dict(
                nonlinearity={"kind": "eps_sin", "eps": 0.1},
                covariance={"variant": "laplacian", "gamma": 0.2},
                background={"kind": "perturbed", "sigma": 0.05, "seed": 3},
                truth={
                    "kind": "gaussian_bumps",
                    "bumps": [{"center": [0.4], "width": 0.1, "amplitude": 1.0}],
                },
            ),
            base_config_dict(
                grid={"dim": 2, "n": 6},
                observations={
                    "points": [[0.3, 0.4], [0.7, 0.6]],
                    "stride": 2,
                    "noise_sigma": 0.01,
                    "seed": 5,
                },
                truth={
                    "kind": "sine_modes",
                    "modes": [{"k": [1, 2], "amplitude": 0.7}],
                },
            ),
            base_config_dict(
                diffusion={"cells": [1.0] * 17},
                covariance={"variant": "diagonal", "weights": [1.0] * 16},
            ),
        ]
        for raw in variants:
            cfg = ExperimentConfig.from_dict(raw)
            assert parse(serialize(cfg)) == cfg

    def test_unknown_keys_rejected(self):
        raw = base_config_dict()
        raw["grid"]["m"] = 3
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(raw)
        raw = base_config_dict()
        raw["bogus_section"] = {}
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(raw)

    def test_missing_section_rejected(self):
        raw = base_config_dict()
        del raw["constraint"]
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(raw)

    def test_type_errors_named(self):
        raw = base_config_dict()
        raw["time"]["n_steps"] = 2.5
        with pytest.raises(ConfigError, match="time.n_steps"):
            ExperimentConfig.from_dict(raw)

    def test_exclusive_choices_enforced(self):
        with pytest.raises(ConfigError):
            base_config(diffusion={"constant": 1.0, "cells": [1.0, 1.0]})
        with pytest.raises(ConfigError):
            base_config(observations={"stride": 1})
        with pytest.raises(ConfigError):
            base_config(covariance={"variant": "scaled_identity", "gamma": 1.0})
        with pytest.raises(ConfigError):
            base_config(nonlinearity={"kind": "zero", "eps": 0.5})

    def test_bad_json_rejected(self):
        with pytest.raises(ConfigError):
            parse("{not json")

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(ConfigNotFoundError):
            load_config(str(tmp_path / "absent.json"))

    def test_save_load_round_trip(self, tmp_path):
        cfg = base_config()
        path = str(tmp_path / "cfg.json")
        save_config(cfg, path)
        assert load_config(path) == cfg

    def test_master_seed_derivation(self):
        cfg = base_config(
            background={"kind": "perturbed", "sigma": 0.1, "seed": 0}
        ).with_master_seed(100)
        assert cfg.observations.seed == 100
        assert cfg.background.seed == 101
        assert cfg.optimizer.seed == 102
        assert cfg.ssc.seed == 103


class TestTruthFamilies:
    def test_sine_modes_spot_values(self):
        grid = build_grid(2, 3)
        cfg = base_config(
            grid={"dim": 2, "n": 3},
            truth={"kind": "sine_modes", "modes": [{"k": [2, 1], "amplitude": 1.5}]},
        )
        u = truth_field(grid, cfg.truth)
        i = grid.flat_index((0, 1))  # x=0.25, y=0.5
        assert u[i] == pytest.approx(1.5 * np.sin(np.pi / 2), rel=1e-14)

    def test_gaussian_bump_spot_value(self):
        grid = build_grid(1, 9)
        cfg = base_config(
            truth={
                "kind": "gaussian_bumps",
                "bumps": [{"center": [0.5], "width": 0.2, "amplitude": 2.0}],
            }
        )
        u = truth_field(grid, cfg.truth)
        # node at x=0.3: exp(-(0.2^2)/(2*0.04)) = exp(-0.5)
        assert u[2] == pytest.approx(2.0 * np.exp(-0.5), rel=1e-12)

    def test_mode_dimension_mismatch(self):
        grid = build_grid(2, 3)
        cfg = base_config(
            truth={"kind": "sine_modes", "modes": [{"k": [1], "amplitude": 1.0}]}
        )
        with pytest.raises(ConfigError):
            truth_field(grid, cfg.truth)

    def test_file_family_round_trip(self, tmp_path):
        grid = build_grid(1, 8)
        values = np.linspace(-1, 1, 8)
        path = str(tmp_path / "u.csv")
        export_vector(values, path)
        cfg = base_config(
            grid={"dim": 1, "n": 8}, truth={"kind": "file", "path": path}
        )
        assert np.allclose(truth_field(grid, cfg.truth), values, rtol=1e-15)

    def test_file_family_missing(self):
        grid = build_grid(1, 8)
        cfg = base_config(truth={"kind": "file", "path": "/nonexistent/u.csv"})
        with pytest.raises(ConfigNotFoundError):
            truth_field(grid, cfg.truth)


class TestObservationPlacement:
    def test_equispaced_1d(self):
        grid = build_grid(1, 9)  # nodes at 0.1 .. 0.9
        cfg = base_config(
            grid={"dim": 1, "n": 9}, observations={"count": 4, "stride": 1}
        )
        plan = resolve_observation_nodes(grid, cfg.observations)
        # requested points at 0.2, 0.4, 0.6, 0.8 coincide with nodes
        assert np.array_equal(plan.node_indices, [1, 3, 5, 7])
        assert plan.max_snap_distance < 1e-12

    def test_equispaced_2d_grid_fill(self):
        grid = build_grid(2, 8)
        cfg = base_config(
            grid={"dim": 2, "n": 8}, observations={"count": 5, "stride": 1}
        )
        plan = resolve_observation_nodes(grid, cfg.observations)
        assert plan.node_indices.size == 5
        assert len(np.unique(plan.node_indices)) == 5

    def test_explicit_points_snap_distance(self):
        grid = build_grid(1, 9)
        cfg = base_config(
            observations={"points": [[0.33]], "stride": 1}
        )
        plan = resolve_observation_nodes(grid, cfg.observations)
        assert plan.node_indices[0] == 2
        assert plan.snap_distances[0] == pytest.approx(0.03, abs=1e-12)

    def test_colliding_points_rejected(self):
        grid = build_grid(1, 4)  # h = 0.2
        cfg = base_config(
            observations={"points": [[0.39], [0.41]], "stride": 1}
        )
        with pytest.raises(ConfigError):
            resolve_observation_nodes(grid, cfg.observations)

    def test_point_dimension_checked(self):
        grid = build_grid(2, 4)
        cfg = base_config(observations={"points": [[0.5]], "stride": 1})
        with pytest.raises(ConfigError):
            resolve_observation_nodes(grid, cfg.observations)


class TestGenerateTruth:
    def test_noiseless_values_exact(self):
        cfg = base_config()
        data = generate_truth(cfg)
        assert np.array_equal(data.values, data.clean_values)

    def test_same_seed_identical(self):
        cfg = base_config(
            observations={"count": 5, "stride": 4, "noise_sigma": 0.1, "seed": 42}
        )
        a = generate_truth(cfg)
        b = generate_truth(cfg)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, a.clean_values)

    def test_different_seed_differs(self):
        noisy = {"count": 5, "stride": 4, "noise_sigma": 0.1}
        a = generate_truth(base_config(observations=dict(noisy, seed=1)))
        b = generate_truth(base_config(observations=dict(noisy, seed=2)))
        assert not np.array_equal(a.values, b.values)

    def test_noise_std_statistics(self):
        # empirical std over ~10^4 samples within 5% of sigma
        sigma = 0.25
        cfg = base_config(
            grid={"dim": 1, "n": 50},
            time={"t_final": 0.1, "n_steps": 200},
            observations={"count": 50, "stride": 1, "noise_sigma": sigma, "seed": 7},
        )
        data = generate_truth(cfg)
        noise = data.values - data.clean_values
        assert noise.size == 10000
        assert abs(noise.std() - sigma) <= 0.05 * sigma

    def test_stride_without_observed_steps(self):
        cfg = base_config(observations={"count": 3, "stride": 50})
        with pytest.raises(ConfigError):
            generate_truth(cfg)

    def test_phase_tag_on_generation_error(self):
        cfg = base_config(observations={"points": [[0.39], [0.41]], "stride": 1})
        with pytest.raises(ConfigError) as err:
            generate_truth(cfg)
        assert err.value.phase == "generate"


class TestRunAssimilation:
    def test_convex_exact_data_recovery(self):
        cfg = base_config()
        result = run_assimilation(cfg)
        assert result.history.converged
        assert result.l2_relative_error <= 1e-6

    def test_fresh_cost_matches_reported(self):
        from pde4dvar import evaluate_cost_parts

        cfg = base_config(nonlinearity={"kind": "eps_sin", "eps": 0.05})
        result = run_assimilation(cfg)
        prob, _ = build_problem(cfg)
        fresh = evaluate_cost_parts(prob, result.u_star)
        assert result.cost_parts.total == fresh.total

    def test_perturbed_background_deterministic(self):
        cfg = base_config(background={"kind": "perturbed", "sigma": 0.1, "seed": 9})
        a = run_assimilation(cfg)
        b = run_assimilation(cfg)
        assert np.array_equal(a.background, b.background)
        assert np.array_equal(a.u_star, b.u_star)

    def test_ssc_report_present_when_enabled(self):
        cfg = base_config(ssc={"enabled": True, "n_directions": 6, "seed": 1})
        result = run_assimilation(cfg)
        assert result.ssc is not None
        assert result.ssc.certified

    def test_exports_byte_identical_across_runs(self, tmp_path):
        cfg = base_config(
            observations={"count": 5, "stride": 4, "noise_sigma": 0.02, "seed": 11},
            ssc={"enabled": True, "n_directions": 4},
        )
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        export_results(run_assimilation(cfg), str(out_a))
        export_results(run_assimilation(cfg), str(out_b))
        names = sorted(os.listdir(out_a))
        assert names == sorted(os.listdir(out_b))
        assert "result.json" in names and "history.csv" in names
        for name in names:
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_result_json_has_no_timings(self, tmp_path):
        cfg = base_config()
        result = run_assimilation(cfg)
        export_results(result, str(tmp_path))
        payload = json.loads((tmp_path / "result.json").read_text())
        assert "timings" not in json.dumps(payload)
        assert result.timings  # collected, but only for stdout reporting

    def test_vector_export_round_trip(self, tmp_path):
        values = np.array([1.5, -2.25, 3.125e-7])
        for fmt in ("csv", "json"):
            path = str(tmp_path / f"v.{fmt}")
            export_vector(values, path, fmt)
            assert np.array_equal(load_vector(path), values)
