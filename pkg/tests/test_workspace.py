"""Feasibility-margin workspace tests: point evaluations, grid maps,
two-agent stacking, and export formats."""

import json
import math

import numpy as np
import pytest

from emnav.dynamics import PendulumParams
from emnav.magmodel import ActuationModel, get_model
from emnav.workspace import (
    FeasibilityMap,
    GridSpec,
    TaskSet,
    feasibility_margin_field,
    feasibility_margin_torque,
    max_feasible_standoff,
    workspace_map,
)

SLED = PendulumParams(dipole_magnitude=2.0, magnet_offset=0.02)


@pytest.fixture(scope="module")
def octomag():
    return get_model("octomag8")


@pytest.fixture(scope="module")
def navion():
    return get_model("navion3")


@pytest.fixture(scope="module")
def two_agent_maps(octomag):
    grid = GridSpec(x=(0.01, 0.09), y=(-0.04, 0.04), z=(0.0, 0.0), spacing=0.005)
    second = (-0.0325, 0.0, 0.0)
    torque = workspace_map(
        octomag, TaskSet("torque-box", tau_bar=0.002), grid, 16.0,
        params=SLED, second_agent=second,
    )
    fieldm = workspace_map(
        octomag, TaskSet("fixed-field", field_magnitude=0.025), grid, 16.0,
        params=SLED, second_agent=second,
    )
    return torque, fieldm


class TestTaskSet:
    def test_bad_kind(self):
        with pytest.raises(ValueError):
            TaskSet("force-box", tau_bar=1.0)

    def test_torque_needs_positive_bound(self):
        with pytest.raises(ValueError):
            TaskSet("torque-box", tau_bar=0.0)

    def test_field_needs_positive_magnitude(self):
        with pytest.raises(ValueError):
            TaskSet("fixed-field", field_magnitude=0.0)

    def test_describe(self):
        assert TaskSet("torque-box", tau_bar=0.01).describe() == {
            "kind": "torque-box", "tau_bar": 0.01,
        }


class TestGridSpec:
    def test_spacing_positive(self):
        with pytest.raises(ValueError):
            GridSpec(x=(0, 1), y=(0, 1), z=(0, 1), spacing=0.0)

    def test_lattice_counts(self):
        grid = GridSpec(x=(0.0, 0.01), y=(-0.01, 0.01), z=(0.0, 0.0), spacing=0.005)
        pos = grid.positions()
        assert pos.shape == (3 * 5 * 1, 3)
        np.testing.assert_allclose(grid.axis_values("x"), [0.0, 0.005, 0.01])
        assert np.all(pos[:, 2] == 0.0)

    def test_degenerate_axes_give_single_point(self):
        grid = GridSpec(x=(0.02, 0.02), y=(0.0, 0.0), z=(0.1, 0.1), spacing=0.002)
        pos = grid.positions()
        assert pos.shape == (1, 3)
        np.testing.assert_array_equal(pos[0], [0.02, 0.0, 0.1])

    def test_reversed_interval_is_empty(self):
        grid = GridSpec(x=(0.01, -0.01), y=(0.0, 0.0), z=(0.0, 0.0), spacing=0.002)
        assert grid.positions().shape == (0, 3)


class TestTorqueMargin:
    def test_center_feasible(self, octomag):
        fm = feasibility_margin_torque(
            octomag, (0.0, 0.0, 0.0), params=SLED, tau_bar=0.002, current_limit=16.0
        )
        assert 0.0 < fm <= 16.0

    def test_tight_limit_infeasible(self, octomag):
        fm = feasibility_margin_torque(
            octomag, (0.0, 0.0, 0.0), params=SLED, tau_bar=0.002, current_limit=0.01
        )
        assert fm < 0.0

    def test_margin_affine_in_limit(self, octomag):
        fm1 = feasibility_margin_torque(
            octomag, (0.01, 0.02, 0.0), params=SLED, tau_bar=0.002, current_limit=16.0
        )
        fm2 = feasibility_margin_torque(
            octomag, (0.01, 0.02, 0.0), params=SLED, tau_bar=0.002, current_limit=32.0
        )
        assert fm2 - fm1 == pytest.approx(16.0, abs=1e-12)

    def test_rank_deficient_gives_minus_inf(self):
        one_coil = ActuationModel.from_dict(
            {
                "name": "one",
                "coils": [
                    {"position": [0.0, 0.0, -0.2], "axis": [0.0, 0.0, 1.0],
                     "moment_per_ampere": 50.0}
                ],
            }
        )
        fm = feasibility_margin_torque(
            one_coil, (0.0, 0.0, 0.0), params=SLED, tau_bar=0.001, current_limit=16.0
        )
        assert fm == -math.inf

    def test_vertex_maximum_dominates_box_interior(self, octomag):
        # The worst-case current over the torque box is attained at a vertex
        # (linear map, convex norm); random interior tasks never exceed it.
        from emnav.alloc import composed_torque_map
        from emnav.magmodel import DipoleAgent

        agent = DipoleAgent(p=(0.02, -0.01, 0.01), dipole_magnitude=2.0)
        body_map = composed_torque_map(octomag, agent, SLED)[:2]
        pinv = np.linalg.pinv(body_map, rcond=1e-10)
        tau_bar = 0.002
        vertex_max = max(
            float(np.max(np.abs(pinv @ np.array([sx * tau_bar, sy * tau_bar]))))
            for sx in (-1.0, 1.0)
            for sy in (-1.0, 1.0)
        )
        rng = np.random.default_rng(0)
        samples = rng.uniform(-tau_bar, tau_bar, size=(1000, 2))
        sample_max = float(np.max(np.abs(samples @ pinv.T)))
        assert sample_max <= vertex_max + 1e-12

    def test_orientation_changes_margin_smoothly(self, octomag):
        fm0 = feasibility_margin_torque(
            octomag, (0.0, 0.0, 0.0), params=SLED, tau_bar=0.002, current_limit=16.0
        )
        fm1 = feasibility_margin_torque(
            octomag, (0.0, 0.0, 0.0), params=SLED, tau_bar=0.002, current_limit=16.0,
            orientation=(0.05, -0.03),
        )
        assert fm1 == pytest.approx(fm0, rel=0.05)
        assert fm1 != fm0


class TestFieldMargin:
    def test_zero_field_margin_is_limit(self, octomag):
        fm = feasibility_margin_field(
            octomag, (0.0, 0.0, 0.0), field_magnitude=0.0, current_limit=16.0
        )
        assert fm == 16.0

    def test_preset_calibration_center(self, octomag):
        # The 8-coil preset is tuned so ~15 A holds 65 mT at the center.
        fm = feasibility_margin_field(
            octomag, (0.0, 0.0, 0.0), field_magnitude=0.065, current_limit=16.0
        )
        assert fm == pytest.approx(1.0, abs=1e-9)

    def test_preset_calibration_navion(self, navion):
        fm = feasibility_margin_field(
            navion, (0.0, 0.0, 0.1), field_magnitude=0.025, current_limit=25.0
        )
        assert fm == pytest.approx(0.0, abs=1e-9)

    def test_scale_covariance(self, navion):
        p = (0.0, 0.0, 0.13)
        limit = 25.0
        fm1 = feasibility_margin_field(
            navion, p, field_magnitude=0.025, current_limit=limit
        )
        for c in (0.5, 2.0, 3.7):
            fmc = feasibility_margin_field(
                navion, p, field_magnitude=c * 0.025, current_limit=limit
            )
            assert fmc == pytest.approx(limit - c * (limit - fm1), abs=1e-12)

    def test_monotone_decay_along_standoff_axis(self, navion):
        zs = np.arange(0.12, 0.5, 0.02)
        fms = [
            feasibility_margin_field(
                navion, (0.0, 0.0, z), field_magnitude=0.025, current_limit=25.0
            )
            for z in zs
        ]
        assert all(a > b for a, b in zip(fms, fms[1:]))


class TestWorkspaceMap:
    def test_empty_grid_empty_map(self, octomag):
        grid = GridSpec(x=(0.01, -0.01), y=(0.0, 0.0), z=(0.0, 0.0), spacing=0.002)
        fmap = workspace_map(
            octomag, TaskSet("fixed-field", field_magnitude=0.025), grid, 16.0
        )
        assert fmap.positions.shape == (0, 3)
        assert fmap.fm.shape == (0,)
        assert fmap.feasible_count == 0

    def test_margin_never_exceeds_limit(self, two_agent_maps):
        torque, fieldm = two_agent_maps
        assert np.all(torque.fm <= 16.0)
        assert np.all(fieldm.fm <= 16.0)

    def test_two_agent_reference_counts(self, two_agent_maps):
        torque, fieldm = two_agent_maps
        assert torque.positions.shape[0] == 17 * 17
        assert torque.feasible_count == 289
        assert fieldm.feasible_count == 272

    def test_torque_map_contains_field_map(self, two_agent_maps):
        torque, fieldm = two_agent_maps
        assert np.all(~fieldm.feasible | torque.feasible)

    def test_two_agent_worst_current_demand(self, two_agent_maps):
        torque, _ = two_agent_maps
        worst = 16.0 - float(np.min(torque.fm))
        assert worst == pytest.approx(10.757489546, abs=1e-6)

    def test_mirror_symmetry(self, two_agent_maps):
        # The coil array and the fixed second agent are symmetric under
        # y -> -y, so mirrored grid points carry equal margins.
        for fmap in two_agent_maps:
            pos = fmap.positions
            order = np.lexsort((pos[:, 0], pos[:, 1]))
            mirror = np.lexsort((pos[:, 0], -pos[:, 1]))
            np.testing.assert_allclose(
                fmap.fm[order], fmap.fm[mirror], rtol=0.0, atol=1e-9
            )

    def test_near_contact_flagging(self, octomag):
        grid = GridSpec(x=(-0.04, -0.02), y=(0.0, 0.0), z=(0.0, 0.0), spacing=0.005)
        fmap = workspace_map(
            octomag, TaskSet("fixed-field", field_magnitude=0.025), grid, 16.0,
            second_agent=(-0.0325, 0.0, 0.0),
        )
        assert fmap.flags == (
            "near-contact", "near-contact", "near-contact", "near-contact", ""
        )

    def test_singular_points_flagged_infeasible(self):
        one_coil = ActuationModel.from_dict(
            {
                "name": "one",
                "coils": [
                    {"position": [0.0, 0.0, -0.2], "axis": [0.0, 0.0, 1.0],
                     "moment_per_ampere": 50.0}
                ],
            }
        )
        grid = GridSpec(x=(0.0, 0.0), y=(0.0, 0.0), z=(0.0, 0.0), spacing=0.01)
        fmap = workspace_map(
            one_coil, TaskSet("torque-box", tau_bar=0.001), grid, 16.0, params=SLED
        )
        assert fmap.fm[0] == -math.inf
        assert fmap.flags[0] == "singular"
        assert not fmap.feasible[0]

    def test_torque_map_requires_params(self, octomag):
        grid = GridSpec(x=(0.0, 0.0), y=(0.0, 0.0), z=(0.0, 0.0), spacing=0.01)
        with pytest.raises(ValueError, match="params"):
            workspace_map(octomag, TaskSet("torque-box", tau_bar=0.001), grid, 16.0)

    def test_workers_match_serial(self, octomag):
        grid = GridSpec(x=(0.01, 0.05), y=(-0.02, 0.02), z=(0.0, 0.0), spacing=0.01)
        task = TaskSet("torque-box", tau_bar=0.002)
        serial = workspace_map(
            octomag, task, grid, 16.0, params=SLED, second_agent=(-0.0325, 0.0, 0.0)
        )
        parallel = workspace_map(
            octomag, task, grid, 16.0, params=SLED,
            second_agent=(-0.0325, 0.0, 0.0), workers=2,
        )
        np.testing.assert_array_equal(serial.fm, parallel.fm)
        assert serial.flags == parallel.flags

    def test_navion_standoff_ordering(self, navion):
        grid = GridSpec(x=(0.0, 0.0), y=(0.0, 0.0), z=(0.105, 0.25), spacing=0.005)
        torque = workspace_map(
            navion, TaskSet("torque-box", tau_bar=0.01), grid, 25.0, params=SLED
        )
        fieldm = workspace_map(
            navion, TaskSet("fixed-field", field_magnitude=0.025), grid, 25.0
        )
        st = max_feasible_standoff(torque)
        sf = max_feasible_standoff(fieldm)
        assert st == pytest.approx(0.145, abs=1e-12)
        assert sf == pytest.approx(0.110, abs=1e-12)
        assert st > sf

    def test_standoff_none_when_infeasible(self, navion):
        grid = GridSpec(x=(0.0, 0.0), y=(0.0, 0.0), z=(0.4, 0.5), spacing=0.05)
        fmap = workspace_map(
            navion, TaskSet("fixed-field", field_magnitude=0.025), grid, 25.0
        )
        assert fmap.feasible_count == 0
        assert max_feasible_standoff(fmap) is None


class TestExport:
    def test_csv_schema_and_determinism(self, octomag, tmp_path):
        grid = GridSpec(x=(0.0, 0.01), y=(0.0, 0.0), z=(0.0, 0.0), spacing=0.005)
        fmap = workspace_map(
            octomag, TaskSet("fixed-field", field_magnitude=0.025), grid, 16.0
        )
        paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
        for p in paths:
            fmap.to_csv(p)
        text = paths[0].read_text()
        lines = text.splitlines()
        assert lines[0] == "x,y,z,fm,feasible,flag"
        assert len(lines) == 1 + 3
        assert paths[0].read_bytes() == paths[1].read_bytes()
        row = lines[1].split(",")
        assert float(row[3]) == fmap.fm[0]
        assert row[4] in ("0", "1")

    def test_empty_map_csv_header_only(self, octomag, tmp_path):
        grid = GridSpec(x=(0.01, -0.01), y=(0.0, 0.0), z=(0.0, 0.0), spacing=0.002)
        fmap = workspace_map(
            octomag, TaskSet("fixed-field", field_magnitude=0.025), grid, 16.0
        )
        out = tmp_path / "empty.csv"
        fmap.to_csv(out)
        assert out.read_text().splitlines() == ["x,y,z,fm,feasible,flag"]

    def test_metadata_sidecar(self, octomag, tmp_path):
        grid = GridSpec(x=(0.0, 0.0), y=(0.0, 0.0), z=(0.0, 0.0), spacing=0.01)
        fmap = workspace_map(
            octomag, TaskSet("torque-box", tau_bar=0.002), grid, 16.0,
            params=SLED, second_agent=(-0.0325, 0.0, 0.0),
        )
        out = tmp_path / "map.json"
        fmap.write_metadata(out)
        meta = json.loads(out.read_text())
        assert meta["model"] == "octomag8"
        assert meta["task"] == {"kind": "torque-box", "tau_bar": 0.002}
        assert meta["current_limit"] == 16.0
        assert meta["second_agent"] == [-0.0325, 0.0, 0.0]
        assert meta["total_points"] == 1
        assert not any("time" in k or "date" in k for k in meta)

    def test_infinite_margin_serializes(self, tmp_path):
        one_coil = ActuationModel.from_dict(
            {
                "name": "one",
                "coils": [
                    {"position": [0.0, 0.0, -0.2], "axis": [0.0, 0.0, 1.0],
                     "moment_per_ampere": 50.0}
                ],
            }
        )
        grid = GridSpec(x=(0.0, 0.0), y=(0.0, 0.0), z=(0.0, 0.0), spacing=0.01)
        fmap = workspace_map(
            one_coil, TaskSet("torque-box", tau_bar=0.001), grid, 16.0, params=SLED
        )
        out = tmp_path / "inf.csv"
        fmap.to_csv(out)
        row = out.read_text().splitlines()[1].split(",")
        assert float(row[3]) == -math.inf
        assert row[5] == "singular"
