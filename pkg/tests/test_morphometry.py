"""Caliber summaries, annulus clipping, and vessel routing."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vasculometry import (
    Annulus,
    DiscGeometry,
    InputError,
    WidthSample,
    annulus_from_disc,
    annulus_subgraph,
    avr,
    knudtson_equivalent,
    load_disc,
    route_vessels,
    save_disc,
    segment_width,
    top_k_by_label,
)
from vasculometry.raster import distance_transform
from vasculometry.topology import VesselGraph, VesselSegment

from conftest import build_graph
from oracles import caliber_pairing

width_lists = st.lists(
    st.floats(min_value=1.0, max_value=20.0, allow_nan=False), min_size=1, max_size=8
)


class TestDiscGeometry:
    def test_valid(self):
        d = DiscGeometry(50.0, 40.0, 30.0)
        assert (d.cx, d.cy, d.diameter) == (50.0, 40.0, 30.0)

    def test_bad_diameter(self):
        for bad in (0.0, -5.0, math.nan, math.inf):
            with pytest.raises(InputError):
                DiscGeometry(10.0, 10.0, bad)

    def test_bad_center(self):
        with pytest.raises(InputError):
            DiscGeometry(math.nan, 10.0, 5.0)
        with pytest.raises(InputError):
            DiscGeometry(10.0, math.inf, 5.0)

    def test_roundtrip(self, tmp_path):
        d = DiscGeometry(33.5, 21.0, 18.25)
        save_disc(tmp_path / "disc.json", d)
        back = load_disc(tmp_path / "disc.json")
        assert back == d

    def test_load_missing(self, tmp_path):
        with pytest.raises(InputError):
            load_disc(tmp_path / "nope.json")

    def test_load_malformed(self, tmp_path):
        (tmp_path / "bad.json").write_text("{not json")
        with pytest.raises(InputError):
            load_disc(tmp_path / "bad.json")
        (tmp_path / "missing.json").write_text(json.dumps({"cx": 1.0, "cy": 2.0}))
        with pytest.raises(InputError):
            load_disc(tmp_path / "missing.json")


class TestAnnulus:
    def test_validation(self):
        with pytest.raises(InputError):
            Annulus(0, 0, 10.0, 10.0)
        with pytest.raises(InputError):
            Annulus(0, 0, 12.0, 10.0)
        with pytest.raises(InputError):
            Annulus(0, 0, 0.0, 10.0)

    def test_from_disc(self):
        a = annulus_from_disc(DiscGeometry(40.0, 50.0, 20.0), (1.0, 1.5))
        assert (a.cx, a.cy) == (40.0, 50.0)
        assert a.r_inner == 20.0
        assert a.r_outer == 30.0

    def test_to_json(self):
        a = Annulus(1.0, 2.0, 3.0, 4.0)
        assert a.to_json() == {"cx": 1.0, "cy": 2.0, "r_inner": 3.0, "r_outer": 4.0}


class TestSegmentWidth:
    def test_band_width_exact(self):
        mask = np.zeros((9, 30), dtype=bool)
        mask[2:7, :] = True
        dist = distance_transform(mask)
        path = np.array([[4, c] for c in range(5, 21)])
        seg = VesselSegment(id=0, node_ids=[0, 1], path=path, arc=15.0, chord=15.0)
        assert segment_width(seg, dist) == pytest.approx(6.0)

    def test_short_path_none(self):
        path = np.array([[2, 2], [2, 3], [2, 4]])
        seg = VesselSegment(id=0, node_ids=[0, 1], path=path, arc=2.0, chord=2.0)
        assert segment_width(seg, np.ones((5, 7))) is None

    def test_off_mask_zero(self):
        path = np.array([[1, c] for c in range(10)])
        seg = VesselSegment(id=0, node_ids=[0, 1], path=path, arc=9.0, chord=9.0)
        assert segment_width(seg, np.zeros((4, 12))) == 0.0

    def test_quarter_point_sampling(self):
        dist = np.full((5, 101), 9.0)
        dist[2, 25], dist[2, 50], dist[2, 75] = 2.0, 3.0, 4.0
        path = np.array([[2, c] for c in range(101)])
        seg = VesselSegment(id=0, node_ids=[0, 1], path=path, arc=100.0, chord=100.0)
        assert segment_width(seg, dist) == pytest.approx(6.0)


class TestKnudtson:
    def test_three_four_five(self):
        assert knudtson_equivalent([4.0, 3.0], 0.88) == pytest.approx(0.88 * 5.0)

    def test_single_width_unchanged(self):
        assert knudtson_equivalent([7.3], 0.88) == 7.3
        assert knudtson_equivalent([7.3], 0.95) == 7.3

    def test_six_equal_widths(self):
        got = knudtson_equivalent([10.0] * 6, 0.88)
        assert got == pytest.approx(caliber_pairing([10.0] * 6, 0.88), rel=1e-12)
        assert 17.0 < got < 18.0

    @settings(max_examples=300)
    @given(width_lists, st.sampled_from([0.88, 0.95]))
    def test_matches_oracle(self, ws, scale):
        assert knudtson_equivalent(ws, scale) == pytest.approx(
            caliber_pairing(ws, scale), rel=1e-12
        )

    @settings(max_examples=200)
    @given(width_lists, st.randoms(use_true_random=False))
    def test_permutation_invariant(self, ws, rnd):
        shuffled = list(ws)
        rnd.shuffle(shuffled)
        assert knudtson_equivalent(shuffled, 0.88) == knudtson_equivalent(ws, 0.88)

    @settings(max_examples=200)
    @given(width_lists, st.floats(min_value=0.1, max_value=10.0, allow_nan=False))
    def test_homogeneous_of_degree_one(self, ws, s):
        scaled = [s * w for w in ws]
        assert knudtson_equivalent(scaled, 0.95) == pytest.approx(
            s * knudtson_equivalent(ws, 0.95), rel=1e-9
        )

    @settings(max_examples=200)
    @given(width_lists, st.data())
    def test_monotone_in_each_width(self, ws, data):
        i = data.draw(st.integers(min_value=0, max_value=len(ws) - 1))
        bump = data.draw(st.floats(min_value=0.0, max_value=5.0, allow_nan=False))
        bigger = list(ws)
        bigger[i] += bump
        assert knudtson_equivalent(bigger, 0.88) >= knudtson_equivalent(ws, 0.88) - 1e-12

    def test_validation(self):
        with pytest.raises(InputError):
            knudtson_equivalent([], 0.88)
        with pytest.raises(InputError):
            knudtson_equivalent([3.0, 0.0], 0.88)
        with pytest.raises(InputError):
            knudtson_equivalent([3.0, -1.0], 0.88)
        with pytest.raises(InputError):
            knudtson_equivalent([3.0, math.nan], 0.88)
        with pytest.raises(InputError):
            knudtson_equivalent([3.0], 0.0)


class TestAvr:
    def test_worked_example(self):
        expect = caliber_pairing([4.0, 3.0], 0.88) / caliber_pairing([5.0, 4.0], 0.95)
        assert avr([4.0, 3.0], [5.0, 4.0]) == pytest.approx(expect, rel=1e-12)
        assert avr([4.0, 3.0], [5.0, 4.0]) == pytest.approx(0.7233, abs=5e-4)

    def test_identical_pairs_give_scale_ratio(self):
        assert avr([10.0, 10.0], [10.0, 10.0]) == pytest.approx(0.88 / 0.95, rel=1e-12)

    def test_identical_singletons_give_one(self):
        assert avr([8.0], [8.0]) == pytest.approx(1.0)

    def test_truncates_to_common_count(self):
        arteries = [9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0]
        veins = [10.0, 9.5, 9.0]
        assert avr(arteries, veins) == avr(arteries[:3], veins)

    def test_truncates_to_top_six(self):
        arteries = [9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 1.0, 1.0]
        veins = [11.0, 10.0, 9.0, 8.0, 7.0, 6.0, 1.0, 1.0]
        assert avr(arteries, veins) == avr(arteries[:6], veins[:6])

    @settings(max_examples=150)
    @given(width_lists, width_lists,
           st.floats(min_value=0.1, max_value=10.0, allow_nan=False))
    def test_scale_invariant(self, arts, veins, s):
        got = avr([s * w for w in arts], [s * w for w in veins])
        assert got == pytest.approx(avr(arts, veins), rel=1e-9)

    def test_empty_side_rejected(self):
        with pytest.raises(InputError):
            avr([], [5.0])
        with pytest.raises(InputError):
            avr([5.0], [])


class TestTopKByLabel:
    def _paths(self, n):
        path = np.array([[0, 0], [0, 1]])
        return [VesselSegment(id=i, node_ids=[0, 1], path=path, arc=1.0, chord=1.0)
                for i in range(n)]

    def test_partition_and_order(self):
        paths = self._paths(5)
        widths = [
            WidthSample(0, 4.0, "artery"),
            WidthSample(1, 6.0, "vein"),
            WidthSample(2, 9.0, "artery"),
            WidthSample(3, 2.0, "unknown"),
            WidthSample(4, 5.0, "vein"),
        ]
        arteries, veins = top_k_by_label(paths, widths)
        assert arteries == [9.0, 4.0]
        assert veins == [6.0, 5.0]

    def test_truncation(self):
        paths = self._paths(8)
        widths = [WidthSample(i, float(10 - i), "artery") for i in range(8)]
        arteries, veins = top_k_by_label(paths, widths, k=3)
        assert arteries == [10.0, 9.0, 8.0]
        assert veins == []

    def test_unknown_path_id_rejected(self):
        with pytest.raises(InputError):
            top_k_by_label(self._paths(1), [WidthSample(5, 3.0, "artery")])

    def test_bad_k(self):
        with pytest.raises(InputError):
            top_k_by_label(self._paths(1), [], k=0)

    def test_width_sample_validation(self):
        for bad in (0.0, -2.0, math.nan, math.inf):
            with pytest.raises(InputError):
                WidthSample(0, bad, "artery")


class TestAnnulusSubgraph:
    def test_crossing_segment_cut_into_spanning_pieces(self):
        path = np.array([[50, c] for c in range(20, 81)])
        vg = build_graph([path])
        sub = annulus_subgraph(vg, Annulus(50.0, 50.0, 10.0, 20.0))
        assert len(sub.segments) == 2
        by_id = sub.node_by_id()
        for s in sub.segments:
            circles = sorted(by_id[n].on_circle or "" for n in s.endpoints())
            assert circles == ["inner", "outer"]
            cols = s.path[:, 1]
            assert np.all((np.abs(cols - 50) >= 10) & (np.abs(cols - 50) <= 20))

    def test_non_spanning_component_dropped(self):
        # a chord that dips into the ring and back out touches only the
        # outer circle, so the span filter removes it
        path = np.array([[35, c] for c in range(20, 81)])
        vg = build_graph([path])
        ring = Annulus(50.0, 50.0, 10.0, 20.0)
        assert len(annulus_subgraph(vg, ring).segments) == 0
        kept = annulus_subgraph(vg, ring, require_span=False)
        assert len(kept.segments) == 1
        by_id = kept.node_by_id()
        assert {by_id[n].on_circle for n in kept.segments[0].endpoints()} == {"outer"}

    def test_single_pixel_run_dropped(self):
        path = np.array([[50, c] for c in range(20, 31)])
        vg = build_graph([path])
        sub = annulus_subgraph(vg, Annulus(50.0, 50.0, 10.0, 20.0), require_span=False)
        assert len(sub.segments) == 0

    def test_annulus_outside_image_warns_empty(self):
        vg = build_graph([np.array([[5, c] for c in range(10)])], shape=(32, 32))
        with pytest.warns(UserWarning, match="outside the image"):
            sub = annulus_subgraph(vg, Annulus(500.0, 500.0, 10.0, 20.0))
        assert len(sub.segments) == 0 and len(sub.nodes) == 0

    def test_annulus_past_edge_warns(self):
        path = np.array([[50, c] for c in range(20, 81)])
        vg = build_graph([path])
        with pytest.warns(UserWarning, match="extends beyond"):
            sub = annulus_subgraph(vg, Annulus(50.0, 50.0, 10.0, 90.0))
        assert isinstance(sub, VesselGraph)

    def test_junction_inside_keeps_connectivity(self):
        trunk = np.array([[60, c] for c in range(65, 76)])
        up = np.array([[60 - k, 75 + k] for k in range(0, 21)])
        down = np.array([[60 + k, 75 + k] for k in range(0, 21)])
        vg = build_graph([trunk, up, down])
        sub = annulus_subgraph(vg, Annulus(60.0, 60.0, 10.0, 30.0))
        assert len(sub.segments) == 3
        # the junction pixel is shared by all three clipped pieces
        by_id = sub.node_by_id()
        junction_ids = [nid for s in sub.segments for nid in s.endpoints()
                        if (by_id[nid].row, by_id[nid].col) == (60, 75)]
        assert len(junction_ids) == 3
        assert len(set(junction_ids)) == 1


class TestRouteVessels:
    def _ring(self):
        return Annulus(60.0, 60.0, 10.0, 30.0)

    def test_radial_segment_single_vessel(self):
        # starts inside the hole and leaves the ring, so both cuts exist
        path = np.array([[60, c] for c in range(62, 101)])
        vg = build_graph([path])
        sub = annulus_subgraph(vg, self._ring())
        vessels = route_vessels(sub)
        assert len(vessels) == 1
        v = vessels[0]
        assert tuple(v.path[0]) == (60, 70)
        assert np.hypot(v.path[-1][1] - 60, v.path[-1][0] - 60) > np.hypot(
            v.path[0][1] - 60, v.path[0][0] - 60
        )

    def test_y_junction_two_vessels(self):
        trunk = np.array([[60, c] for c in range(65, 76)])
        up = np.array([[60 - k, 75 + k] for k in range(0, 21)])
        down = np.array([[60 + k, 75 + k] for k in range(0, 21)])
        vg = build_graph([trunk, up, down], labels=["artery", "vein", "artery"])
        sub = annulus_subgraph(vg, self._ring())
        vessels = route_vessels(sub)
        assert len(vessels) == 2
        # first walk: short artery trunk plus the longer vein branch
        assert vessels[0].label == "vein"
        assert tuple(vessels[0].path[0]) == (60, 70)
        # leftover branch is picked up from the outer circle and flipped
        # to run outward from the junction
        assert vessels[1].label == "artery"
        assert tuple(vessels[1].path[0]) == (60, 75)
        # edge disjoint: the walks share at most the junction pixel
        a = {tuple(p) for p in vessels[0].path}
        b = {tuple(p) for p in vessels[1].path}
        assert a & b <= {(60, 75)}

    def test_chord_piece_yields_nothing(self):
        path = np.array([[35, c] for c in range(20, 81)])
        vg = build_graph([path])
        sub = annulus_subgraph(vg, Annulus(50.0, 50.0, 10.0, 20.0), require_span=False)
        assert len(sub.segments) == 1
        assert route_vessels(sub) == []

    def test_empty_graph(self):
        assert route_vessels(VesselGraph([], [], (32, 32))) == []
