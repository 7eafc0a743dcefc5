"""Probability sampling, label decisions, and label spreading."""

import copy

import numpy as np
import pytest
from PIL import Image

from vasculometry import InputError, label_nodes, load_av_maps, propagate
from vasculometry.topology import GraphNode, VesselGraph, VesselSegment

from conftest import random_vessel_tree


def _write_gray(path, arr):
    Image.fromarray(arr.astype(np.uint8), mode="L").save(path)


def _write_rgb(path, r, g, b):
    Image.fromarray(np.stack([r, g, b], axis=-1).astype(np.uint8), mode="RGB").save(path)


def _line_graph(shape=(6, 6)):
    # one horizontal 3-pixel segment from (2,1) to (2,3)
    nodes = [
        GraphNode(id=0, row=2, col=1, kind="end"),
        GraphNode(id=1, row=2, col=3, kind="end"),
    ]
    path = np.array([[2, 1], [2, 2], [2, 3]])
    seg = VesselSegment(id=0, node_ids=[0, 1], path=path, arc=2.0, chord=2.0)
    return VesselGraph(nodes=nodes, segments=[seg], shape=shape)


def _chain(specs, arcs=None):
    """Path graph: segment i joins nodes i and i+1 with (p_artery, p_vein)."""
    n = len(specs) + 1
    nodes = [GraphNode(id=i, row=0, col=2 * i, kind="end" if i in (0, n - 1) else "branch")
             for i in range(n)]
    segments = []
    for i, (pa, pv) in enumerate(specs):
        tau = 0.05
        if max(pa, pv) < tau or pa == pv:
            label = "unknown"
        else:
            label = "artery" if pa > pv else "vein"
        path = np.array([[0, 2 * i], [0, 2 * i + 1], [0, 2 * i + 2]])
        arc = 2.0 if arcs is None else arcs[i]
        segments.append(VesselSegment(
            id=i, node_ids=[i, i + 1], path=path, arc=arc, chord=arc,
            label=label, p_artery=pa, p_vein=pv,
        ))
    return VesselGraph(nodes=nodes, segments=segments, shape=(4, 2 * n + 2))


class TestLoadAvMaps:
    def test_separate_files(self, tmp_path):
        a = np.full((5, 7), 204, dtype=np.uint8)
        v = np.full((5, 7), 51, dtype=np.uint8)
        _write_gray(tmp_path / "a.png", a)
        _write_gray(tmp_path / "v.png", v)
        pa, pv = load_av_maps(artery_path=tmp_path / "a.png", vein_path=tmp_path / "v.png")
        assert pa.shape == (5, 7) and pv.shape == (5, 7)
        assert np.allclose(pa, 0.8) and np.allclose(pv, 0.2)

    def test_combined_default_channels(self, tmp_path):
        r = np.full((4, 4), 255, dtype=np.uint8)
        g = np.full((4, 4), 0, dtype=np.uint8)
        b = np.full((4, 4), 128, dtype=np.uint8)
        _write_rgb(tmp_path / "c.png", r, g, b)
        pa, pv = load_av_maps(combined_path=tmp_path / "c.png")
        assert np.allclose(pa, 1.0)
        assert np.allclose(pv, 0.0)

    def test_combined_custom_channels(self, tmp_path):
        r = np.zeros((4, 4), dtype=np.uint8)
        g = np.full((4, 4), 102, dtype=np.uint8)
        b = np.full((4, 4), 255, dtype=np.uint8)
        _write_rgb(tmp_path / "c.png", r, g, b)
        pa, pv = load_av_maps(combined_path=tmp_path / "c.png",
                              channel_artery="blue", channel_vein="green")
        assert np.allclose(pa, 1.0)
        assert np.allclose(pv, 0.4)

    def test_combined_and_separate_rejected(self, tmp_path):
        _write_gray(tmp_path / "a.png", np.zeros((3, 3)))
        with pytest.raises(InputError):
            load_av_maps(artery_path=tmp_path / "a.png", combined_path=tmp_path / "a.png")

    def test_missing_one_of_pair(self, tmp_path):
        _write_gray(tmp_path / "a.png", np.zeros((3, 3)))
        with pytest.raises(InputError):
            load_av_maps(artery_path=tmp_path / "a.png")
        with pytest.raises(InputError):
            load_av_maps(vein_path=tmp_path / "a.png")

    def test_shape_mismatch(self, tmp_path):
        _write_gray(tmp_path / "a.png", np.zeros((3, 3)))
        _write_gray(tmp_path / "v.png", np.zeros((4, 3)))
        with pytest.raises(InputError):
            load_av_maps(artery_path=tmp_path / "a.png", vein_path=tmp_path / "v.png")

    def test_combined_needs_bands(self, tmp_path):
        _write_gray(tmp_path / "c.png", np.zeros((3, 3)))
        with pytest.raises(InputError):
            load_av_maps(combined_path=tmp_path / "c.png")


class TestLabelNodes:
    def test_artery_wins(self):
        vg = _line_graph()
        pa = np.full(vg.shape, 0.8)
        pv = np.full(vg.shape, 0.1)
        label_nodes(vg, pa, pv)
        seg = vg.segments[0]
        assert seg.label == "artery"
        assert seg.p_artery == pytest.approx(0.8)
        assert seg.p_vein == pytest.approx(0.1)
        assert all(n.label == "artery" for n in vg.nodes)

    def test_vein_wins(self):
        vg = _line_graph()
        label_nodes(vg, np.full(vg.shape, 0.2), np.full(vg.shape, 0.6))
        assert vg.segments[0].label == "vein"

    def test_exact_tie_unknown(self):
        vg = _line_graph()
        label_nodes(vg, np.full(vg.shape, 0.5), np.full(vg.shape, 0.5))
        assert vg.segments[0].label == "unknown"
        assert all(n.label == "unknown" for n in vg.nodes)

    def test_below_tau_unknown(self):
        vg = _line_graph()
        label_nodes(vg, np.full(vg.shape, 0.04), np.full(vg.shape, 0.02), tau_av=0.05)
        assert vg.segments[0].label == "unknown"

    def test_tau_boundary_labels(self):
        # the cutoff is strict: a peak exactly at tau still labels
        vg = _line_graph()
        label_nodes(vg, np.full(vg.shape, 0.05), np.zeros(vg.shape), tau_av=0.05)
        assert vg.segments[0].label == "artery"

    def test_segment_uses_path_mean(self):
        vg = _line_graph()
        pa = np.zeros(vg.shape)
        pv = np.zeros(vg.shape)
        # endpoints favor vein, interior strongly favors artery
        pa[2, 1] = pa[2, 3] = 0.1
        pv[2, 1] = pv[2, 3] = 0.2
        pa[2, 2] = 0.9
        label_nodes(vg, pa, pv)
        seg = vg.segments[0]
        assert seg.p_artery == pytest.approx((0.1 + 0.9 + 0.1) / 3)
        assert seg.label == "artery"
        assert vg.nodes[0].label == "vein"

    def test_rescaling_both_grids_keeps_labels(self, rng):
        vg = _line_graph()
        pa = rng.random(vg.shape)
        pv = rng.random(vg.shape)
        label_nodes(vg, pa, pv, tau_av=0.0)
        before = [vg.segments[0].label] + [n.label for n in vg.nodes]
        label_nodes(vg, 0.5 * pa, 0.5 * pv, tau_av=0.0)
        after = [vg.segments[0].label] + [n.label for n in vg.nodes]
        assert before == after

    def test_bad_tau(self):
        vg = _line_graph()
        grids = np.zeros(vg.shape), np.zeros(vg.shape)
        with pytest.raises(InputError):
            label_nodes(vg, *grids, tau_av=-0.1)
        with pytest.raises(InputError):
            label_nodes(vg, *grids, tau_av=1.5)

    def test_grid_shape_mismatch(self):
        vg = _line_graph()
        with pytest.raises(InputError):
            label_nodes(vg, np.zeros((3, 3)), np.zeros(vg.shape))

    def test_grid_range_enforced(self):
        vg = _line_graph()
        with pytest.raises(InputError):
            label_nodes(vg, np.full(vg.shape, 1.2), np.zeros(vg.shape))
        with pytest.raises(InputError):
            label_nodes(vg, np.zeros(vg.shape), np.full(vg.shape, -0.1))


class TestPropagate:
    def test_chain_adopts_flanking_label(self):
        vg = _chain([(0.9, 0.1), (0.0, 0.0), (0.8, 0.2)])
        propagate(vg)
        assert [s.label for s in vg.segments] == ["artery", "artery", "artery"]

    def test_isolated_unknown_stays(self):
        vg = _chain([(0.0, 0.0)])
        propagate(vg)
        assert vg.segments[0].label == "unknown"

    def test_all_unknown_graph_unchanged(self):
        vg = _chain([(0.0, 0.0), (0.0, 0.0), (0.0, 0.0)])
        propagate(vg)
        assert all(s.label == "unknown" for s in vg.segments)

    def test_balanced_votes_keep_current_label(self):
        # equal weight on both sides: the middle keeps whatever it had
        vg = _chain([(0.9, 0.1), (0.0, 0.0), (0.1, 0.9)])
        propagate(vg)
        assert vg.segments[1].label == "unknown"

        vg = _chain([(0.9, 0.1), (0.07, 0.05), (0.1, 0.9)])
        assert vg.segments[1].label == "artery"
        propagate(vg)
        assert vg.segments[1].label == "artery"

    def test_weighted_majority(self):
        # left: arc 10 x margin 0.8 = 8, right: arc 30 x margin 0.4 = 12
        vg = _chain([(0.9, 0.1), (0.0, 0.0), (0.3, 0.7)], arcs=[10.0, 5.0, 30.0])
        propagate(vg)
        assert vg.segments[1].label == "vein"

    def test_confident_label_immutable(self):
        # a margin at delta is already immutable, however strong the neighbors
        vg = _chain([(0.1, 0.9), (0.55, 0.45), (0.1, 0.9)], arcs=[50.0, 2.0, 50.0])
        propagate(vg, delta=0.1)
        assert vg.segments[1].label == "artery"

    def test_cascade_through_weak_margin(self):
        # a weak vein flips to artery, then its own small margin carries
        # the vote one hop further within the same run
        vg = _chain([(0.9, 0.1), (0.19, 0.20), (0.0, 0.0)])
        assert vg.segments[1].label == "vein"
        propagate(vg)
        assert vg.segments[1].label == "artery"
        assert vg.segments[2].label == "artery"

    def test_round_cap_respected(self):
        # with ids ordered against the flow the far segment needs a second
        # round, so capping at one round leaves its first (wrong) guess
        def build():
            vg = _chain([(0.0, 0.0), (0.19, 0.20), (0.9, 0.1)])
            return vg

        capped = propagate(build(), max_rounds=1)
        assert capped.segments[0].label == "vein"
        free = propagate(build())
        assert free.segments[0].label == "artery"

    def test_zero_margin_neighbors_cast_no_vote(self):
        # an adopted label with zero margin cannot push further
        vg = _chain([(0.9, 0.1), (0.0, 0.0), (0.0, 0.0)])
        propagate(vg)
        assert vg.segments[1].label == "artery"
        assert vg.segments[2].label == "unknown"

    def test_fixpoint_idempotent(self, rng):
        for _ in range(30):
            vg = random_vessel_tree(rng, n_segments=int(rng.integers(2, 25)))
            propagate(vg)
            once = [s.label for s in vg.segments]
            propagate(vg)
            assert [s.label for s in vg.segments] == once

    def test_confident_segments_never_change(self, rng):
        delta = 0.1
        for _ in range(30):
            vg = random_vessel_tree(rng, n_segments=int(rng.integers(2, 25)))
            frozen = {s.id: s.label for s in vg.segments
                      if abs(s.p_artery - s.p_vein) >= delta}
            propagate(vg, delta=delta)
            for s in vg.segments:
                if s.id in frozen:
                    assert s.label == frozen[s.id]

    def test_validation(self):
        vg = _chain([(0.5, 0.1)])
        with pytest.raises(InputError):
            propagate(vg, delta=-0.2)
        with pytest.raises(InputError):
            propagate(vg, delta=1.1)
        with pytest.raises(InputError):
            propagate(vg, max_rounds=0)

    def test_returns_same_graph_object(self):
        vg = _chain([(0.9, 0.1), (0.0, 0.0)])
        out = propagate(copy.deepcopy(vg))
        assert out is not vg
        vg2 = _chain([(0.9, 0.1), (0.0, 0.0)])
        assert propagate(vg2) is vg2
