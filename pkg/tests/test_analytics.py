import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crowdlens import analytics as an
from crowdlens.errors import EmptyGrid, MissingHistory
from crowdlens.hogdetect import Detection
from crowdlens.imgcore import Rect

VERTICAL = an.CountingLine((5, 0), (5, 10), "door")


def det(cx, cy, w=10, h=10):
    return Detection(Rect(int(cx - w / 2), int(cy - h / 2), w, h), 1.0)


def track(prev, curr, sides=None):
    t = an.Track(0, curr, prev)
    if sides:
        t.sides.update(sides)
    return t


class TestHeatGrid:
    def test_fresh(self):
        assert not an.HeatGrid(4, 100, 100).counts.any()

    def test_centre_cell(self):
        g = an.grid_update(an.HeatGrid(4, 100, 80), [Detection(Rect(40, 30, 20, 20), 1.0)])
        assert g.counts[2, 2] == 1 and g.total == 1

    def test_right_edge_clamped(self):
        g = an.HeatGrid(4, 100, 100).update([Detection(Rect(99, 0, 1, 1), 1.0)])
        assert g.counts[0, 3] == 1
        assert g.cell_of(1000, -5) == (3, 0)

    def test_percentages(self):
        g = an.HeatGrid(3, 30, 30).update([det(5, 5)])
        assert g.percentages()[0, 0] == 100 and g.percentages().sum() == 100
        g.update([det(25, 25)])
        assert g.percentages()[0, 0] == 50 and g.percentages()[2, 2] == 50
        with pytest.raises(EmptyGrid):
            an.grid_percentages(an.HeatGrid(3, 30, 30))

    @settings(max_examples=50)
    @given(st.lists(st.tuples(st.integers(0, 310), st.integers(0, 230)), max_size=60), st.integers(1, 20))
    def test_conservation(self, points, n):
        g = an.HeatGrid(n, 320, 240)
        g.update([Detection(Rect(x, y, 10, 10), 1.0) for x, y in points])
        assert g.total == len(points)
        if points:
            assert abs(g.percentages().sum() - 100) <= 1e-9

    def test_save_load(self, tmp_path):
        g = an.HeatGrid(3, 30, 30).update([det(5, 5), det(15, 25)])
        g.save(tmp_path / "g.grid")
        back = an.HeatGrid.load(tmp_path / "g.grid")
        assert np.array_equal(back.counts, g.counts) and (back.frame_w, back.frame_h) == (30, 30)

    def test_render(self):
        empty = an.render_heat(an.HeatGrid(4, 40, 20))
        assert (empty.width, empty.height) == (40, 20)
        assert (empty.data[..., 2] == 255).all() and not empty.data[..., :2].any()
        g = an.HeatGrid(2, 4, 4)
        g.counts[0, 0] = 4
        g.counts[1, 1] = 2
        img = an.render_heat(g).data
        assert img[0, 0].tolist() == [255, 0, 0]
        assert img[0, 3].tolist() == [0, 0, 255]
        assert abs(int(img[3, 3, 0]) - 255 / 2) <= 1
        assert an.render_heat(an.HeatGrid(8, 4, 4)).width == 8  # block size floor of 1


    def test_overlay(self):
        frame = np.full((4, 6), 100, np.uint8)
        g = an.HeatGrid(2, 6, 4)
        assert (an.overlay_heat(frame, g).data == 100).all()  # empty grid leaves the frame alone
        g.update([det(1, 1, 2, 2), det(1, 1, 2, 2), det(5, 3, 2, 2)])
        out = an.overlay_heat(frame, g, alpha=0.5).data
        assert out.shape == (4, 6, 3)
        assert out[0, 0].tolist() == [178, 50, 50]   # full weight: halfway to red
        assert out[3, 5].tolist() == [139, 75, 75]   # half the peak: a quarter of the way
        assert out[0, 5].tolist() == [100, 100, 100]
        with pytest.raises(ValueError):
            an.overlay_heat(np.zeros((5, 6), np.uint8), g)


def brute_assignment(tracks, dets, gate):
    """Exhaustive matching: most gated pairs first, then least total distance."""
    best = None
    n = max(len(tracks), len(dets))
    for perm in itertools.permutations(range(n)):
        pairs = [(t, d) for t, d in zip(range(len(tracks)), perm) if d < len(dets)]
        pairs = [(t, d) for t, d in pairs if math.dist(tracks[t], dets[d]) <= gate]
        key = (-len(pairs), sum(math.dist(tracks[t], dets[d]) for t, d in pairs))
        if best is None or key < best[0]:
            best = (key, sorted(pairs))
    return best[1]


class TestTracker:
    def test_spawn(self):
        tracks, assign, nxt = an.tracker_step([], [(1, 1), (50, 50)], gate=10)
        assert [t.id for t in tracks] == [0, 1] and assign == [(0, 0), (1, 1)] and nxt == 2

    def test_match(self):
        tracks, _, nxt = an.tracker_step([], [(1, 1)], gate=10)
        tracks, assign, _ = an.tracker_step(tracks, [(4, 5)], gate=10, next_id=nxt)
        assert assign == [(0, 0)]
        assert tracks[0].prev_centroid == (1, 1) and tracks[0].centroid == (4, 5)

    def test_globally_nearest_beats_row_greedy(self):
        tpts = [(0.0, 0.0), (10.0, 0.0)]
        dpts = [(6.0, 0.0), (-7.0, 0.0)]
        # row-greedy: track 0 grabs detection 0 (6 px), leaving track 1 with 17 px
        row_greedy = [(0, 0), (1, 1)]
        tracks = [an.Track(i, p) for i, p in enumerate(tpts)]
        _, assign, _ = an.tracker_step(tracks, dpts, gate=20)
        assert sorted(assign) == [(0, 1), (1, 0)] != row_greedy
        assert sorted(assign) == brute_assignment(tpts, dpts, 20)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=4, unique=True),
           st.lists(st.tuples(st.integers(-5, 5), st.integers(-5, 5)), min_size=4, max_size=4),
           st.lists(st.booleans(), min_size=4, max_size=4), st.randoms(use_true_random=False))
    def test_matches_brute_force(self, cells, jitter, present, rnd):
        # people on a coarse lattice, detections jittered by at most 5 px and
        # some people undetected; the optimal matching is then unambiguous
        tpts = [(40.0 * cx, 40.0 * cy) for cx, cy in cells]
        dpts = [(x + jx, y + jy) for (x, y), (jx, jy), keep in zip(tpts, jitter, present) if keep]
        rnd.shuffle(dpts)
        tracks = [an.Track(i, p) for i, p in enumerate(tpts)]
        _, assign, _ = an.tracker_step(tracks, dpts, gate=15)
        matched = sorted((tid, di) for tid, di in assign if tid < len(tpts))
        assert matched == brute_assignment(tpts, dpts, 15)

    def test_retire(self):
        tracks, _, nxt = an.tracker_step([], [(0, 0)], gate=5, max_missed=2)
        for _ in range(2):
            tracks, _, nxt = an.tracker_step(tracks, [], gate=5, max_missed=2, next_id=nxt)
            assert len(tracks) == 1 and tracks[0].prev_centroid is None
        tracks, _, _ = an.tracker_step(tracks, [], gate=5, max_missed=2, next_id=nxt)
        assert tracks == []

    def test_deterministic(self, rng):
        frames = [[tuple(p) for p in rng.integers(0, 100, (4, 2))] for _ in range(10)]
        runs = []
        for _ in range(2):
            tr = an.Tracker(gate=30)
            runs.append([tr.step(f) for f in frames])
        assert runs[0] == runs[1]

    def test_gate_positive(self):
        with pytest.raises(ValueError):
            an.tracker_step([], [], gate=0)


class TestCrossing:
    def test_in(self):
        assert an.crossing_check(track((0, 5), (10, 5)), VERTICAL) == "in"

    def test_out(self):
        assert an.crossing_check(track((10, 5), (0, 5)), VERTICAL) == "out"

    def test_parallel(self):
        assert an.crossing_check(track((0, 0), (0, 10)), VERTICAL) is None

    def test_beyond_segment(self):
        short = an.CountingLine((5, 0), (5, 1))
        assert an.crossing_check(track((0, 5), (10, 5)), short) is None

    def test_missing_history(self):
        with pytest.raises(MissingHistory):
            an.crossing_check(an.Track(0, (1, 1)), VERTICAL)

    def test_touch_and_return(self):
        t = track((0, 5), (5, 5))
        assert an.crossing_check(t, VERTICAL) is None
        t.prev_centroid, t.centroid = (5, 5), (0, 5)
        assert an.crossing_check(t, VERTICAL) is None
        t.prev_centroid, t.centroid = (0, 5), (5, 5)
        assert an.crossing_check(t, VERTICAL) is None
        t.prev_centroid, t.centroid = (5, 5), (9, 5)
        assert an.crossing_check(t, VERTICAL) == "in"

    def test_parity_and_no_double_count(self):
        tr = an.Tracker(gate=50)
        events = []
        for x in [0, 2, 4, 6, 8, 9, 9, 8, 6, 4, 2, 1]:
            for tid, _ in tr.step([(x, 5)]):
                t = tr.get(tid)
                if t.prev_centroid is not None:
                    r = an.crossing_check(t, VERTICAL)
                    if r:
                        events.append(r)
        assert events == ["in", "out"]

    def test_bad_line(self):
        with pytest.raises(ValueError):
            an.CountingLine((1, 1), (1, 1))


class TestCounters:
    def test_occupancy(self):
        fc = an.FootfallCounter(VERTICAL)
        assert an.occupancy(fc) == (0, 0)
        for d in ["in", "in", "in", "out", None]:
            fc.record(d)
        assert an.occupancy(fc) == (2, 2)
        assert an.occupancy(an.FootfallCounter(VERTICAL, 0, 2)) == (-2, 0)

    def test_gender_tally(self):
        g = an.GenderTally()
        for lb in ["male"] * 7 + ["female"] * 3:
            g.record(lb)
        assert g.split() == {"female": 0.3, "male": 0.7}
        assert an.GenderTally().split() == {}
