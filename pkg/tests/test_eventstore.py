import json
import threading
import urllib.error
import urllib.request
import warnings
from datetime import datetime, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crowdlens import eventstore as es
from crowdlens.errors import BindFailure, NonMonotonicTimestamp


def ms(*args):
    return int(datetime(*args, tzinfo=timezone.utc).timestamp() * 1000)


def crossing(ts, direction="in"):
    return es.Event(ts, "crossing", {"line": "door", "direction": direction})


def get(port, path):
    try:
        with urllib.request.urlopen(f"http://127.0.0.1:{port}{path}", timeout=5) as r:
            return r.status, r.headers.get("Content-Type"), r.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.headers.get("Content-Type"), exc.read()


safe_text = st.text(st.characters(blacklist_characters="\t\n\r;=", blacklist_categories=("Cs",)),
                    min_size=1, max_size=8)
events = st.lists(st.tuples(st.integers(0, 10**6), st.sampled_from(es.KINDS),
                            st.dictionaries(safe_text, st.text(
                                st.characters(blacklist_characters="\t\n\r;=",
                                              blacklist_categories=("Cs",)), max_size=8),
                                max_size=3)),
                  max_size=20)


class TestLog:
    def test_line_format(self, tmp_path):
        with es.EventLog(tmp_path / "e.log") as log:
            log.append(es.Event(5, "gender", {"label": "male"}))
            log.append(es.Event(7, "occupancy", {"value": 1, "raw": 1}))
        assert (tmp_path / "e.log").read_text() == "5\tgender\tlabel=male\n7\toccupancy\tvalue=1;raw=1\n"

    def test_roundtrip_and_order(self, tmp_path):
        evs = [crossing(1000 + i // 3, "in" if i % 2 else "out") for i in range(10_000)]
        with es.EventLog(tmp_path / "e.log") as log:
            for e in evs:
                log.append(e)
        assert len((tmp_path / "e.log").read_text().splitlines()) == 10_000
        assert es.load(tmp_path / "e.log") == evs

    @settings(max_examples=40, deadline=None)
    @given(events)
    def test_roundtrip_property(self, tmp_path_factory, raw):
        path = tmp_path_factory.mktemp("log") / "e.log"
        evs = [es.Event(ts, kind, data) for ts, kind, data in sorted(raw, key=lambda r: r[0])]
        with es.EventLog(path, durable=False) as log:
            for e in evs:
                log.append(e)
        assert es.load(path) == evs

    def test_non_monotonic(self, tmp_path):
        with es.EventLog(tmp_path / "e.log") as log:
            log.append(crossing(10))
            log.append(crossing(10))
            with pytest.raises(NonMonotonicTimestamp):
                log.append(crossing(9))
        with es.EventLog(tmp_path / "e.log") as log:  # reopening remembers the last ts
            with pytest.raises(NonMonotonicTimestamp):
                log.append(crossing(3))

    def test_event_validation(self):
        with pytest.raises(ValueError):
            es.Event(1, "dance", {})
        with pytest.raises(ValueError):
            es.Event(1, "gender", {"label": "a;b"})
        with pytest.raises(ValueError):
            es.Event(-1, "gender", {})


class TestLoad:
    def test_empty_and_missing(self, tmp_path):
        (tmp_path / "e.log").write_text("")
        assert es.load(tmp_path / "e.log") == []
        assert es.load(tmp_path / "nope.log") == []

    def test_range(self, tmp_path):
        with es.EventLog(tmp_path / "e.log") as log:
            for ts in range(10):
                log.append(crossing(ts))
        assert [e.ts for e in es.load(tmp_path / "e.log", 3, 6)] == [3, 4, 5]
        assert es.load(tmp_path / "e.log", 100, 200) == []

    def test_corrupt_line(self, tmp_path):
        lines = [es.format_event(crossing(i)) for i in range(100)]
        lines[41] = "garbage without tabs"
        (tmp_path / "e.log").write_text("\n".join(lines) + "\n")
        with pytest.warns(es.MalformedLineWarning, match=":42:") as rec:
            evs = es.load(tmp_path / "e.log")
        assert len(evs) == 99 and len(rec) == 1

    def test_torn_final_line(self, tmp_path):
        (tmp_path / "e.log").write_text("1\tcrossing\tdirection=in\n2\tcross")
        with pytest.warns(es.MalformedLineWarning, match="unterminated"):
            assert [e.ts for e in es.load(tmp_path / "e.log")] == [1]


class TestReport:
    def test_empty(self):
        rep = es.report([])
        assert rep.hourly == [0] * 24 and rep.day_of_week == [0] * 7
        assert rep.peak_hour is None and rep.gender_split == {} and rep.occupancy == []

    def test_hour_buckets(self):
        evs = [crossing(ms(2024, 3, 5, 9, m)) for m in (1, 20, 59)] + [crossing(ms(2024, 3, 5, 14, 5))]
        rep = es.report(evs)
        assert rep.hourly[9] == 3 and rep.hourly[14] == 1 and rep.peak_hour == 9
        assert rep.day_of_week[1] == 4  # 2024-03-05 is a Tuesday

    def test_tie_goes_to_earliest(self):
        rep = es.report([crossing(ms(2024, 1, 1, 15)), crossing(ms(2024, 1, 1, 4))])
        assert rep.peak_hour == 4

    def test_timezone(self):
        rep = es.report([crossing(ms(2024, 3, 5, 23, 0))], tz_minutes=330)
        assert rep.hourly[4] == 1 and rep.day_of_week[2] == 1

    def test_gender_split(self):
        evs = [es.Event(i, "gender", {"label": "male" if i < 7 else "female"}) for i in range(10)]
        rep = es.report(evs)
        assert rep.gender_split == {"female": pytest.approx(0.3), "male": pytest.approx(0.7)}
        assert sum(rep.gender_split.values()) == pytest.approx(1)

    def test_occupancy_series_only_from_crossings(self):
        evs = [crossing(1), es.Event(2, "occupancy", {"value": 9}), crossing(3), crossing(4, "out"),
               es.Event(5, "person", {"x": 1})]
        assert es.report(evs).occupancy == [[1, 1], [3, 2], [4, 1]]

    def test_bad_bucketing(self):
        with pytest.raises(ValueError):
            es.report([], "minute")

    @given(st.lists(st.tuples(st.integers(0, 2 * 10**12), st.sampled_from(["in", "out"]))),
           st.integers(-720, 840))
    def test_conservation(self, raw, tz):
        evs = [crossing(ts, d) for ts, d in sorted(raw)]
        rep = es.report(evs, tz_minutes=tz)
        n_in = sum(d == "in" for _, d in raw)
        assert sum(rep.hourly) == sum(rep.day_of_week) == rep.entries == n_in


class TestServer:
    def test_routes(self, tmp_path):
        log = tmp_path / "e.log"
        log.write_text("")
        with es.serve_stats(log, 0) as srv:
            status, ctype, body = get(srv.port, "/stats")
            assert status == 200 and ctype.startswith("application/json")
            data = json.loads(body)
            assert data["hourly"] == [0] * 24 and data["entries"] == 0
            assert get(srv.port, "/nope")[0] == 404
            assert get(srv.port, "/heatmap.ppm")[0] == 404

    def test_query_and_heatmap(self, tmp_path):
        log = tmp_path / "e.log"
        with es.EventLog(log) as lg:
            for h in (9, 9, 14):
                lg.append(crossing(ms(2024, 3, 5, h)))
        (tmp_path / "h.ppm").write_bytes(b"P6\n1 1\n255\n\xff\x00\x00")
        with es.serve_stats(log, 0, heatmap=tmp_path / "h.ppm") as srv:
            data = json.loads(get(srv.port, f"/stats?from={ms(2024, 3, 5, 10)}")[2])
            assert data["hourly"][14] == 1 and data["entries"] == 1
            status, ctype, body = get(srv.port, "/heatmap.ppm")
            assert status == 200 and ctype == "image/x-portable-pixmap" and body.startswith(b"P6")
            assert get(srv.port, "/stats?from=abc")[0] == 400

    def test_bind_failure(self, tmp_path):
        with es.serve_stats(tmp_path / "e.log", 0) as srv:
            with pytest.raises(BindFailure):
                es.serve_stats(tmp_path / "e.log", srv.port)

    def test_snapshots_under_concurrent_append(self, tmp_path):
        log = tmp_path / "e.log"
        stop = threading.Event()
        written = [0]

        def writer():
            with es.EventLog(log, durable=False) as lg:
                ts = ms(2024, 3, 5, 9)
                while not stop.is_set() and written[0] < 20_000:
                    lg.append(crossing(ts))
                    ts += 1
                    written[0] += 1

        before = None
        with es.serve_stats(log, 0) as srv:
            t = threading.Thread(target=writer)
            t.start()
            seen = []
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("error")
                    for _ in range(30):
                        data = json.loads(get(srv.port, "/stats")[2])
                        # a consistent snapshot: every histogram agrees with the entry count
                        assert sum(data["hourly"]) == sum(data["day_of_week"]) == data["entries"]
                        assert len(data["occupancy"]) == data["entries"]
                        seen.append(data["entries"])
            finally:
                stop.set()
                t.join()
            assert seen == sorted(seen)
            before = log.read_bytes()
            for _ in range(3):
                get(srv.port, "/stats")
            assert log.read_bytes() == before
