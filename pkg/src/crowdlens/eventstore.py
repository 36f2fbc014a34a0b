"""Append-only event log, dashboard-style reports and a read-only HTTP endpoint.

Log line format (UTF-8, one event per line)::

    <ts ms>\t<kind>\t<key>=<value>;<key>=<value>
"""
from __future__ import annotations

import json
import logging
import os
import threading
import warnings
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .errors import BindFailure, NonMonotonicTimestamp

__all__ = [
    "KINDS",
    "Event",
    "EventLog",
    "MalformedLineWarning",
    "Report",
    "format_event",
    "parse_event",
    "load",
    "parse_log",
    "report",
    "serve_stats",
    "StatsServer",
]

log = logging.getLogger(__name__)

KINDS = ("face", "gender", "person", "crossing", "occupancy")
_FORBIDDEN = set("\t\n\r;=")


class MalformedLineWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Event:
    ts: int
    kind: str
    data: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if isinstance(self.ts, bool) or int(self.ts) != self.ts or self.ts < 0:
            raise ValueError(f"timestamp must be a non-negative integer, got {self.ts!r}")
        object.__setattr__(self, "ts", int(self.ts))
        clean = {}
        for k, v in self.data.items():
            k, v = str(k), str(v)
            if not k or _FORBIDDEN & set(k) or _FORBIDDEN & set(v):
                raise ValueError(f"field {k!r}={v!r} contains a reserved character")
            clean[k] = v
        object.__setattr__(self, "data", clean)

    def __hash__(self):
        return hash((self.ts, self.kind, tuple(sorted(self.data.items()))))


def format_event(e: Event) -> str:
    payload = ";".join(f"{k}={v}" for k, v in e.data.items())
    return f"{e.ts}\t{e.kind}\t{payload}"


def parse_event(line: str) -> Event:
    ts, kind, payload = line.split("\t")
    data = {}
    if payload:
        for item in payload.split(";"):
            k, v = item.split("=", 1)
            data[k] = v
    return Event(int(ts), kind, data)


class EventLog:
    """Single-writer append handle; every append is fsynced before returning."""

    def __init__(self, path, durable: bool = True):
        self.path = Path(path)
        self.durable = durable
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._last_ts = max((e.ts for e in load(self.path, quiet=True)), default=None) \
            if self.path.exists() else None
        self._fh = open(self.path, "a", encoding="utf-8")
        self._lock = threading.Lock()

    def append(self, e: Event) -> None:
        with self._lock:
            if self._last_ts is not None and e.ts < self._last_ts:
                raise NonMonotonicTimestamp(f"ts {e.ts} earlier than last logged {self._last_ts}")
            self._fh.write(format_event(e) + "\n")
            self._fh.flush()
            if self.durable:
                os.fsync(self._fh.fileno())
            self._last_ts = e.ts

    __call__ = append

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def parse_log(text: str, start: int | None = None, end: int | None = None,
              source: str = "<log>", quiet: bool = False) -> list[Event]:
    """Events from log text with ``start <= ts < end``.

    Malformed lines are skipped with a :class:`MalformedLineWarning`; an
    unterminated final line (a torn write) is dropped the same way.
    """
    events = []
    lines = text.split("\n")
    torn = lines[-1] != ""
    if not torn:
        lines.pop()
    for lineno, line in enumerate(lines, 1):
        if torn and lineno == len(lines):
            if not quiet:
                warnings.warn(f"{source}:{lineno}: dropping unterminated final line",
                              MalformedLineWarning, stacklevel=3)
            break
        try:
            e = parse_event(line)
        except (ValueError, TypeError) as exc:
            if not quiet:
                warnings.warn(f"{source}:{lineno}: malformed line ({exc})",
                              MalformedLineWarning, stacklevel=3)
            continue
        if (start is None or e.ts >= start) and (end is None or e.ts < end):
            events.append(e)
    return events


def load(path, start: int | None = None, end: int | None = None, quiet: bool = False) -> list[Event]:
    path = Path(path)
    if not path.exists():
        return []
    text = path.read_bytes().decode("utf-8", errors="replace")
    return parse_log(text, start, end, str(path), quiet)


# --------------------------------------------------------------- report

@dataclass
class Report:
    hourly: list[int] = field(default_factory=lambda: [0] * 24)
    day_of_week: list[int] = field(default_factory=lambda: [0] * 7)  # Monday first
    gender_counts: dict = field(default_factory=dict)
    gender_split: dict = field(default_factory=dict)
    occupancy: list = field(default_factory=list)  # [ts, running in - out]
    peak_hour: int | None = None
    entries: int = 0
    exits: int = 0
    bucketing: str = "hour"
    tz_minutes: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def report(events, bucketing: str = "hour", tz_minutes: int = 0) -> Report:
    """Aggregate crossings into hour / weekday histograms of entries, plus
    the gender split and the running occupancy series."""
    if bucketing not in ("hour", "dow"):
        raise ValueError(f"bucketing must be 'hour' or 'dow', got {bucketing!r}")
    rep = Report(bucketing=bucketing, tz_minutes=tz_minutes)
    tz = timezone(timedelta(minutes=tz_minutes))
    running = 0
    genders: dict[str, int] = {}
    for e in events:
        if e.kind == "crossing":
            direction = e.data.get("direction")
            if direction == "in":
                local = datetime.fromtimestamp(e.ts / 1000.0, tz)
                rep.hourly[local.hour] += 1
                rep.day_of_week[local.weekday()] += 1
                rep.entries += 1
                running += 1
            elif direction == "out":
                rep.exits += 1
                running -= 1
            else:
                continue
            rep.occupancy.append([e.ts, running])
        elif e.kind == "gender" and "label" in e.data:
            genders[e.data["label"]] = genders.get(e.data["label"], 0) + 1
    total = sum(genders.values())
    rep.gender_counts = dict(sorted(genders.items()))
    rep.gender_split = {k: v / total for k, v in rep.gender_counts.items()} if total else {}
    if rep.entries:
        rep.peak_hour = max(range(24), key=lambda h: (rep.hourly[h], -h))
    return rep


# ----------------------------------------------------------------- HTTP

class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "crowdlens"

    def _send(self, status: int, body: bytes, ctype: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Connection", "close")
        self.end_headers()
        self.wfile.write(body)
        self.close_connection = True

    def do_GET(self):
        url = urlparse(self.path)
        srv: StatsServer = self.server.owner
        if url.path == "/stats":
            q = parse_qs(url.query)
            try:
                start = int(q["from"][0]) if "from" in q else None
                end = int(q["to"][0]) if "to" in q else None
                tz = int(q["tz"][0]) if "tz" in q else 0
            except ValueError:
                self._send(400, b'{"error": "bad query parameter"}', "application/json")
                return
            # one read of the file is the snapshot; lines appended later are not seen
            snapshot = srv.log_path.read_bytes() if srv.log_path.exists() else b""
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", MalformedLineWarning)
                events = parse_log(snapshot.decode("utf-8", errors="replace"), start, end)
            body = json.dumps(report(events, "hour", tz).to_dict()).encode("utf-8")
            self._send(200, body, "application/json; charset=utf-8")
        elif url.path == "/heatmap.ppm":
            data = srv.heatmap_bytes()
            if data is None:
                self._send(404, b"no heat map yet\n", "text/plain")
            else:
                self._send(200, data, "image/x-portable-pixmap")
        else:
            self._send(404, b"not found\n", "text/plain")

    def log_message(self, fmt, *args):
        log.debug("http %s - %s", self.address_string(), fmt % args)


class StatsServer:
    """Running stats endpoint; ``port`` is the bound port (useful with port 0)."""

    def __init__(self, log_path, port: int, heatmap=None, host: str = "127.0.0.1"):
        self.log_path = Path(log_path)
        self._heatmap = heatmap
        try:
            self._httpd = ThreadingHTTPServer((host, port), _Handler)
        except OSError as exc:
            raise BindFailure(f"cannot bind {host}:{port}: {exc}") from exc
        self._httpd.daemon_threads = True
        self._httpd.owner = self
        self.port = self._httpd.server_address[1]
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    def heatmap_bytes(self) -> bytes | None:
        src = self._heatmap
        if src is None:
            return None
        if callable(src):
            return src()
        p = Path(src)
        return p.read_bytes() if p.exists() else None

    def serve_until(self, stop: threading.Event) -> None:
        stop.wait()
        self.close()

    def close(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        self._thread.join(timeout=5)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def serve_stats(log_path, port: int, heatmap=None, host: str = "127.0.0.1") -> StatsServer:
    """Start the read-only endpoint in a background thread.

    ``heatmap`` is a path to a P6 file or a callable returning its bytes.
    """
    return StatsServer(log_path, port, heatmap, host)
