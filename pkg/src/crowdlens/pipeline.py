"""Frame acquisition, the gender and footfall run modes, pacing and stats.

One acquisition thread feeds one processing loop through a capacity-1 slot.
A frame that arrives while the slot is still occupied replaces the waiting
frame, and the replaced frame is counted as dropped.
"""
from __future__ import annotations

import logging
import os
import socket
import struct
import threading
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np

from . import analytics, boostcascade, fisher, hogdetect
from .analytics import CountingLine, FootfallCounter, GenderTally, HeatGrid, Tracker
from .detections import sort_detections
from .errors import BadUri, ConnectFailure, ModelLoadFailure, SourceFailure
from .eventstore import Event, EventLog
from .imgcore import GrayImage, PixelBuffer, decode_pnm, encode_pnm, resize, to_gray

__all__ = [
    "EmptyDirectoryWarning",
    "FrameSource",
    "PnmDirSource",
    "TcpSource",
    "open_source",
    "send_frames",
    "ModeConfig",
    "parse_config",
    "load_config",
    "PipelineStats",
    "Pipeline",
    "run",
]

log = logging.getLogger(__name__)

MAGIC = b"FRM1"
_HANDSHAKE = struct.Struct(">4sIIII")
_LENGTH = struct.Struct(">Q")
STAGES = ("decode", "detect", "classify", "analytics", "log")


class EmptyDirectoryWarning(UserWarning):
    pass


# ---------------------------------------------------------------- sources

class FrameSource:
    """Iterable of :class:`PixelBuffer` frames.

    ``live`` sources deliver frames at their own pace; non-live sources are
    replayed by the pipeline on a ``fps`` schedule (or back-to-back without
    loss when ``fps <= 0``).
    """

    fps: float = 0.0
    live: bool = False
    decode_seconds: float = 0.0

    def __iter__(self) -> Iterator[PixelBuffer]:
        raise NotImplementedError

    def close(self) -> None:
        pass


class PnmDirSource(FrameSource):
    def __init__(self, path, fps: float = 15.0):
        self.path = Path(path)
        if not self.path.is_dir():
            raise SourceFailure(f"{self.path} is not a directory")
        self.files = sorted(p for p in self.path.iterdir()
                            if p.suffix.lower() in (".pgm", ".ppm", ".pnm") and p.is_file())
        self.fps = fps
        if not self.files:
            warnings.warn(f"{self.path} holds no .pgm/.ppm frames", EmptyDirectoryWarning, stacklevel=2)

    def __len__(self):
        return len(self.files)

    def __iter__(self):
        dims = None
        for p in self.files:
            t0 = time.perf_counter()
            try:
                buf = decode_pnm(p.read_bytes())
            except (OSError, ValueError) as exc:
                raise SourceFailure(f"{p}: {exc}") from exc
            self.decode_seconds = time.perf_counter() - t0
            if dims is None:
                dims = (buf.width, buf.height)
            elif (buf.width, buf.height) != dims:
                raise SourceFailure(f"{p}: frame is {buf.width}x{buf.height}, session is {dims[0]}x{dims[1]}")
            yield buf


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(min(n - got, 1 << 20))
        if not chunk:
            break
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


class TcpSource(FrameSource):
    """Raw frame stream: ``FRM1`` handshake then length-prefixed frames (big-endian)."""

    live = True

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise ConnectFailure(f"cannot connect to {host}:{port}: {exc}") from exc
        head = _recv_exact(self.sock, _HANDSHAKE.size)
        if len(head) != _HANDSHAKE.size:
            self.sock.close()
            raise ConnectFailure("stream closed during handshake")
        magic, self.width, self.height, self.channels, fps = _HANDSHAKE.unpack(head)
        if magic != MAGIC or self.channels not in (1, 3) or self.width < 1 or self.height < 1:
            self.sock.close()
            raise ConnectFailure(f"bad handshake {head!r}")
        self.fps = float(fps)
        self.sock.settimeout(None)

    def __iter__(self):
        size = self.width * self.height * self.channels
        try:
            while True:
                head = _recv_exact(self.sock, _LENGTH.size)
                if not head:
                    return  # clean close between frames
                if len(head) != _LENGTH.size:
                    raise SourceFailure("stream closed inside a frame header")
                (length,) = _LENGTH.unpack(head)
                if length != size:
                    raise SourceFailure(f"frame payload {length} bytes, expected {size}")
                t0 = time.perf_counter()
                payload = _recv_exact(self.sock, size)
                if len(payload) != size:
                    raise SourceFailure("stream closed inside a frame payload")
                arr = np.frombuffer(payload, dtype=np.uint8).reshape(self.height, self.width, self.channels)
                self.decode_seconds = time.perf_counter() - t0
                yield PixelBuffer(arr)
        except OSError as exc:
            raise SourceFailure(f"socket error: {exc}") from exc
        finally:
            self.sock.close()

    def close(self):
        self.sock.close()


def send_frames(sock: socket.socket, frames: Iterable[PixelBuffer | GrayImage], fps: float = 0.0) -> int:
    """Emit frames with the raw TCP wire protocol; returns the frame count.

    The handshake is taken from the first frame. With ``fps > 0`` frames are
    spaced in real time.
    """
    count = 0
    t0 = time.perf_counter()
    for frame in frames:
        if isinstance(frame, GrayImage):
            frame = PixelBuffer(frame.pixels)
        if count == 0:
            sock.sendall(_HANDSHAKE.pack(MAGIC, frame.width, frame.height, frame.channels,
                                         int(round(fps))))
        if fps > 0:
            delay = t0 + count / fps - time.perf_counter()
            if delay > 0:
                time.sleep(delay)
        payload = frame.data.tobytes()
        sock.sendall(_LENGTH.pack(len(payload)) + payload)
        count += 1
    return count


def open_source(uri: str, fps: float = 15.0) -> FrameSource:
    """``pnmdir:<path>`` or ``tcp:<host>:<port>``."""
    scheme, sep, rest = uri.partition(":")
    if not sep or not rest:
        raise BadUri(f"cannot parse source uri {uri!r}")
    if scheme == "pnmdir":
        return PnmDirSource(rest, fps)
    if scheme == "tcp":
        host, _, port = rest.rpartition(":")
        if not host or not port.isdigit():
            raise BadUri(f"tcp uri needs host:port, got {rest!r}")
        return TcpSource(host, int(port))
    raise BadUri(f"unsupported source scheme {scheme!r}")


# ----------------------------------------------------------------- config

@dataclass
class ModeConfig:
    mode: str = "footfall"
    source: str = ""
    fps: float = 15.0
    grid_n: int = 16
    cascade: str | None = None
    fisher: str | None = None
    svm: str | None = None
    scale_step: float = 1.2
    stride: int = 8
    min_score: float = 0.0
    iou: float = 0.45
    gate: float | None = None   # default: 0.1 x frame diagonal
    max_missed: int = 5
    log_path: str | None = None
    lines: list[CountingLine] = field(default_factory=list)
    # extensions
    start_ts: int | None = None      # fixed clock origin (ms) for reproducible runs
    heatmap_path: str | None = None  # P6 render written at the end of a run
    grid_path: str | None = None     # GRID text dump written at the end of a run
    overlay_dir: str | None = None   # per-frame heat overlays (footfall mode)

    def __post_init__(self):
        if self.mode not in ("gender", "footfall"):
            raise ValueError(f"mode must be 'gender' or 'footfall', got {self.mode!r}")


_KEYS = {
    "mode": str, "source": str, "fps": float, "grid_n": int, "cascade": str, "fisher": str,
    "svm": str, "scale_step": float, "stride": int, "min_score": float, "iou": float,
    "gate": float, "max_missed": int, "log_path": str, "start_ts": int,
    "heatmap_path": str, "grid_path": str, "overlay_dir": str,
}
_PATH_KEYS = ("cascade", "fisher", "svm", "log_path", "heatmap_path", "grid_path", "overlay_dir")


def parse_config(text: str, base_dir=None) -> ModeConfig:
    """Parse ``key value`` lines and ``LINE name x1 y1 x2 y2`` entries.

    Relative paths (and a relative ``pnmdir:`` source) resolve against
    ``base_dir`` when given.
    """
    values: dict = {}
    lines = []
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "LINE":
            if len(parts) != 6:
                raise ValueError(f"line {n}: LINE needs name x1 y1 x2 y2")
            x1, y1, x2, y2 = (float(v) for v in parts[2:])
            lines.append(CountingLine((x1, y1), (x2, y2), parts[1]))
            continue
        key = parts[0]
        if key not in _KEYS or len(parts) != 2:
            raise ValueError(f"line {n}: expected 'key value' with a known key, got {raw.strip()!r}")
        values[key] = _KEYS[key](parts[1])
    if base_dir is not None:
        base = Path(base_dir)
        for key in _PATH_KEYS:
            if key in values and not os.path.isabs(values[key]):
                values[key] = str(base / values[key])
        src = values.get("source", "")
        if src.startswith("pnmdir:") and not os.path.isabs(src[7:]):
            values["source"] = "pnmdir:" + str(base / src[7:])
    return ModeConfig(lines=lines, **values)


def load_config(path) -> ModeConfig:
    path = Path(path)
    return parse_config(path.read_text(), path.parent)


# ------------------------------------------------------------------ stats

@dataclass
class PipelineStats:
    frames_processed: int = 0
    frames_dropped: int = 0
    frames_offered: int = 0
    avg_fps: float = 0.0
    active_seconds: float = 0.0
    latency_ms: dict = field(default_factory=lambda: {s: 0.0 for s in STAGES})
    max_latency_ms: dict = field(default_factory=lambda: {s: 0.0 for s in STAGES})
    detections: int = 0
    events: int = 0
    error: str | None = None

    def summary(self) -> str:
        lat = " ".join(f"{k}={v:.1f}ms" for k, v in self.latency_ms.items())
        line = (f"frames={self.frames_processed} dropped={self.frames_dropped} "
                f"offered={self.frames_offered} fps={self.avg_fps:.2f} "
                f"detections={self.detections} events={self.events} {lat}")
        return line + (f" error={self.error}" if self.error else "")


class _Slot:
    """Capacity-1 hand-off; ``put`` replaces an unconsumed frame unless blocking."""

    _END = object()

    def __init__(self):
        self._cond = threading.Condition()
        self._item = None
        self._full = False
        self.dropped = 0

    def put(self, item, block: bool, stop: threading.Event) -> None:
        with self._cond:
            while block and self._full and not stop.is_set():
                self._cond.wait(0.05)
            if self._full and item is not self._END:
                self.dropped += 1
            if self._full and item is self._END:
                # keep the pending frame; deliver the end marker after it
                while self._full and not stop.is_set():
                    self._cond.wait(0.05)
            self._item = item
            self._full = True
            self._cond.notify_all()

    def get(self, timeout: float):
        with self._cond:
            if not self._full:
                self._cond.wait(timeout)
            if not self._full:
                return None
            item, self._item, self._full = self._item, None, False
            self._cond.notify_all()
            return item

    def discard(self) -> int:
        with self._cond:
            pending = self._full and self._item is not self._END
            self._item, self._full = None, False
            self._cond.notify_all()
            return int(pending)


def _quit_requested(quit) -> bool:
    if quit is None:
        return False
    if isinstance(quit, threading.Event):
        return quit.is_set()
    return bool(quit())


class Pipeline:
    """One run mode wired to detectors, analytics state and event sinks.

    Models come from the config paths unless passed in directly.
    """

    def __init__(self, cfg: ModeConfig, *, svm=None, cascade=None, fisher_model=None,
                 sinks: Iterable[Callable[[Event], None]] = ()):
        self.cfg = cfg
        self.sinks = list(sinks)
        self.svm = svm
        self.cascade = cascade
        self.fisher_model = fisher_model
        if cfg.mode == "footfall" and self.svm is None:
            self.svm = _load(hogdetect.load_svm, cfg.svm, "svm")
        if cfg.mode == "gender":
            if self.cascade is None:
                self.cascade = _load(boostcascade.load_cascade, cfg.cascade, "cascade")
            if self.fisher_model is None:
                self.fisher_model = _load(fisher.load_model, cfg.fisher, "fisher")
        self.grid: HeatGrid | None = None
        self.tracker: Tracker | None = None
        self.counters = {ln.label: FootfallCounter(ln) for ln in cfg.lines}
        self.tally = GenderTally()
        self.persons_emitted = 0
        self._last_ts = 0
        self._lock = threading.Lock()

    # -- helpers
    def _timestamp(self, frame_index: int) -> int:
        if self.cfg.start_ts is not None:
            period = 1000.0 / self.cfg.fps if self.cfg.fps > 0 else 1000.0 / 15.0
            ts = self.cfg.start_ts + int(round(frame_index * period))
        else:
            ts = int(time.time() * 1000)
        ts = max(ts, self._last_ts)
        self._last_ts = ts
        return ts

    def heatmap_bytes(self) -> bytes | None:
        with self._lock:
            if self.grid is None:
                return None
            return encode_pnm(analytics.render_heat(self.grid))

    # -- per-frame work
    def _footfall(self, gray: GrayImage, ts: int, lat: dict) -> list[Event]:
        cfg = self.cfg
        if self.grid is None:
            self.grid = HeatGrid(cfg.grid_n, gray.width, gray.height)
            gate = cfg.gate if cfg.gate else analytics.default_gate(gray.width, gray.height)
            self.tracker = Tracker(gate, cfg.max_missed)
        t0 = time.perf_counter()
        dets = []
        if gray.width >= hogdetect.WINDOW_W and gray.height >= hogdetect.WINDOW_H:
            dets = sort_detections(hogdetect.detect(gray, self.svm, cfg.scale_step, cfg.stride,
                                                    cfg.min_score, cfg.iou))
        t1 = time.perf_counter()
        events = []
        with self._lock:
            self.grid.update(dets)
        for d in dets:
            r = d.rect
            events.append(Event(ts, "person", {"x": r.x, "y": r.y, "w": r.w, "h": r.h,
                                               "score": f"{d.score:.4f}", "fw": gray.width,
                                               "fh": gray.height}))
        self.persons_emitted += len(dets)
        centroids = [d.rect.center for d in dets]
        for track_id, label, direction in analytics.count_crossings(self.tracker, cfg.lines, centroids):
            counter = self.counters[label]
            counter.record(direction)
            raw, clamped = analytics.occupancy(counter)
            events.append(Event(ts, "crossing", {"line": label, "direction": direction,
                                                 "track": track_id}))
            events.append(Event(ts, "occupancy", {"line": label, "value": clamped, "raw": raw}))
        lat["detect"] += t1 - t0
        lat["analytics"] += time.perf_counter() - t1
        return events

    def _gender(self, gray: GrayImage, ts: int, lat: dict) -> list[Event]:
        t0 = time.perf_counter()
        faces = []
        if gray.width >= self.cascade.base and gray.height >= self.cascade.base:
            faces = sort_detections(boostcascade.detect_faces(gray, self.cascade,
                                                              iou_thresh=self.cfg.iou))
        t1 = time.perf_counter()
        events = []
        m = self.fisher_model
        for d in faces:
            r = d.rect
            crop = resize(gray.crop(r), m.image_w, m.image_h)
            label, dist = fisher.predict(m, crop)
            self.tally.record(label)
            events.append(Event(ts, "face", {"x": r.x, "y": r.y, "w": r.w, "h": r.h,
                                             "score": f"{d.score:.4f}"}))
            events.append(Event(ts, "gender", {"label": label, "distance": f"{dist:.4f}"}))
        lat["detect"] += t1 - t0
        lat["classify"] += time.perf_counter() - t1
        return events

    # -- loop
    def run(self, src: FrameSource, quit=None) -> PipelineStats:
        cfg = self.cfg
        stats = PipelineStats()
        slot = _Slot()
        stop = threading.Event()
        errors: list[str] = []
        offered = [0]
        decode_total = [0.0, 0.0]  # sum, max
        paced = not src.live and cfg.fps > 0
        lossless = not src.live and cfg.fps <= 0
        period = 1.0 / cfg.fps if cfg.fps > 0 else 0.05

        def acquire():
            t0 = time.perf_counter()
            try:
                for i, frame in enumerate(src):
                    decode_total[0] += src.decode_seconds
                    decode_total[1] = max(decode_total[1], src.decode_seconds)
                    if paced:
                        delay = t0 + i / cfg.fps - time.perf_counter()
                        if delay > 0 and stop.wait(delay):
                            break
                    if stop.is_set():
                        break
                    offered[0] += 1
                    slot.put((i, frame), block=lossless, stop=stop)
            except SourceFailure as exc:
                errors.append(str(exc))
            except Exception as exc:  # surfaced through stats, never swallowed silently
                log.exception("frame source failed")
                errors.append(f"{type(exc).__name__}: {exc}")
            finally:
                slot.put(_Slot._END, block=True, stop=stop)

        producer = threading.Thread(target=acquire, name="crowdlens-acquire", daemon=True)
        lat = {s: 0.0 for s in STAGES}
        lat_max = {s: 0.0 for s in STAGES}
        first_start = last_end = None
        producer.start()
        try:
            while True:
                if _quit_requested(quit):
                    break
                item = slot.get(timeout=period)
                if item is None:
                    continue
                if item is _Slot._END:
                    break
                index, frame = item
                start = time.perf_counter()
                if first_start is None:
                    first_start = start
                frame_lat = {s: 0.0 for s in STAGES}
                gray = to_gray(frame)
                ts = self._timestamp(index)
                if cfg.mode == "footfall":
                    events = self._footfall(gray, ts, frame_lat)
                    if cfg.overlay_dir:
                        self._write_overlay(frame, index)
                else:
                    events = self._gender(gray, ts, frame_lat)
                t_log = time.perf_counter()
                for e in events:
                    for sink in self.sinks:
                        sink(e)
                frame_lat["log"] = time.perf_counter() - t_log
                last_end = time.perf_counter()
                for s in STAGES:
                    lat[s] += frame_lat[s]
                    lat_max[s] = max(lat_max[s], frame_lat[s])
                stats.frames_processed += 1
                stats.events += len(events)
                stats.detections += sum(e.kind in ("person", "face") for e in events)
        finally:
            stop.set()
            producer.join(timeout=5)
            pending = slot.discard()
            src.close()

        stats.frames_offered = offered[0]
        stats.frames_dropped = slot.dropped + pending
        n = max(stats.frames_processed, 1)
        lat["decode"] = decode_total[0]
        lat_max["decode"] = decode_total[1]
        stats.latency_ms = {s: 1000.0 * lat[s] / (n if s != "decode" else max(offered[0], 1))
                            for s in STAGES}
        stats.max_latency_ms = {s: 1000.0 * v for s, v in lat_max.items()}
        if first_start is not None and last_end is not None and last_end > first_start:
            stats.active_seconds = last_end - first_start
            stats.avg_fps = stats.frames_processed / stats.active_seconds
        if errors:
            stats.error = errors[0]
        self._write_outputs()
        return stats

    def _write_overlay(self, frame: PixelBuffer, index: int) -> None:
        out = Path(self.cfg.overlay_dir)
        out.mkdir(parents=True, exist_ok=True)
        with self._lock:
            img = analytics.overlay_heat(frame, self.grid)
        (out / f"overlay_{index:06d}.ppm").write_bytes(encode_pnm(img))

    def _write_outputs(self) -> None:
        if self.grid is None:
            return
        if self.cfg.heatmap_path:
            Path(self.cfg.heatmap_path).write_bytes(self.heatmap_bytes())
        if self.cfg.grid_path:
            self.grid.save(self.cfg.grid_path)


def _load(loader, path, what: str):
    if not path:
        raise ModelLoadFailure(f"config has no '{what}' model path")
    try:
        return loader(path)
    except (OSError, ValueError) as exc:
        raise ModelLoadFailure(f"cannot load {what} model {path}: {exc}") from exc


def run(cfg: ModeConfig, src: FrameSource | None = None, sinks=(), quit=None, **models) -> PipelineStats:
    """Run one mode to source exhaustion or quit.

    Without ``src`` the config's ``source`` URI is opened. When the config
    names a ``log_path`` the event log is appended to as an extra sink.
    """
    pipe = Pipeline(cfg, sinks=sinks, **models)
    own_log = None
    if cfg.log_path:
        own_log = EventLog(cfg.log_path)
        pipe.sinks.append(own_log.append)
    try:
        if src is None:
            src = open_source(cfg.source, cfg.fps)
        return pipe.run(src, quit)
    finally:
        if own_log is not None:
            own_log.close()
