"""Command-line entry point: ``crowdlens <subcommand> ...``.

Exit codes are 0 on success, 1 on runtime failure and 2 on usage errors.
"""
from __future__ import annotations

import argparse
import logging
import os
import signal
import sys
import threading
from pathlib import Path

import numpy as np

from . import boostcascade, eventstore, fisher, hogdetect
from .analytics import HeatGrid, render_heat
from .errors import CrowdlensError
from .imgcore import Rect, read_pnm, resize, to_gray, write_pnm
from .pipeline import load_config, run as run_pipeline

log = logging.getLogger("crowdlens")

_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO,
           "debug": logging.DEBUG}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Reports usage mistakes as one line instead of the full usage block."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="crowdlens", description="People analytics over frame streams.")
    sub = p.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)
    sub.required = True

    tc = sub.add_parser("train-cascade", help="train a boosted Haar face cascade")
    tc.add_argument("--pos", required=True, help="directory of face windows (PGM)")
    tc.add_argument("--neg", required=True, help="directory of face-free images (PGM)")
    tc.add_argument("--out", required=True)
    tc.add_argument("--seed", type=int, default=0)
    tc.add_argument("--stages", type=int, default=10)
    tc.add_argument("--rounds", type=int, default=50, help="maximum rounds per stage")
    tc.add_argument("--neg-per-image", type=int, default=10,
                    help="random 24x24 crops drawn from each larger negative image")

    tf = sub.add_parser("train-fisher", help="train a Fisherfaces gender model")
    tf.add_argument("--data", required=True, help="directory of face images (PGM)")
    tf.add_argument("--labels", required=True, help="file of '<filename> <label>' lines")
    tf.add_argument("--out", required=True)
    tf.add_argument("--seed", type=int, default=0)
    tf.add_argument("--size", type=int, default=fisher.FACE_SIZE, help="square input side")

    th = sub.add_parser("train-hog", help="train the HOG person SVM")
    th.add_argument("--pos", required=True, help="directory of person windows (PGM)")
    th.add_argument("--neg", required=True, help="directory of person-free images (PGM)")
    th.add_argument("--out", required=True)
    th.add_argument("--seed", type=int, default=0)
    th.add_argument("--lam", type=float, default=1e-4)
    th.add_argument("--epochs", type=int, default=100)
    th.add_argument("--neg-per-image", type=int, default=10)

    rn = sub.add_parser("run", help="run the gender or footfall pipeline")
    rn.add_argument("--config", required=True)
    rn.add_argument("--log", help="event log path (overrides the config)")

    rp = sub.add_parser("report", help="aggregate an event log")
    rp.add_argument("--log", required=True)
    rp.add_argument("--bucket", choices=("hour", "dow"), default="hour")
    rp.add_argument("--tz", type=int, default=0, help="offset from UTC in minutes")
    rp.add_argument("--from", dest="start", type=int, help="first timestamp (ms, inclusive)")
    rp.add_argument("--to", dest="end", type=int, help="last timestamp (ms, exclusive)")
    rp.add_argument("--format", choices=("text", "tsv"), default="text")

    rh = sub.add_parser("render-heatmap", help="render a heat grid as a P6 image")
    src = rh.add_mutually_exclusive_group(required=True)
    src.add_argument("--log", help="event log whose person events fill the grid")
    src.add_argument("--grid", help="GRID file written by a run")
    rh.add_argument("--out", required=True)
    rh.add_argument("--config", help="run config supplying grid_n")
    rh.add_argument("--n", type=int, help="grid side (default 16)")

    sv = sub.add_parser("serve", help="serve /stats and /heatmap.ppm over HTTP")
    sv.add_argument("--log", required=True)
    sv.add_argument("--port", type=int, required=True)
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--heatmap", help="P6 file returned by /heatmap.ppm")
    return p


# ------------------------------------------------------------ helpers

def _pgm_files(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"{d} is not a directory")
    return sorted(p for p in d.iterdir() if p.suffix.lower() in (".pgm", ".ppm", ".pnm"))


def _windows(directory, w: int, h: int) -> list[np.ndarray]:
    return [resize(to_gray(read_pnm(p)), w, h).pixels for p in _pgm_files(directory)]


def _negative_windows(directory, w: int, h: int, per_image: int, rng) -> list[np.ndarray]:
    """Exact-size images are used whole; larger ones give random crops."""
    out = []
    for p in _pgm_files(directory):
        img = to_gray(read_pnm(p))
        if (img.width, img.height) == (w, h):
            out.append(img.pixels)
        elif img.width >= w and img.height >= h:
            for _ in range(per_image):
                x = int(rng.integers(0, img.width - w + 1))
                y = int(rng.integers(0, img.height - h + 1))
                out.append(img.crop(Rect(x, y, w, h)).pixels)
        else:
            out.append(resize(img, w, h).pixels)
    return out


# -------------------------------------------------------- subcommands

def cmd_train_cascade(a) -> int:
    rng = np.random.default_rng(a.seed)
    base = boostcascade.BASE_WINDOW
    pos = _windows(a.pos, base, base)
    neg = _negative_windows(a.neg, base, base, a.neg_per_image, rng)
    # larger face-free images also feed bootstrapping between stages
    backgrounds = [img for img in (to_gray(read_pnm(p)) for p in _pgm_files(a.neg))
                   if img.width > base or img.height > base]
    cascade = boostcascade.train_cascade(pos, neg, max_stages=a.stages, max_rounds=a.rounds,
                                         neg_images=backgrounds)
    boostcascade.save_cascade(cascade, a.out)
    for k, s in enumerate(cascade.stage_stats):
        log.info("stage %d: rounds=%d detect=%.3f false_pos=%.3f", k, s["rounds"], s["detect"],
                 s["false_pos"])
    print(f"wrote {a.out}: {len(cascade.stages)} stages")
    return 0


def cmd_train_fisher(a) -> int:
    labels = {}
    for n, line in enumerate(Path(a.labels).read_text().splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{a.labels}:{n}: expected '<filename> <label>'")
        labels[parts[0]] = parts[1]
    images, names = [], []
    for p in _pgm_files(a.data):
        if p.name in labels:
            images.append(resize(to_gray(read_pnm(p)), a.size, a.size))
            names.append(labels[p.name])
    missing = sorted(set(labels) - {p.name for p in _pgm_files(a.data)})
    if missing:
        raise FileNotFoundError(f"labelled images not found in {a.data}: {', '.join(missing[:5])}")
    model = fisher.FisherFaces().fit_images(images, names).model_
    fisher.save_model(model, a.out)
    print(f"wrote {a.out}: classes {' '.join(model.names)}")
    return 0


def cmd_train_hog(a) -> int:
    rng = np.random.default_rng(a.seed)
    pos = _windows(a.pos, hogdetect.WINDOW_W, hogdetect.WINDOW_H)
    neg = _negative_windows(a.neg, hogdetect.WINDOW_W, hogdetect.WINDOW_H, a.neg_per_image, rng)
    if not pos or not neg:
        raise ValueError("need at least one positive and one negative window")
    hog = hogdetect.HogTransformer()
    X = hog.transform(np.stack(pos + neg))
    y = np.r_[np.ones(len(pos)), -np.ones(len(neg))]
    svm = hogdetect.LinearSVM(lam=a.lam, epochs=a.epochs, seed=a.seed).fit(X, y)
    hogdetect.save_svm(svm, a.out)
    print(f"wrote {a.out}: objective {svm.objective(X, y):.4f}")
    return 0


def _quit_on_q(quit: threading.Event) -> None:
    for line in sys.stdin:
        if line.strip().lower() == "q":
            quit.set()
            return


def cmd_run(a) -> int:
    cfg = load_config(a.config)
    if a.log:
        cfg.log_path = a.log
    quit = threading.Event()
    previous = signal.signal(signal.SIGINT, lambda *_: quit.set()) \
        if threading.current_thread() is threading.main_thread() else None
    if sys.stdin is not None and sys.stdin.isatty():
        threading.Thread(target=_quit_on_q, args=(quit,), daemon=True).start()
    try:
        stats = run_pipeline(cfg, quit=quit)
    finally:
        if previous is not None:
            signal.signal(signal.SIGINT, previous)
    print(stats.summary())
    if stats.error:
        print(f"crowdlens: error: source failed: {stats.error}", file=sys.stderr)
        return 1
    return 0


def _table(title: str, labels, values) -> str:
    width = max(len(str(k)) for k in labels)
    rows = [title] + [f"  {str(k):>{width}}  {v}" for k, v in zip(labels, values)]
    return "\n".join(rows)


_DOW = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")


def cmd_report(a) -> int:
    if not Path(a.log).exists():
        raise FileNotFoundError(f"no such log: {a.log}")
    rep = eventstore.report(eventstore.load(a.log, a.start, a.end), a.bucket, a.tz)
    if a.bucket == "hour":
        labels, values = [f"{h:02d}" for h in range(24)], rep.hourly
    else:
        labels, values = list(_DOW), rep.day_of_week
    if a.format == "tsv":
        print("bucket\tentries")
        for k, v in zip(labels, values):
            print(f"{k}\t{v}")
        for name, count in rep.gender_counts.items():
            print(f"gender:{name}\t{count}")
        return 0
    print(_table("entries per hour" if a.bucket == "hour" else "entries per weekday", labels, values))
    print()
    print(f"entries {rep.entries}  exits {rep.exits}  "
          f"occupancy {rep.occupancy[-1][1] if rep.occupancy else 0}  "
          f"peak hour {'-' if rep.peak_hour is None else f'{rep.peak_hour:02d}'}")
    if rep.gender_counts:
        print()
        print(_table("gender", list(rep.gender_counts),
                     [f"{c} ({rep.gender_split[k]:.1%})" for k, c in rep.gender_counts.items()]))
    return 0


def cmd_render_heatmap(a) -> int:
    if a.grid:
        grid = HeatGrid.load(a.grid)
    else:
        n = a.n or (load_config(a.config).grid_n if a.config else 16)
        if not Path(a.log).exists():
            raise FileNotFoundError(f"no such log: {a.log}")
        persons = [e for e in eventstore.load(a.log) if e.kind == "person"]
        if not persons:
            raise ValueError(f"{a.log} holds no person events")
        d = persons[0].data
        grid = HeatGrid(n, int(d["fw"]), int(d["fh"]))
        grid.update(Rect(int(e.data["x"]), int(e.data["y"]), int(e.data["w"]), int(e.data["h"]))
                    for e in persons)
    img = render_heat(grid)
    write_pnm(a.out, img)
    print(f"wrote {a.out}: {img.width}x{img.height}, {grid.total} detections")
    return 0


def cmd_serve(a) -> int:
    server = eventstore.serve_stats(a.log, a.port, a.heatmap, a.host)
    print(f"serving http://{a.host}:{server.port}/stats", flush=True)
    stop = threading.Event()
    signal.signal(signal.SIGINT, lambda *_: stop.set())
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    server.serve_until(stop)
    return 0


COMMANDS = {
    "train-cascade": cmd_train_cascade,
    "train-fisher": cmd_train_fisher,
    "train-hog": cmd_train_hog,
    "run": cmd_run,
    "report": cmd_report,
    "render-heatmap": cmd_render_heatmap,
    "serve": cmd_serve,
}


def parse_args(argv=None) -> argparse.Namespace:
    return build_parser().parse_args(argv)


def main(argv=None) -> int:
    level = os.environ.get("CROWDLENS_LOG_LEVEL", "warn").lower()
    logging.basicConfig(level=_LEVELS.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"{exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 2
    try:
        return COMMANDS[args.command](args)
    except (CrowdlensError, OSError, ValueError) as exc:
        print(f"crowdlens: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
