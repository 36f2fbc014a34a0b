import subprocess
import sys

import numpy as np

from crowdlens import boostcascade, eventstore, fisher, hogdetect, synth
from crowdlens.cli import main, parse_args
from crowdlens.imgcore import GrayImage, read_pnm, write_pnm


def write_dir(path, windows, prefix="img"):
    path.mkdir()
    for i, w in enumerate(windows):
        write_pnm(path / f"{prefix}_{i:03d}.pgm", GrayImage(w))
    return path


def fixture_config(walker_dir, tmp_path, **extra):
    text = (walker_dir / "run.conf").read_text()
    text = text.replace("pnmdir:frames", f"pnmdir:{walker_dir / 'frames'}")
    text = text.replace("svm person.svm", f"svm {extra.pop('svm', walker_dir / 'person.svm')}")
    text = text.replace("fps 15", "fps 0")
    for k, v in extra.items():
        text += f"{k} {v}\n"
    path = tmp_path / "run.conf"
    path.write_text(text)
    return path


def test_help(capsys):
    assert main(["--help"]) == 0
    assert "render-heatmap" in capsys.readouterr().out


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "crowdlens", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "train-cascade" in out.stdout


def test_usage_errors(capsys):
    assert main(["run"]) == 2
    err = capsys.readouterr().err.strip()
    assert "--config" in err and "\n" not in err
    assert main([]) == 2
    assert main(["report", "--log", "x.log", "--bucket", "minute"]) == 2


def test_parse_report_args():
    a = parse_args(["report", "--log", "x.log", "--bucket", "hour", "--tz", "330"])
    assert (a.log, a.bucket, a.tz, a.format) == ("x.log", "hour", 330, "text")


def test_run_fixture(walker_dir, tmp_path, capsys):
    conf = fixture_config(walker_dir, tmp_path, heatmap_path=tmp_path / "h.ppm")
    assert main(["run", "--config", str(conf), "--log", str(tmp_path / "e.log")]) == 0
    out = capsys.readouterr().out
    assert "fps=" in out and "frames=30" in out
    events = eventstore.load(tmp_path / "e.log")
    assert [e.data["direction"] for e in events if e.kind == "crossing"] == ["in", "in"]
    img = read_pnm(tmp_path / "h.ppm")
    assert (img.width, img.height, img.channels) == (320, 240, 3)

    assert main(["report", "--log", str(tmp_path / "e.log")]) == 0
    text = capsys.readouterr().out
    assert "entries 2" in text and "peak hour 09" in text
    assert main(["report", "--log", str(tmp_path / "e.log"), "--format", "tsv", "--bucket", "dow"]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert rows[0] == "bucket\tentries" and "Tue\t2" in rows

    assert main(["render-heatmap", "--log", str(tmp_path / "e.log"), "--out", str(tmp_path / "r.ppm")]) == 0
    capsys.readouterr()
    assert (tmp_path / "r.ppm").read_bytes() == (tmp_path / "h.ppm").read_bytes()


def test_missing_model_names_path(walker_dir, tmp_path, capsys):
    missing = tmp_path / "gone.svm"
    conf = fixture_config(walker_dir, tmp_path, svm=missing)
    assert main(["run", "--config", str(conf)]) == 1
    err = capsys.readouterr().err
    assert str(missing) in err and err.startswith("crowdlens: error:")


def test_missing_cascade(tmp_path, capsys):
    conf = tmp_path / "g.conf"
    conf.write_text(f"mode gender\nsource pnmdir:{tmp_path}\ncascade faces.cascade\nfisher g.fisher\n")
    assert main(["run", "--config", str(conf)]) == 1
    assert str(tmp_path / "faces.cascade") in capsys.readouterr().err


def test_missing_log_and_config(tmp_path, capsys):
    assert main(["report", "--log", str(tmp_path / "none.log")]) == 1
    assert main(["run", "--config", str(tmp_path / "none.conf")]) == 1
    errs = capsys.readouterr().err.strip().splitlines()
    assert len(errs) == 2 and all(e.startswith("crowdlens: error:") for e in errs)


def test_train_hog(tmp_path, capsys):
    rng = np.random.default_rng(0)
    pos = write_dir(tmp_path / "pos", [synth.bar_figure(rng) for _ in range(30)])
    neg = write_dir(tmp_path / "neg", [synth.noise_frame(rng, 160, 160) for _ in range(3)])
    out = tmp_path / "p.svm"
    assert main(["train-hog", "--pos", str(pos), "--neg", str(neg), "--out", str(out),
                 "--epochs", "5"]) == 0
    svm = hogdetect.load_svm(out)
    assert svm.coef_.shape == (hogdetect.DESCRIPTOR_LEN,)


def test_train_fisher(tmp_path, capsys):
    rng = np.random.default_rng(1)
    images, labels = synth.gender_faces(rng, 8)
    data = write_dir(tmp_path / "faces", [im.pixels for im in images], "f")
    (tmp_path / "labels.txt").write_text(
        "".join(f"f_{i:03d}.pgm {lb}\n" for i, lb in enumerate(labels)))
    out = tmp_path / "g.fisher"
    assert main(["train-fisher", "--data", str(data), "--labels", str(tmp_path / "labels.txt"),
                 "--out", str(out)]) == 0
    assert fisher.load_model(out).names == ("female", "male")


def test_train_cascade(tmp_path, capsys):
    rng = np.random.default_rng(2)
    pos = write_dir(tmp_path / "pos", [synth.face_window(rng) for _ in range(30)])
    neg = write_dir(tmp_path / "neg", [synth.nonface_window(rng) for _ in range(40)])
    out = tmp_path / "f.cascade"
    assert main(["train-cascade", "--pos", str(pos), "--neg", str(neg), "--out", str(out),
                 "--stages", "2", "--rounds", "3"]) == 0
    assert 1 <= len(boostcascade.load_cascade(out).stages) <= 2


def test_exit_codes_are_bounded(tmp_path, capsys):
    codes = [main(a) for a in (["report", "--log", str(tmp_path / "x")], ["bogus"], ["serve"],
                               ["render-heatmap", "--out", "x.ppm"])]
    assert set(codes) <= {0, 1, 2}
