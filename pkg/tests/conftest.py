from pathlib import Path

import numpy as np
import pytest

from crowdlens import boostcascade, fisher, hogdetect, synth

FIXTURES = Path(__file__).resolve().parent / "fixtures"
WALKERS = FIXTURES / "walkers"

_acceptance: dict[int, tuple[str, str]] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def walker_dir():
    return WALKERS


@pytest.fixture(scope="session")
def person_svm():
    return hogdetect.load_svm(WALKERS / "person.svm")


@pytest.fixture(scope="session")
def face_cascade():
    rng = np.random.default_rng(7)
    pos = [synth.face_window(rng) for _ in range(200)]
    neg = [synth.nonface_window(rng) for _ in range(400)]
    backgrounds = [synth.noise_frame(rng, 160, 120) for _ in range(10)]
    for bg in backgrounds[:5]:
        for _ in range(4):
            x, y = rng.integers(0, 136), rng.integers(0, 96)
            bg[y:y + 24, x:x + 24] = synth.nonface_window(rng)
    return boostcascade.train_cascade(pos, neg, max_stages=6, max_rounds=30, neg_images=backgrounds)


@pytest.fixture(scope="session")
def gender_model():
    rng = np.random.default_rng(21)
    images, labels = synth.gender_faces(rng, 40)
    return fisher.FisherFaces().fit_images(images, labels).model_


# ---------------------------------------------------------- acceptance log

def pytest_runtest_logreport(report):
    item_marker = getattr(report, "acceptance", None)
    if item_marker is None:
        return
    number, title = item_marker
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance[number] = (title, "PASS" if report.outcome == "passed" else "FAIL")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        outcome.get_result().acceptance = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        title, verdict = _acceptance[number]
        terminalreporter.write_line(f"criterion {number}: {verdict}  {title}")
