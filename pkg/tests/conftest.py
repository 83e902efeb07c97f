import dataclasses
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from distok.codec import CodecConfig, train_codec  # noqa: E402
from distok.corpus import make_tone_corpus, read_manifest  # noqa: E402
from distok.detector import DetectorConfig, split_heldout, train_detector  # noqa: E402

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# Peaks on the tone corpus come in pairs around each transition; distance 3 merges them.
DESK_DETECTOR = DetectorConfig(distance=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tone_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("tones")
    manifest, utts = make_tone_corpus(out, 30, seed=0)
    return manifest, utts


@pytest.fixture(scope="session")
def heldout_utterances(tone_corpus):
    manifest, utts = tone_corpus
    paths = read_manifest(manifest)
    _, held = split_heldout(list(zip(paths, utts)))
    return held


@pytest.fixture(scope="session")
def trained_detector(tone_corpus, tmp_path_factory):
    manifest, _ = tone_corpus
    ckpt = tmp_path_factory.mktemp("det") / "detector.dgrd"
    res = train_detector(manifest, DESK_DETECTOR, steps=200, seed=0, out=ckpt)
    return res, ckpt


@pytest.fixture(scope="session")
def detector(trained_detector):
    res, _ = trained_detector
    return dataclasses.replace(res.model, cfg=DESK_DETECTOR)


@pytest.fixture(scope="session")
def trained_codec(tone_corpus, detector, tmp_path_factory):
    manifest, _ = tone_corpus
    ckpt = tmp_path_factory.mktemp("codec") / "codec.dgrd"
    res = train_codec(manifest, detector, CodecConfig(), steps=500, seed=0, out=ckpt)
    return res, ckpt


# -- acceptance summary ---------------------------------------------------------------------------
_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, label, budget = marker.args
    entry = _CRITERIA.setdefault(number, {"label": label, "budget": budget, "seconds": 0.0, "ok": True})
    entry["seconds"] += rep.duration
    if rep.failed:
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        ok = e["ok"] and e["seconds"] <= e["budget"]
        status = "PASS" if ok else "FAIL"
        note = "" if e["seconds"] <= e["budget"] else " over budget"
        terminalreporter.write_line(
            f"criterion {number:>2} {status}  {e['label']}  ({e['seconds']:.1f} s of {e['budget']} s{note})")
