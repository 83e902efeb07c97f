"""Train the boundary detector on synthetic tones and compare its cuts with the true transitions.

Takes about a minute on one CPU core. Pass a step count to shorten it: ``python 02_boundaries.py 50``.
"""
import sys
import tempfile
from pathlib import Path

import numpy as np

from distok.corpus import load_audio, make_tone_corpus, read_manifest
from distok.detector import DetectorConfig, boundary_f1, detect_boundaries, split_heldout, train_detector

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 200
work = Path(tempfile.mkdtemp(prefix="distok-demo-"))

# Every tone segment lasts 10 to 20 detector frames, each frame being 320 samples.
manifest, utts = make_tone_corpus(work / "tones", 20, seed=0)
cfg = DetectorConfig(distance=3)
res = train_detector(manifest, cfg, steps=steps, seed=0)
print(f"held-out contrastive loss {res.heldout_initial:.3f} -> {res.heldout_final:.3f}")

_, held = split_heldout(list(zip(read_manifest(manifest), utts)))
scores = []
for path, utt in held:
    found = detect_boundaries(load_audio(path), res.model).indices
    truth = [b // cfg.downsample_ratio for b in utt.boundaries_samples]
    scores.append(boundary_f1(found, truth, tolerance=2))
    print(f"{Path(path).name}: true  {truth}")
    print(f"{' ' * len(Path(path).name)}  found {list(found)}")
print(f"mean boundary F1 over {len(held)} held-out utterances: {np.mean(scores):.3f}")
