"""Manifests, boundary dumps, and the synthetic tone corpus used for desk-scale runs."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import AudioBuffer, CANONICAL_RATE, read_wav, resample_linear, write_wav


class CorpusError(OSError):
    pass


def read_manifest(path):
    """One WAV path per line; relative paths resolve against the manifest's directory."""
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"manifest not found: {path}")
    entries = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        p = Path(line)
        entries.append(p if p.is_absolute() else path.parent / p)
    if not entries:
        raise CorpusError(f"manifest is empty: {path}")
    return entries


def write_manifest(paths, path):
    Path(path).write_text("".join(f"{p}\n" for p in paths))


def load_audio(path, rate=CANONICAL_RATE):
    try:
        buf = read_wav(path)
    except (OSError, ValueError) as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc
    return resample_linear(buf, rate)


def write_boundary_dump(items, path):
    """``items`` is an iterable of ``(utterance_path, boundary_indices)``."""
    lines = [f"{p}: {','.join(str(int(b)) for b in bs)}\n" for p, bs in items]
    Path(path).write_text("".join(lines))


def read_boundary_dump(path):
    out = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        name, _, rest = line.rpartition(":")
        rest = rest.strip()
        out.append((name, [int(v) for v in rest.split(",")] if rest else []))
    return out


@dataclass(frozen=True)
class ToneUtterance:
    audio: AudioBuffer
    boundaries_samples: tuple  # interior transition points, in samples
    freqs: tuple


def tone_utterance(rng, duration=3.0, rate=CANONICAL_RATE, frame_hop=320,
                   min_frames=10, max_frames=20, freq_step=50, freq_range=(150, 2000)):
    """Concatenated constant tones with transitions on ``frame_hop`` multiples.

    Segment lengths are drawn from ``[min_frames, max_frames]``; a short tail is
    merged into the last segment. Frequencies are multiples of ``freq_step``
    so that, with the default 320-sample hop at 16 kHz, every frame sees the
    same phase of its tone.
    """
    n_frames = int(round(duration * rate / frame_hop))
    lengths = []
    while sum(lengths) < n_frames:
        lengths.append(int(rng.integers(min_frames, max_frames + 1)))
    lengths[-1] -= sum(lengths) - n_frames
    if lengths[-1] < min_frames and len(lengths) > 1:
        tail = lengths.pop()
        lengths[-1] += tail
    choices = np.arange(freq_range[0], freq_range[1] + 1, freq_step)
    freqs, prev = [], None
    for _ in lengths:
        pool = choices if prev is None else choices[np.abs(choices - prev) >= 3 * freq_step]
        prev = int(rng.choice(pool))
        freqs.append(prev)
    pieces = []
    for f, n in zip(freqs, lengths):
        t = np.arange(n * frame_hop) / rate
        pieces.append(rng.uniform(0.3, 0.7) * np.sin(2 * np.pi * f * t))
    bounds = tuple(int(b) * frame_hop for b in np.cumsum(lengths)[:-1])
    return ToneUtterance(AudioBuffer(np.concatenate(pieces), rate), bounds, tuple(freqs))


def make_tone_corpus(out_dir, n_utterances, seed=0, **kwargs):
    """Write a tone corpus; returns ``(manifest_path, [ToneUtterance, ...])``.

    Besides ``manifest.txt`` a ``truth.txt`` dump lists true transitions in samples.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    utts, paths = [], []
    for i in range(n_utterances):
        utt = tone_utterance(rng, **kwargs)
        p = out_dir / f"tone_{i:04d}.wav"
        write_wav(utt.audio, p)
        utts.append(utt)
        paths.append(p.name)
    manifest = out_dir / "manifest.txt"
    write_manifest(paths, manifest)
    write_boundary_dump(zip(paths, (u.boundaries_samples for u in utts)), out_dir / "truth.txt")
    return manifest, utts


def cluster_latents(n, dim=8, k=4, spread=0.3, seed=0):
    """Gaussian blobs around ``k`` standard-normal centres; returns ``(latents[n, dim], labels)``."""
    rng = np.random.default_rng(seed)
    centres = rng.standard_normal((k, dim))
    labels = rng.integers(0, k, n)
    return centres[labels] + spread * rng.standard_normal((n, dim)), labels
