"""``distok`` command line: training, tokenization, evaluation, and codebook analysis."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .audio import write_wav
from .codec import Codec, decode, encode, read_stream, train_codec, write_stream
from .config import RunConfig
from .corpus import load_audio, read_manifest
from .detector import Detector, train_detector
from .evalkit import (
    MetricReport,
    UtteranceMetrics,
    codebook_utilization,
    mel_error,
    stft_distance,
    stoi,
    stream_bps,
    stream_tkr,
    write_frequency_csv,
    write_report,
    write_utilization,
)

IDENTITY = "identity"


def _write_curve(history, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "loss"])
        w.writerows((s, repr(v)) for s, v in history)


def _curve_path(out):
    out = Path(out)
    return out.with_name(out.name + ".loss.csv")


def _load_codec(path, cfg_path):
    cfg = RunConfig.load(cfg_path).codec_config() if cfg_path else None
    return Codec.load(path, cfg)


def cmd_train_detector(args):
    cfg = RunConfig.load(args.config)
    res = train_detector(args.manifest, cfg.detector_config(), steps=cfg.get("training", "detector_steps"),
                         seed=args.seed, out=args.out)
    _write_curve(res.history, _curve_path(args.out))
    print(f"heldout_initial={res.heldout_initial:.6f} heldout_final={res.heldout_final:.6f}")


def cmd_train_codec(args):
    cfg = RunConfig.load(args.config)
    det = Detector.load(args.detector, cfg.detector_config())
    res = train_codec(args.manifest, det, cfg.codec_config(), steps=cfg.get("training", "codec_steps"),
                      seed=args.seed, out=args.out)
    _write_curve(res.history, _curve_path(args.out))
    print(f"heldout_initial={res.heldout_initial:.6f} heldout_final={res.heldout_final:.6f}")


def cmd_encode(args):
    cfg = RunConfig.load(args.config)
    det = Detector.load(args.detector, cfg.detector_config())
    codec = _load_codec(args.codec, args.config)
    stream = encode(load_audio(args.input, codec.cfg.sample_rate), det, codec)
    write_stream(stream, args.out)
    payload, _ = stream_bps(stream)
    print(f"segments={len(stream.records)} tkr={float(stream_tkr(stream))!r} bps={float(payload)!r}")


def cmd_decode(args):
    stream = read_stream(args.input)
    audio = decode(stream, _load_codec(args.codec, args.config))
    write_wav(audio, args.out)
    print(f"samples={len(audio)} rate={audio.sample_rate}")


def _evaluate(path, x, x_hat, stream, want_stoi):
    if stream is None:
        tkr_v = bps_p = bps_t = 0
    else:
        tkr_v = stream_tkr(stream)
        bps_p, bps_t = stream_bps(stream)
    score = stoi(x, x_hat) if want_stoi else 0.0
    return UtteranceMetrics(str(path), mel_error(x, x_hat), stft_distance(x, x_hat), score,
                            tkr_v, bps_p, bps_t)


def cmd_eval(args):
    cfg = RunConfig.load(args.config)
    identity = args.codec == IDENTITY
    if not identity:
        if args.detector is None:
            raise ValueError("--detector is required unless --codec identity")
        det = Detector.load(args.detector, cfg.detector_config())
        codec = _load_codec(args.codec, args.config)
    rows = []
    for path in read_manifest(args.manifest):
        x = load_audio(path)
        if identity:
            rows.append(_evaluate(path, x, x, None, cfg.get("eval", "stoi")))
            continue
        stream = encode(x, det, codec)
        x_hat = decode(stream, codec)
        rows.append(_evaluate(path, x, x_hat, stream, cfg.get("eval", "stoi")))
    report = MetricReport.aggregate(rows)
    write_report(report, args.report)
    print(f"utterances={len(rows)} mel_error={report.mel_error:.6f} stoi={report.stoi:.4f}")


def cmd_analyze(args):
    paths = sorted(Path(args.streams).glob("*.dtok"))
    if not paths:
        raise FileNotFoundError(f"no .dtok files in {args.streams}")
    streams = [read_stream(p) for p in paths]
    vocab = args.vocab if args.vocab is not None else streams[0].spec.vocab_size
    top = args.top if args.top is not None else RunConfig.load(args.config).get("eval", "top_k")
    rep = codebook_utilization(streams, vocab)
    write_utilization(rep, args.report)
    write_frequency_csv(rep, Path(args.report).with_suffix(".csv"), top=top)
    print(f"streams={len(streams)} used={rep.used_count} vocab={vocab} utilization={rep.utilization_rate:.6g}")


def build_parser():
    p = argparse.ArgumentParser(prog="distok", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, *opts):
        sp = sub.add_parser(name)
        for flag, kw in opts:
            sp.add_argument(flag, **kw)
        sp.add_argument("--config", default=None)
        sp.set_defaults(func=fn)
        return sp

    req = {"required": True}
    seed = ("--seed", {"type": int, "default": 0})
    add("train-detector", cmd_train_detector, ("--manifest", req), ("--out", req), seed)
    add("train-codec", cmd_train_codec, ("--manifest", req), ("--detector", req), ("--out", req), seed)
    add("encode", cmd_encode, ("--in", {"dest": "input", **req}), ("--detector", req), ("--codec", req),
        ("--out", req))
    add("decode", cmd_decode, ("--in", {"dest": "input", **req}), ("--codec", req), ("--out", req))
    add("eval", cmd_eval, ("--manifest", req), ("--detector", {"default": None}), ("--codec", req),
        ("--report", req))
    add("analyze", cmd_analyze, ("--streams", req), ("--vocab", {"type": int, "default": None}),
        ("--report", req), ("--top", {"type": int, "default": None}))
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except (OSError, ValueError, FloatingPointError) as exc:
        print(f"distok {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
