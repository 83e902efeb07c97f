"""Line-delimited JSON evaluation reports."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

from .analysis import UtilizationReport

UNAVAILABLE = "unavailable"
REPORT_VERSION = 1
MEL_ERROR_DEFINITION = "mean |log(1e-5 + mel power)| difference, n_fft=1024 hop=256 n_mels=80, HTK mel"
_FRACTION_FIELDS = ("tkr", "bps_payload", "bps_total")


@dataclass
class UtteranceMetrics:
    path: str
    mel_error: float
    stft_distance: float
    stoi: float
    tkr: Fraction
    bps_payload: Fraction
    bps_total: Fraction


@dataclass
class MetricReport:
    mel_error: float
    stft_distance: float
    stoi: float
    tkr: Fraction
    bps_payload: Fraction
    bps_total: Fraction
    utterances: list = field(default_factory=list)
    wer: str = UNAVAILABLE
    pesq: str = UNAVAILABLE

    def __post_init__(self):
        if not -1.0 <= self.stoi <= 1.0:
            raise ValueError(f"stoi {self.stoi} outside [-1, 1]")
        if self.tkr < 0 or self.bps_payload < 0 or self.bps_total < 0:
            raise ValueError("rates must be non-negative")

    @classmethod
    def aggregate(cls, utterances):
        """Means over utterances; rate fields stay exact fractions."""
        if not utterances:
            raise ValueError("no utterances to aggregate")
        n = len(utterances)
        mean = {k: sum(getattr(u, k) for u in utterances) / n
                for k in ("mel_error", "stft_distance", "stoi", *_FRACTION_FIELDS)}
        return cls(utterances=list(utterances), **mean)


def _encode(rec):
    return {k: (f"{v.numerator}/{v.denominator}" if isinstance(v, Fraction) else v) for k, v in rec.items()}


def _decode(rec):
    return {k: (Fraction(v) if k in _FRACTION_FIELDS else v) for k, v in rec.items()}


def write_report(report, path):
    lines = [{"kind": "header", "version": REPORT_VERSION, "mel_error": MEL_ERROR_DEFINITION}]
    lines += [{"kind": "utterance", **_encode(asdict(u))} for u in report.utterances]
    agg = {k: v for k, v in asdict(report).items() if k != "utterances"}
    lines.append({"kind": "aggregate", **_encode(agg)})
    Path(path).write_text("".join(json.dumps(line, sort_keys=True) + "\n" for line in lines))


def read_report(path):
    utts, agg = [], None
    for line in Path(path).read_text().splitlines():
        rec = json.loads(line)
        kind = rec.pop("kind")
        if kind == "header":
            if rec.get("version") != REPORT_VERSION:
                raise ValueError(f"unsupported report version {rec.get('version')}")
        elif kind == "utterance":
            utts.append(UtteranceMetrics(**_decode(rec)))
        elif kind == "aggregate":
            agg = _decode(rec)
    if agg is None:
        raise ValueError(f"{path}: no aggregate record")
    return MetricReport(utterances=utts, **agg)


def write_utilization(report, path):
    rec = {"kind": "utilization", "codebook_size": report.codebook_size, "used_count": report.used_count,
           "total_tokens": report.total_tokens, "utilization_rate": report.utilization_rate,
           "frequencies": [list(f) for f in report.frequencies]}
    Path(path).write_text(json.dumps(rec, sort_keys=True) + "\n")


def read_utilization(path):
    rec = json.loads(Path(path).read_text())
    if rec.get("kind") != "utilization":
        raise ValueError(f"{path}: not a utilization report")
    return UtilizationReport(rec["codebook_size"], rec["used_count"], rec["total_tokens"],
                             tuple((int(t), int(c), float(r)) for t, c, r in rec["frequencies"]))
