from .analysis import (
    UtilizationReport,
    codebook_utilization,
    kmeans,
    kmeans_silhouette,
    silhouette,
    write_frequency_csv,
)
from .metrics import (
    bps,
    bps_from_bits,
    mel_error,
    stft_distance,
    stft_terms,
    stream_bps,
    stream_tkr,
    tkr,
)
from .report import (
    MetricReport,
    UtteranceMetrics,
    read_report,
    read_utilization,
    write_report,
    write_utilization,
)
from .stoi import stoi

__all__ = [
    "MetricReport", "UtilizationReport", "UtteranceMetrics", "bps", "bps_from_bits",
    "codebook_utilization", "kmeans", "kmeans_silhouette", "mel_error", "read_report",
    "silhouette", "stft_distance", "stft_terms", "stoi", "stream_bps", "stream_tkr", "tkr",
    "write_frequency_csv", "write_report", "read_utilization", "write_utilization",
]
