"""Parser-free weakly supervised log anomaly detection.

The toolkit turns raw, unlabeled log files into anomaly predictions through
an iterative loop: discriminative keywords are extracted per class, a
keyword co-occurrence graph is built, a small graph network pseudo-labels
every log sequence, a compact classifier is trained on those pseudo labels,
and its predictions drive the next round of keyword extraction until the
keyword sets stop drifting.
"""

__version__ = "0.1.0"

from loggad.ingest import LogSequence, RawLogRecord, normalize_line
from loggad.keywords import KeywordSet, drift, extract_top
from loggad.pipeline import PipelineConfig, run_pipeline

__all__ = [
    "LogSequence",
    "RawLogRecord",
    "normalize_line",
    "KeywordSet",
    "extract_top",
    "drift",
    "PipelineConfig",
    "run_pipeline",
]
