"""Classification features extracted from the post-detection score window.

The 18 features summarize a short window of residual scores (5 seconds, 10
points at the 0.5 s resolution): overall magnitude (max, mean, deciles),
time-of-peak and return-to-normal indices, and oscillation counts of the
max-normalized score around the 0.25 / 0.5 / 0.75 levels.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, fields

import numpy as np

FEATURE_COLUMNS = (
    "max_dist",
    "avg_dist",
    "count_above_t",
    "decile_1",
    "decile_2",
    "decile_3",
    "decile_4",
    "decile_5",
    "decile_6",
    "decile_7",
    "decile_8",
    "decile_9",
    "argmax_index",
    "osc_25",
    "osc_50",
    "osc_75",
    "return_index",
    "index_diff",
)


class NotAnEventError(ValueError):
    """No score in the window exceeds the threshold."""


@dataclass(frozen=True)
class FeatureVector:
    max_dist: float
    avg_dist: float
    count_above_t: int
    decile_1: float
    decile_2: float
    decile_3: float
    decile_4: float
    decile_5: float
    decile_6: float
    decile_7: float
    decile_8: float
    decile_9: float
    argmax_index: int
    osc_25: int
    osc_50: int
    osc_75: int
    return_index: int
    index_diff: int

    def as_array(self) -> np.ndarray:
        return np.array([float(getattr(self, f.name)) for f in fields(self)])

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _crossings(normalized: np.ndarray, level: float) -> int:
    """Count sign changes of (s/max - level) between consecutive points."""
    d = np.sign(normalized - level)
    return int(np.count_nonzero(d[1:] * d[:-1] < 0))


def extract_features(scores, threshold: float) -> FeatureVector:
    """Compute the feature vector of one event's score window.

    Parameters
    ----------
    scores : sequence of scalar scores (the 5 s window, 10 points at 0.5 s)
    threshold : the detection threshold the event was triggered at

    Raises
    ------
    ValueError on an empty window; NotAnEventError if nothing exceeds the
    threshold.
    """
    s = np.asarray(scores, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("score window must be a non-empty 1-D sequence")
    count_above = int(np.count_nonzero(s > threshold))
    if count_above == 0:
        raise NotAnEventError(f"no score exceeds the threshold {threshold}")
    n = s.size
    argmax = int(np.argmax(s))
    deciles = np.percentile(s, np.arange(10, 100, 10), method="linear")
    normalized = s / s[argmax]
    above = s > threshold
    # smallest index i such that every score from i on is <= threshold;
    # n if the window never returns below the threshold
    return_index = int(np.max(np.nonzero(above)[0])) + 1
    return FeatureVector(
        max_dist=float(s[argmax]),
        avg_dist=float(s.mean()),
        count_above_t=count_above,
        decile_1=float(deciles[0]),
        decile_2=float(deciles[1]),
        decile_3=float(deciles[2]),
        decile_4=float(deciles[3]),
        decile_5=float(deciles[4]),
        decile_6=float(deciles[5]),
        decile_7=float(deciles[6]),
        decile_8=float(deciles[7]),
        decile_9=float(deciles[8]),
        argmax_index=argmax,
        osc_25=_crossings(normalized, 0.25),
        osc_50=_crossings(normalized, 0.50),
        osc_75=_crossings(normalized, 0.75),
        return_index=return_index,
        index_diff=return_index - argmax,
    )


# -- CSV round trip for classifier training ---------------------------------

EXPORT_HEADER = ("event_id", "label") + FEATURE_COLUMNS


def write_feature_csv(rows, out=None) -> str:
    """Serialize (event_id, label, FeatureVector) triples to the documented
    training CSV layout.  Returns the text; writes to `out` if given."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(EXPORT_HEADER)
    for event_id, label, fv in rows:
        writer.writerow([event_id, label] + [repr(float(getattr(fv, c))) for c in FEATURE_COLUMNS])
    text = buf.getvalue()
    if out is not None:
        out.write(text)
    return text


def read_feature_csv(text: str):
    """Inverse of `write_feature_csv`; returns (event_ids, labels, X matrix)."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != EXPORT_HEADER:
        raise ValueError(f"feature CSV header mismatch: {header}")
    ids, labels, rows = [], [], []
    for row in reader:
        if not row:
            continue
        ids.append(row[0])
        labels.append(row[1])
        rows.append([float(v) for v in row[2:]])
    X = np.array(rows) if rows else np.empty((0, len(FEATURE_COLUMNS)))
    return ids, labels, X
