"""Annotation CSV format and the flat key-value run configuration.

Annotation files are UTF-8 CSV with a header row, ``.`` decimals and comma
separators. Lines starting with ``#`` are comments. An empty coordinate cell
marks a missing keypoint. Columns:

``patient_id, level, up_x, up_y, um_x, um_y, ua_x, ua_y, lp_x, lp_y, lm_x,
lm_y, la_x, la_y, grade, morphology, p_img_grade_<g>..., p_img_morph_<m>...,
reader_id, imputed``

``imputed`` lists the keypoint names filled in by k-NN imputation,
separated by ``;``.
"""
from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .detection import IMPUTED_WEIGHT
from .diffgsq import GRADES, MORPHOLOGIES, GsqThresholds
from .geometry import COORD_NAMES, POINT_NAMES, VertebraKeypoints
from .rle import FlowConfig

LEVELS = tuple([f"T{i}" for i in range(4, 13)] + [f"L{i}" for i in range(1, 5)])

P_IMG_GRADE = tuple(f"p_img_grade_{g}" for g in GRADES)
P_IMG_MORPH = tuple(f"p_img_morph_{m}" for m in MORPHOLOGIES)
ANNOTATION_COLUMNS = (
    ("patient_id", "level") + COORD_NAMES + ("grade", "morphology") + P_IMG_GRADE + P_IMG_MORPH
    + ("reader_id", "imputed")
)


@dataclass
class AnnotationRecord:
    patient_id: str
    level: str
    keypoints: VertebraKeypoints
    grade: str | None = None
    morphology: str | None = None
    p_img_grade: np.ndarray | None = None
    p_img_morph: np.ndarray | None = None
    reader_id: str | None = None
    imputed: tuple = ()

    @property
    def key(self):
        return (self.patient_id, self.level)

    @property
    def weight(self) -> float:
        """Loss weight: imputed annotations count for 1e-3."""
        return IMPUTED_WEIGHT if self.imputed else 1.0


def fmt(v) -> str:
    """Lossless float text; NaN and None become empty cells."""
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else repr(float(v))
    return str(v)


def _parse_probs(row, cols, line):
    cells = [row.get(c, "") or "" for c in cols]
    if all(c.strip() == "" for c in cells):
        return None
    try:
        p = np.array([float(c) for c in cells])
    except ValueError:
        raise ValueError(f"line {line}: incomplete or non-numeric image posterior")
    if np.any(p < 0) or not np.isclose(p.sum(), 1.0, atol=1e-6):
        raise ValueError(f"line {line}: image posterior must be non-negative and sum to 1")
    return p


def parse_record(row: dict, line: int) -> AnnotationRecord:
    pid = (row.get("patient_id") or "").strip()
    level = (row.get("level") or "").strip()
    if not pid or not level:
        raise ValueError(f"line {line}: patient_id and level are required")
    coords = []
    for c in COORD_NAMES:
        cell = (row.get(c) or "").strip()
        try:
            coords.append(float(cell) if cell else np.nan)
        except ValueError:
            raise ValueError(f"line {line}: bad coordinate {c}={cell!r}")
    try:
        kp = VertebraKeypoints.from_coords(coords)
    except ValueError as exc:
        raise ValueError(f"line {line}: {exc}")
    grade = (row.get("grade") or "").strip() or None
    morph = (row.get("morphology") or "").strip() or None
    if grade is not None and grade not in GRADES:
        raise ValueError(f"line {line}: unknown grade {grade!r}")
    if morph is not None and morph not in MORPHOLOGIES:
        raise ValueError(f"line {line}: unknown morphology {morph!r}")
    imputed = tuple(p for p in (row.get("imputed") or "").split(";") if p)
    if any(p not in POINT_NAMES for p in imputed):
        raise ValueError(f"line {line}: unknown point in imputed column")
    return AnnotationRecord(
        pid, level, kp, grade, morph,
        _parse_probs(row, P_IMG_GRADE, line), _parse_probs(row, P_IMG_MORPH, line),
        (row.get("reader_id") or "").strip() or None, imputed,
    )


def record_row(rec: AnnotationRecord) -> list[str]:
    pg = rec.p_img_grade if rec.p_img_grade is not None else [None] * 4
    pm = rec.p_img_morph if rec.p_img_morph is not None else [None] * 4
    return (
        [rec.patient_id, rec.level] + [fmt(v) for v in rec.keypoints.flat()]
        + [fmt(rec.grade), fmt(rec.morphology)] + [fmt(v) for v in pg] + [fmt(v) for v in pm]
        + [fmt(rec.reader_id), ";".join(rec.imputed)]
    )


def _data_lines(text):
    """Yield ``(line_number, line)`` skipping comment lines."""
    for i, ln in enumerate(text.splitlines(), start=1):
        if not ln.startswith("#"):
            yield i, ln


def read_csv_rows(path):
    """``(line_number, dict)`` pairs from a commented CSV file."""
    text = Path(path).read_text(encoding="utf-8")
    numbered = list(_data_lines(text))
    if not numbered or not numbered[0][1].strip():
        return []
    reader = csv.DictReader([ln for _, ln in numbered])
    return [(numbered[k + 1][0], row) for k, row in enumerate(reader)]


def read_annotations(path):
    """Parse an annotation file; returns ``(records, rejects)``.

    ``rejects`` holds ``(line_number, message)`` for rows that failed to
    parse; they never abort the read.
    """
    records, rejects = [], []
    for line, row in read_csv_rows(path):
        if None in row:
            rejects.append((line, f"line {line}: too many cells"))
            continue
        try:
            records.append(parse_record(row, line))
        except ValueError as exc:
            rejects.append((line, str(exc)))
    return records, rejects


def write_csv(path, header, rows, comment: str | None = None):
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_annotations(path, records, comment: str | None = None):
    write_csv(path, ANNOTATION_COLUMNS, [record_row(r) for r in records], comment)


# -- run configuration --------------------------------------------------------

@dataclass
class RunConfig:
    """Every tunable of a run. Text form is ``key = value`` per line."""

    tol_normal: float = 0.20
    tol_mild: float = 0.25
    tol_moderate: float = 0.40
    tau: float = 0.02
    convex_graded: bool = False
    flow_layers: int = 4
    flow_hidden: int = 16
    flow_base: str = "gaussian"
    flow_lr: float = 1e-2
    flow_epochs: int = 200
    flow_batch: int = 256
    flow_warmup: int = 10
    flow_clip: float = 10.0
    rle_scale: float = 0.0  # 0 keeps the scale stored in the model file
    alpha: float = 0.9
    n_draws: int = 1000
    merge_classes: bool = False
    lambda_iou: float = 2.0
    lambda_l1: float = 5.0
    lambda_kps: float = 1.0
    lambda_img: float = 1.0
    class_weights: str = "balanced"
    knn_k: int = 5
    seed: int = 0
    out: str = "."
    # synthetic cohorts
    synth_patients: int = 100
    synth_min_vertebrae: int = 1
    synth_max_vertebrae: int = 13
    synth_missing: float = 0.0
    synth_noise: float = 0.0

    @property
    def thresholds(self) -> GsqThresholds:
        return GsqThresholds(self.tol_normal, self.tol_mild, self.tol_moderate, self.tau, self.convex_graded)

    @property
    def flow(self) -> FlowConfig:
        return FlowConfig(
            self.flow_layers, self.flow_hidden, self.flow_base, self.flow_lr, self.flow_epochs,
            self.flow_batch, self.flow_warmup, self.flow_clip, self.seed,
        )

    def to_text(self) -> str:
        return "".join(f"{k} = {fmt(v) if not isinstance(v, bool) else str(v).lower()}\n"
                       for k, v in asdict(self).items())

    def hash(self) -> str:
        # the output location does not change results
        text = "".join(ln for ln in self.to_text().splitlines(True) if not ln.startswith("out ="))
        return hashlib.sha256(text.encode()).hexdigest()[:12]

    def update(self, **kw) -> "RunConfig":
        types = {f.name: f.type for f in fields(self)}
        for k, v in kw.items():
            if k not in types:
                raise ValueError(f"unknown config key {k!r}")
            setattr(self, k, _coerce(types[k], v) if isinstance(v, str) else v)
        self.thresholds  # validate
        return self

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        kw = {}
        for i, ln in enumerate(text.splitlines(), start=1):
            ln = ln.split("#", 1)[0].strip()
            if not ln:
                continue
            key, sep, val = ln.partition("=")
            if not sep:
                raise ValueError(f"config line {i}: expected key = value")
            kw[key.strip()] = val.strip()
        return cls().update(**kw)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def _coerce(typ, v: str):
    if typ in ("bool", bool):
        if v.lower() in ("1", "true", "yes", "on"):
            return True
        if v.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {v!r}")
    if typ in ("int", int):
        return int(v)
    if typ in ("float", float):
        return float(v)
    return v
