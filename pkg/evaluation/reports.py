"""
Metric reports and their JSONL serialization.
"""

import hashlib
import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator

ParamValue = Union[str, int, float]


class MetricReport(BaseModel):
    """One named scalar result with the settings that produced it"""

    metric: str
    value: float
    params: Dict[str, ParamValue] = Field(default_factory=dict)
    fingerprint: str = ""

    @field_validator("value")
    @classmethod
    def validate_finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError(f"metric value must be finite, got {v}")
        return v


def fingerprint(*items: Any) -> str:
    """Short content hash of arrays / strings feeding a metric"""
    h = hashlib.sha256()
    for item in items:
        if isinstance(item, np.ndarray):
            h.update(str(item.dtype).encode())
            h.update(str(item.shape).encode())
            h.update(np.ascontiguousarray(item).tobytes())
        else:
            h.update(json.dumps(item, sort_keys=True, default=str).encode("utf-8"))
        h.update(b"\x00")
    return h.hexdigest()[:16]


def write_reports(reports: Iterable[MetricReport], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for report in reports:
            fh.write(report.model_dump_json() + "\n")
    return path


def read_reports(path: Path) -> List[MetricReport]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [MetricReport.model_validate_json(line) for line in lines if line.strip()]
