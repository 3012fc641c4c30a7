import json
import logging
import os
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

TRACE_COLUMNS = ["n", "step_norm", "apriori_bound"]
FLOAT_FORMAT = "%.17g"

EXTENSIONS = {
    "CSV": "csv",
    "JSONL": "jsonl",
}


class ReportExporter:
    """Writes iteration traces and run summaries under the output directory"""

    def __init__(self, output_directory: str = "outputs", report_format: str = "csv",
                 logger: Optional[logging.Logger] = None):
        if report_format.upper() not in EXTENSIONS:
            raise ValueError(f"Unknown report format {report_format!r}; expected one of {self.get_available_formats()}")
        self.output_directory = output_directory
        self.report_format = report_format.lower()
        self.logger = logger or logging.getLogger(__name__)

    @staticmethod
    def get_available_formats() -> List[str]:
        return [ext for ext in EXTENSIONS.values()]

    @staticmethod
    def trace_frame(step_norms: Sequence[float], bounds: Sequence[float]) -> pd.DataFrame:
        """One row per iteration; bounds missing for a step are written as NaN"""
        count = len(step_norms)
        padded = list(bounds)[:count] + [np.nan] * max(0, count - len(bounds))
        return pd.DataFrame({
            "n": np.arange(count, dtype=int),
            "step_norm": np.asarray(step_norms, dtype=float),
            "apriori_bound": np.asarray(padded, dtype=float),
        }, columns=TRACE_COLUMNS)

    def export_trace(self, scenario: str, seed: int, step_norms: Sequence[float],
                     bounds: Sequence[float], format_type: Optional[str] = None) -> str:
        """Write a trace file and return its path"""
        format_type = (format_type or self.report_format).lower()
        os.makedirs(self.output_directory, exist_ok=True)
        path = os.path.join(self.output_directory, self.get_export_filename(scenario, seed, format_type))
        df = self.trace_frame(step_norms, bounds)

        if format_type == "csv":
            df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        elif format_type == "jsonl":
            df.to_json(path, orient="records", lines=True, double_precision=15)
        else:
            raise ValueError(f"Unknown report format {format_type!r}")

        self.logger.debug(f"Wrote {len(df)} trace rows to {path}")
        return path

    def export_summary(self, scenario: str, summary: Dict[str, Any]) -> str:
        """Write the run summary as sorted, indented JSON"""
        os.makedirs(self.output_directory, exist_ok=True)
        path = os.path.join(self.output_directory, f"{_safe_name(scenario)}_summary.json")
        with open(path, 'w') as f:
            json.dump(summary, f, indent=2, sort_keys=True, default=_json_default)
            f.write("\n")
        self.logger.debug(f"Wrote summary to {path}")
        return path

    @staticmethod
    def get_export_filename(scenario: str, seed: int, format_type: str = "csv") -> str:
        """Deterministic file name: no timestamps so reruns overwrite"""
        ext = EXTENSIONS.get(format_type.upper(), "csv")
        return f"{_safe_name(scenario)}_seed{seed}.{ext}"


def _safe_name(name: str) -> str:
    return "".join(c if c.isalnum() or c in ("-", "_") else "_" for c in name.strip()) or "scenario"


def _json_default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, complex):
        return [value.real, value.imag]
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")
