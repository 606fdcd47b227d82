"""Where run products go and how they are written.

The report is pydantic JSON; every tabular artifact is a pandas CSV without
the index column.
"""
from __future__ import annotations

from pathlib import Path
from typing import Optional

import pandas as pd

from shared.config import settings
from shared.logger import logger
from shared.types import Report, RunConfig

REPORT_NAME = "report.json"


def resolve_output_dir(cli_out: Optional[str], config: RunConfig) -> Path:
    """--out, then the config's output_dir, then NEUMANN_REG_OUTPUT_DIR / the default."""
    out = Path(cli_out or config.output_dir or settings.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_frame(out_dir: Path, name: str, frame: pd.DataFrame) -> str:
    path = out_dir / name
    frame.to_csv(path, index=False)
    logger.debug("wrote {} ({} rows)", path, len(frame))
    return name


def write_report(out_dir: Path, report: Report) -> Path:
    path = out_dir / REPORT_NAME
    path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info("report written to {}", path)
    return path


def load_report(path: Path) -> Report:
    return Report.model_validate_json(path.read_text(encoding="utf-8"))
