"""Files written under ``<out>/<run-id>/``: rep-XX.csv, summary.json, config.json."""

from __future__ import annotations

import json
from pathlib import Path

import pandas as pd

from .config import as_jsonable

FLOAT_FORMAT = "%.9f"


def run_directory(out: str | Path, run_id: str) -> Path:
    path = Path(out) / run_id
    path.mkdir(parents=True, exist_ok=True)
    return path


def replication_csv_path(run_dir: str | Path, index: int) -> Path:
    return Path(run_dir) / f"rep-{index:02d}.csv"


def write_replication_csv(frame: pd.DataFrame, run_dir: str | Path, index: int) -> Path:
    path = replication_csv_path(run_dir, index)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def write_json(path: str | Path, data) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as json_file:
        json.dump(data, json_file, indent=2, default=as_jsonable)
        json_file.write("\n")
    return path


def read_json(path: str | Path):
    with open(path, "r", encoding="utf-8") as json_file:
        return json.load(json_file)
