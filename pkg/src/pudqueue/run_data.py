from __future__ import annotations

import csv
import io
import logging
import os
from pathlib import Path
from typing import Iterable, Sequence

from pudqueue.errors import ArgumentError
from pudqueue.reports import round_sig

OUTPUT_DIR_ENV = "PUDQUEUE_OUTPUT_DIR"

LOG_FILE_NAME = "pudqueue.log"


def resolve_output_dir(out: Path | None = None) -> Path:
    """Output directory: ``out``, then $PUDQUEUE_OUTPUT_DIR, then the cwd."""
    if out is not None:
        return Path(out).expanduser().resolve()
    env_dir = os.environ.get(OUTPUT_DIR_ENV)
    if env_dir:
        return Path(env_dir).expanduser().resolve()
    return Path.cwd()


class RunData:
    def __init__(self, output_dir: Path) -> None:
        self.output_dir = Path(output_dir)
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ArgumentError(
                f"Cannot create output directory '{self.output_dir}': {e}"
            ) from None
        self.log_file = self.output_dir / LOG_FILE_NAME
        self._handler: logging.Handler | None = None
        self._init_logging()

    def _init_logging(self) -> None:
        """Set up logging to a file.

        This function will add a handler to the root logger.
        """
        logger = logging.getLogger()
        logger.setLevel(logging.INFO)
        fh = logging.FileHandler(str(self.log_file), encoding="utf-8")
        fmt = logging.Formatter("%(asctime)s %(message)s")
        fh.setFormatter(fmt)
        logger.addHandler(fh)
        self._handler = fh

    def close(self) -> None:
        if self._handler is not None:
            logging.getLogger().removeHandler(self._handler)
            self._handler.close()
            self._handler = None


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        value = round_sig(value)
        return "" if value is None else repr(value)
    return str(value)


def _parse_cell(text: str):
    if text == "":
        return None
    for convert in (int, float):
        try:
            return convert(text)
        except ValueError:
            pass
    return text


def _write(f, rows: Iterable[dict], columns: Sequence[str]) -> None:
    writer = csv.DictWriter(f, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({col: _cell(row.get(col)) for col in columns})


def write_rows(path: Path, rows: Iterable[dict], columns: Sequence[str]) -> Path:
    """Write ``rows`` as CSV with floats rounded to the reporting precision."""
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as f:
            _write(f, rows, columns)
    except OSError as e:
        raise ArgumentError(f"Cannot write '{path}': {e}") from None
    logging.info("Wrote %s", path)
    return path


def rows_to_csv_text(rows: Iterable[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    _write(buf, rows, columns)
    return buf.getvalue()


def read_rows(path: Path) -> list[dict]:
    """Read a CSV written by ``write_rows``; empty cells read back as None."""
    with Path(path).open(newline="", encoding="utf-8") as f:
        return [
            {key: _parse_cell(value) for key, value in row.items()}
            for row in csv.DictReader(f)
        ]
