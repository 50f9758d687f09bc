"""
Training Record Stream
Emits one tab-separated line per epoch through the `minet.records` logger:

    epoch  loss_t  loss_s  combined  val_auc  val_logloss

Lines go to standard output and, optionally, to a file. Undefined values
are written as `nan`.
"""

import logging
import sys
from pathlib import Path
from typing import List, Optional, TextIO, Union

from pydantic import BaseModel, Field

RECORDS_LOGGER = "minet.records"
HEADER = ("epoch", "loss_t", "loss_s", "combined", "val_auc", "val_logloss")


class EpochRecord(BaseModel):
    """Losses of one epoch and the validation metrics of the parameters at its end"""
    epoch: int = Field(..., ge=0)
    loss_t: float
    loss_s: Optional[float] = None
    combined: float
    val_auc: Optional[float] = None
    val_logloss: Optional[float] = None

    def fields(self) -> List[str]:
        return [str(self.epoch)] + [
            _format(v) for v in (self.loss_t, self.loss_s, self.combined, self.val_auc, self.val_logloss)
        ]


def _format(value: Optional[float]) -> str:
    return "nan" if value is None else f"{value:.6f}"


def format_record(record: EpochRecord) -> str:
    return "\t".join(record.fields())


class RecordLogger:
    """
    Writes the per-epoch record stream.

    The logger does not propagate, so records never mix with diagnostic
    logging on stderr.
    """

    def __init__(self, records_file: Optional[Union[str, Path]] = None, stream: Optional[TextIO] = None):
        """
        Args:
            records_file: Optional file receiving a copy of every line
            stream: Console stream, standard output by default
        """
        self.logger = logging.getLogger(RECORDS_LOGGER)
        self.logger.setLevel(logging.INFO)
        self.logger.propagate = False
        self.handlers: List[logging.Handler] = []

        formatter = logging.Formatter("%(message)s")
        console = logging.StreamHandler(stream or sys.stdout)
        console.setFormatter(formatter)
        self.handlers.append(console)

        if records_file:
            records_file = Path(records_file)
            records_file.parent.mkdir(parents=True, exist_ok=True)
            handler = logging.FileHandler(records_file, mode="w", encoding="utf-8")
            handler.setFormatter(formatter)
            self.handlers.append(handler)

        for handler in self.handlers:
            self.logger.addHandler(handler)

    def log_header(self):
        self.logger.info("\t".join(HEADER))

    def log_epoch(self, record: EpochRecord):
        self.logger.info(format_record(record))

    def close(self):
        for handler in self.handlers:
            self.logger.removeHandler(handler)
            handler.close()
        self.handlers = []

    def __enter__(self) -> "RecordLogger":
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()
        return False
