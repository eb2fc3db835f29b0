"""MNIST CSV ingestion, 28x28 -> 5x5 preprocessing, and SD-card text files.

The preprocessing chain: reshape the 784 pixel row to 28x28, zero-pad one
pixel on every side to 30x30, block-average disjoint 6x6 tiles down to 5x5
(rounded to nearest integer, ties away from zero), and flatten row-major.
The harness consumes two plain text files: `inputs.txt` with one line of 25
comma-separated integers per sample (no whitespace) and `labels.txt` with one
digit per line.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import CountMismatch, MalformedLine, MalformedRow, ValueOutOfRange


@dataclass(frozen=True)
class MnistRecord:
    label: int
    pixels: tuple  # 784 intensities, 0..255

    def __post_init__(self):
        if not 0 <= self.label <= 9:
            raise ValueOutOfRange(f"label {self.label} out of range")
        if len(self.pixels) != 784:
            raise ValueOutOfRange(f"expected 784 pixels, got {len(self.pixels)}")


@dataclass(frozen=True)
class Sample:
    label: int
    values: tuple  # 25 intensities, row-major 5x5

    def __post_init__(self):
        if not 0 <= self.label <= 9:
            raise ValueOutOfRange(f"label {self.label} out of range")
        if len(self.values) != 25:
            raise ValueOutOfRange(f"expected 25 values, got {len(self.values)}")
        for v in self.values:
            if not 0 <= v <= 255:
                raise ValueOutOfRange(f"value {v} out of [0,255]")


@dataclass(frozen=True)
class DatasetFiles:
    inputs_path: str
    labels_path: str
    count: int


def load_mnist_csv(path) -> Iterator[MnistRecord]:
    """Stream label+784-pixel records from an MNIST-in-CSV file.

    A header row (non-numeric first field) is skipped automatically.
    """
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            fields = line.split(",")
            if lineno == 1 and not fields[0].strip().lstrip("-").isdigit():
                continue  # header
            if len(fields) != 785:
                raise MalformedRow(lineno, f"expected 785 fields, got {len(fields)}")
            try:
                values = [int(f) for f in fields]
            except ValueError as exc:
                raise MalformedRow(lineno, str(exc)) from exc
            label, pixels = values[0], values[1:]
            if not 0 <= label <= 9:
                raise ValueOutOfRange(f"line {lineno}: label {label} out of range")
            for p in pixels:
                if not 0 <= p <= 255:
                    raise ValueOutOfRange(
                        f"line {lineno}: pixel value {p} out of [0,255]")
            yield MnistRecord(label, tuple(pixels))


def preprocess(record: MnistRecord) -> Sample:
    """Pad the 28x28 image to 30x30 and block-average down to a 5x5 sample."""
    img = np.asarray(record.pixels, dtype=float).reshape(28, 28)
    padded = np.zeros((30, 30))
    padded[1:29, 1:29] = img
    tiles = padded.reshape(5, 6, 5, 6).mean(axis=(1, 3))
    rounded = np.floor(tiles + 0.5).astype(int)  # ties away from zero (values >= 0)
    return Sample(record.label, tuple(int(v) for v in rounded.ravel()))


def preprocess_stream(records: Iterable[MnistRecord]) -> Iterator[Sample]:
    for r in records:
        yield preprocess(r)


def export_sd_text(samples: Iterable[Sample], inputs_path, labels_path) -> DatasetFiles:
    """Write the two SD-card text files; returns their descriptor."""
    count = 0
    with open(inputs_path, "w", newline="") as fi, \
            open(labels_path, "w", newline="") as fl:
        for s in samples:
            fi.write(",".join(str(v) for v in s.values) + "\n")
            fl.write(f"{s.label}\n")
            count += 1
    return DatasetFiles(str(inputs_path), str(labels_path), count)


def load_sd_text(files: DatasetFiles) -> list[Sample]:
    """Read samples back; exact inverse of :func:`export_sd_text`."""
    with open(files.inputs_path, "r") as fh:
        input_lines = fh.read().splitlines()
    with open(files.labels_path, "r") as fh:
        label_lines = fh.read().splitlines()
    if len(input_lines) != len(label_lines):
        raise CountMismatch(
            f"{len(input_lines)} input lines vs {len(label_lines)} labels")
    samples = []
    for lineno, (vline, lline) in enumerate(zip(input_lines, label_lines), 1):
        fields = vline.split(",")
        if len(fields) != 25:
            raise MalformedLine(lineno, f"expected 25 values, got {len(fields)}")
        try:
            values = tuple(int(f) for f in fields)
            label = int(lline)
        except ValueError as exc:
            raise MalformedLine(lineno, str(exc)) from exc
        samples.append(Sample(label, values))
    return samples


def dataset_files(inputs_path, labels_path) -> DatasetFiles:
    """Descriptor for an existing pair of SD text files."""
    for p in (inputs_path, labels_path):
        if not os.path.exists(p):
            raise FileNotFoundError(p)
    with open(inputs_path) as fh:
        n = sum(1 for _ in fh)
    with open(labels_path) as fh:
        m = sum(1 for _ in fh)
    if n != m:
        raise CountMismatch(f"{n} input lines vs {m} labels")
    return DatasetFiles(str(inputs_path), str(labels_path), n)
