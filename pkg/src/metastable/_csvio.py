"""Small CSV helpers with fixed float formatting so reruns are byte-identical."""

import csv
import math
from pathlib import Path


def fmt(value):
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, ".17g")
    return str(value)


def write_csv(path, header, rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header is not None:
            writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def read_csv(path, expect_header=None):
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if expect_header is not None:
        if not rows or [h.strip() for h in rows[0]] != list(expect_header):
            raise ValueError(f"{path}: expected header {','.join(expect_header)}")
        rows = rows[1:]
    return [[c.strip() for c in r] for r in rows if r]
