"""Debug dump of surface samples as CSV."""
from __future__ import annotations

import csv
import io
from pathlib import Path

from ..skinops import SurfaceSamples
from .atomic import PathLike, atomic_write_text

__all__ = ["samples_header", "samples_to_csv", "write_samples_csv"]


def samples_header(frame_count: int) -> list[str]:
    cols = ["face", "l1", "l2", "l3"]
    for k in range(frame_count):
        cols += [f"x{k}", f"y{k}", f"z{k}", f"nx{k}", f"ny{k}", f"nz{k}"]
    return cols


def samples_to_csv(samples: SurfaceSamples) -> str:
    """Columns face, l1, l2, l3, then x, y, z, nx, ny, nz for every frame."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(samples_header(samples.frame_count))
    for i in range(samples.count):
        row = [int(samples.face_index[i])] + [repr(float(x)) for x in samples.barycentric[i]]
        for k in range(samples.frame_count):
            row += [repr(float(x)) for x in samples.positions[k, i]]
            row += [repr(float(x)) for x in samples.normals[k, i]]
        writer.writerow(row)
    return buf.getvalue()


def write_samples_csv(path: PathLike, samples: SurfaceSamples) -> Path:
    return atomic_write_text(path, samples_to_csv(samples))
