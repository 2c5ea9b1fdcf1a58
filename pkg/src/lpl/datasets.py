"""Synthetic datasets and IDX ingestion. All samples live in [-1, 1]."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError

IDX_LABELS = 0x00000801
IDX_IMAGES = 0x00000803
_IDX_UBYTE = 0x08


@dataclass(frozen=True, eq=False)
class Dataset:
    samples: np.ndarray
    labels: np.ndarray | None = None
    source: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 2:
            raise ConfigError("samples must be an (n, m) matrix")
        if s.size and (s.min() < -1.0 or s.max() > 1.0):
            raise ConfigError("samples must lie in [-1, 1]")
        object.__setattr__(self, "samples", s)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (s.shape[0],):
                raise ConfigError("need one label per sample")
            object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def dim(self):
        return self.samples.shape[1]

    def subset(self, idx):
        labels = None if self.labels is None else self.labels[idx]
        return Dataset(self.samples[idx], labels, self.source, self.meta)


def make_ring2d(n, modes=8, radius=1.0, mode_stddev=0.05, seed=0):
    """Mixture of ``modes`` Gaussians evenly spaced on a circle.

    Coordinates are divided by ``radius + 3 * mode_stddev`` (then clipped) so
    the data fit in [-1, 1]. ``meta`` carries the scaled centres and stddev.
    """
    if modes < 2:
        raise ConfigError("ring needs at least two modes")
    rng = np.random.default_rng(seed)
    angles = 2.0 * np.pi * np.arange(modes) / modes
    centres = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    labels = rng.integers(0, modes, size=n)
    pts = centres[labels] + mode_stddev * rng.standard_normal((n, 2))
    scale = 1.0 / (radius + 3.0 * mode_stddev)
    return Dataset(
        np.clip(pts * scale, -1.0, 1.0),
        labels,
        f"ring2d(modes={modes},seed={seed})",
        {"centres": centres * scale, "stddev": mode_stddev * scale},
    )


def mode_coverage(samples, centres, stddev, min_fraction=0.1):
    """Modes hit by ``samples``.

    A sample belongs to its nearest centre if within ``3 * stddev``; a mode is
    covered when it receives at least ``min_fraction`` of its fair share
    ``n / modes``. Returns ``(n_covered, counts)``.
    """
    samples = np.asarray(samples, dtype=np.float64)
    centres = np.asarray(centres, dtype=np.float64)
    dist = np.linalg.norm(samples[:, None, :] - centres[None, :, :], axis=-1)
    nearest = dist.argmin(axis=1)
    close = dist[np.arange(samples.shape[0]), nearest] <= 3.0 * stddev
    counts = np.bincount(nearest[close], minlength=centres.shape[0])
    need = min_fraction * samples.shape[0] / centres.shape[0]
    return int(np.sum(counts >= need)), counts


def blob_positions(grid):
    """``grid`` blob centres on a circle around the image centre, in pixel units."""
    angles = 2.0 * np.pi * np.arange(grid) / grid
    c = (grid - 1) / 2.0
    r = grid * 0.3
    return np.stack([c + r * np.sin(angles), c + r * np.cos(angles)], axis=1)


def make_blob_images(n, grid=8, seed=0, width=1.0, jitter=0.3):
    """``grid x grid`` images each holding one Gaussian blob at one of ``grid`` positions.

    Background is -1, the blob peak approaches +1. Labels are position indices.
    """
    if grid < 4:
        raise ConfigError("grid must be >= 4")
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, grid, size=n)
    centres = blob_positions(grid)[labels] + jitter * rng.standard_normal((n, 2))
    yy, xx = np.mgrid[0:grid, 0:grid]
    d2 = ((yy[None] - centres[:, 0, None, None]) ** 2
          + (xx[None] - centres[:, 1, None, None]) ** 2)
    img = 2.0 * np.exp(-d2 / (2.0 * width ** 2)) - 1.0
    return Dataset(img.reshape(n, grid * grid), labels, f"blobs(grid={grid},seed={seed})",
                   {"side": grid})


# -- IDX ----------------------------------------------------------------------


def read_idx(path):
    """Raw uint8 array from an IDX file (label or 3-D image files only)."""
    path = Path(path)
    buf = path.read_bytes()
    if len(buf) < 4:
        raise FormatError(f"{path}: file too short for IDX magic", offset=len(buf))
    zero, dtype, ndim = struct.unpack(">HBB", buf[:4])
    magic = struct.unpack(">I", buf[:4])[0]
    if zero != 0:
        raise FormatError(f"{path}: bad IDX magic 0x{magic:08x}", offset=0)
    if dtype != _IDX_UBYTE:
        raise FormatError(f"{path}: unsupported IDX element type 0x{dtype:02x}", offset=2)
    if magic not in (IDX_LABELS, IDX_IMAGES):
        raise FormatError(f"{path}: unsupported IDX type 0x{magic:08x} "
                          f"(only labels 0x{IDX_LABELS:08x} and images 0x{IDX_IMAGES:08x})", offset=3)
    header = 4 + 4 * ndim
    if len(buf) < header:
        raise FormatError(f"{path}: truncated header, expected {header} bytes, got {len(buf)}",
                          offset=len(buf))
    dims = struct.unpack(f">{ndim}I", buf[4:header])
    expected = math.prod(dims)
    actual = len(buf) - header
    if actual < expected:
        raise FormatError(f"{path}: truncated payload, expected {expected} bytes, got {actual}",
                          offset=len(buf))
    if actual > expected:
        raise FormatError(f"{path}: {actual - expected} trailing bytes after payload",
                          offset=header + expected)
    return np.frombuffer(buf, dtype=np.uint8, count=expected, offset=header).reshape(dims)


def parse_idx(path, labels_path=None):
    """IDX file as a Dataset; pixels map to ``v / 127.5 - 1``.

    An image file yields one flattened row per image. A label file yields a
    one-column dataset with the raw labels attached.
    """
    raw = read_idx(path)
    labels = None
    if raw.ndim == 1:
        labels = raw.astype(np.int64)
        samples = raw.reshape(-1, 1)
    else:
        samples = raw.reshape(raw.shape[0], -1)
    if labels_path is not None:
        labels = read_idx(labels_path)
        if labels.ndim != 1 or labels.shape[0] != samples.shape[0]:
            raise FormatError(f"{labels_path}: label count does not match {path}")
        labels = labels.astype(np.int64)
    meta = {"side": raw.shape[1]} if raw.ndim == 3 and raw.shape[1] == raw.shape[2] else {}
    return Dataset(samples.astype(np.float64) / 127.5 - 1.0, labels, str(path), meta)


def write_idx(path, array):
    """Write a uint8 array (1-D labels or 3-D images) as IDX."""
    a = np.asarray(array, dtype=np.uint8)
    if a.ndim not in (1, 3):
        raise ConfigError("only 1-D label and 3-D image IDX files are supported")
    header = struct.pack(">HBB", 0, _IDX_UBYTE, a.ndim) + struct.pack(f">{a.ndim}I", *a.shape)
    Path(path).write_bytes(header + a.tobytes())


def load_dataset(name, n=2000, seed=0, labels_path=None):
    """Resolve a dataset name: ``ring``, ``blobs`` or a path to an IDX file."""
    if name == "ring":
        return make_ring2d(n, seed=seed)
    if name == "blobs":
        return make_blob_images(n, seed=seed)
    ds = parse_idx(name, labels_path)
    return ds.subset(slice(0, n)) if n and n < len(ds) else ds
