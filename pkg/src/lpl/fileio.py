"""Binary checkpoints, code sets, PGM mosaics and CSV logs.

Container layout (all integers little-endian)::

    b"LPL1" | u32 version | u32 header_len | header (UTF-8 JSON)
    u32 n_arrays | per array: u32 ndim, u64 dims[ndim], u64 nbytes, float64 data

The JSON header describes what the arrays are; arrays are referenced by index.
"""

from __future__ import annotations

import json
import math
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import CorruptFileError, FormatError, LplError, ShapeError, VersionError

MAGIC = b"LPL1"
VERSION = 1


class _Reader:
    def __init__(self, buf, path):
        self.buf, self.pos, self.path = buf, 0, path

    def take(self, n, what):
        if n < 0 or self.pos + n > len(self.buf):
            raise CorruptFileError(
                f"{self.path}: truncated while reading {what} "
                f"(need {n} bytes, {len(self.buf) - self.pos} left)", offset=self.pos)
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def _atomic_write(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_container(path, header, arrays):
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(head)), head, struct.pack("<I", len(arrays))]
    for a in arrays:
        a = np.ascontiguousarray(a, dtype="<f8")
        parts.append(struct.pack("<I", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}Q", *a.shape))
        parts.append(struct.pack("<Q", a.nbytes))
        parts.append(a.tobytes())
    try:
        return _atomic_write(path, b"".join(parts))
    except OSError as e:
        raise OSError(f"cannot write {path}: {e}") from e


def read_container(path):
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as e:
        raise OSError(f"cannot read {path}: {e}") from e
    r = _Reader(buf, path)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise VersionError(f"{path}: not an LPL1 file (magic {magic!r})", offset=0)
    version, head_len = r.unpack("<II", "version/header length")
    if version != VERSION:
        raise VersionError(f"{path}: unsupported version {version}", offset=4)
    try:
        header = json.loads(r.take(head_len, "header").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptFileError(f"{path}: unreadable header ({e})", offset=12) from e
    (count,) = r.unpack("<I", "array count")
    arrays = []
    for i in range(count):
        (ndim,) = r.unpack("<I", f"array {i} rank")
        if ndim > 8:
            raise CorruptFileError(f"{path}: array {i} has implausible rank {ndim}", offset=r.pos - 4)
        shape = r.unpack(f"<{ndim}Q", f"array {i} shape")
        (nbytes,) = r.unpack("<Q", f"array {i} length")
        if nbytes != 8 * math.prod(shape):
            raise CorruptFileError(f"{path}: array {i} length {nbytes} does not match shape {shape}",
                                   offset=r.pos - 8)
        data = r.take(nbytes, f"array {i} data")
        arrays.append(np.frombuffer(data, dtype="<f8").reshape(shape).astype(np.float64))
    if r.pos != len(buf):
        raise CorruptFileError(f"{path}: {len(buf) - r.pos} trailing bytes", offset=r.pos)
    return header, arrays


# -- model checkpoints --------------------------------------------------------


def _net_header(net, arrays):
    start = len(arrays)
    arrays.extend(net.params)
    return {"layers": [s.to_dict() for s in net.layers], "first_array": start}


def _net_from(h, arrays):
    from .nn import LayerSpec, MlpNetwork

    layers = tuple(LayerSpec.from_dict(d) for d in h["layers"])
    k = h["first_array"]
    params = arrays[k:k + 2 * len(layers)]
    if len(params) != 2 * len(layers):
        raise CorruptFileError("checkpoint is missing parameter arrays")
    return MlpNetwork(layers, tuple(params[0::2]), tuple(params[1::2]))


def _opt_header(state, arrays):
    start = len(arrays)
    arrays.extend(state.accumulators)
    return {"decay": state.decay, "epsilon": state.epsilon, "step_size": state.step_size,
            "first_array": start, "count": len(state.accumulators)}


def _opt_from(h, arrays):
    from .nn import RmsPropState

    k = h["first_array"]
    return RmsPropState(tuple(arrays[k:k + h["count"]]), h["decay"], h["epsilon"], h["step_size"])


def _prior_header(prior, arrays):
    if prior.kind == "isotropic_gaussian":
        return {"kind": prior.kind, "dim": prior.dim, "sigma": prior.sigma}
    return {"kind": prior.kind, "dim": prior.dim, "mapping": _net_header(prior.mapping, arrays),
            "base": _prior_header(prior.base, arrays)}


def _prior_from(h, arrays):
    from .gan import PriorSpec

    if h["kind"] == "isotropic_gaussian":
        return PriorSpec.isotropic(h["dim"], h["sigma"])
    return PriorSpec.induced(_net_from(h["mapping"], arrays), _prior_from(h["base"], arrays))


def write_checkpoint(model, path, extra=None):
    arrays = []
    header = {
        "kind": "gan",
        "generator": _net_header(model.generator, arrays),
        "discriminator": _net_header(model.discriminator, arrays),
        "g_state": _opt_header(model.g_state, arrays),
        "d_state": _opt_header(model.d_state, arrays),
        "prior": _prior_header(model.prior, arrays),
        "step": model.step,
        "extra": extra or {},
    }
    return write_container(path, header, arrays)


def read_checkpoint(path):
    from .gan import GanModel

    header, arrays = read_container(path)
    if header.get("kind") != "gan":
        raise FormatError(f"{path}: not a model checkpoint (kind={header.get('kind')!r})")
    try:
        return GanModel(
            generator=_net_from(header["generator"], arrays),
            discriminator=_net_from(header["discriminator"], arrays),
            prior=_prior_from(header["prior"], arrays),
            g_state=_opt_from(header["g_state"], arrays),
            d_state=_opt_from(header["d_state"], arrays),
            step=int(header["step"]),
        )
    except (KeyError, TypeError, ShapeError, LplError) as e:
        if isinstance(e, FormatError):
            raise
        raise CorruptFileError(f"{path}: inconsistent checkpoint ({e})") from e


def write_codes(codes, path, extra=None):
    arrays = [codes.codes, codes.reversal_losses]
    header = {"kind": "codes", "source": codes.source, "extra": extra or {}}
    for name in ("steps_used", "converged", "failed"):
        v = getattr(codes, name)
        if v is not None:
            header[name] = len(arrays)
            arrays.append(np.asarray(v, dtype=np.float64))
    return write_container(path, header, arrays)


def read_codes(path):
    from .metrics import LatentCodeSet

    header, arrays = read_container(path)
    if header.get("kind") != "codes" or len(arrays) < 2:
        raise FormatError(f"{path}: not a code-set file")
    opt = {}
    for name, dtype in (("steps_used", np.int64), ("converged", bool), ("failed", bool)):
        if name in header:
            opt[name] = arrays[header[name]].astype(dtype)
    return LatentCodeSet(arrays[0], arrays[1], header.get("source", ""), **opt)


# -- images -------------------------------------------------------------------


def is_square(m):
    s = math.isqrt(m)
    return s * s == m


def to_pixels(values):
    """[-1, 1] -> [0, 255], rounding half up, clamped."""
    v = np.floor((np.asarray(values, dtype=np.float64) + 1.0) * 127.5 + 0.5)
    return np.clip(v, 0, 255).astype(np.uint8)


def mosaic(images, cols, separator=128):
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 2:
        raise ShapeError("images must be a matrix with one flattened image per row")
    n, m = images.shape
    if not is_square(m):
        raise ShapeError(f"row length {m} is not a perfect square")
    if cols < 1:
        raise ShapeError("cols must be >= 1")
    side = math.isqrt(m)
    rows = max(1, -(-n // cols))
    canvas = np.full((rows * side + rows - 1, cols * side + cols - 1), separator, dtype=np.uint8)
    for i, img in enumerate(to_pixels(images)):
        r, c = divmod(i, cols)
        y, x = r * (side + 1), c * (side + 1)
        canvas[y:y + side, x:x + side] = img.reshape(side, side)
    return canvas


def write_ppm_grid(images, cols, path):
    """Binary PGM (P5) mosaic of square grayscale images, 1-pixel separators at 128."""
    canvas = mosaic(images, cols)
    h, w = canvas.shape
    try:
        return _atomic_write(path, f"P5\n{w} {h}\n255\n".encode("ascii") + canvas.tobytes())
    except OSError as e:
        raise OSError(f"cannot write {path}: {e}") from e


def read_pgm(path):
    buf = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while buf[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not buf[pos:pos + 1].isspace():
            pos += 1
        tokens.append(buf[start:pos])
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM", offset=0)
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PGM is supported")
    data = buf[pos + 1:]
    if len(data) != w * h:
        raise CorruptFileError(f"{path}: expected {w * h} pixel bytes, got {len(data)}")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w)


# -- CSV ----------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def format_row(row):
    return ",".join(_fmt(v) for v in row)


def append_csv(path, header, row):
    """Append one row, writing ``header`` first if the file is new.

    An existing file whose header differs raises ValueError and is left untouched.
    """
    path = Path(path)
    head = ",".join(header)
    line = format_row(row) + "\n"
    try:
        if path.exists() and path.stat().st_size > 0:
            with open(path, "r", encoding="ascii", newline="") as f:
                first = f.readline().rstrip("\r\n")
            if first != head:
                raise ValueError(f"{path}: existing header {first!r} does not match {head!r}")
            payload = line
        else:
            path.parent.mkdir(parents=True, exist_ok=True)
            payload = head + "\n" + line
        with open(path, "a", encoding="ascii", newline="") as f:
            f.write(payload)
    except OSError as e:
        raise OSError(f"cannot append to {path}: {e}") from e


def write_csv(path, header, rows):
    """Write a whole CSV file atomically."""
    text = ",".join(header) + "\n" + "".join(format_row(r) + "\n" for r in rows)
    try:
        return _atomic_write(path, text.encode("ascii"))
    except OSError as e:
        raise OSError(f"cannot write {path}: {e}") from e


def read_csv(path):
    lines = Path(path).read_text(encoding="ascii").splitlines()
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]
