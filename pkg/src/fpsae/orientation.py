"""Block orientation fields from grayscale images, plus their encodings."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SCHEMES = ("f1", "f2", "f3", "f4", "f5", "f6")
COHERENCE_MIN = 0.1
_EPS = 1e-12


class PgmError(ValueError):
    """Base class for PGM parse failures; ``offset`` is the byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class UnsupportedMagicError(PgmError):
    pass


class MalformedHeaderError(PgmError):
    pass


class UnsupportedMaxvalError(PgmError):
    pass


class TruncatedPayloadError(PgmError):
    pass


@dataclass(frozen=True)
class GrayImage:
    width: int
    height: int
    pixels: np.ndarray  # (height, width) uint8

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be >= 1")
        if self.pixels.shape != (self.height, self.width):
            raise ValueError(
                f"pixel array shape {self.pixels.shape} != ({self.height}, {self.width})"
            )

    @classmethod
    def from_array(cls, arr) -> "GrayImage":
        arr = np.asarray(arr)
        return cls(width=arr.shape[1], height=arr.shape[0], pixels=arr)


@dataclass(frozen=True)
class OrientationField:
    """Ridge angles in [0, pi) on a rows x cols grid, with a validity mask."""

    angles: np.ndarray  # (rows, cols) float64
    valid: np.ndarray  # (rows, cols) bool

    def __post_init__(self):
        if self.angles.ndim != 2 or self.angles.shape != self.valid.shape:
            raise ValueError("angles and valid must be 2-D arrays of equal shape")
        if np.any(~np.isfinite(self.angles)):
            raise ValueError("angles must be finite")
        if np.any(self.angles < 0) or np.any(self.angles >= math.pi):
            raise ValueError("angles must lie in [0, pi)")

    @classmethod
    def from_angles(cls, angles, valid=None) -> "OrientationField":
        angles = wrap_angles(np.asarray(angles, dtype=np.float64))
        if valid is None:
            valid = np.ones(angles.shape, dtype=bool)
        return cls(angles=angles, valid=np.asarray(valid, dtype=bool))

    @property
    def rows(self) -> int:
        return self.angles.shape[0]

    @property
    def cols(self) -> int:
        return self.angles.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.angles.shape


def wrap_angles(theta):
    """Reduce angles mod pi into [0, pi), guarding the float edge at pi."""
    out = np.mod(theta, math.pi)
    return np.where(out >= math.pi, 0.0, out)


# -- PGM ---------------------------------------------------------------------

_WS = b" \t\n\r\x0b\x0c"


def _header_token(data: bytes, pos: int) -> tuple[bytes, int, int]:
    """Skip whitespace/comments, return (token, token_start, end)."""
    n = len(data)
    while pos < n:
        ch = data[pos]
        if ch == ord("#"):
            while pos < n and data[pos] not in b"\n\r":
                pos += 1
        elif ch in _WS:
            pos += 1
        else:
            break
    start = pos
    while pos < n and data[pos] not in _WS and data[pos] != ord("#"):
        pos += 1
    return data[start:pos], start, pos


def _header_int(data: bytes, pos: int, what: str) -> tuple[int, int]:
    tok, start, end = _header_token(data, pos)
    if not tok:
        raise MalformedHeaderError(f"missing {what}", start)
    if not tok.isdigit():
        raise MalformedHeaderError(f"bad {what} {tok!r}", start)
    return int(tok), end


def load_pgm(data: bytes) -> GrayImage:
    """Parse a binary (P5) graymap with maxval <= 255."""
    if len(data) < 2:
        raise MalformedHeaderError("file too short for magic number", 0)
    magic = data[:2]
    if magic != b"P5":
        raise UnsupportedMagicError(f"unsupported magic {magic!r}, expected b'P5'", 0)
    pos = 2
    if pos >= len(data) or data[pos] not in _WS:
        raise MalformedHeaderError("expected whitespace after magic", pos)
    width, pos = _header_int(data, pos, "width")
    height, pos = _header_int(data, pos, "height")
    maxval_start = _header_token(data, pos)[1]
    maxval, pos = _header_int(data, pos, "maxval")
    if width < 1 or height < 1:
        raise MalformedHeaderError(f"bad dimensions {width}x{height}", maxval_start)
    if not 1 <= maxval <= 255:
        raise UnsupportedMaxvalError(f"unsupported maxval {maxval}", maxval_start)
    if pos >= len(data) or data[pos] not in _WS:
        raise MalformedHeaderError("expected single whitespace after maxval", pos)
    pos += 1
    need = width * height
    payload = data[pos : pos + need]
    if len(payload) < need:
        raise TruncatedPayloadError(
            f"payload has {len(payload)} of {need} bytes", pos + len(payload)
        )
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()
    return GrayImage(width=width, height=height, pixels=pixels)


def save_pgm(img: GrayImage) -> bytes:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + np.asarray(img.pixels, dtype=np.uint8).tobytes()


# -- orientation -------------------------------------------------------------


def block_orientation(img: GrayImage, block: int = 20) -> OrientationField:
    """Block-wise least-squares ridge orientation from image gradients.

    The image is center-cropped to a whole number of blocks per axis
    (512 -> 500 for block 20). Angles are measured from the +x (column)
    axis toward +y (row index), so horizontal ridges give 0.
    """
    if block < 1:
        raise ValueError("block size must be >= 1")
    h, w = img.height, img.width
    if h < block or w < block:
        raise ValueError(f"image {w}x{h} smaller than one {block}x{block} block")
    rows, cols = h // block, w // block
    top, left = (h - rows * block) // 2, (w - cols * block) // 2
    pix = np.asarray(img.pixels, dtype=np.float64)
    pix = pix[top : top + rows * block, left : left + cols * block]

    # central differences inside, one-sided on the border
    gy, gx = np.gradient(pix)

    def block_sum(a):
        return a.reshape(rows, block, cols, block).sum(axis=(1, 3))

    gxy2 = block_sum(2.0 * gx * gy)
    gxx_yy = block_sum(gx * gx - gy * gy)
    energy = block_sum(gx * gx + gy * gy)

    theta = 0.5 * np.arctan2(gxy2, gxx_yy) + math.pi / 2
    coherence = np.hypot(gxx_yy, gxy2) / (energy + _EPS)
    return OrientationField(angles=wrap_angles(theta), valid=coherence >= COHERENCE_MIN)


# -- feature encoding --------------------------------------------------------


def encode_features(field: OrientationField) -> np.ndarray:
    """Flatten to [sin 2t ..., cos 2t ...]; invalid cells become (0, 0)."""
    if field.angles.size == 0:
        raise ValueError("empty orientation field")
    t2 = 2.0 * field.angles.ravel()
    mask = field.valid.ravel()
    s = np.where(mask, np.sin(t2), 0.0)
    c = np.where(mask, np.cos(t2), 0.0)
    return np.concatenate([s, c])


def decode_features(values, shape: tuple[int, int]) -> OrientationField:
    """Recover angles from (sin 2t, cos 2t) planes as 0.5*atan2(s, c) mod pi.

    Cells whose pair is (0, 0) come back invalid.
    """
    values = np.asarray(values, dtype=np.float64)
    n = shape[0] * shape[1]
    if values.shape != (2 * n,):
        raise ValueError(f"expected {2 * n} values for grid {shape}, got {values.shape}")
    s, c = values[:n], values[n:]
    angles = wrap_angles(0.5 * np.arctan2(s, c)).reshape(shape)
    valid = ~((s == 0.0) & (c == 0.0))
    return OrientationField(angles=angles, valid=valid.reshape(shape))


def encode_alternative(field: OrientationField, scheme: str) -> np.ndarray:
    """Alternative encodings f1..f6 compared in the feature-selection study.

    f1=t, f2=sin2t, f3=cos2t, f4=(sin2t, t), f5=(cos2t, t), f6=(sin2t, cos2t).
    Raw angles are scaled by 1/pi so every plane lives in a bounded range.
    """
    return np.concatenate(scheme_planes(field, scheme))


def scheme_planes(field: OrientationField, scheme: str) -> list[np.ndarray]:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown encoding scheme {scheme!r}; expected one of {SCHEMES}")
    mask = field.valid.ravel()
    t = field.angles.ravel()
    planes = {
        "t": np.where(mask, t / math.pi, 0.0),
        "s": np.where(mask, np.sin(2.0 * t), 0.0),
        "c": np.where(mask, np.cos(2.0 * t), 0.0),
    }
    layout = {
        "f1": "t",
        "f2": "s",
        "f3": "c",
        "f4": "st",
        "f5": "ct",
        "f6": "sc",
    }[scheme]
    return [planes[k] for k in layout]


# -- orientation-field text format ------------------------------------------


def format_field(field: OrientationField) -> str:
    lines = [f"{field.rows} {field.cols}"]
    for r in range(field.rows):
        cells = (
            repr(float(a)) if ok else "nan"
            for a, ok in zip(field.angles[r], field.valid[r])
        )
        lines.append(" ".join(cells))
    return "\n".join(lines) + "\n"


def parse_field(text: str) -> OrientationField:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty orientation-field file")
    try:
        rows, cols = (int(v) for v in lines[0].split())
    except ValueError:
        raise ValueError(f"bad orientation-field header {lines[0]!r}") from None
    if rows < 1 or cols < 1:
        raise ValueError(f"bad orientation-field dims {rows}x{cols}")
    if len(lines) - 1 != rows:
        raise ValueError(f"expected {rows} rows of angles, found {len(lines) - 1}")
    angles = np.zeros((rows, cols))
    valid = np.ones((rows, cols), dtype=bool)
    for r, ln in enumerate(lines[1:]):
        toks = ln.split()
        if len(toks) != cols:
            raise ValueError(f"row {r} has {len(toks)} values, expected {cols}")
        for c, tok in enumerate(toks):
            v = float(tok)
            if math.isnan(v):
                valid[r, c] = False
            else:
                angles[r, c] = v
    return OrientationField(angles=wrap_angles(angles), valid=valid)


def read_field(path) -> OrientationField:
    with open(path, encoding="ascii") as fh:
        return parse_field(fh.read())


def write_field(path, field: OrientationField) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(format_field(field))
