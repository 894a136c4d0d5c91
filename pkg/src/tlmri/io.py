"""File formats: complex images, masks, k-space data, transforms, configs, traces.

Binary payloads are little-endian float32 with interleaved (re, im)
pairs.  Each binary file ``path`` has a sidecar text header at
``path + ".hdr"``.
"""
import csv
import dataclasses
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError, ValidationError
from .kspace import KSpaceData
from .recon import REQUIRED_KEYS, ReconConfig
from .transforms import MODES

_F32 = np.dtype("<f4")


def header_path(path):
    return os.fspath(path) + ".hdr"


def _write_complex(path, values):
    a = np.asarray(values, dtype=np.complex128).ravel()
    inter = np.empty(2 * a.size, dtype=_F32)
    inter[0::2] = a.real
    inter[1::2] = a.imag
    with open(path, "wb") as f:
        f.write(inter.tobytes())


def _read_complex(path, count):
    try:
        raw = np.fromfile(path, dtype=_F32)
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if raw.size != 2 * count:
        raise FormatError(f"{path}: payload holds {raw.size // 2} complex values, header says {count}")
    return (raw[0::2].astype(np.float64) + 1j * raw[1::2].astype(np.float64))


def _read_header(path, nfields):
    hp = header_path(path)
    try:
        with open(hp) as f:
            fields = f.read().split()
    except OSError as exc:
        raise FormatError(f"cannot read header {hp}: {exc}") from exc
    if len(fields) != nfields:
        raise FormatError(f"{hp}: expected {nfields} header fields, found {len(fields)}")
    return fields


# --- images -----------------------------------------------------------------


def save_image(path, img):
    """Write a complex image (row-major float32 pairs) with a ``width height`` header."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValidationError("image must be 2D")
    h, w = img.shape
    _write_complex(path, img)
    with open(header_path(path), "w") as f:
        f.write(f"{w} {h}\n")


def load_image(path):
    fields = _read_header(path, 2)
    try:
        w, h = (int(v) for v in fields)
    except ValueError as exc:
        raise FormatError(f"{header_path(path)}: bad dimensions {fields}") from exc
    if w < 1 or h < 1:
        raise FormatError(f"{header_path(path)}: non-positive dimensions")
    return _read_complex(path, w * h).reshape(h, w)


def save_magnitude_pgm(path, img, peak=None):
    """8-bit binary PGM of ``|img|`` mapped linearly from ``[0, peak]`` to ``[0, 255]``."""
    mag = np.abs(np.asarray(img))
    peak = float(mag.max()) if peak is None else float(peak)
    if peak > 0:
        scaled = np.clip(np.floor(mag / peak * 255.0 + 0.5), 0, 255)
    else:
        scaled = np.zeros_like(mag)
    h, w = mag.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(scaled.astype(np.uint8).tobytes())


def read_pgm(path):
    """Read a P2 (ASCII) or P5 (binary, 8-bit) PGM; returns ``(array, maxval)``."""
    with open(path, "rb") as f:
        data = f.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos].decode("ascii"))
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic == "P2":
        values = np.array(data[pos:].split(), dtype=np.int64)
    elif magic == "P5":
        values = np.frombuffer(data[pos + 1 :], dtype=np.uint8).astype(np.int64)
    else:
        raise FormatError(f"{path}: unsupported PGM magic {magic!r}")
    if values.size != w * h:
        raise FormatError(f"{path}: {values.size} pixels, header says {w}x{h}")
    return values.reshape(h, w), maxval


# --- masks ------------------------------------------------------------------


def save_mask(path, mask):
    """ASCII PGM (P2) with maxval 1, one pixel per frequency in centred layout."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    lines = [f"P2\n{w} {h}\n1\n"]
    for row in mask.astype(np.uint8):
        lines.append(" ".join(map(str, row)) + "\n")
    with open(path, "w") as f:
        f.write("".join(lines))


def load_mask(path):
    values, maxval = read_pgm(path)
    if maxval != 1 or values.min() < 0 or values.max() > 1:
        raise FormatError(f"{path}: mask PGM must have maxval 1 and 0/1 pixels")
    mask = values.astype(bool)
    if not mask.any():
        raise FormatError(f"{path}: mask samples no frequencies")
    return mask


# --- k-space ----------------------------------------------------------------


def save_kspace(path, data):
    """Write ``y`` in mask raster order with header ``width height m noise_sigma seed``."""
    h, w = data.shape
    _write_complex(path, data.y)
    with open(header_path(path), "w") as f:
        f.write(f"{w} {h} {data.m} {data.noise_sigma!r} {int(data.seed)}\n")


def load_kspace(path, mask):
    fields = _read_header(path, 5)
    try:
        w, h, m = (int(v) for v in fields[:3])
        sigma = float(fields[3])
        seed = int(fields[4])
    except ValueError as exc:
        raise FormatError(f"{header_path(path)}: malformed header {fields}") from exc
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (h, w):
        raise FormatError(f"k-space header says {w}x{h}, mask is {mask.shape[1]}x{mask.shape[0]}")
    if int(mask.sum()) != m:
        raise FormatError(f"k-space header says m={m}, mask samples {int(mask.sum())}")
    return KSpaceData(y=_read_complex(path, m), mask=mask, noise_sigma=sigma, seed=seed)


# --- transforms -------------------------------------------------------------


def save_transforms(path, transforms, mode="unitary"):
    """Header ``n K mode``; payload: each transform column-major, back to back."""
    if mode not in MODES:
        raise ValidationError(f"unknown transform mode {mode!r}")
    mats = [np.asarray(W) for W in transforms]
    n = mats[0].shape[0]
    if any(W.shape != (n, n) for W in mats):
        raise ValidationError("transforms must all be n x n")
    _write_complex(path, np.concatenate([W.ravel(order="F") for W in mats]))
    with open(header_path(path), "w") as f:
        f.write(f"{n} {len(mats)} {mode}\n")


def load_transforms(path):
    """Return ``(list of n x n arrays, mode)``."""
    fields = _read_header(path, 3)
    try:
        n, K = int(fields[0]), int(fields[1])
    except ValueError as exc:
        raise FormatError(f"{header_path(path)}: malformed header {fields}") from exc
    mode = fields[2]
    if mode not in MODES:
        raise FormatError(f"{header_path(path)}: unknown mode {mode!r}")
    flat = _read_complex(path, n * n * K)
    return [flat[k * n * n : (k + 1) * n * n].reshape(n, n, order="F") for k in range(K)], mode


# --- reconstruction config --------------------------------------------------


def _parse_value(key, raw, kind):
    if kind is bool:
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind.__name__}") from exc


_FIELD_TYPES = {
    "scheme": str,
    "solver": str,
    "nu": float,
    "lam": float,
    "wraparound": bool,
    "trace_steps": bool,
}


def _field_type(f):
    if f.name in _FIELD_TYPES:
        return _FIELD_TYPES[f.name]
    return type(f.default)


def parse_config(text, source="<config>"):
    """Parse flat ``key=value`` lines into a :class:`ReconConfig`.

    Blank lines and ``#`` comments are ignored.  Unknown or repeated keys
    and missing scheme-required keys raise :class:`ConfigError`.
    """
    fields = {f.name: f for f in dataclasses.fields(ReconConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in fields:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate config key {key!r}")
        values[key] = _parse_value(key, raw, _field_type(fields[key]))
    if "scheme" not in values:
        raise ConfigError(f"{source}: missing required config key 'scheme'")
    required = REQUIRED_KEYS.get(values["scheme"])
    if required is None:
        raise ConfigError(f"{source}: unknown scheme {values['scheme']!r}")
    for key in required:
        if key not in values:
            raise ConfigError(f"{source}: missing required config key {key!r}")
    return ReconConfig(**values)


def load_config(path):
    try:
        with open(path) as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, source=os.fspath(path))


def format_config(config):
    lines = []
    for f in dataclasses.fields(config):
        v = getattr(config, f.name)
        if v is None:
            continue
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name}={v}")
    return "\n".join(lines) + "\n"


# --- traces -----------------------------------------------------------------

TRACE_HEADER = ("iter", "tau", "fidelity", "sparse_resid", "l0", "rank", "reg_transform", "total", "psnr")


def _num(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if isinstance(v, float) and math.isnan(v):
        return "nan"
    return repr(float(v))


def write_trace(path, trace):
    """Write the per-iteration objective trace as CSV.

    The ``rank`` column holds the whole low-rank branch (residual plus
    rank penalty) so that the columns sum to ``total``.
    """
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for row in trace:
            o = row.objective
            w.writerow(
                [
                    row.iter,
                    _num(row.tau),
                    _num(o.fidelity),
                    _num(o.sparse_resid),
                    _num(o.l0),
                    _num(o.lowrank_resid + o.rank),
                    _num(o.reg_transform),
                    _num(o.total),
                    _num(row.psnr),
                ]
            )


def read_trace(path):
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != TRACE_HEADER:
            raise FormatError(f"{path}: unexpected trace header {reader.fieldnames}")
        return [{k: (int(v) if k == "iter" else float(v)) for k, v in row.items()} for row in reader]


# --- dataset bookkeeping ----------------------------------------------------


@dataclass
class DatasetDescriptor:
    """Paths of one simulated acquisition plus its provenance."""

    mask: str
    measurements: str
    ground_truth: str = None
    width: int = None
    height: int = None
    noise_sigma: float = None
    seed: int = None

    def validate(self):
        """Check the files exist and agree on dimensions; fill in the metadata."""
        for p in (self.mask, self.measurements, self.ground_truth):
            if p is not None and not os.path.exists(p):
                raise ValidationError(f"missing file {p}")
        mask = load_mask(self.mask)
        data = load_kspace(self.measurements, mask)
        self.height, self.width = mask.shape
        self.noise_sigma, self.seed = data.noise_sigma, data.seed
        if self.ground_truth is not None:
            ref = load_image(self.ground_truth)
            if ref.shape != mask.shape:
                raise ValidationError(
                    f"ground truth is {ref.shape[1]}x{ref.shape[0]}, mask is {self.width}x{self.height}"
                )
        return mask, data


@dataclass
class RunReport:
    scheme: str
    config: dict
    psnr: float
    psnr_zero_fill: float
    wall_time: float
    trace_path: str = None

    @property
    def identical_images(self):
        return math.isinf(self.psnr)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["identical_images"] = self.identical_images
        for key in ("psnr", "psnr_zero_fill"):
            if d[key] is not None and not math.isfinite(d[key]):
                d[key] = str(d[key])
        return d
