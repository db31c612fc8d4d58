"""On-disk map format and raster image output.

The grid file is a small versioned binary container: a fixed header with the
grid geometry, a layer directory, then row-major little-endian payloads.
Mandatory layers are labels (u8), heights (f32), and observed (u8); extra
layers round-trip untouched. Renders are binary P6 PPMs with a fixed
class-color palette.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError
from .geometry import GridSpec
from .mapdata import NUM_CLASSES

MAGIC = b"SMAPGRID"
VERSION = 1

_TYPE_CODES = {"u8": 0, "f32": 1}
_TYPE_DTYPES = {0: np.dtype("<u1"), 1: np.dtype("<f4")}
_MANDATORY = {"labels": 0, "heights": 1, "observed": 0}

# void is white; classes 1..12 use a fixed qualitative color table
PALETTE = (
    (255, 255, 255),
    (31, 119, 180), (255, 127, 14), (44, 160, 44), (214, 39, 40),
    (148, 103, 189), (140, 86, 75), (227, 119, 194), (127, 127, 127),
    (188, 189, 34), (23, 190, 207), (174, 199, 232), (255, 187, 120),
)


def write_gridfile(path: str, grid: GridSpec, layers: dict) -> None:
    """Serialize named raster layers over one grid.

    layers maps name -> (v_size, u_size) array; uint8 arrays store as u8,
    floating arrays as f32. The three mandatory layers must be present.
    """
    for name, code in _MANDATORY.items():
        if name not in layers:
            raise FormatError(f"missing mandatory layer {name!r}")
    shape = (grid.v_size, grid.u_size)
    entries = []
    for name in layers:
        arr = np.asarray(layers[name])
        if arr.shape != shape:
            raise FormatError(f"layer {name!r} shape {arr.shape} != {shape}")
        if name in _MANDATORY:
            code = _MANDATORY[name]
        else:
            code = 0 if arr.dtype.kind in "ub" else 1
        entries.append((name, code, arr.astype(_TYPE_DTYPES[code])))

    header = MAGIC + struct.pack("<IIIdddI", VERSION, grid.u_size,
                                 grid.v_size, grid.resolution, grid.origin_x,
                                 grid.origin_z, len(entries))
    dir_size = sum(2 + len(name.encode()) + 1 + 8 for name, _, _ in entries)
    offset = len(header) + dir_size
    directory = b""
    payloads = []
    for name, code, arr in entries:
        nb = name.encode()
        directory += struct.pack("<H", len(nb)) + nb + struct.pack("<BQ",
                                                                   code, offset)
        data = arr.tobytes(order="C")
        payloads.append(data)
        offset += len(data)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(directory)
        for data in payloads:
            fh.write(data)


def read_gridfile(path: str):
    """Read a grid file; returns (GridSpec, {name: array})."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise FormatError("bad magic; not a grid file")
    version, u_size, v_size, res, ox, oz, n_layers = struct.unpack_from(
        "<IIIdddI", blob, 8)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    grid = GridSpec(origin_x=ox, origin_z=oz, resolution=res,
                    u_size=u_size, v_size=v_size)
    pos = 8 + struct.calcsize("<IIIdddI")
    entries = []
    for _ in range(n_layers):
        (nlen,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos:pos + nlen].decode()
        pos += nlen
        code, offset = struct.unpack_from("<BQ", blob, pos)
        pos += 9
        if code not in _TYPE_DTYPES:
            raise FormatError(f"unknown element type code {code}")
        entries.append((name, code, offset))
    layers = {}
    count = v_size * u_size
    for name, code, offset in entries:
        dt = _TYPE_DTYPES[code]
        end = offset + count * dt.itemsize
        if end > len(blob):
            raise FormatError(f"layer {name!r} payload truncated")
        layers[name] = np.frombuffer(blob[offset:end], dtype=dt).reshape(
            v_size, u_size).copy()
    for name in _MANDATORY:
        if name not in layers:
            raise FormatError(f"missing mandatory layer {name!r}")
    return grid, layers


def write_ppm(labels: np.ndarray, path: str, palette=PALETTE) -> None:
    """Render a label raster to a binary P6 PPM (maxval 255, row-major)."""
    lab = np.asarray(labels)
    if lab.min() < 0 or lab.max() >= NUM_CLASSES:
        raise FormatError("labels must be in 0..12")
    lut = np.asarray(palette, dtype=np.uint8)
    rgb = lut[lab.astype(np.int64)]
    h, w = lab.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes(order="C"))


def read_ppm(path: str):
    """Read a binary P6 PPM back as an (H, W, 3) uint8 array."""
    with open(path, "rb") as fh:
        blob = fh.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        fields.append(blob[start:pos])
    if fields[0] != b"P6":
        raise FormatError("not a P6 PPM")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise FormatError("only maxval 255 supported")
    pos += 1  # single whitespace after maxval
    data = blob[pos:pos + w * h * 3]
    if len(data) != w * h * 3:
        raise FormatError("pixel payload truncated")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w, 3).copy()
