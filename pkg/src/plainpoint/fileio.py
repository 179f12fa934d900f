"""Reading and writing point clouds as XYZ text or ASCII PLY."""
from __future__ import annotations

import colorsys
from pathlib import Path

import numpy as np

from .geometry import PointCloud
from .patchify import PatchSet
from .rng import Rng


class PointCloudFormatError(ValueError):
    pass


class UnsupportedFormatError(PointCloudFormatError):
    pass


def _format_for(path, fmt: str | None) -> str:
    if fmt:
        fmt = fmt.lower()
    else:
        fmt = Path(path).suffix.lower().lstrip(".") or "xyz"
    if fmt not in ("xyz", "ply"):
        raise UnsupportedFormatError(f"unsupported point cloud format {fmt!r} for {path}")
    return fmt


def _parse_row(text: str, lineno: int, path) -> list[float]:
    try:
        values = [float(v) for v in text.split()]
    except ValueError:
        raise PointCloudFormatError(f"{path}:{lineno}: non-numeric value in {text.strip()!r}") from None
    return values


def _read_xyz(path) -> PointCloud:
    rows = []
    width = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            values = _parse_row(body, lineno, path)
            if len(values) not in (3, 6):
                raise PointCloudFormatError(f"{path}:{lineno}: expected 3 or 6 values, got {len(values)}")
            if width is not None and len(values) != width:
                raise PointCloudFormatError(f"{path}:{lineno}: expected {width} values like earlier lines, got {len(values)}")
            width = len(values)
            rows.append(values)
    if not rows:
        raise PointCloudFormatError(f"{path}: no points")
    data = np.array(rows)
    extras = data[:, 3:] / 255.0 if width == 6 else None
    return PointCloud(data[:, :3], extras)


def _read_ply(path) -> PointCloud:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError:
        raise UnsupportedFormatError(f"{path}: binary PLY is not supported") from None
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise PointCloudFormatError(f"{path}:1: missing 'ply' magic line")
    props: list[str] = []
    count = None
    header_end = None
    for lineno, line in enumerate(lines[1:], 2):
        tokens = line.split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        if tokens[0] == "format":
            if len(tokens) < 2 or tokens[1] != "ascii":
                raise UnsupportedFormatError(f"{path}:{lineno}: only 'format ascii 1.0' is supported")
        elif tokens[0] == "element":
            if tokens[1] != "vertex" or count is not None:
                raise UnsupportedFormatError(f"{path}:{lineno}: element {tokens[1]!r} is not supported")
            count = int(tokens[2])
        elif tokens[0] == "property":
            if tokens[1] == "list":
                raise UnsupportedFormatError(f"{path}:{lineno}: list properties are not supported")
            props.append(tokens[2])
        elif tokens[0] == "end_header":
            header_end = lineno
            break
        else:
            raise PointCloudFormatError(f"{path}:{lineno}: unexpected header line {line.strip()!r}")
    if header_end is None or count is None:
        raise PointCloudFormatError(f"{path}: incomplete PLY header")
    if props[:3] != ["x", "y", "z"]:
        raise UnsupportedFormatError(f"{path}: vertex properties must start with x, y, z; got {props}")
    extra = props[3:]
    if extra not in ([], ["red", "green", "blue"]):
        raise UnsupportedFormatError(f"{path}: unsupported vertex properties {extra}")
    rows = []
    for offset, line in enumerate(lines[header_end : header_end + count]):
        lineno = header_end + 1 + offset
        values = _parse_row(line, lineno, path)
        if len(values) != len(props):
            raise PointCloudFormatError(f"{path}:{lineno}: expected {len(props)} values, got {len(values)}")
        rows.append(values)
    if len(rows) != count:
        raise PointCloudFormatError(f"{path}: header declares {count} vertices, found {len(rows)}")
    if any(line.strip() for line in lines[header_end + count :]):
        raise UnsupportedFormatError(f"{path}: data after the vertex element is not supported")
    data = np.array(rows)
    return PointCloud(data[:, :3], data[:, 3:] / 255.0 if extra else None)


def load_point_cloud(path, fmt: str | None = None) -> PointCloud:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such point cloud file: {path}")
    return _read_ply(path) if _format_for(path, fmt) == "ply" else _read_xyz(path)


def _colors_to_bytes(extras: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(extras[:, :3] * 255.0), 0, 255).astype(np.int64)


def format_point_cloud(pc: PointCloud, fmt: str = "xyz") -> str:
    coords = [" ".join(f"{v:.9g}" for v in row) for row in pc.coords]
    if pc.extras is not None and pc.extras.shape[1] >= 3:
        colors = _colors_to_bytes(pc.extras)
        lines = [f"{c} {r} {g} {b}" for c, (r, g, b) in zip(coords, colors)]
    else:
        lines = coords
    if fmt == "ply":
        header = ["ply", "format ascii 1.0", f"element vertex {len(pc)}",
                  "property double x", "property double y", "property double z"]
        if lines is not coords:
            header += ["property uchar red", "property uchar green", "property uchar blue"]
        lines = header + ["end_header"] + lines
    return "\n".join(lines) + "\n"


def save_point_cloud(pc: PointCloud, path, fmt: str | None = None) -> None:
    fmt = _format_for(path, fmt)
    try:
        Path(path).write_text(format_point_cloud(pc, fmt), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write point cloud to {path}: {exc.strerror}") from exc


def patch_colors(m: int, seed: int = 0) -> np.ndarray:
    """``m`` distinct 8-bit colors scaled to [0, 1], reproducible per seed."""
    rng = Rng(seed).split("patch-colors")
    hues = (np.arange(m) + rng.random()) / max(m, 1)
    colors, seen = [], set()
    for h in hues[rng.permutation(m)]:
        rgb = tuple(int(round(c * 255)) for c in colorsys.hsv_to_rgb(h, 0.85, 0.95))
        while rgb in seen:
            rgb = (rgb[0], rgb[1], (rgb[2] + 1) % 256)
        seen.add(rgb)
        colors.append(rgb)
    return np.array(colors, dtype=np.float64).reshape(m, 3) / 255.0


def patch_colored_cloud(pc: PointCloud, ps: PatchSet, seed: int = 0) -> PointCloud:
    """Unique points of every patch, painted with that patch's color."""
    colors = patch_colors(ps.num_patches, seed)
    rows = ps.unique_rows()
    idx = np.concatenate(rows)
    paint = np.concatenate([np.repeat(colors[m : m + 1], len(r), axis=0) for m, r in enumerate(rows)])
    return PointCloud(pc.coords[idx], paint)
