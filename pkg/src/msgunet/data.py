"""Paired-image datasets, scale pyramids, and the input-degradation path.

Directory layout: root/{split}/{source,target}/<id>.{ppm,png}. Binary PPM
(P6, maxval 255) is the native format and is written bit-exact; PNG is
accepted on read through Pillow.

Images travel as float arrays of shape (3, H, W) in [-1, 1] (see
normalize). Pyramids are built coarsest-first by successive bilinear
halving of the finest entry, which makes entry k bitwise equal to the
half-scale resample of entry k+1.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .interp import bilinear_resize

_EXTS = (".ppm", ".png")


# ---------------------------------------------------------------------------
# image files
# ---------------------------------------------------------------------------

def read_ppm(path) -> np.ndarray:
    """Binary P6 file -> uint8 array (3, H, W)."""
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P6"):
        raise DataError(f"{path}: not a binary PPM (P6) file")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError as e:
        raise DataError(f"{path}: bad PPM header fields {fields}") from e
    if maxval != 255:
        raise DataError(f"{path}: PPM maxval must be 255, got {maxval}")
    need = width * height * 3
    pixels = raw[pos:pos + need]
    if len(pixels) != need:
        raise DataError(f"{path}: PPM payload truncated ({len(pixels)} of {need} bytes)")
    arr = np.frombuffer(pixels, dtype=np.uint8).reshape(height, width, 3)
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def write_ppm(path, image: np.ndarray):
    """uint8 array (3, H, W) -> binary P6 file, canonical header."""
    if image.dtype != np.uint8 or image.ndim != 3 or image.shape[0] != 3:
        raise DataError(f"write_ppm expects uint8 (3,H,W), got {image.dtype} {image.shape}")
    _, h, w = image.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(image.transpose(1, 2, 0)).tobytes())


def read_image(path) -> np.ndarray:
    """PPM or PNG -> uint8 array (3, H, W)."""
    path = Path(path)
    ext = path.suffix.lower()
    if ext == ".ppm":
        return read_ppm(path)
    if ext == ".png":
        from PIL import Image

        try:
            with Image.open(path) as im:
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
        except Exception as e:
            raise DataError(f"{path}: cannot decode PNG: {e}") from e
        return np.ascontiguousarray(arr.transpose(2, 0, 1))
    raise DataError(f"{path}: unsupported image extension {ext!r} (need .ppm or .png)")


def write_image(path, image: np.ndarray):
    path = Path(path)
    ext = path.suffix.lower()
    if ext == ".ppm":
        write_ppm(path, image)
    elif ext == ".png":
        from PIL import Image

        Image.fromarray(np.ascontiguousarray(image.transpose(1, 2, 0))).save(path)
    else:
        raise DataError(f"{path}: unsupported image extension {ext!r}")


# ---------------------------------------------------------------------------
# value range
# ---------------------------------------------------------------------------

def normalize(image: np.ndarray, dtype=np.float32) -> np.ndarray:
    """uint8 [0,255] -> float [-1,1] via x/127.5 - 1."""
    return (image.astype(dtype) / dtype(127.5)) - dtype(1.0)


def denormalize(image: np.ndarray) -> np.ndarray:
    """float -> uint8 with clamping and round-half-up."""
    scaled = (np.asarray(image, dtype=np.float64) + 1.0) * 127.5
    return np.clip(np.floor(scaled + 0.5), 0.0, 255.0).astype(np.uint8)


# ---------------------------------------------------------------------------
# dataset manifest
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PairedSample:
    source: np.ndarray  # (3, H, W) in [-1, 1]
    target: np.ndarray
    identifier: str


@dataclass(frozen=True)
class DatasetManifest:
    root: str
    split: str
    ids: tuple[str, ...]
    files: tuple[tuple[str, str], ...]  # (source path, target path) per id

    def __len__(self):
        return len(self.ids)


def load_dataset(root, split: str) -> DatasetManifest:
    """Scan root/split/{source,target}, pair by filename, decode-check.

    Ordering is lexicographic by identifier and stable across runs.
    """
    base = Path(root) / split
    src_dir = base / "source"
    tgt_dir = base / "target"
    for d in (src_dir, tgt_dir):
        if not d.is_dir():
            raise DataError(f"dataset directory missing: {d}")

    def listing(d):
        return {p.name: p for p in d.iterdir()
                if p.is_file() and p.suffix.lower() in _EXTS}

    src = listing(src_dir)
    tgt = listing(tgt_dir)
    for name in sorted(src.keys() - tgt.keys()):
        raise DataError(f"source/{name} has no counterpart target/{name}")
    for name in sorted(tgt.keys() - src.keys()):
        raise DataError(f"target/{name} has no counterpart source/{name}")
    if not src:
        raise DataError(f"no images found under {base}")

    ids = tuple(sorted(src.keys()))
    files = []
    for name in ids:
        s = read_image(src[name])
        t = read_image(tgt[name])
        if s.shape != t.shape:
            raise DataError(
                f"{name}: source {s.shape} and target {t.shape} resolutions differ"
            )
        files.append((str(src[name]), str(tgt[name])))
    return DatasetManifest(root=str(root), split=split, ids=ids, files=tuple(files))


def read_pair(manifest: DatasetManifest, index: int, dtype=np.float32) -> PairedSample:
    src_path, tgt_path = manifest.files[index]
    return PairedSample(
        source=normalize(read_image(src_path), dtype),
        target=normalize(read_image(tgt_path), dtype),
        identifier=manifest.ids[index],
    )


# ---------------------------------------------------------------------------
# pyramids
# ---------------------------------------------------------------------------

def halve(image: np.ndarray) -> np.ndarray:
    """Bilinear downsample by exactly 2x per axis."""
    _, h, w = image.shape
    return bilinear_resize(image, h // 2, w // 2)


def make_pyramid(image: np.ndarray, scale_chain) -> list[np.ndarray]:
    """Coarsest-first pyramid; finest entry resized once, the rest halved.

    When the image is already at the finest scale the finest entry is the
    input array itself (bitwise).
    """
    chain = [tuple(s) for s in scale_chain]
    _, h, w = image.shape
    fh, fw = chain[-1]
    if h < fh or w < fw:
        raise DataError(f"image {h}x{w} smaller than finest scale {fh}x{fw}")
    if h * fw != w * fh:
        raise DataError(
            f"image aspect {h}x{w} does not match scale chain aspect {fh}x{fw}"
        )
    finest = image if (h, w) == (fh, fw) else bilinear_resize(image, fh, fw)
    entries = [finest]
    for sh, sw in reversed(chain[:-1]):
        nxt = halve(entries[-1])
        if nxt.shape[1:] != (sh, sw):
            raise DataError(f"pyramid halving produced {nxt.shape[1:]}, expected {sh}x{sw}")
        entries.append(nxt)
    entries.reverse()
    return entries


def ablation_degrade(image: np.ndarray, degrade_to, scale_chain) -> list[np.ndarray]:
    """Destroy detail above `degrade_to`, then refill the whole chain.

    Scales at or below degrade_to come from the normal downsampling path;
    finer scales are bilinear upsamples of the degraded copy.
    """
    chain = [tuple(s) for s in scale_chain]
    degrade_to = tuple(degrade_to)
    if degrade_to not in chain:
        raise DataError(f"degrade_to {degrade_to} is not in the scale chain {chain}")
    pyr = make_pyramid(image, chain)
    j = chain.index(degrade_to)
    degraded = pyr[j]
    out = []
    for k, (sh, sw) in enumerate(chain):
        if k <= j:
            out.append(pyr[k])
        else:
            out.append(bilinear_resize(degraded, sh, sw))
    return out
