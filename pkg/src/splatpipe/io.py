"""Binary raster/Gaussian/embedding/weight formats, text manifests and PNG I/O.

All binary formats are little-endian with a 4-byte magic and a u16 version;
payloads are float32.
"""

from __future__ import annotations

import configparser
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .camera import DepthMap, PinholeCamera
from .depth_align import SparseDepth
from .errors import FormatError
from .gaussians import AppearanceEmbedding, ConvHeadWeights, ConvLayer, GaussianSet, RawHeadOutputs
from .sh import num_coeffs
from .visibility import SkyProbability, ViewRecord

VERSION = 1
RASTER_MAGIC = b"WSRF"
GAUSS_MAGIC = b"WSGS"
EMBED_MAGIC = b"WSEM"
WEIGHTS_MAGIC = b"WSCW"
DTYPE_F32 = 0

_RASTER_HDR = struct.Struct("<4sHIIHH")
_GAUSS_HDR = struct.Struct("<4sHQH")
_EMBED_HDR = struct.Struct("<4sHII")
_WEIGHTS_HDR = struct.Struct("<4sHHH")
_LAYER_HDR = struct.Struct("<IIII")
_ACT_CODES = {"identity": 0, "relu": 1}
_F32 = np.dtype("<f4")


class _Reader:
    def __init__(self, data: bytes, what: str):
        self.data = memoryview(data)
        self.pos = 0
        self.what = what

    def take(self, n: int) -> memoryview:
        if n < 0 or self.pos + n > len(self.data):
            raise FormatError(f"{self.what}: truncated (need {n} bytes at offset {self.pos})")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, st: struct.Struct):
        return st.unpack(self.take(st.size))

    def floats(self, count: int) -> np.ndarray:
        if count > (len(self.data) - self.pos) // 4:
            raise FormatError(f"{self.what}: declared size exceeds file length")
        return np.frombuffer(self.take(4 * count), dtype=_F32).astype(np.float64)

    def finish(self):
        if self.pos != len(self.data):
            raise FormatError(f"{self.what}: {len(self.data) - self.pos} trailing bytes")


def _check_header(magic, version, expected, what):
    if magic != expected:
        raise FormatError(f"{what}: bad magic {bytes(magic)!r}")
    if version != VERSION:
        raise FormatError(f"{what}: unsupported version {version}")


def _f32(a) -> bytes:
    a = np.asarray(a, dtype=np.float64)
    if not np.isfinite(a).all():
        raise FormatError("refusing to write non-finite values")
    return np.ascontiguousarray(a, dtype=_F32).tobytes()


# -- rasters -----------------------------------------------------------------

def encode_raster(values) -> bytes:
    v = np.asarray(values)
    if v.ndim == 2:
        v = v[..., None]
    if v.ndim != 3:
        raise FormatError("raster must be (H, W) or (H, W, C)")
    h, w, c = v.shape
    return _RASTER_HDR.pack(RASTER_MAGIC, VERSION, w, h, c, DTYPE_F32) + _f32(v)


def decode_raster(data: bytes) -> np.ndarray:
    """Return an ``(H, W, C)`` float64 array holding the stored float32 values."""
    r = _Reader(data, "raster")
    magic, version, w, h, c, dtype = r.unpack(_RASTER_HDR)
    _check_header(magic, version, RASTER_MAGIC, "raster")
    if dtype != DTYPE_F32:
        raise FormatError(f"raster: unsupported dtype tag {dtype}")
    vals = r.floats(w * h * c)
    r.finish()
    if not np.isfinite(vals).all():
        raise FormatError("raster: non-finite payload")
    return vals.reshape(h, w, c)


def write_raster(path, values):
    Path(path).write_bytes(encode_raster(values))


def read_raster(path) -> np.ndarray:
    return decode_raster(_read_bytes(path))


def read_depth(path) -> DepthMap:
    """Depth raster; zero or negative entries are invalid pixels."""
    v = read_raster(path)
    if v.shape[2] != 1:
        raise FormatError(f"{path}: depth raster must have one channel")
    return DepthMap.from_array(v[..., 0])


def write_depth(path, depth: DepthMap):
    write_raster(path, depth.filled(0.0))


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e.strerror}") from e


# -- Gaussians ---------------------------------------------------------------

def encode_gaussians(g: GaussianSet) -> bytes:
    k = g.sh.shape[1]
    a = g.opacities.astype(_F32)
    # keep opacities inside (0, 1) after float32 rounding
    a = np.clip(a, np.nextafter(_F32.type(0), _F32.type(1)), np.nextafter(_F32.type(1), _F32.type(0)))
    rec = np.concatenate([g.means, a[:, None].astype(np.float64), g.rotations, g.scales,
                          g.sh.reshape(len(g), 3 * k)], axis=1)
    return _GAUSS_HDR.pack(GAUSS_MAGIC, VERSION, len(g), g.sh_degree) + _f32(rec)


def decode_gaussians(data: bytes) -> GaussianSet:
    r = _Reader(data, "gaussians")
    magic, version, n, deg = r.unpack(_GAUSS_HDR)
    _check_header(magic, version, GAUSS_MAGIC, "gaussians")
    if deg > 3:
        raise FormatError(f"gaussians: SH degree {deg} unsupported")
    k = num_coeffs(deg)
    stride = 11 + 3 * k
    rec = r.floats(n * stride).reshape(n, stride)
    r.finish()
    try:
        return GaussianSet(rec[:, 0:3], rec[:, 3], rec[:, 4:8], rec[:, 8:11], rec[:, 11:].reshape(n, k, 3))
    except ValueError as e:
        raise FormatError(f"gaussians: {e}") from e


def write_gaussians(path, g: GaussianSet):
    Path(path).write_bytes(encode_gaussians(g))


def read_gaussians(path) -> GaussianSet:
    return decode_gaussians(_read_bytes(path))


# -- embeddings ----------------------------------------------------------------

def encode_embeddings(embs) -> bytes:
    embs = list(embs)
    dim = embs[0].dim if embs else 0
    if any(e.dim != dim for e in embs):
        raise FormatError("embeddings differ in dimension")
    payload = np.stack([e.values for e in embs]) if embs else np.zeros((0, 0))
    return _EMBED_HDR.pack(EMBED_MAGIC, VERSION, len(embs), dim) + _f32(payload)


def decode_embeddings(data: bytes) -> list[AppearanceEmbedding]:
    r = _Reader(data, "embeddings")
    magic, version, count, dim = r.unpack(_EMBED_HDR)
    _check_header(magic, version, EMBED_MAGIC, "embeddings")
    vals = r.floats(count * dim).reshape(count, dim)
    r.finish()
    return [AppearanceEmbedding(v) for v in vals]


def write_embeddings(path, embs):
    Path(path).write_bytes(encode_embeddings(embs))


def read_embeddings(path) -> list[AppearanceEmbedding]:
    return decode_embeddings(_read_bytes(path))


# -- conv head weights ---------------------------------------------------------

def encode_weights(w: ConvHeadWeights) -> bytes:
    out = [_WEIGHTS_HDR.pack(WEIGHTS_MAGIC, VERSION, _ACT_CODES[w.activation], 2)]
    for layer in (w.layer1, w.layer2):
        o, i, k, _ = layer.kernel.shape
        out.append(_LAYER_HDR.pack(o, i, k, layer.padding))
        out.append(_f32(layer.kernel))
        out.append(_f32(layer.bias))
    return b"".join(out)


def decode_weights(data: bytes) -> ConvHeadWeights:
    r = _Reader(data, "weights")
    magic, version, act, n_layers = r.unpack(_WEIGHTS_HDR)
    _check_header(magic, version, WEIGHTS_MAGIC, "weights")
    names = {v: k for k, v in _ACT_CODES.items()}
    if act not in names:
        raise FormatError(f"weights: unknown activation code {act}")
    if n_layers != 2:
        raise FormatError(f"weights: expected 2 layers, found {n_layers}")
    layers = []
    for _ in range(n_layers):
        o, i, k, pad = r.unpack(_LAYER_HDR)
        kern = r.floats(o * i * k * k).reshape(o, i, k, k)
        bias = r.floats(o)
        layers.append(ConvLayer(kern, bias, pad))
    r.finish()
    try:
        return ConvHeadWeights(layers[0], layers[1], names[act])
    except ValueError as e:
        raise FormatError(f"weights: {e}") from e


def write_weights(path, w: ConvHeadWeights):
    Path(path).write_bytes(encode_weights(w))


def read_weights(path) -> ConvHeadWeights:
    return decode_weights(_read_bytes(path))


# -- sparse depth (text) -------------------------------------------------------

def write_sparse(path, sparse: SparseDepth):
    with open(path, "w") as f:
        f.write("# u v depth\n")
        for (u, v), d in zip(sparse.pixels, sparse.depths):
            f.write(f"{int(u)} {int(v)} {float(d)!r}\n")


def read_sparse(path) -> SparseDepth:
    px, ds = [], []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e.strerror}") from e
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise FormatError(f"{path}:{n}: expected 'u v depth'")
        try:
            px.append((int(parts[0]), int(parts[1])))
            ds.append(float(parts[2]))
        except ValueError as e:
            raise FormatError(f"{path}:{n}: {e}") from e
    try:
        return SparseDepth(np.array(px, dtype=np.int64).reshape(-1, 2), np.array(ds))
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e


# -- PNG -----------------------------------------------------------------------

def write_png(path, rgb):
    from PIL import Image

    a = np.asarray(getattr(rgb, "values", rgb), float)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[..., 0]
    q = np.round(np.clip(a, 0, 1) * 255).astype(np.uint8)
    Image.fromarray(q, mode="L" if q.ndim == 2 else "RGB").save(path)


def read_png(path) -> np.ndarray:
    from PIL import Image

    try:
        with Image.open(path) as im:
            a = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except (OSError, ValueError) as e:
        raise FormatError(f"cannot read image {path}: {e}") from e
    return a


# -- cameras and manifests -----------------------------------------------------

def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in np.ravel(values))


def _floats(text, n, where):
    try:
        v = [float(x) for x in text.split()]
    except ValueError as e:
        raise FormatError(f"{where}: {e}") from e
    if len(v) != n:
        raise FormatError(f"{where}: expected {n} numbers, got {len(v)}")
    return np.array(v)


_CAMERA_KEYS = ("fx", "fy", "cx", "cy", "width", "height", "rotation", "translation")


def camera_to_section(cam: PinholeCamera) -> dict:
    return {"fx": repr(cam.fx), "fy": repr(cam.fy), "cx": repr(cam.cx), "cy": repr(cam.cy),
            "width": str(cam.width), "height": str(cam.height),
            "rotation": _fmt(cam.rotation), "translation": _fmt(cam.translation)}


def camera_from_section(sec, where) -> PinholeCamera:
    missing = [k for k in _CAMERA_KEYS if k not in sec]
    if missing:
        raise FormatError(f"{where}: missing camera keys {missing}")
    try:
        return PinholeCamera(float(sec["fx"]), float(sec["fy"]), float(sec["cx"]), float(sec["cy"]),
                             int(sec["width"]), int(sec["height"]),
                             _floats(sec["rotation"], 9, where).reshape(3, 3),
                             _floats(sec["translation"], 3, where))
    except ValueError as e:
        raise FormatError(f"{where}: {e}") from e


def write_camera(path, cam: PinholeCamera):
    cp = configparser.ConfigParser()
    cp["camera"] = camera_to_section(cam)
    with open(path, "w") as f:
        cp.write(f)


def read_camera(path) -> PinholeCamera:
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FormatError(f"cannot read camera file {path}")
    if "camera" not in cp:
        raise FormatError(f"{path}: no [camera] section")
    return camera_from_section(cp["camera"], str(path))


VIEW_FILE_KEYS = ("image", "depth", "sky", "features", "rays", "pred_depth", "head", "sparse", "mono_depth")


@dataclass
class ViewEntry:
    id: str
    camera: PinholeCamera
    files: dict = field(default_factory=dict)


@dataclass
class SceneManifest:
    """Scene description stored as INI text.

    ``[scene]`` holds ``id`` and optional ``embeddings``/``weights`` paths;
    each ``[view <id>]`` section holds camera keys plus file paths relative
    to the manifest directory.
    """

    scene_id: str
    views: list
    root: Path = Path(".")
    extra: dict = field(default_factory=dict)

    def view(self, vid) -> ViewEntry:
        for v in self.views:
            if v.id == str(vid):
                return v
        raise KeyError(f"view {vid!r} not in manifest")

    def path(self, rel) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.root / p

    def file(self, vid, key) -> Path:
        v = self.view(vid)
        if key not in v.files:
            raise FormatError(f"view {vid!r} has no {key!r} entry")
        return self.path(v.files[key])

    def ids(self):
        return [v.id for v in self.views]

    def view_record(self, vid) -> ViewRecord:
        """Camera + aligned depth + sky probability for visibility work."""
        v = self.view(vid)
        depth = read_depth(self.file(vid, "depth"))
        sky = None
        if "sky" in v.files:
            s = read_raster(self.file(vid, "sky"))[..., 0]
            sky = SkyProbability(np.clip(s, 0.0, 1.0))
        return ViewRecord(v.id, v.camera, depth, sky)

    def head_outputs(self, vid) -> RawHeadOutputs:
        return RawHeadOutputs.from_rasters(read_raster(self.file(vid, "head")),
                                           read_raster(self.file(vid, "features")))


def write_manifest(path, manifest: SceneManifest):
    cp = configparser.ConfigParser()
    cp["scene"] = {"id": manifest.scene_id, **manifest.extra}
    for v in manifest.views:
        cp[f"view {v.id}"] = {**camera_to_section(v.camera), **v.files}
    with open(path, "w") as f:
        cp.write(f)


def read_manifest(path) -> SceneManifest:
    cp = configparser.ConfigParser()
    try:
        with open(path) as f:
            cp.read_file(f)
    except OSError as e:
        raise FormatError(f"cannot read manifest {path}: {e.strerror}") from e
    except configparser.Error as e:
        raise FormatError(f"{path}: {e}") from e
    if "scene" not in cp or "id" not in cp["scene"]:
        raise FormatError(f"{path}: missing [scene] id")
    root = Path(path).resolve().parent
    views, seen = [], set()
    for name in cp.sections():
        if not name.startswith("view "):
            continue
        vid = name[5:].strip()
        if vid in seen:
            raise FormatError(f"{path}: duplicate view id {vid!r}")
        seen.add(vid)
        sec = cp[name]
        files = {k: sec[k] for k in VIEW_FILE_KEYS if k in sec}
        for k, rel in files.items():
            p = Path(rel) if os.path.isabs(rel) else root / rel
            if not p.exists():
                raise FormatError(f"{path}: view {vid!r} {k} file {rel} does not exist")
        views.append(ViewEntry(vid, camera_from_section(sec, f"{path}[{name}]"), files))
    extra = {k: v for k, v in cp["scene"].items() if k != "id"}
    return SceneManifest(cp["scene"]["id"], views, root, extra)
