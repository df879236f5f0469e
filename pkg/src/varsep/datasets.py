"""Synthetic sequence datasets and the SVSF container.

SVSF layout (little-endian)::

    b"SVSF" | u16 version | u8 kind tag | u8 frame rank r
    u32 n_sequences | u32 n_frames | u32 frame dims (r of them)
    f32 frames, sequence-major
    u32 manifest byte length | UTF-8 ``key=value`` lines
"""
from __future__ import annotations

import io
import itertools
import logging
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pde import SolverError, WaveProblem, heat_superposition, solve_wave

log = logging.getLogger(__name__)

MAGIC = b"SVSF"
VERSION = 1
KIND_TAGS = {"waveeq": 1, "waveeq100": 2, "sprites": 3, "heat": 4}
TAG_KINDS = {v: k for k, v in KIND_TAGS.items()}

# stream ids mixed into the seed for draws that are not per sequence
_SPLIT_STREAM = 1 << 20
_PIXEL_STREAM = 2 << 20


class DatasetFormatError(ValueError):
    pass


@dataclass
class Dataset:
    kind: str
    frames: np.ndarray                     # float32, (n_sequences, n_frames, *frame_shape)
    manifest: dict[str, str] = field(default_factory=dict)

    @property
    def frame_shape(self) -> tuple[int, ...]:
        return self.frames.shape[2:]

    @property
    def m(self) -> int:
        return int(np.prod(self.frame_shape))

    def _ints(self, key: str) -> np.ndarray:
        raw = self.manifest.get(key, "")
        return np.array([int(v) for v in raw.split(",") if v], dtype=np.int64)

    @property
    def train_indices(self) -> np.ndarray:
        return self._ints("train_indices")

    @property
    def test_indices(self) -> np.ndarray:
        return self._ints("test_indices")

    def flat(self, indices=None) -> np.ndarray:
        """Frames as float64 vectors, (n, n_frames, m)."""
        f = self.frames if indices is None else self.frames[indices]
        return f.reshape(f.shape[0], f.shape[1], -1).astype(np.float64)


def _join(values) -> str:
    return ",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(int(v)) for v in values)


def split_indices(seed: int, n: int, train_fraction: float = 0.8) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng([seed, _SPLIT_STREAM]).permutation(n)
    n_train = int(round(train_fraction * n))
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def minmax(frames: np.ndarray) -> tuple[np.ndarray, float, float]:
    lo, hi = float(frames.min()), float(frames.max())
    if hi == lo:
        return np.zeros_like(frames), lo, hi
    return (frames - lo) / (hi - lo), lo, hi


# ---------------------------------------------------------------------------
# SVSF I/O


def dumps(ds: Dataset) -> bytes:
    if ds.kind not in KIND_TAGS:
        raise DatasetFormatError(f"unknown dataset kind {ds.kind!r}")
    buf = io.BytesIO()
    shape = ds.frames.shape
    buf.write(struct.pack("<4sHBB", MAGIC, VERSION, KIND_TAGS[ds.kind], len(shape) - 2))
    buf.write(struct.pack(f"<{len(shape)}I", *shape))
    buf.write(np.ascontiguousarray(ds.frames, dtype="<f4").tobytes())
    text = "".join(f"{k}={v}\n" for k, v in ds.manifest.items()).encode("utf-8")
    buf.write(struct.pack("<I", len(text)))
    buf.write(text)
    return buf.getvalue()


def loads(data: bytes) -> Dataset:
    if len(data) < 8 or data[:4] != MAGIC:
        raise DatasetFormatError("not an SVSF file (bad magic)")
    version, tag, rank = struct.unpack_from("<HBB", data, 4)
    if version != VERSION:
        raise DatasetFormatError(f"unsupported SVSF version {version}")
    if tag not in TAG_KINDS:
        raise DatasetFormatError(f"unknown kind tag {tag}")
    off = 8
    n_dims = rank + 2
    if len(data) < off + 4 * n_dims:
        raise DatasetFormatError(f"truncated header at byte {off}")
    shape = struct.unpack_from(f"<{n_dims}I", data, off)
    off += 4 * n_dims
    n_bytes = 4 * int(np.prod(shape))
    if len(data) < off + n_bytes + 4:
        raise DatasetFormatError(f"truncated frame payload at byte {off}")
    frames = np.frombuffer(data, dtype="<f4", count=n_bytes // 4, offset=off).reshape(shape).astype(np.float32)
    off += n_bytes
    (n_text,) = struct.unpack_from("<I", data, off)
    off += 4
    if len(data) != off + n_text:
        raise DatasetFormatError(f"manifest length mismatch at byte {off}")
    manifest = {}
    for line in data[off:].decode("utf-8").splitlines():
        key, sep, value = line.partition("=")
        if not sep:
            raise DatasetFormatError(f"malformed manifest line {line!r}")
        manifest[key] = value
    return Dataset(TAG_KINDS[tag], frames, manifest)


def save(ds: Dataset, path) -> None:
    Path(path).write_bytes(dumps(ds))


def load(path) -> Dataset:
    return loads(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# WaveEq


def _wave_sequence(args) -> tuple[np.ndarray, float, float, float, float]:
    seed, i = args
    for attempt in itertools.count():
        rng = np.random.default_rng([seed, i] if attempt == 0 else [seed, i, attempt])
        c, f0 = rng.uniform(300.0, 400.0), rng.uniform(1.0, 30.0)
        try:
            raw = solve_wave(WaveProblem(c=c, f0=f0))
        except SolverError as exc:
            log.warning("wave sequence %d (seed %d, attempt %d) rejected: %s", i, seed, attempt, exc)
            continue
        frames, lo, hi = minmax(raw)
        return frames.astype(np.float32), c, f0, lo, hi


def generate_waveeq(seed: int, n_sequences: int = 300, workers: int = 1) -> Dataset:
    """Wave-equation sequences, 150 frames of 64x64 each, min-max scaled per sequence."""
    jobs = [(seed, i) for i in range(n_sequences)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_wave_sequence, jobs))
    else:
        results = [_wave_sequence(j) for j in jobs]
    train, test = split_indices(seed, n_sequences)
    manifest = {
        "kind": "waveeq", "seed": str(seed), "n_sequences": str(n_sequences),
        "n_frames": str(results[0][0].shape[0]), "frame_shape": "64,64",
        "celerity": _join(r[1] for r in results), "f0": _join(r[2] for r in results),
        "norm_min": _join(r[3] for r in results), "norm_max": _join(r[4] for r in results),
        "train_indices": _join(train), "test_indices": _join(test),
    }
    return Dataset("waveeq", np.stack([r[0] for r in results]), manifest)


def pixel_indices(seed: int, n_pixels: int = 4096, count: int = 100) -> np.ndarray:
    rng = np.random.default_rng([seed, _PIXEL_STREAM])
    return np.sort(rng.choice(n_pixels, size=count, replace=False))


def subsample_waveeq100(parent: Dataset, seed: int, count: int = 100) -> Dataset:
    """Fixed random pixels of every frame; splits are inherited from the parent."""
    if parent.kind != "waveeq":
        raise ValueError(f"expected a waveeq dataset, got {parent.kind}")
    idx = pixel_indices(seed, parent.m, count)
    frames = parent.frames.reshape(*parent.frames.shape[:2], -1)[..., idx]
    manifest = dict(parent.manifest)
    manifest.update(kind="waveeq100", frame_shape=str(count), parent_seed=parent.manifest.get("seed", ""),
                    pixel_seed=str(seed), pixel_indices=_join(idx))
    return Dataset("waveeq100", np.ascontiguousarray(frames), manifest)


def apply_pixels(frames: np.ndarray, indices: np.ndarray) -> np.ndarray:
    return frames.reshape(*frames.shape[:-2], -1)[..., indices]


# ---------------------------------------------------------------------------
# heat sequences


def generate_heat(seed: int, n_sequences: int = 100, n_x: int = 64, n_frames: int = 50,
                  L: float = 2.0, c: float = 0.5, n_terms: int = 4, dt: float = 0.1) -> Dataset:
    x = np.linspace(0.0, L, n_x)
    t = dt * np.arange(n_frames)
    seqs, coefs, los, his = [], [], [], []
    for i in range(n_sequences):
        rng = np.random.default_rng([seed, i])
        B = rng.uniform(-1.0, 1.0, n_terms) / np.arange(1, n_terms + 1)
        u = heat_superposition(L, c, B, x[None, :], t[:, None])
        frames, lo, hi = minmax(u)
        seqs.append(frames.astype(np.float32))
        coefs.append(B)
        los.append(lo)
        his.append(hi)
    train, test = split_indices(seed, n_sequences)
    manifest = {
        "kind": "heat", "seed": str(seed), "n_sequences": str(n_sequences), "n_frames": str(n_frames),
        "frame_shape": str(n_x), "L": repr(L), "c": repr(c), "dt": repr(dt),
        "coefficients": ";".join(_join(b) for b in coefs),
        "norm_min": _join(los), "norm_max": _join(his),
        "train_indices": _join(train), "test_indices": _join(test),
    }
    return Dataset("heat", np.stack(seqs), manifest)


# ---------------------------------------------------------------------------
# bouncing sprites


def bounce_trajectory(pos0, vel0, n_frames: int, limit: float) -> tuple[np.ndarray, np.ndarray]:
    """Linear motion in ``[0, limit]^2`` with specular reflection at the walls.

    Returns positions and velocities, each (n_frames, 2).
    """
    pos = np.array(pos0, dtype=np.float64)
    vel = np.array(vel0, dtype=np.float64)
    if np.any(pos < 0) or np.any(pos > limit):
        raise ValueError(f"start position {pos} outside [0, {limit}]")
    P, V = [pos.copy()], [vel.copy()]
    for _ in range(n_frames - 1):
        pos = pos + vel
        for a in range(2):
            # several reflections per frame only happen for speeds > limit
            while pos[a] < 0 or pos[a] > limit:
                pos[a] = -pos[a] if pos[a] < 0 else 2 * limit - pos[a]
                vel[a] = -vel[a]
        P.append(pos.copy())
        V.append(vel.copy())
    return np.array(P), np.array(V)


def pixel_positions(traj: np.ndarray, limit: int) -> np.ndarray:
    return np.clip(np.rint(traj), 0, limit).astype(np.int64)


def render_frames(sprites, positions: np.ndarray, frame_size: int) -> np.ndarray:
    """Composite sprites by per-pixel max; ``positions`` is (n_frames, n_sprites, 2) ints."""
    n_frames = positions.shape[0]
    out = np.zeros((n_frames, frame_size, frame_size))
    for k, sprite in enumerate(sprites):
        h, w = sprite.shape
        if h > frame_size or w > frame_size:
            raise ValueError(f"sprite {sprite.shape} larger than the frame ({frame_size})")
        for f in range(n_frames):
            r, c = positions[f, k]
            region = out[f, r:r + h, c:c + w]
            np.maximum(region, sprite, out=region)
    return out


def synthetic_sprite(rng: np.random.Generator, size: int) -> np.ndarray:
    """Random glyph with values on the k/255 lattice."""
    while True:
        mask = rng.random((size, size)) < 0.45
        if mask.any():
            break
    level = rng.integers(128, 256, size=(size, size))
    return np.where(mask, level, 0) / 255.0


def _sprite_hex(sprite: np.ndarray) -> str:
    return f"{sprite.shape[0]}x{sprite.shape[1]}:" + np.rint(sprite * 255).astype(np.uint8).tobytes().hex()


def _sprite_from_hex(text: str) -> np.ndarray:
    dims, _, payload = text.partition(":")
    h, w = (int(v) for v in dims.split("x"))
    return np.frombuffer(bytes.fromhex(payload), dtype=np.uint8).reshape(h, w) / 255.0


def generate_bouncing_sprites(seed: int, n_sequences: int = 100, frame_size: int = 32, n_sprites: int = 2,
                              sprite_size: int = 8, n_frames: int = 30, source: str = "synthetic",
                              images: np.ndarray | None = None, speed: tuple[float, float] = (1.0, 3.0)) -> Dataset:
    """Sprites moving linearly and bouncing off the frame borders.

    ``source="idx"`` takes sprites from ``images`` (count, h, w) in [0, 1],
    e.g. parsed digit images; their size overrides ``sprite_size``.
    The manifest keeps every sprite and its pixel trajectory so content
    swaps can be re-rendered.
    """
    if source == "idx":
        if images is None or len(images) == 0:
            raise ValueError("idx sprite source needs images")
        sprite_size = images.shape[1]
    elif source != "synthetic":
        raise ValueError(f"unknown sprite source {source!r}")
    if sprite_size >= frame_size:
        raise ValueError(f"sprite size {sprite_size} must be smaller than frame size {frame_size}")
    if n_sprites < 1:
        raise ValueError("need at least one sprite")
    limit = frame_size - sprite_size
    seqs = []
    manifest = {"kind": "sprites", "seed": str(seed), "n_sequences": str(n_sequences), "n_frames": str(n_frames),
                "frame_shape": f"{frame_size},{frame_size}", "n_sprites": str(n_sprites),
                "sprite_size": str(sprite_size), "source": source}
    for i in range(n_sequences):
        rng = np.random.default_rng([seed, i])
        if source == "idx":
            picks = rng.choice(len(images), size=n_sprites, replace=False)
            sprites = [np.asarray(images[j], dtype=np.float64) for j in picks]
        else:
            sprites = [synthetic_sprite(rng, sprite_size) for _ in range(n_sprites)]
        trajs = []
        for _ in range(n_sprites):
            pos0 = rng.uniform(0, limit, size=2)
            angle = rng.uniform(0, 2 * np.pi)
            v = rng.uniform(*speed)
            traj, _ = bounce_trajectory(pos0, v * np.array([np.cos(angle), np.sin(angle)]), n_frames, limit)
            trajs.append(pixel_positions(traj, limit))
        positions = np.stack(trajs, axis=1)
        seqs.append(render_frames(sprites, positions, frame_size).astype(np.float32))
        manifest[f"seq.{i}.sprites"] = ",".join(_sprite_hex(s) for s in sprites)
        manifest[f"seq.{i}.positions"] = _join(positions.ravel())
    train, test = split_indices(seed, n_sequences)
    manifest.update(train_indices=_join(train), test_indices=_join(test))
    return Dataset("sprites", np.stack(seqs), manifest)


def sequence_sprites(ds: Dataset, i: int) -> tuple[list[np.ndarray], np.ndarray]:
    key = f"seq.{i}.sprites"
    if key not in ds.manifest:
        raise KeyError(f"dataset has no sprite record for sequence {i}")
    sprites = [_sprite_from_hex(s) for s in ds.manifest[key].split(",")]
    pos = np.array([int(v) for v in ds.manifest[f"seq.{i}.positions"].split(",")], dtype=np.int64)
    return sprites, pos.reshape(ds.frames.shape[1], len(sprites), 2)


def swap_ground_truths(ds: Dataset, content: int, motion: int) -> list[np.ndarray]:
    """Frames showing the sprites of ``content`` on the trajectories of ``motion``.

    One ground truth per assignment of sprites to trajectories; a single one
    when the assignment is unambiguous (one sprite, or a self-swap).
    """
    if ds.kind != "sprites":
        raise ValueError(f"{ds.kind} datasets carry no swap ground truth")
    sprites, _ = sequence_sprites(ds, content)
    _, positions = sequence_sprites(ds, motion)
    size = ds.frame_shape[0]
    if content == motion or len(sprites) == 1:
        orders = [tuple(range(len(sprites)))]
    else:
        orders = list(itertools.permutations(range(len(sprites))))
    return [render_frames([sprites[k] for k in order], positions, size).astype(np.float32) for order in orders]
