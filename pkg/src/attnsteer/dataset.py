"""On-disk dataset layout and the in-memory training dataset.

Layout of a dataset directory::

    frames/frame_000001.ppm ...   binary PPM (P6) RGB frames, or .png
    frames.csv                    index,timestamp
    telemetry.csv                 timestamp,steering_deg,velocity_mps
    masks/lane_000001.pgm ...     optional ground-truth masks (P5, 0/255)
    masks/distractor_000001.pgm
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .preprocess import (
    FRAME_SIZE,
    STOP_SPEED_MPS,
    SmoothingConfig,
    VehicleParams,
    crop_resize,
    hsv_normalize,
    interpolate_table,
    smooth_series,
    u_from_theta,
)


class DatasetError(ValueError):
    pass


# -- netpbm ------------------------------------------------------------------------

def write_ppm(path, image: np.ndarray) -> None:
    img = np.ascontiguousarray(image, dtype=np.uint8)
    if img.ndim == 2:
        header = b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0])
    elif img.ndim == 3 and img.shape[2] == 3:
        header = b"P6\n%d %d\n255\n" % (img.shape[1], img.shape[0])
    else:
        raise ValueError(f"cannot write image of shape {img.shape} as netpbm")
    Path(path).write_bytes(header + img.tobytes())


def read_ppm(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            pos = blob.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        tokens.append(blob[start:pos])
    pos += 1
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255 or magic not in (b"P5", b"P6"):
        raise DatasetError(f"{path}: unsupported netpbm variant {magic!r} maxval {maxval}")
    channels = 3 if magic == b"P6" else 1
    data = np.frombuffer(blob, dtype=np.uint8, count=w * h * channels, offset=pos)
    return data.reshape((h, w, 3) if channels == 3 else (h, w)).copy()


def read_image(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() in (".ppm", ".pgm"):
        return read_ppm(path)
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise DatasetError(f"reading {path.suffix} images needs Pillow") from exc
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def write_image(path, image: np.ndarray) -> None:
    path = Path(path)
    if path.suffix.lower() in (".ppm", ".pgm"):
        write_ppm(path, image)
        return
    from PIL import Image
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(path)


# -- csv -----------------------------------------------------------------------------

TELEMETRY_HEADER = ["timestamp", "steering_deg", "velocity_mps"]
FRAMES_HEADER = ["index", "timestamp"]


def write_telemetry(path, rows: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TELEMETRY_HEADER)
        for t, th, v in np.asarray(rows, dtype=np.float64):
            w.writerow([repr(float(t)), repr(float(th)), repr(float(v))])


def read_telemetry(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TELEMETRY_HEADER:
            raise DatasetError(f"{path}: expected header {','.join(TELEMETRY_HEADER)}, got {header}")
        try:
            rows = [[float(x) for x in row] for row in reader if row]
        except ValueError as exc:
            raise DatasetError(f"{path}: {exc}") from None
    arr = np.asarray(rows, dtype=np.float64).reshape(-1, 3)
    if np.any(np.diff(arr[:, 0]) <= 0):
        raise DatasetError(f"{path}: timestamps must be strictly increasing")
    if np.any(arr[:, 2] < 0):
        raise DatasetError(f"{path}: negative velocity")
    return arr


def write_frames_index(path, indices, timestamps) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FRAMES_HEADER)
        for i, t in zip(indices, timestamps):
            w.writerow([int(i), repr(float(t))])


def read_frames_index(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != FRAMES_HEADER:
            raise DatasetError(f"{path}: expected header index,timestamp, got {header}")
        rows = [(int(r[0]), float(r[1])) for r in reader if r]
    idx = np.array([r[0] for r in rows], dtype=np.int64)
    ts = np.array([r[1] for r in rows], dtype=np.float64)
    return idx, ts


def frame_name(index: int, ext: str = "ppm") -> str:
    return f"frame_{index:06d}.{ext}"


# -- raw + processed datasets ------------------------------------------------------------

@dataclass
class RawDataset:
    frames: np.ndarray            # N x H x W x 3 uint8
    timestamps: np.ndarray
    telemetry: np.ndarray         # M x 3
    lane_masks: np.ndarray | None = None
    distractor_masks: np.ndarray | None = None


def write_dataset(root, frames, timestamps, telemetry, lane_masks=None, distractor_masks=None) -> Path:
    root = Path(root)
    (root / "frames").mkdir(parents=True, exist_ok=True)
    indices = np.arange(1, len(frames) + 1)
    for i, img in zip(indices, frames):
        write_ppm(root / "frames" / frame_name(i), img)
    write_frames_index(root / "frames.csv", indices, timestamps)
    write_telemetry(root / "telemetry.csv", telemetry)
    if lane_masks is not None:
        (root / "masks").mkdir(exist_ok=True)
        for i, lm, dm in zip(indices, lane_masks, distractor_masks):
            write_ppm(root / "masks" / f"lane_{i:06d}.pgm", np.where(lm, 255, 0).astype(np.uint8))
            write_ppm(root / "masks" / f"distractor_{i:06d}.pgm", np.where(dm, 255, 0).astype(np.uint8))
    return root


def load_raw(root) -> RawDataset:
    root = Path(root)
    for need in ("frames.csv", "telemetry.csv", "frames"):
        if not (root / need).exists():
            raise DatasetError(f"dataset {root} is missing {need}")
    idx, ts = read_frames_index(root / "frames.csv")
    frames = []
    for i in idx:
        for ext in ("ppm", "png"):
            path = root / "frames" / frame_name(int(i), ext)
            if path.exists():
                frames.append(read_image(path))
                break
        else:
            raise DatasetError(f"frame {i} listed in frames.csv not found")
    lanes = dists = None
    if (root / "masks").is_dir():
        lanes = np.stack([read_ppm(root / "masks" / f"lane_{i:06d}.pgm") > 127 for i in idx])
        dists = np.stack([read_ppm(root / "masks" / f"distractor_{i:06d}.pgm") > 127 for i in idx])
    return RawDataset(np.stack(frames), ts, read_telemetry(root / "telemetry.csv"), lanes, dists)


@dataclass(frozen=True)
class PreprocessConfig:
    alpha_s: float = 0.05
    smooth: bool = True
    frame_size: tuple[int, int] = FRAME_SIZE
    min_speed: float = STOP_SPEED_MPS
    vehicle: VehicleParams = field(default_factory=VehicleParams)

    def __post_init__(self):
        SmoothingConfig(self.alpha_s)
        object.__setattr__(self, "frame_size", tuple(self.frame_size))
        if isinstance(self.vehicle, dict):
            object.__setattr__(self, "vehicle", VehicleParams(**self.vehicle))

    def to_dict(self) -> dict:
        return {"alpha_s": self.alpha_s, "smooth": self.smooth, "frame_size": list(self.frame_size),
                "min_speed": self.min_speed, "vehicle": vars(self.vehicle).copy()}


@dataclass
class SteeringDataset:
    """Training-ready frames with targets; rows are retained frames in time order."""

    pixels: np.ndarray        # N x h x w x 3 float32 HSV in [0, 1]
    rgb: np.ndarray           # N x h x w x 3 uint8, resized but not normalised
    timestamps: np.ndarray
    u: np.ndarray             # target inverse turning radius (1/m)
    theta: np.ndarray         # smoothed steering (degrees)
    velocity: np.ndarray      # smoothed speed (m/s)
    segment: np.ndarray       # contiguous-run id; windows never cross a change
    source_index: np.ndarray  # row in the raw sequence
    vehicle: VehicleParams
    lane_masks: np.ndarray | None = None
    distractor_masks: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.u)

    def subset(self, rows) -> "SteeringDataset":
        rows = np.asarray(rows)
        pick = lambda a: None if a is None else a[rows]  # noqa: E731
        return SteeringDataset(
            self.pixels[rows], self.rgb[rows], self.timestamps[rows], self.u[rows], self.theta[rows],
            self.velocity[rows], self.segment[rows], self.source_index[rows], self.vehicle,
            pick(self.lane_masks), pick(self.distractor_masks),
        )


def prepare(raw: RawDataset, config: PreprocessConfig = PreprocessConfig()) -> SteeringDataset:
    """Interpolate telemetry to frame times, smooth, convert, resize, normalise, drop stops."""
    tel = raw.telemetry
    ts = np.asarray(raw.timestamps, dtype=np.float64)
    # frames outside the telemetry span cannot be labelled
    rows = np.flatnonzero((ts >= tel[0, 0]) & (ts <= tel[-1, 0]))
    interp = interpolate_table(tel, ts[rows])
    theta, vel = interp[:, 1], interp[:, 2]
    if config.smooth:
        theta = smooth_series(theta, config.alpha_s)
        vel = smooth_series(vel, config.alpha_s)
    u = u_from_theta(theta, vel, config.vehicle)
    keep = vel >= config.min_speed
    rows, theta, vel, u = rows[keep], theta[keep], vel[keep], u[keep]
    segment = np.concatenate([[0], np.cumsum(np.diff(rows) != 1)]) if rows.size else np.zeros(0, int)
    rgb = np.stack([crop_resize(raw.frames[r], config.frame_size) for r in rows]) if rows.size else \
        np.zeros((0,) + config.frame_size + (3,), np.uint8)
    pixels = hsv_normalize(rgb)
    masks = {}
    for name in ("lane_masks", "distractor_masks"):
        m = getattr(raw, name)
        masks[name] = None if m is None else np.stack([crop_resize(m[r], config.frame_size) for r in rows])
    return SteeringDataset(pixels, rgb, ts[rows], u, theta, vel, segment.astype(np.int64), rows,
                           config.vehicle, **masks)


def load(root, config: PreprocessConfig = PreprocessConfig()) -> SteeringDataset:
    return prepare(load_raw(root), config)
