"""Procedural training data: balls rolling in an elliptical bowl, block
towers, and lane-following traffic, rendered with a supersampled rasterizer.

Ground-truth object centers are recorded in the manifest for evaluation only;
the batch loader never exposes them to the trainer. Centers use normalized
image coordinates in [-1, 1] where (-1, -1) is the top-left pixel and
pixel = (c + 1)/2 * (side - 1).

All generation is a pure function of the seed: regenerating a dataset
reproduces byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

MANIFEST_VERSION = 1
SUPERSAMPLE = 4

BALL_COLORS = np.array([[220, 60, 50], [70, 190, 80]], dtype=float)
BLOCK_PALETTE = np.array([
    [220, 60, 50], [70, 190, 80], [70, 110, 220], [230, 200, 60],
    [200, 90, 200], [80, 200, 210], [240, 140, 50],
], dtype=float)
CAR_PALETTE = np.array([
    [210, 210, 210], [200, 60, 50], [70, 120, 210], [230, 190, 60],
    [90, 190, 90], [60, 60, 70],
], dtype=float)


@dataclass
class ManifestItem:
    id: str
    frames: list[str]
    centers: list[list[list[float]]]  # per frame, per object, [x, y]
    K: int


@dataclass
class DatasetManifest:
    name: str
    variant: str  # general | ordered | dynamic
    image_side: int
    seed: int
    split: str
    items: list[ManifestItem] = field(default_factory=list)
    version: int = MANIFEST_VERSION
    root: str = ""  # directory holding the image files; set on save/load

    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.root = str(directory)
        payload = asdict(self)
        payload.pop("root")
        path = directory / f"manifest_{self.split}.json"
        path.write_text(json.dumps(payload, indent=1, sort_keys=True))
        return path

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        path = Path(path)
        data = json.loads(path.read_text())
        if data.get("version") != MANIFEST_VERSION:
            raise ValueError(f"unsupported manifest version {data.get('version')}")
        items = [ManifestItem(**it) for it in data.pop("items")]
        m = cls(items=items, **data)
        m.root = str(path.parent)
        for it in m.items:
            for rel in it.frames:
                if not (path.parent / rel).exists():
                    raise FileNotFoundError(f"dataset corrupt: missing {rel}")
        return m

    def frame_path(self, item: ManifestItem, t: int) -> Path:
        return Path(self.root) / item.frames[t]


def center_to_pixel(c: float, side: int) -> float:
    return (c + 1.0) / 2.0 * (side - 1)


# Rasterization helpers (supersampled grids in normalized coordinates).

def _grid(side: int) -> tuple[np.ndarray, np.ndarray]:
    s = side * SUPERSAMPLE
    coords = (np.arange(s) + 0.5) / s * 2.0 - 1.0
    return np.meshgrid(coords, coords)  # xx, yy


def _downsample(img: np.ndarray) -> np.ndarray:
    s = img.shape[0] // SUPERSAMPLE
    img = img.reshape(s, SUPERSAMPLE, s, SUPERSAMPLE, 3).mean(axis=(1, 3))
    return np.clip(np.round(img), 0, 255).astype(np.uint8)


def _save_png(img: np.ndarray, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img).save(path, format="PNG")


def _draw_disc(canvas: np.ndarray, xx, yy, cx, cy, r, color) -> None:
    mask = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
    canvas[mask] = color


def _draw_rect(canvas: np.ndarray, xx, yy, cx, cy, hw, hh, color) -> None:
    mask = (np.abs(xx - cx) <= hw) & (np.abs(yy - cy) <= hh)
    canvas[mask] = color


# BallsInBowl: two colored balls rolling inside a shaded elliptical bowl.

BALL_RADIUS = 0.10
RESTITUTION = 0.8
DT = 1.0 / 30.0
GRAVITY = 2.5


@dataclass
class PhysicsWorld:
    a: float  # ellipse semi-axis, x
    b: float  # ellipse semi-axis, y
    phi: float  # orientation
    pos: np.ndarray  # (n, 2)
    vel: np.ndarray  # (n, 2)
    restitution: float = RESTITUTION
    dt: float = DT

    def _to_bowl(self, p: np.ndarray) -> np.ndarray:
        c, s = np.cos(self.phi), np.sin(self.phi)
        rot = np.array([[c, s], [-s, c]])
        return p @ rot.T

    def _from_bowl(self, p: np.ndarray) -> np.ndarray:
        c, s = np.cos(self.phi), np.sin(self.phi)
        rot = np.array([[c, -s], [s, c]])
        return p @ rot.T

    def step(self) -> None:
        # Bowl-shaped potential pulls balls toward the centre; semi-implicit
        # Euler with a touch of rolling friction.
        q = self._to_bowl(self.pos)
        grad = 2.0 * q / np.array([self.a ** 2, self.b ** 2])
        acc = self._from_bowl(-GRAVITY * grad) - 0.4 * self.vel
        self.vel = self.vel + self.dt * acc
        self.pos = self.pos + self.dt * self.vel
        self._resolve_wall()
        self._resolve_contacts()

    def _resolve_wall(self) -> None:
        ea, eb = self.a - BALL_RADIUS, self.b - BALL_RADIUS
        q = self._to_bowl(self.pos)
        v = self._to_bowl(self.vel)
        for i in range(len(q)):
            val = (q[i, 0] / ea) ** 2 + (q[i, 1] / eb) ** 2
            if val > 1.0:
                q[i] = q[i] / np.sqrt(val)
                n = q[i] / np.array([ea ** 2, eb ** 2])
                n = n / np.linalg.norm(n)
                vn = v[i] @ n
                if vn > 0:
                    v[i] = v[i] - (1 + self.restitution) * vn * n
        self.pos = self._from_bowl(q)
        self.vel = self._from_bowl(v)

    def _resolve_contacts(self) -> None:
        n_balls = len(self.pos)
        for i in range(n_balls):
            for j in range(i + 1, n_balls):
                d = self.pos[j] - self.pos[i]
                dist = np.linalg.norm(d)
                if dist < 2 * BALL_RADIUS:
                    n = d / dist if dist > 1e-9 else np.array([1.0, 0.0])
                    push = (2 * BALL_RADIUS - dist) / 2 + 1e-9
                    self.pos[i] -= push * n
                    self.pos[j] += push * n
                    rel = (self.vel[j] - self.vel[i]) @ n
                    if rel < 0:
                        imp = -(1 + self.restitution) * rel / 2
                        self.vel[i] -= imp * n
                        self.vel[j] += imp * n
        # Contact resolution may nudge a ball into the wall; re-project.
        self._resolve_wall()

    def contains_all(self) -> bool:
        q = self._to_bowl(self.pos)
        val = (q[:, 0] / self.a) ** 2 + (q[:, 1] / self.b) ** 2
        return bool((val <= 1.0 + 1e-9).all())


def _render_bowl_frame(world: PhysicsWorld, side: int) -> np.ndarray:
    xx, yy = _grid(side)
    canvas = np.empty((*xx.shape, 3))
    canvas[:] = (35, 35, 45)
    q = np.stack([xx, yy], axis=-1).reshape(-1, 2)
    qb = world._to_bowl(q).reshape(*xx.shape, 2)
    depth = (qb[..., 0] / world.a) ** 2 + (qb[..., 1] / world.b) ** 2
    inside = depth <= 1.0
    shade = (150 - 70 * depth)[..., None] * np.array([[0.9, 0.85, 0.75]])
    canvas[inside] = shade[inside]
    for i, color in enumerate(BALL_COLORS[: len(world.pos)]):
        _draw_disc(canvas, xx, yy, world.pos[i, 0], world.pos[i, 1], BALL_RADIUS, color)
    return _downsample(canvas)


def init_bowl_world(rng: np.random.Generator, n_balls: int = 2) -> PhysicsWorld:
    a = rng.uniform(0.55, 0.85)
    b = rng.uniform(0.55, 0.85)
    phi = rng.uniform(0.0, np.pi)
    pos, tries = [], 0
    while len(pos) < n_balls:
        p = rng.uniform(-0.5, 0.5, size=2)
        world_check = (p[0] / (a - BALL_RADIUS)) ** 2 + (p[1] / (b - BALL_RADIUS)) ** 2
        if world_check <= 0.8 and all(np.linalg.norm(p - q) > 2.2 * BALL_RADIUS for q in pos):
            pos.append(p)
        tries += 1
        if tries > 1000:
            pos = [np.array([-0.3, 0.0]), np.array([0.3, 0.0])][:n_balls]
            break
    vel = rng.uniform(-1.2, 1.2, size=(n_balls, 2))
    return PhysicsWorld(a=a, b=b, phi=phi, pos=np.array(pos), vel=np.array(vel))


def gen_balls_in_bowl(seed: int, n_sequences: int, frames_per_seq: int,
                      out_dir: str | Path, image_side: int = 64,
                      split: str = "train") -> DatasetManifest:
    """Sequences of two fixed-color balls rolling in elliptical bowls."""
    if frames_per_seq < 1:
        raise ValueError("frames_per_seq must be >= 1")
    out_dir = Path(out_dir)
    variant = "dynamic" if frames_per_seq > 1 else "general"
    manifest = DatasetManifest(name="balls_in_bowl", variant=variant,
                               image_side=image_side, seed=seed, split=split)
    master = np.random.SeedSequence([seed, 0 if split == "train" else 1])
    for i, child in enumerate(master.spawn(n_sequences)):
        rng = np.random.default_rng(child)
        world = init_bowl_world(rng)
        # Let transients settle so the first frame already looks natural.
        for _ in range(5):
            world.step()
        item_id = f"{split}_{i:05d}"
        frames, centers = [], []
        for t in range(frames_per_seq):
            img = _render_bowl_frame(world, image_side)
            rel = f"images/{item_id}/{t:03d}.png"
            _save_png(img, out_dir / rel)
            frames.append(rel)
            centers.append([[float(x), float(y)] for x, y in world.pos])
            world.step()
        manifest.items.append(ManifestItem(id=item_id, frames=frames,
                                           centers=centers, K=len(world.pos)))
    manifest.save(out_dir)
    return manifest


# Block towers: 2-5 distinctly colored blocks stacked bottom-to-top.

BLOCK_HALF = 0.11  # half-side of a block in normalized units


def gen_stacks(seed: int, n_images: int, out_dir: str | Path,
               image_side: int = 64, split: str = "train",
               min_height: int = 2, max_height: int = 5) -> DatasetManifest:
    out_dir = Path(out_dir)
    manifest = DatasetManifest(name="stacks", variant="ordered",
                               image_side=image_side, seed=seed, split=split)
    master = np.random.SeedSequence([seed, 10 if split == "train" else 11])
    for i, child in enumerate(master.spawn(n_images)):
        rng = np.random.default_rng(child)
        height = int(rng.integers(min_height, max_height + 1))
        base_x = float(rng.uniform(-0.55, 0.55))
        base_y = 0.85 - BLOCK_HALF  # towers stand on the floor line
        colors = rng.choice(len(BLOCK_PALETTE), size=height, replace=False)
        xx, yy = _grid(image_side)
        canvas = np.empty((*xx.shape, 3))
        canvas[:] = (60, 65, 80)
        canvas[yy > 0.85] = (100, 90, 70)  # floor
        centers = []
        for k in range(height):
            cy = base_y - 2 * BLOCK_HALF * k
            _draw_rect(canvas, xx, yy, base_x, cy, BLOCK_HALF, BLOCK_HALF,
                       BLOCK_PALETTE[colors[k]])
            centers.append([base_x, float(cy)])
        item_id = f"{split}_{i:05d}"
        rel = f"images/{item_id}/000.png"
        _save_png(_downsample(canvas), out_dir / rel)
        manifest.items.append(ManifestItem(id=item_id, frames=[rel],
                                           centers=[centers], K=height))
    manifest.save(out_dir)
    return manifest


# Traffic: rectangular agents on a ring lane with a headway-keeping rule and
# occasional turns onto a crossing lane.

CAR_HALF_LEN = 0.09
CAR_HALF_WID = 0.05
FREE_SPEED = 0.035
MIN_GAP = 0.26
LANE_Y = 0.25
LANE_X = -0.25
TURN_PROB = 0.15


def _advance_lane(positions: np.ndarray, speeds: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One step of circular car-following on positions in [-1, 1)."""
    n = len(positions)
    order = np.argsort(positions)
    new_speeds = speeds.copy()
    for rank, idx in enumerate(order):
        lead = order[(rank + 1) % n]
        gap = (positions[lead] - positions[idx]) % 2.0 if n > 1 else 2.0
        target = FREE_SPEED if gap > MIN_GAP else FREE_SPEED * max(gap - 2 * CAR_HALF_LEN, 0.0) / MIN_GAP
        new_speeds[idx] += 0.5 * (target - new_speeds[idx])
    new_pos = positions + new_speeds
    new_pos = (new_pos + 1.0) % 2.0 - 1.0
    return new_pos, new_speeds


def gen_traffic_like(seed: int, n_sequences: int, frames_per_seq: int,
                     out_dir: str | Path, image_side: int = 64,
                     split: str = "train") -> DatasetManifest:
    out_dir = Path(out_dir)
    variant = "dynamic" if frames_per_seq > 1 else "general"
    manifest = DatasetManifest(name="traffic_like", variant=variant,
                               image_side=image_side, seed=seed, split=split)
    master = np.random.SeedSequence([seed, 20 if split == "train" else 21])
    for i, child in enumerate(master.spawn(n_sequences)):
        rng = np.random.default_rng(child)
        K = int(rng.integers(1, 6))
        # Lane 0: horizontal ring at y=LANE_Y; lane 1: vertical ring at x=LANE_X.
        lanes = np.zeros(K, dtype=int)
        coords = np.sort(rng.uniform(-1.0, 1.0, size=K))
        while K > 1 and np.min(np.diff(np.concatenate([coords, [coords[0] + 2.0]]))) < MIN_GAP:
            coords = np.sort(rng.uniform(-1.0, 1.0, size=K))
        speeds = np.full(K, FREE_SPEED)
        colors = rng.integers(0, len(CAR_PALETTE), size=K)
        turn_at = rng.uniform(0, 1, size=K) < TURN_PROB
        item_id = f"{split}_{i:05d}"
        frames, centers = [], []
        for t in range(frames_per_seq):
            xx, yy = _grid(image_side)
            canvas = np.empty((*xx.shape, 3))
            canvas[:] = (45, 90, 45)
            canvas[np.abs(yy - LANE_Y) < 0.14] = (75, 75, 80)
            canvas[np.abs(xx - LANE_X) < 0.14] = (75, 75, 80)
            frame_centers = []
            for k in range(K):
                if lanes[k] == 0:
                    cx, cy = coords[k], LANE_Y
                    hw, hh = CAR_HALF_LEN, CAR_HALF_WID
                else:
                    cx, cy = LANE_X, coords[k]
                    hw, hh = CAR_HALF_WID, CAR_HALF_LEN
                _draw_rect(canvas, xx, yy, cx, cy, hw, hh, CAR_PALETTE[colors[k]])
                frame_centers.append([float(cx), float(cy)])
            rel = f"images/{item_id}/{t:03d}.png"
            _save_png(_downsample(canvas), out_dir / rel)
            frames.append(rel)
            centers.append(frame_centers)
            # Advance each lane independently, then let marked cars turn when
            # they reach the crossing.
            for lane in (0, 1):
                sel = lanes == lane
                if sel.any():
                    coords[sel], speeds[sel] = _advance_lane(coords[sel], speeds[sel])
            for k in range(K):
                if lanes[k] == 0 and turn_at[k] and abs(coords[k] - LANE_X) < FREE_SPEED:
                    occupied = coords[lanes == 1]
                    if all(abs((LANE_Y - o) % 2.0) > MIN_GAP for o in occupied):
                        lanes[k], coords[k] = 1, LANE_Y
                        turn_at[k] = False
        manifest.items.append(ManifestItem(id=item_id, frames=frames,
                                           centers=centers, K=K))
    manifest.save(out_dir)
    return manifest


# Deterministic batch loading.

def load_frame(manifest: DatasetManifest, item: ManifestItem, t: int) -> torch.Tensor:
    """A single frame as a float tensor (3, s, s) in [-1, 1]."""
    path = manifest.frame_path(item, t)
    if not path.exists():
        raise FileNotFoundError(f"dataset corrupt: missing {path}")
    arr = np.asarray(Image.open(path), dtype=np.float32) / 255.0 * 2.0 - 1.0
    return torch.from_numpy(arr).permute(2, 0, 1)


class BatchLoader:
    """Deterministic shuffled stream of (B, clip_len, 3, s, s) batches.

    Batch order and clip windows are pure functions of (seed, epoch), so a
    resumed trainer sees exactly the continuation of the stream.
    """

    def __init__(self, manifest: DatasetManifest, batch_size: int,
                 clip_len: int = 1, seed: int = 0):
        if clip_len < 1:
            raise ValueError("clip_len must be >= 1")
        for it in manifest.items:
            if len(it.frames) < clip_len:
                raise ValueError(f"item {it.id} shorter than clip_len={clip_len}")
        self.manifest = manifest
        self.batch_size = batch_size
        self.clip_len = clip_len
        self.seed = seed

    @property
    def n_batches(self) -> int:
        return max(len(self.manifest.items) // self.batch_size, 1)

    def epoch_plan(self, epoch: int) -> list[np.ndarray]:
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, epoch]))
        perm = rng.permutation(len(self.manifest.items))
        n = self.n_batches
        bs = min(self.batch_size, len(perm))
        return [perm[i * bs:(i + 1) * bs] for i in range(n)]

    def load_batch(self, epoch: int, batch_index: int) -> torch.Tensor:
        plan = self.epoch_plan(epoch)
        idxs = plan[batch_index % len(plan)]
        rng = np.random.default_rng(np.random.SeedSequence(
            [self.seed, epoch, batch_index]))
        clips = []
        for idx in idxs:
            item = self.manifest.items[int(idx)]
            start = int(rng.integers(0, len(item.frames) - self.clip_len + 1))
            clips.append(torch.stack([
                load_frame(self.manifest, item, start + t)
                for t in range(self.clip_len)
            ]))
        return torch.stack(clips)

    def epoch_batches(self, epoch: int):
        for b in range(self.n_batches):
            yield self.load_batch(epoch, b)
