"""
Synthetic scenes for training and end-to-end checks

Objects are textured rectangles moving at constant velocity and bouncing off
the canvas walls. Occlusion windows hide an object while it keeps moving;
exit windows hide it and bring it back somewhere else. Either way the object
keeps its tid. Each object's appearance is an 8x8x3 texture, upsampled to the
64x64x3 patch layout the tokenizer produces.
"""
from dataclasses import dataclass, field

import numpy as np

from src.operators.tokenizer import GRID, FrameImage
from src.problem.detection import Detection
from src.problem.geometry import BBox
from src.problem.mot_reader import Sequence
from src.utils.errors import DataError

TEXTURE = 8
BACKGROUND = 0.5


def parse_windows(text):
    """Parse ``"tid:start:gap,tid:start:gap"`` into a list of int triples."""
    windows = []
    for part in str(text).replace(";", ",").split(","):
        part = part.strip()
        if not part:
            continue
        try:
            tid, start, gap = (int(v) for v in part.split(":"))
        except ValueError:
            raise DataError(f"window {part!r} is not tid:start:gap") from None
        windows.append((tid, start, gap))
    return windows


def format_windows(windows):
    return ",".join(f"{t}:{s}:{g}" for t, s, g in windows)


@dataclass
class SceneConfig:
    """
    Synthetic scene parameters

    occlusions / exits: "tid:start:gap,..." (1-based frames, gap >= 1).
    appearance_similarity: 0 = fully distinct textures, 1 = identical.
    """

    width: int = 320
    height: int = 240
    n_objects: int = 5
    n_frames: int = 100
    min_size: float = 20.0
    max_size: float = 48.0
    max_speed: float = 3.0
    occlusions: str = ""
    exits: str = ""
    n_random_occlusions: int = 0
    max_gap: int = 15
    appearance_similarity: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1 or self.n_frames < 1 or self.n_objects < 0:
            raise DataError(f"invalid scene size: {self}")
        if not (0 < self.min_size <= self.max_size):
            raise DataError(f"need 0 < min_size <= max_size, got {self.min_size}, {self.max_size}")
        if self.max_size > min(self.width, self.height):
            raise DataError(f"objects up to {self.max_size}px do not fit a {self.width}x{self.height} canvas")
        if not (0.0 <= self.appearance_similarity <= 1.0):
            raise DataError(f"appearance_similarity must lie in [0, 1], got {self.appearance_similarity}")
        for tid, start, gap in parse_windows(self.occlusions) + parse_windows(self.exits):
            if gap < 1:
                raise DataError(f"window for tid {tid} has gap {gap} < 1")
            if not (1 <= tid <= self.n_objects):
                raise DataError(f"window refers to unknown tid {tid}")


@dataclass
class NoiseConfig:
    """Detector corruption: box jitter (px), false positive / negative rates, confidence spread"""

    box_sigma: float = 0.0
    fp_rate: float = 0.0
    fn_rate: float = 0.0
    conf_sigma: float = 0.0
    fp_conf_low: float = 0.1
    fp_conf_high: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.fp_rate < 1.0):
            raise DataError(f"fp_rate must lie in [0, 1), got {self.fp_rate}")
        if not (0.0 <= self.fn_rate <= 1.0):
            raise DataError(f"fn_rate must lie in [0, 1], got {self.fn_rate}")
        if self.box_sigma < 0 or self.conf_sigma < 0:
            raise DataError("noise scales must be non-negative")
        if not (0.0 <= self.fp_conf_low <= self.fp_conf_high <= 1.0):
            raise DataError("need 0 <= fp_conf_low <= fp_conf_high <= 1")


@dataclass
class Scene:
    config: SceneConfig
    frames: dict
    textures: dict
    appearances: dict
    windows: list = field(default_factory=list)

    @property
    def tids(self):
        return sorted({d.tid for dets in self.frames.values() for d in dets})

    def expected_intervals(self):
        """Frame differences the hidden windows create (a gap of g hidden frames is an interval of g + 1)."""
        return [gap + 1 for _, _, gap in self.windows]

    def render(self, frame):
        """Paint the frame's objects (in tid order) on a flat gray canvas."""
        cfg = self.config
        img = np.full((cfg.height, cfg.width, 3), BACKGROUND)
        for det in sorted(self.frames.get(frame, []), key=lambda d: d.tid):
            paint_texture(img, det.bbox, self.textures[det.tid])
        return FrameImage(img)

    def to_sequence(self, detections=None, name="synthetic"):
        return Sequence(name, self.config.width, self.config.height, self.config.n_frames,
                        gt=self.frames, det=detections or {})


def texture_to_vector(texture):
    """Upsample an (8, 8, 3) texture to the flattened 64x64x3 patch layout."""
    factor = GRID // TEXTURE
    patch = np.repeat(np.repeat(texture, factor, axis=0), factor, axis=1)
    return np.ascontiguousarray(patch, dtype=np.float32).reshape(-1)


def paint_texture(img, box, texture):
    height, width = img.shape[:2]
    r0, r1 = max(0, int(np.floor(box.top))), min(height, int(np.ceil(box.bottom)))
    c0, c1 = max(0, int(np.floor(box.left))), min(width, int(np.ceil(box.right)))
    if r0 >= r1 or c0 >= c1:
        return img
    ti = np.clip(((np.arange(r0, r1) + 0.5 - box.top) / box.h * TEXTURE).astype(int), 0, TEXTURE - 1)
    tj = np.clip(((np.arange(c0, c1) + 0.5 - box.left) / box.w * TEXTURE).astype(int), 0, TEXTURE - 1)
    img[r0:r1, c0:c1] = texture[ti][:, tj]
    return img


def _random_windows(cfg, rng, taken):
    """Place non-overlapping hidden windows that start after frame 1 and end before the last frame."""
    windows = []
    attempts = 0
    while len(windows) < cfg.n_random_occlusions and attempts < 1000 * max(1, cfg.n_random_occlusions):
        attempts += 1
        gap = int(rng.integers(1, cfg.max_gap + 1))
        if cfg.n_frames - gap < 2 or cfg.n_objects == 0:
            break
        tid = int(rng.integers(1, cfg.n_objects + 1))
        start = int(rng.integers(2, cfg.n_frames - gap + 1))
        span = (start - 1, start + gap)  # keep a visible frame on both sides
        if any(t == tid and span[0] <= s + g and s - 1 <= span[1] for t, s, g in taken + windows):
            continue
        windows.append((tid, start, gap))
    return windows


def generate(config):
    """
    Generate a deterministic scene

    Returns:
        Scene with ``frames`` (frame -> GT detections, conf 1, appearance attached)
    """
    cfg = config
    rng = np.random.default_rng(cfg.seed)

    shared = rng.random((TEXTURE, TEXTURE, 3))
    textures, appearances = {}, {}
    state = {}
    for tid in range(1, cfg.n_objects + 1):
        own = rng.random((TEXTURE, TEXTURE, 3))
        textures[tid] = cfg.appearance_similarity * shared + (1.0 - cfg.appearance_similarity) * own
        appearances[tid] = texture_to_vector(textures[tid])
        w, h = rng.uniform(cfg.min_size, cfg.max_size, size=2)
        cx = rng.uniform(w / 2, cfg.width - w / 2)
        cy = rng.uniform(h / 2, cfg.height - h / 2)
        vx, vy = rng.uniform(-cfg.max_speed, cfg.max_speed, size=2)
        state[tid] = np.array([cx, cy, w, h, vx, vy])

    occlusions = parse_windows(cfg.occlusions)
    exits = parse_windows(cfg.exits)
    occlusions += _random_windows(cfg, rng, occlusions + exits)
    hidden = {}
    for tid, start, gap in occlusions + exits:
        hidden.setdefault(tid, set()).update(range(start, start + gap))
    reentry = {(tid, start + gap) for tid, start, gap in exits}

    frames = {}
    for frame in range(1, cfg.n_frames + 1):
        dets = []
        for tid in range(1, cfg.n_objects + 1):
            s = state[tid]
            if (tid, frame) in reentry:
                w, h = s[2], s[3]
                s[0] = rng.uniform(w / 2, cfg.width - w / 2)
                s[1] = rng.uniform(h / 2, cfg.height - h / 2)
                s[4:6] = rng.uniform(-cfg.max_speed, cfg.max_speed, size=2)
            if frame not in hidden.get(tid, ()):
                dets.append(Detection(frame, tid, BBox(*s[:4]), 1.0, appearance=appearances[tid]))
            _advance(s, cfg)
        frames[frame] = dets

    return Scene(cfg, frames, textures, appearances, windows=occlusions + exits)


def _advance(s, cfg):
    """Constant velocity with reflection at the canvas walls."""
    s[0] += s[4]
    s[1] += s[5]
    for pos, vel, size, limit in ((0, 4, 2, cfg.width), (1, 5, 3, cfg.height)):
        lo, hi = s[size] / 2, limit - s[size] / 2
        if s[pos] < lo:
            s[pos] = 2 * lo - s[pos]
            s[vel] = -s[vel]
        elif s[pos] > hi:
            s[pos] = 2 * hi - s[pos]
            s[vel] = -s[vel]


def corrupt(frames, noise, width, height):
    """
    Turn GT frames into detector-like output

    Identities are stripped to -1; boxes are jittered (kept >= 1x1 px);
    detections are dropped with fn_rate; each frame gains Binomial(n, fp_rate)
    false positives with low confidences and their own random appearance.
    """
    rng = np.random.default_rng(noise.seed)
    out = {}
    for frame in sorted(frames):
        dets = []
        gt = frames[frame]
        for det in gt:
            if rng.random() < noise.fn_rate:
                continue
            b = det.bbox
            cx, cy, w, h = b.cx, b.cy, b.w, b.h
            if noise.box_sigma > 0:
                dx, dy, dw, dh = rng.normal(0.0, noise.box_sigma, size=4)
                cx, cy = cx + dx, cy + dy
                w, h = max(1.0, w + dw), max(1.0, h + dh)
            conf = 1.0
            if noise.conf_sigma > 0:
                conf = float(np.clip(1.0 - abs(rng.normal(0.0, noise.conf_sigma)), 0.0, 1.0))
            dets.append(Detection(frame, -1, BBox(cx, cy, w, h), conf, det.extra, det.appearance))

        n_fp = int(rng.binomial(len(gt), noise.fp_rate)) if noise.fp_rate > 0 else 0
        for _ in range(n_fp):
            w = float(rng.uniform(0.1, 0.25) * width)
            h = float(rng.uniform(0.1, 0.25) * height)
            cx = float(rng.uniform(w / 2, width - w / 2))
            cy = float(rng.uniform(h / 2, height - h / 2))
            conf = float(rng.uniform(noise.fp_conf_low, noise.fp_conf_high))
            appearance = texture_to_vector(rng.random((TEXTURE, TEXTURE, 3)))
            dets.append(Detection(frame, -1, BBox(cx, cy, w, h), conf, appearance=appearance))

        order = rng.permutation(len(dets))
        out[frame] = [dets[i] for i in order]
    return out


if __name__ == '__main__':
    scene = generate(SceneConfig(occlusions="2:10:7", n_frames=30))
    print(f"tids {scene.tids}, frame 10 has {len(scene.frames[10])} objects")
