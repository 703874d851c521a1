"""Procedural scene rendering for paired motion clips.

A scene is a deterministic function of its spec: background pattern,
static obstacles, and a camera track. The same animation is performed
by two embodiments (performer and target rig) in front of byte-identical
backgrounds so a pair differs only where a character is drawn.
"""

from dataclasses import dataclass, field

import numpy as np

from .kinematics import bake, canonical_skeleton, retarget
from .video import VideoClip


@dataclass(frozen=True)
class Obstacle:
    """Axis-aligned colored rectangle in world units."""

    x0: float
    y0: float
    x1: float
    y1: float
    color: tuple
    in_front: bool = False

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError("obstacle rectangle must have positive extent")
        for v in (self.x0, self.y0, self.x1, self.y1):
            if abs(v) > 12.0:
                raise ValueError("obstacle lies outside the extended canvas bounds")


@dataclass
class SceneSpec:
    scene_id: str
    palette: np.ndarray  # (4, 3): sky a, sky b, ground, stripe accent
    freqs: tuple  # six floats driving the background pattern
    phases: tuple  # three floats
    obstacles: list = field(default_factory=list)

    def __post_init__(self):
        self.palette = np.asarray(self.palette, dtype=np.float32)
        if self.palette.shape != (4, 3):
            raise ValueError("palette must be four RGB colors")


@dataclass
class CameraTrack:
    """Per-frame camera center (world), zoom factor, exposure multiplier."""

    centers: np.ndarray  # (T, 2)
    zooms: np.ndarray  # (T,)
    exposures: np.ndarray  # (T,)
    camera_id: str = ""

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.float64)
        self.zooms = np.asarray(self.zooms, dtype=np.float64)
        self.exposures = np.asarray(self.exposures, dtype=np.float64)
        t = self.centers.shape[0]
        if self.centers.shape != (t, 2) or self.zooms.shape != (t,) or self.exposures.shape != (t,):
            raise ValueError("camera track arrays must share a frame count")
        if np.any(self.zooms <= 0):
            raise ValueError("zoom must be positive")
        if np.any(self.exposures < 0) or np.any(self.exposures > 2.0):
            raise ValueError("exposure must lie in [0, 2]")

    @property
    def frame_count(self):
        return self.centers.shape[0]


@dataclass(frozen=True)
class BoneStyle:
    width: float  # capsule radius, world units
    color: tuple


@dataclass
class Embodiment:
    """A drawable rig: per-bone capsule styles plus a head disc, and a
    retarget map from the canonical skeleton (name map + bone scale)."""

    embodiment_id: str
    bone_styles: dict  # joint name -> BoneStyle for the bone ending at it
    head_radius: float
    head_color: tuple
    bone_scale: float = 1.0
    retarget_map: dict = field(default_factory=dict)  # dst joint -> canonical joint

    def skeleton(self):
        return canonical_skeleton().scaled(self.bone_scale)

    def joint_map(self):
        if self.retarget_map:
            return dict(self.retarget_map)
        return {n: n for n in self.skeleton().moving_joints()}


# painter's order for a figure facing +x: far-side limbs first
DRAW_ORDER = (
    "l_upper_arm", "l_forearm",
    "l_thigh", "l_shin", "l_foot",
    "spine", "head",
    "r_thigh", "r_shin", "r_foot",
    "r_upper_arm", "r_forearm",
)

VIEW_HEIGHT = 2.8  # world units spanned vertically at zoom 1


def _shade(color, k):
    return tuple(float(c) * k for c in color)


def human_embodiment():
    shirt = (0.21, 0.36, 0.74)
    skin = (0.86, 0.69, 0.56)
    pants = (0.33, 0.26, 0.20)
    shoe = (0.12, 0.12, 0.13)
    styles = {
        "spine": BoneStyle(0.115, shirt),
        "r_upper_arm": BoneStyle(0.042, shirt),
        "r_forearm": BoneStyle(0.038, skin),
        "l_upper_arm": BoneStyle(0.042, _shade(shirt, 0.72)),
        "l_forearm": BoneStyle(0.038, _shade(skin, 0.72)),
        "r_thigh": BoneStyle(0.058, pants),
        "r_shin": BoneStyle(0.050, pants),
        "r_foot": BoneStyle(0.042, shoe),
        "l_thigh": BoneStyle(0.058, _shade(pants, 0.72)),
        "l_shin": BoneStyle(0.050, _shade(pants, 0.72)),
        "l_foot": BoneStyle(0.042, _shade(shoe, 0.72)),
    }
    return Embodiment("human", styles, head_radius=0.115, head_color=(0.87, 0.71, 0.58))


def humanoid_embodiment():
    chassis = (0.50, 0.54, 0.60)
    limb = (0.76, 0.79, 0.84)
    lower = (0.65, 0.69, 0.76)
    boot = (0.40, 0.43, 0.50)
    styles = {
        "spine": BoneStyle(0.130, chassis),
        "r_upper_arm": BoneStyle(0.052, limb),
        "r_forearm": BoneStyle(0.046, lower),
        "l_upper_arm": BoneStyle(0.052, _shade(limb, 0.72)),
        "l_forearm": BoneStyle(0.046, _shade(lower, 0.72)),
        "r_thigh": BoneStyle(0.066, limb),
        "r_shin": BoneStyle(0.056, lower),
        "r_foot": BoneStyle(0.050, boot),
        "l_thigh": BoneStyle(0.066, _shade(limb, 0.72)),
        "l_shin": BoneStyle(0.056, _shade(lower, 0.72)),
        "l_foot": BoneStyle(0.050, _shade(boot, 0.72)),
    }
    return Embodiment(
        "humanoid", styles, head_radius=0.105, head_color=(0.88, 0.91, 0.95), bone_scale=0.9
    )


# rasterization ------------------------------------------------------


def _pixel_world_grid(width, height, center, zoom):
    """World coordinates of every pixel center for one camera frame."""
    ppu = (height / VIEW_HEIGHT) * zoom
    xs = (np.arange(width, dtype=np.float64) + 0.5 - width / 2.0) / ppu + center[0]
    ys = (height / 2.0 - np.arange(height, dtype=np.float64) - 0.5) / ppu + center[1]
    return np.meshgrid(xs, ys)  # each (H, W)


def background_frame(scene, xw, yw):
    """Procedural sky/ground pattern evaluated at world coordinates."""
    f1, f2, f3, f4, f5, f6 = scene.freqs
    p1, p2, p3 = scene.phases
    s = 0.5 + 0.5 * np.sin(f1 * xw + f2 * yw + p1) * np.sin(f3 * xw - f4 * yw + p2)
    sky = scene.palette[0][None, None, :] + s[..., None] * (
        scene.palette[1] - scene.palette[0]
    )[None, None, :]
    stripes = 0.5 + 0.5 * np.sin(f5 * xw + p3) * np.cos(f6 * yw)
    ground = scene.palette[2][None, None, :] * (0.75 + 0.25 * stripes[..., None])
    frame = np.where((yw < 0.0)[..., None], ground, sky)
    return frame.astype(np.float32)


def _segment_mask(xw, yw, p1, p2, radius):
    """Pixels within `radius` (world units) of segment p1-p2."""
    vx, vy = p2[0] - p1[0], p2[1] - p1[1]
    len2 = vx * vx + vy * vy
    dx, dy = xw - p1[0], yw - p1[1]
    if len2 <= 1e-18:
        t = np.zeros_like(xw)
    else:
        t = np.clip((dx * vx + dy * vy) / len2, 0.0, 1.0)
    ex = dx - t * vx
    ey = dy - t * vy
    return ex * ex + ey * ey <= radius * radius


def _disc_mask(xw, yw, center, radius):
    dx, dy = xw - center[0], yw - center[1]
    return dx * dx + dy * dy <= radius * radius


def _obstacle_mask(xw, yw, ob):
    return (xw >= ob.x0) & (xw <= ob.x1) & (yw >= ob.y0) & (yw <= ob.y1)


def paint_character(frame, xw, yw, baked, frame_index, emb, skel):
    """Draw one embodiment into `frame`; returns its silhouette mask."""
    mask = np.zeros(frame.shape[:2], dtype=bool)
    pos = baked.positions[frame_index]
    index = {n: i for i, n in enumerate(baked.joint_names)}
    for name in DRAW_ORDER:
        if name == "head":
            center = pos[index["head"]]
            m = _disc_mask(xw, yw, center, emb.head_radius * emb.bone_scale)
            frame[m] = np.asarray(emb.head_color, dtype=np.float32)
        else:
            style = emb.bone_styles[name]
            a = pos[index[skel.joints[name].parent]]
            b = pos[index[name]]
            m = _segment_mask(xw, yw, a, b, style.width * emb.bone_scale)
            frame[m] = np.asarray(style.color, dtype=np.float32)
        mask |= m
    return mask


def character_masks(baked, emb, camera, width, height, n_frames):
    """Silhouette masks per frame via the same rasterization path used
    when rendering (so complements are exactly the shared background)."""
    skel = emb.skeleton()
    out = np.zeros((n_frames, height, width), dtype=bool)
    scratch = np.zeros((height, width, 3), dtype=np.float32)
    for f in range(n_frames):
        xw, yw = _pixel_world_grid(width, height, camera.centers[f], camera.zooms[f])
        out[f] = paint_character(scratch, xw, yw, baked, f, emb, skel)
    return out


@dataclass
class PairedSample:
    human: VideoClip
    humanoid: VideoClip
    scene_id: str
    anim_id: str
    camera_id: str


def render_pair(anim, scene, camera, human, humanoid, width, height,
                fps_num=8, fps_den=1, n_frames=None):
    """Render the same performance with both embodiments.

    The background (including behind-character obstacles) is computed once
    per frame and copied, so pixels outside both silhouettes are
    bit-identical across the returned pair.
    """
    if n_frames is None:
        n_frames = anim.frame_count
    if n_frames > anim.frame_count:
        raise ValueError(f"animation has {anim.frame_count} frames, need {n_frames}")
    if camera.frame_count < n_frames:
        raise ValueError("camera track shorter than requested clip")

    canon = canonical_skeleton()
    baked = {}
    for emb in (human, humanoid):
        skel = emb.skeleton()
        baked[emb.embodiment_id] = (bake(retarget(anim, canon, skel, emb.joint_map()), skel), skel)

    frames = {e.embodiment_id: np.zeros((n_frames, height, width, 3), dtype=np.float32)
              for e in (human, humanoid)}
    behind = [ob for ob in scene.obstacles if not ob.in_front]
    front = [ob for ob in scene.obstacles if ob.in_front]
    for f in range(n_frames):
        xw, yw = _pixel_world_grid(width, height, camera.centers[f], camera.zooms[f])
        base = background_frame(scene, xw, yw)
        for ob in behind:
            base[_obstacle_mask(xw, yw, ob)] = np.asarray(ob.color, dtype=np.float32)
        exposure = np.float32(camera.exposures[f])
        for emb in (human, humanoid):
            frame = base.copy()
            poses, skel = baked[emb.embodiment_id]
            paint_character(frame, xw, yw, poses, f, emb, skel)
            for ob in front:
                frame[_obstacle_mask(xw, yw, ob)] = np.asarray(ob.color, dtype=np.float32)
            np.multiply(frame, exposure, out=frame)
            np.clip(frame, 0.0, 1.0, out=frame)
            frames[emb.embodiment_id][f] = frame

    return PairedSample(
        human=VideoClip(frames[human.embodiment_id], fps_num, fps_den),
        humanoid=VideoClip(frames[humanoid.embodiment_id], fps_num, fps_den),
        scene_id=scene.scene_id,
        anim_id=anim.anim_id,
        camera_id=camera.camera_id,
    )
