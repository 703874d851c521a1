"""2-D skeletal animation: skeletons, retargeting, and forward kinematics.

Side-view planar rigs. A joint's world angle is the sum of rest and
animation angles accumulated along the chain from the root; child
position = parent position + length * (cos, sin) of that angle.
"""

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Joint:
    name: str
    parent: str | None
    length: float = 0.0
    rest_angle: float = 0.0


@dataclass
class Skeleton:
    """Named joint tree with one root; bone lengths in world units."""

    joints: dict  # name -> Joint, insertion order is the canonical order
    root_position: tuple = (0.0, 0.0)

    def __post_init__(self):
        roots = [j for j in self.joints.values() if j.parent is None]
        if len(roots) != 1:
            raise ValueError(f"skeleton must have exactly one root, found {len(roots)}")
        for j in self.joints.values():
            if j.parent is not None:
                if j.parent not in self.joints:
                    raise ValueError(f"joint '{j.name}' references unknown parent '{j.parent}'")
                if j.length <= 0:
                    raise ValueError(f"bone length of '{j.name}' must be > 0")
        # reject cycles / disconnection by walking every joint to the root
        for j in self.joints.values():
            seen = set()
            cur = j
            while cur.parent is not None:
                if cur.name in seen:
                    raise ValueError(f"cycle through joint '{cur.name}'")
                seen.add(cur.name)
                cur = self.joints[cur.parent]

    @property
    def root(self):
        return next(j.name for j in self.joints.values() if j.parent is None)

    def moving_joints(self):
        """Non-root joints, in canonical order."""
        return [n for n, j in self.joints.items() if j.parent is not None]

    def chain(self, name):
        """Joint names from the root (exclusive) down to `name` (inclusive)."""
        path = []
        cur = self.joints[name]
        while cur.parent is not None:
            path.append(cur.name)
            cur = self.joints[cur.parent]
        return list(reversed(path))

    def longest_chain_length(self):
        """Total length of the longest root-to-leaf path (the leg chain on
        humanoid rigs); used to scale root motion when retargeting."""
        best = 0.0
        for name in self.joints:
            total = sum(self.joints[n].length for n in self.chain(name))
            best = max(best, total)
        return best

    def scaled(self, bone_scale):
        """New skeleton with per-bone length scales applied (dict or scalar)."""
        joints = {}
        for name, j in self.joints.items():
            if j.parent is None:
                joints[name] = j
            else:
                s = bone_scale[name] if isinstance(bone_scale, dict) else bone_scale
                joints[name] = Joint(name, j.parent, j.length * s, j.rest_angle)
        return Skeleton(joints, self.root_position)


@dataclass
class AnimationClip:
    """Per-frame joint angles (radians, one per non-root joint) plus root
    translation. Angles are additive on top of skeleton rest angles."""

    frame_rate: float
    angles: list = field(default_factory=list)  # per frame: dict joint -> angle
    root_motion: list = field(default_factory=list)  # per frame: (dx, dy)
    anim_id: str = ""

    def __post_init__(self):
        if len(self.angles) < 1:
            raise ValueError("animation needs at least one frame")
        if len(self.angles) != len(self.root_motion):
            raise ValueError("angles and root_motion must align per frame")

    @property
    def frame_count(self):
        return len(self.angles)

    def check_against(self, skel):
        expected = set(skel.moving_joints())
        for i, frame in enumerate(self.angles):
            if set(frame) != expected:
                missing = expected - set(frame)
                extra = set(frame) - expected
                raise ValueError(f"frame {i} joint set mismatch (missing {sorted(missing)}, extra {sorted(extra)})")


@dataclass
class BakedPoses:
    """World-space joint positions per frame, from forward kinematics."""

    joint_names: list  # root first, then canonical order
    positions: np.ndarray  # (frames, joints, 2) float64

    def of(self, name):
        return self.positions[:, self.joint_names.index(name), :]


def retarget(anim, src, dst, joint_map):
    """Carry an animation across skeletons through a joint-name map.

    `joint_map` maps every destination joint to its source joint. Root
    translation is scaled by the destination/source leg-chain length
    ratio so ground contact is preserved.
    """
    dst_joints = dst.moving_joints()
    for name in dst_joints:
        if name not in joint_map:
            raise ValueError(f"unmapped joint: {name}")
    src_joints = set(src.moving_joints())
    for name in dst_joints:
        if joint_map[name] not in src_joints:
            raise ValueError(f"unmapped joint: {joint_map[name]}")
    ratio = dst.longest_chain_length() / src.longest_chain_length()
    angles = [{name: frame[joint_map[name]] for name in dst_joints} for frame in anim.angles]
    root = [(dx * ratio, dy * ratio) for dx, dy in anim.root_motion]
    return AnimationClip(anim.frame_rate, angles, root, anim.anim_id)


def bake(anim, skel):
    """Forward kinematics: animation + skeleton -> world joint positions."""
    anim.check_against(skel)
    names = [skel.root] + skel.moving_joints()
    t_frames = anim.frame_count
    out = np.zeros((t_frames, len(names), 2), dtype=np.float64)
    index = {n: i for i, n in enumerate(names)}
    rx, ry = skel.root_position
    for f in range(t_frames):
        frame = anim.angles[f]
        dx, dy = anim.root_motion[f]
        out[f, 0] = (rx + dx, ry + dy)
        abs_angle = {skel.root: 0.0}
        for name in skel.moving_joints():
            j = skel.joints[name]
            theta = abs_angle[j.parent] + j.rest_angle + frame[name]
            abs_angle[name] = theta
            px, py = out[f, index[j.parent]]
            out[f, index[name]] = (px + j.length * math.cos(theta), py + j.length * math.sin(theta))
    return BakedPoses(names, out)


# canonical desk rig -------------------------------------------------

HALF_PI = math.pi / 2.0

CANONICAL_JOINTS = [
    Joint("root", None),
    Joint("spine", "root", 0.46, HALF_PI),
    Joint("head", "spine", 0.14, 0.0),
    Joint("l_upper_arm", "spine", 0.27, -math.pi),
    Joint("l_forearm", "l_upper_arm", 0.24, 0.0),
    Joint("r_upper_arm", "spine", 0.27, -math.pi),
    Joint("r_forearm", "r_upper_arm", 0.24, 0.0),
    Joint("l_thigh", "root", 0.44, -HALF_PI),
    Joint("l_shin", "l_thigh", 0.42, 0.0),
    Joint("l_foot", "l_shin", 0.13, HALF_PI),
    Joint("r_thigh", "root", 0.44, -HALF_PI),
    Joint("r_shin", "r_thigh", 0.42, 0.0),
    Joint("r_foot", "r_shin", 0.13, HALF_PI),
]


def canonical_skeleton():
    return Skeleton({j.name: j for j in CANONICAL_JOINTS}, root_position=(0.0, 0.92))


# procedural gait library --------------------------------------------

GAIT_KINDS = ("walk", "wave", "squat", "reach", "jump", "march")


def _idle_frame():
    return {n: 0.0 for n in canonical_skeleton().moving_joints()}


def make_animation(kind, n_frames, fps, speed=1.0, amp=1.0, phase=0.0, anim_id=""):
    """Deterministic cyclic gait on the canonical rig."""
    if kind not in GAIT_KINDS:
        raise ValueError(f"unknown gait '{kind}'")
    angles, root = [], []
    for f in range(n_frames):
        tsec = f / fps
        w = 2.0 * math.pi * tsec * speed + phase
        a = _idle_frame()
        dx = dy = 0.0
        if kind == "walk":
            swing = 0.55 * amp * math.sin(w)
            a["l_thigh"] = swing
            a["r_thigh"] = -swing
            a["l_shin"] = -0.45 * amp * (1.0 + math.sin(w - 0.9)) / 2.0
            a["r_shin"] = -0.45 * amp * (1.0 - math.sin(w - 0.9)) / 2.0
            a["l_upper_arm"] = -0.35 * amp * math.sin(w)
            a["r_upper_arm"] = 0.35 * amp * math.sin(w)
            a["l_forearm"] = 0.25 * amp
            a["r_forearm"] = 0.25 * amp
            a["spine"] = 0.04 * math.sin(2 * w)
            dx = 0.55 * speed * tsec
            dy = 0.025 * abs(math.sin(w))
        elif kind == "wave":
            a["r_upper_arm"] = 2.35 * amp
            a["r_forearm"] = 0.55 * amp * math.sin(1.8 * w) + 0.35
            a["l_upper_arm"] = 0.08 * math.sin(w)
            a["spine"] = 0.03 * math.sin(w)
            dy = 0.01 * math.sin(w)
        elif kind == "squat":
            bend = amp * 0.85 * (1.0 - math.cos(w)) / 2.0
            a["l_thigh"] = bend
            a["r_thigh"] = bend
            a["l_shin"] = -2.0 * bend
            a["r_shin"] = -2.0 * bend
            a["l_foot"] = bend
            a["r_foot"] = bend
            a["l_upper_arm"] = 1.2 * bend
            a["r_upper_arm"] = 1.2 * bend
            a["spine"] = -0.25 * bend
            dy = -(0.44 + 0.42) * (1.0 - math.cos(bend))
        elif kind == "reach":
            lift = amp * (1.0 - math.cos(w / 2.0)) / 2.0
            a["r_upper_arm"] = 2.6 * lift
            a["l_upper_arm"] = 2.2 * lift
            a["r_forearm"] = 0.3 * lift
            a["l_forearm"] = 0.4 * lift
            a["spine"] = -0.12 * lift
            a["head"] = 0.15 * lift
        elif kind == "jump":
            cyc = (tsec * speed * 0.75) % 1.0
            crouch = max(0.0, math.sin(2 * math.pi * cyc)) if cyc < 0.5 else 0.0
            airy = max(0.0, math.sin(2 * math.pi * (cyc - 0.5))) if cyc >= 0.5 else 0.0
            a["l_thigh"] = 0.7 * crouch * amp
            a["r_thigh"] = 0.7 * crouch * amp
            a["l_shin"] = -1.4 * crouch * amp
            a["r_shin"] = -1.4 * crouch * amp
            a["l_upper_arm"] = 2.0 * airy * amp - 0.3 * crouch
            a["r_upper_arm"] = 2.0 * airy * amp - 0.3 * crouch
            dy = -0.35 * crouch + 0.42 * airy * amp
        elif kind == "march":
            lift_l = max(0.0, math.sin(w))
            lift_r = max(0.0, -math.sin(w))
            a["l_thigh"] = 0.95 * amp * lift_l
            a["r_thigh"] = 0.95 * amp * lift_r
            a["l_shin"] = -1.1 * amp * lift_l
            a["r_shin"] = -1.1 * amp * lift_r
            a["l_upper_arm"] = 0.4 * amp * math.sin(w)
            a["r_upper_arm"] = -0.4 * amp * math.sin(w)
            a["l_forearm"] = 0.5 * amp
            a["r_forearm"] = 0.5 * amp
            dy = 0.02 * abs(math.cos(w))
        angles.append(a)
        root.append((dx, dy))
    return AnimationClip(float(fps), angles, root, anim_id or kind)


def animation_library(count, n_frames, fps, rng_for):
    """`count` gaits cycling the base kinds with seeded parameter jitter.

    `rng_for(index)` must return a seeded Generator per animation index so
    the library is a pure function of the dataset seed.
    """
    anims = []
    for i in range(count):
        kind = GAIT_KINDS[i % len(GAIT_KINDS)]
        rng = rng_for(i)
        speed = 0.75 + 0.5 * rng.random()
        amp = 0.85 + 0.3 * rng.random()
        phase = 2.0 * math.pi * rng.random()
        anims.append(make_animation(kind, n_frames, fps, speed, amp, phase, anim_id=f"{kind}{i:02d}"))
    return anims
