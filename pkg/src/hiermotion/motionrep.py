"""Motion data model over a toy 5-joint skeleton, plus a procedural generator.

Frames follow the per-pose feature tuple (root angular velocity, root linear
velocities on the ground plane, root height, local joint positions, joint
velocities, 6d joint rotations, binary foot contacts), so the width is
4 + 12*N_j + 4.  The generator emits (motion, description, gold graph) triples
whose text matches the rule parser token for token, which makes correspondence
checkable end to end at desk scale.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .semgraph import (
    GraphEdge,
    GraphNode,
    Level,
    Relation,
    SemanticGraph,
)

GENERATOR_VERSION = 1
MOTION_MAGIC = b"HMOT"
MOTION_FORMAT_VERSION = 1

ACTION_KINDS = ("walk", "turn", "jump", "stop", "wave")
DIRECTIONS = ("forward", "backward", "left", "right")
SPEEDS = ("slow", "fast")
PATHS = ("straight", "circle")

#: world-frame unit vectors (x = left, z = forward)
_DIR_VEC = {
    "forward": np.array([0.0, 1.0]),   # (x, z)
    "backward": np.array([0.0, -1.0]),
    "left": np.array([1.0, 0.0]),
    "right": np.array([-1.0, 0.0]),
}


class MotionFileError(Exception):
    pass


class CorruptFile(MotionFileError):
    pass


class LayoutMismatch(MotionFileError):
    pass


@dataclass(frozen=True)
class FeatureLayout:
    """Slice map of the per-frame feature vector for an N_j-joint skeleton."""

    joint_count: int = 5

    @property
    def width(self) -> int:
        return 4 + 12 * self.joint_count + 4

    @property
    def root_ang_vel(self) -> int:
        return 0

    @property
    def root_vel_x(self) -> int:
        return 1

    @property
    def root_vel_z(self) -> int:
        return 2

    @property
    def root_height(self) -> int:
        return 3

    @property
    def joint_positions(self) -> slice:
        return slice(4, 4 + 3 * self.joint_count)

    @property
    def joint_velocities(self) -> slice:
        n = self.joint_count
        return slice(4 + 3 * n, 4 + 6 * n)

    @property
    def joint_rotations(self) -> slice:
        n = self.joint_count
        return slice(4 + 6 * n, 4 + 12 * n)

    @property
    def foot_contacts(self) -> slice:
        return slice(4 + 12 * self.joint_count, 4 + 12 * self.joint_count + 4)


DEFAULT_LAYOUT = FeatureLayout(joint_count=5)

# rest offsets in the root frame (x left, y up, z forward), one row per joint:
# root, left hand, right hand, left foot, right foot
_REST_OFFSETS = np.array([
    [0.00, 0.00, 0.00],
    [0.45, -0.10, 0.00],
    [-0.45, -0.10, 0.00],
    [0.15, -0.90, 0.00],
    [-0.15, -0.90, 0.00],
])

_ROOT_HEIGHT = 0.90


@dataclass
class MotionSequence:
    frames: np.ndarray  # (L, F) float64
    fps: float = 20.0
    layout: FeatureLayout = field(default_factory=lambda: DEFAULT_LAYOUT)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            raise ValueError(f"frames must be 2-d, got shape {self.frames.shape}")
        if self.frames.shape[1] != self.layout.width:
            raise LayoutMismatch(
                f"frame width {self.frames.shape[1]} != layout width {self.layout.width}")

    @property
    def length(self) -> int:
        return self.frames.shape[0]

    def validate(self) -> list[str]:
        problems = []
        if self.length < 1:
            problems.append("sequence must have at least one frame")
        if not np.isfinite(self.frames).all():
            problems.append("frames contain non-finite values")
        contacts = self.frames[:, self.layout.foot_contacts]
        if not np.isin(contacts, (0.0, 1.0)).all():
            problems.append("contact features must be binary")
        return problems

    def root_trajectory(self) -> np.ndarray:
        """Integrated world-frame (x, z) root positions, (L, 2)."""
        vel = self.frames[:, [self.layout.root_vel_x, self.layout.root_vel_z]]
        return np.cumsum(vel, axis=0)

    def lateral_displacement(self) -> float:
        """Net signed displacement along the world x (leftward) axis."""
        return float(self.frames[:, self.layout.root_vel_x].sum())

    def displacement_along(self, direction: str) -> float:
        """Net displacement projected on a named world direction."""
        v = _DIR_VEC[direction]
        vel = self.frames[:, [self.layout.root_vel_x, self.layout.root_vel_z]]
        return float(vel.sum(axis=0) @ v)


@dataclass(frozen=True)
class ActionSpec:
    kind: str
    direction: str = "forward"
    speed: str = "slow"
    path: str = "straight"
    duration: int = 30
    # which attributes the description mentions; the motion always follows the
    # attribute values, so unmentioned ones leave captions ambiguous (as real
    # caption corpora are) and give refinement a strength gradient to ride
    mention_direction: bool = True
    mention_speed: bool = True
    mention_path: bool = True

    def validate(self) -> None:
        if self.kind not in ACTION_KINDS:
            raise ValueError(f"unknown action kind {self.kind!r}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.speed not in SPEEDS:
            raise ValueError(f"unknown speed {self.speed!r}")
        if self.path not in PATHS:
            raise ValueError(f"unknown path {self.path!r}")
        if self.duration < 4:
            raise ValueError("action duration must be at least 4 frames")
        if self.kind == "turn" and self.direction not in ("left", "right"):
            raise ValueError("turn direction must be left or right")


@dataclass(frozen=True)
class ToyMotionParams:
    actions: tuple[ActionSpec, ...]
    fps: float = 20.0

    def validate(self) -> None:
        if not 1 <= len(self.actions) <= 3:
            raise ValueError("params must contain 1..3 actions")
        for a in self.actions:
            a.validate()

    @property
    def total_frames(self) -> int:
        return sum(a.duration for a in self.actions)

    def to_dict(self) -> dict:
        return {"fps": self.fps,
                "actions": [{"kind": a.kind, "direction": a.direction,
                             "speed": a.speed, "path": a.path,
                             "duration": a.duration,
                             "mention_direction": a.mention_direction,
                             "mention_speed": a.mention_speed,
                             "mention_path": a.mention_path}
                            for a in self.actions]}

    @staticmethod
    def from_dict(d: dict) -> "ToyMotionParams":
        return ToyMotionParams(
            actions=tuple(ActionSpec(**a) for a in d["actions"]),
            fps=float(d.get("fps", 20.0)))


def _rot6d_about_x(phi: np.ndarray) -> np.ndarray:
    """First two columns of a rotation about the x axis, (L, 6)."""
    c, s = np.cos(phi), np.sin(phi)
    one = np.ones_like(phi)
    zero = np.zeros_like(phi)
    return np.stack([one, zero, zero, zero, c, s], axis=-1)


def _rot6d_about_y(phi: np.ndarray) -> np.ndarray:
    c, s = np.cos(phi), np.sin(phi)
    one = np.ones_like(phi)
    zero = np.zeros_like(phi)
    return np.stack([c, zero, -s, zero, one, zero], axis=-1)


def _speed_mag(speed: str, rng: np.random.Generator) -> float:
    base = 0.030 if speed == "slow" else 0.080
    return base * rng.uniform(0.75, 1.25)


def synthesize_toy_motion(params: ToyMotionParams, noise_seed: int = 0) -> MotionSequence:
    """Procedurally generate a motion.  Deterministic given (params, seed).

    Joint velocities are the forward difference of joint positions, so the
    integration rule j_p[t+1] = j_p[t] + j_v[t] holds exactly (last frame's
    velocity is zero).
    """
    params.validate()
    layout = DEFAULT_LAYOUT
    rng = np.random.default_rng(noise_seed)
    n = layout.joint_count
    L = params.total_frames

    ang_vel = np.zeros(L)
    vel_xz = np.zeros((L, 2))
    height = np.full(L, _ROOT_HEIGHT)
    local_pos = np.tile(_REST_OFFSETS.reshape(1, n, 3), (L, 1, 1))
    swing = np.zeros((L, n))      # per-joint swing angle about x
    contacts = np.ones((L, 4))

    t0 = 0
    for act in params.actions:
        T = act.duration
        sl = slice(t0, t0 + T)
        tt = np.arange(T)
        mag = _speed_mag(act.speed, rng)
        step_hz = 0.8 if act.speed == "slow" else 1.6
        phase = 2 * np.pi * step_hz * tt / params.fps + rng.uniform(0, 2 * np.pi)

        if act.kind == "walk":
            d = _DIR_VEC[act.direction]
            if act.path == "circle":
                omega = 2 * np.pi / T
                if act.direction == "right" or act.direction == "backward":
                    omega = -omega
                theta = omega * tt
                rot = np.stack([np.cos(theta) * d[0] - np.sin(theta) * d[1],
                                np.sin(theta) * d[0] + np.cos(theta) * d[1]], axis=1)
                vel_xz[sl] = mag * rot
                ang_vel[sl] = omega
            else:
                vel_xz[sl] = mag * d
            leg = 0.35 * np.sin(phase)
            swing[sl, 3] = leg
            swing[sl, 4] = -leg
            swing[sl, 1] = -0.5 * leg
            swing[sl, 2] = 0.5 * leg
            local_pos[sl, 3, 2] += 0.30 * np.sin(phase)
            local_pos[sl, 4, 2] -= 0.30 * np.sin(phase)
            local_pos[sl, 3, 1] += 0.08 * np.maximum(0.0, np.sin(phase))
            local_pos[sl, 4, 1] += 0.08 * np.maximum(0.0, -np.sin(phase))
            left_up = np.sin(phase) > 0.1
            right_up = np.sin(phase) < -0.1
            contacts[sl, 0] = contacts[sl, 1] = (~left_up).astype(float)
            contacts[sl, 2] = contacts[sl, 3] = (~right_up).astype(float)

        elif act.kind == "turn":
            omega = 0.025 if act.speed == "slow" else 0.060
            if act.direction == "right":
                omega = -omega
            ang_vel[sl] = omega
            sway = 0.05 * np.sin(phase)
            swing[sl, 1] = sway
            swing[sl, 2] = -sway

        elif act.kind == "jump":
            d = _DIR_VEC[act.direction]
            cycle = 20 if act.speed == "slow" else 12
            p = (tt % cycle) / cycle
            airborne = (p >= 0.3) & (p < 0.7)
            arc = np.where(airborne,
                           np.sin(np.pi * np.clip((p - 0.3) / 0.4, 0, 1)), 0.0)
            height[sl] = _ROOT_HEIGHT + 0.25 * mag / 0.05 * arc
            vel_xz[sl] = np.outer(airborne.astype(float), mag * 1.5 * d)
            tuck = 0.45 * arc
            local_pos[sl, 3, 1] += tuck
            local_pos[sl, 4, 1] += tuck
            swing[sl, 3] = -1.2 * arc
            swing[sl, 4] = -1.2 * arc
            c = (~airborne).astype(float)
            contacts[sl, 0] = contacts[sl, 1] = c
            contacts[sl, 2] = contacts[sl, 3] = c

        elif act.kind == "stop":
            breathe = 0.004 * np.sin(2 * np.pi * 0.4 * tt / params.fps)
            local_pos[sl, 1, 1] += breathe
            local_pos[sl, 2, 1] += breathe

        elif act.kind == "wave":
            amp = 0.30 if act.speed == "slow" else 0.40
            osc = amp * np.sin(phase * 1.5)
            lift = 0.55
            if act.direction == "left":
                arms = [1]
            elif act.direction == "right":
                arms = [2]
            else:
                arms = [1, 2]
            for j in arms:
                local_pos[sl, j, 1] += lift + np.abs(osc)
                local_pos[sl, j, 0] += 0.5 * osc * (1 if j == 1 else -1)
                swing[sl, j] = 2.0 + 0.8 * osc

        t0 += T

    # smooth low-frequency positional wobble (encodable, keeps velocities smooth)
    tgrid = np.arange(L) / L
    amp = rng.uniform(0.0, 0.008, size=(n, 3))
    freq = rng.integers(1, 3, size=(n, 3))
    phse = rng.uniform(0, 2 * np.pi, size=(n, 3))
    for j in range(n):
        for c in range(3):
            local_pos[:, j, c] += amp[j, c] * np.sin(
                2 * np.pi * freq[j, c] * tgrid + phse[j, c])

    heading = np.concatenate([[0.0], np.cumsum(ang_vel)[:-1]])

    pos_flat = local_pos.reshape(L, 3 * n)
    vel_flat = np.zeros_like(pos_flat)
    vel_flat[:-1] = pos_flat[1:] - pos_flat[:-1]

    rot = np.zeros((L, n, 6))
    rot[:, 0, :] = _rot6d_about_y(heading)
    for j in range(1, n):
        rot[:, j, :] = _rot6d_about_x(swing[:, j])

    frames = np.zeros((L, layout.width))
    frames[:, layout.root_ang_vel] = ang_vel
    frames[:, layout.root_vel_x] = vel_xz[:, 0]
    frames[:, layout.root_vel_z] = vel_xz[:, 1]
    frames[:, layout.root_height] = height
    frames[:, layout.joint_positions] = pos_flat
    frames[:, layout.joint_velocities] = vel_flat
    frames[:, layout.joint_rotations] = rot.reshape(L, 6 * n)
    frames[:, layout.foot_contacts] = contacts
    return MotionSequence(frames=frames, fps=params.fps, layout=layout)


# ---------------------------------------------------------------------------
# Templated descriptions with gold graphs

_SPEED_ADV = {"slow": "slowly", "fast": "quickly"}
_DIR_PHRASE = {
    "forward": ("forward",),
    "backward": ("backward",),
    "left": ("to", "the", "left"),
    "right": ("to", "the", "right"),
}
_PATH_PHRASE = {
    "straight": ("in", "a", "straight", "line"),
    "circle": ("in", "a", "circle"),
}
_HAND_PHRASE = {
    "left": ("with", "the", "left", "hand"),
    "right": ("with", "the", "right", "hand"),
    "forward": ("with", "both", "hands"),
    "backward": ("with", "both", "hands"),
}


def _clause_phrases(act: ActionSpec) -> tuple[str, list[tuple[tuple[str, ...], Relation]]]:
    """Verb surface form and the ordered (phrase tokens, relation) list."""
    adv = ((_SPEED_ADV[act.speed],), Relation.ARGM_MNR) if act.mention_speed else None
    if act.kind == "walk":
        phrases = [adv,
                   (_DIR_PHRASE[act.direction], Relation.ARGM_DIR)
                   if act.mention_direction else None,
                   (_PATH_PHRASE[act.path], Relation.ARGM_MNR)
                   if act.mention_path else None]
        return "walks", [p for p in phrases if p]
    if act.kind == "turn":
        phrases = [adv,
                   (_DIR_PHRASE[act.direction], Relation.ARGM_DIR)
                   if act.mention_direction else None]
        return "turns", [p for p in phrases if p]
    if act.kind == "jump":
        phrases = [adv,
                   (_DIR_PHRASE[act.direction], Relation.ARGM_DIR)
                   if act.mention_direction else None]
        return "jumps", [p for p in phrases if p]
    if act.kind == "stop":
        phrases = []
        if act.duration <= 24:
            phrases.append((("for", "a", "moment"), Relation.ARGM_TMP))
        return "stops", phrases
    # wave
    phrases = [adv,
               (_HAND_PHRASE[act.direction], Relation.ARG2)
               if act.mention_direction else None]
    return "waves", [p for p in phrases if p]


def describe_toy_motion(params: ToyMotionParams) -> tuple[str, SemanticGraph]:
    """Templated sentence plus the gold graph the parser is expected to emit.

    The gold graph is constructed from the template metadata directly, not by
    running the parser, so parser tests against it are meaningful.
    """
    params.validate()
    n_actions = len(params.actions)
    tokens: list[str] = ["a", "person"]
    surface = "a person"
    nodes: list[GraphNode] = []
    edges: list[GraphEdge] = []
    spec_count = 0

    for k, act in enumerate(params.actions):
        if k > 0:
            if n_actions == 3 and k == 2:
                surface += ", and"
                tokens.append("and")
            elif n_actions == 3:
                surface += ","
            else:
                surface += ", then"
                tokens.append("then")
        verb, phrases = _clause_phrases(act)
        verb_i = len(tokens)
        tokens.append(verb)
        surface += " " + verb
        nodes.append(GraphNode(id=f"a{k}", level=Level.ACTION, text=verb,
                               span=(verb_i, verb_i + 1), masked=False))
        edges.append(GraphEdge("m0", f"a{k}", Relation.ARGM_MA, 1.0))
        for phrase, rel in phrases:
            start = len(tokens)
            tokens.extend(phrase)
            surface += " " + " ".join(phrase)
            nodes.append(GraphNode(id=f"s{spec_count}", level=Level.SPECIFIC,
                                   text=" ".join(phrase),
                                   span=(start, start + len(phrase)), masked=False))
            edges.append(GraphEdge(f"a{k}", f"s{spec_count}", rel, 1.0))
            spec_count += 1
    surface += "."
    root = GraphNode(id="m0", level=Level.MOTION, text=surface,
                     span=(0, len(tokens)), masked=False)
    graph = SemanticGraph(nodes=tuple([root] + nodes), edges=tuple(edges), root="m0")
    return surface, graph


# ---------------------------------------------------------------------------
# Dataset

@dataclass
class ToySample:
    motion: MotionSequence
    text: str
    graph: SemanticGraph
    params: ToyMotionParams


@dataclass
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    def normalize(self, frames: np.ndarray) -> np.ndarray:
        return (frames - self.mean) / self.std

    def denormalize(self, frames: np.ndarray) -> np.ndarray:
        return frames * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "Normalizer":
        return Normalizer(np.asarray(d["mean"], dtype=np.float64),
                          np.asarray(d["std"], dtype=np.float64))


@dataclass
class ToyDataset:
    samples: list[ToySample]
    train_indices: list[int]
    test_indices: list[int]
    normalizer: Normalizer
    seed: int
    frame_range: tuple[int, int]

    @property
    def train(self) -> list[ToySample]:
        return [self.samples[i] for i in self.train_indices]

    @property
    def test(self) -> list[ToySample]:
        return [self.samples[i] for i in self.test_indices]

    def manifest(self) -> dict:
        return {
            "generator_version": GENERATOR_VERSION,
            "seed": self.seed,
            "size": len(self.samples),
            "frame_range": list(self.frame_range),
            "joint_count": DEFAULT_LAYOUT.joint_count,
            "split": {"train": self.train_indices, "test": self.test_indices},
            "normalization": self.normalizer.to_dict(),
            "texts": [s.text for s in self.samples],
            "params": [s.params.to_dict() for s in self.samples],
        }


def sample_params(rng: np.random.Generator, frame_range: tuple[int, int]) -> ToyMotionParams:
    lo, hi = frame_range
    n_actions = rng.choice([1, 2, 3], p=[0.5, 0.3, 0.2])
    kinds = list(rng.choice(ACTION_KINDS, size=n_actions, replace=False))
    per = []
    for kind in kinds:
        direction = str(rng.choice(("left", "right") if kind == "turn" else DIRECTIONS))
        per.append(ActionSpec(
            kind=str(kind),
            direction=direction,
            speed=str(rng.choice(SPEEDS)),
            path=str(rng.choice(PATHS)),
            duration=int(rng.integers(15, 46)),
            mention_direction=bool(rng.random() < 0.75),
            mention_speed=bool(rng.random() < 0.70),
            mention_path=bool(rng.random() < 0.45),
        ))
    total = sum(a.duration for a in per)
    target = int(np.clip(total, lo, hi))
    # rescale durations to keep the sequence inside the configured range
    scaled = [max(6, int(round(a.duration * target / total))) for a in per]
    scaled[-1] += target - sum(scaled)
    per = [ActionSpec(a.kind, a.direction, a.speed, a.path, d)
           for a, d in zip(per, scaled)]
    return ToyMotionParams(actions=tuple(per))


def derive_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def make_dataset(size: int, seed: int = 0,
                 frame_range: tuple[int, int] = (30, 120),
                 train_fraction: float = 0.85) -> ToyDataset:
    """Reproducible toy dataset of (motion, text, gold graph, params) samples."""
    if size < 1:
        raise ValueError("size must be >= 1")
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(size):
        params = sample_params(rng, frame_range)
        text, graph = describe_toy_motion(params)
        motion = synthesize_toy_motion(params, noise_seed=derive_seed(seed, i))
        samples.append(ToySample(motion=motion, text=text, graph=graph, params=params))
    order = rng.permutation(size).tolist()
    n_train = max(1, int(round(train_fraction * size)))
    if size > 1:
        n_train = min(n_train, size - 1)
    train_idx, test_idx = order[:n_train], order[n_train:]

    train_frames = np.concatenate([samples[i].motion.frames for i in train_idx], axis=0)
    mean = train_frames.mean(axis=0)
    std = train_frames.std(axis=0)
    # floor the per-dim scale so near-constant dims stay small after
    # normalization instead of blowing up to unit noise
    std = np.maximum(std, 0.02)
    std[std < 1e-6] = 1.0
    return ToyDataset(samples=samples, train_indices=train_idx, test_indices=test_idx,
                      normalizer=Normalizer(mean, std), seed=seed,
                      frame_range=frame_range)


# ---------------------------------------------------------------------------
# Binary motion container

_HEADER = struct.Struct("<4sIIId")  # magic, version, joint_count, length, fps


def motion_to_bytes(seq: MotionSequence) -> bytes:
    buf = io.BytesIO()
    buf.write(_HEADER.pack(MOTION_MAGIC, MOTION_FORMAT_VERSION,
                           seq.layout.joint_count, seq.length, seq.fps))
    buf.write(np.ascontiguousarray(seq.frames, dtype="<f8").tobytes())
    return buf.getvalue()


def motion_from_bytes(data: bytes, expected_layout: Optional[FeatureLayout] = None) -> MotionSequence:
    if len(data) < _HEADER.size:
        raise CorruptFile("file shorter than header")
    magic, version, joint_count, length, fps = _HEADER.unpack_from(data, 0)
    if magic != MOTION_MAGIC:
        raise CorruptFile(f"bad magic {magic!r}")
    if version != MOTION_FORMAT_VERSION:
        raise CorruptFile(f"unsupported motion format version {version}")
    layout = FeatureLayout(joint_count=joint_count)
    if expected_layout is not None and joint_count != expected_layout.joint_count:
        raise LayoutMismatch(
            f"file has {joint_count} joints, expected {expected_layout.joint_count}")
    want = _HEADER.size + length * layout.width * 8
    if len(data) != want:
        raise CorruptFile(f"expected {want} bytes, got {len(data)}")
    frames = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(length, layout.width)
    return MotionSequence(frames=frames.copy(), fps=fps, layout=layout)


def save_motion(seq: MotionSequence, path: str | Path) -> None:
    Path(path).write_bytes(motion_to_bytes(seq))


def load_motion(path: str | Path, expected_layout: Optional[FeatureLayout] = None) -> MotionSequence:
    return motion_from_bytes(Path(path).read_bytes(), expected_layout)
