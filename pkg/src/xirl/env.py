"""Deterministic 2D sweeping environment.

Unit workspace, goal zone at y >= 0.8, three debris disks, four agent
embodiments. Physics is kinematic: the agent moves first, then debris
overlapping its body are projected out along the minimal translation
vector, debris-debris overlaps are resolved by symmetric separation, and
everything is clamped to the workspace. A (seed, action sequence) pair
fully determines the trajectory.

Control runs at 8 Hz. Sticks take 2 actions (forward speed, turn rate),
the gripper takes a third (grip: > 0 grasps, <= 0 releases).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

DT = 1.0 / 8.0
V_MAX = 0.8  # units / s
W_MAX = np.pi  # rad / s
DEBRIS_RADIUS = 0.04
ZONE_Y = 0.8
NUM_DEBRIS = 3


@dataclass(frozen=True)
class EmbodimentSpec:
    name: str
    index: int
    kind: str  # "stick" | "gripper"
    action_dim: int
    horizon: int
    half_width: float = 0.0  # stick: lateral half-extent
    half_depth: float = 0.0  # stick: half-extent along heading
    body_radius: float = 0.0  # gripper
    grasp_radius: float = 0.0  # gripper


EMBODIMENTS: dict[str, EmbodimentSpec] = {
    "longstick": EmbodimentSpec("longstick", 0, "stick", 2, 50, 0.25, 0.02),
    "mediumstick": EmbodimentSpec("mediumstick", 1, "stick", 2, 100, 0.15, 0.02),
    "shortstick": EmbodimentSpec("shortstick", 2, "stick", 2, 100, 0.075, 0.02),
    "gripper": EmbodimentSpec(
        "gripper", 3, "gripper", 3, 100, body_radius=0.06, grasp_radius=0.08
    ),
}

EMBODIMENT_NAMES = tuple(EMBODIMENTS)


@dataclass(frozen=True)
class EnvState:
    embodiment: str
    agent: np.ndarray  # (2,)
    theta: float
    debris: np.ndarray  # (3, 2)
    t: int
    held: int = -1  # gripper: debris index, -1 = none
    held_offset: np.ndarray | None = None  # (2,) in agent frame (heading, lateral)

    @property
    def spec(self) -> EmbodimentSpec:
        return EMBODIMENTS[self.embodiment]


def _heading(theta: float) -> tuple[np.ndarray, np.ndarray]:
    h = np.array([np.cos(theta), np.sin(theta)])
    lat = np.array([-h[1], h[0]])
    return h, lat


def reset(embodiment: str, seed) -> EnvState:
    """Sample an initial state. The agent always spawns below the debris,
    which share one y-coordinate and are laterally spaced >= 0.12 apart."""
    spec = EMBODIMENTS[embodiment]
    rng = np.random.default_rng(seed)
    debris_y = rng.uniform(0.45, 0.60)
    while True:
        xs = np.sort(rng.uniform(0.30, 0.70, size=NUM_DEBRIS))
        if np.diff(xs).min() >= 0.12:
            break
    debris = np.column_stack([xs, np.full(NUM_DEBRIS, debris_y)])
    agent = np.array([rng.uniform(0.15, 0.85), rng.uniform(0.05, 0.30)])
    theta = np.pi / 2.0 + rng.uniform(-0.3, 0.3)
    return EnvState(spec.name, agent, float(theta), debris, t=0)


# separation slop: projections aim slightly past contact so float rounding
# cannot leave a hair of residual overlap that the wedge check would see
_SLOP = 1e-9


def _push_out_of_stick(spec: EmbodimentSpec, agent, theta, c):
    """MTV moving a debris center `c` out of the stick rectangle; None if clear."""
    h, lat = _heading(theta)
    rel = c - agent
    a, b = float(rel @ h), float(rel @ lat)
    ca = np.clip(a, -spec.half_depth, spec.half_depth)
    cb = np.clip(b, -spec.half_width, spec.half_width)
    delta = c - (agent + ca * h + cb * lat)
    d2 = float(delta @ delta)
    if d2 >= DEBRIS_RADIUS**2:
        return None
    if d2 > 0.0:
        d = np.sqrt(d2)
        return delta * ((DEBRIS_RADIUS + _SLOP - d) / d)
    # center inside the rectangle: exit along the axis of least penetration
    pen_a = spec.half_depth - abs(a) + DEBRIS_RADIUS + _SLOP
    pen_b = spec.half_width - abs(b) + DEBRIS_RADIUS + _SLOP
    sa = 1.0 if a >= 0.0 else -1.0
    sb = 1.0 if b >= 0.0 else -1.0
    return pen_a * sa * h if pen_a <= pen_b else pen_b * sb * lat


def _push_out_of_disk(radius: float, center, theta, c):
    delta = c - center
    d = float(np.hypot(*delta))
    reach = radius + DEBRIS_RADIUS
    if d >= reach:
        return None
    if d > 0.0:
        return delta * ((reach + _SLOP - d) / d)
    h, _ = _heading(theta)
    return (reach + _SLOP) * h


def _agent_mtv(spec: EmbodimentSpec, agent, theta, c):
    if spec.kind == "stick":
        return _push_out_of_stick(spec, agent, theta, c)
    return _push_out_of_disk(spec.body_radius, agent, theta, c)


def _resolve(spec: EmbodimentSpec, agent, theta, debris, held: int):
    """Project debris out of the agent, separate debris pairs, clamp.

    A held debris is rigidly attached: it is exempt from the agent MTV and
    pinned during pair separation (the free partner absorbs the full move).

    Iterates to convergence: a debris squeezed between the agent and a
    neighbor bounces between the two projections with the residual halving
    each round, so a fixed handful of rounds can leave visible overlap.
    """
    debris = debris.copy()
    for _ in range(32):
        moved = 0.0
        for i in range(NUM_DEBRIS):
            if i == held:
                continue
            mtv = _agent_mtv(spec, agent, theta, debris[i])
            if mtv is not None:
                debris[i] += mtv
                moved = max(moved, float(np.hypot(*mtv)))
        for i in range(NUM_DEBRIS):
            for j in range(i + 1, NUM_DEBRIS):
                delta = debris[j] - debris[i]
                d = float(np.hypot(*delta))
                need = 2.0 * DEBRIS_RADIUS + _SLOP - d
                if need <= _SLOP:
                    continue
                direction = delta / d if d > 0.0 else np.array([1.0, 0.0])
                if i == held:
                    debris[j] += need * direction
                elif j == held:
                    debris[i] -= need * direction
                else:
                    debris[i] -= 0.5 * need * direction
                    debris[j] += 0.5 * need * direction
                moved = max(moved, need)
        np.clip(debris, DEBRIS_RADIUS, 1.0 - DEBRIS_RADIUS, out=debris)
        if moved < 1e-9:
            break
    return debris


def _any_agent_overlap(spec: EmbodimentSpec, agent, theta, debris, held: int) -> bool:
    """Macroscopic residual penetration (a debris wedged against a wall);
    grazing contact within slop does not count."""
    for i in range(NUM_DEBRIS):
        if i == held:
            continue
        mtv = _agent_mtv(spec, agent, theta, debris[i])
        if mtv is not None and float(np.hypot(*mtv)) > 1e-7:
            return True
    return False


def in_zone_fraction(state: EnvState) -> float:
    return float((state.debris[:, 1] >= ZONE_Y).sum()) / NUM_DEBRIS


def step(state: EnvState, action) -> tuple[EnvState, float, bool]:
    """Advance one control tick; returns (state', env_reward, done)."""
    spec = state.spec
    if state.t >= spec.horizon:
        raise RuntimeError("stepping a finished episode")
    action = np.asarray(action, dtype=np.float64)
    if action.shape != (spec.action_dim,):
        raise ValueError(
            f"{spec.name} expects action shape ({spec.action_dim},), got {action.shape}"
        )
    v, w = np.clip(action[0], -1.0, 1.0), np.clip(action[1], -1.0, 1.0)
    grip = np.clip(action[2], -1.0, 1.0) if spec.kind == "gripper" else 0.0

    theta_raw = state.theta + w * W_MAX * DT
    h, lat = _heading(theta_raw)
    agent = np.clip(state.agent + v * V_MAX * DT * h, 0.02, 0.98)
    theta = float(np.mod(theta_raw, 2.0 * np.pi))

    debris = state.debris.copy()
    held, held_offset = state.held, state.held_offset
    if spec.kind == "gripper" and held >= 0 and grip <= 0.0:
        held, held_offset = -1, None

    # swept collision: the pose jump can exceed the body depth, so debris
    # are resolved along the interpolated motion, not just at the endpoint
    move = float(np.hypot(*(agent - state.agent)))
    reach = spec.half_width if spec.kind == "stick" else spec.body_radius
    sweep = move + reach * abs(theta_raw - state.theta)
    k = max(1, int(np.ceil(sweep / 0.015)))
    for i in range(1, k + 1):
        f = i / k
        pos_i = state.agent + f * (agent - state.agent)
        th_i = state.theta + f * (theta_raw - state.theta)
        if held >= 0:
            hi, li = _heading(th_i)
            debris[held] = pos_i + held_offset[0] * hi + held_offset[1] * li
        debris = _resolve(spec, pos_i, th_i, debris, held)
    if held >= 0:
        # attachment is rigid but the workspace still wins
        debris[held] = np.clip(debris[held], DEBRIS_RADIUS, 1.0 - DEBRIS_RADIUS)

    if _any_agent_overlap(spec, agent, theta, debris, held):
        # wedged between a wall and the agent: the move is rejected wholesale
        agent, theta = state.agent, state.theta
        debris = state.debris.copy()
        held, held_offset = state.held, state.held_offset
        h, lat = _heading(theta)

    if spec.kind == "gripper" and held < 0 and grip > 0.0:
        rel = debris - agent
        dists = np.hypot(rel[:, 0], rel[:, 1])
        nearest = int(np.argmin(dists))
        if dists[nearest] <= spec.grasp_radius + DEBRIS_RADIUS:
            held = nearest
            held_offset = np.array([rel[nearest] @ h, rel[nearest] @ lat])

    t = state.t + 1
    new = EnvState(spec.name, agent, theta, debris, t, held, held_offset)
    return new, in_zone_fraction(new), t >= spec.horizon


def state_vector(state: EnvState) -> np.ndarray:
    """16 floats: agent (x, y, cos, sin), then per debris (x, y,
    distance-to-agent, distance-to-zone)."""
    out = np.empty(16)
    out[0:2] = state.agent
    out[2] = np.cos(state.theta)
    out[3] = np.sin(state.theta)
    for i in range(NUM_DEBRIS):
        d = state.debris[i]
        out[4 + 4 * i] = d[0]
        out[5 + 4 * i] = d[1]
        out[6 + 4 * i] = np.hypot(*(d - state.agent))
        out[7 + 4 * i] = max(0.0, ZONE_Y - d[1])
    return out


def render(state: EnvState, grid: int = 64) -> np.ndarray:
    """(G, G, 3) float64 binary masks: agent, debris, goal zone.

    Rasterized by center-of-cell inclusion; row 0 is the top of the
    workspace (y near 1)."""
    if grid < 16:
        raise ValueError("grid must be >= 16")
    spec = state.spec
    cols = (np.arange(grid) + 0.5) / grid
    rows = 1.0 - (np.arange(grid) + 0.5) / grid
    x = np.broadcast_to(cols[None, :], (grid, grid))
    y = np.broadcast_to(rows[:, None], (grid, grid))

    out = np.zeros((grid, grid, 3))
    if spec.kind == "stick":
        h, lat = _heading(state.theta)
        rx, ry = x - state.agent[0], y - state.agent[1]
        a = rx * h[0] + ry * h[1]
        b = rx * lat[0] + ry * lat[1]
        out[:, :, 0] = (np.abs(a) <= spec.half_depth) & (np.abs(b) <= spec.half_width)
    else:
        d2 = (x - state.agent[0]) ** 2 + (y - state.agent[1]) ** 2
        out[:, :, 0] = d2 <= spec.body_radius**2

    mask = np.zeros((grid, grid), dtype=bool)
    for i in range(NUM_DEBRIS):
        d2 = (x - state.debris[i, 0]) ** 2 + (y - state.debris[i, 1]) ** 2
        mask |= d2 <= DEBRIS_RADIUS**2
    out[:, :, 1] = mask
    out[:, :, 2] = y >= ZONE_Y
    return out


class SweepEnv:
    """Stateful wrapper: frame-stacked 48-dim observations for control.

    The stacked vector concatenates the three most recent state vectors,
    oldest first; at reset the initial frame fills all three slots.
    """

    STACK = 3

    def __init__(self, embodiment: str):
        self.spec = EMBODIMENTS[embodiment]
        self.state: EnvState | None = None
        self._frames: list[np.ndarray] = []

    def reset(self, seed) -> np.ndarray:
        self.state = reset(self.spec.name, seed)
        sv = state_vector(self.state)
        self._frames = [sv] * self.STACK
        return np.concatenate(self._frames)

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        self.state, reward, done = step(self.state, action)
        self._frames = self._frames[1:] + [state_vector(self.state)]
        return np.concatenate(self._frames), reward, done
