"""Scripted demonstrators, one strategy per embodiment.

Each controller is a pure function of the current state, so a demo is
reproducible from (seed, policy) alone. Sticks stage below their target
debris, align upward, and sweep; the width of the stick decides how many
debris one sweep can carry, which is what drives the characteristic
episode-length ordering across embodiments. The gripper ferries debris
one at a time.

All controllers respect one safety rule: the body only rotates freely
when no free debris is inside its swing circle; otherwise it moves in a
straight line (along its heading) away from the nearest debris first.
"""

from __future__ import annotations

import numpy as np

from .env import DEBRIS_RADIUS, ZONE_Y, EnvState, _heading

SWEPT_Y = 0.84  # past the zone line with margin
_POS_TOL = 0.02
_PUSH_X_TOL = 0.02  # looser than the traverse tolerance, so staging terminates
_ALIGN_TOL = 0.05
_UP = np.pi / 2.0


def _wrap(a: float) -> float:
    return float(np.mod(a + np.pi, 2.0 * np.pi) - np.pi)


def _turn_action(err: float) -> float:
    from .env import DT, W_MAX

    return float(np.clip(err / (W_MAX * DT), -1.0, 1.0))


def _drive_action(dist: float) -> float:
    from .env import DT, V_MAX

    return float(np.clip(dist / (V_MAX * DT), -1.0, 1.0))


def _navigate(
    state: EnvState, goal, swing: float, tol: float = _POS_TOL
) -> tuple[float, float]:
    """Head toward `goal`; rotate only when every free debris is outside
    `swing`. When rotation is unsafe, drive straight along the heading in
    whichever direction moves away from the nearest debris."""
    pos, theta = state.agent, state.theta
    free = [i for i in range(len(state.debris)) if i != state.held]
    rel = state.debris[free] - pos
    dists = np.hypot(rel[:, 0], rel[:, 1])
    h, _ = _heading(theta)

    err = np.asarray(goal) - pos
    dist = float(np.hypot(*err))
    if dist <= tol and dists.min() > swing:
        return 0.0, 0.0
    psi = float(np.arctan2(err[1], err[0]))
    e_fwd = _wrap(psi - theta)
    if abs(e_fwd) <= np.pi / 2.0:
        e, sign = e_fwd, 1.0
    else:
        e, sign = _wrap(e_fwd - np.pi), -1.0

    if dists.min() <= swing:
        # too close to rotate; drive straight if the goal is roughly along
        # the heading, otherwise back the body out along its axis first
        if abs(e) <= 0.35 and dist > tol:
            return sign * _drive_action(dist), 0.0
        nearest = rel[int(np.argmin(dists))]
        away = 1.0 if float(nearest @ h) <= 0.0 else -1.0
        blocked = np.clip(pos + away * 0.05 * h, 0.02, 0.98)
        if float(np.hypot(*(blocked - pos))) < 0.01:  # wall: flip direction
            away = -away
        return away, 0.0

    gate = max(0.0, 1.0 - abs(e) / 0.6)
    return sign * _drive_action(dist) * gate, _turn_action(e)


def _stick_policy(state: EnvState, face_cover: float) -> np.ndarray:
    """Shared stick controller. `face_cover` is the half-span of debris
    centers one sweep can reliably carry; it decides target grouping."""
    spec = state.spec
    debris = state.debris
    unswept = np.flatnonzero(debris[:, 1] < SWEPT_Y)
    if unswept.size == 0:
        return np.zeros(2)

    # target: the widest group of unswept debris whose centers fit the face,
    # anchored at the leftmost unswept one
    anchor = unswept[np.argmin(debris[unswept, 0])]
    group = unswept[np.abs(debris[unswept, 0] - debris[anchor, 0]) <= 2.0 * face_cover]
    target_x = 0.5 * (debris[group, 0].min() + debris[group, 0].max())
    group_low_y = debris[group, 1].min()

    swing = spec.half_width + DEBRIS_RADIUS + 0.02
    align_err = _wrap(_UP - state.theta)
    ax, ay = state.agent

    if (
        abs(align_err) <= _ALIGN_TOL
        and abs(ax - target_x) <= _PUSH_X_TOL
        and ay < group_low_y
    ):
        # push: steer the heading to hold x on target while driving up
        theta_des = _UP - np.clip(2.0 * (target_x - ax), -0.08, 0.08)
        return np.array([1.0, _turn_action(_wrap(theta_des - state.theta))])

    stage_y = min(0.30, group_low_y - swing - 0.03)
    if abs(ax - target_x) > 0.01 and ay > stage_y + _POS_TOL:
        # descend in place before traversing; keeps the swing circle clear
        v, w = _navigate(state, (ax, stage_y), swing)
        return np.array([v, w])
    if abs(ax - target_x) > 0.01 or ay > stage_y + _POS_TOL:
        v, w = _navigate(state, (target_x, stage_y), swing, tol=0.01)
        return np.array([v, w])
    # staged: settle the heading, then the push branch takes over
    return np.array([0.0, _turn_action(align_err)])


def _gripper_policy(state: EnvState) -> np.ndarray:
    spec = state.spec
    debris = state.debris
    unswept = np.flatnonzero(debris[:, 1] < SWEPT_Y)

    if state.held >= 0:
        d = debris[state.held]
        if d[1] >= SWEPT_Y + 0.02:
            return np.array([0.0, 0.0, -1.0])  # release
        # steer by where the held debris must go, not where the body is,
        # and pick a lane clear of debris already parked in the zone
        high = [
            debris[j, 0]
            for j in range(len(debris))
            if j != state.held and debris[j, 1] >= 0.70
        ]
        cands = [float(np.clip(d[0], 0.08, 0.92))]
        for hx in high:
            cands += [hx - 0.17, hx + 0.17]
        cands = [c for c in cands if 0.06 <= c <= 0.94]
        cands.sort(key=lambda c: abs(c - d[0]))
        lane = next(
            (c for c in cands if all(abs(c - hx) >= 0.17 for hx in high)), d[0]
        )
        goal = state.agent + np.array([lane - d[0], SWEPT_Y + 0.04 - d[1]])
        # no swing gate while carrying: the disk sweeps nothing when it
        # turns, and dodging sideways mid-carry only causes limit cycles
        v, w = _navigate(state, goal, swing=0.0)
        return np.array([np.clip(v, -0.4, 0.4), w, 1.0])  # careful carry

    if unswept.size == 0:
        return np.zeros(3)

    # never linger next to debris already in the zone: a careless nudge
    # could knock it back out, so slide clear along the body axis first
    swept = np.flatnonzero(debris[:, 1] >= ZONE_Y)
    if swept.size:
        rel_s = debris[swept] - state.agent
        ds = np.hypot(rel_s[:, 0], rel_s[:, 1])
        if ds.min() <= 0.18:
            h, _ = _heading(state.theta)
            nearest = rel_s[int(np.argmin(ds))]
            away = 1.0 if float(nearest @ h) <= 0.0 else -1.0
            nxt = np.clip(state.agent + away * 0.05 * h, 0.02, 0.98)
            if float(np.hypot(*(nxt - state.agent))) < 0.01:
                away = -away
            return np.array([away, 0.0, -1.0])

    rel = debris[unswept] - state.agent
    target = unswept[int(np.argmin(np.hypot(rel[:, 0], rel[:, 1])))]
    tpos = debris[target]
    to_t = tpos - state.agent
    reach = float(np.hypot(*to_t))
    e_face = _wrap(float(np.arctan2(to_t[1], to_t[0])) - state.theta)
    # grasp only while facing the target, so the carry starts debris-ahead
    if reach <= spec.grasp_radius + DEBRIS_RADIUS - 0.005 and abs(e_face) <= 0.35:
        return np.array([0.0, 0.0, 1.0])
    goal = np.array([tpos[0], tpos[1] - 0.10])
    if float(np.hypot(*(goal - state.agent))) <= _POS_TOL:
        # at the staging point: square up, then creep until within reach
        creep = _drive_action(max(0.0, reach - 0.105)) if abs(e_face) <= 0.35 else 0.0
        return np.array([creep, _turn_action(e_face), -1.0])
    # a free gripper is a disk: rotating in place sweeps nothing, no gate
    v, w = _navigate(state, goal, swing=0.0)
    return np.array([v, w, -1.0])


def oracle_policy(state: EnvState) -> np.ndarray:
    """In-bounds action for the embodiment's scripted strategy."""
    spec = state.spec
    if spec.kind == "gripper":
        return np.clip(_gripper_policy(state), -1.0, 1.0)
    # how far off-center a debris may sit and still ride the face reliably
    cover = spec.half_width - 0.05
    return np.clip(_stick_policy(state, cover), -1.0, 1.0)
