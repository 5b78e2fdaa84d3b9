"""Planar geometry helpers: angle wrapping, footprints and 2D Procrustes."""

from __future__ import annotations

import numpy as np

# Boundary keypoints sit at the corners of a unit square in the object frame.
# Circles and rectangles share this angular layout, which keeps the
# Procrustes orientation estimate exact for any aspect ratio.
CANONICAL_CORNERS = np.array([[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]])
N_BOUNDARY = len(CANONICAL_CORNERS)


def wrap_angle(theta: float) -> float:
    """Map an angle to (-pi, pi]."""
    wrapped = float(np.arctan2(np.sin(theta), np.cos(theta)))
    # arctan2 returns -pi for the left half axis; the interval is open there.
    if wrapped <= -np.pi:
        wrapped = np.pi
    # Values that are pi up to rounding should land on pi, not -pi.
    if np.isclose(wrapped, -np.pi, rtol=0.0, atol=1e-15):
        wrapped = np.pi
    return wrapped


def rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def procrustes_angle(source: np.ndarray, target: np.ndarray) -> float:
    """Rotation angle that best maps ``source`` onto ``target``.

    Both arrays are ``(P, 2)`` with row-wise correspondence. Points are
    centred before alignment, so translations are ignored. The closed form
    for the orthogonal 2D Procrustes problem is
    ``atan2(sum(a x b), sum(a . b))`` over centred pairs.

    Returns 0.0 when fewer than two points are given.
    """
    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    if source.shape[0] < 2:
        return 0.0
    a = source - source.mean(axis=0)
    b = target - target.mean(axis=0)
    cross = np.sum(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
    dot = np.sum(a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1])
    if cross == 0.0 and dot == 0.0:
        return 0.0
    return wrap_angle(np.arctan2(cross, dot))


def shape_extent(shape) -> np.ndarray:
    """Half extents along the object's local axes used to place corner keypoints."""
    if hasattr(shape, "radius"):
        r = shape.radius / np.sqrt(2.0)
        return np.array([r, r])
    return np.array([shape.half_w, shape.half_h])


def keypoints(shape, x: float, y: float, theta: float) -> np.ndarray:
    """Center followed by the four boundary keypoints, shape ``(5, 2)``."""
    local = CANONICAL_CORNERS * shape_extent(shape)
    world = local @ rotation(theta).T + np.array([x, y])
    return np.vstack([[x, y], world])


def contains(shape, x: float, y: float, theta: float, px: float, py: float) -> bool:
    """Whether point ``(px, py)`` lies inside the footprint (boundary inclusive)."""
    dx, dy = px - x, py - y
    if hasattr(shape, "radius"):
        return dx * dx + dy * dy <= shape.radius * shape.radius
    c, s = np.cos(theta), np.sin(theta)
    u = c * dx + s * dy
    v = -s * dx + c * dy
    return abs(u) <= shape.half_w and abs(v) <= shape.half_h
