"""Fixed-length scene features computed from occlusion-filtered keypoints.

Layout (length ``FEATURE_DIM``)::

    for each object class in ObjectClass order:
        mean keypoint x, mean keypoint y, visible flag, cos(theta), sin(theta)
    instruction one-hot (N_INSTRUCTIONS slots, zero when no instruction)
    constant 1

Class slots of classes with no visible object are all zero.
"""

from __future__ import annotations

import numpy as np

from .geometry import CANONICAL_CORNERS, procrustes_angle

N_CLASSES = 5
N_INSTRUCTIONS = 2
SLOT = 5
FEATURE_DIM = N_CLASSES * SLOT + N_INSTRUCTIONS + 1


def object_orientation(group: np.ndarray) -> float:
    """Orientation of one object's keypoint group (center + corners)."""
    return procrustes_angle(CANONICAL_CORNERS, group[1:])


def featurize(obs) -> np.ndarray:
    """Feature vector of an observation.

    ``obs`` needs ``points`` of shape ``(G, 5, 2)``, ``classes`` of shape
    ``(G,)`` and an ``instruction`` (int or None). When a class has several
    visible objects their positions are averaged and the orientation is taken
    from the first group.
    """
    feat = np.zeros(FEATURE_DIM)
    points = np.asarray(obs.points, dtype=float)
    classes = np.asarray(obs.classes, dtype=int)
    for c in range(N_CLASSES):
        idx = np.flatnonzero(classes == c)
        if idx.size == 0:
            continue
        base = c * SLOT
        feat[base : base + 2] = points[idx].reshape(-1, 2).mean(axis=0)
        feat[base + 2] = 1.0
        theta = object_orientation(points[idx[0]])
        feat[base + 3] = np.cos(theta)
        feat[base + 4] = np.sin(theta)
    if obs.instruction is not None:
        feat[N_CLASSES * SLOT + int(obs.instruction)] = 1.0
    feat[-1] = 1.0
    return feat


def class_slot(feature: np.ndarray, cls: int) -> np.ndarray:
    """The five-entry block of ``feature`` belonging to ``cls``."""
    return feature[cls * SLOT : (cls + 1) * SLOT]
