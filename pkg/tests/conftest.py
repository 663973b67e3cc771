import numpy as np
import pytest

from src.core_model import BoundingBox, Detection, Track, l2_normalize
from src.motion import kf_initiate


def unit(dim, index):
    v = np.zeros(dim)
    v[index] = 1.0
    return v


def make_box(cx, cy, width=40.0, height=100.0):
    return BoundingBox(cx - width / 2, cy - height / 2, width, height)


def make_detection(frame, box, embedding, confidence=0.9):
    return Detection(frame, box, confidence, np.asarray(embedding, dtype=float))


def make_track(track_id, boxes_by_frame, feature):
    """Track con historia {frame: caja}; la feature se usa también como embedding"""
    feature = l2_normalize(feature)
    history = {f: (b, feature) for f, b in boxes_by_frame.items()}
    last = max(history)
    return Track(id=track_id, kalman=kf_initiate(history[last][0]),
                 smoothed_feature=feature, history=history)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
