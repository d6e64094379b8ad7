import numpy as np
import pytest

from crossview.evidence import ProposalRecord, make_evidence
from crossview.geometry import CameraModel, Homography


def box_at(x, y, w=2.0, h=4.0):
    """Box whose foot point is (x, y)."""
    return (x - w / 2, y - h, x + w / 2, y)


def record(cam, t, tid, x, y, feat, actions=None, attrs=None, det=0.9, object_type="person"):
    return ProposalRecord(cam, t, tid, object_type, box_at(x, y), det, np.asarray(feat, float),
                          actions or {}, attrs or {})


@pytest.fixture
def identity_cams():
    return [CameraModel(1, 100, 100, Homography.identity()), CameraModel(2, 100, 100, Homography.identity())]


def two_camera_evidence(T=2, offset=0.0, feat_noise=0.0, seed=0, **kw):
    """Two people seen by two identity-calibrated cameras."""
    rng = np.random.default_rng(seed)
    cams = [CameraModel(1, 100, 100, Homography.identity()), CameraModel(2, 100, 100, Homography.identity())]
    recs = []
    for t in range(T):
        for cam in (1, 2):
            for k, (x, y, f) in enumerate([(10.0, 10.0, (1.0, 0.0)), (40.0, 40.0, (0.0, 1.0))]):
                recs.append(record(cam, t, f"c{cam}p{k}", x + offset * (cam - 1), y,
                                   np.asarray(f) + rng.normal(0, feat_noise, 2), **kw))
    return make_evidence(recs, cams, T=T)
