"""Ground-plane homographies, foot points and calibration files."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DET_TOL = 1e-12
W_TOL = 1e-9


class AtInfinity(ValueError):
    """The projected point lands (numerically) on the line at infinity."""


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class Homography:
    """Image -> ground plane projective map (3x3, row-major)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise ValueError(f"homography must be a finite 3x3 matrix, got shape {m.shape}")
        # scale-free invertibility test
        scale = np.abs(m).max()
        if scale == 0 or abs(np.linalg.det(m / scale)) < DET_TOL:
            raise ValueError("homography is singular")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def inverse(self) -> np.ndarray:
        inv = getattr(self, "_inv", None)
        if inv is None:
            inv = np.linalg.inv(self.matrix)
            object.__setattr__(self, "_inv", inv)
        return inv

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))


@dataclass(frozen=True)
class CameraModel:
    camera_id: int
    width: int
    height: int
    homography: Homography

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"camera {self.camera_id}: image size must be positive")


def _apply(m: np.ndarray, p) -> tuple[float, float]:
    x, y = float(p[0]), float(p[1])
    if not (np.isfinite(x) and np.isfinite(y)):
        raise ValueError(f"point must be finite, got {p!r}")
    u = m[0, 0] * x + m[0, 1] * y + m[0, 2]
    v = m[1, 0] * x + m[1, 1] * y + m[1, 2]
    w = m[2, 0] * x + m[2, 1] * y + m[2, 2]
    if abs(w) < W_TOL:
        raise AtInfinity(f"point {p!r} maps to the line at infinity (w={w:g})")
    return u / w, v / w


def project_to_ground(h: Homography, p) -> tuple[float, float]:
    """Map an image point to world ground-plane coordinates."""
    return _apply(h.matrix, p)


def project_to_image(h: Homography, q) -> tuple[float, float]:
    """Map a ground-plane point back into the image."""
    return _apply(h.inverse, q)


def project_many(m: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Vectorised projection of an (n, 2) array through matrix ``m``.

    Raises AtInfinity if any point lands near the line at infinity.
    """
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    hom = pts @ m[:, :2].T + m[:, 2]
    w = hom[:, 2]
    if np.any(np.abs(w) < W_TOL):
        raise AtInfinity("at least one point maps to the line at infinity")
    return hom[:, :2] / w[:, None]


def foot_point(bbox) -> tuple[float, float]:
    """Bottom-centre of an (x_min, y_min, x_max, y_max) box; y grows downward."""
    x0, _, x1, y1 = bbox
    return (x0 + x1) / 2.0, float(y1)


def load_calibration(path) -> dict[int, CameraModel]:
    """Read one JSON record per line: camera_id, width, height, H (9 reals)."""
    cams: dict[int, CameraModel] = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            cid = int(rec["camera_id"])
            h = np.array(rec["H"], dtype=float)
            if h.size != 9:
                raise ValueError("H must hold 9 reals")
            cam = CameraModel(cid, int(rec["width"]), int(rec["height"]), Homography(h.reshape(3, 3)))
        except (KeyError, TypeError, ValueError) as exc:
            raise CalibrationError(f"{path}:{lineno}: bad calibration record ({exc})") from exc
        if cid in cams:
            raise CalibrationError(f"{path}:{lineno}: duplicate camera_id {cid}")
        cams[cid] = cam
    return cams


def dump_calibration(cameras, path) -> None:
    lines = []
    for cam in sorted(cameras, key=lambda c: c.camera_id):
        lines.append(json.dumps({
            "camera_id": cam.camera_id,
            "width": cam.width,
            "height": cam.height,
            "H": [float(v) for v in cam.homography.matrix.ravel()],
        }))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
