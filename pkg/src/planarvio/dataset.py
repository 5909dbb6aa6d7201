"""Reading the on-disk dataset layout and TUM trajectory files."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .geometry import RigidTransform, Rotation
from .imu import ImuNoiseParams, ImuSample


@dataclass
class Calibration:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    t_bc: RigidTransform
    gravity: float


@dataclass
class Dataset:
    path: str
    calib: Calibration
    meta: dict
    imu: list  # ImuSample
    frame_times: np.ndarray
    groundtruth: np.ndarray  # (N, 8) t tx ty tz qx qy qz qw

    @property
    def camera_rate(self):
        return float(self.meta["camera_rate"])

    def noise_params(self) -> ImuNoiseParams:
        return ImuNoiseParams(
            gyro_noise=float(self.meta["gyro_noise"]),
            accel_noise=float(self.meta["accel_noise"]),
            gyro_walk=float(self.meta["gyro_walk"]),
            accel_walk=float(self.meta["accel_walk"]),
        )

    def frame_file(self, index):
        return os.path.join(self.path, "frames", "%06d.csv" % index)

    def load_frame(self, index):
        """(feature_ids, plane_ids, points Nx2) for one frame."""
        data = np.loadtxt(self.frame_file(index), delimiter=",", skiprows=1, ndmin=2)
        if data.size == 0:
            return np.zeros(0, int), np.zeros(0, int), np.zeros((0, 2))
        return data[:, 0].astype(int), data[:, 1].astype(int), data[:, 2:4]

    def imu_between(self, t0, t1):
        """Samples with t0 <= t <= t1 (inclusive ends for interval joins)."""
        eps = 1e-9
        return [s for s in self.imu if t0 - eps <= s.timestamp <= t1 + eps]


def parse_keyvalue(path) -> dict:
    out = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#") or "=" not in line:
                continue
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def load_dataset(path: str) -> Dataset:
    calib_raw = parse_keyvalue(os.path.join(path, "calib.txt"))
    t_bc_vals = np.array([float(x) for x in calib_raw["t_bc"].split()])
    t_bc = RigidTransform(
        Rotation(np.array([t_bc_vals[6], t_bc_vals[3], t_bc_vals[4], t_bc_vals[5]])),
        t_bc_vals[:3],
    )
    calib = Calibration(
        fx=float(calib_raw["fx"]),
        fy=float(calib_raw["fy"]),
        cx=float(calib_raw["cx"]),
        cy=float(calib_raw["cy"]),
        width=int(calib_raw["width"]),
        height=int(calib_raw["height"]),
        t_bc=t_bc,
        gravity=float(calib_raw["gravity"]),
    )
    meta = parse_keyvalue(os.path.join(path, "meta.txt"))

    imu_data = np.loadtxt(os.path.join(path, "imu.csv"), delimiter=",", skiprows=1)
    imu = [ImuSample(row[0], row[1:4], row[4:7]) for row in imu_data]

    gt = load_tum(os.path.join(path, "groundtruth.txt"))

    frame_dir = os.path.join(path, "frames")
    n_frames = len([f for f in os.listdir(frame_dir) if f.endswith(".csv")])
    rate = float(meta["camera_rate"])
    frame_times = np.arange(n_frames) / rate

    return Dataset(path, calib, meta, imu, frame_times, gt)


def load_tum(path) -> np.ndarray:
    """TUM trajectory: rows of t tx ty tz qx qy qz qw."""
    rows = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            vals = [float(x) for x in line.replace(",", " ").split()]
            if len(vals) >= 8:
                rows.append(vals[:8])
    return np.array(rows)


def save_tum(path, rows):
    """rows: iterable of (t, position(3), Rotation)."""
    with open(path, "w") as f:
        f.write("# t tx ty tz qx qy qz qw\n")
        for t, pos, rot in rows:
            q = rot.q
            f.write(
                "%.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n"
                % (t, pos[0], pos[1], pos[2], q[1], q[2], q[3], q[0])
            )


def tum_pose(row) -> RigidTransform:
    return RigidTransform(
        Rotation(np.array([row[7], row[4], row[5], row[6]])), row[1:4]
    )
