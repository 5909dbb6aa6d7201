"""Synthetic sequence generator: warehouse-style planar world, circular
trajectory with vertical sine excitation, IMU synthesis, oracle plane-tagged
feature tracks, and dynamic point clusters acting as coherent outliers.

No images are rendered; the output is exactly what the tracking front-end
would hand the estimator: per-frame normalized feature observations with
plane ids, plus IMU samples and ground truth.

World frame: z up, gravity (0, 0, -9.81); origin at the circle center at
flight height. Body frame: x forward (toward the circle center), z up.
Camera: z optical axis = body x, x right = -body y, y down = -body z.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import RigidTransform, Rotation, exp_so3
from .homography import Plane
from .imu import GRAVITY_MAGNITUDE, ImuBias, ImuNoiseParams, ImuSample

GRAVITY_W = np.array([0.0, 0.0, -GRAVITY_MAGNITUDE])

R_BC_DEFAULT = Rotation.from_matrix(
    np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
)
T_BC_DEFAULT = RigidTransform(R_BC_DEFAULT, np.array([0.08, 0.03, -0.05]))


def stream_rng(*key):
    """Deterministic generator for a hashable key; streams are independent
    of each other and of consumption order elsewhere."""
    digest = hashlib.sha256(repr(key).encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


@dataclass(frozen=True)
class CameraConfig:
    fx: float = 320.0
    fy: float = 320.0
    cx: float = 320.0
    cy: float = 240.0
    width: int = 640
    height: int = 480
    t_bc: RigidTransform = field(default_factory=lambda: T_BC_DEFAULT)

    @property
    def x_limit(self):
        return 0.5 * self.width / self.fx

    @property
    def y_limit(self):
        return 0.5 * self.height / self.fy


@dataclass(frozen=True)
class TrajectoryConfig:
    radius: float = 15.0
    angular_rate: float = 0.17  # rad/s around the circle after warm-up
    sine_amplitude: float = 1.2
    sine_frequency: float = 0.2
    duration: float = 80.0
    warmup: float = 5.0  # initial vertical-only acceleration phase
    camera_rate: float = 20.0
    imu_rate: float = 200.0

    def __post_init__(self):
        if self.radius <= 0 or self.duration <= 0:
            raise ValueError("radius and duration must be positive")
        ratio = self.imu_rate / self.camera_rate
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("imu rate must be an integer multiple of camera rate")


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x**3 * (6 * x * x - 15 * x + 10)


def _smoothstep_d(x):
    inside = (x > 0) & (x < 1)
    x = np.clip(x, 0.0, 1.0)
    return np.where(inside, 30 * x * x * (x - 1) ** 2, 0.0)


def _smoothstep_int(x):
    """Integral of the quintic smoothstep from 0 to x (x in [0, 1])."""
    x = np.clip(x, 0.0, 1.0)
    return x**4 * (x * x - 3 * x + 2.5)


class TrajectorySampler:
    """Analytic C2 trajectory: circle with vertical sine, yaw facing the
    circle center, horizontal speed ramped in by a quintic smoothstep."""

    def __init__(self, cfg: TrajectoryConfig):
        self.cfg = cfg
        self.phi0 = 0.0

    # time warp: circle angle phi(t) = phi0 + w * W(t)
    def _warp(self, t):
        tw = self.cfg.warmup
        if tw <= 0:
            return t, np.ones_like(np.asarray(t, float)), np.zeros_like(np.asarray(t, float))
        x = np.asarray(t, float) / tw
        W = np.where(x < 1.0, tw * _smoothstep_int(x), tw * 0.5 + (np.asarray(t) - tw))
        Wd = _smoothstep(x)
        Wdd = _smoothstep_d(x) / tw
        return W, Wd, Wdd

    def position(self, t):
        t = np.asarray(t, float)
        cfg = self.cfg
        W, _, _ = self._warp(t)
        phi = self.phi0 + cfg.angular_rate * W
        z = cfg.sine_amplitude * (np.cos(2 * np.pi * cfg.sine_frequency * t) - 1.0)
        return np.stack(
            [cfg.radius * np.cos(phi), cfg.radius * np.sin(phi), z], axis=-1
        )

    def velocity(self, t):
        t = np.asarray(t, float)
        cfg = self.cfg
        W, Wd, _ = self._warp(t)
        phi = self.phi0 + cfg.angular_rate * W
        dphi = cfg.angular_rate * Wd
        wz = 2 * np.pi * cfg.sine_frequency
        vz = -cfg.sine_amplitude * wz * np.sin(wz * t)
        return np.stack(
            [-cfg.radius * np.sin(phi) * dphi, cfg.radius * np.cos(phi) * dphi, vz],
            axis=-1,
        )

    def acceleration(self, t):
        t = np.asarray(t, float)
        cfg = self.cfg
        W, Wd, Wdd = self._warp(t)
        phi = self.phi0 + cfg.angular_rate * W
        dphi = cfg.angular_rate * Wd
        ddphi = cfg.angular_rate * Wdd
        wz = 2 * np.pi * cfg.sine_frequency
        az = -cfg.sine_amplitude * wz * wz * np.cos(wz * t)
        ax = -cfg.radius * (np.cos(phi) * dphi**2 + np.sin(phi) * ddphi)
        ay = -cfg.radius * (np.sin(phi) * dphi**2 - np.cos(phi) * ddphi)
        return np.stack([ax, ay, az], axis=-1)

    def yaw(self, t):
        W, _, _ = self._warp(np.asarray(t, float))
        return self.phi0 + self.cfg.angular_rate * W + np.pi

    def rotation(self, t):
        return exp_so3([0.0, 0.0, float(self.yaw(t))])

    def angular_velocity_body(self, t):
        _, Wd, _ = self._warp(np.asarray(t, float))
        return np.array([0.0, 0.0, float(self.cfg.angular_rate * Wd)])

    def pose(self, t):
        return RigidTransform(self.rotation(t), np.asarray(self.position(t), float))

    def path_length(self, n=20000):
        ts = np.linspace(0.0, self.cfg.duration, n)
        speeds = np.linalg.norm(self.velocity(ts), axis=-1)
        return float(np.trapezoid(speeds, ts))


def generate_trajectory(cfg: TrajectoryConfig) -> TrajectorySampler:
    return TrajectorySampler(cfg)


def synthesize_imu(
    trajectory: TrajectorySampler,
    noise: ImuNoiseParams,
    bias: ImuBias,
    rate: float,
    rng_seed: int,
):
    """Body-frame IMU samples along the trajectory.

    gyro = body angular velocity + bias + noise;
    accel = specific force R^T (a_world - g) + bias + noise.
    Noise densities are converted to per-sample sigmas by sqrt(rate).
    """
    if rate <= 0:
        raise ValueError("rate must be positive")
    n = int(round(trajectory.cfg.duration * rate)) + 1
    ts = np.arange(n) / rate
    rng = stream_rng("imu", rng_seed)
    sg = noise.gyro_noise * np.sqrt(rate)
    sa = noise.accel_noise * np.sqrt(rate)
    samples = []
    for t in ts:
        R = trajectory.rotation(t).to_matrix()
        w = trajectory.angular_velocity_body(t) + bias.gyro
        a = R.T @ (trajectory.acceleration(t) - GRAVITY_W) + bias.accel
        if sg > 0 or sa > 0:
            w = w + rng.normal(size=3) * sg
            a = a + rng.normal(size=3) * sa
        samples.append(ImuSample(float(t), w, a))
    return samples


# ---------------------------------------------------------------------------
# world


@dataclass
class PlanarFacet:
    """Plane with a rectangular extent: center + two in-plane axes."""

    plane: Plane
    center: np.ndarray
    axis_u: np.ndarray  # in-plane unit vector scaled by half-extent
    axis_v: np.ndarray


@dataclass
class DynamicCluster:
    """Rigid point cluster on two superposed horizontal sways plus a small
    vertical bob; incommensurate frequencies avoid still instants."""

    cluster_id: int
    base_points: np.ndarray  # at rest, world frame
    sway_dir: np.ndarray
    sway_amplitude: float
    sway_frequency: float
    sway_dir2: np.ndarray
    sway_amplitude2: float
    sway_frequency2: float
    bob_amplitude: float
    phase: float
    phase2: float

    def offset(self, t):
        s1 = np.sin(2 * np.pi * self.sway_frequency * t + self.phase)
        s2 = np.sin(2 * np.pi * self.sway_frequency2 * t + self.phase2)
        bob = self.bob_amplitude * np.sin(
            2 * np.pi * (self.sway_frequency + self.sway_frequency2) * t + self.phase
        )
        return (
            self.sway_dir * (self.sway_amplitude * s1)
            + self.sway_dir2 * (self.sway_amplitude2 * s2)
            + np.array([0.0, 0.0, bob])
        )

    def points(self, t):
        return self.base_points + self.offset(t)

    def center(self, t):
        return self.base_points.mean(axis=0) + self.offset(t)


@dataclass
class WorldConfig:
    hall_half_size: float = 22.0
    wall_top: float = 8.0
    flight_height: float = 4.0  # ground sits at z = -flight_height
    features_per_plane: int = 200
    cluster_features: int = 60
    cluster_radius_range: tuple = (3.5, 8.0)
    sway_amplitude: float = 0.9
    sway_frequency_range: tuple = (0.6, 1.1)
    bob_amplitude: float = 0.15


@dataclass
class WorldModel:
    facets: list
    static_points: np.ndarray  # (N, 3)
    static_plane_ids: np.ndarray  # (N,)
    clusters: list

    def plane_by_id(self, pid):
        for f in self.facets:
            if f.plane.plane_id == pid:
                return f.plane
        raise KeyError(pid)


def make_world(cfg: WorldConfig, seed: int, dynamic_count: int = 0) -> WorldModel:
    """Warehouse-style world: ground plane + 4 walls + dynamic clusters.

    Static features depend only on (cfg, seed); cluster k depends only on
    (cfg, seed, k), so datasets with different dynamic counts share both the
    static world and the common clusters.
    """
    h = cfg.hall_half_size
    zg = -cfg.flight_height
    zt = cfg.wall_top
    facets = [
        # ground at z = -flight_height: normal down so n.p = d > 0
        PlanarFacet(
            Plane([0, 0, -1], cfg.flight_height, plane_id=0, frame="world"),
            np.array([0.0, 0.0, zg]),
            np.array([h, 0.0, 0.0]),
            np.array([0.0, h, 0.0]),
        ),
        PlanarFacet(
            Plane([1, 0, 0], h, plane_id=1, frame="world"),
            np.array([h, 0.0, (zg + zt) / 2]),
            np.array([0.0, h, 0.0]),
            np.array([0.0, 0.0, (zt - zg) / 2]),
        ),
        PlanarFacet(
            Plane([-1, 0, 0], h, plane_id=2, frame="world"),
            np.array([-h, 0.0, (zg + zt) / 2]),
            np.array([0.0, h, 0.0]),
            np.array([0.0, 0.0, (zt - zg) / 2]),
        ),
        PlanarFacet(
            Plane([0, 1, 0], h, plane_id=3, frame="world"),
            np.array([0.0, h, (zg + zt) / 2]),
            np.array([h, 0.0, 0.0]),
            np.array([0.0, 0.0, (zt - zg) / 2]),
        ),
        PlanarFacet(
            Plane([0, -1, 0], h, plane_id=4, frame="world"),
            np.array([0.0, -h, (zg + zt) / 2]),
            np.array([h, 0.0, 0.0]),
            np.array([0.0, 0.0, (zt - zg) / 2]),
        ),
    ]
    pts = []
    pids = []
    for f in facets:
        rng = stream_rng("static", seed, f.plane.plane_id)
        uv = rng.uniform(-1.0, 1.0, size=(cfg.features_per_plane, 2))
        p = f.center + uv[:, :1] * f.axis_u + uv[:, 1:] * f.axis_v
        pts.append(p)
        pids.append(np.full(cfg.features_per_plane, f.plane.plane_id))
    static_points = np.vstack(pts)
    static_plane_ids = np.concatenate(pids)

    clusters = []
    for k in range(dynamic_count):
        rng = stream_rng("cluster", seed, k)
        radius = rng.uniform(*cfg.cluster_radius_range)
        angle = rng.uniform(0, 2 * np.pi)
        base_center = np.array(
            [radius * np.cos(angle), radius * np.sin(angle), zg + 0.9]
        )
        body = rng.uniform(
            [-0.4, -0.4, -0.9], [0.4, 0.4, 0.9], size=(cfg.cluster_features, 3)
        )
        sway = rng.normal(size=2)
        sway = sway / np.linalg.norm(sway)
        sway2 = np.array([-sway[1], sway[0]])
        f1 = float(rng.uniform(*cfg.sway_frequency_range))
        clusters.append(
            DynamicCluster(
                cluster_id=k,
                base_points=base_center + body,
                sway_dir=np.array([sway[0], sway[1], 0.0]),
                sway_amplitude=cfg.sway_amplitude,
                sway_frequency=f1,
                sway_dir2=np.array([sway2[0], sway2[1], 0.0]),
                sway_amplitude2=0.8 * cfg.sway_amplitude,
                sway_frequency2=f1 * float(rng.uniform(1.35, 1.75)),
                bob_amplitude=cfg.bob_amplitude,
                phase=float(rng.uniform(0, 2 * np.pi)),
                phase2=float(rng.uniform(0, 2 * np.pi)),
            )
        )
    return WorldModel(facets, static_points, static_plane_ids, clusters)


# ---------------------------------------------------------------------------
# rendering


@dataclass
class RenderConfig:
    pixel_noise: float = 1.0  # px
    dropout: float = 0.02  # per-observation probability
    erosion_margin: float = 0.015  # normalized units around dynamic hulls
    mask_leak_prob: float = 0.01  # per dynamic feature, whole sequence


@dataclass
class Observation:
    feature_id: int
    plane_id: int
    point: np.ndarray


@dataclass
class SequenceFrame:
    index: int
    timestamp: float
    observations: list
    pose: RigidTransform  # ground-truth body pose (world from body)


def _project(points, T_WC: RigidTransform, cam: CameraConfig):
    """Normalized coords and validity for world points in a camera pose."""
    R = T_WC.rotation.to_matrix()
    pc = (points - T_WC.translation) @ R
    with np.errstate(divide="ignore", invalid="ignore"):
        xy = pc[:, :2] / pc[:, 2:3]
    ok = (
        (pc[:, 2] > 0.1)
        & (np.abs(xy[:, 0]) <= cam.x_limit)
        & (np.abs(xy[:, 1]) <= cam.y_limit)
    )
    return xy, ok


def _cross2(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _convex_hull(pts):
    """Andrew monotone chain; pts (N,2) -> hull vertices CCW."""
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    if len(pts) <= 2:
        return pts

    def half(points):
        out = []
        for p in points:
            while len(out) >= 2 and _cross2(out[-1] - out[-2], p - out[-2]) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def _dist_to_hull(query, hull):
    """Distance of query points (M,2) to a convex polygon; 0 inside."""
    if len(hull) == 0:
        return np.full(len(query), np.inf)
    if len(hull) < 3:
        a = hull[0]
        b = hull[-1]
        ab = b - a
        denom = max(float(ab @ ab), 1e-300)
        t = np.clip(((query - a) @ ab) / denom, 0, 1)
        proj = a + t[:, None] * ab
        return np.linalg.norm(query - proj, axis=1)
    m = len(hull)
    inside = np.ones(len(query), bool)
    dmin = np.full(len(query), np.inf)
    for i in range(m):
        a = hull[i]
        b = hull[(i + 1) % m]
        ab = b - a
        cross = _cross2(ab[None, :], query - a)
        inside &= cross >= 0
        denom = max(float(ab @ ab), 1e-300)
        t = np.clip(((query - a) @ ab) / denom, 0, 1)
        proj = a + t[:, None] * ab
        dmin = np.minimum(dmin, np.linalg.norm(query - proj, axis=1))
    return np.where(inside, 0.0, dmin)


def _background_plane_id(world: WorldModel, cam_pos, target):
    """Plane first hit by the ray cam->target beyond the target; the id a
    leaked (mis-masked) dynamic feature would inherit."""
    direction = target - cam_pos
    dist = np.linalg.norm(direction)
    direction = direction / dist
    best = None
    best_s = np.inf
    for f in world.facets:
        n = f.plane.normal
        denom = float(n @ direction)
        if abs(denom) < 1e-9:
            continue
        s = (f.plane.distance - float(n @ cam_pos)) / denom
        if s > dist and s < best_s:
            best_s = s
            best = f.plane.plane_id
    return best if best is not None else 0


def render_frame(
    world: WorldModel,
    pose: RigidTransform,
    cam: CameraConfig,
    t: float,
    render_cfg: RenderConfig | None = None,
    noise_seed: int = 0,
    frame_index: int = 0,
    leak_table: dict | None = None,
) -> SequenceFrame:
    """Project visible static (plane-tagged) and dynamic features at time t.

    Static noise/dropout streams are keyed per frame independently of the
    dynamic content; dynamic streams are keyed per cluster, so adding
    clusters never changes existing observations.
    """
    rc = render_cfg or RenderConfig()
    T_WC = pose * cam.t_bc
    obs = []

    xy, ok = _project(world.static_points, T_WC, cam)
    rng = stream_rng("render-static", noise_seed, frame_index)
    noise = rng.normal(size=xy.shape) * (rc.pixel_noise / cam.fx)
    keep = rng.uniform(size=len(xy)) >= rc.dropout
    static_valid = ok & keep

    # erosion emulation around projected dynamic cluster hulls
    if world.clusters and rc.erosion_margin > 0 and static_valid.any():
        query = xy[static_valid]
        drop = np.zeros(len(query), bool)
        for cluster in world.clusters:
            cxy, cok = _project(cluster.points(t), T_WC, cam)
            if cok.sum() < 3:
                continue
            hull = _convex_hull(cxy[cok])
            drop |= _dist_to_hull(query, hull) < rc.erosion_margin
        valid_idx = np.flatnonzero(static_valid)
        static_valid[valid_idx[drop]] = False

    for i in np.flatnonzero(static_valid):
        obs.append(
            Observation(int(i), int(world.static_plane_ids[i]), xy[i] + noise[i])
        )

    for cluster in world.clusters:
        pts = cluster.points(t)
        cxy, cok = _project(pts, T_WC, cam)
        crng = stream_rng("render-dyn", noise_seed, cluster.cluster_id, frame_index)
        cnoise = crng.normal(size=cxy.shape) * (rc.pixel_noise / cam.fx)
        ckeep = crng.uniform(size=len(cxy)) >= rc.dropout
        center = cluster.center(t)
        for j in np.flatnonzero(cok & ckeep):
            fid = 1_000_000 + cluster.cluster_id * 1000 + int(j)
            pid = -1
            if leak_table and leak_table.get(fid, False):
                pid = _background_plane_id(world, T_WC.translation, pts[j])
            obs.append(Observation(fid, pid, cxy[j] + cnoise[j]))

    return SequenceFrame(frame_index, float(t), obs, pose)


def build_leak_table(world: WorldModel, seed: int, leak_prob: float) -> dict:
    """Per-sequence persistent mask-leak flags for dynamic features."""
    table = {}
    for cluster in world.clusters:
        rng = stream_rng("leak", seed, cluster.cluster_id)
        draws = rng.uniform(size=len(cluster.base_points))
        for j, u in enumerate(draws):
            fid = 1_000_000 + cluster.cluster_id * 1000 + j
            table[fid] = bool(u < leak_prob)
    return table


# ---------------------------------------------------------------------------
# dataset on disk


@dataclass
class SequenceConfig:
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    camera: CameraConfig = field(default_factory=CameraConfig)
    world: WorldConfig = field(default_factory=WorldConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    noise: ImuNoiseParams = field(default_factory=ImuNoiseParams)
    gyro_bias: tuple = (0.002, -0.0015, 0.001)
    accel_bias: tuple = (0.02, -0.015, 0.01)
    dynamic_count: int = 0
    seed: int = 0


def generate_sequence(cfg: SequenceConfig, out_dir: str) -> dict:
    """Write a full dataset directory; returns a summary dict.

    Layout: imu.csv, frames/NNNNNN.csv, groundtruth.txt (TUM),
    calib.txt, meta.txt.
    """
    if cfg.dynamic_count < 0:
        raise ValueError("dynamic count must be >= 0")
    os.makedirs(os.path.join(out_dir, "frames"), exist_ok=True)
    traj = generate_trajectory(cfg.trajectory)
    world = make_world(cfg.world, cfg.seed, cfg.dynamic_count)
    leak_table = build_leak_table(world, cfg.seed, cfg.render.mask_leak_prob)

    bias = ImuBias(np.array(cfg.gyro_bias), np.array(cfg.accel_bias))
    samples = synthesize_imu(traj, cfg.noise, bias, cfg.trajectory.imu_rate, cfg.seed)
    with open(os.path.join(out_dir, "imu.csv"), "w") as f:
        f.write("t,gx,gy,gz,ax,ay,az\n")
        for s in samples:
            f.write(
                "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n"
                % (s.timestamp, *s.gyro, *s.accel)
            )

    n_frames = int(round(cfg.trajectory.duration * cfg.trajectory.camera_rate)) + 1
    obs_count = 0
    with open(os.path.join(out_dir, "groundtruth.txt"), "w") as gt:
        gt.write("# t tx ty tz qx qy qz qw\n")
        for k in range(n_frames):
            t = k / cfg.trajectory.camera_rate
            pose = traj.pose(t)
            frame = render_frame(
                world, pose, cfg.camera, t, cfg.render, cfg.seed, k, leak_table
            )
            obs_count += len(frame.observations)
            with open(os.path.join(out_dir, "frames", "%06d.csv" % k), "w") as f:
                f.write("feature_id,plane_id,x,y\n")
                for o in frame.observations:
                    f.write(
                        "%d,%d,%.9g,%.9g\n"
                        % (o.feature_id, o.plane_id, o.point[0], o.point[1])
                    )
            q = pose.rotation.q
            gt.write(
                "%.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n"
                % (t, *pose.translation, q[1], q[2], q[3], q[0])
            )

    cam = cfg.camera
    tq = cam.t_bc.rotation.q
    with open(os.path.join(out_dir, "calib.txt"), "w") as f:
        f.write("fx=%.9g\nfy=%.9g\ncx=%.9g\ncy=%.9g\n" % (cam.fx, cam.fy, cam.cx, cam.cy))
        f.write("width=%d\nheight=%d\n" % (cam.width, cam.height))
        f.write(
            "t_bc=%.9g %.9g %.9g %.9g %.9g %.9g %.9g\n"
            % (*cam.t_bc.translation, tq[1], tq[2], tq[3], tq[0])
        )
        f.write("gravity=%.9g\n" % GRAVITY_MAGNITUDE)

    with open(os.path.join(out_dir, "meta.txt"), "w") as f:
        f.write("seed=%d\n" % cfg.seed)
        f.write("dynamic_count=%d\n" % cfg.dynamic_count)
        f.write("camera_rate=%.9g\n" % cfg.trajectory.camera_rate)
        f.write("imu_rate=%.9g\n" % cfg.trajectory.imu_rate)
        f.write("duration=%.9g\n" % cfg.trajectory.duration)
        f.write("pixel_noise=%.9g\n" % cfg.render.pixel_noise)
        f.write("dropout=%.9g\n" % cfg.render.dropout)
        f.write("erosion_margin=%.9g\n" % cfg.render.erosion_margin)
        f.write("mask_leak_prob=%.9g\n" % cfg.render.mask_leak_prob)
        f.write("gyro_noise=%.9g\naccel_noise=%.9g\n" % (cfg.noise.gyro_noise, cfg.noise.accel_noise))
        f.write("gyro_walk=%.9g\naccel_walk=%.9g\n" % (cfg.noise.gyro_walk, cfg.noise.accel_walk))
        f.write("gyro_bias=%.9g %.9g %.9g\n" % tuple(cfg.gyro_bias))
        f.write("accel_bias=%.9g %.9g %.9g\n" % tuple(cfg.accel_bias))

    return {
        "frames": n_frames,
        "imu_samples": len(samples),
        "observations": obs_count,
        "dynamic_count": cfg.dynamic_count,
        "path_length": traj.path_length(),
    }


def noiseless_config(**overrides) -> SequenceConfig:
    """Sequence config with all sensor noise and track imperfections off."""
    cfg = SequenceConfig(
        render=RenderConfig(pixel_noise=0.0, dropout=0.0, erosion_margin=0.015, mask_leak_prob=0.0),
        noise=ImuNoiseParams(0.0, 0.0, 0.0, 0.0),
        gyro_bias=(0.0, 0.0, 0.0),
        accel_bias=(0.0, 0.0, 0.0),
    )
    return replace(cfg, **overrides)
