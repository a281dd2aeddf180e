"""
MPRD L-SPECT geometry
Closed-form design equations for the pinhole plate, the modular partial ring
and the per-view module poses consumed by the projector and the reconstructor.

All public angles are in degrees; internal trigonometry is in radians.
Lab frame: z is the rotation axis, the object centre is the origin.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from utils.errors import DomainError
from utils.fingerprint import fingerprint
from utils.validators import (
    validate_non_negative,
    validate_positive,
    validate_positive_int,
)

Vec3 = Tuple[float, float, float]

# slack for angles that are computed rather than typed in
_ANGLE_EPS = 1e-9


def coverage_angle(N: int, P: float, g: float) -> float:
    """Total view angle covered by N modules of width P at gap g"""
    validate_positive_int(N, "num_modules N")
    validate_non_negative(P, "module width P")
    validate_positive(g, "object gap g")
    return math.degrees(2.0 * N * math.atan(P / (2.0 * g)))


def num_view_angles(phi: float) -> int:
    """Number of scan positions needed for a full turn, rounded up"""
    phi = float(phi)
    if not math.isfinite(phi) or phi <= 0:
        raise DomainError(f"coverage angle must be > 0 degrees, got {phi}")
    if phi > 360.0 + _ANGLE_EPS:
        raise DomainError(f"coverage angle must be <= 360 degrees, got {phi}")
    return max(1, math.ceil(360.0 / phi - _ANGLE_EPS))


def pinhole_detector_gap(L: float, t: float, d: float) -> float:
    """Plate-to-detector gap at which adjacent pinhole projections just touch"""
    validate_positive(L, "pinhole pitch L")
    validate_positive(t, "plate thickness t")
    validate_positive(d, "pinhole diameter d")
    return L * t / (2.0 * d)


def pinhole_fov(d: float, t: float) -> float:
    """Full acceptance angle of one pinhole"""
    validate_non_negative(d, "pinhole diameter d")
    validate_positive(t, "plate thickness t")
    return math.degrees(2.0 * math.atan(d / t))


def module_step_angle(P: float, g: float) -> float:
    """Angular spacing between adjacent modules on the ring"""
    validate_non_negative(P, "module width P")
    validate_positive(g, "object gap g")
    return math.degrees(2.0 * math.atan(P / (2.0 * g)))


def pinhole_footprint_halfwidth(h: float, d: float, t: float) -> float:
    """Half-width of the detector region a pinhole's FOV cone reaches from its centre"""
    validate_non_negative(h, "detector gap h")
    validate_non_negative(d, "pinhole diameter d")
    validate_positive(t, "plate thickness t")
    return h * d / t


@dataclass(frozen=True)
class PinholeArraySpec:
    """Square pinhole lattice on one plate"""

    pitch_L: float
    diameter_d: float
    plate_thickness_t: float = 1.0
    plate_height: float = 49.152

    def __post_init__(self):
        validate_positive(self.diameter_d, "pinhole diameter d")
        validate_positive(self.plate_thickness_t, "plate thickness t")
        validate_positive(self.plate_height, "plate height")
        if not self.pitch_L > self.diameter_d:
            raise DomainError(
                f"pinhole pitch L ({self.pitch_L}) must exceed pinhole diameter d ({self.diameter_d})"
            )
        if self.num_rows < 1:
            raise DomainError(
                f"plate height {self.plate_height} mm holds no pinhole row at pitch {self.pitch_L} mm"
            )

    @property
    def num_rows(self) -> int:
        return int(math.floor(self.plate_height / self.pitch_L + _ANGLE_EPS))

    @property
    def fov_deg(self) -> float:
        return pinhole_fov(self.diameter_d, self.plate_thickness_t)

    @property
    def tan_half_fov(self) -> float:
        # tan(atan(d/t))
        return self.diameter_d / self.plate_thickness_t

    @property
    def min_gap(self) -> float:
        return pinhole_detector_gap(self.pitch_L, self.plate_thickness_t, self.diameter_d)


@dataclass(frozen=True)
class ModuleSpec:
    """One pinhole plate plus the detector strip behind it"""

    width_multiplier_m: int
    pinhole_array: PinholeArraySpec
    detector_gap_h: Optional[float] = None
    sensor_pitch: float = 0.048
    binning: int = 1

    def __post_init__(self):
        validate_positive_int(self.width_multiplier_m, "module width multiplier m")
        validate_positive(self.sensor_pitch, "sensor pitch")
        validate_positive_int(self.binning, "binning")

        bound = self.pinhole_array.min_gap
        if self.detector_gap_h is None:
            object.__setattr__(self, "detector_gap_h", bound)
        validate_positive(self.detector_gap_h, "detector gap h")
        if self.detector_gap_h > bound * (1.0 + 1e-9):
            raise DomainError(
                f"detector gap h={self.detector_gap_h} mm exceeds L*t/(2d)={bound} mm; "
                "adjacent pinhole projections would overlap"
            )
        if self.detector_cols < 1 or self.detector_rows < 1:
            raise DomainError(
                f"pixel pitch {self.pixel_pitch} mm leaves no detector pixel on a {self.width_P} mm module"
            )

    @property
    def width_P(self) -> float:
        return self.width_multiplier_m * self.pinhole_array.pitch_L

    @property
    def pixel_pitch(self) -> float:
        return self.sensor_pitch * self.binning

    @property
    def detector_cols(self) -> int:
        return int(round(self.width_P / self.pixel_pitch))

    @property
    def detector_rows(self) -> int:
        return int(round(self.pinhole_array.plate_height / self.pixel_pitch))

    @property
    def pinholes_per_module(self) -> int:
        return self.width_multiplier_m * self.pinhole_array.num_rows

    def pinhole_offsets(self) -> np.ndarray:
        """Pinhole centres (u, v) in the plate frame, row-major over (row, column)"""
        L = self.pinhole_array.pitch_L
        m = self.width_multiplier_m
        rows = self.pinhole_array.num_rows
        u = (np.arange(m) - (m - 1) / 2.0) * L
        v = (np.arange(rows) - (rows - 1) / 2.0) * L
        vv, uu = np.meshgrid(v, u, indexing="ij")
        return np.stack([uu.ravel(), vv.ravel()], axis=1)

    def pixel_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        """Detector pixel centre coordinates: (u per column, v per row)"""
        pp = self.pixel_pitch
        u = (np.arange(self.detector_cols) + 0.5) * pp - self.detector_cols * pp / 2.0
        v = (np.arange(self.detector_rows) + 0.5) * pp - self.detector_rows * pp / 2.0
        return u, v

    def to_dict(self) -> Dict[str, Any]:
        return {
            "width_multiplier_m": self.width_multiplier_m,
            "pitch_L": self.pinhole_array.pitch_L,
            "diameter_d": self.pinhole_array.diameter_d,
            "plate_thickness_t": self.pinhole_array.plate_thickness_t,
            "plate_height": self.pinhole_array.plate_height,
            "detector_gap_h": self.detector_gap_h,
            "sensor_pitch": self.sensor_pitch,
            "binning": self.binning,
        }


@dataclass(frozen=True)
class RingSpec:
    """Arrangement of N modules around the (possibly shifted) scanning centre"""

    num_modules_N: int
    object_gap_g: float
    center_shift_s: float = 0.0

    def __post_init__(self):
        validate_positive_int(self.num_modules_N, "num_modules N")
        validate_positive(self.object_gap_g, "object gap g")
        validate_non_negative(self.center_shift_s, "center shift s")
        if self.center_shift_s >= self.object_gap_g:
            raise DomainError(
                f"center shift s={self.center_shift_s} mm must be smaller than object gap g={self.object_gap_g} mm"
            )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "num_modules_N": self.num_modules_N,
            "object_gap_g": self.object_gap_g,
            "center_shift_s": self.center_shift_s,
        }


@dataclass(frozen=True)
class ModulePose:
    """Placement of one pinhole plate for one view"""

    view_index: int
    module_index: int
    pinhole_plate_origin: Vec3
    plate_normal: Vec3
    plate_up: Vec3

    @property
    def origin(self) -> np.ndarray:
        return np.asarray(self.pinhole_plate_origin, dtype=np.float64)

    @property
    def normal(self) -> np.ndarray:
        return np.asarray(self.plate_normal, dtype=np.float64)

    @property
    def up(self) -> np.ndarray:
        return np.asarray(self.plate_up, dtype=np.float64)

    @property
    def tangent(self) -> np.ndarray:
        # (tangent, up, normal) is right-handed
        return np.cross(self.up, self.normal)

    def basis(self) -> np.ndarray:
        """Rows are the tangent, up and normal unit vectors"""
        return np.stack([self.tangent, self.up, self.normal])

    def to_local(self, points: np.ndarray) -> np.ndarray:
        """Lab points (..., 3) to plate coordinates (u, v, w); w > 0 faces the object"""
        return (np.asarray(points, dtype=np.float64) - self.origin) @ self.basis().T

    def to_lab(self, local: np.ndarray) -> np.ndarray:
        """Plate coordinates (..., 3) back to lab points"""
        return np.asarray(local, dtype=np.float64) @ self.basis() + self.origin

    def to_dict(self) -> Dict[str, Any]:
        return {
            "view_index": self.view_index,
            "module_index": self.module_index,
            "pinhole_plate_origin": list(self.pinhole_plate_origin),
            "plate_normal": list(self.plate_normal),
            "plate_up": list(self.plate_up),
        }


class ShiftPolicy(str, Enum):
    NONE = "none"
    FIXED_OFFSET = "fixed_offset"


@dataclass(frozen=True)
class ScanPlan:
    """All view angles and module poses of one acquisition"""

    ring: RingSpec
    module: ModuleSpec
    view_angles: Tuple[float, ...]
    poses: Tuple[ModulePose, ...]
    shift_policy: ShiftPolicy
    scan_centers: Tuple[Vec3, ...] = field(default=())

    @property
    def num_views(self) -> int:
        return len(self.view_angles)

    @property
    def num_modules(self) -> int:
        return self.ring.num_modules_N

    @property
    def coverage_deg(self) -> float:
        return coverage_angle(self.ring.num_modules_N, self.module.width_P, self.ring.object_gap_g)

    @property
    def step_deg(self) -> float:
        return module_step_angle(self.module.width_P, self.ring.object_gap_g)

    def poses_for_view(self, view_index: int) -> Tuple[ModulePose, ...]:
        if not 0 <= view_index < self.num_views:
            raise DomainError(f"view index {view_index} out of range [0, {self.num_views})")
        N = self.num_modules
        return self.poses[view_index * N:(view_index + 1) * N]

    def pinhole_centers(self, view_index: int) -> np.ndarray:
        """Lab-frame pinhole centres for a view, shape (N, pinholes_per_module, 3)"""
        offsets = self.module.pinhole_offsets()
        local = np.column_stack([offsets, np.zeros(len(offsets))])
        return np.stack([pose.to_lab(local) for pose in self.poses_for_view(view_index)])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "ring": self.ring.to_dict(),
            "module": self.module.to_dict(),
            "view_angles": [round(a, 12) for a in self.view_angles],
            "shift_policy": self.shift_policy.value,
        }

    @cached_property
    def fingerprint(self) -> str:
        return fingerprint(self.to_dict())


def _check_footprints(N: int, P: float, g: float) -> float:
    """Reject rings whose module footprints would overlap; return the coverage angle"""
    phi = coverage_angle(N, P, g)
    if phi <= 0:
        raise DomainError("ring covers no angle")
    if phi > 360.0 + _ANGLE_EPS:
        raise DomainError(
            f"module footprints overlap: {N} modules of width {P} mm at gap {g} mm "
            f"cover {phi:.3f} degrees > 360"
        )
    return phi


def build_scan_plan(ring: RingSpec, module: ModuleSpec) -> ScanPlan:
    """
    Build view angles and module poses for a full scan.

    At view 0 the detector arc is centred on the -x direction and the scanning
    centre sits at (+s, 0, 0), so the modules are g - s from the object centre
    along the arc middle. View k rotates the whole arrangement by k * phi about z.
    """
    N = ring.num_modules_N
    g = ring.object_gap_g
    s = ring.center_shift_s
    P = module.width_P

    phi = _check_footprints(N, P, g)
    theta = math.radians(module_step_angle(P, g))
    n = num_view_angles(phi)
    policy = ShiftPolicy.FIXED_OFFSET if s > 0 else ShiftPolicy.NONE

    view_angles: List[float] = []
    centers: List[Vec3] = []
    poses: List[ModulePose] = []
    up = (0.0, 0.0, 1.0)
    for k in range(n):
        psi_deg = k * phi
        psi = math.radians(psi_deg)
        center = (s * math.cos(psi), s * math.sin(psi), 0.0)
        view_angles.append(psi_deg)
        centers.append(center)
        for j in range(N):
            a = psi + math.pi + (j - (N - 1) / 2.0) * theta
            radial = (math.cos(a), math.sin(a), 0.0)
            origin = tuple(c + g * r for c, r in zip(center, radial))
            normal = tuple(-r for r in radial)
            poses.append(ModulePose(k, j, origin, normal, up))

    return ScanPlan(
        ring=ring,
        module=module,
        view_angles=tuple(view_angles),
        poses=tuple(poses),
        shift_policy=policy,
        scan_centers=tuple(centers),
    )


def describe_plan(plan: ScanPlan) -> Dict[str, Any]:
    """Design figures for the plan table: phi, n, theta, h, alpha"""
    pinholes = plan.module.pinhole_array
    return {
        "coverage_phi_deg": plan.coverage_deg,
        "num_views_n": plan.num_views,
        "step_theta_deg": plan.step_deg,
        "detector_gap_h_mm": plan.module.detector_gap_h,
        "gap_bound_mm": pinholes.min_gap,
        "pinhole_fov_alpha_deg": pinholes.fov_deg,
        "num_modules_N": plan.num_modules,
        "module_width_P_mm": plan.module.width_P,
        "center_shift_s_mm": plan.ring.center_shift_s,
        "object_gap_g_mm": plan.ring.object_gap_g,
        "detector_pixels": [plan.module.detector_rows, plan.module.detector_cols],
        "pinholes_per_module": plan.module.pinholes_per_module,
        "shift_policy": plan.shift_policy.value,
        "plan_fingerprint": plan.fingerprint,
    }
