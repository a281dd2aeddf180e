"""
Image-quality analysis
PSF profiles through a reconstruction, Gaussian fits, FWHM, MTF and the
central-artefact metrics used to compare shifted and unshifted scans.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy import ndimage
from scipy.optimize import least_squares

from utils.errors import DomainError, FitError
from utils.validators import validate_axis

from .recon import VoxelVolume

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))

AXIS_NAMES = ("x", "y", "z")

# damped least squares limits
FIT_MAX_ITERATIONS = 200
FIT_XTOL = 1e-10
MIN_FIT_SAMPLES = 5

# profile tails are zeroed this many FWHM beyond the half-maximum points before the MTF
DEFAULT_MTF_CUT_WIDTH = 2.0


@dataclass(eq=False)
class ProfileCurve:
    positions: np.ndarray
    counts: np.ndarray
    axis: str = "x"

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.counts = np.asarray(self.counts, dtype=np.float64)
        if self.positions.shape != self.counts.shape or self.positions.ndim != 1:
            raise DomainError("profile positions and counts must be 1D arrays of equal length")
        if len(self.positions) > 1 and np.any(np.diff(self.positions) <= 0):
            raise DomainError("profile positions must be strictly increasing")

    @property
    def spacing(self) -> float:
        if len(self.positions) < 2:
            return 1.0
        return float(self.positions[1] - self.positions[0])


@dataclass(frozen=True)
class GaussianFit:
    amplitude: float
    mean: float
    sigma: float
    baseline: float
    rmse: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError(f"fit sigma must be > 0, got {self.sigma}")
        if not self.rmse >= 0:
            raise DomainError(f"fit rmse must be >= 0, got {self.rmse}")

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return _gaussian(np.array([self.amplitude, self.mean, self.sigma, self.baseline]), np.asarray(x))

    def to_dict(self) -> Dict[str, float]:
        return {
            "amplitude": self.amplitude,
            "mean_mm": self.mean,
            "sigma_mm": self.sigma,
            "baseline": self.baseline,
            "rmse": self.rmse,
        }


@dataclass(eq=False)
class MtfCurve:
    frequencies: np.ndarray
    magnitude: np.ndarray


@dataclass(eq=False)
class AxisAnalysis:
    """Everything measured along one axis of a point-source reconstruction"""

    profile: ProfileCurve
    fit: GaussianFit
    fwhm_mm: float
    mtf: MtfCurve
    fit_mtf: Optional[MtfCurve] = None

    @property
    def high_band_mtf(self) -> float:
        return high_band_mtf(self.mtf)


@dataclass(eq=False)
class AnalysisReport:
    axes: Dict[str, AxisAnalysis] = field(default_factory=dict)
    plan_fingerprint: str = ""
    profiles: Dict[str, ProfileCurve] = field(default_factory=dict)
    failures: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "plan_fingerprint": self.plan_fingerprint,
            "fit_failures": self.failures,
            "axes": {
                name: {
                    "fwhm_mm": entry.fwhm_mm,
                    "fit": entry.fit.to_dict(),
                    "high_band_mtf": entry.high_band_mtf,
                }
                for name, entry in self.axes.items()
            },
        }


def _gaussian(params: np.ndarray, x: np.ndarray) -> np.ndarray:
    A, mu, sigma, a = params
    return a + A * np.exp(-((x - mu) ** 2) / (2.0 * sigma ** 2))


def extract_profile(volume: VoxelVolume, axis: str) -> ProfileCurve:
    """
    Line of values through the volume maximum along one axis.

    The maximum is searched over the whole volume, not only the central slice;
    for a point source at the cube centre both choices give the same line, and
    an off-centre source still gets a profile through its own peak.
    """
    ax = validate_axis(axis)
    if not volume.max > 0:
        raise DomainError("cannot extract a profile from an all-zero volume")
    peak = list(volume.argmax_index())
    peak[ax] = slice(None)
    return ProfileCurve(volume.grid.axis_centers(ax), volume.values[tuple(peak)].copy(), AXIS_NAMES[ax])


def _initial_params(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    lo, hi = float(y.min()), float(y.max())
    weights = y - lo
    total = weights.sum()
    centroid = float((weights * x).sum() / total)
    sigma = math.sqrt(float((weights * (x - centroid) ** 2).sum() / total))
    spacing = float(np.min(np.diff(x)))
    return np.array([hi - lo, float(x[np.argmax(y)]), max(sigma, spacing), lo])


def fit_gaussian(profile: ProfileCurve) -> GaussianFit:
    """
    Least-squares fit of baseline + A * exp(-(x - mu)^2 / (2 sigma^2)).

    Uses Levenberg-Marquardt started from the profile moments. Raises FitError
    (carrying the last parameters) for degenerate profiles or when the solver
    does not converge within the iteration cap.
    """
    x, y = profile.positions, profile.counts
    if len(x) < MIN_FIT_SAMPLES:
        raise FitError(f"profile has {len(x)} samples, at least {MIN_FIT_SAMPLES} are needed")
    if not np.all(np.isfinite(y)):
        raise FitError("profile contains non-finite counts")
    if not y.max() > y.min():
        raise FitError("profile has no dynamic range", {"baseline": float(y.min())})

    p0 = _initial_params(x, y)
    res = least_squares(
        lambda p: _gaussian(p, x) - y,
        p0,
        method="lm",
        xtol=FIT_XTOL,
        max_nfev=FIT_MAX_ITERATIONS * (len(p0) + 1),
    )
    A, mu, sigma, a = (float(v) for v in res.x)
    best = {"amplitude": A, "mean_mm": mu, "sigma_mm": abs(sigma), "baseline": a}
    if not res.success:
        raise FitError(f"Gaussian fit did not converge: {res.message}", best)
    if not np.all(np.isfinite(res.x)) or sigma == 0:
        raise FitError("Gaussian fit collapsed", best)

    rmse = float(np.sqrt(np.mean(res.fun ** 2)))
    return GaussianFit(amplitude=A, mean=mu, sigma=abs(sigma), baseline=a, rmse=rmse)


def fwhm(fit: GaussianFit) -> float:
    return FWHM_PER_SIGMA * fit.sigma


def half_max_width(profile: ProfileCurve, baseline: Optional[float] = None) -> float:
    """
    Full width at half maximum read straight off the samples.

    Walks out from the maximum to the first samples below half height and
    interpolates linearly between neighbours; needs no fit.
    """
    y = profile.counts
    x = profile.positions
    base = float(y.min()) if baseline is None else float(baseline)
    peak = int(np.argmax(y))
    half = base + (float(y[peak]) - base) / 2.0
    if not y[peak] > half:
        raise DomainError("profile has no peak above its baseline")

    left = peak
    while left > 0 and y[left - 1] >= half:
        left -= 1
    right = peak
    while right < len(y) - 1 and y[right + 1] >= half:
        right += 1

    x_left = float(x[left])
    if left > 0:
        x_left -= (y[left] - half) / (y[left] - y[left - 1]) * (x[left] - x[left - 1])
    x_right = float(x[right])
    if right < len(y) - 1:
        x_right += (y[right] - half) / (y[right] - y[right + 1]) * (x[right + 1] - x[right])
    return max(x_right - x_left, profile.spacing)


def cut_tails(profile: ProfileCurve, center: float, width: float,
              cut_width: float = DEFAULT_MTF_CUT_WIDTH) -> ProfileCurve:
    """Profile with samples farther than (cut_width + 0.5) * width from center set to zero"""
    if cut_width <= 0:
        return profile
    reach = (cut_width + 0.5) * width
    counts = np.where(np.abs(profile.positions - center) <= reach, profile.counts, 0.0)
    return ProfileCurve(profile.positions, counts, profile.axis)


def line_spread(profile: ProfileCurve, baseline: float = 0.0) -> ProfileCurve:
    """Profile minus a baseline clamped to the profile minimum, so it stays non-negative"""
    floor = min(float(baseline), float(profile.counts.min())) if profile.counts.size else float(baseline)
    return ProfileCurve(profile.positions, profile.counts - floor, profile.axis)


def mtf(profile: ProfileCurve, baseline: float = 0.0) -> MtfCurve:
    """
    |DFT| of the baseline-subtracted profile, normalized at zero frequency.

    The subtracted baseline never exceeds the profile minimum, so the signal
    stays non-negative and every magnitude is at most 1.
    """
    signal = line_spread(profile, baseline).counts
    spectrum = np.abs(np.fft.rfft(signal))
    if not spectrum[0] > 0:
        raise DomainError("profile has zero energy; MTF is undefined")
    return MtfCurve(np.fft.rfftfreq(len(signal), d=profile.spacing), spectrum / spectrum[0])


def gaussian_mtf(fit: GaussianFit, frequencies: np.ndarray) -> MtfCurve:
    """Analytic MTF of the fitted Gaussian at the given frequencies"""
    f = np.asarray(frequencies, dtype=np.float64)
    return MtfCurve(f, np.exp(-2.0 * math.pi ** 2 * fit.sigma ** 2 * f ** 2))


def high_band_mtf(curve: MtfCurve) -> float:
    """Mean magnitude over the upper half of the frequency band"""
    f = curve.frequencies
    if len(f) < 2:
        raise DomainError("MTF curve has no frequency band")
    return float(curve.magnitude[f >= f[-1] / 2.0].mean())


def axis_mtf(profile: ProfileCurve, center: float, width: float, baseline: Optional[float] = None,
             cut_width: float = DEFAULT_MTF_CUT_WIDTH) -> MtfCurve:
    """MTF of the baseline-subtracted profile after its tails are cut around the peak"""
    base = float(profile.counts.min()) if baseline is None else baseline
    return mtf(cut_tails(line_spread(profile, base), center, width, cut_width))


def analyze_volume(volume: VoxelVolume, axes: Sequence[str] = ("x", "z"), crosscheck: bool = True,
                   plan_fingerprint: str = "", keep_going: bool = False,
                   cut_width: float = DEFAULT_MTF_CUT_WIDTH) -> AnalysisReport:
    """
    Profile, fit, FWHM and MTF along every requested axis.

    Profile tails farther than cut_width FWHM beyond the half-maximum points
    are zeroed before the MTF (0 keeps the whole profile). With keep_going, an
    axis whose fit fails is recorded in report.failures (message, best
    parameters and the high-band MTF measured around the sample half-maximum
    width) instead of raising.
    """
    report = AnalysisReport(plan_fingerprint=plan_fingerprint)
    for name in axes:
        profile = extract_profile(volume, name)
        report.profiles[profile.axis] = profile
        try:
            fit = fit_gaussian(profile)
        except FitError as e:
            if not keep_going:
                raise
            center = float(profile.positions[np.argmax(profile.counts)])
            try:
                band = high_band_mtf(axis_mtf(profile, center, half_max_width(profile), cut_width=cut_width))
            except DomainError:
                band = None
            report.failures[profile.axis] = {
                "error": str(e),
                "best_params": e.best_params,
                "high_band_mtf": band,
            }
            continue
        width = fwhm(fit)
        curve = axis_mtf(profile, fit.mean, max(width, profile.spacing), baseline=fit.baseline,
                         cut_width=cut_width)
        report.axes[profile.axis] = AxisAnalysis(
            profile=profile,
            fit=fit,
            fwhm_mm=width,
            mtf=curve,
            fit_mtf=gaussian_mtf(fit, curve.frequencies) if crosscheck else None,
        )
    return report


def central_axis_mask(dims: Sequence[int], radius_voxels: float) -> np.ndarray:
    """Voxels whose (x, y) index distance from the grid's z axis is at most the radius"""
    nx, ny, nz = dims
    ix = np.arange(nx) - (nx - 1) / 2.0
    iy = np.arange(ny) - (ny - 1) / 2.0
    disk = ix[:, None] ** 2 + iy[None, :] ** 2 <= radius_voxels ** 2
    return np.broadcast_to(disk[:, :, None], (nx, ny, nz))


def artefact_ratio(volume: VoxelVolume, truth: np.ndarray, radius_voxels: float = 3.0) -> float:
    """
    Mean background value in the central z-cylinder over the mean value inside the phantom.

    Lower is better: zero means the axis carries no intensity the phantom does not.
    """
    truth = np.asarray(truth, dtype=bool)
    if truth.shape != volume.values.shape:
        raise DomainError(f"truth shape {truth.shape} does not match volume {volume.values.shape}")
    if not truth.any():
        raise DomainError("ground truth is empty")
    background = central_axis_mask(truth.shape, radius_voxels) & ~truth
    if not background.any():
        raise DomainError("central cylinder holds no background voxels")
    inside = float(volume.values[truth].mean())
    if not inside > 0:
        raise DomainError("reconstruction is zero inside the phantom")
    return float(volume.values[background].mean()) / inside


def spurious_axial_components(mask: np.ndarray, truth: np.ndarray) -> List[int]:
    """Sizes of connected mask components that touch the central axis but miss the ground truth"""
    mask = np.asarray(mask, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if mask.shape != truth.shape:
        raise DomainError(f"mask shape {mask.shape} does not match truth {truth.shape}")
    labels, count = ndimage.label(mask)
    axis = central_axis_mask(mask.shape, 0.75)
    sizes = []
    for label in range(1, count + 1):
        component = labels == label
        if (component & axis).any() and not (component & truth).any():
            sizes.append(int(component.sum()))
    return sizes
