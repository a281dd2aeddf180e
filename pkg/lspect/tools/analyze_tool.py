"""
Analyze tool
PSF profile, Gaussian fit, FWHM and MTF of a reconstructed volume, plus the
central-artefact metrics against the voxelized phantom.
"""

import os
from typing import Any, Dict, List, Optional

from utils.errors import EXIT_FAILURE, DomainError, FingerprintMismatchError, LSpectError
from utils.responses import create_error_response, create_success_response

from ..analysis import (
    AnalysisReport,
    ProfileCurve,
    analyze_volume,
    artefact_ratio,
    spurious_axial_components,
)
from ..config import ExperimentConfig
from ..phantom import voxelize
from ..recon import VoxelVolume, threshold_half_max
from ..storage import read_volume, write_csv, write_json, write_manifest
from .reconstruct_tool import RECON_DIR, VOLUME_STEM

ANALYSIS_DIR = "analysis"


def _profile_rows(profile: ProfileCurve):
    return zip(profile.positions.tolist(), profile.counts.tolist())


def _write_report_files(stage_dir: str, cfg: Dict[str, Any], report: AnalysisReport) -> List[str]:
    files = []
    for name, profile in report.profiles.items():
        files.append(write_csv(os.path.join(stage_dir, cfg["profile_file"].format(axis=name)),
                               ["position_mm", "count"], _profile_rows(profile)))
    for name, entry in report.axes.items():
        files.append(write_json(os.path.join(stage_dir, cfg["fit_file"].format(axis=name)),
                                {**entry.fit.to_dict(), "fwhm_mm": entry.fwhm_mm}))
        files.append(write_csv(os.path.join(stage_dir, cfg["mtf_file"].format(axis=name)),
                               ["freq_cyc_per_mm", "magnitude"],
                               zip(entry.mtf.frequencies.tolist(), entry.mtf.magnitude.tolist())))
        if entry.fit_mtf is not None:
            files.append(write_csv(os.path.join(stage_dir, f"mtf_fit_{name}.csv"),
                                   ["freq_cyc_per_mm", "magnitude"],
                                   zip(entry.fit_mtf.frequencies.tolist(), entry.fit_mtf.magnitude.tolist())))
    return files


def _artefact_metrics(config: ExperimentConfig, volume: VoxelVolume) -> Optional[Dict[str, Any]]:
    truth = voxelize(config.phantom(), volume.grid.centers())
    try:
        ratio = artefact_ratio(volume, truth)
    except DomainError as e:
        print(f"⚠️  Artefact ratio not available: {e}")
        return None
    spurious = spurious_axial_components(threshold_half_max(volume), truth)
    return {"artefact_ratio": ratio, "spurious_axial_components": spurious}


def run_analyze_stage(config: ExperimentConfig, out_dir: str) -> Dict[str, Any]:
    plan = config.scan_plan()
    cfg = config.get_section("analysis")
    volume, meta = read_volume(os.path.join(out_dir, RECON_DIR, VOLUME_STEM))
    if meta.get("plan_fingerprint") != plan.fingerprint:
        raise FingerprintMismatchError(
            f"volume was reconstructed for plan {meta.get('plan_fingerprint')}, "
            f"the configured plan is {plan.fingerprint}"
        )

    report = analyze_volume(volume, cfg["axes"], crosscheck=cfg["mtf_fit_crosscheck"],
                            plan_fingerprint=plan.fingerprint, keep_going=True,
                            cut_width=cfg["mtf_cut_width"])
    for name, failure in report.failures.items():
        print(f"⚠️  Gaussian fit along {name} failed: {failure['error']}")
    for name, entry in report.axes.items():
        print(f"📊 {name}: FWHM {entry.fwhm_mm:.3f} mm, high-band MTF {entry.high_band_mtf:.4f}")

    stage_dir = os.path.join(out_dir, ANALYSIS_DIR)
    os.makedirs(stage_dir, exist_ok=True)
    summary = report.to_dict()
    summary["artefacts"] = _artefact_metrics(config, volume)

    files = _write_report_files(stage_dir, cfg, report)
    files.append(write_json(os.path.join(stage_dir, "report.json"), summary))
    files = [os.path.basename(f) for f in files]
    write_manifest(stage_dir, "analyze", config.manifest_echo(), config.seed, plan.fingerprint, files)
    return {**summary, "files": files, "directory": stage_dir}


def analyze_tool(config: ExperimentConfig):
    """Create analyze tool function"""

    def analyze(out_dir: str) -> str:
        """Analyze the reconstructed volume stored under out_dir."""
        try:
            return create_success_response(run_analyze_stage(config, out_dir))
        except LSpectError as e:
            return create_error_response("Analysis failed", str(e), exit_code=e.exit_code)
        except Exception as e:
            return create_error_response("Analysis failed", str(e), exit_code=EXIT_FAILURE)

    return analyze
