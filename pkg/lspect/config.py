"""
Experiment configuration
Loads, validates and writes the YAML experiment file that drives every stage.
"""

import copy
import os
from typing import Any, Dict, List, Optional, Tuple

import yaml

from utils.errors import ConfigError, DomainError

from .geometry import ModuleSpec, PinholeArraySpec, RingSpec, ScanPlan, build_scan_plan
from .phantom import PRESETS, Phantom, Shape, check_within
from .siddon import VoxelGrid

DEFAULT_CONFIG_PATH = os.path.join("config", "desk_scale.yaml")

WORKERS_ENV = "LSPECT_WORKERS"

# section -> key -> (kind, default); a default of None is resolved after validation
SCHEMA: Dict[str, Dict[str, Tuple[str, Any]]] = {
    "geometry": {
        "pinhole_pitch": ("float", 0.96),
        "pinhole_diameter": ("float", 0.192),
        "plate_thickness": ("float", 1.0),
        "plate_height": ("float", 49.152),
        "module_width_multiplier": ("int", 1),
        "detector_gap": ("float", None),
        "num_modules": ("int", 8),
        "object_gap": ("float", 25.0),
        "center_shift": ("float", 0.0),
        "sensor_pitch": ("float", 0.048),
        "binning": ("int", 1),
    },
    "phantom": {
        "emissions": ("int", 1_000_000),
        "seed": ("int", 2019),
        "preset": ("str", None),
        "shapes": ("shapes", None),
    },
    "recon": {
        "grid_dims": ("dims", [64, 64, 64]),
        "cube_extent": ("float", 32.0),
        "threshold_halfmax": ("bool", False),
        "slices": ("bool", True),
    },
    "analysis": {
        "axes": ("axes", ["x", "z"]),
        "profile_file": ("str", "profile_{axis}.csv"),
        "fit_file": ("str", "fit_{axis}.json"),
        "mtf_file": ("str", "mtf_{axis}.csv"),
        "mtf_fit_crosscheck": ("bool", True),
        "mtf_cut_width": ("float", 2.0),
    },
    "run": {
        "workers": ("int", None),
        "previews": ("bool", False),
    },
}

SHAPE_KEYS = {"kind", "center", "radius", "half_height", "activity"}

# CLI override name -> (section, key)
OVERRIDES = {
    "shift": ("geometry", "center_shift"),
    "pitch": ("geometry", "pinhole_pitch"),
    "gap": ("geometry", "object_gap"),
    "detector_gap": ("geometry", "detector_gap"),
    "multiplier": ("geometry", "module_width_multiplier"),
    "seed": ("phantom", "seed"),
    "workers": ("run", "workers"),
    "threshold_halfmax": ("recon", "threshold_halfmax"),
    "slices": ("recon", "slices"),
}


def _key_lines(node: Optional[yaml.Node], prefix: str = "", lines: Optional[Dict[str, int]] = None) -> Dict[str, int]:
    """1-based line of every mapping key, by dotted path"""
    lines = {} if lines is None else lines
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            path = f"{prefix}{key_node.value}"
            lines[path] = key_node.start_mark.line + 1
            _key_lines(value_node, path + ".", lines)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            path = f"{prefix.rstrip('.')}[{i}]"
            lines[path] = item.start_mark.line + 1
            _key_lines(item, path + ".", lines)
    return lines


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


class ExperimentConfig:
    """Validated experiment configuration with every default resolved"""

    def __init__(self, data: Optional[Dict[str, Any]] = None, source: Optional[str] = None,
                 lines: Optional[Dict[str, int]] = None):
        self.raw = copy.deepcopy(data or {})
        self.source = source
        self._lines = lines or {}
        self.defaults_applied: List[str] = []
        self.config = self._resolve()

    @staticmethod
    def load(config_path: str) -> "ExperimentConfig":
        """Load and validate an experiment file"""
        try:
            with open(config_path, "r", encoding="utf-8") as file:
                text = file.read()
        except FileNotFoundError:
            raise ConfigError(f"Experiment configuration file not found: {config_path}")

        try:
            data = yaml.safe_load(text)
            lines = _key_lines(yaml.compose(text))
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            line = mark.line + 1 if mark is not None else None
            raise ConfigError(f"Error parsing {config_path}: {getattr(e, 'problem', None) or e}", line)

        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"{config_path} must hold a mapping of sections", 1)
        return ExperimentConfig(data, source=config_path, lines=lines)

    def _fail(self, path: str, message: str) -> ConfigError:
        line = self._lines.get(path)
        while line is None and "." in path:
            path = path.rsplit(".", 1)[0]
            line = self._lines.get(path)
        return ConfigError(message, line)

    def _coerce(self, kind: str, value: Any, path: str) -> Any:
        if kind == "float":
            if not _is_number(value):
                raise self._fail(path, f"{path} must be a number, got {value!r}")
            return float(value)
        if kind == "int":
            if not _is_number(value) or int(value) != value:
                raise self._fail(path, f"{path} must be an integer, got {value!r}")
            return int(value)
        if kind == "bool":
            if not isinstance(value, bool):
                raise self._fail(path, f"{path} must be true or false, got {value!r}")
            return value
        if kind == "str":
            if not isinstance(value, str):
                raise self._fail(path, f"{path} must be a string, got {value!r}")
            return value
        if kind == "dims":
            if _is_number(value):
                value = [value] * 3
            if not isinstance(value, list) or len(value) != 3:
                raise self._fail(path, f"{path} must be an integer or a list of 3 integers, got {value!r}")
            return [self._coerce("int", v, path) for v in value]
        if kind == "axes":
            if isinstance(value, str):
                value = [value]
            if not isinstance(value, list) or not value:
                raise self._fail(path, f"{path} must be a non-empty list of axes")
            axes = [self._coerce("str", v, path).lower() for v in value]
            for axis in axes:
                if axis not in ("x", "y", "z"):
                    raise self._fail(path, f"Axis '{axis}' not found. Valid axes: x, y, z")
            return axes
        if kind == "shapes":
            if not isinstance(value, list) or not value:
                raise self._fail(path, f"{path} must be a non-empty list of shapes")
            return [self._coerce_shape(item, f"{path}[{i}]") for i, item in enumerate(value)]
        raise ValueError(f"unknown config kind {kind}")

    def _coerce_shape(self, item: Any, path: str) -> Dict[str, Any]:
        if not isinstance(item, dict):
            raise self._fail(path, f"{path} must be a mapping")
        unknown = set(item) - SHAPE_KEYS
        if unknown:
            raise self._fail(path, f"Unknown key(s) in {path}: {', '.join(sorted(unknown))}")
        for key in ("kind", "center", "radius"):
            if key not in item:
                raise self._fail(path, f"{path} is missing '{key}'")
        shape = {
            "kind": self._coerce("str", item["kind"], f"{path}.kind"),
            "center": item["center"],
            "radius": self._coerce("float", item["radius"], f"{path}.radius"),
        }
        if not isinstance(shape["center"], list) or len(shape["center"]) != 3:
            raise self._fail(f"{path}.center", f"{path}.center must be a list of 3 numbers")
        shape["center"] = [self._coerce("float", c, f"{path}.center") for c in shape["center"]]
        if "half_height" in item:
            shape["half_height"] = self._coerce("float", item["half_height"], f"{path}.half_height")
        if "activity" in item:
            shape["activity"] = self._coerce("float", item["activity"], f"{path}.activity")
        return shape

    def _resolve(self) -> Dict[str, Any]:
        unknown = set(self.raw) - set(SCHEMA)
        if unknown:
            name = sorted(unknown)[0]
            raise self._fail(name, f"Unknown section '{name}'. Valid sections: {', '.join(SCHEMA)}")

        resolved: Dict[str, Dict[str, Any]] = {}
        for section, keys in SCHEMA.items():
            given = self.raw.get(section)
            if given is None:
                given = {}
            if not isinstance(given, dict):
                raise self._fail(section, f"Section '{section}' must be a mapping")
            extra = set(given) - set(keys)
            if extra:
                name = sorted(extra)[0]
                raise self._fail(f"{section}.{name}", f"Unknown key '{section}.{name}'. Valid keys: {', '.join(keys)}")

            resolved[section] = {}
            for key, (kind, default) in keys.items():
                path = f"{section}.{key}"
                if key in given and given[key] is not None:
                    resolved[section][key] = self._coerce(kind, given[key], path)
                elif default is not None:
                    resolved[section][key] = copy.deepcopy(default)
                    self.defaults_applied.append(path)

        self._resolve_dynamic(resolved)
        self._validate(resolved)
        return resolved

    def _resolve_dynamic(self, resolved: Dict[str, Dict[str, Any]]) -> None:
        phantom = resolved["phantom"]
        if "preset" in phantom and "shapes" in phantom:
            raise self._fail("phantom", "phantom takes either 'preset' or 'shapes', not both")
        if "preset" not in phantom and "shapes" not in phantom:
            phantom["preset"] = "point_source"
            self.defaults_applied.append("phantom.preset")
        if "preset" in phantom and phantom["preset"] not in PRESETS:
            raise self._fail(
                "phantom.preset",
                f"Preset '{phantom['preset']}' not found. Valid presets: {', '.join(PRESETS)}",
            )

        run = resolved["run"]
        if "workers" not in run:
            env = os.getenv(WORKERS_ENV)
            try:
                run["workers"] = int(env) if env else 1
            except ValueError:
                raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}")
            self.defaults_applied.append("run.workers")

        geometry = resolved["geometry"]
        if "detector_gap" not in geometry:
            try:
                geometry["detector_gap"] = self._pinhole_array(geometry).min_gap
            except DomainError as e:
                raise self._fail("geometry", f"geometry: {e}")
            self.defaults_applied.append("geometry.detector_gap")

    def _validate(self, resolved: Dict[str, Dict[str, Any]]) -> None:
        for section, build in (
            ("geometry", lambda: build_scan_plan(self._ring(resolved["geometry"]), self._module(resolved["geometry"]))),
            ("phantom", lambda: self._phantom(resolved["phantom"])),
            ("recon", lambda: self._grid(resolved["recon"])),
        ):
            try:
                build()
            except DomainError as e:
                raise self._fail(section, f"{section}: {e}")

        if resolved["phantom"]["emissions"] < 0:
            raise self._fail("phantom.emissions", "phantom.emissions must be >= 0")
        if resolved["run"]["workers"] < 1:
            raise self._fail("run.workers", "run.workers must be >= 1")
        if resolved["analysis"]["mtf_cut_width"] < 0:
            raise self._fail("analysis.mtf_cut_width",
                             "analysis.mtf_cut_width must be >= 0 (0 keeps the whole profile)")

        grid = self._grid(resolved["recon"])
        lo, hi = grid.bounds()
        try:
            check_within(self._phantom(resolved["phantom"]), lo, hi)
        except DomainError as e:
            raise self._fail("phantom", f"phantom: {e}")

    @staticmethod
    def _pinhole_array(geometry: Dict[str, Any]) -> PinholeArraySpec:
        return PinholeArraySpec(
            pitch_L=geometry["pinhole_pitch"],
            diameter_d=geometry["pinhole_diameter"],
            plate_thickness_t=geometry["plate_thickness"],
            plate_height=geometry["plate_height"],
        )

    @classmethod
    def _module(cls, geometry: Dict[str, Any]) -> ModuleSpec:
        return ModuleSpec(
            width_multiplier_m=geometry["module_width_multiplier"],
            pinhole_array=cls._pinhole_array(geometry),
            detector_gap_h=geometry["detector_gap"],
            sensor_pitch=geometry["sensor_pitch"],
            binning=geometry["binning"],
        )

    @staticmethod
    def _ring(geometry: Dict[str, Any]) -> RingSpec:
        return RingSpec(
            num_modules_N=geometry["num_modules"],
            object_gap_g=geometry["object_gap"],
            center_shift_s=geometry["center_shift"],
        )

    @staticmethod
    def _phantom(phantom: Dict[str, Any]) -> Phantom:
        if "preset" in phantom:
            return PRESETS[phantom["preset"]](total_emissions=phantom["emissions"])
        shapes = tuple(
            Shape(
                kind=s["kind"],
                center=tuple(s["center"]),
                radius=s["radius"],
                half_height=s.get("half_height", 0.0),
                activity_weight=s.get("activity", 1.0),
            )
            for s in phantom["shapes"]
        )
        return Phantom(shapes, phantom["emissions"])

    @staticmethod
    def _grid(recon: Dict[str, Any]) -> VoxelGrid:
        return VoxelGrid.centered(recon["grid_dims"], recon["cube_extent"])

    def ring_spec(self) -> RingSpec:
        return self._ring(self.config["geometry"])

    def module_spec(self) -> ModuleSpec:
        return self._module(self.config["geometry"])

    def scan_plan(self) -> ScanPlan:
        return build_scan_plan(self.ring_spec(), self.module_spec())

    def phantom(self) -> Phantom:
        return self._phantom(self.config["phantom"])

    def voxel_grid(self) -> VoxelGrid:
        return self._grid(self.config["recon"])

    @property
    def seed(self) -> int:
        return self.config["phantom"]["seed"]

    @property
    def workers(self) -> int:
        return self.config["run"]["workers"]

    def get_section(self, section: str) -> Dict[str, Any]:
        return self.config.get(section, {})

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        """New config with the named CLI overrides applied; None values are ignored"""
        data = copy.deepcopy(self.raw)
        for name, value in overrides.items():
            if value is None:
                continue
            if name not in OVERRIDES:
                raise ConfigError(f"Unknown override '{name}'. Valid overrides: {', '.join(OVERRIDES)}")
            section, key = OVERRIDES[name]
            if data.get(section) is None:
                data[section] = {}
            data[section][key] = value
        return ExperimentConfig(data, source=self.source, lines=self._lines)

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self.config)

    def manifest_echo(self) -> Dict[str, Any]:
        return {
            "config": self.to_dict(),
            "config_source": self.source,
            "defaults_applied": list(self.defaults_applied),
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ExperimentConfig):
            return NotImplemented
        return self.config == other.config

    def __repr__(self) -> str:
        return f"ExperimentConfig(source={self.source!r})"


def load_config(path: str) -> ExperimentConfig:
    return ExperimentConfig.load(path)


def write_config(config: ExperimentConfig, path: str) -> str:
    """Dump the resolved configuration so it reloads to an equal config"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as file:
        yaml.safe_dump(config.to_dict(), file, sort_keys=False, default_flow_style=None)
    return path
