"""YAML sweep configuration: parsing, validation and canonical emission.

A config names a built-in scenario and optionally overrides any of its
settings.  Every accepted key is listed in ``SCHEMA``; the same table drives
validation, the canonical emitter and the generated reference page
(``python -m oam_mgm.harness.config > docs/config-reference.md``).
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Callable

import yaml

from ..channel import ChannelScenario, LaunchConfig, NoiseModel
from ..dmt import DmtConfig
from ..rxdsp import CombinerMode
from ..signal import SUPPORTED_ORDERS
from ..xtalk import CrosstalkTable
from .scenarios import preset, preset_table, scenario_names
from .sweep import CalibrationTarget, SweepSpec


class ConfigError(ValueError):
    """Invalid configuration; ``path`` is the dotted key (or ``line N`` for syntax errors)."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


# --------------------------------------------------------------------------- value kinds

def _number(path, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    return float(v)


def _integer(path, v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(path, f"expected an integer, got {v!r}")
    return v


def _at_least(kind, low, strict=False):
    def parse(path, v):
        v = kind(path, v)
        if v < low or (strict and v == low):
            raise ConfigError(path, f"must be {'>' if strict else '>='} {low:g}, got {v!r}")
        return v
    return parse


_nonneg = _at_least(_number, 0.0)
_positive = _at_least(_number, 0.0, strict=True)
_nonneg_int = _at_least(_integer, 0)
_count = _at_least(_integer, 1)


def _boolean(path, v):
    if not isinstance(v, bool):
        raise ConfigError(path, f"expected true or false, got {v!r}")
    return v


def _string(path, v):
    if not isinstance(v, str):
        raise ConfigError(path, f"expected a string, got {v!r}")
    return v


def _optional(kind):
    def parse(path, v):
        return None if v is None else kind(path, v)
    return parse


def _number_list(path, v):
    if not isinstance(v, list) or not v:
        raise ConfigError(path, "expected a non-empty list of numbers")
    return tuple(_number(f"{path}[{i}]", x) for i, x in enumerate(v))


def _int_list(path, v):
    if not isinstance(v, list) or not v:
        raise ConfigError(path, "expected a non-empty list of integers")
    return tuple(_integer(f"{path}[{i}]", x) for i, x in enumerate(v))


def _combiner(path, v):
    try:
        return CombinerMode(_string(path, v))
    except ValueError:
        raise ConfigError(path, f"unknown combiner {v!r}; choose from {[c.value for c in CombinerMode]}") from None


def _combiner_list(path, v):
    if not isinstance(v, list) or not v:
        raise ConfigError(path, "expected a non-empty list of combiner names")
    return tuple(_combiner(f"{path}[{i}]", x) for i, x in enumerate(v))


def _group_map(value_kind):
    def parse(path, v):
        if not isinstance(v, dict):
            raise ConfigError(path, "expected a mapping keyed by mode-group order")
        return {_integer(f"{path} key", k): value_kind(f"{path}.{k}", x) for k, x in v.items()}
    return parse


def _qam_order(path, v):
    v = _integer(path, v)
    if v not in SUPPORTED_ORDERS:
        raise ConfigError(path, f"unsupported QAM order {v}; choose from {SUPPORTED_ORDERS}")
    return v


def _mu_pair(path, v):
    if not isinstance(v, list) or len(v) != 2:
        raise ConfigError(path, "expected [mu_plus, mu_minus]")
    return (_positive(f"{path}[0]", v[0]), _positive(f"{path}[1]", v[1]))


def _matrix(path, v):
    if not isinstance(v, list) or not all(isinstance(r, list) for r in v):
        raise ConfigError(path, "expected a list of rows")
    return tuple(tuple(_number(f"{path}[{i}][{j}]", x) for j, x in enumerate(r)) for i, r in enumerate(v))


# --------------------------------------------------------------------------- schema

@dataclass(frozen=True)
class Key:
    path: str
    parse: Callable[[str, Any], Any]
    type_name: str
    default: str
    doc: str


PRESET = "from scenario"

SCHEMA: tuple[Key, ...] = (
    Key("scenario", _string, "string", "(required)", f"Built-in preset to start from: {', '.join(scenario_names())}."),
    Key("seed", _nonneg_int, "integer", "1", "Master seed; all random streams are derived from it."),
    Key("frames_per_point", _count, "integer", "200", "Frames simulated per (group, ROP, combiner) point."),
    Key("rop_grid_dbm", _number_list, "list of numbers", PRESET, "Received optical powers in dBm, strictly increasing."),
    Key("combiners", _combiner_list, "list of strings", "all four",
        "Any of single_plus, single_minus, erc, mrc."),
    Key("output_dir", _string, "string", "out", "Directory for CSV outputs; relative paths resolve against the working directory."),
    Key("formats", _group_map(_qam_order), "mapping group -> 4|16", PRESET, "QAM order per mode group."),
    Key("dmt.fft_size", _integer, "integer", "2048", "DFT length N."),
    Key("dmt.k_lo", _integer, "integer", "9", "First payload subcarrier."),
    Key("dmt.k_hi", _integer, "integer", "264", "Last payload subcarrier."),
    Key("dmt.cp_len", _integer, "integer", "48", "Cyclic prefix in samples."),
    Key("dmt.clip_ratio", _positive, "number", "3.5", "Clipping level relative to waveform RMS; .inf disables clipping."),
    Key("dmt.n_sync", _integer, "integer", "1", "Synchronization symbols per frame."),
    Key("dmt.n_train", _integer, "integer", "10", "Training symbols per frame (channel and SNR estimate)."),
    Key("dmt.n_data", _integer, "integer", "4", "Payload symbols per frame."),
    Key("dmt.dac_rate", _positive, "number", "6.0e10", "Sample rate of the transmitted waveform in Sa/s."),
    Key("launch.bias", _nonneg, "number", "1.0", "DC drive V0."),
    Key("launch.modulation_index", _number, "number", "0.25", "Drive swing relative to V0, in (0, 1]."),
    Key("launch.alpha", _positive, "number", "1.0", "Electro-optic power ratio."),
    Key("launch.launched_mode", _integer, "integer", "0", "Excited mode index: 0 (+l,+s), 1 (+l,-s), 2 (-l,+s), 3 (-l,-s)."),
    Key("channel.groups", _int_list, "list of integers", PRESET, "Active mode-group orders |l|."),
    Key("channel.crosstalk_db", _optional(_matrix), "matrix or null", PRESET,
        "Source x destination crosstalk in dB, rows and columns in channel.groups order; -.inf disables a path. "
        "When channel.groups is overridden without a matrix, the preset's table is subset."),
    Key("channel.crosstalk_csv", _optional(_string), "path or null", "null",
        "CSV table in the `tables --csv` format, resolved relative to the config file; replaces crosstalk_db."),
    Key("channel.intra_coupling", _string, "string", "haar_per_frame", "none, haar_per_frame or haar_sections."),
    Key("channel.n_sections", _count, "integer", "1", "Number of coupling sections for haar_sections."),
    Key("channel.branch_dgd_s", _optional(_nonneg), "number or null", "null",
        "Delay of the -l branch in seconds; null means 5 ps/km times length_km."),
    Key("channel.fiber_loss_db_per_km", _nonneg, "number", "0.75", "Fiber attenuation."),
    Key("channel.length_km", _nonneg, "number", PRESET, "Fiber length."),
    Key("channel.responsivity", _group_map(_mu_pair), "mapping group -> [mu_plus, mu_minus]", PRESET,
        "Photodiode responsivities of the two branches; unlisted groups get [1, 1]."),
    Key("channel.decorrelation_delay", _nonneg_int, "integer", "0", "Samples by which crosstalk sources are delayed."),
    Key("channel.rx_lowpass_hz", _optional(_positive), "number or null", "null",
        "3 dB bandwidth of a Gaussian electrical low-pass on each branch; null disables it."),
    Key("channel.noise.sigma0_sq", _nonneg, "number", "0.0", "Signal-independent noise variance."),
    Key("channel.noise.kappa", _nonneg, "number", PRESET, "Signal-proportional noise coefficient (variance per mW)."),
    Key("receiver.guard", _nonneg_int, "integer", "256", "Zero samples padded before and after each frame."),
    Key("receiver.adc_rate", _optional(_positive), "number or null", "null",
        "If set, currents are resampled to this rate and back through the rational resampler."),
    Key("receiver.constellation_cap", _nonneg_int, "integer", "4096", "Symbols kept per constellation dump."),
    Key("receiver.write_subcarriers", _boolean, "boolean", "true", "Write subcarriers_<mg>_<rop>.csv files."),
    Key("calibration.rop_dbm", _number, "number", PRESET, "ROP of the calibration target."),
    Key("calibration.ber", _number, "number", "0.0038", "BER to reach at calibration.rop_dbm."),
    Key("calibration.mg", _integer, "integer", "3", "Group whose BER is calibrated."),
    Key("calibration.combiner", _combiner, "string", "mrc", "Combiner whose BER is calibrated."),
    Key("calibration.kappa_min", _positive, "number", "1.0e-08", "Lower end of the kappa search range."),
    Key("calibration.kappa_max", _positive, "number", "0.01", "Upper end of the kappa search range."),
    Key("calibration.rel_tol", _number, "number", "0.1", "Accepted relative BER deviation."),
)

_KEYS = {k.path: k for k in SCHEMA}
_SECTIONS = {p.rsplit(".", 1)[0] for p in _KEYS if "." in p}


# --------------------------------------------------------------------------- loading

class _UniqueKeyLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node, deep=False):
    seen = set()
    for key_node, _ in node.value:
        key = loader.construct_object(key_node, deep=deep)
        if key in seen:
            raise yaml.constructor.ConstructorError(None, None, f"duplicate key {key!r}", key_node.start_mark)
        seen.add(key)
    return yaml.SafeLoader.construct_mapping(loader, node, deep)


_UniqueKeyLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _load_yaml(text: str) -> dict:
    try:
        data = yaml.load(text, Loader=_UniqueKeyLoader)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark is not None else ""
        problem = getattr(e, "problem", None) or str(e)
        raise ConfigError(where, f"YAML syntax error: {problem}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("", "top level must be a mapping")
    return data


def _flatten(data: dict, prefix: str = "") -> dict[str, Any]:
    out = {}
    for k, v in data.items():
        if not isinstance(k, str):
            raise ConfigError(prefix or "(top level)", f"keys must be strings, got {k!r}")
        path = f"{prefix}{k}"
        if path in _KEYS:
            out[path] = v
        elif path in _SECTIONS:
            if not isinstance(v, dict):
                raise ConfigError(path, "expected a section (mapping)")
            out.update(_flatten(v, path + "."))
        else:
            raise ConfigError(path, "unknown key")
    return out


def _build(cls, base, values: dict, section: str):
    try:
        return replace(base, **values) if base is not None else cls(**values)
    except (ValueError, TypeError, KeyError) as e:
        raise ConfigError(section, str(e).strip("'\"")) from None


def _pick(flat: dict, section: str, rename: dict | None = None) -> dict:
    rename = rename or {}
    out = {}
    prefix = section + "."
    for path, value in flat.items():
        if path.startswith(prefix) and "." not in path[len(prefix):]:
            name = path[len(prefix):]
            out[rename.get(name, name)] = value
    return out


def spec_from_mapping(data: dict, base_dir: Path | None = None) -> SweepSpec:
    """Validate a parsed config mapping and turn it into a ``SweepSpec``."""
    raw = _flatten(data)
    if "scenario" not in raw:
        raise ConfigError("scenario", "required key missing")
    flat = {p: _KEYS[p].parse(p, v) for p, v in raw.items()}
    name = flat["scenario"]
    try:
        base = preset(name)
    except KeyError as e:
        raise ConfigError("scenario", str(e).strip("'\"")) from None

    dmt = _build(DmtConfig, base.dmt, _pick(flat, "dmt"), "dmt")
    lc = _build(LaunchConfig, base.launch, _pick(flat, "launch"), "launch")
    noise = _build(NoiseModel, base.scenario.noise, _pick(flat, "channel.noise"), "channel.noise")

    ch = _pick(flat, "channel", {"branch_dgd_s": "branch_dgd"})
    groups = ch.get("groups", base.scenario.groups)
    csv_path = ch.pop("crosstalk_csv", None)
    if csv_path is not None:
        if "crosstalk_db" in ch:
            raise ConfigError("channel.crosstalk_csv", "give either crosstalk_csv or crosstalk_db, not both")
        p = Path(csv_path)
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        try:
            table = CrosstalkTable.from_csv(p.read_text(), system_length_km=ch.get("length_km", base.scenario.length_km))
            ch["crosstalk_db"] = table.subset(groups)
        except OSError as e:
            raise ConfigError("channel.crosstalk_csv", f"cannot read {p}: {e.strerror}") from None
        except (ValueError, KeyError, IndexError) as e:
            raise ConfigError("channel.crosstalk_csv", str(e).strip("'\"")) from None
    if "groups" in ch and "crosstalk_db" not in ch:
        try:
            ch["crosstalk_db"] = preset_table(name).subset(groups)
        except KeyError as e:
            raise ConfigError("channel.groups", str(e).strip("'\"") + "; give channel.crosstalk_db") from None
    if "responsivity" not in ch:
        ch["responsivity"] = {g: m for g, m in base.scenario.responsivity.items() if g in groups}
    ch["noise"] = noise
    scenario = _build(ChannelScenario, base.scenario, ch, "channel")

    cal = base.calibration
    cal_values = _pick(flat, "calibration")
    if cal_values:
        cal = _build(CalibrationTarget, cal, cal_values, "calibration")

    top = {k: flat[k] for k in ("seed", "frames_per_point", "rop_grid_dbm", "combiners", "output_dir") if k in flat}
    formats = flat.get("formats", {g: o for g, o in base.formats.items() if g in groups})
    rx = _pick(flat, "receiver")
    values = dict(scenario=scenario, dmt=dmt, launch=lc, formats=formats, calibration=cal, **top, **rx)
    try:
        return replace(base, **values)
    except ValueError as e:
        msg = str(e)
        for key in ("rop_grid_dbm", "combiners", "frames_per_point", "seed", "formats", "calibration", "adc_rate"):
            if key in msg:
                section = key if key in _KEYS or key in _SECTIONS else f"receiver.{key}"
                raise ConfigError(section, msg) from None
        raise ConfigError("", msg) from None


def parse_config_text(text: str, base_dir: Path | None = None) -> SweepSpec:
    return spec_from_mapping(_load_yaml(text), base_dir)


def parse_config(path: str | Path) -> SweepSpec:
    """Read, validate and default a YAML config file."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError("", f"cannot read config {p}: {e.strerror}") from None
    return parse_config_text(text, p.parent)


# --------------------------------------------------------------------------- emission

def _plain(v):
    if isinstance(v, CombinerMode):
        return v.value
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    return v


def spec_to_mapping(spec: SweepSpec) -> dict:
    """Every setting of ``spec`` as a nested mapping that ``spec_from_mapping`` accepts."""
    sc = spec.scenario
    dmt = {f.name: getattr(spec.dmt, f.name) for f in fields(spec.dmt) if f.name != "constellation"}
    out = {
        "scenario": spec.name,
        "seed": spec.seed,
        "frames_per_point": spec.frames_per_point,
        "rop_grid_dbm": spec.rop_grid_dbm,
        "combiners": spec.combiners,
        "output_dir": spec.output_dir,
        "formats": spec.formats,
        "dmt": dmt,
        "launch": {f.name: getattr(spec.launch, f.name) for f in fields(spec.launch)},
        "channel": {
            "groups": sc.groups,
            "crosstalk_db": sc.crosstalk_db,
            "intra_coupling": sc.intra_coupling,
            "n_sections": sc.n_sections,
            "branch_dgd_s": sc.branch_dgd,
            "fiber_loss_db_per_km": sc.fiber_loss_db_per_km,
            "length_km": sc.length_km,
            "responsivity": sc.responsivity,
            "decorrelation_delay": sc.decorrelation_delay,
            "rx_lowpass_hz": sc.rx_lowpass_hz,
            "noise": {"sigma0_sq": sc.noise.sigma0_sq, "kappa": sc.noise.kappa},
        },
        "receiver": {
            "guard": spec.guard,
            "adc_rate": spec.adc_rate,
            "constellation_cap": spec.constellation_cap,
            "write_subcarriers": spec.write_subcarriers,
        },
    }
    if spec.calibration is not None:
        out["calibration"] = {f.name: getattr(spec.calibration, f.name) for f in fields(spec.calibration)}
    return _plain(out)


def emit_config(spec: SweepSpec) -> str:
    """Canonical YAML for ``spec``; parsing it back gives an equal spec."""
    return yaml.safe_dump(spec_to_mapping(spec), sort_keys=False, default_flow_style=None, width=120)


# --------------------------------------------------------------------------- reference page

def reference_markdown() -> str:
    lines = [
        "# Sweep configuration reference",
        "",
        "Generated from `oam_mgm.harness.config.SCHEMA`; do not edit by hand.",
        "",
        "Configs are YAML.  Only `scenario` is required; every other key overrides the",
        "named preset.  Unknown keys are rejected.  Entries marked *from scenario* take",
        "the preset's value (see the table at the end).",
        "",
        "| key | type | default | meaning |",
        "|---|---|---|---|",
    ]
    for k in SCHEMA:
        lines.append(f"| `{k.path}` | {k.type_name} | {k.default} | {k.doc} |")
    lines += ["", "## Preset values", ""]
    for name in scenario_names():
        s = preset(name)
        sc = s.scenario
        lines += [
            f"### {name}",
            "",
            f"- groups: {list(sc.groups)}",
            f"- formats: {s.formats}",
            f"- length_km: {sc.length_km}",
            f"- crosstalk_db: {[list(r) for r in sc.crosstalk_db]}",
            f"- responsivity: { {g: list(m) for g, m in sc.responsivity.items()} }",
            f"- noise.kappa: {sc.noise.kappa}",
            f"- rop_grid_dbm: {s.rop_grid_dbm[0]:g} to {s.rop_grid_dbm[-1]:g} step "
            f"{s.rop_grid_dbm[1] - s.rop_grid_dbm[0]:g}",
            f"- calibration: rop_dbm {s.calibration.rop_dbm}, mg {s.calibration.mg}",
            "",
        ]
    return "\n".join(lines)


if __name__ == "__main__":  # pragma: no cover
    print(reference_markdown(), end="")
