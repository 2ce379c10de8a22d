"""File formats.

Every file starts with a JSON header carrying a ``schema`` field and the
resolved configuration that produced it.  CSV headers are a single comment
line ``# {...}``; floats are written with ``repr`` so that reading a file
back reproduces the arrays bit for bit.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .calibration import CHANNELS, RawBundle, RawTrace
from .forward import Spectrum
from .pumping import PumpCurve

__all__ = [
    "FormatError",
    "SPECTRUM_SCHEMA",
    "RAW_SCHEMA",
    "CURVE_SCHEMA",
    "dumps_json",
    "write_json",
    "read_json",
    "write_spectrum_csv",
    "read_spectrum_csv",
    "write_raw_bundle_csv",
    "read_raw_bundle_csv",
    "write_pump_curve_csv",
    "read_pump_curve_csv",
]

SPECTRUM_SCHEMA = "groundpop.spectrum/1"
RAW_SCHEMA = "groundpop.raw_bundle/1"
CURVE_SCHEMA = "groundpop.pump_curve/1"


class FormatError(ValueError):
    pass


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def dumps_json(obj, indent: int | None = 2) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=indent, allow_nan=False)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps_json(obj) + "\n")
    return path


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    except OSError as exc:
        raise FormatError(f"{path}: cannot read ({exc.strerror})") from exc


def _write_csv(path, header: dict, columns: list[str], data: list[np.ndarray]) -> Path:
    path = Path(path)
    lines = ["# " + dumps_json(header, indent=None), ",".join(columns)]
    for row in zip(*data):
        lines.append(",".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def _read_csv(path, schema: str) -> tuple[dict, list[str], np.ndarray]:
    path = Path(path)
    text = path.read_text().splitlines()
    if len(text) < 2 or not text[0].startswith("# "):
        raise FormatError(f"{path}: missing '# {{...}}' header line")
    try:
        header = json.loads(text[0][2:])
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed header ({exc})") from exc
    if header.get("schema") != schema:
        raise FormatError(f"{path}: expected schema {schema!r}, found {header.get('schema')!r}")
    columns = text[1].split(",")
    rows = []
    for k, line in enumerate(text[2:], start=3):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(columns):
            raise FormatError(f"{path}:{k}: expected {len(columns)} fields, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise FormatError(f"{path}:{k}: {exc}") from exc
    data = np.array(rows, dtype=float).reshape(-1, len(columns))
    return header, columns, data


# spectra ------------------------------------------------------------------


def write_spectrum_csv(path, spectrum: Spectrum, header: dict | None = None) -> Path:
    """Header keys ``q``, ``n0_per_cm3``, ``gamma_hz``, ``sigma_fwhm_hz`` and
    ``path_length_cm`` are expected in ``header``; ``schema`` and ``q`` are
    always set."""
    h = dict(header or {})
    h["schema"] = SPECTRUM_SCHEMA
    h["q"] = int(spectrum.q)
    return _write_csv(path, h, ["frequency_hz", "alpha_per_cm"], [spectrum.axis, spectrum.alpha])


def read_spectrum_csv(path) -> tuple[Spectrum, dict]:
    header, columns, data = _read_csv(path, SPECTRUM_SCHEMA)
    if columns != ["frequency_hz", "alpha_per_cm"]:
        raise FormatError(f"{path}: unexpected columns {columns}")
    if "q" not in header:
        raise FormatError(f"{path}: header has no polarization 'q'")
    return Spectrum(data[:, 0].copy(), data[:, 1].copy(), int(header["q"]), header), header


# raw bundles --------------------------------------------------------------


def write_raw_bundle_csv(path, bundle: RawBundle, header: dict | None = None) -> Path:
    h = dict(header or {})
    h["schema"] = RAW_SCHEMA
    h["meta"] = bundle.meta
    present = [c for c in CHANNELS if getattr(bundle, c) is not None]
    h["channels"] = present
    n = bundle.n_samples
    cols = [np.arange(n, dtype=float)] + [getattr(bundle, c).values for c in present]
    return _write_csv(path, h, ["index"] + present, cols)


def read_raw_bundle_csv(path) -> tuple[RawBundle, dict]:
    header, columns, data = _read_csv(path, RAW_SCHEMA)
    if not columns or columns[0] != "index":
        raise FormatError(f"{path}: first column must be 'index'")
    unknown = set(columns[1:]) - set(CHANNELS)
    if unknown:
        raise FormatError(f"{path}: unknown channels {sorted(unknown)}")
    traces = {c: None for c in CHANNELS}
    for k, c in enumerate(columns[1:], start=1):
        traces[c] = RawTrace(data[:, k].copy(), c)
    return RawBundle(traces["probe"], traces["fp"], traces["sas"], dict(header.get("meta", {}))), header


# pump curves --------------------------------------------------------------


def _state_columns(scheme) -> list[str]:
    return [f"p_F{g.twice_f // 2}_m{g.twice_m // 2:+d}" for g in scheme.ground_states()]


def write_pump_curve_csv(path, curve: PumpCurve, header: dict | None = None) -> Path:
    h = dict(header or {})
    h["schema"] = CURVE_SCHEMA
    cols = ["intensity_uW_per_mm2"] + _state_columns(curve.scheme)
    return _write_csv(path, h, cols, [curve.intensities] + list(curve.populations.T))


def read_pump_curve_csv(path, scheme) -> tuple[PumpCurve, dict]:
    header, columns, data = _read_csv(path, CURVE_SCHEMA)
    expected = ["intensity_uW_per_mm2"] + _state_columns(scheme)
    if columns != expected:
        raise FormatError(f"{path}: unexpected columns {columns}")
    return PumpCurve(data[:, 0].copy(), data[:, 1:].copy(), scheme), header
