import numpy as np
import pytest
from hypothesis import given, strategies as st

from groundpop.calibration import ScanTruth, generate_raw_bundle
from groundpop.forward import Spectrum
from groundpop.io import (
    FormatError,
    dumps_json,
    read_json,
    read_pump_curve_csv,
    read_raw_bundle_csv,
    read_spectrum_csv,
    write_json,
    write_pump_curve_csv,
    write_raw_bundle_csv,
    write_spectrum_csv,
)
from groundpop.pumping import PumpCurve
from groundpop.structure import sas_reference_lines

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(st.lists(finite, min_size=1, max_size=40), st.sampled_from([-1, 0, 1]))
def test_spectrum_round_trip_is_bit_exact(tmp_path_factory, values, q):
    path = tmp_path_factory.mktemp("s") / "s.csv"
    axis = np.arange(len(values), dtype=float) * 1e6 - 3.3e9
    s = Spectrum(axis, np.array(values), q)
    write_spectrum_csv(path, s, {"n0_per_cm3": 1e10})
    back, header = read_spectrum_csv(path)
    assert back.q == q and header["n0_per_cm3"] == 1e10
    np.testing.assert_array_equal(back.axis, s.axis)
    np.testing.assert_array_equal(back.alpha, s.alpha)


def test_raw_bundle_round_trip(tmp_path):
    b = generate_raw_bundle(ScanTruth(n_samples=300), sas_reference_lines(), noise=0.01, seed=1)
    path = write_raw_bundle_csv(tmp_path / "raw.csv", b)
    back, header = read_raw_bundle_csv(path)
    assert header["channels"] == ["probe", "fp", "sas"]
    for ch in ("probe", "fp", "sas"):
        np.testing.assert_array_equal(getattr(back, ch).values, getattr(b, ch).values)
    assert back.meta == b.meta


def test_pump_curve_round_trip(tmp_path, scheme):
    pops = np.random.default_rng(0).dirichlet(np.ones(8), size=5)
    c = PumpCurve(np.logspace(-1, 3, 5), pops, scheme)
    back, _ = read_pump_curve_csv(write_pump_curve_csv(tmp_path / "c.csv", c), scheme)
    np.testing.assert_array_equal(back.populations, pops)
    np.testing.assert_array_equal(back.intensities, c.intensities)


def test_json_helpers(tmp_path):
    doc = {"b": np.float64(1.5), "a": np.arange(3), "c": (1, 2)}
    assert dumps_json(doc, indent=None) == '{"a": [0, 1, 2], "b": 1.5, "c": [1, 2]}'
    assert read_json(write_json(tmp_path / "x.json", doc)) == {"a": [0, 1, 2], "b": 1.5, "c": [1, 2]}
    with pytest.raises(ValueError):
        dumps_json({"x": float("nan")})
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(FormatError):
        read_json(tmp_path / "bad.json")
    with pytest.raises(FormatError):
        read_json(tmp_path / "missing.json")


def test_format_errors(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("frequency_hz,alpha_per_cm\n1,2\n")
    with pytest.raises(FormatError, match="header"):
        read_spectrum_csv(p)
    p.write_text('# {"schema": "groundpop.raw_bundle/1"}\nindex,fp\n0,1\n')
    with pytest.raises(FormatError, match="schema"):
        read_spectrum_csv(p)
    p.write_text('# {"schema": "groundpop.spectrum/1", "q": 1}\nfrequency_hz,alpha_per_cm\n0,1,2\n')
    with pytest.raises(FormatError, match="fields"):
        read_spectrum_csv(p)
    p.write_text('# {"schema": "groundpop.spectrum/1"}\nfrequency_hz,alpha_per_cm\n0,1\n')
    with pytest.raises(FormatError, match="polarization"):
        read_spectrum_csv(p)
