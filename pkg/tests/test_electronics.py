import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from penningtrap import electronics as el


def _element(kind, value, parasitic):
    is_r, x = value
    kw = {"R": 10**x} if is_r else {"C": 10 ** (-14 + x / 3)}
    if parasitic is not None:
        kw["parallel_C"] = 10**parasitic
    return el.Element(kind, **kw)


# R in 1 ohm .. 1 Gohm, C in 10 fF .. 10 nF
component = st.tuples(st.booleans(), st.floats(0, 9))
parasitic = st.one_of(st.none(), st.floats(-13, -10))
stage = st.tuples(component, parasitic, component, parasitic)


def _ladder(stages):
    els = []
    for a, pa, b, pb in stages:
        els += [_element("series", a, pa), _element("shunt", b, pb)]
    return el.LadderNetwork(els)


def test_divider_stage():
    assert el.divider_db() == pytest.approx(-61.9, abs=0.1)
    assert el.divider_db() == pytest.approx(20 * math.log10(0.45 / 560.45), rel=1e-12)


def test_capacitive_divider_high_frequency():
    net = el.LadderNetwork([el.Element("series", C=el.C_OFF), el.Element("shunt", C=el.C_SHUNT)])
    h, reg = el.transfer_function(net, 5e6)
    assert el.gain_db(h) == pytest.approx(el.divider_db(), abs=1e-9)
    assert not reg


def test_closed_ladder_low_pass_cutoff():
    net = el.detachment_ladder(switches_open=False)
    h0 = abs(el.transfer_function(net, 0.0)[0])
    assert h0 == pytest.approx(1.0)
    f3 = optimize.brentq(lambda f: abs(el.transfer_function(net, f)[0]) - h0 / math.sqrt(2), 1e3, 1e7)
    assert f3 == pytest.approx(1 / (2 * math.pi * 1033 * 560e-12), rel=0.01)


def test_resistive_dc_divider():
    net = el.LadderNetwork([el.Element("series", R=3e3), el.Element("shunt", R=1e3)])
    h, reg = el.transfer_function(net, 0.0)
    assert h == pytest.approx(0.25)
    assert not reg


def test_dc_regularization_flag():
    net = el.detachment_ladder(with_filter=False)
    h, reg = el.transfer_function(net, 0.0)
    assert reg and np.isfinite(abs(h))
    assert abs(h) == pytest.approx((el.C_OFF / (el.C_OFF + el.C_SHUNT)) ** 3, rel=1e-3)


def test_ideal_ladder_isolation():
    rep = el.isolation_report(el.detachment_ladder(), [5e6])
    assert rep.isolation_db[0] > 180


def test_source_and_load_terminations():
    net = el.LadderNetwork([el.Element("series", R=1e3)], source_impedance=1e3, load_impedance=2e3)
    assert el.transfer_function(net, 0.0)[0] == pytest.approx(0.5)


def test_empty_grid():
    rep = el.isolation_report(el.detachment_ladder(), [])
    assert len(rep.frequencies) == 0 and rep.summary() == {}


def test_default_grid_covers_band():
    g = el.default_grid()
    assert g[0] == 0.0 and g[-1] == pytest.approx(5.118e6)
    assert np.all(np.diff(g) > 0)


def test_element_validation():
    with pytest.raises(ValueError):
        el.Element("bridge", R=1.0)
    with pytest.raises(ValueError):
        el.Element("series")
    with pytest.raises(ValueError):
        el.Element("series", R=1.0, C=1e-12)
    with pytest.raises(ValueError):
        el.Element("shunt", C=-1e-12)
    with pytest.raises(ValueError):
        el.LadderNetwork([])
    with pytest.raises(ValueError):
        el.transfer_function(el.detachment_ladder(), -1.0)


@settings(max_examples=200, deadline=None)
@given(stages=st.lists(stage, min_size=1, max_size=4), f=st.floats(0, 6e6))
def test_passivity_and_reciprocity(stages, f):
    net = _ladder(stages)
    h, _ = el.transfer_function(net, f)
    assert abs(h) <= 1 + 1e-12
    s = max(2 * math.pi * f, el.DC_EPSILON) * 1j
    (a, b), (c, d) = net.abcd(s)
    # AD - BC cancels, so the rounding error scales with |AD| + |BC|
    scale = abs(a * d) + abs(b * c)
    assert abs(a * d - b * c - 1) <= 1e-12 * scale


@settings(max_examples=200, deadline=None)
@given(stages=st.lists(stage, min_size=1, max_size=3), extra=stage, f=st.floats(0, 6e6))
def test_added_stage_never_reduces_isolation(stages, extra, f):
    net = _ladder(stages)
    more = net.stage(*_ladder([extra]).elements)
    assert abs(el.transfer_function(more, f)[0]) <= abs(el.transfer_function(net, f)[0]) * (1 + 1e-9)


def test_parasitic_fit_matches_anchors():
    fit = el.fit_parasitics()
    assert fit.isolation_dc_db == pytest.approx(83.0, abs=1.0)
    assert fit.isolation_hf_db == pytest.approx(77.0, abs=1.0)
    assert fit.switch_parasitic_C > 0 and fit.shunt_leak_R > 0
    s = el.isolation_report(fit.network, el.default_grid()).summary()
    assert s["monotone_decreasing"]


def test_parasitics_reduce_isolation():
    ideal = el.isolation_report(el.detachment_ladder(), [5e6]).isolation_db[0]
    real = el.isolation_report(el.detachment_ladder(switch_parasitic_C=1e-12), [5e6]).isolation_db[0]
    assert real < ideal


def test_network_yaml_round_trip(tmp_path):
    net = el.detachment_ladder(switch_parasitic_C=2e-12, shunt_leak_R=1e8)
    (tmp_path / "n.yaml").write_text(net.to_yaml())
    again = el.LadderNetwork.load(tmp_path / "n.yaml")
    assert again.elements == net.elements
    with pytest.raises(ValueError):
        el.LadderNetwork.from_yaml("source_impedance_ohm: 0\n")


def test_report_csv():
    rep = el.isolation_report(el.detachment_ladder(), el.default_grid(5))
    lines = rep.to_csv().splitlines()
    assert lines[0] == "f_hz,h_db,isolation_db,regularized"
    assert lines[1].endswith(",1") and len(lines) == 6


def test_discharge_time():
    assert el.discharge_time(1e12) == pytest.approx(1e12 * 1120e-12)
