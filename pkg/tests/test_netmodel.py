import copy
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import two_bus_doc
from ibrstab.netmodel import (DATA_PATH_ENV, IbrSpec, NetworkError, ParameterDomain, PerUnitBase, SchemaError,
                              apply_scenario, load_network, parse_network, replace_ibr_with_sg,
                              replace_sg_with_ibr, resolve_data_file)

TABLE_I = {  # scenario -> (S9, S10, S11, S12, total)
    1: (620, 350, 500, 500, 1970),
    2: (310, 350, 500, 500, 1660),
    3: (620, 350, 250, 500, 1720),
    4: (620, 350, 500, 250, 1720),
}
TABLE_II_P = {1: (503, 241, 345, 345), 2: (222, 316, 451, 451), 3: (530, 133, 176, 397), 4: (546, 278, 397, 176)}


def test_bundled_network_shape(net):
    assert len(net.buses) == 13  # 12 buses with bus 6 split into 6a/6b
    assert len(net.generators) == 4
    assert net.slack_bus == "9"
    assert net.total_gen_mva == 1970.0
    assert net.base.f_base == 50.0
    assert sorted(net.base.zones.values()) == [22.0, 220.0, 380.0]


@pytest.mark.parametrize("sc", sorted(TABLE_I))
def test_scenario_ratings_and_dispatch(net, sc):
    n = apply_scenario(net, sc)
    s = [n.sg_at(b).s_nom for b in ("9", "10", "11", "12")]
    p = [n.sg_at(b).p for b in ("9", "10", "11", "12")]
    assert tuple(s) == TABLE_I[sc][:4]
    assert n.total_gen_mva == TABLE_I[sc][4] == net.scenarios[sc].s_gen_total
    assert sum(s) == TABLE_I[sc][4]
    assert tuple(p) == TABLE_II_P[sc]
    assert n.scenario_id == sc


def test_scenario_examples(net):
    n2 = apply_scenario(net, 2)
    assert n2.sg_at("9").s_nom == 310 and n2.sg_at("9").p == 222
    n3 = apply_scenario(net, 3)
    assert n3.sg_at("11").s_nom == 250 and n3.total_gen_mva == 1720
    n1 = apply_scenario(net, 1)
    assert n1.generators == net.generators


@pytest.mark.parametrize("sc", [1, 2, 3, 4])
def test_apply_scenario_idempotent(net, sc):
    once = apply_scenario(net, sc)
    twice = apply_scenario(once, sc)
    assert once.generators == twice.generators and once.ibrs == twice.ibrs


def test_unknown_scenario(net):
    with pytest.raises(NetworkError, match="unknown scenario"):
        apply_scenario(net, 9)


def test_single_bus_network():
    doc = two_bus_doc()
    doc["buses"] = doc["buses"][:1]
    doc["branches"] = []
    doc["loads"][0]["bus"] = "1"
    net = parse_network(doc)
    assert net.bus_ids == ("1",)


@pytest.mark.parametrize("mutate, field", [
    (lambda d: d["transformers"].__setitem__(0, {**d["transformers"][0], "s_nom": 0.0}), "s_nom"),
    (lambda d: d.pop("schema_version"), "schema_version"),
    (lambda d: d["branches"][0].__setitem__("x", 0.0), "x"),
    (lambda d: d["loads"][0].__setitem__("p", -1.0), "p"),
    (lambda d: d["generators"][0].__setitem__("machine", "nope"), "machine"),
    (lambda d: d["branches"][0].pop("r"), "r"),
])
def test_schema_errors_name_the_field(mutate, field):
    doc = two_bus_doc()
    doc["transformers"] = [{"id": "T", "from": "1", "to": "2", "s_nom": 100.0, "r_w": 0.02, "x_w": 0.1}]
    mutate(doc)
    with pytest.raises(SchemaError) as exc:
        parse_network(doc)
    assert field in str(exc.value)


def test_structural_errors():
    doc = two_bus_doc()
    doc["buses"][1]["kind"] = "slack"
    with pytest.raises(NetworkError, match="slack"):
        parse_network(doc)
    doc = two_bus_doc()
    doc["buses"][1]["zone"] = "elsewhere"
    with pytest.raises(NetworkError, match="zone"):
        parse_network(doc)
    doc = two_bus_doc()
    doc["zones"].append({"id": "y", "v_base": 380.0})
    doc["buses"][1]["zone"] = "y"
    with pytest.raises(NetworkError, match="different voltage zones"):
        parse_network(doc)


def test_file_errors(tmp_path):
    bad = tmp_path / "bad.net"
    bad.write_text("schema_version = [", encoding="utf-8")
    with pytest.raises(SchemaError):
        load_network(bad)
    with pytest.raises(FileNotFoundError):
        load_network(tmp_path / "missing.net")


def test_data_path_env(tmp_path, monkeypatch, net):
    src = resolve_data_file("cigre_hv.net")
    (tmp_path / "copy.net").write_bytes(src.read_bytes())
    monkeypatch.setenv(DATA_PATH_ENV, str(tmp_path))
    assert resolve_data_file("copy.net") == tmp_path / "copy.net"
    assert load_network("copy.net").digest() == net.digest()


def test_replace_sg_with_ibr(net):
    n = replace_sg_with_ibr(net, "10", IbrSpec())
    ibr = n.ibr_at("10")
    assert n.sg_at("10") is None
    assert ibr.s_nom == 350.0 and ibr.unit_count == 70
    assert ibr.p == net.sg_at("10").p and ibr.v_set == net.sg_at("10").v_set
    assert n.bus("10").kind == net.bus("10").kind
    back = replace_ibr_with_sg(n, "10", net.sg_at("10"))
    assert back.generators == net.generators and back.ibrs == ()


def test_replace_sg_requires_machine(net):
    with pytest.raises(NetworkError, match="no synchronous generator"):
        replace_sg_with_ibr(net, "3", IbrSpec())


def test_ibr_defaults_match_unit_data():
    s = IbrSpec()
    assert (s.r, s.l, s.c_f, s.r_f, s.c_dc) == (0.05, 0.15, 0.05, 0.0016, 0.350)
    assert (s.v_dc_base, s.v_ac_base, s.s_nom) == (1500.0, 660.0, 350.0)
    with pytest.raises(NetworkError):
        s.with_gains(kp_pl=1.0)
    with pytest.raises(SchemaError):
        IbrSpec(kp_i=-1.0).validate()
    with pytest.raises(SchemaError):
        IbrSpec(version=4).validate()


@given(st.floats(-1e6, 1e6, allow_nan=False), st.sampled_from(["power", "voltage", "current", "impedance",
                                                                "admittance"]),
       st.sampled_from(["hv380", "hv220", "mv22"]))
def test_per_unit_round_trip(value, quantity, zone):
    base = PerUnitBase(100.0, 50.0, {"hv380": 380.0, "hv220": 220.0, "mv22": 22.0})
    back = base.to_pu(base.to_si(value, quantity, zone), quantity, zone)
    assert back == pytest.approx(value, rel=1e-12, abs=1e-300)


def test_per_unit_bases_positive():
    with pytest.raises(SchemaError):
        PerUnitBase(0.0, 50.0)
    with pytest.raises(SchemaError):
        PerUnitBase(100.0, 50.0, {"z": -1.0})
    assert PerUnitBase().omega_base == pytest.approx(2 * math.pi * 50)


domains = st.lists(
    st.tuples(st.floats(-1e3, 1e3), st.floats(1e-3, 1e3)), min_size=1, max_size=5,
).map(lambda items: ParameterDomain(tuple(f"p{i}" for i in range(len(items))),
                                    tuple(a for a, _ in items), tuple(a + w for a, w in items)))


@given(domains, st.data())
def test_domain_unit_map_round_trip(dom, data):
    z = np.array(data.draw(st.lists(st.floats(0, 1), min_size=dom.dim, max_size=dom.dim)))
    x = dom.from_unit(z)
    assert np.all(dom.contains(x[None, :]) | np.isclose(x, dom.hi) | np.isclose(x, dom.lo))
    assert np.allclose(dom.to_unit(x), z, atol=1e-9)


@given(domains)
def test_domain_text_round_trip(dom):
    again = ParameterDomain.parse(",".join(f"{n}:{a!r}:{b!r}" for n, a, b in zip(dom.names, dom.lo, dom.hi)))
    assert again == dom


@pytest.mark.parametrize("text", ["a:1:0", "a:0:1,a:0:2", "a:0", "a:0:inf", ""])
def test_domain_rejects(text):
    with pytest.raises(NetworkError):
        ParameterDomain.parse(text)


def test_network_model_is_immutable(net):
    with pytest.raises(Exception):
        net.name = "x"
    doc = two_bus_doc()
    snapshot = copy.deepcopy(doc)
    parse_network(doc)
    assert doc == snapshot
