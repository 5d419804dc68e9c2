import json
from pathlib import Path

import numpy as np
import pytest

from regnet.errors import ParseError, UnbalancedInjection
from regnet.netio import load_network, network_to_dict, parse_network

DATA = Path(__file__).resolve().parents[1] / "data"

BASE = {
    "buses": [{"id": 1, "kind": "tie"},
              {"id": 2, "kind": "gen", "gmin": -5, "gmax": 5, "g0": 0, "ramp": 10,
               "cost": {"quad": 1.0, "lin": 0.0}},
              {"id": 3, "kind": "load"}],
    "lines": [{"from": 1, "to": 2, "limit": 3.0}, {"from": 2, "to": 3, "limit": 3.0}],
    "p0": 1.0,
    "loads": {"mean": [1.0], "cov_diag": [0.25]},
}


def _doc(**patch):
    d = json.loads(json.dumps(BASE))
    d.update(patch)
    return d


def test_parse_fixture():
    b = load_network(DATA / "net2bus.json")
    assert b.net.n_g == 1 and b.net.flow_limit.tolist() == [3.0]
    assert b.loads.is_degenerate


def test_roundtrip():
    b = parse_network(_doc())
    again = parse_network(network_to_dict(b))
    assert network_to_dict(again) == network_to_dict(b)
    assert np.allclose(again.loads.cov, [[0.25]])


@pytest.mark.parametrize("patch", [
    {"extra": 1},
    {"buses": [{"id": 1, "kind": "tie", "color": "red"}, BASE["buses"][1], BASE["buses"][2]]},
    {"lines": [{"from": 1, "to": 2, "limit": 3.0, "x": 1}, BASE["lines"][1]]},
    {"loads": {"mean": [1.0], "distribution": "uniform"}},
    {"loads": {"mean": [1.0, 2.0]}},
    {"buses": [{"id": 1, "kind": "tie"}, {"id": 3, "kind": "load"}]},
])
def test_rejects_bad_documents(patch):
    with pytest.raises(ParseError):
        parse_network(_doc(**patch))


def test_unbalanced_p0():
    with pytest.raises(UnbalancedInjection):
        parse_network(_doc(p0=5.0))


def test_malformed_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{", encoding="utf-8")
    with pytest.raises(ParseError):
        load_network(p)
