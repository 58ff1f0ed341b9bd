import pytest
from hypothesis import given, strategies as st

from eolsr.model import (
    DataBody,
    EstimationMode,
    HelloBody,
    LinkState,
    LinkStatus,
    Message,
    MessageKind,
    MetricsRecord,
    MprPolicy,
    PathPolicy,
    ProtocolParams,
    TcBody,
    TcRedundancy,
    to_ms,
    to_s,
    validate_params,
)


def test_defaults_are_valid():
    p = ProtocolParams()
    assert validate_params(p) == []
    assert (p.hello_ms, p.tc_ms, p.neighbor_hold_ms, p.topology_hold_ms) == (2000, 5000, 6000, 15000)
    assert p.mpr_policy is MprPolicy.CLASSIC
    assert p.path_policy is PathPolicy.SHORTEST_HOP
    assert p.estimation_mode is EstimationMode.REALISTIC
    assert p.tc_redundancy is TcRedundancy.SELECTORS_ONLY


def test_hold_time_below_three_intervals_is_rejected():
    errors = validate_params(ProtocolParams(hello_interval=2.0, neighbor_hold_time=5.0))
    assert len(errors) == 1
    assert "hold time < 3×interval" in errors[0]
    errors = validate_params(ProtocolParams(tc_interval=5.0, topology_hold_time=14.9))
    assert errors and errors[0].startswith("topology_hold_time")


def test_every_violation_is_reported():
    p = ProtocolParams(hello_interval=0, tc_interval=-1, mpr_coverage=0)
    errors = validate_params(p)
    assert "hello_interval must be > 0" in errors
    assert "tc_interval must be > 0" in errors
    assert "mpr_coverage must be >= 1" in errors


def test_sub_millisecond_interval():
    p = ProtocolParams(hello_interval=0.0004, neighbor_hold_time=6.0)
    assert any("below 1 ms" in e for e in validate_params(p))


def test_params_dict_round_trip():
    p = ProtocolParams(mpr_policy=MprPolicy.ENERGY_AWARE, estimation_mode=EstimationMode.SMART_PREDICTION)
    assert ProtocolParams.from_dict(p.to_dict()) == p
    with pytest.raises(ValueError):
        ProtocolParams.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        ProtocolParams.from_dict({"mpr_policy": "Greedy"})


def test_with_returns_modified_copy():
    p = ProtocolParams()
    q = p.with_(tc_interval=3.0, topology_hold_time=9.0)
    assert p.tc_interval == 5.0 and q.tc_interval == 3.0


@given(st.floats(min_value=0, max_value=1e6, allow_nan=False))
def test_time_conversion_round_trips_to_the_millisecond(seconds):
    assert abs(to_s(to_ms(seconds)) - seconds) <= 0.0005 + 1e-9 * seconds


@pytest.mark.parametrize(
    "msg",
    [
        Message(MessageKind.HELLO, 3, 7, 1200,
                HelloBody(((1, LinkStatus.SYMMETRIC), (4, LinkStatus.MPR), (9, LinkStatus.HEARD)), 97.5)),
        Message(MessageKind.TC, 3, 2, 5000, TcBody((1, 4), 96.0, 5, ((1, 90.25, 4100),))),
        Message(MessageKind.DATA, 0, 11, 7001, DataBody(0, 8, 512, ((0, 99.0, 7001), (2, 98.5, 7026)))),
    ],
)
def test_message_dict_round_trip(msg):
    assert Message.from_dict(msg.to_dict()) == msg


def test_link_state_bandwidth_bounds():
    LinkState(0, 1, True, 2e6, 2e6)
    LinkState(0, 1, True, 2e6, 0.0)
    with pytest.raises(ValueError):
        LinkState(0, 1, True, 2e6, 2.5e6)
    with pytest.raises(ValueError):
        LinkState(0, 1, True, 2e6, -1.0)


def test_metrics_record_rejects_impossible_delivery():
    with pytest.raises(ValueError):
        MetricsRecord("x", 1, packets_sent=3, packets_delivered=4)
    s = MetricsRecord("x", 1, packets_sent=4, packets_delivered=4, counters={"b": 1, "a": 2}).summary()
    assert list(s["counters"]) == ["a", "b"]
    assert s["first_node_death"] is None
