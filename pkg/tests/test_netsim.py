import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dwpe.errors import InvalidInputError, ProtocolError, UndefinedLagError
from dwpe.netsim import (
    Message,
    TransmissionLedger,
    apply_lags,
    count_transmissions,
    deliver_round,
    gcc_phat_lag,
    synchronize,
    transmission_reduction,
)

from oracles import cross_correlation_argmax


def test_deliver_two_nodes_one_broadcast():
    msg = Message(sender=0, round_index=1, payload=np.ones(4))
    inboxes = deliver_round([msg], num_nodes=2)
    assert len(inboxes[1]) == 1
    assert len(inboxes[0]) == 0


def test_deliver_all_broadcast_twelve_nodes():
    msgs = [Message(sender=i, round_index=1, payload=np.ones(2)) for i in range(12)]
    inboxes = deliver_round(msgs, num_nodes=12)
    for node, box in inboxes.items():
        assert len(box) == 11
        assert all(m.sender != node for m in box)


def test_deliver_orders_by_sender_regardless_of_submission():
    msgs = [Message(sender=i, round_index=1, payload=np.ones(1)) for i in (3, 0, 2, 1)]
    inboxes = deliver_round(msgs, num_nodes=4)
    for node in range(4):
        senders = [m.sender for m in inboxes[node]]
        assert senders == sorted(senders)


@settings(max_examples=20, deadline=None)
@given(perm=st.permutations(list(range(5))))
def test_deliver_permutation_invariant(perm):
    msgs = [Message(sender=i, round_index=1, payload=np.full(2, i)) for i in perm]
    inboxes = deliver_round(msgs, num_nodes=5)
    reference = deliver_round(sorted(msgs, key=lambda m: m.sender), num_nodes=5)
    for node in range(5):
        assert [m.sender for m in inboxes[node]] == [m.sender for m in reference[node]]


def test_deliver_duplicate_sender_protocol_error():
    msgs = [
        Message(sender=0, round_index=1, payload=np.ones(1)),
        Message(sender=0, round_index=1, payload=np.ones(1)),
    ]
    with pytest.raises(ProtocolError):
        deliver_round(msgs, num_nodes=3)


def test_deliver_point_to_point():
    msg = Message(sender=0, round_index=1, payload=np.ones(3), recipient=2)
    inboxes = deliver_round([msg], num_nodes=3)
    assert len(inboxes[2]) == 1 and len(inboxes[1]) == 0


def test_ledger_counts_units(tmp_path):
    ledger = TransmissionLedger(mode="distributed")
    msgs = [Message(sender=i, round_index=2, payload=np.ones(10)) for i in range(3)]
    deliver_round(msgs, num_nodes=3, ledger=ledger)
    # 3 senders x 2 receivers x 10 scalars
    assert ledger.total_units == 60
    assert ledger.units_in_round(2) == 60
    path = tmp_path / "ledger.csv"
    ledger.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "round,mode,from,to,units"
    assert len(lines) == 7


TABLE_T = [
    # (num_nodes, filter_order, centralized, distributed)
    (6, 26, 130, 5),
    (9, 26, 208, 8),
    (12, 26, 286, 11),
    (4, 40, 120, 3),
    (6, 40, 200, 5),
    (8, 40, 280, 7),
]


@pytest.mark.parametrize("m,order,cent,dist", TABLE_T)
def test_count_transmissions_published_values(m, order, cent, dist):
    assert count_transmissions("centralized", m, order) == cent
    assert count_transmissions("distributed", m) == dist
    assert count_transmissions("single", m, order) == 0


def test_count_transmissions_unknown_mode():
    with pytest.raises(InvalidInputError):
        count_transmissions("mesh", 4, 8)


def test_transmission_reduction_values():
    assert transmission_reduction(12, 26) == pytest.approx(1 - 11 / 286)
    assert transmission_reduction(8, 40) == pytest.approx(1 - 7 / 280)


def test_gcc_phat_identical_signals(rng):
    x = rng.standard_normal(4000)
    assert gcc_phat_lag(x, x, 100) == 0


def test_gcc_phat_constructed_shift(rng):
    x = rng.standard_normal(4000)
    b = np.zeros_like(x)
    b[5:] = x[:-5]
    assert gcc_phat_lag(x, b, 50) == 5
    assert gcc_phat_lag(x, b, 50) == cross_correlation_argmax(x, b, 50)


def test_gcc_phat_noisy_shift(rng):
    x = rng.standard_normal(8000)
    b = np.zeros_like(x)
    b[17:] = x[:-17]
    noise = rng.standard_normal(8000)
    noisy = b + noise * (np.linalg.norm(b) / np.linalg.norm(noise)) * 10 ** (-20 / 20)
    assert gcc_phat_lag(x, noisy, 60) == 17
    assert cross_correlation_argmax(x, noisy, 60) == 17


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**16), d=st.integers(-30, 30))
def test_gcc_phat_shift_equivariance(seed, d):
    r = np.random.default_rng(seed)
    x = r.standard_normal(2000)
    shifted = np.zeros_like(x)
    if d >= 0:
        shifted[d:] = x[: len(x) - d]
    else:
        shifted[:d] = x[-d:]
    assert gcc_phat_lag(x, shifted, 40) == d


def test_gcc_phat_zero_signal_undefined():
    with pytest.raises(UndefinedLagError):
        gcc_phat_lag(np.zeros(100), np.ones(100), 10)


def test_gcc_phat_max_lag_validation(rng):
    x = rng.standard_normal(100)
    with pytest.raises(InvalidInputError):
        gcc_phat_lag(x, x, 100)


def test_synchronize_identical_signals(rng):
    x = rng.standard_normal(3000)
    aligned, lags = synchronize([x, x.copy(), x.copy()], reference=0)
    assert lags == [0, 0, 0]
    for sig in aligned:
        np.testing.assert_array_equal(sig, x)


def test_synchronize_recovers_known_delays(rng):
    x = rng.standard_normal(6000)
    delays = [0, 40, 173]
    observations = []
    for d in delays:
        sig = np.zeros_like(x)
        sig[d:] = x[: len(x) - d]
        observations.append(sig)
    aligned, lags = synchronize(observations, reference=0, max_lag=500)
    assert lags == delays
    for sig in aligned:
        np.testing.assert_allclose(sig[: len(x) - 200], x[: len(x) - 200], atol=1e-12)


def test_synchronize_reference_is_identity(rng):
    x = rng.standard_normal(2000)
    aligned, lags = synchronize([x], reference=0)
    assert lags == [0]
    np.testing.assert_array_equal(aligned[0], x)


def test_synchronize_zero_signal_names_node(rng):
    x = rng.standard_normal(2000)
    with pytest.raises(UndefinedLagError, match="node 1"):
        synchronize([x, np.zeros_like(x)], reference=0)


def test_apply_lags_negative(rng):
    x = rng.standard_normal(100)
    out = apply_lags([x], [-10])
    np.testing.assert_array_equal(out[0][10:], x[:90])
    assert np.all(out[0][:10] == 0)


def test_message_payload_size():
    msg = Message(sender=0, round_index=1, payload=np.ones((4, 5)))
    assert msg.payload_size == 20
