import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dwpe.danse import (
    NodeState,
    assemble_extended,
    compress_all_frames,
    compress_frame,
    local_predict,
    local_solve,
    node_round,
    run_distributed,
    update_compressor,
)
from dwpe.dsp import Spectrogram, WindowSpec
from dwpe.errors import InvalidInputError, MissingDataError
from dwpe.wpe import WpeParams, build_delayed_vector, predict_desired, run_wpe, update_psd

from oracles import normal_equations_direct

WINDOW = WindowSpec(frame_len=14, hop=7)


def random_spec(rng, frames=12):
    data = rng.standard_normal((frames, WINDOW.num_bins)) \
        + 1j * rng.standard_normal((frames, WINDOW.num_bins))
    return Spectrogram(data, 16000, WINDOW)


def make_network(rng, num_nodes=2, frames=12, **param_overrides):
    defaults = dict(delay=2, filter_order=3, max_iters=8, convergence_tol=0.0)
    defaults.update(param_overrides)
    params = WpeParams(**defaults)
    specs = [random_spec(rng, frames) for _ in range(num_nodes)]
    nodes = [
        NodeState(node_id=i, num_nodes=num_nodes, local_spec=s, params=params)
        for i, s in enumerate(specs)
    ]
    return params, specs, nodes


def test_compress_frame_zero_compressor(rng):
    vec = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    assert compress_frame(vec, np.zeros(4)) == 0


def test_compress_frame_basis_selects_element(rng):
    vec = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    e1 = np.zeros(4)
    e1[0] = 1.0
    assert compress_frame(vec, e1) == pytest.approx(vec[0])


def test_compress_frame_hand_inner_product():
    comp = np.array([1 + 1j, 2 - 1j, 0.5j, 3.0])
    vec = np.array([2 - 1j, 1 + 1j, 4.0, 1j])
    expected = np.sum(np.conj(comp) * vec)
    assert compress_frame(vec, comp) == pytest.approx(expected)


def test_compress_frame_length_mismatch():
    with pytest.raises(InvalidInputError):
        compress_frame(np.zeros(3), np.zeros(4))


def test_compress_all_frames_matches_scalar_op(rng):
    spec = random_spec(rng)
    params = WpeParams(delay=2, filter_order=3)
    compressor = rng.standard_normal((WINDOW.num_bins, 3)) \
        + 1j * rng.standard_normal((WINDOW.num_bins, 3))
    out = compress_all_frames(spec.data, compressor, params)
    for n in (0, 4, 11):
        for k in (0, 5):
            vec = build_delayed_vector(spec, n, k, params)
            assert out[n, k] == pytest.approx(compress_frame(vec, compressor[k]))


def test_assemble_extended_length(rng):
    local = rng.standard_normal(3) + 0j
    out = assemble_extended(local, {1: 2 + 1j}, [1])
    assert out.shape == (4,)
    np.testing.assert_array_equal(out[:3], local)
    assert out[3] == 2 + 1j


def test_assemble_extended_order_markers():
    # distinct markers confirm ascending neighbor order after the local block
    local = np.array([10.0, 20.0])
    inbox_row = {3: 33j, 1: 11j, 2: 22j}
    out = assemble_extended(local, inbox_row, [1, 2, 3])
    np.testing.assert_array_equal(out, [10.0, 20.0, 11j, 22j, 33j])


def test_assemble_extended_missing_neighbor():
    with pytest.raises(MissingDataError, match="neighbor 2"):
        assemble_extended(np.zeros(2), {1: 1.0}, [1, 2])


def test_local_predict_zero_weights_returns_observation(rng):
    _, specs, nodes = make_network(rng)
    node = nodes[0]
    assert local_predict(node, 5, 3) == pytest.approx(specs[0].data[5, 3])


def test_local_predict_single_node_matches_predict_desired(rng):
    params, specs, nodes = make_network(rng, num_nodes=1)
    node = nodes[0]
    node.local_weights = rng.standard_normal((WINDOW.num_bins, 3)) \
        + 1j * rng.standard_normal((WINDOW.num_bins, 3))
    n, k = 6, 2
    vec = build_delayed_vector(specs[0], n, k, params)
    expected = predict_desired(specs[0].data[n, k], vec, node.local_weights[k])
    assert local_predict(node, n, k) == pytest.approx(expected)


def test_local_predict_matches_explicit_compressed_path(rng):
    params, specs, nodes = make_network(rng, num_nodes=2)
    node = nodes[0]
    g = rng.standard_normal((WINDOW.num_bins, 3)) + 1j * rng.standard_normal((WINDOW.num_bins, 3))
    node.inbox[1] = compress_all_frames(specs[1].data, g, params)
    node.local_weights = rng.standard_normal((WINDOW.num_bins, 3)) \
        + 1j * rng.standard_normal((WINDOW.num_bins, 3))
    node.cross_weights = rng.standard_normal((WINDOW.num_bins, 1)) \
        + 1j * rng.standard_normal((WINDOW.num_bins, 1))
    n, k = 7, 4
    local_vec = build_delayed_vector(specs[0], n, k, params)
    neighbor_vec = build_delayed_vector(specs[1], n, k, params)
    extended = np.concatenate([local_vec, [compress_frame(neighbor_vec, g[k])]])
    weights = np.concatenate([node.local_weights[k], node.cross_weights[k]])
    expected = predict_desired(specs[0].data[n, k], extended, weights)
    assert local_predict(node, n, k) == pytest.approx(expected)


def test_local_solve_single_node_reduces_to_centralized(rng):
    params, specs, nodes = make_network(rng, num_nodes=1, frames=20)
    node = nodes[0]
    node.psd = update_psd(node.desired, node.psd_floor)
    local, cross = local_solve(node)
    assert cross.shape == (WINDOW.num_bins, 0)
    result = run_wpe(specs, 0, WpeParams(delay=2, filter_order=3, max_iters=1,
                                         convergence_tol=0.0,
                                         psd_floor=node.psd_floor))
    np.testing.assert_array_equal(local, result.weights)


def test_local_solve_matches_double_loop_oracle(rng):
    params, specs, nodes = make_network(rng, num_nodes=2, frames=6,
                                        filter_order=2, delay=1,
                                        ridge_scale=0.0, prox_scale=0.0)
    node = nodes[0]
    g = rng.standard_normal((WINDOW.num_bins, 2)) + 1j * rng.standard_normal((WINDOW.num_bins, 2))
    node.inbox[1] = compress_all_frames(specs[1].data, g, params)
    node.psd = update_psd(node.desired, node.psd_floor)
    local, cross = local_solve(node)
    k = 3
    stacked = np.zeros((6, 3), dtype=complex)
    for n in range(6):
        stacked[n, :2] = build_delayed_vector(specs[0], n, k, params)
        stacked[n, 2] = node.inbox[1][n, k]
    Z, q = normal_equations_direct(stacked, specs[0].data[:, k], node.psd.values[:, k])
    w = np.linalg.solve(Z, q)
    got = np.concatenate([local[k], cross[k]])
    assert np.linalg.norm(Z @ got - q) <= 1e-10 * np.linalg.norm(q)
    np.testing.assert_allclose(got, w, rtol=1e-8)


def test_local_solve_sigma_scale_invariance(rng):
    params, specs, nodes = make_network(rng, num_nodes=2, frames=10,
                                        prox_scale=0.0)
    node = nodes[0]
    g = rng.standard_normal((WINDOW.num_bins, 3)) + 1j * rng.standard_normal((WINDOW.num_bins, 3))
    node.inbox[1] = compress_all_frames(specs[1].data, g, params)
    sigma = np.abs(rng.standard_normal((10, WINDOW.num_bins))) + 0.3
    from dwpe.wpe import PsdEstimate

    node.psd = PsdEstimate(values=sigma, floor=1e-6)
    w1 = np.concatenate(local_solve(node), axis=1)
    node.psd = PsdEstimate(values=4.0 * sigma, floor=1e-6)
    w2 = np.concatenate(local_solve(node), axis=1)
    np.testing.assert_allclose(w1, w2, rtol=1e-9)


def test_all_zero_inbox_degenerates_to_local_weights(rng):
    params, specs, nodes = make_network(rng, num_nodes=2, frames=20,
                                        prox_scale=0.0)
    node = nodes[0]
    node.inbox[1] = np.zeros_like(specs[0].data)
    node.psd = update_psd(node.desired, node.psd_floor)
    local, cross = local_solve(node)
    np.testing.assert_allclose(cross, 0, atol=1e-20)
    single = run_wpe([specs[0]], 0, WpeParams(delay=2, filter_order=3, max_iters=1,
                                              convergence_tol=0.0,
                                              psd_floor=node.psd_floor))
    np.testing.assert_allclose(local, single.weights, rtol=1e-5, atol=1e-9)


def test_update_compressor_copies_weights(rng):
    _, _, nodes = make_network(rng)
    node = nodes[0]
    node.local_weights = rng.standard_normal((WINDOW.num_bins, 3)) + 0j
    update_compressor(node)
    np.testing.assert_array_equal(node.compressor, node.local_weights)
    assert node.compressor is not node.local_weights
    before = node.compressor.copy()
    update_compressor(node)  # idempotent without weight change
    np.testing.assert_array_equal(node.compressor, before)


def test_node_round_broadcast_schedule(rng):
    _, _, nodes = make_network(rng)
    node = nodes[0]
    sent = []
    for round_index in range(1, 7):
        payload = node_round(node, round_index, collab_period=2)
        sent.append(payload is not None)
    assert sent == [False, True, False, True, False, True]


def test_node_round_collab_one_always_broadcasts(rng):
    _, _, nodes = make_network(rng)
    node = nodes[0]
    assert all(
        node_round(node, r, collab_period=1) is not None for r in range(1, 4)
    )


def test_node_round_broadcast_equals_weights(rng):
    params, specs, nodes = make_network(rng)
    node = nodes[0]
    payload = node_round(node, 2, collab_period=2)
    np.testing.assert_array_equal(node.compressor, node.local_weights)
    np.testing.assert_array_equal(
        payload, compress_all_frames(specs[0].data, node.compressor, params)
    )


def test_stale_inbox_fixed_point(rng):
    # with frozen inbox and converged weights, another round changes nothing
    params, specs, nodes = make_network(rng, num_nodes=2, frames=20,
                                        psd_floor=10.0, prox_scale=0.0,
                                        relaxation_decay=1.0)
    node = nodes[0]
    node.inbox[1] = compress_all_frames(
        specs[1].data,
        rng.standard_normal((WINDOW.num_bins, 3)) + 0j,
        params,
    )
    # huge floor makes sigma constant: one solve reaches the fixed point
    node_round(node, 1, collab_period=5)
    desired_a = node.desired.copy()
    node_round(node, 2, collab_period=5)
    np.testing.assert_allclose(node.desired, desired_a, rtol=1e-9, atol=1e-12)


def test_run_distributed_m1_identical_to_single(rng):
    spec = random_spec(rng, frames=30)
    params = WpeParams(delay=2, filter_order=3, max_iters=5, convergence_tol=1e-7)
    single = run_wpe([spec], 0, params)
    dist = run_distributed([spec], params, collab_period=2)
    np.testing.assert_array_equal(single.desired.data, dist.desired[0].data)


def test_run_distributed_ledger_and_inbox(rng):
    params, specs, _ = make_network(rng, num_nodes=3, frames=16)
    result = run_distributed(specs, params, collab_period=2, max_rounds=4)
    # broadcasts land on even rounds only
    assert result.ledger.rounds_with_traffic() == [2, 4]
    # every broadcast round moves one scalar per (n, k) per directed pair
    per_round = 3 * 2 * 16 * WINDOW.num_bins
    assert result.ledger.units_in_round(2) == per_round
    assert result.ledger.total_units == 2 * per_round
    for node in result.nodes:
        assert sorted(node.inbox) == [j for j in range(3) if j != node.node_id]


def test_run_distributed_compressor_snapshot_consistency(rng):
    # a neighbor's inbox entry equals the sender's broadcast-time compressor
    # applied to the sender's signal, even after further local rounds
    params, specs, _ = make_network(rng, num_nodes=2, frames=16)
    result = run_distributed(specs, params, collab_period=2, max_rounds=3)
    sender = result.nodes[1]
    receiver = result.nodes[0]
    expected = compress_all_frames(specs[1].data, sender.compressor, params)
    np.testing.assert_array_equal(receiver.inbox[1], expected)


def test_run_distributed_trace_rounds_start_at_two(rng):
    params, specs, _ = make_network(rng, num_nodes=2, frames=16)
    result = run_distributed(specs, params, collab_period=2, max_rounds=5)
    for node_id in (0, 1):
        assert result.trace.rounds[node_id][0] == 2
        assert len(result.trace.per_node(node_id)) == result.rounds_run - 1


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**16), num_nodes=st.integers(1, 4))
def test_run_distributed_deterministic(seed, num_nodes):
    rng = np.random.default_rng(seed)
    params = WpeParams(delay=1, filter_order=2, max_iters=3, convergence_tol=0.0)
    specs = [random_spec(rng, 10) for _ in range(num_nodes)]
    a = run_distributed(specs, params, collab_period=2)
    b = run_distributed(specs, params, collab_period=2)
    for da, db in zip(a.desired, b.desired):
        np.testing.assert_array_equal(da.data, db.data)


def test_distributed_solve_dimension(rng):
    params, specs, _ = make_network(rng, num_nodes=3, frames=16)
    result = run_distributed(specs, params, collab_period=1, max_rounds=3)
    node = result.nodes[0]
    assert node.local_weights.shape == (WINDOW.num_bins, params.filter_order)
    assert node.cross_weights.shape == (WINDOW.num_bins, 2)
    # some cross weight is actually in use after the first broadcast
    assert np.linalg.norm(node.cross_weights) > 0
