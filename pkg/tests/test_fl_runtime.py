import math
import socket
import threading
import time

import mpmath
import numpy as np
import pytest

from fednerf.channel import LinkProfile, default_links
from fednerf.errors import ConfigError, ContractError, ProtocolError
from fednerf.fl import (ClientUpdate, FederatedClient, GlobalModel, Registry, ServerState, SimTransport,
                        TcpTransport, TrainSettings, aggregate, client_session, run_round)
from fednerf.fl.client import connect_with_backoff
from fednerf.fl.protocol import Fin, Hello, Model, read_message, send_message
from fednerf.nerf import CameraPose, EncodingConfig, ModelParams, RenderConfig, chain_dims, init_params, look_at
from fednerf.selector import SelectionConfig

DIMS = ((2, 3), (3, 4))


def upd(dev, values, n, rnd=1, dims=((1, 1),)):
    return ClientUpdate(dev, rnd, ModelParams(dims, np.asarray(values, dtype=float)), n)


def test_aggregate_identity():
    u = upd(1, [0.25, -3.0], 7, dims=((1, 1),))
    assert aggregate([u]).values.tolist() == [0.25, -3.0]


def test_aggregate_weighted_example():
    assert aggregate([upd(1, [2.0, 0.0], 1), upd(2, [6.0, 0.0], 3)]).values[0] == 5.0


def test_aggregate_matches_extended_precision(rng):
    mpmath.mp.dps = 40
    n = 2 * 3 + 3 + 3 * 4 + 4
    for _ in range(10):
        updates = [ClientUpdate(i + 1, 4, ModelParams(DIMS, rng.normal(size=n)), int(rng.integers(1, 5000)))
                   for i in range(4)]
        got = aggregate(updates).values
        total = sum(u.num_samples for u in updates)
        for j in range(n):
            exact = mpmath.fsum(mpmath.mpf(u.num_samples) * mpmath.mpf(u.params.values[j]) for u in updates) / total
            assert abs(got[j] - float(exact)) < 1e-6


def test_aggregate_permutation_invariant_exactly(rng):
    updates = [ClientUpdate(i + 1, 2, ModelParams(DIMS, rng.normal(size=25)), int(rng.integers(1, 99)))
               for i in range(5)]
    a = aggregate(updates).values
    b = aggregate(updates[::-1]).values
    c = aggregate([updates[2], updates[0], updates[4], updates[1], updates[3]]).values
    assert a.tobytes() == b.tobytes() == c.tobytes()


def test_aggregate_equal_weights_is_mean(rng):
    updates = [ClientUpdate(i + 1, 0, ModelParams(DIMS, rng.normal(size=25)), 10) for i in range(3)]
    np.testing.assert_allclose(aggregate(updates).values, np.mean([u.params.values for u in updates], axis=0),
                               atol=1e-12)


def test_aggregate_errors():
    with pytest.raises(ContractError):
        aggregate([])
    with pytest.raises(ContractError):
        aggregate([upd(1, [1.0, 0.0], 1), ClientUpdate(2, 1, ModelParams(DIMS, np.zeros(25)), 1)])
    with pytest.raises(ContractError):
        aggregate([upd(1, [1.0, 0.0], 1, rnd=1), upd(2, [1.0, 0.0], 1, rnd=2)])


def test_registry_roundtrip(tmp_path):
    reg = Registry.from_json({"0": {"host": "127.0.0.1", "port": 5000}, "1": {"host": "10.0.0.2", "port": 5001}})
    reg.save(tmp_path / "r.json")
    back = Registry.load(tmp_path / "r.json")
    assert back.to_json() == reg.to_json()
    assert back.server.port == 5000 and back.client_ids() == [1]
    with pytest.raises(ConfigError):
        back.require([1, 2])
    with pytest.raises(ConfigError):
        Registry.from_json({"1": {"host": "x"}})


# -- round orchestration on a tiny model --------------------------------------------------

SMALL_ENC = EncodingConfig(l_pos=1)
SMALL_DIMS = chain_dims([SMALL_ENC.dim, 8, 4])
SMALL_RENDER = RenderConfig(samples_per_ray=4)


def tiny_image(angle):
    from fednerf.harness.scene import SceneSpec, render_view
    eye = 4 * np.array([math.cos(angle), 0.3, math.sin(angle)])
    return render_view(SceneSpec(), CameraPose(look_at(eye), 6.0, 4, 4))


def tiny_clients(links, seed=0, iters=2):
    settings = TrainSettings(SMALL_DIMS, iters, 16, SMALL_RENDER, SMALL_ENC, {}, seed)
    return [FederatedClient(p.device_id, [tiny_image(p.device_id)], p, settings) for p in links]


def tiny_state(links, k=2, q=0.0, seed=0):
    return ServerState(links, SelectionConfig(k, q), seed,
                       GlobalModel(0, init_params(SMALL_DIMS, np.random.default_rng(seed))),
                       [tiny_image(0.0)], SMALL_RENDER, SMALL_ENC)


def test_run_round_sequence():
    links = default_links(4)
    state = tiny_state(links)
    transport = SimTransport(tiny_clients(links), iter_seconds=0.5)
    records = [run_round(state, transport) for _ in range(5)]
    assert [r.round for r in records] == [1, 2, 3, 4, 5]
    assert state.global_model.round == 5
    assert [r.selected for r in records] == [(1, 2), (3, 4), (1, 2), (3, 4), (1, 2)]
    assert all(r.train_seconds == 1.0 for r in records)
    assert all(0 < r.broadcast_seconds < 1e-3 for r in records)


def test_run_round_all_clients_selected():
    links = default_links(4)
    state = tiny_state(links, k=4)
    transport = SimTransport(tiny_clients(links))
    for _ in range(3):
        rec = run_round(state, transport)
        assert rec.selected == (1, 2, 3, 4)
        assert rec.rate_ratio == 1.0


def test_unselected_clients_do_no_work():
    links = default_links(4)
    clients = tiny_clients(links)
    state = tiny_state(links)
    run_round(state, SimTransport(clients))
    assert [c.rounds_trained for c in clients] == [1, 1, 0, 0]


def test_client_redelivery_is_idempotent():
    links = default_links(1)
    (client,) = tiny_clients(links)
    msg = Model(1, init_params(SMALL_DIMS, np.random.default_rng(0)).values)
    first = client.handle_model(msg)
    second = client.handle_model(msg)
    assert first == second


def test_client_update_carries_report():
    links = [LinkProfile(1, 66, 270.43, 0, 0.0)]
    (client,) = tiny_clients(links)
    u = client.handle_model(Model(3, init_params(SMALL_DIMS, np.random.default_rng(0)).values))
    assert (u.device_id, u.round, u.num_samples, u.rssi, u.rate_mbps_x100) == (1, 3, 16, 66, 27043)


# -- TCP sessions ----------------------------------------------------------------------------

def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def registry(n, port=None):
    port = port or free_port()
    entries = {"0": {"host": "127.0.0.1", "port": port}}
    entries.update({str(i): {"host": "127.0.0.1", "port": 0} for i in range(1, n + 1)})
    return Registry.from_json(entries)


def raw_connect(reg):
    return connect_with_backoff(reg.server.host, reg.server.port, attempts=3, base=0.05)


def test_unknown_device_rejected(caplog):
    reg = registry(2)
    transport = TcpTransport(reg, [1, 2], phase_timeout=2.0)
    try:
        sock = raw_connect(reg)
        send_message(sock, Hello(9))
        with pytest.raises(ProtocolError):
            transport.wait_for_clients(timeout=0.5)
        sock.settimeout(2.0)
        assert sock.recv(1) == b""
        assert "unconfigured device id 9" in caplog.text
    finally:
        transport.close()


def test_duplicate_hello_replaces_old_connection():
    reg = registry(1)
    transport = TcpTransport(reg, [1], phase_timeout=2.0)
    try:
        old = raw_connect(reg)
        send_message(old, Hello(1))
        transport.wait_for_clients()
        first = transport.conns[1]
        new = raw_connect(reg)
        send_message(new, Hello(1))
        deadline = time.monotonic() + 2
        while transport.conns[1] is first:
            transport._pump(deadline)
        old.settimeout(2.0)
        assert old.recv(1) == b""
        transport.finish()
        assert isinstance(read_message(new), Fin)
    finally:
        transport.close()


def test_tcp_matches_sim_rounds():
    links = default_links(4)
    reg = registry(4)
    transport = TcpTransport(reg, [1, 2, 3, 4], phase_timeout=30.0)
    codes = {}

    def run_client(c):
        codes[c.device_id] = client_session(c, reg)

    threads = [threading.Thread(target=run_client, args=(c,)) for c in tiny_clients(links)]
    for t in threads:
        t.start()
    transport.wait_for_clients()
    tcp_state = tiny_state(links)
    tcp = [run_round(tcp_state, transport) for _ in range(3)]
    transport.finish()
    for t in threads:
        t.join(10)
    assert codes == {1: 0, 2: 0, 3: 0, 4: 0}

    sim_state2 = tiny_state(links)
    transport2 = SimTransport(tiny_clients(links))
    sim = [run_round(sim_state2, transport2) for _ in range(3)]
    assert [r.selected for r in tcp] == [r.selected for r in sim]
    assert tcp_state.global_model.params.values.tobytes() == sim_state2.global_model.params.values.tobytes()


def test_round_retried_after_timeout():
    """A client that stalls once is asked again with the same model."""
    links = default_links(2)
    reg = registry(2)
    transport = TcpTransport(reg, [1, 2], phase_timeout=0.5)
    clients = tiny_clients(links)

    def flaky(c, drop_first):
        sock = raw_connect(reg)
        send_message(sock, Hello(c.device_id))
        seen = 0
        while True:
            msg = read_message(sock)
            if isinstance(msg, Fin):
                return
            seen += 1
            if drop_first and seen == 1:
                continue
            send_message(sock, c.handle_model(msg))

    threads = [threading.Thread(target=flaky, args=(c, c.device_id == 2), daemon=True) for c in clients]
    for t in threads:
        t.start()
    transport.wait_for_clients()
    state = tiny_state(links)
    rec = run_round(state, transport)
    assert rec.selected == (1, 2)
    transport.finish()


def test_round_aborts_after_second_timeout():
    links = default_links(1)
    reg = registry(1)
    transport = TcpTransport(reg, [1], phase_timeout=0.2)
    try:
        sock = raw_connect(reg)
        send_message(sock, Hello(1))
        transport.wait_for_clients()
        with pytest.raises(ProtocolError, match="after 2 attempts"):
            run_round(tiny_state(links, k=1), transport)
    finally:
        transport.close()
        sock.close()


def test_client_gives_up_after_backoff():
    delays = []
    port = free_port()
    with pytest.raises(ConnectionError):
        connect_with_backoff("127.0.0.1", port, sleep=delays.append)
    assert delays == [1.0, 2.0, 4.0, 8.0]


def test_client_exits_zero_on_fin():
    reg = registry(1)
    transport = TcpTransport(reg, [1], phase_timeout=5.0)
    (client,) = tiny_clients(default_links(1))
    result = {}
    t = threading.Thread(target=lambda: result.setdefault("code", client_session(client, reg)))
    t.start()
    transport.wait_for_clients()
    transport.finish()
    t.join(5)
    assert result == {"code": 0}
