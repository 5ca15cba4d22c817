"""Server-side round orchestration and transports (in-process and TCP)."""

from __future__ import annotations

import logging
import queue
import socket
import threading
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..channel import ChannelReport, LinkProfile, round_reports, selected_rate_ratio, transfer_seconds
from ..errors import ContractError, ProtocolError
from ..nerf import EncodingConfig, ModelParams, PosedImage, RenderConfig, psnr, render_image
from ..selector import SelectionConfig, initial_queues, select, update_queues
from .aggregate import ClientUpdate, GlobalModel, aggregate
from .client import FederatedClient
from .protocol import Fin, Hello, Model, Update, decode_message, encode_message, read_message
from .registry import Registry

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RoundRecord:
    round: int
    selected: tuple[int, ...]
    mean_psnr: float
    rate_ratio: float
    broadcast_seconds: float
    train_seconds: float
    collect_seconds: float


@dataclass
class Timing:
    broadcast: float = 0.0
    train: float = 0.0
    collect: float = 0.0


class SimTransport:
    """Clients living in this process; messages still pass through the codec.

    Transfer phases are timed with the link model, training with a fixed
    per-iteration cost, so metrics are reproducible byte for byte.
    """

    def __init__(self, clients: Sequence[FederatedClient], iter_seconds: float = 0.0):
        self.clients = {c.device_id: c for c in clients}
        self.iter_seconds = iter_seconds

    def exchange(self, model: Model, selected, reports: Sequence[ChannelReport]):
        rates = {r.device_id: r.rate for r in reports}
        frame = encode_message(model)
        updates, timing = [], Timing()
        for dev in selected:
            client = self.clients[dev]
            reply = encode_message(client.handle_model(decode_message(frame)))
            updates.append(decode_message(reply))
            timing.broadcast = max(timing.broadcast, transfer_seconds(len(frame), rates[dev]))
            timing.collect = max(timing.collect, transfer_seconds(len(reply), rates[dev]))
        timing.train = max((self.clients[d].settings.local_iters for d in selected), default=0) * self.iter_seconds
        return updates, timing

    def finish(self):
        pass


@dataclass
class ServerState:
    links: Sequence[LinkProfile]
    selection: SelectionConfig
    seed: int
    global_model: GlobalModel
    test_views: Sequence[PosedImage]
    render: RenderConfig
    encoding: EncodingConfig
    queues: dict = field(default_factory=dict)
    records: list = field(default_factory=list)
    history: list = field(default_factory=list)  # aggregated params per round, if kept
    keep_history: bool = False

    def __post_init__(self):
        if not self.queues:
            self.queues = initial_queues(p.device_id for p in self.links)
        if self.selection.k > len(self.links):
            raise ContractError(f"select_k={self.selection.k} exceeds {len(self.links)} clients", "k")

    def evaluate(self, params: ModelParams) -> float:
        if not self.test_views:
            return float("nan")
        scores = [psnr(render_image(params, v.pose, self.render, self.encoding), v) for v in self.test_views]
        return float(np.mean(scores))


def run_round(state: ServerState, transport) -> RoundRecord:
    """One synchronous round: measure, select, broadcast, train, aggregate, evaluate."""
    t = state.global_model.round + 1
    reports = round_reports(state.links, t, state.seed)
    selected = select(reports, state.queues, state.selection)
    state.queues = update_queues(state.queues, selected)
    log.debug("round %d: selected %s", t, selected)

    model_msg = Model(t, state.global_model.params.values)
    updates, timing = transport.exchange(model_msg, selected, reports)

    dims = state.global_model.params.layer_dims
    client_updates = []
    for u in updates:
        if u.round != t:
            raise ProtocolError(f"device {u.device_id} answered round {u.round} during round {t}", "round")
        if u.device_id not in selected:
            raise ProtocolError(f"device {u.device_id} was not selected in round {t}", "device_id")
        try:
            params = ModelParams(dims, u.params.astype(np.float64))
        except ContractError as exc:
            raise ProtocolError(f"device {u.device_id} sent unusable parameters: {exc}", "params") from exc
        client_updates.append(ClientUpdate(u.device_id, u.round, params, u.num_samples))
    new_params = aggregate(client_updates)
    state.global_model = GlobalModel(t, new_params)
    if state.keep_history:
        state.history.append(new_params)

    record = RoundRecord(
        round=t,
        selected=tuple(selected),
        mean_psnr=state.evaluate(new_params),
        rate_ratio=selected_rate_ratio(selected, reports),
        broadcast_seconds=timing.broadcast,
        train_seconds=timing.train,
        collect_seconds=timing.collect,
    )
    state.records.append(record)
    return record


class TcpTransport:
    """Serves registered clients over TCP.

    Reader threads only parse frames and post events; registration, update
    collection and aggregation all happen on the thread that drives rounds.
    """

    def __init__(self, registry: Registry, client_ids, phase_timeout: float = 120.0, retries: int = 1):
        registry.require(client_ids)
        self.registry = registry
        self.client_ids = sorted(client_ids)
        self.phase_timeout = phase_timeout
        self.retries = retries
        self.events: queue.Queue = queue.Queue()
        self.conns: dict[int, socket.socket] = {}
        self._closed = False
        addr = registry.server
        self.listener = socket.create_server((addr.host, addr.port), reuse_port=False)
        self.port = self.listener.getsockname()[1]
        self._acceptor = threading.Thread(target=self._accept_loop, daemon=True)
        self._acceptor.start()

    def _accept_loop(self):
        while not self._closed:
            try:
                conn, peer = self.listener.accept()
            except OSError:
                return
            threading.Thread(target=self._reader, args=(conn, peer), daemon=True).start()

    def _reader(self, conn: socket.socket, peer):
        try:
            while True:
                self.events.put(("msg", conn, read_message(conn)))
        except ProtocolError as exc:
            log.warning("protocol error from %s: %s", peer, exc)
            self.events.put(("closed", conn, exc))
        except OSError as exc:
            self.events.put(("closed", conn, exc))

    def _owner(self, conn):
        for dev, c in self.conns.items():
            if c is conn:
                return dev
        return None

    def _handle(self, kind, conn, payload):
        """Apply one event; returns an Update if one arrived."""
        if kind == "closed":
            dev = self._owner(conn)
            if dev is not None:
                log.warning("device %d disconnected", dev)
                del self.conns[dev]
            conn.close()
            return None
        msg = payload
        if isinstance(msg, Hello):
            dev = msg.device_id
            if dev not in self.client_ids:
                log.warning("rejecting HELLO from unconfigured device id %d", dev)
                _close(conn)
                return None
            old = self.conns.get(dev)
            if old is not None and old is not conn:
                log.info("device %d reconnected; closing previous connection", dev)
                _close(old)
            self.conns[dev] = conn
            log.info("device %d registered", dev)
            return None
        dev = self._owner(conn)
        if dev is None:
            log.warning("dropping %s from unregistered connection", type(msg).__name__)
            _close(conn)
            return None
        if isinstance(msg, Update):
            if msg.device_id != dev:
                log.warning("connection for device %d sent update claiming device %d", dev, msg.device_id)
                return None
            return msg
        log.warning("ignoring unexpected %s from device %d", type(msg).__name__, dev)
        return None

    def _pump(self, deadline: float):
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise TimeoutError
        try:
            event = self.events.get(timeout=remaining)
        except queue.Empty:
            raise TimeoutError from None
        return self._handle(*event)

    def wait_for_clients(self, timeout: float | None = None):
        deadline = time.monotonic() + (self.phase_timeout if timeout is None else timeout)
        while set(self.conns) != set(self.client_ids):
            try:
                self._pump(deadline)
            except TimeoutError:
                missing = sorted(set(self.client_ids) - set(self.conns))
                raise ProtocolError(f"clients {missing} never registered", "registration") from None

    def _attempt(self, model: Model, selected):
        start = time.monotonic()
        frame = encode_message(model)
        for dev in selected:
            if dev not in self.conns:
                self.wait_for_clients()
            try:
                self.conns[dev].sendall(frame)
            except OSError as exc:
                raise TimeoutError(f"send to device {dev} failed: {exc}") from exc
        sent = time.monotonic()
        deadline = sent + self.phase_timeout
        got: dict[int, Update] = {}
        first = None
        while len(got) < len(selected):
            upd = self._pump(deadline)
            if upd is None:
                continue
            if upd.round != model.round or upd.device_id not in selected:
                log.warning("discarding stale update from device %d for round %d", upd.device_id, upd.round)
                continue
            got[upd.device_id] = upd
            if first is None:
                first = time.monotonic()
        done = time.monotonic()
        return [got[d] for d in sorted(got)], Timing(sent - start, first - sent, done - first)

    def exchange(self, model: Model, selected, reports):
        for attempt in range(self.retries + 1):
            try:
                return self._attempt(model, selected)
            except TimeoutError:
                log.warning("round %d timed out (attempt %d); retrying with the same selection",
                            model.round, attempt + 1)
        raise ProtocolError(f"round {model.round} failed after {self.retries + 1} attempts", "timeout")

    def finish(self):
        frame = encode_message(Fin())
        for dev, conn in list(self.conns.items()):
            try:
                conn.sendall(frame)
            except OSError:
                log.warning("could not send FIN to device %d", dev)
        self.close()

    def close(self):
        self._closed = True
        for conn in self.conns.values():
            _close(conn)
        try:
            self.listener.close()
        except OSError:
            pass


def _close(conn: socket.socket):
    try:
        conn.shutdown(socket.SHUT_RDWR)
    except OSError:
        pass
    conn.close()
