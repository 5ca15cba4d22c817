from __future__ import annotations

import logging
import socket
import time
from dataclasses import dataclass

import numpy as np

from .. import seeding
from ..channel import LinkProfile, sample_report
from ..errors import ProtocolError
from ..nerf import EncodingConfig, ModelParams, OptimizerState, RenderConfig, local_train, ray_pool
from .protocol import Fin, Hello, Model, Update, read_message, send_message
from .registry import Registry

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainSettings:
    layer_dims: tuple
    local_iters: int
    rays_per_batch: int
    render: RenderConfig
    encoding: EncodingConfig
    optimizer: dict
    seed: int


class FederatedClient:
    """Client-side trainer: turns a broadcast global model into an update.

    Each round starts from a fresh Adam state, so an update depends only on
    (global params, round, seed) and a retried round reproduces it exactly.
    """

    def __init__(self, device_id: int, images, link: LinkProfile, settings: TrainSettings):
        self.device_id = device_id
        self.pool = ray_pool(images)
        self.num_samples = len(self.pool)
        self.link = link
        self.settings = settings
        self.n_params = sum(i * o + o for i, o in settings.layer_dims)
        self.rounds_trained = 0
        self.last_loss = float("nan")

    def handle_model(self, msg: Model) -> Update:
        s = self.settings
        params = ModelParams(s.layer_dims, msg.params.astype(np.float64))
        rng = seeding.stream(s.seed, seeding.TRAIN, self.device_id, msg.round)
        opt = OptimizerState.fresh(self.n_params, **s.optimizer)
        params, _, self.last_loss = local_train(
            params, self.pool, s.local_iters, opt, s.render, s.encoding, rng,
            rays_per_batch=s.rays_per_batch, round_index=msg.round,
        )
        self.rounds_trained += 1
        report = sample_report(self.link, msg.round,
                               seeding.stream(s.seed, seeding.CHANNEL, self.device_id, msg.round))
        return Update(self.device_id, msg.round, self.num_samples, report.rssi,
                      int(round(report.rate * 100)), params.values)


def connect_with_backoff(host: str, port: int, attempts: int = 5, base: float = 1.0,
                         factor: float = 2.0, sleep=time.sleep) -> socket.socket:
    delay = base
    for attempt in range(1, attempts + 1):
        try:
            return socket.create_connection((host, port))
        except OSError as exc:
            if attempt == attempts:
                raise ConnectionError(f"could not reach server at {host}:{port} after {attempts} attempts") from exc
            log.info("connect to %s:%s failed (%s); retrying in %.1fs", host, port, exc, delay)
            sleep(delay)
            delay *= factor
    raise AssertionError("unreachable")


def client_session(client: FederatedClient, registry: Registry, sleep=time.sleep) -> int:
    """Connect, announce ourselves, and serve training requests until FIN.

    Returns 0 on a clean FIN. Raises ``ConnectionError`` if the server cannot
    be reached and ``ProtocolError`` if it drops or confuses the session.
    """
    addr = registry.server
    sock = connect_with_backoff(addr.host, addr.port, sleep=sleep)
    with sock:
        send_message(sock, Hello(client.device_id))
        log.info("device %d registered with %s:%d", client.device_id, addr.host, addr.port)
        while True:
            try:
                msg = read_message(sock)
            except ConnectionError as exc:
                raise ProtocolError(f"server closed the session: {exc}", "connection") from exc
            if isinstance(msg, Fin):
                log.info("device %d received FIN", client.device_id)
                return 0
            if not isinstance(msg, Model):
                raise ProtocolError(f"unexpected {type(msg).__name__} from server", "type")
            update = client.handle_model(msg)
            send_message(sock, update)
            log.debug("device %d answered round %d (loss %.5f)", client.device_id, msg.round, client.last_loss)
