"""Federated orchestration: aggregation, rounds, registry and wire protocol."""

from .aggregate import ClientUpdate, GlobalModel, aggregate
from .client import FederatedClient, TrainSettings, client_session
from .protocol import Fin, Hello, Model, Update, decode_message, encode_message
from .registry import Registry
from .server import RoundRecord, ServerState, SimTransport, TcpTransport, run_round

__all__ = [
    "ClientUpdate", "GlobalModel", "aggregate",
    "FederatedClient", "TrainSettings", "client_session",
    "Fin", "Hello", "Model", "Update", "decode_message", "encode_message",
    "Registry",
    "RoundRecord", "ServerState", "SimTransport", "TcpTransport", "run_round",
]
