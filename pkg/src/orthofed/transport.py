"""Length-prefixed binary protocol and TCP execution of the round loop.

Frame layout (little-endian):
  magic u32 = 0x46444F54 | version u8 = 1 | msg_type u8 | reserved u16
  | payload_len u64 | payload

Messages: HELLO (client_id u32, d u32, K u32), GLOBAL/UPDATE
(round u32, K*d float64 classifier, plus d*d float64 transform
parameter only in the all_global variant), FIN (empty).

Only the classifier and round bookkeeping ever cross the wire; the
transform parameter stays client-local unless the variant explicitly
declares it global.
"""

from __future__ import annotations

import logging
import socket
import struct
import threading
from dataclasses import dataclass

import numpy as np

from .errors import ProtocolError
from .federation import (
    ClientState,
    FederationConfig,
    FederationResult,
    RoundRecord,
    ServerState,
    aggregate,
    finish_round,
    local_update,
    make_probe,
)
from .rng import derive_seed

logger = logging.getLogger(__name__)

MAGIC = 0x46444F54
VERSION = 1
MSG_HELLO = 1
MSG_GLOBAL = 2
MSG_UPDATE = 3
MSG_FIN = 4

_HEADER = struct.Struct("<IBBHQ")
_HELLO = struct.Struct("<III")
_ROUND = struct.Struct("<I")

SOCKET_TIMEOUT = 300.0


def encode_frame(msg_type: int, payload: bytes = b"") -> bytes:
    return _HEADER.pack(MAGIC, VERSION, msg_type, 0, len(payload)) + payload


def send_frame(sock, msg_type: int, payload: bytes = b"") -> None:
    sock.sendall(encode_frame(msg_type, payload))


def _recv_exact(sock, count: int) -> bytes:
    chunks = []
    remaining = count
    while remaining > 0:
        chunk = sock.recv(min(remaining, 1 << 20))
        if not chunk:
            raise ProtocolError("connection closed mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def recv_frame(sock) -> tuple[int, bytes]:
    header = _recv_exact(sock, _HEADER.size)
    magic, version, msg_type, _reserved, payload_len = _HEADER.unpack(header)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic 0x{magic:08X}")
    if version != VERSION:
        raise ProtocolError(f"unsupported protocol version {version}")
    if msg_type not in (MSG_HELLO, MSG_GLOBAL, MSG_UPDATE, MSG_FIN):
        raise ProtocolError(f"unknown message type {msg_type}")
    payload = _recv_exact(sock, payload_len) if payload_len else b""
    return msg_type, payload


def encode_hello(client_id: int, dimension: int, class_count: int) -> bytes:
    return _HELLO.pack(client_id, dimension, class_count)


def decode_hello(payload: bytes) -> tuple[int, int, int]:
    if len(payload) != _HELLO.size:
        raise ProtocolError(f"HELLO payload must be {_HELLO.size} bytes, got {len(payload)}")
    return _HELLO.unpack(payload)


def encode_params(
    round_index: int, classifier: np.ndarray, x: np.ndarray | None = None
) -> bytes:
    payload = _ROUND.pack(round_index) + classifier.astype("<f8").tobytes()
    if x is not None:
        payload += x.astype("<f8").tobytes()
    return payload


def decode_params(
    payload: bytes, class_count: int, dimension: int, expect_x: bool
) -> tuple[int, np.ndarray, np.ndarray | None]:
    base = _ROUND.size + 8 * class_count * dimension
    expected = base + (8 * dimension * dimension if expect_x else 0)
    if len(payload) != expected:
        raise ProtocolError(
            f"parameter payload is {len(payload)} bytes, expected {expected}"
        )
    (round_index,) = _ROUND.unpack_from(payload)
    classifier = np.frombuffer(
        payload, dtype="<f8", count=class_count * dimension, offset=_ROUND.size
    ).reshape(class_count, dimension).copy()
    x = None
    if expect_x:
        x = np.frombuffer(payload, dtype="<f8", offset=base).reshape(
            dimension, dimension
        ).copy()
    return round_index, classifier, x


class FederationServer:
    """Barrier-and-average server over TCP.

    Per round: broadcast GLOBAL, block for one UPDATE per client,
    average in client-id order. After the last round the final
    parameters go out as one extra GLOBAL, then FIN.
    """

    def __init__(
        self,
        server: ServerState,
        cfg: FederationConfig,
        host: str = "127.0.0.1",
        port: int = 0,
    ):
        self.server = server
        self.cfg = cfg
        self._listener = socket.create_server((host, port))
        self._listener.settimeout(SOCKET_TIMEOUT)
        self.address = self._listener.getsockname()[:2]

    def serve(self) -> ServerState:
        connections: dict[int, socket.socket] = {}
        try:
            while len(connections) < self.server.expected_clients:
                conn, _peer = self._listener.accept()
                conn.settimeout(SOCKET_TIMEOUT)
                msg_type, payload = recv_frame(conn)
                if msg_type != MSG_HELLO:
                    raise ProtocolError(f"expected HELLO, got message type {msg_type}")
                client_id, dimension, class_count = decode_hello(payload)
                if (class_count, dimension) != self.server.classifier.shape:
                    raise ProtocolError(
                        f"client {client_id} announced {class_count}x{dimension}, server "
                        f"classifier is {self.server.classifier.shape}"
                    )
                if client_id in connections:
                    raise ProtocolError(f"duplicate client id {client_id}")
                connections[client_id] = conn
            ordered = [connections[cid] for cid in sorted(connections)]

            for round_index in range(self.cfg.rounds):
                payload = encode_params(
                    round_index, self.server.classifier, self.server.x_global
                )
                for conn in ordered:
                    send_frame(conn, MSG_GLOBAL, payload)
                updates: dict[int, tuple[np.ndarray, np.ndarray | None]] = {}
                for client_id in sorted(connections):
                    msg_type, payload = recv_frame(connections[client_id])
                    if msg_type != MSG_UPDATE:
                        raise ProtocolError(
                            f"expected UPDATE, got message type {msg_type}"
                        )
                    class_count, dimension = self.server.classifier.shape
                    got_round, classifier, x = decode_params(
                        payload,
                        class_count,
                        dimension,
                        expect_x=self.server.x_global is not None,
                    )
                    if got_round != round_index:
                        raise ProtocolError(
                            f"client {client_id} answered round {got_round} "
                            f"during round {round_index}"
                        )
                    updates[client_id] = (classifier, x)
                in_order = [updates[cid] for cid in sorted(updates)]
                self.server.classifier = aggregate([u[0] for u in in_order])
                if self.server.x_global is not None:
                    self.server.x_global = aggregate([u[1] for u in in_order])
                self.server.round_index = round_index + 1

            final = encode_params(
                self.cfg.rounds, self.server.classifier, self.server.x_global
            )
            for conn in ordered:
                send_frame(conn, MSG_GLOBAL, final)
                send_frame(conn, MSG_FIN)
            return self.server
        except ProtocolError as exc:
            logger.error("protocol error, closing federation: %s", exc)
            raise
        finally:
            for conn in connections.values():
                conn.close()
            self._listener.close()


def run_tcp_client(
    client: ClientState,
    cfg: FederationConfig,
    host: str,
    port: int,
    probe: tuple[np.ndarray, np.ndarray],
    sock: socket.socket | None = None,
) -> ClientState:
    """Client side of the round loop over one TCP connection."""
    own_socket = sock is None
    if sock is None:
        sock = socket.create_connection((host, port), timeout=SOCKET_TIMEOUT)
    expect_x = client.variant == "all_global"
    shape = client.head.classifier.shape
    try:
        send_frame(
            sock, MSG_HELLO, encode_hello(client.client_id, shape[1], shape[0])
        )
        for round_index in range(cfg.rounds):
            msg_type, payload = recv_frame(sock)
            if msg_type != MSG_GLOBAL:
                raise ProtocolError(f"expected GLOBAL, got message type {msg_type}")
            got_round, classifier, x_global = decode_params(
                payload, shape[0], shape[1], expect_x
            )
            if got_round != round_index:
                raise ProtocolError(
                    f"server sent round {got_round}, expected {round_index}"
                )
            if round_index > 0:
                finish_round(client, classifier, x_global, round_index - 1, cfg, probe)
            update = local_update(
                client,
                classifier,
                epochs=cfg.epochs,
                batch_size=cfg.batch_size,
                seed=derive_seed(cfg.seed, client.client_id, round_index),
                incoming_x=x_global,
            )
            send_frame(
                sock, MSG_UPDATE, encode_params(round_index, update.classifier, update.x)
            )
        msg_type, payload = recv_frame(sock)
        if msg_type != MSG_GLOBAL:
            raise ProtocolError(f"expected final GLOBAL, got message type {msg_type}")
        got_round, classifier, x_global = decode_params(payload, shape[0], shape[1], expect_x)
        if got_round != cfg.rounds:
            raise ProtocolError(f"final broadcast carries round {got_round}")
        finish_round(client, classifier, x_global, cfg.rounds - 1, cfg, probe)
        msg_type, _payload = recv_frame(sock)
        if msg_type != MSG_FIN:
            raise ProtocolError(f"expected FIN, got message type {msg_type}")
        return client
    except ProtocolError as exc:
        logger.error("protocol error on client %d: %s", client.client_id, exc)
        raise
    finally:
        if own_socket:
            sock.close()


@dataclass
class _WorkerOutcome:
    error: BaseException | None = None


def run_tcp_federation(
    server: ServerState,
    clients: list[ClientState],
    cfg: FederationConfig,
    host: str = "127.0.0.1",
    port: int = 0,
) -> FederationResult:
    """Run the round loop over loopback TCP with one thread per participant."""
    clients = sorted(clients, key=lambda c: c.client_id)
    head = clients[0].head
    probe = make_probe(cfg.seed, cfg.probe_size, head.dimension, head.class_count)
    listener = FederationServer(server, cfg, host=host, port=port)
    bound_host, bound_port = listener.address

    outcomes = {client.client_id: _WorkerOutcome() for client in clients}
    server_outcome = _WorkerOutcome()

    def server_main():
        try:
            listener.serve()
        except BaseException as exc:  # noqa: BLE001 - reported to the caller
            server_outcome.error = exc

    def client_main(client: ClientState):
        try:
            run_tcp_client(client, cfg, bound_host, bound_port, probe)
        except BaseException as exc:  # noqa: BLE001 - reported to the caller
            outcomes[client.client_id].error = exc

    threads = [threading.Thread(target=server_main, name="fed-server")]
    threads += [
        threading.Thread(target=client_main, args=(client,), name=f"fed-client-{client.client_id}")
        for client in clients
    ]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()

    if server_outcome.error is not None:
        raise server_outcome.error
    for client in clients:
        if outcomes[client.client_id].error is not None:
            raise outcomes[client.client_id].error

    rounds = [
        RoundRecord(
            round_index=r,
            val_accuracy={
                c.client_id: dict(c.val_history)[r] for c in clients
            },
        )
        for r in range(cfg.rounds)
    ]
    return FederationResult(server=server, clients=clients, rounds=rounds)
