"""Federated training: client local updates, server averaging, round loop.

One round: the server broadcasts the shared classifier, every client
runs E epochs of local SGD on its own split, sends back its classifier
(and nothing else, unless the variant explicitly shares the transform
parameter), and the server takes the unweighted mean. Client randomness
is derived from (global seed, client id, round) so results do not
depend on scheduling or transport.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cayley import BlockSpec, LinearTransform, LocalTransform, identity_transform
from .data import SplitDataset
from .errors import DimensionMismatchError
from .head import HeadParams, gradients
from .rng import SplitMix64, derive_seed
from .sgd import HeadOptimizer, OptimConfig

VARIANTS = ("orthogonal", "unconstrained", "identity_local", "all_global")


def trains_transform(variant: str) -> bool:
    """identity_local freezes the local map at I; all others train it."""
    return variant in ("orthogonal", "unconstrained", "all_global")


def shares_transform(variant: str) -> bool:
    """all_global treats the transform parameter as a global (averaged) one."""
    return variant == "all_global"


def initial_transform(spec: BlockSpec, variant: str):
    """All variants start at parameter I, i.e. an identity map."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if variant == "unconstrained":
        return LinearTransform(spec, np.eye(spec.dimension))
    return identity_transform(spec)


@dataclass
class FederationConfig:
    rounds: int
    epochs: int = 1
    batch_size: int = 32
    seed: int = 0
    sample_every: int = 10  # cadence of kappa/gradient-probe sampling
    probe_size: int = 64

    def __post_init__(self):
        if self.rounds < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("rounds, epochs and batch_size must be >= 1")

    def is_sampled_round(self, round_index: int) -> bool:
        return round_index % self.sample_every == 0 or round_index == self.rounds - 1


@dataclass
class ClientState:
    """One client's parameters, data, optimizer, and per-round bookkeeping."""

    client_id: int
    domain: str
    head: HeadParams
    optimizer: HeadOptimizer
    data: SplitDataset
    variant: str
    val_history: list[tuple[int, float]] = field(default_factory=list)
    kappa_history: list[tuple[int, float]] = field(default_factory=list)
    q_residual_history: list[tuple[int, float]] = field(default_factory=list)  # ||Q^T Q - I||_F
    probe_history: list[tuple[int, np.ndarray]] = field(default_factory=list)
    best_val_accuracy: float = -1.0
    best_head: HeadParams | None = None


@dataclass
class ServerState:
    """Shared parameters and round counter; the server's own local map is I."""

    classifier: np.ndarray
    expected_clients: int
    round_index: int = 0
    x_global: np.ndarray | None = None  # all_global variant only


@dataclass(frozen=True)
class ClientUpdate:
    """Exactly what leaves a client: the classifier, plus X only when shared."""

    client_id: int
    classifier: np.ndarray
    x: np.ndarray | None = None


@dataclass(frozen=True)
class RoundRecord:
    round_index: int
    val_accuracy: dict[int, float]


@dataclass
class FederationResult:
    server: ServerState
    clients: list[ClientState]
    rounds: list[RoundRecord]


def make_client(
    client_id: int,
    data: SplitDataset,
    classifier: np.ndarray,
    *,
    tau: float,
    optim: OptimConfig,
    block_count: int = 1,
    variant: str = "orthogonal",
) -> ClientState:
    spec = BlockSpec(dimension=data.train.dimension, block_count=block_count)
    head = HeadParams(
        classifier=classifier.copy(),
        transform=initial_transform(spec, variant),
        tau=tau,
    )
    return ClientState(
        client_id=client_id,
        domain=data.domain_name,
        head=head,
        optimizer=HeadOptimizer(optim),
        data=data,
        variant=variant,
    )


def run_local_epochs(
    head: HeadParams,
    optimizer: HeadOptimizer,
    features: np.ndarray,
    labels: np.ndarray,
    *,
    epochs: int,
    batch_size: int,
    seed: int,
    train_transform: bool = True,
) -> HeadParams:
    """Seeded-shuffle mini-batch SGD over the given examples."""
    n = features.shape[0]
    for epoch in range(epochs):
        perm = SplitMix64(derive_seed(seed, "epoch", epoch)).permutation(n)
        for start in range(0, n, batch_size):
            batch = perm[start : start + batch_size]
            grads = gradients(head, features[batch], labels[batch])
            head = optimizer.step(head, grads, train_transform=train_transform)
    return head


def local_update(
    client: ClientState,
    classifier: np.ndarray,
    *,
    epochs: int,
    batch_size: int,
    seed: int,
    incoming_x: np.ndarray | None = None,
) -> ClientUpdate:
    """Adopt the broadcast parameters, train locally, emit the outgoing update."""
    if classifier.shape != client.head.classifier.shape:
        raise DimensionMismatchError(
            f"broadcast classifier shape {classifier.shape} does not match "
            f"client shape {client.head.classifier.shape}"
        )
    head = client.head.with_classifier(classifier.copy())
    if incoming_x is not None:
        head = head.with_transform(head.transform.replaced(incoming_x))
    head = run_local_epochs(
        head,
        client.optimizer,
        client.data.train.features,
        client.data.train.labels,
        epochs=epochs,
        batch_size=batch_size,
        seed=seed,
        train_transform=trains_transform(client.variant),
    )
    client.head = head
    outgoing_x = head.transform.x.copy() if shares_transform(client.variant) else None
    return ClientUpdate(
        client_id=client.client_id,
        classifier=head.classifier.copy(),
        x=outgoing_x,
    )


def aggregate(updates) -> np.ndarray:
    """Unweighted mean, summed in the order given (callers pass client-id order)."""
    matrices = list(updates)
    if not matrices:
        raise ValueError("cannot aggregate an empty update set")
    shape = matrices[0].shape
    total = np.zeros(shape, dtype=np.float64)
    for matrix in matrices:
        if matrix.shape != shape:
            raise DimensionMismatchError(
                f"update shape {matrix.shape} does not match {shape}"
            )
        total += matrix
    return total / len(matrices)


def make_probe(seed: int, size: int, dimension: int, class_count: int):
    """Shared probe batch for gradient diagnostics, identical for every client."""
    rng = SplitMix64(derive_seed(seed, "probe"))
    features = rng.normals(size * dimension).reshape(size, dimension)
    features /= np.maximum(np.linalg.norm(features, axis=1)[:, None], 1e-12)
    labels = np.array([rng.integer(class_count) for _ in range(size)], dtype=np.int64)
    return features, labels


def _validation_accuracy(client: ClientState) -> float:
    from .evaluation import evaluate  # local import: evaluation builds on this module

    return evaluate(client.head, client.data.val)


def finish_round(
    client: ClientState,
    aggregated_classifier: np.ndarray,
    aggregated_x: np.ndarray | None,
    round_index: int,
    cfg: FederationConfig,
    probe: tuple[np.ndarray, np.ndarray],
) -> float:
    """Adopt the new global parameters, then record validation and diagnostics."""
    from . import linalg

    client.head = client.head.with_classifier(aggregated_classifier.copy())
    if aggregated_x is not None:
        client.head = client.head.with_transform(
            client.head.transform.replaced(aggregated_x)
        )
    accuracy = _validation_accuracy(client)
    client.val_history.append((round_index, accuracy))
    if accuracy > client.best_val_accuracy:
        client.best_val_accuracy = accuracy
        client.best_head = client.head
    if cfg.is_sampled_round(round_index):
        q = client.head.transform.q
        client.kappa_history.append((round_index, linalg.condition_number(q)))
        client.q_residual_history.append(
            (round_index, float(np.linalg.norm(q.T @ q - np.eye(q.shape[0]))))
        )
        probe_features, probe_labels = probe
        grads = gradients(client.head, probe_features, probe_labels)
        client.probe_history.append((round_index, grads.grad_classifier))
    return accuracy


def run_federation(
    server: ServerState,
    clients: list[ClientState],
    cfg: FederationConfig,
) -> FederationResult:
    """In-process reference execution of the round loop."""
    if not clients:
        raise ValueError("need at least one client")
    clients = sorted(clients, key=lambda c: c.client_id)
    head = clients[0].head
    probe = make_probe(cfg.seed, cfg.probe_size, head.dimension, head.class_count)

    rounds: list[RoundRecord] = []
    for round_index in range(cfg.rounds):
        updates = [
            local_update(
                client,
                server.classifier,
                epochs=cfg.epochs,
                batch_size=cfg.batch_size,
                seed=derive_seed(cfg.seed, client.client_id, round_index),
                incoming_x=server.x_global,
            )
            for client in clients
        ]
        server.classifier = aggregate([u.classifier for u in updates])
        if server.x_global is not None:
            server.x_global = aggregate([u.x for u in updates])
        server.round_index = round_index + 1

        record: dict[int, float] = {}
        for client in clients:
            record[client.client_id] = finish_round(
                client, server.classifier, server.x_global, round_index, cfg, probe
            )
        rounds.append(RoundRecord(round_index=round_index, val_accuracy=record))
    return FederationResult(server=server, clients=clients, rounds=rounds)
