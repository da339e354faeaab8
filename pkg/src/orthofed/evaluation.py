"""Leave-one-domain-out evaluation, aggregate metrics, and diagnostics.

For each fold one domain is held out: the remaining domains train a
federation, the server model (identity local map) is scored on the
held-out domain's test split (generalization), and every training
client's personalized model is scored on its own test split
(personalization). Three aggregates summarize the resulting accuracy
matrix; condition-number traces and pairwise gradient discrepancies
verify that orthogonal local maps keep clients' classifier gradients
within the theoretical bound 2*tau*(kappa_i + kappa_j).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import linalg
from .cayley import BlockSpec, dof, identity_transform
from .config import ExperimentConfig
from .data import (
    EmbeddingDataset,
    Manifest,
    SplitDataset,
    load_domains,
    read_fcls,
    split,
)
from .errors import ConfigError
from .federation import (
    ClientState,
    FederationConfig,
    FederationResult,
    ServerState,
    gradients,
    make_client,
    make_probe,
    run_federation,
    shares_transform,
)
from .head import HeadParams
from .rng import SplitMix64, derive_seed
from .sgd import OptimConfig


def evaluate(params: HeadParams, dataset: EmbeddingDataset) -> float:
    """Fraction of correctly predicted examples."""
    from .head import predict

    if len(dataset) == 0:
        raise ValueError("cannot evaluate an empty dataset")
    predictions = predict(params, dataset.features)
    return float(np.mean(predictions == dataset.labels))


def compute_metrics(acc_matrix: np.ndarray) -> tuple[float, float, float]:
    """(generalization, personalization, comprehensive) from an N x N grid.

    Generalization averages the diagonal (server model on held-out
    domains), personalization averages each fold's off-diagonal mean,
    and comprehensive is the grand mean over all entries.
    """
    matrix = np.asarray(acc_matrix, dtype=np.float64)
    n = matrix.shape[0]
    if matrix.shape != (n, n) or n < 2:
        raise ValueError(f"accuracy matrix must be square with N >= 2, got {matrix.shape}")
    generalization = float(np.mean(np.diag(matrix)))
    off_diag = ~np.eye(n, dtype=bool)
    personalization = float(
        np.mean([matrix[j][off_diag[j]].mean() for j in range(n)])
    )
    comprehensive = float(np.mean([matrix[j].mean() for j in range(n)]))
    return generalization, personalization, comprehensive


@dataclass(frozen=True)
class PairDiscrepancy:
    client_a: str
    client_b: str
    discrepancy: float
    bound: float


@dataclass
class DiagnosticsRecord:
    kappas: dict[str, float]
    pairs: list[PairDiscrepancy]
    dof: int


def diagnose(
    clients: list[ClientState],
    probe: tuple[np.ndarray, np.ndarray] | None = None,
    seed: int = 0,
    probe_size: int = 64,
) -> DiagnosticsRecord:
    """Condition numbers plus pairwise classifier-gradient discrepancies
    on a probe batch shared by every client."""
    if len(clients) < 2:
        raise ValueError("diagnostics needs at least two clients")
    head = clients[0].head
    if probe is None:
        probe = make_probe(seed, probe_size, head.dimension, head.class_count)
    features, labels = probe
    kappas = {
        c.domain: linalg.condition_number(c.head.transform.q) for c in clients
    }
    grads = {
        c.domain: gradients(c.head, features, labels).grad_classifier for c in clients
    }
    pairs: list[PairDiscrepancy] = []
    names = [c.domain for c in clients]
    for a_index in range(len(names)):
        for b_index in range(a_index + 1, len(names)):
            a, b = names[a_index], names[b_index]
            pairs.append(
                PairDiscrepancy(
                    client_a=a,
                    client_b=b,
                    discrepancy=float(np.linalg.norm(grads[a] - grads[b])),
                    bound=2.0 * head.tau * (kappas[a] + kappas[b]),
                )
            )
    return DiagnosticsRecord(
        kappas=kappas, pairs=pairs, dof=dof(clients[0].head.transform.spec)
    )


@dataclass
class MetricsReport:
    generalization: float
    personalization: float
    comprehensive: float
    domains: list[str]
    acc_matrix: list[list[float]]  # headline: best-validation client snapshots
    acc_matrix_final: list[list[float]]  # final-round client models
    metrics_final: dict[str, float]
    kappa_traces: dict[str, dict[str, list[list[float]]]]  # fold -> client -> [round, kappa]
    max_gradient_discrepancy: float
    gradient_discrepancy_bound: float
    dof: int
    config: dict

    def to_json(self) -> dict:
        return {
            "generalization": self.generalization,
            "personalization": self.personalization,
            "comprehensive": self.comprehensive,
            "domains": self.domains,
            "acc_matrix": self.acc_matrix,
            "acc_matrix_final": self.acc_matrix_final,
            "metrics_final": self.metrics_final,
            "kappa_traces": self.kappa_traces,
            "max_gradient_discrepancy": self.max_gradient_discrepancy,
            "gradient_discrepancy_bound": self.gradient_discrepancy_bound,
            "dof": self.dof,
            "config": self.config,
        }


@dataclass
class DiagnosticsRow:
    fold: str
    round_index: int
    client: str
    kappa: float
    pairwise_discrepancy: float
    bound: float


@dataclass
class LeaveOneOutResult:
    report: MetricsReport
    diagnostics: list[DiagnosticsRow]
    run_config: dict = field(default_factory=dict)  # full echo incl. execution keys
    federations: dict[str, FederationResult] = field(default_factory=dict)


def initial_classifier(cfg: ExperimentConfig, class_count: int, dimension: int) -> np.ndarray:
    """Shared classifier init: small random rows, or rows loaded from file."""
    kind, _, path = cfg.classifier_init.partition(":")
    if kind == "file":
        rows = read_fcls(path)
        if rows.shape != (class_count, dimension):
            raise ConfigError(
                f"classifier init {path} has shape {rows.shape}, expected "
                f"({class_count}, {dimension})"
            )
        return rows
    rng = SplitMix64(derive_seed(cfg.seed, "classifier"))
    return 0.01 * rng.normals(class_count * dimension).reshape(class_count, dimension)


def server_head(classifier: np.ndarray, block_count: int, tau: float) -> HeadParams:
    """Server-side model: the local map is pinned to the identity."""
    spec = BlockSpec(dimension=classifier.shape[1], block_count=block_count)
    return HeadParams(classifier=classifier, transform=identity_transform(spec), tau=tau)


def run_fold(
    training: list[SplitDataset],
    cfg: ExperimentConfig,
    classifier0: np.ndarray,
) -> FederationResult:
    """One federation over the given training domains (sorted by name)."""
    ordered = sorted(training, key=lambda s: s.domain_name)
    optim = OptimConfig(
        learning_rate=cfg.learning_rate,
        momentum=cfg.momentum,
        weight_decay=cfg.weight_decay,
    )
    clients = [
        make_client(
            client_id,
            data,
            classifier0,
            tau=cfg.tau,
            optim=optim,
            block_count=cfg.block_count,
            variant=cfg.variant,
        )
        for client_id, data in enumerate(ordered)
    ]
    server = ServerState(
        classifier=classifier0.copy(),
        expected_clients=len(clients),
        x_global=np.eye(classifier0.shape[1]) if shares_transform(cfg.variant) else None,
    )
    fed_cfg = FederationConfig(
        rounds=cfg.rounds,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        seed=cfg.seed,
        sample_every=cfg.sample_every,
        probe_size=cfg.probe_size,
    )
    mode = cfg.transport_mode()
    if mode[0] == "tcp":
        from .transport import run_tcp_federation

        return run_tcp_federation(server, clients, fed_cfg, host=mode[1], port=mode[2])
    return run_federation(server, clients, fed_cfg)


def _fold_diagnostics(fold_name: str, result: FederationResult) -> list[DiagnosticsRow]:
    """Kappa plus worst pairwise probe discrepancy per sampled round."""
    rows: list[DiagnosticsRow] = []
    clients = result.clients
    by_round: dict[int, dict[str, tuple[float, np.ndarray]]] = {}
    for client in clients:
        kappas = dict(client.kappa_history)
        for round_index, grad in client.probe_history:
            by_round.setdefault(round_index, {})[client.domain] = (
                kappas[round_index],
                grad,
            )
    tau = clients[0].head.tau
    for round_index in sorted(by_round):
        entries = by_round[round_index]
        for name, (kappa, grad) in sorted(entries.items()):
            worst = 0.0
            worst_bound = 0.0
            for other, (other_kappa, other_grad) in entries.items():
                if other == name:
                    continue
                discrepancy = float(np.linalg.norm(grad - other_grad))
                if discrepancy >= worst:
                    worst = discrepancy
                    worst_bound = 2.0 * tau * (kappa + other_kappa)
            rows.append(
                DiagnosticsRow(
                    fold=fold_name,
                    round_index=round_index,
                    client=name,
                    kappa=kappa,
                    pairwise_discrepancy=worst,
                    bound=worst_bound,
                )
            )
    return rows


def leave_one_out(manifest: Manifest, cfg: ExperimentConfig) -> LeaveOneOutResult:
    """Run one federation per held-out domain and assemble the report."""
    domains = load_domains(manifest)
    if len(domains) < 2:
        raise ConfigError("leave-one-domain-out needs at least 2 domains")
    if manifest.dimension % cfg.block_count != 0:
        raise ConfigError(
            f"block_count {cfg.block_count} does not divide dimension {manifest.dimension}"
        )
    splits = {
        d.domain_name: split(d, derive_seed(cfg.seed, "split", d.domain_name))
        for d in domains
    }
    classifier0 = initial_classifier(cfg, manifest.class_count, manifest.dimension)

    names = [d.domain_name for d in domains]
    n = len(names)
    acc_best = np.zeros((n, n))
    acc_final = np.zeros((n, n))
    kappa_traces: dict[str, dict[str, list[list[float]]]] = {}
    diagnostics: list[DiagnosticsRow] = []
    federations: dict[str, FederationResult] = {}

    for j, held_out in enumerate(names):
        training = [splits[name] for name in names if name != held_out]
        result = run_fold(training, cfg, classifier0)
        federations[held_out] = result

        server = server_head(result.server.classifier, cfg.block_count, cfg.tau)
        acc_best[j, j] = evaluate(server, splits[held_out].test)
        acc_final[j, j] = acc_best[j, j]
        for client in result.clients:
            i = names.index(client.domain)
            own_test = splits[client.domain].test
            best = client.best_head if client.best_head is not None else client.head
            acc_best[j, i] = evaluate(best, own_test)
            acc_final[j, i] = evaluate(client.head, own_test)

        kappa_traces[held_out] = {
            client.domain: [[float(r), float(k)] for r, k in client.kappa_history]
            for client in result.clients
        }
        diagnostics.extend(_fold_diagnostics(held_out, result))

    generalization, personalization, comprehensive = compute_metrics(acc_best)
    gen_final, pers_final, comp_final = compute_metrics(acc_final)
    worst_row = max(diagnostics, key=lambda r: r.pairwise_discrepancy, default=None)
    report = MetricsReport(
        generalization=generalization,
        personalization=personalization,
        comprehensive=comprehensive,
        domains=names,
        acc_matrix=acc_best.tolist(),
        acc_matrix_final=acc_final.tolist(),
        metrics_final={
            "generalization": gen_final,
            "personalization": pers_final,
            "comprehensive": comp_final,
        },
        kappa_traces=kappa_traces,
        max_gradient_discrepancy=worst_row.pairwise_discrepancy if worst_row else 0.0,
        gradient_discrepancy_bound=worst_row.bound if worst_row else 0.0,
        dof=dof(BlockSpec(manifest.dimension, cfg.block_count)),
        config=cfg.echo(execution=False),
    )
    return LeaveOneOutResult(
        report=report,
        diagnostics=diagnostics,
        run_config=cfg.echo(),
        federations=federations,
    )


def write_outputs(out_dir, result: LeaveOneOutResult) -> None:
    """Emit report.json, metrics.csv, and diagnostics.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = result.report

    (out_dir / "report.json").write_text(
        json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8"
    )
    if result.run_config:
        (out_dir / "run_config.json").write_text(
            json.dumps(result.run_config, indent=2) + "\n", encoding="utf-8"
        )

    with (out_dir / "metrics.csv").open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["fold", "client", "role", "accuracy"])
        names = report.domains
        for j, fold in enumerate(names):
            writer.writerow([fold, fold, "server", repr(report.acc_matrix[j][j])])
            for i, client in enumerate(names):
                if i != j:
                    writer.writerow([fold, client, "client", repr(report.acc_matrix[j][i])])

    with (out_dir / "diagnostics.csv").open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["fold", "round", "client", "kappa", "pairwise_discrepancy", "bound"]
        )
        for row in result.diagnostics:
            writer.writerow(
                [
                    row.fold,
                    row.round_index,
                    row.client,
                    repr(row.kappa),
                    repr(row.pairwise_discrepancy),
                    repr(row.bound),
                ]
            )
