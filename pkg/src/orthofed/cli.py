"""Command-line entry points.

Subcommands: run (leave-one-domain-out experiment), synth (synthetic
benchmark files), diag (summarize a finished run), serve/client (the
two TCP roles for genuinely distributed federations).

Exit codes: 0 success, 1 runtime error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import socket
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config
from .data import generate_synthetic, load_manifest, read_femb, read_fcls, split
from .errors import ConfigError, FileFormatError, ProtocolError
from .evaluation import (
    evaluate,
    initial_classifier,
    leave_one_out,
    server_head,
    write_outputs,
)
from .federation import FederationConfig, ServerState, make_client, make_probe, shares_transform
from .rng import derive_seed
from .sgd import OptimConfig
from .transport import FederationServer, run_tcp_client


def _add_override_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat JSON config file")
    parser.add_argument("--preset", choices=["synthetic"], help="named default bundle")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--tau", type=float, help="softmax temperature (default 100)")
    parser.add_argument("--lr", "--learning-rate", dest="learning_rate", type=float)
    parser.add_argument("--momentum", type=float)
    parser.add_argument("--weight-decay", dest="weight_decay", type=float)
    parser.add_argument("--rounds", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--blocks", dest="block_count", type=int)
    parser.add_argument("--variant")
    parser.add_argument("--init", dest="classifier_init",
                        help="'random' or 'file:<path>'")
    parser.add_argument("--transport", help="'inprocess' or 'tcp:<host>:<port>'")
    parser.add_argument("--manifest")
    parser.add_argument("--out", dest="out_dir")
    parser.add_argument("--sample-every", dest="sample_every", type=int)
    parser.add_argument("--probe-size", dest="probe_size", type=int)


_OVERRIDE_KEYS = (
    "seed", "tau", "learning_rate", "momentum", "weight_decay", "rounds", "epochs",
    "batch_size", "block_count", "variant", "classifier_init", "transport",
    "manifest", "out_dir", "sample_every", "probe_size",
)


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {key: getattr(args, key, None) for key in _OVERRIDE_KEYS}
    return load_config(args.config, overrides, preset=args.preset)


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    if not cfg.manifest:
        raise ConfigError("a manifest is required (--manifest or config key 'manifest')")
    manifest_path = Path(cfg.manifest)
    if not manifest_path.exists():
        raise ConfigError(f"manifest does not exist: {manifest_path}")
    manifest = load_manifest(manifest_path)
    print(f"tau = {cfg.tau} (temperature; fixed, non-learnable)")
    print(
        f"running leave-one-domain-out over {len(manifest.domains)} domains, "
        f"variant={cfg.variant}, rounds={cfg.rounds}, transport={cfg.transport}"
    )
    result = leave_one_out(manifest, cfg)
    write_outputs(cfg.out_dir, result)
    report = result.report
    print(f"generalization  = {report.generalization:.4f}")
    print(f"personalization = {report.personalization:.4f}")
    print(f"comprehensive   = {report.comprehensive:.4f}")
    print(f"outputs written to {cfg.out_dir}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    result = generate_synthetic(
        args.out,
        dimension=args.dim,
        class_count=args.classes,
        domains=args.domains,
        per_domain=args.per_domain,
        noise=args.noise,
        seed=args.seed,
        rotation=args.rotation,
        write_classifier=not args.no_classifier,
    )
    print(f"wrote {len(result.manifest.domains)} domains to {result.manifest_path}")
    if result.classifier_path is not None:
        print(f"prototype classifier at {result.classifier_path}")
    return 0


def cmd_diag(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    report_path = run_dir / "report.json"
    if not report_path.exists():
        raise ConfigError(f"no report.json under {run_dir}")
    report = json.loads(report_path.read_text(encoding="utf-8"))
    kappas = [
        point[1]
        for fold in report.get("kappa_traces", {}).values()
        for trace in fold.values()
        for point in trace
    ]
    max_kappa = max(kappas) if kappas else 1.0
    print(f"max κ = {max_kappa:.6f}")
    print(f"degrees of freedom = {report['dof']}")
    print(
        "max gradient discrepancy = "
        f"{report['max_gradient_discrepancy']:.6f} "
        f"(bound {report['gradient_discrepancy_bound']:.6f})"
    )
    diagnostics_path = run_dir / "diagnostics.csv"
    if diagnostics_path.exists():
        with diagnostics_path.open(encoding="utf-8") as handle:
            rows = list(csv.DictReader(handle))
        violations = [
            row for row in rows
            if float(row["pairwise_discrepancy"]) > float(row["bound"])
        ]
        print(f"diagnostic rows = {len(rows)}, bound violations = {len(violations)}")
    print(
        f"generalization={report['generalization']:.4f} "
        f"personalization={report['personalization']:.4f} "
        f"comprehensive={report['comprehensive']:.4f}"
    )
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    if cfg.classifier_init.startswith("file:"):
        classifier = read_fcls(cfg.classifier_init.partition(":")[2])
    else:
        if not (args.dim and args.classes):
            raise ConfigError("serve needs --dim and --classes unless --init file:<path>")
        from .rng import SplitMix64

        rng = SplitMix64(derive_seed(cfg.seed, "classifier"))
        classifier = 0.01 * rng.normals(args.classes * args.dim).reshape(
            args.classes, args.dim
        )
    server = ServerState(
        classifier=classifier,
        expected_clients=args.clients,
        x_global=np.eye(classifier.shape[1]) if shares_transform(cfg.variant) else None,
    )
    fed_cfg = FederationConfig(
        rounds=cfg.rounds,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        seed=cfg.seed,
        sample_every=cfg.sample_every,
        probe_size=cfg.probe_size,
    )
    listener = FederationServer(server, fed_cfg, host=args.host, port=args.port)
    print(f"serving federation on {listener.address[0]}:{listener.address[1]} "
          f"for {args.clients} client(s), {cfg.rounds} rounds")
    listener.serve()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {
        "rounds": server.round_index,
        "clients": args.clients,
        "classifier": server.classifier.tolist(),
        "config": cfg.echo(),
    }
    (out_dir / "server_summary.json").write_text(
        json.dumps(summary, indent=2) + "\n", encoding="utf-8"
    )
    print(f"server summary written to {out_dir / 'server_summary.json'}")
    return 0


def _parse_address(address: str) -> tuple[str, int]:
    host, sep, port = address.rpartition(":")
    if not sep or not host:
        raise ConfigError(f"address must be <host>:<port>, got {address!r}")
    try:
        return host, int(port)
    except ValueError:
        raise ConfigError(f"invalid port in address {address!r}") from None


def cmd_client(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    host, port = _parse_address(args.addr)
    dataset = read_femb(args.domain)
    data = split(dataset, derive_seed(cfg.seed, "split", dataset.domain_name))
    classifier0 = initial_classifier(cfg, dataset.class_count, dataset.dimension)
    client = make_client(
        args.client_id,
        data,
        classifier0,
        tau=cfg.tau,
        optim=OptimConfig(
            learning_rate=cfg.learning_rate,
            momentum=cfg.momentum,
            weight_decay=cfg.weight_decay,
        ),
        block_count=cfg.block_count,
        variant=cfg.variant,
    )
    fed_cfg = FederationConfig(
        rounds=cfg.rounds,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        seed=cfg.seed,
        sample_every=cfg.sample_every,
        probe_size=cfg.probe_size,
    )
    probe = make_probe(cfg.seed, cfg.probe_size, dataset.dimension, dataset.class_count)
    run_tcp_client(client, fed_cfg, host, port, probe)
    best = client.best_head if client.best_head is not None else client.head
    report = {
        "domain": dataset.domain_name,
        "client_id": client.client_id,
        "rounds": cfg.rounds,
        "best_val_accuracy": client.best_val_accuracy,
        "final_val_accuracy": client.val_history[-1][1] if client.val_history else None,
        "test_accuracy_best": evaluate(best, data.test),
        "test_accuracy_final": evaluate(client.head, data.test),
        "val_history": [[r, acc] for r, acc in client.val_history],
        "kappa_history": [[r, k] for r, k in client.kappa_history],
        "config": cfg.echo(),
    }
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / f"client_{dataset.domain_name}.json"
    out_path.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    print(f"client report written to {out_path}")
    print(
        f"best val = {client.best_val_accuracy:.4f}, "
        f"test (best snapshot) = {report['test_accuracy_best']:.4f}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orthofed",
        description="Federated training of a shared classifier with per-client "
        "orthogonal feature transforms over frozen embeddings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="leave-one-domain-out experiment")
    _add_override_flags(run_parser)
    run_parser.set_defaults(func=cmd_run)

    synth_parser = sub.add_parser("synth", help="generate synthetic benchmark files")
    synth_parser.add_argument("--out", required=True)
    synth_parser.add_argument("--dim", type=int, default=32)
    synth_parser.add_argument("--classes", type=int, default=5)
    synth_parser.add_argument("--domains", type=int, default=4)
    synth_parser.add_argument("--per-domain", dest="per_domain", type=int, default=200)
    synth_parser.add_argument("--noise", type=float, default=0.3)
    synth_parser.add_argument("--seed", type=int, default=0)
    synth_parser.add_argument("--rotation", type=float, default=1.0,
                              help="scale of the per-domain orthogonal shift (0 = identity)")
    synth_parser.add_argument("--no-classifier", action="store_true",
                              help="skip writing the prototype classifier file")
    synth_parser.set_defaults(func=cmd_synth)

    diag_parser = sub.add_parser("diag", help="summarize a finished run directory")
    diag_parser.add_argument("run_dir")
    diag_parser.set_defaults(func=cmd_diag)

    serve_parser = sub.add_parser("serve", help="run the federation server over TCP")
    serve_parser.add_argument("--host", default="127.0.0.1")
    serve_parser.add_argument("--port", type=int, default=0)
    serve_parser.add_argument("--clients", type=int, required=True)
    serve_parser.add_argument("--dim", type=int)
    serve_parser.add_argument("--classes", type=int)
    _add_override_flags(serve_parser)
    serve_parser.set_defaults(func=cmd_serve)

    client_parser = sub.add_parser("client", help="run one federation client over TCP")
    client_parser.add_argument("--addr", required=True, help="<host>:<port> of the server")
    client_parser.add_argument("--domain", required=True, help="path to the client's FEMB file")
    client_parser.add_argument("--client-id", dest="client_id", type=int, default=0)
    _add_override_flags(client_parser)
    client_parser.set_defaults(func=cmd_client)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileFormatError as exc:
        print(f"file format error: {exc}", file=sys.stderr)
        return 1
    except ProtocolError as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return 1
    except (OSError, socket.timeout) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
