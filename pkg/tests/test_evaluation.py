from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from orthofed.cayley import BlockSpec, identity_transform
from orthofed.config import load_config
from orthofed.data import (
    DomainEntry,
    EmbeddingDataset,
    Manifest,
    generate_synthetic,
    load_manifest,
    save_manifest,
)
from orthofed.errors import ConfigError
from orthofed.evaluation import (
    compute_metrics,
    diagnose,
    evaluate,
    initial_classifier,
    leave_one_out,
    write_outputs,
)
from orthofed.head import HeadParams

from test_federation import synthetic_clients


def constant_head(k: int, d: int, tau: float = 1.0) -> HeadParams:
    rng = np.random.default_rng(0)
    return HeadParams(
        classifier=rng.normal(size=(k, d)),
        transform=identity_transform(BlockSpec(d)),
        tau=tau,
    )


class TestEvaluate:
    def test_perfectly_separable(self):
        head = HeadParams(
            classifier=np.eye(3), transform=identity_transform(BlockSpec(3)), tau=10.0
        )
        dataset = EmbeddingDataset(
            domain_name="unit",
            features=np.eye(3)[[0, 1, 2, 0, 1]],
            labels=np.array([0, 1, 2, 0, 1]),
            class_count=3,
        )
        assert evaluate(head, dataset) == 1.0

    def test_single_example_is_zero_or_one(self, rng):
        head = constant_head(4, 6)
        dataset = EmbeddingDataset(
            domain_name="one",
            features=rng.normal(size=(1, 6)),
            labels=np.array([2]),
            class_count=4,
        )
        assert evaluate(head, dataset) in (0.0, 1.0)

    def test_random_classifier_near_chance(self, rng):
        k = 4
        head = constant_head(k, 16)
        dataset = EmbeddingDataset(
            domain_name="chance",
            features=rng.normal(size=(2000, 16)),
            labels=rng.integers(0, k, 2000),
            class_count=k,
        )
        assert abs(evaluate(head, dataset) - 1.0 / k) <= 0.05

    def test_empty_dataset_rejected(self):
        head = constant_head(2, 3)
        dataset = EmbeddingDataset(
            domain_name="empty",
            features=np.zeros((0, 3)),
            labels=np.zeros(0, dtype=int),
            class_count=2,
        )
        with pytest.raises(ValueError):
            evaluate(head, dataset)


class TestMetricsAlgebra:
    def test_all_ones(self):
        gen, pers, comp = compute_metrics(np.ones((4, 4)))
        assert (gen, pers, comp) == (1.0, 1.0, 1.0)

    def test_two_domain_formulas(self):
        matrix = np.array([[0.8, 0.6], [0.4, 0.9]])
        gen, pers, comp = compute_metrics(matrix)
        assert gen == pytest.approx((0.8 + 0.9) / 2)
        assert pers == pytest.approx((0.6 + 0.4) / 2)
        assert comp == pytest.approx((gen + pers) / 2)

    def test_comprehensive_identity_over_random_matrices(self, rng):
        for _ in range(1000):
            n = int(rng.integers(2, 7))
            matrix = rng.uniform(0.0, 1.0, size=(n, n))
            gen, pers, comp = compute_metrics(matrix)
            assert abs(comp - (gen + (n - 1) * pers) / n) <= 1e-12

    def test_rejects_single_domain(self):
        with pytest.raises(ValueError):
            compute_metrics(np.ones((1, 1)))


class TestDiagnose:
    def test_orthogonal_clients(self, tmp_path):
        clients, _server = synthetic_clients(tmp_path, domains=3, d=8, k=3)
        record = diagnose(clients, seed=0)
        assert len(record.kappas) == 3
        for kappa in record.kappas.values():
            assert 1.0 <= kappa <= 1.0 + 1e-6
        assert len(record.pairs) == 3
        for pair in record.pairs:
            assert pair.discrepancy <= pair.bound
            assert pair.bound == pytest.approx(2 * 100.0 * 2.0, rel=1e-6)
        assert record.dof == 8 * 7 // 2

    def test_identity_variant_kappa_exactly_one(self, tmp_path):
        clients, _ = synthetic_clients(tmp_path, domains=2, variant="identity_local")
        record = diagnose(clients, seed=0)
        assert all(kappa == 1.0 for kappa in record.kappas.values())

    def test_needs_two_clients(self, tmp_path):
        clients, _ = synthetic_clients(tmp_path, domains=1)
        with pytest.raises(ValueError):
            diagnose(clients, seed=0)


def _make_benchmark(tmp_path, domains=3):
    return generate_synthetic(
        tmp_path, dimension=8, class_count=3, domains=domains, per_domain=80,
        noise=0.3, seed=0, rotation=0.3,
    )


def _quick_config(manifest_path, **extra):
    overrides = {"manifest": str(manifest_path), "seed": 0, "rounds": 8,
                 "learning_rate": 1e-3, "sample_every": 4}
    overrides.update(extra)
    return load_config(None, overrides)


class TestLeaveOneOut:
    def test_structure_and_identity(self, tmp_path):
        result = _make_benchmark(tmp_path)
        cfg = _quick_config(result.manifest_path)
        out = leave_one_out(load_manifest(result.manifest_path), cfg)
        report = out.report
        matrix = np.array(report.acc_matrix)
        assert matrix.shape == (3, 3)
        assert np.all((matrix >= 0) & (matrix <= 1))
        n = 3
        assert abs(
            report.comprehensive
            - (report.generalization + (n - 1) * report.personalization) / n
        ) <= 1e-12
        assert report.dof == 8 * 7 // 2
        assert report.config["tau"] == 100.0
        assert "transport" not in report.config

    def test_needs_two_domains(self, tmp_path):
        result = generate_synthetic(
            tmp_path, dimension=8, class_count=3, domains=1, per_domain=80,
            noise=0.3, seed=0,
        )
        cfg = _quick_config(result.manifest_path)
        with pytest.raises(ConfigError):
            leave_one_out(load_manifest(result.manifest_path), cfg)

    def test_block_divisibility_checked_before_work(self, tmp_path):
        result = _make_benchmark(tmp_path)
        cfg = _quick_config(result.manifest_path)
        cfg.block_count = 3  # does not divide 8
        with pytest.raises(ConfigError):
            leave_one_out(load_manifest(result.manifest_path), cfg)

    def test_fold_independence_under_domain_permutation(self, tmp_path):
        result = _make_benchmark(tmp_path)
        manifest = load_manifest(result.manifest_path)
        cfg = _quick_config(result.manifest_path)
        base = leave_one_out(manifest, cfg)

        permuted = Manifest(
            dimension=manifest.dimension,
            classes=manifest.classes,
            domains=[manifest.domains[i] for i in (2, 0, 1)],
            root=manifest.root,
        )
        permuted_path = result.manifest_path.parent / "permuted.json"
        save_manifest(permuted, permuted_path)
        other = leave_one_out(load_manifest(permuted_path), cfg)

        order = (2, 0, 1)
        base_matrix = np.array(base.report.acc_matrix)
        other_matrix = np.array(other.report.acc_matrix)
        np.testing.assert_array_equal(other_matrix, base_matrix[np.ix_(order, order)])
        assert other.report.generalization == base.report.generalization
        assert other.report.personalization == base.report.personalization
        assert other.report.comprehensive == base.report.comprehensive

    def test_variant_propagates_to_kappa(self, tmp_path):
        result = _make_benchmark(tmp_path)
        cfg = _quick_config(result.manifest_path, variant="identity_local")
        out = leave_one_out(load_manifest(result.manifest_path), cfg)
        for fold in out.report.kappa_traces.values():
            for trace in fold.values():
                assert all(point[1] == 1.0 for point in trace)


class TestClassifierInit:
    def test_file_init_round_trips(self, tmp_path):
        from orthofed.data import write_fcls

        rows = np.eye(3, 8)
        write_fcls(rows, tmp_path / "init.fcls")
        cfg = load_config(None, {"classifier_init": f"file:{tmp_path / 'init.fcls'}"})
        loaded = initial_classifier(cfg, 3, 8)
        np.testing.assert_array_equal(loaded, rows)

    def test_file_init_dimension_mismatch(self, tmp_path):
        from orthofed.data import write_fcls

        write_fcls(np.eye(3, 6), tmp_path / "init.fcls")
        cfg = load_config(None, {"classifier_init": f"file:{tmp_path / 'init.fcls'}"})
        with pytest.raises(ConfigError):
            initial_classifier(cfg, 3, 8)

    def test_random_init_is_seeded(self):
        a = initial_classifier(load_config(None, {"seed": 5}), 4, 6)
        b = initial_classifier(load_config(None, {"seed": 5}), 4, 6)
        c = initial_classifier(load_config(None, {"seed": 6}), 4, 6)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)


class TestOutputs:
    def test_files_written_and_parse_back(self, tmp_path):
        result = _make_benchmark(tmp_path / "data")
        cfg = _quick_config(result.manifest_path)
        out = leave_one_out(load_manifest(result.manifest_path), cfg)
        out_dir = tmp_path / "run"
        write_outputs(out_dir, out)

        report = json.loads((out_dir / "report.json").read_text())
        assert set(report) >= {
            "generalization", "personalization", "comprehensive", "acc_matrix",
            "kappa_traces", "dof", "config",
        }
        run_config = json.loads((out_dir / "run_config.json").read_text())
        assert run_config["transport"] == "inprocess"
        assert list(run_config)[0] == "tau"

        with (out_dir / "metrics.csv").open() as handle:
            rows = list(csv.DictReader(handle))
        assert {row["role"] for row in rows} == {"server", "client"}
        assert len(rows) == 3 * 3  # one server + two client rows per fold

        with (out_dir / "diagnostics.csv").open() as handle:
            diag_rows = list(csv.DictReader(handle))
        assert diag_rows
        for row in diag_rows:
            assert float(row["pairwise_discrepancy"]) <= float(row["bound"]) + 1e-12
            assert 1.0 <= float(row["kappa"]) <= 1.0 + 1e-6
