"""Shared fixtures: toy configs, seeded generators, planted datasets, tmp workspaces"""
import json

import numpy as np
import pytest

from peplatent.config import settings
from peplatent.models.denoiser import DenoiserConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_config():
    """The gradient-check model size: d_emb=32, hidden=64, heads=4, layers=2"""
    return DenoiserConfig(d_emb=32, hidden=64, intermediate=128, heads=4, layers=2, dropout=0.1, T=100, seed=0)


@pytest.fixture
def tiny_config():
    """Smallest useful model, for tests that run many forward passes"""
    return DenoiserConfig(d_emb=8, hidden=16, intermediate=32, heads=2, layers=1, dropout=0.0, T=20, seed=0)


@pytest.fixture(autouse=True)
def tmp_workspace(tmp_path, monkeypatch):
    """Points the workspace and cache at per-test temporary directories"""
    monkeypatch.setattr(settings, "workspace_dir", str(tmp_path / "runs"))
    monkeypatch.setattr(settings, "cache_dir", str(tmp_path / "cache"))
    return tmp_path


def make_record(pdb_id, binder, receptor="MKTAYIAKQRQISFVKSHFSRQ", resolution=2.0, pocket=(2, 3, 4), **extra):
    record = {
        "pdb_id": pdb_id,
        "receptor_seq": receptor,
        "binder_seq": binder,
        "resolution": resolution,
        "pocket_indices": list(pocket),
    }
    record.update(extra)
    return record


def write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


@pytest.fixture
def hundred_clusters(tmp_path):
    """100 singleton clusters: records r000..r099 in clusters c000..c099"""
    binders = ["LRISSDVHQDAASVH", "ACDEFGHIKLMNPQR", "MKTAYIAKQRQISFV", "GSHMLEDPVAGTWYC"]
    records = [make_record(f"r{i:03d}", binders[i % len(binders)]) for i in range(100)]
    records_path = write_jsonl(tmp_path / "records.jsonl", records)
    clusters_path = tmp_path / "clusters.tsv"
    clusters_path.write_text("".join(f"r{i:03d}\tc{i:03d}\n" for i in range(100)), encoding="utf-8")
    return records_path, clusters_path
