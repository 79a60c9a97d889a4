import json

import numpy as np
import pytest

from peplatent.cli import commands
from peplatent.errors import InvalidArgumentError, TrainingDivergenceError
from peplatent.main import EXIT_DIVERGED, EXIT_INVALID, EXIT_OK, exit_code_for, main
from peplatent.models.denoiser import DenoiserConfig
from peplatent.services.checkpoint import encode_checkpoint
from peplatent.services.denoiser import init_model
from peplatent.services.embedding_store import write_embeddings
from peplatent.services.splitting import load_manifest

TINY_MODEL = {"d_emb": 8, "hidden": 16, "intermediate": 32, "heads": 2, "layers": 1, "dropout": 0.0, "T": 20}
RECEPTOR = "MKTAYIAKQRQISFVKSHFSRQ"


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(
        json.dumps(
            {
                "schedule": {"T": 20},
                "model": TINY_MODEL,
                "train": {"epochs": 2, "batch_size": 8, "base_lr": 1e-3},
                "explore": {"sigma_max": 0.5, "attempts_per_sigma": 10},
                "paths": {"out_dir": str(tmp_path / "out")},
            }
        )
    )
    return path


@pytest.fixture
def split_files(hundred_clusters, config_path, tmp_path):
    records, clusters = hundred_clusters
    manifest = tmp_path / "manifest.json"
    code = main(["--config", str(config_path), "split", "--records", str(records), "--clusters", str(clusters), "--out", str(manifest)])
    assert code == EXIT_OK
    return records, manifest


def test_split_sizes_and_rerun(hundred_clusters, split_files, config_path, tmp_path):
    records, manifest = split_files
    loaded = load_manifest(manifest)
    assert (len(loaded.test), len(loaded.train), len(loaded.val)) == (5, 76, 19)
    again = tmp_path / "again.json"
    _, clusters = hundred_clusters
    main(["--config", str(config_path), "split", "--records", str(records), "--clusters", str(clusters), "--out", str(again)])
    assert again.read_bytes() == manifest.read_bytes()


def test_split_missing_cluster_file(hundred_clusters, tmp_path, capsys):
    records, _ = hundred_clusters
    code = main(["split", "--records", str(records), "--clusters", str(tmp_path / "nope.tsv")])
    assert code == EXIT_INVALID
    assert "clusters file not found" in capsys.readouterr().err


def test_split_unassigned_record(hundred_clusters, tmp_path):
    records, clusters = hundred_clusters
    partial = tmp_path / "partial.tsv"
    partial.write_text("".join(clusters.read_text().splitlines(keepends=True)[:50]))
    assert main(["split", "--records", str(records), "--clusters", str(partial)]) == EXIT_INVALID


def test_unknown_config_key(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"train": {"epochz": 3}}))
    assert main(["--config", str(path), "schedule-dump"]) == EXIT_INVALID


def test_mismatched_timesteps(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"schedule": {"T": 50}, "model": {"T": 60}}))
    assert main(["--config", str(path), "schedule-dump"]) == EXIT_INVALID


def test_missing_config_file(tmp_path):
    assert main(["--config", str(tmp_path / "absent.json"), "schedule-dump"]) == EXIT_INVALID


def test_schedule_dump_to_file(tmp_path):
    out = tmp_path / "schedule.csv"
    assert main(["schedule-dump", "--out", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert len(lines) == 1001
    assert lines[0] == "t,beta,alpha,alpha_bar,sigma"
    assert lines[1].startswith("1,")


def test_schedule_dump_to_stdout(config_path, capsys):
    assert main(["--config", str(config_path), "schedule-dump"]) == EXIT_OK
    assert len(capsys.readouterr().out.splitlines()) == 21


def test_train_zero_epochs_writes_init_model(split_files, config_path, tmp_path):
    records, manifest = split_files
    cfg = json.loads(config_path.read_text())
    cfg["train"]["epochs"] = 0
    config_path.write_text(json.dumps(cfg))
    checkpoint = tmp_path / "init.pepd"
    code = main(
        ["--config", str(config_path), "train", "--records", str(records), "--manifest", str(manifest), "--checkpoint", str(checkpoint)]
    )
    assert code == EXIT_OK
    assert checkpoint.read_bytes() == encode_checkpoint(init_model(DenoiserConfig(**TINY_MODEL)))


@pytest.fixture
def trained(split_files, config_path, tmp_path):
    records, manifest = split_files
    checkpoint = tmp_path / "model.pepd"
    loss_csv = tmp_path / "loss.csv"
    code = main(
        [
            "--config", str(config_path), "train",
            "--records", str(records), "--manifest", str(manifest),
            "--checkpoint", str(checkpoint), "--loss-csv", str(loss_csv),
        ]
    )
    assert code == EXIT_OK
    assert len(loss_csv.read_text().splitlines()) == 3
    return checkpoint


def sample(config_path, checkpoint, out_dir, *extra):
    tsv = out_dir / "samples.tsv"
    emb = out_dir / "samples.pepe"
    code = main(
        [
            "--config", str(config_path), *extra, "sample",
            "--checkpoint", str(checkpoint), "--receptor", RECEPTOR, "--receptor-id", "rec",
            "--pocket", "2-5", "--count", "3", "--length", "15",
            "--out-tsv", str(tsv), "--out-emb", str(emb),
        ]
    )
    assert code == EXIT_OK
    return tsv, emb


def test_sample_is_reproducible(trained, config_path, tmp_path):
    first_dir, second_dir = tmp_path / "a", tmp_path / "b"
    first_dir.mkdir()
    second_dir.mkdir()
    tsv_a, emb_a = sample(config_path, trained, first_dir)
    tsv_b, emb_b = sample(config_path, trained, second_dir, "--threads", "3")
    lines = tsv_a.read_text().splitlines()
    assert lines[0] == "sample_id\treceptor_id\tseed\tsequence\tstatus"
    assert [line.split("\t")[0] for line in lines[1:]] == ["rec_0000", "rec_0001", "rec_0002"]
    for line in lines[1:]:
        _, _, _, seq, status = line.split("\t")
        assert status in ("ok", "decode-failed")
        assert len(seq) == 15 if status == "ok" else seq == "-"
    assert tsv_a.read_bytes() == tsv_b.read_bytes()
    assert emb_a.read_bytes() == emb_b.read_bytes()


def test_sample_seed_changes_output(trained, config_path, tmp_path):
    first_dir, second_dir = tmp_path / "a", tmp_path / "b"
    first_dir.mkdir()
    second_dir.mkdir()
    _, emb_a = sample(config_path, trained, first_dir)
    _, emb_b = sample(config_path, trained, second_dir, "--seed", "99")
    assert emb_a.read_bytes() != emb_b.read_bytes()


def test_sample_needs_a_receptor(trained, config_path):
    assert main(["--config", str(config_path), "sample", "--checkpoint", str(trained)]) == EXIT_INVALID


def test_training_divergence_exits_3(split_files, config_path, monkeypatch):
    records, manifest = split_files

    def diverge(*args, **kwargs):
        raise TrainingDivergenceError(7, float("nan"))

    monkeypatch.setattr(commands, "train", diverge)
    code = main(["--config", str(config_path), "train", "--records", str(records), "--manifest", str(manifest)])
    assert code == EXIT_DIVERGED


def test_exit_code_mapping():
    assert exit_code_for(TrainingDivergenceError(1, float("inf"))) == EXIT_DIVERGED
    assert exit_code_for(FileNotFoundError("x")) == EXIT_INVALID
    assert exit_code_for(RuntimeError("x")) == 1


def test_eval_identical_sequences(tmp_path):
    fasta = tmp_path / "same.fasta"
    fasta.write_text("".join(f">s{i}\nLRISSDVHQDAASVH\n" for i in range(10)))
    out = tmp_path / "metrics.json"
    assert main(["eval", "--sequences", str(fasta), "--out", str(out)]) == EXIT_OK
    by_metric = {r["metric"]: r for r in json.loads(out.read_text())}
    assert by_metric["div_seq"]["N"] == 10
    assert by_metric["div_seq"]["mean"] == pytest.approx(0.0)
    assert by_metric["div_emb"]["mean"] == pytest.approx(0.0, abs=1e-6)


SAMPLE_TABLE = (
    "sample_id\treceptor_id\tseed\tsequence\tstatus\n"
    "a_0\ta\t1\tLRISSDVHQDAASVH\tok\n"
    "a_1\ta\t2\tLRISSDVHQDAASVK\tok\n"
    "a_2\ta\t3\t-\tdecode-failed\n"
    "b_0\tb\t4\tACDEFGHIKLMNPQR\tok\n"
    "b_1\tb\t5\tWWYYCCPPGGHHKKR\tok\n"
    "c_0\tc\t6\tMKTAYIAKQRQISFV\tok\n"
)


def test_eval_structures_with_matrices(tmp_path, rng):
    table = tmp_path / "samples.tsv"
    table.write_text(SAMPLE_TABLE)
    structures = tmp_path / "ca.npz"
    np.savez(structures, **{f"s{i}": rng.standard_normal((12, 3)) * 5 for i in range(3)})
    out = tmp_path / "metrics.json"
    csv_dir = tmp_path / "csv"
    code = main(
        [
            "eval", "--sequences", str(table), "--structures", str(structures),
            "--with-matrix", "--csv-dir", str(csv_dir), "--out", str(out),
        ]
    )
    assert code == EXIT_OK
    by_metric = {r["metric"]: r for r in json.loads(out.read_text())}
    assert by_metric["div_seq"]["N"] == 5
    assert len(by_metric["div_str"]["matrix"]) == 3
    assert by_metric["rmsd"]["N"] == 3
    assert (csv_dir / "div_str.csv").read_text().startswith("id,0,1,2")
    assert (csv_dir / "rmsd.csv").exists()


def test_eval_groups_every_metric(tmp_path, rng):
    """Sequences, stored embeddings and structures are all scored per receptor"""
    table = tmp_path / "samples.tsv"
    table.write_text(SAMPLE_TABLE)
    ids = ["a_0", "a_1", "b_0", "b_1", "c_0"]
    structures = tmp_path / "ca.npz"
    np.savez(structures, **{i: rng.standard_normal((12, 3)) * 5 for i in ids})
    embeddings = tmp_path / "samples.pepe"
    write_embeddings({i: rng.standard_normal((15, 8)).astype(np.float32) for i in ids}, embeddings)
    out = tmp_path / "metrics.json"
    code = main(
        [
            "eval", "--sequences", str(table), "--group-column", "receptor_id",
            "--embeddings", str(embeddings), "--structures", str(structures), "--out", str(out),
        ]
    )
    assert code == EXIT_OK
    by_metric = {r["metric"]: r for r in json.loads(out.read_text())}
    assert {m: by_metric[m]["N"] for m in ("div_seq", "div_emb", "div_str", "rmsd")} == {
        "div_seq": 2,
        "div_emb": 2,
        "div_str": 2,
        "rmsd": 2,
    }


def test_encode_decode_explore(config_path, tmp_path):
    fasta = tmp_path / "in.fasta"
    fasta.write_text(">p1\nLRISSDVHQDAASVH\n>p2\nMKTAYIAKQR\n")
    container = tmp_path / "in.pepe"
    decoded = tmp_path / "decoded.tsv"
    explored = tmp_path / "explore.tsv"
    base = ["--config", str(config_path)]
    assert main(base + ["encode", "--fasta", str(fasta), "--out", str(container)]) == EXIT_OK
    assert main(base + ["decode", "--embeddings", str(container), "--out", str(decoded)]) == EXIT_OK
    assert decoded.read_text().splitlines() == ["id\tsequence", "p1\tLRISSDVHQDAASVH", "p2\tMKTAYIAKQR"]
    assert main(base + ["explore", "--embeddings", str(container), "--ids", "p2", "--out", str(explored)]) == EXIT_OK
    lines = explored.read_text().splitlines()
    assert lines[0] == "source_id\tsequence\tsigma_used\tattempts"
    assert len(lines) == 2 and lines[1].startswith("p2\t")


def test_explore_unknown_id(config_path, tmp_path):
    fasta = tmp_path / "in.fasta"
    fasta.write_text(">p1\nLRISSDVHQDAASVH\n")
    container = tmp_path / "in.pepe"
    main(["--config", str(config_path), "encode", "--fasta", str(fasta), "--out", str(container)])
    code = main(["--config", str(config_path), "explore", "--embeddings", str(container), "--ids", "zz"])
    assert code == EXIT_INVALID


def test_fetch_offline_from_cache(tmp_path):
    cache = tmp_path / "cache"
    cache.mkdir()
    (cache / "3Q0S.fasta").write_text(">3Q0S_2\nLRISSDVHQDAASVH\n")
    out = tmp_path / "fetched.fasta"
    assert main(["--cache-dir", str(cache), "fetch", "3q0s", "--offline", "--out", str(out)]) == EXIT_OK
    assert out.read_text() == ">3Q0S_2\nLRISSDVHQDAASVH\n"


def test_parse_pocket():
    assert commands.parse_pocket("3-5,1,4") == [1, 3, 4, 5]
    assert commands.parse_pocket(None) == []
    with pytest.raises(InvalidArgumentError, match="reversed"):
        commands.parse_pocket("5-3")
    with pytest.raises(InvalidArgumentError, match="malformed"):
        commands.parse_pocket("a")


@pytest.mark.parametrize(
    "section",
    [
        {"data": {"train_val_ratio": [0, 0]}},
        {"data": {"train_val_ratio": [-1, 5]}},
        {"explore": {"sigma_init": 0.8, "sigma_max": 0.5}},
    ],
)
def test_inconsistent_config_values(tmp_path, section):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(section))
    assert main(["--config", str(path), "schedule-dump"]) == EXIT_INVALID
