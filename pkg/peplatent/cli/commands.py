"""Subcommand handlers for the peplatent command line"""
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple
import argparse
import csv
import io
import logging

import numpy as np

from peplatent.config import settings
from peplatent.errors import InvalidArgumentError
from peplatent.models.denoiser import PocketMask
from peplatent.models.records import BinderRecord
from peplatent.models.reports import MetricsReport
from peplatent.models.run_config import RunConfig
from peplatent.models.training import TrainingExample
from peplatent.services import reports
from peplatent.services.checkpoint import load_checkpoint, save_checkpoint
from peplatent.services.codec import ToyCodec
from peplatent.services.denoiser import init_model
from peplatent.services.diffusion import generate
from peplatent.services.embedding_store import load_embeddings, require_width, write_embeddings
from peplatent.services.explore import explore_many, explore_tsv
from peplatent.services.fasta import parse_fasta
from peplatent.services.ingest import filter_by_length, ingest
from peplatent.services.rcsb_client import RcsbClient
from peplatent.services.schedule import build_schedule, dump_schedule, schedule_table
from peplatent.services.splitting import cluster_split, load_manifest, read_clusters, write_manifest
from peplatent.services.trainer import train, write_loss_history
from peplatent.utils.parallel import ordered_map
from peplatent.utils.seeding import derive_seed
from peplatent.utils.workspace import atomic_write_text, ensure_workspace_exists

logger = logging.getLogger(__name__)

FAILED = "-"
FASTA_SUFFIXES = {".fa", ".fasta", ".faa"}


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def input_path(flag: Optional[str], configured: Optional[str], what: str) -> Path:
    """
    Resolves an input file from its flag, falling back to the config paths section.

    Raises:
        InvalidArgumentError: If neither is given
        FileNotFoundError: If the file does not exist
    """
    value = flag or configured
    if not value:
        raise InvalidArgumentError(f"no {what} file given")
    path = Path(value)
    if not path.is_file():
        raise FileNotFoundError(f"{what} file not found: {path}")
    return path


def output_path(flag: Optional[str], configured: Optional[str], config: RunConfig, default_name: str) -> Path:
    """Flag, then config path, then out_dir (or the workspace) joined with default_name"""
    if flag or configured:
        return Path(flag or configured)
    root = Path(config.paths.out_dir) if config.paths.out_dir else ensure_workspace_exists()
    return root / default_name


def build_codec(config: RunConfig) -> ToyCodec:
    return ToyCodec(config.model.d_emb, seed=config.data.codec_seed, tau=config.data.tau)


def parse_pocket(spec: Optional[str]) -> List[int]:
    """
    Parses 0-based pocket positions such as "66-73,80" (ranges inclusive).

    Raises:
        InvalidArgumentError: On a malformed item or a reversed range
    """
    if not spec:
        return []
    indices: List[int] = []
    for item in spec.split(","):
        item = item.strip()
        try:
            lo, _, hi = item.partition("-")
            lo, hi = int(lo), int(hi or lo)
        except ValueError as e:
            raise InvalidArgumentError(f"malformed pocket item {item!r}") from e
        if hi < lo:
            raise InvalidArgumentError(f"reversed pocket range {item!r}")
        indices.extend(range(lo, hi + 1))
    return sorted(set(indices))


def pocket_mask(indices: Sequence[int], rows: int) -> PocketMask:
    """Mask over `rows` receptor rows; no indices means the whole receptor"""
    if not indices:
        return PocketMask.full(rows)
    return PocketMask.from_indices(indices, rows)


def pair_embeddings(
    records: Sequence[BinderRecord],
    config: RunConfig,
    embeddings_path: Optional[str],
) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    """
    Receptor and binder embeddings per record id.

    Toy mode encodes the sequences with the codebook codec; file mode reads
    '{pdb_id}/receptor' and '{pdb_id}/binder' from a container.
    """
    if config.data.embedding_mode == "toy":
        codec = build_codec(config)
        return {r.pdb_id: (codec.encode(r.receptor_seq), codec.encode(r.binder_seq)) for r in records}

    path = input_path(embeddings_path, config.paths.embeddings, "embeddings")
    store = load_embeddings(path)
    require_width(store, config.model.d_emb)
    pairs = {}
    for r in records:
        keys = (f"{r.pdb_id}/receptor", f"{r.pdb_id}/binder")
        missing = [k for k in keys if k not in store]
        if missing:
            raise InvalidArgumentError(f"embeddings file {path} lacks {', '.join(missing)}")
        pairs[r.pdb_id] = (store[keys[0]], store[keys[1]])
    return pairs


def training_examples(
    ids: Sequence[str],
    by_id: Mapping[str, BinderRecord],
    config: RunConfig,
    embeddings_path: Optional[str],
) -> List[TrainingExample]:
    wanted = [by_id[i] for i in ids if i in by_id]
    if len(wanted) < len(ids):
        logger.warning(f"{len(ids) - len(wanted)} manifest ids are not among the ingested records")
    wanted = filter_by_length(wanted, config.train.peptide_length)
    pairs = pair_embeddings(wanted, config, embeddings_path)
    examples = []
    for record in wanted:
        receptor, binder = pairs[record.pdb_id]
        examples.append(
            TrainingExample(
                record_id=record.pdb_id,
                receptor=receptor,
                pocket=pocket_mask(record.pocket_indices, receptor.shape[0]),
                binder=binder,
            )
        )
    return examples


ID_COLUMNS = ("sample_id", "id")


def read_sequence_table(path: Path, group_column: Optional[str]) -> Dict[str, Dict[str, str]]:
    """
    Reads sequences from FASTA or from a TSV with a 'sequence' column.
    Returns group -> {sample id -> sequence}; without a group column
    everything is one group. TSV ids come from 'sample_id' or 'id', else
    the row number. Rows whose sequence is '-' (failed decodes) are skipped.
    """
    if path.suffix.lower() in FASTA_SUFFIXES:
        if group_column:
            raise InvalidArgumentError("--group-column needs a TSV input, not FASTA")
        return {"all": dict(parse_fasta(path))}

    reader = csv.DictReader(io.StringIO(path.read_text(encoding="utf-8")), delimiter="\t")
    columns = reader.fieldnames or []
    if "sequence" not in columns:
        raise InvalidArgumentError(f"{path} has no 'sequence' column (columns: {columns})")
    if group_column and group_column not in columns:
        raise InvalidArgumentError(f"{path} has no '{group_column}' column")
    id_column = next((c for c in ID_COLUMNS if c in columns), None)
    groups: Dict[str, Dict[str, str]] = {}
    for row_number, row in enumerate(reader, start=1):
        if row["sequence"] in ("", FAILED):
            continue
        key = row[group_column] if group_column else "all"
        sample_id = row[id_column] if id_column else str(row_number)
        groups.setdefault(key, {})[sample_id] = row["sequence"]
    return groups


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_split(args: argparse.Namespace, config: RunConfig) -> int:
    """
    Cluster-level split.

    Steps:
    1. Ingest and clean the records file
    2. Read the member -> cluster table
    3. Cap, sample test clusters and split the rest train/val
    4. Write the manifest JSON
    """
    records_path = input_path(args.records, config.paths.records, "records")
    clusters_path = input_path(args.clusters, config.paths.clusters, "clusters")
    result = ingest(records_path, config.data.max_resolution)
    clusters = read_clusters(clusters_path)
    manifest = cluster_split(result.records, clusters, config.data.split_parameters, config.seed)
    out = write_manifest(manifest, output_path(args.out, config.paths.manifest, config, "manifest.json"))
    logger.info(f"Manifest written to {out}")
    return 0


def cmd_encode(args: argparse.Namespace, config: RunConfig) -> int:
    """Encodes records (or a FASTA file) into an embedding container with the codebook codec"""
    codec = build_codec(config)
    embeddings: Dict[str, np.ndarray] = {}
    if args.fasta:
        for seq_id, seq in parse_fasta(input_path(args.fasta, None, "FASTA")).items():
            embeddings[seq_id] = codec.encode(seq)
    else:
        result = ingest(input_path(args.records, config.paths.records, "records"), config.data.max_resolution)
        for r in result.records:
            embeddings[f"{r.pdb_id}/receptor"] = codec.encode(r.receptor_seq)
            embeddings[f"{r.pdb_id}/binder"] = codec.encode(r.binder_seq)
    write_embeddings(embeddings, output_path(args.out, config.paths.embeddings, config, "embeddings.pepe"))
    return 0


def cmd_train(args: argparse.Namespace, config: RunConfig) -> int:
    """
    Trains (or resumes) the denoiser on the manifest's training split.

    Steps:
    1. Ingest records and load the manifest
    2. Build train/val examples of the configured peptide length
    3. Initialize or load the model
    4. Train, then write the checkpoint and the loss history
    """
    by_id = {
        r.pdb_id: r
        for r in ingest(input_path(args.records, config.paths.records, "records"), config.data.max_resolution).records
    }
    manifest = load_manifest(input_path(args.manifest, config.paths.manifest, "manifest"))
    train_set = training_examples(manifest.train, by_id, config, args.embeddings)
    val_set = training_examples(manifest.val, by_id, config, args.embeddings) if manifest.val else []

    resume = args.resume or config.train.resume
    if resume:
        model = load_checkpoint(input_path(resume, None, "checkpoint"))
        if model.config != config.model:
            logger.warning("Checkpoint architecture differs from the config; using the checkpoint's")
        logger.info(f"Resuming from epoch {model.trained_epochs}")
    else:
        model = init_model(config.model)

    history = []
    if config.train.epochs == 0:
        logger.info("epochs = 0; writing the model unchanged")
    else:
        sched = build_schedule(model.config.T, config.schedule.s)
        model, history = train(model, train_set, sched, config.train, val_dataset=val_set or None)

    save_checkpoint(model, output_path(args.checkpoint, config.paths.checkpoint, config, "model.pepd"))
    write_loss_history(history, output_path(args.loss_csv, config.paths.loss_csv, config, "loss.csv"))
    return 0


def cmd_sample(args: argparse.Namespace, config: RunConfig) -> int:
    """
    Generates `count` binder embeddings for one receptor and decodes them.

    Sample i uses the seed derived from (seed, i), so a run with count N is
    a prefix of a run with a larger count. Decode failures are recorded per
    row and do not stop the run.
    """
    model = load_checkpoint(input_path(args.checkpoint, config.paths.checkpoint, "checkpoint"))
    codec = ToyCodec(model.config.d_emb, seed=config.data.codec_seed, tau=config.data.tau)

    if args.receptor:
        receptor_id = args.receptor_id or "receptor"
        receptor = codec.encode(args.receptor)
    elif args.receptor_id:
        store = load_embeddings(input_path(args.embeddings, config.paths.embeddings, "embeddings"))
        key = args.receptor_id if args.receptor_id in store else f"{args.receptor_id}/receptor"
        if key not in store:
            raise InvalidArgumentError(f"no receptor embedding '{args.receptor_id}' in the container")
        receptor_id, receptor = args.receptor_id, store[key]
    else:
        raise InvalidArgumentError("sample needs --receptor or --receptor-id")
    if receptor.shape[1] != model.config.d_emb:
        raise InvalidArgumentError(f"receptor width {receptor.shape[1]} != model d_emb {model.config.d_emb}")

    length = args.length or config.train.peptide_length
    if args.count < 1 or length < 1:
        raise InvalidArgumentError("count and length must be >= 1")
    z = model.norm_stats.normalize(np.asarray(receptor, dtype=np.float32))
    mask = pocket_mask(parse_pocket(args.pocket), z.shape[0])
    sched = build_schedule(model.config.T, config.schedule.s)

    def one(i: int) -> Tuple[int, np.ndarray]:
        seed = derive_seed(config.seed, i, "sample")
        # one row per residue plus the terminal row
        return seed, generate(model, z, mask, length + 1, sched, seed)

    results = ordered_map(one, range(args.count), args.threads)

    lines = ["sample_id\treceptor_id\tseed\tsequence\tstatus"]
    embeddings: Dict[str, np.ndarray] = {}
    failures = 0
    for i, (seed, x) in enumerate(results):
        sample_id = f"{receptor_id}_{i:04d}"
        embeddings[sample_id] = x
        seq = codec.decode(x)
        if seq is None:
            failures += 1
            lines.append(f"{sample_id}\t{receptor_id}\t{seed}\t{FAILED}\tdecode-failed")
        else:
            lines.append(f"{sample_id}\t{receptor_id}\t{seed}\t{seq}\tok")

    atomic_write_text(output_path(args.out_tsv, None, config, "samples.tsv"), "\n".join(lines) + "\n")
    write_embeddings(embeddings, output_path(args.out_emb, None, config, "samples.pepe"))
    logger.info(f"Generated {args.count} samples for {receptor_id} ({failures} decode failures)")
    return 0


def cmd_explore(args: argparse.Namespace, config: RunConfig) -> int:
    """Sigma-escalation exploration around every embedding in a container"""
    embeddings = load_embeddings(input_path(args.embeddings, config.paths.embeddings, "embeddings"))
    if args.ids:
        wanted = [i.strip() for i in args.ids.split(",") if i.strip()]
        missing = [i for i in wanted if i not in embeddings]
        if missing:
            raise InvalidArgumentError(f"ids not in the container: {', '.join(missing)}")
        embeddings = {i: embeddings[i] for i in wanted}
    codec = build_codec(config)
    require_width(embeddings, codec.d_emb)
    results = explore_many(embeddings, codec, config.explore, args.threads)
    atomic_write_text(output_path(args.out, None, config, "explore.tsv"), explore_tsv(results))
    found = sum(1 for r in results if not r.exhausted)
    logger.info(f"Explored {len(results)} embeddings, {found} produced a sequence")
    return 0


def cmd_decode(args: argparse.Namespace, config: RunConfig) -> int:
    """Decodes every embedding of a container; failures are written as '-'"""
    embeddings = load_embeddings(input_path(args.embeddings, config.paths.embeddings, "embeddings"))
    codec = build_codec(config)
    require_width(embeddings, codec.d_emb)
    lines = ["id\tsequence"]
    for emb_id, x in embeddings.items():
        seq = codec.decode(x)
        lines.append(f"{emb_id}\t{seq if seq is not None else FAILED}")
    atomic_write_text(output_path(args.out, None, config, "decoded.tsv"), "\n".join(lines) + "\n")
    return 0


def _set_reports(
    seqs: Sequence[str],
    embeddings: Sequence[np.ndarray],
    coords: Sequence[np.ndarray],
    config: RunConfig,
    threads: int,
    include_matrix: bool,
) -> List[MetricsReport]:
    out = [reports.seq_diversity_report(seqs, gaps=config.metrics, threads=threads, include_matrix=include_matrix)]
    if len(embeddings) >= 2:
        out.append(reports.emb_diversity_report(embeddings, threads, include_matrix))
    if len(coords) >= 2:
        out.append(reports.str_diversity_report(coords, config.metrics.tm_rounds, threads, include_matrix))
        out.append(reports.rmsd_report(coords, threads))
    return out


def cmd_eval(args: argparse.Namespace, config: RunConfig) -> int:
    """
    Diversity metrics of a generated set.

    Sequences come from FASTA or from a sample TSV. Embeddings come from
    --embeddings, or in toy mode from encoding the sequences. Structures
    come from an .npz archive of L x 3 C-alpha arrays. With
    --group-column each group (e.g. receptor) is scored separately and the
    report holds mean (std) across groups; stored embeddings and
    structures join a group through their sample ids.
    """
    groups = read_sequence_table(input_path(args.sequences, None, "sequences"), args.group_column)
    stored = load_embeddings(input_path(args.embeddings, None, "embeddings")) if args.embeddings else None
    codec = build_codec(config) if stored is None and config.data.embedding_mode == "toy" else None
    structures: Dict[str, np.ndarray] = {}
    if args.structures:
        with np.load(input_path(args.structures, None, "structures")) as archive:
            structures = {k: archive[k] for k in sorted(archive.files)}
    generated = {k: x for k, x in (stored or {}).items() if k != args.reference}

    def embeddings_for(members: Mapping[str, str]) -> List[np.ndarray]:
        if codec is not None:
            return [codec.encode(s) for s in members.values()]
        return [generated[i] for i in members if i in generated]

    results: List[MetricsReport] = []
    if args.group_column:
        per_metric: Dict[str, Dict[str, float]] = {}
        for group, members in groups.items():
            if len(members) < 2:
                logger.warning(f"Group '{group}' has {len(members)} sequence(s); skipped")
                continue
            coords = [structures[i] for i in members if i in structures]
            group_reports = _set_reports(
                list(members.values()), embeddings_for(members), coords, config, args.threads, False
            )
            for report in group_reports:
                per_metric.setdefault(report.metric, {})[group] = report.mean
        if not per_metric:
            raise InvalidArgumentError("no group has at least 2 sequences")
        if stored is not None and "div_emb" not in per_metric:
            logger.warning("No stored embedding matched a grouped sample id")
        if structures and "div_str" not in per_metric:
            logger.warning("No structure matched a grouped sample id")
        results.extend(reports.summarize_groups(values, metric) for metric, values in per_metric.items())
    else:
        members = {i: s for group in groups.values() for i, s in group.items()}
        embeddings = embeddings_for(members) if codec is not None else list(generated.values())
        results.extend(
            _set_reports(
                list(members.values()), embeddings, list(structures.values()), config, args.threads, args.with_matrix
            )
        )

    if stored is not None and args.reference:
        if args.reference not in stored:
            raise InvalidArgumentError(f"reference '{args.reference}' not in the embeddings container")
        results.append(reports.emb_similarity_to_reference(list(generated.values()), stored[args.reference]))

    out = reports.write_reports(results, output_path(args.out, None, config, "metrics.json"))
    if args.csv_dir:
        for report in results:
            if report.matrix is not None:
                atomic_write_text(Path(args.csv_dir) / f"{report.metric}.csv", reports.matrix_csv(report.matrix))
    for report in results:
        logger.info(f"{report.metric}: {report.formatted()} (N={report.n})")
    logger.info(f"Report written to {out}")
    return 0


def cmd_schedule_dump(args: argparse.Namespace, config: RunConfig) -> int:
    """Writes the t, beta, alpha, alpha_bar, sigma table; stdout without --out"""
    sched = build_schedule(config.schedule.T, config.schedule.s)
    if args.out:
        dump_schedule(sched, Path(args.out))
    else:
        print(schedule_table(sched), end="")
    return 0


def cmd_fetch(args: argparse.Namespace, config: RunConfig) -> int:
    """Fetches full entry sequences from RCSB into the cache"""
    with RcsbClient(cache_dir=args.cache_dir, offline=args.offline) as client:
        fetched = client.fetch_many(args.pdb_ids, threads=args.threads)
    lines = []
    for pdb_id, chains in fetched.items():
        logger.info(f"{pdb_id}: {len(chains)} chain sequence(s)")
        for header, seq in chains.items():
            lines.append(f">{header}\n{seq}")
    if args.out:
        atomic_write_text(args.out, "\n".join(lines) + "\n")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="peplatent",
        description="Receptor-conditioned latent diffusion over peptide embeddings",
    )
    parser.add_argument("--config", help="Run configuration JSON")
    parser.add_argument("--seed", type=int, help="Master seed; overrides every seed in the config")
    parser.add_argument("--threads", type=int, default=settings.threads, help="Worker threads (1 = bit-exact)")
    parser.add_argument("--cache-dir", default=None, help="Sequence cache (default: PEPLATENT_CACHE_DIR)")
    parser.add_argument("--log-level", default=settings.log_level)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="Cluster-level train/val/test split")
    p.add_argument("--records")
    p.add_argument("--clusters")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_split)

    p = sub.add_parser("encode", help="Encode sequences with the codebook codec")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--records")
    src.add_argument("--fasta")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_encode)

    p = sub.add_parser("train", help="Train or resume the denoiser")
    p.add_argument("--records")
    p.add_argument("--manifest")
    p.add_argument("--embeddings")
    p.add_argument("--resume")
    p.add_argument("--checkpoint", help="Output checkpoint")
    p.add_argument("--loss-csv")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("sample", help="Generate binders for one receptor")
    p.add_argument("--checkpoint")
    p.add_argument("--receptor", help="Receptor sequence (encoded with the codebook codec)")
    p.add_argument("--receptor-id", help="Receptor key in --embeddings, or a label for --receptor")
    p.add_argument("--embeddings")
    p.add_argument("--pocket", help="0-based pocket positions, e.g. 66-73,80")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--length", type=int)
    p.add_argument("--out-tsv")
    p.add_argument("--out-emb")
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser("explore", help="Zero-shot exploration around embeddings")
    p.add_argument("--embeddings")
    p.add_argument("--ids", help="Comma-separated subset of container ids")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_explore)

    p = sub.add_parser("decode", help="Decode an embedding container")
    p.add_argument("--embeddings")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_decode)

    p = sub.add_parser("eval", help="Diversity and similarity metrics")
    p.add_argument("--sequences", required=True, help="FASTA or sample TSV")
    p.add_argument("--group-column", help="TSV column to group by, e.g. receptor_id")
    p.add_argument("--embeddings")
    p.add_argument("--reference", help="Container key of the ground-truth binder embedding")
    p.add_argument("--structures", help=".npz archive of L x 3 C-alpha arrays")
    p.add_argument("--with-matrix", action="store_true", help="Include pairwise matrices in the JSON")
    p.add_argument("--csv-dir", help="Also write every matrix as CSV into this directory")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("schedule-dump", help="Write the noise schedule table")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_schedule_dump)

    p = sub.add_parser("fetch", help="Fetch RCSB entry sequences into the cache")
    p.add_argument("pdb_ids", nargs="+")
    p.add_argument("--offline", action="store_true", help="Serve from cache only")
    p.add_argument("--out", help="Also write the sequences as one FASTA file")
    p.set_defaults(handler=cmd_fetch)

    return parser


def apply_seed(config: RunConfig, seed: Optional[int]) -> RunConfig:
    """--seed replaces the run seed and the model, train and explore seeds"""
    if seed is None:
        return config
    return config.model_copy(
        update={
            "seed": seed,
            "model": config.model.model_copy(update={"seed": seed}),
            "train": config.train.model_copy(update={"seed": seed}),
            "explore": config.explore.model_copy(update={"seed": seed}),
        }
    )
