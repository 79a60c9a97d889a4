"""Cluster-level train/val/test splitting"""
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union
import logging
import math

import numpy as np

from peplatent.errors import MissingClusterError, ParseError
from peplatent.models.records import BinderRecord, SplitManifest, SplitParameters
from peplatent.utils.workspace import atomic_write_text

logger = logging.getLogger(__name__)

# guards ceil() against products like 0.07 * 100 = 7.000000000000001
_CEIL_TOLERANCE = 1e-9


def read_clusters(path: Union[str, Path]) -> Dict[str, str]:
    """
    Reads a two-column TSV of member_id, cluster_id (the shape of an
    MMseqs2 cluster table). Blank lines are skipped.

    Raises:
        ParseError: On a row without exactly two columns, or a member
            assigned to two different clusters
    """
    clusters: Dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        cols = line.rstrip("\r\n").split("\t")
        if len(cols) != 2 or not cols[0] or not cols[1]:
            raise ParseError(f"expected 'member_id<TAB>cluster_id', got {line!r}", line_no)
        member, cluster = cols
        if clusters.get(member, cluster) != cluster:
            raise ParseError(f"member {member} assigned to both {clusters[member]} and {cluster}", line_no)
        clusters[member] = cluster
    logger.info(f"Read {len(clusters)} cluster assignments ({len(set(clusters.values()))} clusters) from {path}")
    return clusters


def group_by_cluster(
    records: Sequence[BinderRecord],
    clusters: Mapping[str, str],
) -> Dict[str, List[str]]:
    """
    Maps cluster id -> member record ids in record order. The clusters map
    wins over a record's own cluster_id.

    Raises:
        MissingClusterError: Naming the first records without a cluster
    """
    groups: Dict[str, List[str]] = {}
    missing = []
    for record in records:
        cluster = clusters.get(record.pdb_id) or record.cluster_id
        if cluster is None:
            missing.append(record.pdb_id)
            continue
        groups.setdefault(cluster, []).append(record.pdb_id)
    if missing:
        shown = ", ".join(missing[:5]) + (" ..." if len(missing) > 5 else "")
        raise MissingClusterError(f"{len(missing)} records have no cluster: {shown}")
    return groups


def cluster_split(
    records: Sequence[BinderRecord],
    clusters: Mapping[str, str],
    params: Optional[SplitParameters] = None,
    seed: int = 0,
) -> SplitManifest:
    """
    Partitions records by cluster so no cluster spans two partitions.

    Clusters are visited in sorted id order and every random draw comes
    from one generator seeded with `seed`, in this order:

    1. a permutation of the clusters; the first ceil(test_fraction * C)
       form the test set
    2. one representative per test cluster
    3. a capped subset (at most `cap` members) of every other cluster

    Of the non-test clusters, floor(n * val / (train + val)) go to
    validation and the rest to training, in permutation order.

    Raises:
        MissingClusterError: If a record has no cluster assignment
    """
    params = params or SplitParameters()
    groups = group_by_cluster(records, clusters)
    cluster_ids = sorted(groups)
    rng = np.random.default_rng(seed)

    perm = rng.permutation(len(cluster_ids))
    n_test = min(len(cluster_ids), math.ceil(params.test_fraction * len(cluster_ids) - _CEIL_TOLERANCE))
    test_clusters = sorted(cluster_ids[i] for i in perm[:n_test])
    rest = [cluster_ids[i] for i in perm[n_test:]]

    test_ids = []
    for cluster in test_clusters:
        members = groups[cluster]
        test_ids.append(members[int(rng.integers(len(members)))])

    capped: Dict[str, List[str]] = {}
    for cluster in sorted(rest):
        members = groups[cluster]
        if len(members) > params.cap:
            keep = sorted(rng.choice(len(members), size=params.cap, replace=False))
            members = [members[i] for i in keep]
        capped[cluster] = members

    train_weight, val_weight = params.train_val_ratio
    n_val = math.floor(len(rest) * val_weight / (train_weight + val_weight))
    val_clusters = sorted(rest[:n_val])
    train_clusters = sorted(rest[n_val:])

    manifest = SplitManifest(
        train=[rid for c in train_clusters for rid in capped[c]],
        val=[rid for c in val_clusters for rid in capped[c]],
        test=test_ids,
        train_clusters=train_clusters,
        val_clusters=val_clusters,
        test_clusters=test_clusters,
        seed=seed,
        parameters=params,
    )
    logger.info(
        f"Split {len(cluster_ids)} clusters: "
        f"train {len(train_clusters)} ({len(manifest.train)} records), "
        f"val {len(val_clusters)} ({len(manifest.val)} records), "
        f"test {len(test_clusters)} ({len(manifest.test)} records)"
    )
    return manifest


def write_manifest(manifest: SplitManifest, path: Union[str, Path]) -> Path:
    return atomic_write_text(path, manifest.model_dump_json(indent=2) + "\n")


def load_manifest(path: Union[str, Path]) -> SplitManifest:
    return SplitManifest.model_validate_json(Path(path).read_text(encoding="utf-8"))
