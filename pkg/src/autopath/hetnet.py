"""Content-rich heterogeneous network, supervision pairs and class labels.

Node ids are dense integers 0..n-1 in order of first appearance in nodes.tsv;
the original string ids are kept in ``Network.node_names``.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import (
    BadBinary,
    DanglingEdge,
    DataError,
    DimMismatch,
    EmptyNetwork,
    MissingContent,
    UnknownNode,
    UnknownType,
)

log = logging.getLogger(__name__)

KINDS = ("binary", "continuous")


@dataclass(frozen=True)
class NodeTypeMeta:
    type_id: int
    name: str
    content_dim: int
    content_kind: str

    def __post_init__(self):
        if self.content_dim < 1:
            raise DataError(f"type {self.name}: content_dim must be >= 1")
        if self.content_kind not in KINDS:
            raise DataError(f"type {self.name}: unknown content kind {self.content_kind!r}")


def _read_rows(path) -> Iterable[tuple[int, list[str]]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line.split("\t")


class Network:
    """Typed directed graph with one content vector per node. Immutable after construction."""

    def __init__(self, types, node_types, node_names, contents, edges, warnings=None):
        self.types: list[NodeTypeMeta] = list(types)
        self.node_types = np.asarray(node_types, dtype=np.int64)
        self.node_names: list[str] = list(node_names)
        n = len(self.node_types)
        self._name_to_id = {name: i for i, name in enumerate(self.node_names)}
        if len(self._name_to_id) != n:
            raise DataError("duplicate node ids")
        names = [t.name for t in self.types]
        if len(set(names)) != len(names):
            raise DataError("duplicate type names")
        if [t.type_id for t in self.types] != list(range(len(self.types))):
            raise DataError("type ids must be contiguous from 0")
        if n and (self.node_types.min() < 0 or self.node_types.max() >= len(self.types)):
            raise UnknownType("node refers to an undeclared type")

        # contents[k] holds the rows of type k in node-id order
        self.type_members = [np.flatnonzero(self.node_types == k) for k in range(len(self.types))]
        self.type_index = np.empty(n, dtype=np.int64)
        for members in self.type_members:
            self.type_index[members] = np.arange(len(members))
        self.contents: list[np.ndarray] = []
        for meta, block in zip(self.types, contents):
            block = np.asarray(block, dtype=np.float64).reshape(-1, meta.content_dim)
            if block.shape[0] != len(self.type_members[meta.type_id]):
                raise MissingContent(f"type {meta.name}: {block.shape[0]} content rows for "
                                     f"{len(self.type_members[meta.type_id])} nodes")
            if meta.content_kind == "binary" and not np.all((block == 0.0) | (block == 1.0)):
                raise BadBinary(f"type {meta.name}: binary content outside {{0,1}}")
            block.setflags(write=False)
            self.contents.append(block)

        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise DanglingEdge("edge endpoint outside node range")
        self.load_warnings = dict(warnings or {})
        loops = edges[:, 0] == edges[:, 1]
        if loops.any():
            self.load_warnings["self_loops_dropped"] = self.load_warnings.get("self_loops_dropped", 0) + int(loops.sum())
            edges = edges[~loops]
        uniq = np.unique(edges, axis=0) if len(edges) else edges
        if len(uniq) < len(edges):
            self.load_warnings["parallel_edges_merged"] = (
                self.load_warnings.get("parallel_edges_merged", 0) + len(edges) - len(uniq))
        # np.unique on rows sorts lexicographically: CSR falls out directly
        self.indices = uniq[:, 1].copy()
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(self.indptr, uniq[:, 0] + 1, 1)
        np.cumsum(self.indptr, out=self.indptr)
        self.indices.setflags(write=False)
        self.indptr.setflags(write=False)
        self._padded = None
        for key, count in self.load_warnings.items():
            if count:
                log.warning("network load: %s = %d", key, count)

    @property
    def n_nodes(self) -> int:
        return len(self.node_types)

    @property
    def n_edges(self) -> int:
        return len(self.indices)

    @property
    def n_types(self) -> int:
        return len(self.types)

    def type_of(self, v: int) -> int:
        return int(self.node_types[v])

    def type_id(self, name: str) -> int:
        for t in self.types:
            if t.name == name:
                return t.type_id
        raise UnknownType(name)

    def node_id(self, name: str) -> int:
        try:
            return self._name_to_id[name]
        except KeyError:
            raise UnknownNode(f"unknown node {name!r}") from None

    def content(self, v: int) -> np.ndarray:
        return self.contents[self.node_types[v]][self.type_index[v]]

    def out_adjacency(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def out_degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def edges(self) -> np.ndarray:
        src = np.repeat(np.arange(self.n_nodes), self.out_degrees())
        return np.column_stack([src, self.indices])

    def padded_neighbors(self) -> np.ndarray:
        """(n, max_degree) successor table padded with -1."""
        if self._padded is None:
            deg = self.out_degrees()
            width = max(int(deg.max(initial=0)), 1)
            pad = np.full((self.n_nodes, width), -1, dtype=np.int64)
            cols = np.arange(len(self.indices)) - np.repeat(self.indptr[:-1], deg)
            pad[np.repeat(np.arange(self.n_nodes), deg), cols] = self.indices
            pad.setflags(write=False)
            self._padded = pad
        return self._padded

    def check_node(self, v: int) -> None:
        if not 0 <= v < self.n_nodes:
            raise UnknownNode(f"node {v} not in network")


def candidate_actions(net: Network, current: int, start: int) -> list[int]:
    """Successors of `current` plus the start node, sorted and duplicate-free."""
    nbrs = net.out_adjacency(current)
    out = set(int(v) for v in nbrs)
    out.add(int(start))
    return sorted(out)


def avg_out_degree(net: Network) -> float:
    if net.n_nodes == 0:
        raise EmptyNetwork("network has no nodes")
    return net.n_edges / net.n_nodes


@dataclass
class PairSet:
    pairs: np.ndarray  # (P, 2) of (start, target)
    targets_of: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        self.targets_of = {}
        for s, t in self.pairs:
            self.targets_of.setdefault(int(s), set()).add(int(t))

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def starts(self) -> np.ndarray:
        return np.array(sorted(self.targets_of), dtype=np.int64)

    def nodes(self) -> set:
        return set(self.pairs.ravel().tolist())

    def codes(self, n: int) -> np.ndarray:
        """Sorted start*n+target codes for vectorised membership tests."""
        return np.unique(self.pairs[:, 0] * n + self.pairs[:, 1])

    def symmetric(self) -> "PairSet":
        both = np.vstack([self.pairs, self.pairs[:, ::-1]])
        return PairSet(np.unique(both, axis=0))

    def validate(self, net: Network) -> None:
        if len(self.pairs) and (self.pairs.min() < 0 or self.pairs.max() >= net.n_nodes):
            raise UnknownNode("pair endpoint not in network")
        if np.any(self.pairs[:, 0] == self.pairs[:, 1]):
            raise DataError("pair with start == target")
        if len(np.unique(self.pairs, axis=0)) != len(self.pairs):
            raise DataError("duplicate pairs")


@dataclass
class LabelSet:
    labels: dict  # node_id -> class_id
    class_names: list

    def __post_init__(self):
        used = set(self.labels.values())
        if used and used != set(range(len(self.class_names))):
            raise DataError("class ids must be contiguous from 0")

    def nodes(self) -> np.ndarray:
        return np.array(sorted(self.labels), dtype=np.int64)

    def members(self, cls: int) -> np.ndarray:
        return np.array(sorted(v for v, c in self.labels.items() if c == cls), dtype=np.int64)

    def __len__(self) -> int:
        return len(self.labels)


# ---------------------------------------------------------------- file I/O

def load_network(
    node_file_path,
    edge_file_path,
    content_file_paths: Mapping[str, os.PathLike] | Iterable[os.PathLike],
    type_file_path=None,
    symmetrize: bool = False,
) -> Network:
    """Read nodes.tsv, edges.tsv and one content_<type>.tsv per type.

    `content_file_paths` is either a mapping type_name -> path or a list of
    paths named content_<type_name>.tsv. The optional types file
    (``type_name<TAB>content_dim<TAB>kind``) declares dims and kinds; without it
    the dim comes from the first content row and the kind is binary iff every
    value is 0 or 1.
    """
    names, type_names = [], []
    for lineno, row in _read_rows(node_file_path):
        if len(row) < 2:
            raise DataError(f"{node_file_path}:{lineno}: expected node_id<TAB>type_name")
        names.append(row[0])
        type_names.append(row[1])
    name_to_id = {}
    for i, name in enumerate(names):
        if name in name_to_id:
            raise DataError(f"{node_file_path}: duplicate node id {name!r}")
        name_to_id[name] = i

    if not isinstance(content_file_paths, Mapping):
        mapping = {}
        for p in content_file_paths:
            stem = Path(p).name
            if not (stem.startswith("content_") and stem.endswith(".tsv")):
                raise DataError(f"content file {p} must be named content_<type>.tsv")
            mapping[stem[len("content_"):-len(".tsv")]] = p
        content_file_paths = mapping

    declared = {}
    if type_file_path is not None:
        for lineno, row in _read_rows(type_file_path):
            if len(row) < 3:
                raise DataError(f"{type_file_path}:{lineno}: expected type_name<TAB>dim<TAB>kind")
            declared[row[0]] = (int(row[1]), row[2].strip())

    ordered_types = list(dict.fromkeys(list(declared) + type_names))
    type_id = {t: k for k, t in enumerate(ordered_types)}
    node_types = np.array([type_id[t] for t in type_names], dtype=np.int64)

    rows_by_type: dict[str, dict[int, list[float]]] = {t: {} for t in ordered_types}
    for tname in ordered_types:
        path = content_file_paths.get(tname)
        if path is None:
            if np.any(node_types == type_id[tname]):
                raise MissingContent(f"no content file for type {tname}")
            continue
        for lineno, row in _read_rows(path):
            node = name_to_id.get(row[0])
            if node is None:
                raise DataError(f"{path}:{lineno}: content for unknown node {row[0]!r}")
            if node_types[node] != type_id[tname]:
                raise DataError(f"{path}:{lineno}: node {row[0]!r} is not of type {tname}")
            try:
                rows_by_type[tname][node] = [float(x) for x in row[1:]]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None

    types, blocks = [], []
    for tname in ordered_types:
        k = type_id[tname]
        members = np.flatnonzero(node_types == k)
        rows = rows_by_type[tname]
        if tname in declared:
            dim, kind = declared[tname]
        else:
            if not rows:
                raise MissingContent(f"type {tname} has no content rows and no declared dim")
            dim = len(next(iter(rows.values())))
            vals = np.array([x for r in rows.values() for x in r])
            kind = "binary" if np.all((vals == 0.0) | (vals == 1.0)) else "continuous"
        block = np.empty((len(members), dim))
        for j, v in enumerate(members):
            r = rows.get(int(v))
            if r is None:
                raise MissingContent(f"node {names[v]!r} has no content row")
            if len(r) != dim:
                raise DimMismatch(f"node {names[v]!r}: {len(r)} values, type {tname} declares {dim}")
            block[j] = r
        if kind == "binary" and not np.all((block == 0.0) | (block == 1.0)):
            raise BadBinary(f"type {tname}: binary content outside {{0,1}}")
        types.append(NodeTypeMeta(k, tname, dim, kind))
        blocks.append(block)

    edges = []
    for lineno, row in _read_rows(edge_file_path):
        if len(row) < 2:
            raise DataError(f"{edge_file_path}:{lineno}: expected src_id<TAB>dst_id")
        s, t = name_to_id.get(row[0]), name_to_id.get(row[1])
        if s is None or t is None:
            raise DanglingEdge(f"{edge_file_path}:{lineno}: edge ({row[0]}, {row[1]}) references unknown node")
        edges.append((s, t))
        if symmetrize:
            edges.append((t, s))
    return Network(types, node_types, names, blocks, edges)


def _fmt(x: float) -> str:
    return repr(float(x))


def save_network(net: Network, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "nodes.tsv", "w", encoding="utf-8") as fh:
        for name, k in zip(net.node_names, net.node_types):
            fh.write(f"{name}\t{net.types[k].name}\n")
    with open(d / "types.tsv", "w", encoding="utf-8") as fh:
        for t in net.types:
            fh.write(f"{t.name}\t{t.content_dim}\t{t.content_kind}\n")
    with open(d / "edges.tsv", "w", encoding="utf-8") as fh:
        for s, t in net.edges():
            fh.write(f"{net.node_names[s]}\t{net.node_names[t]}\n")
    for t in net.types:
        fmt = (lambda x: str(int(x))) if t.content_kind == "binary" else _fmt
        with open(d / f"content_{t.name}.tsv", "w", encoding="utf-8") as fh:
            for v, row in zip(net.type_members[t.type_id], net.contents[t.type_id]):
                fh.write(net.node_names[v] + "\t" + "\t".join(fmt(x) for x in row) + "\n")


def load_network_dir(directory, symmetrize: bool = False) -> Network:
    d = Path(directory)
    for required in ("nodes.tsv", "edges.tsv"):
        if not (d / required).exists():
            raise DataError(f"missing {d / required}")
    types_file = d / "types.tsv"
    return load_network(
        d / "nodes.tsv",
        d / "edges.tsv",
        sorted(d.glob("content_*.tsv")),
        types_file if types_file.exists() else None,
        symmetrize=symmetrize,
    )


def load_pairs(path, net: Network) -> PairSet:
    pairs = []
    for lineno, row in _read_rows(path):
        if len(row) < 2:
            raise DataError(f"{path}:{lineno}: expected start_id<TAB>target_id")
        pairs.append((net.node_id(row[0]), net.node_id(row[1])))
    ps = PairSet(np.array(pairs, dtype=np.int64).reshape(-1, 2))
    ps.validate(net)
    return ps


def save_pairs(pairs: PairSet, net: Network, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s, t in pairs.pairs:
            fh.write(f"{net.node_names[s]}\t{net.node_names[t]}\n")


def load_labels(path, net: Network) -> LabelSet:
    raw = {}
    for lineno, row in _read_rows(path):
        if len(row) < 2:
            raise DataError(f"{path}:{lineno}: expected node_id<TAB>class_name")
        raw[net.node_id(row[0])] = row[1]
    class_names = sorted(set(raw.values()))
    index = {c: i for i, c in enumerate(class_names)}
    return LabelSet({v: index[c] for v, c in raw.items()}, class_names)


def save_labels(labels: LabelSet, net: Network, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in sorted(labels.labels):
            fh.write(f"{net.node_names[v]}\t{labels.class_names[labels.labels[v]]}\n")
