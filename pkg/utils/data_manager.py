"""Readers and writers for every artifact a pipeline stage produces."""

import glob
import json
import logging
import os

import numpy as np
import pandas as pd
import torch

from utils.algdist import AlgebraicCoordinates
from utils.combiner import CombinerMode, CombinerModel
from utils.errors import EdgeListParseError, MalformedRecordError, NodeLookupError, ParameterError
from utils.evaluation import REPORT_COLUMNS, EvalReport, RatingGraph, load_ratings
from utils.graph_core import BipartiteGraph, HoldoutSplit, from_named_edges, load_edge_list
from utils.sampler import RecordKind, SampleRecord
from utils.trainer import EmbeddingTable

logger = logging.getLogger(__name__)

# Data files
DATA_DIR = "data"
TRACE_PATTERN = "*trace*.csv"
SPLIT_SECTIONS = ("train", "removed", "negative")


def ensure_data_dir(directory=DATA_DIR):
    """Ensure the data directory exists"""
    if directory and not os.path.exists(directory):
        os.makedirs(directory)


def ensure_parent(path):
    ensure_data_dir(os.path.dirname(path))


def _write_lines(path, lines):
    ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for line in lines:
            f.write(line + "\n")


# -- graphs ------------------------------------------------------------------


def _utf8_lines(path):
    """Decoded lines of ``path``; a line that is not UTF-8 raises EdgeListParseError"""
    with open(path, "rb") as f:
        for line_number, raw in enumerate(f, start=1):
            try:
                yield raw.decode("utf-8")
            except UnicodeDecodeError as error:
                raise EdgeListParseError(line_number, raw, f"not valid UTF-8 ({error.reason})") from None


def read_edge_list(path) -> BipartiteGraph:
    return load_edge_list(_utf8_lines(path))


def write_edge_list(g: BipartiteGraph, path):
    _write_lines(path, g.edge_lines())


def read_rating_file(path, log_scale=False) -> RatingGraph:
    return load_ratings(_utf8_lines(path), log_scale)


def write_split(split: HoldoutSplit, path):
    """Header with h and seed, then the train, removed and negative sections"""
    g = split.training_graph
    lines = [f"# holdout h={split.holdout_ratio!r} seed={split.seed}"]
    sections = {
        "train": g.edges,
        "removed": split.removed_edges,
        "negative": split.negative_edges,
    }
    for name in SPLIT_SECTIONS:
        lines.append(f"[{name}]")
        lines.extend(f"{g.names_a[a]}\t{g.names_b[b]}" for a, b in sections[name])
    _write_lines(path, lines)


def read_split(path) -> HoldoutSplit:
    h = seed = None
    pairs = {name: [] for name in SPLIT_SECTIONS}
    section = None
    with open(path, "r", encoding="utf-8") as f:
        for line_number, raw in enumerate(f, start=1):
            line = raw.rstrip("\n")
            if line.startswith("# holdout"):
                fields = dict(item.split("=", 1) for item in line.split()[2:])
                h, seed = float(fields["h"]), int(fields["seed"])
            elif line.startswith("[") and line.endswith("]"):
                section = line[1:-1]
                if section not in pairs:
                    raise MalformedRecordError(f"{path}:{line_number}: unknown section {section!r}")
            elif line:
                if section is None:
                    raise MalformedRecordError(f"{path}:{line_number}: edge before any section")
                pairs[section].append(tuple(line.split("\t")))
    if h is None:
        raise MalformedRecordError(f"{path}: missing holdout header")

    g = from_named_edges(pairs["train"])

    def resolve(named):
        rows = [(g.node_of(a).index, g.node_of(b).index) for a, b in named]
        return np.array(rows, dtype=np.int64).reshape(-1, 2)

    return HoldoutSplit(g, resolve(pairs["removed"]), resolve(pairs["negative"]), h, seed)


# -- algebraic coordinates ---------------------------------------------------


def write_coordinates(coords: AlgebraicCoordinates, path):
    """One node per line, R columns, header recording R, K, lambda and the seed"""
    header = (
        f"# R={coords.trials} K={coords.iterations} lambda={coords.damping!r} "
        f"seed={coords.seed} nodes={coords.num_nodes} nodes_a={coords.nodes_a}"
    )
    rows = (" ".join(repr(float(x)) for x in column) for column in coords.coords.T)
    _write_lines(path, [header, *rows])


def read_coordinates(path) -> AlgebraicCoordinates:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().split()
        if not header or header[0] != "#":
            raise MalformedRecordError(f"{path}: missing coordinate header")
        fields = dict(item.split("=", 1) for item in header[1:])
        matrix = np.loadtxt(f, dtype=np.float64, ndmin=2)
    trials = int(fields["R"])
    if matrix.shape != (int(fields["nodes"]), trials):
        raise MalformedRecordError(f"{path}: expected {fields['nodes']} rows of {trials} columns")
    return AlgebraicCoordinates(
        matrix.T.copy(),
        trials,
        int(fields["K"]),
        float(fields["lambda"]),
        int(fields["seed"]),
        int(fields["nodes_a"]),
    )


# -- sample records ----------------------------------------------------------


def write_samples(records, g: BipartiteGraph, path):
    """``kind<TAB>left<TAB>right<TAB>target<TAB>gamma_left<TAB>gamma_right`` per record"""

    def names(nodes):
        return ",".join(g.name_of(v) for v in nodes)

    _write_lines(
        path,
        (
            f"{r.kind.value}\t{g.name_of(r.left)}\t{g.name_of(r.right)}\t{r.target!r}"
            f"\t{names(r.gamma_left)}\t{names(r.gamma_right)}"
            for r in records
        ),
    )


def read_samples(path, g: BipartiteGraph) -> list[SampleRecord]:
    def nodes(field):
        return tuple(g.node_of(name) for name in field.split(",")) if field else ()

    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, raw in enumerate(f, start=1):
            fields = raw.rstrip("\n").split("\t")
            if len(fields) != 6:
                raise MalformedRecordError(f"{path}:{line_number}: expected 6 tab-separated fields")
            try:
                kind = RecordKind(fields[0])
                target = float(fields[3])
            except ValueError as error:
                raise MalformedRecordError(f"{path}:{line_number}: {error}") from None
            records.append(
                SampleRecord(
                    kind,
                    g.node_of(fields[1]),
                    g.node_of(fields[2]),
                    nodes(fields[4]),
                    nodes(fields[5]),
                    target,
                )
            )
    return records


# -- embeddings --------------------------------------------------------------


def write_embeddings(table: EmbeddingTable, path):
    """Header ``<node_count> <r>``, then ``<id> <v_1> ... <v_r>`` at full precision"""
    lines = [f"{table.num_nodes} {table.dimension}"]
    for name, vector in zip(table.names, table.vectors):
        lines.append(name + " " + " ".join(repr(float(x)) for x in vector))
    _write_lines(path, lines)


def read_embeddings(path):
    """Returns ``(names, vectors)`` in file order"""
    try:
        with open(path, "r", encoding="utf-8") as f:
            header = f.readline().split()
            if len(header) != 2 or not all(field.isdigit() for field in header):
                raise MalformedRecordError(f"{path}: header must be '<node_count> <r>'")
            count, dimension = int(header[0]), int(header[1])
            names, rows = [], []
            for line_number, raw in enumerate(f, start=2):
                # Ids may contain spaces; the last r fields are the vector
                fields = raw.rstrip("\n").rsplit(" ", dimension)
                if len(fields) != dimension + 1:
                    raise MalformedRecordError(f"{path}:{line_number}: expected an id and {dimension} values")
                try:
                    rows.append([float(x) for x in fields[1:]])
                except ValueError:
                    raise MalformedRecordError(f"{path}:{line_number}: vector values must be numbers") from None
                names.append(fields[0])
    except UnicodeDecodeError as error:
        raise MalformedRecordError(f"{path}: not valid UTF-8 ({error.reason})") from None
    if len(names) != count:
        raise MalformedRecordError(f"{path}: header promises {count} nodes, found {len(names)}")
    return names, np.array(rows, dtype=np.float64).reshape(count, dimension)


def table_for_graph(names, vectors, g: BipartiteGraph) -> EmbeddingTable:
    """Reorder loaded vectors into g's global-index order"""
    position = {name: k for k, name in enumerate(names)}
    missing = [name for name in g.global_names if name not in position]
    if missing:
        raise NodeLookupError(f"{len(missing)} graph nodes have no embedding, e.g. {missing[0]!r}")
    order = [position[name] for name in g.global_names]
    return EmbeddingTable(np.asarray(vectors)[order], g.nodes_a, g.global_names)


def load_table(path, g: BipartiteGraph) -> EmbeddingTable:
    names, vectors = read_embeddings(path)
    return table_for_graph(names, vectors, g)


# -- traces, reports, checkpoints --------------------------------------------


def write_loss_trace(trace, path):
    ensure_parent(path)
    pd.DataFrame({"epoch": range(len(trace)), "loss": trace}).to_csv(path, index=False)


def read_loss_trace(path) -> pd.DataFrame:
    return pd.read_csv(path)


def write_report(report: EvalReport, path):
    ensure_parent(path)
    report.rows.to_csv(path, index=False, columns=REPORT_COLUMNS)


def read_report(path) -> pd.DataFrame:
    rows = pd.read_csv(path)
    if list(rows.columns) != REPORT_COLUMNS:
        raise MalformedRecordError(f"{path}: report columns must be {','.join(REPORT_COLUMNS)}")
    return rows


def is_report(path):
    """True when the CSV header is exactly the report columns"""
    try:
        with open(path, "r", encoding="utf-8") as f:
            return f.readline().strip() == ",".join(REPORT_COLUMNS)
    except OSError:
        return False


def list_artifacts(pattern, data_dir=DATA_DIR):
    """Artifact files under ``data_dir`` matching ``pattern``, newest first"""
    paths = glob.glob(os.path.join(data_dir, "**", pattern), recursive=True)
    return sorted(paths, key=os.path.getmtime, reverse=True)


def save_combiner(model: CombinerModel, path):
    """Checkpoint recording mode and layer dimensions next to the weights"""
    ensure_parent(path)
    torch.save(
        {
            "mode": model.mode.value,
            "input_dim": model.input_dim,
            "combined_dim": model.combined_dim,
            "hidden_dim": model.hidden_dim,
            "dropout": model.dropout,
            "history": model.history,
            "state_dict": model.state_dict(),
        },
        path,
    )


def load_combiner(path) -> CombinerModel:
    checkpoint = torch.load(path, map_location="cpu", weights_only=False)
    model = CombinerModel(
        checkpoint["input_dim"],
        checkpoint["combined_dim"],
        CombinerMode(checkpoint["mode"]),
        checkpoint["dropout"],
    )
    model.load_state_dict(checkpoint["state_dict"])
    model.history = checkpoint["history"]
    model.eval()
    return model


# -- run configuration -------------------------------------------------------


def load_run_config(path):
    """Load a JSON run config; a missing file means no overrides"""
    if not path or not os.path.exists(path):
        return {}
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as error:
            raise ParameterError(f"{path}: invalid JSON config ({error})") from None
    if not isinstance(data, dict):
        raise ParameterError(f"{path}: config must be a JSON object")
    return data


def save_run_config(config, path):
    ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config, f, indent=2, sort_keys=True)
