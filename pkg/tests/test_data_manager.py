import numpy as np
import pytest
import torch

from utils.algdist import jor_relax
from utils.combiner import CombinerMode, CombinerModel
from utils.data_manager import (
    is_report,
    list_artifacts,
    load_combiner,
    load_run_config,
    load_table,
    read_coordinates,
    read_edge_list,
    read_rating_file,
    read_embeddings,
    read_loss_trace,
    read_report,
    read_samples,
    read_split,
    save_combiner,
    save_run_config,
    write_coordinates,
    write_edge_list,
    write_embeddings,
    write_loss_trace,
    write_report,
    write_samples,
    write_split,
)
from utils.errors import EdgeListParseError, MalformedRecordError, NodeLookupError, ParameterError
from utils.evaluation import EvalReport
from utils.graph_core import from_named_edges, holdout_split
from utils.sampler import fobe_sample
from utils.trainer import EmbeddingTable, init_embeddings


class TestEmbeddingFiles:
    def test_header_and_precision(self, k22, tmp_path):
        table = init_embeddings(k22, 3, seed=0)
        path = tmp_path / "out" / "emb.txt"
        write_embeddings(table, str(path))
        lines = path.read_text().splitlines()
        assert lines[0] == "4 3"
        names, vectors = read_embeddings(str(path))
        assert names == k22.global_names
        np.testing.assert_array_equal(vectors, table.vectors)

    def test_names_with_spaces(self, tmp_path):
        g = from_named_edges([("Miles Davis", "Kind of Blue"), ("Bill Evans", "Kind of Blue")])
        table = EmbeddingTable(np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]), 2, g.global_names)
        path = tmp_path / "emb.txt"
        write_embeddings(table, str(path))
        loaded = load_table(str(path), g)
        assert loaded.names == ["Miles Davis", "Bill Evans", "Kind of Blue"]
        np.testing.assert_array_equal(loaded.vectors, table.vectors)

    def test_rows_follow_graph_order(self, k22, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("4 1\nb1 4.0\na0 1.0\nb0 3.0\na1 2.0\n")
        loaded = load_table(str(path), k22)
        np.testing.assert_array_equal(loaded.vectors[:, 0], [1.0, 2.0, 3.0, 4.0])

    def test_missing_node(self, k22, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("1 1\na0 1.0\n")
        with pytest.raises(NodeLookupError):
            load_table(str(path), k22)

    @pytest.mark.parametrize("text", ["4\n", "2 2\na1 1.0 2.0\n", "1 2\na1 1.0\n", "1 1\nm1 abc\n"])
    def test_malformed(self, tmp_path, text):
        path = tmp_path / "emb.txt"
        path.write_text(text)
        with pytest.raises(MalformedRecordError):
            read_embeddings(str(path))

    def test_undecodable_vectors(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_bytes(b"1 1\nm\xff1 0.5\n")
        with pytest.raises(MalformedRecordError):
            read_embeddings(str(path))


class TestGraphArtifacts:
    def test_edge_list(self, two_blocks, tmp_path):
        path = str(tmp_path / "g.txt")
        write_edge_list(two_blocks, path)
        loaded = read_edge_list(path)
        assert loaded.num_edges == two_blocks.num_edges
        assert sorted(loaded.edge_lines()) == sorted(two_blocks.edge_lines())

    @pytest.mark.parametrize("reader", [read_edge_list, read_rating_file])
    def test_undecodable_line_number(self, tmp_path, reader):
        path = tmp_path / "g.txt"
        path.write_bytes(b"u1\tm1\nu\xff2\tm2\n")
        with pytest.raises(EdgeListParseError) as raised:
            reader(str(path))
        assert raised.value.line_number == 2
        assert "UTF-8" in str(raised.value)

    def test_split_rebuilds_training_graph(self, two_blocks, tmp_path):
        split = holdout_split(two_blocks, 0.3, seed=4)
        path = tmp_path / "split.txt"
        write_split(split, str(path))
        assert path.read_text().startswith("# holdout h=0.3 seed=4")
        loaded = read_split(str(path))
        assert loaded.holdout_ratio == 0.3 and loaded.seed == 4
        assert loaded.training_graph.num_edges == split.training_graph.num_edges
        g = loaded.training_graph
        removed = {(g.names_a[a], g.names_b[b]) for a, b in loaded.removed_edges}
        original = split.training_graph
        assert removed == {(original.names_a[a], original.names_b[b]) for a, b in split.removed_edges}
        assert len(loaded.negative_edges) == len(split.negative_edges)

    def test_split_unknown_section(self, tmp_path):
        path = tmp_path / "split.txt"
        path.write_text("# holdout h=0.5 seed=0\n[extra]\na\tb\n")
        with pytest.raises(MalformedRecordError):
            read_split(str(path))

    def test_coordinates(self, two_blocks, tmp_path):
        coords = jor_relax(two_blocks, trials=4, iterations=3, damping=0.4, seed=7)
        path = str(tmp_path / "coords.txt")
        write_coordinates(coords, path)
        loaded = read_coordinates(path)
        assert (loaded.trials, loaded.iterations, loaded.damping, loaded.seed) == (4, 3, 0.4, 7)
        np.testing.assert_array_equal(loaded.coords, coords.coords)

    def test_samples(self, two_blocks, tmp_path):
        records = fobe_sample(two_blocks, samples_per_node=3, gamma_size=2, seed=1)
        path = str(tmp_path / "samples.tsv")
        write_samples(records, two_blocks, path)
        assert read_samples(path, two_blocks) == records

    def test_bad_sample_line(self, k22, tmp_path):
        path = tmp_path / "samples.tsv"
        path.write_text("AA\ta0\ta1\n")
        with pytest.raises(MalformedRecordError):
            read_samples(str(path), k22)


class TestReportsAndTraces:
    def test_report_columns(self, tmp_path):
        report = EvalReport.from_records(
            [("fobe", "unified", 0.5, 0, "accuracy", 0.8), ("fobe", "unified", 0.5, 1, "accuracy", None)],
            seeds=[0, 1],
            runtime=1.0,
        )
        path = str(tmp_path / "report.csv")
        write_report(report, path)
        assert is_report(path)
        rows = read_report(path)
        assert rows["value"].isna().sum() == 1
        assert rows["value"].dropna().tolist() == [0.8]

    def test_trace_is_not_a_report(self, tmp_path):
        path = str(tmp_path / "emb.trace.csv")
        write_loss_trace([3.0, 2.0, 1.5], path)
        assert not is_report(path)
        assert not is_report(str(tmp_path / "missing.csv"))
        trace = read_loss_trace(path)
        assert trace["epoch"].tolist() == [0, 1, 2]
        assert trace["loss"].tolist() == [3.0, 2.0, 1.5]

    def test_read_report_rejects_other_csv(self, tmp_path):
        path = tmp_path / "other.csv"
        path.write_text("epoch,loss\n0,1.0\n")
        with pytest.raises(MalformedRecordError):
            read_report(str(path))

    def test_list_artifacts(self, tmp_path):
        write_loss_trace([1.0], str(tmp_path / "runs" / "a.trace.csv"))
        write_loss_trace([1.0], str(tmp_path / "b.trace.csv"))
        found = list_artifacts("*trace*.csv", str(tmp_path))
        assert sorted(p.rsplit("/", 1)[-1] for p in found) == ["a.trace.csv", "b.trace.csv"]


class TestCheckpointsAndConfig:
    def test_combiner_checkpoint(self, tmp_path):
        torch.manual_seed(0)
        model = CombinerModel(4, 2, CombinerMode.AUTOREG, dropout=0.2)
        model.history["loss"] = [1.0, 0.5]
        path = str(tmp_path / "combiner.pt")
        save_combiner(model, path)
        loaded = load_combiner(path)
        assert loaded.mode is CombinerMode.AUTOREG
        assert (loaded.input_dim, loaded.combined_dim, loaded.dropout) == (4, 2, 0.2)
        assert loaded.history["loss"] == [1.0, 0.5]
        assert not loaded.training
        for key, value in model.state_dict().items():
            assert torch.equal(value, loaded.state_dict()[key])

    def test_run_config(self, tmp_path):
        path = str(tmp_path / "config.json")
        save_run_config({"dimension": 16, "seed": 3}, path)
        assert load_run_config(path) == {"dimension": 16, "seed": 3}

    def test_missing_config_means_no_overrides(self, tmp_path):
        assert load_run_config(str(tmp_path / "absent.json")) == {}
        assert load_run_config(None) == {}

    @pytest.mark.parametrize("text", ["{not json", "[1, 2]"])
    def test_bad_config(self, tmp_path, text):
        path = tmp_path / "config.json"
        path.write_text(text)
        with pytest.raises(ParameterError):
            load_run_config(str(path))
