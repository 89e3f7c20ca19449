"""Command-line front end: every pipeline stage reads and writes files.

    bipembed ingest    --edges raw.tsv --out g.tsv [--min-degree 2] [--h 0.5 --split-out s.txt]
    bipembed algdist   --edges g.tsv --out coords.txt
    bipembed sample    --edges g.tsv --method hobe --out samples.tsv
    bipembed embed     --edges g.tsv --method fobe --dim 100 --out e.txt
    bipembed combine   --edges g.tsv --inputs fobe.txt hobe.txt --mode autoreg --out c.txt
    bipembed eval-link --edges g.tsv --methods fobe hobe --h 0.5 --out report.csv
    bipembed eval-rec  --ratings r.tsv --k 10 --out rec.csv
    bipembed sweep     --edges g.tsv --method fobe --out sweep.csv

Flags override values from ``--config``; ``--threads 1`` is bit-reproducible.
"""

import argparse
import logging
import os
import sys
from dataclasses import MISSING, dataclass, field, fields, replace

import pandas as pd

from utils import data_manager
from utils.algdist import DEFAULT_DAMPING, DEFAULT_ITERATIONS, DEFAULT_TRIALS
from utils.combiner import COMBINER_LEARNING_RATE, CombinerMode, train_combiner
from utils.errors import BipartiteEmbeddingError, EmptyTaskError, ParameterError
from utils.evaluation import (
    DEFAULT_HOLDOUTS,
    DEFAULT_REC_HOLDOUT,
    DEFAULT_TOP_K,
    SWEEP_HOLDOUT,
    SWEEP_RATES,
    SWEEP_TRIALS,
    UNIFIED_LEARNING_RATE,
    EvalReport,
    UnifiedConfig,
    run_link_experiment,
    run_rec_experiment,
    run_sensitivity_sweep,
    sensitivity_summary,
)
from utils.graph_core import degree_prune, holdout_split
from utils.pipeline import EmbedParams, Method, combiner_config, embed, embed_hobe, embedders, relax, sweep_embedder
from utils.sampler import DEFAULT_GAMMA_SIZE, DEFAULT_NEGATIVE_RATIO, DEFAULT_SAMPLES_PER_NODE, fobe_sample, hobe_sample
from utils.trainer import DEFAULT_DIMENSION, KLForm, LossKind, train

logger = logging.getLogger(__name__)

REQUIRED = {
    "ingest": ("edges", "out"),
    "algdist": ("edges", "out"),
    "sample": ("edges", "out"),
    "embed": ("edges", "out"),
    "combine": ("edges", "inputs", "out"),
    "eval-link": ("edges", "out"),
    "eval-rec": ("ratings", "out"),
    "sweep": ("edges", "out"),
}

# Settings of the LastFM recommendation run, applied under --extended
EXTENDED_PRESET = {"dimension": 128, "rec_holdout": 0.4, "top_k": 10, "log_scale": True, "methods": ["fobe", "hobe"]}


@dataclass
class RunConfig:
    command: str = ""
    edges: str | None = None
    ratings: str | None = None
    out: str | None = None
    inputs: list[str] = field(default_factory=list)
    samples: str | None = None
    coords: str | None = None
    checkpoint: str | None = None
    trace_out: str | None = None
    split_out: str | None = None
    summary_out: str | None = None
    method: str = Method.FOBE.value
    methods: list[str] = field(default_factory=lambda: [Method.FOBE.value, Method.HOBE.value])
    mode: str = CombinerMode.DIRECT.value
    dimension: int = DEFAULT_DIMENSION
    samples_per_node: int = DEFAULT_SAMPLES_PER_NODE
    gamma_size: int = DEFAULT_GAMMA_SIZE
    negative_ratio: float = DEFAULT_NEGATIVE_RATIO
    trials: int = DEFAULT_TRIALS
    iterations: int = DEFAULT_ITERATIONS
    damping: float = DEFAULT_DAMPING
    combined_dim: int | None = None
    epochs: int = 10
    combiner_epochs: int = 10
    unified_epochs: int = UnifiedConfig.epochs
    learning_rate: float = 0.1
    combiner_learning_rate: float = COMBINER_LEARNING_RATE
    unified_learning_rate: float = UNIFIED_LEARNING_RATE
    batch_size: int = 256
    dropout: float = 0.5
    kl_form: str = KLForm.OBSERVED.value
    uniform_khop: bool = False
    min_degree: int = 0
    holdout: float | None = None
    holdouts: list[float] = field(default_factory=lambda: list(DEFAULT_HOLDOUTS))
    seeds: list[int] | None = None
    rec_holdout: float = DEFAULT_REC_HOLDOUT
    top_k: int = DEFAULT_TOP_K
    log_scale: bool = False
    exponential_gain: bool = False
    graded: bool = False
    rates: list[int] = field(default_factory=lambda: list(SWEEP_RATES))
    sweep_trials: int = SWEEP_TRIALS
    sweep_holdout: float = SWEEP_HOLDOUT
    extended: bool = False
    seed: int = 0
    threads: int = 1

    @property
    def run_seeds(self) -> list[int]:
        return list(self.seeds) if self.seeds else [self.seed]

    def embed_params(self) -> EmbedParams:
        return EmbedParams(
            dimension=self.dimension,
            samples_per_node=self.samples_per_node,
            gamma_size=self.gamma_size,
            negative_ratio=self.negative_ratio,
            trials=self.trials,
            iterations=self.iterations,
            damping=self.damping,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            combined_dim=self.combined_dim,
            combiner_epochs=self.combiner_epochs,
            combiner_learning_rate=self.combiner_learning_rate,
            dropout=self.dropout,
            threads=self.threads,
            uniform_khop=self.uniform_khop,
            kl_form=KLForm(self.kl_form),
        )

    def unified_config(self) -> UnifiedConfig:
        return UnifiedConfig(
            epochs=self.unified_epochs,
            learning_rate=self.unified_learning_rate,
            batch_size=self.batch_size,
            seed=self.seed,
        )


_FIELDS = {f.name: f for f in fields(RunConfig)}
CONFIG_FIELDS = set(_FIELDS)


def validate_config(config: RunConfig) -> list[str]:
    """Every range and path violation in ``config``; empty when it is usable"""
    problems = []

    def check(ok, message):
        if not ok:
            problems.append(message)

    check(0.0 < config.damping < 1.0, f"lambda (--damping) must be in (0, 1), got {config.damping}")
    for h in config.holdouts:
        check(0.0 <= h <= 1.0, f"h must be in [0, 1], got {h}")
    if config.holdout is not None:
        check(0.0 <= config.holdout <= 1.0, f"h must be in [0, 1], got {config.holdout}")
    check(0.0 <= config.rec_holdout <= 1.0, f"recommendation holdout must be in [0, 1], got {config.rec_holdout}")
    check(0.0 <= config.sweep_holdout <= 1.0, f"sweep h must be in [0, 1], got {config.sweep_holdout}")
    check(config.samples_per_node >= 1, f"s_r must be >= 1, got {config.samples_per_node}")
    check(config.gamma_size >= 1, f"s_gamma must be >= 1, got {config.gamma_size}")
    check(config.negative_ratio >= 0, f"nu must be >= 0, got {config.negative_ratio}")
    check(config.trials >= 1, f"R must be >= 1, got {config.trials}")
    check(config.iterations >= 1, f"K must be >= 1, got {config.iterations}")
    check(config.dimension >= 1, f"r (--dim) must be >= 1, got {config.dimension}")
    check(config.combined_dim is None or config.combined_dim >= 1, f"k' must be >= 1, got {config.combined_dim}")
    check(config.epochs >= 0, f"epochs must be >= 0, got {config.epochs}")
    check(config.combiner_epochs >= 0, f"combiner epochs must be >= 0, got {config.combiner_epochs}")
    check(config.unified_epochs >= 0, f"unified epochs must be >= 0, got {config.unified_epochs}")
    check(config.learning_rate > 0, f"learning rate must be > 0, got {config.learning_rate}")
    check(config.combiner_learning_rate > 0, f"combiner learning rate must be > 0, got {config.combiner_learning_rate}")
    check(config.unified_learning_rate > 0, f"unified learning rate must be > 0, got {config.unified_learning_rate}")
    check(config.batch_size >= 1, f"batch size must be >= 1, got {config.batch_size}")
    check(0.0 <= config.dropout < 1.0, f"dropout must be in [0, 1), got {config.dropout}")
    check(config.top_k >= 1, f"k must be >= 1, got {config.top_k}")
    check(all(rate >= 1 for rate in config.rates), f"every s_r in the sweep must be >= 1, got {config.rates}")
    check(config.sweep_trials >= 1, f"sweep trials must be >= 1, got {config.sweep_trials}")
    check(config.min_degree >= 0, f"min degree must be >= 0, got {config.min_degree}")
    check(config.threads >= 1, f"threads must be >= 1, got {config.threads}")

    valid_methods = {m.value for m in Method}
    for method in [config.method, *config.methods]:
        check(method in valid_methods, f"unknown method {method!r}; choose from {sorted(valid_methods)}")
    check(config.mode in {m.value for m in CombinerMode}, f"unknown combiner mode {config.mode!r}")
    check(config.kl_form in {k.value for k in KLForm}, f"unknown KL form {config.kl_form!r}")

    for name in ("edges", "ratings", "samples", "coords"):
        path = getattr(config, name)
        if path is not None:
            check(os.path.exists(path), f"{name} file not found: {path}")
    for path in config.inputs:
        check(os.path.exists(path), f"input embedding not found: {path}")
    return problems


# -- parser ------------------------------------------------------------------


def _default(name):
    f = _FIELDS[name]
    return f.default_factory() if f.default_factory is not MISSING else f.default


def _flag(parser, *names, dest, help, **kwargs):
    """Add a flag whose absence leaves the config-file or RunConfig value in place"""
    default = _default(dest)
    shown = "--seed" if dest == "seeds" else default
    parser.add_argument(*names, dest=dest, default=argparse.SUPPRESS, help=f"{help} (default: {shown})", **kwargs)


def _common_parser():
    common = argparse.ArgumentParser(add_help=False)
    _flag(common, "--seed", dest="seed", type=int, help="seed for every random choice")
    _flag(common, "--threads", dest="threads", type=int, help="worker threads; 1 is bit-reproducible")
    common.add_argument("--config", default=None, help="JSON file of RunConfig fields; flags override it")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="standard error log level (default: INFO)")
    common.add_argument("--quiet", action="store_true", help="hide progress bars")
    return common


def _sampling_flags(parser):
    _flag(parser, "--samples-per-node", dest="samples_per_node", type=int, help="s_r, sampling rounds per node")
    _flag(parser, "--gamma-size", dest="gamma_size", type=int, help="s_gamma, neighborhood sample per cross record")
    _flag(parser, "--negative-ratio", dest="negative_ratio", type=float, help="nu, negatives per positive")
    _flag(parser, "--uniform-khop", dest="uniform_khop", action="store_true", help="sample k-hop sets uniformly instead of by walk")


def _relax_flags(parser):
    _flag(parser, "--trials", dest="trials", type=int, help="R, random test vectors")
    _flag(parser, "--iterations", dest="iterations", type=int, help="K, JOR sweeps")
    _flag(parser, "--damping", dest="damping", type=float, help="lambda, JOR damping in (0, 1)")


def _train_flags(parser):
    _flag(parser, "--dim", dest="dimension", type=int, help="r, embedding dimension")
    _flag(parser, "--epochs", dest="epochs", type=int, help="training epochs")
    _flag(parser, "--lr", dest="learning_rate", type=float, help="Adagrad learning rate")
    _flag(parser, "--batch-size", dest="batch_size", type=int, help="mini-batch size")
    _flag(parser, "--kl-form", dest="kl_form", choices=[k.value for k in KLForm], help="FOBE KL direction")


def _combine_flags(parser):
    _flag(parser, "--combined-dim", dest="combined_dim", type=int, help="k', combined dimension; None means r")
    _flag(parser, "--combiner-epochs", dest="combiner_epochs", type=int, help="combiner training epochs")
    _flag(parser, "--combiner-lr", dest="combiner_learning_rate", type=float, help="combiner Adagrad learning rate")
    _flag(parser, "--dropout", dest="dropout", type=float, help="combiner input dropout rate")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bipembed", description="Bipartite graph embedding toolkit")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    common = _common_parser()

    def command(name, help):
        return sub.add_parser(name, parents=[common], help=help, description=help)

    ingest = command("ingest", "clean an edge list and optionally write a holdout split")
    _flag(ingest, "--edges", dest="edges", help="input edge list")
    _flag(ingest, "--out", dest="out", help="cleaned edge list")
    _flag(ingest, "--min-degree", dest="min_degree", type=int, help="iteratively drop nodes below this degree")
    _flag(ingest, "--h", dest="holdout", type=float, help="holdout ratio for a split manifest")
    _flag(ingest, "--split-out", dest="split_out", help="split manifest path")

    algdist = command("algdist", "relax random test vectors and write algebraic coordinates")
    _flag(algdist, "--edges", dest="edges", help="edge list")
    _flag(algdist, "--out", dest="out", help="coordinate dump")
    _relax_flags(algdist)

    sample = command("sample", "write FOBE or HOBE training records")
    _flag(sample, "--edges", dest="edges", help="edge list")
    _flag(sample, "--out", dest="out", help="sample file")
    _flag(sample, "--method", dest="method", choices=[Method.FOBE.value, Method.HOBE.value], help="observation scheme")
    _flag(sample, "--coords", dest="coords", help="coordinate dump for HOBE; relaxed on the fly when absent")
    _sampling_flags(sample)
    _relax_flags(sample)

    embed_cmd = command("embed", "train an embedding and write it")
    _flag(embed_cmd, "--edges", dest="edges", help="edge list")
    _flag(embed_cmd, "--out", dest="out", help="embedding file")
    _flag(embed_cmd, "--method", dest="method", choices=[m.value for m in Method], help="embedding method")
    _flag(embed_cmd, "--samples", dest="samples", help="pre-drawn sample file (FOBE/HOBE only)")
    _flag(embed_cmd, "--coords", dest="coords", help="coordinate dump for HOBE")
    _flag(embed_cmd, "--trace-out", dest="trace_out", help="loss trace CSV")
    _train_flags(embed_cmd)
    _sampling_flags(embed_cmd)
    _relax_flags(embed_cmd)
    _combine_flags(embed_cmd)

    combine = command("combine", "combine pre-trained embeddings into one")
    _flag(combine, "--edges", dest="edges", help="edge list the inputs were trained on")
    _flag(combine, "--inputs", dest="inputs", nargs="+", help="embedding files to combine, in order")
    _flag(combine, "--out", dest="out", help="combined embedding file")
    _flag(combine, "--mode", dest="mode", choices=[m.value for m in CombinerMode], help="combination objective")
    _flag(combine, "--checkpoint", dest="checkpoint", help="model checkpoint path")
    _flag(combine, "--trace-out", dest="trace_out", help="loss trace CSV")
    _flag(combine, "--dim", dest="dimension", type=int, help="r, used as k' when --combined-dim is absent")
    _flag(combine, "--batch-size", dest="batch_size", type=int, help="mini-batch size")
    _combine_flags(combine)

    link = command("eval-link", "personalized and unified link prediction over holdout ratios")
    _flag(link, "--edges", dest="edges", help="edge list")
    _flag(link, "--out", dest="out", help="report CSV")
    _flag(link, "--methods", dest="methods", nargs="+", choices=[m.value for m in Method], help="methods to compare")
    _flag(link, "--h", dest="holdouts", nargs="+", type=float, help="holdout ratios")
    _flag(link, "--seeds", dest="seeds", nargs="+", type=int, help="split and training seeds")
    _flag(link, "--unified-epochs", dest="unified_epochs", type=int, help="unified classifier epochs")
    _flag(link, "--unified-lr", dest="unified_learning_rate", type=float, help="unified classifier Adagrad learning rate")
    _train_flags(link)
    _sampling_flags(link)
    _relax_flags(link)
    _combine_flags(link)

    rec = command("eval-rec", "centroid-ranking recommendation metrics at k")
    _flag(rec, "--ratings", dest="ratings", help="user<TAB>item<TAB>rating file")
    _flag(rec, "--out", dest="out", help="report CSV")
    _flag(rec, "--methods", dest="methods", nargs="+", choices=[m.value for m in Method], help="methods to compare")
    _flag(rec, "--holdout", dest="rec_holdout", type=float, help="fraction of ratings held out")
    _flag(rec, "--k", dest="top_k", type=int, help="ranking cutoff")
    _flag(rec, "--seeds", dest="seeds", nargs="+", type=int, help="split and training seeds")
    _flag(rec, "--log-scale", dest="log_scale", action="store_true", help="use log(1 + rating) weights")
    _flag(rec, "--exponential-gain", dest="exponential_gain", action="store_true", help="NDCG gain 2^rel - 1")
    _flag(rec, "--graded", dest="graded", action="store_true", help="grade relevance by held-out rating")
    _flag(rec, "--extended", dest="extended", action="store_true", help=f"LastFM run settings {EXTENDED_PRESET}")
    _train_flags(rec)
    _sampling_flags(rec)
    _relax_flags(rec)
    _combine_flags(rec)

    sweep = command("sweep", "link accuracy across samples-per-node settings")
    _flag(sweep, "--edges", dest="edges", help="edge list")
    _flag(sweep, "--out", dest="out", help="report CSV")
    _flag(sweep, "--summary-out", dest="summary_out", help="per-rate mean/variance CSV")
    _flag(sweep, "--method", dest="method", choices=[m.value for m in Method], help="embedding method")
    _flag(sweep, "--rates", dest="rates", nargs="+", type=int, help="s_r values")
    _flag(sweep, "--sweep-trials", dest="sweep_trials", type=int, help="trials per rate")
    _flag(sweep, "--h", dest="sweep_holdout", type=float, help="holdout ratio")
    _flag(sweep, "--unified-epochs", dest="unified_epochs", type=int, help="unified classifier epochs")
    _flag(sweep, "--unified-lr", dest="unified_learning_rate", type=float, help="unified classifier Adagrad learning rate")
    _train_flags(sweep)
    _flag(sweep, "--gamma-size", dest="gamma_size", type=int, help="s_gamma, neighborhood sample per cross record")
    _flag(sweep, "--negative-ratio", dest="negative_ratio", type=float, help="nu, negatives per positive")
    _relax_flags(sweep)

    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """RunConfig defaults, then the JSON file, then explicit flags"""
    from_file = data_manager.load_run_config(args.config)
    values = {k: v for k, v in from_file.items() if k in CONFIG_FIELDS}
    unknown = set(from_file) - CONFIG_FIELDS
    if unknown:
        logger.warning("Ignoring unknown config keys: %s", ", ".join(sorted(unknown)))
    values.update({k: v for k, v in vars(args).items() if k in CONFIG_FIELDS})
    if values.get("extended"):
        values = {**EXTENDED_PRESET, **values}
    return RunConfig(**values)


# -- stages ------------------------------------------------------------------


def run_ingest(config: RunConfig, progress: bool):
    g = data_manager.read_edge_list(config.edges)
    if config.min_degree:
        g = degree_prune(g, config.min_degree)
    data_manager.write_edge_list(g, config.out)
    logger.info("Wrote %r to %s", g, config.out)
    if config.holdout is not None:
        split = holdout_split(g, config.holdout, config.seed)
        path = config.split_out or config.out + ".split"
        data_manager.write_split(split, path)
        logger.info("Removed %d edges; split manifest at %s", split.removed_edges.shape[0], path)


def run_algdist(config: RunConfig, progress: bool):
    g = data_manager.read_edge_list(config.edges)
    coords = relax(g, config.seed, config.embed_params())
    data_manager.write_coordinates(coords, config.out)


def _coordinates(config: RunConfig, g):
    if config.coords:
        return data_manager.read_coordinates(config.coords)
    return relax(g, config.seed, config.embed_params())


def run_sample(config: RunConfig, progress: bool):
    g = data_manager.read_edge_list(config.edges)
    args = (config.samples_per_node, config.gamma_size, config.negative_ratio, config.seed, config.threads, config.uniform_khop)
    if Method(config.method) is Method.HOBE:
        records = hobe_sample(g, _coordinates(config, g), *args)
    else:
        records = fobe_sample(g, *args)
    data_manager.write_samples(records, g, config.out)


def run_embed(config: RunConfig, progress: bool):
    g = data_manager.read_edge_list(config.edges)
    method = Method(config.method)
    params = replace(config.embed_params(), progress=progress)
    if config.samples:
        if method not in (Method.FOBE, Method.HOBE):
            raise ParameterError("--samples applies to fobe and hobe only")
        loss = LossKind.FOBE_KL if method is Method.FOBE else LossKind.HOBE_MSE
        records = data_manager.read_samples(config.samples, g)
        table = train(records, g, params.train_config(loss, config.seed))
    elif method is Method.HOBE and config.coords:
        table = embed_hobe(g, config.seed, params, data_manager.read_coordinates(config.coords))
    else:
        table = embed(method, g, config.seed, params)
    data_manager.write_embeddings(table, config.out)
    if config.trace_out:
        data_manager.write_loss_trace(table.loss_trace, config.trace_out)


def run_combine(config: RunConfig, progress: bool):
    g = data_manager.read_edge_list(config.edges)
    tables = [data_manager.load_table(path, g) for path in config.inputs]
    params = config.embed_params()
    model, table = train_combiner(
        tables,
        g,
        config.combined_dim or config.dimension,
        CombinerMode(config.mode),
        combiner_config(params, config.seed),
    )
    data_manager.write_embeddings(table, config.out)
    if config.checkpoint:
        data_manager.save_combiner(model, config.checkpoint)
    if config.trace_out:
        data_manager.write_loss_trace(table.loss_trace, config.trace_out)


def _raise_if_all_invalid(report: EvalReport):
    if report.all_invalid():
        message = report.invalid[0]["error"] if report.invalid else "no task produced a result"
        raise EmptyTaskError(message)


def run_eval_link(config: RunConfig, progress: bool):
    g = data_manager.read_edge_list(config.edges)
    params = config.embed_params()
    methods = embedders(config.methods, params)
    report = run_link_experiment(
        g,
        methods,
        config.holdouts,
        config.run_seeds,
        config.threads,
        config.unified_config(),
        progress,
    )
    _raise_if_all_invalid(report)
    data_manager.write_report(report, config.out)
    logger.info("Link experiment finished in %.1fs", report.runtime)


def run_eval_rec(config: RunConfig, progress: bool):
    ratings = data_manager.read_rating_file(config.ratings, config.log_scale)
    params = config.embed_params()
    methods = embedders(config.methods, params)
    reports = [
        run_rec_experiment(ratings, methods, config.rec_holdout, config.top_k, seed, config.exponential_gain, config.graded)
        for seed in config.run_seeds
    ]
    rows = pd.concat([r.rows for r in reports], ignore_index=True)
    report = EvalReport(rows, config.run_seeds, sum(r.runtime for r in reports))
    data_manager.write_report(report, config.out)


def run_sweep(config: RunConfig, progress: bool):
    g = data_manager.read_edge_list(config.edges)
    report = run_sensitivity_sweep(
        g,
        sweep_embedder(config.method, config.embed_params()),
        config.rates,
        config.sweep_trials,
        config.sweep_holdout,
        config.threads,
        config.unified_config(),
        config.seed,
        progress,
    )
    _raise_if_all_invalid(report)
    data_manager.write_report(report, config.out)
    if config.summary_out:
        data_manager.ensure_parent(config.summary_out)
        sensitivity_summary(report).to_csv(config.summary_out, index=False)


STAGES = {
    "ingest": run_ingest,
    "algdist": run_algdist,
    "sample": run_sample,
    "embed": run_embed,
    "combine": run_combine,
    "eval-link": run_eval_link,
    "eval-rec": run_eval_rec,
    "sweep": run_sweep,
}


def configure_logging(level: str):
    logging.basicConfig(
        level=getattr(logging, level),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


def dispatch(argv=None) -> int:
    """Run one subcommand; 0 on success, 1 on a component error, 2 on a usage error"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as stop:
        return stop.code if isinstance(stop.code, int) else 2

    configure_logging(args.log_level)
    try:
        config = resolve_config(args)
    except (BipartiteEmbeddingError, TypeError) as error:
        print(f"bipembed: error: {error}", file=sys.stderr)
        return 2

    problems = validate_config(config)
    missing = [name for name in REQUIRED[config.command] if not getattr(config, name)]
    problems.extend(f"--{name.replace('_', '-')} is required for {config.command}" for name in missing)
    if problems:
        for problem in problems:
            print(f"bipembed {config.command}: error: {problem}", file=sys.stderr)
        return 2

    try:
        STAGES[config.command](config, progress=not args.quiet)
    except (BipartiteEmbeddingError, OSError) as error:
        print(f"bipembed {config.command}: error: {error}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
