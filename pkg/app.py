import streamlit as st
import pandas as pd
import os

from utils.data_manager import TRACE_PATTERN, is_report, list_artifacts, read_loss_trace, read_report
from utils.errors import BipartiteEmbeddingError
from utils.evaluation import EvalReport, run_link_experiment
from utils.graph_core import bipartite_sbm
from utils.pipeline import EmbedParams, Method, embedders
from utils.ui import configure_page, data_dir
from utils.visualization import accuracy_by_holdout_chart, loss_trace_chart

configure_page("Overview", "🔗")


def main():
    st.title("Bipartite Embedding Experiments")
    st.write("""
    Browse the artifacts written by the `bipembed` command line: training loss traces,
    link-prediction reports, recommendation reports and sensitivity sweeps.
    Use the pages in the sidebar for each experiment family.
    """)

    directory = data_dir()
    display_artifacts(directory)

    st.markdown("---")
    display_quick_run()


def display_artifacts(directory):
    col1, col2 = st.columns(2)

    with col1:
        st.markdown("### Loss Traces")
        traces = list_artifacts(TRACE_PATTERN, directory)
        if traces:
            chosen = st.multiselect(
                "Traces",
                traces,
                default=traces[:3],
                format_func=os.path.basename
            )
            chart = loss_trace_chart({os.path.basename(p): read_loss_trace(p) for p in chosen})
            if chart:
                st.altair_chart(chart, use_container_width=True)
        else:
            st.info("No loss traces yet. Pass `--trace-out` to `embed` or `combine`.")

    with col2:
        st.markdown("### Reports")
        reports = [p for p in list_artifacts("*.csv", directory) if is_report(p)]
        if reports:
            summary = []
            for path in reports:
                try:
                    rows = read_report(path)
                except (BipartiteEmbeddingError, pd.errors.ParserError) as error:
                    st.warning(f"Skipping {os.path.basename(path)}: {error}")
                    continue
                summary.append({
                    "file": os.path.basename(path),
                    "methods": ", ".join(sorted(rows["method"].unique())),
                    "tasks": ", ".join(sorted(rows["task"].unique())),
                    "rows": len(rows),
                })
            st.dataframe(pd.DataFrame(summary), hide_index=True, use_container_width=True)
        else:
            st.info("No reports yet. Run `eval-link`, `eval-rec` or `sweep` with `--out`.")


def display_quick_run():
    st.subheader("Quick Run")
    st.write("Embed a small two-block random bipartite graph and score it across holdout ratios.")

    with st.form(key="quick_run_form"):
        col1, col2, col3 = st.columns(3)
        with col1:
            block_size = st.slider("Nodes per block", 10, 60, 25)
            p_in = st.slider("Within-block edge probability", 0.05, 0.6, 0.3)
        with col2:
            p_out = st.slider("Cross-block edge probability", 0.0, 0.2, 0.02)
            dimension = st.select_slider("Embedding dimension", options=[8, 16, 32, 64], value=16)
        with col3:
            methods = st.multiselect("Methods", [m.value for m in Method], default=[Method.FOBE.value])
            seed = st.number_input("Seed", min_value=0, value=0, step=1)
        run = st.form_submit_button("Run")

    if run:
        if not methods:
            st.error("Pick at least one method.")
            return
        params = EmbedParams(dimension=dimension, samples_per_node=20, epochs=5, combiner_epochs=5)
        with st.spinner("Embedding and evaluating..."):
            try:
                g = bipartite_sbm(block_size, block_size, p_in, p_out, int(seed))
                report = run_link_experiment(
                    g,
                    embedders(methods, params),
                    holdouts=(0.2, 0.5, 0.8),
                    seeds=(int(seed),),
                )
            except BipartiteEmbeddingError as error:
                st.error(str(error))
                return
        show_quick_run(report)


def show_quick_run(report: EvalReport):
    fig = accuracy_by_holdout_chart(report.rows)
    if fig:
        st.plotly_chart(fig, use_container_width=True)
    else:
        st.warning("Every task lacked qualifying data on this graph.")
    st.caption(f"Finished in {report.runtime:.1f}s")
    st.dataframe(report.summary(), hide_index=True, use_container_width=True)


if __name__ == "__main__":
    main()
