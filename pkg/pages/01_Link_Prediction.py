import streamlit as st

from utils.evaluation import EvalTask
from utils.ui import configure_page, select_report
from utils.visualization import TASK_LABELS, accuracy_by_holdout_chart

configure_page("Link Prediction", "🎯")

LINK_TASKS = [EvalTask.A_PERS.value, EvalTask.B_PERS.value, EvalTask.UNIFIED.value]

st.title("Link Prediction")
st.write("Accuracy of the personalized and unified classifiers as more edges are held out.")

rows = select_report("Report", "*.csv", task_filter=LINK_TASKS)

if rows is not None:
    with st.sidebar:
        st.header("Filters")
        methods = st.multiselect("Methods", sorted(rows["method"].unique()), default=sorted(rows["method"].unique()))
        tasks = st.multiselect(
            "Tasks",
            LINK_TASKS,
            default=[t for t in LINK_TASKS if t in set(rows["task"])],
            format_func=TASK_LABELS.get
        )

    rows = rows[rows["method"].isin(methods) & rows["task"].isin(tasks)]

    fig = accuracy_by_holdout_chart(rows)
    if fig:
        st.plotly_chart(fig, use_container_width=True)
    else:
        st.info("Nothing to plot for the current filters.")

    st.subheader("Mean accuracy")
    table = (
        rows.dropna(subset=["value"])
        .pivot_table(index=["task", "h_or_k"], columns="method", values="value", aggfunc="mean")
        .round(4)
    )
    st.dataframe(table, use_container_width=True)

    seeds = rows.groupby(["method", "task", "h_or_k"])["seed"].nunique()
    if (seeds > 1).any():
        st.caption(f"Averaged over up to {seeds.max()} seeds per cell.")
