import streamlit as st

from utils.evaluation import EvalTask, RankingMetrics
from utils.ui import configure_page, select_report
from utils.visualization import ranking_metrics_chart

configure_page("Recommendation", "⭐")

st.title("Recommendation")
st.write("""
Items are ranked for each user by dot product with the rating-weighted centroid of the items
they already rated. Scores are averaged over users with both training and held-out ratings.
""")

rows = select_report("Report", "*.csv", task_filter=[EvalTask.RECOMMEND.value])

if rows is not None:
    cutoffs = sorted(rows["h_or_k"].unique())
    k = st.sidebar.selectbox("k", cutoffs, index=len(cutoffs) - 1)
    rows = rows[rows["h_or_k"] == k]

    fig = ranking_metrics_chart(rows)
    if fig:
        st.plotly_chart(fig, use_container_width=True)

    col1, col2 = st.columns([2, 1])
    with col1:
        st.subheader(f"Metrics at k={int(k)}")
        table = rows.pivot_table(index="method", columns="metric", values="value", aggfunc="mean")
        table = table[[m for m in RankingMetrics._fields if m in table.columns]]
        st.dataframe(table.round(4), use_container_width=True)
    with col2:
        st.subheader("Best method")
        for metric in RankingMetrics._fields:
            per_method = rows[rows["metric"] == metric].groupby("method")["value"].mean()
            if not per_method.empty:
                st.metric(metric.upper(), per_method.idxmax(), f"{per_method.max():.4f}")
