import streamlit as st

from utils.evaluation import EvalReport, EvalTask, sensitivity_summary
from utils.ui import configure_page, select_report
from utils.visualization import TASK_LABELS, accuracy_range_chart, sensitivity_chart, variance_chart

configure_page("Sensitivity", "📈")

st.title("Sampling Sensitivity")
st.write("How link accuracy and its spread across trials change with the number of samples per node.")

rows = select_report("Sweep report", "*sweep*.csv")

if rows is not None:
    tasks = [t.value for t in (EvalTask.A_PERS, EvalTask.B_PERS, EvalTask.UNIFIED) if t.value in set(rows["task"])]
    task = st.sidebar.selectbox("Task", tasks, format_func=TASK_LABELS.get)

    fig = sensitivity_chart(rows, task)
    if fig:
        st.plotly_chart(fig, use_container_width=True)

    summary = sensitivity_summary(EvalReport(rows))
    band = accuracy_range_chart(summary[summary["task"] == task])
    if band is not None:
        st.altair_chart(band, use_container_width=True)

    chart = variance_chart(summary)
    if chart:
        st.altair_chart(chart, use_container_width=True)

    st.subheader("Per-rate summary")
    st.dataframe(summary.round(5), hide_index=True, use_container_width=True)
