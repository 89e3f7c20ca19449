import altair as alt
import pandas as pd
import plotly.express as px
import plotly.graph_objects as go

from utils.evaluation import EvalTask

TASK_LABELS = {
    EvalTask.A_PERS.value: "A-personalized",
    EvalTask.B_PERS.value: "B-personalized",
    EvalTask.UNIFIED.value: "Unified",
    EvalTask.RECOMMEND.value: "Recommendation",
}


def loss_trace_chart(traces):
    """Line chart of per-epoch loss; ``traces`` maps a label to a list or an epoch/loss frame"""
    if not traces:
        return None

    frames = []
    for label, trace in traces.items():
        df = trace if isinstance(trace, pd.DataFrame) else pd.DataFrame({"epoch": range(len(trace)), "loss": list(trace)})
        if df.empty:
            continue
        frames.append(df.assign(run=label))

    if not frames:
        return None

    df = pd.concat(frames, ignore_index=True)

    chart = alt.Chart(df).mark_line(point=True).encode(
        x=alt.X('epoch:Q', title='Epoch'),
        y=alt.Y('loss:Q', title='Loss', scale=alt.Scale(zero=False)),
        color=alt.Color('run:N', title='Run'),
        tooltip=['run:N', 'epoch:Q', 'loss:Q']
    ).properties(
        title='Training Loss',
        width=600,
        height=300
    )

    return chart


def accuracy_by_holdout_chart(rows):
    """Mean link accuracy against holdout ratio, one line per method, one panel per task"""
    if rows is None or rows.empty:
        return None

    df = rows[(rows["metric"] == "accuracy") & rows["task"].isin(
        [EvalTask.A_PERS.value, EvalTask.B_PERS.value, EvalTask.UNIFIED.value]
    )].dropna(subset=["value"])

    if df.empty:
        return None

    df = df.groupby(["method", "task", "h_or_k"], as_index=False)["value"].mean()
    df["task"] = df["task"].map(TASK_LABELS)
    df = df.sort_values(["task", "method", "h_or_k"])

    fig = px.line(
        df,
        x="h_or_k",
        y="value",
        color="method",
        facet_col="task",
        markers=True,
        labels={"h_or_k": "Holdout ratio h", "value": "Accuracy", "method": "Method", "task": "Task"},
        title="Link Prediction Accuracy by Holdout Ratio"
    )
    fig.update_yaxes(range=[0, 1])

    return fig


def ranking_metrics_chart(rows):
    """Grouped bars of F1, NDCG, MAP and MRR per method"""
    if rows is None or rows.empty:
        return None

    df = rows[rows["task"] == EvalTask.RECOMMEND.value].dropna(subset=["value"])

    if df.empty:
        return None

    df = df.groupby(["method", "metric"], as_index=False)["value"].mean()
    df["metric"] = df["metric"].str.upper()

    fig = px.bar(
        df,
        x="metric",
        y="value",
        color="method",
        barmode="group",
        labels={"metric": "Metric", "value": "Score", "method": "Method"},
        title="Recommendation Quality at k"
    )

    return fig


def sensitivity_chart(rows, task=EvalTask.UNIFIED.value):
    """Accuracy spread across trials for each samples-per-node setting"""
    if rows is None or rows.empty:
        return None

    df = rows[(rows["task"] == task) & (rows["metric"] == "accuracy")].dropna(subset=["value"])

    if df.empty:
        return None

    fig = go.Figure()
    for rate in sorted(df["h_or_k"].unique()):
        fig.add_trace(go.Box(
            y=df.loc[df["h_or_k"] == rate, "value"],
            name=str(int(rate)),
            boxmean=True
        ))

    fig.update_layout(
        title=f"{TASK_LABELS.get(task, task)} Accuracy by Samples per Node",
        xaxis_title="Samples per node (s_r)",
        yaxis_title="Accuracy",
        showlegend=False
    )

    return fig


def variance_chart(summary):
    """Variance of accuracy across trials per s_r, one line per task"""
    if summary is None or summary.empty:
        return None

    df = summary.copy()
    df["task"] = df["task"].map(lambda t: TASK_LABELS.get(t, t))

    chart = alt.Chart(df).mark_line(point=True).encode(
        x=alt.X('samples_per_node:Q', title='Samples per node', scale=alt.Scale(type='log', base=2)),
        y=alt.Y('variance:Q', title='Variance across trials'),
        color=alt.Color('task:N', title='Task'),
        tooltip=['task:N', 'samples_per_node:Q', 'mean:Q', 'variance:Q', 'min:Q', 'max:Q']
    ).properties(
        title='Accuracy Variance by Sampling Rate',
        width=600,
        height=300
    )

    return chart


def accuracy_range_chart(summary):
    """Min-to-max accuracy band per s_r with the mean drawn on top, one color per task"""
    if summary is None or summary.empty or not {"min", "max"} <= set(summary.columns):
        return None

    df = summary.copy()
    df["task"] = df["task"].map(lambda t: TASK_LABELS.get(t, t))
    x = alt.X('samples_per_node:Q', title='Samples per node', scale=alt.Scale(type='log', base=2))
    color = alt.Color('task:N', title='Task')

    band = alt.Chart(df).mark_area(opacity=0.25).encode(
        x=x,
        y=alt.Y('min:Q', title='Accuracy'),
        y2='max:Q',
        color=color,
    )
    mean = alt.Chart(df).mark_line(point=True).encode(
        x=x,
        y='mean:Q',
        color=color,
        tooltip=['task:N', 'samples_per_node:Q', 'min:Q', 'mean:Q', 'max:Q'],
    )
    return (band + mean).properties(title='Accuracy Range by Sampling Rate', width=600, height=300)
