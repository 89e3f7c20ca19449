import os

import pandas as pd
import streamlit as st

from utils.data_manager import DATA_DIR, is_report, list_artifacts, read_report
from utils.errors import BipartiteEmbeddingError


def configure_page(title, icon):
    st.set_page_config(
        page_title=f"{title} | Bipartite Embedding",
        page_icon=icon,
        layout="wide",
        initial_sidebar_state="expanded",
    )


def data_dir() -> str:
    """Artifact directory chosen in the sidebar, shared across pages"""
    if "data_dir" not in st.session_state:
        st.session_state["data_dir"] = DATA_DIR
    st.sidebar.text_input("Artifact directory", key="data_dir")
    return st.session_state["data_dir"]


@st.cache_data(show_spinner=False)
def _cached_report(path, mtime):
    return read_report(path)


def select_report(label, pattern, task_filter=None):
    """Sidebar picker over report CSVs; returns the selected rows or None"""
    directory = data_dir()
    paths = [p for p in list_artifacts(pattern, directory) if is_report(p)]
    if not paths:
        st.info(f"No report files matching `{pattern}` under `{directory}`. Run the CLI with `--out` pointing there.")
        return None

    path = st.sidebar.selectbox(label, paths, format_func=os.path.basename)
    try:
        rows = _cached_report(path, os.path.getmtime(path))
    except (BipartiteEmbeddingError, OSError, pd.errors.ParserError) as error:
        st.error(f"Could not read {path}: {error}")
        return None

    if task_filter is not None:
        rows = rows[rows["task"].isin(task_filter)]
    if rows.empty:
        st.warning(f"{os.path.basename(path)} holds no rows for this page.")
        return None

    invalid = rows["value"].isna().sum()
    if invalid:
        st.warning(f"{invalid} cells had no qualifying data and are left out of the charts.")
    return rows
