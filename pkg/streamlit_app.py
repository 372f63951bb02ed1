import sys
print(f"[BUILD INFO] Python version: {sys.version}", flush=True)

import streamlit as st
from dotenv import load_dotenv

load_dotenv()

st.set_page_config(
    page_title="Noise-Robust Embedding Explorer",
    page_icon="🔤",
    layout="wide",
    initial_sidebar_state="expanded"
)

@st.cache_resource
def get_database():
    """Lazily initialize the run log."""
    from app.database import Database
    return Database()

@st.cache_resource
def get_aggregator():
    """Lazily initialize the report dataset reader."""
    from app.aggregate import ReportAggregator
    return ReportAggregator()

from app.ui import inject_global_css, sidebar_config, get_pipelines

inject_global_css()

st.title("🔤 Noise-Robust Embedding Explorer")
st.markdown("---")

st.markdown("""
Misspelled tokens are embedded as a distribution over nearby vocabulary words:
an edit-distance prior times a contextual likelihood. This explorer runs the
same library as the `red` command line.

- **Denoise**: type a noisy sentence and compare Naive, Top-1 and RED corrections, with the posterior per token
- **Noise**: preview synthetic and natural noise with its trace
- **Reports**: evaluation runs, accuracy charts and Excel export
""")

st.markdown("---")

config = sidebar_config()
pipelines = get_pipelines(config)

st.subheader("📚 Embedding Store")

if pipelines is not None:
    summary = pipelines.embedder.store.summary()
    col1, col2, col3, col4 = st.columns(4)
    with col1:
        st.metric(label="Vocabulary", value=f"{summary['words']:,}")
    with col2:
        st.metric(label="Dimension", value=summary['dim'])
    with col3:
        st.metric(label="Context vectors", value="yes" if summary['has_context'] else "no")
    with col4:
        st.metric(label="Words with misspellings", value=f"{summary['misspelled_words']:,}")
else:
    st.info("👈 Set the centre (and context) vector paths in the sidebar, or in RED_CENTER / RED_CONTEXT.")

st.markdown("---")

db_stats = get_database().get_summary_stats()

st.subheader("🗄️ Run Log")

col1, col2, col3, col4 = st.columns(4)
with col1:
    st.metric(label="Total Runs", value=db_stats['total_runs'])
with col2:
    st.metric(label="Completed", value=db_stats['completed_runs'])
with col3:
    st.metric(label="Failed", value=db_stats['failed_runs'])
with col4:
    st.metric(label="Processing", value=db_stats['processing_runs'])

report_summary = get_aggregator().get_summary_statistics()
if report_summary['best_pipeline']:
    st.info(f"🏆 **Best pipeline on average across stored reports**: {report_summary['best_pipeline']}")
