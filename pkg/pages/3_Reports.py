import streamlit as st
import os

st.set_page_config(
    page_title="Reports - Noise-Robust Embeddings",
    page_icon="📊",
    layout="wide"
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

from app.export import ReportExporter
from app.ui import inject_global_css
from app.visualize import ChartGenerator

inject_global_css()

st.title("📊 Evaluation Reports")
st.markdown("---")

db = get_database()
aggregator = get_aggregator()
charts = ChartGenerator()

st.subheader("🗄️ Run History")

history = db.get_run_history()
if history.empty:
    st.info("📭 No runs recorded yet. Run `python -m app eval ...` to add one.")
else:
    status_filter = st.multiselect("Status", ['completed', 'failed', 'processing'], default=['completed', 'failed', 'processing'])
    st.dataframe(history[history['status'].isin(status_filter)], use_container_width=True, hide_index=True)

    failed = db.get_failed_runs()
    if failed:
        with st.expander(f"❌ {len(failed)} failed runs"):
            for run in failed:
                st.markdown(f"**{run['command']}** ({run['run_hash'][:12]}, attempt {run['attempts']}): {run['error_message']}")

st.markdown("---")

if not aggregator.data_exists():
    st.info("📭 No evaluation reports stored yet.")
    st.stop()

accuracy = aggregator.get_accuracy_pivot()
st.plotly_chart(charts.create_accuracy_chart(accuracy), use_container_width=True)

col1, col2 = st.columns(2)
with col1:
    st.subheader("Accuracy")
    st.dataframe(accuracy, use_container_width=True, hide_index=True)
with col2:
    st.subheader("Token accuracy")
    st.dataframe(aggregator.get_token_accuracy_pivot(), use_container_width=True, hide_index=True)

st.markdown("---")
st.subheader("📈 Ordering check")

reports = aggregator.get_reports('accuracy')
noisy_settings = sorted({(m, r) for m, r in zip(reports['noise_mode'], reports['rate']) if r > 0})
if noisy_settings:
    mode, rate = st.selectbox("Noise setting", noisy_settings, format_func=lambda s: f"{s[0]}:{s[1]:g}")
    try:
        check = aggregator.check_ordering(mode, rate, margin=st.number_input("Minimum gain over Naive", value=0.03))
        st.dataframe(check, use_container_width=True, hide_index=True)
        if not check.empty:
            st.metric("Runs where Naive ≤ Top-1 ≤ RED-Ens holds", f"{int(check['holds'].sum())}/{len(check)}")
    except ValueError as e:
        st.warning(str(e))

st.markdown("---")
st.subheader("📥 Export")

if st.button("Generate Excel workbook"):
    exporter = ReportExporter(aggregator)
    path = exporter.generate_report_workbook()
    with open(path, 'rb') as f:
        st.download_button(
            "Download workbook",
            data=f.read(),
            file_name=os.path.basename(path),
            mime="application/vnd.openxmlformats-officedocument.spreadsheetml.sheet"
        )
