import streamlit as st

st.set_page_config(
    page_title="Noise - Noise-Robust Embeddings",
    page_icon="🌪️",
    layout="wide"
)

from app.config import PipelineConfig
from app.ingest import format_sentence
from app.noise import NoiseSpec, noisify_corpus, op_mix, trace_frame
from app.ui import inject_global_css, render_tokens
from app.utils import normalize_text
from app.visualize import ChartGenerator
from app.vocab_store import load_misspellings

inject_global_css()

st.title("🌪️ Noise Preview")
st.markdown("---")

base = PipelineConfig.from_env()

col1, col2, col3 = st.columns(3)
with col1:
    mode = st.selectbox("Mode", ['synthetic', 'natural'])
with col2:
    prob = st.slider("Corruption probability", 0.0, 1.0, 0.2, 0.05)
with col3:
    seed = st.number_input("Noise seed", min_value=0, value=base.effective_noise_seed)

dictionary = None
if mode == 'natural':
    path = st.text_input("Misspelling dictionary", value=base.misspellings or '')
    if not path:
        st.info("Natural noise needs a 'misspelling<TAB>correct' dictionary.")
        st.stop()
    try:
        dictionary = load_misspellings(path)
    except (OSError, ValueError) as e:
        st.error(f"❌ {e}")
        st.stop()

text = st.text_area("Clean text (one sentence per line)",
                    value="the great thing is to keep calm .\nsomeone is in a bowling alley .")
sentences = [normalize_text(line) for line in text.splitlines()]

noisy, trace = noisify_corpus(sentences, NoiseSpec(mode, prob, int(seed)), dictionary)

st.subheader("Noisy output")
for clean, corrupted in zip(sentences, noisy):
    st.markdown(render_tokens(corrupted, clean), unsafe_allow_html=True)

st.download_button(
    "📥 Download noisy text",
    data='\n'.join(format_sentence(s) for s in noisy) + '\n',
    file_name="noisy.txt",
    mime="text/plain"
)

st.markdown("---")
col1, col2 = st.columns([3, 2])
with col1:
    st.subheader("Trace")
    st.dataframe(trace_frame(trace), use_container_width=True, hide_index=True)
with col2:
    mix = op_mix([r for r in trace if r.op != 'none'])
    st.plotly_chart(ChartGenerator().create_op_mix_chart(mix), use_container_width=True)
