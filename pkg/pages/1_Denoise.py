import streamlit as st

st.set_page_config(
    page_title="Denoise - Noise-Robust Embeddings",
    page_icon="🩹",
    layout="wide"
)

from app.ingest import format_sentence
from app.ui import inject_global_css, sidebar_config, get_pipelines, render_tokens
from app.utils import normalize_text
from app.visualize import ChartGenerator

inject_global_css()

st.title("🩹 Denoise a Sentence")
st.markdown("---")

config = sidebar_config()
pipelines = get_pipelines(config)
if pipelines is None:
    st.info("👈 Configure the embedding store in the sidebar first.")
    st.stop()

text = st.text_input("Noisy sentence", value="oneone is yn a bowlind aley .")
tokens = normalize_text(text)
if not tokens:
    st.stop()

posteriors = pipelines.posteriors(tokens, 0)
store = pipelines.embedder.store

st.subheader("Corrections")
for label, name in (("Input", None), ("Naive", 'naive'), ("Top-1", 'top1'), ("RED (MAP)", 'red_map')):
    words = tokens if name is None else pipelines.correct_text(tokens, name, 0, posteriors)
    st.markdown(f"**{label}**: `{format_sentence(words)}`")
    st.markdown(render_tokens(words, None if name is None else tokens, store), unsafe_allow_html=True)

with st.expander(f"🎲 {config.m} ensemble samples"):
    batch = pipelines.embed(tokens, 'red_ens', 0, posteriors)
    for words in batch.sample_words(pipelines.vocab, tokens):
        st.markdown(render_tokens(words, tokens), unsafe_allow_html=True)

st.markdown("---")
st.subheader("Posterior per token")

charts = ChartGenerator()
reprocessed = [(i, post) for i, post in enumerate(posteriors) if post is not None and len(post.candidates) > 1]
if not reprocessed:
    st.info("Every token is in the vocabulary; nothing to reprocess.")

for i, post in reprocessed:
    st.markdown(f"**{i}: `{tokens[i]}`** → `{post.map_candidate().word}`")
    col1, col2 = st.columns([3, 2])
    with col1:
        st.dataframe(post.to_frame(), use_container_width=True, hide_index=True)
    with col2:
        st.plotly_chart(charts.create_posterior_chart(post), use_container_width=True)

for i, post in enumerate(posteriors):
    if post is None:
        st.warning(f"`{tokens[i]}` has no candidate within the distance limit; it passes through with a zero vector.")
