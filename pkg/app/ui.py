import html
from typing import Optional, Sequence

import streamlit as st

from app.config import ConfigError, PipelineConfig, build_pipelines, load_store
from app.downstream import DownstreamPipelines
from app.vocab_store import VocabStore


def inject_global_css():
    """Token chips for side-by-side corrections. Call after st.set_page_config()."""
    st.markdown(
        """
        <style>
        .red-tokens { line-height: 2.2; }
        .red-token {
            padding: 2px 6px;
            margin-right: 4px;
            border-radius: 4px;
            background: #eef1f7;
            font-family: monospace;
        }
        .red-token.changed { background: #c6e0b4; font-weight: bold; }
        .red-token.unknown { background: #f8cbad; }
        section[data-testid="stSidebar"] div[role="alert"] {
            white-space: normal !important;
            overflow-wrap: anywhere;
        }
        </style>
        """,
        unsafe_allow_html=True,
    )


def render_tokens(tokens: Sequence[str], original: Optional[Sequence[str]] = None,
                  known: Optional[VocabStore] = None) -> str:
    """HTML chips; tokens differing from `original` are marked changed,
    tokens missing from the store's vocabulary are marked unknown."""
    chips = []
    for i, token in enumerate(tokens):
        classes = ['red-token']
        if original is not None and i < len(original) and original[i] != token:
            classes.append('changed')
        elif known is not None and token not in known.vocab:
            classes.append('unknown')
        chips.append(f"<span class=\"{' '.join(classes)}\">{html.escape(token)}</span>")
    return f"<div class=\"red-tokens\">{''.join(chips)}</div>"


@st.cache_resource
def get_store(center: str, context: Optional[str], misspellings: Optional[str], likelihood: str) -> VocabStore:
    config = PipelineConfig(center=center, context=context, misspellings=misspellings, likelihood=likelihood)
    return load_store(config)


def sidebar_config(likelihoods: Sequence[str] = ('skipgram', 'uniform')) -> PipelineConfig:
    """Environment defaults, adjustable from the sidebar."""
    base = PipelineConfig.from_env()
    st.sidebar.header("Embedding store")
    center = st.sidebar.text_input("Centre vectors", value=base.center or '')
    context = st.sidebar.text_input("Context vectors", value=base.context or '')
    misspellings = st.sidebar.text_input("Misspelling dictionary", value=base.misspellings or '')

    st.sidebar.header("Posterior")
    likelihood = st.sidebar.selectbox(
        "Likelihood", list(likelihoods),
        index=list(likelihoods).index(base.likelihood) if base.likelihood in likelihoods else 0
    )
    tau = st.sidebar.number_input("τ (prior temperature)", min_value=1e-4, value=float(base.tau), format="%.4f")
    k = st.sidebar.slider("k (candidates)", min_value=1, max_value=50, value=int(base.k))
    max_dist = st.sidebar.number_input("Max edit distance (0 = unlimited)", min_value=0, value=int(base.max_dist or 0))
    m = st.sidebar.slider("m (ensemble samples)", min_value=1, max_value=50, value=int(base.m))
    seed = st.sidebar.number_input("Seed", min_value=0, value=int(base.seed))

    return base.merged({
        'center': center or None,
        'context': context or None,
        'misspellings': misspellings or None,
        'likelihood': likelihood,
        'tau': tau,
        'k': k,
        'max_dist': max_dist or None,
        'm': m,
        'seed': seed,
    })


@st.cache_resource
def _cached_pipelines(config: PipelineConfig) -> DownstreamPipelines:
    store = get_store(config.center, config.context, config.misspellings, config.likelihood)
    return build_pipelines(config, store)


def get_pipelines(config: PipelineConfig) -> Optional[DownstreamPipelines]:
    """Pipelines for the sidebar config, or None (with a message) when it is incomplete."""
    try:
        return _cached_pipelines(config.validate())
    except (ConfigError, OSError, ValueError) as e:
        st.sidebar.warning(f"⚠️ {e}")
        return None
