import plotly.graph_objects as go
import plotly.express as px
import pandas as pd

from app.robust_model import TokenPosterior


class ChartGenerator:
    def __init__(self):
        self.color_scheme = px.colors.qualitative.Set3
        self.template = "plotly_white"

    def _layout(self, fig: go.Figure, title: str, x_title: str, y_title: str, height: int = 500) -> go.Figure:
        fig.update_layout(
            title=dict(text=title, font=dict(size=20, color='#333')),
            xaxis_title=x_title,
            yaxis_title=y_title,
            template=self.template,
            height=height,
            margin=dict(l=50, r=50, t=80, b=80),
        )
        return fig

    def create_accuracy_chart(self, pivot: pd.DataFrame, title: str = "Accuracy by noise setting") -> go.Figure:
        """Grouped bars: one group per noise setting, one bar per pipeline.

        `pivot` has a 'Pipeline' column and one column per setting.
        """
        if pivot.empty or 'Pipeline' not in pivot.columns:
            return self._create_empty_chart(title)

        table = pivot.set_index('Pipeline')
        settings = [str(c) for c in table.columns]
        fig = go.Figure()
        for idx, (pipeline, values) in enumerate(table.iterrows()):
            fig.add_trace(go.Bar(
                x=settings,
                y=values.tolist(),
                name=str(pipeline),
                marker=dict(color=self.color_scheme[idx % len(self.color_scheme)]),
                hovertemplate='<b>%{x}</b><br>' + str(pipeline) + ': %{y:.4f}<extra></extra>'
            ))

        self._layout(fig, title, 'Noise setting', 'Accuracy')
        fig.update_layout(barmode='group', showlegend=True, yaxis=dict(range=[0, 1]))
        return fig

    def create_posterior_chart(self, post: TokenPosterior, title: str = None) -> go.Figure:
        title = title or f"Posterior for '{post.candidates.query}'"
        if len(post.candidates) == 0:
            return self._create_empty_chart(title)

        df = post.to_frame()
        fig = go.Figure(data=[
            go.Bar(
                x=df['Candidate'],
                y=df['Probability'],
                marker=dict(color=self.color_scheme[0], line=dict(color='rgba(0,0,0,0.1)', width=1)),
                text=[f"d={d}" for d in df['Distance']],
                textposition='outside',
                hovertemplate='<b>%{x}</b><br>p=%{y:.4f}<extra></extra>'
            )
        ])
        self._layout(fig, title, 'Candidate', 'Probability', height=400)
        fig.update_layout(showlegend=False)
        return fig

    def create_op_mix_chart(self, mix: pd.DataFrame, title: str = "Noise operations") -> go.Figure:
        if mix.empty:
            return self._create_empty_chart(title)

        fig = go.Figure(data=[
            go.Pie(
                labels=mix['Op'],
                values=mix['Count'],
                hole=0.3,
                marker=dict(colors=self.color_scheme, line=dict(color='white', width=2)),
                textinfo='label+percent',
                hovertemplate='<b>%{label}</b><br>Count: %{value}<extra></extra>'
            )
        ])
        fig.update_layout(
            title=dict(text=title, font=dict(size=20, color='#333')),
            template=self.template,
            height=450,
        )
        return fig

    def _create_empty_chart(self, title: str) -> go.Figure:
        fig = go.Figure()
        fig.add_annotation(
            text="No data available",
            xref="paper",
            yref="paper",
            x=0.5,
            y=0.5,
            showarrow=False,
            font=dict(size=20, color='#999')
        )
        fig.update_layout(
            title=dict(text=title, font=dict(size=20, color='#333')),
            template=self.template,
            height=400,
            xaxis=dict(visible=False),
            yaxis=dict(visible=False)
        )
        return fig
