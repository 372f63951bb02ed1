import pandas as pd
import os
import time
from typing import Dict, Any, Optional, Sequence

from app.downstream import EvalReport, REPORT_NAMES

REPORT_KEY = ['run_hash', 'pipeline', 'noise_mode', 'rate', 'metric']
DEFAULT_ORDERING = ('naive', 'top1', 'red_ens')


def setting_label(noise_mode: str, rate: float) -> str:
    return f"{noise_mode}:{rate:g}"


class ReportAggregator:
    """Evaluation reports stored as one parquet part per run under
    DATA_DIR/reports/parts, read back as a single dataset."""

    def __init__(self, data_dir: str = None):
        if data_dir is None:
            data_dir = os.getenv('DATA_DIR', './data')
        self.data_dir = data_dir
        self.parts_dir = f"{data_dir}/reports/parts"

    def write_report_part(self, report: EvalReport, run_hash: str = None) -> str:
        os.makedirs(self.parts_dir, exist_ok=True)
        if run_hash is None:
            run_hash = str(int(time.time() * 1000))

        df = report.rows.copy()
        df.insert(0, 'run_hash', run_hash)
        df['seed'] = int(report.config.get('seed', 0))
        df['_dedup_key'] = df[REPORT_KEY].astype(str).agg('|'.join, axis=1)

        part_file = f"{self.parts_dir}/{run_hash}.parquet"
        tmp_file = f"{part_file}.tmp"
        df.to_parquet(tmp_file, index=False, engine='pyarrow')
        os.replace(tmp_file, part_file)
        print(f"[AGGREGATE] Wrote {len(df)} report rows to {part_file}", flush=True)
        return part_file

    def _read_parquet_dataset(self) -> Optional[pd.DataFrame]:
        dfs = []
        if os.path.exists(self.parts_dir):
            for part_file in sorted(f for f in os.listdir(self.parts_dir) if f.endswith('.parquet')):
                part_path = os.path.join(self.parts_dir, part_file)
                try:
                    dfs.append(pd.read_parquet(part_path))
                except Exception as e:
                    print(f"[AGGREGATE] Warning: Failed to read {part_path}: {e}", flush=True)

        if not dfs:
            return None

        combined_df = pd.concat(dfs, ignore_index=True)
        if '_dedup_key' in combined_df.columns:
            combined_df = combined_df.drop_duplicates(subset=['_dedup_key'], keep='first')
        return combined_df

    def data_exists(self) -> bool:
        return os.path.exists(self.parts_dir) and any(
            f.endswith('.parquet') for f in os.listdir(self.parts_dir)
        )

    def get_reports(self, metric: str = None) -> pd.DataFrame:
        df = self._read_parquet_dataset()
        if df is None:
            return pd.DataFrame(columns=REPORT_KEY + ['value', 'seed'])
        df = df.drop(columns=['_dedup_key'], errors='ignore')
        if metric is not None:
            df = df[df['metric'] == metric]
        return df.reset_index(drop=True)

    def get_pivot(self, metric: str = 'accuracy') -> pd.DataFrame:
        """Mean value over runs, pipelines as rows and noise settings as columns."""
        df = self.get_reports(metric)
        if df.empty:
            return pd.DataFrame()

        df = df.assign(
            Setting=[setting_label(m, r) for m, r in zip(df['noise_mode'], df['rate'])],
            Pipeline=df['pipeline'].map(lambda p: REPORT_NAMES.get(p, p)),
        )
        pivot = df.pivot_table(index='Pipeline', columns='Setting', values='value', aggfunc='mean', sort=False)
        return pivot.reset_index()

    def get_accuracy_pivot(self) -> pd.DataFrame:
        return self.get_pivot('accuracy')

    def get_token_accuracy_pivot(self) -> pd.DataFrame:
        return self.get_pivot('token_accuracy')

    def check_ordering(
        self,
        noise_mode: str,
        rate: float,
        ordering: Sequence[str] = DEFAULT_ORDERING,
        margin: float = 0.0
    ) -> pd.DataFrame:
        """Per run: does accuracy follow `ordering` (non-decreasing) at the setting?

        `margin` is the minimum gain of the last pipeline over the first.
        """
        df = self.get_reports('accuracy')
        columns = ['run_hash'] + list(ordering) + ['holds']
        if df.empty:
            return pd.DataFrame(columns=columns)

        df = df[(df['noise_mode'] == noise_mode) & ((df['rate'] - rate).abs() < 1e-12)]
        if df.empty:
            return pd.DataFrame(columns=columns)

        wide = df.pivot_table(index='run_hash', columns='pipeline', values='value', aggfunc='first')
        missing = [p for p in ordering if p not in wide.columns]
        if missing:
            raise ValueError(f"reports at {setting_label(noise_mode, rate)} lack pipelines {missing}")

        wide = wide[list(ordering)].dropna()
        holds = pd.Series(True, index=wide.index)
        for lower, upper in zip(ordering, ordering[1:]):
            holds &= wide[lower] <= wide[upper]
        holds &= wide[ordering[-1]] >= wide[ordering[0]] + margin

        result = wide.assign(holds=holds).reset_index()
        return result[columns]

    def get_summary_statistics(self) -> Dict[str, Any]:
        df = self.get_reports()
        summary = {
            'total_runs': 0,
            'total_rows': 0,
            'pipelines': [],
            'settings': [],
            'best_pipeline': None,
        }
        if df.empty:
            return summary

        summary['total_runs'] = int(df['run_hash'].nunique())
        summary['total_rows'] = len(df)
        summary['pipelines'] = list(dict.fromkeys(df['pipeline']))
        summary['settings'] = list(dict.fromkeys(setting_label(m, r) for m, r in zip(df['noise_mode'], df['rate'])))

        acc = df[(df['metric'] == 'accuracy') & (df['pipeline'] != 'oracle')]
        if not acc.empty:
            best = acc.groupby('pipeline', sort=False)['value'].mean().idxmax()
            summary['best_pipeline'] = REPORT_NAMES.get(best, best)
        return summary
