import pandas as pd
from openpyxl import load_workbook
from openpyxl.styles import Font, PatternFill, Alignment
from openpyxl.utils import get_column_letter
import os
from datetime import datetime
from typing import Optional

from app.aggregate import ReportAggregator, setting_label
from app.downstream import EvalReport, REPORT_NAMES


def _pivot(rows: pd.DataFrame, metric: str) -> pd.DataFrame:
    df = rows[rows['metric'] == metric]
    if df.empty:
        return pd.DataFrame()
    df = df.assign(
        Setting=[setting_label(m, r) for m, r in zip(df['noise_mode'], df['rate'])],
        Pipeline=df['pipeline'].map(lambda p: REPORT_NAMES.get(p, p)),
    )
    return df.pivot_table(index='Pipeline', columns='Setting', values='value', aggfunc='mean', sort=False).reset_index()


class ReportExporter:
    def __init__(self, aggregator: Optional[ReportAggregator] = None, output_dir: str = None):
        self.aggregator = aggregator
        self.output_dir = output_dir or os.getenv('EXPORT_DIR', './data/processed')
        os.makedirs(self.output_dir, exist_ok=True)

    def generate_report_workbook(self, report: Optional[EvalReport] = None, output_path: Optional[str] = None) -> str:
        """Workbook for one report, or for the whole stored dataset when no report is given."""
        if output_path is None:
            timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
            output_path = os.path.join(self.output_dir, f"red_report_{timestamp}.xlsx")

        if report is not None:
            rows = report.rows
            config = report.config
        elif self.aggregator is not None:
            rows = self.aggregator.get_reports()
            config = {}
        else:
            raise ValueError("nothing to export: pass a report or construct with an aggregator")

        tmp_path = f"{output_path}.tmp.xlsx"
        with pd.ExcelWriter(tmp_path, engine='openpyxl') as writer:
            accuracy = _pivot(rows, 'accuracy')
            if not accuracy.empty:
                accuracy.to_excel(writer, sheet_name='Accuracy', index=False)

            token_accuracy = _pivot(rows, 'token_accuracy')
            if not token_accuracy.empty:
                token_accuracy.to_excel(writer, sheet_name='Token Accuracy', index=False)

            rows.to_excel(writer, sheet_name='Raw', index=False)

            config_df = pd.DataFrame(
                [{'Key': key, 'Value': str(value)} for key, value in sorted(config.items())],
                columns=['Key', 'Value']
            )
            config_df.to_excel(writer, sheet_name='Config', index=False)

        self._format_workbook(tmp_path)
        os.replace(tmp_path, output_path)
        print(f"[EXPORT] Wrote {output_path}", flush=True)
        return output_path

    def _format_workbook(self, file_path: str) -> None:
        wb = load_workbook(file_path)

        header_fill = PatternFill(start_color="4472C4", end_color="4472C4", fill_type="solid")
        header_font = Font(bold=True, color="FFFFFF", size=12)
        header_alignment = Alignment(horizontal="center", vertical="center")

        for ws in wb.worksheets:
            for cell in ws[1]:
                cell.fill = header_fill
                cell.font = header_font
                cell.alignment = header_alignment

            for column in ws.columns:
                max_length = max((len(str(cell.value)) for cell in column if cell.value is not None), default=0)
                ws.column_dimensions[get_column_letter(column[0].column)].width = min(max_length + 2, 50)

            for row in ws.iter_rows(min_row=2):
                for cell in row:
                    if isinstance(cell.value, float):
                        cell.number_format = '0.0000'

            ws.freeze_panes = 'A2'

        wb.save(file_path)

    def get_export_history(self) -> pd.DataFrame:
        files = []
        for filename in os.listdir(self.output_dir):
            if filename.endswith('.xlsx'):
                stat = os.stat(os.path.join(self.output_dir, filename))
                files.append({
                    'Filename': filename,
                    'Created At': datetime.fromtimestamp(stat.st_mtime).strftime('%Y-%m-%d %H:%M:%S'),
                    'Size (KB)': round(stat.st_size / 1024, 2)
                })

        df = pd.DataFrame(files, columns=['Filename', 'Created At', 'Size (KB)'])
        return df.sort_values('Created At', ascending=False) if not df.empty else df
