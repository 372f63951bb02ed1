import os

import numpy as np
import pandas as pd
import pytest
from openpyxl import load_workbook

from app.aggregate import ReportAggregator, setting_label
from app.database import Database
from app.downstream import EvalReport
from app.export import ReportExporter
from app.fuzzy_index import Candidate, CandidateSet
from app.noise import NoiseRecord, op_mix
from app.robust_model import TokenPosterior, combine_log_scores
from app.ui import render_tokens
from app.visualize import ChartGenerator


def make_report(values, seed=0):
    """values: {(pipeline, mode, rate): accuracy}"""
    rows = [(p, mode, rate, 'accuracy', v) for (p, mode, rate), v in values.items()]
    rows.append(('top1', 'synthetic', 0.5, 'token_accuracy', 0.4))
    return EvalReport(pd.DataFrame(rows, columns=EvalReport.COLUMNS), {}, {'seed': seed, 'tau': 0.1})


def ordered_report(naive, top1, red_ens, seed=0):
    return make_report({
        ('naive', 'clean', 0.0): 0.9,
        ('top1', 'clean', 0.0): 0.9,
        ('red_ens', 'clean', 0.0): 0.9,
        ('naive', 'synthetic', 0.5): naive,
        ('top1', 'synthetic', 0.5): top1,
        ('red_ens', 'synthetic', 0.5): red_ens,
        ('oracle', 'synthetic', 0.5): 0.99,
    }, seed)


class TestDatabase:
    def test_run_lifecycle(self):
        db = Database()
        run_id = db.log_run_start('abc', 'eval')
        assert db.get_run_by_id(run_id)['status'] == 'processing'

        db.log_run_complete(run_id, 12, 'out.tsv')
        run = db.get_run_by_id(run_id)
        assert run['status'] == 'completed'
        assert run['row_count'] == 12
        assert run['report_path'] == 'out.tsv'
        assert run['completed_at'] is not None

    def test_rerun_resets_and_counts_attempts(self):
        db = Database()
        run_id = db.log_run_start('abc', 'correct')
        db.log_run_error(run_id, 'ScorerError: boom')
        assert db.get_failed_runs()[0]['error_message'] == 'ScorerError: boom'

        assert db.log_run_start('abc', 'correct') == run_id
        run = db.get_run_by_id(run_id)
        assert run['status'] == 'processing'
        assert run['error_message'] is None
        assert run['attempts'] == 2
        assert db.get_failed_runs() == []

    def test_history_and_summary(self):
        db = Database()
        assert db.get_summary_stats() == {
            'total_runs': 0, 'completed_runs': 0, 'failed_runs': 0, 'processing_runs': 0, 'total_rows': 0
        }
        first = db.log_run_start('a', 'noisify')
        second = db.log_run_start('b', 'eval')
        db.log_run_start('c', 'embed')
        db.log_run_complete(first, 5)
        db.log_run_error(second, 'ValueError: bad')

        history = db.get_run_history()
        assert history['run_hash'].tolist() == ['c', 'b', 'a']
        assert db.get_summary_stats() == {
            'total_runs': 3, 'completed_runs': 1, 'failed_runs': 1, 'processing_runs': 1, 'total_rows': 5
        }
        assert db.get_run_by_id(999) is None

    def test_default_path_comes_from_environment(self, isolated_storage):
        assert Database().db_path == str(isolated_storage / 'runs.db')
        assert os.path.exists(isolated_storage / 'runs.db')


class TestAggregator:
    def test_empty_dataset(self):
        aggregator = ReportAggregator()
        assert not aggregator.data_exists()
        assert aggregator.get_reports().empty
        assert aggregator.get_accuracy_pivot().empty
        assert aggregator.get_summary_statistics()['best_pipeline'] is None
        assert aggregator.check_ordering('synthetic', 0.5).empty

    def test_parts_round_trip_and_dedup(self, isolated_storage):
        aggregator = ReportAggregator()
        path = aggregator.write_report_part(ordered_report(0.5, 0.6, 0.7), 'run1')
        assert path == f"{isolated_storage}/reports/parts/run1.parquet"
        aggregator.write_report_part(ordered_report(0.5, 0.6, 0.7), 'run1')
        aggregator.write_report_part(ordered_report(0.4, 0.5, 0.45, seed=1), 'run2')

        assert aggregator.data_exists()
        reports = aggregator.get_reports()
        assert len(reports) == 16
        assert '_dedup_key' not in reports.columns
        assert set(reports['seed']) == {0, 1}
        assert not any(f.endswith('.tmp') for f in os.listdir(aggregator.parts_dir))

    def test_accuracy_pivot_averages_runs(self):
        aggregator = ReportAggregator()
        aggregator.write_report_part(ordered_report(0.5, 0.6, 0.7), 'run1')
        aggregator.write_report_part(ordered_report(0.3, 0.6, 0.5), 'run2')

        pivot = aggregator.get_accuracy_pivot().set_index('Pipeline')
        assert pivot.loc['Naive', 'synthetic:0.5'] == pytest.approx(0.4)
        assert pivot.loc['RED-Ens', 'synthetic:0.5'] == pytest.approx(0.6)
        assert pivot.loc['Top-1', 'clean:0'] == pytest.approx(0.9)

        token = aggregator.get_token_accuracy_pivot()
        assert token['Pipeline'].tolist() == ['Top-1']

    def test_ordering_check_per_run(self):
        aggregator = ReportAggregator()
        aggregator.write_report_part(ordered_report(0.5, 0.6, 0.7), 'good')
        aggregator.write_report_part(ordered_report(0.5, 0.6, 0.55), 'inverted')
        aggregator.write_report_part(ordered_report(0.5, 0.51, 0.52), 'narrow')

        check = aggregator.check_ordering('synthetic', 0.5).set_index('run_hash')
        assert check['holds'].to_dict() == {'good': True, 'inverted': False, 'narrow': True}
        assert list(check.columns) == ['naive', 'top1', 'red_ens', 'holds']

        strict = aggregator.check_ordering('synthetic', 0.5, margin=0.03).set_index('run_hash')
        assert strict['holds'].to_dict() == {'good': True, 'inverted': False, 'narrow': False}

    def test_ordering_check_needs_every_pipeline(self):
        aggregator = ReportAggregator()
        aggregator.write_report_part(ordered_report(0.5, 0.6, 0.7), 'run1')
        with pytest.raises(ValueError, match="lack pipelines"):
            aggregator.check_ordering('synthetic', 0.5, ordering=('naive', 'red'))

    def test_summary_excludes_oracle(self):
        aggregator = ReportAggregator()
        aggregator.write_report_part(ordered_report(0.5, 0.6, 0.7), 'run1')
        summary = aggregator.get_summary_statistics()
        assert summary['total_runs'] == 1
        assert summary['pipelines'] == ['naive', 'top1', 'red_ens', 'oracle']
        assert summary['settings'] == ['clean:0', 'synthetic:0.5']
        assert summary['best_pipeline'] == 'RED-Ens'

    def test_setting_label(self):
        assert setting_label('natural', 0.2) == 'natural:0.2'
        assert setting_label('clean', 0.0) == 'clean:0'


class TestExport:
    def test_report_workbook(self, tmp_path):
        path = ReportExporter(output_dir=str(tmp_path)).generate_report_workbook(
            ordered_report(0.5, 0.6, 0.7), str(tmp_path / 'report.xlsx'))
        assert path == str(tmp_path / 'report.xlsx')
        assert not os.path.exists(f"{path}.tmp.xlsx")

        wb = load_workbook(path)
        assert wb.sheetnames == ['Accuracy', 'Token Accuracy', 'Raw', 'Config']
        accuracy = wb['Accuracy']
        assert accuracy['A1'].value == 'Pipeline'
        assert accuracy['A1'].font.bold
        assert accuracy['A1'].fill.start_color.rgb.endswith('4472C4')
        assert accuracy.freeze_panes == 'A2'
        assert {row[0].value for row in accuracy.iter_rows(min_row=2)} == {'Naive', 'Top-1', 'RED-Ens', 'Oracle'}

        config = {row[0].value: row[1].value for row in wb['Config'].iter_rows(min_row=2)}
        assert config == {'seed': '0', 'tau': '0.1'}

    def test_dataset_workbook_and_history(self):
        aggregator = ReportAggregator()
        aggregator.write_report_part(ordered_report(0.5, 0.6, 0.7), 'run1')
        exporter = ReportExporter(aggregator)
        path = exporter.generate_report_workbook()
        assert os.path.basename(path).startswith('red_report_')
        assert 'Raw' in load_workbook(path).sheetnames

        history = exporter.get_export_history()
        assert history['Filename'].tolist() == [os.path.basename(path)]

    def test_nothing_to_export(self, tmp_path):
        with pytest.raises(ValueError, match="nothing to export"):
            ReportExporter(output_dir=str(tmp_path)).generate_report_workbook()


class TestCharts:
    def test_accuracy_chart_groups_by_setting(self):
        aggregator = ReportAggregator()
        aggregator.write_report_part(ordered_report(0.5, 0.6, 0.7), 'run1')
        fig = ChartGenerator().create_accuracy_chart(aggregator.get_accuracy_pivot())
        assert [trace.name for trace in fig.data] == ['Naive', 'Top-1', 'RED-Ens', 'Oracle']
        assert list(fig.data[0].x) == ['clean:0', 'synthetic:0.5']
        assert fig.layout.barmode == 'group'

    def test_empty_inputs_give_placeholder_charts(self):
        charts = ChartGenerator()
        for fig in (charts.create_accuracy_chart(pd.DataFrame()), charts.create_op_mix_chart(op_mix([]))):
            assert len(fig.data) == 0
            assert fig.layout.annotations[0].text == 'No data available'

    def test_posterior_chart(self):
        candidates = CandidateSet('cxt', (Candidate(0, 1, 'cat'), Candidate(2, 1, 'cut')))
        log_prior = np.log([0.5, 0.5])
        log_joint, log_post = combine_log_scores(log_prior, np.array([0.0, -1.0]))
        post = TokenPosterior(candidates, log_prior, np.array([0.0, -1.0]), log_joint, log_post)
        fig = ChartGenerator().create_posterior_chart(post)
        assert list(fig.data[0].x) == ['cat', 'cut']
        assert sum(fig.data[0].y) == pytest.approx(1.0)
        assert fig.layout.title.text == "Posterior for 'cxt'"

    def test_op_mix_chart(self):
        trace = [NoiseRecord(0, i, op, 'a', 'b') for i, op in enumerate(['swap', 'swap', 'insert'])]
        fig = ChartGenerator().create_op_mix_chart(op_mix(trace))
        assert dict(zip(fig.data[0].labels, fig.data[0].values)) == {'swap': 2, 'insert': 1}


def test_render_tokens_marks_changes_and_unknowns(toy_store):
    chips = render_tokens(['cat', 'road', 'zzz', '<b>'], ['kat', 'road', 'zzz', '<b>'], toy_store)
    assert '<span class="red-token changed">cat</span>' in chips
    assert '<span class="red-token">road</span>' in chips
    assert '<span class="red-token unknown">zzz</span>' in chips
    assert '&lt;b&gt;' in chips
    assert chips.startswith('<div class="red-tokens">')
