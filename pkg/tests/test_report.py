import json

import pytest

from benchmark import run_suite
from report_generator import REPORT_SCHEMA, SUMMARY_COLUMNS, ReportGenerator
from utils.error_handler import ConfigError


@pytest.fixture(scope="module")
def generator():
    return ReportGenerator()


@pytest.fixture
def report(small_env, quick_config, generator):
    result = run_suite(small_env, quick_config)
    return generator.build_run_report(result, {'path': 'env.json'}, label="adaptive")


def test_report_contents(report):
    assert report['schema'] == REPORT_SCHEMA
    assert report['artifact'] == "panonav"
    assert "MAC" in report['cost_convention']
    assert "stand-in" in report['policy_label']
    assert report['config']['spatial']['k'] == 4
    assert set(report['aggregate']) == {'TL', 'OSR', 'SR', 'SPL', 'GP'}
    assert len(report['episodes']) == 4
    assert 0.0 < report['gflops']['fraction_of_baseline'] < 1.0
    assert sum(report['component_share'].values()) == pytest.approx(1.0)
    episode = report['episodes'][0]
    assert episode['path'][0] == episode['start']
    assert len(episode['steps'][0]['dispositions']) == 36


def test_canonical_bytes_ignore_timestamp(report, generator):
    other = dict(report, generated_at="1970-01-01T00:00:00+00:00")
    assert generator.canonical_report_bytes(report) == generator.canonical_report_bytes(other)


def test_report_files_are_byte_identical(report, generator, tmp_path):
    first = generator.write_run_report(dict(report, generated_at="1970-01-01T00:00:00+00:00"),
                                       str(tmp_path / "a.json"))
    second = generator.write_run_report(dict(report, generated_at="2001-01-01T00:00:00+00:00"),
                                        str(tmp_path / "b.json"))
    with open(first, 'rb') as f, open(second, 'rb') as g:
        assert f.read() == g.read()
    with open(first, 'r', encoding='utf-8') as f:
        assert 'generated_at' not in json.load(f)
    assert generator.load_run_report(first)['generated_at'] == "1970-01-01T00:00:00+00:00"
    assert generator.load_run_report(second)['generated_at'] == "2001-01-01T00:00:00+00:00"


def test_report_round_trip(report, generator, tmp_path):
    path = generator.write_run_report(report, str(tmp_path / "out" / "report.json"))
    loaded = generator.load_run_report(path)
    assert generator.canonical_report_bytes(loaded) == generator.canonical_report_bytes(report)
    row = generator.summary_row(loaded)
    assert row['label'] == "adaptive"
    assert set(SUMMARY_COLUMNS) <= set(row)


def test_load_rejects_other_documents(generator, tmp_path):
    with pytest.raises(ConfigError):
        generator.load_run_report(str(tmp_path / "missing.json"))
    other = tmp_path / "other.json"
    other.write_text(json.dumps({'schema': 'navsim.env'}))
    with pytest.raises(ConfigError):
        generator.load_run_report(str(other))


def test_format_table_aligns_columns(generator):
    rows = [{'name': 'k', 'SR': 0.5, 'ok': True}, {'name': 'cache', 'SR': 12345.678, 'ok': None}]
    text = generator.format_table(rows)
    lines = text.splitlines()
    assert lines[0].split() == ['name', 'SR', 'ok']
    assert len({len(line) for line in lines}) == 1
    assert "0.5000" in lines[1] and "true" in lines[1]
    assert "12345.7" in lines[2] and lines[2].endswith("-")
    assert generator.format_table([]) == ""


def test_csv_table_round_trip(generator, tmp_path):
    rows = [{'value': 1, 'SR': 0.25, 'total_gflops': 10.0}, {'value': 2, 'SR': 0.5, 'total_gflops': 12.0}]
    path = generator.write_csv_table(rows, str(tmp_path / "table.csv"))
    loaded = generator.load_csv_table(path)
    assert loaded == [{'value': '1', 'SR': '0.2500', 'total_gflops': '10.0000'},
                      {'value': '2', 'SR': '0.5000', 'total_gflops': '12.0000'}]


def test_html_summary(report, generator, tmp_path):
    html = generator.render_html([report, report])
    assert "panonav" in html
    assert html.count("<h2>") == 2
    assert "encoder" in html
    path = generator.write_html([report], str(tmp_path / "summary.html"))
    assert open(path, encoding='utf-8').read().startswith("<!DOCTYPE html>")


def test_missing_template(report, tmp_path):
    with pytest.raises(ConfigError):
        ReportGenerator(str(tmp_path)).render_html([report])


def test_pdf_summary(report, generator, tmp_path):
    path = generator.write_pdf([report], str(tmp_path / "summary.pdf"))
    assert open(path, 'rb').read(5) == b"%PDF-"


def test_plots(generator, tmp_path):
    svg = generator.plot_saturation([0.8, 0.9, 0.95, 0.99], str(tmp_path / "sat.svg"))
    assert "<svg" in open(svg, encoding='utf-8').read()
    rows = [{'SR': '0.5', 'total_gflops': '100.0'}, {'SR': '0.6', 'total_gflops': '120.0'}]
    assert generator.plot_ablation(rows, str(tmp_path / "ablation.svg")).endswith("ablation.svg")
    with pytest.raises(ConfigError):
        generator.plot_ablation([], str(tmp_path / "empty.svg"))
