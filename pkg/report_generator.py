# report_generator.py - Run reports, tables, HTML/PDF summaries and SVG plots
import json
import logging
import os
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional, Sequence

from jinja2 import Template
from reportlab.graphics import renderSVG
from reportlab.graphics.charts.lineplots import LinePlot
from reportlab.graphics.shapes import Drawing, String
from reportlab.graphics.widgets.markers import makeMarker
from reportlab.lib import colors
from reportlab.lib.pagesizes import landscape, letter
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from benchmark import SuiteResult
from config import ARTIFACT_NAME, ARTIFACT_VERSION
from flops import COST_CONVENTION
from pipeline import POLICY_LABEL, Episode
from simenv import episode_metrics
from utils.error_handler import ConfigError

logger = logging.getLogger(__name__)

REPORT_SCHEMA = "panonav.run_report"
REPORT_SCHEMA_VERSION = 1
VOLATILE_FIELDS = ('generated_at',)
META_SUFFIX = '.meta.json'

SUMMARY_COLUMNS = ['label', 'TL', 'OSR', 'SR', 'SPL', 'GP', 'total_gflops', 'per_step_gflops',
                   'encoder_share', 'hit_rate']


def _format_cell(value: Any) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.4f}" if abs(value) < 1000 else f"{value:.1f}"
    if value is None:
        return "-"
    return str(value)


class ReportGenerator:
    """Builds the canonical run report and renders it as tables, HTML, PDF and SVG"""

    def __init__(self, template_dir: Optional[str] = None):
        self.template_dir = template_dir or os.path.join(os.path.dirname(os.path.abspath(__file__)), 'report_templates')

    # Run report ------------------------------------------------------------

    def episode_record(self, episode: Episode) -> Dict[str, Any]:
        metrics = episode_metrics(episode.trajectory)
        spec = episode.spec
        return {
            'episode_id': spec.episode_id,
            'start': spec.start,
            'goal': spec.goal,
            'shortest_path': spec.shortest_path,
            'path': list(episode.trajectory.path),
            'goal_distances': list(episode.trajectory.goal_distances),
            'metrics': {'TL': metrics.TL, 'OSR': metrics.OSR, 'SR': metrics.SR,
                        'SPL': metrics.SPL, 'GP': metrics.GP},
            'gflops': episode.ledger.totals(),
            'cache': episode.cache_stats.to_dict(),
            'steps': [step.to_dict() for step in episode.steps],
            'flags': episode.flags,
        }

    def build_run_report(self, result: SuiteResult, env_info: Optional[Dict[str, Any]] = None,
                         label: str = "") -> Dict[str, Any]:
        gflops = result.ledger.totals()
        baseline = result.baseline_gflops()
        gflops['baseline_gflops'] = baseline
        gflops['fraction_of_baseline'] = result.ledger.total / baseline if baseline else 0.0
        return {
            'schema': REPORT_SCHEMA,
            'schema_version': REPORT_SCHEMA_VERSION,
            'artifact': ARTIFACT_NAME,
            'artifact_version': ARTIFACT_VERSION,
            'cost_convention': COST_CONVENTION,
            'policy_label': POLICY_LABEL,
            'label': label,
            'config': result.config.to_dict(),
            'env': env_info or {},
            'aggregate': result.metrics.aggregate(),
            'gflops': gflops,
            'component_share': result.ledger.shares(),
            'cache': result.cache.to_dict(),
            'dispositions': result.dispositions(),
            'episodes': [self.episode_record(e) for e in result.episodes],
            'generated_at': datetime.now(timezone.utc).isoformat(),
        }

    def canonical_report_bytes(self, report: Dict[str, Any]) -> bytes:
        """Report bytes with the volatile fields removed; equal configs give equal bytes"""
        stable = {k: v for k, v in report.items() if k not in VOLATILE_FIELDS}
        return (json.dumps(stable, sort_keys=True, indent=2) + "\n").encode('utf-8')

    def write_run_report(self, report: Dict[str, Any], path: str) -> str:
        """Write the canonical bytes to `path` and the volatile fields to `path` + META_SUFFIX"""
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, 'wb') as f:
            f.write(self.canonical_report_bytes(report))
        volatile = {k: report[k] for k in VOLATILE_FIELDS if k in report}
        if volatile:
            with open(path + META_SUFFIX, 'w', encoding='utf-8') as f:
                f.write(json.dumps(volatile, sort_keys=True, indent=2) + "\n")
        logger.info(f"Wrote run report to {path}")
        return path

    def load_run_report(self, path: str) -> Dict[str, Any]:
        if not os.path.exists(path):
            raise ConfigError(f"Report file not found: {path}", "report")
        try:
            with open(path, 'r', encoding='utf-8') as f:
                report = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Report {path} is not valid JSON: {e}", "report")
        if report.get('schema') != REPORT_SCHEMA:
            raise ConfigError(f"{path} is not a run report", "report")
        if report.get('schema_version') != REPORT_SCHEMA_VERSION:
            raise ConfigError(f"Unsupported report schema version {report.get('schema_version')}", "report")
        meta_path = path + META_SUFFIX
        if os.path.exists(meta_path):
            try:
                with open(meta_path, 'r', encoding='utf-8') as f:
                    meta = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"Report metadata {meta_path} is not valid JSON: {e}", "report")
            report.update({k: v for k, v in meta.items() if k in VOLATILE_FIELDS})
        return report

    def summary_row(self, report: Dict[str, Any]) -> Dict[str, Any]:
        row = {'label': report.get('label') or report['config']['pipeline']['mode']}
        row.update(report['aggregate'])
        row['total_gflops'] = report['gflops']['total_gflops']
        row['per_step_gflops'] = report['gflops']['per_step_mean']
        row['encoder_share'] = report['component_share']['encoder']
        row['hit_rate'] = report['cache']['hit_rate']
        return row

    # Tables ----------------------------------------------------------------

    def format_table(self, rows: Sequence[Dict[str, Any]], columns: Optional[List[str]] = None,
                     separator: str = "  ") -> str:
        """Right-aligned columns, header first"""
        if not rows:
            return ""
        columns = columns or list(rows[0].keys())
        cells = [columns] + [[_format_cell(row.get(c)) for c in columns] for row in rows]
        widths = [max(len(line[i]) for line in cells) for i in range(len(columns))]
        lines = [separator.join(cell.rjust(w) for cell, w in zip(line, widths)) for line in cells]
        return "\n".join(lines) + "\n"

    def write_csv_table(self, rows: Sequence[Dict[str, Any]], path: str,
                        columns: Optional[List[str]] = None) -> str:
        """Aligned CSV: comma separated, every column padded to its widest cell"""
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            f.write(self.format_table(rows, columns, separator=", "))
        logger.info(f"Wrote {len(rows)} rows to {path}")
        return path

    # HTML / PDF ------------------------------------------------------------

    def render_html(self, reports: Sequence[Dict[str, Any]]) -> str:
        template_path = os.path.join(self.template_dir, 'run_summary.html')
        if not os.path.exists(template_path):
            raise ConfigError(f"Report template not found: {template_path}", "template")
        with open(template_path, 'r', encoding='utf-8') as f:
            template_content = f.read()
        template = Template(template_content)
        return template.render(
            artifact=ARTIFACT_NAME,
            artifact_version=ARTIFACT_VERSION,
            cost_convention=COST_CONVENTION,
            policy_label=POLICY_LABEL,
            columns=SUMMARY_COLUMNS,
            rows=[{c: _format_cell(v) for c, v in self.summary_row(r).items()} for r in reports],
            reports=reports,
        )

    def write_html(self, reports: Sequence[Dict[str, Any]], path: str) -> str:
        html = self.render_html(reports)
        with open(path, 'w', encoding='utf-8') as f:
            f.write(html)
        logger.info(f"Wrote HTML summary of {len(reports)} report(s) to {path}")
        return path

    def write_pdf(self, reports: Sequence[Dict[str, Any]], path: str) -> str:
        doc = SimpleDocTemplate(path, pagesize=landscape(letter))
        styles = getSampleStyleSheet()
        title_style = ParagraphStyle(
            'Title',
            parent=styles['Heading1'],
            fontSize=18,
            textColor=colors.HexColor('#1e3a8a'),
            spaceAfter=12,
            fontName='Helvetica-Bold'
        )
        note_style = ParagraphStyle(
            'Note',
            parent=styles['Normal'],
            fontSize=9,
            textColor=colors.HexColor('#6b7280'),
            spaceAfter=6
        )
        story = [
            Paragraph(f"{ARTIFACT_NAME} {ARTIFACT_VERSION} run summary", title_style),
            Paragraph(COST_CONVENTION, note_style),
            Paragraph(f"Policy: {POLICY_LABEL}", note_style),
            Spacer(1, 12),
        ]
        data = [SUMMARY_COLUMNS]
        for report in reports:
            row = self.summary_row(report)
            data.append([_format_cell(row.get(c)) for c in SUMMARY_COLUMNS])
        table = Table(data, repeatRows=1)
        table.setStyle(TableStyle([
            ('BACKGROUND', (0, 0), (-1, 0), colors.HexColor('#1e3a8a')),
            ('TEXTCOLOR', (0, 0), (-1, 0), colors.white),
            ('FONTNAME', (0, 0), (-1, 0), 'Helvetica-Bold'),
            ('FONTSIZE', (0, 0), (-1, -1), 8),
            ('ALIGN', (1, 0), (-1, -1), 'RIGHT'),
            ('GRID', (0, 0), (-1, -1), 0.5, colors.HexColor('#cbd5e1')),
            ('ROWBACKGROUNDS', (0, 1), (-1, -1), [colors.white, colors.HexColor('#f1f5f9')]),
        ]))
        story.append(table)
        doc.build(story)
        logger.info(f"Wrote PDF summary of {len(reports)} report(s) to {path}")
        return path

    # Plots -----------------------------------------------------------------

    def _plot(self, series: List[List[tuple]], title: str, x_label: str, y_label: str,
              path: str, joined: bool = True) -> str:
        drawing = Drawing(420, 300)
        plot = LinePlot()
        plot.x, plot.y = 60, 50
        plot.width, plot.height = 330, 200
        plot.data = series
        plot.joinedLines = 1 if joined else 0
        plot.lines[0].strokeColor = colors.HexColor('#1e3a8a')
        plot.lines[0].symbol = makeMarker('FilledCircle')
        if not joined:
            plot.lines[0].strokeWidth = 0
        drawing.add(plot)
        drawing.add(String(210, 280, title, fontSize=12, textAnchor='middle'))
        drawing.add(String(225, 15, x_label, fontSize=9, textAnchor='middle'))
        drawing.add(String(12, 150, y_label, fontSize=9))
        renderSVG.drawToFile(drawing, path)
        logger.info(f"Wrote plot to {path}")
        return path

    def plot_saturation(self, curve: Sequence[float], path: str) -> str:
        points = [(i + 1, float(v)) for i, v in enumerate(curve)]
        return self._plot([points], "Consecutive-layer similarity", "layer pair (l, l+1)",
                          "cos", path)

    def plot_ablation(self, rows: Sequence[Dict[str, Any]], path: str) -> str:
        points = sorted((float(r['total_gflops']), float(r['SR'])) for r in rows)
        if not points:
            raise ConfigError("Nothing to plot: the table has no rows", "table")
        return self._plot([points], "Success rate against compute", "total GFLOPs", "SR",
                          path, joined=False)

    def load_csv_table(self, path: str) -> List[Dict[str, str]]:
        if not os.path.exists(path):
            raise ConfigError(f"Table file not found: {path}", "table")
        with open(path, 'r', encoding='utf-8') as f:
            lines = [line.rstrip("\n") for line in f if line.strip()]
        header = [c.strip() for c in lines[0].split(",")]
        return [dict(zip(header, (c.strip() for c in line.split(",")))) for line in lines[1:]]


# Global report generator instance
report_generator = ReportGenerator()
