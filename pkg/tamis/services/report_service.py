"""Files written by experiment runs: CSV traces, SVG trace charts, the PDF report.

Charts are ReportLab drawings rendered to SVG with ``renderSVG``; the PDF
report is a platypus story (cover, parameter table, per-group summary
table, β / KL-hat charts of the first replicate of each group).
"""
import csv
import json
import logging
import math
import os
from datetime import datetime
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
from reportlab.graphics import renderSVG
from reportlab.graphics.charts.lineplots import LinePlot
from reportlab.graphics.shapes import Drawing, String
from reportlab.lib import colors
from reportlab.lib.enums import TA_CENTER
from reportlab.lib.pagesizes import A4
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.lib.units import inch
from reportlab.platypus import PageBreak, Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from ..models.mixture import MixtureParams
from ..models.records import TRACE_COLUMNS, RunResult

logger = logging.getLogger(__name__)

BETA_COLOR = colors.HexColor('#c0392b')
KL_COLOR = colors.HexColor('#2980b9')


def write_trace_csv(result: RunResult, path: str) -> str:
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=TRACE_COLUMNS, lineterminator='\n')
        writer.writeheader()
        for row in result.trace_rows():
            writer.writerow(row)
    return path


def write_partial_trace_csv(records: Sequence[Any], path: str) -> str:
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=TRACE_COLUMNS, lineterminator='\n')
        writer.writeheader()
        for record in records:
            writer.writerow(record.trace_row())
    return path


def read_trace_csv(path: str) -> Dict[str, np.ndarray]:
    with open(path, 'r', newline='') as f:
        reader = csv.DictReader(f)
        missing = set(TRACE_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path} is not a trace file (missing {', '.join(sorted(missing))})")
        rows = list(reader)
    return {column: np.array([float(row[column]) for row in rows]) for column in TRACE_COLUMNS}


def write_particles_csv(result: RunResult, path: str) -> str:
    """Every recycled particle with its stage, cached log π and final log weight"""
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    dim = result.records[0].draws.dim
    log_w = result.final_log_w.log_w
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['stage'] + [f"x_{j + 1}" for j in range(dim)] + ['log_pi', 'log_w'])
        offset = 0
        for record in result.records:
            for i, x in enumerate(record.draws.points):
                writer.writerow([record.t] + [repr(float(v)) for v in x]
                                + [repr(float(record.log_pi[i])), repr(float(log_w[offset + i]))])
            offset += record.draws.size
    return path


def write_proposals_jsonl(result: RunResult, path: str) -> str:
    """One JSON line per stage: the stage index and the proposal θ_t that drew it"""
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    with open(path, 'w') as f:
        for record in result.records:
            f.write(json.dumps({'t': record.t, 'theta': record.theta.to_record()}, sort_keys=True))
            f.write('\n')
    return path


def read_proposals_jsonl(path: str) -> List[MixtureParams]:
    with open(path, 'r') as f:
        return [MixtureParams.from_record(json.loads(line)['theta']) for line in f if line.strip()]


def write_rows_csv(rows: Iterable[Dict[str, Any]], columns: Sequence[str], path: str) -> str:
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=list(columns), lineterminator='\n', extrasaction='ignore')
        writer.writeheader()
        for row in rows:
            writer.writerow({key: _cell(row.get(key)) for key in columns})
    return path


def read_rows_csv(path: str) -> List[Dict[str, str]]:
    with open(path, 'r', newline='') as f:
        return list(csv.DictReader(f))


def _cell(value: Any) -> str:
    if value is None:
        return ''
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _line_plot(x: np.ndarray, y: np.ndarray, color, x0: float, y0: float, width: float,
               height: float, y_max: Optional[float] = None) -> LinePlot:
    plot = LinePlot()
    plot.x, plot.y = x0, y0
    plot.width, plot.height = width, height
    keep = np.isfinite(y)
    points = list(zip(x[keep].tolist(), y[keep].tolist())) or [(0.0, 0.0)]
    plot.data = [points]
    plot.lines[0].strokeColor = color
    plot.lines[0].strokeWidth = 1.5
    plot.xValueAxis.valueMin = float(np.min(x)) if x.size else 0.0
    plot.xValueAxis.valueMax = float(np.max(x)) if x.size > 1 else 1.0
    plot.yValueAxis.valueMin = 0.0
    top = y_max if y_max is not None else (float(np.max(y[keep])) if np.any(keep) else 1.0)
    plot.yValueAxis.valueMax = max(top, 1e-9)
    plot.xValueAxis.labels.fontSize = 7
    plot.yValueAxis.labels.fontSize = 7
    return plot


def trace_drawing(t: np.ndarray, beta: np.ndarray, kl_hat: np.ndarray, title: str = '',
                  width: float = 480, height: float = 300) -> Drawing:
    """β_t (top panel) and KL-hat_t (bottom panel) along the stages"""
    drawing = Drawing(width, height)
    panel = (height - 70) / 2.0
    drawing.add(String(width / 2.0, height - 14, title, textAnchor='middle', fontSize=10))
    drawing.add(_line_plot(t, beta, BETA_COLOR, 50, 40 + panel + 20, width - 70, panel, y_max=1.0))
    drawing.add(String(12, 40 + 1.5 * panel + 20, 'beta', fontSize=8, fillColor=BETA_COLOR))
    drawing.add(_line_plot(t, kl_hat, KL_COLOR, 50, 30, width - 70, panel))
    drawing.add(String(12, 30 + panel / 2.0, 'KL-hat', fontSize=8, fillColor=KL_COLOR))
    drawing.add(String(width / 2.0, 6, 'iteration t', textAnchor='middle', fontSize=8))
    return drawing


def render_trace_svg(trace: Dict[str, np.ndarray], path: str, title: str = '') -> str:
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    renderSVG.drawToFile(trace_drawing(trace['t'], trace['beta_t'], trace['kl_hat_t'], title), path)
    return path


def result_trace(result: RunResult) -> Dict[str, np.ndarray]:
    rows = result.trace_rows()
    return {column: np.array([float(row[column]) for row in rows]) for column in TRACE_COLUMNS}


def summarize(rows: Sequence[Dict[str, Any]]) -> List[Dict[str, Any]]:
    """Per (algorithm, setting): replicate counts, medians and mean squared errors"""
    groups: Dict[tuple, List[Dict[str, Any]]] = {}
    for row in rows:
        groups.setdefault((row['algorithm'], row['setting']), []).append(row)

    def values(group, key):
        out = []
        for row in group:
            value = row.get(key)
            if value not in (None, ''):
                out.append(float(value))
        return np.array(out)

    summary = []
    for (algorithm, setting), group in groups.items():
        ok = [row for row in group if row['status'] == 'ok']
        converged = values(ok, 'convergence_iteration')
        summary.append({
            'algorithm': algorithm,
            'setting': setting,
            'replicates': len(group),
            'failed': len(group) - len(ok),
            'median_final_ess': float(np.median(values(ok, 'final_ess'))) if ok else math.nan,
            'median_convergence_iteration': float(np.median(converged)) if converged.size else math.nan,
            'mse_mean': float(np.mean(values(ok, 'mse_mean'))) if values(ok, 'mse_mean').size else math.nan,
            'mse_variance_trace': (float(np.mean(values(ok, 'mse_variance_trace')))
                                   if values(ok, 'mse_variance_trace').size else math.nan),
        })
    return summary


class ExperimentReportGenerator:
    """PDF summary of one experiment directory"""

    def __init__(self):
        self.styles = getSampleStyleSheet()
        self._setup_custom_styles()

    def _setup_custom_styles(self):
        self.styles.add(ParagraphStyle(
            name='CustomTitle',
            parent=self.styles['Title'],
            fontSize=22,
            spaceAfter=24,
            textColor=colors.HexColor('#2c3e50'),
            alignment=TA_CENTER
        ))
        self.styles.add(ParagraphStyle(
            name='CustomHeading',
            parent=self.styles['Heading1'],
            fontSize=15,
            spaceAfter=10,
            textColor=colors.HexColor('#34495e'),
        ))

    def generate_report(self, report_data: Dict[str, Any], file_path: str) -> str:
        """Build the PDF; ``report_data`` holds 'experiment', 'config', 'summary', 'traces', 'notes'"""
        os.makedirs(os.path.dirname(file_path) or '.', exist_ok=True)
        doc = SimpleDocTemplate(file_path, pagesize=A4, rightMargin=54, leftMargin=54,
                                topMargin=54, bottomMargin=36)
        story = []
        self._add_cover(story, report_data)
        self._add_summary(story, report_data)
        self._add_traces(story, report_data)
        doc.build(story)
        logger.info("report written to %s", file_path)
        return file_path

    def _table(self, data: List[List[str]], widths=None) -> Table:
        table = Table(data, colWidths=widths, repeatRows=1)
        table.setStyle(TableStyle([
            ('BACKGROUND', (0, 0), (-1, 0), colors.HexColor('#34495e')),
            ('TEXTCOLOR', (0, 0), (-1, 0), colors.white),
            ('FONTNAME', (0, 0), (-1, 0), 'Helvetica-Bold'),
            ('FONTSIZE', (0, 0), (-1, -1), 8),
            ('ALIGN', (1, 1), (-1, -1), 'RIGHT'),
            ('GRID', (0, 0), (-1, -1), 0.5, colors.grey),
            ('ROWBACKGROUNDS', (0, 1), (-1, -1), [colors.white, colors.HexColor('#ecf0f1')]),
        ]))
        return table

    def _add_cover(self, story, report_data):
        story.append(Paragraph(f"Experiment {report_data['experiment']}", self.styles['CustomTitle']))
        story.append(Paragraph(f"<b>Generated:</b> {report_data.get('generated_at') or datetime.now().strftime('%B %d, %Y')}",
                               self.styles['Normal']))
        story.append(Spacer(1, 0.2 * inch))
        config = report_data.get('config', {})
        data = [['Parameter', 'Value']]
        for key in sorted(config):
            data.append([key, str(config[key])[:80]])
        story.append(self._table(data, widths=[1.6 * inch, 4.6 * inch]))
        for note in report_data.get('notes', []):
            story.append(Spacer(1, 0.1 * inch))
            story.append(Paragraph(note, self.styles['Italic']))

    def _add_summary(self, story, report_data):
        story.append(Spacer(1, 0.3 * inch))
        story.append(Paragraph("Summary over replicates", self.styles['CustomHeading']))
        data = [['Algorithm', 'Setting', 'Runs', 'Failed', 'Median ESS', 'Median conv. t',
                 'MSE mean', 'MSE var. trace']]
        for row in report_data.get('summary', []):
            data.append([
                row['algorithm'], row['setting'], str(row['replicates']), str(row['failed']),
                f"{row['median_final_ess']:.1f}", f"{row['median_convergence_iteration']:.1f}",
                f"{row['mse_mean']:.3g}", f"{row['mse_variance_trace']:.3g}",
            ])
        story.append(self._table(data))

    def _add_traces(self, story, report_data):
        traces = report_data.get('traces', {})
        if not traces:
            return
        story.append(PageBreak())
        story.append(Paragraph("Inverse temperature and KL-hat (first replicate)", self.styles['CustomHeading']))
        for title, trace in traces.items():
            story.append(trace_drawing(trace['t'], trace['beta_t'], trace['kl_hat_t'], title,
                                       width=440, height=260))
            story.append(Spacer(1, 0.2 * inch))
