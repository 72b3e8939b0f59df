//! Report tables built from stored campaign results, serialized as CSV,
//! JSON or Markdown.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::campaign::{CampaignError, CampaignResult};
use crate::generalization::{GeneralizationReport, QuadrantLabel};
use crate::task::TaskType;
use crate::workspace::task_dir_name;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Text,
    Integer,
    /// Already scaled to 0..100.
    Percent,
    /// Rendered with a `×` suffix in human formats.
    Speedup,
    Number,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub precision: usize,
}

impl Column {
    pub fn new(name: &str, kind: ColumnKind, precision: usize) -> Self {
        Column {
            name: name.to_string(),
            kind,
            precision,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    Text(String),
    Number(f64),
    /// Value with a ± spread.
    Spread {
        value: f64,
        spread: Option<f64>,
    },
    Missing,
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Number)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub title: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Markdown,
}

impl Format {
    pub const ALL: [Format; 3] = [Format::Csv, Format::Json, Format::Markdown];

    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Markdown => "md",
        }
    }
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "md" | "markdown" => Ok(Format::Markdown),
            other => Err(format!("unknown format `{other}` (csv, json, markdown)")),
        }
    }
}

fn render_cell(cell: &Cell, col: &Column, human: bool) -> String {
    let p = col.precision;
    let suffix = if human && col.kind == ColumnKind::Speedup {
        "×"
    } else {
        ""
    };
    match cell {
        Cell::Text(s) => s.clone(),
        Cell::Missing => "-".into(),
        Cell::Number(v) if col.kind == ColumnKind::Integer => format!("{v:.0}"),
        Cell::Number(v) => format!("{v:.p$}{suffix}"),
        Cell::Spread { value, spread: Some(s) } => format!("{value:.p$}±{s:.p$}{suffix}"),
        Cell::Spread { value, spread: None } => format!("{value:.p$}{suffix}"),
    }
}

impl ReportTable {
    pub fn new(title: impl Into<String>, columns: Vec<Column>) -> Self {
        ReportTable {
            title: title.into(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn cell(&self, row: usize, column: &str) -> Option<&Cell> {
        let idx = self.columns.iter().position(|c| c.name == column)?;
        self.rows.get(row)?.get(idx)
    }

    /// The cell as it appears in Markdown output.
    pub fn display(&self, row: usize, column: &str) -> Option<String> {
        let idx = self.columns.iter().position(|c| c.name == column)?;
        Some(render_cell(self.rows.get(row)?.get(idx)?, &self.columns[idx], true))
    }

    fn rendered_rows(&self, human: bool) -> impl Iterator<Item = Vec<String>> + '_ {
        self.rows.iter().map(move |row| {
            row.iter()
                .zip(&self.columns)
                .map(|(cell, col)| render_cell(cell, col, human))
                .collect()
        })
    }
}

pub fn serialize(table: &ReportTable, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(table).expect("table serializes");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(table.column_names()).expect("in-memory write");
            for row in table.rendered_rows(false) {
                w.write_record(&row).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
        }
        Format::Markdown => {
            let mut s = format!("### {}\n\n", table.title);
            let _ = writeln!(s, "| {} |", table.column_names().join(" | "));
            let align: Vec<&str> = table
                .columns
                .iter()
                .map(|c| if c.kind == ColumnKind::Text { ":---" } else { "---:" })
                .collect();
            let _ = writeln!(s, "| {} |", align.join(" | "));
            for row in table.rendered_rows(true) {
                let _ = writeln!(s, "| {} |", row.join(" | "));
            }
            s
        }
    }
}

pub fn parse_json(text: &str) -> Result<ReportTable, serde_json::Error> {
    serde_json::from_str(text)
}

pub const MAIN_COLUMNS: [&str; 9] = [
    "Agent",
    "Model",
    "Comp. %",
    "Corr. %",
    "Mean Spd. ± σ_r",
    "Mean Score",
    "Geo. Mean ± σ_r",
    "fast_1 %",
    "fast_2 %",
];

/// One row per (agent, model) campaign with results in `category`.
pub fn emit_main_table(results: &[CampaignResult], category: TaskType) -> ReportTable {
    use ColumnKind::*;
    let kinds = [
        (Text, 0),
        (Text, 0),
        (Percent, 1),
        (Percent, 1),
        (Speedup, 2),
        (Number, 1),
        (Speedup, 2),
        (Percent, 1),
        (Percent, 1),
    ];
    let columns = MAIN_COLUMNS
        .iter()
        .zip(kinds)
        .map(|(n, (k, p))| Column::new(n, k, p))
        .collect();
    let mut table = ReportTable::new(format!("{} results", category.label()), columns);
    for r in results {
        let Some(cat) = r.categories.get(&category) else {
            continue;
        };
        let m = &cat.metrics;
        table.rows.push(vec![
            Cell::Text(r.agent().into()),
            Cell::Text(r.model().into()),
            Cell::Number(m.compilation_rate),
            Cell::Number(m.correctness_rate),
            Cell::Spread {
                value: m.mean_speedup,
                spread: m.sigma_r,
            },
            Cell::Number(m.mean_score),
            match m.geo_mean {
                Some(g) => Cell::Spread {
                    value: g,
                    spread: m.geo_sigma_r,
                },
                None => Cell::Missing,
            },
            m.fast(1.0).into(),
            m.fast(2.0).into(),
        ]);
    }
    table
}

/// Cross-task speedup spread per (agent, model, category).
pub fn emit_distribution_table(results: &[CampaignResult]) -> ReportTable {
    use ColumnKind::*;
    let columns = vec![
        Column::new("Agent", Text, 0),
        Column::new("Model", Text, 0),
        Column::new("Category", Text, 0),
        Column::new("Tasks", Integer, 0),
        Column::new("Task Std", Speedup, 2),
        Column::new("P25", Speedup, 2),
        Column::new("P75", Speedup, 2),
        Column::new("P90", Speedup, 2),
    ];
    let mut table = ReportTable::new("Cross-task speedup distribution", columns);
    for r in results {
        for (tt, cat) in &r.categories {
            let d = &cat.metrics.distribution;
            table.rows.push(vec![
                Cell::Text(r.agent().into()),
                Cell::Text(r.model().into()),
                Cell::Text(tt.label().into()),
                Cell::Number(cat.metrics.tasks as f64),
                d.task_std.into(),
                Cell::Number(d.p25),
                Cell::Number(d.p75),
                Cell::Number(d.p90),
            ]);
        }
    }
    table
}

fn generalization_row(agent: &str, model: &str, scope: &str, r: &GeneralizationReport) -> Vec<Cell> {
    let pct = |q| Cell::from(r.fraction(q).map(|f| 100.0 * f));
    vec![
        Cell::Text(agent.into()),
        Cell::Text(model.into()),
        Cell::Text(scope.into()),
        Cell::Number(r.counts.total() as f64),
        pct(QuadrantLabel::BothPass),
        pct(QuadrantLabel::OptRegression),
        pct(QuadrantLabel::BothFail),
        pct(QuadrantLabel::OptImprovement),
        Cell::from(r.conditional_correctness.map(|c| 100.0 * c)),
        Cell::Number(r.s_bar_seen),
        r.s_bar_unseen.into(),
        r.delta_g.into(),
        r.headline.map_or(Cell::Missing, |h| Cell::Text(h.as_str().into())),
    ]
}

/// Quadrant fractions, conditional correctness and gap: one pooled row per
/// (agent, model), then one row per task. `None` when no campaign ran the
/// unseen pass.
pub fn emit_generalization_report(results: &[CampaignResult]) -> Option<ReportTable> {
    use ColumnKind::*;
    let columns = vec![
        Column::new("Agent", Text, 0),
        Column::new("Model", Text, 0),
        Column::new("Scope", Text, 0),
        Column::new("Configs", Integer, 0),
        Column::new("both_pass %", Percent, 1),
        Column::new("opt_regression %", Percent, 1),
        Column::new("both_fail %", Percent, 1),
        Column::new("opt_improvement %", Percent, 1),
        Column::new("Cond. Corr. %", Percent, 1),
        Column::new("s_seen", Speedup, 2),
        Column::new("s_unseen", Speedup, 2),
        Column::new("Δ_g", Number, 3),
        Column::new("Label", Text, 0),
    ];
    let mut table = ReportTable::new("Generalization to unseen configurations", columns);
    for r in results {
        let Some(pooled) = r.pooled_generalization() else {
            continue;
        };
        table
            .rows
            .push(generalization_row(r.agent(), r.model(), "all", &pooled));
        for g in &r.generalization {
            table
                .rows
                .push(generalization_row(r.agent(), r.model(), &g.task_id, &g.pooled));
        }
    }
    (!table.rows.is_empty()).then_some(table)
}

pub const PER_TASK_COLUMNS: [&str; 5] = ["run", "case", "t_base", "t_opt", "speedup"];

/// Per-case timings for one task across its runs, full precision.
pub fn emit_per_task(result: &CampaignResult, task_id: &str) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(PER_TASK_COLUMNS).expect("in-memory write");
    for rec in result.records_for(task_id) {
        for c in &rec.test_cases {
            w.write_record([
                rec.run_index.to_string(),
                c.name.clone(),
                c.t_base_ms.to_string(),
                c.t_opt_ms.to_string(),
                c.speedup.to_string(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
}

fn write(path: &Path, text: &str, written: &mut Vec<PathBuf>) -> Result<(), CampaignError> {
    let io = |e: std::io::Error| CampaignError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, text).map_err(io)?;
    written.push(path.to_path_buf());
    Ok(())
}

/// Writes every report under `out_dir` in the requested formats and
/// returns the files written. Per-task CSVs are nested by campaign id when
/// more than one campaign is given.
pub fn write_reports(
    results: &[CampaignResult],
    out_dir: &Path,
    formats: &[Format],
) -> Result<Vec<PathBuf>, CampaignError> {
    let mut written = Vec::new();
    let mut tables: Vec<(String, ReportTable)> = TaskType::ALL
        .iter()
        .map(|&tt| (format!("main_{}", tt.as_str()), emit_main_table(results, tt)))
        .collect();
    tables.push(("distribution".into(), emit_distribution_table(results)));
    match emit_generalization_report(results) {
        Some(t) => tables.push(("generalization".into(), t)),
        None => tracing::info!("no unseen-config results; generalization report omitted"),
    }
    for (stem, table) in &tables {
        for &f in formats {
            write(
                &out_dir.join(format!("{stem}.{}", f.extension())),
                &serialize(table, f),
                &mut written,
            )?;
        }
    }
    for r in results {
        let dir = if results.len() == 1 {
            out_dir.join("per_task")
        } else {
            out_dir.join("per_task").join(&r.manifest.campaign_id)
        };
        for task_id in &r.manifest.tasks {
            if r.records_for(task_id).next().is_some() {
                write(
                    &dir.join(format!("{}.csv", task_dir_name(task_id))),
                    &emit_per_task(r, task_id),
                    &mut written,
                )?;
            }
        }
    }
    Ok(written)
}
