use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    Analysis, PipelineError, ReflectSummary, Roster, RunConfig, SampleRecord, ShortfallRecord,
    SurveySummary,
};
use crate::corpus::{Decade, Gender};
use crate::stats::{
    cell_gap_test, decade_volatility, gender_contrast, CellGap, CellStats, Source, TestResult,
};
use crate::survey::{item, ItemId, MissingItem, SurveyError};

pub const CAVEATS: [&str; 3] = [
    "Every response is treated as an independent draw. Characters share films and films share decades, \
so the p-values above overstate the evidence; a model with film-level random effects would be the \
appropriate follow-up.",
    "Simulated answers mix what the script shows about a character with whatever the language model \
already believes about people like them. A gap between simulated and real means is a prompt for \
closer reading, not a finding about audiences or populations.",
    "Gender and age come from the credited actor, not from anything the character says about \
themselves.",
];

pub const PLOT_README: &str = "# plot.csv

One row per point of a decade-trend chart.

| column  | meaning |
|---------|---------|
| item_id | survey item |
| source  | `simulated` (character agents) or `real` (reference survey) |
| gender  | `F` or `M` |
| decade  | `1990s`, `2000s` or `2010s` |
| mean    | mean response on the 1-5 scale (1 = strongly disagree) |
| n       | responses behind the mean |

Rows are sorted by item, source, gender, decade.

## Drawing the chart

Make one panel per `item_id`. Inside a panel, group rows by `(source, gender)`
and draw each group as a line over the three decades, giving up to four lines
per panel. Draw simulated lines solid and real lines dashed, and pick one
colour per gender so the two sources of the same gender read as a pair.

A missing row means no responses exist for that cell. Leave a gap in the line
rather than interpolating; `report.txt` lists the unmatched cells.
";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub item_id: ItemId,
    pub source: Source,
    pub gender: Gender,
    pub decade: Decade,
    pub mean: f64,
    pub n: usize,
}

/// One row per populated cell, sorted by (item, source, gender, decade).
pub fn emit_plot_data(sim: &[CellStats], real: &[CellStats]) -> Vec<PlotRow> {
    let mut rows: Vec<PlotRow> = sim
        .iter()
        .chain(real)
        .map(|c| PlotRow {
            item_id: c.item_id,
            source: c.source,
            gender: c.gender,
            decade: c.decade,
            mean: c.mean,
            n: c.n,
        })
        .collect();
    rows.sort_by_key(|r| (r.item_id, r.source, r.gender, r.decade));
    rows
}

pub fn plot_csv(rows: &[PlotRow]) -> Result<String, PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["item_id", "source", "gender", "decade", "mean", "n"])
        .map_err(SurveyError::from)?;
    for r in rows {
        w.write_record([
            r.item_id.to_string(),
            r.source.to_string(),
            r.gender.to_string(),
            r.decade.to_string(),
            r.mean.to_string(),
            r.n.to_string(),
        ])
        .map_err(SurveyError::from)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| SurveyError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub films: usize,
    pub agents: usize,
    pub agents_by_gender: BTreeMap<Gender, usize>,
    pub agents_by_decade: BTreeMap<Decade, usize>,
    pub mean_dialogue_nodes: f64,
    pub mean_action_nodes: f64,
    pub median_imdb_votes: Option<f64>,
    pub shortfalls: Vec<ShortfallRecord>,
    pub out_of_window_films: Vec<String>,
    pub unparsed_films: Vec<String>,
    pub exclusions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemReport {
    pub item_id: ItemId,
    pub statement: String,
    pub simulated: BTreeMap<Gender, GroupSummary>,
    pub real: BTreeMap<Gender, GroupSummary>,
    pub welch: Option<TestResult>,
    pub mann_whitney: Option<TestResult>,
    pub cell_gap: Option<CellGap>,
    pub volatility_simulated: Option<f64>,
    pub volatility_real: Option<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingSummary {
    pub reflection_failures: Vec<String>,
    pub survey_failures: Vec<String>,
    pub agents_without_reflections: Vec<String>,
    pub missing_items: Vec<MissingItem>,
    pub missing_by_item: BTreeMap<ItemId, usize>,
    pub reference_rows_out_of_window: usize,
}

/// Everything here is recomputable from `responses.csv`, the reference CSV
/// and the stage summaries in the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub seed: u64,
    pub producer: String,
    pub reference: bool,
    pub corpus: CorpusSummary,
    pub items: Vec<ItemReport>,
    pub missing: MissingSummary,
    pub caveats: Vec<String>,
}

fn median(values: &[u64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 0 {
        (v[mid - 1] as f64 + v[mid] as f64) / 2.0
    } else {
        v[mid] as f64
    })
}

fn corpus_summary(sample: &SampleRecord, roster: &Roster) -> CorpusSummary {
    let mut by_gender = BTreeMap::new();
    let mut by_decade = BTreeMap::new();
    for a in &roster.admitted {
        *by_gender.entry(a.gender).or_insert(0) += 1;
        *by_decade.entry(a.decade).or_insert(0) += 1;
    }
    let n = roster.admitted.len();
    let mean_of = |f: fn(&super::RosterEntry) -> usize| {
        if n == 0 {
            0.0
        } else {
            roster.admitted.iter().map(f).sum::<usize>() as f64 / n as f64
        }
    };
    CorpusSummary {
        films: roster.films,
        agents: n,
        agents_by_gender: by_gender,
        agents_by_decade: by_decade,
        mean_dialogue_nodes: mean_of(|a| a.dialogue_nodes),
        mean_action_nodes: mean_of(|a| a.action_nodes),
        median_imdb_votes: median(&roster.imdb_votes),
        shortfalls: sample.shortfalls.clone(),
        out_of_window_films: sample.out_of_window.clone(),
        unparsed_films: sample.unparsed.clone(),
        exclusions: roster.excluded.clone(),
    }
}

fn groups(
    analysis_obs: &[crate::stats::Observation],
    item_id: ItemId,
) -> BTreeMap<Gender, GroupSummary> {
    let mut acc: BTreeMap<Gender, (usize, u64)> = BTreeMap::new();
    for o in analysis_obs.iter().filter(|o| o.item_id == item_id) {
        let e = acc.entry(o.gender).or_default();
        e.0 += 1;
        e.1 += u64::from(o.response);
    }
    acc.into_iter()
        .map(|(g, (n, sum))| {
            (
                g,
                GroupSummary {
                    n,
                    mean: sum as f64 / n as f64,
                },
            )
        })
        .collect()
}

fn item_report(item_id: ItemId, analysis: &Analysis, has_reference: bool) -> ItemReport {
    let mut notes = Vec::new();
    let (welch, mann_whitney) = match gender_contrast(&analysis.simulated, item_id) {
        Ok((w, u)) => (Some(w), Some(u)),
        Err(e) => {
            notes.push(format!("gender contrast: {e}"));
            (None, None)
        }
    };
    let mut volatility =
        |cells: &[CellStats], source: Source| match decade_volatility(cells, source, item_id) {
            Ok(v) => Some(v),
            Err(e) => {
                notes.push(format!("{source} volatility: {e}"));
                None
            }
        };
    let volatility_simulated = volatility(&analysis.sim_cells, Source::Simulated);
    let (volatility_real, cell_gap) = if has_reference {
        let v = volatility(&analysis.real_cells, Source::Real);
        let gap = match cell_gap_test(&analysis.sim_cells, &analysis.real_cells, item_id) {
            Ok(g) => {
                for (d, gender, source) in &g.unmatched {
                    notes.push(format!("cell {d}/{gender} has {source} data only"));
                }
                Some(g)
            }
            Err(e) => {
                notes.push(format!("cell gap: {e}"));
                None
            }
        };
        (v, gap)
    } else {
        (None, None)
    };
    ItemReport {
        item_id,
        statement: item(item_id).statement.to_string(),
        simulated: groups(&analysis.simulated, item_id),
        real: groups(&analysis.real, item_id),
        welch,
        mann_whitney,
        cell_gap,
        volatility_simulated,
        volatility_real,
        notes,
    }
}

pub fn build_report(
    config: &RunConfig,
    sample: &SampleRecord,
    roster: &Roster,
    reflect: &ReflectSummary,
    survey: &SurveySummary,
    analysis: &Analysis,
) -> RunReport {
    let has_reference = config.reference_csv.is_some();
    let mut missing_by_item: BTreeMap<ItemId, usize> =
        config.items.iter().map(|i| (*i, 0)).collect();
    for m in &survey.missing {
        *missing_by_item.entry(m.item_id).or_insert(0) += 1;
    }
    RunReport {
        run_id: config.run_id.clone(),
        seed: config.seed,
        producer: config.producer(),
        reference: has_reference,
        corpus: corpus_summary(sample, roster),
        items: config
            .items
            .iter()
            .map(|i| item_report(*i, analysis, has_reference))
            .collect(),
        missing: MissingSummary {
            reflection_failures: reflect.failed.clone(),
            survey_failures: survey.failed.clone(),
            agents_without_reflections: survey.skipped.clone(),
            missing_items: survey.missing.clone(),
            missing_by_item,
            reference_rows_out_of_window: analysis.real_out_of_window,
        },
        caveats: CAVEATS.iter().map(|c| c.to_string()).collect(),
    }
}

fn fmt_test(t: &TestResult) -> String {
    let df = t.df.map(|d| format!(", df = {d:.2}")).unwrap_or_default();
    format!(
        "{} ({} vs {}): statistic = {:.4}{df}, p = {:.3e}",
        t.test_name, t.group_order.0, t.group_order.1, t.statistic, t.p_two_sided
    )
}

fn fmt_groups(g: &BTreeMap<Gender, GroupSummary>) -> String {
    if g.is_empty() {
        return "none".into();
    }
    g.iter()
        .map(|(k, s)| format!("{k} n={} mean={:.3}", s.n, s.mean))
        .collect::<Vec<_>>()
        .join(", ")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into())
}

pub fn render_report_text(r: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Run {} (seed {}, {})", r.run_id, r.seed, r.producer);
    let _ = writeln!(s);
    let c = &r.corpus;
    let _ = writeln!(s, "Corpus");
    let _ = writeln!(s, "  films: {}", c.films);
    let by_gender: Vec<String> = c
        .agents_by_gender
        .iter()
        .map(|(g, n)| format!("{g} {n}"))
        .collect();
    let _ = writeln!(s, "  agents: {} ({})", c.agents, by_gender.join(", "));
    let by_decade: Vec<String> = c
        .agents_by_decade
        .iter()
        .map(|(d, n)| format!("{d} {n}"))
        .collect();
    let _ = writeln!(s, "  agents by decade: {}", by_decade.join(", "));
    let _ = writeln!(
        s,
        "  mean dialogue lines per agent: {:.2}",
        c.mean_dialogue_nodes
    );
    let _ = writeln!(
        s,
        "  mean action mentions per agent: {:.2}",
        c.mean_action_nodes
    );
    let votes = c
        .median_imdb_votes
        .map(|v| v.to_string())
        .unwrap_or_else(|| "n/a".into());
    let _ = writeln!(s, "  median IMDb votes: {votes}");
    for sf in &c.shortfalls {
        let _ = writeln!(
            s,
            "  shortfall: {} has {} of {} films",
            sf.decade, sf.available, sf.requested
        );
    }
    if !c.out_of_window_films.is_empty() {
        let _ = writeln!(
            s,
            "  outside study window: {}",
            c.out_of_window_films.join(", ")
        );
    }
    if !c.unparsed_films.is_empty() {
        let _ = writeln!(s, "  no parsed script: {}", c.unparsed_films.join(", "));
    }
    for e in &c.exclusions {
        let _ = writeln!(s, "  excluded {e}");
    }
    for it in &r.items {
        let _ = writeln!(s);
        let _ = writeln!(s, "Item {}: {}", it.item_id, it.statement);
        let _ = writeln!(s, "  simulated: {}", fmt_groups(&it.simulated));
        if r.reference {
            let _ = writeln!(s, "  real: {}", fmt_groups(&it.real));
        }
        if let Some(t) = &it.welch {
            let _ = writeln!(s, "  {}", fmt_test(t));
        }
        if let Some(t) = &it.mann_whitney {
            let _ = writeln!(s, "  {}", fmt_test(t));
        }
        if let Some(g) = &it.cell_gap {
            let _ = writeln!(
                s,
                "  cell gap (simulated - real): mean {:.4} over {} cells",
                g.delta_mean,
                g.cells.len()
            );
            if let Some(t) = &g.test {
                let _ = writeln!(s, "  {}", fmt_test(t));
            }
            if let Some(d) = &g.diagnostic {
                let _ = writeln!(s, "  paired t not computed: {d}");
            }
        }
        let _ = writeln!(
            s,
            "  decade volatility: simulated {}",
            fmt_opt(it.volatility_simulated)
        );
        if r.reference {
            let _ = writeln!(
                s,
                "  decade volatility: real {}",
                fmt_opt(it.volatility_real)
            );
        }
        for n in &it.notes {
            let _ = writeln!(s, "  note: {n}");
        }
    }
    let m = &r.missing;
    let _ = writeln!(s);
    let _ = writeln!(s, "Missing data");
    for (item_id, n) in &m.missing_by_item {
        let _ = writeln!(s, "  {item_id}: {n} unreadable answers excluded");
    }
    let _ = writeln!(s, "  reflection failures: {}", m.reflection_failures.len());
    for f in &m.reflection_failures {
        let _ = writeln!(s, "    {f}");
    }
    let _ = writeln!(s, "  survey failures: {}", m.survey_failures.len());
    for f in &m.survey_failures {
        let _ = writeln!(s, "    {f}");
    }
    for f in &m.agents_without_reflections {
        let _ = writeln!(s, "    skipped {f}");
    }
    if r.reference {
        let _ = writeln!(
            s,
            "  reference rows outside study window: {}",
            m.reference_rows_out_of_window
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "Interpretation caveats");
    for c in &r.caveats {
        let _ = writeln!(s, "  - {c}");
    }
    s
}
