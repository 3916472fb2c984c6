use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    mann_whitney_u, paired_t, welch_t, PairedOutcome, Sample, StatsError, TestResult,
    IDENTICAL_DIFFERENCES,
};
use crate::corpus::{decade_of, Decade, Gender};
use crate::survey::{ItemId, ResponseRow, SurveyResponse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Simulated,
    Real,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Simulated => "simulated",
            Source::Real => "real",
        })
    }
}

/// One response reduced to what aggregation needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub item_id: ItemId,
    pub decade: Decade,
    pub gender: Gender,
    pub response: u8,
}

impl From<&SurveyResponse> for Observation {
    fn from(r: &SurveyResponse) -> Self {
        Observation {
            item_id: r.item_id,
            decade: r.decade,
            gender: r.gender,
            response: r.response,
        }
    }
}

impl From<&ResponseRow> for Observation {
    fn from(r: &ResponseRow) -> Self {
        Observation {
            item_id: r.item_id,
            decade: r.decade,
            gender: r.gender,
            response: r.response,
        }
    }
}

pub type CellKey = (ItemId, Decade, Gender);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub item_id: ItemId,
    pub decade: Decade,
    pub gender: Gender,
    pub source: Source,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single response.
    pub sd: f64,
}

/// Mean and sd per (item, decade, gender), ordered by that key.
pub fn aggregate_cells(observations: &[Observation], source: Source) -> Vec<CellStats> {
    // integer sums keep the result independent of row order
    let mut sums: BTreeMap<CellKey, (u64, u64, u64)> = BTreeMap::new();
    for o in observations {
        let e = sums.entry((o.item_id, o.decade, o.gender)).or_default();
        let v = u64::from(o.response);
        e.0 += 1;
        e.1 += v;
        e.2 += v * v;
    }
    sums.into_iter()
        .map(|((item_id, decade, gender), (n, sum, sum_sq))| {
            let sd = if n < 2 {
                0.0
            } else {
                let num = (n * sum_sq - sum * sum) as f64;
                (num / (n * (n - 1)) as f64).sqrt()
            };
            CellStats {
                item_id,
                decade,
                gender,
                source,
                n: n as usize,
                mean: sum as f64 / n as f64,
                sd,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDiff {
    pub decade: Decade,
    pub gender: Gender,
    pub simulated: f64,
    pub real: f64,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellGap {
    pub item_id: ItemId,
    /// Mean over matched cells of simulated minus real.
    pub delta_mean: f64,
    pub test: Option<TestResult>,
    pub diagnostic: Option<String>,
    pub cells: Vec<CellDiff>,
    /// Cells present in only one source, tagged with that source.
    pub unmatched: Vec<(Decade, Gender, Source)>,
}

/// Simulated-minus-real gap for one item, tested with a paired t over the
/// matched (gender, decade) cell means.
pub fn cell_gap_test(
    sim: &[CellStats],
    real: &[CellStats],
    item_id: ItemId,
) -> Result<CellGap, StatsError> {
    let pick = |cells: &[CellStats]| -> BTreeMap<(Decade, Gender), f64> {
        cells
            .iter()
            .filter(|c| c.item_id == item_id)
            .map(|c| ((c.decade, c.gender), c.mean))
            .collect()
    };
    let (s, r) = (pick(sim), pick(real));
    let mut cells = Vec::new();
    let mut unmatched = Vec::new();
    let keys: BTreeSet<_> = s.keys().chain(r.keys()).copied().collect();
    for key in keys {
        match (s.get(&key), r.get(&key)) {
            (Some(&simulated), Some(&real)) => cells.push(CellDiff {
                decade: key.0,
                gender: key.1,
                simulated,
                real,
                difference: simulated - real,
            }),
            (Some(_), None) => unmatched.push((key.0, key.1, Source::Simulated)),
            (None, Some(_)) => unmatched.push((key.0, key.1, Source::Real)),
            (None, None) => unreachable!(),
        }
    }
    if cells.len() < 2 {
        return Err(StatsError::InsufficientCells {
            item: item_id.to_string(),
            found: cells.len(),
        });
    }
    let diffs: Vec<f64> = cells.iter().map(|c| c.difference).collect();
    let delta_mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let (test, diagnostic) = match paired_t(&diffs, ("simulated", "real"))? {
        PairedOutcome::Test(t) => (Some(t), None),
        PairedOutcome::Identical { .. } => (None, Some(IDENTICAL_DIFFERENCES.to_string())),
    };
    Ok(CellGap {
        item_id,
        delta_mean,
        test,
        diagnostic,
        cells,
        unmatched,
    })
}

/// Welch and Mann-Whitney comparisons of male against female responses.
/// Positive statistics mean the male mean is higher.
pub fn gender_contrast(
    observations: &[Observation],
    item_id: ItemId,
) -> Result<(TestResult, TestResult), StatsError> {
    let group = |g: Gender| {
        Sample::new(
            g.label(),
            observations
                .iter()
                .filter(|o| o.item_id == item_id && o.gender == g)
                .map(|o| f64::from(o.response)),
        )
    };
    let (m, f) = (group(Gender::M), group(Gender::F));
    Ok((welch_t(&m, &f)?, mann_whitney_u(&m, &f)?))
}

/// Mean over genders of the standard deviation of decade means.
pub fn decade_volatility(
    cells: &[CellStats],
    source: Source,
    item_id: ItemId,
) -> Result<f64, StatsError> {
    let mut by_gender: BTreeMap<Gender, Vec<f64>> = BTreeMap::new();
    for c in cells
        .iter()
        .filter(|c| c.source == source && c.item_id == item_id)
    {
        by_gender.entry(c.gender).or_default().push(c.mean);
    }
    let fewest = by_gender.values().map(Vec::len).min().unwrap_or(0);
    if fewest < 2 {
        return Err(StatsError::InsufficientCells {
            item: item_id.to_string(),
            found: fewest,
        });
    }
    let sds: Vec<f64> = by_gender
        .values()
        .map(|m| super::variance(m).sqrt())
        .collect();
    Ok(sds.iter().sum::<f64>() / sds.len() as f64)
}

#[derive(Debug, Deserialize)]
struct ReferenceRow {
    year: i32,
    gender: String,
    item_id: String,
    response: u8,
}

#[derive(Debug, Clone, Default)]
pub struct ReferenceData {
    pub observations: Vec<Observation>,
    /// Rows whose survey year falls outside the study window.
    pub out_of_window: usize,
}

/// Reads a real-survey CSV with header `year,gender,item_id,response`.
pub fn load_reference_csv(path: &Path) -> Result<ReferenceData, StatsError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut data = ReferenceData::default();
    for (i, row) in reader.deserialize::<ReferenceRow>().enumerate() {
        let row_no = i + 2;
        let row = row?;
        let bad = |message: String| StatsError::BadRow {
            row: row_no,
            message,
        };
        let gender: Gender = row.gender.parse().map_err(bad)?;
        let item_id: ItemId = row.item_id.parse().map_err(bad)?;
        if !(1..=5).contains(&row.response) {
            return Err(bad(format!("response {} outside 1..5", row.response)));
        }
        match decade_of(row.year) {
            Ok(decade) => data.observations.push(Observation {
                item_id,
                decade,
                gender,
                response: row.response,
            }),
            Err(_) => data.out_of_window += 1,
        }
    }
    if data.observations.is_empty() {
        return Err(StatsError::Empty);
    }
    Ok(data)
}
