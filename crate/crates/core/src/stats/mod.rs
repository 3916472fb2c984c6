//! Group comparisons for ordinal survey responses.

mod cells;
pub mod special;

use serde::{Deserialize, Serialize};

pub use cells::{
    aggregate_cells, cell_gap_test, decade_volatility, gender_contrast, load_reference_csv,
    CellDiff, CellGap, CellKey, CellStats, Observation, ReferenceData, Source,
};

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("sample `{label}` has {n} values, at least 2 needed")]
    DegenerateSample { label: String, n: usize },
    #[error("sample `{0}` contains a non-finite value")]
    NonFinite(String),
    #[error("both samples have zero variance")]
    ZeroVariance,
    #[error("item {item}: {found} usable cells, at least 2 needed")]
    InsufficientCells { item: String, found: usize },
    #[error("no observations")]
    Empty,
    #[error("reference data row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error("reference data: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub label: String,
    pub values: Vec<f64>,
}

impl Sample {
    pub fn new(label: impl Into<String>, values: impl IntoIterator<Item = f64>) -> Self {
        Sample {
            label: label.into(),
            values: values.into_iter().collect(),
        }
    }

    fn check(&self) -> Result<(), StatsError> {
        if self.values.len() < 2 {
            return Err(StatsError::DegenerateSample {
                label: self.label.clone(),
                n: self.values.len(),
            });
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite(self.label.clone()));
        }
        Ok(())
    }

    fn n(&self) -> f64 {
        self.values.len() as f64
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance (n - 1 denominator), two-pass.
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() as f64 - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test_name: String,
    pub statistic: f64,
    pub df: Option<f64>,
    pub p_two_sided: f64,
    pub group_order: (String, String),
}

/// Welch's unequal-variance t-test of `a` against `b`.
pub fn welch_t(a: &Sample, b: &Sample) -> Result<TestResult, StatsError> {
    a.check()?;
    b.check()?;
    let (va, vb) = (variance(&a.values), variance(&b.values));
    if va == 0.0 && vb == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let (sa, sb) = (va / a.n(), vb / b.n());
    let se2 = sa + sb;
    let statistic = (mean(&a.values) - mean(&b.values)) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.n() - 1.0) + sb * sb / (b.n() - 1.0));
    Ok(TestResult {
        test_name: "welch_t".into(),
        statistic,
        df: Some(df),
        p_two_sided: special::student_t_two_sided(statistic, df),
        group_order: (a.label.clone(), b.label.clone()),
    })
}

/// Pooled-variance Student t, used to cross-check [`welch_t`].
pub fn student_t(a: &Sample, b: &Sample) -> Result<TestResult, StatsError> {
    a.check()?;
    b.check()?;
    let df = a.n() + b.n() - 2.0;
    let pooled = ((a.n() - 1.0) * variance(&a.values) + (b.n() - 1.0) * variance(&b.values)) / df;
    if pooled == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let statistic =
        (mean(&a.values) - mean(&b.values)) / (pooled * (1.0 / a.n() + 1.0 / b.n())).sqrt();
    Ok(TestResult {
        test_name: "student_t".into(),
        statistic,
        df: Some(df),
        p_two_sided: special::student_t_two_sided(statistic, df),
        group_order: (a.label.clone(), b.label.clone()),
    })
}

/// Average ranks (1-based) of the pooled values and the tie sizes.
fn average_ranks(pooled: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        if j > i {
            ties.push(j - i + 1);
        }
        i = j + 1;
    }
    (ranks, ties)
}

/// Mann-Whitney U for group `a`, normal approximation with tie-corrected
/// variance and continuity correction.
pub fn mann_whitney_u(a: &Sample, b: &Sample) -> Result<TestResult, StatsError> {
    a.check()?;
    b.check()?;
    let (na, nb) = (a.n(), b.n());
    let pooled: Vec<f64> = a.values.iter().chain(&b.values).copied().collect();
    let (ranks, ties) = average_ranks(&pooled);
    let rank_sum_a: f64 = ranks[..a.values.len()].iter().sum();
    let u = rank_sum_a - na * (na + 1.0) / 2.0;
    let n = na + nb;
    let tie_term: f64 = ties.iter().map(|&t| (t as f64).powi(3) - t as f64).sum();
    let var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let mu = na * nb / 2.0;
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
        (2.0 * special::normal_sf(z)).min(1.0)
    };
    Ok(TestResult {
        test_name: "mann_whitney_u".into(),
        statistic: u,
        df: None,
        p_two_sided: p,
        group_order: (a.label.clone(), b.label.clone()),
    })
}

/// Outcome of a one-sample t-test on paired differences.
#[derive(Debug, Clone, PartialEq)]
pub enum PairedOutcome {
    Test(TestResult),
    /// All differences are equal and nonzero, so the test is undefined.
    Identical {
        difference: f64,
    },
}

pub const IDENTICAL_DIFFERENCES: &str = "all differences identical";
const IDENTICAL_TOLERANCE: f64 = 1e-12;

pub fn paired_t(differences: &[f64], labels: (&str, &str)) -> Result<PairedOutcome, StatsError> {
    let s = Sample::new("differences", differences.iter().copied());
    s.check()?;
    let m = mean(differences);
    let var = variance(differences);
    let group_order = (labels.0.to_string(), labels.1.to_string());
    let df = s.n() - 1.0;
    // cell means carry rounding error, so "identical" allows a relative slack
    let (lo, hi) = differences
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| {
            (lo.min(d), hi.max(d))
        });
    let scale = differences.iter().fold(1.0_f64, |acc, d| acc.max(d.abs()));
    if hi - lo <= IDENTICAL_TOLERANCE * scale {
        if m.abs() <= IDENTICAL_TOLERANCE * scale {
            return Ok(PairedOutcome::Test(TestResult {
                test_name: "paired_t".into(),
                statistic: 0.0,
                df: Some(df),
                p_two_sided: 1.0,
                group_order,
            }));
        }
        return Ok(PairedOutcome::Identical { difference: m });
    }
    let statistic = m / (var / s.n()).sqrt();
    Ok(PairedOutcome::Test(TestResult {
        test_name: "paired_t".into(),
        statistic,
        df: Some(df),
        p_two_sided: special::student_t_two_sided(statistic, df),
        group_order,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    fn s(label: &str, v: &[f64]) -> Sample {
        Sample::new(label, v.iter().copied())
    }

    #[test]
    fn welch_hand_values() {
        // means 2.5 and 6.75, variances 5/3 and 35/12
        let r = welch_t(&s("a", &[1., 2., 3., 4.]), &s("b", &[5., 6., 7., 9.])).unwrap();
        let se2: f64 = 5.0 / 12.0 + 35.0 / 48.0;
        assert!((r.statistic - (-4.25 / se2.sqrt())).abs() < 1e-12);
        assert!((r.statistic + 3.970).abs() < 1e-3);
        assert!((r.df.unwrap() - 5.585).abs() < 1e-3);
        let oracle = 2.0
            * StudentsT::new(0.0, 1.0, r.df.unwrap())
                .unwrap()
                .cdf(r.statistic);
        assert!((r.p_two_sided - oracle).abs() < 1e-10);
    }

    #[test]
    fn welch_edge_cases() {
        let r = welch_t(&s("a", &[1., 2., 4.]), &s("b", &[1., 2., 4.])).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_two_sided - 1.0).abs() < 1e-12);
        assert!(matches!(
            welch_t(&s("a", &[2., 2., 2.]), &s("b", &[2., 2., 2.])),
            Err(StatsError::ZeroVariance)
        ));
        assert!(matches!(
            welch_t(&s("a", &[1.]), &s("b", &[1., 2.])),
            Err(StatsError::DegenerateSample { n: 1, .. })
        ));
        assert!(matches!(
            welch_t(&s("a", &[1., f64::NAN]), &s("b", &[1., 2.])),
            Err(StatsError::NonFinite(_))
        ));
    }

    #[test]
    fn mann_whitney_small_cases() {
        let r = mann_whitney_u(&s("a", &[1., 2.]), &s("b", &[3., 4.])).unwrap();
        assert_eq!(r.statistic, 0.0);
        let r = mann_whitney_u(&s("a", &[1., 2., 3.]), &s("b", &[1., 2., 3.])).unwrap();
        assert_eq!(r.statistic, 4.5);
        assert_eq!(r.p_two_sided, 1.0);
        let r = mann_whitney_u(&s("a", &[1., 1., 2., 3.]), &s("b", &[2., 3., 3., 4.])).unwrap();
        // one a>b pair (3>2); ties (2,2) and (3,3) twice count half each
        assert_eq!(r.statistic, 2.5);
    }

    #[test]
    fn mann_whitney_constant_pool() {
        let r = mann_whitney_u(&s("a", &[3., 3.]), &s("b", &[3., 3., 3.])).unwrap();
        assert_eq!(r.statistic, 3.0);
        assert_eq!(r.p_two_sided, 1.0);
    }

    #[test]
    fn paired_cases() {
        assert_eq!(
            paired_t(&[-1., -1., -1., -1.], ("sim", "real")).unwrap(),
            PairedOutcome::Identical { difference: -1.0 }
        );
        match paired_t(&[0., 0., 0., 0.], ("sim", "real")).unwrap() {
            PairedOutcome::Test(t) => {
                assert_eq!(t.statistic, 0.0);
                assert_eq!(t.p_two_sided, 1.0);
            }
            other => panic!("{other:?}"),
        }
        // 4/3 - 7/3 and 7/6 - 13/6 miss -1 by one ulp
        let near = [4.0 / 3.0 - 7.0 / 3.0, -1.0, 7.0 / 6.0 - 13.0 / 6.0];
        assert!(near[0] != near[1] && near[1] != near[2]);
        assert!(matches!(
            paired_t(&near, ("sim", "real")).unwrap(),
            PairedOutcome::Identical { .. }
        ));
        // mean -0.8, sum of squares 0.56, variance 0.112
        let d = [-0.5, -1.0, -0.7, -1.3, -0.9, -0.4];
        let m: f64 = -4.8 / 6.0;
        let ss: f64 = d.iter().map(|x| (x - m).powi(2)).sum();
        let expected = m / (ss / 5.0 / 6.0).sqrt();
        match paired_t(&d, ("sim", "real")).unwrap() {
            PairedOutcome::Test(t) => {
                assert!((t.statistic - expected).abs() < 1e-12);
                assert!((t.statistic + 5.855).abs() < 1e-3);
                assert_eq!(t.df, Some(5.0));
            }
            other => panic!("{other:?}"),
        }
    }

    fn values() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec((1u8..=5).prop_map(f64::from), 2..30)
    }

    proptest! {
        #[test]
        fn welch_antisymmetric(a in values(), b in values()) {
            let (sa, sb) = (s("a", &a), s("b", &b));
            match (welch_t(&sa, &sb), welch_t(&sb, &sa)) {
                (Ok(x), Ok(y)) => {
                    prop_assert!((x.statistic + y.statistic).abs() < 1e-12);
                    prop_assert!((x.p_two_sided - y.p_two_sided).abs() < 1e-12);
                    prop_assert!((0.0..=1.0).contains(&x.p_two_sided));
                }
                (Err(StatsError::ZeroVariance), Err(StatsError::ZeroVariance)) => {}
                other => prop_assert!(false, "{:?}", other),
            }
        }

        #[test]
        fn welch_matches_pooled_when_balanced(base in proptest::collection::vec(-50.0f64..50.0, 2..20), shift in -10.0f64..10.0) {
            let b: Vec<f64> = base.iter().map(|v| v + shift).collect();
            let (sa, sb) = (s("a", &base), s("b", &b));
            if variance(&base) > 1e-9 {
                let w = welch_t(&sa, &sb).unwrap();
                let p = student_t(&sa, &sb).unwrap();
                prop_assert!((w.statistic - p.statistic).abs() < 1e-12 * (1.0 + p.statistic.abs()));
                prop_assert!((w.df.unwrap() - p.df.unwrap()).abs() < 1e-9);
            }
        }

        #[test]
        fn p_decreases_with_statistic(df in 1.0f64..200.0, t1 in 0.0f64..20.0, dt in 0.0f64..5.0) {
            let p1 = special::student_t_two_sided(t1, df);
            let p2 = special::student_t_two_sided(t1 + dt, df);
            prop_assert!(p2 <= p1 + 1e-15);
        }

        #[test]
        fn mann_whitney_u_range(a in values(), b in values()) {
            let r = mann_whitney_u(&s("a", &a), &s("b", &b)).unwrap();
            let r2 = mann_whitney_u(&s("b", &b), &s("a", &a)).unwrap();
            prop_assert!(r.statistic >= 0.0 && r.statistic <= (a.len() * b.len()) as f64);
            prop_assert!((r.statistic + r2.statistic - (a.len() * b.len()) as f64).abs() < 1e-9);
            prop_assert!((r.p_two_sided - r2.p_two_sided).abs() < 1e-12);
        }
    }
}
