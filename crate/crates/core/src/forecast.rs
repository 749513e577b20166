//! Aggregate market inertia from fitted weights and planned positions,
//! evaluation against published values, and low-inertia flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::domain::{PlantId, SettlementPeriod};
use crate::estimator::PlantWeights;
use crate::ingest::IndicatorMatrix;

/// System operator's minimum-inertia policy level.
pub const DEFAULT_TRIGGER_GVAS: f64 = 140.0;

#[derive(Debug, Error, PartialEq)]
pub enum ForecastError {
    #[error("demand periods do not match indicator periods")]
    Alignment,
    #[error("no periods with actual values to evaluate")]
    EmptyEvaluation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastPoint {
    pub period: SettlementPeriod,
    pub predicted: f64,
    pub actual: Option<f64>,
    pub below_trigger: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSeries {
    pub points: Vec<ForecastPoint>,
    pub trigger: f64,
    /// Indicator plants absent from the model; predicted as zero.
    pub missing_plants: Vec<PlantId>,
}

impl ForecastSeries {
    /// Fills `actual` wherever the map has a value for the period.
    pub fn attach_actuals(&mut self, actuals: &BTreeMap<SettlementPeriod, f64>) {
        for p in &mut self.points {
            p.actual = actuals.get(&p.period).copied();
        }
    }

    pub fn has_actuals(&self) -> bool {
        self.points.iter().any(|p| p.actual.is_some())
    }

    /// `date,period,predicted_gvas,actual_gvas,below_trigger`; empty actual when unknown.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,period,predicted_gvas,actual_gvas,below_trigger\n");
        for p in &self.points {
            let actual = p.actual.map(|a| a.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                p.period.date(),
                p.period.period(),
                p.predicted,
                actual,
                p.below_trigger
            );
        }
        out
    }
}

/// `w_dem·demand + Σ_j w_j·on_j` for every indicator period.
pub fn predict(
    model: &impl PlantWeights,
    ind: &IndicatorMatrix,
    demand: &[(SettlementPeriod, f64)],
    trigger: f64,
) -> Result<ForecastSeries, ForecastError> {
    if demand.len() != ind.n_periods() || demand.iter().zip(&ind.periods).any(|((a, _), b)| a != b) {
        return Err(ForecastError::Alignment);
    }
    let mut missing = Vec::new();
    let weights: Vec<f64> = ind
        .plants
        .iter()
        .map(|id| {
            model.weight(id).unwrap_or_else(|| {
                missing.push(id.clone());
                0.0
            })
        })
        .collect();
    let w_dem = model.w_dem();
    let points = demand
        .iter()
        .enumerate()
        .map(|(t, &(period, d))| {
            let predicted = ind.market_row(t).iter().fold(w_dem * d, |acc, &j| acc + weights[j as usize]);
            ForecastPoint { period, predicted, actual: None, below_trigger: predicted < trigger }
        })
        .collect();
    Ok(ForecastSeries { points, trigger, missing_plants: missing })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorstPeriod {
    pub date: chrono::NaiveDate,
    pub period: u32,
    pub error_gvas: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub mae_gvas: f64,
    /// Fraction, not percent.
    pub mape: f64,
    pub n_periods: usize,
    /// Periods left out of the MAPE because the actual value was zero.
    pub mape_skipped: usize,
    pub worst_period: WorstPeriod,
}

pub fn evaluate(f: &ForecastSeries) -> Result<EvalReport, ForecastError> {
    let pairs: Vec<(SettlementPeriod, f64, f64)> =
        f.points.iter().filter_map(|p| p.actual.map(|a| (p.period, p.predicted, a))).collect();
    if pairs.is_empty() {
        return Err(ForecastError::EmptyEvaluation);
    }
    let n = pairs.len();
    let mae = pairs.iter().map(|(_, p, a)| (p - a).abs()).sum::<f64>() / n as f64;
    let pct: Vec<f64> = pairs.iter().filter(|(_, _, a)| *a > 0.0).map(|(_, p, a)| (p - a).abs() / a).collect();
    let mape = if pct.is_empty() { 0.0 } else { pct.iter().sum::<f64>() / pct.len() as f64 };
    let worst = pairs
        .iter()
        .fold(None::<(SettlementPeriod, f64)>, |acc, &(period, p, a)| {
            let e = p - a;
            match acc {
                Some((_, best)) if best.abs() >= e.abs() => acc,
                _ => Some((period, e)),
            }
        })
        .expect("non-empty");
    Ok(EvalReport {
        mae_gvas: mae,
        mape,
        n_periods: n,
        mape_skipped: n - pct.len(),
        worst_period: WorstPeriod { date: worst.0.date(), period: worst.0.period(), error_gvas: worst.1 },
    })
}

/// Periods predicted strictly below `trigger`, in time order.
pub fn detect_low(f: &ForecastSeries, trigger: f64) -> Vec<SettlementPeriod> {
    let mut out: Vec<SettlementPeriod> = f.points.iter().filter(|p| p.predicted < trigger).map(|p| p.period).collect();
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    struct Weights(f64, Vec<(PlantId, f64)>);

    impl PlantWeights for Weights {
        fn w_dem(&self) -> f64 {
            self.0
        }
        fn weight(&self, id: &PlantId) -> Option<f64> {
            self.1.iter().find(|(p, _)| p == id).map(|(_, w)| *w)
        }
    }

    fn sp(p: u32) -> SettlementPeriod {
        SettlementPeriod::new(NaiveDate::from_ymd_opt(2022, 1, 9).unwrap(), p).unwrap()
    }

    fn pid(s: &str) -> PlantId {
        PlantId::new(s).unwrap()
    }

    fn one_plant(on: &[bool]) -> IndicatorMatrix {
        let periods: Vec<_> = (1..=on.len() as u32).map(sp).collect();
        let market = on.iter().map(|&b| if b { vec![0] } else { vec![] }).collect();
        IndicatorMatrix::from_rows(periods, vec![pid("T_CARR-1")], market, vec![vec![]; on.len()]).unwrap()
    }

    fn series_of(points: &[(f64, Option<f64>)]) -> ForecastSeries {
        ForecastSeries {
            points: points
                .iter()
                .enumerate()
                .map(|(i, &(p, a))| ForecastPoint {
                    period: sp(i as u32 + 1),
                    predicted: p,
                    actual: a,
                    below_trigger: p < 140.0,
                })
                .collect(),
            trigger: 140.0,
            missing_plants: vec![],
        }
    }

    #[test]
    fn predict_examples() {
        let ind = one_plant(&[false, true]);
        let m = Weights(0.0, vec![(pid("T_CARR-1"), 3.4)]);
        let f = predict(&m, &ind, &[(sp(1), 0.0), (sp(2), 0.0)], 140.0).unwrap();
        assert_eq!(f.points[0].predicted, 0.0);
        assert_eq!(f.points[1].predicted, 3.4);
        assert!(f.points.iter().all(|p| p.below_trigger));

        let doubled = Weights(0.0, vec![(pid("T_CARR-1"), 6.8)]);
        let g = predict(&doubled, &ind, &[(sp(1), 0.0), (sp(2), 0.0)], 140.0).unwrap();
        assert_eq!(g.points[1].predicted, 2.0 * f.points[1].predicted);

        assert_eq!(predict(&m, &ind, &[(sp(1), 0.0)], 140.0), Err(ForecastError::Alignment));
        let missing = predict(&Weights(0.5, vec![]), &ind, &[(sp(1), 10.0), (sp(2), 10.0)], 140.0).unwrap();
        assert_eq!(missing.missing_plants, vec![pid("T_CARR-1")]);
        assert_eq!(missing.points[1].predicted, 5.0);
    }

    #[test]
    fn evaluate_examples() {
        let exact = series_of(&[(200.0, Some(200.0)), (190.0, Some(190.0))]);
        let r = evaluate(&exact).unwrap();
        assert_eq!((r.mae_gvas, r.mape), (0.0, 0.0));

        let shifted = series_of(&[(203.5, Some(200.0)), (203.5, Some(200.0))]);
        let r = evaluate(&shifted).unwrap();
        assert!((r.mae_gvas - 3.5).abs() < 1e-12);
        assert!((r.mape - 0.0175).abs() < 1e-12);

        let single = series_of(&[(132.0, Some(108.0))]);
        let r = evaluate(&single).unwrap();
        assert_eq!(r.mae_gvas, 24.0);
        assert_eq!(r.worst_period.error_gvas, 24.0);

        let zero_actual = series_of(&[(1.0, Some(0.0)), (110.0, Some(100.0))]);
        let r = evaluate(&zero_actual).unwrap();
        assert_eq!(r.mape_skipped, 1);
        assert!((r.mape - 0.1).abs() < 1e-12);

        assert_eq!(evaluate(&series_of(&[(1.0, None)])), Err(ForecastError::EmptyEvaluation));
    }

    #[test]
    fn low_inertia_detection() {
        let f = series_of(&[(109.9, None), (141.4, None), (140.0, None), (139.999, None)]);
        assert_eq!(detect_low(&f, 140.0), vec![sp(1), sp(4)]);
        let flagged: Vec<_> = f.points.iter().filter(|p| p.below_trigger).map(|p| p.period).collect();
        assert_eq!(detect_low(&f, f.trigger), flagged);
        assert!(detect_low(&series_of(&[(150.0, None)]), 140.0).is_empty());
    }

    #[test]
    fn csv_export() {
        let f = series_of(&[(109.9, Some(108.0)), (141.4, None)]);
        assert_eq!(
            f.to_csv(),
            "date,period,predicted_gvas,actual_gvas,below_trigger\n2022-01-09,1,109.9,108,true\n2022-01-09,2,141.4,,false\n"
        );
    }
}
