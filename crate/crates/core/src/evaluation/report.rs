use serde::{Deserialize, Serialize};

use super::{EvalReport, StratumScore};
use crate::docmodel::Modality;

/// One method's scores by column category, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    #[serde(rename = "Method")]
    pub method: String,
    #[serde(rename = "Numeric Corr.")]
    pub numeric_corr: Option<f64>,
    #[serde(rename = "Numeric Comp.")]
    pub numeric_comp: Option<f64>,
    #[serde(rename = "Numeric Ovrl.")]
    pub numeric_ovrl: Option<f64>,
    #[serde(rename = "Free-Text Corr.")]
    pub free_text_corr: Option<f64>,
    #[serde(rename = "Free-Text Comp.")]
    pub free_text_comp: Option<f64>,
    #[serde(rename = "Free-Text Ovrl.")]
    pub free_text_ovrl: Option<f64>,
    #[serde(rename = "All Corr.")]
    pub all_corr: Option<f64>,
    #[serde(rename = "All Comp.")]
    pub all_comp: Option<f64>,
    #[serde(rename = "All Ovrl.")]
    pub all_ovrl: Option<f64>,
}

/// One method's overall score by gold evidence modality, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig3Row {
    #[serde(rename = "Method")]
    pub method: String,
    #[serde(rename = "Text")]
    pub text: Option<f64>,
    #[serde(rename = "Table")]
    pub table: Option<f64>,
    #[serde(rename = "Figure")]
    pub figure: Option<f64>,
}

fn round1(v: Option<f64>) -> Option<f64> {
    v.map(|x| (x * 10.0).round() / 10.0)
}

pub fn table1_rows(reports: &[EvalReport]) -> Vec<Table1Row> {
    reports
        .iter()
        .map(|r| {
            let s = |s: &StratumScore| (round1(s.correctness), round1(s.completeness), round1(s.overall));
            let (nc, nm, no) = s(&r.numerical);
            let (fc, fm, fo) = s(&r.free_text);
            let (ac, am, ao) = s(&r.all);
            Table1Row {
                method: r.label.clone(),
                numeric_corr: nc,
                numeric_comp: nm,
                numeric_ovrl: no,
                free_text_corr: fc,
                free_text_comp: fm,
                free_text_ovrl: fo,
                all_corr: ac,
                all_comp: am,
                all_ovrl: ao,
            }
        })
        .collect()
}

pub fn fig3_rows(reports: &[EvalReport]) -> Vec<Fig3Row> {
    reports
        .iter()
        .map(|r| {
            let ovrl = |m: Modality| round1(r.by_modality.get(&m).and_then(|s| s.overall));
            Fig3Row {
                method: r.label.clone(),
                text: ovrl(Modality::Text),
                table: ovrl(Modality::Table),
                figure: ovrl(Modality::Figure),
            }
        })
        .collect()
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn table1_csv(reports: &[EvalReport]) -> Result<String, csv::Error> {
    to_csv(&table1_rows(reports))
}

pub fn fig3_csv(reports: &[EvalReport]) -> Result<String, csv::Error> {
    to_csv(&fig3_rows(reports))
}
