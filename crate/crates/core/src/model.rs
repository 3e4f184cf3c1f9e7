//! Domain types shared by every stage: response classes, the therapeutic
//! window, raw patient records and the categorical code tables.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Day-7 INR response relative to the therapeutic range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ResponseClass {
    Under = 1,
    InRange = 2,
    Over = 3,
}

impl ResponseClass {
    pub const ALL: [ResponseClass; 3] = [Self::Under, Self::InRange, Self::Over];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Self::Under),
            2 => Some(Self::InRange),
            3 => Some(Self::Over),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Under => "Under",
            Self::InRange => "InRange",
            Self::Over => "Over",
        }
    }
}

impl fmt::Display for ResponseClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Target INR window. Both bounds count as in range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TherapeuticRange {
    low: f64,
    high: f64,
}

impl TherapeuticRange {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low.is_finite() && high.is_finite() && 0.0 < low && low < high) {
            return Err(Error::Domain(format!(
                "therapeutic range needs 0 < low < high, got {low}:{high}"
            )));
        }
        Ok(Self { low, high })
    }

    pub fn low(&self) -> f64 {
        self.low
    }

    pub fn high(&self) -> f64 {
        self.high
    }
}

impl Default for TherapeuticRange {
    fn default() -> Self {
        Self {
            low: 2.0,
            high: 3.0,
        }
    }
}

impl FromStr for TherapeuticRange {
    type Err = Error;

    /// Parses `LOW:HIGH`, e.g. `2:3`.
    fn from_str(s: &str) -> Result<Self> {
        let err = || Error::Parse {
            field: "range",
            value: s.to_string(),
        };
        let (low, high) = s.split_once(':').ok_or_else(err)?;
        let low: f64 = low.trim().parse().map_err(|_| err())?;
        let high: f64 = high.trim().parse().map_err(|_| err())?;
        Self::new(low, high)
    }
}

impl fmt::Display for TherapeuticRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.low, self.high)
    }
}

/// Classifies a day-7 INR against the therapeutic range.
pub fn categorize_inr(inr: f64, range: &TherapeuticRange) -> Result<ResponseClass> {
    if !(inr.is_finite() && inr > 0.0) {
        return Err(Error::Domain(format!("INR must be positive, got {inr}")));
    }
    Ok(if inr < range.low {
        ResponseClass::Under
    } else if inr <= range.high {
        ResponseClass::InRange
    } else {
        ResponseClass::Over
    })
}

/// Sum of the three loading doses, added in ascending order so the result
/// does not depend on argument order.
pub fn total_loading(d1: f64, d2: f64, d3: f64) -> f64 {
    let mut d = [d1, d2, d3];
    d.sort_by(f64::total_cmp);
    d[0] + d[1] + d[2]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
        }
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m" | "male" => Ok(Gender::Male),
            "f" | "female" => Ok(Gender::Female),
            _ => Err(Error::Parse {
                field: "sex",
                value: s.to_string(),
            }),
        }
    }
}

pub fn encode_gender(g: Gender) -> f64 {
    match g {
        Gender::Male => 1.0,
        Gender::Female => 0.0,
    }
}

pub fn decode_gender(code: f64) -> Option<Gender> {
    if code == 1.0 {
        Some(Gender::Male)
    } else if code == 0.0 {
        Some(Gender::Female)
    } else {
        None
    }
}

/// VKORC1 haplotype, coded GG=0, AA=1, AG=2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Vkorc1 {
    GG,
    AA,
    AG,
}

impl Vkorc1 {
    pub const ALL: [Vkorc1; 3] = [Vkorc1::GG, Vkorc1::AA, Vkorc1::AG];

    pub fn as_str(self) -> &'static str {
        match self {
            Vkorc1::GG => "GG",
            Vkorc1::AA => "AA",
            Vkorc1::AG => "AG",
        }
    }
}

impl FromStr for Vkorc1 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Vkorc1::ALL
            .into_iter()
            .find(|h| h.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Parse {
                field: "vkorc1",
                value: s.to_string(),
            })
    }
}

pub fn encode_vkorc1(h: Vkorc1) -> f64 {
    match h {
        Vkorc1::GG => 0.0,
        Vkorc1::AA => 1.0,
        Vkorc1::AG => 2.0,
    }
}

/// CYP2C9 genotype, coded 0..=5 in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cyp2c9 {
    #[serde(rename = "*1/*1")]
    Star1Star1,
    #[serde(rename = "*1/*2")]
    Star1Star2,
    #[serde(rename = "*1/*3")]
    Star1Star3,
    #[serde(rename = "*2/*2")]
    Star2Star2,
    #[serde(rename = "*2/*3")]
    Star2Star3,
    #[serde(rename = "*3/*3")]
    Star3Star3,
}

impl Cyp2c9 {
    pub const ALL: [Cyp2c9; 6] = [
        Cyp2c9::Star1Star1,
        Cyp2c9::Star1Star2,
        Cyp2c9::Star1Star3,
        Cyp2c9::Star2Star2,
        Cyp2c9::Star2Star3,
        Cyp2c9::Star3Star3,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Cyp2c9::Star1Star1 => "*1/*1",
            Cyp2c9::Star1Star2 => "*1/*2",
            Cyp2c9::Star1Star3 => "*1/*3",
            Cyp2c9::Star2Star2 => "*2/*2",
            Cyp2c9::Star2Star3 => "*2/*3",
            Cyp2c9::Star3Star3 => "*3/*3",
        }
    }
}

impl FromStr for Cyp2c9 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Cyp2c9::ALL
            .into_iter()
            .find(|g| g.as_str() == s.trim())
            .ok_or_else(|| Error::Parse {
                field: "cyp2c9",
                value: s.to_string(),
            })
    }
}

pub fn encode_cyp2c9(g: Cyp2c9) -> f64 {
    Cyp2c9::ALL.iter().position(|&x| x == g).unwrap() as f64
}

/// Accepts `0/1/yes/no` (case-insensitive).
pub fn parse_yes_no(field: &'static str, s: &str) -> Result<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "yes" | "y" | "true" => Ok(true),
        "0" | "no" | "n" | "false" => Ok(false),
        _ => Err(Error::Parse {
            field,
            value: s.to_string(),
        }),
    }
}

/// One patient as collected. `None` marks a missing cell.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub patient_id: String,
    pub age: Option<f64>,
    pub gender: Option<Gender>,
    pub weight: Option<f64>,
    pub height: Option<f64>,
    pub bsa: Option<f64>,
    pub bmi: Option<f64>,
    pub amiodarone: Option<bool>,
    pub vkorc1: Option<Vkorc1>,
    pub cyp2c9: Option<Cyp2c9>,
    pub dose_day1: Option<f64>,
    pub dose_day2: Option<f64>,
    pub dose_day3: Option<f64>,
    pub inr_baseline: Option<f64>,
    pub inr_day4: Option<f64>,
    pub inr_day5: Option<f64>,
    pub inr_day6: Option<f64>,
    pub inr_day7: Option<f64>,
    pub inr_day8: Option<f64>,
}

impl RawRecord {
    pub fn new(patient_id: impl Into<String>) -> Self {
        Self {
            patient_id: patient_id.into(),
            ..Self::default()
        }
    }

    /// Checks the value-level invariants: finite numbers, non-negative age
    /// and doses, positive INRs.
    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| {
            Err(Error::InvalidRecord {
                id: self.patient_id.clone(),
                message,
            })
        };
        let nonneg = [
            ("age", self.age),
            ("weight_kg", self.weight),
            ("height_m", self.height),
            ("bsa", self.bsa),
            ("bmi", self.bmi),
            ("dose1", self.dose_day1),
            ("dose2", self.dose_day2),
            ("dose3", self.dose_day3),
        ];
        for (name, value) in nonneg {
            if let Some(v) = value {
                if !v.is_finite() || v < 0.0 {
                    return fail(format!("{name} must be finite and >= 0, got {v}"));
                }
            }
        }
        let inrs = [
            ("inr_base", self.inr_baseline),
            ("inr_d4", self.inr_day4),
            ("inr_d5", self.inr_day5),
            ("inr_d6", self.inr_day6),
            ("inr_d7", self.inr_day7),
            ("inr_d8", self.inr_day8),
        ];
        for (name, value) in inrs {
            if let Some(v) = value {
                if !v.is_finite() || v <= 0.0 {
                    return fail(format!("{name} must be finite and > 0, got {v}"));
                }
            }
        }
        Ok(())
    }

    /// Value of one model covariate, `None` when missing. `TotalLoading`
    /// sums the known doses and is missing only when all three are.
    pub fn covariate(&self, column: Column) -> Option<f64> {
        match column {
            Column::Age => self.age,
            Column::Sex => self.gender.map(encode_gender),
            Column::Weight => self.weight,
            Column::Height => self.height,
            Column::Bsa => self.bsa,
            Column::Bmi => self.bmi,
            Column::Amiodarone => self.amiodarone.map(|a| if a { 1.0 } else { 0.0 }),
            Column::Vkorc1 => self.vkorc1.map(encode_vkorc1),
            Column::Cyp2c9 => self.cyp2c9.map(encode_cyp2c9),
            Column::Dose1 => self.dose_day1,
            Column::Dose2 => self.dose_day2,
            Column::Dose3 => self.dose_day3,
            Column::InrDay4 => self.inr_day4,
            Column::InrDay5 => self.inr_day5,
            Column::InrDay6 => self.inr_day6,
            Column::InrBaseline => self.inr_baseline,
            Column::TotalLoading => {
                let doses = [self.dose_day1, self.dose_day2, self.dose_day3];
                if doses.iter().all(Option::is_none) {
                    None
                } else {
                    let [d1, d2, d3] = doses.map(|d| d.unwrap_or(0.0));
                    Some(total_loading(d1, d2, d3))
                }
            }
        }
    }
}

/// A model input column. The first sixteen are the collected covariates,
/// `TotalLoading` is derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Column {
    Age,
    Sex,
    Weight,
    Height,
    Bsa,
    Bmi,
    Amiodarone,
    Vkorc1,
    Cyp2c9,
    Dose1,
    Dose2,
    Dose3,
    InrDay4,
    InrDay5,
    InrDay6,
    InrBaseline,
    TotalLoading,
}

impl Column {
    pub const COVARIATES: [Column; 16] = [
        Column::Age,
        Column::Sex,
        Column::Weight,
        Column::Height,
        Column::Bsa,
        Column::Bmi,
        Column::Amiodarone,
        Column::Vkorc1,
        Column::Cyp2c9,
        Column::Dose1,
        Column::Dose2,
        Column::Dose3,
        Column::InrDay4,
        Column::InrDay5,
        Column::InrDay6,
        Column::InrBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Column::Age => "age",
            Column::Sex => "sex",
            Column::Weight => "weight_kg",
            Column::Height => "height_m",
            Column::Bsa => "bsa",
            Column::Bmi => "bmi",
            Column::Amiodarone => "amiodarone",
            Column::Vkorc1 => "vkorc1",
            Column::Cyp2c9 => "cyp2c9",
            Column::Dose1 => "dose1",
            Column::Dose2 => "dose2",
            Column::Dose3 => "dose3",
            Column::InrDay4 => "inr_d4",
            Column::InrDay5 => "inr_d5",
            Column::InrDay6 => "inr_d6",
            Column::InrBaseline => "inr_base",
            Column::TotalLoading => "total_loading",
        }
    }

    pub fn from_name(name: &str) -> Option<Column> {
        Column::COVARIATES
            .into_iter()
            .chain([Column::TotalLoading])
            .find(|c| c.name().eq_ignore_ascii_case(name.trim()))
    }
}

/// The five covariate combinations compared in the ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    Set1,
    Set2,
    Set3,
    Set4,
    Set5,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 5] = [
        FeatureSet::Set1,
        FeatureSet::Set2,
        FeatureSet::Set3,
        FeatureSet::Set4,
        FeatureSet::Set5,
    ];

    pub fn id(self) -> &'static str {
        match self {
            FeatureSet::Set1 => "set1",
            FeatureSet::Set2 => "set2",
            FeatureSet::Set3 => "set3",
            FeatureSet::Set4 => "set4",
            FeatureSet::Set5 => "set5",
        }
    }

    pub fn included_columns(self) -> Vec<Column> {
        let without = |dropped: &[Column]| -> Vec<Column> {
            Column::COVARIATES
                .into_iter()
                .filter(|c| !dropped.contains(c))
                .collect()
        };
        let no_d56 = [Column::InrDay5, Column::InrDay6];
        let no_d456 = [Column::InrDay4, Column::InrDay5, Column::InrDay6];
        match self {
            FeatureSet::Set1 => Column::COVARIATES.to_vec(),
            FeatureSet::Set2 => without(&no_d56),
            FeatureSet::Set3 => without(&no_d456),
            FeatureSet::Set4 => {
                let mut cols = without(&no_d56);
                cols.push(Column::TotalLoading);
                cols
            }
            FeatureSet::Set5 => {
                let mut cols = without(&no_d456);
                cols.push(Column::TotalLoading);
                cols
            }
        }
    }

    pub fn arity(self) -> usize {
        self.included_columns().len()
    }

    pub fn column_names(self) -> Vec<String> {
        self.included_columns()
            .into_iter()
            .map(|c| c.name().to_string())
            .collect()
    }

    /// The feature set whose columns are exactly `names`, in order.
    pub fn from_column_names(names: &[impl AsRef<str>]) -> Option<FeatureSet> {
        FeatureSet::ALL.into_iter().find(|fs| {
            let cols = fs.included_columns();
            cols.len() == names.len()
                && cols
                    .iter()
                    .zip(names)
                    .all(|(c, n)| c.name().eq_ignore_ascii_case(n.as_ref().trim()))
        })
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureSet::ALL
            .into_iter()
            .find(|fs| fs.id().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Parse {
                field: "feature set",
                value: s.to_string(),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gender_codes() {
        assert_eq!(encode_gender(Gender::Male), 1.0);
        assert_eq!(encode_gender(Gender::Female), 0.0);
        for g in [Gender::Male, Gender::Female] {
            assert_eq!(decode_gender(encode_gender(g)), Some(g));
        }
        assert_eq!("M".parse::<Gender>().unwrap(), Gender::Male);
        assert_eq!("female".parse::<Gender>().unwrap(), Gender::Female);
        assert!("x".parse::<Gender>().is_err());
    }

    #[test]
    fn vkorc1_codes() {
        assert_eq!(encode_vkorc1(Vkorc1::GG), 0.0);
        assert_eq!(encode_vkorc1(Vkorc1::AA), 1.0);
        assert_eq!(encode_vkorc1(Vkorc1::AG), 2.0);
        let err = "XY".parse::<Vkorc1>().unwrap_err();
        assert!(err.to_string().contains("XY"), "{err}");
    }

    #[test]
    fn cyp2c9_codes() {
        assert_eq!(encode_cyp2c9(Cyp2c9::Star1Star1), 0.0);
        assert_eq!(encode_cyp2c9("*2/*3".parse().unwrap()), 4.0);
        assert_eq!(encode_cyp2c9("*3/*3".parse().unwrap()), 5.0);
        assert!("*4/*4".parse::<Cyp2c9>().is_err());
        let codes: Vec<f64> = Cyp2c9::ALL.iter().map(|&g| encode_cyp2c9(g)).collect();
        assert_eq!(codes, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn inr_categories() {
        let r = TherapeuticRange::default();
        assert_eq!(categorize_inr(2.5, &r).unwrap(), ResponseClass::InRange);
        assert_eq!(categorize_inr(1.99, &r).unwrap(), ResponseClass::Under);
        assert_eq!(categorize_inr(2.0, &r).unwrap(), ResponseClass::InRange);
        assert_eq!(categorize_inr(3.0, &r).unwrap(), ResponseClass::InRange);
        assert_eq!(categorize_inr(3.01, &r).unwrap(), ResponseClass::Over);
        assert!(categorize_inr(0.0, &r).is_err());
        assert!(categorize_inr(-1.0, &r).is_err());
    }

    #[test]
    fn range_parsing() {
        let r: TherapeuticRange = "3:4".parse().unwrap();
        assert_eq!((r.low(), r.high()), (3.0, 4.0));
        assert!("3:2".parse::<TherapeuticRange>().is_err());
        assert!("0:2".parse::<TherapeuticRange>().is_err());
        assert!("2-3".parse::<TherapeuticRange>().is_err());
    }

    #[test]
    fn loading_sum() {
        assert_eq!(total_loading(10.0, 10.0, 5.0), 25.0);
        assert_eq!(total_loading(0.0, 0.0, 0.0), 0.0);
        assert_eq!(total_loading(7.0, 7.0, 7.0), 21.0);
    }

    #[test]
    fn feature_set_arities() {
        let arities: Vec<usize> = FeatureSet::ALL.iter().map(|fs| fs.arity()).collect();
        assert_eq!(arities, vec![16, 14, 13, 15, 14]);
        let set5 = FeatureSet::Set5.included_columns();
        assert_eq!(*set5.last().unwrap(), Column::TotalLoading);
        for fs in FeatureSet::ALL {
            assert_eq!(FeatureSet::from_column_names(&fs.column_names()), Some(fs));
        }
    }

    #[test]
    fn class_codes() {
        let codes: Vec<u8> = ResponseClass::ALL.iter().map(|c| c.code()).collect();
        assert_eq!(codes, vec![1, 2, 3]);
        assert_eq!(ResponseClass::from_code(4), None);
        assert_eq!(ResponseClass::from_code(0), None);
    }
}
