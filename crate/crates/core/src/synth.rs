//! Synthetic cohorts with published-style marginals, injected missingness
//! and outcomes drawn from a declared latent dose-response model, so the
//! optimal classifier is known exactly.
//!
//! Latent sensitivity (clamped at `sensitivity_floor`):
//!
//! ```text
//! s = base + age·(age − 68)/10 + vkorc1·effect(vkorc1) + cyp2c9·effect(cyp2c9)
//!     + amiodarone·[on amiodarone] − weight·(weight − 78)/20
//! ```
//!
//! Day-7 INR is `baseline + s·total_dose/25 + N(0, noise_sd²)`; interim and
//! day-8 INRs use fixed fractions of the same dose-driven excess with their
//! own noise.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    total_loading, Cyp2c9, Gender, RawRecord, ResponseClass, TherapeuticRange, Vkorc1,
};

const PROB_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Vkorc1Probs {
    pub gg: f64,
    pub aa: f64,
    pub ag: f64,
    /// Genotype not recorded; generated as a missing field.
    pub unknown: f64,
}

impl Default for Vkorc1Probs {
    fn default() -> Self {
        Self {
            gg: 0.130,
            aa: 0.377,
            ag: 0.415,
            unknown: 0.078,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimenMix {
    /// 10/10/5 mg
    pub standard: f64,
    /// 10/10/10 mg
    pub ten_ten_ten: f64,
    /// 7/7/7 mg
    pub seven_seven_seven: f64,
    /// 5/5/5 mg
    pub five_five_five: f64,
    /// The remaining probability is spread uniformly over this pool.
    pub other_pool: Vec<[f64; 3]>,
}

impl Default for RegimenMix {
    fn default() -> Self {
        Self {
            standard: 0.45,
            ten_ten_ten: 0.065,
            seven_seven_seven: 0.065,
            five_five_five: 0.051,
            other_pool: vec![
                [0.0, 5.0, 5.0],
                [5.0, 0.0, 5.0],
                [5.0, 5.0, 0.0],
                [10.0, 5.0, 0.0],
                [0.0, 5.0, 10.0],
                [10.0, 0.0, 5.0],
                [10.0, 5.0, 5.0],
                [5.0, 10.0, 5.0],
                [0.0, 10.0, 10.0],
                [10.0, 10.0, 0.0],
                [5.0, 5.0, 10.0],
                [15.0, 10.0, 5.0],
                [5.0, 10.0, 15.0],
                [15.0, 15.0, 0.0],
                [0.0, 15.0, 15.0],
                [15.0, 10.0, 10.0],
                [10.0, 15.0, 10.0],
                [15.0, 15.0, 5.0],
                [5.0, 15.0, 15.0],
            ],
        }
    }
}

impl RegimenMix {
    fn fixed(&self) -> [(f64, [f64; 3]); 4] {
        [
            (self.standard, [10.0, 10.0, 5.0]),
            (self.ten_ten_ten, [10.0, 10.0, 10.0]),
            (self.seven_seven_seven, [7.0, 7.0, 7.0]),
            (self.five_five_five, [5.0, 5.0, 5.0]),
        ]
    }

    fn other(&self) -> f64 {
        1.0 - self.fixed().iter().map(|(p, _)| p).sum::<f64>()
    }
}

/// Sex-conditional body size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BodyParams {
    pub male_height_mean: f64,
    pub male_height_sd: f64,
    pub male_weight_mean: f64,
    pub male_weight_sd: f64,
    pub female_height_mean: f64,
    pub female_height_sd: f64,
    pub female_weight_mean: f64,
    pub female_weight_sd: f64,
}

impl Default for BodyParams {
    fn default() -> Self {
        Self {
            male_height_mean: 1.76,
            male_height_sd: 0.07,
            male_weight_mean: 84.0,
            male_weight_sd: 14.0,
            female_height_mean: 1.62,
            female_height_sd: 0.065,
            female_weight_mean: 70.0,
            female_weight_sd: 13.0,
        }
    }
}

/// Per-field probability that a generated value is blanked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Missingness {
    /// Blank all of height, weight, BMI, sex and age together.
    pub body_demo_block: f64,
    /// Blank all three doses together.
    pub loading_block: f64,
    pub age: f64,
    pub sex: f64,
    pub weight: f64,
    pub height: f64,
    pub bsa: f64,
    pub bmi: f64,
    pub amiodarone: f64,
    pub cyp2c9: f64,
    pub dose: f64,
    pub inr_baseline: f64,
    pub inr_day4: f64,
    pub inr_day5: f64,
    pub inr_day6: f64,
    pub inr_day7: f64,
    /// Probability day 8 is present when day 7 is missing.
    pub inr_day8_present_if_day7_missing: f64,
    /// Probability day 8 is present otherwise.
    pub inr_day8_present: f64,
}

impl Default for Missingness {
    /// Gaps fall on fields outside the latent model (plus VKORC1 "unknown"),
    /// on interim INRs and on the outcome days.
    fn default() -> Self {
        Self {
            body_demo_block: 0.01,
            loading_block: 0.01,
            age: 0.0,
            sex: 0.02,
            weight: 0.0,
            height: 0.08,
            bsa: 0.08,
            bmi: 0.08,
            amiodarone: 0.0,
            cyp2c9: 0.0,
            dose: 0.0,
            inr_baseline: 0.0,
            inr_day4: 0.3,
            inr_day5: 0.5,
            inr_day6: 0.6,
            inr_day7: 0.05,
            inr_day8_present_if_day7_missing: 0.8,
            inr_day8_present: 0.3,
        }
    }
}

impl Missingness {
    fn rates(&self) -> [(&'static str, f64); 18] {
        [
            ("body_demo_block", self.body_demo_block),
            ("loading_block", self.loading_block),
            ("age", self.age),
            ("sex", self.sex),
            ("weight", self.weight),
            ("height", self.height),
            ("bsa", self.bsa),
            ("bmi", self.bmi),
            ("amiodarone", self.amiodarone),
            ("cyp2c9", self.cyp2c9),
            ("dose", self.dose),
            ("inr_baseline", self.inr_baseline),
            ("inr_day4", self.inr_day4),
            ("inr_day5", self.inr_day5),
            ("inr_day6", self.inr_day6),
            ("inr_day7", self.inr_day7),
            (
                "inr_day8_present_if_day7_missing",
                self.inr_day8_present_if_day7_missing,
            ),
            ("inr_day8_present", self.inr_day8_present),
        ]
    }

    /// No missing cells at all.
    pub fn none() -> Self {
        Self {
            body_demo_block: 0.0,
            loading_block: 0.0,
            age: 0.0,
            sex: 0.0,
            weight: 0.0,
            height: 0.0,
            bsa: 0.0,
            bmi: 0.0,
            amiodarone: 0.0,
            cyp2c9: 0.0,
            dose: 0.0,
            inr_baseline: 0.0,
            inr_day4: 0.0,
            inr_day5: 0.0,
            inr_day6: 0.0,
            inr_day7: 0.0,
            inr_day8_present_if_day7_missing: 1.0,
            inr_day8_present: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSpec {
    pub n: usize,
    pub seed: u64,
    pub age_mean: f64,
    pub age_sd: f64,
    pub age_min: f64,
    pub age_max: f64,
    pub male_fraction: f64,
    pub amiodarone_fraction: f64,
    pub vkorc1: Vkorc1Probs,
    /// Probabilities of *1/*1, *1/*2, *1/*3, *2/*2, *2/*3, *3/*3.
    pub cyp2c9: [f64; 6],
    pub regimens: RegimenMix,
    pub body: BodyParams,
    pub baseline_inr_mean: f64,
    pub baseline_inr_sd: f64,
    pub missingness: Missingness,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            n: 300,
            seed: 0,
            age_mean: 68.36,
            age_sd: 12.0,
            age_min: 18.0,
            age_max: 95.0,
            male_fraction: 0.549,
            amiodarone_fraction: 0.090,
            vkorc1: Vkorc1Probs::default(),
            cyp2c9: [0.694, 0.192, 0.084, 0.008, 0.016, 0.006],
            regimens: RegimenMix::default(),
            body: BodyParams::default(),
            baseline_inr_mean: 1.05,
            baseline_inr_sd: 0.1,
            missingness: Missingness::default(),
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("{name} = {p} is not a probability")));
    }
    Ok(())
}

fn check_sum(name: &str, probs: &[f64]) -> Result<()> {
    for &p in probs {
        check_prob(name, p)?;
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > PROB_TOLERANCE {
        return Err(Error::Config(format!(
            "{name} probabilities sum to {total}, not 1"
        )));
    }
    Ok(())
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        let v = &self.vkorc1;
        check_sum("vkorc1", &[v.gg, v.aa, v.ag, v.unknown])?;
        if v.unknown >= 1.0 {
            return Err(Error::Config("vkorc1 needs some known genotypes".into()));
        }
        check_sum("cyp2c9", &self.cyp2c9)?;
        let r = &self.regimens;
        let other = r.other();
        let mut mix: Vec<f64> = r.fixed().iter().map(|(p, _)| *p).collect();
        mix.push(other);
        for &p in &mix {
            check_prob("regimens", p)?;
        }
        if other > PROB_TOLERANCE && r.other_pool.is_empty() {
            return Err(Error::Config(
                "regimens leave probability for an empty other_pool".into(),
            ));
        }
        if r.other_pool
            .iter()
            .flatten()
            .any(|d| !(d.is_finite() && *d >= 0.0))
        {
            return Err(Error::Config("regimen doses must be >= 0".into()));
        }
        check_prob("male_fraction", self.male_fraction)?;
        check_prob("amiodarone_fraction", self.amiodarone_fraction)?;
        for (name, p) in self.missingness.rates() {
            check_prob(name, p)?;
        }
        if !(self.age_sd > 0.0 && self.age_min < self.age_max && self.age_min >= 0.0) {
            return Err(Error::Config("age distribution is degenerate".into()));
        }
        let b = &self.body;
        let sds = [
            b.male_height_sd,
            b.male_weight_sd,
            b.female_height_sd,
            b.female_weight_sd,
            self.baseline_inr_sd,
        ];
        if sds.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config("standard deviations must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatentResponseModel {
    pub base: f64,
    /// Per decade above age 68.
    pub age: f64,
    pub vkorc1: f64,
    /// Effect of GG, AA, AG.
    pub vkorc1_effect: [f64; 3],
    pub cyp2c9: f64,
    /// Effect of each CYP2C9 genotype in code order.
    pub cyp2c9_effect: [f64; 6],
    pub amiodarone: f64,
    /// Per 20 kg above 78 kg (subtracted).
    pub weight: f64,
    pub sensitivity_floor: f64,
    /// Day-7 noise standard deviation.
    pub noise_sd: f64,
    pub day4_fraction: f64,
    pub day5_fraction: f64,
    pub day6_fraction: f64,
    pub day8_fraction: f64,
    pub interim_noise_sd: f64,
}

impl Default for LatentResponseModel {
    /// `noise_sd` puts oracle accuracy on a 300-patient cohort near 0.86.
    fn default() -> Self {
        Self {
            base: 1.3,
            age: 0.15,
            vkorc1: 0.3,
            vkorc1_effect: [0.0, 1.0, 0.5],
            cyp2c9: 0.2,
            cyp2c9_effect: [0.0, 0.4, 0.8, 0.8, 1.2, 1.6],
            amiodarone: 0.4,
            weight: 0.2,
            sensitivity_floor: 0.05,
            noise_sd: 0.18,
            day4_fraction: 0.35,
            day5_fraction: 0.55,
            day6_fraction: 0.75,
            day8_fraction: 1.05,
            interim_noise_sd: 1.0,
        }
    }
}

/// Inputs the latent model needs from a record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentInputs {
    pub age: f64,
    pub weight: f64,
    pub vkorc1: Vkorc1,
    pub cyp2c9: Cyp2c9,
    pub amiodarone: bool,
    pub inr_baseline: f64,
    pub total_dose: f64,
}

impl LatentInputs {
    pub fn from_record(r: &RawRecord) -> Result<Self> {
        let missing = |field: &str| Error::InvalidRecord {
            id: r.patient_id.clone(),
            message: format!("{field} is required by the latent model"),
        };
        Ok(Self {
            age: r.age.ok_or_else(|| missing("age"))?,
            weight: r.weight.ok_or_else(|| missing("weight_kg"))?,
            vkorc1: r.vkorc1.ok_or_else(|| missing("vkorc1"))?,
            cyp2c9: r.cyp2c9.ok_or_else(|| missing("cyp2c9"))?,
            amiodarone: r.amiodarone.ok_or_else(|| missing("amiodarone"))?,
            inr_baseline: r.inr_baseline.ok_or_else(|| missing("inr_base"))?,
            total_dose: total_loading(
                r.dose_day1.ok_or_else(|| missing("dose1"))?,
                r.dose_day2.ok_or_else(|| missing("dose2"))?,
                r.dose_day3.ok_or_else(|| missing("dose3"))?,
            ),
        })
    }
}

impl LatentResponseModel {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.base,
            self.age,
            self.vkorc1,
            self.cyp2c9,
            self.amiodarone,
            self.weight,
            self.sensitivity_floor,
            self.noise_sd,
            self.day4_fraction,
            self.day5_fraction,
            self.day6_fraction,
            self.day8_fraction,
            self.interim_noise_sd,
        ];
        let effects = self.vkorc1_effect.iter().chain(&self.cyp2c9_effect);
        if all.iter().chain(effects).any(|v| !v.is_finite()) {
            return Err(Error::Config(
                "latent model coefficients must be finite".into(),
            ));
        }
        if self.noise_sd <= 0.0 || self.interim_noise_sd <= 0.0 {
            return Err(Error::Config(
                "noise standard deviations must be > 0".into(),
            ));
        }
        if self.sensitivity_floor <= 0.0 {
            return Err(Error::Config("sensitivity floor must be > 0".into()));
        }
        Ok(())
    }

    pub fn sensitivity(&self, x: &LatentInputs) -> f64 {
        let vk = self.vkorc1_effect[crate::model::encode_vkorc1(x.vkorc1) as usize];
        let cyp = self.cyp2c9_effect[crate::model::encode_cyp2c9(x.cyp2c9) as usize];
        let s = self.base
            + self.age * (x.age - 68.0) / 10.0
            + self.vkorc1 * vk
            + self.cyp2c9 * cyp
            + if x.amiodarone { self.amiodarone } else { 0.0 }
            - self.weight * (x.weight - 78.0) / 20.0;
        s.max(self.sensitivity_floor)
    }

    /// INR rise attributable to the loading doses.
    pub fn excess(&self, x: &LatentInputs) -> f64 {
        self.sensitivity(x) * x.total_dose / 25.0
    }

    /// Noise-free day-7 INR.
    pub fn mean_day7(&self, x: &LatentInputs) -> f64 {
        x.inr_baseline + self.excess(x)
    }
}

/// Standard normal CDF.
fn phi(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Exact class probabilities (Under, InRange, Over) and their argmax under
/// the latent Gaussian. Ties go to the lower class.
pub fn bayes_oracle(
    model: &LatentResponseModel,
    record: &RawRecord,
    range: &TherapeuticRange,
) -> Result<(ResponseClass, [f64; 3])> {
    let x = LatentInputs::from_record(record)?;
    Ok(oracle_from_mean(model.mean_day7(&x), model.noise_sd, range))
}

pub fn oracle_from_mean(mean: f64, sd: f64, range: &TherapeuticRange) -> (ResponseClass, [f64; 3]) {
    let lo = phi((range.low() - mean) / sd);
    let hi = phi((range.high() - mean) / sd);
    let probs = [lo, (hi - lo).max(0.0), 1.0 - hi];
    let mut best = 0;
    for i in 1..3 {
        if probs[i] > probs[best] {
            best = i;
        }
    }
    (ResponseClass::ALL[best], probs)
}

/// A generated patient: what the cohort file shows, and the full truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPatient {
    pub observed: RawRecord,
    pub complete: RawRecord,
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (x * f).round() / f
}

fn pick<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn normal(mean: f64, sd: f64) -> Normal<f64> {
    Normal::new(mean, sd).expect("validated standard deviation")
}

/// Generates `spec.n` patients, deterministic in `spec.seed`.
pub fn generate_patients(
    spec: &CohortSpec,
    model: &LatentResponseModel,
) -> Result<Vec<SyntheticPatient>> {
    spec.validate()?;
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let width = spec.n.max(1).to_string().len().max(4);
    (0..spec.n)
        .map(|i| {
            let complete = draw_complete(spec, model, format!("S{:0width$}", i + 1), &mut rng);
            let observed = mask(spec, &complete, &mut rng);
            Ok(SyntheticPatient { observed, complete })
        })
        .collect()
}

/// Observed records only.
pub fn generate(spec: &CohortSpec, model: &LatentResponseModel) -> Result<Vec<RawRecord>> {
    Ok(generate_patients(spec, model)?
        .into_iter()
        .map(|p| p.observed)
        .collect())
}

fn draw_complete<R: Rng>(
    spec: &CohortSpec,
    model: &LatentResponseModel,
    id: String,
    rng: &mut R,
) -> RawRecord {
    let age_dist = normal(spec.age_mean, spec.age_sd);
    let age = loop {
        let a = age_dist.sample(rng);
        if (spec.age_min..=spec.age_max).contains(&a) {
            break round_to(a, 1);
        }
    };
    let male = rng.random_bool(spec.male_fraction);
    let b = &spec.body;
    let (hm, hs, wm, ws) = if male {
        (
            b.male_height_mean,
            b.male_height_sd,
            b.male_weight_mean,
            b.male_weight_sd,
        )
    } else {
        (
            b.female_height_mean,
            b.female_height_sd,
            b.female_weight_mean,
            b.female_weight_sd,
        )
    };
    let height = round_to(normal(hm, hs).sample(rng).clamp(1.35, 2.10), 2);
    let weight = round_to(normal(wm, ws).sample(rng).clamp(35.0, 180.0), 1);
    let bmi = round_to(weight / (height * height), 2);
    let bsa = round_to((height * 100.0 * weight / 3600.0).sqrt(), 2);
    let amiodarone = rng.random_bool(spec.amiodarone_fraction);

    let v = &spec.vkorc1;
    let known = v.gg + v.aa + v.ag;
    let vkorc1 = Vkorc1::ALL[pick(rng, &[v.gg / known, v.aa / known, v.ag / known])];
    let cyp2c9 = Cyp2c9::ALL[pick(rng, &spec.cyp2c9)];

    let r = &spec.regimens;
    let fixed = r.fixed();
    let mut mix: Vec<f64> = fixed.iter().map(|(p, _)| *p).collect();
    mix.push(r.other().max(0.0));
    let slot = pick(rng, &mix);
    let doses = if slot < fixed.len() {
        fixed[slot].1
    } else {
        r.other_pool[rng.random_range(0..r.other_pool.len())]
    };

    let baseline = round_to(
        normal(spec.baseline_inr_mean, spec.baseline_inr_sd)
            .sample(rng)
            .clamp(0.8, 1.5),
        2,
    );
    let x = LatentInputs {
        age,
        weight,
        vkorc1,
        cyp2c9,
        amiodarone,
        inr_baseline: baseline,
        total_dose: doses.iter().sum(),
    };
    let excess = model.excess(&x);
    let day7_noise = normal(0.0, model.noise_sd);
    let interim_noise = normal(0.0, model.interim_noise_sd);
    let inr = |fraction: f64, noise: &Normal<f64>, rng: &mut R| {
        round_to(
            (baseline + fraction * excess + noise.sample(rng)).max(0.3),
            2,
        )
    };
    let inr_day4 = inr(model.day4_fraction, &interim_noise, rng);
    let inr_day5 = inr(model.day5_fraction, &interim_noise, rng);
    let inr_day6 = inr(model.day6_fraction, &interim_noise, rng);
    let inr_day7 = inr(1.0, &day7_noise, rng);
    let inr_day8 = inr(model.day8_fraction, &day7_noise, rng);

    RawRecord {
        patient_id: id,
        age: Some(age),
        gender: Some(if male { Gender::Male } else { Gender::Female }),
        weight: Some(weight),
        height: Some(height),
        bsa: Some(bsa),
        bmi: Some(bmi),
        amiodarone: Some(amiodarone),
        vkorc1: Some(vkorc1),
        cyp2c9: Some(cyp2c9),
        dose_day1: Some(doses[0]),
        dose_day2: Some(doses[1]),
        dose_day3: Some(doses[2]),
        inr_baseline: Some(baseline),
        inr_day4: Some(inr_day4),
        inr_day5: Some(inr_day5),
        inr_day6: Some(inr_day6),
        inr_day7: Some(inr_day7),
        inr_day8: Some(inr_day8),
    }
}

fn mask<R: Rng>(spec: &CohortSpec, complete: &RawRecord, rng: &mut R) -> RawRecord {
    let m = &spec.missingness;
    let mut r = complete.clone();
    let mut drop = |p: f64| rng.random_bool(p);
    if drop(m.body_demo_block) {
        r.height = None;
        r.weight = None;
        r.bmi = None;
        r.gender = None;
        r.age = None;
    }
    if drop(m.loading_block) {
        r.dose_day1 = None;
        r.dose_day2 = None;
        r.dose_day3 = None;
    }
    fn blank<T>(slot: &mut Option<T>, hit: bool) {
        if hit {
            *slot = None;
        }
    }
    blank(&mut r.age, drop(m.age));
    blank(&mut r.gender, drop(m.sex));
    blank(&mut r.weight, drop(m.weight));
    blank(&mut r.height, drop(m.height));
    blank(&mut r.bsa, drop(m.bsa));
    blank(&mut r.bmi, drop(m.bmi));
    blank(&mut r.amiodarone, drop(m.amiodarone));
    blank(&mut r.vkorc1, drop(spec.vkorc1.unknown));
    blank(&mut r.cyp2c9, drop(m.cyp2c9));
    blank(&mut r.dose_day1, drop(m.dose));
    blank(&mut r.dose_day2, drop(m.dose));
    blank(&mut r.dose_day3, drop(m.dose));
    blank(&mut r.inr_baseline, drop(m.inr_baseline));
    blank(&mut r.inr_day4, drop(m.inr_day4));
    blank(&mut r.inr_day5, drop(m.inr_day5));
    blank(&mut r.inr_day6, drop(m.inr_day6));
    let day7_missing = drop(m.inr_day7);
    blank(&mut r.inr_day7, day7_missing);
    let day8_present = if day7_missing {
        m.inr_day8_present_if_day7_missing
    } else {
        m.inr_day8_present
    };
    blank(&mut r.inr_day8, drop(1.0 - day8_present));
    r
}

/// Spec and latent model as read from one TOML document with optional
/// `[cohort]` and `[latent]` tables; omitted keys take their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub cohort: CohortSpec,
    pub latent: LatentResponseModel,
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SynthConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.cohort.validate()?;
        cfg.latent.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Share of the patients surviving preprocessing whose label matches the
/// oracle's argmax; the Bayes-optimal accuracy on that same record set.
pub fn oracle_accuracy(
    model: &LatentResponseModel,
    patients: &[SyntheticPatient],
    range: &TherapeuticRange,
) -> Result<f64> {
    let observed: Vec<RawRecord> = patients.iter().map(|p| p.observed.clone()).collect();
    let (data, _, indices) =
        crate::preprocess::run_pipeline_traced(&observed, range, crate::model::FeatureSet::Set5)?;
    let mut hits = 0usize;
    for (record, &index) in data.records.iter().zip(&indices) {
        let (predicted, _) = bayes_oracle(model, &patients[index].complete, range)?;
        hits += usize::from(predicted.code() == record.label);
    }
    Ok(hits as f64 / data.len() as f64)
}
