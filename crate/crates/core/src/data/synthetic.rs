//! Synthetic covariate bank.
//!
//! A reusable bank of twin-pair covariates shaped like a registry study of
//! adolescent twins: parental alcohol/drug abuse severity, parental
//! occupation, sex, zygosity shared per pair; academic motivation,
//! externalizing symptoms, parent conflict, and age measured per twin.
//! The simulation module resamples covariates from this bank, and the
//! repository ships a 500-pair instance generated by this code.

use rand::Rng;
use rand_distr::StandardNormal;

use super::schema::{ColumnSpec, SchemaSpec};
use super::{PairedDataset, TwinPairRecord};
use crate::rng::{stream, TAG_BANK};

/// Within-pair correlation of the individual covariates.
const PAIR_CORRELATION: f64 = 0.5;
/// Marginal probability that a pair is monozygotic.
const MZ_PROBABILITY: f64 = 0.63;

/// Covariate layout of the synthetic bank.
pub fn bank_schema() -> SchemaSpec {
    SchemaSpec {
        shared: vec![
            ColumnSpec::continuous("par_alcohol"),
            ColumnSpec::continuous("par_drug"),
            ColumnSpec::continuous("occupation"),
            ColumnSpec::binary("sex"),
            ColumnSpec::binary("zygosity"),
        ],
        individual: vec![
            ColumnSpec::continuous("motivation"),
            ColumnSpec::continuous("externalizing"),
            ColumnSpec::continuous("conflict"),
            ColumnSpec::continuous("age"),
        ],
    }
}

/// Standardized log-normal draw: right-skewed with mean 0 and variance 1.
fn skewed(rng: &mut impl Rng) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    let e = std::f64::consts::E;
    (z.exp() - e.sqrt()) / ((e - 1.0) * e).sqrt()
}

/// Pair of standard-normal values with within-pair correlation
/// [`PAIR_CORRELATION`].
fn correlated_pair(rng: &mut impl Rng) -> (f64, f64) {
    let shared: f64 = rng.sample(StandardNormal);
    let e1: f64 = rng.sample(StandardNormal);
    let e2: f64 = rng.sample(StandardNormal);
    let w_shared = PAIR_CORRELATION.sqrt();
    let w_own = (1.0 - PAIR_CORRELATION).sqrt();
    (
        w_shared * shared + w_own * e1,
        w_shared * shared + w_own * e2,
    )
}

/// Generates a covariate bank of `n_pairs` pairs. Exposures and outcomes are
/// zero placeholders; the simulation module overwrites them when it draws
/// from a data-generating mechanism.
pub fn generate_covariate_bank(n_pairs: usize, seed: u64) -> PairedDataset {
    let schema = bank_schema();
    let mut rng = stream(seed, &[TAG_BANK]);
    let mut records = Vec::with_capacity(n_pairs);
    for i in 0..n_pairs {
        let c = vec![
            skewed(&mut rng),
            skewed(&mut rng),
            rng.sample::<f64, _>(StandardNormal),
            f64::from(rng.gen_bool(0.5)),
            f64::from(rng.gen_bool(MZ_PROBABILITY)),
        ];
        let mut x1 = Vec::with_capacity(schema.individual.len());
        let mut x2 = Vec::with_capacity(schema.individual.len());
        for _ in 0..schema.individual.len() {
            let (v1, v2) = correlated_pair(&mut rng);
            x1.push(v1);
            x2.push(v2);
        }
        records.push(TwinPairRecord {
            pair_id: format!("s{i:04}"),
            c,
            x1,
            x2,
            a1: 0,
            a2: 0,
            y1: 0.0,
            y2: 0.0,
        });
    }
    PairedDataset::new(
        schema.encoded_shared_names(),
        schema.encoded_individual_names(),
        records,
    )
    .expect("generated bank is valid by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bank_is_deterministic_in_the_seed() {
        let a = generate_covariate_bank(50, 9);
        let b = generate_covariate_bank(50, 9);
        let c = generate_covariate_bank(50, 10);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn bank_moments_are_plausible() {
        let bank = generate_covariate_bank(4000, 1);
        let n = bank.len() as f64;
        let zyg_idx = 4;
        let mz_share: f64 = bank.records().iter().map(|r| r.c[zyg_idx]).sum::<f64>() / n;
        assert!((mz_share - 0.63).abs() < 0.03, "MZ share {mz_share}");

        // Standardized skewed shared covariate: mean near 0, variance near 1.
        let alcohol: Vec<f64> = bank.records().iter().map(|r| r.c[0]).collect();
        let mean = alcohol.iter().sum::<f64>() / n;
        let var = alcohol.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.06, "mean {mean}");
        assert!((var - 1.0).abs() < 0.15, "var {var}");

        // Within-pair correlation of an individual covariate near 0.5.
        let mean1: f64 = bank.records().iter().map(|r| r.x1[0]).sum::<f64>() / n;
        let mean2: f64 = bank.records().iter().map(|r| r.x2[0]).sum::<f64>() / n;
        let mut cov = 0.0;
        let mut v1 = 0.0;
        let mut v2 = 0.0;
        for r in bank.records() {
            cov += (r.x1[0] - mean1) * (r.x2[0] - mean2);
            v1 += (r.x1[0] - mean1).powi(2);
            v2 += (r.x2[0] - mean2).powi(2);
        }
        let corr = cov / (v1.sqrt() * v2.sqrt());
        assert!((corr - 0.5).abs() < 0.06, "corr {corr}");
    }

    #[test]
    fn skewed_draws_are_right_skewed() {
        let mut rng = stream(3, &[1]);
        let draws: Vec<f64> = (0..20000).map(|_| skewed(&mut rng)).collect();
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let m3 = draws.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
        assert!(m3 > 1.0, "third central moment {m3}");
    }
}
