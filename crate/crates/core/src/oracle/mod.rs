//! Exact enumeration oracle for finite discrete worlds.
//!
//! A [`DiscreteWorld`] describes a complete generative law for twin pairs as a
//! finite list of atoms. Every quantity of interest, such as the true mean of
//! a potential outcome, the g-formula functional, or the infinite-data limit
//! of an estimator, can then be computed by summation with no sampling error.
//! The integration tests use these closed-form values to pin down the
//! estimators implemented elsewhere in the crate.
//!
//! Conventions mirror the estimation code: exposure patterns are indexed as
//! `[a1][a2]`, and each twin's potential outcome table is indexed own-exposure
//! first, so twin 2's realised outcome under pattern `(a1, a2)` is
//! `po2[a2][a1]`.

mod builders;

pub use builders::{
    asymmetric_ctc_world, confounded_world, identified_world, interference_free_world,
    m2_factorized_world, positivity_violating_world, symmetric_ctc_world,
};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{PairedDataset, TwinPairRecord};
use crate::estimators::ModelKind;

/// Errors from oracle computations.
#[derive(Debug, Error)]
pub enum OracleError {
    /// The world fails a structural invariant (probabilities, dimensions).
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    /// Exposure levels must be 0 or 1.
    #[error("exposure pattern ({0}, {1}) is not binary")]
    InvalidPattern(u8, u8),
    /// A required exposure pattern has zero probability in some covariate cell.
    #[error("positivity violated: pattern ({a1}, {a2}) has zero probability in cell [{cell}]")]
    PositivityViolation { a1: u8, a2: u8, cell: String },
    /// The requested computation relies on an assumption this world breaks.
    #[error("model {model} is not compatible with this world: {assumption} fails")]
    ModelAssumptionViolated { model: String, assumption: String },
    /// A conditional expectation was requested on a zero-probability event.
    #[error("no probability mass satisfies the conditioning event: {0}")]
    DegenerateConditioning(String),
    /// The requested functional is not defined for this model kind.
    #[error("model {0} has no mean potential outcome limit; use ctc_effect instead")]
    UnsupportedModel(String),
    /// Dataset construction from the world failed.
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

/// One point of support in a discrete world.
///
/// An atom fixes the unobserved stratum, all covariates, the conditional
/// exposure distribution, and both potential outcome tables. Outcomes are
/// deterministic given the atom and the realised exposure pattern, which
/// keeps every population functional a finite sum.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Atom {
    /// Probability mass of this configuration.
    pub prob: f64,
    /// Unobserved stratum label. Analyses never condition on it.
    pub u: i64,
    /// Shared covariates, aligned with `DiscreteWorld::c_names`.
    pub c: Vec<f64>,
    /// Twin 1's own covariates, aligned with `DiscreteWorld::x_names`.
    pub x1: Vec<f64>,
    /// Twin 2's own covariates.
    pub x2: Vec<f64>,
    /// Conditional exposure distribution, indexed `[a1][a2]`.
    pub exposure: [[f64; 2]; 2],
    /// Twin 1's potential outcomes, indexed `[own][cotwin]`.
    pub po1: [[f64; 2]; 2],
    /// Twin 2's potential outcomes, indexed `[own][cotwin]`.
    pub po2: [[f64; 2]; 2],
}

/// A finite generative law for twin pairs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DiscreteWorld {
    /// Names of the shared covariates.
    pub c_names: Vec<String>,
    /// Names of the twin-specific covariates.
    pub x_names: Vec<String>,
    /// Support points; probabilities must sum to one.
    pub atoms: Vec<Atom>,
}

/// Which structural assumptions a world satisfies, checked numerically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssumptionProfile {
    /// Exposure patterns are independent of the potential outcome tables
    /// within every observed covariate cell.
    pub unconfounded: bool,
    /// Every exposure pattern has positive probability in every observed cell.
    pub positivity: bool,
    /// Given a twin's own covariates, its exposure is independent of the
    /// co-twin's, so the pattern probability factorizes into margins.
    pub factorized: bool,
    /// The joint law is invariant to swapping twin labels.
    pub exchangeable: bool,
    /// No twin's potential outcome depends on the co-twin's exposure.
    pub interference_free: bool,
}

/// How the population-limit estimator is fed its nuisance functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuisanceMode {
    /// True outcome regression and true propensities.
    Exact,
    /// Outcome regression forced to zero; propensities exact.
    WrongOutcome,
    /// Outcome regression exact; propensities replaced by uniform tables.
    WrongPropensity,
    /// Both nuisances wrong.
    WrongBoth,
}

impl NuisanceMode {
    fn outcome_exact(self) -> bool {
        matches!(self, NuisanceMode::Exact | NuisanceMode::WrongPropensity)
    }

    fn propensity_exact(self) -> bool {
        matches!(self, NuisanceMode::Exact | NuisanceMode::WrongOutcome)
    }
}

/// The two sides of the co-twin control identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtcComparison {
    /// Causal side: mean exposure-versus-spillover contrast of the potential
    /// outcomes among discordant pairs with matching own covariates.
    pub causal: f64,
    /// Observational side: mean exposed-minus-unexposed outcome difference in
    /// the same discordant, covariate-matched pairs.
    pub observational: f64,
}

const PROB_TOL: f64 = 1e-9;
const INDEP_TOL: f64 = 1e-10;

fn check_pattern(a: u8, b: u8) -> Result<(), OracleError> {
    if a > 1 || b > 1 {
        return Err(OracleError::InvalidPattern(a, b));
    }
    Ok(())
}

fn bits_key(values: impl IntoIterator<Item = f64>) -> Vec<u64> {
    values.into_iter().map(f64::to_bits).collect()
}

impl DiscreteWorld {
    /// Checks structural invariants: dimensions, probability ranges, sums.
    pub fn validate(&self) -> Result<(), OracleError> {
        if self.atoms.is_empty() {
            return Err(OracleError::InvalidWorld("world has no atoms".into()));
        }
        let mut total = 0.0;
        for (i, atom) in self.atoms.iter().enumerate() {
            if atom.c.len() != self.c_names.len() {
                return Err(OracleError::InvalidWorld(format!(
                    "atom {i} has {} shared covariates, expected {}",
                    atom.c.len(),
                    self.c_names.len()
                )));
            }
            if atom.x1.len() != self.x_names.len() || atom.x2.len() != self.x_names.len() {
                return Err(OracleError::InvalidWorld(format!(
                    "atom {i} has twin covariate lengths {} and {}, expected {}",
                    atom.x1.len(),
                    atom.x2.len(),
                    self.x_names.len()
                )));
            }
            if !atom.prob.is_finite() || atom.prob < 0.0 {
                return Err(OracleError::InvalidWorld(format!(
                    "atom {i} has probability {}",
                    atom.prob
                )));
            }
            total += atom.prob;
            let mut cell_sum = 0.0;
            for row in &atom.exposure {
                for &cell in row {
                    if !cell.is_finite() || cell < 0.0 {
                        return Err(OracleError::InvalidWorld(format!(
                            "atom {i} has exposure probability {cell}"
                        )));
                    }
                    cell_sum += cell;
                }
            }
            if (cell_sum - 1.0).abs() > PROB_TOL {
                return Err(OracleError::InvalidWorld(format!(
                    "atom {i} exposure table sums to {cell_sum}"
                )));
            }
            for table in [&atom.po1, &atom.po2] {
                for row in table {
                    for &y in row {
                        if !y.is_finite() {
                            return Err(OracleError::InvalidWorld(format!(
                                "atom {i} has a non-finite potential outcome"
                            )));
                        }
                    }
                }
            }
        }
        if (total - 1.0).abs() > PROB_TOL {
            return Err(OracleError::InvalidWorld(format!(
                "atom probabilities sum to {total}"
            )));
        }
        Ok(())
    }

    /// Groups atom indices by the observed covariate cell `(c, x1, x2)`.
    fn observed_cells(&self) -> Vec<Vec<usize>> {
        let mut map: HashMap<Vec<u64>, Vec<usize>> = HashMap::new();
        for (i, atom) in self.atoms.iter().enumerate() {
            let key = bits_key(
                atom.c
                    .iter()
                    .chain(atom.x1.iter())
                    .chain(atom.x2.iter())
                    .copied(),
            );
            map.entry(key).or_default().push(i);
        }
        let mut cells: Vec<Vec<usize>> = map.into_values().collect();
        cells.sort_by_key(|idx| idx[0]);
        cells
    }

    /// Groups atom indices by one twin's own covariate cell `(c, x_j)`.
    fn own_cells(&self, twin: usize) -> Vec<Vec<usize>> {
        let mut map: HashMap<Vec<u64>, Vec<usize>> = HashMap::new();
        for (i, atom) in self.atoms.iter().enumerate() {
            let own = if twin == 1 { &atom.x1 } else { &atom.x2 };
            let key = bits_key(atom.c.iter().chain(own.iter()).copied());
            map.entry(key).or_default().push(i);
        }
        let mut cells: Vec<Vec<usize>> = map.into_values().collect();
        cells.sort_by_key(|idx| idx[0]);
        cells
    }

    fn describe_cell(&self, atom: &Atom) -> String {
        let mut parts = Vec::new();
        for (name, v) in self.c_names.iter().zip(&atom.c) {
            parts.push(format!("{name}={v}"));
        }
        for (name, v) in self.x_names.iter().zip(&atom.x1) {
            parts.push(format!("{name}_1={v}"));
        }
        for (name, v) in self.x_names.iter().zip(&atom.x2) {
            parts.push(format!("{name}_2={v}"));
        }
        parts.join(", ")
    }

    /// Checks each structural assumption by direct numerical comparison.
    pub fn verify(&self) -> Result<AssumptionProfile, OracleError> {
        self.validate()?;
        Ok(AssumptionProfile {
            unconfounded: self.check_unconfounded(),
            positivity: self.check_positivity(),
            factorized: self.check_factorized(),
            exchangeable: self.check_exchangeable(),
            interference_free: self.check_interference_free(),
        })
    }

    fn check_unconfounded(&self) -> bool {
        // Within each observed cell the exposure pattern must be independent
        // of the potential outcome tables. Atoms in a cell are grouped by
        // their outcome tables and the joint law is compared to the product
        // of its margins.
        for cell in self.observed_cells() {
            let cell_mass: f64 = cell.iter().map(|&i| self.atoms[i].prob).sum();
            if cell_mass <= 0.0 {
                continue;
            }
            let mut by_po: HashMap<Vec<u64>, f64> = HashMap::new();
            let mut joint: HashMap<(Vec<u64>, usize), f64> = HashMap::new();
            let mut pattern = [0.0f64; 4];
            for &i in &cell {
                let atom = &self.atoms[i];
                let po_key = bits_key(
                    atom.po1
                        .iter()
                        .flatten()
                        .chain(atom.po2.iter().flatten())
                        .copied(),
                );
                *by_po.entry(po_key.clone()).or_default() += atom.prob / cell_mass;
                for a1 in 0..2 {
                    for a2 in 0..2 {
                        let w = atom.prob / cell_mass * atom.exposure[a1][a2];
                        pattern[2 * a1 + a2] += w;
                        *joint.entry((po_key.clone(), 2 * a1 + a2)).or_default() += w;
                    }
                }
            }
            for ((po_key, pat), &p_joint) in &joint {
                let expected = by_po[po_key] * pattern[*pat];
                if (p_joint - expected).abs() > INDEP_TOL {
                    return false;
                }
            }
        }
        true
    }

    fn check_positivity(&self) -> bool {
        for cell in self.observed_cells() {
            let mass: f64 = cell.iter().map(|&i| self.atoms[i].prob).sum();
            if mass <= 0.0 {
                continue;
            }
            for a1 in 0..2 {
                for a2 in 0..2 {
                    let p: f64 = cell
                        .iter()
                        .map(|&i| self.atoms[i].prob * self.atoms[i].exposure[a1][a2])
                        .sum();
                    if p <= 0.0 {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn check_factorized(&self) -> bool {
        for twin in [1usize, 2] {
            for cell in self.own_cells(twin) {
                let mass: f64 = cell.iter().map(|&i| self.atoms[i].prob).sum();
                if mass <= 0.0 {
                    continue;
                }
                // Joint distribution of (own, cotwin) exposure given the cell.
                let mut joint = [[0.0f64; 2]; 2];
                for &i in &cell {
                    let atom = &self.atoms[i];
                    for a1 in 0..2 {
                        for a2 in 0..2 {
                            let (own, other) = if twin == 1 { (a1, a2) } else { (a2, a1) };
                            joint[own][other] += atom.prob / mass * atom.exposure[a1][a2];
                        }
                    }
                }
                for own in 0..2 {
                    for other in 0..2 {
                        let margin_own = joint[own][0] + joint[own][1];
                        let margin_other = joint[0][other] + joint[1][other];
                        if (joint[own][other] - margin_own * margin_other).abs() > INDEP_TOL {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    fn check_exchangeable(&self) -> bool {
        let encode = |c: &[f64], x1: &[f64], x2: &[f64], ex: &[[f64; 2]; 2], po1: &[[f64; 2]; 2], po2: &[[f64; 2]; 2]| {
            bits_key(
                c.iter()
                    .chain(x1.iter())
                    .chain(x2.iter())
                    .chain(ex.iter().flatten())
                    .chain(po1.iter().flatten())
                    .chain(po2.iter().flatten())
                    .copied(),
            )
        };
        let mut original: HashMap<Vec<u64>, f64> = HashMap::new();
        let mut swapped: HashMap<Vec<u64>, f64> = HashMap::new();
        for atom in &self.atoms {
            *original
                .entry(encode(&atom.c, &atom.x1, &atom.x2, &atom.exposure, &atom.po1, &atom.po2))
                .or_default() += atom.prob;
            let transposed = [
                [atom.exposure[0][0], atom.exposure[1][0]],
                [atom.exposure[0][1], atom.exposure[1][1]],
            ];
            *swapped
                .entry(encode(&atom.c, &atom.x2, &atom.x1, &transposed, &atom.po2, &atom.po1))
                .or_default() += atom.prob;
        }
        if original.len() != swapped.len() {
            return false;
        }
        original.iter().all(|(key, &p)| {
            swapped
                .get(key)
                .is_some_and(|&q| (p - q).abs() <= INDEP_TOL)
        })
    }

    fn check_interference_free(&self) -> bool {
        self.atoms.iter().all(|atom| {
            (0..2).all(|a| {
                atom.po1[a][0] == atom.po1[a][1] && atom.po2[a][0] == atom.po2[a][1]
            })
        })
    }

    /// Expands the world into an exact finite dataset.
    ///
    /// Every atom-and-pattern mass must be a dyadic rational so that some
    /// common denominator `2^k` turns all masses into integer pair counts.
    /// The resulting dataset reproduces the population law exactly, which
    /// lets saturated-model estimators be compared to enumerated truths with
    /// no sampling noise.
    pub fn to_dataset(&self) -> Result<PairedDataset, OracleError> {
        self.validate()?;
        let mut masses = Vec::new();
        for atom in &self.atoms {
            for row in &atom.exposure {
                for &cell in row {
                    masses.push(atom.prob * cell);
                }
            }
        }
        let scale = (0..=24u32)
            .map(|k| (1u64 << k) as f64)
            .find(|s| {
                masses
                    .iter()
                    .all(|m| (m * s - (m * s).round()).abs() < 1e-9)
            })
            .ok_or_else(|| {
                OracleError::InvalidWorld(
                    "atom and exposure masses are not dyadic rationals".into(),
                )
            })?;
        let mut records = Vec::new();
        for (i, atom) in self.atoms.iter().enumerate() {
            for a1 in 0..2usize {
                for a2 in 0..2usize {
                    let count = (atom.prob * atom.exposure[a1][a2] * scale).round() as u64;
                    for copy in 0..count {
                        records.push(TwinPairRecord {
                            pair_id: format!("atom{i}_p{a1}{a2}_{copy}"),
                            c: atom.c.clone(),
                            x1: atom.x1.clone(),
                            x2: atom.x2.clone(),
                            a1: a1 as u8,
                            a2: a2 as u8,
                            y1: atom.po1[a1][a2],
                            y2: atom.po2[a2][a1],
                        });
                    }
                }
            }
        }
        let ds = PairedDataset::new(self.c_names.clone(), self.x_names.clone(), records)?;
        Ok(ds)
    }
}

/// True mean potential outcome under pattern `(a, b)`, averaged over twins.
pub fn true_mean_po(world: &DiscreteWorld, a: u8, b: u8) -> Result<f64, OracleError> {
    world.validate()?;
    check_pattern(a, b)?;
    let (a, b) = (a as usize, b as usize);
    let mut total = 0.0;
    for atom in &world.atoms {
        total += atom.prob * 0.5 * (atom.po1[a][b] + atom.po2[a][b]);
    }
    Ok(total)
}

/// The g-formula functional over observed covariate cells.
///
/// Computes the average over cells of the observed conditional mean outcome
/// under the requested pattern. This equals [`true_mean_po`] exactly when the
/// world is unconfounded and satisfies positivity; under confounding the two
/// disagree, which is the oracle's way of exhibiting a biased functional.
pub fn g_formula(world: &DiscreteWorld, a: u8, b: u8) -> Result<f64, OracleError> {
    world.validate()?;
    check_pattern(a, b)?;
    let (a, b) = (a as usize, b as usize);
    let mut total = 0.0;
    for cell in world.observed_cells() {
        let mass: f64 = cell.iter().map(|&i| world.atoms[i].prob).sum();
        if mass <= 0.0 {
            continue;
        }
        // Twin 1 experiences (a, b) under pattern (a, b); twin 2 under (b, a).
        let mut w1 = 0.0;
        let mut m1 = 0.0;
        let mut w2 = 0.0;
        let mut m2 = 0.0;
        for &i in &cell {
            let atom = &world.atoms[i];
            w1 += atom.prob * atom.exposure[a][b];
            m1 += atom.prob * atom.exposure[a][b] * atom.po1[a][b];
            w2 += atom.prob * atom.exposure[b][a];
            m2 += atom.prob * atom.exposure[b][a] * atom.po2[a][b];
        }
        if w1 <= 0.0 {
            return Err(OracleError::PositivityViolation {
                a1: a as u8,
                a2: b as u8,
                cell: world.describe_cell(&world.atoms[cell[0]]),
            });
        }
        if w2 <= 0.0 {
            return Err(OracleError::PositivityViolation {
                a1: b as u8,
                a2: a as u8,
                cell: world.describe_cell(&world.atoms[cell[0]]),
            });
        }
        total += mass * 0.5 * (m1 / w1 + m2 / w2);
    }
    Ok(total)
}

struct CellNuisances {
    /// Index into `observed_cells` for each atom.
    cell_of_atom: Vec<usize>,
    /// Observed conditional mean outcome for twin 1 under (a, b), per cell.
    mu1: Vec<f64>,
    /// Same for twin 2 (its own exposure a, co-twin b).
    mu2: Vec<f64>,
    /// Joint pattern probabilities given the cell, indexed `[a1][a2]`.
    joint: Vec<[[f64; 2]; 2]>,
}

fn observed_nuisances(
    world: &DiscreteWorld,
    a: usize,
    b: usize,
) -> Result<CellNuisances, OracleError> {
    let cells = world.observed_cells();
    let mut cell_of_atom = vec![0usize; world.atoms.len()];
    let mut mu1 = Vec::with_capacity(cells.len());
    let mut mu2 = Vec::with_capacity(cells.len());
    let mut joint = Vec::with_capacity(cells.len());
    for (ci, cell) in cells.iter().enumerate() {
        let mass: f64 = cell.iter().map(|&i| world.atoms[i].prob).sum();
        let mut table = [[0.0f64; 2]; 2];
        let mut w1 = 0.0;
        let mut s1 = 0.0;
        let mut w2 = 0.0;
        let mut s2 = 0.0;
        for &i in cell {
            cell_of_atom[i] = ci;
            let atom = &world.atoms[i];
            for a1 in 0..2 {
                for a2 in 0..2 {
                    table[a1][a2] += atom.prob / mass * atom.exposure[a1][a2];
                }
            }
            w1 += atom.prob * atom.exposure[a][b];
            s1 += atom.prob * atom.exposure[a][b] * atom.po1[a][b];
            w2 += atom.prob * atom.exposure[b][a];
            s2 += atom.prob * atom.exposure[b][a] * atom.po2[a][b];
        }
        for a1 in 0..2 {
            for a2 in 0..2 {
                if table[a1][a2] <= 0.0 {
                    return Err(OracleError::PositivityViolation {
                        a1: a1 as u8,
                        a2: a2 as u8,
                        cell: world.describe_cell(&world.atoms[cell[0]]),
                    });
                }
            }
        }
        mu1.push(s1 / w1);
        mu2.push(s2 / w2);
        joint.push(table);
    }
    Ok(CellNuisances {
        cell_of_atom,
        mu1,
        mu2,
        joint,
    })
}

struct OwnMargins {
    /// Index into own-covariate cells for each atom, for twins 1 and 2.
    cell_of_atom: [Vec<usize>; 2],
    /// P(own exposure = 1 | own cell), for twins 1 and 2.
    pi: [Vec<f64>; 2],
    /// P(co-twin exposure = 1 | own cell), for twins 1 and 2.
    theta: [Vec<f64>; 2],
}

fn own_margins(world: &DiscreteWorld, check_independence: bool) -> Result<OwnMargins, OracleError> {
    let mut cell_of_atom = [vec![0usize; world.atoms.len()], vec![0usize; world.atoms.len()]];
    let mut pi = [Vec::new(), Vec::new()];
    let mut theta = [Vec::new(), Vec::new()];
    for twin in [1usize, 2] {
        for (ci, cell) in world.own_cells(twin).iter().enumerate() {
            let mass: f64 = cell.iter().map(|&i| world.atoms[i].prob).sum();
            let mut joint = [[0.0f64; 2]; 2];
            for &i in cell {
                cell_of_atom[twin - 1][i] = ci;
                let atom = &world.atoms[i];
                for a1 in 0..2 {
                    for a2 in 0..2 {
                        let (own, other) = if twin == 1 { (a1, a2) } else { (a2, a1) };
                        joint[own][other] += atom.prob / mass * atom.exposure[a1][a2];
                    }
                }
            }
            let p_own = joint[1][0] + joint[1][1];
            let p_other = joint[0][1] + joint[1][1];
            if check_independence {
                for own in 0..2 {
                    for other in 0..2 {
                        let m_own = if own == 1 { p_own } else { 1.0 - p_own };
                        let m_other = if other == 1 { p_other } else { 1.0 - p_other };
                        if (joint[own][other] - m_own * m_other).abs() > INDEP_TOL {
                            return Err(OracleError::ModelAssumptionViolated {
                                model: "m2".into(),
                                assumption:
                                    "within-pair exposure independence given own covariates".into(),
                            });
                        }
                    }
                }
            }
            pi[twin - 1].push(p_own);
            theta[twin - 1].push(p_other);
        }
    }
    Ok(OwnMargins {
        cell_of_atom,
        pi,
        theta,
    })
}

/// Infinite-data limit of an estimator on this world.
///
/// The estimator sees only the observed covariate cells, so its nuisance
/// functions are conditional on `(c, x1, x2)` for the outcome and joint
/// propensity, or on `(c, x_own)` for the factorized margins. `mode` selects
/// whether each nuisance is the true conditional functional or a deliberately
/// wrong stand-in (zero outcome regression, uniform propensities). Requesting
/// exact factorized propensities on a world where the within-pair exposures
/// are dependent given own covariates is an error, because no correctly
/// specified margin model exists there.
pub fn population_estimate(
    world: &DiscreteWorld,
    model: ModelKind,
    mode: NuisanceMode,
    a: u8,
    b: u8,
) -> Result<f64, OracleError> {
    world.validate()?;
    check_pattern(a, b)?;
    if matches!(model, ModelKind::Ctc) {
        return Err(OracleError::UnsupportedModel("ctc".into()));
    }
    let (a, b) = (a as usize, b as usize);
    let obs = observed_nuisances(world, a, b)?;
    let margins = match model {
        ModelKind::M2 => Some(own_margins(world, mode.propensity_exact())?),
        _ => None,
    };

    let mut total = 0.0;
    for (i, atom) in world.atoms.iter().enumerate() {
        let cell = obs.cell_of_atom[i];
        let (mu1, mu2) = if mode.outcome_exact() {
            (obs.mu1[cell], obs.mu2[cell])
        } else {
            (0.0, 0.0)
        };
        // Denominators per twin; plugin never weights residuals.
        let (w1, w2) = match model {
            ModelKind::Plugin | ModelKind::Ctc => (1.0, 1.0),
            ModelKind::M1 => {
                if mode.propensity_exact() {
                    (obs.joint[cell][a][b], obs.joint[cell][b][a])
                } else {
                    (0.25, 0.25)
                }
            }
            ModelKind::M2 => {
                let m = margins.as_ref().unwrap();
                if mode.propensity_exact() {
                    let c1 = m.cell_of_atom[0][i];
                    let c2 = m.cell_of_atom[1][i];
                    let own1 = if a == 1 { m.pi[0][c1] } else { 1.0 - m.pi[0][c1] };
                    let oth1 = if b == 1 {
                        m.theta[0][c1]
                    } else {
                        1.0 - m.theta[0][c1]
                    };
                    let own2 = if a == 1 { m.pi[1][c2] } else { 1.0 - m.pi[1][c2] };
                    let oth2 = if b == 1 {
                        m.theta[1][c2]
                    } else {
                        1.0 - m.theta[1][c2]
                    };
                    (own1 * oth1, own2 * oth2)
                } else {
                    (0.25, 0.25)
                }
            }
        };
        for a1 in 0..2usize {
            for a2 in 0..2usize {
                let p_pattern = atom.prob * atom.exposure[a1][a2];
                if p_pattern == 0.0 {
                    continue;
                }
                let mut t1 = mu1;
                if matches!(model, ModelKind::M1 | ModelKind::M2) && a1 == a && a2 == b {
                    t1 += (atom.po1[a1][a2] - mu1) / w1;
                }
                let mut t2 = mu2;
                if matches!(model, ModelKind::M1 | ModelKind::M2) && a2 == a && a1 == b {
                    t2 += (atom.po2[a2][a1] - mu2) / w2;
                }
                total += p_pattern * 0.5 * (t1 + t2);
            }
        }
    }
    Ok(total)
}

/// Both sides of the co-twin control identity.
///
/// Conditioning event: the pair is exposure-discordant and the twins share
/// identical own covariates. The causal side contrasts each twin's potential
/// outcome under being the exposed versus the unexposed member; the
/// observational side takes the realised exposed-minus-unexposed difference.
/// The two agree when the world is exchangeable and the discordant exposure
/// assignment carries no outcome information.
pub fn ctc_effect(world: &DiscreteWorld) -> Result<CtcComparison, OracleError> {
    world.validate()?;
    let mut denom = 0.0;
    let mut causal = 0.0;
    let mut observational = 0.0;
    for atom in &world.atoms {
        if bits_key(atom.x1.iter().copied()) != bits_key(atom.x2.iter().copied()) {
            continue;
        }
        let disc = atom.exposure[1][0] + atom.exposure[0][1];
        if disc <= 0.0 {
            continue;
        }
        denom += atom.prob * disc;
        let contrast1 = atom.po1[1][0] - atom.po1[0][1];
        let contrast2 = atom.po2[1][0] - atom.po2[0][1];
        causal += atom.prob * disc * 0.5 * (contrast1 + contrast2);
        observational += atom.prob
            * (atom.exposure[1][0] * (atom.po1[1][0] - atom.po2[0][1])
                + atom.exposure[0][1] * (atom.po2[1][0] - atom.po1[0][1]));
    }
    if denom <= 0.0 {
        return Err(OracleError::DegenerateConditioning(
            "discordant pairs with matching twin covariates".into(),
        ));
    }
    Ok(CtcComparison {
        causal: causal / denom,
        observational: observational / denom,
    })
}
