//! Canonical discrete worlds with known assumption profiles.
//!
//! Each builder produces a small world whose probabilities are dyadic
//! rationals, so [`DiscreteWorld::to_dataset`] can expand it into an exact
//! finite dataset. The shared covariate is named `zygosity` and coded 0/1 so
//! the worlds also exercise subgroup machinery.

use super::{Atom, DiscreteWorld};

/// Scales an integer table by 1/16.
fn sixteenths(cells: [[u32; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [f64::from(cells[0][0]) / 16.0, f64::from(cells[0][1]) / 16.0],
        [f64::from(cells[1][0]) / 16.0, f64::from(cells[1][1]) / 16.0],
    ]
}

fn names() -> (Vec<String>, Vec<String>) {
    (vec!["zygosity".to_string()], vec!["x".to_string()])
}

/// Symmetric dependent exposure tables indexed by `c + x1 + x2`.
fn dependent_exposure(level: usize) -> [[f64; 2]; 2] {
    match level {
        0 => sixteenths([[6, 2], [2, 6]]),
        1 => sixteenths([[5, 3], [3, 5]]),
        2 => sixteenths([[4, 3], [3, 6]]),
        _ => sixteenths([[3, 3], [3, 7]]),
    }
}

/// A world where effects are identified but the joint propensity does not
/// factorize: within-pair exposures stay dependent given own covariates.
///
/// Outcomes are `1 + 2a + b + c + x_own`, so the mean potential outcome under
/// pattern `(a, b)` is exactly `2 + 2a + b`.
pub fn identified_world() -> DiscreteWorld {
    let (c_names, x_names) = names();
    let mut atoms = Vec::new();
    for c in 0..2u32 {
        for x1 in 0..2u32 {
            for x2 in 0..2u32 {
                let po = |x: u32| {
                    let mut table = [[0.0f64; 2]; 2];
                    for (a, row) in table.iter_mut().enumerate() {
                        for (b, y) in row.iter_mut().enumerate() {
                            *y = 1.0 + 2.0 * a as f64 + b as f64 + f64::from(c) + f64::from(x);
                        }
                    }
                    table
                };
                atoms.push(Atom {
                    prob: 1.0 / 8.0,
                    u: 0,
                    c: vec![f64::from(c)],
                    x1: vec![f64::from(x1)],
                    x2: vec![f64::from(x2)],
                    exposure: dependent_exposure((c + x1 + x2) as usize),
                    po1: po(x1),
                    po2: po(x2),
                });
            }
        }
    }
    DiscreteWorld {
        c_names,
        x_names,
        atoms,
    }
}

/// A world with an unobserved stratum that drives both exposure and outcome.
///
/// Conditioning on the observed covariates cannot remove the dependence, so
/// the g-formula is biased for the true mean potential outcome.
pub fn confounded_world() -> DiscreteWorld {
    let (c_names, x_names) = names();
    let mut atoms = Vec::new();
    for c in 0..2u32 {
        for u in 0..2i64 {
            let exposure = if u == 0 {
                sixteenths([[9, 3], [2, 2]])
            } else {
                sixteenths([[2, 2], [3, 9]])
            };
            let mut po = [[0.0f64; 2]; 2];
            for (a, row) in po.iter_mut().enumerate() {
                for (b, y) in row.iter_mut().enumerate() {
                    *y = 1.0 + a as f64 + 0.5 * b as f64 + 4.0 * u as f64 + f64::from(c);
                }
            }
            atoms.push(Atom {
                prob: 0.25,
                u,
                c: vec![f64::from(c)],
                x1: vec![0.0],
                x2: vec![0.0],
                exposure,
                po1: po,
                po2: po,
            });
        }
    }
    DiscreteWorld {
        c_names,
        x_names,
        atoms,
    }
}

/// A world whose exposures are conditionally independent given each twin's
/// own covariates, so the factorized propensity model is correctly specified.
///
/// Each twin's exposure is Bernoulli with success probability
/// `(2 + 2c + x_own) / 8`, and outcomes are
/// `2 + a + 0.5b + c + x_own - 0.5ab`, giving mean potential outcomes
/// `3 + a + 0.5b - 0.5ab`.
pub fn m2_factorized_world() -> DiscreteWorld {
    let (c_names, x_names) = names();
    let margin = |c: u32, x: u32| (2.0 + 2.0 * f64::from(c) + f64::from(x)) / 8.0;
    let mut atoms = Vec::new();
    for c in 0..2u32 {
        for x1 in 0..2u32 {
            for x2 in 0..2u32 {
                let e1 = margin(c, x1);
                let e2 = margin(c, x2);
                let mut exposure = [[0.0f64; 2]; 2];
                for (a1, row) in exposure.iter_mut().enumerate() {
                    for (a2, p) in row.iter_mut().enumerate() {
                        let p1 = if a1 == 1 { e1 } else { 1.0 - e1 };
                        let p2 = if a2 == 1 { e2 } else { 1.0 - e2 };
                        *p = p1 * p2;
                    }
                }
                let po = |x: u32| {
                    let mut table = [[0.0f64; 2]; 2];
                    for (a, row) in table.iter_mut().enumerate() {
                        for (b, y) in row.iter_mut().enumerate() {
                            *y = 2.0 + a as f64 + 0.5 * b as f64 + f64::from(c) + f64::from(x)
                                - 0.5 * (a * b) as f64;
                        }
                    }
                    table
                };
                atoms.push(Atom {
                    prob: 1.0 / 8.0,
                    u: 0,
                    c: vec![f64::from(c)],
                    x1: vec![f64::from(x1)],
                    x2: vec![f64::from(x2)],
                    exposure,
                    po1: po(x1),
                    po2: po(x2),
                });
            }
        }
    }
    DiscreteWorld {
        c_names,
        x_names,
        atoms,
    }
}

/// An exchangeable world for the co-twin control identity.
///
/// An unobserved level shift `u` creates heterogeneity inside observed cells
/// without touching exposure, so both sides of the identity must average over
/// it; exchangeability keeps them equal.
pub fn symmetric_ctc_world() -> DiscreteWorld {
    let (c_names, x_names) = names();
    let mut atoms = Vec::new();
    for c in 0..2u32 {
        for x1 in 0..2u32 {
            for x2 in 0..2u32 {
                for u in 0..2i64 {
                    let po = |x: u32| {
                        let mut table = [[0.0f64; 2]; 2];
                        for (a, row) in table.iter_mut().enumerate() {
                            for (b, y) in row.iter_mut().enumerate() {
                                *y = 1.0
                                    + (1.0 + f64::from(c)) * a as f64
                                    + b as f64
                                    + f64::from(x) * a as f64
                                    + u as f64;
                            }
                        }
                        table
                    };
                    atoms.push(Atom {
                        prob: 1.0 / 16.0,
                        u,
                        c: vec![f64::from(c)],
                        x1: vec![f64::from(x1)],
                        x2: vec![f64::from(x2)],
                        exposure: dependent_exposure((c + x1 + x2) as usize),
                        po1: po(x1),
                        po2: po(x2),
                    });
                }
            }
        }
    }
    DiscreteWorld {
        c_names,
        x_names,
        atoms,
    }
}

/// A world that breaks twin exchangeability in both directions at once:
/// exposure assignment favors twin 2 while twin 2's outcome responds less.
///
/// The discordant observational contrast is then selection-biased for the
/// causal one.
pub fn asymmetric_ctc_world() -> DiscreteWorld {
    let (c_names, x_names) = names();
    let mut po1 = [[0.0f64; 2]; 2];
    let mut po2 = [[0.0f64; 2]; 2];
    for a in 0..2usize {
        for b in 0..2usize {
            po1[a][b] = 1.0 + 2.0 * a as f64 + b as f64;
            po2[a][b] = 1.0 + 0.5 * a as f64 + b as f64;
        }
    }
    DiscreteWorld {
        c_names,
        x_names,
        atoms: vec![Atom {
            prob: 1.0,
            u: 0,
            c: vec![0.0],
            x1: vec![0.0],
            x2: vec![0.0],
            exposure: sixteenths([[4, 6], [2, 4]]),
            po1,
            po2,
        }],
    }
}

/// A factorized, unconfounded world where the co-twin's exposure never moves
/// any outcome, so every spillover contrast is exactly zero.
pub fn interference_free_world() -> DiscreteWorld {
    let mut world = m2_factorized_world();
    for atom in &mut world.atoms {
        let x1 = atom.x1[0];
        let x2 = atom.x2[0];
        let c = atom.c[0];
        for a in 0..2usize {
            for b in 0..2usize {
                atom.po1[a][b] = 2.0 + a as f64 + c + x1;
                atom.po2[a][b] = 2.0 + a as f64 + c + x2;
            }
        }
    }
    world
}

/// A world where one covariate cell never realises the doubly-exposed
/// pattern, so functionals that need it must report the violating cell.
pub fn positivity_violating_world() -> DiscreteWorld {
    let (c_names, x_names) = names();
    let mut atoms = Vec::new();
    for c in 0..2u32 {
        let exposure = if c == 0 {
            sixteenths([[8, 4], [4, 0]])
        } else {
            sixteenths([[6, 4], [3, 3]])
        };
        let mut po = [[0.0f64; 2]; 2];
        for (a, row) in po.iter_mut().enumerate() {
            for (b, y) in row.iter_mut().enumerate() {
                *y = 1.0 + a as f64 + b as f64 + f64::from(c);
            }
        }
        atoms.push(Atom {
            prob: 0.5,
            u: 0,
            c: vec![f64::from(c)],
            x1: vec![0.0],
            x2: vec![0.0],
            exposure,
            po1: po,
            po2: po,
        });
    }
    DiscreteWorld {
        c_names,
        x_names,
        atoms,
    }
}
