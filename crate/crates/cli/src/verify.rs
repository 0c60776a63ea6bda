//! The `verify` subcommand: replay every oracle identity and counterexample
//! on the shipped fixture worlds.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use pairfx_core::{
    asymmetric_ctc_world, confounded_world, ctc_effect, g_formula, identified_world,
    interference_free_world, m2_factorized_world, population_estimate,
    positivity_violating_world, symmetric_ctc_world, true_mean_po, AssumptionProfile,
    DiscreteWorld, ModelKind, NuisanceMode,
};

const PATTERNS: [(u8, u8); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];

type Builder = fn() -> DiscreteWorld;
type CheckLine = Result<String, String>;

const WORLDS: &[(&str, Builder)] = &[
    ("identified", identified_world),
    ("confounded", confounded_world),
    ("m2_factorized", m2_factorized_world),
    ("symmetric_ctc", symmetric_ctc_world),
    ("asymmetric_ctc", asymmetric_ctc_world),
    ("interference_free", interference_free_world),
    ("positivity_violating", positivity_violating_world),
];

#[derive(clap::Args)]
pub struct VerifyArgs {
    /// Directory holding the fixture worlds.
    #[arg(long, value_name = "DIR", default_value = "data/worlds")]
    worlds_dir: PathBuf,

    /// Check a single world, by name or file name.
    #[arg(long, value_name = "WORLD")]
    world: Option<String>,

    /// Regenerate the fixture corpus from the built-in constructors.
    #[arg(long, hide = true, value_name = "DIR")]
    write_fixtures: Option<PathBuf>,
}

pub fn run(args: VerifyArgs) -> anyhow::Result<i32> {
    if let Some(dir) = &args.write_fixtures {
        fs::create_dir_all(dir)?;
        for (name, builder) in WORLDS {
            let path = dir.join(format!("{name}.json"));
            let json = serde_json::to_string_pretty(&builder())?;
            fs::write(&path, format!("{json}\n"))
                .with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        return Ok(0);
    }

    let selected: Vec<&(&str, Builder)> = match &args.world {
        Some(request) => {
            let want = request.trim_end_matches(".json");
            let found: Vec<_> = WORLDS.iter().filter(|(n, _)| *n == want).collect();
            if found.is_empty() {
                let names: Vec<&str> = WORLDS.iter().map(|(n, _)| *n).collect();
                anyhow::bail!("unknown world `{request}` (expected one of {})", names.join(", "));
            }
            found
        }
        None => WORLDS.iter().collect(),
    };

    let mut passed = 0usize;
    let mut failed = 0usize;
    for (name, builder) in selected {
        for line in check_world(&args.worlds_dir, name, *builder) {
            match line {
                Ok(detail) => {
                    passed += 1;
                    println!("PASS {name}: {detail}");
                }
                Err(detail) => {
                    failed += 1;
                    println!("FAIL {name}: {detail}");
                }
            }
        }
    }
    println!("{passed} passed, {failed} failed");
    Ok(if failed == 0 { 0 } else { 1 })
}

fn check_world(dir: &Path, name: &str, builder: Builder) -> Vec<CheckLine> {
    let path = dir.join(format!("{name}.json"));
    let world = match load_world(&path) {
        Ok(world) => world,
        Err(e) => return vec![Err(format!("{e:#}"))],
    };
    let mut lines = Vec::new();
    if world != builder() {
        lines.push(Err(
            "fixture drifted from the built-in constructor".to_string()
        ));
    }
    lines.extend(identity_checks(name, &world));
    lines
}

fn load_world(path: &Path) -> anyhow::Result<DiscreteWorld> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let world: DiscreteWorld = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))?;
    world
        .validate()
        .with_context(|| format!("validating {}", path.display()))?;
    Ok(world)
}

fn identity_checks(name: &str, world: &DiscreteWorld) -> Vec<CheckLine> {
    match name {
        "identified" => vec![
            profile_check(world, |p| p.unconfounded && p.positivity, "unconfounded with positivity"),
            g_formula_exact(world),
        ],
        "confounded" => vec![g_formula_gap(world)],
        "m2_factorized" => {
            let mut lines = vec![profile_check(
                world,
                |p| p.factorized && p.unconfounded && p.positivity,
                "factorized, unconfounded, positive",
            )];
            for model in [ModelKind::M1, ModelKind::M2] {
                lines.push(double_robustness(world, model));
            }
            lines.push(wrong_both_gap(world));
            lines
        }
        "symmetric_ctc" => vec![ctc_identity(world)],
        "asymmetric_ctc" => vec![ctc_gap(world)],
        "interference_free" => vec![
            profile_check(world, |p| p.interference_free, "free of interference"),
            zero_spillover(world),
        ],
        "positivity_violating" => vec![
            profile_check(world, |p| !p.positivity, "flagged for a positivity violation"),
            positivity_refusal(world),
        ],
        other => vec![Err(format!("no checks registered for world `{other}`"))],
    }
}

fn profile_check(
    world: &DiscreteWorld,
    pred: fn(&AssumptionProfile) -> bool,
    desc: &str,
) -> CheckLine {
    match world.verify() {
        Ok(profile) if pred(&profile) => Ok(format!("assumption profile is {desc}")),
        Ok(profile) => Err(format!("assumption profile is not {desc}: {profile:?}")),
        Err(e) => Err(format!("assumption profile failed: {e}")),
    }
}

fn max_identification_gap(world: &DiscreteWorld) -> Result<f64, String> {
    let mut gap = 0f64;
    for (a, b) in PATTERNS {
        let g = g_formula(world, a, b).map_err(|e| e.to_string())?;
        let t = true_mean_po(world, a, b).map_err(|e| e.to_string())?;
        gap = gap.max((g - t).abs());
    }
    Ok(gap)
}

fn g_formula_exact(world: &DiscreteWorld) -> CheckLine {
    let gap = max_identification_gap(world)?;
    if gap <= 1e-12 {
        Ok(format!(
            "g-formula equals the enumerated truth on every pattern (max gap {gap:.1e})"
        ))
    } else {
        Err(format!("g-formula misses the enumerated truth by {gap:.3e}"))
    }
}

fn g_formula_gap(world: &DiscreteWorld) -> CheckLine {
    let gap = max_identification_gap(world)?;
    if gap > 0.01 {
        Ok(format!("identification gap {gap:.4} exceeds 0.01"))
    } else {
        Err(format!("expected an identification gap above 0.01, got {gap:.3e}"))
    }
}

fn double_robustness(world: &DiscreteWorld, model: ModelKind) -> CheckLine {
    let mut worst = 0f64;
    for mode in [NuisanceMode::WrongOutcome, NuisanceMode::WrongPropensity] {
        for (a, b) in PATTERNS {
            let est = population_estimate(world, model, mode, a, b).map_err(|e| e.to_string())?;
            let truth = true_mean_po(world, a, b).map_err(|e| e.to_string())?;
            worst = worst.max((est - truth).abs());
        }
    }
    if worst <= 1e-10 {
        Ok(format!(
            "{model} is exact with a wrong outcome model and with wrong propensities (max error {worst:.1e})"
        ))
    } else {
        Err(format!("{model} double robustness broke: max error {worst:.3e}"))
    }
}

fn wrong_both_gap(world: &DiscreteWorld) -> CheckLine {
    let mut gaps = Vec::new();
    for model in [ModelKind::M1, ModelKind::M2] {
        let mut gap = 0f64;
        for (a, b) in PATTERNS {
            let est = population_estimate(world, model, NuisanceMode::WrongBoth, a, b)
                .map_err(|e| e.to_string())?;
            let truth = true_mean_po(world, a, b).map_err(|e| e.to_string())?;
            gap = gap.max((est - truth).abs());
        }
        gaps.push((model, gap));
    }
    if gaps.iter().all(|(_, gap)| *gap > 0.01) {
        Ok(format!(
            "wrong-both estimates miss the truth (m1 gap {:.4}, m2 gap {:.4})",
            gaps[0].1, gaps[1].1
        ))
    } else {
        Err(format!(
            "expected wrong-both gaps above 0.01, got m1 {:.3e}, m2 {:.3e}",
            gaps[0].1, gaps[1].1
        ))
    }
}

fn ctc_identity(world: &DiscreteWorld) -> CheckLine {
    let cmp = ctc_effect(world).map_err(|e| e.to_string())?;
    let gap = (cmp.causal - cmp.observational).abs();
    if gap <= 1e-12 {
        Ok(format!("co-twin-control sides agree (gap {gap:.1e})"))
    } else {
        Err(format!("co-twin-control sides differ by {gap:.3e}"))
    }
}

fn ctc_gap(world: &DiscreteWorld) -> CheckLine {
    let cmp = ctc_effect(world).map_err(|e| e.to_string())?;
    let gap = (cmp.causal - cmp.observational).abs();
    if gap > 0.01 {
        Ok(format!("co-twin-control sides differ by {gap:.4}"))
    } else {
        Err(format!("expected a co-twin-control gap above 0.01, got {gap:.3e}"))
    }
}

fn zero_spillover(world: &DiscreteWorld) -> CheckLine {
    let base = true_mean_po(world, 0, 0).map_err(|e| e.to_string())?;
    let other = true_mean_po(world, 0, 1).map_err(|e| e.to_string())?;
    let gap = (base - other).abs();
    if gap <= 1e-12 {
        Ok("true spillover effect is zero".to_string())
    } else {
        Err(format!("expected zero spillover, got {gap:.3e}"))
    }
}

fn positivity_refusal(world: &DiscreteWorld) -> CheckLine {
    match g_formula(world, 1, 1) {
        Err(e) => Ok(format!("g-formula refuses the degenerate pattern: {e}")),
        Ok(v) => Err(format!("expected a positivity failure, got {v}")),
    }
}
