use std::path::Path;

use anyhow::bail;
use serde::{Deserialize, Serialize};
use uwise_core::analysis::{estimate_zeta, BandCheck, SamplerSpec, ZetaEstimate};
use uwise_core::SeedTree;

use crate::config::load;
use crate::output::{write_csv, write_json};
use crate::{Context, Outcome};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZetaConfig {
    #[serde(default = "lognormal")]
    pub sampler: SamplerSpec,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Overlaps to tabulate; `0..=m` by default. Must include 1 and `m`.
    #[serde(default)]
    pub c: Option<Vec<usize>>,
}

impl Default for ZetaConfig {
    fn default() -> Self {
        Self { sampler: lognormal(), m: default_m(), replicates: default_replicates(), c: None }
    }
}

fn lognormal() -> SamplerSpec {
    SamplerSpec::Lognormal { sigma: 1.0 }
}

fn default_m() -> usize {
    8
}

fn default_replicates() -> usize {
    20_000
}

#[derive(Debug, Serialize)]
struct ZetaTable {
    m: usize,
    replicates: usize,
    rows: Vec<ZetaEstimate>,
    /// Whether the point estimates grow with `c` (observation only).
    nondecreasing_in_c: bool,
    check: BandCheck,
}

pub fn run(ctx: &Context, path: Option<&Path>) -> anyhow::Result<Outcome> {
    let config: ZetaConfig = load(path)?;
    let m = config.m;
    if m == 0 {
        bail!("m must be at least 1");
    }
    let mut cs = config.c.clone().unwrap_or_else(|| (0..=m).collect());
    cs.sort_unstable();
    cs.dedup();
    if !cs.contains(&1) || !cs.contains(&m) {
        bail!("the c list must include 1 and m = {m}");
    }
    let root = SeedTree::new(ctx.seed);
    let rows = cs
        .iter()
        .map(|&c| estimate_zeta(&config.sampler, m, c, config.replicates, root.child("zeta").index(c as u64)))
        .collect::<uwise_core::Result<Vec<_>>>()?;
    let get = |c: usize| rows.iter().find(|r| r.c == c).expect("c present");
    let (z1, zm) = (get(1), get(m));
    let mf = m as f64;
    let se = ((mf * z1.std_error).powi(2) + zm.std_error.powi(2)).sqrt();
    let check = BandCheck::at_most("m zeta_1 <= zeta_m", mf * z1.value, zm.value, se);

    println!("{:>4} {:>14} {:>12}", "c", "zeta_c", "std_error");
    for r in &rows {
        println!("{:>4} {:>14.6e} {:>12.3e}", r.c, r.value, r.std_error);
    }
    println!("{}", check.line());

    write_csv(
        &ctx.out.join("zeta.csv"),
        "c,zeta,std_error,R",
        rows.iter().map(|r| format!("{},{},{},{}", r.c, r.value, r.std_error, r.replicates)),
    )?;
    let passed = check.passed;
    let table = ZetaTable {
        m,
        replicates: config.replicates,
        nondecreasing_in_c: rows.windows(2).all(|w| w[0].value <= w[1].value),
        rows,
        check,
    };
    write_json(&ctx.out.join("zeta.json"), &table)?;
    Ok(if passed { Outcome::Passed } else { Outcome::Failed })
}
