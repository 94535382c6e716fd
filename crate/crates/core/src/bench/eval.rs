use super::Scripted;
use crate::deploy::{evaluate_pair, ActMode, Controller, DeployError, EvalResult, Ensemble};
use crate::env::{Layout, RewardConfig};
use crate::par::{self, derive_seed, Parallelism};
use crate::policy::PolicyParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write;
use std::sync::Arc;

/// One test partner. Policy members hold one population per training seed,
/// cycled when there are fewer populations than seeds; a population of
/// more than one acts by plurality vote.
#[derive(Clone, Debug, PartialEq)]
pub enum SuiteMember {
    Policies { name: String, per_seed: Vec<Vec<PolicyParams>> },
    Scripted { name: String },
}

impl SuiteMember {
    pub fn name(&self) -> &str {
        match self {
            SuiteMember::Policies { name, .. } | SuiteMember::Scripted { name } => name,
        }
    }

    /// The human-proxy substitute.
    pub fn scripted() -> Self {
        SuiteMember::Scripted { name: "scripted (human-proxy substitute)".into() }
    }

    fn controller(&self, seed_index: usize) -> Result<Box<dyn Controller + '_>, DeployError> {
        match self {
            SuiteMember::Policies { per_seed, .. } => {
                if per_seed.is_empty() {
                    return Err(DeployError::NoPartners);
                }
                match per_seed[seed_index % per_seed.len()].as_slice() {
                    [single] => Ok(Box::new(single)),
                    many => Ok(Box::new(Ensemble::new(many.to_vec())?)),
                }
            }
            SuiteMember::Scripted { .. } => Ok(Box::new(Scripted)),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PartnerSuite {
    pub members: Vec<SuiteMember>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub mean: f64,
    pub std: f64,
}

/// One (layout, partner, method, seed) evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub layout: String,
    pub partner: String,
    pub method: String,
    pub seed: u64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalMatrix {
    pub layout: String,
    pub methods: Vec<String>,
    pub partners: Vec<String>,
    /// `cells[method][partner]`, pooled over seeds and episodes.
    pub cells: Vec<Vec<EvalCell>>,
    pub records: Vec<EvalRecord>,
}

/// `"mean ± std"` with one decimal.
pub fn format_cell(mean: f64, std: f64) -> String {
    format!("{mean:.1} ± {std:.1}")
}

/// Rank 1 for the largest value; tied values share the mean of their ranks.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|a, b| values[*b].total_cmp(&values[*a]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// Mean rank of each row across all columns.
pub fn average_ranks(cells: &[Vec<EvalCell>]) -> Vec<f64> {
    let rows = cells.len();
    let cols = cells.first().map_or(0, |r| r.len());
    let mut total = vec![0.0; rows];
    for c in 0..cols {
        let column: Vec<f64> = cells.iter().map(|r| r[c].mean).collect();
        for (t, r) in total.iter_mut().zip(fractional_ranks(&column)) {
            *t += r;
        }
    }
    total.into_iter().map(|t| if cols == 0 { 0.0 } else { t / cols as f64 }).collect()
}

impl EvalMatrix {
    pub fn average_ranks(&self) -> Vec<f64> {
        average_ranks(&self.cells)
    }

    /// Plain-text table: one row per method, one column per partner, and an
    /// average-rank column.
    pub fn render_table(&self) -> String {
        let mut header = vec![format!("{} / partner", self.layout)];
        header.extend(self.partners.iter().cloned());
        header.push("avg rank".into());
        let ranks = self.average_ranks();
        let mut rows = vec![header];
        for (m, name) in self.methods.iter().enumerate() {
            let mut row = vec![name.clone()];
            row.extend(self.cells[m].iter().map(|c| format_cell(c.mean, c.std)));
            row.push(format!("{:.2}", ranks[m]));
            rows.push(row);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in rows.iter().enumerate() {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(s, w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
                .collect();
            writeln!(out, "| {} |", cells.join(" | ")).expect("string write");
            if i == 0 {
                let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
                writeln!(out, "|-{}-|", rule.join("-|-")).expect("string write");
            }
        }
        out
    }
}

/// Evaluates every method's deployed populations (one per seed, acting by
/// plurality vote as player 1) with every suite member as player 2.
#[allow(clippy::too_many_arguments)]
pub fn cross_evaluate(
    agents_by_method: &[(String, Vec<Vec<PolicyParams>>)],
    seeds: &[u64],
    suite: &PartnerSuite,
    layout: &Arc<Layout>,
    rewards: &RewardConfig,
    episodes: usize,
    mode: ActMode,
    par: Parallelism,
) -> Result<EvalMatrix, DeployError> {
    let mut jobs = Vec::new();
    for (m, (_, per_seed)) in agents_by_method.iter().enumerate() {
        if per_seed.len() != seeds.len() {
            return Err(DeployError::EmptyPopulation);
        }
        for p in 0..suite.members.len() {
            for s in 0..seeds.len() {
                jobs.push((m, p, s));
            }
        }
    }
    let results = par::map(par, &jobs, |_, &(m, p, s)| -> Result<EvalResult, DeployError> {
        let agent = Ensemble::new(agents_by_method[m].1[s].clone())?;
        let partner = suite.members[p].controller(s)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seeds[s], &[m as u64, p as u64]));
        evaluate_pair(&agent, &*partner, layout, rewards, episodes, mode, &mut rng)
    });

    let n_m = agents_by_method.len();
    let n_p = suite.members.len();
    let mut pooled = vec![vec![Vec::new(); n_p]; n_m];
    let mut records = Vec::with_capacity(jobs.len());
    for (&(m, p, s), r) in jobs.iter().zip(results) {
        let r = r?;
        records.push(EvalRecord {
            layout: layout.name().to_string(),
            partner: suite.members[p].name().to_string(),
            method: agents_by_method[m].0.clone(),
            seed: seeds[s],
            mean: r.mean,
            std: r.std,
        });
        pooled[m][p].extend(r.returns);
    }
    let cells = pooled
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|returns| {
                    let r = EvalResult::from_returns(returns);
                    EvalCell { mean: r.mean, std: r.std }
                })
                .collect()
        })
        .collect();
    Ok(EvalMatrix {
        layout: layout.name().to_string(),
        methods: agents_by_method.iter().map(|(n, _)| n.clone()).collect(),
        partners: suite.members.iter().map(|m| m.name().to_string()).collect(),
        cells,
        records,
    })
}
