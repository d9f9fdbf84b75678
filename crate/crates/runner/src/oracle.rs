//! Exact enumeration checks of the interventional model.

use std::path::Path;

use anyhow::Result;
use debias_core::causal::{
    interventional, interventional_ipw, lw_loss_by_bias, lw_loss_exact, verify_bound,
    verify_lw_ws_equivalence, ClassifierTable, DiscreteJoint, MAX_CARDINALITY,
};
use debias_core::classifier::MlpParams;
use serde::Serialize;

use crate::output::{csv_writer, write_json};

pub const BOUND_SLACK: f64 = 1e-9;
pub const EQUIVALENCE_TOL: f64 = 1e-9;
pub const IDENTITY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug)]
pub struct OracleCounts {
    pub bound: usize,
    pub equivalence: usize,
    pub identity: usize,
}

impl Default for OracleCounts {
    fn default() -> Self {
        Self {
            bound: 100,
            equivalence: 50,
            identity: 100,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundRow {
    pub instance: usize,
    pub nu: usize,
    pub nb: usize,
    pub b_invariant: bool,
    pub nill: f64,
    pub lw: f64,
    pub gap: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct EquivalenceRow {
    pub instance: usize,
    pub nu: usize,
    pub nb: usize,
    pub discrepancy: f64,
    pub normalizer: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityRow {
    pub instance: usize,
    pub nu: usize,
    pub nb: usize,
    /// Largest difference between the backdoor and IPW interventionals.
    pub interventional_diff: f64,
    /// Difference between the two enumeration orders of the LW loss.
    pub lw_diff: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub seed: u64,
    pub bound: Vec<BoundRow>,
    pub equivalence: Vec<EquivalenceRow>,
    pub identity: Vec<IdentityRow>,
    pub bound_min_slack: f64,
    pub invariant_max_gap: f64,
    pub equivalence_max: f64,
    pub identity_max: f64,
    pub passed: bool,
}

/// Instance sizes from a splitmix step, so reports do not depend on the
/// core crate's RNG layout.
fn sizes(seed: u64, max: usize) -> (usize, usize) {
    let mut z = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    let m = max as u64;
    (1 + (z % m) as usize, 1 + ((z >> 32) % m) as usize)
}

pub fn oracle_check(seed: u64, counts: OracleCounts) -> Result<OracleReport> {
    let base = seed.wrapping_mul(1_000_003);
    let mut bound = Vec::with_capacity(counts.bound);
    for i in 0..counts.bound {
        let s = base.wrapping_add(i as u64);
        let (nu, nb) = sizes(s, MAX_CARDINALITY);
        let invariant = i % 2 == 1;
        let j = DiscreteJoint::<f64>::random(nu, nb, s)?;
        let q = ClassifierTable::<f64>::random(nu, nb, nu, invariant, s ^ 0xc1a5)?;
        let r = verify_bound(&j, &q)?;
        let ok = r.gap >= -BOUND_SLACK && (!invariant || r.gap.abs() < BOUND_SLACK);
        bound.push(BoundRow {
            instance: i,
            nu,
            nb,
            b_invariant: invariant,
            nill: r.nill,
            lw: r.lw,
            gap: r.gap,
            ok,
        });
    }
    let mut equivalence = Vec::with_capacity(counts.equivalence);
    for i in 0..counts.equivalence {
        let s = base.wrapping_add(10_000 + i as u64);
        let (nu, nb) = sizes(s, 4);
        let j = DiscreteJoint::<f64>::random(nu, nb, s)?;
        let p = MlpParams::<f64>::init(&[nu + nb, 6, nu], s)?;
        let r = verify_lw_ws_equivalence(&j, &p)?;
        equivalence.push(EquivalenceRow {
            instance: i,
            nu,
            nb,
            discrepancy: r.discrepancy,
            normalizer: r.normalizer,
            ok: r.discrepancy < EQUIVALENCE_TOL,
        });
    }
    let mut identity = Vec::with_capacity(counts.identity);
    for i in 0..counts.identity {
        let s = base.wrapping_add(20_000 + i as u64);
        let (nu, nb) = sizes(s, MAX_CARDINALITY);
        let j = DiscreteJoint::<f64>::random(nu, nb, s)?;
        let q = ClassifierTable::<f64>::random(nu, nb, nu, false, s ^ 0x1d)?;
        let a = interventional(&j, &q)?;
        let b = interventional_ipw(&j, &q)?;
        let interventional_diff = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let lw_diff = (lw_loss_exact(&j, &q)? - lw_loss_by_bias(&j, &q)?).abs();
        identity.push(IdentityRow {
            instance: i,
            nu,
            nb,
            interventional_diff,
            lw_diff,
            ok: interventional_diff < IDENTITY_TOL && lw_diff < IDENTITY_TOL,
        });
    }
    let bound_min_slack = bound.iter().map(|r| r.gap).fold(f64::INFINITY, f64::min);
    let invariant_max_gap = bound
        .iter()
        .filter(|r| r.b_invariant)
        .map(|r| r.gap.abs())
        .fold(0.0, f64::max);
    let equivalence_max = equivalence
        .iter()
        .map(|r| r.discrepancy)
        .fold(0.0, f64::max);
    let identity_max = identity
        .iter()
        .map(|r| r.interventional_diff.max(r.lw_diff))
        .fold(0.0, f64::max);
    let passed = bound.iter().all(|r| r.ok)
        && equivalence.iter().all(|r| r.ok)
        && identity.iter().all(|r| r.ok);
    Ok(OracleReport {
        seed,
        bound,
        equivalence,
        identity,
        bound_min_slack,
        invariant_max_gap,
        equivalence_max,
        identity_max,
        passed,
    })
}

/// `oracle_check.json` plus one CSV per check.
pub fn write_oracle_report(report: &OracleReport, out: &Path) -> Result<()> {
    crate::output::create_dir(out)?;
    write_json(&out.join("oracle_check.json"), report)?;
    let mut w = csv_writer(&out.join("bound.csv"))?;
    for r in &report.bound {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut w = csv_writer(&out.join("equivalence.csv"))?;
    for r in &report.equivalence {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut w = csv_writer(&out.join("identity.csv"))?;
    for r in &report.identity {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
