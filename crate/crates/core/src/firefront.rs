//! Quasi-exact breadth-wise probability propagation.
//!
//! The firefront set F carries the mass still being propagated; states whose
//! accumulated mass drops below `alpha` are parked in the neglected set N
//! (and re-promoted if they later accumulate enough); stable states and
//! oracle-recognized states absorb into A. The run stops when the firefront
//! mass falls to `beta` or the iteration cap is hit. Per attractor, the
//! absorbed mass is a lower bound on the true reachability probability; the
//! undelivered mass `P(F) + P(N)` bounds the gap.

use std::collections::BTreeMap;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::model::{LogicalModel, StateCode};
use crate::parse::{ModelDocument, OracleSpec};
use crate::report::{AbsorptionResult, AttractorOutcome, Method};
use crate::stg::AttractorKind;
use crate::SparseDistribution;

/// Iteration cap ceiling, 2^31.
const MAX_ITERATION_CEILING: u64 = 1 << 31;

#[derive(Debug, Clone)]
pub struct FirefrontConfig {
    /// Mass threshold below which a state is neglected.
    pub alpha: f64,
    /// Termination threshold on the total firefront mass.
    pub beta: f64,
    pub max_iterations: u64,
    pub oracles: Vec<OracleSpec>,
    /// Record a per-iteration trace table.
    pub trace: bool,
}

impl FirefrontConfig {
    /// Defaults for a model: `alpha` 1e-5, `beta` 1e-3, iteration cap
    /// `|S|^2` clamped to 2^31.
    pub fn for_model(model: &LogicalModel) -> Self {
        FirefrontConfig {
            alpha: 1e-5,
            beta: 1e-3,
            max_iterations: default_max_iterations(model),
            oracles: Vec::new(),
            trace: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::model("alpha must be in (0, 1)"));
        }
        if !(self.beta >= 0.0 && self.beta < 1.0) {
            return Err(Error::model("beta must be in [0, 1)"));
        }
        if self.max_iterations < 1 {
            return Err(Error::model("max iterations must be >= 1"));
        }
        Ok(())
    }
}

pub fn default_max_iterations(model: &LogicalModel) -> u64 {
    let s = model.state_count();
    let squared = s.saturating_mul(s);
    squared.min(u128::from(MAX_ITERATION_CEILING)) as u64
}

/// Key of the absorbed-mass map: a point attractor state, or an oracle.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum AttractorKey {
    Point(StateCode),
    Oracle(String),
}

/// The three probability pools of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FirefrontState {
    pub f: SparseDistribution,
    pub n: SparseDistribution,
    pub a: BTreeMap<AttractorKey, f64>,
    pub iteration: u64,
}

impl FirefrontState {
    pub fn start(v0: StateCode) -> Self {
        FirefrontState {
            f: SparseDistribution::from([(v0, 1.0)]),
            ..Default::default()
        }
    }

    pub fn p_f(&self) -> f64 {
        self.f.values().fold(0.0, |acc, p| acc + p)
    }

    pub fn p_n(&self) -> f64 {
        self.n.values().fold(0.0, |acc, p| acc + p)
    }

    pub fn p_a(&self) -> f64 {
        self.a.values().fold(0.0, |acc, p| acc + p)
    }
}

fn oracle_key(oracles: &[OracleSpec], state: &[u8]) -> Option<String> {
    oracles
        .iter()
        .find(|o| o.matches(state))
        .map(|o| o.id.clone())
}

/// One breadth step: expands every firefront state in ascending code order,
/// distributing its mass uniformly over its successors into F', N and A.
pub fn firefront_step(
    model: &LogicalModel,
    st: &FirefrontState,
    cfg: &FirefrontConfig,
) -> FirefrontState {
    let mut f_next = SparseDistribution::new();
    let mut n = st.n.clone();
    let mut a = st.a.clone();

    for (&v_code, &mass) in &st.f {
        let v = model.decode(v_code).expect("firefront state decodes");
        let succs = model.successors(&v);
        if succs.is_empty() {
            // point attractor; an oracle covering it takes the key
            let key = match oracle_key(&cfg.oracles, &v) {
                Some(id) => AttractorKey::Oracle(id),
                None => AttractorKey::Point(v_code),
            };
            *a.entry(key).or_insert(0.0) += mass;
            continue;
        }
        if let Some(id) = oracle_key(&cfg.oracles, &v) {
            *a.entry(AttractorKey::Oracle(id)).or_insert(0.0) += mass;
            continue;
        }
        let share = mass / succs.len() as f64;
        for w in &succs {
            let w_code = model.encode(w);
            if let Some(p) = a.get_mut(&AttractorKey::Point(w_code)) {
                *p += share;
                continue;
            }
            if let Some(id) = oracle_key(&cfg.oracles, w) {
                *a.entry(AttractorKey::Oracle(id)).or_insert(0.0) += share;
                continue;
            }
            if model.successor_count(w) == 0 {
                // a reached point attractor absorbs immediately
                *a.entry(AttractorKey::Point(w_code)).or_insert(0.0) += share;
                continue;
            }
            if let Some(p) = f_next.get_mut(&w_code) {
                *p += share;
            } else if let Some(&parked) = n.get(&w_code) {
                let total = parked + share;
                if total >= cfg.alpha {
                    n.remove(&w_code);
                    f_next.insert(w_code, total);
                } else {
                    n.insert(w_code, total);
                }
            } else if share >= cfg.alpha {
                f_next.insert(w_code, share);
            } else {
                n.insert(w_code, share);
            }
        }
    }

    FirefrontState {
        f: f_next,
        n,
        a,
        iteration: st.iteration + 1,
    }
}

/// One trace table row: set sizes and masses after an iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: u64,
    pub f_count: usize,
    pub n_count: usize,
    pub a_count: usize,
    pub p_f: f64,
    pub p_n: f64,
    pub p_a: f64,
}

fn trace_row(st: &FirefrontState) -> TraceRow {
    TraceRow {
        iteration: st.iteration,
        f_count: st.f.len(),
        n_count: st.n.len(),
        a_count: st.a.len(),
        p_f: st.p_f(),
        p_n: st.p_n(),
        p_a: st.p_a(),
    }
}

/// Renders a trace table as CSV.
pub fn emit_trace(rows: &[TraceRow]) -> String {
    let mut out = String::from("iteration,f_count,n_count,a_count,p_f,p_n,p_a\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.iteration, r.f_count, r.n_count, r.a_count, r.p_f, r.p_n, r.p_a
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct FirefrontRun {
    pub result: AbsorptionResult,
    pub final_state: FirefrontState,
    pub trace: Option<Vec<TraceRow>>,
}

/// Runs the propagation from the document's (point) initial state until the
/// firefront mass drops to `beta` or the iteration cap.
pub fn firefront_run(
    model: &LogicalModel,
    doc: &ModelDocument,
    cfg: &FirefrontConfig,
) -> Result<FirefrontRun> {
    cfg.validate()?;
    if doc.initial.is_sampling() {
        return Err(Error::Unsupported(
            "firefront requires a point initial state; sampling is not supported".into(),
        ));
    }
    let start = Instant::now();
    let v0 = model.encode(&doc.initial.base_state(model));
    let mut st = FirefrontState::start(v0);
    let mut trace = cfg.trace.then(|| vec![trace_row(&st)]);

    while st.p_f() > cfg.beta && st.iteration < cfg.max_iterations {
        st = firefront_step(model, &st, cfg);
        if let Some(rows) = trace.as_mut() {
            rows.push(trace_row(&st));
        }
    }

    let p_f = st.p_f();
    let p_n = st.p_n();
    // undelivered mass bounds the gap between the absorbed lower bound and
    // the true probability
    let gap = p_f + p_n;
    let attractors = st
        .a
        .iter()
        .map(|(key, &lower)| {
            let (oracle_id, kind, size, members) = match key {
                AttractorKey::Point(code) => (None, AttractorKind::Point, 1, vec![*code]),
                AttractorKey::Oracle(id) => {
                    let oracle = cfg.oracles.iter().find(|o| &o.id == id);
                    let size = oracle.map_or(0, |o| o.state_count(model));
                    (Some(id.clone()), AttractorKind::Complex, size, vec![])
                }
            };
            AttractorOutcome {
                oracle_id,
                kind,
                size,
                members,
                probability: lower,
                lower_bound: Some(lower),
                upper_bound: Some((lower + gap).min(1.0)),
                std_error: None,
                avg_depth: None,
                inputs: None,
            }
        })
        .collect();

    let mut result = AbsorptionResult {
        model: String::new(),
        method: Method::Firefront,
        parameters: BTreeMap::from([
            ("alpha".to_string(), serde_json::Value::from(cfg.alpha)),
            ("beta".to_string(), serde_json::Value::from(cfg.beta)),
            (
                "max_iterations".to_string(),
                serde_json::Value::from(cfg.max_iterations),
            ),
            ("p_f_final".to_string(), serde_json::Value::from(p_f)),
            ("p_n_final".to_string(), serde_json::Value::from(p_n)),
        ]),
        attractors,
        residual: gap,
        iterations: Some(st.iteration),
        runs: None,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    result.sort_attractors();

    Ok(FirefrontRun {
        result,
        final_state: st,
        trace,
    })
}
