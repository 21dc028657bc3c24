//! Exact absorption probabilities of the absorbing chain induced by an STG.
//!
//! Terminal SCCs collapse to single absorbing columns; transient states keep
//! their identity. Absorption is solved either directly (fundamental-matrix
//! linear system) or by truncated block-power accumulation; the two routes
//! cross-check each other in the test suites.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::model::StateCode;
use crate::parse::ModelDocument;
use crate::report::{AbsorptionResult, AttractorOutcome, Method};
use crate::stg::{attractors, build_stg, tarjan_scc, Attractor, ExplicitStg, SccDecomposition};
use crate::SparseDistribution;

/// Above this many transient states the direct solve switches to iterative
/// accumulation; a dense factorization would not fit time or memory budgets.
const DENSE_SOLVE_LIMIT: usize = 2048;

/// Iteration guard for the iterative routes.
const MAX_POWER_ITERATIONS: u64 = 10_000_000;

/// The stopped chain: transient states in ascending code order, absorbing
/// classes collapsed to single columns, and the row-sparse Q and P blocks.
#[derive(Debug, Clone)]
pub struct AbsorbingChain {
    pub transient: Vec<StateCode>,
    pub attractors: Vec<Attractor>,
    /// Per transient row: (transient column, probability).
    pub q_rows: Vec<Vec<(usize, f64)>>,
    /// Per transient row: (absorbing class column, probability).
    pub p_rows: Vec<Vec<(usize, f64)>>,
}

impl AbsorbingChain {
    /// Assembles a chain from raw parts, checking that every row of (Q|P) is
    /// a probability distribution.
    pub fn from_parts(
        transient: Vec<StateCode>,
        attractors: Vec<Attractor>,
        q_rows: Vec<Vec<(usize, f64)>>,
        p_rows: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self> {
        let chain = AbsorbingChain {
            transient,
            attractors,
            q_rows,
            p_rows,
        };
        chain.check_rows()?;
        Ok(chain)
    }

    pub fn transient_count(&self) -> usize {
        self.transient.len()
    }

    pub fn transient_index(&self, code: StateCode) -> Option<usize> {
        self.transient.binary_search(&code).ok()
    }

    fn check_rows(&self) -> Result<()> {
        if self.q_rows.len() != self.transient.len() || self.p_rows.len() != self.transient.len()
        {
            return Err(Error::model("chain row count mismatch"));
        }
        for u in 0..self.transient.len() {
            let total: f64 = self.q_rows[u].iter().map(|&(_, p)| p).sum::<f64>()
                + self.p_rows[u].iter().map(|&(_, p)| p).sum::<f64>();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::model(format!(
                    "chain row {u} sums to {total}, expected 1"
                )));
            }
        }
        Ok(())
    }
}

/// Builds the absorbing chain of a decomposed STG. Each terminal SCC becomes
/// one absorbing column with `pi(u, a) = sum over members of Pi(u, v)`.
pub fn build_chain(stg: &ExplicitStg, dec: &SccDecomposition) -> AbsorbingChain {
    let attrs = attractors(stg, dec);
    // terminal scc id -> attractor column
    let mut attr_col: HashMap<usize, usize> = HashMap::new();
    for (col, a) in attrs.iter().enumerate() {
        let idx = stg.index_of(a.smallest()).expect("attractor state in stg");
        attr_col.insert(dec.component_id[idx], col);
    }

    let mut transient: Vec<StateCode> = (0..stg.state_count())
        .filter(|&i| !dec.terminal[dec.component_id[i]])
        .map(|i| stg.code(i))
        .collect();
    transient.sort();
    let t_index: HashMap<StateCode, usize> = transient
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, i))
        .collect();

    let mut q_rows = vec![Vec::new(); transient.len()];
    let mut p_rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); transient.len()];
    for (row, &code) in transient.iter().enumerate() {
        let idx = stg.index_of(code).expect("transient state in stg");
        let succs = stg.successors(idx);
        let share = 1.0 / succs.len() as f64;
        for &w in succs {
            let w_code = stg.code(w);
            match t_index.get(&w_code) {
                Some(&col) => q_rows[row].push((col, share)),
                None => {
                    let col = attr_col[&dec.component_id[w]];
                    *p_rows[row].entry(col).or_insert(0.0) += share;
                }
            }
        }
    }

    AbsorbingChain {
        transient,
        attractors: attrs,
        q_rows,
        p_rows: p_rows
            .into_iter()
            .map(|m| m.into_iter().collect())
            .collect(),
    }
}

/// Per-attractor absorption mass plus the probability still unabsorbed.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionVector {
    pub probabilities: Vec<f64>,
    pub residual: f64,
}

/// Splits an initial distribution into transient mass (indexed by transient
/// position) and mass already sitting on absorbing classes.
fn split_initial(
    chain: &AbsorbingChain,
    mu0: &SparseDistribution,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut b = vec![0.0; chain.transient_count()];
    let mut direct = vec![0.0; chain.attractors.len()];
    'mass: for (&code, &mass) in mu0 {
        if let Some(u) = chain.transient_index(code) {
            b[u] += mass;
            continue;
        }
        for (col, a) in chain.attractors.iter().enumerate() {
            if a.states.binary_search(&code).is_ok() {
                direct[col] += mass;
                continue 'mass;
            }
        }
        return Err(Error::model(format!(
            "initial mass on state {code} outside the chain"
        )));
    }
    Ok((b, direct))
}

/// Exact absorption probabilities for the initial distribution `mu0`:
/// the fundamental-matrix product applied to `mu0`. Solves the single
/// transposed system `(Id - Q)^T y = mu0` directly when the transient set is
/// small enough, otherwise accumulates the block-power series to 1e-12.
pub fn absorption_probabilities(
    chain: &AbsorbingChain,
    mu0: &SparseDistribution,
) -> Result<AbsorptionVector> {
    let (b, mut probs) = split_initial(chain, mu0)?;
    let nt = chain.transient_count();
    if nt == 0 {
        return Ok(AbsorptionVector {
            probabilities: probs,
            residual: 0.0,
        });
    }

    if nt <= DENSE_SOLVE_LIMIT {
        // (Id - Q)^T y = b
        let mut a = vec![vec![0.0f64; nt]; nt];
        for (i, row) in a.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for (u, row) in chain.q_rows.iter().enumerate() {
            for &(v, p) in row {
                a[v][u] -= p;
            }
        }
        let y = solve_dense(&mut a, b)?;
        for (u, row) in chain.p_rows.iter().enumerate() {
            for &(col, p) in row {
                probs[col] += y[u] * p;
            }
        }
        Ok(AbsorptionVector {
            probabilities: probs,
            residual: 0.0,
        })
    } else {
        let est = power_absorption_to_tolerance(chain, mu0, 1e-12)?.0;
        Ok(AbsorptionVector {
            probabilities: est.probabilities,
            residual: 0.0,
        })
    }
}

/// Gaussian elimination with partial pivoting; consumes the matrix.
fn solve_dense(a: &mut [Vec<f64>], mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col][col].abs();
        for row in col + 1..n {
            let cand = a[row][col].abs();
            if cand > best {
                best = cand;
                piv = row;
            }
        }
        if best < 1e-12 {
            return Err(Error::SingularSystem);
        }
        if piv != col {
            a.swap(col, piv);
            b.swap(col, piv);
        }
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            a[row][col] = 0.0;
            for k in col + 1..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut x = b[col];
        for k in col + 1..n {
            x -= a[col][k] * b[k];
        }
        b[col] = x / a[col][col];
    }
    Ok(b)
}

/// Truncated block-power absorption: the partial sums of `mu0 Q^j P` for
/// `j < k_max`. The residual is the transient mass left after `k_max` steps.
pub fn power_absorption_estimate(
    chain: &AbsorbingChain,
    mu0: &SparseDistribution,
    k_max: u64,
) -> Result<AbsorptionVector> {
    let (b, probs) = split_initial(chain, mu0)?;
    Ok(power_from(chain, b, probs, k_max, 0.0).0)
}

/// Runs the block-power accumulation until the transient mass drops below
/// `tol` (or the iteration guard). Returns the estimate and the step count.
pub fn power_absorption_to_tolerance(
    chain: &AbsorbingChain,
    mu0: &SparseDistribution,
    tol: f64,
) -> Result<(AbsorptionVector, u64)> {
    let (b, probs) = split_initial(chain, mu0)?;
    Ok(power_from(chain, b, probs, MAX_POWER_ITERATIONS, tol))
}

fn power_from(
    chain: &AbsorbingChain,
    mut d: Vec<f64>,
    mut probs: Vec<f64>,
    k_max: u64,
    tol: f64,
) -> (AbsorptionVector, u64) {
    let nt = chain.transient_count();
    let mut steps = 0;
    let mut residual: f64 = d.iter().fold(0.0, |a, b| a + b);
    while steps < k_max && residual > tol {
        let mut next = vec![0.0; nt];
        for (u, &mass) in d.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for &(col, p) in &chain.p_rows[u] {
                probs[col] += mass * p;
            }
            for &(v, p) in &chain.q_rows[u] {
                next[v] += mass * p;
            }
        }
        d = next;
        residual = d.iter().fold(0.0, |a, b| a + b);
        steps += 1;
    }
    (
        AbsorptionVector {
            probabilities: probs,
            residual,
        },
        steps,
    )
}

fn rational_to_f64(x: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    x.to_f64().unwrap_or_else(|| {
        // fall back to a scaled division for extreme magnitudes
        let scale = BigInt::from(1u64 << 53);
        let scaled = (x * BigRational::from_integer(scale.clone()))
            .to_integer()
            .to_f64()
            .unwrap_or(0.0);
        scaled / (1u64 << 53) as f64
    })
}

/// Exact rational absorption probabilities, for pinning ground truth on tiny
/// models. Builds the chain directly from the STG structure so transition
/// weights `1/|Succ|` stay exact.
pub fn absorption_probabilities_rational(
    stg: &ExplicitStg,
    dec: &SccDecomposition,
    mu0: &BTreeMap<StateCode, BigRational>,
) -> Result<Vec<BigRational>> {
    let chain = build_chain(stg, dec);
    let nt = chain.transient_count();
    if nt > 1 << 10 {
        return Err(Error::Unsupported(
            "rational arithmetic is limited to 1024 transient states".into(),
        ));
    }

    let ratio = |num: usize, den: usize| {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    };

    let mut b = vec![BigRational::zero(); nt];
    let mut probs = vec![BigRational::zero(); chain.attractors.len()];
    'mass: for (&code, mass) in mu0 {
        if let Some(u) = chain.transient_index(code) {
            b[u] += mass;
            continue;
        }
        for (col, a) in chain.attractors.iter().enumerate() {
            if a.states.binary_search(&code).is_ok() {
                probs[col] += mass;
                continue 'mass;
            }
        }
        return Err(Error::model(format!(
            "initial mass on state {code} outside the chain"
        )));
    }

    // exact (Id - Q)^T over rationals, via the STG out-degrees
    let mut a = vec![vec![BigRational::zero(); nt]; nt];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = BigRational::one();
    }
    let mut p_rows: Vec<Vec<(usize, BigRational)>> = vec![Vec::new(); nt];
    for (u, &code) in chain.transient.iter().enumerate() {
        let idx = stg.index_of(code).expect("transient in stg");
        let succs = stg.successors(idx);
        let share = ratio(1, succs.len());
        for &w in succs {
            let w_code = stg.code(w);
            match chain.transient_index(w_code) {
                Some(v) => a[v][u] -= share.clone(),
                None => {
                    let col = chain
                        .attractors
                        .iter()
                        .position(|at| at.states.binary_search(&w_code).is_ok())
                        .expect("absorbing successor");
                    p_rows[u].push((col, share.clone()));
                }
            }
        }
    }

    // exact Gaussian elimination (any nonzero pivot works over Q)
    for col in 0..nt {
        let piv = (col..nt)
            .find(|&r| !a[r][col].is_zero())
            .ok_or(Error::SingularSystem)?;
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..nt {
            if a[row][col].is_zero() {
                continue;
            }
            let factor = &a[row][col] / &a[col][col];
            a[row][col] = BigRational::zero();
            for k in col + 1..nt {
                let delta = &factor * &a[col][k];
                a[row][k] -= delta;
            }
            let delta = &factor * &b[col];
            b[row] -= delta;
        }
    }
    for col in (0..nt).rev() {
        let mut x = b[col].clone();
        for k in col + 1..nt {
            x -= &a[col][k] * &b[k];
        }
        b[col] = x / &a[col][col];
    }

    for (u, row) in p_rows.iter().enumerate() {
        for (col, p) in row {
            probs[*col] += &b[u] * p;
        }
    }
    Ok(probs)
}

/// Full exact analysis of a parsed document: builds the (reachable) STG,
/// decomposes it, and solves absorption for the document's initial law.
/// With `rational`, absorption is solved in exact rational arithmetic
/// (small models only) and converted for reporting.
pub fn exact_run(
    doc: &ModelDocument,
    model_name: &str,
    cap: u128,
    rational: bool,
) -> Result<AbsorptionResult> {
    let start = Instant::now();
    let model = &doc.model;
    let mu0 = doc.initial.distribution(model, cap)?;
    let stg = if doc.initial.is_sampling() {
        build_stg(model, None, cap)?
    } else {
        build_stg(model, Some(&doc.initial.base_state(model)), cap)?
    };
    let dec = tarjan_scc(&stg);
    let chain = build_chain(&stg, &dec);
    let solved = if rational {
        let support = BigInt::from(mu0.len());
        let mu0_q: BTreeMap<StateCode, BigRational> = mu0
            .keys()
            .map(|&c| (c, BigRational::new(BigInt::one(), support.clone())))
            .collect();
        let probs = absorption_probabilities_rational(&stg, &dec, &mu0_q)?;
        AbsorptionVector {
            probabilities: probs.iter().map(rational_to_f64).collect(),
            residual: 0.0,
        }
    } else {
        absorption_probabilities(&chain, &mu0)?
    };

    let mut result = AbsorptionResult {
        model: model_name.to_string(),
        method: Method::Exact,
        parameters: BTreeMap::from([
            ("cap".to_string(), serde_json::Value::from(cap as u64)),
            ("rational".to_string(), serde_json::Value::from(rational)),
        ]),
        attractors: chain
            .attractors
            .iter()
            .zip(&solved.probabilities)
            .map(|(a, &p)| AttractorOutcome {
                oracle_id: None,
                kind: a.kind,
                size: a.states.len() as u64,
                members: a.states.clone(),
                probability: p,
                lower_bound: None,
                upper_bound: None,
                std_error: None,
                avg_depth: None,
                inputs: None,
            })
            .collect(),
        residual: solved.residual,
        iterations: None,
        runs: None,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    result.sort_attractors();
    Ok(result)
}
