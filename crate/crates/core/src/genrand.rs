//! Random Boolean model generation for the property-test and benchmark
//! suites: `n` Boolean components, each regulated by `k` components drawn
//! uniformly without replacement, with the update function drawn uniformly
//! from all `2^(2^k)` truth tables.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::model::{BoolExpr, Cmp, ComponentDef, LogicalModel, Rule};
use crate::stg::{attractors, build_stg, tarjan_scc};

/// Draws a random Boolean model. Truth tables are emitted as one rule per
/// minterm where the function is 1, so constant-0 components have no rules.
pub fn generate_random_model(n: usize, k: usize, rng: &mut impl Rng) -> Result<LogicalModel> {
    if n < 1 || k < 1 || k > n {
        return Err(Error::model("need 1 <= k <= n"));
    }
    let mut components = Vec::with_capacity(n);
    for i in 0..n {
        let mut regulators = sample_distinct(n, k, rng);
        regulators.sort_unstable();
        let table_bits = 1usize << k;
        let mut rules = Vec::new();
        for combo in 0..table_bits {
            if !rng.random::<bool>() {
                continue;
            }
            let mut cond: Option<BoolExpr> = None;
            for (j, &reg) in regulators.iter().enumerate() {
                let atom = BoolExpr::Atom {
                    comp: reg,
                    cmp: Cmp::Eq,
                    level: ((combo >> j) & 1) as u8,
                };
                cond = Some(match cond {
                    None => atom,
                    Some(prev) => BoolExpr::And(Box::new(prev), Box::new(atom)),
                });
            }
            rules.push(Rule {
                target: 1,
                condition: cond.expect("k >= 1"),
            });
        }
        components.push(ComponentDef {
            name: format!("g{i}"),
            max_level: 1,
            is_input: false,
            rules,
        });
    }
    LogicalModel::new(components)
}

/// k distinct indices from 0..n, uniform over subsets.
fn sample_distinct(n: usize, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// True iff the model has at least two attractors. Needs the full explicit
/// STG, so the state space must fit `cap`.
pub fn filter_multistable(model: &LogicalModel, cap: u128) -> Result<bool> {
    let stg = build_stg(model, None, cap)?;
    let dec = tarjan_scc(&stg);
    Ok(attractors(&stg, &dec).len() >= 2)
}

/// Seeded generation; with `require_multistable` it retries on fresh RNG
/// streams until a multistable model appears. Returns the model and the
/// stream index that produced it.
pub fn generate(
    n: usize,
    k: usize,
    seed: u64,
    require_multistable: bool,
    cap: u128,
) -> Result<(LogicalModel, u64)> {
    const MAX_ATTEMPTS: u64 = 100_000;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(attempt);
        let model = generate_random_model(n, k, &mut rng)?;
        if !require_multistable || filter_multistable(&model, cap)? {
            return Ok((model, attempt));
        }
    }
    Err(Error::model(format!(
        "no multistable model found in {MAX_ATTEMPTS} attempts"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_model, print_document, InitialSpec, ModelDocument};
    use crate::stg::DEFAULT_STATE_CAP;
    use crate::testkit::{repressilator, toggle};

    fn as_doc(model: LogicalModel) -> ModelDocument {
        ModelDocument {
            model,
            initial: InitialSpec::default(),
            oracles: vec![],
        }
    }

    #[test]
    fn regulator_counts() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let m = generate_random_model(10, 2, &mut rng).unwrap();
        assert_eq!(m.component_count(), 10);
        for c in m.components() {
            // every rule is a 2-atom minterm over the component's regulators
            let mut regs = std::collections::BTreeSet::new();
            for r in &c.rules {
                let mut atoms = 0;
                collect_atoms(&r.condition, &mut |comp| {
                    regs.insert(comp);
                    atoms += 1;
                });
                assert_eq!(atoms, 2);
            }
            assert!(regs.len() <= 2);
            assert!(c.rules.len() <= 4);
        }
    }

    fn collect_atoms(e: &BoolExpr, f: &mut impl FnMut(usize)) {
        match e {
            BoolExpr::Atom { comp, .. } => f(*comp),
            BoolExpr::Not(inner) => collect_atoms(inner, f),
            BoolExpr::And(a, b) | BoolExpr::Or(a, b) => {
                collect_atoms(a, f);
                collect_atoms(b, f);
            }
        }
    }

    #[test]
    fn unary_tables() {
        // n = 1, k = 1: one of the four unary truth tables
        for seed in 0..16 {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let m = generate_random_model(1, 1, &mut rng).unwrap();
            let f0 = m.eval_target(0, &[0]);
            let f1 = m.eval_target(0, &[1]);
            assert!(matches!((f0, f1), (0, 0) | (0, 1) | (1, 0) | (1, 1)));
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let gen = |seed| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let m = generate_random_model(8, 2, &mut rng).unwrap();
            print_document(&as_doc(m))
        };
        assert_eq!(gen(42), gen(42));
        assert_ne!(gen(42), gen(43));
    }

    #[test]
    fn generated_models_round_trip() {
        for seed in 0..20 {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let m = generate_random_model(6, 2, &mut rng).unwrap();
            let text = print_document(&as_doc(m.clone()));
            let doc = parse_model(&text).unwrap();
            assert_eq!(doc.model, m, "round trip for seed {seed}:\n{text}");
        }
    }

    #[test]
    fn multistability_filter() {
        assert!(filter_multistable(&toggle(), DEFAULT_STATE_CAP).unwrap());
        assert!(!filter_multistable(&repressilator(), DEFAULT_STATE_CAP).unwrap());
    }

    #[test]
    fn generate_with_filter() {
        let (m, _attempt) = generate(8, 2, 11, true, DEFAULT_STATE_CAP).unwrap();
        assert!(filter_multistable(&m, DEFAULT_STATE_CAP).unwrap());
    }

    #[test]
    fn bad_parameters_rejected() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert!(generate_random_model(0, 1, &mut rng).is_err());
        assert!(generate_random_model(3, 4, &mut rng).is_err());
    }
}
