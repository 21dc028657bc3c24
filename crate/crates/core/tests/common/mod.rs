//! Shared helpers for the integration suites: independent brute-force
//! oracles and random test-instance generators. Everything here stays
//! independent of the library's SCC/absorption implementation paths.

#![allow(dead_code)]

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use attrq::markov::AbsorbingChain;
use attrq::model::{LogicalModel, StateCode};
use attrq::stg::{Attractor, AttractorKind};

/// Brute-force attractor oracle: reachability by per-state BFS, SCCs as
/// mutual-reachability classes, attractors as classes without leaving edges.
/// Returns sorted member lists, ordered by smallest member.
pub fn brute_force_attractors(model: &LogicalModel) -> Vec<Vec<u128>> {
    let n = model.state_count() as usize;
    let succ: Vec<Vec<usize>> = (0..n)
        .map(|c| {
            let v = model.decode(StateCode(c as u128)).unwrap();
            model
                .successors(&v)
                .iter()
                .map(|w| model.encode(w).0 as usize)
                .collect()
        })
        .collect();

    let mut reach: Vec<Vec<bool>> = Vec::with_capacity(n);
    for start in 0..n {
        let mut seen = vec![false; n];
        let mut queue = vec![start];
        seen[start] = true;
        while let Some(u) = queue.pop() {
            for &w in &succ[u] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push(w);
                }
            }
        }
        reach.push(seen);
    }

    let mut class_of = vec![usize::MAX; n];
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for u in 0..n {
        if class_of[u] != usize::MAX {
            continue;
        }
        let id = classes.len();
        let members: Vec<usize> = (u..n)
            .filter(|&v| reach[u][v] && reach[v][u])
            .collect();
        for &v in &members {
            class_of[v] = id;
        }
        classes.push(members);
    }

    let mut out: Vec<Vec<u128>> = classes
        .iter()
        .filter(|members| {
            members
                .iter()
                .all(|&u| succ[u].iter().all(|&w| class_of[w] == class_of[u]))
        })
        .map(|members| members.iter().map(|&u| u as u128).collect())
        .collect();
    out.sort();
    out
}

/// Seeded random Boolean model (n components, k regulators each).
pub fn random_model(n: usize, k: usize, seed: u64) -> LogicalModel {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    attrq::genrand::generate_random_model(n, k, &mut rng).unwrap()
}

/// A randomly constructed absorbing chain over weighted rows, guaranteed to
/// contain the transient ring `cycle` (with at least one exit) and to reach
/// absorption from every transient state.
pub struct RandomChain {
    /// Weighted successor rows of the transient states; absorbing states
    /// have no row.
    pub rows: HashMap<StateCode, Vec<(StateCode, f64)>>,
    pub cycle: Vec<StateCode>,
    pub transient: Vec<StateCode>,
    pub absorbing: Vec<StateCode>,
}

pub fn random_absorbing_chain(seed: u64) -> RandomChain {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    loop {
        let n_t = rng.random_range(4..12usize);
        let n_a = rng.random_range(1..4usize);
        let cycle_len = rng.random_range(2..=n_t.min(6));

        let transient: Vec<StateCode> = (0..n_t as u128).map(StateCode).collect();
        let absorbing: Vec<StateCode> = (n_t as u128..(n_t + n_a) as u128)
            .map(StateCode)
            .collect();
        let mut targets: Vec<Vec<StateCode>> = vec![Vec::new(); n_t];

        // the planted transient ring
        for i in 0..cycle_len {
            targets[i].push(transient[(i + 1) % cycle_len]);
        }
        // one guaranteed exit from the ring
        let exit_from = rng.random_range(0..cycle_len);
        let exit_to = rng.random_range(cycle_len..n_t + n_a);
        targets[exit_from].push(StateCode(exit_to as u128));

        // random extra edges
        for (u, row) in targets.iter_mut().enumerate() {
            let extra = rng.random_range(0..3usize);
            for _ in 0..extra {
                let to = rng.random_range(0..n_t + n_a);
                if to != u {
                    row.push(StateCode(to as u128));
                }
            }
            if row.is_empty() {
                row.push(StateCode(rng.random_range(n_t..n_t + n_a) as u128));
            }
            row.sort();
            row.dedup();
        }

        // every transient must reach absorption
        let absorbs = (0..n_t).all(|start| {
            let mut seen = vec![false; n_t + n_a];
            let mut queue = vec![start];
            seen[start] = true;
            while let Some(u) = queue.pop() {
                if u >= n_t {
                    return true;
                }
                for &w in &targets[u] {
                    let w = w.0 as usize;
                    if !seen[w] {
                        seen[w] = true;
                        queue.push(w);
                    }
                }
            }
            false
        });
        if !absorbs {
            continue;
        }

        let mut rows = HashMap::new();
        for (u, row) in targets.iter().enumerate() {
            let share = 1.0 / row.len() as f64;
            rows.insert(
                transient[u],
                row.iter().map(|&t| (t, share)).collect::<Vec<_>>(),
            );
        }
        return RandomChain {
            rows,
            cycle: transient[..cycle_len].to_vec(),
            transient,
            absorbing,
        };
    }
}

impl RandomChain {
    /// Assembles an `AbsorbingChain` treating each absorbing state as its
    /// own class, with the given rows for the transient states.
    pub fn to_chain(&self, rows: &HashMap<StateCode, Vec<(StateCode, f64)>>) -> AbsorbingChain {
        let n_t = self.transient.len();
        let attractors: Vec<Attractor> = self
            .absorbing
            .iter()
            .map(|&c| Attractor {
                kind: AttractorKind::Point,
                states: vec![c],
            })
            .collect();
        let mut q_rows = vec![Vec::new(); n_t];
        let mut p_rows = vec![Vec::new(); n_t];
        for (u, &code) in self.transient.iter().enumerate() {
            for &(target, w) in &rows[&code] {
                if (target.0 as usize) < n_t {
                    q_rows[u].push((target.0 as usize, w));
                } else {
                    p_rows[u].push((target.0 as usize - n_t, w));
                }
            }
        }
        AbsorbingChain::from_parts(self.transient.clone(), attractors, q_rows, p_rows).unwrap()
    }
}

/// Weighted-row view used to drive `rewire` on a `RandomChain`.
pub struct MapRows<'a>(pub &'a HashMap<StateCode, Vec<(StateCode, f64)>>);

impl attrq::avatar::TransitionRows for MapRows<'_> {
    fn row(&self, code: StateCode) -> Vec<(StateCode, f64)> {
        self.0.get(&code).cloned().unwrap_or_default()
    }
}
