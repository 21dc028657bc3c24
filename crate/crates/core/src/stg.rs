//! Explicit state transition graphs for desk-scale models: reachable-set
//! construction, strongly connected components, and attractor identification
//! as terminal SCCs.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{LogicalModel, State, StateCode};

/// Default cap on explicit construction, ~4M states.
pub const DEFAULT_STATE_CAP: u128 = 1 << 22;

/// An explicitly stored STG over a subset of the state space. Successor lists
/// agree exactly with the model's dynamics for every stored state.
#[derive(Debug, Clone)]
pub struct ExplicitStg {
    codes: Vec<StateCode>,
    index: HashMap<StateCode, usize>,
    edges: Vec<Vec<usize>>,
}

impl ExplicitStg {
    pub fn state_count(&self) -> usize {
        self.codes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    pub fn codes(&self) -> &[StateCode] {
        &self.codes
    }

    pub fn code(&self, idx: usize) -> StateCode {
        self.codes[idx]
    }

    pub fn index_of(&self, code: StateCode) -> Option<usize> {
        self.index.get(&code).copied()
    }

    pub fn successors(&self, idx: usize) -> &[usize] {
        &self.edges[idx]
    }
}

/// Builds the explicit STG: the forward-reachable set from `root`, or the
/// whole state space when `root` is `None`. Errors when more than `cap`
/// states would be stored.
pub fn build_stg(
    model: &LogicalModel,
    root: Option<&State>,
    cap: u128,
) -> Result<ExplicitStg> {
    let mut codes: Vec<StateCode> = Vec::new();
    let mut index: HashMap<StateCode, usize> = HashMap::new();
    let mut edges: Vec<Vec<usize>> = Vec::new();

    match root {
        Some(root) => {
            let root_code = model.encode(root);
            codes.push(root_code);
            index.insert(root_code, 0);
            let mut frontier = 0usize;
            while frontier < codes.len() {
                let v = model.decode(codes[frontier])?;
                let v_code = codes[frontier].0;
                let mut out = Vec::new();
                model.for_each_transition(&v, |i, next| {
                    let w_code = StateCode(
                        (v_code as i128 + model.code_delta(i, v[i], next)) as u128,
                    );
                    let idx = *index.entry(w_code).or_insert_with(|| {
                        codes.push(w_code);
                        codes.len() - 1
                    });
                    out.push(idx);
                });
                edges.push(out);
                if codes.len() as u128 > cap {
                    return Err(Error::CapacityExceeded { cap });
                }
                frontier += 1;
            }
        }
        None => {
            let total = model.state_count();
            if total > cap {
                return Err(Error::CapacityExceeded { cap });
            }
            let n = total as usize;
            codes.reserve(n);
            for c in 0..n {
                codes.push(StateCode(c as u128));
                index.insert(StateCode(c as u128), c);
            }
            edges.reserve(n);
            for c in 0..n {
                let v = model.decode(StateCode(c as u128))?;
                let mut out = Vec::new();
                model.for_each_transition(&v, |i, next| {
                    let w = (c as i128 + model.code_delta(i, v[i], next)) as usize;
                    out.push(w);
                });
                edges.push(out);
            }
        }
    }

    Ok(ExplicitStg {
        codes,
        index,
        edges,
    })
}

/// SCC decomposition of an [`ExplicitStg`]. SCC ids are assigned in reverse
/// topological order of the quotient DAG (sinks first).
#[derive(Debug, Clone)]
pub struct SccDecomposition {
    /// State index -> SCC id.
    pub component_id: Vec<usize>,
    /// SCC id -> member state indices.
    pub members: Vec<Vec<usize>>,
    /// SCC id -> true iff no edge leaves the SCC.
    pub terminal: Vec<bool>,
}

impl SccDecomposition {
    pub fn scc_count(&self) -> usize {
        self.members.len()
    }

    pub fn terminal_sccs(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.members.len()).filter(|&s| self.terminal[s])
    }
}

/// Iterative Tarjan over raw adjacency lists. Returns the component id per
/// node; ids count up in reverse topological order of the condensation.
pub fn tarjan_components(edges: &[Vec<usize>]) -> Vec<usize> {
    let n = edges.len();
    const UNSET: usize = usize::MAX;
    let mut order = vec![UNSET; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut component_id = vec![UNSET; n];
    let mut scc_count = 0usize;
    let mut counter = 0usize;

    // (node, next child position)
    let mut call: Vec<(usize, usize)> = Vec::new();
    for start in 0..n {
        if order[start] != UNSET {
            continue;
        }
        call.push((start, 0));
        while let Some(&mut (v, ref mut ci)) = call.last_mut() {
            if *ci == 0 {
                order[v] = counter;
                low[v] = counter;
                counter += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if *ci < edges[v].len() {
                let w = edges[v][*ci];
                *ci += 1;
                if order[w] == UNSET {
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(order[w]);
                }
            } else {
                if low[v] == order[v] {
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        component_id[w] = scc_count;
                        if w == v {
                            break;
                        }
                    }
                    scc_count += 1;
                }
                call.pop();
                if let Some(&mut (parent, _)) = call.last_mut() {
                    low[parent] = low[parent].min(low[v]);
                }
            }
        }
    }
    component_id
}

/// Iterative Tarjan; recursion depth could reach the number of states.
pub fn tarjan_scc(stg: &ExplicitStg) -> SccDecomposition {
    let component_id = tarjan_components(&stg.edges);
    let scc_count = component_id.iter().copied().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); scc_count];
    for (v, &c) in component_id.iter().enumerate() {
        members[c].push(v);
    }

    let mut terminal = vec![true; scc_count];
    for v in 0..stg.state_count() {
        let cv = component_id[v];
        for &w in &stg.edges[v] {
            if component_id[w] != cv {
                terminal[cv] = false;
            }
        }
    }

    SccDecomposition {
        component_id,
        members,
        terminal,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AttractorKind {
    Point,
    Complex,
}

/// A terminal SCC: a point attractor if a single state, complex otherwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attractor {
    pub kind: AttractorKind,
    /// Member codes, sorted ascending.
    pub states: Vec<StateCode>,
}

impl Attractor {
    pub fn smallest(&self) -> StateCode {
        self.states[0]
    }
}

/// The attractors of a decomposition, ordered by smallest member code.
pub fn attractors(stg: &ExplicitStg, dec: &SccDecomposition) -> Vec<Attractor> {
    let mut out: Vec<Attractor> = dec
        .terminal_sccs()
        .map(|s| {
            let mut states: Vec<StateCode> =
                dec.members[s].iter().map(|&i| stg.code(i)).collect();
            states.sort();
            Attractor {
                kind: if states.len() == 1 {
                    AttractorKind::Point
                } else {
                    AttractorKind::Complex
                },
                states,
            }
        })
        .collect();
    out.sort_by_key(|a| a.smallest());
    out
}

/// DOT rendering of the quotient DAG, for debugging.
pub fn quotient_dot(stg: &ExplicitStg, dec: &SccDecomposition) -> String {
    let mut out = String::from("digraph quotient {\n");
    for (s, members) in dec.members.iter().enumerate() {
        let shape = if dec.terminal[s] { "doublecircle" } else { "ellipse" };
        let smallest = members.iter().map(|&i| stg.code(i)).min().unwrap();
        out.push_str(&format!(
            "  scc{s} [label=\"scc{s}\\n|{}| min={}\", shape={shape}];\n",
            members.len(),
            smallest
        ));
    }
    let mut seen = std::collections::BTreeSet::new();
    for v in 0..stg.state_count() {
        let cv = dec.component_id[v];
        for &w in stg.successors(v) {
            let cw = dec.component_id[w];
            if cv != cw && seen.insert((cv, cw)) {
                out.push_str(&format!("  scc{cv} -> scc{cw};\n"));
            }
        }
    }
    out.push_str("}\n");
    out
}
