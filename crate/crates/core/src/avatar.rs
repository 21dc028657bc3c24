//! Monte Carlo estimation of attractor reachability with cycle rewiring.
//!
//! A simulation walks random transitions until it reaches a state with no
//! successors or a state recognized as part of a known attractor. Revisiting
//! a state within the current incarnation exposes a cycle; the cycle is
//! extended toward the enclosing SCC (up to depth `tau`, or exhaustively in
//! inflationary mode), dismantled, and replaced by direct exit transitions
//! weighted by the fundamental-matrix rows `(Id - q)^-1 r`, which preserves
//! absorption probabilities. States that ever shared a cycle are merged in a
//! union-find; the component of the final state reconstructs the complex
//! attractor.
//!
//! Runs execute in fixed-size chunks. Within a chunk every simulation sees
//! the same snapshot of discovered attractors and cached rewirings, and each
//! run draws from its own seeded RNG stream, so results are identical for
//! any thread count.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{LogicalModel, State, StateCode};
use crate::parse::{ModelDocument, OracleSpec};
use crate::report::{AbsorptionResult, AttractorOutcome, InputShare, Method};
use crate::stg::AttractorKind;

/// Runs per scheduling chunk; snapshots advance only at chunk boundaries.
const RUN_CHUNK: u64 = 256;

/// Cycle size above which the rewiring solve switches from a dense inverse
/// to iterative accumulation.
const DENSE_REWIRE_LIMIT: usize = 2048;

/// Exploration cap for inflationary extension; beyond it the extension falls
/// back to the depth-bounded form.
const INFLATIONARY_CLOSURE_CAP: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InflationaryMode {
    Auto,
    On,
    Off,
}

impl InflationaryMode {
    pub fn name(self) -> &'static str {
        match self {
            InflationaryMode::Auto => "auto",
            InflationaryMode::On => "on",
            InflationaryMode::Off => "off",
        }
    }
}

#[derive(Debug, Clone)]
pub struct AvatarConfig {
    pub runs: u64,
    /// Initial cycle-extension depth; doubles after each rewiring within a
    /// run and resets between runs.
    pub tau0: u32,
    /// Cycles smaller than this are not rewired.
    pub min_cycle_to_rewire: usize,
    /// Explicit transitions accumulated in one run before inflationary mode
    /// activates (in auto mode).
    pub explicit_transition_budget: usize,
    /// State spaces up to this size always run inflationary (in auto mode).
    pub small_stg_threshold: u128,
    /// Cache admission: minimum transient size.
    pub keep_transients_min_size: usize,
    /// Cache admission: strict upper bound on outgoing transitions per state.
    pub keep_transients_max_exit_ratio: f64,
    pub max_steps_per_run: u64,
    pub seed: u64,
    pub inflationary: InflationaryMode,
    /// Record one trace row per run.
    pub trace: bool,
}

impl Default for AvatarConfig {
    fn default() -> Self {
        AvatarConfig {
            runs: 10_000,
            tau0: 3,
            min_cycle_to_rewire: 4,
            explicit_transition_budget: 100_000,
            small_stg_threshold: 1 << 10,
            keep_transients_min_size: 32,
            keep_transients_max_exit_ratio: 1.0,
            max_steps_per_run: 10_000_000,
            seed: 0,
            inflationary: InflationaryMode::Auto,
            trace: false,
        }
    }
}

impl AvatarConfig {
    fn validate(&self) -> Result<()> {
        if self.runs < 1 {
            return Err(Error::model("runs must be >= 1"));
        }
        if self.tau0 < 1 {
            return Err(Error::model("tau must be >= 1"));
        }
        if self.max_steps_per_run < 1 {
            return Err(Error::model("max steps per run must be >= 1"));
        }
        Ok(())
    }
}

/// Weighted successor list.
pub type WeightedRow = Vec<(StateCode, f64)>;

/// Effective transition rows of a (possibly rewired) dynamics.
pub trait TransitionRows {
    fn row(&self, code: StateCode) -> WeightedRow;
}

/// The model dynamics overlaid with per-state override rows.
struct EffectiveRows<'a> {
    model: &'a LogicalModel,
    overrides: &'a HashMap<StateCode, Arc<WeightedRow>>,
}

impl TransitionRows for EffectiveRows<'_> {
    fn row(&self, code: StateCode) -> WeightedRow {
        if let Some(row) = self.overrides.get(&code) {
            return row.as_ref().clone();
        }
        let v = self.model.decode(code).expect("walk state decodes");
        let mut out = WeightedRow::new();
        self.model.for_each_transition(&v, |i, next| {
            let delta = self.model.code_delta(i, v[i], next);
            out.push((StateCode((code.0 as i128 + delta) as u128), 0.0));
        });
        let share = 1.0 / out.len().max(1) as f64;
        for entry in &mut out {
            entry.1 = share;
        }
        out
    }
}

/// Disjoint sets over the states that have ever shared a cycle.
#[derive(Debug, Default)]
pub struct CycleUnionFind {
    parent: HashMap<StateCode, StateCode>,
    members: HashMap<StateCode, Vec<StateCode>>,
}

impl CycleUnionFind {
    fn find(&mut self, x: StateCode) -> Option<StateCode> {
        self.parent.get(&x)?;
        let mut root = x;
        while self.parent[&root] != root {
            root = self.parent[&root];
        }
        let mut cur = x;
        while self.parent[&cur] != root {
            let next = self.parent[&cur];
            self.parent.insert(cur, root);
            cur = next;
        }
        Some(root)
    }

    /// Merges all states of one detected cycle into a single set.
    pub fn union_cycle(&mut self, cycle: &[StateCode]) {
        let mut iter = cycle.iter();
        let Some(&first) = iter.next() else { return };
        if self.find(first).is_none() {
            self.parent.insert(first, first);
            self.members.insert(first, vec![first]);
        }
        for &x in iter {
            if self.find(x).is_none() {
                self.parent.insert(x, x);
                self.members.insert(x, vec![x]);
            }
            let ra = self.find(first).unwrap();
            let rb = self.find(x).unwrap();
            if ra == rb {
                continue;
            }
            // union by set size
            let (big, small) = if self.members[&ra].len() >= self.members[&rb].len() {
                (ra, rb)
            } else {
                (rb, ra)
            };
            let moved = self.members.remove(&small).unwrap();
            self.parent.insert(small, big);
            self.members.get_mut(&big).unwrap().extend(moved);
        }
    }

    /// The merged set containing `x`, or just `x` if it never shared a cycle.
    pub fn component(&mut self, x: StateCode) -> Vec<StateCode> {
        match self.find(x) {
            Some(root) => {
                let mut out = self.members[&root].clone();
                out.sort();
                out
            }
            None => vec![x],
        }
    }
}

/// Visit order within the current incarnation.
#[derive(Debug, Default)]
pub struct VisitLog {
    order: Vec<StateCode>,
    pos: HashMap<StateCode, usize>,
}

impl VisitLog {
    pub fn record(&mut self, code: StateCode) {
        if !self.pos.contains_key(&code) {
            self.pos.insert(code, self.order.len());
            self.order.push(code);
        }
    }

    /// The visited suffix from `v_next`'s first visit through the current
    /// state, if `v_next` was seen in this incarnation.
    pub fn detect_cycle(&self, v_next: StateCode) -> Option<Vec<StateCode>> {
        self.pos.get(&v_next).map(|&p| self.order[p..].to_vec())
    }

    pub fn clear(&mut self) {
        self.order.clear();
        self.pos.clear();
    }
}

/// Grows a detected cycle toward the SCC that contains it. Exploration runs
/// up to `tau` transitions away from the cycle (exhaustively under
/// `inflationary`, capped); the result is the SCC of the explored subgraph
/// containing the cycle — always a superset of it, mutually reachable
/// throughout.
pub fn extend_cycle(
    rows: &dyn TransitionRows,
    cycle: &[StateCode],
    tau: u32,
    inflationary: bool,
) -> Vec<StateCode> {
    assert!(!cycle.is_empty());
    let explored = explore(rows, cycle, if inflationary { None } else { Some(tau) });
    let explored = match explored {
        Some(e) => e,
        // closure cap hit: fall back to the depth-bounded exploration
        None => explore(rows, cycle, Some(tau)).expect("bounded exploration"),
    };
    let (codes, row_lists) = explored;
    let index: HashMap<StateCode, usize> = codes
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, i))
        .collect();
    let edges: Vec<Vec<usize>> = row_lists
        .iter()
        .map(|row| {
            row.iter()
                .filter_map(|&(target, _)| index.get(&target).copied())
                .collect()
        })
        .collect();
    let comp = crate::stg::tarjan_components(&edges);
    let cycle_comp = comp[index[&cycle[0]]];
    debug_assert!(cycle.iter().all(|c| comp[index[c]] == cycle_comp));
    let mut out: Vec<StateCode> = codes
        .iter()
        .enumerate()
        .filter(|&(i, _)| comp[i] == cycle_comp)
        .map(|(_, &c)| c)
        .collect();
    out.sort();
    out
}

/// BFS from the cycle; `depth_limit = None` explores the full forward
/// closure and returns `None` if it exceeds the cap.
#[allow(clippy::type_complexity)]
fn explore(
    rows: &dyn TransitionRows,
    cycle: &[StateCode],
    depth_limit: Option<u32>,
) -> Option<(Vec<StateCode>, Vec<WeightedRow>)> {
    let mut codes: Vec<StateCode> = Vec::new();
    let mut depth: Vec<u32> = Vec::new();
    let mut seen: BTreeSet<StateCode> = BTreeSet::new();
    for &c in cycle {
        if seen.insert(c) {
            codes.push(c);
            depth.push(0);
        }
    }
    let mut row_lists: Vec<WeightedRow> = Vec::new();
    let mut i = 0;
    while i < codes.len() {
        let row = rows.row(codes[i]);
        let expand = depth_limit.map_or(true, |limit| depth[i] < limit);
        if expand {
            for &(target, _) in &row {
                if seen.insert(target) {
                    codes.push(target);
                    depth.push(depth[i] + 1);
                    if depth_limit.is_none() && codes.len() > INFLATIONARY_CLOSURE_CAP {
                        return None;
                    }
                }
            }
        }
        row_lists.push(row);
        i += 1;
    }
    Some((codes, row_lists))
}

/// A dismantled cycle: its member states, exit states, and the replacement
/// exit rows, each a probability distribution over the exits.
#[derive(Debug, Clone)]
pub struct RewireRecord {
    /// Sorted cycle members.
    pub cycle: Vec<StateCode>,
    /// Sorted exit states (states directly reachable from the cycle).
    pub exits: Vec<StateCode>,
    /// Replacement row per cycle member, parallel to `cycle`.
    pub rows: Vec<Arc<WeightedRow>>,
    /// Number of cycle-to-exit transitions in the original dynamics.
    pub exit_edge_count: usize,
}

#[derive(Debug)]
pub enum RewireOutcome {
    Rewired(RewireRecord),
    /// The set has no exit at all: it is a terminal SCC, not a transient.
    NoExits,
}

struct CycleBlocks {
    cycle: Vec<StateCode>,
    exits: Vec<StateCode>,
    /// q block: per cycle row, (cycle column, weight).
    q: Vec<Vec<(usize, f64)>>,
    /// r block: per cycle row, (exit column, weight).
    r: Vec<Vec<(usize, f64)>>,
}

fn collect_blocks(rows: &dyn TransitionRows, cycle: &[StateCode]) -> CycleBlocks {
    let mut cycle: Vec<StateCode> = cycle.to_vec();
    cycle.sort();
    cycle.dedup();
    let index: HashMap<StateCode, usize> = cycle
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, i))
        .collect();
    let raw: Vec<WeightedRow> = cycle.iter().map(|&c| rows.row(c)).collect();
    let mut exits: BTreeSet<StateCode> = BTreeSet::new();
    for row in &raw {
        for &(target, _) in row {
            if !index.contains_key(&target) {
                exits.insert(target);
            }
        }
    }
    let exits: Vec<StateCode> = exits.into_iter().collect();
    let exit_index: HashMap<StateCode, usize> = exits
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, i))
        .collect();
    let mut q = vec![Vec::new(); cycle.len()];
    let mut r = vec![Vec::new(); cycle.len()];
    for (i, row) in raw.iter().enumerate() {
        for &(target, w) in row {
            match index.get(&target) {
                Some(&j) => q[i].push((j, w)),
                None => r[i].push((exit_index[&target], w)),
            }
        }
    }
    CycleBlocks { cycle, exits, q, r }
}

/// Dismantles a strongly connected transient set: removes its internal
/// transitions and connects every member directly to every reachable exit
/// with the asymptotic exit probabilities `(Id - q)^-1 r`. Reports `NoExits`
/// when the set has no outgoing transition (a terminal SCC).
pub fn rewire(rows: &dyn TransitionRows, cycle: &[StateCode]) -> Result<RewireOutcome> {
    let blocks = collect_blocks(rows, cycle);
    if blocks.exits.is_empty() {
        return Ok(RewireOutcome::NoExits);
    }
    solve_rewire(blocks).map(RewireOutcome::Rewired)
}

fn solve_rewire(blocks: CycleBlocks) -> Result<RewireRecord> {
    let k = blocks.cycle.len();
    let b = blocks.exits.len();
    let exit_edge_count = blocks.r.iter().map(Vec::len).sum();

    let dense: Vec<Vec<f64>> = if k <= DENSE_REWIRE_LIMIT {
        // r1 = (Id - q)^-1 r via the explicit inverse
        let mut a = vec![vec![0.0f64; k]; k];
        for (i, row) in a.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for (i, row) in blocks.q.iter().enumerate() {
            for &(j, w) in row {
                a[i][j] -= w;
            }
        }
        let inv = invert_dense(a)?;
        let mut r1 = vec![vec![0.0f64; b]; k];
        for (j, row) in blocks.r.iter().enumerate() {
            for &(e, w) in row {
                for (i, inv_row) in inv.iter().enumerate() {
                    r1[i][e] += inv_row[j] * w;
                }
            }
        }
        r1
    } else {
        // iterative accumulation sum q^j r with the all-ones decay as stop
        let mut acc = vec![vec![0.0f64; b]; k];
        for (i, row) in blocks.r.iter().enumerate() {
            for &(e, w) in row {
                acc[i][e] += w;
            }
        }
        let mut total = acc.clone();
        let mut ones = vec![1.0f64; k];
        loop {
            let mut next_ones = vec![0.0f64; k];
            let mut next_acc = vec![vec![0.0f64; b]; k];
            for (i, row) in blocks.q.iter().enumerate() {
                for &(j, w) in row {
                    next_ones[i] += w * ones[j];
                    for e in 0..b {
                        next_acc[i][e] += w * acc[j][e];
                    }
                }
            }
            ones = next_ones;
            acc = next_acc;
            for i in 0..k {
                for e in 0..b {
                    total[i][e] += acc[i][e];
                }
            }
            if ones.iter().cloned().fold(0.0f64, f64::max) < 1e-12 {
                break;
            }
        }
        total
    };

    let mut out_rows = Vec::with_capacity(k);
    for (i, row) in dense.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::model(format!(
                "rewired row for state {} sums to {sum}",
                blocks.cycle[i]
            )));
        }
        let entries: WeightedRow = row
            .iter()
            .enumerate()
            .filter(|&(_, &w)| w > 0.0)
            .map(|(e, &w)| (blocks.exits[e], w))
            .collect();
        out_rows.push(Arc::new(entries));
    }

    Ok(RewireRecord {
        cycle: blocks.cycle,
        exits: blocks.exits,
        rows: out_rows,
        exit_edge_count,
    })
}

/// Gauss-Jordan inverse with partial pivoting.
fn invert_dense(mut a: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    let mut inv = vec![vec![0.0f64; n]; n];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col][col].abs();
        for row in col + 1..n {
            if a[row][col].abs() > best {
                best = a[row][col].abs();
                piv = row;
            }
        }
        if best < 1e-12 {
            return Err(Error::SingularSystem);
        }
        a.swap(col, piv);
        inv.swap(col, piv);
        let scale = a[col][col];
        for x in &mut a[col] {
            *x /= scale;
        }
        for x in &mut inv[col] {
            *x /= scale;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = a[row][col];
            if factor == 0.0 {
                continue;
            }
            for j in 0..n {
                a[row][j] -= factor * a[col][j];
                inv[row][j] -= factor * inv[col][j];
            }
        }
    }
    Ok(inv)
}

/// Rewire records cached across simulations, keyed by exact member set.
/// Records are admitted only when built from pristine (un-rewired) rows, so
/// a hit is valid in any simulation that has not overridden those states.
#[derive(Debug, Default, Clone)]
pub struct TransientCache {
    entries: Vec<Arc<RewireRecord>>,
    member_entry: HashMap<StateCode, Vec<usize>>,
}

impl TransientCache {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn insert(&mut self, record: RewireRecord) {
        if self
            .find_containing(&record.cycle)
            .map_or(false, |e| e.cycle == record.cycle)
        {
            return;
        }
        let idx = self.entries.len();
        self.entries.push(Arc::new(record));
        for &c in &self.entries[idx].cycle {
            self.member_entry.entry(c).or_default().push(idx);
        }
    }

    /// An entry whose member set contains every given state.
    fn find_containing(&self, states: &[StateCode]) -> Option<&Arc<RewireRecord>> {
        let candidates = self.member_entry.get(states.first()?)?;
        candidates
            .iter()
            .map(|&i| &self.entries[i])
            .find(|e| {
                states
                    .iter()
                    .all(|c| e.cycle.binary_search(c).is_ok())
            })
    }
}

/// Snapshot of the attractor membership discovered so far.
#[derive(Debug, Default, Clone)]
struct KnownSnapshot {
    member_index: HashMap<StateCode, usize>,
}

struct SimContext<'a> {
    model: &'a LogicalModel,
    cfg: &'a AvatarConfig,
    oracles: &'a [OracleSpec],
    known: KnownSnapshot,
    cache: TransientCache,
}

/// How a single simulation ended.
#[derive(Debug, Clone, PartialEq)]
pub enum SimAttractor {
    Point(StateCode),
    /// A freshly walked-out complex attractor (sorted members).
    Complex(Vec<StateCode>),
    /// A member of an already-known complex attractor (snapshot index).
    Known(usize),
    UserOracle(String),
    Aborted,
}

#[derive(Debug)]
struct SimOutput {
    outcome: SimAttractor,
    steps: u64,
    incarnations: u32,
    cache_inserts: Vec<RewireRecord>,
    rewires: u64,
    cache_hits: u64,
}

fn user_oracle(oracles: &[OracleSpec], state: &[u8]) -> Option<String> {
    oracles
        .iter()
        .find(|o| o.matches(state))
        .map(|o| o.id.clone())
}

/// One random walk from `start` to an attractor.
fn avatar_simulation(start: &State, ctx: &SimContext, rng: &mut ChaCha12Rng) -> SimOutput {
    let model = ctx.model;
    let cfg = ctx.cfg;
    let auto = cfg.inflationary == InflationaryMode::Auto;
    let mut inflationary = match cfg.inflationary {
        InflationaryMode::On => true,
        InflationaryMode::Off => false,
        InflationaryMode::Auto => model.state_count() <= cfg.small_stg_threshold,
    };

    let mut overrides: HashMap<StateCode, Arc<WeightedRow>> = HashMap::new();
    let mut uf = CycleUnionFind::default();
    let mut visited = VisitLog::default();
    // extensions too small to rewire, kept to skip re-exploration; invalid
    // once any override lands
    let mut skip_memo: Vec<Vec<StateCode>> = Vec::new();

    let mut tau = cfg.tau0;
    let mut incarnations: u32 = 0;
    let mut explicit_transitions: usize = 0;
    let mut steps: u64 = 0;
    let mut rewires: u64 = 0;
    let mut cache_hits: u64 = 0;
    let mut cache_inserts: Vec<RewireRecord> = Vec::new();

    let mut v_state = start.clone();
    let mut v_code = model.encode(start);

    let output = |outcome, steps, incarnations, cache_inserts, rewires, cache_hits| SimOutput {
        outcome,
        steps,
        incarnations,
        cache_inserts,
        rewires,
        cache_hits,
    };

    loop {
        if let Some(id) = user_oracle(ctx.oracles, &v_state) {
            return output(
                SimAttractor::UserOracle(id),
                steps,
                incarnations,
                cache_inserts,
                rewires,
                cache_hits,
            );
        }
        if let Some(&k) = ctx.known.member_index.get(&v_code) {
            return output(
                SimAttractor::Known(k),
                steps,
                incarnations,
                cache_inserts,
                rewires,
                cache_hits,
            );
        }

        // next transition under the current incarnation
        let w_code = if let Some(row) = overrides.get(&v_code).cloned() {
            let x: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = row.last().expect("override rows are nonempty").0;
            for &(target, w) in row.iter() {
                acc += w;
                if x < acc {
                    chosen = target;
                    break;
                }
            }
            chosen
        } else {
            let mut moves: Vec<(usize, u8)> = Vec::new();
            model.for_each_transition(&v_state, |i, next| moves.push((i, next)));
            if moves.is_empty() {
                // stable state; any cycle history decides point vs complex
                let comp = uf.component(v_code);
                let outcome = if comp.len() <= 1 {
                    SimAttractor::Point(v_code)
                } else {
                    SimAttractor::Complex(comp)
                };
                return output(
                    outcome,
                    steps,
                    incarnations,
                    cache_inserts,
                    rewires,
                    cache_hits,
                );
            }
            let (i, next) = moves[rng.random_range(0..moves.len())];
            StateCode((v_code.0 as i128 + model.code_delta(i, v_state[i], next)) as u128)
        };

        if steps >= cfg.max_steps_per_run {
            return output(
                SimAttractor::Aborted,
                steps,
                incarnations,
                cache_inserts,
                rewires,
                cache_hits,
            );
        }
        visited.record(v_code);
        steps += 1;

        if let Some(cycle) = visited.detect_cycle(w_code) {
            incarnations += 1;

            // cached rewiring, valid only while the members are un-rewired here
            let cached = ctx.cache.find_containing(&cycle).filter(|e| {
                e.cycle.iter().all(|c| !overrides.contains_key(c))
            });
            if let Some(entry) = cached {
                for (i, &c) in entry.cycle.iter().enumerate() {
                    overrides.insert(c, entry.rows[i].clone());
                }
                explicit_transitions += entry.rows.iter().map(|r| r.len()).sum::<usize>();
                uf.union_cycle(&entry.cycle);
                cache_hits += 1;
                rewires += 1;
                tau = tau.saturating_mul(2);
                skip_memo.clear();
                visited.clear();
                if auto && explicit_transitions > cfg.explicit_transition_budget {
                    inflationary = true;
                }
            } else {
                let eff = EffectiveRows {
                    model,
                    overrides: &overrides,
                };
                let mut ext = skip_memo
                    .iter()
                    .find(|set| cycle.iter().all(|c| set.binary_search(c).is_ok()))
                    .cloned()
                    .unwrap_or_else(|| extend_cycle(&eff, &cycle, tau, inflationary));

                let mut blocks = collect_blocks(&eff, &ext);
                if blocks.exits.is_empty() && !inflationary {
                    // confirm the closed set exhaustively before reporting it
                    ext = extend_cycle(&eff, &ext, tau, true);
                    blocks = collect_blocks(&eff, &ext);
                }
                if blocks.exits.is_empty() {
                    uf.union_cycle(&ext);
                    let comp = uf.component(w_code);
                    return output(
                        SimAttractor::Complex(comp),
                        steps,
                        incarnations,
                        cache_inserts,
                        rewires,
                        cache_hits,
                    );
                }

                if ext.len() >= cfg.min_cycle_to_rewire {
                    let pristine = ext.iter().all(|c| !overrides.contains_key(c));
                    let record = match solve_rewire(blocks) {
                        Ok(r) => r,
                        // numerically degenerate rewiring: walk on without it
                        Err(_) => {
                            uf.union_cycle(&ext);
                            visited.clear();
                            v_state = step_state(model, &v_state, v_code, w_code);
                            v_code = w_code;
                            continue;
                        }
                    };
                    for (i, &c) in record.cycle.iter().enumerate() {
                        overrides.insert(c, record.rows[i].clone());
                    }
                    explicit_transitions +=
                        record.rows.iter().map(|r| r.len()).sum::<usize>();
                    let exit_ratio = record.exit_edge_count as f64 / record.cycle.len() as f64;
                    if pristine
                        && record.cycle.len() >= cfg.keep_transients_min_size
                        && exit_ratio < cfg.keep_transients_max_exit_ratio
                    {
                        cache_inserts.push(record.clone());
                    }
                    uf.union_cycle(&record.cycle);
                    rewires += 1;
                    tau = tau.saturating_mul(2);
                    skip_memo.clear();
                    if auto && explicit_transitions > cfg.explicit_transition_budget {
                        inflationary = true;
                    }
                } else {
                    uf.union_cycle(&ext);
                    if !skip_memo.contains(&ext) {
                        skip_memo.push(ext);
                    }
                }
                visited.clear();
            }
        }

        v_state = step_state(model, &v_state, v_code, w_code);
        v_code = w_code;
    }
}

fn step_state(model: &LogicalModel, v: &State, v_code: StateCode, w_code: StateCode) -> State {
    // single-coordinate moves are the common case; jumps decode
    let mut w = v.clone();
    let mut delta = w_code.0 as i128 - v_code.0 as i128;
    if delta == 0 {
        return w;
    }
    for i in 0..model.component_count() {
        let d = model.code_delta(i, 0, 1);
        if delta % d == 0 {
            let levels = delta / d;
            let new = v[i] as i128 + levels;
            if delta.abs() == d * levels.abs()
                && levels.abs() == 1
                && new >= 0
                && new <= model.component(i).max_level as i128
            {
                w[i] = new as u8;
                delta = 0;
                break;
            }
        }
    }
    if delta != 0 {
        return model.decode(w_code).expect("jump target decodes");
    }
    debug_assert_eq!(model.encode(&w), w_code);
    w
}

/// Registry of discovered complex attractors; overlapping discoveries merge
/// into one identity.
#[derive(Debug, Default)]
struct KnownRegistry {
    sets: Vec<BTreeSet<StateCode>>,
    alias: Vec<usize>,
    member_index: HashMap<StateCode, usize>,
}

impl KnownRegistry {
    fn resolve(&self, mut id: usize) -> usize {
        while self.alias[id] != id {
            id = self.alias[id];
        }
        id
    }

    fn register(&mut self, members: &[StateCode]) -> usize {
        let mut touching: Vec<usize> = members
            .iter()
            .filter_map(|c| self.member_index.get(c).map(|&i| self.resolve(i)))
            .collect();
        touching.sort_unstable();
        touching.dedup();
        let id = match touching.first() {
            Some(&primary) => {
                for &other in &touching[1..] {
                    let moved = std::mem::take(&mut self.sets[other]);
                    self.sets[primary].extend(moved);
                    self.alias[other] = primary;
                }
                self.sets[primary].extend(members.iter().copied());
                primary
            }
            None => {
                self.sets.push(members.iter().copied().collect());
                self.alias.push(self.sets.len() - 1);
                self.sets.len() - 1
            }
        };
        for &c in members {
            self.member_index.insert(c, id);
        }
        id
    }

    fn snapshot(&self) -> KnownSnapshot {
        let mut member_index = HashMap::new();
        for id in 0..self.sets.len() {
            if self.resolve(id) != id {
                continue;
            }
            for &c in &self.sets[id] {
                member_index.insert(c, id);
            }
        }
        KnownSnapshot { member_index }
    }
}

/// One per-run trace row.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTraceRow {
    pub run: u64,
    pub attractor: String,
    pub steps: u64,
    pub incarnations: u32,
}

/// Renders the per-run trace as CSV.
pub fn emit_run_trace(rows: &[RunTraceRow]) -> String {
    let mut out = String::from("run,attractor,steps,incarnations\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.run, r.attractor, r.steps, r.incarnations
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AvatarStats {
    pub aborted_runs: u64,
    pub rewires: u64,
    pub cache_hits: u64,
    pub cache_entries: usize,
}

#[derive(Debug)]
pub struct AvatarRun {
    pub result: AbsorptionResult,
    pub trace: Option<Vec<RunTraceRow>>,
    pub stats: AvatarStats,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum RunKey {
    Point(StateCode),
    Known(usize),
    Oracle(String),
    Aborted,
}

/// Aggregation key after merging attractors identical up to sampled inputs.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum GroupKey {
    Point(StateCode),
    Complex(Vec<StateCode>),
    Oracle(String),
}

#[derive(Debug, Default)]
struct GroupAgg {
    hits: u64,
    depth_sum: u64,
    repr_members: Vec<StateCode>,
    inputs: BTreeMap<Vec<(usize, u8)>, u64>,
}

/// Runs `cfg.runs` simulations from the document's initial condition and
/// aggregates hit counts into probability estimates with binomial standard
/// errors. Complex attractors discovered along the way act as oracles for
/// subsequent chunks; under input sampling, attractors identical up to the
/// sampled input coordinates are merged and per-input shares reported.
pub fn avatar_run(
    model: &LogicalModel,
    doc: &ModelDocument,
    cfg: &AvatarConfig,
) -> Result<AvatarRun> {
    cfg.validate()?;
    let wall = Instant::now();

    let sampled_inputs: Vec<usize> = doc
        .initial
        .sampled
        .iter()
        .copied()
        .filter(|&i| model.is_input(i))
        .collect();
    let merging = !sampled_inputs.is_empty();

    let mut registry = KnownRegistry::default();
    let mut cache = TransientCache::default();
    let mut per_run: Vec<(RunKey, u64, u32, Vec<(usize, u8)>)> =
        Vec::with_capacity(cfg.runs as usize);
    let mut stats = AvatarStats::default();

    let mut chunk_start = 0u64;
    while chunk_start < cfg.runs {
        let chunk_end = (chunk_start + RUN_CHUNK).min(cfg.runs);
        let ctx = SimContext {
            model,
            cfg,
            oracles: &doc.oracles,
            known: registry.snapshot(),
            cache: cache.clone(),
        };
        let outputs: Vec<(SimOutput, Vec<(usize, u8)>)> = (chunk_start..chunk_end)
            .into_par_iter()
            .map(|run| {
                let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
                rng.set_stream(run);
                let start = doc.initial.sample_state(model, &mut rng);
                let valuation: Vec<(usize, u8)> = sampled_inputs
                    .iter()
                    .map(|&i| (i, start[i]))
                    .collect();
                (avatar_simulation(&start, &ctx, &mut rng), valuation)
            })
            .collect();

        for (out, valuation) in outputs {
            stats.rewires += out.rewires;
            stats.cache_hits += out.cache_hits;
            for record in out.cache_inserts {
                cache.insert(record);
            }
            let key = match out.outcome {
                SimAttractor::Point(code) => RunKey::Point(code),
                SimAttractor::Known(id) => RunKey::Known(registry.resolve(id)),
                SimAttractor::Complex(members) => RunKey::Known(registry.register(&members)),
                SimAttractor::UserOracle(id) => RunKey::Oracle(id),
                SimAttractor::Aborted => {
                    stats.aborted_runs += 1;
                    RunKey::Aborted
                }
            };
            per_run.push((key, out.steps, out.incarnations, valuation));
        }
        chunk_start = chunk_end;
    }
    stats.cache_entries = cache.len();

    // project away sampled input coordinates when merging
    let project = |code: StateCode| -> StateCode {
        let mut v = model.decode(code).expect("attractor member decodes");
        for &i in &sampled_inputs {
            v[i] = 0;
        }
        model.encode(&v)
    };
    let group_key = |key: &RunKey| -> Option<GroupKey> {
        match key {
            RunKey::Point(code) => Some(GroupKey::Point(if merging {
                project(*code)
            } else {
                *code
            })),
            RunKey::Known(id) => {
                let id = registry.resolve(*id);
                let mut members: Vec<StateCode> = if merging {
                    registry.sets[id].iter().map(|&c| project(c)).collect()
                } else {
                    registry.sets[id].iter().copied().collect()
                };
                members.sort();
                members.dedup();
                Some(GroupKey::Complex(members))
            }
            RunKey::Oracle(id) => Some(GroupKey::Oracle(id.clone())),
            RunKey::Aborted => None,
        }
    };

    let mut groups: BTreeMap<GroupKey, GroupAgg> = BTreeMap::new();
    for (key, steps, _incs, valuation) in &per_run {
        let Some(gk) = group_key(key) else { continue };
        let agg = groups.entry(gk).or_default();
        if agg.hits == 0 {
            agg.repr_members = match key {
                RunKey::Point(code) => vec![*code],
                RunKey::Known(id) => registry.sets[registry.resolve(*id)]
                    .iter()
                    .copied()
                    .collect(),
                _ => vec![],
            };
        }
        agg.hits += 1;
        agg.depth_sum += steps;
        *agg.inputs.entry(valuation.clone()).or_insert(0) += 1;
    }

    let runs_total = cfg.runs as f64;
    let attractors: Vec<AttractorOutcome> = groups
        .iter()
        .map(|(gk, agg)| {
            let p = agg.hits as f64 / runs_total;
            let (oracle_id, kind, size, members) = match gk {
                GroupKey::Point(_) => (
                    None,
                    AttractorKind::Point,
                    1,
                    agg.repr_members.clone(),
                ),
                GroupKey::Complex(_) => (
                    None,
                    AttractorKind::Complex,
                    agg.repr_members.len() as u64,
                    agg.repr_members.clone(),
                ),
                GroupKey::Oracle(id) => {
                    let oracle = doc.oracles.iter().find(|o| &o.id == id);
                    (
                        Some(id.clone()),
                        AttractorKind::Complex,
                        oracle.map_or(0, |o| o.state_count(model)),
                        vec![],
                    )
                }
            };
            AttractorOutcome {
                oracle_id,
                kind,
                size,
                members,
                probability: p,
                lower_bound: None,
                upper_bound: None,
                std_error: Some((p * (1.0 - p) / runs_total).sqrt()),
                avg_depth: Some(agg.depth_sum as f64 / agg.hits as f64),
                inputs: merging.then(|| {
                    agg.inputs
                        .iter()
                        .map(|(valuation, &count)| InputShare {
                            assignment: valuation
                                .iter()
                                .map(|&(i, level)| (model.component(i).name.clone(), level))
                                .collect(),
                            probability: count as f64 / runs_total,
                        })
                        .collect()
                }),
            }
        })
        .collect();

    let mut result = AbsorptionResult {
        model: String::new(),
        method: Method::Avatar,
        parameters: BTreeMap::from([
            ("runs".to_string(), serde_json::Value::from(cfg.runs)),
            ("seed".to_string(), serde_json::Value::from(cfg.seed)),
            ("tau".to_string(), serde_json::Value::from(cfg.tau0)),
            (
                "min_cycle_to_rewire".to_string(),
                serde_json::Value::from(cfg.min_cycle_to_rewire),
            ),
            (
                "explicit_transition_budget".to_string(),
                serde_json::Value::from(cfg.explicit_transition_budget),
            ),
            (
                "small_stg_threshold".to_string(),
                serde_json::Value::from(cfg.small_stg_threshold.min(u64::MAX as u128) as u64),
            ),
            (
                "keep_transients_min_size".to_string(),
                serde_json::Value::from(cfg.keep_transients_min_size),
            ),
            (
                "keep_transients_max_exit_ratio".to_string(),
                serde_json::Value::from(cfg.keep_transients_max_exit_ratio),
            ),
            (
                "max_steps_per_run".to_string(),
                serde_json::Value::from(cfg.max_steps_per_run),
            ),
            (
                "inflationary".to_string(),
                serde_json::Value::from(cfg.inflationary.name()),
            ),
            (
                "aborted_runs".to_string(),
                serde_json::Value::from(stats.aborted_runs),
            ),
        ]),
        attractors,
        residual: stats.aborted_runs as f64 / runs_total,
        iterations: None,
        runs: Some(cfg.runs),
        wall_time_s: wall.elapsed().as_secs_f64(),
    };
    result.sort_attractors();

    let trace = cfg.trace.then(|| {
        // map group keys to the display ids of the sorted result
        let ids = result.attractor_ids();
        let mut id_of: BTreeMap<GroupKey, String> = BTreeMap::new();
        for (outcome, id) in result.attractors.iter().zip(&ids) {
            let gk = match &outcome.oracle_id {
                Some(oid) => GroupKey::Oracle(oid.clone()),
                None if outcome.kind == AttractorKind::Point => {
                    let code = outcome.members[0];
                    GroupKey::Point(if merging { project(code) } else { code })
                }
                None => {
                    let mut members: Vec<StateCode> = if merging {
                        outcome.members.iter().map(|&c| project(c)).collect()
                    } else {
                        outcome.members.clone()
                    };
                    members.sort();
                    members.dedup();
                    GroupKey::Complex(members)
                }
            };
            id_of.insert(gk, id.clone());
        }
        per_run
            .iter()
            .enumerate()
            .map(|(run, (key, steps, incs, _))| RunTraceRow {
                run: run as u64,
                attractor: group_key(key)
                    .and_then(|gk| id_of.get(&gk).cloned())
                    .unwrap_or_else(|| "aborted".to_string()),
                steps: *steps,
                incarnations: *incs,
            })
            .collect()
    });

    Ok(AvatarRun {
        result,
        trace,
        stats,
    })
}
