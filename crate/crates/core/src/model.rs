//! Logical regulatory models and their implicit asynchronous dynamics.
//!
//! A model is a list of components, each with a discrete level domain
//! `{0..max_level}` and an ordered first-match rule list defining its target
//! level in every state. Transitions follow the asynchronous scheme: one
//! component moves one level toward its target per transition, and concurrent
//! transitions are uniformly weighted.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// A full assignment of component levels, indexed by component position.
pub type State = Vec<u8>;

/// Mixed-radix integer encoding of a [`State`]: component 0 is the least
/// significant digit, with radix `max_level + 1` per component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateCode(pub u128);

impl fmt::Display for StateCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Atom comparison operator in a rule condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Eq,
    Le,
    Ge,
}

impl fmt::Display for Cmp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cmp::Eq => write!(f, "="),
            Cmp::Le => write!(f, "<="),
            Cmp::Ge => write!(f, ">="),
        }
    }
}

/// Condition over a state: comparisons of component levels combined with
/// NOT / AND / OR.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoolExpr {
    Atom { comp: usize, cmp: Cmp, level: u8 },
    Not(Box<BoolExpr>),
    And(Box<BoolExpr>, Box<BoolExpr>),
    Or(Box<BoolExpr>, Box<BoolExpr>),
}

impl BoolExpr {
    pub fn eval(&self, state: &[u8]) -> bool {
        match self {
            BoolExpr::Atom { comp, cmp, level } => {
                let v = state[*comp];
                match cmp {
                    Cmp::Eq => v == *level,
                    Cmp::Le => v <= *level,
                    Cmp::Ge => v >= *level,
                }
            }
            BoolExpr::Not(e) => !e.eval(state),
            BoolExpr::And(a, b) => a.eval(state) && b.eval(state),
            BoolExpr::Or(a, b) => a.eval(state) || b.eval(state),
        }
    }

    fn check_atoms(&self, components: &[ComponentDef]) -> Result<()> {
        match self {
            BoolExpr::Atom { comp, level, .. } => {
                let def = components
                    .get(*comp)
                    .ok_or_else(|| Error::model(format!("atom references component #{comp}")))?;
                if *level > def.max_level {
                    return Err(Error::model(format!(
                        "level {} out of range for component '{}' (max {})",
                        level, def.name, def.max_level
                    )));
                }
                Ok(())
            }
            BoolExpr::Not(e) => e.check_atoms(components),
            BoolExpr::And(a, b) | BoolExpr::Or(a, b) => {
                a.check_atoms(components)?;
                b.check_atoms(components)
            }
        }
    }
}

/// One target rule: the component's target level when the condition holds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub target: u8,
    pub condition: BoolExpr,
}

/// A regulatory component: its level domain `{0..max_level}` and its ordered
/// rule list. Rules apply first-match; with no match the target is 0. Input
/// components ignore their rules and hold their level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentDef {
    pub name: String,
    pub max_level: u8,
    pub is_input: bool,
    pub rules: Vec<Rule>,
}

/// A validated logical regulatory model.
///
/// Immutable after construction; all operations are pure, so a model can be
/// shared freely across simulation workers.
#[derive(Debug, Clone, PartialEq)]
pub struct LogicalModel {
    components: Vec<ComponentDef>,
    strides: Vec<u128>,
    state_count: u128,
    name_index: HashMap<String, usize>,
}

impl LogicalModel {
    pub fn new(components: Vec<ComponentDef>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::model("model has no components"));
        }
        let mut name_index = HashMap::new();
        for (i, c) in components.iter().enumerate() {
            if c.name.is_empty() {
                return Err(Error::model("component name is empty"));
            }
            if name_index.insert(c.name.clone(), i).is_some() {
                return Err(Error::model(format!("duplicate component '{}'", c.name)));
            }
            if c.max_level < 1 {
                return Err(Error::model(format!(
                    "component '{}' must have max level >= 1",
                    c.name
                )));
            }
            for r in &c.rules {
                if r.target > c.max_level {
                    return Err(Error::model(format!(
                        "rule target {} out of range for component '{}' (max {})",
                        r.target, c.name, c.max_level
                    )));
                }
            }
        }
        for c in &components {
            for r in &c.rules {
                r.condition.check_atoms(&components)?;
            }
        }
        let mut strides = Vec::with_capacity(components.len());
        let mut state_count: u128 = 1;
        for c in &components {
            strides.push(state_count);
            state_count = state_count
                .checked_mul(u128::from(c.max_level) + 1)
                .ok_or_else(|| Error::model("state space exceeds 2^128 states"))?;
        }
        Ok(LogicalModel {
            components,
            strides,
            state_count,
            name_index,
        })
    }

    pub fn component_count(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[ComponentDef] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &ComponentDef {
        &self.components[i]
    }

    pub fn component_index(&self, name: &str) -> Option<usize> {
        self.name_index.get(name).copied()
    }

    pub fn is_input(&self, i: usize) -> bool {
        self.components[i].is_input
    }

    /// Total number of states `|S|`.
    pub fn state_count(&self) -> u128 {
        self.state_count
    }

    /// Target level of component `i` in state `v`: the first matching rule's
    /// target, 0 with no match. Inputs hold their current level.
    pub fn eval_target(&self, i: usize, v: &[u8]) -> u8 {
        let comp = &self.components[i];
        if comp.is_input {
            return v[i];
        }
        for rule in &comp.rules {
            if rule.condition.eval(v) {
                return rule.target;
            }
        }
        0
    }

    /// Calls `f(i, new_level)` for every component called to change in `v`.
    /// The new level is one unit toward the target of component `i`.
    pub fn for_each_transition(&self, v: &[u8], mut f: impl FnMut(usize, u8)) {
        for i in 0..self.components.len() {
            let target = self.eval_target(i, v);
            let current = v[i];
            if target != current {
                let next = if target > current {
                    current + 1
                } else {
                    current - 1
                };
                f(i, next);
            }
        }
    }

    /// Asynchronous successors of `v`: one per component whose target differs
    /// from its current level. Empty iff `v` is a point attractor.
    pub fn successors(&self, v: &[u8]) -> Vec<State> {
        let mut out = Vec::new();
        self.for_each_transition(v, |i, next| {
            let mut w = v.to_vec();
            w[i] = next;
            out.push(w);
        });
        out
    }

    pub fn successor_count(&self, v: &[u8]) -> usize {
        let mut k = 0;
        self.for_each_transition(v, |_, _| k += 1);
        k
    }

    /// Uniform transition probability `1/|Succ(v)|`. Errors unless `w` is a
    /// successor of `v`.
    pub fn transition_probability(&self, v: &[u8], w: &[u8]) -> Result<f64> {
        let succs = self.successors(v);
        if succs.iter().any(|s| s == w) {
            Ok(1.0 / succs.len() as f64)
        } else {
            Err(Error::NotASuccessor)
        }
    }

    pub fn encode(&self, v: &[u8]) -> StateCode {
        debug_assert_eq!(v.len(), self.components.len());
        let mut code: u128 = 0;
        for (i, &level) in v.iter().enumerate() {
            code += u128::from(level) * self.strides[i];
        }
        StateCode(code)
    }

    pub fn decode(&self, code: StateCode) -> Result<State> {
        if code.0 >= self.state_count {
            return Err(Error::DecodeOutOfRange {
                code: code.0,
                space: self.state_count,
            });
        }
        let mut rest = code.0;
        let mut v = Vec::with_capacity(self.components.len());
        for c in &self.components {
            let radix = u128::from(c.max_level) + 1;
            v.push((rest % radix) as u8);
            rest /= radix;
        }
        Ok(v)
    }

    /// Code offset of changing component `i` from `old` to `new` in any state.
    pub fn code_delta(&self, i: usize, old: u8, new: u8) -> i128 {
        (i128::from(new) - i128::from(old)) * self.strides[i] as i128
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::{repressilator, toggle};

    #[test]
    fn eval_target_toggle() {
        let m = toggle();
        // K_a = 1 iff b = 0
        assert_eq!(m.eval_target(0, &[0, 0]), 1);
        assert_eq!(m.eval_target(1, &[0, 0]), 1);
        // no rule matches: default 0
        assert_eq!(m.eval_target(0, &[1, 1]), 0);
        assert_eq!(m.eval_target(1, &[1, 1]), 0);
    }

    #[test]
    fn eval_target_first_match() {
        let m = LogicalModel::new(vec![ComponentDef {
            name: "a".into(),
            max_level: 2,
            is_input: false,
            rules: vec![
                Rule {
                    target: 2,
                    condition: BoolExpr::Atom {
                        comp: 0,
                        cmp: Cmp::Ge,
                        level: 1,
                    },
                },
                Rule {
                    target: 1,
                    condition: BoolExpr::Atom {
                        comp: 0,
                        cmp: Cmp::Ge,
                        level: 0,
                    },
                },
            ],
        }])
        .unwrap();
        assert_eq!(m.eval_target(0, &[1]), 2);
        assert_eq!(m.eval_target(0, &[0]), 1);
    }

    #[test]
    fn successors_toggle() {
        let m = toggle();
        let mut succ = m.successors(&[0, 0]);
        succ.sort();
        assert_eq!(succ, vec![vec![0, 1], vec![1, 0]]);
        assert!(m.successors(&[1, 0]).is_empty());
        assert!(m.successors(&[0, 1]).is_empty());
    }

    #[test]
    fn successors_unit_step() {
        // K_a = 2 in every state; from level 0 the step goes to 1, not 2.
        let m = LogicalModel::new(vec![ComponentDef {
            name: "a".into(),
            max_level: 2,
            is_input: false,
            rules: vec![Rule {
                target: 2,
                condition: BoolExpr::Atom {
                    comp: 0,
                    cmp: Cmp::Ge,
                    level: 0,
                },
            }],
        }])
        .unwrap();
        assert_eq!(m.successors(&[0]), vec![vec![1]]);
        assert_eq!(m.successors(&[1]), vec![vec![2]]);
        assert!(m.successors(&[2]).is_empty());
    }

    #[test]
    fn transition_probabilities() {
        let m = toggle();
        assert_eq!(m.transition_probability(&[0, 0], &[1, 0]).unwrap(), 0.5);

        let r = repressilator();
        let p = r.transition_probability(&[0, 0, 0], &[1, 0, 0]).unwrap();
        assert!((p - 1.0 / 3.0).abs() < 1e-15);

        // stable states have no outgoing transitions
        assert!(m.transition_probability(&[1, 0], &[1, 0]).is_err());
        assert!(m.transition_probability(&[0, 0], &[1, 1]).is_err());
    }

    #[test]
    fn encode_decode_examples() {
        let m = toggle();
        assert_eq!(m.encode(&[0, 0]), StateCode(0));
        assert_eq!(m.encode(&[1, 0]), StateCode(1));
        assert_eq!(m.encode(&[0, 1]), StateCode(2));
        assert_eq!(m.decode(StateCode(3)).unwrap(), vec![1, 1]);
        assert!(m.decode(StateCode(4)).is_err());

        // mixed radix: M = (1, 2), state (1, 2) -> 1 + 2*2 = 5
        let mv = LogicalModel::new(vec![
            ComponentDef {
                name: "a".into(),
                max_level: 1,
                is_input: false,
                rules: vec![],
            },
            ComponentDef {
                name: "b".into(),
                max_level: 2,
                is_input: false,
                rules: vec![],
            },
        ])
        .unwrap();
        assert_eq!(mv.encode(&[1, 2]), StateCode(5));
        assert_eq!(mv.decode(StateCode(5)).unwrap(), vec![1, 2]);
        assert_eq!(mv.state_count(), 6);
    }

    #[test]
    fn inputs_are_frozen() {
        let m = LogicalModel::new(vec![
            ComponentDef {
                name: "u".into(),
                max_level: 1,
                is_input: true,
                rules: vec![],
            },
            ComponentDef {
                name: "x".into(),
                max_level: 1,
                is_input: false,
                rules: vec![Rule {
                    target: 1,
                    condition: BoolExpr::Atom {
                        comp: 0,
                        cmp: Cmp::Eq,
                        level: 1,
                    },
                }],
            },
        ])
        .unwrap();
        // u never moves, in either slice
        assert!(m.successors(&[0, 0]).is_empty());
        assert_eq!(m.successors(&[1, 0]), vec![vec![1, 1]]);
        assert!(m.successors(&[1, 1]).is_empty());
        assert_eq!(m.successors(&[0, 1]), vec![vec![0, 0]]);
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(LogicalModel::new(vec![]).is_err());
        // duplicate names
        let dup = vec![
            ComponentDef {
                name: "a".into(),
                max_level: 1,
                is_input: false,
                rules: vec![],
            },
            ComponentDef {
                name: "a".into(),
                max_level: 1,
                is_input: false,
                rules: vec![],
            },
        ];
        assert!(LogicalModel::new(dup).is_err());
        // rule target above max level
        let bad_target = vec![ComponentDef {
            name: "a".into(),
            max_level: 1,
            is_input: false,
            rules: vec![Rule {
                target: 2,
                condition: BoolExpr::Atom {
                    comp: 0,
                    cmp: Cmp::Eq,
                    level: 0,
                },
            }],
        }];
        assert!(LogicalModel::new(bad_target).is_err());
        // atom level outside the referenced component's domain
        let bad_atom = vec![ComponentDef {
            name: "a".into(),
            max_level: 1,
            is_input: false,
            rules: vec![Rule {
                target: 1,
                condition: BoolExpr::Atom {
                    comp: 0,
                    cmp: Cmp::Eq,
                    level: 5,
                },
            }],
        }];
        assert!(LogicalModel::new(bad_atom).is_err());
    }
}
