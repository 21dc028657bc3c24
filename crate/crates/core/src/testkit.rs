//! Small reference models used across the test suites.

use crate::model::{BoolExpr, Cmp, ComponentDef, LogicalModel, Rule};

fn atom(comp: usize, cmp: Cmp, level: u8) -> BoolExpr {
    BoolExpr::Atom { comp, cmp, level }
}

/// Two mutually repressing Boolean components: two point attractors
/// `(1,0)` and `(0,1)`, transient states `(0,0)` and `(1,1)`.
pub fn toggle() -> LogicalModel {
    LogicalModel::new(vec![
        ComponentDef {
            name: "a".into(),
            max_level: 1,
            is_input: false,
            rules: vec![Rule {
                target: 1,
                condition: atom(1, Cmp::Eq, 0),
            }],
        },
        ComponentDef {
            name: "b".into(),
            max_level: 1,
            is_input: false,
            rules: vec![Rule {
                target: 1,
                condition: atom(0, Cmp::Eq, 0),
            }],
        },
    ])
    .unwrap()
}

/// Three-component repression cycle: a single complex attractor made of the
/// six states outside `(0,0,0)` and `(1,1,1)`.
pub fn repressilator() -> LogicalModel {
    let reg = |source: usize| Rule {
        target: 1,
        condition: atom(source, Cmp::Eq, 0),
    };
    LogicalModel::new(vec![
        ComponentDef {
            name: "a".into(),
            max_level: 1,
            is_input: false,
            rules: vec![reg(2)],
        },
        ComponentDef {
            name: "b".into(),
            max_level: 1,
            is_input: false,
            rules: vec![reg(0)],
        },
        ComponentDef {
            name: "c".into(),
            max_level: 1,
            is_input: false,
            rules: vec![reg(1)],
        },
    ])
    .unwrap()
}
