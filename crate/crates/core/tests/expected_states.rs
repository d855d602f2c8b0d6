use std::collections::HashSet;

use psr_core::io::bundled_procedure;
use psr_core::sim::random_procedure;
use psr_core::{AssemblyState, ProcedureSpec};

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// States visited by every prefix of every action permutation that respects
/// the prerequisites.
fn oracle(spec: &ProcedureSpec) -> HashSet<AssemblyState> {
    let mut states = HashSet::new();
    for order in permutations(spec.actions.len()) {
        let position = |id: &str| order.iter().position(|&i| spec.actions[i].action_id == id).unwrap();
        let valid = order.iter().enumerate().all(|(k, &i)| {
            spec.actions[i].prerequisites.iter().all(|p| position(p) < k)
        });
        if !valid {
            continue;
        }
        let mut state = spec.initial_state.clone();
        states.insert(state.clone());
        for &i in &order {
            let a = &spec.actions[i];
            state.apply(a.component, a.transition);
            states.insert(state.clone());
        }
    }
    states
}

#[test]
fn random_procedures_match_permutation_oracle() {
    for seed in 0..40 {
        let spec = random_procedure(seed, 2 + (seed as usize % 6));
        assert_eq!(spec.expected_states().unwrap(), oracle(&spec), "seed {seed}");
    }
}

#[test]
fn maintenance_matches_permutation_oracle() {
    let spec = bundled_procedure("industreal_car_maintenance").unwrap();
    let expected = spec.expected_states().unwrap();
    assert_eq!(expected, oracle(&spec));
    assert!(expected.contains(&spec.final_state().unwrap()));
}

#[test]
fn unconstrained_procedure_reaches_every_install_combination() {
    let spec = random_procedure(7, 6);
    let free = ProcedureSpec::new(
        "free",
        spec.components.clone(),
        spec.initial_state.clone(),
        spec.actions
            .iter()
            .cloned()
            .map(|mut a| {
                a.prerequisites.clear();
                a
            })
            .collect(),
    )
    .unwrap();
    assert_eq!(free.expected_states().unwrap().len(), 64);
}
