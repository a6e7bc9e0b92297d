//! Subtour detection on integer solutions and the subtour-elimination rows
//! that cut them off.

use crate::error::{Error, Result};
use crate::model::{Assignment, CutKind, LinearRow, MipModel, Sense, Var};

/// A cycle of customers served by one vehicle and detached from the depots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subtour {
    pub vehicle: usize,
    /// Sorted vertex ids.
    pub vertices: Vec<usize>,
}

/// Strongly connected components of a digraph given by adjacency lists.
/// Iterative Tarjan; components come out in reverse topological order.
pub fn strongly_connected_components(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNSEEN: usize = usize::MAX;
    let n = adj.len();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut next = 0;
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        while let Some(&mut (v, ref mut edge)) = call.last_mut() {
            if *edge == 0 {
                index[v] = next;
                low[v] = next;
                next += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if let Some(&w) = adj[v].get(*edge) {
                *edge += 1;
                if index[w] == UNSEEN {
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comps.push(comp);
            }
        }
    }
    comps
}

/// Arcs with value one, grouped by vehicle.
pub fn vehicle_arcs(model: &MipModel, sol: &Assignment) -> Vec<Vec<(usize, usize)>> {
    let mut out = vec![Vec::new(); model.fleet()];
    for (k, v) in model.vars().iter().enumerate() {
        if let Var::Arc { from, to, vehicle } = *v {
            if sol.get(k) {
                out[vehicle].push((from, to));
            }
        }
    }
    out
}

pub fn find_subtours(model: &MipModel, sol: &Assignment) -> Vec<Subtour> {
    let inst = model.instance();
    let n = inst.num_vertices();
    let (d, a) = (inst.depart(), inst.arrive());
    let mut found = Vec::new();
    for (r, arcs) in vehicle_arcs(model, sol).into_iter().enumerate() {
        let mut adj = vec![Vec::new(); n];
        for (i, j) in arcs {
            adj[i].push(j);
        }
        for mut comp in strongly_connected_components(&adj) {
            if comp.len() >= 2 && !comp.contains(&d) && !comp.contains(&a) {
                comp.sort_unstable();
                found.push(Subtour {
                    vehicle: r,
                    vertices: comp,
                });
            }
        }
    }
    found
}

/// The `d ... a` path of each vehicle, following successors from `d`.
/// Vertices on detached cycles are not part of the result.
pub fn extract_tours(model: &MipModel, sol: &Assignment) -> Vec<Vec<usize>> {
    let inst = model.instance();
    let (d, a) = (inst.depart(), inst.arrive());
    let mut succ = vec![usize::MAX; inst.num_vertices()];
    vehicle_arcs(model, sol)
        .into_iter()
        .map(|arcs| {
            succ.iter_mut().for_each(|s| *s = usize::MAX);
            for (i, j) in arcs {
                succ[i] = j;
            }
            let mut path = vec![d];
            let mut v = d;
            while v != a && succ[v] != usize::MAX && path.len() <= succ.len() {
                v = succ[v];
                path.push(v);
            }
            path
        })
        .collect()
}

fn check_subtour(sub: &Subtour, model: &MipModel) -> Result<()> {
    let inst = model.instance();
    if sub.vertices.is_empty() {
        return Err(Error::Contract("empty subtour".into()));
    }
    if sub
        .vertices
        .iter()
        .any(|&v| v == inst.depart() || v == inst.arrive() || v >= inst.num_vertices())
    {
        return Err(Error::Contract(format!(
            "subtour {:?} contains a depot",
            sub.vertices
        )));
    }
    Ok(())
}

/// All three subtour-elimination families for the vertex set of `sub`, for
/// every vehicle of the model. With `S` the complement of the subtour
/// (so `S` holds both depots):
/// crossing rows `x(δ(S)) >= 2 y_i` for each `i` in the subtour,
/// complement rows `x(γ(S)) <= y(S) - y_j + 1`, and interior rows
/// `x(γ(U)) <= y(U) - y_j` for each `j` in the subtour `U`.
pub fn emit_gsecs(sub: &Subtour, model: &MipModel) -> Result<Vec<LinearRow>> {
    check_subtour(sub, model)?;
    let inst = model.instance();
    let mut in_u = vec![false; inst.num_vertices()];
    for &v in &sub.vertices {
        in_u[v] = true;
    }
    let crossing: Vec<(usize, usize)> = model
        .arcs()
        .iter()
        .copied()
        .filter(|&(i, j)| in_u[i] != in_u[j])
        .collect();
    let inside_s: Vec<(usize, usize)> = model
        .arcs()
        .iter()
        .copied()
        .filter(|&(i, j)| !in_u[i] && !in_u[j])
        .collect();
    let inside_u: Vec<(usize, usize)> = model
        .arcs()
        .iter()
        .copied()
        .filter(|&(i, j)| in_u[i] && in_u[j])
        .collect();
    let s_customers: Vec<usize> = model
        .customers()
        .iter()
        .copied()
        .filter(|&i| !in_u[i])
        .collect();
    let serve = |i: usize, r: usize| model.has_var(&Var::serve(i, r));

    let mut rows = Vec::new();
    for r in 0..model.fleet() {
        for &i in sub.vertices.iter().filter(|&&i| serve(i, r)) {
            rows.push(LinearRow::new(
                CutKind::Gsec,
                crossing
                    .iter()
                    .map(|&(u, v)| (Var::arc(u, v, r), 1.0))
                    .chain(std::iter::once((Var::serve(i, r), -2.0))),
                Sense::Ge,
                0.0,
            ));
        }
        for &j in sub.vertices.iter().filter(|&&j| serve(j, r)) {
            rows.push(LinearRow::new(
                CutKind::GsecGamma,
                inside_s
                    .iter()
                    .map(|&(u, v)| (Var::arc(u, v, r), 1.0))
                    .chain(s_customers.iter().map(|&k| (Var::serve(k, r), -1.0)))
                    .chain(std::iter::once((Var::serve(j, r), 1.0))),
                Sense::Le,
                1.0,
            ));
            rows.push(LinearRow::new(
                CutKind::GsecGamma,
                inside_u
                    .iter()
                    .map(|&(u, v)| (Var::arc(u, v, r), 1.0))
                    .chain(
                        sub.vertices
                            .iter()
                            .filter(|&&k| serve(k, r))
                            .map(|&k| (Var::serve(k, r), -1.0)),
                    )
                    .chain(std::iter::once((Var::serve(j, r), 1.0))),
                Sense::Le,
                0.0,
            ));
        }
    }
    Ok(rows)
}

/// Plain subtour elimination `x(γ(U)) <= |U| - 1` for every vehicle, the
/// weaker rows used when the generalized families are switched off.
pub fn emit_classic_secs(sub: &Subtour, model: &MipModel) -> Result<Vec<LinearRow>> {
    check_subtour(sub, model)?;
    let inst = model.instance();
    let mut in_u = vec![false; inst.num_vertices()];
    for &v in &sub.vertices {
        in_u[v] = true;
    }
    let inside: Vec<(usize, usize)> = model
        .arcs()
        .iter()
        .copied()
        .filter(|&(i, j)| in_u[i] && in_u[j])
        .collect();
    Ok((0..model.fleet())
        .map(|r| {
            LinearRow::new(
                CutKind::Gsec,
                inside.iter().map(|&(u, v)| (Var::arc(u, v, r), 1.0)),
                Sense::Le,
                sub.vertices.len() as f64 - 1.0,
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{AccessibilityMask, Instance};
    use std::sync::Arc;

    fn model(m: usize) -> MipModel {
        // d, five customers, a; generous limit so every arc exists.
        let pts = [
            (0.0, 0.0, 0),
            (1.0, 0.0, 1),
            (2.0, 0.0, 1),
            (3.0, 1.0, 1),
            (3.0, 2.0, 1),
            (2.0, 2.0, 1),
            (4.0, 0.0, 0),
        ];
        let inst = Arc::new(Instance::new(&pts, m, 100.0).unwrap());
        let mask = AccessibilityMask::unrestricted(&inst);
        MipModel::build_base(inst, &mask).unwrap()
    }

    fn assign(model: &MipModel, arcs: &[(usize, usize, usize)]) -> Assignment {
        let mut x = vec![false; model.num_vars()];
        for &(i, j, r) in arcs {
            x[model.var_index(&Var::arc(i, j, r)).unwrap()] = true;
            for v in [i, j] {
                if let Some(k) = model.var_index(&Var::serve(v, r)) {
                    x[k] = true;
                }
            }
        }
        Assignment(x)
    }

    #[test]
    fn tarjan_on_small_graphs() {
        let adj = vec![vec![1], vec![2], vec![0, 3], vec![]];
        let mut comps = strongly_connected_components(&adj);
        comps.iter_mut().for_each(|c| c.sort());
        comps.sort();
        assert_eq!(comps, vec![vec![0, 1, 2], vec![3]]);
        assert_eq!(strongly_connected_components(&[]).len(), 0);
    }

    #[test]
    fn tarjan_deep_path_does_not_overflow() {
        let n = 200_000;
        let adj: Vec<Vec<usize>> = (0..n).map(|i| vec![(i + 1) % n]).collect();
        let comps = strongly_connected_components(&adj);
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].len(), n);
    }

    #[test]
    fn path_plus_two_cycle() {
        let m = model(1);
        let sol = assign(&m, &[(0, 1, 0), (1, 2, 0), (2, 6, 0), (3, 4, 0), (4, 3, 0)]);
        let subs = find_subtours(&m, &sol);
        assert_eq!(
            subs,
            vec![Subtour {
                vehicle: 0,
                vertices: vec![3, 4]
            }]
        );
        assert_eq!(extract_tours(&m, &sol), vec![vec![0, 1, 2, 6]]);
    }

    #[test]
    fn simple_path_has_no_subtour() {
        let m = model(1);
        let sol = assign(&m, &[(0, 1, 0), (1, 6, 0)]);
        assert!(find_subtours(&m, &sol).is_empty());
    }

    #[test]
    fn one_three_cycle_per_vehicle() {
        let m = model(2);
        let sol = assign(
            &m,
            &[
                (0, 6, 0),
                (1, 2, 0),
                (2, 3, 0),
                (3, 1, 0),
                (0, 6, 1),
                (4, 5, 1),
                (5, 2, 1),
                (2, 4, 1),
            ],
        );
        let subs = find_subtours(&m, &sol);
        assert_eq!(subs.len(), 2);
        assert_eq!(subs[0].vertices, vec![1, 2, 3]);
        assert_eq!(subs[1].vertices, vec![2, 4, 5]);
        assert_eq!(subs[1].vehicle, 1);
    }

    #[test]
    fn interior_rows_for_two_cycle() {
        let m = model(2);
        let sub = Subtour {
            vehicle: 0,
            vertices: vec![3, 4],
        };
        let rows = emit_gsecs(&sub, &m).unwrap();
        // Per vehicle: 2 crossing, 2 complement, 2 interior.
        assert_eq!(rows.len(), 12);
        for r in 0..2 {
            for j in [3, 4] {
                let other = 7 - j;
                let expected = LinearRow::new(
                    CutKind::GsecGamma,
                    [
                        (Var::arc(3, 4, r), 1.0),
                        (Var::arc(4, 3, r), 1.0),
                        (Var::serve(other, r), -1.0),
                    ],
                    Sense::Le,
                    0.0,
                );
                let found = rows.iter().any(|row| {
                    let mut a = row.terms.clone();
                    let mut b = expected.terms.clone();
                    a.sort_by_key(|t| t.0.sort_key());
                    b.sort_by_key(|t| t.0.sort_key());
                    row.sense == Sense::Le && row.rhs == 0.0 && a == b
                });
                assert!(found, "missing interior row for r={r}, j={j}");
            }
        }
    }

    #[test]
    fn emitted_rows_cut_off_the_triggering_solution() {
        let m = model(1);
        let sol = assign(&m, &[(0, 1, 0), (1, 6, 0), (3, 4, 0), (4, 5, 0), (5, 3, 0)]);
        let subs = find_subtours(&m, &sol);
        assert_eq!(subs.len(), 1);
        for rows in [emit_gsecs(&subs[0], &m).unwrap(), emit_classic_secs(&subs[0], &m).unwrap()] {
            assert!(rows
                .iter()
                .any(|row| !row.is_satisfied(|v| m.value_of(&sol, v))));
            // A genuine path serving the same customers satisfies all of them.
            let path = assign(&m, &[(0, 1, 0), (1, 3, 0), (3, 4, 0), (4, 5, 0), (5, 6, 0)]);
            assert!(rows.iter().all(|row| row.is_satisfied(|v| m.value_of(&path, v))));
        }
    }

    #[test]
    fn depot_in_subtour_is_contract_violation() {
        let m = model(1);
        let sub = Subtour {
            vehicle: 0,
            vertices: vec![0, 1],
        };
        assert!(matches!(emit_gsecs(&sub, &m), Err(Error::Contract(_))));
    }
}
