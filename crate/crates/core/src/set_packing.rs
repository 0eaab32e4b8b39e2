//! Exact weighted set packing: minimize `<s, mu>` over binary `mu` with at
//! most one active member per conflict set.
//!
//! Items with non-negative score are fixed to zero. The remaining items are
//! split into connected components of the conflict graph, and each component
//! is solved by depth-first branch and bound, branching on the most negative
//! free score first. Among optimal packings the lexicographically smallest
//! `mu` is returned.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PackingProblem {
    pub scores: Vec<f64>,
    /// Member indices into `scores`.
    pub conflicts: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packing {
    pub selected: Vec<bool>,
    pub value: f64,
}

/// Sum of the selected scores in index order.
pub fn packing_value(scores: &[f64], selected: &[bool]) -> f64 {
    scores
        .iter()
        .zip(selected)
        .filter(|(_, &on)| on)
        .map(|(&s, _)| s)
        .sum()
}

pub fn is_packing(problem: &PackingProblem, selected: &[bool]) -> bool {
    problem
        .conflicts
        .iter()
        .all(|c| c.iter().filter(|&&m| selected[m]).count() <= 1)
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a != b {
            self.0[a.max(b)] = a.min(b);
        }
    }
}

pub fn solve_packing(problem: &PackingProblem) -> Packing {
    let n = problem.scores.len();
    let negative: Vec<bool> = problem.scores.iter().map(|&s| s < 0.0).collect();

    let mut uf = UnionFind((0..n).collect());
    let mut neighbours: Vec<Vec<usize>> = vec![Vec::new(); n];
    for set in &problem.conflicts {
        let members: Vec<usize> = set.iter().copied().filter(|&m| negative[m]).collect();
        for (i, &a) in members.iter().enumerate() {
            for &b in &members[i + 1..] {
                if a != b {
                    uf.union(a, b);
                    neighbours[a].push(b);
                    neighbours[b].push(a);
                }
            }
        }
    }
    for list in &mut neighbours {
        list.sort_unstable();
        list.dedup();
    }

    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut component_of = vec![usize::MAX; n];
    for v in (0..n).filter(|&v| negative[v]) {
        let root = uf.find(v);
        if component_of[root] == usize::MAX {
            component_of[root] = components.len();
            components.push(Vec::new());
        }
        components[component_of[root]].push(v);
    }

    let mut selected = vec![false; n];
    for items in &components {
        if items.len() == 1 {
            selected[items[0]] = true;
            continue;
        }
        for v in ComponentSearch::solve(&problem.scores, &neighbours, items) {
            selected[v] = true;
        }
    }
    let value = packing_value(&problem.scores, &selected);
    Packing { selected, value }
}

struct ComponentSearch<'a> {
    scores: &'a [f64],
    /// Component items, most negative first, ties by index.
    order: Vec<usize>,
    /// Conflicting positions in `order` for each position.
    adjacent: Vec<Vec<usize>>,
    blocked: Vec<u32>,
    chosen: Vec<bool>,
    best: Option<(f64, Vec<bool>)>,
}

impl<'a> ComponentSearch<'a> {
    /// Returns the selected items of the component.
    fn solve(scores: &'a [f64], neighbours: &[Vec<usize>], items: &[usize]) -> Vec<usize> {
        let mut order = items.to_vec();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
        let mut position = alloc::collections::BTreeMap::new();
        for (k, &v) in order.iter().enumerate() {
            position.insert(v, k);
        }
        let adjacent = order
            .iter()
            .map(|v| neighbours[*v].iter().map(|w| position[w]).collect())
            .collect();
        let mut search = ComponentSearch {
            scores,
            blocked: vec![0; order.len()],
            chosen: vec![false; order.len()],
            order,
            adjacent,
            best: None,
        };
        search.branch(0, 0.0);
        let (_, chosen) = search.best.expect("leaf always reached");
        search
            .order
            .iter()
            .zip(chosen)
            .filter(|(_, on)| *on)
            .map(|(&v, _)| v)
            .collect()
    }

    fn branch(&mut self, k: usize, current: f64) {
        if let Some((best, _)) = &self.best {
            let remaining: f64 = (k..self.order.len())
                .filter(|&j| self.blocked[j] == 0)
                .map(|j| self.scores[self.order[j]])
                .sum();
            let bound = current + remaining;
            // The slack keeps equal-valued optima alive despite rounding in
            // the differently ordered partial sums.
            if bound > best + 1e-12 * (1.0 + best.abs()) {
                return;
            }
        }
        if k == self.order.len() {
            self.leaf();
            return;
        }
        if self.blocked[k] == 0 {
            self.chosen[k] = true;
            for j in 0..self.adjacent[k].len() {
                self.blocked[self.adjacent[k][j]] += 1;
            }
            self.branch(k + 1, current + self.scores[self.order[k]]);
            for j in 0..self.adjacent[k].len() {
                self.blocked[self.adjacent[k][j]] -= 1;
            }
            self.chosen[k] = false;
        }
        self.branch(k + 1, current);
    }

    fn leaf(&mut self) {
        let mut items: Vec<usize> = self
            .order
            .iter()
            .zip(&self.chosen)
            .filter(|(_, &on)| on)
            .map(|(&v, _)| v)
            .collect();
        items.sort_unstable();
        let value: f64 = items.iter().map(|&v| self.scores[v]).sum();
        let better = match &self.best {
            None => true,
            Some((best, chosen)) => value < *best || (value == *best && self.lex_smaller(chosen)),
        };
        if better {
            self.best = Some((value, self.chosen.clone()));
        }
    }

    /// Whether the current selection is lexicographically smaller, by item
    /// index, than `other`.
    fn lex_smaller(&self, other: &[bool]) -> bool {
        let mut diff: Option<usize> = None;
        for (k, (&a, &b)) in self.chosen.iter().zip(other).enumerate() {
            if a != b && diff.is_none_or(|d| self.order[k] < self.order[d]) {
                diff = Some(k);
            }
        }
        diff.is_some_and(|k| !self.chosen[k])
    }
}
