//! Bounded path enumeration.

use crate::bridge::{ContractProgram, SiteRef};
use crate::evm::{BlockId, EdgeKind, FunctionBody, MAX_CALL_DEPTH};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::Hash;

/// A graph explored state by state. States carry whatever context the
/// graph needs (a call stack for CFGs); paths are reported as node lists.
pub trait PathGraph {
    type Node: Copy + Ord;
    type State: Clone + Eq + Hash;

    fn node(&self, s: &Self::State) -> Self::Node;
    fn next(&self, s: &Self::State) -> Vec<Self::State>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PathBounds {
    /// Longest path, in nodes.
    pub max_depth: usize,
    /// Extra visits of a state allowed on one path.
    pub unroll: usize,
    /// Recorded paths before giving up.
    pub max_paths: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Enumeration<N> {
    /// Every path from the start ending at a target, in discovery order.
    pub paths: Vec<Vec<N>>,
    pub truncated: bool,
}

/// All paths from `start` that end at a node satisfying `target`. A path
/// may pass through a target and continue. `useful` prunes states that can
/// no longer reach a target.
pub fn enumerate<G: PathGraph>(
    g: &G,
    start: G::State,
    target: impl Fn(G::Node) -> bool,
    useful: impl Fn(G::Node) -> bool,
    bounds: PathBounds,
    cancel: &dyn Fn() -> bool,
) -> Enumeration<G::Node> {
    let mut out = Enumeration {
        paths: Vec::new(),
        truncated: false,
    };
    if bounds.max_depth == 0 || !useful(g.node(&start)) {
        return out;
    }
    let mut visits: HashMap<G::State, usize> = HashMap::new();
    let mut path: Vec<G::Node> = Vec::new();
    // Each frame: the state and the successors still to try.
    let mut frames: Vec<(G::State, Vec<G::State>)> = Vec::new();
    let enter = |s: G::State,
                 path: &mut Vec<G::Node>,
                 visits: &mut HashMap<G::State, usize>,
                 frames: &mut Vec<(G::State, Vec<G::State>)>,
                 out: &mut Enumeration<G::Node>| {
        let n = g.node(&s);
        path.push(n);
        *visits.entry(s.clone()).or_default() += 1;
        if target(n) {
            out.paths.push(path.clone());
        }
        let mut succ = g.next(&s);
        succ.reverse();
        frames.push((s, succ));
    };
    enter(start, &mut path, &mut visits, &mut frames, &mut out);
    let mut steps = 0usize;
    while let Some((_, succ)) = frames.last_mut() {
        steps += 1;
        if steps.is_multiple_of(4096) && cancel() {
            out.truncated = true;
            break;
        }
        if out.paths.len() >= bounds.max_paths {
            out.truncated = true;
            break;
        }
        match succ.pop() {
            Some(s) => {
                if !useful(g.node(&s)) {
                    continue;
                }
                if visits.get(&s).copied().unwrap_or(0) > bounds.unroll {
                    continue;
                }
                if path.len() >= bounds.max_depth {
                    out.truncated = true;
                    continue;
                }
                enter(s, &mut path, &mut visits, &mut frames, &mut out);
            }
            None => {
                let (s, _) = frames.pop().expect("non-empty");
                path.pop();
                if let Some(v) = visits.get_mut(&s) {
                    *v -= 1;
                }
            }
        }
    }
    out
}

/// A function body viewed as a graph of (block, call stack) states.
pub struct FunctionGraph<'a> {
    pub program: &'a ContractProgram,
    pub body: &'a FunctionBody,
}

impl PathGraph for FunctionGraph<'_> {
    type Node = BlockId;
    type State = (BlockId, Vec<BlockId>);

    fn node(&self, s: &Self::State) -> BlockId {
        s.0
    }

    fn next(&self, (b, stack): &Self::State) -> Vec<Self::State> {
        let mut out = Vec::new();
        for (to, kind) in self.program.cfg.successors(*b) {
            if !self.body.blocks.contains(&to) {
                continue;
            }
            match kind {
                EdgeKind::Normal => out.push((to, stack.clone())),
                EdgeKind::Call { return_to } => {
                    if stack.len() < MAX_CALL_DEPTH {
                        let mut s = stack.clone();
                        s.push(return_to);
                        out.push((to, s));
                    }
                }
                EdgeKind::Return => {
                    if stack.last() == Some(&to) {
                        let mut s = stack.clone();
                        s.pop();
                        out.push((to, s));
                    }
                }
            }
        }
        out
    }
}

/// Blocks of `body` from which some block of `targets` is reachable,
/// ignoring call/return matching.
pub fn can_reach(program: &ContractProgram, body: &FunctionBody, targets: &BTreeSet<BlockId>) -> BTreeSet<BlockId> {
    let mut preds: BTreeMap<BlockId, Vec<BlockId>> = BTreeMap::new();
    for (from, to) in program.cfg.edges.keys() {
        if body.blocks.contains(from) && body.blocks.contains(to) {
            preds.entry(*to).or_default().push(*from);
        }
    }
    let mut seen: BTreeSet<BlockId> = targets.iter().copied().filter(|t| body.blocks.contains(t)).collect();
    let mut work: Vec<BlockId> = seen.iter().copied().collect();
    while let Some(b) = work.pop() {
        for p in preds.get(&b).into_iter().flatten() {
            if seen.insert(*p) {
                work.push(*p);
            }
        }
    }
    seen
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PathRecord {
    pub id: usize,
    pub blocks: Vec<BlockId>,
    /// Checks passed before the final block, in traversal order.
    pub checks_on_path: Vec<SiteRef>,
}

impl PathRecord {
    pub fn last(&self) -> BlockId {
        *self.blocks.last().expect("paths are never empty")
    }
}

/// Paths from the entry of `body` to each target block.
pub fn function_paths(
    program: &ContractProgram,
    body: &FunctionBody,
    targets: &BTreeSet<BlockId>,
    bounds: PathBounds,
    cancel: &dyn Fn() -> bool,
) -> Enumeration<BlockId> {
    let useful = can_reach(program, body, targets);
    let g = FunctionGraph { program, body };
    enumerate(
        &g,
        (body.entry, Vec::new()),
        |n| targets.contains(&n),
        |n| useful.contains(&n),
        bounds,
        cancel,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Dag {
        succ: Vec<Vec<usize>>,
    }

    impl PathGraph for Dag {
        type Node = usize;
        type State = usize;
        fn node(&self, s: &usize) -> usize {
            *s
        }
        fn next(&self, s: &usize) -> Vec<usize> {
            self.succ[*s].clone()
        }
    }

    const WIDE: PathBounds = PathBounds {
        max_depth: 64,
        unroll: 1,
        max_paths: usize::MAX,
    };

    fn never() -> bool {
        false
    }

    #[test]
    fn diamond_has_two_paths() {
        let g = Dag {
            succ: vec![vec![1, 2], vec![3], vec![3], vec![]],
        };
        let e = enumerate(&g, 0, |n| n == 3, |_| true, WIDE, &never);
        assert_eq!(e.paths, vec![vec![0, 1, 3], vec![0, 2, 3]]);
        assert!(!e.truncated);
    }

    #[test]
    fn unreachable_target_gives_nothing() {
        let g = Dag {
            succ: vec![vec![1], vec![], vec![]],
        };
        let e = enumerate(&g, 0, |n| n == 2, |_| true, WIDE, &never);
        assert!(e.paths.is_empty());
    }

    #[test]
    fn loop_is_unrolled_once() {
        // 0 -> 1 -> 2, 1 -> 1
        let g = Dag {
            succ: vec![vec![1], vec![1, 2], vec![]],
        };
        let e = enumerate(&g, 0, |n| n == 2, |_| true, WIDE, &never);
        assert_eq!(e.paths, vec![vec![0, 1, 1, 2], vec![0, 1, 2]]);
        let once = PathBounds { unroll: 0, ..WIDE };
        let e = enumerate(&g, 0, |n| n == 2, |_| true, once, &never);
        assert_eq!(e.paths, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn depth_bound_truncates() {
        let g = Dag {
            succ: vec![vec![1], vec![2], vec![3], vec![]],
        };
        let b = PathBounds { max_depth: 3, ..WIDE };
        let e = enumerate(&g, 0, |n| n == 3, |_| true, b, &never);
        assert!(e.paths.is_empty());
        assert!(e.truncated);
    }

    /// Every node subset, in topological (index) order, that forms a chain
    /// of edges from the start to the target.
    fn subset_oracle(g: &Dag, start: usize, target: usize) -> BTreeSet<Vec<usize>> {
        let n = g.succ.len();
        let mut out = BTreeSet::new();
        for mask in 0u32..(1 << n) {
            if mask & (1 << start) == 0 || mask & (1 << target) == 0 {
                continue;
            }
            let nodes: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            if nodes[0] != start || *nodes.last().unwrap() != target {
                continue;
            }
            if nodes.windows(2).all(|w| g.succ[w[0]].contains(&w[1])) {
                out.insert(nodes);
            }
        }
        out
    }

    pub(crate) fn random_dag(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<usize>> {
        let density = rng.gen_range(0.15..0.6);
        (0..n)
            .map(|i| ((i + 1)..n).filter(|_| rng.gen_bool(density)).collect())
            .collect()
    }

    #[test]
    fn matches_subset_oracle_on_random_dags() {
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(2..=12);
            let g = Dag {
                succ: random_dag(&mut rng, n),
            };
            let target = n - 1;
            let got: BTreeSet<Vec<usize>> = enumerate(&g, 0, |x| x == target, |_| true, WIDE, &never)
                .paths
                .into_iter()
                .collect();
            assert_eq!(got, subset_oracle(&g, 0, target), "seed {seed}");
        }
    }
}
