//! Exact ergodicity decision and qualitative reachability machinery.
//!
//! A lower transition rate operator Q is ergodic — T_t f converges to a
//! constant gamble for every f — if and only if the top class
//! 𝒳₁ = {x : x is upper reachable from every y} is nonempty and every state
//! outside it lower-reaches it. Both conditions are purely qualitative: they
//! depend only on the signs of Q̄(1_x)(y) and Q(1_A)(y), never on the value
//! of t, so the decision involves no numerical integration.
//!
//! Sign queries inspect non-negative off-diagonal rates only, where float
//! comparison against 0.0 is exact. Rates that are intended to be positive
//! must therefore be entered as positive values; the document parser rejects
//! rationals that would underflow to zero.

use crate::error::{Error, Result};
use crate::gamble::Gamble;
use crate::rates::LowerRateModel;
use crate::semigroup::{DiscreteLto, SolverResult, TransitionSolver};

/// Digraph over states with an edge y → x exactly when Q̄(1_x)(y) > 0,
/// x ≠ y. Paths in this graph are the upper-reachability chains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReachabilityGraph {
    n: usize,
    /// adjacency[y] = sorted list of x with an edge y → x.
    adjacency: Vec<Vec<usize>>,
}

/// Trace of the lower-reachability fixed point: the increasing sequence
/// A_0 ⊆ A_1 ⊆ … up to the first index with A_n = A_{n+1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LowerReachTrace {
    /// Sorted member lists, one per iteration, ending at the fixed point.
    pub sets: Vec<Vec<usize>>,
}

impl LowerReachTrace {
    /// Index of the first stable set.
    pub fn terminal(&self) -> usize {
        self.sets.len() - 1
    }

    pub fn final_set(&self) -> &[usize] {
        self.sets.last().expect("trace has at least A_0").as_slice()
    }

    pub fn contains(&self, state: usize) -> bool {
        self.final_set().contains(&state)
    }
}

/// Verdict of [`decide_ergodic`] with its certificate.
#[derive(Debug, Clone)]
pub struct ErgodicityReport {
    pub verdict: bool,
    /// The top class 𝒳₁ (sorted state indices; empty when none).
    pub top_class: Vec<usize>,
    pub witness: ErgodicityWitness,
}

/// Certificate attached to the verdict.
#[derive(Debug, Clone)]
pub enum ErgodicityWitness {
    /// For a positive verdict: for each state, an upper-reachability path to
    /// the top class (the path for members is just the state itself), plus
    /// the lower-reachability trace of the top class absorbing the rest.
    Ergodic { paths: Vec<Vec<usize>>, absorption: LowerReachTrace },
    /// Top class empty: the pair (from, to) has no connecting path.
    EmptyTopClass { from: usize, to: usize },
    /// Some state never lower-reaches the top class; the trace's fixed
    /// point excludes it.
    NotAbsorbed { state: usize, trace: LowerReachTrace },
}

/// Builds the upper-reachability graph of a model from exact edge signs.
pub fn build_graph(model: &LowerRateModel) -> ReachabilityGraph {
    let n = model.n();
    let mut adjacency = vec![Vec::new(); n];
    for y in 0..n {
        for x in 0..n {
            if x != y && model.upper_edge_positive(y, x) {
                adjacency[y].push(x);
            }
        }
    }
    ReachabilityGraph { n, adjacency }
}

impl ReachabilityGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges_from(&self, y: usize) -> &[usize] {
        &self.adjacency[y]
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    /// All states reachable from `from` by a directed path, including
    /// `from` itself (the empty path counts).
    fn reachable_set(&self, from: usize) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(y) = stack.pop() {
            for &x in &self.adjacency[y] {
                if !seen[x] {
                    seen[x] = true;
                    stack.push(x);
                }
            }
        }
        seen
    }

    /// BFS path from `from` to `to`, if one exists. The empty path is
    /// returned when the endpoints coincide.
    pub fn path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        if from == to {
            return Some(vec![from]);
        }
        let mut parent = vec![usize::MAX; self.n];
        let mut queue = std::collections::VecDeque::from([from]);
        parent[from] = from;
        while let Some(y) = queue.pop_front() {
            for &x in &self.adjacency[y] {
                if parent[x] == usize::MAX {
                    parent[x] = y;
                    if x == to {
                        let mut path = vec![to];
                        let mut cur = to;
                        while cur != from {
                            cur = parent[cur];
                            path.push(cur);
                        }
                        path.reverse();
                        return Some(path);
                    }
                    queue.push_back(x);
                }
            }
        }
        None
    }

    /// Tarjan's strongly connected components, in reverse topological order
    /// of the condensation (components are emitted before their successors'
    /// ancestors).
    pub fn strongly_connected_components(&self) -> Vec<Vec<usize>> {
        struct State<'a> {
            graph: &'a ReachabilityGraph,
            index: usize,
            idx: Vec<Option<usize>>,
            low: Vec<usize>,
            stack: Vec<usize>,
            on_stack: Vec<bool>,
            comps: Vec<Vec<usize>>,
        }
        fn connect(v: usize, st: &mut State) {
            st.idx[v] = Some(st.index);
            st.low[v] = st.index;
            st.index += 1;
            st.stack.push(v);
            st.on_stack[v] = true;
            for &w in &st.graph.adjacency[v] {
                if st.idx[w].is_none() {
                    connect(w, st);
                    st.low[v] = st.low[v].min(st.low[w]);
                } else if st.on_stack[w] {
                    st.low[v] = st.low[v].min(st.idx[w].expect("visited"));
                }
            }
            if st.low[v] == st.idx[v].expect("set above") {
                let mut comp = Vec::new();
                loop {
                    let w = st.stack.pop().expect("stack invariant");
                    st.on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                st.comps.push(comp);
            }
        }
        let mut st = State {
            graph: self,
            index: 0,
            idx: vec![None; self.n],
            low: vec![0; self.n],
            stack: Vec::new(),
            on_stack: vec![false; self.n],
            comps: Vec::new(),
        };
        for v in 0..self.n {
            if st.idx[v].is_none() {
                connect(v, &mut st);
            }
        }
        st.comps
    }
}

/// True iff a directed path (possibly empty) leads from `from` to `to`.
pub fn upper_reachable(graph: &ReachabilityGraph, from: usize, to: usize) -> bool {
    graph.reachable_set(from)[to]
}

/// The top class 𝒳₁: states upper reachable from every state. Nonempty iff
/// the condensation of the graph has a unique sink component, in which case
/// it is that component.
pub fn top_class(graph: &ReachabilityGraph) -> Vec<usize> {
    let comps = graph.strongly_connected_components();
    let mut comp_of = vec![usize::MAX; graph.n()];
    for (cid, comp) in comps.iter().enumerate() {
        for &v in comp {
            comp_of[v] = cid;
        }
    }
    let mut sinks: Vec<usize> = Vec::new();
    'comp: for (cid, comp) in comps.iter().enumerate() {
        for &v in comp {
            for &w in graph.edges_from(v) {
                if comp_of[w] != cid {
                    continue 'comp;
                }
            }
        }
        sinks.push(cid);
    }
    // In a finite DAG every component reaches some sink, so a unique sink is
    // reachable from everywhere; multiple sinks cannot reach each other.
    if sinks.len() == 1 {
        comps[sinks[0]].clone()
    } else {
        Vec::new()
    }
}

/// Runs the lower-reachability fixed point A_{k+1} = A_k ∪ {y ∉ A_k :
/// Q(1_{A_k})(y) > 0} and reports whether `x` lands in the terminal set.
pub fn lower_reach(
    model: &LowerRateModel,
    set: &[usize],
    x: usize,
) -> Result<(bool, LowerReachTrace)> {
    let trace = lower_reach_trace(model, set)?;
    if x >= model.n() {
        return Err(Error::InvalidInput(format!("state {x} out of range")));
    }
    Ok((trace.contains(x), trace))
}

/// The full lower-reachability trace from a nonempty seed set.
pub fn lower_reach_trace(model: &LowerRateModel, set: &[usize]) -> Result<LowerReachTrace> {
    let n = model.n();
    if set.is_empty() {
        return Err(Error::InvalidInput("lower reachability needs a nonempty target set".into()));
    }
    let mut in_set = vec![false; n];
    for &s in set {
        if s >= n {
            return Err(Error::InvalidInput(format!("state {s} out of range")));
        }
        in_set[s] = true;
    }
    let members = |mask: &[bool]| -> Vec<usize> {
        mask.iter().enumerate().filter_map(|(i, &b)| b.then_some(i)).collect()
    };
    let mut sets = vec![members(&in_set)];
    loop {
        let additions: Vec<usize> = (0..n)
            .filter(|&y| !in_set[y] && model.lower_escape_positive(&in_set, y))
            .collect();
        if additions.is_empty() {
            return Ok(LowerReachTrace { sets });
        }
        for y in additions {
            in_set[y] = true;
        }
        sets.push(members(&in_set));
    }
}

/// Decides ergodicity exactly via the reachability characterisation:
/// nonempty top class plus lower reachability of the top class from every
/// other state. Deterministic and purely sign-based.
pub fn decide_ergodic(model: &LowerRateModel) -> ErgodicityReport {
    let graph = build_graph(model);
    let n = model.n();
    let class = top_class(&graph);
    if class.is_empty() {
        // At least two sink components exist; a state of one cannot reach a
        // state of the other.
        let comps = graph.strongly_connected_components();
        let mut comp_of = vec![usize::MAX; n];
        for (cid, comp) in comps.iter().enumerate() {
            for &v in comp {
                comp_of[v] = cid;
            }
        }
        let mut witness = (0, 0);
        'outer: for from in 0..n {
            let reach = graph.reachable_set(from);
            for to in 0..n {
                if !reach[to] {
                    witness = (from, to);
                    break 'outer;
                }
            }
        }
        return ErgodicityReport {
            verdict: false,
            top_class: class,
            witness: ErgodicityWitness::EmptyTopClass { from: witness.0, to: witness.1 },
        };
    }

    let trace = lower_reach_trace(model, &class).expect("top class is nonempty");
    for x in 0..n {
        if !class.contains(&x) && !trace.contains(x) {
            return ErgodicityReport {
                verdict: false,
                top_class: class,
                witness: ErgodicityWitness::NotAbsorbed { state: x, trace },
            };
        }
    }
    let target = class[0];
    let paths = (0..n)
        .map(|y| {
            let to = if class.contains(&y) { y } else { target };
            graph.path(y, to).expect("top class is reachable from every state")
        })
        .collect();
    ErgodicityReport {
        verdict: true,
        top_class: class,
        witness: ErgodicityWitness::Ergodic { paths, absorption: trace },
    }
}

/// Checks whether a discrete lower transition operator is 1-step absorbing:
/// 𝒳₁ = {x : min T̄1_x > 0} nonempty and T1_{𝒳₁}(x) > 0 for every x
/// outside it. Returns the verdict together with 𝒳₁.
pub fn one_step_absorbing(t: &DiscreteLto) -> Result<(bool, Vec<usize>)> {
    let n = t.dim();
    let mut class = Vec::new();
    for x in 0..n {
        let image = t.upper_apply(&Gamble::indicator(n, x)?)?;
        if image.min() > 0.0 {
            class.push(x);
        }
    }
    if class.is_empty() {
        return Ok((false, class));
    }
    if class.len() == n {
        return Ok((true, class));
    }
    let absorbed = t.apply(&Gamble::indicator_of(n, &class)?)?;
    let ok = (0..n).filter(|x| !class.contains(x)).all(|x| absorbed.values()[x] > 0.0);
    Ok((ok, class))
}

/// Three-valued verdict of [`regularly_absorbing`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbsorbVerdict {
    True,
    False,
    Unknown,
}

/// Checks whether a discrete lower transition operator is regularly
/// absorbing: some power makes min T̄^n 1_x positive for a nonempty set of
/// states, and the remaining states eventually enter it under T^n 1.
///
/// Positivity patterns of T̄^k 1_x and T^k 1_A evolve by a deterministic map
/// on state subsets (monotonicity and homogeneity sandwich any non-negative
/// gamble between scaled indicators of its support), so a repeated pattern
/// proves the condition can never hold and yields an exact `False`. The cap
/// bounds the iteration; hitting it without proof yields `Unknown`.
///
/// Operators produced by `evolve_operator` take the exact shortcut: for the
/// semigroup, regularly absorbing and 1-step absorbing are equivalent.
pub fn regularly_absorbing(t: &DiscreteLto, n_cap: usize) -> Result<(AbsorbVerdict, Vec<usize>)> {
    if n_cap == 0 {
        return Err(Error::InvalidInput("n_cap must be at least 1".into()));
    }
    if t.is_from_rate_semigroup() {
        let (ok, class) = one_step_absorbing(t)?;
        return Ok((if ok { AbsorbVerdict::True } else { AbsorbVerdict::False }, class));
    }

    let n = t.dim();
    let upper_pattern = |support: &[usize]| -> Result<Vec<usize>> {
        let image = t.upper_apply(&Gamble::indicator_of(n, support)?)?;
        Ok((0..n).filter(|&y| image.values()[y] > 0.0).collect())
    };
    let lower_pattern = |support: &[usize]| -> Result<Vec<usize>> {
        let image = t.apply(&Gamble::indicator_of(n, support)?)?;
        Ok((0..n).filter(|&y| image.values()[y] > 0.0).collect())
    };

    // Membership of x in the candidate class: does some T̄^k 1_x have a
    // strictly positive minimum? The support sequence is deterministic, so
    // revisiting any earlier support (including the seed {x}) proves the
    // full set is never reached.
    let mut member = vec![None; n];
    for x in 0..n {
        let mut seen = std::collections::BTreeSet::new();
        let mut support = vec![x];
        seen.insert(support.clone());
        for _ in 0..n_cap {
            support = upper_pattern(&support)?;
            if support.len() == n {
                member[x] = Some(true);
                break;
            }
            if !seen.insert(support.clone()) {
                member[x] = Some(false);
                break;
            }
        }
    }

    let class: Vec<usize> =
        (0..n).filter(|&x| member[x] == Some(true)).collect();
    let all_resolved_false = (0..n).all(|x| member[x] == Some(false));
    if all_resolved_false {
        return Ok((AbsorbVerdict::False, class));
    }
    if class.is_empty() {
        // Nobody certified in, and at least one state is unresolved.
        return Ok((AbsorbVerdict::Unknown, class));
    }

    // Absorption side, against the certified members (a subset of the true
    // class, so success here is sound by monotonicity).
    let mut outside: Vec<usize> = (0..n).filter(|x| !class.contains(x)).collect();
    let mut support = class.clone();
    let mut seen = std::collections::BTreeSet::new();
    seen.insert(support.clone());
    let mut cycled = false;
    for _ in 0..n_cap {
        support = lower_pattern(&support)?;
        outside.retain(|x| !support.contains(x));
        if outside.is_empty() {
            return Ok((AbsorbVerdict::True, class));
        }
        if !seen.insert(support.clone()) {
            cycled = true;
            break;
        }
    }
    // A cycle proves failure only when the class is exactly resolved.
    let class_exact = (0..n).all(|x| member[x].is_some());
    if cycled && class_exact {
        return Ok((AbsorbVerdict::False, class));
    }
    Ok((AbsorbVerdict::Unknown, class))
}

/// Outcome of the long-run lower expectation iteration.
#[derive(Debug, Clone)]
pub struct LimitOutcome {
    pub converged: bool,
    /// Midpoint of [min, max] of the final iterate when converged.
    pub value: Option<f64>,
    /// Half the final span: the accuracy claim for `value`.
    pub half_span: f64,
    /// The final iterate (per-state lower expectations at `t_final`).
    pub gamble: Gamble,
    /// Time reached by the doubling schedule.
    pub t_final: f64,
    /// Accumulated solver error estimates along the run.
    pub est_error: f64,
}

/// Computes lim T_t f by repeatedly doubling the elapsed time through the
/// semigroup (t, 2t, 4t, …) from t = 1/‖Q‖ (or t = 1 when ‖Q‖ = 0), until
/// the span of the iterate drops below `span_tol` or the time cap is
/// passed. Non-convergence is an outcome, not an error: the final gamble is
/// returned either way.
pub fn limit_lower_expectation(
    solver: &TransitionSolver,
    f: &Gamble,
    span_tol: f64,
    t_cap: f64,
) -> Result<LimitOutcome> {
    if !(span_tol > 0.0) || !span_tol.is_finite() {
        return Err(Error::InvalidInput(format!("span_tol must be positive, got {span_tol}")));
    }
    if !(t_cap > 0.0) || !t_cap.is_finite() {
        return Err(Error::InvalidInput(format!("t_cap must be positive, got {t_cap}")));
    }
    let bound = solver.model().norm_bound().value;
    let t0 = if bound == 0.0 { 1.0 } else { 1.0 / bound };

    let mut est_error = 0.0;
    let mut elapsed = 0.0;
    let mut current = f.clone();
    let mut step = t0;
    loop {
        if current.span() <= span_tol {
            let mid = (current.min() + current.max()) / 2.0;
            return Ok(LimitOutcome {
                converged: true,
                value: Some(mid),
                half_span: current.span() / 2.0,
                gamble: current,
                t_final: elapsed,
                est_error,
            });
        }
        if elapsed > t_cap {
            return Ok(LimitOutcome {
                converged: false,
                value: None,
                half_span: current.span() / 2.0,
                gamble: current,
                t_final: elapsed,
                est_error,
            });
        }
        let result: SolverResult = solver.evolve(&current, step)?;
        current = result.value;
        est_error += result.est_error;
        elapsed += step;
        // Doubling schedule: t, 2t, 4t, … realised as increments equal to
        // the elapsed time.
        step = elapsed;
    }
}
