//! Residual flow network over the points of a current, with cycle
//! canceling, source-to-sink path tracing and a max-cost circulation.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::geometry::{Point, Segment};
use crate::weight::Weight;

/// One arc of a curve on `Ē`: a segment of `E`, or a radial leg to `x_∞`.
#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    Seg(Segment),
    Leg { point: Point, outward: bool },
}

impl Step {
    pub fn tail(&self) -> Point {
        match self {
            Step::Seg(s) => s.tail(),
            Step::Leg { point, outward: true } => point.clone(),
            Step::Leg { outward: false, .. } => Point::Infinity,
        }
    }

    pub fn head(&self) -> Point {
        match self {
            Step::Seg(s) => s.head(),
            Step::Leg { outward: true, .. } => Point::Infinity,
            Step::Leg { point, outward: false } => point.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct NetArc<W> {
    pub from: usize,
    pub to: usize,
    pub step: Step,
    pub cap: W,
    pub res: W,
}

/// A path or cycle of arc indices carrying `weight`.
#[derive(Clone, Debug)]
pub(crate) struct FlowPath<W> {
    pub arcs: Vec<usize>,
    pub weight: W,
    pub closed: bool,
}

#[derive(Clone, Debug)]
pub(crate) struct Network<W> {
    pub nodes: Vec<Point>,
    pub arcs: Vec<NetArc<W>>,
    /// Out-arcs per node, ordered by head id.
    out: Vec<Vec<usize>>,
}

impl<W: Weight> Network<W> {
    pub fn new(steps: Vec<(Step, W)>) -> Self {
        let set: BTreeSet<Point> = steps.iter().flat_map(|(s, _)| [s.tail(), s.head()]).collect();
        let nodes: Vec<Point> = set.into_iter().collect();
        let id = |p: &Point| nodes.binary_search(p).expect("endpoint is a node");
        let arcs: Vec<NetArc<W>> = steps
            .into_iter()
            .map(|(step, w)| NetArc { from: id(&step.tail()), to: id(&step.head()), step, res: w.clone(), cap: w })
            .collect();
        let mut out = vec![Vec::new(); nodes.len()];
        for (i, a) in arcs.iter().enumerate() {
            out[a.from].push(i);
        }
        for list in &mut out {
            list.sort_by_key(|&i| (arcs[i].to, i));
        }
        Network { nodes, arcs, out }
    }

    fn live(&self, a: usize) -> bool {
        self.arcs[a].res.is_positive()
    }

    pub fn live_arcs(&self) -> usize {
        (0..self.arcs.len()).filter(|&a| self.live(a)).count()
    }

    fn bottleneck(&self, arcs: &[usize]) -> W {
        arcs.iter()
            .map(|&a| self.arcs[a].res.clone())
            .reduce(|x, y| x.min_of(&y))
            .unwrap_or_else(W::zero)
    }

    fn cancel(&mut self, arcs: &[usize], amount: &W) {
        for &a in arcs {
            let arc = &mut self.arcs[a];
            arc.res = arc.res.minus(amount).settle(&arc.cap);
        }
    }

    /// Repeatedly finds a directed cycle of live arcs by depth-first search
    /// and subtracts its bottleneck.
    pub fn cancel_cycles_dfs(&mut self) -> Vec<FlowPath<W>> {
        const WHITE: u8 = 0;
        const GRAY: u8 = 1;
        const BLACK: u8 = 2;
        let n = self.nodes.len();
        let mut color = vec![WHITE; n];
        let mut pos = vec![usize::MAX; n];
        let mut next = vec![0usize; n];
        let mut cycles = Vec::new();
        for s in 0..n {
            if color[s] != WHITE {
                continue;
            }
            let mut stack = vec![s];
            let mut via: Vec<usize> = Vec::new();
            color[s] = GRAY;
            pos[s] = 0;
            next[s] = 0;
            while let Some(&u) = stack.last() {
                if next[u] == self.out[u].len() {
                    color[u] = BLACK;
                    pos[u] = usize::MAX;
                    stack.pop();
                    via.pop();
                    continue;
                }
                let a = self.out[u][next[u]];
                if !self.live(a) {
                    next[u] += 1;
                    continue;
                }
                let v = self.arcs[a].to;
                match color[v] {
                    WHITE => {
                        color[v] = GRAY;
                        pos[v] = stack.len();
                        next[v] = 0;
                        stack.push(v);
                        via.push(a);
                    }
                    GRAY => {
                        let k = pos[v];
                        let mut cycle = via[k..].to_vec();
                        cycle.push(a);
                        let amount = self.bottleneck(&cycle);
                        self.cancel(&cycle, &amount);
                        cycles.push(FlowPath { arcs: cycle, weight: amount, closed: true });
                        while stack.len() > k + 1 {
                            let x = stack.pop().expect("nonempty");
                            via.pop();
                            color[x] = WHITE;
                            pos[x] = usize::MAX;
                        }
                    }
                    _ => next[u] += 1,
                }
            }
        }
        cycles
    }

    /// Kahn order of the live support, if it is acyclic.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        for (i, a) in self.arcs.iter().enumerate() {
            if self.live(i) {
                indeg[a.to] += 1;
            }
        }
        let mut ready: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).rev().collect();
        let mut order = Vec::with_capacity(n);
        while let Some(u) = ready.pop() {
            order.push(u);
            for &a in self.out[u].iter().rev() {
                if self.live(a) {
                    let v = self.arcs[a].to;
                    indeg[v] -= 1;
                    if indeg[v] == 0 {
                        ready.push(v);
                    }
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Residual divergence `out - in` per node (that is, `-∂`).
    pub fn divergence(&self) -> Vec<W> {
        let mut div = vec![W::zero(); self.nodes.len()];
        for a in &self.arcs {
            div[a.from] = div[a.from].plus(&a.res);
            div[a.to] = div[a.to].minus(&a.res);
        }
        div
    }

    /// Decomposes an acyclic residual flow into source-to-sink paths.
    pub fn trace_paths(&mut self) -> Result<Vec<FlowPath<W>>> {
        if self.topological_order().is_none() {
            return Err(Error::Contract("path decomposition needs an acyclic current".into()));
        }
        let mut div = self.divergence();
        let scale: Vec<W> = div.iter().map(W::magnitude).collect();
        for (d, s) in div.iter_mut().zip(&scale) {
            *d = d.clone().settle(s);
        }
        let mut paths = Vec::new();
        for s in 0..self.nodes.len() {
            while div[s].is_positive() {
                let mut arcs = Vec::new();
                let mut u = s;
                loop {
                    if u != s && W::zero() > div[u] {
                        break;
                    }
                    let mut best: Option<usize> = None;
                    for &a in &self.out[u] {
                        if self.live(a) && best.is_none_or(|b| self.arcs[a].res > self.arcs[b].res) {
                            best = Some(a);
                        }
                    }
                    let Some(a) = best else {
                        return Err(Error::Contract(format!(
                            "flow is not conserved at {:?}",
                            self.nodes[u]
                        )));
                    };
                    arcs.push(a);
                    u = self.arcs[a].to;
                }
                let amount = self
                    .bottleneck(&arcs)
                    .min_of(&div[s])
                    .min_of(&W::zero().minus(&div[u]));
                self.cancel(&arcs, &amount);
                div[s] = div[s].minus(&amount).settle(&scale[s]);
                div[u] = div[u].plus(&amount).settle(&scale[u]);
                paths.push(FlowPath { arcs, weight: amount, closed: false });
            }
        }
        if self.live_arcs() > 0 {
            return Err(Error::Contract("flow left after all sources were exhausted".into()));
        }
        Ok(paths)
    }

    /// All simple cycles of live arcs, each listed once from its smallest node.
    pub fn simple_cycles(&self) -> Vec<Vec<usize>> {
        let mut found = Vec::new();
        for s in 0..self.nodes.len() {
            let mut on_path = vec![false; self.nodes.len()];
            let mut arcs = Vec::new();
            self.cycles_from(s, s, &mut on_path, &mut arcs, &mut found);
        }
        found
    }

    fn cycles_from(&self, start: usize, u: usize, on_path: &mut [bool], arcs: &mut Vec<usize>, found: &mut Vec<Vec<usize>>) {
        on_path[u] = true;
        for &a in &self.out[u] {
            if !self.live(a) {
                continue;
            }
            let v = self.arcs[a].to;
            if v == start {
                let mut c = arcs.clone();
                c.push(a);
                found.push(c);
            } else if v > start && !on_path[v] {
                arcs.push(a);
                self.cycles_from(start, v, on_path, arcs, found);
                arcs.pop();
            }
        }
        on_path[u] = false;
    }

    /// Maximum of `Σ cost_a f_a` over circulations `0 ≤ f ≤ res`, by
    /// canceling positive-cost residual cycles found with Bellman-Ford.
    pub fn max_cost_circulation(&self, cost: &[W]) -> (W, Vec<W>) {
        let n = self.nodes.len();
        let m = self.arcs.len();
        let mut flow = vec![W::zero(); m];
        let scale = cost.iter().fold(W::zero(), |s, c| s.plus(&c.magnitude()));
        loop {
            // residual edges: (from, to, arc, forward, weight = -gain)
            let mut edges = Vec::new();
            for (i, a) in self.arcs.iter().enumerate() {
                if a.res.minus(&flow[i]).settle(&a.cap).is_positive() {
                    edges.push((a.from, a.to, i, true, W::zero().minus(&cost[i])));
                }
                if flow[i].is_positive() {
                    edges.push((a.to, a.from, i, false, cost[i].clone()));
                }
            }
            let mut dist = vec![W::zero(); n];
            let mut parent: Vec<Option<usize>> = vec![None; n];
            let mut touched = None;
            for _ in 0..n {
                touched = None;
                for (e, (u, v, _, _, w)) in edges.iter().enumerate() {
                    let cand = dist[*u].plus(w);
                    if dist[*v].minus(&cand).settle(&scale).is_positive() {
                        dist[*v] = cand;
                        parent[*v] = Some(e);
                        touched = Some(*v);
                    }
                }
                if touched.is_none() {
                    break;
                }
            }
            let Some(mut v) = touched else { break };
            for _ in 0..n {
                v = edges[parent[v].expect("relaxed")].0;
            }
            let mut cycle = Vec::new();
            let start = v;
            loop {
                let e = parent[v].expect("on cycle");
                cycle.push(e);
                v = edges[e].0;
                if v == start {
                    break;
                }
            }
            let amount = cycle
                .iter()
                .map(|&e| {
                    let (_, _, i, forward, _) = &edges[e];
                    if *forward { self.arcs[*i].res.minus(&flow[*i]) } else { flow[*i].clone() }
                })
                .reduce(|x, y| x.min_of(&y))
                .expect("nonempty cycle");
            for &e in &cycle {
                let (_, _, i, forward, _) = &edges[e];
                flow[*i] = if *forward { flow[*i].plus(&amount) } else { flow[*i].minus(&amount) };
                flow[*i] = flow[*i].clone().settle(&self.arcs[*i].cap);
            }
        }
        let value = flow.iter().zip(cost).fold(W::zero(), |s, (f, c)| s.plus(&f.times(c)));
        (value, flow)
    }

    /// A copy whose residual capacities are `flow`.
    pub fn with_residuals(&self, flow: &[W]) -> Network<W> {
        let mut net = self.clone();
        for (a, f) in net.arcs.iter_mut().zip(flow) {
            a.res = f.clone();
        }
        net
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Coords;

    fn seg(a: (f64, f64), b: (f64, f64)) -> Step {
        Step::Seg(Segment::line(Coords::new(vec![a.0, a.1]).unwrap(), Coords::new(vec![b.0, b.1]).unwrap()).unwrap())
    }

    fn triangle(w: f64) -> Vec<(Step, f64)> {
        vec![(seg((0., 0.), (1., 0.)), w), (seg((1., 0.), (0., 1.)), w), (seg((0., 1.), (0., 0.)), w)]
    }

    #[test]
    fn dfs_cancels_figure_eight() {
        let mut steps = triangle(1.0);
        steps.extend([(seg((0., 0.), (-1., 0.)), 1.0), (seg((-1., 0.), (0., -1.)), 1.0), (seg((0., -1.), (0., 0.)), 1.0)]);
        let mut net = Network::new(steps);
        let cycles = net.cancel_cycles_dfs();
        assert_eq!(cycles.len(), 2);
        assert_eq!(net.live_arcs(), 0);
    }

    #[test]
    fn trace_y_merge() {
        let steps = vec![(seg((0., 0.), (1., 1.)), 1.0), (seg((2., 0.), (1., 1.)), 1.0), (seg((1., 1.), (1., 2.)), 2.0)];
        let mut net = Network::new(steps);
        let paths = net.trace_paths().unwrap();
        assert_eq!(paths.len(), 2);
        assert!(paths.iter().all(|p| p.weight == 1.0 && p.arcs.len() == 2));
    }

    #[test]
    fn trace_rejects_cycles() {
        let mut net = Network::new(triangle(1.0));
        assert!(matches!(net.trace_paths(), Err(Error::Contract(_))));
    }

    #[test]
    fn circulation_of_triangle() {
        let net = Network::new(triangle(2.0));
        let cost = vec![1.0; 3];
        let (value, flow) = net.max_cost_circulation(&cost);
        assert_eq!(value, 6.0);
        assert_eq!(flow, vec![2.0; 3]);
        assert_eq!(net.simple_cycles().len(), 1);
    }
}
