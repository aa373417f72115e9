//! Dinic max-flow on unit-capacity graphs, used to extract vertex-disjoint
//! crossing paths from cell adjacency graphs.

/// A directed edge with residual capacity; `rev` indexes the paired reverse
/// edge in the adjacency list of `to`. Only `forward` edges exist in the
/// input graph; their pairs exist to let the solver cancel flow.
#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    rev: usize,
    cap: u32,
    forward: bool,
}

/// Max-flow solver over a fixed vertex set.
#[derive(Debug)]
pub(crate) struct Dinic {
    graph: Vec<Vec<Edge>>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

impl Dinic {
    pub(crate) fn new(n: usize) -> Self {
        Dinic {
            graph: vec![Vec::new(); n],
            level: vec![0; n],
            iter: vec![0; n],
        }
    }

    /// Adds a directed edge of the given capacity and returns its handle.
    pub(crate) fn add_edge(&mut self, from: usize, to: usize, cap: u32) -> (usize, usize) {
        let fwd = self.graph[from].len();
        let bwd = self.graph[to].len();
        self.graph[from].push(Edge {
            to,
            rev: bwd,
            cap,
            forward: true,
        });
        self.graph[to].push(Edge {
            to: from,
            rev: fwd,
            cap: 0,
            forward: false,
        });
        (from, fwd)
    }

    fn bfs(&mut self, source: usize, sink: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        let mut queue = std::collections::VecDeque::new();
        self.level[source] = 0;
        queue.push_back(source);
        while let Some(v) = queue.pop_front() {
            for e in &self.graph[v] {
                if e.cap > 0 && self.level[e.to] < 0 {
                    self.level[e.to] = self.level[v] + 1;
                    queue.push_back(e.to);
                }
            }
        }
        self.level[sink] >= 0
    }

    fn dfs(&mut self, v: usize, sink: usize, limit: u32) -> u32 {
        if v == sink {
            return limit;
        }
        while self.iter[v] < self.graph[v].len() {
            let (to, rev, cap) = {
                let e = &self.graph[v][self.iter[v]];
                (e.to, e.rev, e.cap)
            };
            if cap > 0 && self.level[v] < self.level[to] {
                let pushed = self.dfs(to, sink, limit.min(cap));
                if pushed > 0 {
                    self.graph[v][self.iter[v]].cap -= pushed;
                    self.graph[to][rev].cap += pushed;
                    return pushed;
                }
            }
            self.iter[v] += 1;
        }
        0
    }

    /// Computes the maximum flow from `source` to `sink`.
    pub(crate) fn max_flow(&mut self, source: usize, sink: usize) -> u32 {
        let mut flow = 0;
        while self.bfs(source, sink) {
            self.iter.iter_mut().for_each(|i| *i = 0);
            loop {
                let pushed = self.dfs(source, sink, u32::MAX);
                if pushed == 0 {
                    break;
                }
                flow += pushed;
            }
        }
        flow
    }

    /// Follows one unit of net flow out of `v`, returning the next vertex,
    /// if any. Consumes the unit so each flow path is walked once.
    pub(crate) fn take_flow_step(&mut self, v: usize) -> Option<usize> {
        for idx in 0..self.graph[v].len() {
            let (to, rev, forward) = {
                let e = &self.graph[v][idx];
                (e.to, e.rev, e.forward)
            };
            // A forward edge's paired reverse capacity equals the net flow
            // it carries.
            if forward && self.graph[to][rev].cap > 0 {
                self.graph[to][rev].cap -= 1;
                self.graph[v][idx].cap += 1;
                return Some(to);
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_chain_carries_one_unit() {
        let mut d = Dinic::new(3);
        d.add_edge(0, 1, 1);
        d.add_edge(1, 2, 1);
        assert_eq!(d.max_flow(0, 2), 1);
    }

    #[test]
    fn parallel_routes_add_up() {
        let mut d = Dinic::new(6);
        // Two vertex-disjoint routes 0 -> {1,2} -> {3,4} -> 5.
        d.add_edge(0, 1, 1);
        d.add_edge(0, 2, 1);
        d.add_edge(1, 3, 1);
        d.add_edge(2, 4, 1);
        d.add_edge(3, 5, 1);
        d.add_edge(4, 5, 1);
        assert_eq!(d.max_flow(0, 5), 2);
    }

    #[test]
    fn bottleneck_vertex_limits_flow() {
        let mut d = Dinic::new(8);
        // Both routes funnel through the split vertex 3in=3 / 3out=4.
        d.add_edge(0, 1, 1);
        d.add_edge(0, 2, 1);
        d.add_edge(1, 3, 1);
        d.add_edge(2, 3, 1);
        d.add_edge(3, 4, 1); // unit vertex capacity
        d.add_edge(4, 5, 1);
        d.add_edge(4, 6, 1);
        d.add_edge(5, 7, 1);
        d.add_edge(6, 7, 1);
        assert_eq!(d.max_flow(0, 7), 1);
    }

    #[test]
    fn flow_decomposition_walks_each_path_once() {
        let mut d = Dinic::new(6);
        d.add_edge(0, 1, 1);
        d.add_edge(0, 2, 1);
        d.add_edge(1, 3, 1);
        d.add_edge(2, 4, 1);
        d.add_edge(3, 5, 1);
        d.add_edge(4, 5, 1);
        assert_eq!(d.max_flow(0, 5), 2);
        let mut paths = Vec::new();
        while let Some(mut v) = d.take_flow_step(0) {
            let mut path = vec![v];
            while v != 5 {
                v = d.take_flow_step(v).expect("flow must continue to the sink");
                path.push(v);
            }
            paths.push(path);
        }
        paths.sort();
        assert_eq!(paths, vec![vec![1, 3, 5], vec![2, 4, 5]]);
    }
}
