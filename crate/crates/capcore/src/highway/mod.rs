//! Backbone-peripheral routing over a random node field, and the two-stage
//! TDMA schedule that serves it.
//!
//! The plane is cut into small square cells; horizontal and vertical slabs of
//! cells each contribute a few vertex-disjoint crossing paths of occupied
//! cells, whose cell representatives form the backbone. Every other node
//! associates with a nearby backbone node, packets travel ingress hop →
//! Manhattan walk along the crossing paths → egress hop, and the resulting
//! link set is served by a peripheral stage (large reuse cells, long hops)
//! and a backbone stage (small reuse cells, short hops). The stage periods
//! and the per-link airtime they imply are what the capacity sweeps measure.

mod maxflow;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::csma::Schedule;
use crate::error::{Error, Result};
use crate::feasibility::{is_feasible, FamilySpec, FeasibleState, RadioConfig};
use crate::hnf::required_cs_range;
use crate::spatial::{Link, LinkClass, NodeSet, Point, SourceSinkPairs};

/// Geometric construction constants. The theory only asserts that suitable
/// constants exist; these defaults keep cell occupancy high (`c1`), bound the
/// association radius (`c2 · ln n`), and pick how many crossing paths each
/// slab contributes (`c3 · ln n`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HighwayParams {
    /// Cell side length.
    pub c1: f64,
    /// Association radius coefficient: peripherals must find a backbone node
    /// within `c2 · ln n`.
    pub c2: f64,
    /// Crossing paths requested per slab: `ceil(c3 · ln n)`.
    pub c3: f64,
    /// How many times the orchestrator may double `c1` after a percolation
    /// failure before giving up.
    pub max_grid_retries: u32,
    /// Per-backbone association load cap; defaults to `ceil(4·c1·c2·ln n)`.
    pub load_cap_override: Option<usize>,
}

impl Default for HighwayParams {
    fn default() -> Self {
        HighwayParams {
            c1: 2.0,
            c2: 2.0,
            c3: 0.7,
            max_grid_retries: 3,
            load_cap_override: None,
        }
    }
}

/// Square-cell partition of the plane with per-cell occupant lists.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellGrid {
    /// Side length of the covered square plane.
    pub plane_side: f64,
    /// Side length of one cell.
    pub cell_side: f64,
    /// Number of cells along each axis.
    pub cells_per_side: usize,
    /// Node indices per cell, row-major from the bottom-left cell.
    pub occupants: Vec<Vec<u32>>,
}

impl CellGrid {
    /// Column of the cell containing an x (or y) coordinate; coordinates are
    /// binned half-open (left/bottom inclusive) and the far edge is clamped
    /// into the last cell.
    fn coord_bin(&self, x: f64) -> usize {
        let raw = (x / self.cell_side).floor();
        (raw.max(0.0) as usize).min(self.cells_per_side - 1)
    }

    /// Index of the cell containing a point.
    pub fn cell_index(&self, p: Point) -> usize {
        self.coord_bin(p.y) * self.cells_per_side + self.coord_bin(p.x)
    }

    /// Column and row of a cell index.
    pub fn cell_coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.cells_per_side, idx / self.cells_per_side)
    }

    /// Center point of a cell.
    pub fn cell_center(&self, idx: usize) -> Point {
        let (col, row) = self.cell_coords(idx);
        Point::new(
            (col as f64 + 0.5) * self.cell_side,
            (row as f64 + 0.5) * self.cell_side,
        )
    }

    /// True when the cell holds at least one node.
    pub fn is_occupied(&self, idx: usize) -> bool {
        !self.occupants[idx].is_empty()
    }

    /// Fraction of cells holding at least one node.
    pub fn occupied_fraction(&self) -> f64 {
        let occupied = self.occupants.iter().filter(|c| !c.is_empty()).count();
        occupied as f64 / self.occupants.len() as f64
    }
}

/// Partitions the nodes into cells of side `c1`.
pub fn build_grid(nodes: &NodeSet, c1: f64) -> Result<CellGrid> {
    if !(c1 > 0.0) || !c1.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "cell side must be positive and finite, got {c1}"
        )));
    }
    let cells_per_side = ((nodes.side_length / c1).ceil() as usize).max(1);
    let mut grid = CellGrid {
        plane_side: nodes.side_length,
        cell_side: c1,
        cells_per_side,
        occupants: vec![Vec::new(); cells_per_side * cells_per_side],
    };
    for (i, p) in nodes.nodes.iter().enumerate() {
        let idx = grid.cell_index(*p);
        grid.occupants[idx].push(i as u32);
    }
    Ok(grid)
}

/// Access maps from every node to the backbone nodes serving it: one entry
/// point onto a horizontal path (for sending) and one onto a vertical path
/// (for receiving). Backbone nodes in the relevant role map to themselves.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Association {
    /// Per node: backbone node used to enter a horizontal path.
    pub h_access: Vec<u32>,
    /// Per node: backbone node used to leave a vertical path.
    pub v_access: Vec<u32>,
    /// Association radius the assignments were constrained by.
    pub radius: f64,
    /// Load cap each backbone node was held to, per role.
    pub load_cap: usize,
    /// Largest realized per-backbone load across both roles.
    pub max_access_load: usize,
    /// Longest realized access hop.
    pub max_access_distance: f64,
}

/// The constructed backbone: crossing paths of cells, their representative
/// nodes, and (once associated) the peripheral access maps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HighwaySystem {
    pub grid: CellGrid,
    pub params: HighwayParams,
    /// Design size the logarithmic radii were computed from (plane area).
    pub n_design: f64,
    /// Left-to-right crossing paths as cell-index sequences.
    pub h_paths: Vec<Vec<usize>>,
    /// Bottom-to-top crossing paths as cell-index sequences.
    pub v_paths: Vec<Vec<usize>>,
    /// Representative node of every cell on some path.
    pub representatives: BTreeMap<usize, u32>,
    /// All distinct backbone nodes, ascending.
    pub backbone_nodes: Vec<u32>,
    /// Peripheral access maps; `None` until `associate_peripherals` runs.
    pub association: Option<Association>,
}

impl HighwaySystem {
    /// Pretty JSON for inspection and replay.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses a system serialized by `to_json`.
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Node sequence along a cell path (one representative per cell).
    fn node_path(&self, cells: &[usize]) -> Vec<u32> {
        cells.iter().map(|c| self.representatives[c]).collect()
    }
}

/// One slab's crossing-path extraction via unit-capacity max flow. `cells`
/// lists the occupied grid cell indices of the slab in (along, across)
/// coordinates: `along` runs in the crossing direction.
fn slab_crossing_paths(
    grid: &CellGrid,
    slab_cells: &dyn Fn(usize, usize) -> usize,
    along_len: usize,
    across_len: usize,
    wanted: u32,
) -> Vec<Vec<usize>> {
    let local = |a: usize, c: usize| a * across_len + c;
    let n_local = along_len * across_len;
    // Vertex split: in = 2v, out = 2v+1; then master source, source, sink.
    let master = 2 * n_local;
    let source = 2 * n_local + 1;
    let sink = 2 * n_local + 2;
    let mut dinic = maxflow::Dinic::new(2 * n_local + 3);
    dinic.add_edge(master, source, wanted);

    let occupied =
        |a: usize, c: usize| grid.is_occupied(slab_cells(a, c));
    for a in 0..along_len {
        for c in 0..across_len {
            if !occupied(a, c) {
                continue;
            }
            let v = local(a, c);
            dinic.add_edge(2 * v, 2 * v + 1, 1);
            if a == along_len - 1 {
                dinic.add_edge(2 * v + 1, sink, 1);
            }
            // Edge-adjacent occupied neighbours within the slab, straight
            // ahead first so augmenting paths prefer to stay in their lane.
            let mut neighbours = Vec::new();
            if a + 1 < along_len && occupied(a + 1, c) {
                neighbours.push((a + 1, c));
            }
            if a > 0 && occupied(a - 1, c) {
                neighbours.push((a - 1, c));
            }
            if c + 1 < across_len && occupied(a, c + 1) {
                neighbours.push((a, c + 1));
            }
            if c > 0 && occupied(a, c - 1) {
                neighbours.push((a, c - 1));
            }
            for (na, nc) in neighbours {
                dinic.add_edge(2 * v + 1, 2 * local(na, nc), 1);
            }
        }
    }
    // Entry edges in low-discrepancy order so the paths actually selected
    // spread across the slab instead of stacking on one side; spread paths
    // keep per-path association catchments comparable.
    let mut entry_order: Vec<usize> = (0..across_len).collect();
    entry_order.sort_by_key(|&c| {
        ((c as f64 * 0.618_033_988_749_894_9).fract() * 1e12) as u64
    });
    for &c in &entry_order {
        if occupied(0, c) {
            dinic.add_edge(source, 2 * local(0, c), 1);
        }
    }

    let flow = dinic.max_flow(master, sink);
    let mut paths = Vec::with_capacity(flow as usize);
    // Decompose: walk unit flows master → source → in/out pairs → sink.
    while dinic.take_flow_step(master).is_some() {
        let mut v = dinic
            .take_flow_step(source)
            .expect("every source unit enters a first cell");
        let mut cells = Vec::new();
        loop {
            // v is an in-vertex; its cell is v / 2.
            let cell_local = v / 2;
            cells.push(slab_cells(cell_local / across_len, cell_local % across_len));
            let out = dinic
                .take_flow_step(v)
                .expect("unit vertex capacity must pass through");
            let next = dinic
                .take_flow_step(out)
                .expect("flow conservation leaves every out-vertex");
            if next == sink {
                break;
            }
            v = next;
        }
        paths.push(cells);
    }
    paths
}

/// Extracts vertex-disjoint crossing paths per horizontal and vertical slab
/// and selects the backbone representatives.
pub fn build_highways(
    grid: &CellGrid,
    nodes: &NodeSet,
    params: &HighwayParams,
) -> Result<HighwaySystem> {
    let m = grid.cells_per_side;
    let n_design = (nodes.side_length * nodes.side_length).max(2.0);
    let slab_cells_tall =
        (((params.c2 * n_design.ln()) / grid.cell_side).floor() as usize).clamp(1, m);
    let n_slabs = (m / slab_cells_tall).max(1);
    let wanted = ((params.c3 * n_design.ln()).ceil() as u32).max(1);

    let mut h_paths = Vec::new();
    let mut v_paths = Vec::new();
    for slab in 0..n_slabs {
        // Pro-rata boundaries keep slab heights within one cell of each
        // other (and never below the design height).
        let lo = slab * m / n_slabs;
        let hi = (slab + 1) * m / n_slabs;
        let height = hi - lo;

        let h = slab_crossing_paths(grid, &|a, c| (lo + c) * m + a, m, height, wanted);
        if h.is_empty() {
            return Err(Error::PercolationFailure {
                orientation: "horizontal",
                slab,
            });
        }
        h_paths.extend(h);

        let v = slab_crossing_paths(grid, &|a, c| a * m + (lo + c), m, height, wanted);
        if v.is_empty() {
            return Err(Error::PercolationFailure {
                orientation: "vertical",
                slab,
            });
        }
        v_paths.extend(v);
    }

    // Representative per path cell: the occupant nearest the cell center,
    // ties to the smaller index.
    let mut representatives = BTreeMap::new();
    for cell in h_paths.iter().chain(v_paths.iter()).flatten() {
        representatives.entry(*cell).or_insert_with(|| {
            let center = grid.cell_center(*cell);
            *grid.occupants[*cell]
                .iter()
                .min_by(|&&a, &&b| {
                    let da = nodes.nodes[a as usize].dist(center);
                    let db = nodes.nodes[b as usize].dist(center);
                    da.partial_cmp(&db).unwrap().then(a.cmp(&b))
                })
                .expect("path cells are occupied")
        });
    }
    let mut backbone_nodes: Vec<u32> = representatives.values().copied().collect();
    backbone_nodes.sort_unstable();
    backbone_nodes.dedup();

    Ok(HighwaySystem {
        grid: grid.clone(),
        params: params.clone(),
        n_design,
        h_paths,
        v_paths,
        representatives,
        backbone_nodes,
        association: None,
    })
}

/// Finds, for every node, the nearest capacity-respecting backbone node of
/// the given role set, spilling to the next-nearest when a backbone is full.
fn assign_access(
    nodes: &NodeSet,
    grid: &CellGrid,
    role_nodes: &[u32],
    radius: f64,
    load_cap: usize,
) -> Result<(Vec<u32>, usize, f64)> {
    let mut by_cell: HashMap<usize, Vec<u32>> = HashMap::new();
    for &b in role_nodes {
        by_cell
            .entry(grid.cell_index(nodes.nodes[b as usize]))
            .or_default()
            .push(b);
    }
    let is_role: std::collections::HashSet<u32> = role_nodes.iter().copied().collect();
    let mut load: HashMap<u32, usize> = HashMap::new();
    let mut access = vec![0u32; nodes.len()];
    let mut max_load = 0usize;
    let mut max_dist = 0.0f64;

    let m = grid.cells_per_side as i64;
    for (i, slot) in access.iter_mut().enumerate() {
        if is_role.contains(&(i as u32)) {
            *slot = i as u32;
            continue;
        }
        let p = nodes.nodes[i];
        let (c0, r0) = {
            let idx = grid.cell_index(p);
            let (c, r) = grid.cell_coords(idx);
            (c as i64, r as i64)
        };
        let mut candidates: Vec<(f64, u32)> = Vec::new();
        let max_ring = (radius / grid.cell_side).ceil() as i64 + 1;
        let mut best_ok: Option<f64> = None;
        for ring in 0..=max_ring {
            // Cells at Chebyshev distance `ring`; any node there is at least
            // (ring - 1) cell sides away, so once the best usable candidate
            // beats that bound the search is complete.
            let floor_dist = (ring - 1).max(0) as f64 * grid.cell_side;
            if best_ok.is_some_and(|d| d < floor_dist) {
                break;
            }
            for dc in -ring..=ring {
                for dr in -ring..=ring {
                    if dc.abs().max(dr.abs()) != ring {
                        continue;
                    }
                    let (c, r) = (c0 + dc, r0 + dr);
                    if c < 0 || r < 0 || c >= m || r >= m {
                        continue;
                    }
                    if let Some(list) = by_cell.get(&((r * m + c) as usize)) {
                        for &b in list {
                            let d = p.dist(nodes.nodes[b as usize]);
                            if d <= radius {
                                candidates.push((d, b));
                                if load.get(&b).copied().unwrap_or(0) < load_cap {
                                    best_ok = Some(best_ok.map_or(d, |x: f64| x.min(d)));
                                }
                            }
                        }
                    }
                }
            }
        }
        candidates
            .sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let chosen = candidates
            .iter()
            .find(|(_, b)| load.get(b).copied().unwrap_or(0) < load_cap);
        match chosen {
            Some(&(d, b)) => {
                *slot = b;
                let l = load.entry(b).or_insert(0);
                *l += 1;
                max_load = max_load.max(*l);
                max_dist = max_dist.max(d);
            }
            None => {
                return Err(Error::AssociationFailure {
                    node: i as u32,
                    radius,
                });
            }
        }
    }
    Ok((access, max_load, max_dist))
}

/// Associates every node with an entry backbone on a horizontal path and an
/// exit backbone on a vertical path, each within the logarithmic radius and
/// load-capped with spill to the next-nearest.
pub fn associate_peripherals(
    nodes: &NodeSet,
    mut system: HighwaySystem,
    load_cap: usize,
) -> Result<HighwaySystem> {
    if load_cap == 0 {
        return Err(Error::InvalidParameter(
            "association load cap must be at least 1".into(),
        ));
    }
    let radius = system.params.c2 * system.n_design.ln();
    let mut h_nodes: Vec<u32> = system
        .h_paths
        .iter()
        .flatten()
        .map(|c| system.representatives[c])
        .collect();
    h_nodes.sort_unstable();
    h_nodes.dedup();
    let mut v_nodes: Vec<u32> = system
        .v_paths
        .iter()
        .flatten()
        .map(|c| system.representatives[c])
        .collect();
    v_nodes.sort_unstable();
    v_nodes.dedup();

    let (h_access, h_load, h_dist) =
        assign_access(nodes, &system.grid, &h_nodes, radius, load_cap)?;
    let (v_access, v_load, v_dist) =
        assign_access(nodes, &system.grid, &v_nodes, radius, load_cap)?;
    system.association = Some(Association {
        h_access,
        v_access,
        radius,
        load_cap,
        max_access_load: h_load.max(v_load),
        max_access_distance: h_dist.max(v_dist),
    });
    Ok(system)
}

/// Routed link set: every distinct (transmitter, receiver, class) hop used by
/// some flow, with its relay load and the per-pair hop sequences.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoutePlan {
    /// Distinct directed links.
    pub links: Vec<Link>,
    /// Transmitter and receiver node indices per link.
    pub link_nodes: Vec<(u32, u32)>,
    /// Number of flows relayed over each link.
    pub loads: Vec<f64>,
    /// Per source-sink pair: indices into `links`, in hop order.
    pub routes: Vec<Vec<usize>>,
    /// Design size (plane area) for normalizations.
    pub n_design: f64,
    /// Cell side the backbone was built on.
    pub cell_side: f64,
    /// Plane side length.
    pub plane_side: f64,
    /// Design bound on backbone hop length (adjacent-cell diagonal reach).
    pub hop_bound_backbone: f64,
    /// Design bound on peripheral hop length (association radius).
    pub hop_bound_peripheral: f64,
    /// Largest relay load on a backbone link.
    pub max_backbone_load: f64,
    /// Largest relay load on a peripheral link.
    pub max_peripheral_load: f64,
}

impl RoutePlan {
    /// Pretty JSON for inspection and replay.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses a plan serialized by `to_json`.
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Interns links by (transmitter, receiver, class) and tallies loads.
struct LinkTally<'a> {
    nodes: &'a NodeSet,
    index: HashMap<(u32, u32, LinkClass), usize>,
    links: Vec<Link>,
    link_nodes: Vec<(u32, u32)>,
    loads: Vec<f64>,
}

impl<'a> LinkTally<'a> {
    fn new(nodes: &'a NodeSet) -> Self {
        LinkTally {
            nodes,
            index: HashMap::new(),
            links: Vec::new(),
            link_nodes: Vec::new(),
            loads: Vec::new(),
        }
    }

    fn push(&mut self, route: &mut Vec<usize>, tx: u32, rx: u32, class: LinkClass) {
        let id = *self.index.entry((tx, rx, class)).or_insert_with(|| {
            self.links.push(Link::new(
                self.nodes.nodes[tx as usize],
                self.nodes.nodes[rx as usize],
                class,
            ));
            self.link_nodes.push((tx, rx));
            self.loads.push(0.0);
            self.links.len() - 1
        });
        self.loads[id] += 1.0;
        route.push(id);
    }
}

/// Routes every source-sink pair: ingress hop to a horizontal-path backbone,
/// Manhattan walk (horizontal path, junction cell, vertical path), egress hop
/// from a vertical-path backbone to the sink.
pub fn plan_routes(
    pairs: &SourceSinkPairs,
    nodes: &NodeSet,
    system: &HighwaySystem,
) -> Result<RoutePlan> {
    let assoc = system.association.as_ref().ok_or_else(|| {
        Error::InvalidParameter("peripheral association must run before routing".into())
    })?;

    // Node position on its (unique) horizontal / vertical path.
    let mut h_pos: HashMap<u32, (usize, usize)> = HashMap::new();
    let h_node_paths: Vec<Vec<u32>> =
        system.h_paths.iter().map(|p| system.node_path(p)).collect();
    for (pid, path) in h_node_paths.iter().enumerate() {
        for (pos, &node) in path.iter().enumerate() {
            h_pos.entry(node).or_insert((pid, pos));
        }
    }
    let mut v_pos: HashMap<u32, (usize, usize)> = HashMap::new();
    let v_node_paths: Vec<Vec<u32>> =
        system.v_paths.iter().map(|p| system.node_path(p)).collect();
    for (pid, path) in v_node_paths.iter().enumerate() {
        for (pos, &node) in path.iter().enumerate() {
            v_pos.entry(node).or_insert((pid, pos));
        }
    }
    let mut v_cell_pos: HashMap<usize, (usize, usize)> = HashMap::new();
    for (pid, path) in system.v_paths.iter().enumerate() {
        for (pos, &cell) in path.iter().enumerate() {
            v_cell_pos.entry(cell).or_insert((pid, pos));
        }
    }
    // Junction cells shared by a horizontal and a vertical path, by position
    // along the horizontal path. Computed lazily per path pair.
    let mut junctions: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();

    let mut tally = LinkTally::new(nodes);
    let mut routes = Vec::with_capacity(pairs.pairs.len());
    for &(s, t) in &pairs.pairs {
        let mut route = Vec::new();
        if s == t {
            routes.push(route);
            continue;
        }
        let b_in = assoc.h_access[s as usize];
        if b_in != s {
            tally.push(&mut route, s, b_in, LinkClass::Peripheral);
        }
        let (hp, pos_in) = h_pos[&b_in];

        let walk = |tally: &mut LinkTally,
                    route: &mut Vec<usize>,
                    path: &[u32],
                    from: usize,
                    to: usize| {
            let step: i64 = if to >= from { 1 } else { -1 };
            let mut i = from as i64;
            while i != to as i64 {
                let tx = path[i as usize];
                let rx = path[(i + step) as usize];
                tally.push(route, tx, rx, LinkClass::Backbone);
                i += step;
            }
        };

        if let Some(&(hp_t, pos_t)) = h_pos.get(&t) {
            if hp_t == hp {
                // Sink sits on the same horizontal path: ride it directly.
                walk(&mut tally, &mut route, &h_node_paths[hp], pos_in, pos_t);
                routes.push(route);
                continue;
            }
        }

        let b_out = assoc.v_access[t as usize];
        let (vp, pos_out) = v_pos[&b_out];
        let shared = junctions.entry((hp, vp)).or_insert_with(|| {
            system.h_paths[hp]
                .iter()
                .enumerate()
                .filter_map(|(ph, cell)| {
                    v_cell_pos
                        .get(cell)
                        .filter(|(pid, _)| *pid == vp)
                        .map(|&(_, pv)| (ph, pv))
                })
                .collect()
        });
        if shared.is_empty() {
            return Err(Error::MissingJunction {
                horizontal: hp,
                vertical: vp,
            });
        }
        // Junction nearest the entry position along the horizontal path;
        // ties take the smaller position.
        let &(pos_jh, pos_jv) = shared
            .iter()
            .min_by_key(|(ph, _)| {
                (
                    (*ph as i64 - pos_in as i64).abs(),
                    *ph,
                )
            })
            .expect("nonempty junction list");

        walk(&mut tally, &mut route, &h_node_paths[hp], pos_in, pos_jh);
        walk(&mut tally, &mut route, &v_node_paths[vp], pos_jv, pos_out);
        if b_out != t {
            tally.push(&mut route, b_out, t, LinkClass::Peripheral);
        }
        routes.push(route);
    }

    let hop_bound_backbone = 5.0f64.sqrt() * system.grid.cell_side;
    let hop_bound_peripheral = assoc.radius;
    let mut max_backbone_load = 0.0f64;
    let mut max_peripheral_load = 0.0f64;
    for (link, &load) in tally.links.iter().zip(&tally.loads) {
        match link.class {
            LinkClass::Backbone => {
                debug_assert!(link.len() <= hop_bound_backbone + 1e-9);
                max_backbone_load = max_backbone_load.max(load);
            }
            LinkClass::Peripheral => {
                debug_assert!(link.len() <= hop_bound_peripheral + 1e-9);
                max_peripheral_load = max_peripheral_load.max(load);
            }
        }
    }

    Ok(RoutePlan {
        links: tally.links,
        link_nodes: tally.link_nodes,
        loads: tally.loads,
        routes,
        n_design: system.n_design,
        cell_side: system.grid.cell_side,
        plane_side: system.grid.plane_side,
        hop_bound_backbone,
        hop_bound_peripheral,
        max_backbone_load,
        max_peripheral_load,
    })
}

/// Carrier-sensing deployment the schedule and rate accounting model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensingMode {
    /// One shared channel and one sensing range sized for the longest hop.
    SingleFull,
    /// Two channels with per-class sensing ranges; backbone nodes drive both
    /// channels concurrently.
    DualFull,
    /// Two channels with per-class sensing ranges; each node uses one channel
    /// at a time, so the stages split the timeline evenly.
    DualHalf,
}

impl SensingMode {
    /// Timeline share granted to (peripheral, backbone) stages.
    pub fn stage_shares(self) -> (f64, f64) {
        match self {
            SensingMode::DualFull => (1.0, 1.0),
            SensingMode::DualHalf | SensingMode::SingleFull => (0.5, 0.5),
        }
    }
}

/// Scheduling knobs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub sensing: SensingMode,
    /// Peripheral-stage reuse factor (capped by the supercell grid size).
    pub k_p: usize,
    /// Smallest backbone-stage reuse factor; the sensing range raises the
    /// factor above this floor whenever it demands more separation.
    pub k_b_min: usize,
    /// Guard-zone coefficient granted to long peripheral hops; smaller than
    /// the backbone's to keep long-hop exclusion areas affordable.
    pub delta_p: f64,
}

impl ScheduleParams {
    /// Default knobs for a sensing mode.
    pub fn new(sensing: SensingMode) -> Self {
        ScheduleParams {
            sensing,
            k_p: 3,
            k_b_min: 3,
            delta_p: 0.25,
        }
    }
}

/// Lower clamp for the relaxed peripheral SINR threshold, so extremely long
/// hops never demand a vanishing threshold.
const BETA_PERIPHERAL_FLOOR: f64 = 1e-3;

/// The two periodic stages with the sensing geometry they were sized by.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoStageSchedule {
    pub peripheral: Schedule,
    pub backbone: Schedule,
    pub sensing: SensingMode,
    /// Sensing range governing the peripheral stage.
    pub r_cs_peripheral: f64,
    /// Sensing range governing the backbone stage (equals the peripheral one
    /// in single-sensing mode).
    pub r_cs_backbone: f64,
    /// Guard-zone coefficient the peripheral states were certified with.
    pub delta_peripheral: f64,
    /// SINR threshold relaxed for long peripheral hops: `β·(r_tx/r_hop)^α`,
    /// clamped below.
    pub beta_peripheral: f64,
    /// Peripheral reuse-cell side.
    pub supercell_side: f64,
    /// Effective peripheral reuse factor.
    pub reuse_peripheral: usize,
    /// Backbone reuse factor.
    pub reuse_backbone: usize,
}

/// Buckets link ids by the reuse cell of their transmitter.
fn bucket_links(
    plan: &RoutePlan,
    class: LinkClass,
    cell_side: f64,
    cells_per_side: usize,
) -> HashMap<(usize, usize), Vec<usize>> {
    let mut buckets: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    let bin = |x: f64| ((x / cell_side).floor().max(0.0) as usize).min(cells_per_side - 1);
    for (id, link) in plan.links.iter().enumerate() {
        if link.class == class {
            buckets
                .entry((bin(link.tx.x), bin(link.tx.y)))
                .or_default()
                .push(id);
        }
    }
    buckets
}

/// Emits one stage: reuse-coloring phases crossed with round-robin ranks, one
/// link per active reuse cell per slot.
fn stage_states(
    buckets: &HashMap<(usize, usize), Vec<usize>>,
    reuse: usize,
) -> Vec<FeasibleState> {
    let rounds = buckets.values().map(Vec::len).max().unwrap_or(0);
    if rounds == 0 {
        return vec![FeasibleState::empty()];
    }
    let mut states = Vec::with_capacity(reuse * reuse * rounds);
    for a in 0..reuse {
        for b in 0..reuse {
            for q in 0..rounds {
                let members: Vec<u32> = buckets
                    .iter()
                    .filter(|((cx, cy), links)| cx % reuse == a && cy % reuse == b && links.len() > q)
                    .map(|(_, links)| links[q] as u32)
                    .collect();
                states.push(FeasibleState::new(members));
            }
        }
    }
    states
}

/// Certifies every state of a stage against its interference family and its
/// sensing family.
fn certify_stage(
    states: &[FeasibleState],
    plan: &RoutePlan,
    cfg: &RadioConfig,
    interference: &FamilySpec,
    r_cs: f64,
) -> Result<()> {
    let sensing = FamilySpec::PairwiseCs { r_cs };
    for (slot, state) in states.iter().enumerate() {
        if !is_feasible(state, &plan.links, interference, cfg)? {
            return Err(Error::CertificationFailure {
                slot,
                family: interference.tag().to_string(),
                state: state.clone(),
            });
        }
        if !is_feasible(state, &plan.links, &sensing, cfg)? {
            return Err(Error::CertificationFailure {
                slot,
                family: sensing.tag().to_string(),
                state: state.clone(),
            });
        }
    }
    Ok(())
}

/// Builds the two-stage schedule for a sensing mode. Sensing ranges are sized
/// from the design bounds (adjacent-cell reach for backbone hops, the
/// association radius for peripheral hops), so the same deployment constants
/// serve every instance of that size. Every emitted state is certified, not
/// assumed feasible.
pub fn two_stage_schedule(
    plan: &RoutePlan,
    cfg: &RadioConfig,
    params: &ScheduleParams,
) -> Result<TwoStageSchedule> {
    if params.k_p < 2 {
        return Err(Error::InvalidParameter(
            "peripheral reuse factor must be at least 2".into(),
        ));
    }
    if !(params.delta_p > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "peripheral guard coefficient must be positive, got {}",
            params.delta_p
        )));
    }
    // Per-channel sensing ranges from the guard-zone condition, with the
    // transmission range set to the class's design bound.
    let scale_cfg = |r_tx: f64| {
        let mut c = cfg.clone();
        c.r_xcl = cfg.r_xcl / cfg.r_tx * r_tx;
        c.r_tx = r_tx;
        c
    };
    let r_cs_b_dual = required_cs_range(
        &FamilySpec::BiPairwiseSir { delta: cfg.delta },
        &scale_cfg(plan.hop_bound_backbone),
    )?
    .r_cs_required;
    let r_cs_p_dual = required_cs_range(
        &FamilySpec::BiPairwiseSir { delta: params.delta_p },
        &scale_cfg(plan.hop_bound_peripheral),
    )?
    .r_cs_required;
    let (r_cs_p, r_cs_b) = match params.sensing {
        SensingMode::DualFull | SensingMode::DualHalf => (r_cs_p_dual, r_cs_b_dual),
        SensingMode::SingleFull => {
            let single = r_cs_p_dual.max(r_cs_b_dual);
            (single, single)
        }
    };

    // Peripheral stage: supercells sized so same-phase transmitters sit at
    // least r_cs apart; reuse capped by the supercell grid (a single
    // supercell degenerates to a plain round-robin).
    let supercell = (r_cs_p / (params.k_p as f64 - 1.0)).max(plan.cell_side);
    let supercells_per_side = ((plan.plane_side / supercell).ceil() as usize).max(1);
    let reuse_p = params.k_p.min(supercells_per_side);
    let p_buckets = bucket_links(plan, LinkClass::Peripheral, supercell, supercells_per_side);
    let p_states = stage_states(&p_buckets, reuse_p);

    // Backbone stage: grid-cell reuse with the factor the sensing range
    // demands (floored at the configured constant pattern); the period stays
    // k² per round regardless of how small the deployment is, which is
    // exactly what the protocol provisions.
    let cells_per_side = ((plan.plane_side / plan.cell_side).ceil() as usize).max(1);
    let reuse_b = ((r_cs_b / plan.cell_side).ceil() as usize + 1).max(params.k_b_min);
    let b_buckets = bucket_links(plan, LinkClass::Backbone, plan.cell_side, cells_per_side);
    let b_states = stage_states(&b_buckets, reuse_b);

    // Long peripheral hops get a relaxed SINR threshold; recorded here and
    // installed as per-link overrides for the peripheral certification.
    let beta_peripheral = (cfg.beta
        * (cfg.r_tx / plan.hop_bound_peripheral).powf(cfg.alpha))
    .max(BETA_PERIPHERAL_FLOOR);
    let mut cfg_p = cfg.clone();
    cfg_p.beta_overrides = plan
        .links
        .iter()
        .enumerate()
        .filter(|(_, l)| l.class == LinkClass::Peripheral)
        .map(|(i, _)| (i as u32, beta_peripheral))
        .collect();

    certify_stage(
        &p_states,
        plan,
        &cfg_p,
        &FamilySpec::BiPairwiseSir { delta: params.delta_p },
        r_cs_p,
    )?;
    certify_stage(
        &b_states,
        plan,
        cfg,
        &FamilySpec::BiPairwiseSir { delta: cfg.delta },
        r_cs_b,
    )?;

    let n_links = plan.links.len();
    Ok(TwoStageSchedule {
        peripheral: Schedule::new(p_states, n_links)?,
        backbone: Schedule::new(b_states, n_links)?,
        sensing: params.sensing,
        r_cs_peripheral: r_cs_p,
        r_cs_backbone: r_cs_b,
        delta_peripheral: params.delta_p,
        beta_peripheral,
        supercell_side: supercell,
        reuse_peripheral: reuse_p,
        reuse_backbone: reuse_b,
    })
}

/// Delivered-rate accounting for one sensing mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowReport {
    pub sensing: SensingMode,
    /// Worst delivered rate over all routed pairs.
    pub min_rate: f64,
    /// `min_rate · sqrt(n)`.
    pub normalized_sqrt_n: f64,
    /// `min_rate · sqrt(n · ln n)`.
    pub normalized_sqrt_n_log_n: f64,
    /// Pair attaining the minimum.
    pub bottleneck_pair: usize,
    /// Link attaining the minimum on that pair's path.
    pub bottleneck_link: usize,
    /// Class of the bottleneck link.
    pub bottleneck_class: LinkClass,
    /// Worst airtime/load ratio among backbone links.
    pub min_backbone_rate: Option<f64>,
    /// Worst airtime/load ratio among peripheral links.
    pub min_peripheral_rate: Option<f64>,
}

/// Computes the worst delivered rate: each link sustains its stage share of
/// airtime split across its relay load, and a pair delivers the minimum over
/// its hops.
pub fn min_flow_rate(
    plan: &RoutePlan,
    schedules: &TwoStageSchedule,
    sensing: SensingMode,
) -> Result<FlowReport> {
    if sensing != schedules.sensing {
        return Err(Error::InvalidParameter(format!(
            "schedules were built for {:?}, not {:?}",
            schedules.sensing, sensing
        )));
    }
    let (share_p, share_b) = sensing.stage_shares();
    let airtime_p = crate::csma::tdma_throughput(&schedules.peripheral)?;
    let airtime_b = crate::csma::tdma_throughput(&schedules.backbone)?;
    let airtime: Vec<f64> = plan
        .links
        .iter()
        .enumerate()
        .map(|(i, link)| match link.class {
            LinkClass::Peripheral => share_p * airtime_p[i],
            LinkClass::Backbone => share_b * airtime_b[i],
        })
        .collect();

    let mut min_rate = f64::INFINITY;
    let mut bottleneck = None;
    for (pair, route) in plan.routes.iter().enumerate() {
        for &link in route {
            let rate = airtime[link] / plan.loads[link];
            if rate < min_rate {
                min_rate = rate;
                bottleneck = Some((pair, link));
            }
        }
    }
    let (bottleneck_pair, bottleneck_link) = bottleneck.ok_or_else(|| {
        Error::InvalidParameter("no routed pair uses any link".into())
    })?;

    let mut min_backbone_rate: Option<f64> = None;
    let mut min_peripheral_rate: Option<f64> = None;
    for (i, link) in plan.links.iter().enumerate() {
        let rate = airtime[i] / plan.loads[i];
        let slot = match link.class {
            LinkClass::Backbone => &mut min_backbone_rate,
            LinkClass::Peripheral => &mut min_peripheral_rate,
        };
        *slot = Some(slot.map_or(rate, |r: f64| r.min(rate)));
    }

    let n = plan.n_design;
    Ok(FlowReport {
        sensing,
        min_rate,
        normalized_sqrt_n: min_rate * n.sqrt(),
        normalized_sqrt_n_log_n: min_rate * (n * n.ln()).sqrt(),
        bottleneck_pair,
        bottleneck_link,
        bottleneck_class: plan.links[bottleneck_link].class,
        min_backbone_rate,
        min_peripheral_rate,
    })
}

/// End-to-end construction: grid, highways (doubling the cell side on
/// percolation failure, up to the configured retries), association with the
/// default load cap, and routing.
pub fn build_highway_system(
    nodes: &NodeSet,
    pairs: &SourceSinkPairs,
    params: &HighwayParams,
) -> Result<(HighwaySystem, RoutePlan)> {
    let mut attempt_params = params.clone();
    let mut last_err = None;
    for attempt in 0..=params.max_grid_retries {
        let grid = build_grid(nodes, attempt_params.c1)?;
        match build_highways(&grid, nodes, &attempt_params) {
            Ok(system) => {
                let n_design = system.n_design;
                let load_cap = params.load_cap_override.unwrap_or_else(|| {
                    (4.0 * attempt_params.c1 * attempt_params.c2 * n_design.ln()).ceil() as usize
                });
                let system = associate_peripherals(nodes, system, load_cap)?;
                let plan = plan_routes(pairs, nodes, &system)?;
                return Ok((system, plan));
            }
            Err(e @ Error::PercolationFailure { .. }) if attempt < params.max_grid_retries => {
                attempt_params.c1 *= 2.0;
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("loop exits early unless a retryable failure occurred"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::generate_network;

    /// Nodes exactly at the centers of the listed (col, row) cells.
    fn synthetic_nodes(side: f64, c1: f64, cells: &[(usize, usize)]) -> NodeSet {
        NodeSet {
            side_length: side,
            seed: 0,
            nodes: cells
                .iter()
                .map(|&(c, r)| {
                    Point::new((c as f64 + 0.5) * c1, (r as f64 + 0.5) * c1)
                })
                .collect(),
        }
    }

    fn full_grid_nodes(m: usize, c1: f64) -> NodeSet {
        let cells: Vec<(usize, usize)> = (0..m)
            .flat_map(|r| (0..m).map(move |c| (c, r)))
            .collect();
        synthetic_nodes(m as f64 * c1, c1, &cells)
    }

    #[test]
    fn occupancy_rate_matches_poisson_void_probability() {
        // 100 x 100 cells of side 2 under unit density: occupancy 1 - e^-4.
        let nodes = generate_network(40_000, 424242).unwrap();
        let grid = build_grid(&nodes, 2.0).unwrap();
        assert_eq!(grid.cells_per_side, 100);
        let expected = 1.0 - (-4.0f64).exp();
        assert!(
            (grid.occupied_fraction() - expected).abs() < 0.01,
            "occupied fraction {}",
            grid.occupied_fraction()
        );
    }

    #[test]
    fn oversized_cells_collapse_to_one() {
        let nodes = generate_network(64, 7).unwrap();
        let grid = build_grid(&nodes, 10.0).unwrap();
        assert_eq!(grid.cells_per_side, 1);
        assert_eq!(grid.occupants[0].len(), nodes.len());
    }

    #[test]
    fn boundary_points_bin_half_open_and_clamp() {
        let nodes = NodeSet {
            side_length: 4.0,
            seed: 0,
            nodes: vec![Point::new(2.0, 0.0), Point::new(4.0, 4.0), Point::new(0.0, 2.0)],
        };
        let grid = build_grid(&nodes, 2.0).unwrap();
        // x = 2 starts the second column; the far corner clamps into the last
        // cell; y = 2 starts the second row.
        assert_eq!(grid.occupants[1], vec![0]);
        assert_eq!(grid.occupants[3], vec![1]);
        assert_eq!(grid.occupants[2], vec![2]);
    }

    #[test]
    fn fully_occupied_grid_yields_height_many_paths_per_slab() {
        let nodes = full_grid_nodes(6, 1.0);
        let grid = build_grid(&nodes, 1.0).unwrap();
        // Request far more paths than can exist; extraction saturates at the
        // slab height.
        let params = HighwayParams {
            c1: 1.0,
            c3: 100.0,
            ..HighwayParams::default()
        };
        let system = build_highways(&grid, &nodes, &params).unwrap();
        let slab_height =
            (((params.c2 * system.n_design.ln()) / 1.0).floor() as usize).clamp(1, 6);
        let n_slabs = (6 / slab_height).max(1);
        assert_eq!(system.h_paths.len(), 6, "six disjoint rows exist");
        assert_eq!(system.v_paths.len(), 6);
        assert!(n_slabs >= 1);
        // Disjointness within orientation.
        let mut seen = std::collections::HashSet::new();
        for cell in system.h_paths.iter().flatten() {
            assert!(seen.insert(*cell), "cell {cell} reused across paths");
        }
    }

    #[test]
    fn checkerboard_grid_has_no_crossing() {
        let cells: Vec<(usize, usize)> = (0..8)
            .flat_map(|r| (0..8).map(move |c| (c, r)))
            .filter(|&(c, r)| (c + r) % 2 == 0)
            .collect();
        let nodes = synthetic_nodes(8.0, 1.0, &cells);
        let grid = build_grid(&nodes, 1.0).unwrap();
        let err = build_highways(&grid, &nodes, &HighwayParams {
            c1: 1.0,
            ..HighwayParams::default()
        })
        .unwrap_err();
        assert!(matches!(err, Error::PercolationFailure { .. }));
    }

    #[test]
    fn hundred_seeds_percolate_and_associate_cleanly() {
        let params = HighwayParams::default();
        for seed in 0..100 {
            let nodes = generate_network(4096, 1000 + seed).unwrap();
            let grid = build_grid(&nodes, 2.0).unwrap();
            let system = build_highways(&grid, &nodes, &params);
            assert!(system.is_ok(), "seed {seed} failed: {:?}", system.err());
            let system = system.unwrap();
            let load_cap =
                (4.0 * params.c1 * params.c2 * system.n_design.ln()).ceil() as usize;
            let done = associate_peripherals(&nodes, system, load_cap);
            assert!(done.is_ok(), "seed {seed} association: {:?}", done.err());
            let assoc = done.unwrap().association.unwrap();
            assert!(assoc.max_access_distance <= assoc.radius);
            assert!(assoc.max_access_load <= load_cap);
        }
    }

    #[test]
    fn backbone_hops_stay_within_adjacent_cell_reach() {
        let nodes = generate_network(1024, 5).unwrap();
        let grid = build_grid(&nodes, 2.0).unwrap();
        let system = build_highways(&grid, &nodes, &HighwayParams::default()).unwrap();
        let bound = 5.0f64.sqrt() * 2.0 + 1e-9;
        for path in system.h_paths.iter().chain(system.v_paths.iter()) {
            for pair in path.windows(2) {
                let a = nodes.nodes[system.representatives[&pair[0]] as usize];
                let b = nodes.nodes[system.representatives[&pair[1]] as usize];
                assert!(a.dist(b) <= bound, "hop of length {}", a.dist(b));
            }
        }
    }

    /// A hand-built system: one horizontal path along the bottom row and one
    /// vertical path along the left column of a 3x3 grid over [0,6)^2.
    /// Node 0 is the junction representative; nodes 1, 2 sit on the
    /// horizontal path, nodes 3, 4 on the vertical path.
    fn cross_system(extra: &[Point]) -> (NodeSet, HighwaySystem) {
        let mut pts = vec![
            Point::new(1.0, 1.0), // cell (0,0) junction
            Point::new(3.0, 1.0), // cell (1,0)
            Point::new(5.0, 1.0), // cell (2,0)
            Point::new(1.0, 3.0), // cell (0,1)
            Point::new(1.0, 5.0), // cell (0,2)
        ];
        pts.extend_from_slice(extra);
        let nodes = NodeSet {
            side_length: 6.0,
            seed: 0,
            nodes: pts,
        };
        let grid = build_grid(&nodes, 2.0).unwrap();
        let mut representatives = BTreeMap::new();
        representatives.insert(0usize, 0u32);
        representatives.insert(1usize, 1u32);
        representatives.insert(2usize, 2u32);
        representatives.insert(3usize, 3u32);
        representatives.insert(6usize, 4u32);
        let system = HighwaySystem {
            grid,
            params: HighwayParams::default(),
            n_design: 36.0,
            h_paths: vec![vec![0, 1, 2]],
            v_paths: vec![vec![0, 3, 6]],
            representatives,
            backbone_nodes: vec![0, 1, 2, 3, 4],
            association: None,
        };
        (nodes, system)
    }

    #[test]
    fn lone_peripheral_takes_its_only_backbone() {
        let (nodes, system) = cross_system(&[Point::new(3.0, 3.0)]);
        let system = associate_peripherals(&nodes, system, 10).unwrap();
        let assoc = system.association.unwrap();
        // Node 5 is nearest to node 0's cell? Distances: to node 1 (3,1): 2.0;
        // to node 3 (1,3): 2.0; h-access must pick the smaller node id on the
        // tie after distance sort.
        assert_eq!(assoc.h_access[5], 1);
        assert_eq!(assoc.v_access[5], 3);
        // Backbone nodes map to themselves in their own role.
        assert_eq!(assoc.h_access[1], 1);
        assert_eq!(assoc.v_access[3], 3);
    }

    /// A backbone row whose nodes serve both the horizontal and the vertical
    /// role, so peripherals are the only load on either access map.
    fn dual_role_row(extra: &[Point]) -> (NodeSet, HighwaySystem) {
        let mut pts = vec![
            Point::new(1.0, 1.0),
            Point::new(3.0, 1.0),
            Point::new(5.0, 1.0),
        ];
        pts.extend_from_slice(extra);
        let nodes = NodeSet {
            side_length: 6.0,
            seed: 0,
            nodes: pts,
        };
        let grid = build_grid(&nodes, 2.0).unwrap();
        let mut representatives = BTreeMap::new();
        representatives.insert(0usize, 0u32);
        representatives.insert(1usize, 1u32);
        representatives.insert(2usize, 2u32);
        let system = HighwaySystem {
            grid,
            params: HighwayParams::default(),
            n_design: 36.0,
            h_paths: vec![vec![0, 1, 2]],
            v_paths: vec![vec![0], vec![1], vec![2]],
            representatives,
            backbone_nodes: vec![0, 1, 2],
            association: None,
        };
        (nodes, system)
    }

    #[test]
    fn full_backbone_spills_to_next_nearest() {
        let (nodes, system) = dual_role_row(&[
            Point::new(3.0, 1.4),
            Point::new(3.0, 1.6),
        ]);
        let system = associate_peripherals(&nodes, system, 1).unwrap();
        let assoc = system.association.unwrap();
        // Both extras are nearest node 1; the cap of one forces the second
        // (node 4, processed later) to its next-nearest, the tie between
        // nodes 0 and 2 resolving to the smaller index.
        assert_eq!(assoc.h_access[3], 1);
        assert_eq!(assoc.h_access[4], 0);
        assert_eq!(assoc.max_access_load, 1);
    }

    #[test]
    fn stranded_node_reports_association_failure() {
        // Shrink the radius coefficient so the far corner finds no backbone
        // within reach.
        let (nodes, mut system) = dual_role_row(&[Point::new(5.0, 5.0)]);
        system.params.c2 = 0.35;
        let err = associate_peripherals(&nodes, system, 10).unwrap_err();
        match err {
            Error::AssociationFailure { node, radius } => {
                assert_eq!(node, 3);
                assert!(radius < 2.0);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn shared_access_backbone_routes_ingress_plus_egress_only() {
        // Source and sink both hang off the junction node 0.
        let (nodes, system) = cross_system(&[
            Point::new(0.5, 0.4),
            Point::new(1.6, 0.4),
        ]);
        let system = associate_peripherals(&nodes, system, 10).unwrap();
        let pairs = SourceSinkPairs {
            pairs: vec![(5, 6)],
            rates: vec![1.0],
        };
        let plan = plan_routes(&pairs, &nodes, &system).unwrap();
        assert_eq!(plan.routes[0].len(), 2);
        assert_eq!(plan.link_nodes[plan.routes[0][0]], (5, 0));
        assert_eq!(plan.link_nodes[plan.routes[0][1]], (0, 6));
        assert!(plan.links.iter().all(|l| l.class == LinkClass::Peripheral));
    }

    #[test]
    fn backbone_endpoints_on_one_path_ride_it_directly() {
        let (nodes, system) = cross_system(&[]);
        let system = associate_peripherals(&nodes, system, 10).unwrap();
        let pairs = SourceSinkPairs {
            pairs: vec![(1, 2)],
            rates: vec![1.0],
        };
        let plan = plan_routes(&pairs, &nodes, &system).unwrap();
        assert_eq!(plan.routes[0].len(), 1);
        assert_eq!(plan.link_nodes[plan.routes[0][0]], (1, 2));
        assert_eq!(plan.links[0].class, LinkClass::Backbone);
    }

    #[test]
    fn cross_path_route_turns_at_the_junction() {
        let (nodes, system) = cross_system(&[]);
        let system = associate_peripherals(&nodes, system, 10).unwrap();
        // From the far end of the horizontal path to the top of the vertical
        // path: ride H to the junction, then V upward.
        let pairs = SourceSinkPairs {
            pairs: vec![(2, 4)],
            rates: vec![1.0],
        };
        let plan = plan_routes(&pairs, &nodes, &system).unwrap();
        let hops: Vec<(u32, u32)> = plan.routes[0]
            .iter()
            .map(|&l| plan.link_nodes[l])
            .collect();
        assert_eq!(hops, vec![(2, 1), (1, 0), (0, 3), (3, 4)]);
    }

    #[test]
    fn relay_loads_accumulate_per_link() {
        let (nodes, system) = cross_system(&[]);
        let system = associate_peripherals(&nodes, system, 10).unwrap();
        let pairs = SourceSinkPairs {
            pairs: vec![(2, 4), (1, 4)],
            rates: vec![1.0, 1.0],
        };
        let plan = plan_routes(&pairs, &nodes, &system).unwrap();
        // Both flows traverse (1,0), (0,3), (3,4); only the first uses (2,1).
        let idx = |tx: u32, rx: u32| {
            plan.link_nodes
                .iter()
                .position(|&p| p == (tx, rx))
                .unwrap()
        };
        assert_eq!(plan.loads[idx(2, 1)], 1.0);
        assert_eq!(plan.loads[idx(1, 0)], 2.0);
        assert_eq!(plan.loads[idx(0, 3)], 2.0);
        assert_eq!(plan.loads[idx(3, 4)], 2.0);
        assert_eq!(plan.max_backbone_load, 2.0);
    }

    #[test]
    fn max_backbone_load_grows_like_sqrt_n() {
        let sizes = [256usize, 1024, 4096, 16384];
        let mut medians = Vec::new();
        for &n in &sizes {
            let mut loads: Vec<f64> = (0..5)
                .map(|seed| {
                    let nodes = generate_network(n as u64, 9000 + seed).unwrap();
                    let pairs = crate::spatial::sample_pairs(&nodes, 77 + seed).unwrap();
                    let (_, plan) =
                        build_highway_system(&nodes, &pairs, &HighwayParams::default()).unwrap();
                    plan.max_backbone_load
                })
                .collect();
            loads.sort_by(|a, b| a.partial_cmp(b).unwrap());
            medians.push(loads[2]);
        }
        // Least-squares slope of ln(load) against ln(n).
        let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
        let ys: Vec<f64> = medians.iter().map(|l| l.ln()).collect();
        let xm = xs.iter().sum::<f64>() / 4.0;
        let ym = ys.iter().sum::<f64>() / 4.0;
        let slope = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - xm) * (y - ym))
            .sum::<f64>()
            / xs.iter().map(|x| (x - xm).powi(2)).sum::<f64>();
        assert!(
            (0.35..=0.65).contains(&slope),
            "load slope {slope} with medians {medians:?}"
        );
    }

    fn reference_cfg() -> RadioConfig {
        RadioConfig::reference()
    }

    #[test]
    fn single_supercell_round_robins_the_peripheral_links() {
        let (nodes, system) = cross_system(&[
            Point::new(0.5, 0.4),
            Point::new(1.6, 0.4),
            Point::new(3.4, 1.6),
        ]);
        let system = associate_peripherals(&nodes, system, 10).unwrap();
        let pairs = SourceSinkPairs {
            pairs: vec![(5, 6), (7, 4)],
            rates: vec![1.0, 1.0],
        };
        let plan = plan_routes(&pairs, &nodes, &system).unwrap();
        let sched = two_stage_schedule(
            &plan,
            &reference_cfg(),
            &ScheduleParams::new(SensingMode::DualFull),
        )
        .unwrap();
        // The association radius dwarfs the 6-unit plane, so there is one
        // supercell and the peripheral stage is a bare round-robin.
        assert_eq!(sched.reuse_peripheral, 1);
        let n_peripheral = plan
            .links
            .iter()
            .filter(|l| l.class == LinkClass::Peripheral)
            .count();
        assert_eq!(sched.peripheral.period(), n_peripheral);
        for state in sched.peripheral.states() {
            assert_eq!(state.len(), 1);
        }
    }

    #[test]
    fn three_by_three_reuse_fires_each_link_every_nine_slots() {
        // One link per reuse cell: with factor 3 the period is 9 and every
        // link transmits exactly once per period.
        let mut buckets: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        let mut id = 0usize;
        for cx in 0..3 {
            for cy in 0..3 {
                buckets.insert((cx, cy), vec![id]);
                id += 1;
            }
        }
        let states = stage_states(&buckets, 3);
        assert_eq!(states.len(), 9);
        let mut counts = [0usize; 9];
        for state in &states {
            assert_eq!(state.len(), 1);
            for l in state.iter() {
                counts[l as usize] += 1;
            }
        }
        assert!(counts.iter().all(|&c| c == 1));
    }

    #[test]
    fn backbone_links_recur_every_reuse_period() {
        let nodes = generate_network(1024, 11).unwrap();
        let pairs = crate::spatial::sample_pairs(&nodes, 12).unwrap();
        let (_, plan) =
            build_highway_system(&nodes, &pairs, &HighwayParams::default()).unwrap();
        let sched = two_stage_schedule(
            &plan,
            &reference_cfg(),
            &ScheduleParams::new(SensingMode::DualFull),
        )
        .unwrap();
        let period = sched.backbone.period();
        let rounds = period / (sched.reuse_backbone * sched.reuse_backbone);
        assert_eq!(period, sched.reuse_backbone * sched.reuse_backbone * rounds);
        // Every backbone link appears exactly once per period.
        let mut counts = vec![0usize; plan.links.len()];
        for state in sched.backbone.states() {
            for l in state.iter() {
                counts[l as usize] += 1;
            }
        }
        for (i, link) in plan.links.iter().enumerate() {
            if link.class == LinkClass::Backbone {
                assert_eq!(counts[i], 1, "link {i}");
            }
        }
    }

    #[test]
    fn emitted_states_certify_on_random_instances() {
        for seed in 0..50 {
            let nodes = generate_network(256, 3000 + seed).unwrap();
            let pairs = crate::spatial::sample_pairs(&nodes, 400 + seed).unwrap();
            let (_, plan) =
                build_highway_system(&nodes, &pairs, &HighwayParams::default()).unwrap();
            for mode in [SensingMode::DualFull, SensingMode::SingleFull] {
                let sched =
                    two_stage_schedule(&plan, &reference_cfg(), &ScheduleParams::new(mode));
                assert!(sched.is_ok(), "seed {seed} mode {mode:?}: {:?}", sched.err());
            }
        }
    }

    #[test]
    fn dedicated_always_on_link_delivers_rate_one() {
        let link = Link::new(Point::new(0.0, 0.0), Point::new(1.0, 0.0), LinkClass::Backbone);
        let plan = RoutePlan {
            links: vec![link],
            link_nodes: vec![(0, 1)],
            loads: vec![1.0],
            routes: vec![vec![0]],
            n_design: 4.0,
            cell_side: 2.0,
            plane_side: 2.0,
            hop_bound_backbone: 5.0f64.sqrt() * 2.0,
            hop_bound_peripheral: 4.0,
            max_backbone_load: 1.0,
            max_peripheral_load: 0.0,
        };
        let schedules = TwoStageSchedule {
            peripheral: Schedule::new(vec![FeasibleState::empty()], 1).unwrap(),
            backbone: Schedule::new(vec![FeasibleState::new(vec![0])], 1).unwrap(),
            sensing: SensingMode::DualFull,
            r_cs_peripheral: 1.0,
            r_cs_backbone: 1.0,
            delta_peripheral: 0.25,
            beta_peripheral: 1.0,
            supercell_side: 2.0,
            reuse_peripheral: 1,
            reuse_backbone: 1,
        };
        let report = min_flow_rate(&plan, &schedules, SensingMode::DualFull).unwrap();
        assert_eq!(report.min_rate, 1.0);
        assert_eq!(report.bottleneck_class, LinkClass::Backbone);
    }

    #[test]
    fn delivered_rate_is_the_path_minimum() {
        let nodes = generate_network(256, 21).unwrap();
        let pairs = crate::spatial::sample_pairs(&nodes, 22).unwrap();
        let (_, plan) =
            build_highway_system(&nodes, &pairs, &HighwayParams::default()).unwrap();
        let sched = two_stage_schedule(
            &plan,
            &reference_cfg(),
            &ScheduleParams::new(SensingMode::DualHalf),
        )
        .unwrap();
        let report = min_flow_rate(&plan, &sched, SensingMode::DualHalf).unwrap();

        let airtime_p = crate::csma::tdma_throughput(&sched.peripheral).unwrap();
        let airtime_b = crate::csma::tdma_throughput(&sched.backbone).unwrap();
        let mut expected = f64::INFINITY;
        for route in &plan.routes {
            for &l in route {
                let a = match plan.links[l].class {
                    LinkClass::Peripheral => 0.5 * airtime_p[l],
                    LinkClass::Backbone => 0.5 * airtime_b[l],
                };
                expected = expected.min(a / plan.loads[l]);
            }
        }
        assert_eq!(report.min_rate, expected);
        // Mode mismatch is rejected.
        assert!(min_flow_rate(&plan, &sched, SensingMode::DualFull).is_err());
    }

    #[test]
    fn percolation_retry_doubles_the_cell_side() {
        // Checkerboard at c1 = 2 has no crossings, but doubling to c1 = 4
        // merges 2x2 blocks so every merged cell is occupied.
        let cells: Vec<(usize, usize)> = (0..8)
            .flat_map(|r| (0..8).map(move |c| (c, r)))
            .filter(|&(c, r)| (c + r) % 2 == 0)
            .collect();
        let nodes = synthetic_nodes(16.0, 2.0, &cells);
        let pairs = SourceSinkPairs {
            pairs: vec![(0, 1)],
            rates: vec![1.0],
        };
        let (system, _) =
            build_highway_system(&nodes, &pairs, &HighwayParams::default()).unwrap();
        assert_eq!(system.grid.cell_side, 4.0);
    }

    #[test]
    fn highway_artifacts_round_trip_through_json() {
        let nodes = generate_network(256, 31).unwrap();
        let pairs = crate::spatial::sample_pairs(&nodes, 32).unwrap();
        let (system, plan) =
            build_highway_system(&nodes, &pairs, &HighwayParams::default()).unwrap();
        let system2 = HighwaySystem::from_json(&system.to_json().unwrap()).unwrap();
        assert_eq!(system.backbone_nodes, system2.backbone_nodes);
        assert_eq!(system.h_paths, system2.h_paths);
        let plan2 = RoutePlan::from_json(&plan.to_json().unwrap()).unwrap();
        assert_eq!(plan.link_nodes, plan2.link_nodes);
        assert_eq!(plan.loads, plan2.loads);
    }
}
