//! Bipartite, edge-colored multigraph diagrams.
//!
//! A diagram stands for an index sum over products of weights: every H-node
//! is a summed hidden index `k`, every p-node a summed tensor index `i`, and
//! every edge `(h, p, c)` a factor `u^{(c)}_{k_h, i_p}`. Under SYM all edges
//! carry color 0.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Sym,
    Asym,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Sym => "sym",
            Scenario::Asym => "asym",
        })
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sym" => Ok(Scenario::Sym),
            "asym" => Ok(Scenario::Asym),
            other => Err(Error::Parse(format!("unknown scenario '{other}'"))),
        }
    }
}

/// Tensor order and weight-tying scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Setting {
    pub nu: u32,
    pub scenario: Scenario,
}

impl Setting {
    pub fn new(nu: u32, scenario: Scenario) -> Result<Self> {
        if !(2..=16).contains(&nu) {
            return Err(Error::InvalidSetting(format!("nu must be in 2..=16, got {nu}")));
        }
        Ok(Setting { nu, scenario })
    }

    pub fn colors(&self) -> u8 {
        match self.scenario {
            Scenario::Sym => 1,
            Scenario::Asym => self.nu as u8,
        }
    }

    fn color(&self, m: u32) -> u8 {
        match self.scenario {
            Scenario::Sym => 0,
            Scenario::Asym => m as u8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub h: u16,
    pub p: u16,
    pub color: u8,
}

impl Edge {
    pub fn new(h: u16, p: u16, color: u8) -> Self {
        Edge { h, p, color }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagram {
    pub h_nodes: u16,
    pub p_nodes: u16,
    pub edges: Vec<Edge>,
}

impl Diagram {
    pub fn new(h_nodes: u16, p_nodes: u16, mut edges: Vec<Edge>) -> Result<Self> {
        for e in &edges {
            if e.h >= h_nodes || e.p >= p_nodes {
                return Err(Error::InvalidSetting(format!("edge {e:?} references a missing node")));
            }
        }
        edges.sort_unstable();
        Ok(Diagram { h_nodes, p_nodes, edges })
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges grouped into `(edge, multiplicity)` runs, sorted.
    pub fn edge_runs(&self) -> Vec<(Edge, u32)> {
        let mut sorted = self.edges.clone();
        sorted.sort_unstable();
        let mut runs: Vec<(Edge, u32)> = Vec::new();
        for e in sorted {
            match runs.last_mut() {
                Some((last, m)) if *last == e => *m += 1,
                _ => runs.push((e, 1)),
            }
        }
        runs
    }

    pub fn degree_h(&self) -> Vec<u32> {
        let mut d = vec![0; self.h_nodes as usize];
        for e in &self.edges {
            d[e.h as usize] += 1;
        }
        d
    }

    pub fn degree_p(&self) -> Vec<u32> {
        let mut d = vec![0; self.p_nodes as usize];
        for e in &self.edges {
            d[e.p as usize] += 1;
        }
        d
    }

    pub fn color_counts(&self, colors: u8) -> Vec<u32> {
        let mut c = vec![0; colors.max(1) as usize];
        for e in &self.edges {
            let idx = e.color as usize;
            if idx >= c.len() {
                c.resize(idx + 1, 0);
            }
            c[idx] += 1;
        }
        c
    }

    /// Connected components as separate diagrams. Isolated nodes become
    /// edge-free components of their own.
    pub fn components(&self) -> Vec<Diagram> {
        let nh = self.h_nodes as usize;
        let total = nh + self.p_nodes as usize;
        let mut parent: Vec<usize> = (0..total).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for e in &self.edges {
            let a = find(&mut parent, e.h as usize);
            let b = find(&mut parent, nh + e.p as usize);
            if a != b {
                parent[a] = b;
            }
        }
        let mut comp_of_root: BTreeMap<usize, usize> = BTreeMap::new();
        let mut comp = vec![0usize; total];
        for (v, slot) in comp.iter_mut().enumerate() {
            let r = find(&mut parent, v);
            let next = comp_of_root.len();
            *slot = *comp_of_root.entry(r).or_insert(next);
        }
        let k = comp_of_root.len();
        if k <= 1 {
            return vec![self.clone()];
        }
        let mut h_map = vec![0u16; nh];
        let mut p_map = vec![0u16; self.p_nodes as usize];
        let mut h_count = vec![0u16; k];
        let mut p_count = vec![0u16; k];
        for v in 0..nh {
            h_map[v] = h_count[comp[v]];
            h_count[comp[v]] += 1;
        }
        for v in 0..self.p_nodes as usize {
            p_map[v] = p_count[comp[nh + v]];
            p_count[comp[nh + v]] += 1;
        }
        let mut edges: Vec<Vec<Edge>> = vec![Vec::new(); k];
        for e in &self.edges {
            edges[comp[e.h as usize]].push(Edge::new(h_map[e.h as usize], p_map[e.p as usize], e.color));
        }
        (0..k)
            .map(|c| {
                let mut es = std::mem::take(&mut edges[c]);
                es.sort_unstable();
                Diagram { h_nodes: h_count[c], p_nodes: p_count[c], edges: es }
            })
            .collect()
    }

    /// Drops isolated nodes, returning `(isolated_p, isolated_h, stripped)`.
    pub fn strip_isolated(&self) -> (u32, u32, Diagram) {
        let dh = self.degree_h();
        let dp = self.degree_p();
        let iso_h = dh.iter().filter(|&&d| d == 0).count() as u32;
        let iso_p = dp.iter().filter(|&&d| d == 0).count() as u32;
        if iso_h == 0 && iso_p == 0 {
            return (0, 0, self.clone());
        }
        let remap = |deg: &[u32]| {
            let mut next = 0u16;
            deg.iter()
                .map(|&d| {
                    if d == 0 {
                        u16::MAX
                    } else {
                        next += 1;
                        next - 1
                    }
                })
                .collect::<Vec<u16>>()
        };
        let hm = remap(&dh);
        let pm = remap(&dp);
        let mut edges: Vec<Edge> =
            self.edges.iter().map(|e| Edge::new(hm[e.h as usize], pm[e.p as usize], e.color)).collect();
        edges.sort_unstable();
        let d = Diagram {
            h_nodes: self.h_nodes - iso_h as u16,
            p_nodes: self.p_nodes - iso_p as u16,
            edges,
        };
        (iso_p, iso_h, d)
    }

    pub fn canonical(&self) -> (CanonicalKey, Diagram) {
        canonicalize(self)
    }

    pub fn key(&self) -> CanonicalKey {
        canonicalize(self).0
    }
}

impl fmt::Display for Diagram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P={} H={} edges=[", self.p_nodes, self.h_nodes)?;
        for (i, e) in self.edges.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "({},{},{})", e.h, e.p, e.color as u32 + 1)?;
        }
        f.write_str("]")
    }
}

/// Isomorphism-invariant byte encoding of a diagram. Two diagrams have equal
/// keys iff they are isomorphic by node relabeling that fixes colors.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalKey(Box<[u8]>);

impl CanonicalKey {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

struct Adjacency {
    nh: usize,
    // (neighbor, color, multiplicity), sorted by neighbor
    adj: Vec<Vec<(u32, u8, u32)>>,
}

impl Adjacency {
    fn build(d: &Diagram) -> Self {
        let nh = d.h_nodes as usize;
        let mut adj = vec![Vec::new(); nh + d.p_nodes as usize];
        for (e, m) in d.edge_runs() {
            let pv = nh + e.p as usize;
            adj[e.h as usize].push((pv as u32, e.color, m));
            adj[pv].push((e.h as u32, e.color, m));
        }
        for row in &mut adj {
            row.sort_unstable();
        }
        Adjacency { nh, adj }
    }
}

/// Equitable refinement. New colors are ranks of `(old color, neighbor
/// multiset)` signatures, so the result does not depend on node labels.
fn refine(colors: &mut Vec<u32>, g: &Adjacency) -> usize {
    let n = colors.len();
    let mut cells = count_distinct(colors);
    let mut order: Vec<usize> = (0..n).collect();
    loop {
        let sigs: Vec<(u32, Vec<(u32, u8, u32)>)> = (0..n)
            .map(|v| {
                let mut s: Vec<(u32, u8, u32)> = g.adj[v].iter().map(|&(w, c, m)| (colors[w as usize], c, m)).collect();
                s.sort_unstable();
                (colors[v], s)
            })
            .collect();
        order.sort_unstable_by(|&a, &b| sigs[a].cmp(&sigs[b]));
        let mut next = vec![0u32; n];
        let mut rank = 0u32;
        for i in 0..n {
            if i > 0 && sigs[order[i]] != sigs[order[i - 1]] {
                rank += 1;
            }
            next[order[i]] = rank;
        }
        let new_cells = if n == 0 { 0 } else { rank as usize + 1 };
        *colors = next;
        if new_cells == cells {
            return new_cells;
        }
        cells = new_cells;
    }
}

fn count_distinct(colors: &[u32]) -> usize {
    let mut c = colors.to_vec();
    c.sort_unstable();
    c.dedup();
    c.len()
}

struct Leaf {
    code: Vec<u8>,
    h_rank: Vec<u16>,
    p_rank: Vec<u16>,
}

fn leaf(colors: &[u32], g: &Adjacency, np: usize) -> Leaf {
    let nh = g.nh;
    let mut hs: Vec<usize> = (0..nh).collect();
    hs.sort_unstable_by_key(|&v| colors[v]);
    let mut h_rank = vec![0u16; nh];
    for (r, &v) in hs.iter().enumerate() {
        h_rank[v] = r as u16;
    }
    let rows: Vec<Vec<(u16, u8, u32)>> = (0..np)
        .map(|p| {
            let mut r: Vec<(u16, u8, u32)> =
                g.adj[nh + p].iter().map(|&(h, c, m)| (h_rank[h as usize], c, m)).collect();
            r.sort_unstable();
            r
        })
        .collect();
    let mut ps: Vec<usize> = (0..np).collect();
    ps.sort_by(|&a, &b| rows[a].cmp(&rows[b]));
    let mut p_rank = vec![0u16; np];
    for (r, &p) in ps.iter().enumerate() {
        p_rank[p] = r as u16;
    }
    let mut code = Vec::with_capacity(4 + 6 * g.adj.iter().map(|r| r.len()).sum::<usize>());
    code.extend_from_slice(&(nh as u16).to_be_bytes());
    code.extend_from_slice(&(np as u16).to_be_bytes());
    for &p in &ps {
        code.extend_from_slice(&(rows[p].len() as u16).to_be_bytes());
        for &(h, c, m) in &rows[p] {
            code.extend_from_slice(&h.to_be_bytes());
            code.push(c);
            code.extend_from_slice(&(m as u16).to_be_bytes());
        }
    }
    Leaf { code, h_rank, p_rank }
}

fn search(mut colors: Vec<u32>, g: &Adjacency, np: usize, best: &mut Option<Leaf>) {
    refine(&mut colors, g);
    let nh = g.nh;
    // first non-singleton cell among H-nodes, in color order
    let mut by_color: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for v in 0..nh {
        by_color.entry(colors[v]).or_default().push(v);
    }
    let target = by_color.into_values().find(|cell| cell.len() > 1);
    let Some(cell) = target else {
        let l = leaf(&colors, g, np);
        if best.as_ref().is_none_or(|b| l.code < b.code) {
            *best = Some(l);
        }
        return;
    };
    // twins have identical neighborhoods; branching on one of them suffices
    let mut seen: Vec<&Vec<(u32, u8, u32)>> = Vec::new();
    for &v in &cell {
        if seen.iter().any(|s| **s == g.adj[v]) {
            continue;
        }
        seen.push(&g.adj[v]);
        let mut c2: Vec<u32> = colors.iter().map(|&c| 2 * c + 1).collect();
        c2[v] -= 1;
        search(c2, g, np, best);
    }
}

/// Canonical key and canonically relabeled representative.
pub fn canonicalize(d: &Diagram) -> (CanonicalKey, Diagram) {
    let g = Adjacency::build(d);
    let nh = d.h_nodes as usize;
    let np = d.p_nodes as usize;
    let colors: Vec<u32> = (0..nh + np).map(|v| if v < nh { 0 } else { 1 }).collect();
    let mut best = None;
    search(colors, &g, np, &mut best);
    let l = best.expect("search always reaches a leaf");
    let mut edges: Vec<Edge> =
        d.edges.iter().map(|e| Edge::new(l.h_rank[e.h as usize], l.p_rank[e.p as usize], e.color)).collect();
    edges.sort_unstable();
    (
        CanonicalKey(l.code.into_boxed_slice()),
        Diagram { h_nodes: d.h_nodes, p_nodes: d.p_nodes, edges },
    )
}

pub fn build_d(setting: Setting) -> Diagram {
    let nu = setting.nu;
    let mut edges = Vec::with_capacity(2 * nu as usize);
    for m in 0..nu {
        edges.push(Edge::new(0, m as u16, setting.color(m)));
        edges.push(Edge::new(1, m as u16, setting.color(m)));
    }
    Diagram::new(2, nu as u16, edges).expect("valid by construction")
}

pub fn build_r(setting: Setting) -> Diagram {
    let edges = (0..setting.nu).map(|m| Edge::new(0, 0, setting.color(m))).collect();
    Diagram::new(1, 1, edges).expect("valid by construction")
}

/// All diagrams obtained by joining one edge of `a` with one same-colored
/// edge of `b`: both edges are removed and their endpoints identified.
/// Choices are ordered, so parallel edges contribute with multiplicity.
pub fn merge(a: &Diagram, b: &Diagram) -> Vec<(Diagram, u64)> {
    let ra = a.edge_runs();
    let rb = b.edge_runs();
    let mut out = Vec::new();
    for &(ea, ma) in &ra {
        for &(eb, mb) in &rb {
            if ea.color != eb.color {
                continue;
            }
            out.push((join(a, ea, b, eb), ma as u64 * mb as u64));
        }
    }
    out
}

fn join(a: &Diagram, ea: Edge, b: &Diagram, eb: Edge) -> Diagram {
    let mut h_map = vec![0u16; b.h_nodes as usize];
    let mut next = a.h_nodes;
    for (v, slot) in h_map.iter_mut().enumerate() {
        if v as u16 == eb.h {
            *slot = ea.h;
        } else {
            *slot = next;
            next += 1;
        }
    }
    let h_total = next;
    let mut p_map = vec![0u16; b.p_nodes as usize];
    let mut next = a.p_nodes;
    for (v, slot) in p_map.iter_mut().enumerate() {
        if v as u16 == eb.p {
            *slot = ea.p;
        } else {
            *slot = next;
            next += 1;
        }
    }
    let p_total = next;
    let mut edges = Vec::with_capacity(a.edges.len() + b.edges.len() - 2);
    let mut skipped = false;
    for &e in &a.edges {
        if !skipped && e == ea {
            skipped = true;
            continue;
        }
        edges.push(e);
    }
    let mut skipped = false;
    for &e in &b.edges {
        if !skipped && e == eb {
            skipped = true;
            continue;
        }
        edges.push(Edge::new(h_map[e.h as usize], p_map[e.p as usize], e.color));
    }
    edges.sort_unstable();
    Diagram { h_nodes: h_total, p_nodes: p_total, edges }
}

/// Linear combination of canonical diagrams plus the pure-target constant
/// `scalar * p`.
#[derive(Clone, Debug)]
pub struct DiagramSum {
    pub setting: Setting,
    terms: FxHashMap<CanonicalKey, (Diagram, BigRational)>,
    pub scalar: BigRational,
}

impl DiagramSum {
    pub fn new(setting: Setting) -> Self {
        DiagramSum { setting, terms: FxHashMap::default(), scalar: BigRational::zero() }
    }

    pub fn add(&mut self, d: &Diagram, coeff: BigRational) {
        let (key, canon) = canonicalize(d);
        self.add_canonical(key, canon, coeff);
    }

    fn add_canonical(&mut self, key: CanonicalKey, canon: Diagram, coeff: BigRational) {
        if coeff.is_zero() {
            return;
        }
        match self.terms.get_mut(&key) {
            Some((_, c)) => {
                *c += coeff;
                if c.is_zero() {
                    self.terms.remove(&key);
                }
            }
            None => {
                self.terms.insert(key, (canon, coeff));
            }
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, d: &Diagram) -> BigRational {
        self.terms.get(&d.key()).map(|(_, c)| c.clone()).unwrap_or_else(BigRational::zero)
    }

    /// Terms sorted by canonical key.
    pub fn terms(&self) -> Vec<(&CanonicalKey, &Diagram, &BigRational)> {
        let mut v: Vec<_> = self.terms.iter().map(|(k, (d, c))| (k, d, c)).collect();
        v.sort_unstable_by(|a, b| a.0.cmp(b.0));
        v
    }

    pub fn total_count(&self) -> BigRational {
        self.terms.values().fold(BigRational::zero(), |acc, (_, c)| acc + c)
    }

    pub fn dump(&self) -> String {
        let mut out = String::new();
        if !self.scalar.is_zero() {
            out.push_str(&format!("scalar: p coeff={}\n", fmt_rational(&self.scalar)));
        }
        for (i, (_, d, c)) in self.terms().into_iter().enumerate() {
            out.push_str(&format!("D{i}: {d} coeff={}\n", fmt_rational(c)));
        }
        out
    }
}

pub fn fmt_rational(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// The loss `½D − R + p/2`, or `½D` for a zero target.
pub fn build_loss(setting: Setting, free: bool) -> DiagramSum {
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let mut s = DiagramSum::new(setting);
    s.add(&build_d(setting), half.clone());
    if !free {
        s.add(&build_r(setting), -BigRational::one());
        s.scalar = half;
    }
    s
}

/// Bilinear extension of [`merge`]; scalar channels are dropped.
pub fn merge_sum(a: &DiagramSum, b: &DiagramSum, exec: Execution) -> DiagramSum {
    let left: Vec<(&Diagram, &BigRational)> = a.terms.values().map(|(d, c)| (d, c)).collect();
    let right: Vec<(&Diagram, &BigRational)> = b.terms.values().map(|(d, c)| (d, c)).collect();
    let partials = exec::map(exec, &left, |&(da, ca)| {
        let mut local: FxHashMap<CanonicalKey, (Diagram, BigRational)> = FxHashMap::default();
        for &(db, cb) in &right {
            let cab = ca * cb;
            for (d, m) in merge(da, db) {
                let (key, canon) = canonicalize(&d);
                let c = &cab * BigRational::from_integer(BigInt::from(m));
                match local.get_mut(&key) {
                    Some((_, acc)) => *acc += c,
                    None => {
                        local.insert(key, (canon, c));
                    }
                }
            }
        }
        local
    });
    let mut out = DiagramSum::new(a.setting);
    for part in partials {
        for (k, (d, c)) in part {
            out.add_canonical(k, d, c);
        }
    }
    out
}
