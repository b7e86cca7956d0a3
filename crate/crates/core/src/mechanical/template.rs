//! Deformation templates: a triangulated unit square before (`src`) and
//! after (`dst`) deformation.
//!
//! Generators cut the mesh into pieces. Every cell belongs to one piece and
//! each piece owns its own copy of the nodes it touches, so neighbouring
//! pieces may separate (cracks) or overlap (folds).

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

pub type Point = [f64; 2];

/// Nodes per side of the base mesh.
pub const MESH_NODES: usize = 64;

const FORMAT_HEADER: &str = "omnice-deformation-template v1";

#[derive(Debug, Clone, PartialEq)]
pub struct DeformationTemplate {
    pub src: Vec<Point>,
    pub dst: Vec<Point>,
    pub cells: Vec<[u32; 3]>,
    pub crack_polylines: Vec<Vec<Point>>,
    pub rotation: f64,
}

fn cross(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

impl DeformationTemplate {
    /// Regular mesh with `dst == src`.
    pub fn identity(nodes_per_side: usize) -> Self {
        let (src, cells) = base_mesh(nodes_per_side);
        DeformationTemplate {
            dst: src.clone(),
            src,
            cells,
            crack_polylines: Vec::new(),
            rotation: 0.0,
        }
    }

    /// Every node moved by `(dx, dy)` in frame units.
    pub fn translation(nodes_per_side: usize, dx: f64, dy: f64) -> Self {
        let mut t = Self::identity(nodes_per_side);
        for p in &mut t.dst {
            p[0] += dx;
            p[1] += dy;
        }
        t
    }

    pub fn is_identity(&self) -> bool {
        self.src == self.dst
    }

    pub fn max_displacement(&self) -> f64 {
        self.src
            .iter()
            .zip(&self.dst)
            .map(|(s, d)| (d[0] - s[0]).hypot(d[1] - s[1]))
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidTemplate(m));
        if self.src.len() != self.dst.len() {
            return bad(format!("{} src nodes vs {} dst nodes", self.src.len(), self.dst.len()));
        }
        if self.cells.is_empty() {
            return bad("no cells".into());
        }
        let n = self.src.len() as u32;
        if let Some(c) = self.cells.iter().find(|c| c.iter().any(|&i| i >= n)) {
            return bad(format!("cell {c:?} references a missing node"));
        }
        if self.src.iter().chain(&self.dst).flatten().any(|v| !v.is_finite()) {
            return bad("non-finite node coordinate".into());
        }
        if self.src.iter().flatten().any(|&v| !(-1e-9..=1.0 + 1e-9).contains(&v)) {
            return bad("src nodes must lie in the unit square".into());
        }
        let mut area = 0.0;
        for c in &self.cells {
            let a = cross(self.src[c[0] as usize], self.src[c[1] as usize], self.src[c[2] as usize]) / 2.0;
            if a <= 0.0 {
                return bad(format!("src cell {c:?} is inverted or degenerate"));
            }
            area += a;
        }
        if (area - 1.0).abs() > 1e-6 {
            return bad(format!("src cells cover area {area}, expected 1"));
        }
        Ok(())
    }

    /// Versioned plain-text encoding; floats are written in shortest
    /// round-trip form so `from_text(to_text(t)) == t`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{FORMAT_HEADER}");
        let _ = writeln!(s, "rotation {:?}", self.rotation);
        let _ = writeln!(s, "nodes {}", self.src.len());
        for (a, b) in self.src.iter().zip(&self.dst) {
            let _ = writeln!(s, "{:?} {:?} {:?} {:?}", a[0], a[1], b[0], b[1]);
        }
        let _ = writeln!(s, "cells {}", self.cells.len());
        for c in &self.cells {
            let _ = writeln!(s, "{} {} {}", c[0], c[1], c[2]);
        }
        let _ = writeln!(s, "polylines {}", self.crack_polylines.len());
        for line in &self.crack_polylines {
            let _ = write!(s, "{}", line.len());
            for p in line {
                let _ = write!(s, " {:?} {:?}", p[0], p[1]);
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let err = |m: &str| Error::InvalidTemplate(m.to_string());
        if lines.next() != Some(FORMAT_HEADER) {
            return Err(err("missing or unsupported header line"));
        }
        fn section<'a>(lines: &mut impl Iterator<Item = &'a str>, name: &str) -> Result<&'a str> {
            let line = lines
                .next()
                .ok_or_else(|| Error::InvalidTemplate(format!("missing `{name}`")))?;
            line.strip_prefix(name)
                .map(str::trim)
                .ok_or_else(|| Error::InvalidTemplate(format!("expected `{name}`, got `{line}`")))
        }
        let f = |t: &str| t.parse::<f64>().map_err(|_| err(&format!("bad number `{t}`")));
        let u = |t: &str| t.parse::<usize>().map_err(|_| err(&format!("bad count `{t}`")));

        let rotation = f(section(&mut lines, "rotation")?)?;
        let n = u(section(&mut lines, "nodes")?)?;
        let (mut src, mut dst) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let line = lines.next().ok_or_else(|| err("truncated node list"))?;
            let v: Vec<f64> = line.split_whitespace().map(f).collect::<Result<_>>()?;
            if v.len() != 4 {
                return Err(err("node lines need 4 numbers"));
            }
            src.push([v[0], v[1]]);
            dst.push([v[2], v[3]]);
        }
        let m = u(section(&mut lines, "cells")?)?;
        let mut cells = Vec::with_capacity(m);
        for _ in 0..m {
            let line = lines.next().ok_or_else(|| err("truncated cell list"))?;
            let idx: Vec<u32> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| err("bad cell index")))
                .collect::<Result<_>>()?;
            if idx.len() != 3 {
                return Err(err("cell lines need 3 indices"));
            }
            cells.push([idx[0], idx[1], idx[2]]);
        }
        let k = u(section(&mut lines, "polylines")?)?;
        let mut crack_polylines = Vec::with_capacity(k);
        for _ in 0..k {
            let line = lines.next().ok_or_else(|| err("truncated polyline list"))?;
            let mut toks = line.split_whitespace();
            let count = u(toks.next().ok_or_else(|| err("empty polyline line"))?)?;
            let vals: Vec<f64> = toks.map(f).collect::<Result<_>>()?;
            if vals.len() != 2 * count {
                return Err(err("polyline point count mismatch"));
            }
            crack_polylines.push(vals.chunks_exact(2).map(|c| [c[0], c[1]]).collect());
        }
        let t = DeformationTemplate {
            src,
            dst,
            cells,
            crack_polylines,
            rotation,
        };
        t.validate()?;
        Ok(t)
    }
}

fn base_mesh(n: usize) -> (Vec<Point>, Vec<[u32; 3]>) {
    assert!(n >= 2, "mesh needs at least 2 nodes per side");
    let step = 1.0 / (n - 1) as f64;
    let coord = |i: usize| if i == n - 1 { 1.0 } else { i as f64 * step };
    let mut nodes = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            nodes.push([coord(i), coord(j)]);
        }
    }
    let mut cells = Vec::with_capacity(2 * (n - 1) * (n - 1));
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let a = (j * n + i) as u32;
            let b = a + 1;
            let c = a + n as u32;
            let d = c + 1;
            cells.push([a, b, c]);
            cells.push([b, d, c]);
        }
    }
    (nodes, cells)
}

/// Displacement field expressed in a frame rotated about the centre.
trait PieceField {
    fn piece(&self, q: Point) -> u32;
    fn displace(&self, piece: u32, q: Point) -> Point;
}

struct Frame {
    cos: f64,
    sin: f64,
}

impl Frame {
    fn new(rotation: f64) -> Self {
        Frame {
            cos: rotation.cos(),
            sin: rotation.sin(),
        }
    }

    fn to_local(&self, p: Point) -> Point {
        let (x, y) = (p[0] - 0.5, p[1] - 0.5);
        [self.cos * x + self.sin * y + 0.5, -self.sin * x + self.cos * y + 0.5]
    }

    fn to_global(&self, q: Point) -> Point {
        let (x, y) = (q[0] - 0.5, q[1] - 0.5);
        [self.cos * x - self.sin * y + 0.5, self.sin * x + self.cos * y + 0.5]
    }

    fn vec_to_global(&self, v: Point) -> Point {
        [self.cos * v[0] - self.sin * v[1], self.sin * v[0] + self.cos * v[1]]
    }
}

fn build(field: &impl PieceField, rotation: f64, polylines_local: Vec<Vec<Point>>) -> DeformationTemplate {
    let (base, base_cells) = base_mesh(MESH_NODES);
    let frame = Frame::new(rotation);
    let local: Vec<Point> = base.iter().map(|&p| frame.to_local(p)).collect();
    let mut index: HashMap<(u32, u32), u32> = HashMap::new();
    let (mut src, mut dst) = (Vec::new(), Vec::new());
    let mut cells = Vec::with_capacity(base_cells.len());
    for c in &base_cells {
        let centroid = [0, 1].map(|k| c.iter().map(|&i| local[i as usize][k]).sum::<f64>() / 3.0);
        let piece = field.piece(centroid);
        let mut cell = [0u32; 3];
        for (slot, &node) in cell.iter_mut().zip(c) {
            *slot = *index.entry((node, piece)).or_insert_with(|| {
                let p = base[node as usize];
                let d = frame.vec_to_global(field.displace(piece, local[node as usize]));
                src.push(p);
                dst.push([p[0] + d[0], p[1] + d[1]]);
                (src.len() - 1) as u32
            });
        }
        cells.push(cell);
    }
    DeformationTemplate {
        src,
        dst,
        cells,
        crack_polylines: polylines_local
            .into_iter()
            .map(|l| l.into_iter().map(|q| frame.to_global(q)).collect())
            .collect(),
        rotation,
    }
}

fn draw_rotation(seed: u64) -> f64 {
    rng::stream(seed, "template-rotation").random_range(0.0..2.0 * PI)
}

// ---------------------------------------------------------------- crack

struct CrackField {
    line: Vec<Point>,
    half_gap: f64,
    reach: f64,
    wobble_freq: f64,
    wobble_phase: f64,
}

impl CrackField {
    fn segment(&self, x: f64) -> usize {
        let k = self.line.partition_point(|p| p[0] <= x);
        k.clamp(1, self.line.len() - 1) - 1
    }

    fn line_y(&self, x: f64) -> f64 {
        let k = self.segment(x);
        let (a, b) = (self.line[k], self.line[k + 1]);
        let t = ((x - a[0]) / (b[0] - a[0])).clamp(0.0, 1.0);
        a[1] + t * (b[1] - a[1])
    }

    fn normal(&self, x: f64) -> Point {
        let k = self.segment(x);
        let (a, b) = (self.line[k], self.line[k + 1]);
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len = dx.hypot(dy);
        [-dy / len, dx / len]
    }
}

impl PieceField for CrackField {
    fn piece(&self, q: Point) -> u32 {
        u32::from(q[1] >= self.line_y(q[0]))
    }

    fn displace(&self, piece: u32, q: Point) -> Point {
        let d = (q[1] - self.line_y(q[0])).abs();
        let falloff = (1.0 - d / self.reach).max(0.0).powi(2);
        let opening = 0.75 + 0.25 * (2.0 * PI * self.wobble_freq * q[0] + self.wobble_phase).sin();
        let side = if piece == 1 { 1.0 } else { -1.0 };
        let m = side * self.half_gap * opening * falloff;
        let n = self.normal(q[0]);
        [n[0] * m, n[1] * m]
    }
}

/// Jagged crack through the frame opening to at most `gap_width`.
pub fn crack_template(gap_width: f64, seed: u64) -> DeformationTemplate {
    let mut r = rng::stream(seed, "crack");
    let y0 = r.random_range(0.35..0.65);
    let segments = 16;
    let mut y = y0;
    let line: Vec<Point> = (0..=segments)
        .map(|k| {
            let x = -0.3 + 1.6 * k as f64 / segments as f64;
            let p = [x, y];
            y = (y + r.random_range(-0.035..0.035)).clamp(y0 - 0.15, y0 + 0.15);
            p
        })
        .collect();
    let field = CrackField {
        line: line.clone(),
        half_gap: gap_width.max(0.0) / 2.0,
        reach: 0.3,
        wobble_freq: r.random_range(0.5..1.5),
        wobble_phase: r.random_range(0.0..2.0 * PI),
    };
    build(&field, draw_rotation(seed), vec![line])
}

// ------------------------------------------------------------- venetian

/// Slot width of venetian strips, frame units.
const STRIP_SLOT: f64 = 1.0 / 16.0;
/// Crack opening at a strip centre relative to the strip width.
const STRIP_OPENING: f64 = 0.2;
const COVERAGE_GRID: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Strip {
    /// Start of the strip across its normal, in the rotated frame.
    pub t0: f64,
    pub width: f64,
}

/// Parallel venetian strips in a frame rotated by `rotation`.
#[derive(Debug, Clone, PartialEq)]
pub struct StripSet {
    pub rotation: f64,
    pub strips: Vec<Strip>,
}

impl StripSet {
    fn contains(&self, t: f64) -> Option<usize> {
        self.strips.iter().position(|s| t >= s.t0 && t < s.t0 + s.width)
    }

    /// Flags pixels whose centre falls inside a strip.
    pub fn rasterize(&self, width: usize, height: usize) -> Vec<bool> {
        let frame = Frame::new(self.rotation);
        let mut out = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let p = [(x as f64 + 0.5) / width as f64, (y as f64 + 0.5) / height as f64];
                out.push(self.contains(frame.to_local(p)[1]).is_some());
            }
        }
        out
    }

    pub fn coverage(&self) -> f64 {
        let m = self.rasterize(COVERAGE_GRID, COVERAGE_GRID);
        m.iter().filter(|&&b| b).count() as f64 / m.len() as f64
    }
}

/// Picks whole strip slots in random order until the covered area reaches
/// `beta`, trimming the last strip to land on it.
pub fn venetian_strips(beta: f64, seed: u64) -> StripSet {
    let rotation = draw_rotation(seed);
    let mut set = StripSet {
        rotation,
        strips: Vec::new(),
    };
    if beta <= 0.0 {
        return set;
    }
    let mut slots: Vec<i32> = (-12..=12).collect();
    slots.shuffle(&mut rng::stream(seed, "venetian-slots"));
    let mut covered = 0.0;
    for k in slots {
        let strip = Strip {
            t0: 0.5 + (f64::from(k) - 0.5) * STRIP_SLOT,
            width: STRIP_SLOT,
        };
        set.strips.push(strip);
        let with = set.coverage();
        if with <= covered {
            set.strips.pop();
            continue;
        }
        if with <= beta {
            covered = with;
            if with == beta {
                break;
            }
            continue;
        }
        let (mut lo, mut hi) = (0.0, STRIP_SLOT);
        for _ in 0..30 {
            let mid = 0.5 * (lo + hi);
            set.strips.last_mut().expect("just pushed").width = mid;
            if set.coverage() <= beta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let last = set.strips.last_mut().expect("just pushed");
        last.width = lo;
        if lo <= 0.0 {
            set.strips.pop();
        }
        break;
    }
    set
}

struct VenetianField<'a> {
    strips: &'a StripSet,
}

impl PieceField for VenetianField<'_> {
    fn piece(&self, q: Point) -> u32 {
        match self.strips.contains(q[1]) {
            None => 0,
            Some(i) => {
                let s = self.strips.strips[i];
                2 * i as u32 + 1 + u32::from(q[1] >= s.t0 + s.width / 2.0)
            }
        }
    }

    fn displace(&self, piece: u32, q: Point) -> Point {
        if piece == 0 {
            return [0.0, 0.0];
        }
        let s = self.strips.strips[(piece as usize - 1) / 2];
        let side = if piece % 2 == 0 { 1.0 } else { -1.0 };
        let half = s.width / 2.0;
        let centre = s.t0 + half;
        let amp = STRIP_OPENING * s.width / 2.0;
        [0.0, side * amp * (1.0 - (q[1] - centre).abs() / half).max(0.0)]
    }
}

/// Venetian cracking over an area fraction `beta` of the frame.
pub fn venetian_template(beta: f64, seed: u64) -> DeformationTemplate {
    let strips = venetian_strips(beta, seed);
    build(&VenetianField { strips: &strips }, strips.rotation, Vec::new())
}

// ----------------------------------------------------------------- fold

struct FoldField {
    line: f64,
    band: f64,
}

impl PieceField for FoldField {
    fn piece(&self, q: Point) -> u32 {
        if q[0] < self.line {
            0
        } else if q[0] < self.line + self.band {
            1
        } else {
            2
        }
    }

    fn displace(&self, piece: u32, q: Point) -> Point {
        match piece {
            0 => [0.0, 0.0],
            // mirrored back over the fold line
            1 => [2.0 * (self.line - q[0]), 0.0],
            _ => [-self.band, 0.0],
        }
    }
}

/// Position of the fold line in the rotated frame.
pub fn fold_line(seed: u64) -> f64 {
    rng::stream(seed, "fold").random_range(0.35..0.65)
}

/// A band of width `band_width` folded back over its neighbour.
pub fn fold_template(band_width: f64, seed: u64) -> DeformationTemplate {
    let field = FoldField {
        line: fold_line(seed),
        band: band_width.max(0.0),
    };
    build(&field, draw_rotation(seed), Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_mesh_is_valid() {
        let t = DeformationTemplate::identity(MESH_NODES);
        t.validate().unwrap();
        assert_eq!(t.cells.len(), 2 * 63 * 63);
        assert!(t.is_identity());
    }

    #[test]
    fn generated_templates_are_valid_and_deterministic() {
        for t in [crack_template(0.05, 3), venetian_template(0.3, 3), fold_template(0.1, 3)] {
            t.validate().unwrap();
            assert!(!t.is_identity());
        }
        assert_eq!(crack_template(0.03, 8).to_text(), crack_template(0.03, 8).to_text());
        assert_ne!(crack_template(0.03, 8).to_text(), crack_template(0.03, 9).to_text());
    }

    #[test]
    fn crack_far_field_is_unmoved() {
        let t = crack_template(0.06, 21);
        assert_eq!(t.crack_polylines.len(), 1);
        let frame = Frame::new(t.rotation);
        let field_line = &t.crack_polylines[0];
        let local_line: Vec<Point> = field_line.iter().map(|&p| frame.to_local(p)).collect();
        let f = CrackField { line: local_line, half_gap: 0.0, reach: 0.3, wobble_freq: 1.0, wobble_phase: 0.0 };
        let mut far = 0;
        for (s, d) in t.src.iter().zip(&t.dst) {
            let q = frame.to_local(*s);
            if (q[1] - f.line_y(q[0])).abs() > 0.31 {
                far += 1;
                assert!((s[0] - d[0]).abs() < 1e-12 && (s[1] - d[1]).abs() < 1e-12);
            }
        }
        assert!(far > 0);
        assert!(t.max_displacement() <= 0.03 + 1e-9);
    }

    #[test]
    fn zero_coverage_venetian_is_identity() {
        assert!(venetian_strips(0.0, 4).strips.is_empty());
        assert!(venetian_template(0.0, 4).is_identity());
    }

    #[test]
    fn text_roundtrip() {
        let t = fold_template(0.08, 12);
        let back = DeformationTemplate::from_text(&t.to_text()).unwrap();
        assert_eq!(back, t);
        let c = crack_template(0.02, 1);
        assert_eq!(DeformationTemplate::from_text(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn text_rejects_garbage() {
        assert!(DeformationTemplate::from_text("hello").is_err());
        let t = DeformationTemplate::identity(3).to_text();
        assert!(DeformationTemplate::from_text(&t.replace("cells 8", "cells 9")).is_err());
        let bad = t.replacen("0.0 0.0 0.0 0.0", "0.0 0.0 nan 0.0", 1);
        assert!(DeformationTemplate::from_text(&bad).is_err());
    }

    #[test]
    fn validate_catches_inverted_src() {
        let mut t = DeformationTemplate::identity(3);
        t.cells[0].swap(1, 2);
        assert!(t.validate().is_err());
        let mut t = DeformationTemplate::identity(3);
        t.dst.pop();
        assert!(t.validate().is_err());
    }
}
