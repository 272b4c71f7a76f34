//! Ego-centric 45 x 30 x 4 observation grid.
//!
//! Rows run along the ego heading from 9 m behind to 36 m ahead, columns
//! across it from 15 m left (column 0) to 15 m right. Each pedestrian in the
//! window marks its cell with occupancy, relative heading, relative speed,
//! and the road-structure class under it.

use std::io::Write;
use std::path::Path;

use crate::nn::Tensor3;
use crate::sim::WorldState;
use crate::units::wrap_angle;

pub const ROWS: usize = 45;
pub const COLS: usize = 30;
pub const LAYERS: usize = 4;
pub const BEHIND: f64 = 9.0;
pub const HALF_WIDTH: f64 = 15.0;
pub const CELLS: usize = ROWS * COLS;

/// Observation kept as its non-empty cells only; pedestrians mark at most a
/// handful of the 1350 cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridObservation {
    cells: Vec<(u16, [f32; LAYERS])>,
}

/// Cell index for an ego-frame offset (ahead, left), if inside the window.
pub fn cell_of(dx: f64, dy: f64) -> Option<(usize, usize)> {
    let r = (dx + BEHIND).floor();
    let c = (HALF_WIDTH - dy).floor();
    if (0.0..ROWS as f64).contains(&r) && (0.0..COLS as f64).contains(&c) {
        Some((r as usize, c as usize))
    } else {
        None
    }
}

pub fn encode(world: &WorldState) -> GridObservation {
    let ego_heading = world.ego_heading();
    let v_norm = world.config.vehicle.max_speed_mps();
    let mut candidates: Vec<(f64, usize, [f32; LAYERS])> = world
        .pedestrians
        .iter()
        .filter_map(|p| {
            let (dx, dy) = world.to_ego_frame(p.position);
            let (r, c) = cell_of(dx, dy)?;
            let heading = wrap_angle(p.heading - ego_heading) / std::f64::consts::PI;
            let speed = ((p.speed - world.ego.speed) / v_norm).clamp(-1.0, 1.0);
            let class = world.map.class_at(p.position).code();
            Some((dx.hypot(dy), r * COLS + c, [1.0, heading as f32, speed as f32, class]))
        })
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut cells: Vec<(u16, [f32; LAYERS])> = Vec::with_capacity(candidates.len());
    for (_, idx, v) in candidates {
        if !cells.iter().any(|(i, _)| *i as usize == idx) {
            cells.push((idx as u16, v));
        }
    }
    cells.sort_by_key(|(i, _)| *i);
    GridObservation { cells }
}

impl GridObservation {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Occupied cells as `(row * COLS + col, layer values)`, ascending.
    pub fn cells(&self) -> &[(u16, [f32; LAYERS])] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize, layer: usize) -> f32 {
        let idx = (row * COLS + col) as u16;
        self.cells
            .binary_search_by_key(&idx, |(i, _)| *i)
            .map_or(0.0, |k| self.cells[k].1[layer])
    }

    /// Writes the dense (row, col, layer) tensor into `out`, which must be
    /// zeroed and `ROWS * COLS * LAYERS` long.
    pub fn write_dense(&self, out: &mut [f32]) {
        debug_assert_eq!(out.len(), CELLS * LAYERS);
        for (idx, v) in &self.cells {
            let base = *idx as usize * LAYERS;
            out[base..base + LAYERS].copy_from_slice(v);
        }
    }

    pub fn to_tensor(&self) -> Tensor3<f32> {
        let mut data = vec![0.0; CELLS * LAYERS];
        self.write_dense(&mut data);
        Tensor3::from_vec(ROWS, COLS, LAYERS, data).expect("grid values are finite")
    }

    /// Writes one layer as a binary PGM. Signed layers map -1..1 to 0..255.
    pub fn write_pgm<W: Write>(&self, layer: usize, mut out: W) -> std::io::Result<()> {
        assert!(layer < LAYERS);
        let signed = layer == 1 || layer == 2;
        let mut pixels = vec![if signed { 128u8 } else { 0 }; CELLS];
        for (idx, v) in &self.cells {
            let x = if signed { (v[layer] + 1.0) * 0.5 } else { v[layer] };
            pixels[*idx as usize] = (x.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
        write!(out, "P5\n{COLS} {ROWS}\n255\n")?;
        out.write_all(&pixels)
    }

    /// Writes `<prefix>_l<k>.pgm` for all four layers into `dir`.
    pub fn dump_pgm(&self, dir: &Path, prefix: &str) -> std::io::Result<()> {
        for layer in 0..LAYERS {
            let f = std::fs::File::create(dir.join(format!("{prefix}_l{}.pgm", layer + 1)))?;
            self.write_pgm(layer, std::io::BufWriter::new(f))?;
        }
        Ok(())
    }
}
