//! Procedural light fields with exact ground truth.
//!
//! Each layer is a textured plane whose disparity is constant or linear in
//! the center-view position. A scene point `p` of a layer appears in view
//! `(u, v)` at `p + d(p) * (u_c - u, v_c - v)`; where layers overlap the one
//! with the larger disparity is nearer and wins.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use lfdepth_autodiff::Tensor;

use crate::error::{invalid, Result};
use crate::image::DisparityMap;
use crate::lightfield::LightField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerDisparity {
    Constant { value: f64 },
    /// `d(x, y) = base + gx * x + gy * y` in center-view pixels.
    Ramp { base: f64, gx: f64, gy: f64 },
}

impl LayerDisparity {
    fn coeffs(&self) -> (f64, f64, f64) {
        match *self {
            LayerDisparity::Constant { value } => (value, 0.0, 0.0),
            LayerDisparity::Ramp { base, gx, gy } => (base, gx, gy),
        }
    }

    pub fn at(&self, x: f64, y: f64) -> f64 {
        let (a, gx, gy) = self.coeffs();
        a + gx * x + gy * y
    }
}

/// Support of a layer in center-view coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Region {
    Full,
    /// Half-open box `[x0, x1) x [y0, y1)`.
    Rect { x0: f64, x1: f64, y0: f64, y1: f64 },
    Disk { cx: f64, cy: f64, r: f64 },
}

impl Region {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Region::Full => true,
            Region::Rect { x0, x1, y0, y1 } => x >= x0 && x < x1 && y >= y0 && y < y1,
            Region::Disk { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) < r * r,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub disparity: LayerDisparity,
    #[serde(default = "full_region")]
    pub region: Region,
}

fn full_region() -> Region {
    Region::Full
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub width: usize,
    pub height: usize,
    /// Views per angular axis (odd).
    pub angular: usize,
    pub channels: usize,
    pub disparity_range: [f64; 2],
    /// Back to front; on equal disparity the later layer wins.
    pub layers: Vec<Layer>,
    /// Standard deviation of independent Gaussian sensor noise per view sample.
    #[serde(default)]
    pub noise: f64,
}

impl SyntheticSpec {
    /// One fronto-parallel plane covering the frame.
    pub fn plane(size: usize, disparity: f64) -> Self {
        Self {
            width: size,
            height: size,
            angular: 7,
            channels: 3,
            disparity_range: [-4.0, 4.0],
            layers: vec![Layer {
                disparity: LayerDisparity::Constant { value: disparity },
                region: Region::Full,
            }],
            noise: 0.0,
        }
    }

    /// A background plane with a nearer square in the middle half of the frame.
    pub fn two_planes(size: usize, back: f64, front: f64) -> Self {
        let (lo, hi) = (size as f64 * 0.3, size as f64 * 0.7);
        let mut spec = Self::plane(size, back);
        spec.layers.push(Layer {
            disparity: LayerDisparity::Constant { value: front },
            region: Region::Rect {
                x0: lo,
                x1: hi,
                y0: lo,
                y1: hi,
            },
        });
        spec
    }

    /// A seeded random scene: a possibly slanted background and one or two
    /// nearer objects. Disparities stay inside `disparity_range`.
    pub fn random(size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = size as f64;
        let back = rng.gen_range(-2.5..1.0);
        let slope = 0.5 / s;
        let mut layers = vec![Layer {
            disparity: LayerDisparity::Ramp {
                base: back,
                gx: rng.gen_range(-slope..slope),
                gy: rng.gen_range(-slope..slope),
            },
            region: Region::Full,
        }];
        for _ in 0..rng.gen_range(1..=2) {
            let value = rng.gen_range(back + 1.0..3.0);
            let region = if rng.gen_bool(0.5) {
                let (w, h) = (rng.gen_range(0.2..0.45) * s, rng.gen_range(0.2..0.45) * s);
                let (x0, y0) = (rng.gen_range(0.1..0.9) * s - w / 2.0, rng.gen_range(0.1..0.9) * s - h / 2.0);
                Region::Rect {
                    x0,
                    x1: x0 + w,
                    y0,
                    y1: y0 + h,
                }
            } else {
                Region::Disk {
                    cx: rng.gen_range(0.2..0.8) * s,
                    cy: rng.gen_range(0.2..0.8) * s,
                    r: rng.gen_range(0.1..0.25) * s,
                }
            };
            layers.push(Layer {
                disparity: LayerDisparity::Constant { value },
                region,
            });
        }
        Self {
            width: size,
            height: size,
            angular: 7,
            channels: 3,
            disparity_range: [-4.0, 4.0],
            layers,
            noise: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(invalid("synthetic spec", "no layers"));
        }
        if self.angular % 2 == 0 || self.angular == 0 {
            return Err(invalid("synthetic spec", "angular extent must be odd"));
        }
        if self.width == 0 || self.height == 0 || self.channels == 0 {
            return Err(invalid("synthetic spec", "empty resolution"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(invalid("synthetic spec", "noise must be a finite nonnegative deviation"));
        }
        let [lo, hi] = self.disparity_range;
        let reach = ((self.angular - 1) / 2) as f64;
        let (w, h) = (self.width as f64 - 1.0, self.height as f64 - 1.0);
        for (i, layer) in self.layers.iter().enumerate() {
            let (_, gx, gy) = layer.disparity.coeffs();
            // the view mapping must stay invertible
            if (gx.abs() + gy.abs()) * reach >= 0.5 {
                return Err(invalid("synthetic spec", format!("layer {i} is too steep")));
            }
            for (x, y) in [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)] {
                let d = layer.disparity.at(x, y);
                if d < lo || d > hi {
                    return Err(invalid(
                        "synthetic spec",
                        format!("layer {i} disparity {d} outside [{lo}, {hi}]"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Rendered scene plus analytic ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub lightfield: LightField,
    /// Center-view disparity of the visible layer.
    pub disparity: DisparityMap,
    /// `(U, V, X, Y)`; 1 where a center pixel is not visible in that view,
    /// including points that leave the frame.
    pub occlusion: Tensor,
}

impl SyntheticScene {
    pub fn occluded(&self, u: usize, v: usize, x: usize, y: usize) -> bool {
        self.occlusion.at(&[u, v, x, y]) != 0.0
    }
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct Texture {
    seed: u64,
    waves: [(f64, f64, f64); 3],
    scales: [f64; 3],
}

impl Texture {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut wave = || {
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            let k = std::f64::consts::TAU / rng.gen_range(4.0..14.0);
            (k * theta.cos(), k * theta.sin(), rng.gen_range(0.0..std::f64::consts::TAU))
        };
        Self {
            seed,
            waves: [wave(), wave(), wave()],
            scales: [2.5, 5.0, 10.0],
        }
    }

    fn lattice(&self, octave: usize, i: i64, j: i64) -> f64 {
        let h = mix(self.seed ^ mix((octave as u64) << 48 ^ (i as u64) << 24 ^ (j as u64 & 0xff_ffff)));
        (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }

    /// Smooth value noise in `[-1, 1]`.
    fn noise(&self, octave: usize, x: f64, y: f64) -> f64 {
        let s = self.scales[octave];
        let (fx, fy) = (x / s, y / s);
        let (i, j) = (fx.floor(), fy.floor());
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (tx, ty) = (smooth(fx - i), smooth(fy - j));
        let (i, j) = (i as i64, j as i64);
        let a = self.lattice(octave, i, j);
        let b = self.lattice(octave, i + 1, j);
        let c = self.lattice(octave, i, j + 1);
        let d = self.lattice(octave, i + 1, j + 1);
        let top = a + (b - a) * tx;
        let bottom = c + (d - c) * tx;
        top + (bottom - top) * ty
    }

    /// Value in `[0.05, 0.95]`.
    fn at(&self, x: f64, y: f64) -> f64 {
        let waves: f64 = self
            .waves
            .iter()
            .map(|&(kx, ky, phase)| (kx * x + ky * y + phase).sin())
            .sum::<f64>()
            / 3.0;
        let noise = 0.5 * self.noise(0, x, y) + 0.3 * self.noise(1, x, y) + 0.2 * self.noise(2, x, y);
        0.5 + 0.18 * waves + 0.27 * noise
    }
}

struct Scene<'a> {
    spec: &'a SyntheticSpec,
    textures: Vec<Vec<Texture>>,
}

impl Scene<'_> {
    /// Layer index, scene point and disparity seen at `(qx, qy)` in a view
    /// displaced by `(du, dv) = (u_c - u, v_c - v)`.
    fn visible(&self, qx: f64, qy: f64, du: f64, dv: f64) -> Option<(usize, f64, f64, f64)> {
        let mut best: Option<(usize, f64, f64, f64)> = None;
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let (a, gx, gy) = layer.disparity.coeffs();
            // solve q = p + (a + gx px + gy py) (du, dv) for p
            let (m00, m01, m10, m11) = (1.0 + gx * du, gy * du, gx * dv, 1.0 + gy * dv);
            let (rx, ry) = (qx - a * du, qy - a * dv);
            let det = m00 * m11 - m01 * m10;
            let px = (m11 * rx - m01 * ry) / det;
            let py = (m00 * ry - m10 * rx) / det;
            if !layer.region.contains(px, py) {
                continue;
            }
            let d = layer.disparity.at(px, py);
            if best.map_or(true, |(_, _, _, bd)| d >= bd) {
                best = Some((i, px, py, d));
            }
        }
        best
    }
}

fn to_f32(v: f64) -> f64 {
    v as f32 as f64
}

/// Renders every view of `spec` with textures drawn from `seed`.
///
/// Intensities are rounded to single precision so exported views round-trip
/// exactly. Pixels no layer covers are black.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticScene> {
    spec.validate()?;
    let scene = Scene {
        spec,
        textures: (0..spec.layers.len())
            .map(|l| {
                (0..spec.channels)
                    .map(|c| Texture::new(mix(seed ^ mix((l * 16 + c) as u64 + 1))))
                    .collect()
            })
            .collect(),
    };
    let (na, nx, ny, nc) = (spec.angular, spec.width, spec.height, spec.channels);
    let center = ((na - 1) / 2) as f64;

    let mut views = Vec::with_capacity(na * na * nx * ny * nc);
    for u in 0..na {
        for v in 0..na {
            let (du, dv) = (center - u as f64, center - v as f64);
            for x in 0..nx {
                for y in 0..ny {
                    match scene.visible(x as f64, y as f64, du, dv) {
                        Some((l, px, py, _)) => {
                            views.extend(scene.textures[l].iter().map(|t| to_f32(t.at(px, py))));
                        }
                        None => views.extend(std::iter::repeat(0.0).take(nc)),
                    }
                }
            }
        }
    }
    if spec.noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ 0x6e6f_6973_65));
        let dist = Normal::new(0.0, spec.noise).expect("validated deviation");
        for s in &mut views {
            *s = to_f32((*s + dist.sample(&mut rng)).clamp(0.0, 1.0));
        }
    }
    let lightfield = LightField::new(Tensor::new(vec![na, na, nx, ny, nc], views)?)?;

    let mut gt = vec![0.0; nx * ny];
    let mut owner = vec![None; nx * ny];
    for x in 0..nx {
        for y in 0..ny {
            if let Some((l, _, _, d)) = scene.visible(x as f64, y as f64, 0.0, 0.0) {
                gt[x * ny + y] = d;
                owner[x * ny + y] = Some(l);
            }
        }
    }

    let (xmax, ymax) = ((nx - 1) as f64, (ny - 1) as f64);
    let mut occlusion = vec![0.0; na * na * nx * ny];
    for u in 0..na {
        for v in 0..na {
            let (du, dv) = (center - u as f64, center - v as f64);
            for x in 0..nx {
                for y in 0..ny {
                    let i = x * ny + y;
                    let d = gt[i];
                    let (qx, qy) = (x as f64 + d * du, y as f64 + d * dv);
                    let inside = (0.0..=xmax).contains(&qx) && (0.0..=ymax).contains(&qy);
                    let seen = inside
                        && match (owner[i], scene.visible(qx, qy, du, dv)) {
                            (Some(l), Some((m, px, py, _))) => {
                                l == m && (px - x as f64).abs() < 1e-6 && (py - y as f64).abs() < 1e-6
                            }
                            (None, None) => true,
                            _ => false,
                        };
                    if !seen {
                        occlusion[((u * na + v) * nx + x) * ny + y] = 1.0;
                    }
                }
            }
        }
    }

    Ok(SyntheticScene {
        lightfield,
        disparity: DisparityMap::new(Tensor::new(vec![nx, ny], gt)?)?,
        occlusion: Tensor::new(vec![na, na, nx, ny], occlusion)?,
    })
}
